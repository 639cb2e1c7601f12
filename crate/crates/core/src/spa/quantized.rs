//! Exact forward-backward on a uniformly quantized phase grid.
//!
//! Serves as a reference for the von Mises tracker and underlies the
//! symbol-wise MI lower bound. The phase transition kernel is the wrapped
//! Gaussian density sampled at bin offsets, renormalized, and truncated
//! where it falls below 1e-18 of its peak; when `ν_Δ` is far below the bin
//! width it collapses to the identity.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;

use super::SpaInputs;
use crate::error::{Error, Result};
use crate::numerics::{wrap_phase, wrapped_gaussian_pdf, Dft, WrappedGaussianParams};

/// Smallest grid accepted from callers.
pub const MIN_BINS: usize = 8;

/// Per-symbol phase posteriors on an `L`-point grid, plus the Gaussian
/// `Z_i` posterior conditional on each grid phase.
#[derive(Debug, Clone)]
pub struct QuantizedPosterior {
    bins: usize,
    grid: Vec<f64>,
    weights: Vec<f64>,
    forward_means: Vec<Complex64>,
    z_model: ZModel,
}

impl QuantizedPosterior {
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn len(&self) -> usize {
        self.forward_means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward_means.is_empty()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Normalized posterior weights of symbol `i` over the grid.
    pub fn weights(&self, i: usize) -> &[f64] {
        &self.weights[i * self.bins..(i + 1) * self.bins]
    }

    /// `E[e^{jθ_i} | y]`.
    pub fn circular_mean(&self, i: usize) -> Complex64 {
        circular_mean(self.weights(i), &self.grid)
    }

    /// Circular mean of the normalized forward message into symbol `i`.
    pub fn forward_circular_mean(&self, i: usize) -> Complex64 {
        self.forward_means[i]
    }

    /// `E[Z_i | y, s]` under the Gaussian-mixture posterior.
    pub fn z_mean(&self, i: usize) -> Complex64 {
        self.weights(i)
            .iter()
            .zip(&self.grid)
            .map(|(w, &th)| self.z_model.mean(i, th) * *w)
            .sum()
    }

    /// Natural log of the mixture posterior density of `Z_i` at `z`.
    pub fn z_log_density(&self, i: usize, z: Complex64) -> f64 {
        self.z_model.log_density(i, self.weights(i), &self.grid, z)
    }
}

#[derive(Debug, Clone)]
struct ZModel {
    y: Vec<Complex64>,
    s: Vec<Complex64>,
    /// Prior and observation weights of the conjugate update.
    a: f64,
    b: f64,
    var: f64,
}

impl ZModel {
    fn new(inputs: &SpaInputs) -> Self {
        let total = inputs.nu_w + inputs.nu_z_given_s;
        Self {
            y: inputs.y.to_vec(),
            s: inputs.s.to_vec(),
            a: inputs.nu_w / total,
            b: inputs.nu_z_given_s / total,
            var: inputs.nu_w * inputs.nu_z_given_s / total,
        }
    }

    #[inline]
    fn mean(&self, i: usize, theta: f64) -> Complex64 {
        self.s[i] * self.a + self.y[i] * Complex64::from_polar(self.b, -theta)
    }

    fn log_density(&self, i: usize, weights: &[f64], grid: &[f64], z: Complex64) -> f64 {
        let rot: Vec<Complex64> = grid.iter().map(|&t| Complex64::from_polar(1.0, -t)).collect();
        self.log_density_tabled(i, weights, &rot, z)
    }

    /// `rot[l] = e^{-jθ_l}`. Works on the support of `weights` only.
    fn log_density_tabled(&self, i: usize, weights: &[f64], rot: &[Complex64], z: Complex64) -> f64 {
        let inv = 1.0 / self.var;
        // |z - a s - b y e^{-jθ}|² = |d|² + b²|y|² - 2 Re{conj(d) b y e^{-jθ}}
        let d = z - self.s[i] * self.a;
        let by = self.y[i] * self.b;
        let base = d.norm_sqr() + by.norm_sqr();
        let cross = d.conj() * by * 2.0;
        let dist = |l: usize| base - (cross * rot[l]).re;
        let mut min = f64::INFINITY;
        for (l, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                min = min.min(dist(l));
            }
        }
        let mut sum = 0.0;
        for (l, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                sum += w * (-(dist(l) - min) * inv).exp();
            }
        }
        if sum > 1e-250 {
            return sum.ln() - min * inv - (PI * self.var).ln();
        }
        // the weight sits far from z: fall back to a log-domain sum
        let mut best = f64::NEG_INFINITY;
        for (l, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                best = best.max(w.ln() - dist(l) * inv);
            }
        }
        let sum: f64 = weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(l, &w)| (w.ln() - dist(l) * inv - best).exp())
            .sum();
        best + sum.ln() - (PI * self.var).ln()
    }
}

fn circular_mean(weights: &[f64], grid: &[f64]) -> Complex64 {
    weights.iter().zip(grid).map(|(w, &th)| Complex64::from_polar(*w, th)).sum()
}

/// Sparse circular kernel: `(offset, weight)` pairs with distinct offsets.
fn transition_kernel(bins: usize, nu_delta: f64) -> Vec<(usize, f64)> {
    if nu_delta == 0.0 || bins == 1 {
        return vec![(0, 1.0)];
    }
    let width = 2.0 * PI / bins as f64;
    let params = WrappedGaussianParams::new(nu_delta);
    let peak = wrapped_gaussian_pdf(0.0, params);
    let half = bins / 2;
    let mut kernel = vec![(0, peak)];
    for k in 1..=half {
        let w = wrapped_gaussian_pdf(k as f64 * width, params);
        if w < 1e-18 * peak {
            break;
        }
        kernel.push((k, w));
        // the antipodal offset of an even grid appears once
        if bins - k != k {
            kernel.push((bins - k, w));
        }
    }
    let total: f64 = kernel.iter().map(|(_, w)| w).sum();
    kernel.iter_mut().for_each(|(_, w)| *w /= total);
    kernel
}

/// Entries below this fraction of a message's peak are set to zero. Sits
/// well above FFT round-off, and concentrates direct convolution on the
/// support of the phase posterior.
const FLUSH: f64 = 1e-13;

/// Circular convolution with the transition kernel, direct over the
/// nonzero inputs or by FFT, whichever is cheaper at the current support.
struct Convolver {
    kernel: Vec<(usize, f64)>,
    /// Unitary DFT and `√L` times the kernel spectrum.
    fft: Option<(Dft, Vec<Complex64>)>,
    fft_cost: usize,
    buf: Vec<Complex64>,
}

impl Convolver {
    fn new(kernel: Vec<(usize, f64)>, bins: usize) -> Self {
        let fft = (kernel.len() > 1 && bins >= 64).then(|| {
            let dft = Dft::new(bins);
            let mut k = vec![Complex64::new(0.0, 0.0); bins];
            for &(off, w) in &kernel {
                k[off] += w;
            }
            dft.forward_in_place(&mut k);
            let root = (bins as f64).sqrt();
            k.iter_mut().for_each(|v| *v *= root);
            (dft, k)
        });
        Self {
            kernel,
            fft,
            fft_cost: 4 * bins * (usize::BITS - bins.leading_zeros()) as usize,
            buf: vec![Complex64::new(0.0, 0.0); bins],
        }
    }

    fn apply(&mut self, input: &[f64], out: &mut [f64]) {
        let l = input.len();
        let support = input.iter().filter(|&&v| v != 0.0).count();
        if let Some((dft, spectrum)) = &self.fft {
            if support * self.kernel.len() > self.fft_cost {
                self.buf.iter_mut().zip(input).for_each(|(b, &v)| *b = Complex64::new(v, 0.0));
                dft.forward_in_place(&mut self.buf);
                self.buf.iter_mut().zip(spectrum).for_each(|(b, k)| *b *= k);
                dft.inverse_in_place(&mut self.buf);
                out.iter_mut().zip(&self.buf).for_each(|(o, b)| *o = b.re.max(0.0));
                return;
            }
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        for (j, &v) in input.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            for &(off, w) in &self.kernel {
                let idx = if j + off >= l { j + off - l } else { j + off };
                out[idx] += w * v;
            }
        }
    }
}

/// Normalizes to unit sum and flushes negligible entries.
fn normalize(v: &mut [f64]) -> Result<()> {
    let (total, peak) = v.iter().fold((0.0, 0.0f64), |(t, p), &x| (t + x, p.max(x)));
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::Numerical("quantized phase message vanished".into()));
    }
    let inv = 1.0 / total;
    let floor = FLUSH * peak;
    v.iter_mut().for_each(|x| *x = if *x < floor { 0.0 } else { *x * inv });
    Ok(())
}

/// Runs forward-backward; calls `emit(i, posterior_weights)` for every
/// symbol from last to first. Messages are flushed below [`FLUSH`] of
/// their peak after every step.
fn sweep(
    inputs: &SpaInputs,
    bins: usize,
    grid: &[f64],
    mut forward_mean: impl FnMut(usize, &[f64]),
    mut emit: impl FnMut(usize, &[f64]) -> Result<()>,
) -> Result<()> {
    let n = inputs.y.len();
    let mut conv = Convolver::new(transition_kernel(bins, inputs.nu_delta), bins);
    let c = 2.0 / (inputs.nu_z_given_s + inputs.nu_w);
    let (cos, sin): (Vec<f64>, Vec<f64>) = grid.iter().map(|t| (t.cos(), t.sin())).unzip();
    // evaluated only where `support` is nonzero
    let gamma = |i: usize, support: &[f64], out: &mut [f64]| {
        let k = inputs.y[i] * inputs.s[i].conj() * c;
        let mag = k.norm();
        for l in 0..bins {
            out[l] = if support[l] > 0.0 {
                (k.re * cos[l] + k.im * sin[l] - mag).exp()
            } else {
                0.0
            };
        }
    };

    let uniform = 1.0 / bins as f64;
    let mut alpha = vec![uniform; n * bins];
    let mut g = vec![0.0; bins];
    let mut tmp = vec![0.0; bins];
    for i in 0..n {
        let (head, tail) = alpha.split_at_mut((i + 1) * bins);
        let cur = &head[i * bins..];
        forward_mean(i, cur);
        if i + 1 < n {
            gamma(i, cur, &mut g);
            tmp.iter_mut().zip(cur).zip(&g).for_each(|((t, a), g)| *t = a * g);
            let next = &mut tail[..bins];
            conv.apply(&tmp, next);
            normalize(next)?;
        }
    }

    let mut beta = vec![uniform; bins];
    let mut post = vec![0.0; bins];
    for i in (0..n).rev() {
        gamma(i, &beta, &mut g);
        let a = &alpha[i * bins..(i + 1) * bins];
        for l in 0..bins {
            post[l] = a[l] * g[l] * beta[l];
        }
        normalize(&mut post)?;
        emit(i, &post)?;
        if i > 0 {
            tmp.iter_mut().zip(&beta).zip(&g).for_each(|((t, b), g)| *t = b * g);
            conv.apply(&tmp, &mut beta);
            normalize(&mut beta)?;
        }
    }
    Ok(())
}

fn check_inputs(inputs: &SpaInputs) -> Result<()> {
    inputs.validate()?;
    if !(inputs.nu_w > 0.0 && inputs.nu_z_given_s > 0.0) {
        return Err(Error::domain("quantized posterior needs nu_w > 0 and nu_z_given_s > 0"));
    }
    Ok(())
}

fn grid(bins: usize) -> Vec<f64> {
    (0..bins)
        .map(|l| wrap_phase(2.0 * PI * l as f64 / bins as f64))
        .collect()
}

/// Exact phase posteriors on an `L`-bin grid (`L ≥ 8`).
pub fn quantized_phase_posterior(inputs: &SpaInputs, bins: usize) -> Result<QuantizedPosterior> {
    if bins < MIN_BINS {
        return Err(Error::domain(format!("need at least {MIN_BINS} phase bins, got {bins}")));
    }
    quantized_posterior_any_bins(inputs, bins)
}

/// As [`quantized_phase_posterior`] but allows degenerate grids, down to the
/// single known-phase bin at 0.
pub(crate) fn quantized_posterior_any_bins(inputs: &SpaInputs, bins: usize) -> Result<QuantizedPosterior> {
    check_inputs(inputs)?;
    if bins == 0 {
        return Err(Error::domain("need at least one phase bin"));
    }
    let n = inputs.y.len();
    let grid = grid(bins);
    let mut weights = vec![0.0; n * bins];
    let mut forward_means = vec![Complex64::new(0.0, 0.0); n];
    sweep(
        inputs,
        bins,
        &grid,
        |i, a| forward_means[i] = circular_mean(a, &grid),
        |i, w| {
            weights[i * bins..(i + 1) * bins].copy_from_slice(w);
            Ok(())
        },
    )?;
    Ok(QuantizedPosterior {
        bins,
        grid,
        weights,
        forward_means,
        z_model: ZModel::new(inputs),
    })
}

/// Frame average of `log2(πe ν_{z|s}) + log2 q(z_i | y, s)` in bits, where
/// `q` is the quantized-phase mixture posterior. Its expectation lower
/// bounds the per-symbol `I(Z_i; Y | S)` when `Z_i - s_i` is CSCG with
/// variance `ν_{z|s}`.
pub fn sdd_frame_bound(inputs: &SpaInputs, z: &[Complex64], bins: usize) -> Result<f64> {
    check_inputs(inputs)?;
    crate::error::check_len(inputs.y.len(), z.len())?;
    if bins == 0 {
        return Err(Error::domain("need at least one phase bin"));
    }
    let n = inputs.y.len();
    let grid = grid(bins);
    let model = ZModel::new(inputs);
    let rot: Vec<Complex64> = grid.iter().map(|&t| Complex64::from_polar(1.0, -t)).collect();
    let mut acc = 0.0;
    sweep(inputs, bins, &grid, |_, _| {}, |i, w| {
        let ld = model.log_density_tabled(i, w, &rot, z[i]);
        if !ld.is_finite() {
            return Err(Error::Numerical(format!("mixture density underflow at symbol {i}")));
        }
        acc += ld;
        Ok(())
    })?;
    let h_prior = (PI * std::f64::consts::E * inputs.nu_z_given_s).ln();
    Ok((h_prior + acc / n as f64) / LN_2)
}

//! Feedforward von Mises sum-product phase tracking.
//!
//! Phase messages are von Mises densities carried as one complex
//! concentration each. Given `y`, the pilot image `s` and the surrogate
//! Gaussian prior `Z | S = s ~ CN(s, ν_{z|s})`, the tracker runs
//!
//! 1. `κ_γ,i = 2 y_i s_i* / (ν_{z|s} + ν_w)` (channel evidence),
//! 2. forward and backward recursions `κ' = u / (1 + ν_Δ |u|)` with
//!    `u = κ + κ_γ`,
//! 3. Gaussian projection of the `Z_i` posterior,
//! 4. division by the prior, which yields an AWGN-like output
//!    `(y', ν_w')`.
//!
//! [`run_spa`] fuses the four steps into two sweeps and tallies arithmetic
//! operations; the separate step functions exist for testing and
//! inspection.

mod quantized;

pub use quantized::{quantized_phase_posterior, sdd_frame_bound, QuantizedPosterior, MIN_BINS};
#[cfg(test)]
pub(crate) use quantized::quantized_posterior_any_bins;

use num_complex::Complex64;

use crate::error::{check_len, Error, Result};
use crate::numerics::{bessel_ratio_unchecked, BesselRatioLut};
use crate::OpCounts;

/// Posterior variance is clamped to this fraction of `ν_{z|s}` before the
/// prior is divided out.
pub const NU_CLAMP: f64 = 0.999;

/// Observations and model statistics for one frame.
#[derive(Debug, Clone, Copy)]
pub struct SpaInputs<'a> {
    pub y: &'a [Complex64],
    pub s: &'a [Complex64],
    /// `ν_t + ν_n`.
    pub nu_z_given_s: f64,
    pub nu_w: f64,
    pub nu_delta: f64,
}

impl SpaInputs<'_> {
    fn validate(&self) -> Result<()> {
        check_len(self.y.len(), self.s.len())?;
        if self.y.is_empty() {
            return Err(Error::domain("empty frame"));
        }
        for (name, v) in [
            ("nu_z_given_s", self.nu_z_given_s),
            ("nu_w", self.nu_w),
            ("nu_delta", self.nu_delta),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::domain(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpaMessages {
    pub kappa_gamma: Vec<Complex64>,
    pub kappa_alpha: Vec<Complex64>,
    pub kappa_beta: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub z_hat: Vec<Complex64>,
    /// Posterior variance after clamping.
    pub nu: f64,
    /// Total concentration `κ_α + κ_β + κ_γ` per symbol; its angle is the
    /// phase estimate.
    pub kappa: Vec<Complex64>,
}

/// What a compensator hands to the rate estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct CompensatorOutput {
    pub y_prime: Vec<Complex64>,
    /// Effective noise variance. `None` when the compensator has no
    /// analytic value and the metric must be calibrated.
    pub nu_w_prime: Option<f64>,
    pub diagnostics: Option<Diagnostics>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SpaConfig {
    /// Evaluate `I1/I0` through the shared lookup table.
    pub lut: bool,
    pub keep_diagnostics: bool,
}

/// `κ_γ,i = 2 y_i s_i* / (ν_{z|s} + ν_w)`.
pub fn compute_gamma(inputs: &SpaInputs) -> Result<Vec<Complex64>> {
    inputs.validate()?;
    let total = inputs.nu_z_given_s + inputs.nu_w;
    if total == 0.0 {
        return Err(Error::domain("nu_z_given_s + nu_w must be positive"));
    }
    let c = 2.0 / total;
    Ok(inputs.y.iter().zip(inputs.s).map(|(y, s)| y * s.conj() * c).collect())
}

#[inline]
fn saturate(u: Complex64, nu_delta: f64) -> Complex64 {
    u / (1.0 + nu_delta * u.norm())
}

/// Forward and backward concentration recursions with
/// `κ_α,1 = κ_β,n = 0`.
pub fn forward_backward(kappa_gamma: &[Complex64], nu_delta: f64) -> SpaMessages {
    let n = kappa_gamma.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut alpha = vec![zero; n];
    let mut beta = vec![zero; n];
    for i in 1..n {
        alpha[i] = saturate(alpha[i - 1] + kappa_gamma[i - 1], nu_delta);
    }
    for i in (0..n.saturating_sub(1)).rev() {
        beta[i] = saturate(beta[i + 1] + kappa_gamma[i + 1], nu_delta);
    }
    SpaMessages {
        kappa_gamma: kappa_gamma.to_vec(),
        kappa_alpha: alpha,
        kappa_beta: beta,
    }
}

/// Gaussian projection of each `Z_i` posterior: returns `(ẑ, ν)` with `ν`
/// averaged over the frame. No clamping.
pub fn posterior_moments(inputs: &SpaInputs, messages: &SpaMessages) -> Result<(Vec<Complex64>, f64)> {
    inputs.validate()?;
    let n = inputs.y.len();
    check_len(n, messages.kappa_gamma.len())?;
    check_len(n, messages.kappa_alpha.len())?;
    check_len(n, messages.kappa_beta.len())?;
    let (nw, nz) = (inputs.nu_w, inputs.nu_z_given_s);
    let total = nw + nz;
    if total == 0.0 {
        return Err(Error::domain("nu_z_given_s + nu_w must be positive"));
    }
    let mut z_hat = Vec::with_capacity(n);
    let mut spread = 0.0;
    for i in 0..n {
        let k = messages.kappa_alpha[i] + messages.kappa_beta[i] + messages.kappa_gamma[i];
        let mag = k.norm();
        let r = bessel_ratio_unchecked(mag);
        let rotation = if mag > 0.0 { k.conj() * (r / mag) } else { Complex64::new(0.0, 0.0) };
        let y = inputs.y[i];
        z_hat.push(inputs.s[i] * (nw / total) + y * rotation * (nz / total));
        spread += y.norm_sqr() * (1.0 - r * r);
    }
    let nu = nw * nz / total + nz * nz / (total * total) * spread / n as f64;
    Ok((z_hat, nu))
}

/// Divides the prior `CN(s, ν_{z|s})` out of the posterior `CN(ẑ, ν)`.
/// Requires `ν < ν_{z|s}`.
pub fn extrinsic(z_hat: &[Complex64], nu: f64, s: &[Complex64], nu_z_given_s: f64) -> Result<CompensatorOutput> {
    check_len(z_hat.len(), s.len())?;
    if !(nu.is_finite() && nu >= 0.0 && nu < nu_z_given_s) {
        return Err(Error::domain(format!(
            "posterior variance {nu} must lie in [0, nu_z_given_s = {nu_z_given_s})"
        )));
    }
    let d = nu_z_given_s - nu;
    let y_prime = z_hat
        .iter()
        .zip(s)
        .map(|(z, s)| (z * nu_z_given_s - s * nu) / d)
        .collect();
    Ok(CompensatorOutput {
        y_prime,
        nu_w_prime: Some(nu * nu_z_given_s / d),
        diagnostics: None,
    })
}

// Per-symbol operation counts of the fused implementation below. A LUT
// charge is one evaluation of a scalar nonlinear function of one real
// argument (square root, reciprocal, Bessel ratio, or the recursion's
// saturation factor 1/(1 + ν_Δ √q)).
const GAMMA_OPS: OpCounts = OpCounts::new(6, 2, 0);
const RECURSION_OPS: OpCounts = OpCounts::new(5, 4, 1);
const COMBINE_OPS: OpCounts = OpCounts::new(0, 2, 0);
const POSTERIOR_OPS: OpCounts = OpCounts::new(6, 4, 3);
const OUTPUT_OPS: OpCounts = OpCounts::new(9, 4, 0);
const FRAME_OPS: OpCounts = OpCounts::new(12, 6, 2);

/// Full compensation of one frame. Operation counts are added to `ops`.
pub fn run_spa(inputs: &SpaInputs, config: SpaConfig, ops: &mut OpCounts) -> Result<CompensatorOutput> {
    inputs.validate()?;
    let (nw, nz, nd) = (inputs.nu_w, inputs.nu_z_given_s, inputs.nu_delta);
    if nz == 0.0 {
        return Err(Error::domain("nu_z_given_s must be positive to form an extrinsic output"));
    }
    let n = inputs.y.len();
    let (y, s) = (inputs.y, inputs.s);
    let total = nw + nz;
    let c = 2.0 / total;
    let zero = Complex64::new(0.0, 0.0);

    let gamma: Vec<Complex64> = y.iter().zip(s).map(|(y, s)| y * (s.conj() * c)).collect();

    // forward sweep keeps u_i = κ_α,i + κ_γ,i
    let mut fwd = vec![zero; n];
    let mut alpha = zero;
    for i in 0..n {
        let u = alpha + gamma[i];
        fwd[i] = u;
        if i + 1 < n {
            alpha = u * (1.0 / (1.0 + nd * u.norm_sqr().sqrt()));
        }
    }

    // backward sweep forms κ_i and the Bessel-ratio factor g_i = R(|κ_i|)/|κ_i|
    let lut = config.lut.then(BesselRatioLut::shared);
    let mut kappa = vec![zero; n];
    let mut g = vec![0.0; n];
    let mut beta = zero;
    let mut spread = 0.0;
    for i in (0..n).rev() {
        let k = fwd[i] + beta;
        if i > 0 {
            let u = beta + gamma[i];
            beta = u * (1.0 / (1.0 + nd * u.norm_sqr().sqrt()));
        }
        let mag = k.norm_sqr().sqrt();
        let r = match lut {
            Some(t) => t.eval(mag),
            None => bessel_ratio_unchecked(mag),
        };
        g[i] = if mag > 0.0 { r / mag } else { 0.5 };
        kappa[i] = k;
        spread += y[i].norm_sqr() * (1.0 - r * r);
    }

    let nu_floor = nw * nz / total;
    let nu_raw = nu_floor + nz * nz / (total * total) * spread / n as f64;
    let nu = nu_raw.min(NU_CLAMP * nz);
    let d = nz - nu;
    // y' = s (ν_w ν_{z|s}/total - ν)/d + y (ν_{z|s}²/(total d)) g conj(κ)
    let pilot_gain = (nw * nz / total - nu) / d;
    let obs_gain = nz * nz / (total * d);
    let y_prime: Vec<Complex64> = (0..n)
        .map(|i| s[i] * pilot_gain + y[i] * (kappa[i].conj() * (obs_gain * g[i])))
        .collect();

    let iters = n as u64;
    ops.charge(GAMMA_OPS, iters);
    ops.charge(RECURSION_OPS, 2 * iters.saturating_sub(1));
    ops.charge(COMBINE_OPS, iters);
    ops.charge(POSTERIOR_OPS, iters);
    ops.charge(OUTPUT_OPS, iters);
    ops.charge(FRAME_OPS, 1);

    let diagnostics = config.keep_diagnostics.then(|| Diagnostics {
        z_hat: (0..n)
            .map(|i| s[i] * (nw / total) + y[i] * (kappa[i].conj() * (g[i] * nz / total)))
            .collect(),
        nu,
        kappa,
    });
    Ok(CompensatorOutput {
        y_prime,
        nu_w_prime: Some(nu * nz / d),
        diagnostics,
    })
}

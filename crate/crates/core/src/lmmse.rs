//! LMMSE phasor estimation from pilot-derotated observations.
//!
//! With `ỹ_i = y_i e^{-j∠s_i}` and the desired phasor `d_i = |s_i| e^{jθ_i}`,
//! the Wiener-phase model gives real second moments
//!
//! ```text
//! R_dỹ = D K D,   R_ỹỹ = D K D + (ν_{z|s} + ν_w) I,   K_ik = e^{-ν_Δ|i-k|/2}
//! ```
//!
//! with `D = diag|s|`. The filter `V = R_dỹ R_ỹỹ^{-1}` is real. The output
//! is `y'_i = y_i e^{-j∠(Vỹ)_i}`.
//!
//! The finite variant solves a centered window per output (truncated at the
//! frame edges). The full variant uses `V = D (cK^{-1} + D²)^{-1} D`, where
//! `K^{-1}` is tridiagonal for the exponential correlation, so one frame
//! costs O(n).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::spa::CompensatorOutput;
use crate::OpCounts;

/// Tap count used when the window is not given explicitly.
pub const DEFAULT_TAPS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LmmseWindow {
    Finite { taps: usize },
    Full,
}

/// Second-order statistics the filter is built from.
#[derive(Debug, Clone, PartialEq)]
pub struct LmmseFilterSpec {
    pub window: LmmseWindow,
    /// Pilot image `s`; only its magnitudes enter the statistics.
    pub pilot_image: Vec<Complex64>,
    pub nu_z_given_s: f64,
    pub nu_w: f64,
    pub nu_delta: f64,
}

#[derive(Debug, Clone)]
enum Plan {
    Windowed {
        /// Row `i` covers `starts[i]..starts[i] + rows[i].len()`.
        starts: Vec<usize>,
        rows: Vec<Vec<f64>>,
    },
    /// `M = cK^{-1} + D²` factored as `L U` with constant off-diagonal `b`.
    Tridiagonal {
        lower: Vec<f64>,
        inv_pivot: Vec<f64>,
        off: f64,
    },
    /// `ν_Δ = 0`: `Vỹ = d (dᵀỹ) / (c + dᵀd)`.
    RankOne { scale: f64 },
}

/// A filter bound to one frame layout. Immutable; apply from any thread.
#[derive(Debug, Clone)]
pub struct LmmseFilter {
    window: LmmseWindow,
    mags: Vec<f64>,
    /// `e^{-j∠s_i}` (1 where `s_i = 0`).
    derotate: Vec<Complex64>,
    plan: Plan,
}

fn correlation(nu_delta: f64, lag: usize) -> f64 {
    (-0.5 * nu_delta * lag as f64).exp()
}

pub fn build_lmmse_filter(spec: &LmmseFilterSpec) -> Result<LmmseFilter> {
    let n = spec.pilot_image.len();
    if n == 0 {
        return Err(Error::domain("empty pilot image"));
    }
    for (name, v) in [
        ("nu_z_given_s", spec.nu_z_given_s),
        ("nu_w", spec.nu_w),
        ("nu_delta", spec.nu_delta),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::domain(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    let noise = spec.nu_z_given_s + spec.nu_w;
    if noise <= 0.0 {
        return Err(Error::domain("nu_z_given_s + nu_w must be positive"));
    }
    let mags: Vec<f64> = spec.pilot_image.iter().map(|s| s.norm()).collect();
    let derotate = spec
        .pilot_image
        .iter()
        .zip(&mags)
        .map(|(s, &m)| if m > 0.0 { s.conj() / m } else { Complex64::new(1.0, 0.0) })
        .collect();
    let plan = match spec.window {
        LmmseWindow::Finite { taps } => {
            if taps == 0 || taps % 2 == 0 {
                return Err(Error::domain(format!("tap count must be odd and positive, got {taps}")));
            }
            windowed_plan(&mags, taps / 2, noise, spec.nu_delta)?
        }
        LmmseWindow::Full if spec.nu_delta == 0.0 => {
            let energy: f64 = mags.iter().map(|m| m * m).sum();
            Plan::RankOne {
                scale: 1.0 / (noise + energy),
            }
        }
        LmmseWindow::Full => tridiagonal_plan(&mags, noise, spec.nu_delta),
    };
    Ok(LmmseFilter {
        window: spec.window,
        mags,
        derotate,
        plan,
    })
}

fn windowed_plan(mags: &[f64], half: usize, noise: f64, nu_delta: f64) -> Result<Plan> {
    let n = mags.len();
    let mut starts = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        let w = hi - lo + 1;
        let r = DMatrix::from_fn(w, w, |a, b| {
            let (ia, ib) = (lo + a, lo + b);
            let v = mags[ia] * mags[ib] * correlation(nu_delta, ia.abs_diff(ib));
            if a == b {
                v + noise
            } else {
                v
            }
        });
        let rhs = DVector::from_fn(w, |a, _| {
            let k = lo + a;
            mags[i] * mags[k] * correlation(nu_delta, i.abs_diff(k))
        });
        let chol = r
            .cholesky()
            .ok_or_else(|| Error::Numerical("LMMSE correlation matrix is not positive definite".into()))?;
        starts.push(lo);
        rows.push(chol.solve(&rhs).iter().copied().collect());
    }
    Ok(Plan::Windowed { starts, rows })
}

fn tridiagonal_plan(mags: &[f64], noise: f64, nu_delta: f64) -> Plan {
    let n = mags.len();
    let r = correlation(nu_delta, 1);
    let g = noise / (1.0 - r * r);
    let off = -g * r;
    let diag = |i: usize| {
        let k = if n == 1 {
            1.0 - r * r
        } else if i == 0 || i == n - 1 {
            1.0
        } else {
            1.0 + r * r
        };
        g * k + mags[i] * mags[i]
    };
    let mut lower = vec![0.0; n];
    let mut inv_pivot = vec![0.0; n];
    let mut pivot = diag(0);
    inv_pivot[0] = 1.0 / pivot;
    for i in 1..n {
        lower[i] = off / pivot;
        pivot = diag(i) - lower[i] * off;
        inv_pivot[i] = 1.0 / pivot;
    }
    Plan::Tridiagonal { lower, inv_pivot, off }
}

// Windowed filter: per tap 2 mul + 2 add (real weight × complex sample).
const TAP_OPS: OpCounts = OpCounts::new(2, 2, 0);
const DEROTATE_OPS: OpCounts = OpCounts::new(4, 2, 0);
// |v|², 1/|v| (two nonlinear evaluations), conj(v)/|v|, y · phasor
const CORRECT_OPS: OpCounts = OpCounts::new(8, 3, 2);
// D ỹ, forward and back substitution, D x
const TRIDIAGONAL_OPS: OpCounts = OpCounts::new(12, 6, 0);
const RANK_ONE_OPS: OpCounts = OpCounts::new(6, 2, 0);

impl LmmseFilter {
    pub fn len(&self) -> usize {
        self.mags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mags.is_empty()
    }

    pub fn window(&self) -> LmmseWindow {
        self.window
    }

    /// `V ỹ` for an already derotated input.
    pub fn apply(&self, ytilde: &[Complex64], ops: &mut OpCounts) -> Result<Vec<Complex64>> {
        check_len(self.len(), ytilde.len())?;
        let n = self.len();
        let zero = Complex64::new(0.0, 0.0);
        Ok(match &self.plan {
            Plan::Windowed { starts, rows } => {
                let mut taps = 0u64;
                let out = starts
                    .iter()
                    .zip(rows)
                    .map(|(&lo, row)| {
                        taps += row.len() as u64;
                        row.iter().zip(&ytilde[lo..lo + row.len()]).map(|(w, v)| v * *w).sum()
                    })
                    .collect();
                ops.charge(TAP_OPS, taps);
                out
            }
            Plan::Tridiagonal { lower, inv_pivot, off } => {
                let mut g: Vec<Complex64> = ytilde.iter().zip(&self.mags).map(|(v, m)| v * *m).collect();
                for i in 1..n {
                    let prev = g[i - 1];
                    g[i] -= prev * lower[i];
                }
                let mut x = vec![zero; n];
                x[n - 1] = g[n - 1] * inv_pivot[n - 1];
                for i in (0..n - 1).rev() {
                    x[i] = (g[i] - x[i + 1] * *off) * inv_pivot[i];
                }
                ops.charge(TRIDIAGONAL_OPS, n as u64);
                x.iter().zip(&self.mags).map(|(v, m)| v * *m).collect()
            }
            Plan::RankOne { scale } => {
                let proj: Complex64 = ytilde.iter().zip(&self.mags).map(|(v, m)| v * *m).sum::<Complex64>() * *scale;
                ops.charge(RANK_ONE_OPS, n as u64);
                self.mags.iter().map(|m| proj * *m).collect()
            }
        })
    }
}

/// Phase-corrects `y` with the filter's phasor estimate. `ν_w'` is left
/// for calibration.
pub fn run_lmmse(y: &[Complex64], filter: &LmmseFilter, ops: &mut OpCounts) -> Result<CompensatorOutput> {
    check_len(filter.len(), y.len())?;
    let ytilde: Vec<Complex64> = y.iter().zip(&filter.derotate).map(|(y, r)| y * r).collect();
    ops.charge(DEROTATE_OPS, y.len() as u64);
    let est = filter.apply(&ytilde, ops)?;
    let y_prime = y
        .iter()
        .zip(&est)
        .map(|(y, v)| {
            let mag = v.norm();
            if mag > 0.0 {
                y * (v.conj() / mag)
            } else {
                *y
            }
        })
        .collect();
    ops.charge(CORRECT_OPS, y.len() as u64);
    Ok(CompensatorOutput {
        y_prime,
        nu_w_prime: None,
        diagnostics: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{apply_pn_channel, sample_cscg, sample_wiener_phase, NoiseParams, PnParams};
    use crate::numerics::wrap_phase;
    use crate::rng::{FrameKey, Substream};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn spec(s: Vec<Complex64>, window: LmmseWindow, nz: f64, nw: f64, nd: f64) -> LmmseFilterSpec {
        LmmseFilterSpec {
            window,
            pilot_image: s,
            nu_z_given_s: nz,
            nu_w: nw,
            nu_delta: nd,
        }
    }

    /// Dense `V` by applying the (linear) filter to unit vectors.
    fn dense(f: &LmmseFilter) -> DMatrix<f64> {
        let n = f.len();
        let mut v = DMatrix::zeros(n, n);
        for k in 0..n {
            let mut e = vec![c(0.0, 0.0); n];
            e[k] = c(1.0, 0.0);
            let col = f.apply(&e, &mut OpCounts::default()).unwrap();
            for i in 0..n {
                assert!(col[i].im.abs() < 1e-15);
                v[(i, k)] = col[i].re;
            }
        }
        v
    }

    fn moments(mags: &[f64], noise: f64, nd: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = mags.len();
        let rd = DMatrix::from_fn(n, n, |i, k| mags[i] * mags[k] * correlation(nd, i.abs_diff(k)));
        let ry = &rd + DMatrix::identity(n, n) * noise;
        (rd, ry)
    }

    #[test]
    fn single_tap_is_scalar_wiener_gain() {
        let a = 0.7;
        let f = build_lmmse_filter(&spec(vec![c(a, 0.0); 5], LmmseWindow::Finite { taps: 1 }, 0.4, 0.1, 1e-3)).unwrap();
        let v = dense(&f);
        for i in 0..5 {
            assert!((v[(i, i)] - a * a / (a * a + 0.5)).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_even_taps() {
        assert!(build_lmmse_filter(&spec(vec![c(1.0, 0.0); 5], LmmseWindow::Finite { taps: 4 }, 0.4, 0.1, 1e-3)).is_err());
        assert!(build_lmmse_filter(&spec(vec![c(1.0, 0.0); 5], LmmseWindow::Full, 0.0, 0.0, 1e-3)).is_err());
    }

    #[test]
    fn full_filter_solves_normal_equations() {
        let mags: Vec<f64> = (0..40).map(|i| 0.3 + 0.5 * ((i * 7) % 5) as f64 / 5.0).collect();
        let s: Vec<_> = mags.iter().enumerate().map(|(i, m)| Complex64::from_polar(*m, 0.1 * i as f64)).collect();
        for &nd in &[1e-6, 5e-3, 0.3] {
            let f = build_lmmse_filter(&spec(s.clone(), LmmseWindow::Full, 0.6, 0.05, nd)).unwrap();
            let v = dense(&f);
            let (rd, ry) = moments(&mags, 0.65, nd);
            let resid = (&v * &ry - &rd).norm() / rd.norm();
            assert!(resid < 1e-8, "nu_delta {nd}: residual {resid}");
        }
    }

    #[test]
    fn windowed_rows_solve_their_subsystems() {
        let mags: Vec<f64> = (0..60).map(|i| if i % 4 == 0 { 1.0 } else { 0.2 }).collect();
        let s: Vec<_> = mags.iter().map(|m| c(*m, 0.0)).collect();
        let f = build_lmmse_filter(&spec(s, LmmseWindow::Finite { taps: 25 }, 0.6, 0.05, 5e-3)).unwrap();
        let v = dense(&f);
        let (rd, ry) = moments(&mags, 0.65, 5e-3);
        for i in 0..60usize {
            let lo = i.saturating_sub(12);
            let hi = (i + 12).min(59);
            for k in lo..=hi {
                let lhs: f64 = (lo..=hi).map(|j| v[(i, j)] * ry[(j, k)]).sum();
                assert!((lhs - rd[(i, k)]).abs() < 1e-10);
            }
            for k in (0..60).filter(|k| *k < lo || *k > hi) {
                assert_eq!(v[(i, k)], 0.0);
            }
        }
    }

    #[test]
    fn static_phase_full_filter_averages() {
        let f = build_lmmse_filter(&spec(vec![c(0.5, 0.0); 16], LmmseWindow::Full, 0.6, 0.05, 0.0)).unwrap();
        let v = dense(&f);
        let w = v[(0, 0)];
        assert!(v.iter().all(|x| (x - w).abs() < 1e-15));
        assert!((w - 0.25 / (0.65 + 16.0 * 0.25)).abs() < 1e-15);
    }

    #[test]
    fn interior_rows_are_shift_invariant() {
        let f = build_lmmse_filter(&spec(vec![c(0.6, 0.0); 100], LmmseWindow::Finite { taps: 25 }, 0.6, 0.05, 5e-3)).unwrap();
        let v = dense(&f);
        for i in 13..87 {
            for d in 0..25 {
                assert!((v[(i, i - 12 + d)] - v[(12, d)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn noiseless_static_phase_is_recovered() {
        let theta0 = -2.1;
        let s = vec![c(0.8, 0.0); 32];
        let y: Vec<_> = s.iter().map(|v| v * Complex64::from_polar(1.0, theta0)).collect();
        let f = build_lmmse_filter(&spec(s.clone(), LmmseWindow::Full, 1e-9, 0.0, 0.0)).unwrap();
        let ytilde: Vec<_> = y.clone();
        let est = f.apply(&ytilde, &mut OpCounts::default()).unwrap();
        for e in &est {
            assert!((e.arg() - theta0).abs() < 1e-12);
        }
        let out = run_lmmse(&y, &f, &mut OpCounts::default()).unwrap();
        for (a, b) in out.y_prime.iter().zip(&s) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!(out.nu_w_prime.is_none());
    }

    #[test]
    fn zero_estimate_falls_back_to_no_rotation() {
        let s = vec![c(0.0, 0.0); 4];
        let f = build_lmmse_filter(&spec(s, LmmseWindow::Finite { taps: 3 }, 0.5, 0.5, 1e-3)).unwrap();
        let y = vec![c(1.0, 2.0); 4];
        assert_eq!(run_lmmse(&y, &f, &mut OpCounts::default()).unwrap().y_prime, y);
    }

    struct Sim {
        d: Vec<Complex64>,
        ytilde: Vec<Complex64>,
        theta: Vec<f64>,
    }

    fn simulate(n: usize, a: f64, nz: f64, nw: f64, nd: f64, frame: u64) -> Sim {
        let key = FrameKey::new(21, 0, frame);
        let s = vec![c(a, 0.0); n];
        let t = sample_cscg(n, nz, &mut key.rng(Substream::Message));
        let z: Vec<_> = s.iter().zip(&t).map(|(a, b)| a + b).collect();
        let theta = sample_wiener_phase(n, PnParams::new(nd).unwrap(), &mut key.rng(Substream::Phase));
        let y = apply_pn_channel(&z, &theta, NoiseParams::new(0.0, nw).unwrap(), &mut key.rng(Substream::Noise)).unwrap();
        let d = theta.iter().map(|th| Complex64::from_polar(a, *th)).collect();
        Sim { d, ytilde: y, theta }
    }

    #[test]
    fn output_mse_matches_prediction() {
        let (n, a, nz, nw, nd) = (200, 0.6, 0.6, 0.05, 5e-3);
        let f = build_lmmse_filter(&spec(vec![c(a, 0.0); n], LmmseWindow::Finite { taps: 25 }, nz, nw, nd)).unwrap();
        let v = dense(&f);
        let mags = vec![a; n];
        let (rd, _) = moments(&mags, nz + nw, nd);
        let i = 100;
        let predicted = a * a - (0..n).map(|k| v[(i, k)] * rd[(i, k)]).sum::<f64>();
        let trials = 4000;
        let mut errs = Vec::with_capacity(trials);
        for fr in 0..trials {
            let sim = simulate(n, a, nz, nw, nd, fr as u64);
            let est = f.apply(&sim.ytilde, &mut OpCounts::default()).unwrap();
            errs.push((sim.d[i] - est[i]).norm_sqr());
        }
        let mean = errs.iter().sum::<f64>() / trials as f64;
        let sd = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (trials - 1) as f64).sqrt();
        let stderr = sd / (trials as f64).sqrt();
        assert!((mean - predicted).abs() < 4.0 * stderr, "{mean} vs {predicted} ± {stderr}");
    }

    #[test]
    fn full_window_beats_25_taps() {
        let (n, a, nz, nw, nd) = (1024, (1.0f64 / 3.0).sqrt(), 2.0 / 3.0, 0.05, 5e-3);
        let s = vec![c(a, 0.0); n];
        let short = build_lmmse_filter(&spec(s.clone(), LmmseWindow::Finite { taps: 25 }, nz, nw, nd)).unwrap();
        let full = build_lmmse_filter(&spec(s, LmmseWindow::Full, nz, nw, nd)).unwrap();
        let (mut e_short, mut e_full) = (0.0, 0.0);
        for fr in 0..16 {
            let sim = simulate(n, a, nz, nw, nd, 1000 + fr);
            for (filter, acc) in [(&short, &mut e_short), (&full, &mut e_full)] {
                let est = filter.apply(&sim.ytilde, &mut OpCounts::default()).unwrap();
                *acc += est
                    .iter()
                    .zip(&sim.theta)
                    .map(|(e, th)| wrap_phase(e.arg() - th).powi(2))
                    .sum::<f64>();
            }
        }
        assert!(e_full < e_short, "full {e_full} vs 25 taps {e_short}");
    }

    #[test]
    fn windowed_ops_scale_with_taps() {
        let n = 1000;
        let f = build_lmmse_filter(&spec(vec![c(0.6, 0.0); n], LmmseWindow::Finite { taps: 25 }, 0.6, 0.05, 5e-3)).unwrap();
        let mut ops = OpCounts::default();
        run_lmmse(&vec![c(1.0, 0.0); n], &f, &mut ops).unwrap();
        let per = ops.total() as f64 / n as f64;
        assert!(per > 100.0 && per < 125.0, "{per}");
    }
}

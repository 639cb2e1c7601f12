//! Achievable-rate estimation: Monte-Carlo GMI under a Gaussian
//! symbol-wise metric, metric calibration, a quantized-phase lower bound
//! on the symbol-wise MI, and coherent capacity references.

use std::f64::consts::LN_2;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::IsiChannel;
use crate::error::{Error, Result};
use crate::framing::{Constellation, ConstellationKind, PilotScheme, PowerAllocation, TxFrame};
use crate::rng::FrameKey;
use crate::scenario::{Frame, Scenario};
use crate::spa::{sdd_frame_bound, CompensatorOutput, SpaInputs};
use crate::OpCounts;

/// Per-symbol information densities are clipped to this many bits.
pub const CLIP_BITS: f64 = 60.0;

/// Largest phase grid tried by the SDD bound.
pub const MAX_SDD_BINS: usize = 4096;

/// Rate change below which the SDD bound counts as converged in `L`.
pub const SDD_TOLERANCE: f64 = 1e-3;

/// Gaussian decoding metric `q(y''_i | x_i) = CN(y''_i; gain·Σ_i x_i, variance)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SddMetricParams {
    pub gain: Complex64,
    pub variance: f64,
}

impl SddMetricParams {
    /// Complex gain applied to input symbol `i`.
    pub fn scale(&self, channel: &IsiChannel, i: usize) -> Complex64 {
        self.gain * channel.metric_scale(i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub bpcu: f64,
    pub stderr: f64,
    pub trials: usize,
}

impl RateEstimate {
    /// Mean and standard error of per-frame samples.
    pub fn from_samples(samples: &[f64]) -> Self {
        let k = samples.len();
        if k == 0 {
            return Self {
                bpcu: 0.0,
                stderr: 0.0,
                trials: 0,
            };
        }
        let mean = samples.iter().sum::<f64>() / k as f64;
        let stderr = if k > 1 {
            let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
            (var / k as f64).sqrt()
        } else {
            0.0
        };
        Self {
            bpcu: mean,
            stderr,
            trials: k,
        }
    }

    pub fn exact(bpcu: f64) -> Self {
        Self {
            bpcu,
            stderr: 0.0,
            trials: 0,
        }
    }
}

/// How the decoding metric is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricMode {
    /// Analytic where the compensator provides `ν_w'` and the channel is
    /// not OFDM, calibrated otherwise.
    Auto,
    Analytic,
    Calibrated,
}

/// Linear ISI equalizer applied after phase compensation.
pub fn equalize(y_prime: &[Complex64], channel: &IsiChannel) -> Result<Vec<Complex64>> {
    channel.equalize(y_prime)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameGmi {
    /// Bits per channel use, counting only message positions.
    pub bpcu: f64,
    pub clipped: u64,
}

/// Information density summed over the message positions of one frame,
/// divided by the frame length.
pub fn gmi_sdd_frame(
    y2: &[Complex64],
    tx: &TxFrame,
    constellation: &Constellation,
    channel: &IsiChannel,
    metric: SddMetricParams,
) -> Result<FrameGmi> {
    let lay = &tx.layout;
    crate::error::check_len(lay.n, y2.len())?;
    if !(metric.variance.is_finite() && metric.variance > 0.0) {
        return Err(Error::domain(format!("metric variance must be positive, got {}", metric.variance)));
    }
    let inv = 1.0 / metric.variance;
    let points = constellation.points();
    let ln_m = (points.len() as f64).ln();
    let mut terms: Vec<f64> = vec![0.0; points.len()];
    let mut acc = 0.0;
    let mut clipped = 0;
    for i in (0..lay.n).filter(|&i| lay.is_message[i]) {
        let g = metric.scale(channel, i);
        let y = y2[i];
        let own = -(y - g * tx.x[i]).norm_sqr() * inv;
        let amp = lay.msg_scale[i];
        let nats = if constellation.is_gaussian() {
            let var_s = g.norm_sqr() * amp * amp + metric.variance;
            let marginal = -(y - g * tx.p[i]).norm_sqr() / var_s - var_s.ln();
            own - metric.variance.ln() - marginal
        } else {
            let centre = y - g * tx.p[i];
            let ga = g * amp;
            let mut best = f64::NEG_INFINITY;
            for (t, u) in terms.iter_mut().zip(points) {
                *t = -(centre - ga * u).norm_sqr() * inv;
                best = best.max(*t);
            }
            let lse = best + terms.iter().map(|t| (t - best).exp()).sum::<f64>().ln();
            own - lse + ln_m
        };
        let bits = nats / LN_2;
        if !bits.is_finite() {
            return Err(Error::Numerical(format!("non-finite information density at symbol {i}")));
        }
        if bits.abs() > CLIP_BITS {
            clipped += 1;
        }
        acc += bits.clamp(-CLIP_BITS, CLIP_BITS);
    }
    Ok(FrameGmi {
        bpcu: acc / lay.n as f64,
        clipped,
    })
}

/// Genie fit of `y' ≈ a z + e` over held-out calibration frames; returns
/// the metric `(a·Σ, E|e|² + |a|²ν_n)`.
pub fn calibrate_metric(scenario: &Scenario, seed: u64, grid: u64, frames: usize) -> Result<SddMetricParams> {
    if frames == 0 {
        return Err(Error::domain("calibration needs at least one frame"));
    }
    let parts: Vec<(Complex64, f64, Vec<(Complex64, Complex64)>)> = (0..frames as u64)
        .into_par_iter()
        .map(|f| {
            let frame = scenario.frame(FrameKey::calibration(seed, grid, f))?;
            let out = scenario.compensate(&frame, &mut OpCounts::default())?;
            let cross: Complex64 = frame.z.iter().zip(&out.y_prime).map(|(z, y)| z.conj() * y).sum();
            let energy: f64 = frame.z.iter().map(|z| z.norm_sqr()).sum();
            let pairs = frame.z.into_iter().zip(out.y_prime).collect();
            Ok((cross, energy, pairs))
        })
        .collect::<Result<_>>()?;
    let cross: Complex64 = parts.iter().map(|p| p.0).sum();
    let energy: f64 = parts.iter().map(|p| p.1).sum();
    if energy <= 0.0 {
        return Err(Error::Numerical("calibration frames carry no energy".into()));
    }
    let a = cross / energy;
    let (mut err, mut count) = (0.0, 0usize);
    for (_, _, pairs) in &parts {
        for (z, y) in pairs {
            err += (y - a * z).norm_sqr();
        }
        count += pairs.len();
    }
    let variance = err / count as f64 + a.norm_sqr() * scenario.noise().nu_n;
    if !(variance.is_finite() && variance > 0.0) {
        return Err(Error::Numerical(format!("calibrated metric variance {variance}")));
    }
    Ok(SddMetricParams { gain: a, variance })
}

/// Metric implied by the compensator's own `ν_w'`.
pub fn analytic_metric(scenario: &Scenario, output: &CompensatorOutput) -> Option<SddMetricParams> {
    output.nu_w_prime.map(|nu| SddMetricParams {
        gain: Complex64::new(1.0, 0.0),
        variance: nu + scenario.noise().nu_n,
    })
}

fn uses_analytic(scenario: &Scenario, mode: MetricMode) -> Result<bool> {
    match mode {
        MetricMode::Calibrated => Ok(false),
        MetricMode::Analytic if !scenario.has_analytic_output() => {
            Err(Error::config("metric", "this compensator has no analytic output variance"))
        }
        MetricMode::Analytic => Ok(true),
        MetricMode::Auto => Ok(scenario.has_analytic_output() && !scenario.channel().is_ofdm()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmiResult {
    pub estimate: RateEstimate,
    pub clipped: u64,
    pub skipped: usize,
    pub frames: usize,
    /// Metric used for every frame when it was calibrated.
    pub calibrated: Option<SddMetricParams>,
    pub ops: OpCounts,
}

/// Monte-Carlo GMI over `frames` measurement frames of one grid point.
/// Frames whose processing fails numerically are skipped and counted.
pub fn estimate_gmi(
    scenario: &Scenario,
    mode: MetricMode,
    seed: u64,
    grid: u64,
    frames: usize,
    calibration_frames: usize,
) -> Result<GmiResult> {
    let analytic = uses_analytic(scenario, mode)?;
    let calibrated = if analytic {
        None
    } else {
        Some(calibrate_metric(scenario, seed, grid, calibration_frames)?)
    };
    let channel = scenario.channel();
    let constellation = scenario.builder().constellation();
    let per_frame: Vec<Result<Option<(FrameGmi, OpCounts)>>> = (0..frames as u64)
        .into_par_iter()
        .map(|f| {
            let frame = scenario.frame(FrameKey::new(seed, grid, f))?;
            let mut ops = OpCounts::default();
            let out = match scenario.compensate(&frame, &mut ops) {
                Ok(out) => out,
                Err(Error::Numerical(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let metric = match calibrated {
                Some(m) => m,
                None => analytic_metric(scenario, &out).expect("analytic output"),
            };
            let y2 = equalize(&out.y_prime, channel)?;
            match gmi_sdd_frame(&y2, &frame.tx, constellation, channel, metric) {
                Ok(g) => Ok(Some((g, ops))),
                Err(Error::Numerical(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut samples = Vec::with_capacity(frames);
    let (mut clipped, mut skipped, mut ops) = (0, 0, OpCounts::default());
    for r in per_frame {
        match r? {
            Some((g, o)) => {
                samples.push(g.bpcu);
                clipped += g.clipped;
                ops = ops + o;
            }
            None => skipped += 1,
        }
    }
    Ok(GmiResult {
        estimate: RateEstimate::from_samples(&samples),
        clipped,
        skipped,
        frames,
        calibrated,
        ops,
    })
}

/// Capacity with Gaussian inputs and perfect phase knowledge:
/// `log2(1 + P/ν_w)` for unitary channels and
/// `(1/n) Σ_k log2(1 + p_k |Δ_k|²/ν_w)` for OFDM with allocation `p_k`.
pub fn coherent_capacity(
    channel: &IsiChannel,
    allocation: Option<&PowerAllocation>,
    signal_power: f64,
    nu_w: f64,
) -> Result<f64> {
    if !(nu_w > 0.0 && nu_w.is_finite()) {
        return Err(Error::domain("noise variance must be positive"));
    }
    if !channel.is_ofdm() {
        return Ok((1.0 + signal_power / nu_w).log2());
    }
    let alloc = allocation.ok_or_else(|| Error::domain("OFDM capacity needs a power allocation"))?;
    crate::error::check_len(channel.len(), alloc.powers.len())?;
    let gains = channel.power_gains();
    Ok(alloc
        .powers
        .iter()
        .zip(&gains)
        .map(|(p, g)| (1.0 + p * g / nu_w).log2())
        .sum::<f64>()
        / channel.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SddBound {
    pub estimate: RateEstimate,
    /// Finest grid evaluated.
    pub bins: usize,
    /// Rate change between the last two grids.
    pub delta: f64,
    pub converged: bool,
    pub skipped: usize,
}

/// Quantized-phase lower bound on `(1/n) Σ I(Z_i; Y | S)`. The grid starts
/// at `start_bins` and doubles until the rate moves by less than
/// [`SDD_TOLERANCE`]; all grids see the same frames.
pub fn sdd_mi_lower_bound(
    scenario: &Scenario,
    seed: u64,
    grid: u64,
    frames: usize,
    start_bins: usize,
) -> Result<SddBound> {
    let p = scenario.params();
    if !matches!(p.channel, crate::channel::IsiKind::Identity)
        || p.constellation != ConstellationKind::Cscg
        || !matches!(p.pilot, PilotScheme::Superposed { .. })
    {
        return Err(Error::config(
            "quantity",
            "the SDD bound needs an identity channel, CSCG inputs and superposed pilots",
        ));
    }
    if scenario.nu_z_given_s() <= 0.0 {
        return Err(Error::domain("differential entropy of T + N undefined for zero variance"));
    }
    if start_bins < crate::spa::MIN_BINS {
        return Err(Error::domain(format!("need at least {} phase bins", crate::spa::MIN_BINS)));
    }
    let keys: Vec<FrameKey> = (0..frames as u64).map(|f| FrameKey::new(seed, grid, f)).collect();
    let frames_data: Vec<Frame> = keys
        .par_iter()
        .map(|k| scenario.frame(*k))
        .collect::<Result<_>>()?;
    let eval = |bins: usize| -> Result<Vec<Option<f64>>> {
        frames_data
            .par_iter()
            .map(|f| {
                let inputs = SpaInputs {
                    y: &f.y,
                    s: &f.tx.s,
                    nu_z_given_s: scenario.nu_z_given_s(),
                    nu_w: scenario.noise().nu_w,
                    nu_delta: scenario.nu_delta(),
                };
                match sdd_frame_bound(&inputs, &f.z, bins) {
                    Ok(v) => Ok(Some(v)),
                    Err(Error::Numerical(_)) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect()
    };
    let summarize = |vals: &[Option<f64>]| -> (RateEstimate, usize) {
        let ok: Vec<f64> = vals.iter().flatten().copied().collect();
        (RateEstimate::from_samples(&ok), vals.len() - ok.len())
    };
    let mut bins = start_bins;
    let (mut prev, _) = summarize(&eval(bins)?);
    loop {
        let next_bins = bins * 2;
        let (est, skipped) = summarize(&eval(next_bins)?);
        let delta = (est.bpcu - prev.bpcu).abs();
        bins = next_bins;
        let converged = delta < SDD_TOLERANCE;
        if converged || bins >= MAX_SDD_BINS {
            return Ok(SddBound {
                estimate: est,
                bins,
                delta,
                converged,
                skipped,
            });
        }
        prev = est;
    }
}

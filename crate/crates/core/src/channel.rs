//! Channel realizations: ISI transforms, Wiener phase noise and AWGN.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::numerics::{wrap_phase, Dft};

/// Proakis-C multipath taps.
pub const PROAKIS_C: [f64; 5] = [0.227, 0.460, 0.688, 0.460, 0.227];

/// Standard single-mode fiber group-velocity dispersion at 1550 nm.
pub const SSMF_BETA2_PS2_PER_KM: f64 = -21.7;

/// Wiener phase-noise parameters. The initial phase is always uniform on
/// `[-π, π)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnParams {
    /// Per-symbol increment variance, rad².
    pub nu_delta: f64,
}

impl PnParams {
    pub fn new(nu_delta: f64) -> Result<Self> {
        if !(nu_delta.is_finite() && nu_delta >= 0.0) {
            return Err(Error::domain(format!("nu_delta must be finite and >= 0, got {nu_delta}")));
        }
        Ok(Self { nu_delta })
    }
}

/// Additive noise: `nu_n` before the phase-noise channel, `nu_w` after it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    pub nu_n: f64,
    pub nu_w: f64,
}

impl NoiseParams {
    pub fn new(nu_n: f64, nu_w: f64) -> Result<Self> {
        for (name, v) in [("nu_n", nu_n), ("nu_w", nu_w)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::domain(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(Self { nu_n, nu_w })
    }
}

/// Which linear channel sits in front of the phase noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum IsiKind {
    Identity,
    /// All-pass fiber response `exp(-j β₂L ω²/2)`, applied per block.
    ChromaticDispersion {
        beta2_ps2_per_km: f64,
        length_km: f64,
        symbol_rate_gbd: f64,
    },
    /// `H = F^H Δ`: the input is a vector of tone amplitudes and `Δ` is the
    /// un-normalized DFT of the zero-padded taps.
    CirculantOfdm { taps: Vec<f64> },
}

impl IsiKind {
    pub fn ssmf_default() -> Self {
        IsiKind::ChromaticDispersion {
            beta2_ps2_per_km: SSMF_BETA2_PS2_PER_KM,
            length_km: 10.0,
            symbol_rate_gbd: 64.0,
        }
    }

    pub fn proakis_c() -> Self {
        IsiKind::CirculantOfdm {
            taps: PROAKIS_C.to_vec(),
        }
    }
}

/// An ISI channel bound to a block length. Immutable once built.
#[derive(Debug, Clone)]
pub struct IsiChannel {
    kind: IsiKind,
    len: usize,
    /// Per-bin response (CD) or tone gains `Δ_k` (OFDM); empty for identity.
    response: Vec<Complex64>,
    dft: Option<Dft>,
}

impl IsiChannel {
    pub fn new(kind: IsiKind, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::domain("block length must be positive"));
        }
        let (response, dft) = match &kind {
            IsiKind::Identity => (Vec::new(), None),
            IsiKind::ChromaticDispersion {
                beta2_ps2_per_km,
                length_km,
                symbol_rate_gbd,
            } => {
                if ![*beta2_ps2_per_km, *length_km, *symbol_rate_gbd]
                    .iter()
                    .all(|v| v.is_finite())
                    || *symbol_rate_gbd <= 0.0
                {
                    return Err(Error::domain("dispersion parameters must be finite, symbol rate > 0"));
                }
                // ps² total; angular frequency in rad/ps (1 GBd = 1e-3 /ps)
                let beta2_l = beta2_ps2_per_km * length_km;
                let rate_per_ps = symbol_rate_gbd * 1e-3;
                let response = (0..len)
                    .map(|k| {
                        let signed = if 2 * k < len { k as f64 } else { k as f64 - len as f64 };
                        let omega = 2.0 * PI * signed / len as f64 * rate_per_ps;
                        Complex64::from_polar(1.0, -0.5 * beta2_l * omega * omega)
                    })
                    .collect();
                (response, Some(Dft::new(len)))
            }
            IsiKind::CirculantOfdm { taps } => {
                if taps.is_empty() || taps.len() > len || !taps.iter().all(|t| t.is_finite()) {
                    return Err(Error::domain("OFDM taps must be finite, non-empty and no longer than the block"));
                }
                (tone_gains(taps, len), Some(Dft::new(len)))
            }
        };
        Ok(Self {
            kind,
            len,
            response,
            dft,
        })
    }

    pub fn identity(len: usize) -> Self {
        Self::new(IsiKind::Identity, len).expect("identity channel")
    }

    pub fn kind(&self) -> &IsiKind {
        &self.kind
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_ofdm(&self) -> bool {
        matches!(self.kind, IsiKind::CirculantOfdm { .. })
    }

    /// Identity and chromatic dispersion are unitary; OFDM is unitary only
    /// up to the tone gains.
    pub fn is_unitary(&self) -> bool {
        !self.is_ofdm()
    }

    /// Per-bin frequency response (CD) or tone gains (OFDM).
    pub fn response(&self) -> &[Complex64] {
        &self.response
    }

    /// `|Δ_k|²` per tone for OFDM, all ones otherwise.
    pub fn power_gains(&self) -> Vec<f64> {
        if self.is_ofdm() {
            self.response.iter().map(|d| d.norm_sqr()).collect()
        } else {
            vec![1.0; self.len]
        }
    }

    /// Diagonal of the effective post-equalizer gain: `Δ_i` for OFDM, 1 otherwise.
    pub fn metric_scale(&self, i: usize) -> Complex64 {
        if self.is_ofdm() {
            self.response[i]
        } else {
            Complex64::new(1.0, 0.0)
        }
    }

    /// Noiseless channel output `H x`.
    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(self.len, x.len())?;
        Ok(match (&self.kind, &self.dft) {
            (IsiKind::Identity, _) => x.to_vec(),
            (IsiKind::ChromaticDispersion { .. }, Some(dft)) => {
                let mut buf = dft.forward(x);
                buf.iter_mut().zip(&self.response).for_each(|(v, h)| *v *= h);
                dft.inverse_in_place(&mut buf);
                buf
            }
            (IsiKind::CirculantOfdm { .. }, Some(dft)) => {
                let mut buf: Vec<_> = x.iter().zip(&self.response).map(|(v, d)| v * d).collect();
                dft.inverse_in_place(&mut buf);
                buf
            }
            _ => unreachable!("transform channels always carry a DFT plan"),
        })
    }

    /// Linear ISI equalizer: `H^H y` for unitary channels, `F y` for OFDM.
    pub fn equalize(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(self.len, y.len())?;
        Ok(match (&self.kind, &self.dft) {
            (IsiKind::Identity, _) => y.to_vec(),
            (IsiKind::ChromaticDispersion { .. }, Some(dft)) => {
                let mut buf = dft.forward(y);
                buf.iter_mut().zip(&self.response).for_each(|(v, h)| *v *= h.conj());
                dft.inverse_in_place(&mut buf);
                buf
            }
            (IsiKind::CirculantOfdm { .. }, Some(dft)) => dft.forward(y),
            _ => unreachable!("transform channels always carry a DFT plan"),
        })
    }
}

/// `Δ_k = Σ_j h_j e^{-j2πjk/n}`.
fn tone_gains(taps: &[f64], len: usize) -> Vec<Complex64> {
    let mut padded = vec![Complex64::new(0.0, 0.0); len];
    for (p, &t) in padded.iter_mut().zip(taps) {
        *p = Complex64::new(t, 0.0);
    }
    // the unitary transform scales by 1/√n; undo it
    let scale = (len as f64).sqrt();
    Dft::new(len).forward(&padded).into_iter().map(|v| v * scale).collect()
}

/// Draws `θ_1..θ_n` of a Wiener process wrapped to `[-π, π)` with
/// `Θ_0 ~ U[-π, π)` and `N(0, ν_Δ)` increments.
pub fn sample_wiener_phase<R: Rng + ?Sized>(n: usize, params: PnParams, rng: &mut R) -> Vec<f64> {
    let sd = params.nu_delta.sqrt();
    let mut theta = rng.random_range(-PI..PI);
    (0..n)
        .map(|_| {
            if sd > 0.0 {
                let step: f64 = rng.sample(StandardNormal);
                theta = wrap_phase(theta + sd * step);
            }
            theta
        })
        .collect()
}

/// Circularly symmetric complex Gaussian samples with the given variance.
pub fn sample_cscg<R: Rng + ?Sized>(n: usize, variance: f64, rng: &mut R) -> Vec<Complex64> {
    let sd = (0.5 * variance).sqrt();
    (0..n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(sd * re, sd * im)
        })
        .collect()
}

/// `y_i = z_i e^{jθ_i} + w_i`, `w_i ~ CN(0, ν_w)`.
pub fn apply_pn_channel<R: Rng + ?Sized>(
    z: &[Complex64],
    theta: &[f64],
    noise: NoiseParams,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    check_len(z.len(), theta.len())?;
    let w = sample_cscg(z.len(), noise.nu_w, rng);
    Ok(z
        .iter()
        .zip(theta)
        .zip(w)
        .map(|((zi, &th), wi)| zi * Complex64::from_polar(1.0, th) + wi)
        .collect())
}

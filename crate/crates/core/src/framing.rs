//! Transmit frames: constellations, pilot schemes, power bookkeeping and
//! waterfilling.
//!
//! Rate accounting follows the frame's message mask: interleaved pilot
//! slots and the OFDM pilot tone carry no information and contribute zero
//! rate, while superposed pilots share every symbol with the message.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{sample_cscg, IsiChannel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstellationKind {
    Cscg,
    Qam16,
    Qam64,
}

/// Unit-energy input alphabet. CSCG inputs have no point list.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    kind: ConstellationKind,
    points: Vec<Complex64>,
}

impl Constellation {
    pub fn new(kind: ConstellationKind) -> Self {
        let points = match kind {
            ConstellationKind::Cscg => Vec::new(),
            ConstellationKind::Qam16 => square_qam(4),
            ConstellationKind::Qam64 => square_qam(8),
        };
        Self { kind, points }
    }

    pub fn kind(&self) -> ConstellationKind {
        self.kind
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn is_gaussian(&self) -> bool {
        self.kind == ConstellationKind::Cscg
    }

    /// Draws `count` unit-energy symbols.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<Complex64> {
        if self.is_gaussian() {
            sample_cscg(count, 1.0, rng)
        } else {
            let m = self.points.len();
            (0..count).map(|_| self.points[rng.random_range(0..m)]).collect()
        }
    }
}

fn square_qam(side: usize) -> Vec<Complex64> {
    let levels: Vec<f64> = (0..side).map(|i| 2.0 * i as f64 - (side - 1) as f64).collect();
    // average energy of the odd-integer grid
    let energy = 2.0 * levels.iter().map(|l| l * l).sum::<f64>() / side as f64;
    let scale = energy.sqrt().recip();
    levels
        .iter()
        .flat_map(|&re| levels.iter().map(move |&im| Complex64::new(re * scale, im * scale)))
        .collect()
}

/// Pilot placement. `psr` is the pilot-to-signal power ratio `ν_p/ν_x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PilotScheme {
    /// Every `round(1/psr)`-th time slot is a pilot of amplitude `√ν_x`.
    Interleaved { psr: f64 },
    /// A constant `√ν_p` added to every symbol.
    Superposed { psr: f64 },
    /// OFDM only: the zero tone carries the pilot and no message.
    ToneZero { psr: f64 },
}

impl PilotScheme {
    pub fn psr(&self) -> f64 {
        match *self {
            PilotScheme::Interleaved { psr } | PilotScheme::Superposed { psr } | PilotScheme::ToneZero { psr } => psr,
        }
    }

    fn validate(&self) -> Result<()> {
        let psr = self.psr();
        // psr = 1 is the all-pilot limit (zero message power)
        if !(psr > 0.0 && psr <= 1.0) {
            return Err(Error::domain(format!("pilot-to-signal ratio must be in (0, 1], got {psr}")));
        }
        if let PilotScheme::Interleaved { psr } = *self {
            if (1.0 / psr).round() < 1.0 {
                return Err(Error::domain("interleaved pilot spacing < 1"));
            }
        }
        Ok(())
    }
}

/// Per-frame average powers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLedger {
    pub nu_x: f64,
    pub nu_p: f64,
    pub nu_m: f64,
    /// Average power of the message image `H m`.
    pub nu_t: f64,
}

/// Per-tone message powers and the water level that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub powers: Vec<f64>,
    pub water_level: f64,
}

/// Waterfilling over parallel Gaussian channels with power gains `gains`:
/// `p_k = (μ - noise/g_k)^+` with `Σ p_k = total_power`. Tones with zero
/// gain receive nothing.
pub fn waterfill(gains: &[f64], total_power: f64, noise_var: f64) -> Result<PowerAllocation> {
    if gains.iter().any(|g| !g.is_finite() || *g < 0.0) {
        return Err(Error::domain("gains must be finite and non-negative"));
    }
    if !(total_power.is_finite() && total_power >= 0.0) || !(noise_var.is_finite() && noise_var >= 0.0) {
        return Err(Error::domain("power and noise variance must be finite and non-negative"));
    }
    let mut floors: Vec<(f64, usize)> = gains
        .iter()
        .enumerate()
        .filter(|(_, g)| **g > 0.0)
        .map(|(k, g)| (noise_var / g, k))
        .collect();
    if floors.is_empty() {
        return Err(Error::domain("waterfilling needs at least one tone with positive gain"));
    }
    floors.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut acc = 0.0;
    let mut level = floors[0].0;
    for (m, &(floor, _)) in floors.iter().enumerate() {
        acc += floor;
        let mu = (total_power + acc) / (m + 1) as f64;
        let next = floors.get(m + 1).map_or(f64::INFINITY, |f| f.0);
        if mu <= next {
            level = mu;
            break;
        }
    }
    let mut powers = vec![0.0; gains.len()];
    for &(floor, k) in &floors {
        powers[k] = (level - floor).max(0.0);
    }
    Ok(PowerAllocation {
        powers,
        water_level: level,
    })
}

/// One frame's transmit side, all vectors of length `n`.
///
/// `x`, `p`, `m` live in the channel-input domain (tone amplitudes for
/// OFDM); `s = H p` and `t = H m` are the channel-output images.
#[derive(Debug, Clone)]
pub struct TxFrame {
    pub x: Vec<Complex64>,
    pub p: Vec<Complex64>,
    pub m: Vec<Complex64>,
    pub s: Vec<Complex64>,
    pub t: Vec<Complex64>,
    pub layout: Arc<FrameLayout>,
}

/// Everything about a frame that does not depend on the random messages.
#[derive(Debug, Clone)]
pub struct FrameLayout {
    pub n: usize,
    pub pilots: Vec<Complex64>,
    /// `H p`, identical for every frame of a configuration.
    pub pilot_image: Vec<Complex64>,
    /// Message amplitude scale at each input position (0 where no message).
    pub msg_scale: Vec<f64>,
    /// Positions whose symbols count toward the rate.
    pub is_message: Vec<bool>,
    pub ledger: PowerLedger,
    pub allocation: Option<PowerAllocation>,
}

impl FrameLayout {
    pub fn message_count(&self) -> usize {
        self.is_message.iter().filter(|&&b| b).count()
    }
}

/// Builds frames for a fixed configuration.
#[derive(Debug, Clone)]
pub struct FrameBuilder {
    scheme: PilotScheme,
    constellation: Constellation,
    channel: IsiChannel,
    layout: Arc<FrameLayout>,
}

impl FrameBuilder {
    /// `noise_var` (= ν_w + ν_n) is only used to waterfill OFDM tones.
    pub fn new(
        scheme: PilotScheme,
        constellation: Constellation,
        channel: IsiChannel,
        nu_x: f64,
        noise_var: f64,
    ) -> Result<Self> {
        scheme.validate()?;
        let n = channel.len();
        if n < 2 {
            return Err(Error::domain("frames need at least two symbols"));
        }
        if !(nu_x.is_finite() && nu_x > 0.0) {
            return Err(Error::domain("transmit power must be positive"));
        }
        let zero = Complex64::new(0.0, 0.0);
        let psr = scheme.psr();
        let mut allocation = None;
        let (pilots, msg_scale, is_message) = match scheme {
            PilotScheme::Interleaved { psr } => {
                if channel.is_ofdm() {
                    return Err(Error::domain("time-domain pilots need a time-domain channel input"));
                }
                let spacing = (1.0 / psr).round() as usize;
                let amp = nu_x.sqrt();
                let is_pilot: Vec<bool> = (0..n).map(|i| i % spacing == 0).collect();
                let pilots = is_pilot.iter().map(|&p| if p { Complex64::new(amp, 0.0) } else { zero }).collect();
                let scale = is_pilot.iter().map(|&p| if p { 0.0 } else { amp }).collect();
                (pilots, scale, is_pilot.iter().map(|p| !p).collect())
            }
            PilotScheme::Superposed { psr } => {
                if channel.is_ofdm() {
                    return Err(Error::domain("time-domain pilots need a time-domain channel input"));
                }
                let nu_p = psr * nu_x;
                let nu_m = (nu_x - nu_p).max(0.0);
                (
                    vec![Complex64::new(nu_p.sqrt(), 0.0); n],
                    vec![nu_m.sqrt(); n],
                    vec![true; n],
                )
            }
            PilotScheme::ToneZero { psr } => {
                if !channel.is_ofdm() {
                    return Err(Error::domain("tone-zero pilots require an OFDM channel"));
                }
                let nu_p = psr * nu_x;
                let nu_m = (nu_x - nu_p).max(0.0);
                let mut gains = channel.power_gains();
                gains[0] = 0.0;
                let alloc = waterfill(&gains, n as f64 * nu_m, noise_var)?;
                let mut pilots = vec![zero; n];
                pilots[0] = Complex64::new((n as f64 * nu_p).sqrt(), 0.0);
                let scale = alloc.powers.iter().map(|p| p.sqrt()).collect();
                let mut is_message = vec![true; n];
                is_message[0] = false;
                allocation = Some(alloc);
                (pilots, scale, is_message)
            }
        };
        let pilot_image = channel.apply(&pilots)?;
        let nu_p = pilots.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
        let nu_m = msg_scale.iter().map(|a| a * a).sum::<f64>() / n as f64;
        let gains = channel.power_gains();
        let nu_t = msg_scale.iter().zip(&gains).map(|(a, g)| a * a * g).sum::<f64>() / n as f64;
        debug_assert!(matches!(scheme, PilotScheme::Interleaved { .. }) || (nu_p - psr * nu_x).abs() < 1e-9);
        let layout = FrameLayout {
            n,
            pilots,
            pilot_image,
            msg_scale,
            is_message,
            ledger: PowerLedger {
                nu_x,
                nu_p,
                nu_m,
                nu_t,
            },
            allocation,
        };
        Ok(Self {
            scheme,
            constellation,
            channel,
            layout: Arc::new(layout),
        })
    }

    pub fn scheme(&self) -> PilotScheme {
        self.scheme
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    pub fn channel(&self) -> &IsiChannel {
        &self.channel
    }

    pub fn layout(&self) -> &Arc<FrameLayout> {
        &self.layout
    }

    pub fn build<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<TxFrame> {
        let lay = &self.layout;
        let u = self.constellation.sample(lay.n, rng);
        let m: Vec<Complex64> = u.iter().zip(&lay.msg_scale).map(|(u, a)| u * a).collect();
        let x: Vec<Complex64> = lay.pilots.iter().zip(&m).map(|(p, m)| p + m).collect();
        let t = self.channel.apply(&m)?;
        Ok(TxFrame {
            x,
            p: lay.pilots.clone(),
            m,
            s: lay.pilot_image.clone(),
            t,
            layout: Arc::clone(lay),
        })
    }
}

/// One-shot frame construction.
pub fn build_frame<R: Rng + ?Sized>(
    scheme: PilotScheme,
    constellation: Constellation,
    channel: IsiChannel,
    nu_x: f64,
    noise_var: f64,
    rng: &mut R,
) -> Result<TxFrame> {
    FrameBuilder::new(scheme, constellation, channel, nu_x, noise_var)?.build(rng)
}

/// Analytic `ν_t = E‖H m‖²/n`: `ν_m` for unitary channels and
/// `(1/n) Σ p_k |Δ_k|²` for OFDM.
pub fn effective_nu_t(frame: &TxFrame, channel: &IsiChannel) -> f64 {
    let gains = channel.power_gains();
    let lay = &frame.layout;
    lay.msg_scale.iter().zip(&gains).map(|(a, g)| a * a * g).sum::<f64>() / lay.n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{IsiKind, PROAKIS_C};
    use crate::rng::{FrameKey, Substream};
    use proptest::prelude::*;

    fn rng(i: u64) -> rand_chacha::ChaCha8Rng {
        FrameKey::new(99, 0, i).rng(Substream::Message)
    }

    /// Water level by bisection on `Σ (μ - ν/g)^+ = P`.
    fn bisection_level(gains: &[f64], total: f64, noise: f64) -> f64 {
        let used = |mu: f64| -> f64 {
            gains.iter().filter(|g| **g > 0.0).map(|g| (mu - noise / g).max(0.0)).sum()
        };
        let (mut lo, mut hi) = (0.0, total + gains.iter().filter(|g| **g > 0.0).map(|g| noise / g).fold(0.0, f64::max) + 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if used(mid) < total {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn qam_alphabets_are_normalized() {
        for kind in [ConstellationKind::Qam16, ConstellationKind::Qam64] {
            let c = Constellation::new(kind);
            let pts = c.points();
            let mean: Complex64 = pts.iter().sum::<Complex64>() / pts.len() as f64;
            let energy = pts.iter().map(|p| p.norm_sqr()).sum::<f64>() / pts.len() as f64;
            assert!(mean.norm() < 1e-12);
            assert!((energy - 1.0).abs() < 1e-12);
            let j = Complex64::new(0.0, 1.0);
            for p in pts {
                assert!(pts.iter().any(|q| (q - p * j).norm() < 1e-12));
            }
        }
        assert_eq!(Constellation::new(ConstellationKind::Qam64).points().len(), 64);
    }

    #[test]
    fn waterfill_flat_is_uniform() {
        let a = waterfill(&[2.0; 8], 8.0, 0.5).unwrap();
        for p in &a.powers {
            assert!((p - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn waterfill_tight_power_goes_to_strong_tone() {
        let a = waterfill(&[1.0, 1e12], 0.5, 1.0).unwrap();
        assert_eq!(a.powers[0], 0.0);
        assert!((a.powers[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn waterfill_matches_bisection_on_proakis_c() {
        let ch = IsiChannel::new(IsiKind::proakis_c(), 8).unwrap();
        let gains = ch.power_gains();
        for &(total, noise) in &[(8.0, 0.05), (1.0, 1.0), (0.2, 0.5)] {
            let a = waterfill(&gains, total, noise).unwrap();
            let mu = bisection_level(&gains, total, noise);
            assert!((a.water_level - mu).abs() < 1e-9);
            for (p, g) in a.powers.iter().zip(&gains) {
                assert!((p - (mu - noise / g).max(0.0)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn waterfill_rejects_dead_channel() {
        assert!(waterfill(&[0.0, 0.0], 1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn waterfill_kkt(gains in prop::collection::vec(0.0f64..10.0, 1..40), total in 0.0f64..50.0, noise in 0.01f64..2.0) {
            prop_assume!(gains.iter().any(|g| *g > 1e-6));
            let a = waterfill(&gains, total, noise).unwrap();
            let sum: f64 = a.powers.iter().sum();
            prop_assert!((sum - total).abs() < 1e-9 * (1.0 + total));
            for (p, g) in a.powers.iter().zip(&gains) {
                prop_assert!(*p >= 0.0);
                if *g > 0.0 {
                    if *p > 0.0 {
                        prop_assert!((p - (a.water_level - noise / g)).abs() < 1e-9 * (1.0 + a.water_level));
                    } else {
                        prop_assert!(a.water_level <= noise / g + 1e-9);
                    }
                } else {
                    prop_assert_eq!(*p, 0.0);
                }
            }
        }
    }

    #[test]
    fn superposed_power_split() {
        let ch = IsiChannel::identity(4096);
        let b = FrameBuilder::new(
            PilotScheme::Superposed { psr: 1.0 / 3.0 },
            Constellation::new(ConstellationKind::Cscg),
            ch.clone(),
            1.0,
            0.05,
        )
        .unwrap();
        let l = b.layout().ledger;
        assert!((l.nu_p - 1.0 / 3.0).abs() < 1e-12);
        assert!((l.nu_m - 2.0 / 3.0).abs() < 1e-12);
        let mut total = 0.0;
        let trials = 20;
        for i in 0..trials {
            let f = b.build(&mut rng(i)).unwrap();
            let pp = f.p.iter().map(|v| v.norm_sqr()).sum::<f64>() / 4096.0;
            assert!((pp - 1.0 / 3.0).abs() < 1e-12);
            total += f.m.iter().map(|v| v.norm_sqr()).sum::<f64>() / 4096.0;
            for i in 0..4096 {
                assert_eq!(f.x[i], f.p[i] + f.m[i]);
            }
            assert_eq!(f.s, f.p);
            assert_eq!(f.t, f.m);
        }
        let mean = total / trials as f64;
        // std of the per-frame mean power is ν_m/√n
        assert!((mean - 2.0 / 3.0).abs() < 4.0 * (2.0 / 3.0) / (4096.0 * trials as f64).sqrt());
        let f = b.build(&mut rng(0)).unwrap();
        assert!((effective_nu_t(&f, &ch) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn all_pilot_limit() {
        let b = FrameBuilder::new(
            PilotScheme::Superposed { psr: 1.0 },
            Constellation::new(ConstellationKind::Qam16),
            IsiChannel::identity(16),
            1.0,
            0.1,
        )
        .unwrap();
        let f = b.build(&mut rng(1)).unwrap();
        assert!(f.m.iter().all(|v| v.norm() == 0.0));
        assert!(f.x.iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        assert_eq!(b.layout().ledger.nu_m, 0.0);
    }

    #[test]
    fn interleaved_counts() {
        let b = FrameBuilder::new(
            PilotScheme::Interleaved { psr: 0.1 },
            Constellation::new(ConstellationKind::Cscg),
            IsiChannel::identity(100),
            1.0,
            0.1,
        )
        .unwrap();
        let lay = b.layout();
        assert_eq!(lay.is_message.iter().filter(|m| !**m).count(), 10);
        assert!((lay.ledger.nu_p - 0.1).abs() < 1e-15);
        for (i, p) in lay.pilots.iter().enumerate() {
            if !lay.is_message[i] {
                assert_eq!(p.norm(), 1.0);
                assert_eq!(lay.msg_scale[i], 0.0);
            } else {
                assert_eq!(lay.msg_scale[i], 1.0);
            }
        }
    }

    #[test]
    fn rejects_invalid_psr() {
        for psr in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(FrameBuilder::new(
                PilotScheme::Superposed { psr },
                Constellation::new(ConstellationKind::Cscg),
                IsiChannel::identity(8),
                1.0,
                0.1
            )
            .is_err());
        }
        assert!(FrameBuilder::new(
            PilotScheme::ToneZero { psr: 0.1 },
            Constellation::new(ConstellationKind::Cscg),
            IsiChannel::identity(8),
            1.0,
            0.1
        )
        .is_err());
    }

    #[test]
    fn tone_zero_frame() {
        let n = 256;
        let ch = IsiChannel::new(IsiKind::proakis_c(), n).unwrap();
        let b = FrameBuilder::new(
            PilotScheme::ToneZero { psr: 0.2 },
            Constellation::new(ConstellationKind::Qam16),
            ch.clone(),
            1.0,
            0.05,
        )
        .unwrap();
        let lay = b.layout();
        assert!((lay.ledger.nu_p - 0.2).abs() < 1e-12);
        let alloc = lay.allocation.as_ref().unwrap();
        assert_eq!(alloc.powers[0], 0.0);
        assert!((alloc.powers.iter().sum::<f64>() - n as f64 * 0.8).abs() < 1e-9);
        assert!(!lay.is_message[0]);
        // pilot image is a constant in time
        let mean = lay.pilot_image.iter().map(|v| v.norm()).sum::<f64>() / n as f64;
        for v in &lay.pilot_image {
            assert!((v.norm() - mean).abs() < 1e-10 * mean);
        }
        let sum_taps: f64 = PROAKIS_C.iter().sum();
        assert!((mean - sum_taps * 0.2f64.sqrt()).abs() < 1e-12);
        let f = b.build(&mut rng(2)).unwrap();
        let nu_t = effective_nu_t(&f, &ch);
        let direct: f64 = alloc.powers.iter().zip(ch.power_gains()).map(|(p, g)| p * g).sum::<f64>() / n as f64;
        assert!((nu_t - direct).abs() < 1e-12);
    }

    #[test]
    fn ofdm_uniform_allocation_parseval() {
        // uniform power ν_m on every tone: ν_t = ν_m (1/n) Σ|Δ_k|² = ν_m Σ h_j²
        let n = 64;
        let ch = IsiChannel::new(IsiKind::proakis_c(), n).unwrap();
        let mean_gain = ch.power_gains().iter().sum::<f64>() / n as f64;
        let taps_energy: f64 = PROAKIS_C.iter().map(|h| h * h).sum();
        assert!((mean_gain - taps_energy).abs() < 1e-12);
        assert!((taps_energy - 1.0).abs() < 1e-3);
    }
}

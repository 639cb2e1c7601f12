//! A fully specified simulation setup: frame construction, the
//! phase-noise channel, and a compensator, for one grid point.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{apply_pn_channel, sample_cscg, sample_wiener_phase, IsiChannel, IsiKind, NoiseParams, PnParams};
use crate::error::{Error, Result};
use crate::framing::{Constellation, ConstellationKind, FrameBuilder, PilotScheme, TxFrame};
use crate::lmmse::{build_lmmse_filter, run_lmmse, LmmseFilter, LmmseFilterSpec, LmmseWindow};
use crate::rng::{FrameKey, Substream};
use crate::spa::{run_spa, CompensatorOutput, SpaConfig, SpaInputs};
use crate::OpCounts;

/// Which phase-noise compensator to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompensatorSpec {
    Spa { lut: bool },
    Lmmse { window: LmmseWindow },
    /// Pass `y` through unchanged.
    None,
    /// Remove the true phase; a perfect-tracking reference.
    Genie,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    pub channel: IsiKind,
    pub n: usize,
    pub snr_db: f64,
    pub nu_delta: f64,
    pub nu_n: f64,
    pub pilot: PilotScheme,
    pub constellation: ConstellationKind,
    pub compensator: CompensatorSpec,
}

/// One simulated block.
#[derive(Debug, Clone)]
pub struct Frame {
    pub tx: TxFrame,
    /// `Z = S + T + N`.
    pub z: Vec<Complex64>,
    pub theta: Vec<f64>,
    pub y: Vec<Complex64>,
}

#[derive(Debug, Clone)]
enum Compensator {
    Spa(SpaConfig),
    Lmmse(LmmseFilter),
    None,
    Genie,
}

/// Immutable per-grid-point simulation state; share across threads.
#[derive(Debug, Clone)]
pub struct Scenario {
    params: ScenarioParams,
    builder: FrameBuilder,
    pn: PnParams,
    noise: NoiseParams,
    nu_z_given_s: f64,
    compensator: Compensator,
}

impl Scenario {
    pub fn new(params: ScenarioParams) -> Result<Self> {
        if !params.snr_db.is_finite() {
            return Err(Error::domain("SNR must be finite"));
        }
        let nu_x = 1.0;
        let nu_w = nu_x * 10f64.powf(-params.snr_db / 10.0);
        let noise = NoiseParams::new(params.nu_n, nu_w)?;
        let pn = PnParams::new(params.nu_delta)?;
        let channel = IsiChannel::new(params.channel.clone(), params.n)?;
        let builder = FrameBuilder::new(
            params.pilot,
            Constellation::new(params.constellation),
            channel,
            nu_x,
            noise.nu_w + noise.nu_n,
        )?;
        let layout = builder.layout();
        let nu_z_given_s = layout.ledger.nu_t + noise.nu_n;
        let compensator = match params.compensator {
            CompensatorSpec::Spa { lut } => Compensator::Spa(SpaConfig {
                lut,
                keep_diagnostics: false,
            }),
            CompensatorSpec::Lmmse { window } => Compensator::Lmmse(build_lmmse_filter(&LmmseFilterSpec {
                window,
                pilot_image: layout.pilot_image.clone(),
                nu_z_given_s,
                nu_w: noise.nu_w,
                nu_delta: pn.nu_delta,
            })?),
            CompensatorSpec::None => Compensator::None,
            CompensatorSpec::Genie => Compensator::Genie,
        };
        Ok(Self {
            params,
            builder,
            pn,
            noise,
            nu_z_given_s,
            compensator,
        })
    }

    pub fn params(&self) -> &ScenarioParams {
        &self.params
    }

    pub fn builder(&self) -> &FrameBuilder {
        &self.builder
    }

    pub fn channel(&self) -> &IsiChannel {
        self.builder.channel()
    }

    pub fn noise(&self) -> NoiseParams {
        self.noise
    }

    pub fn nu_delta(&self) -> f64 {
        self.pn.nu_delta
    }

    /// `ν_t + ν_n`.
    pub fn nu_z_given_s(&self) -> f64 {
        self.nu_z_given_s
    }

    /// True when the compensator reports its own `ν_w'`.
    pub fn has_analytic_output(&self) -> bool {
        matches!(self.compensator, Compensator::Spa(_) | Compensator::Genie)
    }

    /// Draws the frame identified by `key`.
    pub fn frame(&self, key: FrameKey) -> Result<Frame> {
        let tx = self.builder.build(&mut key.rng(Substream::Message))?;
        let n = tx.x.len();
        let mut z: Vec<Complex64> = tx.s.iter().zip(&tx.t).map(|(s, t)| s + t).collect();
        if self.noise.nu_n > 0.0 {
            let pre = sample_cscg(n, self.noise.nu_n, &mut key.rng(Substream::PreNoise));
            z.iter_mut().zip(pre).for_each(|(z, w)| *z += w);
        }
        let theta = sample_wiener_phase(n, self.pn, &mut key.rng(Substream::Phase));
        let y = apply_pn_channel(&z, &theta, self.noise, &mut key.rng(Substream::Noise))?;
        Ok(Frame { tx, z, theta, y })
    }

    /// Runs the configured compensator on one frame.
    pub fn compensate(&self, frame: &Frame, ops: &mut OpCounts) -> Result<CompensatorOutput> {
        match &self.compensator {
            Compensator::Spa(cfg) => run_spa(
                &SpaInputs {
                    y: &frame.y,
                    s: &frame.tx.s,
                    nu_z_given_s: self.nu_z_given_s,
                    nu_w: self.noise.nu_w,
                    nu_delta: self.pn.nu_delta,
                },
                *cfg,
                ops,
            ),
            Compensator::Lmmse(filter) => run_lmmse(&frame.y, filter, ops),
            Compensator::None => Ok(CompensatorOutput {
                y_prime: frame.y.clone(),
                nu_w_prime: None,
                diagnostics: None,
            }),
            Compensator::Genie => Ok(CompensatorOutput {
                y_prime: frame
                    .y
                    .iter()
                    .zip(&frame.theta)
                    .map(|(y, th)| y * Complex64::from_polar(1.0, -th))
                    .collect(),
                nu_w_prime: Some(self.noise.nu_w),
                diagnostics: None,
            }),
        }
    }
}

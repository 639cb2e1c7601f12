//! Experiment configuration files.
//!
//! A file has an optional `[defaults]` table and one `[curve.<name>]` table
//! per output curve. Every key may appear in either place; curve values
//! win. See `docs/config.md` for the schema.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{IsiKind, PROAKIS_C, SSMF_BETA2_PS2_PER_KM};
use crate::error::{Error, Result};
use crate::framing::{ConstellationKind, PilotScheme};
use crate::lmmse::{LmmseWindow, DEFAULT_TAPS};
use crate::rates::MetricMode;
use crate::scenario::{CompensatorSpec, ScenarioParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    Psr,
    NuDelta,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Range { start: f64, stop: f64, step: f64 },
    List(Vec<f64>),
}

impl GridSpec {
    fn values(&self, field: &str) -> Result<Vec<f64>> {
        let v = match *self {
            GridSpec::List(ref v) => v.clone(),
            GridSpec::Range { start, stop, step } => {
                if !(step > 0.0 && step.is_finite() && start.is_finite() && stop.is_finite()) {
                    return Err(Error::config(field, "range needs finite start/stop and a positive step"));
                }
                let count = ((stop - start) / step + 1e-9).floor();
                if !(0.0..=1e5).contains(&count) {
                    return Err(Error::config(field, "range is empty or too long"));
                }
                // computed from the index so grid points are exact multiples
                (0..=count as usize).map(|k| start + k as f64 * step).collect()
            }
        };
        if v.is_empty() {
            return Err(Error::config(field, "grid must not be empty"));
        }
        if v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config(field, "grid must be finite and strictly increasing"));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelName {
    Identity,
    Cd,
    OfdmProakisC,
    Ofdm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PilotName {
    Interleaved,
    Superposed,
    ToneZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompensatorName {
    Spa,
    Lmmse,
    None,
    Genie,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum WindowSpec {
    Taps(usize),
    Name(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantityName {
    Gmi,
    SddBound,
    CoherentCapacity,
}

/// One table of the file; every key optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveFields {
    pub label: Option<String>,
    pub snr_db: Option<f64>,
    pub nu_delta: Option<f64>,
    pub nu_n: Option<f64>,
    pub sweep: Option<SweepAxis>,
    pub psr_db: Option<GridSpec>,
    pub nu_delta_grid: Option<GridSpec>,
    pub channel: Option<ChannelName>,
    pub cd_beta2_ps2_per_km: Option<f64>,
    pub cd_length_km: Option<f64>,
    pub cd_symbol_rate_gbd: Option<f64>,
    pub ofdm_taps: Option<Vec<f64>>,
    pub pilot: Option<PilotName>,
    pub constellation: Option<ConstellationKind>,
    pub compensator: Option<CompensatorName>,
    pub lmmse_window: Option<WindowSpec>,
    pub lut: Option<bool>,
    pub quantity: Option<QuantityName>,
    pub metric: Option<MetricMode>,
    pub calibration_frames: Option<usize>,
    pub sdd_bins: Option<usize>,
    pub n: Option<usize>,
    pub frames: Option<usize>,
    pub seed: Option<u64>,
}

macro_rules! merge_fields {
    ($hi:expr, $lo:expr; $($f:ident),*) => {
        CurveFields { $($f: $hi.$f.clone().or_else(|| $lo.$f.clone())),* }
    };
}

impl CurveFields {
    /// Field-wise `self` over `lower`.
    pub fn over(&self, lower: &CurveFields) -> CurveFields {
        merge_fields!(self, lower; label, snr_db, nu_delta, nu_n, sweep, psr_db, nu_delta_grid, channel,
            cd_beta2_ps2_per_km, cd_length_km, cd_symbol_rate_gbd, ofdm_taps, pilot, constellation,
            compensator, lmmse_window, lut, quantity, metric, calibration_frames, sdd_bins, n, frames, seed)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub name: Option<String>,
    #[serde(default)]
    pub defaults: CurveFields,
    #[serde(default)]
    pub curve: BTreeMap<String, CurveFields>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("<file>", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| Error::Config {
            field: path.display().to_string(),
            message: e.to_string(),
        })
    }

    /// Resolves every curve, applying `overrides` on top of everything.
    pub fn resolve(&self, overrides: &CurveFields) -> Result<Vec<CurveConfig>> {
        if self.curve.is_empty() {
            return Err(Error::config("curve", "config defines no curves"));
        }
        self.curve
            .iter()
            .map(|(name, fields)| CurveConfig::resolve(name, &overrides.over(&fields.over(&self.defaults))))
            .collect()
    }
}

/// What each grid point measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    Gmi {
        compensator: CompensatorSpec,
        metric: MetricMode,
        calibration_frames: usize,
    },
    SddBound {
        bins: usize,
    },
    CoherentCapacity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sweep {
    /// x-axis is `10 log10 ρ`.
    Psr { psr_db: Vec<f64> },
    /// x-axis is `ν_Δ`; each point reports the best rate over `psr_db`.
    NuDelta { nu_delta: Vec<f64>, psr_db: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PilotKind {
    Interleaved,
    Superposed,
    ToneZero,
}

impl PilotKind {
    pub fn scheme(self, psr: f64) -> PilotScheme {
        match self {
            PilotKind::Interleaved => PilotScheme::Interleaved { psr },
            PilotKind::Superposed => PilotScheme::Superposed { psr },
            PilotKind::ToneZero => PilotScheme::ToneZero { psr },
        }
    }
}

/// A fully resolved and validated curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveConfig {
    #[serde(skip)]
    pub name: String,
    #[serde(skip)]
    pub label: String,
    pub snr_db: f64,
    /// Unused by ν_Δ sweeps.
    pub nu_delta: f64,
    pub nu_n: f64,
    pub sweep: Sweep,
    pub channel: IsiKind,
    pub pilot: PilotKind,
    pub constellation: ConstellationKind,
    pub quantity: Quantity,
    pub n: usize,
    pub frames: usize,
    pub seed: u64,
}

fn need<T: Clone>(v: &Option<T>, path: &str) -> Result<T> {
    v.clone().ok_or_else(|| Error::config(path, "required field missing"))
}

impl CurveConfig {
    pub fn resolve(name: &str, f: &CurveFields) -> Result<Self> {
        let p = |field: &str| format!("curve.{name}.{field}");
        let snr_db = need(&f.snr_db, &p("snr_db"))?;
        if !snr_db.is_finite() {
            return Err(Error::config(p("snr_db"), "must be finite"));
        }
        let nu_n = f.nu_n.unwrap_or(0.0);
        if !(nu_n.is_finite() && nu_n >= 0.0) {
            return Err(Error::config(p("nu_n"), "must be finite and >= 0"));
        }
        let n = need(&f.n, &p("n"))?;
        if n < 2 {
            return Err(Error::config(p("n"), "frame length must be at least 2"));
        }
        let frames = need(&f.frames, &p("frames"))?;
        if frames == 0 {
            return Err(Error::config(p("frames"), "need at least one frame"));
        }
        let seed = f.seed.unwrap_or(1);

        let psr_db = need(&f.psr_db, &p("psr_db"))?.values(&p("psr_db"))?;
        if psr_db.iter().any(|&x| x > 0.0) {
            return Err(Error::config(p("psr_db"), "pilot-to-signal ratio cannot exceed 0 dB"));
        }
        let nu_delta_ok = |v: f64| v.is_finite() && v >= 0.0;
        let (sweep, nu_delta) = match f.sweep.unwrap_or(SweepAxis::Psr) {
            SweepAxis::Psr => {
                let nd = need(&f.nu_delta, &p("nu_delta"))?;
                if !nu_delta_ok(nd) {
                    return Err(Error::config(p("nu_delta"), "must be finite and >= 0"));
                }
                (Sweep::Psr { psr_db }, nd)
            }
            SweepAxis::NuDelta => {
                let grid = need(&f.nu_delta_grid, &p("nu_delta_grid"))?.values(&p("nu_delta_grid"))?;
                if !grid.iter().all(|&v| nu_delta_ok(v)) {
                    return Err(Error::config(p("nu_delta_grid"), "values must be >= 0"));
                }
                (Sweep::NuDelta { nu_delta: grid, psr_db }, 0.0)
            }
        };

        let channel = match f.channel.unwrap_or(ChannelName::Identity) {
            ChannelName::Identity => IsiKind::Identity,
            ChannelName::Cd => IsiKind::ChromaticDispersion {
                beta2_ps2_per_km: f.cd_beta2_ps2_per_km.unwrap_or(SSMF_BETA2_PS2_PER_KM),
                length_km: f.cd_length_km.unwrap_or(10.0),
                symbol_rate_gbd: f.cd_symbol_rate_gbd.unwrap_or(64.0),
            },
            ChannelName::OfdmProakisC => IsiKind::CirculantOfdm {
                taps: PROAKIS_C.to_vec(),
            },
            ChannelName::Ofdm => IsiKind::CirculantOfdm {
                taps: need(&f.ofdm_taps, &p("ofdm_taps"))?,
            },
        };
        let pilot = match f.pilot.unwrap_or(PilotName::Superposed) {
            PilotName::Interleaved => PilotKind::Interleaved,
            PilotName::Superposed => PilotKind::Superposed,
            PilotName::ToneZero => PilotKind::ToneZero,
        };
        let is_ofdm = matches!(channel, IsiKind::CirculantOfdm { .. });
        if is_ofdm != (pilot == PilotKind::ToneZero) {
            return Err(Error::config(p("pilot"), "OFDM channels use tone-zero pilots and only they do"));
        }
        let constellation = f.constellation.unwrap_or(ConstellationKind::Cscg);

        let quantity = match f.quantity.unwrap_or(QuantityName::Gmi) {
            QuantityName::Gmi => {
                let compensator = match f.compensator.unwrap_or(CompensatorName::Spa) {
                    CompensatorName::Spa => CompensatorSpec::Spa {
                        lut: f.lut.unwrap_or(false),
                    },
                    CompensatorName::Lmmse => CompensatorSpec::Lmmse {
                        window: match &f.lmmse_window {
                            None => LmmseWindow::Finite { taps: DEFAULT_TAPS },
                            Some(WindowSpec::Taps(t)) if t % 2 == 1 => LmmseWindow::Finite { taps: *t },
                            Some(WindowSpec::Name(s)) if s == "full" => LmmseWindow::Full,
                            Some(_) => {
                                return Err(Error::config(p("lmmse_window"), "expected an odd tap count or \"full\""))
                            }
                        },
                    },
                    CompensatorName::None => CompensatorSpec::None,
                    CompensatorName::Genie => CompensatorSpec::Genie,
                };
                let metric = f.metric.unwrap_or(MetricMode::Auto);
                let has_analytic = matches!(compensator, CompensatorSpec::Spa { .. } | CompensatorSpec::Genie);
                if metric == MetricMode::Analytic && !has_analytic {
                    return Err(Error::config(p("metric"), "this compensator has no analytic output variance"));
                }
                let calibration_frames = f.calibration_frames.unwrap_or(4);
                if calibration_frames == 0 {
                    return Err(Error::config(p("calibration_frames"), "need at least one frame"));
                }
                Quantity::Gmi {
                    compensator,
                    metric,
                    calibration_frames,
                }
            }
            QuantityName::SddBound => {
                if channel != IsiKind::Identity
                    || constellation != ConstellationKind::Cscg
                    || pilot != PilotKind::Superposed
                {
                    return Err(Error::config(
                        p("quantity"),
                        "sdd-bound needs channel = identity, constellation = cscg, pilot = superposed",
                    ));
                }
                let bins = f.sdd_bins.unwrap_or(256);
                if bins < crate::spa::MIN_BINS {
                    return Err(Error::config(p("sdd_bins"), format!("need at least {}", crate::spa::MIN_BINS)));
                }
                Quantity::SddBound { bins }
            }
            QuantityName::CoherentCapacity => Quantity::CoherentCapacity,
        };

        Ok(Self {
            name: name.to_string(),
            label: f.label.clone().unwrap_or_else(|| name.to_string()),
            snr_db,
            nu_delta,
            nu_n,
            sweep,
            channel,
            pilot,
            constellation,
            quantity,
            n,
            frames,
            seed,
        })
    }

    /// Scenario of one grid point.
    pub fn scenario_params(&self, psr: f64, nu_delta: f64) -> ScenarioParams {
        let compensator = match self.quantity {
            Quantity::Gmi { compensator, .. } => compensator,
            _ => CompensatorSpec::None,
        };
        ScenarioParams {
            channel: self.channel.clone(),
            n: self.n,
            snr_db: self.snr_db,
            nu_delta,
            nu_n: self.nu_n,
            pilot: self.pilot.scheme(psr),
            constellation: self.constellation,
            compensator,
        }
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// One-line human summary for TSV headers.
    pub fn describe(&self) -> String {
        let channel = match &self.channel {
            IsiKind::Identity => "identity".to_string(),
            IsiKind::ChromaticDispersion {
                beta2_ps2_per_km,
                length_km,
                symbol_rate_gbd,
            } => format!("cd(beta2={beta2_ps2_per_km},L={length_km}km,rate={symbol_rate_gbd}GBd)"),
            IsiKind::CirculantOfdm { taps } => format!("ofdm(taps={taps:?})"),
        };
        let quantity = match self.quantity {
            Quantity::Gmi { compensator, metric, .. } => {
                let comp = match compensator {
                    CompensatorSpec::Spa { .. } => "spa".to_string(),
                    CompensatorSpec::Lmmse {
                        window: LmmseWindow::Full,
                    } => "lmmse-full".to_string(),
                    CompensatorSpec::Lmmse {
                        window: LmmseWindow::Finite { taps },
                    } => format!("lmmse-{taps}"),
                    CompensatorSpec::None => "none".to_string(),
                    CompensatorSpec::Genie => "genie".to_string(),
                };
                format!("gmi compensator={comp} metric={}", metric_name(metric))
            }
            Quantity::SddBound { .. } => "sdd-bound".to_string(),
            Quantity::CoherentCapacity => "coherent-capacity".to_string(),
        };
        let nd = match self.sweep {
            Sweep::Psr { .. } => format!(" nu_delta={}", self.nu_delta),
            Sweep::NuDelta { .. } => String::new(),
        };
        format!(
            "channel={channel} snr_db={}{nd} pilot={:?} constellation={:?} {quantity}",
            self.snr_db, self.pilot, self.constellation
        )
        .to_lowercase()
    }
}

fn metric_name(m: MetricMode) -> &'static str {
    match m {
        MetricMode::Auto => "auto",
        MetricMode::Analytic => "analytic",
        MetricMode::Calibrated => "calibrated",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
        [defaults]
        snr_db = 13.0
        nu_delta = 5e-3
        n = 4096
        frames = 16
        seed = 7
        psr_db = { start = -20.0, stop = 0.0, step = 1.0 }

        [curve.spa]
        label = "SPA"

        [curve.lmmse]
        compensator = "lmmse"
        lmmse_window = "full"
    "#;

    #[test]
    fn parses_and_merges() {
        let cfg = ConfigFile::parse(BASE).unwrap();
        let curves = cfg.resolve(&CurveFields::default()).unwrap();
        assert_eq!(curves.len(), 2);
        let lm = &curves[0];
        assert_eq!(lm.name, "lmmse");
        match &lm.sweep {
            Sweep::Psr { psr_db } => {
                assert_eq!(psr_db.len(), 21);
                assert_eq!(psr_db[15], -5.0);
            }
            _ => panic!(),
        }
        assert!(matches!(
            lm.quantity,
            Quantity::Gmi {
                compensator: CompensatorSpec::Lmmse {
                    window: LmmseWindow::Full
                },
                ..
            }
        ));
        assert_eq!(curves[1].label, "SPA");
    }

    #[test]
    fn overrides_win() {
        let cfg = ConfigFile::parse(BASE).unwrap();
        let o = CurveFields {
            frames: Some(2),
            seed: Some(99),
            ..CurveFields::default()
        };
        for c in cfg.resolve(&o).unwrap() {
            assert_eq!(c.frames, 2);
            assert_eq!(c.seed, 99);
        }
    }

    #[test]
    fn validation_names_the_field() {
        let text = BASE.replace("frames = 16", "frames = 0");
        let err = ConfigFile::parse(&text).unwrap().resolve(&CurveFields::default()).unwrap_err();
        match err {
            Error::Config { field, .. } => assert_eq!(field, "curve.lmmse.frames"),
            e => panic!("{e}"),
        }
        let text = BASE.replace("step = 1.0", "step = -1.0");
        assert!(ConfigFile::parse(&text).unwrap().resolve(&CurveFields::default()).is_err());
        assert!(ConfigFile::parse("[curve.a]\nbogus = 1").is_err());
        let text = BASE.replace("lmmse_window = \"full\"", "lmmse_window = 24");
        assert!(ConfigFile::parse(&text).unwrap().resolve(&CurveFields::default()).is_err());
    }

    #[test]
    fn hash_tracks_semantic_fields_only() {
        let cfg = ConfigFile::parse(BASE).unwrap();
        let a = cfg.resolve(&CurveFields::default()).unwrap();
        let relabeled = ConfigFile::parse(&BASE.replace("\"SPA\"", "\"other\"")).unwrap();
        let b = relabeled.resolve(&CurveFields::default()).unwrap();
        assert_eq!(a[1].hash(), b[1].hash());
        let reseeded = ConfigFile::parse(&BASE.replace("seed = 7", "seed = 8")).unwrap();
        let c = reseeded.resolve(&CurveFields::default()).unwrap();
        assert_ne!(a[1].hash(), c[1].hash());
        // CD parameters do not matter for an identity channel
        let cd = ConfigFile::parse(&BASE.replace("[curve.spa]", "[curve.spa]\ncd_length_km = 80.0")).unwrap();
        assert_eq!(cd.resolve(&CurveFields::default()).unwrap()[1].hash(), a[1].hash());
        assert_eq!(a[0].hash().len(), 16);
    }
}

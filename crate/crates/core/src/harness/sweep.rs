//! Grid evaluation. Grid points run one after another; frames within a
//! point run on the current rayon pool.

use crate::error::{Error, Result};
use crate::rates::{coherent_capacity, estimate_gmi, sdd_mi_lower_bound, RateEstimate};
use crate::scenario::Scenario;
use crate::OpCounts;

use super::config::{CurveConfig, Quantity, Sweep};

/// Largest tolerated fraction of skipped frames.
pub const MAX_SKIP_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row {
    pub x: f64,
    pub y: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub curve: String,
    pub label: String,
    pub scenario: String,
    pub config_hash: String,
    pub seed: u64,
    pub frames: usize,
    pub n: usize,
    /// Column name of `x`.
    pub x_name: &'static str,
    pub rows: Vec<Row>,
    /// For ν_Δ sweeps: the PSR (dB) that attained each row's maximum.
    pub best_psr_db: Vec<f64>,
    pub attempted: usize,
    pub skipped: usize,
    pub clipped: u64,
    pub ops: OpCounts,
}

impl SweepResult {
    pub fn empty(cfg: &CurveConfig) -> Self {
        Self {
            curve: cfg.name.clone(),
            label: cfg.label.clone(),
            scenario: cfg.describe(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            frames: cfg.frames,
            n: cfg.n,
            x_name: match cfg.sweep {
                Sweep::Psr { .. } => "psr_db",
                Sweep::NuDelta { .. } => "nu_delta",
            },
            rows: Vec::new(),
            best_psr_db: Vec::new(),
            attempted: 0,
            skipped: 0,
            clipped: 0,
            ops: OpCounts::default(),
        }
    }
}

/// Result of one `(ρ, ν_Δ)` point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointOutcome {
    pub estimate: RateEstimate,
    pub attempted: usize,
    pub skipped: usize,
    pub clipped: u64,
    pub ops: OpCounts,
}

impl PointOutcome {
    fn exact(bpcu: f64) -> Self {
        Self {
            estimate: RateEstimate::exact(bpcu),
            attempted: 0,
            skipped: 0,
            clipped: 0,
            ops: OpCounts::default(),
        }
    }
}

/// Evaluates one grid point. `grid` keys the frame RNG streams.
pub fn evaluate_point(cfg: &CurveConfig, psr_db: f64, nu_delta: f64, grid: u64) -> Result<PointOutcome> {
    let psr = 10f64.powf(psr_db / 10.0);
    let scenario = Scenario::new(cfg.scenario_params(psr.min(1.0), nu_delta))?;
    let ledger = scenario.builder().layout().ledger;
    if ledger.nu_m <= 0.0 {
        // every symbol is a pilot
        return Ok(PointOutcome::exact(0.0));
    }
    match cfg.quantity {
        Quantity::Gmi {
            metric,
            calibration_frames,
            ..
        } => {
            let g = estimate_gmi(&scenario, metric, cfg.seed, grid, cfg.frames, calibration_frames)?;
            Ok(PointOutcome {
                estimate: g.estimate,
                attempted: g.frames,
                skipped: g.skipped,
                clipped: g.clipped,
                ops: g.ops,
            })
        }
        Quantity::SddBound { bins } => {
            let b = sdd_mi_lower_bound(&scenario, cfg.seed, grid, cfg.frames, bins)?;
            Ok(PointOutcome {
                estimate: b.estimate,
                attempted: cfg.frames,
                skipped: b.skipped,
                clipped: 0,
                ops: OpCounts::default(),
            })
        }
        Quantity::CoherentCapacity => {
            let noise = scenario.noise();
            let c = coherent_capacity(
                scenario.channel(),
                scenario.builder().layout().allocation.as_ref(),
                ledger.nu_m,
                noise.nu_w + noise.nu_n,
            )?;
            Ok(PointOutcome::exact(c))
        }
    }
}

/// RNG grid index of inner point `inner` under outer point `outer`.
pub fn grid_index(outer: usize, inner: usize) -> u64 {
    ((outer as u64) << 16) | inner as u64
}

/// Runs every grid point of one curve. `progress` receives one line per
/// point.
pub fn run_curve(cfg: &CurveConfig, progress: &mut dyn FnMut(&str)) -> Result<SweepResult> {
    let mut result = SweepResult::empty(cfg);
    let absorb = |out: &PointOutcome, result: &mut SweepResult| {
        result.attempted += out.attempted;
        result.skipped += out.skipped;
        result.clipped += out.clipped;
        result.ops = result.ops + out.ops;
    };
    match &cfg.sweep {
        Sweep::Psr { psr_db } => {
            for (k, &x) in psr_db.iter().enumerate() {
                let out = evaluate_point(cfg, x, cfg.nu_delta, grid_index(0, k))?;
                absorb(&out, &mut result);
                progress(&format!("{}: psr_db={x} bpcu={:.4}", cfg.name, out.estimate.bpcu));
                result.rows.push(Row {
                    x,
                    y: out.estimate.bpcu,
                    stderr: out.estimate.stderr,
                });
            }
        }
        Sweep::NuDelta { nu_delta, psr_db } => {
            for (j, &nd) in nu_delta.iter().enumerate() {
                let mut best: Option<(f64, RateEstimate)> = None;
                for (k, &x) in psr_db.iter().enumerate() {
                    let out = evaluate_point(cfg, x, nd, grid_index(j, k))?;
                    absorb(&out, &mut result);
                    if best.is_none_or(|(_, b)| out.estimate.bpcu > b.bpcu) {
                        best = Some((x, out.estimate));
                    }
                }
                let (x, est) = best.expect("grid is non-empty");
                progress(&format!("{}: nu_delta={nd} bpcu={:.4} at psr_db={x}", cfg.name, est.bpcu));
                result.best_psr_db.push(x);
                result.rows.push(Row {
                    x: nd,
                    y: est.bpcu,
                    stderr: est.stderr,
                });
            }
        }
    }
    if result.attempted > 0 && result.skipped as f64 > MAX_SKIP_FRACTION * result.attempted as f64 {
        return Err(Error::Numerical(format!(
            "curve {}: {} of {} frames failed",
            cfg.name, result.skipped, result.attempted
        )));
    }
    Ok(result)
}

/// Runs `f` on a pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::config("threads", "must be at least 1")),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::config("threads", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{ConfigFile, CurveFields};

    fn curve(extra: &str) -> CurveConfig {
        curve_with(4, 3, extra)
    }

    fn curve_with(frames: usize, seed: u64, extra: &str) -> CurveConfig {
        let text = format!(
            "[curve.c]\nsnr_db = 13.0\nnu_delta = 5e-3\nn = 128\nframes = {frames}\nseed = {seed}\npsr_db = [-10.0, -5.0, 0.0]\n{extra}"
        );
        ConfigFile::parse(&text)
            .unwrap()
            .resolve(&CurveFields::default())
            .unwrap()
            .remove(0)
    }

    #[test]
    fn one_row_per_point_and_all_pilot_is_zero() {
        let r = run_curve(&curve(""), &mut |_| {}).unwrap();
        assert_eq!(r.rows.len(), 3);
        assert_eq!(r.rows[2], Row { x: 0.0, y: 0.0, stderr: 0.0 });
        assert!(r.rows[1].y > 1.0);
        assert_eq!(r.attempted, 8);
    }

    #[test]
    fn thread_count_does_not_change_numbers() {
        let c = curve("");
        let a = with_threads(Some(1), || run_curve(&c, &mut |_| {})).unwrap().unwrap();
        let b = with_threads(Some(3), || run_curve(&c, &mut |_| {})).unwrap().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nu_delta_sweep_takes_the_best_psr() {
        let c = curve("sweep = \"nu-delta\"\nnu_delta_grid = [1e-4, 5e-3]");
        let r = run_curve(&c, &mut |_| {}).unwrap();
        assert_eq!(r.x_name, "nu_delta");
        assert_eq!(r.rows.len(), 2);
        for (j, row) in r.rows.iter().enumerate() {
            let direct: f64 = [-10.0, -5.0, 0.0]
                .iter()
                .enumerate()
                .map(|(k, &x)| evaluate_point(&c, x, row.x, grid_index(j, k)).unwrap().estimate.bpcu)
                .fold(f64::MIN, f64::max);
            assert_eq!(row.y, direct);
        }
    }

    #[test]
    fn coherent_capacity_matches_closed_form() {
        let r = run_curve(&curve("quantity = \"coherent-capacity\""), &mut |_| {}).unwrap();
        for row in &r.rows {
            let nu_m = 1.0 - 10f64.powf(row.x / 10.0);
            let c = (1.0 + nu_m / 10f64.powf(-1.3)).log2();
            assert!((row.y - c).abs() < 1e-9);
        }
    }

    #[test]
    fn seeds_agree_statistically() {
        let a = run_curve(&curve_with(16, 3, ""), &mut |_| {}).unwrap();
        let b = run_curve(&curve_with(16, 4, ""), &mut |_| {}).unwrap();
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            let se = (ra.stderr.powi(2) + rb.stderr.powi(2)).sqrt();
            assert!((ra.y - rb.y).abs() <= 3.0 * se + 1e-12, "{ra:?} {rb:?}");
        }
    }
}

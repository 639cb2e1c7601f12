use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use phasetrack::harness::{run_config, run_figures, run_selftest, with_threads, ConfigFile, CurveFields, Scale};
use phasetrack::rates::{analytic_metric, calibrate_metric};
use phasetrack::rng::FrameKey;
use phasetrack::scenario::Scenario;
use phasetrack::{Error, OpCounts, Result};

#[derive(Parser)]
#[command(name = "phasetrack", version, about = "Phase-noise compensation and achievable-rate sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Overrides {
    /// Base seed for every curve.
    #[arg(long)]
    seed: Option<u64>,
    /// Measurement frames per grid point.
    #[arg(long)]
    frames: Option<usize>,
    /// Symbols per frame.
    #[arg(long = "frame-len")]
    frame_len: Option<usize>,
}

impl Overrides {
    fn fields(&self) -> CurveFields {
        CurveFields {
            seed: self.seed,
            frames: self.frames,
            n: self.frame_len,
            ..CurveFields::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Desk,
    Paper,
}

#[derive(Subcommand)]
enum Command {
    /// Run every curve of a config file and write one TSV per curve.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; falls back to PHASETRACK_THREADS.
        #[arg(long)]
        threads: Option<usize>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Estimate the decoding-metric gain and variance for one grid point.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        /// Curve to use; defaults to the first one.
        #[arg(long)]
        curve: Option<String>,
        /// Pilot-to-signal ratio; defaults to the first grid value.
        #[arg(long = "psr-db", allow_negative_numbers = true)]
        psr_db: Option<f64>,
        /// Phase-noise variance for ν_Δ sweeps; defaults to the first grid value.
        #[arg(long = "nu-delta")]
        nu_delta: Option<f64>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the built-in oracle checks.
    Selftest,
    /// Regenerate the data of all six figures under `<out>/<fig>/`.
    FiguresData {
        #[arg(long, value_enum, default_value = "desk")]
        scale: ScaleArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn threads(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("PHASETRACK_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config {
                field: "PHASETRACK_THREADS".into(),
                message: format!("expected a positive integer, got `{v}`"),
            }),
        Err(_) => Ok(None),
    }
}

fn progress(line: &str) {
    eprintln!("{line}");
}

fn calibrate(
    config: &Path,
    curve: Option<&str>,
    psr_db: Option<f64>,
    nu_delta: Option<f64>,
    overrides: &Overrides,
) -> Result<()> {
    use phasetrack::harness::config::Sweep;
    let curves = ConfigFile::load(config)?.resolve(&overrides.fields())?;
    let cfg = match curve {
        None => &curves[0],
        Some(name) => curves.iter().find(|c| c.name == name).ok_or_else(|| Error::Config {
            field: "curve".into(),
            message: format!("no curve named `{name}`"),
        })?,
    };
    let (grid, nd) = match &cfg.sweep {
        Sweep::Psr { psr_db } => (psr_db, cfg.nu_delta),
        Sweep::NuDelta { nu_delta: g, psr_db } => (psr_db, nu_delta.unwrap_or(g[0])),
    };
    let psr_db = psr_db.unwrap_or(grid[0]);
    let scenario = Scenario::new(cfg.scenario_params(10f64.powf(psr_db / 10.0).min(1.0), nd))?;
    let frames = match cfg.quantity {
        phasetrack::harness::config::Quantity::Gmi { calibration_frames, .. } => calibration_frames,
        _ => 4,
    };
    let m = calibrate_metric(&scenario, cfg.seed, 0, frames)?;
    println!("curve: {}", cfg.name);
    println!("psr_db: {psr_db}");
    println!("nu_delta: {nd}");
    println!("calibration_frames: {frames}");
    println!("gain: {} {}", m.gain.re, m.gain.im);
    println!("variance: {}", m.variance);
    let frame = scenario.frame(FrameKey::calibration(cfg.seed, 0, 0))?;
    let out = scenario.compensate(&frame, &mut OpCounts::default())?;
    match analytic_metric(&scenario, &out) {
        Some(a) => println!("analytic_variance: {}", a.variance),
        None => println!("analytic_variance: none"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sweep {
            config,
            out,
            threads: t,
            overrides,
        } => {
            let file = ConfigFile::load(&config)?;
            let fields = overrides.fields();
            let written = with_threads(threads(t)?, || run_config(&file, &fields, &out, &mut progress))??;
            for p in written {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Calibrate {
            config,
            curve,
            psr_db,
            nu_delta,
            overrides,
        } => calibrate(&config, curve.as_deref(), psr_db, nu_delta, &overrides),
        Command::Selftest => {
            let checks = run_selftest();
            let mut ok = true;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            if ok {
                Ok(())
            } else {
                Err(Error::Numerical("self-test failed".into()))
            }
        }
        Command::FiguresData {
            scale,
            out,
            threads: t,
            seed,
        } => {
            let scale = match scale {
                ScaleArg::Desk => Scale::Desk,
                ScaleArg::Paper => Scale::Paper,
            };
            let extra = CurveFields {
                seed,
                ..CurveFields::default()
            };
            let written = with_threads(threads(t)?, || run_figures(scale, &extra, &out, &mut progress))??;
            for p in written {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

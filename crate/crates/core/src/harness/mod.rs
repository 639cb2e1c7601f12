//! Sweep orchestration: configuration files, grid evaluation, TSV output
//! and the predefined figure sets.

pub mod config;
pub mod figures;
pub mod selftest;
pub mod sweep;
pub mod tsv;

pub use config::{ConfigFile, CurveConfig, CurveFields};
pub use figures::{run_config, run_figures, Scale, FIGURES};
pub use selftest::{run_selftest, Check};
pub use sweep::{run_curve, with_threads, Row, SweepResult};
pub use tsv::{fmt_g, render, write_tsv};

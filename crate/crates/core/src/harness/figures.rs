//! The six predefined figure data sets.

use std::path::{Path, PathBuf};

use crate::error::Result;

use super::config::{ConfigFile, CurveFields};
use super::sweep::run_curve;
use super::tsv::write_tsv;

/// `(name, TOML)` of every figure, in order.
pub const FIGURES: [(&str, &str); 6] = [
    ("fig2", include_str!("../../../../configs/fig2.toml")),
    ("fig3", include_str!("../../../../configs/fig3.toml")),
    ("fig4", include_str!("../../../../configs/fig4.toml")),
    ("fig5", include_str!("../../../../configs/fig5.toml")),
    ("fig6", include_str!("../../../../configs/fig6.toml")),
    ("fig7", include_str!("../../../../configs/fig7.toml")),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// 2^4 frames of 2^12 symbols.
    Desk,
    /// 2^8 frames of 2^13 symbols.
    Paper,
}

impl Scale {
    pub fn overrides(self) -> CurveFields {
        let (n, frames) = match self {
            Scale::Desk => (1 << 12, 1 << 4),
            Scale::Paper => (1 << 13, 1 << 8),
        };
        CurveFields {
            n: Some(n),
            frames: Some(frames),
            ..CurveFields::default()
        }
    }
}

/// Runs every curve of `config` and writes `<out>/<curve>.tsv`.
pub fn run_config(
    config: &ConfigFile,
    overrides: &CurveFields,
    out: &Path,
    progress: &mut dyn FnMut(&str),
) -> Result<Vec<PathBuf>> {
    // validate every curve before spending time on any
    let curves = config.resolve(overrides)?;
    let mut written = Vec::with_capacity(curves.len());
    for c in &curves {
        let result = run_curve(c, progress)?;
        let path = out.join(format!("{}.tsv", c.name));
        write_tsv(&result, &path)?;
        written.push(path);
    }
    Ok(written)
}

/// Writes `<out>/<fig>/<curve>.tsv` for all six figures.
pub fn run_figures(
    scale: Scale,
    extra: &CurveFields,
    out: &Path,
    progress: &mut dyn FnMut(&str),
) -> Result<Vec<PathBuf>> {
    let overrides = extra.over(&scale.overrides());
    let configs: Vec<(&str, ConfigFile)> = FIGURES
        .iter()
        .map(|(name, text)| Ok((*name, ConfigFile::parse(text)?)))
        .collect::<Result<_>>()?;
    let mut written = Vec::new();
    for (name, cfg) in &configs {
        progress(&format!("== {name}"));
        written.extend(run_config(cfg, &overrides, &out.join(name), progress)?);
    }
    Ok(written)
}

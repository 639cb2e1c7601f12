//! TSV curve files: `# ` comment header, then `x\ty\tstderr` rows.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::sweep::SweepResult;

/// Formats like C's `%g`: six significant digits, trailing zeros dropped,
/// exponent form outside `[1e-4, 1e6)`.
pub fn fmt_g(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".to_string()
        } else if v > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    // rounding to 6 digits can carry into the exponent, so take it from the
    // rounded scientific form
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Renders the complete file contents.
pub fn render(result: &SweepResult) -> String {
    let mut out = String::new();
    let mut h = |line: String| {
        out.push_str("# ");
        out.push_str(&line);
        out.push('\n');
    };
    h(format!("phasetrack {}", env!("CARGO_PKG_VERSION")));
    h(format!("curve: {}", result.curve));
    h(format!("label: {}", result.label));
    h(format!("scenario: {}", result.scenario));
    h(format!("config_hash: {}", result.config_hash));
    h(format!("seed: {}", result.seed));
    h(format!("frames: {} n: {}", result.frames, result.n));
    h(format!(
        "skipped_frames: {} of {} clipped_symbols: {}",
        result.skipped, result.attempted, result.clipped
    ));
    if !result.best_psr_db.is_empty() {
        let best: Vec<String> = result.best_psr_db.iter().map(|&v| fmt_g(v)).collect();
        h(format!("best_psr_db: {}", best.join(" ")));
    }
    h(format!("columns: {}\tbpcu\tstderr", result.x_name));
    for r in &result.rows {
        let _ = writeln!(out, "{}\t{}\t{}", fmt_g(r.x), fmt_g(r.y), fmt_g(r.stderr));
    }
    out
}

/// Writes `result` to `path`, creating parent directories.
pub fn write_tsv(result: &SweepResult, path: &Path) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, render(result)).map_err(io)
}

/// The non-comment lines of a TSV file.
pub fn data_section(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

/// Parses the rows of a TSV file as `(x, y, stderr)`.
pub fn parse_rows(text: &str) -> Result<Vec<(f64, f64, f64)>> {
    data_section(text)
        .into_iter()
        .filter(|l| !l.is_empty())
        .map(|l| {
            let cols: Vec<f64> = l
                .split('\t')
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Numerical(format!("unparsable TSV row `{l}`")))?;
            match cols[..] {
                [x, y, s] => Ok((x, y, s)),
                _ => Err(Error::Numerical(format!("expected 3 columns in `{l}`"))),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::sweep::Row;
    use crate::OpCounts;

    fn result(rows: Vec<Row>) -> SweepResult {
        SweepResult {
            curve: "c".into(),
            label: "C".into(),
            scenario: "s".into(),
            config_hash: "0123456789abcdef".into(),
            seed: 1,
            frames: 16,
            n: 4096,
            x_name: "psr_db",
            rows,
            best_psr_db: vec![],
            attempted: 0,
            skipped: 0,
            clipped: 0,
            ops: OpCounts::default(),
        }
    }

    #[test]
    fn g_format_matches_printf() {
        let cases = [
            (-5.0, "-5"),
            (3.2, "3.2"),
            (0.01, "0.01"),
            (4.389_123_456, "4.38912"),
            (1e-6, "1e-06"),
            (5e-3, "0.005"),
            (1.5e-5, "1.5e-05"),
            (9.999_996, "10"),
            (123_456.7, "123457"),
            (1_234_567.0, "1.23457e+06"),
            (999_999.5, "1e+06"),
            (0.000_099_999_99, "0.0001"),
            (-0.25, "-0.25"),
            (0.0, "0"),
        ];
        for (v, want) in cases {
            assert_eq!(fmt_g(v), want, "{v}");
        }
    }

    #[test]
    fn single_point_row() {
        let text = render(&result(vec![Row {
            x: -5.0,
            y: 3.2,
            stderr: 0.01,
        }]));
        assert!(text.contains("\n-5\t3.2\t0.01\n"));
        assert!(text.ends_with('\n'));
        assert!(!text.contains('\r'));
        assert!(text.contains("# config_hash: 0123456789abcdef\n"));
        assert_eq!(parse_rows(&text).unwrap(), vec![(-5.0, 3.2, 0.01)]);
    }

    #[test]
    fn empty_result_is_header_only() {
        let text = render(&result(vec![]));
        assert!(text.lines().all(|l| l.starts_with("# ")));
        assert!(data_section(&text).is_empty());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.tsv");
        write_tsv(&result(vec![]), &p).unwrap();
        assert_eq!(std::fs::read_to_string(p).unwrap(), text);
    }
}

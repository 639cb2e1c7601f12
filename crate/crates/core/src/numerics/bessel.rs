//! Modified Bessel functions of the first kind, orders 0 and 1, in the
//! scaled forms this crate needs: the ratio `I1(x)/I0(x)` and `ln I0(x)`.
//!
//! Concentrations reach `~2n·SNR`, far past where `I0` overflows, so neither
//! function ever evaluates `I0` or `I1` unscaled at large argument.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Below this argument the power series is used, above it the asymptotic
/// (Hankel) expansion. Both branches agree to ~1e-13 here.
const SERIES_LIMIT: f64 = 15.0;

fn check_arg(x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "Bessel argument must be finite and non-negative, got {x}"
        )))
    }
}

/// Power series for `(I0(x), I1(x))`. Only used for `x < SERIES_LIMIT`.
fn series(x: f64) -> (f64, f64) {
    let q = 0.25 * x * x;
    let mut t0 = 1.0;
    let mut t1 = 0.5 * x;
    let mut i0 = t0;
    let mut i1 = t1;
    let mut k = 1.0;
    loop {
        t0 *= q / (k * k);
        t1 *= q / (k * (k + 1.0));
        i0 += t0;
        i1 += t1;
        if t0 <= 1e-17 * i0 && t1 <= 1e-17 * i1 {
            break;
        }
        k += 1.0;
    }
    (i0, i1)
}

/// `I0(x) - 1` by its power series, accurate at tiny `x`.
fn series_i0_tail(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut t = 1.0;
    let mut acc = 0.0;
    let mut k = 1.0;
    loop {
        t *= q / (k * k);
        acc += t;
        if t <= 1e-17 * (1.0 + acc) {
            return acc;
        }
        k += 1.0;
    }
}

/// Sum of the asymptotic series `sqrt(2πx) e^{-x} I_ν(x)` for ν = 0 and 1.
fn asymptotic_sums(x: f64) -> (f64, f64) {
    let sum = |mu: f64| {
        let mut term = 1.0_f64;
        let mut acc = 1.0_f64;
        let mut k = 1.0_f64;
        loop {
            let odd = 2.0 * k - 1.0;
            let next = -term * (mu - odd * odd) / (8.0 * k * x);
            if next.abs() >= term.abs() || next.abs() <= 1e-17 * acc.abs() {
                if next.abs() < term.abs() {
                    acc += next;
                }
                break;
            }
            acc += next;
            term = next;
            k += 1.0;
        }
        acc
    };
    // mu = 4ν²
    (sum(0.0), sum(4.0))
}

/// `I1(x)/I0(x)` for `x ≥ 0`; the circular-mean magnitude of a von Mises
/// density with concentration `x`. Strictly increasing, in `[0, 1)`.
pub fn bessel_ratio(x: f64) -> Result<f64> {
    check_arg(x)?;
    Ok(bessel_ratio_unchecked(x))
}

#[inline]
pub(crate) fn bessel_ratio_unchecked(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if x < SERIES_LIMIT {
        let (i0, i1) = series(x);
        i1 / i0
    } else {
        let (s0, s1) = asymptotic_sums(x);
        s1 / s0
    }
}

/// `ln I0(x)` for `x ≥ 0`, finite for every finite argument.
pub fn log_i0(x: f64) -> Result<f64> {
    check_arg(x)?;
    Ok(log_i0_unchecked(x))
}

#[inline]
pub(crate) fn log_i0_unchecked(x: f64) -> f64 {
    if x < SERIES_LIMIT {
        series_i0_tail(x).ln_1p()
    } else {
        let (s0, _) = asymptotic_sums(x);
        x - 0.5 * (2.0 * PI * x).ln() + s0.ln()
    }
}

const LUT_SIZE: usize = 1 << 16;
const LUT_MIN: f64 = 1e-3;
const LUT_MAX: f64 = 1e8;

/// Table-driven `I1/I0`: 2^16 samples on a log-spaced grid over
/// `[1e-3, 1e8]`, linearly interpolated in `ln x`. Outside the grid the
/// leading terms of the small- and large-argument expansions are used.
#[derive(Debug, Clone)]
pub struct BesselRatioLut {
    table: Vec<f64>,
    log_min: f64,
    inv_step: f64,
}

impl BesselRatioLut {
    pub fn new() -> Self {
        let log_min = LUT_MIN.ln();
        let step = (LUT_MAX.ln() - log_min) / (LUT_SIZE - 1) as f64;
        let table = (0..LUT_SIZE)
            .map(|i| bessel_ratio_unchecked((log_min + step * i as f64).exp()))
            .collect();
        Self {
            table,
            log_min,
            inv_step: 1.0 / step,
        }
    }

    /// Process-wide shared table.
    pub fn shared() -> &'static BesselRatioLut {
        static LUT: OnceLock<BesselRatioLut> = OnceLock::new();
        LUT.get_or_init(BesselRatioLut::new)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        if x < LUT_MIN {
            // x/2 - x^3/16
            return x * (0.5 - x * x / 16.0);
        }
        if x >= LUT_MAX {
            return 1.0 - 0.5 / x - 0.125 / (x * x);
        }
        let pos = (x.ln() - self.log_min) * self.inv_step;
        let idx = (pos as usize).min(LUT_SIZE - 2);
        let frac = pos - idx as f64;
        self.table[idx] + frac * (self.table[idx + 1] - self.table[idx])
    }
}

impl Default for BesselRatioLut {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Trapezoid quadrature of `I_ν(x) e^{-x} = (1/π)∫_0^π e^{x(cos t - 1)} cos(νt) dt`.
    /// Periodic integrand, so the rule converges exponentially.
    fn scaled_i_quadrature(nu: f64, x: f64) -> f64 {
        let m = 200_000;
        let h = PI / m as f64;
        let f = |t: f64| (x * (t.cos() - 1.0)).exp() * (nu * t).cos();
        let mut acc = 0.5 * (f(0.0) + f(PI));
        for i in 1..m {
            acc += f(i as f64 * h);
        }
        acc * h / PI
    }

    // Reference values from 40-digit arbitrary-precision evaluation.
    const REFERENCE: &[(f64, f64, f64)] = &[
        (1e-8, 4.9999999999999999375e-9, 2.4999999999999999844e-17),
        (0.5, 0.24249961258080194535, 0.061549719185481303941),
        (2.0, 0.69777465796400798201, 0.82399354148295628293),
        (5.0, 0.89338313704408522159, 3.3046817758225334338),
        (10.0, 0.94859982595484595897, 7.9429720831186955545),
        (14.99, 0.96604649870018840049, 12.726008529137319003),
        (15.0, 0.96606956398650812477, 12.735669109476906261),
        (15.01, 0.96609259792033553684, 12.745329920312540877),
        (20.0, 0.9746705078898071259, 17.589610428244274291),
        (50.0, 0.98994896737849775259, 47.127575501871804584),
        (100.0, 0.99498737300516876559, 96.779732689942583717),
        (700.0, 0.99928545881842609327, 695.80569999844344908),
        (1000.0, 0.9994998748748042802, 995.62730888986946467),
        (1e4, 0.99994999874987498046, 9994.475903781432301),
        (1e6, 0.99999949999987499987, 999992.17330631281325),
        (1e8, 0.9999999949999999875, 99999989.870721096069),
    ];

    #[test]
    fn ratio_and_log_match_reference() {
        for &(x, r, l) in REFERENCE {
            let got_r = bessel_ratio(x).unwrap();
            let got_l = log_i0(x).unwrap();
            assert!(((got_r - r) / r).abs() <= 1e-10, "ratio at {x}: {got_r} vs {r}");
            assert!(((got_l - l) / l).abs() <= 1e-10, "log_i0 at {x}: {got_l} vs {l}");
        }
    }

    #[test]
    fn ratio_matches_quadrature() {
        for &x in &[0.3, 2.0, 7.5, 14.0, 16.0, 40.0, 300.0, 5000.0] {
            let q = scaled_i_quadrature(1.0, x) / scaled_i_quadrature(0.0, x);
            let r = bessel_ratio(x).unwrap();
            assert!(((r - q) / q).abs() < 1e-10, "x={x}: {r} vs {q}");
        }
    }

    #[test]
    fn documented_values() {
        assert_eq!(bessel_ratio(0.0).unwrap(), 0.0);
        assert_eq!(log_i0(0.0).unwrap(), 0.0);
        assert!((bessel_ratio(2.0).unwrap() - 0.697775).abs() < 1e-5);
        assert!((log_i0(2.0).unwrap() - 0.823994).abs() < 1e-5);
        // asymptotic oracle 1 - 1/(2x) - 1/(8x^2)
        let x = 1000.0;
        let asym = 1.0 - 1.0 / (2.0 * x) - 1.0 / (8.0 * x * x);
        assert!((bessel_ratio(x).unwrap() - asym).abs() < 1e-9);
        // direct I0(700) overflows nothing here, but compare to the expansion
        let x = 700.0;
        let asym = x - 0.5 * (2.0 * PI * x).ln() + (1.0 + 1.0 / (8.0 * x) + 9.0 / (128.0 * x * x)).ln();
        assert!((log_i0(x).unwrap() - asym).abs() < 1e-9);
    }

    #[test]
    fn branches_agree_at_switchover() {
        let x = SERIES_LIMIT;
        let (i0, i1) = series(x);
        let (s0, s1) = asymptotic_sums(x);
        assert!(((i1 / i0) - (s1 / s0)).abs() < 1e-11);
        let log_series = i0.ln();
        let log_asym = x - 0.5 * (2.0 * PI * x).ln() + s0.ln();
        assert!((log_series - log_asym).abs() / log_series < 1e-11);
    }

    #[test]
    fn monotone_and_bounded() {
        let mut prev = -1.0;
        let mut x = 1e-6;
        while x < 1e9 {
            let r = bessel_ratio(x).unwrap();
            assert!(r > prev && r < 1.0, "x={x}");
            prev = r;
            x *= 1.05;
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(bessel_ratio(-1.0).is_err());
        assert!(bessel_ratio(f64::NAN).is_err());
        assert!(log_i0(f64::INFINITY).is_err());
    }

    #[test]
    fn lut_tracks_direct_evaluation() {
        let lut = BesselRatioLut::shared();
        let mut x = 1e-5;
        while x < 1e9 {
            let d = bessel_ratio_unchecked(x);
            assert!((lut.eval(x) - d).abs() < 1e-7 * d.max(1e-3), "x={x}");
            x *= 1.37;
        }
    }
}

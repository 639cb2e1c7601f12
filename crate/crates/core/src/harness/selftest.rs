//! Fast oracle checks run by `phasetrack selftest`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::channel::{IsiChannel, IsiKind};
use crate::framing::waterfill;
use crate::numerics::{bessel_ratio, dft, idft, log_i0};
use crate::spa::{extrinsic, run_spa, SpaConfig, SpaInputs};
use crate::OpCounts;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, err: f64, tol: f64) -> Check {
    Check {
        name,
        passed: err <= tol,
        detail: format!("error {err:.3e} (tolerance {tol:.0e})"),
    }
}

/// `e^{-x} I_ν(x)` by the trapezoid rule on the periodic integrand.
fn scaled_bessel(nu: f64, x: f64) -> f64 {
    let m = 20_000;
    let h = PI / m as f64;
    let f = |t: f64| (x * (t.cos() - 1.0)).exp() * (nu * t).cos();
    let inner: f64 = (1..m).map(|i| f(i as f64 * h)).sum();
    (0.5 * (f(0.0) + f(PI)) + inner) * h / PI
}

fn bessel_checks() -> Vec<Check> {
    let xs = [0.5, 2.0, 10.0, 40.0, 300.0];
    let mut ratio_err: f64 = 0.0;
    let mut log_err: f64 = 0.0;
    for x in xs {
        let (s0, s1) = (scaled_bessel(0.0, x), scaled_bessel(1.0, x));
        let r = bessel_ratio(x).unwrap_or(f64::NAN);
        ratio_err = ratio_err.max(((r - s1 / s0) / (s1 / s0)).abs());
        let l = log_i0(x).unwrap_or(f64::NAN);
        let oracle = x + s0.ln();
        log_err = log_err.max(((l - oracle) / oracle).abs());
    }
    vec![
        check("bessel ratio vs quadrature", ratio_err, 1e-10),
        check("log I0 vs quadrature", log_err, 1e-10),
    ]
}

fn extrinsic_checks() -> Vec<Check> {
    let s = [Complex64::new(0.4, -0.1), Complex64::new(-0.3, 0.2)];
    let z_hat = [Complex64::new(0.9, 0.3), Complex64::new(-1.1, 0.05)];
    let (nz, nu) = (0.7, 0.05);
    let mut err: f64 = 0.0;
    match extrinsic(&z_hat, nu, &s, nz) {
        Ok(out) => {
            let nwp = out.nu_w_prime.unwrap_or(f64::NAN);
            // product of prior CN(s, nz) and extrinsic CN(y', nwp)
            let back_nu = nz * nwp / (nz + nwp);
            err = err.max((back_nu - nu).abs() / nu);
            for i in 0..2 {
                let mean = (out.y_prime[i] * nz + s[i] * nwp) / (nz + nwp);
                err = err.max((mean - z_hat[i]).norm());
            }
        }
        Err(_) => err = f64::INFINITY,
    }
    let nw = 0.05;
    let nu_limit = nw * nz / (nw + nz);
    let limit = match extrinsic(&z_hat, nu_limit, &s, nz) {
        Ok(out) => (out.nu_w_prime.unwrap_or(f64::NAN) - nw).abs() / nw,
        Err(_) => f64::INFINITY,
    };
    vec![
        check("extrinsic round trip", err, 1e-12),
        check("known-phase variance gives nu_w' = nu_w", limit, 1e-12),
    ]
}

fn channel_checks() -> Vec<Check> {
    let n = 256;
    let x: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new((0.37 * i as f64).sin(), (0.11 * i as f64 * i as f64).cos()))
        .collect();
    let back = idft(&dft(&x));
    let dft_err = x.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);

    let cd_err = IsiChannel::new(IsiKind::ssmf_default(), n)
        .and_then(|ch| ch.equalize(&ch.apply(&x)?))
        .map(|y| x.iter().zip(&y).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
        .unwrap_or(f64::INFINITY);

    let tone = IsiChannel::new(IsiKind::proakis_c(), n)
        .map(|ch| {
            let g = ch.power_gains();
            let max = g.iter().cloned().fold(0.0, f64::max);
            if g[0] < max {
                f64::INFINITY
            } else {
                (g[0].sqrt() - 2.062).abs()
            }
        })
        .unwrap_or(f64::INFINITY);

    let gains = [2.0, 1.0, 0.25, 0.0];
    let wf = waterfill(&gains, 3.0, 0.5)
        .map(|a| (a.powers.iter().sum::<f64>() - 3.0).abs())
        .unwrap_or(f64::INFINITY);

    vec![
        check("DFT round trip", dft_err, 1e-12),
        check("CD equalizer round trip", cd_err, 1e-10),
        check("Proakis-C tone-zero gain is the largest, 2.062", tone, 5e-4),
        check("waterfilling spends the power budget", wf, 1e-12),
    ]
}

fn spa_checks() -> Vec<Check> {
    let n = 128;
    let s = vec![Complex64::new(0.6, 0.0); n];
    let theta = 2.1;
    let y: Vec<Complex64> = s.iter().map(|v| v * Complex64::from_polar(1.0, theta)).collect();
    let err = run_spa(
        &SpaInputs {
            y: &y,
            s: &s,
            nu_z_given_s: 1e-3,
            nu_w: 1e-10,
            nu_delta: 0.0,
        },
        SpaConfig::default(),
        &mut OpCounts::default(),
    )
    .map(|out| {
        out.y_prime
            .iter()
            .zip(&s)
            .map(|(a, b)| (a / b).arg().abs())
            .fold(0.0, f64::max)
    })
    .unwrap_or(f64::INFINITY);
    vec![check("SPA removes a static phase without noise", err, 1e-9)]
}

/// Runs every check.
pub fn run_selftest() -> Vec<Check> {
    let mut out = bessel_checks();
    out.extend(extrinsic_checks());
    out.extend(channel_checks());
    out.extend(spa_checks());
    out
}

//! von Mises (Tikhonov) messages and the wrapped Gaussian increment law.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::bessel::{bessel_ratio_unchecked, log_i0_unchecked};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Wraps an angle into `[-π, π)`.
#[inline]
pub fn wrap_phase(theta: f64) -> f64 {
    let t = (theta + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can round up to exactly 2π
    if t >= PI {
        t - 2.0 * PI
    } else {
        t
    }
}

/// A von Mises density `T(θ; κ) ∝ exp(Re{κ e^{-jθ}})`, parameterized by a
/// single complex concentration. `|κ|` is the concentration and `arg κ` the
/// circular mean direction; `κ = 0` is the uniform density.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VonMisesMessage {
    pub kappa: Complex64,
}

impl VonMisesMessage {
    pub const UNIFORM: VonMisesMessage = VonMisesMessage {
        kappa: Complex64::new(0.0, 0.0),
    };

    pub fn new(kappa: Complex64) -> Self {
        Self { kappa }
    }

    pub fn from_polar(concentration: f64, mean: f64) -> Self {
        Self {
            kappa: Complex64::from_polar(concentration, mean),
        }
    }

    /// `E[e^{jθ}]` under the density.
    pub fn circular_mean(&self) -> Complex64 {
        let mag = self.kappa.norm();
        if mag == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            self.kappa * (bessel_ratio_unchecked(mag) / mag)
        }
    }

    pub fn is_finite(&self) -> bool {
        self.kappa.re.is_finite() && self.kappa.im.is_finite()
    }
}

impl std::ops::Mul for VonMisesMessage {
    type Output = VonMisesMessage;

    /// Product of densities (unnormalized): concentrations add.
    fn mul(self, rhs: Self) -> Self {
        VonMisesMessage::new(self.kappa + rhs.kappa)
    }
}

/// `T(θ; κ) = exp(Re{κ e^{-jθ}}) / (2π I0(|κ|))`, evaluated in the log
/// domain so large concentrations do not overflow.
pub fn von_mises_pdf(theta: f64, msg: VonMisesMessage) -> f64 {
    let k = msg.kappa;
    let re = k.re * theta.cos() + k.im * theta.sin();
    (re - log_i0_unchecked(k.norm()) - LN_2PI).exp()
}

/// Circular mean of the (normalized) product of two von Mises densities.
pub fn circular_mean_of_product(a: VonMisesMessage, b: VonMisesMessage) -> Complex64 {
    (a * b).circular_mean()
}

/// Parameters of a zero-mean Gaussian wrapped onto the circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrappedGaussianParams {
    /// Variance of the unwrapped Gaussian, rad².
    pub variance: f64,
}

impl WrappedGaussianParams {
    pub fn new(variance: f64) -> Self {
        Self { variance }
    }

    /// `E[e^{jΔ}] = e^{-v/2}`.
    pub fn circular_mean(&self) -> f64 {
        (-0.5 * self.variance).exp()
    }
}

/// Density of `Δ mod 2π` for `Δ ~ N(0, variance)`, at `delta`.
///
/// For small variance the image sum `Σ_k N(δ + 2πk)` is truncated once the
/// next image falls below 1e-16 of the peak; for large variance the Fourier
/// series `(1 + 2Σ e^{-m²v/2} cos mδ)/2π` is summed instead. Either way the
/// number of terms adapts to the variance.
pub fn wrapped_gaussian_pdf(delta: f64, params: WrappedGaussianParams) -> f64 {
    let v = params.variance;
    let d = wrap_phase(delta);
    if v == 0.0 {
        return if d == 0.0 { f64::INFINITY } else { 0.0 };
    }
    if v <= 4.0 {
        let sigma = v.sqrt();
        // smallest K with (2K+1)π beyond ~8.6σ
        let reach = sigma * (2.0 * 16.0 * std::f64::consts::LN_10).sqrt();
        let wraps = (((reach / PI) - 1.0) / 2.0).ceil().max(1.0) as i64;
        let norm = 1.0 / (2.0 * PI * v).sqrt();
        (-wraps..=wraps)
            .map(|k| {
                let x = d + 2.0 * PI * k as f64;
                (-x * x / (2.0 * v)).exp()
            })
            .sum::<f64>()
            * norm
    } else {
        let mut acc = 1.0;
        let mut m = 1.0_f64;
        loop {
            let w = (-0.5 * m * m * v).exp();
            if w < 1e-17 {
                break;
            }
            acc += 2.0 * w * (m * d).cos();
            m += 1.0;
        }
        acc / (2.0 * PI)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::bessel::bessel_ratio;

    fn trapezoid_circle(f: impl Fn(f64) -> f64, m: usize) -> f64 {
        // periodic integrand: the plain Riemann sum is the trapezoid rule
        let h = 2.0 * PI / m as f64;
        (0..m).map(|i| f(-PI + i as f64 * h)).sum::<f64>() * h
    }

    #[test]
    fn uniform_and_mode_values() {
        let p = von_mises_pdf(1.234, VonMisesMessage::UNIFORM);
        assert!((p - 1.0 / (2.0 * PI)).abs() < 1e-15);
        let msg = VonMisesMessage::from_polar(2.0, 0.7);
        let i0_2 = 2.279_585_302_336_067_3;
        let expected = 2.0_f64.exp() / (2.0 * PI * i0_2);
        assert!((von_mises_pdf(0.7, msg) - expected).abs() < 1e-12);
    }

    #[test]
    fn pdf_normalizes() {
        for &k in &[0.0, 1.0, 10.0, 1e4] {
            let msg = VonMisesMessage::from_polar(k, 1.0);
            let total = trapezoid_circle(|t| von_mises_pdf(t, msg), 1_000_000);
            assert!((total - 1.0).abs() < 1e-6, "kappa={k}: {total}");
        }
        let msg = VonMisesMessage::new(Complex64::from_polar(5.0, 1.0));
        let total = trapezoid_circle(|t| von_mises_pdf(t, msg), 1_000_000);
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn product_mean_examples() {
        let zero = VonMisesMessage::UNIFORM;
        assert_eq!(circular_mean_of_product(zero, zero), Complex64::new(0.0, 0.0));
        let a = VonMisesMessage::new(Complex64::new(3.0, 0.0));
        let b = VonMisesMessage::new(Complex64::new(-3.0, 0.0));
        assert_eq!(circular_mean_of_product(a, b).norm(), 0.0);
        let a = VonMisesMessage::from_polar(2.0, 0.3);
        let b = VonMisesMessage::from_polar(1.0, 0.3);
        let got = circular_mean_of_product(a, b);
        let want = Complex64::from_polar(bessel_ratio(3.0).unwrap(), 0.3);
        assert!((got - want).norm() < 1e-14);
    }

    #[test]
    fn product_mean_matches_quadrature() {
        let cases = [
            (Complex64::from_polar(2.0, 0.3), Complex64::from_polar(1.0, 0.3)),
            (Complex64::from_polar(12.0, -2.0), Complex64::from_polar(30.0, 1.1)),
            (Complex64::from_polar(50.0, 3.0), Complex64::from_polar(0.5, -0.4)),
            (Complex64::from_polar(0.2, 0.0), Complex64::from_polar(0.1, 2.0)),
        ];
        for (ka, kb) in cases {
            let (a, b) = (VonMisesMessage::new(ka), VonMisesMessage::new(kb));
            let m = 400_000;
            let h = 2.0 * PI / m as f64;
            let mut num = Complex64::new(0.0, 0.0);
            let mut den = 0.0;
            let shift = (ka + kb).norm();
            for i in 0..m {
                let t = -PI + i as f64 * h;
                let e = Complex64::from_polar(1.0, -t);
                let w = ((ka * e).re + (kb * e).re - shift).exp();
                num += w * Complex64::from_polar(1.0, t);
                den += w;
            }
            let quad = num / den;
            let got = circular_mean_of_product(a, b);
            assert!((got - quad).norm() < 1e-8, "{got} vs {quad}");
        }
    }

    #[test]
    fn wrapped_gaussian_small_variance() {
        let p = WrappedGaussianParams::new(5e-3);
        let direct = (-0.01_f64 / (2.0 * 5e-3)).exp() / (2.0 * PI * 5e-3).sqrt();
        let seven: f64 = (-7..=7)
            .map(|k| {
                let x = 0.1 + 2.0 * PI * k as f64;
                (-x * x / 1e-2).exp() / (2.0 * PI * 5e-3).sqrt()
            })
            .sum();
        assert!((wrapped_gaussian_pdf(0.1, p) - seven).abs() < 1e-12);
        assert!((wrapped_gaussian_pdf(0.1, p) - direct).abs() < 1e-12);
        assert!(wrapped_gaussian_pdf(PI - 1e-9, WrappedGaussianParams::new(1e-8)) < 1e-300);
        assert_eq!(wrapped_gaussian_pdf(PI, WrappedGaussianParams::new(0.0)), 0.0);
    }

    #[test]
    fn wrapped_gaussian_normalizes_across_variances() {
        for &v in &[1e-4, 5e-3, 0.3, 2.0, 3.9, 4.1, 30.0, 1e3] {
            let p = WrappedGaussianParams::new(v);
            let total = trapezoid_circle(|d| wrapped_gaussian_pdf(d, p), 200_000);
            assert!((total - 1.0).abs() < 1e-9, "v={v}: {total}");
        }
        // both branches agree near the switch
        for &d in &[0.0, 0.5, 2.0, -3.0] {
            let direct: f64 = (-40..=40)
                .map(|k| {
                    let x = d + 2.0 * PI * k as f64;
                    (-x * x / 8.2).exp() / (2.0 * PI * 4.1_f64).sqrt()
                })
                .sum();
            let got = wrapped_gaussian_pdf(d, WrappedGaussianParams::new(4.1));
            assert!((got - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn wrap_range() {
        for &t in &[-10.0, -PI, PI, 3.0 * PI, 0.0, 7.0] {
            let w = wrap_phase(t);
            assert!((-PI..PI).contains(&w), "{t} -> {w}");
            assert!(((t - w) / (2.0 * PI)).fract().abs() < 1e-12 || ((t - w) / (2.0 * PI)).fract().abs() > 1.0 - 1e-12);
        }
    }
}

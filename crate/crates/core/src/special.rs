//! Error function kernels and Gaussian interval masses.

use std::f64::consts::SQRT_2;

/// Coefficients of the quartic rational approximation
/// `erf(x) ~ 1 - 1 / (1 + a1 x + a2 x^2 + a3 x^3 + a4 x^4)^4`, `x > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErfApprox {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
}

impl ErfApprox {
    pub const STANDARD: ErfApprox = ErfApprox { a1: 0.278393, a2: 0.230389, a3: 0.000972, a4: 0.078108 };

    pub fn eval(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        let t = x.abs();
        let poly = 1.0 + t * (self.a1 + t * (self.a2 + t * (self.a3 + t * self.a4)));
        let v = 1.0 - 1.0 / poly.powi(4);
        v.copysign(x)
    }
}

/// Polynomial erf approximation; maximum absolute error about `5e-4`.
pub fn erf_approx(x: f64) -> f64 {
    ErfApprox::STANDARD.eval(x)
}

/// Full double-precision erf.
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Which erf implementation backs a Gaussian mass computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErfKind {
    Exact,
    Approx,
}

/// Mass of `N(mu, sigma)` on `[a, b]`:
/// `(erf((b - mu) / (sigma sqrt 2)) - erf((a - mu) / (sigma sqrt 2))) / 2`.
///
/// With [`ErfKind::Exact`] intervals entirely in one tail are evaluated
/// through `erfc` so that far-tail masses keep their relative precision.
pub fn gaussian_mass(mu: f64, sigma: f64, a: f64, b: f64, kind: ErfKind) -> f64 {
    debug_assert!(sigma > 0.0);
    if b <= a {
        return 0.0;
    }
    let lo = (a - mu) / (sigma * SQRT_2);
    let hi = (b - mu) / (sigma * SQRT_2);
    let mass = match kind {
        ErfKind::Approx => 0.5 * (erf_approx(hi) - erf_approx(lo)),
        ErfKind::Exact if lo >= 0.0 => 0.5 * (erfc(lo) - erfc(hi)),
        ErfKind::Exact if hi <= 0.0 => 0.5 * (erfc(-hi) - erfc(-lo)),
        ErfKind::Exact => 0.5 * (erf(hi) - erf(lo)),
    };
    mass.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Maclaurin series `erf(x) = 2/sqrt(pi) sum (-1)^n x^(2n+1) / (n! (2n+1))`,
    /// accurate to ~1e-9 on [0, 4] in double precision.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        for n in 1..200 {
            term *= -x * x / n as f64;
            let contrib = term / (2 * n + 1) as f64;
            sum += contrib;
            if contrib.abs() < 1e-18 {
                break;
            }
        }
        sum * 2.0 / std::f64::consts::PI.sqrt()
    }

    #[test]
    fn erf_zero_and_one() {
        assert_eq!(erf_approx(0.0), 0.0);
        assert!((erf_approx(1.0) - 0.8427).abs() < 5e-4);
        assert!((erf_series(1.0) - 0.842_700_792_949_715).abs() < 1e-12);
    }

    #[test]
    fn erf_approx_is_odd() {
        for k in 0..400 {
            let x = k as f64 * 0.01;
            assert_eq!(erf_approx(-x), -erf_approx(x));
        }
    }

    #[test]
    fn erf_approx_max_error() {
        let worst = (0..=4000)
            .map(|k| {
                let x = k as f64 * 1e-3;
                (erf_approx(x) - erf_series(x)).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst <= 5e-4, "max error {worst}");
    }

    #[test]
    fn libm_erf_agrees_with_series() {
        for k in 0..=400 {
            let x = k as f64 * 0.01;
            assert!((erf(x) - erf_series(x)).abs() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn mass_examples() {
        for kind in [ErfKind::Exact, ErfKind::Approx] {
            assert_eq!(gaussian_mass(0.3, 2.0, 1.0, 1.0, kind), 0.0);
            let one_sigma = gaussian_mass(1.5, 0.7, 1.5 - 0.7, 1.5 + 0.7, kind);
            assert!((one_sigma - 0.682_689_492).abs() < 1e-3);
            let total = gaussian_mass(-2.0, 0.3, -2.0 - 8.0 * 0.3, -2.0 + 8.0 * 0.3, kind);
            assert!((total - 1.0).abs() < 1e-6);
        }
        let one_sigma = gaussian_mass(0.0, 1.0, -1.0, 1.0, ErfKind::Exact);
        assert!((one_sigma - erf_series(1.0 / SQRT_2)).abs() < 1e-12);
    }

    #[test]
    fn far_tail_keeps_relative_precision() {
        let m = gaussian_mass(0.0, 1.0, 10.0, 11.0, ErfKind::Exact);
        // P(10 < Z < 11) ~ 7.6e-24
        assert!(m > 7.0e-24 && m < 8.0e-24, "{m}");
    }

    #[test]
    fn monotone_and_additive() {
        for kind in [ErfKind::Exact, ErfKind::Approx] {
            let (mu, sigma) = (0.4, 0.9);
            let mut prev = 0.0;
            for k in 0..100 {
                let b = -3.0 + 0.07 * k as f64;
                let m = gaussian_mass(mu, sigma, -3.0, b, kind);
                assert!(m >= prev - 1e-15);
                prev = m;
            }
            let mut prev = 1.0;
            for k in 0..100 {
                let a = -4.0 + 0.07 * k as f64;
                let m = gaussian_mass(mu, sigma, a, 4.0, kind);
                assert!(m <= prev + 1e-15);
                prev = m;
            }
            for (a, b, c) in [(-3.0, -0.2, 2.5), (-1.0, 0.4, 0.41), (0.5, 1.0, 3.0)] {
                let whole = gaussian_mass(mu, sigma, a, c, kind);
                let parts = gaussian_mass(mu, sigma, a, b, kind) + gaussian_mass(mu, sigma, b, c, kind);
                assert!((whole - parts).abs() < 2e-3);
            }
        }
    }
}

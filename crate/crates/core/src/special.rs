//! Gamma-function helpers and the extension constants.

use statrs::function::gamma as sg;

/// Γ(x) for real x away from the poles (Lanczos approximation with reflection).
pub fn gamma(x: f64) -> f64 {
    sg::gamma(x)
}

/// Lower incomplete gamma γ(a, x) = Γ(a)·P(a, x), for a > 0 and x ≥ 0.
pub fn lower_incomplete_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    sg::gamma(a) * sg::gamma_lr(a, x)
}

/// Constants relating the extension's Neumann trace to L^s.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ExtensionConstants {
    /// −∂_{z+}U(x,0) = d_s L^s u in the z variable.
    pub d_s: f64,
    /// The same constant in the y variable, −lim y^{1−2s}∂_y U = c_s L^s u.
    pub c_s: f64,
}

impl ExtensionConstants {
    pub fn new(s: f64) -> Self {
        Self { d_s: d_s(s), c_s: c_s(s) }
    }
}

/// d_s = s^{2s} Γ(1−s) / Γ(1+s).
pub fn d_s(s: f64) -> f64 {
    s.powf(2.0 * s) * gamma(1.0 - s) / gamma(1.0 + s)
}

/// c_s = Γ(1−s) / (4^{s−1/2} Γ(s)).
pub fn c_s(s: f64) -> f64 {
    gamma(1.0 - s) / (4f64.powf(s - 0.5) * gamma(s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_known_values() {
        let pi = std::f64::consts::PI;
        assert!((gamma(0.5) - pi.sqrt()).abs() < 1e-14);
        assert!((gamma(1.5) - 0.5 * pi.sqrt()).abs() < 1e-14);
        // Γ(−1/2) = −2√π
        assert!((gamma(-0.5) + 2.0 * pi.sqrt()).abs() / (2.0 * pi.sqrt()) < 1e-12);
        assert!((gamma(5.0) - 24.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_negative_fraction_has_negative_sign() {
        for k in 1..20 {
            let s = k as f64 / 20.0;
            let g = gamma(-s);
            assert!(g < 0.0);
            // Γ(1−s) = −s Γ(−s)
            let rel = (gamma(1.0 - s) + s * g).abs() / gamma(1.0 - s);
            assert!(rel < 1e-12, "s={s} rel={rel}");
        }
    }

    #[test]
    fn d_half_is_one() {
        assert!((d_s(0.5) - 1.0).abs() < 1e-14);
        assert!((c_s(0.5) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn incomplete_gamma_limits() {
        assert_eq!(lower_incomplete_gamma(0.3, 0.0), 0.0);
        let full = lower_incomplete_gamma(0.3, 200.0);
        assert!((full - gamma(0.3)).abs() < 1e-12);
        // small x: γ(a,x) ≈ x^a / a
        let x: f64 = 1e-8;
        let approx = x.powf(0.3) / 0.3;
        assert!((lower_incomplete_gamma(0.3, x) - approx).abs() / approx < 1e-6);
    }
}

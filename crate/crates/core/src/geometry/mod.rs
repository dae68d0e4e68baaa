//! Monge–Ampère geometry of the separable potential
//!
//! ```text
//!   Φ(x, z) = φ(x) + h(z),   φ(x) = ½|x|²,   h(z) = s²/(1−s) |z|^{1/s}
//! ```
//!
//! Distances, measures, sections and cubes are all closed form except the
//! z-section endpoints, which are bracketed roots of δ_h(z₀, ·) = R.

mod constants;
mod cover;
mod measure;
mod sections;

pub use constants::{
    calibrate_inclusion_c0, derived_constants, estimate_engulfing_theta, estimate_quasi_k, guti_inclusion_check, ordering_check, q_s,
    reverse_doubling_check, ConstantEstimate, DoublingCheck, GeometryConstants, InclusionCheck, OrderingVerdict,
    Sampler,
};
pub use cover::{cube_cover, CubeCover};
pub use measure::{mu_h_interval, mu_phi_box, section_measure};
pub use sections::{cube, section_h, AxisBox, CubeDesc, SectionDesc};

use crate::error::{FracError, Result};
use serde::{Deserialize, Serialize};

/// Magnitudes below this are treated as z = 0 where h'' is singular.
pub const Z_FLOOR: f64 = 1e-300;

/// Default relative tolerance for section endpoints.
pub const TOL_ROOT: f64 = 1e-12;

/// The fractional order s, strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SParam(f64);

impl SParam {
    pub fn new(s: f64) -> Result<Self> {
        if s.is_finite() && s > 0.0 && s < 1.0 {
            Ok(SParam(s))
        } else {
            Err(FracError::InvalidParameter(format!("s must lie strictly inside (0, 1), got {s}")))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for SParam {
    type Error = FracError;
    fn try_from(s: f64) -> Result<Self> {
        SParam::new(s)
    }
}

impl From<SParam> for f64 {
    fn from(s: SParam) -> f64 {
        s.0
    }
}

/// A point (x, z) of R^{n+1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointXZ {
    pub x: Vec<f64>,
    pub z: f64,
}

impl PointXZ {
    pub fn new(x: Vec<f64>, z: f64) -> Self {
        Self { x, z }
    }

    /// Dimension n of the x part.
    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// The mirror image (x, −z).
    pub fn mirrored(&self) -> Self {
        Self { x: self.x.clone(), z: -self.z }
    }

    pub fn is_finite(&self) -> bool {
        self.z.is_finite() && self.x.iter().all(|v| v.is_finite())
    }
}

/// Which convex potential a distance or section refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Potential {
    /// φ(x) = ½|x|², acting on the x part only.
    Phi,
    /// h(z), acting on the z part only.
    H,
    /// Φ = φ + h on R^{n+1}.
    Full,
}

/// h(z) = s²/(1−s) |z|^{1/s}.
#[inline]
pub fn h(s: SParam, z: f64) -> f64 {
    let s = s.get();
    s * s / (1.0 - s) * z.abs().powf(1.0 / s)
}

/// h'(z) = s/(1−s) |z|^{1/s−2} z.
#[inline]
pub fn h_prime(s: SParam, z: f64) -> f64 {
    let s = s.get();
    if z == 0.0 {
        return 0.0;
    }
    s / (1.0 - s) * z.abs().powf(1.0 / s - 1.0) * z.signum()
}

/// h''(z) = |z|^{1/s−2}; an error at z = 0 when s > 1/2.
#[inline]
pub fn h_second(s: SParam, z: f64) -> Result<f64> {
    let e = 1.0 / s.get() - 2.0;
    if z.abs() < Z_FLOOR {
        if e < 0.0 {
            return Err(FracError::SingularPoint { s: s.get(), z });
        }
        return Ok(if e == 0.0 { 1.0 } else { 0.0 });
    }
    Ok(z.abs().powf(e))
}

/// Inverse of h': the z with h'(z) = w.
#[inline]
pub fn h_prime_inverse(s: SParam, w: f64) -> f64 {
    let s = s.get();
    if w == 0.0 {
        return 0.0;
    }
    (w.abs() * (1.0 - s) / s).powf(s / (1.0 - s)) * w.signum()
}

/// δ_φ(x₀, x) = ½|x − x₀|².
#[inline]
pub fn delta_phi(x0: &[f64], x: &[f64]) -> f64 {
    debug_assert_eq!(x0.len(), x.len());
    0.5 * x0.iter().zip(x).map(|(a, b)| (b - a) * (b - a)).sum::<f64>()
}

/// δ_h(z₀, z) = h(z) − h(z₀) − h'(z₀)(z − z₀).
#[inline]
pub fn delta_h(s: SParam, z0: f64, z: f64) -> f64 {
    if z0 != 0.0 && z.signum() == z0.signum() && z != 0.0 {
        // With z = z₀(1+u): δ_h = h(z₀)·((1+u)^p − 1 − p·u), p = 1/s,
        // evaluated without the cancellation of the direct formula.
        let p = 1.0 / s.get();
        let u = (z - z0) / z0;
        let bracket = if u.abs() < 1e-3 {
            let mut term = 1.0;
            let mut acc = 0.0;
            for k in 1..=8 {
                term *= (p - (k as f64 - 1.0)) / k as f64 * u;
                if k >= 2 {
                    acc += term;
                }
            }
            acc
        } else {
            (p * u.ln_1p()).exp_m1() - p * u
        };
        return (h(s, z0) * bracket).max(0.0);
    }
    let d = h(s, z) - h(s, z0) - h_prime(s, z0) * (z - z0);
    d.max(0.0)
}

/// δ_Φ((x₀,z₀),(x,z)) = δ_φ(x₀,x) + δ_h(z₀,z).
#[inline]
pub fn delta_full(s: SParam, p0: &PointXZ, p: &PointXZ) -> f64 {
    delta_phi(&p0.x, &p.x) + delta_h(s, p0.z, p.z)
}

/// Monge–Ampère quasi-distance for the chosen potential.
pub fn delta(s: SParam, potential: Potential, p0: &PointXZ, p1: &PointXZ) -> Result<f64> {
    if p0.n() != p1.n() {
        return Err(FracError::InvalidParameter(format!(
            "point dimensions differ: {} vs {}",
            p0.n(),
            p1.n()
        )));
    }
    if !p0.is_finite() || !p1.is_finite() {
        return Err(FracError::InvalidParameter("non-finite point coordinate".into()));
    }
    Ok(match potential {
        Potential::Phi => delta_phi(&p0.x, &p1.x),
        Potential::H => delta_h(s, p0.z, p1.z),
        Potential::Full => delta_full(s, p0, p1),
    })
}

/// ∇Φ(x, z) = (x, h'(z)).
pub fn grad_full(s: SParam, p: &PointXZ) -> PointXZ {
    PointXZ { x: p.x.clone(), z: h_prime(s, p.z) }
}

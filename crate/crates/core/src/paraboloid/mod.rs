//! Monge–Ampère paraboloids P = −a δ_Φ(vertex, ·) + c and sliding on grids
//!
//! Sliding is an exact argmin over grid nodes, so every touching statement is
//! a finite comparison that can be rechecked node by node.

mod abp;
mod contact;
mod field;

pub use abp::{abp_experiment, hessian_pinch_constant, supersolution_check, AbpOptions, AbpReport, SuperCheck, VertexSet};
pub use contact::{contact_a_r, contact_set, BvCase, ContactAaR, ContactSet};
pub use field::{SearchSet, XZField, XZGrid};

use crate::error::{FracError, Result};
use crate::geometry::{delta_full, h, h_prime, h_prime_inverse, PointXZ, SParam};
use crate::semigroup::GridFunction;
use serde::{Deserialize, Serialize};

/// Default absolute touching tolerance relative to 1 + max|U|.
pub const TOL_TOUCH: f64 = 1e-10;

/// P(x, z) = −a δ_Φ(vertex, (x, z)) + c.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paraboloid {
    pub s: SParam,
    pub a: f64,
    pub vertex: PointXZ,
    pub c: f64,
}

impl Paraboloid {
    pub fn new(s: SParam, a: f64, vertex: PointXZ, c: f64) -> Result<Self> {
        if a == 0.0 || !a.is_finite() || !c.is_finite() || !vertex.is_finite() {
            return Err(FracError::InvalidParameter(format!("paraboloid needs finite a != 0 and finite data, got a={a}")));
        }
        Ok(Self { s, a, vertex, c })
    }

    pub fn eval(&self, p: &PointXZ) -> f64 {
        -self.a * delta_full(self.s, &self.vertex, p) + self.c
    }

    /// ∂_z P(x, 0) = a h'(z_v), the same for every x.
    pub fn vertex_slope(&self, _x: &[f64]) -> f64 {
        self.a * h_prime(self.s, self.vertex.z)
    }

    /// ∇P = −a(x − x_v, h'(z) − h'(z_v)).
    pub fn grad(&self, p: &PointXZ) -> PointXZ {
        PointXZ {
            x: p.x.iter().zip(&self.vertex.x).map(|(x, xv)| -self.a * (x - xv)).collect(),
            z: -self.a * (h_prime(self.s, p.z) - h_prime(self.s, self.vertex.z)),
        }
    }
}

/// A paraboloid resting on U at a grid node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TouchResult {
    pub paraboloid: Paraboloid,
    pub contact: usize,
    pub point: PointXZ,
    /// min over the search nodes of U − P for a > 0, or of P − U for a < 0.
    pub gap_min: f64,
}

fn slide(field: &XZField, s: SParam, a: f64, vertex: &PointXZ, nodes: &[usize]) -> Result<TouchResult> {
    if nodes.is_empty() {
        return Err(FracError::Precondition("search set contains no grid nodes".into()));
    }
    if vertex.n() != field.grid.n() {
        return Err(FracError::InvalidParameter("vertex dimension differs from the grid".into()));
    }
    // a > 0: c = min(U + aδ); a < 0: c = max(U + aδ). Ties keep the smallest index.
    let sign = a.signum();
    let mut best = (f64::INFINITY, usize::MAX);
    for &i in nodes {
        let v = sign * (field.values[i] + a * delta_full(s, vertex, &field.grid.point(i)));
        if v < best.0 {
            best = (v, i);
        }
    }
    let c = sign * best.0;
    let paraboloid = Paraboloid::new(s, a, vertex.clone(), c)?;
    let gap_min = nodes
        .iter()
        .map(|&i| sign * (field.values[i] - paraboloid.eval(&field.grid.point(i))))
        .fold(f64::INFINITY, f64::min);
    Ok(TouchResult { point: field.grid.point(best.1), paraboloid, contact: best.1, gap_min })
}

/// Lifts P of opening a > 0 with the given vertex until it first touches U on
/// the search nodes.
pub fn slide_from_below(field: &XZField, s: SParam, a: f64, vertex: &PointXZ, search: &SearchSet) -> Result<TouchResult> {
    if !(a > 0.0) {
        return Err(FracError::InvalidParameter(format!("sliding from below needs a > 0, got {a}")));
    }
    slide(field, s, a, vertex, &search.nodes(&field.grid, s)?)
}

/// Lowers P of opening a < 0 until it first touches U from above.
pub fn slide_from_above(field: &XZField, s: SParam, a: f64, vertex: &PointXZ, search: &SearchSet) -> Result<TouchResult> {
    if !(a < 0.0) {
        return Err(FracError::InvalidParameter(format!("sliding from above needs a < 0, got {a}")));
    }
    slide(field, s, a, vertex, &search.nodes(&field.grid, s)?)
}

/// The paraboloid of opening ã touching at the same point:
/// P̃ = −ã δ_Φ(p₀, ·) + a⟨∇Φ(v) − ∇Φ(p₀), · − p₀⟩ + U(p₀), whose vertex solves
/// ∇Φ(ṽ) = ∇Φ(p₀) + (a/ã)(∇Φ(v) − ∇Φ(p₀)). The result is rechecked on every
/// search node.
pub fn reopen(field: &XZField, t: &TouchResult, a_tilde: f64, search: &SearchSet, tol_touch: f64) -> Result<TouchResult> {
    let p = &t.paraboloid;
    let s = p.s;
    if !(a_tilde.signum() == p.a.signum() && a_tilde.abs() >= p.a.abs()) {
        return Err(FracError::InvalidParameter(format!("reopen needs |a~| >= |a| with the same sign, got {a_tilde} vs {}", p.a)));
    }
    let p0 = &t.point;
    let ratio = p.a / a_tilde;
    let x: Vec<f64> = p0.x.iter().zip(&p.vertex.x).map(|(x0, xv)| x0 + ratio * (xv - x0)).collect();
    let w0 = h_prime(s, p0.z);
    let w = w0 + ratio * (h_prime(s, p.vertex.z) - w0);
    let vertex = PointXZ::new(x, h_prime_inverse(s, w));
    let u0 = field.values[t.contact];
    let c = u0 + a_tilde * delta_full(s, &vertex, p0);
    let paraboloid = Paraboloid::new(s, a_tilde, vertex, c)?;
    let nodes = search.nodes(&field.grid, s)?;
    let sign = p.a.signum();
    let tol = tol_touch * (1.0 + field.max_abs());
    let mut gap_min = f64::INFINITY;
    for &i in &nodes {
        let gap = sign * (field.values[i] - paraboloid.eval(&field.grid.point(i)));
        if gap < -tol {
            return Err(FracError::Experiment(format!("reopened paraboloid crosses U at node {i} by {:e}", -gap)));
        }
        gap_min = gap_min.min(gap);
    }
    Ok(TouchResult { paraboloid, contact: t.contact, point: p0.clone(), gap_min })
}

/// z₀ > 0 forces z_v ≥ 0 and z₀ < 0 forces z_v ≤ 0 for symmetric U.
pub fn vertex_sign_check(t: &TouchResult) -> bool {
    let (z0, zv) = (t.point.z, t.paraboloid.vertex.z);
    !(z0 > 0.0 && zv < 0.0 || z0 < 0.0 && zv > 0.0)
}

/// Verdict of the vertex bound at a contact on {z = 0}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeumannVertexCheck {
    /// False when the contact is off {z = 0}; the other fields are then zero.
    pub applies: bool,
    pub f_value: f64,
    /// |h'(z_v)|.
    pub slope: f64,
    /// (|f⁻(x₀)| + a·h(z₁)/z₁)/a with z₁ the first positive level.
    pub bound: f64,
    pub holds: bool,
}

/// Checks |h'(z_v)| ≤ |f⁻(x₀)|/a and that f(x₀) > 0 admits no contact.
///
/// With the one-sided Neumann difference over [0, z₁] both statements hold on
/// the grid up to a·h(z₁)/z₁, the defect of P's own difference quotient, which
/// is added to the bound and to the admissible f(x₀).
pub fn neumann_vertex_bound_check(field: &XZField, t: &TouchResult, f: &GridFunction, tol: f64) -> Result<NeumannVertexCheck> {
    if f.grid != field.grid.base {
        return Err(FracError::InvalidParameter("trace data lives on a different grid".into()));
    }
    if t.point.z != 0.0 {
        return Ok(NeumannVertexCheck { applies: false, f_value: 0.0, slope: 0.0, bound: 0.0, holds: true });
    }
    let s = t.paraboloid.s;
    let a = t.paraboloid.a.abs();
    let z1 = field.grid.first_positive_level().ok_or_else(|| FracError::Precondition("grid has no level above z = 0".into()))?;
    let slack = h(s, z1) / z1;
    let f_value = f.values[field.grid.base_node(t.contact)];
    let slope = h_prime(s, t.paraboloid.vertex.z).abs();
    let bound = (f_value.min(0.0).abs() + a * slack) / a;
    let holds = f_value <= a * slack + tol && slope <= bound + tol;
    Ok(NeumannVertexCheck { applies: true, f_value, slope, bound, holds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semigroup::GridSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sp(s: f64) -> SParam {
        SParam::new(s).unwrap()
    }

    fn grid() -> XZGrid {
        let base = GridSpec::line(-1.0, 1.0, 21).unwrap();
        XZGrid::symmetric(&base, (1..=10).map(|j| j as f64 * 0.1).collect()).unwrap()
    }

    #[test]
    fn eval_examples() {
        let p = Paraboloid::new(sp(0.5), 1.0, PointXZ::new(vec![0.0], 0.0), 0.0).unwrap();
        assert_eq!(p.eval(&PointXZ::new(vec![1.0], 1.0)), -1.0);
        assert_eq!(p.eval(&p.vertex.clone()), 0.0);
        let p2 = Paraboloid { a: 2.0, ..p };
        assert_eq!(p2.eval(&PointXZ::new(vec![1.0], 1.0)), -2.0);
    }

    #[test]
    fn vertex_slope_examples() {
        let p = Paraboloid::new(sp(0.5), 2.0, PointXZ::new(vec![0.3], 1.0), 0.0).unwrap();
        assert_eq!(p.vertex_slope(&[0.7]), 2.0);
        let flat = Paraboloid::new(sp(0.3), 2.0, PointXZ::new(vec![0.3], 0.0), 0.0).unwrap();
        assert_eq!(flat.vertex_slope(&[0.0]), 0.0);
        // agrees with the gradient at z = 0
        let q = Paraboloid::new(sp(0.7), -1.5, PointXZ::new(vec![0.1], -0.4), 2.0).unwrap();
        assert!((q.grad(&PointXZ::new(vec![0.9], 0.0)).z - q.vertex_slope(&[0.9])).abs() < 1e-15);
    }

    #[test]
    fn constant_field_touches_at_vertex() {
        let g = grid();
        let f = XZField::from_fn(&g, |_| 5.0);
        let v = g.point(g.index(7, 13));
        let t = slide_from_below(&f, sp(0.4), 3.0, &v, &SearchSet::All).unwrap();
        assert_eq!(t.contact, g.index(7, 13));
        assert_eq!(t.paraboloid.c, 5.0);
        assert_eq!(t.gap_min, 0.0);
    }

    #[test]
    fn distance_field_touches_at_its_center() {
        let g = grid();
        let s = sp(0.6);
        let v0 = g.point(g.index(4, 15));
        let f = XZField::from_fn(&g, |p| delta_full(s, &v0, p));
        let t = slide_from_below(&f, s, 0.7, &v0, &SearchSet::All).unwrap();
        assert_eq!(t.contact, g.index(4, 15));
        assert_eq!(t.paraboloid.c, 0.0);
    }

    #[test]
    fn noisy_field_matches_brute_force() {
        let g = grid();
        let s = sp(0.35);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = XZField::from_fn(&g, |_| 1e-2 * rng.random::<f64>());
        let v = PointXZ::new(vec![0.13], -0.27);
        let t = slide_from_below(&f, s, 0.5, &v, &SearchSet::All).unwrap();
        let scan = (0..g.len())
            .map(|i| (f.values[i] + 0.5 * delta_full(s, &v, &g.point(i)), i))
            .fold((f64::INFINITY, 0), |b, c| if c.0 < b.0 { c } else { b });
        assert_eq!(t.contact, scan.1);
        assert!(t.gap_min.abs() < 1e-15);
        for i in 0..g.len() {
            assert!(t.paraboloid.eval(&g.point(i)) <= f.values[i] + 1e-15);
        }
    }

    #[test]
    fn empty_search_is_an_error() {
        let g = grid();
        let f = XZField::from_fn(&g, |_| 0.0);
        let nodes = SearchSet::Nodes(vec![]);
        assert!(slide_from_below(&f, sp(0.5), 1.0, &g.point(0), &nodes).is_err());
        assert!(slide_from_below(&f, sp(0.5), -1.0, &g.point(0), &SearchSet::All).is_err());
    }

    #[test]
    fn reopen_keeps_contact_and_lowers_paraboloid() {
        let g = grid();
        let s = sp(0.45);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = XZField::from_fn(&g, |p| p.x[0].sin() + 0.3 * p.z * p.z + 0.05 * rng.random::<f64>());
        let v = PointXZ::new(vec![0.2], 0.35);
        let t = slide_from_below(&f, s, 1.0, &v, &SearchSet::All).unwrap();
        let same = reopen(&f, &t, 1.0, &SearchSet::All, TOL_TOUCH).unwrap();
        assert_eq!(same.contact, t.contact);
        assert!((same.paraboloid.c - t.paraboloid.c).abs() < 1e-12);
        for factor in [2.0, 10.0] {
            let r = reopen(&f, &t, factor, &SearchSet::All, TOL_TOUCH).unwrap();
            assert_eq!(r.contact, t.contact);
            for i in 0..g.len() {
                let p = g.point(i);
                assert!(r.paraboloid.eval(&p) <= t.paraboloid.eval(&p) + 1e-12);
                // the vertex form equals the explicit construction
                let p0 = &t.point;
                let lin: f64 = p0.x.iter().zip(&v.x).zip(&p.x).map(|((x0, xv), x)| (xv - x0) * (x - x0)).sum::<f64>()
                    + (h_prime(s, v.z) - h_prime(s, p0.z)) * (p.z - p0.z);
                let explicit = -factor * delta_full(s, p0, &p) + lin + f.values[t.contact];
                assert!((explicit - r.paraboloid.eval(&p)).abs() < 1e-11);
            }
        }
        assert!(reopen(&f, &t, 0.5, &SearchSet::All, TOL_TOUCH).is_err());
    }

    #[test]
    fn sliding_from_above_mirrors_below() {
        let g = grid();
        let s = sp(0.55);
        let f = XZField::from_fn(&g, |p| (2.0 * p.x[0]).cos() * (1.0 - p.z.abs()));
        let neg = XZField { grid: g.clone(), values: f.values.iter().map(|v| -v).collect() };
        let v = PointXZ::new(vec![-0.3], 0.2);
        let up = slide_from_above(&f, s, -2.0, &v, &SearchSet::All).unwrap();
        let down = slide_from_below(&neg, s, 2.0, &v, &SearchSet::All).unwrap();
        assert_eq!(up.contact, down.contact);
        assert_eq!(up.paraboloid.c, -down.paraboloid.c);
    }

    #[test]
    fn vertex_sign_on_symmetric_data() {
        let g = grid();
        let s = sp(0.3);
        let f = XZField::from_fn(&g, |p| (p.x[0] * 3.0).sin() + p.z.abs().sqrt());
        for &zv in &[-0.45, -0.05, 0.0, 0.25, 0.6] {
            for &xv in &[-0.5, 0.1, 0.7] {
                let t = slide_from_below(&f, s, 0.8, &PointXZ::new(vec![xv], zv), &SearchSet::All).unwrap();
                assert!(vertex_sign_check(&t));
            }
        }
        let bad = TouchResult {
            paraboloid: Paraboloid::new(s, 1.0, PointXZ::new(vec![0.0], -0.2), 0.0).unwrap(),
            contact: 0,
            point: PointXZ::new(vec![0.0], 0.3),
            gap_min: 0.0,
        };
        assert!(!vertex_sign_check(&bad));
    }
}

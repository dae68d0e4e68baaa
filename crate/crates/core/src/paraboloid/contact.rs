use super::{slide, XZField};
use crate::error::{FracError, Result};
use crate::geometry::{cube, delta_full, h_prime, h_prime_inverse, CubeDesc, GeometryConstants, PointXZ, SParam};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Contacts of one sliding pass over a vertex list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactSet {
    /// (vertex, contact node) in vertex order.
    pub contacts: Vec<(PointXZ, usize)>,
    /// Distinct contact nodes, ascending.
    pub nodes: Vec<usize>,
    /// μ_Φ of the union of the contact dual cells.
    pub measure_a: f64,
}

/// Slides one paraboloid of opening a per vertex over the search nodes.
pub fn contact_set(field: &XZField, s: SParam, a: f64, vertices: &[PointXZ], search_nodes: &[usize]) -> Result<ContactSet> {
    if !(a > 0.0) {
        return Err(FracError::InvalidParameter(format!("contact sets slide from below, need a > 0, got {a}")));
    }
    let contacts: Vec<(PointXZ, usize)> = vertices
        .par_iter()
        .map(|v| slide(field, s, a, v, search_nodes).map(|t| (v.clone(), t.contact)))
        .collect::<Result<_>>()?;
    let nodes: Vec<usize> = contacts.iter().map(|c| c.1).collect::<BTreeSet<_>>().into_iter().collect();
    let measure_a = nodes.iter().map(|&i| field.grid.cell_measure(s, i)).sum();
    Ok(ContactSet { contacts, nodes, measure_a })
}

/// Which branch of the vertex-set definition applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BvCase {
    /// Center on {z = 0}: B_v = Q̄_{K̂₂R}(x̃, 0).
    CenterOnAxis,
    /// Q̄_{K̂₂R} misses {z = 0}: B_v = Q̄_{K̂₂R}(x̃, z̃).
    AwayFromAxis,
    /// Q̄_{K̂₂R} meets {z = 0} off center: B_v = Q̄_{θK̂₂R}(x̃, 0).
    Recentered,
}

/// A_{a,R}: nodes of Q_{K̂₂R} with U ≤ aR touched from below in Q_{K̂₃R} by
/// a paraboloid of opening a whose vertex lies in B_v.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactAaR {
    pub a: f64,
    pub r: f64,
    pub case: BvCase,
    pub vertex_set: CubeDesc,
    pub points: Vec<usize>,
    /// One admissible vertex per point.
    pub witnesses: Vec<PointXZ>,
}

fn inside_grid(q: &CubeDesc, field: &XZField) -> bool {
    let e = field.grid.extent();
    q.axis_intervals.iter().enumerate().all(|(d, iv)| iv.0 >= e.lo[d] && iv.1 <= e.hi[d])
}

/// Exact grid version of A_{a,R} for n = 1.
///
/// A node p qualifies iff some gradient w = ∇Φ(v), v ∈ B_v, satisfies
/// a⟨w − ∇Φ(p), q − p⟩ ≤ U(q) − U(p) + a δ_Φ(p, q) + tol for every search node q;
/// that is the touching condition for the paraboloid with vertex v. In the
/// gradient plane ∇Φ(B_v) is a rectangle, so feasibility is a polygon clip by
/// one half-plane per search node. With this test A_{a,R} ⊆ A_{Ca,R} holds
/// exactly for C ≥ 1.
pub fn contact_a_r(field: &XZField, s: SParam, a: f64, r: f64, geometry: &GeometryConstants, center: &PointXZ, tol: f64) -> Result<ContactAaR> {
    if field.grid.n() != 1 || center.n() != 1 {
        return Err(FracError::InvalidParameter("the contact set A_{a,R} is implemented for n = 1".into()));
    }
    if !(a > 0.0) || !(r > 0.0) || !(tol >= 0.0) {
        return Err(FracError::InvalidParameter(format!("need a > 0, R > 0, tol >= 0, got a={a}, R={r}, tol={tol}")));
    }
    let q2 = cube(s, center, geometry.k2_hat * r)?;
    let q3 = cube(s, center, geometry.k3_hat * r)?;
    if !inside_grid(&q3, field) || !inside_grid(&q2, field) {
        return Err(FracError::Precondition("cubes Q_{K2 R} and Q_{K3 R} must lie inside the grid".into()));
    }
    let (case, vertex_set) = if center.z == 0.0 {
        (BvCase::CenterOnAxis, q2.clone())
    } else if !q2.meets_z_zero() {
        (BvCase::AwayFromAxis, q2.clone())
    } else {
        let c0 = PointXZ::new(center.x.clone(), 0.0);
        (BvCase::Recentered, cube(s, &c0, geometry.theta * geometry.k2_hat * r)?)
    };
    let g = &field.grid;
    let search: Vec<usize> = (0..g.len()).filter(|&i| q3.contains(&g.point(i))).collect();
    let candidates: Vec<usize> =
        (0..g.len()).filter(|&i| q2.contains(&g.point(i)) && field.values[i] <= a * r).collect();
    let (xi, zi) = (vertex_set.axis_intervals[0], vertex_set.axis_intervals[1]);
    let wbox = [xi.0, xi.1, h_prime(s, zi.0), h_prime(s, zi.1)];
    let pts: Vec<PointXZ> = search.iter().map(|&i| g.point(i)).collect();
    let found: Vec<Option<(usize, PointXZ)>> = candidates
        .par_iter()
        .map(|&p| {
            let pp = g.point(p);
            let (gx, gw) = (pp.x[0], h_prime(s, pp.z));
            // d = w − ∇Φ(p)
            let mut poly = vec![
                (wbox[0] - gx, wbox[2] - gw),
                (wbox[1] - gx, wbox[2] - gw),
                (wbox[1] - gx, wbox[3] - gw),
                (wbox[0] - gx, wbox[3] - gw),
            ];
            for (&q, qp) in search.iter().zip(&pts) {
                if q == p {
                    continue;
                }
                let (ex, ez) = (a * (qp.x[0] - pp.x[0]), a * (qp.z - pp.z));
                let rhs = field.values[q] - field.values[p] + a * delta_full(s, &pp, qp) + tol;
                poly = clip(&poly, ex, ez, rhs);
                if poly.is_empty() {
                    return None;
                }
            }
            let n = poly.len() as f64;
            let (dx, dw) = poly.iter().fold((0.0, 0.0), |acc, v| (acc.0 + v.0 / n, acc.1 + v.1 / n));
            Some((p, PointXZ::new(vec![gx + dx], h_prime_inverse(s, gw + dw))))
        })
        .collect();
    let (points, witnesses) = found.into_iter().flatten().unzip();
    Ok(ContactAaR { a, r, case, vertex_set, points, witnesses })
}

/// Sutherland–Hodgman clip of a convex polygon by e·d ≤ rhs.
fn clip(poly: &[(f64, f64)], ex: f64, ez: f64, rhs: f64) -> Vec<(f64, f64)> {
    let side = |v: &(f64, f64)| ex * v.0 + ez * v.1 - rhs;
    if poly.iter().all(|v| side(v) <= 0.0) {
        return poly.to_vec();
    }
    let mut out = Vec::with_capacity(poly.len() + 1);
    for k in 0..poly.len() {
        let cur = poly[k];
        let nxt = poly[(k + 1) % poly.len()];
        let (fc, fn_) = (side(&cur), side(&nxt));
        if fc <= 0.0 {
            out.push(cur);
        }
        if (fc < 0.0 && fn_ > 0.0) || (fc > 0.0 && fn_ < 0.0) {
            let t = fc / (fc - fn_);
            out.push((cur.0 + t * (nxt.0 - cur.0), cur.1 + t * (nxt.1 - cur.1)));
        }
    }
    out
}

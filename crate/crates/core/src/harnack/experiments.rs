use super::barrier::Barrier;
use crate::error::{FracError, Result};
use crate::geometry::{cube, delta_full, mu_h_interval, mu_phi_box, q_s, section_h, CubeDesc, GeometryConstants, PointXZ, SParam};
use crate::paraboloid::{contact_a_r, TouchResult, XZField};
use crate::semigroup::{linear_fit, GridFunction};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetachLocation {
    /// The contact already lies in S̄_{γr}.
    ContactInside,
    /// Ring node with a grid neighbour inside S_{γr}.
    InnerLayer,
    /// Ring node with a neighbour beyond S̄_{2r}, or on the grid boundary.
    Outer,
    Bottom,
    Interior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetachmentReport {
    pub ring_nodes: usize,
    pub node: usize,
    pub point: PointXZ,
    pub location: DetachLocation,
    /// U − P at the returned node.
    pub gap: f64,
    pub gap_over_ar: f64,
    /// min over the ring of (U − P) − φ.
    pub min_difference: f64,
    /// ln C from the barrier.
    pub ln_c_bound: f64,
    pub within_bound: bool,
    /// True when the minimizer sits on the outer layer.
    pub flagged: bool,
}

/// Comparison step of the detachment argument on grid nodes: with W = U − P,
/// minimizes W − φ over the closed partial ring of the barrier.
pub fn detachment_experiment(field: &XZField, touch: &TouchResult, barrier: &Barrier) -> Result<DetachmentReport> {
    let s = barrier.spec.s;
    let g = &field.grid;
    if touch.paraboloid.s != s {
        return Err(FracError::InvalidParameter("paraboloid and barrier use different s".into()));
    }
    if !(touch.gap_min >= -1e-10 * (1.0 + field.max_abs())) {
        return Err(FracError::Precondition(format!("P does not touch U from below: min(U - P) = {:e}", touch.gap_min)));
    }
    let (r, gamma) = (barrier.spec.r, barrier.spec.gamma);
    let center = &barrier.spec.center;
    if center.z != 0.0 && touch.point.z != 0.0 && center.z.signum() != touch.point.z.signum() {
        return Err(FracError::Precondition("contact and section center lie on opposite sides of z = 0".into()));
    }
    let a = barrier.a;
    let dist = |i: usize| delta_full(s, center, &g.point(i));
    let same_half = |p: &PointXZ| if barrier.mirrored { p.z <= 0.0 } else { p.z >= 0.0 };
    let w = |i: usize| field.values[i] - touch.paraboloid.eval(&g.point(i));
    let ln_c_bound = barrier.ln_c_bound;
    let bound = |gap: f64| gap <= 0.0 || (gap / (a * r)).ln() <= ln_c_bound + 1e-9 * ln_c_bound.abs().max(1.0);
    let tp = &touch.point;
    if same_half(tp) && delta_full(s, center, tp) <= gamma * r {
        let gap = w(touch.contact);
        return Ok(DetachmentReport {
            ring_nodes: 0,
            node: touch.contact,
            point: tp.clone(),
            location: DetachLocation::ContactInside,
            gap,
            gap_over_ar: gap / (a * r),
            min_difference: f64::NAN,
            ln_c_bound,
            within_bound: bound(gap),
            flagged: false,
        });
    }
    let ring: Vec<usize> = (0..g.len())
        .filter(|&i| {
            let p = g.point(i);
            let d = dist(i);
            same_half(&p) && d >= gamma * r && d <= 2.0 * r
        })
        .collect();
    if ring.is_empty() {
        return Err(FracError::Precondition("the partial ring contains no grid nodes".into()));
    }
    let mut best = (f64::INFINITY, usize::MAX);
    for &i in &ring {
        let p = g.point(i);
        let phi = a * r * barrier.ln_value_over_ar(&p).exp();
        let v = w(i) - phi;
        if v < best.0 {
            best = (v, i);
        }
    }
    let node = best.1;
    let p = g.point(node);
    let nb = g.neighbours(node);
    let location = if g.is_outer(node) || nb.iter().any(|&j| dist(j) > 2.0 * r) {
        DetachLocation::Outer
    } else if nb.iter().any(|&j| dist(j) < gamma * r) {
        DetachLocation::InnerLayer
    } else if p.z == 0.0 {
        DetachLocation::Bottom
    } else {
        DetachLocation::Interior
    };
    let gap = w(node);
    Ok(DetachmentReport {
        ring_nodes: ring.len(),
        node,
        point: p,
        location,
        gap,
        gap_over_ar: gap / (a * r),
        min_difference: best.0,
        ln_c_bound,
        within_bound: bound(gap),
        flagged: location == DetachLocation::Outer,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub a: f64,
    pub c: f64,
    pub r: f64,
    pub big_r: f64,
    /// Nodes of A_{a,R} in Q̄_r.
    pub seed_points: usize,
    /// Nodes of A_{Ca,R} in Q_{ηr}.
    pub hit_points: usize,
    pub measure_hit: f64,
    pub measure_qr: f64,
    pub ratio: f64,
}

fn closed_inside_open(inner: &CubeDesc, outer: &CubeDesc) -> bool {
    inner.axis_intervals.iter().zip(&outer.axis_intervals).all(|(i, o)| i.0 > o.0 && i.1 < o.1)
}

/// μ_Φ(A_{Ca,R} ∩ Q_{ηr}(x₀, z₀)) / μ_Φ(Q_r(x₀, z₀)) with node measures from
/// dual cells.
#[allow(clippy::too_many_arguments)]
pub fn localization_experiment(
    field: &XZField,
    s: SParam,
    a: f64,
    c: f64,
    big_r: f64,
    big_center: &PointXZ,
    r: f64,
    center: &PointXZ,
    geometry: &GeometryConstants,
    tol: f64,
) -> Result<LocalizationReport> {
    if !(c >= 1.0) {
        return Err(FracError::InvalidParameter(format!("opening multiplier C must be >= 1, got {c}")));
    }
    let qr = cube(s, center, r)?;
    let q_big = cube(s, big_center, big_r)?;
    if !closed_inside_open(&qr, &q_big) {
        return Err(FracError::Precondition("closed Q_r is not inside Q_R".into()));
    }
    let g = &field.grid;
    let base = contact_a_r(field, s, a, big_r, geometry, big_center, tol)?;
    let seed_points = base.points.iter().filter(|&&i| qr.contains_closed(&g.point(i))).count();
    if seed_points == 0 {
        return Err(FracError::Precondition("closed Q_r does not meet A_{a,R}".into()));
    }
    let wide = contact_a_r(field, s, c * a, big_r, geometry, big_center, tol)?;
    let q_eta = cube(s, center, geometry.eta * r)?;
    let hits: Vec<usize> = wide.points.iter().copied().filter(|&i| q_eta.contains(&g.point(i))).collect();
    let measure_hit: f64 = hits.iter().map(|&i| g.cell_measure(s, i)).sum();
    let measure_qr = mu_phi_box(s, &qr.to_box())?;
    Ok(LocalizationReport {
        a,
        c,
        r,
        big_r,
        seed_points,
        hit_points: hits.len(),
        measure_hit,
        measure_qr,
        ratio: measure_hit / measure_qr,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveringReport {
    /// μ(U \ D_k) for k = 0, 1, ….
    pub measures: Vec<f64>,
    pub universe_measure: f64,
    /// exp of the least-squares slope of ln m_k.
    pub rate: Option<f64>,
    /// 1 − max m_{k+1}/m_k.
    pub c_observed: Option<f64>,
    pub planted_c: f64,
    /// m_k ≤ (1 − c)^k μ(U) for every k.
    pub bound_holds: bool,
}

/// Measures the complements of nested node sets D_0 ⊆ D_1 ⊆ … in a universe.
pub fn covering_iteration(cell_measures: &[f64], universe: &[usize], sets: &[Vec<usize>], c: f64) -> Result<CoveringReport> {
    if !(c >= 0.0 && c < 1.0) {
        return Err(FracError::InvalidParameter(format!("c must lie in [0, 1), got {c}")));
    }
    if sets.is_empty() {
        return Err(FracError::InvalidParameter("covering iteration needs at least one set".into()));
    }
    let len = cell_measures.len();
    if universe.iter().chain(sets.iter().flatten()).any(|&i| i >= len) {
        return Err(FracError::InvalidParameter("node index outside the measure table".into()));
    }
    let mut in_u = vec![false; len];
    for &i in universe {
        in_u[i] = true;
    }
    let mut prev: Option<Vec<bool>> = None;
    let mut measures = Vec::with_capacity(sets.len());
    for (k, d) in sets.iter().enumerate() {
        let mut mask = vec![false; len];
        for &i in d {
            mask[i] = true;
        }
        if let Some(p) = &prev {
            if p.iter().zip(&mask).any(|(&was, &is)| was && !is) {
                return Err(FracError::InvalidParameter(format!("sets are not nested at k = {k}")));
            }
        }
        measures.push((0..len).filter(|&i| in_u[i] && !mask[i]).map(|i| cell_measures[i]).sum::<f64>());
        prev = Some(mask);
    }
    let universe_measure: f64 = {
        let mut seen = vec![false; len];
        universe.iter().filter(|&&i| !std::mem::replace(&mut seen[i], true)).map(|&i| cell_measures[i]).sum()
    };
    let positive: Vec<(f64, f64)> =
        measures.iter().enumerate().filter(|(_, m)| **m > 0.0).map(|(k, m)| (k as f64, m.ln())).collect();
    let rate = if positive.len() >= 2 {
        let (ks, ls): (Vec<f64>, Vec<f64>) = positive.into_iter().unzip();
        Some(linear_fit(&ks, &ls).0.exp())
    } else {
        None
    };
    let c_observed = measures
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .fold(None, |acc: Option<f64>, q| Some(acc.map_or(q, |m| m.max(q))))
        .map(|q| 1.0 - q);
    let bound_holds =
        measures.iter().enumerate().all(|(k, m)| *m <= (1.0 - c).powi(k as i32) * universe_measure * (1.0 + 1e-12) + 1e-300);
    Ok(CoveringReport { measures, universe_measure, rate, c_observed, planted_c: c, bound_holds })
}

/// Nested sublevel sets D_k = {U ≤ t₀ M^k} ∩ universe.
pub fn sublevel_ladder(field: &XZField, universe: &[usize], t0: f64, m: f64, count: usize) -> Vec<Vec<usize>> {
    (0..count)
        .map(|k| {
            let t = t0 * m.powi(k as i32);
            universe.iter().copied().filter(|&i| field.values[i] <= t).collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedField {
    pub w: XZField,
    pub denominator: f64,
    /// μ_h(S_{K̂₃R}(z̃)).
    pub mu_h_section: f64,
}

/// W_ε = aR·U / (2K₀U(x̃, z̃) + ‖f‖R/μ_h(S_{K̂₃R}(z̃)) + ε).
#[allow(clippy::too_many_arguments)]
pub fn normalize_w_eps(
    field: &XZField,
    s: SParam,
    f_norm: f64,
    a: f64,
    r: f64,
    center_node: usize,
    geometry: &GeometryConstants,
    eps: f64,
) -> Result<NormalizedField> {
    if center_node >= field.values.len() {
        return Err(FracError::InvalidParameter("center node outside the grid".into()));
    }
    if !(a > 0.0 && r > 0.0 && eps > 0.0 && f_norm >= 0.0) {
        return Err(FracError::InvalidParameter("need a, R, eps > 0 and ||f|| >= 0".into()));
    }
    let zc = field.grid.point(center_node).z;
    let (lo, hi) = section_h(s, zc, geometry.k3_hat * r)?;
    let mu_h_section = mu_h_interval(s, lo, hi)?;
    let denominator = 2.0 * geometry.k0 * field.values[center_node] + f_norm * r / mu_h_section + eps;
    if !(denominator > 0.0) {
        return Err(FracError::Precondition("normalization denominator is not positive".into()));
    }
    let k = a * r / denominator;
    let w = XZField { grid: field.grid.clone(), values: field.values.iter().map(|v| k * v).collect() };
    Ok(NormalizedField { w, denominator, mu_h_section })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorbedRhs {
    pub v: XZField,
    /// g = f + ‖f‖ on every base node.
    pub g: Vec<f64>,
    pub f_norm: f64,
    /// ‖f‖ |S_{K̂₁R}(0)|.
    pub shift: f64,
    /// V − U ≥ 0 at every node of the closed cube.
    pub nonnegative_on_cube: bool,
}

/// V = U − ‖f‖|z| + ‖f‖|S_{K̂₁R}(0)| with R the cube radius and ‖f‖ the
/// supremum over the cube's x-range.
pub fn absorb_neumann_rhs(field: &XZField, s: SParam, f: &GridFunction, q: &CubeDesc, k1_hat: f64) -> Result<AbsorbedRhs> {
    if !q.meets_z_zero() {
        return Err(FracError::Precondition("cube does not meet z = 0".into()));
    }
    if f.grid != field.grid.base {
        return Err(FracError::InvalidParameter("Neumann data lives on a different base grid".into()));
    }
    if !(k1_hat > 0.0) {
        return Err(FracError::InvalidParameter(format!("K1 must be positive, got {k1_hat}")));
    }
    let base = &f.grid;
    let f_norm = (0..base.len())
        .filter(|&i| base.coords(i).iter().enumerate().all(|(d, v)| *v >= q.axis_intervals[d].0 && *v <= q.axis_intervals[d].1))
        .map(|i| f.values[i].abs())
        .fold(0.0, f64::max);
    let len = 2.0 * q_s(s) * (k1_hat * q.radius).powf(s.get());
    let shift = f_norm * len;
    let g = &field.grid;
    let values: Vec<f64> =
        (0..g.len()).map(|i| field.values[i] - f_norm * g.z[g.level_of(i)].abs() + shift).collect();
    let nonnegative_on_cube = (0..g.len())
        .filter(|&i| q.contains_closed(&g.point(i)))
        .all(|i| values[i] - field.values[i] >= 0.0);
    Ok(AbsorbedRhs {
        v: XZField { grid: g.clone(), values },
        g: f.values.iter().map(|v| v + f_norm).collect(),
        f_norm,
        shift,
        nonnegative_on_cube,
    })
}

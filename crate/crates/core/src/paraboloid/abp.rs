use super::{contact_set, vertex_sign_check, Paraboloid, TouchResult, XZField, TOL_TOUCH};
use crate::error::{FracError, Result};
use crate::geometry::{h, h_prime, h_prime_inverse, mu_h_interval, mu_phi_box, CubeDesc, SParam};
use crate::semigroup::{DiscreteOperator, GridFunction};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

/// Vertices of the sliding paraboloids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum VertexSet {
    /// Grid nodes of a closed cube; μ_Φ(B) is the exact cube measure.
    Cube(CubeDesc),
    /// Explicit nodes; μ_Φ(B) is the sum of their dual cells.
    Nodes(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbpOptions {
    /// Q_R; paraboloids rest on nodes of the open cube.
    pub search: CubeDesc,
    /// Hessian pinch constant C in D²U ≤ C a D²Φ.
    pub pinch: f64,
    /// Supersolution tolerance; `None` uses 1e-8 (1 + max|U|).
    pub tol_super: Option<f64>,
    pub tol_touch: f64,
}

impl AbpOptions {
    pub fn new(search: CubeDesc, pinch: f64) -> Self {
        Self { search, pinch, tol_super: None, tol_touch: TOL_TOUCH }
    }
}

/// C = 2(nΛ + 1)/(λ + 1).
pub fn hessian_pinch_constant(n: usize, lambda: f64, cap: f64) -> f64 {
    2.0 * (n as f64 * cap + 1.0) / (lambda + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuperCheck {
    /// max of a^{ij}D_ij U + |z|^{2−1/s}D_zz U over interior nodes off z = 0.
    pub max_residual: f64,
    /// min of −(U(z₁) − U(0))/z₁ − f over interior x nodes.
    pub min_neumann_margin: f64,
    pub tol: f64,
    pub passes: bool,
}

fn d_zz(z: &[f64], j: usize, um: f64, u: f64, up: f64) -> f64 {
    let (hm, hp) = (z[j] - z[j - 1], z[j + 1] - z[j]);
    2.0 / (hm + hp) * ((up - u) / hp - (u - um) / hm)
}

/// Discrete supersolution test against the operator's x part, with the
/// same nonuniform z difference the extension solver uses.
pub fn supersolution_check(field: &XZField, op: &DiscreteOperator, s: SParam, f: &GridFunction, tol: f64) -> Result<SuperCheck> {
    let g = &field.grid;
    if op.grid != g.base || f.grid != g.base {
        return Err(FracError::InvalidParameter("operator, trace and field grids differ".into()));
    }
    let nb = g.base.len();
    for j in 0..g.z.len() {
        if (0..nb).any(|k| g.base.is_boundary(k) && field.at(j, k) != 0.0) {
            return Err(FracError::Precondition("supersolution check needs zero lateral boundary values".into()));
        }
    }
    let interior = g.base.interior_nodes();
    let e = 2.0 - 1.0 / s.get();
    let mut max_residual = f64::NEG_INFINITY;
    for j in 1..g.z.len() - 1 {
        if g.z[j] == 0.0 {
            continue;
        }
        let lev: Vec<f64> = interior.iter().map(|&k| field.at(j, k)).collect();
        let lu = op.apply_interior(&lev);
        let w = g.z[j].abs().powf(e);
        for (m, &k) in interior.iter().enumerate() {
            let uzz = d_zz(&g.z, j, field.at(j - 1, k), field.at(j, k), field.at(j + 1, k));
            max_residual = max_residual.max(-lu[m] + w * uzz);
        }
    }
    let mut min_neumann_margin = f64::INFINITY;
    if let Some(c) = g.zero_level() {
        if c + 1 < g.z.len() {
            let z1 = g.z[c + 1];
            for &k in &interior {
                let d = -(field.at(c + 1, k) - field.at(c, k)) / z1;
                min_neumann_margin = min_neumann_margin.min(d - f.values[k]);
            }
        }
    }
    let passes = max_residual <= tol && min_neumann_margin >= -tol;
    Ok(SuperCheck { max_residual, min_neumann_margin, tol, passes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbpReport {
    pub s: f64,
    pub a: f64,
    pub n_vertices: usize,
    pub n_contacts: usize,
    pub mu_a: f64,
    pub mu_b: f64,
    pub ratio: f64,
    /// 1 − μ_Φ(B₀)/μ_Φ(B) with B₀ = B ∩ {|h'(z)| ≤ ‖f⁻‖/a}.
    pub eps0: f64,
    pub pinch_checked: usize,
    pub pinch_violations: usize,
    /// z = 0 contacts where f exceeds the discrete slack.
    pub neumann_violations: usize,
    pub sign_violations: usize,
    pub super_check: SuperCheck,
    pub contacts: Vec<usize>,
}

/// Slides one paraboloid per vertex of B against a supersolution (a > 0) or
/// a subsolution (a < 0, mirrored by U ↦ −U, f ↦ −f) and compares μ_Φ(A)
/// with μ_Φ(B).
pub fn abp_experiment(
    field: &XZField,
    op: &DiscreteOperator,
    s: SParam,
    vertices: &VertexSet,
    a: f64,
    f: &GridFunction,
    opts: &AbpOptions,
) -> Result<AbpReport> {
    if a == 0.0 || !a.is_finite() {
        return Err(FracError::InvalidParameter(format!("opening must be finite and nonzero, got {a}")));
    }
    let (u, f, abs_a) = if a > 0.0 { (field.clone(), f.clone(), a) } else { (field.negated(), f.scaled(-1.0), -a) };
    let g = &u.grid;
    let tol = opts.tol_super.unwrap_or(1e-8 * (1.0 + u.max_abs()));
    let super_check = supersolution_check(&u, op, s, &f, tol)?;
    if !super_check.passes {
        return Err(FracError::Precondition(format!(
            "not a discrete supersolution: residual {:e}, Neumann margin {:e}, tol {:e}",
            super_check.max_residual, super_check.min_neumann_margin, tol
        )));
    }
    let f_minus = f.values.iter().fold(0.0f64, |m, v| m.max(-v));
    let zcap = h_prime_inverse(s, f_minus / abs_a);
    let (vnodes, mu_b, mu_b0) = match vertices {
        VertexSet::Cube(q) => {
            let nodes: Vec<usize> = (0..g.len()).filter(|&i| q.contains_closed(&g.point(i))).collect();
            let bx = q.to_box();
            let mu_b = mu_phi_box(s, &bx)?;
            let (za, zb) = bx.z_interval();
            let (lo, hi) = (za.max(-zcap), zb.min(zcap));
            let vol: f64 = (0..bx.n()).map(|d| bx.hi[d] - bx.lo[d]).product();
            let mu_b0 = if lo < hi { vol * mu_h_interval(s, lo, hi)? } else { 0.0 };
            (nodes, mu_b, mu_b0)
        }
        VertexSet::Nodes(v) => {
            let mut nodes = v.clone();
            nodes.sort_unstable();
            nodes.dedup();
            if let Some(&bad) = nodes.iter().find(|&&i| i >= g.len()) {
                return Err(FracError::InvalidParameter(format!("vertex node {bad} is outside the grid")));
            }
            let mu_b = nodes.iter().map(|&i| g.cell_measure(s, i)).sum();
            let mu_b0 = nodes.iter().filter(|&&i| h_prime(s, g.z[g.level_of(i)]).abs() <= f_minus / abs_a).map(|&i| g.cell_measure(s, i)).sum();
            (nodes, mu_b, mu_b0)
        }
    };
    if vnodes.is_empty() || !(mu_b > 0.0) {
        return Err(FracError::Precondition("vertex set B has no grid nodes or zero measure".into()));
    }
    let mut mask = vec![false; g.len()];
    let search: Vec<usize> = (0..g.len()).filter(|&i| opts.search.contains(&g.point(i))).collect();
    for &i in &search {
        mask[i] = true;
    }
    let pts: Vec<_> = vnodes.iter().map(|&i| g.point(i)).collect();
    let cs = contact_set(&u, s, abs_a, &pts, &search)?;
    let escaped: Vec<usize> = cs.nodes.iter().copied().filter(|&i| g.is_outer(i) || g.neighbours(i).iter().any(|&q| !mask[q])).collect();
    if !escaped.is_empty() {
        let p = g.point(escaped[0]);
        return Err(FracError::Experiment(format!(
            "{} contact nodes reach the boundary of Q_R, first at x={:?}, z={}; increase a",
            escaped.len(),
            p.x,
            p.z
        )));
    }
    let slack = g.first_positive_level().map(|z1| h(s, z1) / z1).unwrap_or(0.0);
    let mut neumann_violations = 0;
    let mut sign_violations = 0;
    for (v, c) in &cs.contacts {
        let p = g.point(*c);
        if p.z == 0.0 && f.values[g.base_node(*c)] > abs_a * slack + opts.tol_touch {
            neumann_violations += 1;
        }
        let t = TouchResult { paraboloid: Paraboloid::new(s, abs_a, v.clone(), 0.0)?, contact: *c, point: p, gap_min: 0.0 };
        if !vertex_sign_check(&t) {
            sign_violations += 1;
        }
    }
    let (pinch_checked, pinch_violations) = hessian_pinch(&u, s, abs_a, opts.pinch, &cs.nodes);
    Ok(AbpReport {
        s: s.get(),
        a,
        n_vertices: vnodes.len(),
        n_contacts: cs.nodes.len(),
        mu_a: cs.measure_a,
        mu_b,
        ratio: cs.measure_a / mu_b,
        eps0: 1.0 - mu_b0 / mu_b,
        pinch_checked,
        pinch_violations,
        neumann_violations,
        sign_violations,
        super_check,
        contacts: cs.nodes,
    })
}

/// Counts contacts where C a D²Φ − D²U has a negative eigenvalue, with D²U
/// from central differences (nonuniform in z). Nodes on z = 0 or the outer
/// faces are skipped.
fn hessian_pinch(u: &XZField, s: SParam, a: f64, c: f64, nodes: &[usize]) -> (usize, usize) {
    let g = &u.grid;
    let n = g.n();
    let mut checked = 0;
    let mut violations = 0;
    for &i in nodes {
        let j = g.level_of(i);
        if g.is_outer(i) || g.z[j] == 0.0 {
            continue;
        }
        let k = g.base_node(i);
        let multi = g.base.multi(k);
        let shift = |d: usize, off: isize, jj: usize| {
            let mut m = multi.clone();
            m[d] = (m[d] as isize + off) as usize;
            u.at(jj, g.base.flat(&m))
        };
        let (hm, hp) = (g.z[j] - g.z[j - 1], g.z[j + 1] - g.z[j]);
        let mut hess = DMatrix::<f64>::zeros(n + 1, n + 1);
        for d in 0..n {
            let hx = g.base.axes[d].spacing();
            hess[(d, d)] = (shift(d, 1, j) - 2.0 * u.values[i] + shift(d, -1, j)) / (hx * hx);
            let dz = |off| (shift(d, off, j + 1) - shift(d, off, j - 1)) / (hm + hp);
            let xz = (dz(1) - dz(-1)) / (2.0 * hx);
            hess[(d, n)] = xz;
            hess[(n, d)] = xz;
            for e in d + 1..n {
                let hy = g.base.axes[e].spacing();
                let at = |oa: isize, ob: isize| {
                    let mut m = multi.clone();
                    m[d] = (m[d] as isize + oa) as usize;
                    m[e] = (m[e] as isize + ob) as usize;
                    u.at(j, g.base.flat(&m))
                };
                let v = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * hx * hy);
                hess[(d, e)] = v;
                hess[(e, d)] = v;
            }
        }
        hess[(n, n)] = d_zz(&g.z, j, u.at(j - 1, k), u.values[i], u.at(j + 1, k));
        let mut m = -hess.clone();
        for d in 0..n {
            m[(d, d)] += c * a;
        }
        m[(n, n)] += c * a * g.z[j].abs().powf(1.0 / s.get() - 2.0);
        let scale = m.abs().max() + hess.abs().max();
        let min_eig = SymmetricEigen::new(m).eigenvalues.min();
        checked += 1;
        if min_eig < -1e-8 * scale {
            violations += 1;
        }
    }
    (checked, violations)
}

#[cfg(test)]
mod tests {
    use super::super::XZGrid;
    use super::*;
    use crate::extension::{even_reflection, extend_via_pde, BottomCondition, ExtensionGrid};
    use crate::geometry::{cube, PointXZ};
    use crate::semigroup::{assemble_l, CoeffField, GridSpec, MixedStencil};

    fn supersolution(s: SParam) -> (XZField, DiscreteOperator, GridFunction) {
        let base = GridSpec::line(0.0, 1.0, 33).unwrap();
        let coeffs = CoeffField::identity(&base);
        let op = assemble_l(&base, &coeffs, MixedStencil::Standard).unwrap();
        let zg = ExtensionGrid::new(&base, 2.0, 40, 2.0).unwrap();
        let f = GridFunction::from_fn(&base, |x| if x[0] > 0.0 && x[0] < 1.0 { 1.0 + (3.0 * x[0]).sin() } else { 0.0 });
        let src = vec![0.5; base.len() * zg.levels()];
        let ext = extend_via_pde(&op, s, &zg, &BottomCondition::Neumann(f.clone()), Some(&src)).unwrap();
        (XZField::from_reflected(&even_reflection(&ext)).unwrap(), op, f)
    }

    #[test]
    fn pinch_constant_formula() {
        assert_eq!(hessian_pinch_constant(1, 1.0, 1.0), 2.0);
        assert_eq!(hessian_pinch_constant(2, 0.5, 2.0), 2.0 * 5.0 / 1.5);
    }

    #[test]
    fn constant_field_single_vertex() {
        let s = SParam::new(0.5).unwrap();
        let base = GridSpec::line(0.0, 1.0, 11).unwrap();
        let g = XZGrid::symmetric(&base, (1..=10).map(|j| j as f64 * 0.1).collect()).unwrap();
        let coeffs = CoeffField::identity(&base);
        let op = assemble_l(&base, &coeffs, MixedStencil::Standard).unwrap();
        let u = XZField::from_fn(&g, |_| 0.0);
        let v = g.index(15, 5);
        let f = GridFunction::zeros(&base);
        let q = cube(s, &PointXZ::new(vec![0.5], 0.5), 0.08).unwrap();
        let r = abp_experiment(&u, &op, s, &VertexSet::Nodes(vec![v]), 1.0, &f, &AbpOptions::new(q, 2.0)).unwrap();
        assert_eq!(r.contacts, vec![v]);
        assert!((r.ratio - 1.0).abs() < 1e-15);
    }

    #[test]
    fn supersolution_ratio_positive_and_shift_invariant() {
        let s = SParam::new(0.5).unwrap();
        let (u, op, f) = supersolution(s);
        let q = cube(s, &PointXZ::new(vec![0.5], 0.3), 0.06).unwrap();
        let b = cube(s, &PointXZ::new(vec![0.5], 0.3), 0.015).unwrap();
        let opts = AbpOptions::new(q, 2.0);
        let r = abp_experiment(&u, &op, s, &VertexSet::Cube(b.clone()), 40.0, &f, &opts).unwrap();
        assert!(r.ratio > 0.0 && r.n_contacts > 1);
        assert_eq!(r.eps0, 1.0);
        assert_eq!(r.sign_violations, 0);
        assert_eq!(r.neumann_violations, 0);
        // a constant shift is absorbed by the offsets
        let shifted = XZField { grid: u.grid.clone(), values: u.values.iter().map(|v| v + 0.25).collect() };
        let search: Vec<usize> = (0..u.grid.len()).filter(|&i| opts.search.contains(&u.grid.point(i))).collect();
        let verts: Vec<_> = (0..u.grid.len()).map(|i| u.grid.point(i)).filter(|p| b.contains_closed(p)).collect();
        let cs = contact_set(&shifted, s, 40.0, &verts, &search).unwrap();
        assert_eq!(cs.nodes, r.contacts);
    }

    #[test]
    fn subsolution_mirror() {
        let s = SParam::new(0.4).unwrap();
        let (u, op, f) = supersolution(s);
        let neg = u.negated();
        let fneg = f.scaled(-1.0);
        let q = cube(s, &PointXZ::new(vec![0.5], 0.3), 0.06).unwrap();
        let b = cube(s, &PointXZ::new(vec![0.5], 0.3), 0.015).unwrap();
        let opts = AbpOptions::new(q, 2.0);
        let up = abp_experiment(&u, &op, s, &VertexSet::Cube(b.clone()), 40.0, &f, &opts).unwrap();
        let down = abp_experiment(&neg, &op, s, &VertexSet::Cube(b), -40.0, &fneg, &opts).unwrap();
        assert_eq!(up.contacts, down.contacts);
        assert_eq!(up.ratio, down.ratio);
    }

    #[test]
    fn escaping_contacts_and_empty_b_are_errors() {
        let s = SParam::new(0.5).unwrap();
        let (u, op, f) = supersolution(s);
        let q = cube(s, &PointXZ::new(vec![0.5], 0.3), 0.06).unwrap();
        let b = cube(s, &PointXZ::new(vec![0.5], 0.3), 0.015).unwrap();
        let opts = AbpOptions::new(q, 2.0);
        assert!(abp_experiment(&u, &op, s, &VertexSet::Cube(b), 1e-3, &f, &opts).is_err());
        assert!(abp_experiment(&u, &op, s, &VertexSet::Nodes(vec![]), 1.0, &f, &opts).is_err());
    }

    #[test]
    fn non_supersolution_is_rejected() {
        let s = SParam::new(0.5).unwrap();
        let (u, op, f) = supersolution(s);
        let neg = u.negated();
        let q = cube(s, &PointXZ::new(vec![0.5], 0.3), 0.06).unwrap();
        assert!(matches!(
            abp_experiment(&neg, &op, s, &VertexSet::Nodes(vec![0]), 1.0, &f, &AbpOptions::new(q, 2.0)),
            Err(FracError::Precondition(_))
        ));
    }

    #[test]
    fn neumann_bound_holds_at_bottom_contacts() {
        use super::super::{neumann_vertex_bound_check, slide_from_below, SearchSet};
        let s = SParam::new(0.6).unwrap();
        let (u, _, f) = supersolution(s);
        let q = cube(s, &PointXZ::new(vec![0.5], 0.0), 0.05).unwrap();
        let mut bottom = 0;
        for &zv in &[-0.05, -0.01, 0.0, 0.01, 0.05] {
            for &xv in &[0.4, 0.5, 0.6] {
                for &a in &[0.5, 5.0, 50.0] {
                    let t = slide_from_below(&u, s, a, &PointXZ::new(vec![xv], zv), &SearchSet::OpenCube(q.clone())).unwrap();
                    let c = neumann_vertex_bound_check(&u, &t, &f, 1e-9).unwrap();
                    assert!(c.holds, "{c:?}");
                    bottom += c.applies as usize;
                }
            }
        }
        // f > 0 keeps contacts off z = 0 unless the opening is tiny
        assert!(bottom < 45);
        let zero = GridFunction::zeros(&f.grid);
        let flat = XZField::from_fn(&u.grid, |_| 1.0);
        let t = slide_from_below(&flat, s, 1.0, &PointXZ::new(vec![0.5], 0.0), &SearchSet::All).unwrap();
        let c = neumann_vertex_bound_check(&flat, &t, &zero, 0.0).unwrap();
        assert!(c.applies && c.holds && c.slope == 0.0);
    }
}

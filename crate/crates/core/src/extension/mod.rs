//! The degenerate extension problem
//!
//! ```text
//!   a^{ij}(x)∂_ij U + z^{2−1/s} ∂_zz U = 0,   U(x, 0) = u(x),   −∂_{z+}U(x, 0) = d_s L^s u(x)
//! ```
//!
//! solved two ways: by quadrature of the closed-form semigroup representation
//! and by a direct banded solve of the discretized PDE.

use crate::error::{FracError, Result};
use crate::fractional::BalakrishnanQuad;
use crate::semigroup::{march_increment, sym_eigs, Banded, CoeffField, DiscreteOperator, EvolveOptions, GridFunction, GridSpec};
use crate::special::{gamma, lower_incomplete_gamma};
use crate::SParam;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Grading exponent of the z-mesh: max(2, 1/s, 2s/(1−s)).
pub fn default_grading(s: SParam) -> f64 {
    let s = s.get();
    2f64.max(1.0 / s).max(2.0 * s / (1.0 - s))
}

/// Height beyond which every mode with rate ≥ eps has decayed below `tol`.
///
/// In y = 2s z^{1/(2s)} the λ-mode decays like e^{−√λ y}, so y* = ln(1/tol)/√eps
/// and Z_max = (y*/(2s))^{2s}.
pub fn default_z_max(s: SParam, eps: f64, tol: f64) -> Result<f64> {
    if !(eps > 0.0) || !(tol > 0.0 && tol < 1.0) {
        return Err(FracError::InvalidParameter(format!("need eps > 0 and tol in (0,1), got {eps}, {tol}")));
    }
    let y = (1.0 / tol).ln() / eps.sqrt();
    Ok(change_of_variables(CovDirection::YToZ, y, s))
}

/// Base grid in x and graded levels 0 = z₀ < z₁ < … < z_M = Z_max.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionGrid {
    pub base: GridSpec,
    pub z: Vec<f64>,
    pub grading: f64,
}

impl ExtensionGrid {
    /// z_j = Z_max (j/M)^g.
    pub fn new(base: &GridSpec, z_max: f64, m: usize, grading: f64) -> Result<Self> {
        if !(z_max > 0.0) || !z_max.is_finite() || m < 4 || !(grading >= 1.0) {
            return Err(FracError::InvalidParameter(format!(
                "extension grid needs Z_max > 0, M >= 4, grading >= 1; got {z_max}, {m}, {grading}"
            )));
        }
        let z: Vec<f64> = (0..=m).map(|j| z_max * (j as f64 / m as f64).powf(grading)).collect();
        if z.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(FracError::InvalidParameter("z-levels are not strictly increasing".into()));
        }
        Ok(Self { base: base.clone(), z, grading })
    }

    pub fn levels(&self) -> usize {
        self.z.len()
    }

    pub fn z_max(&self) -> f64 {
        *self.z.last().expect("nonempty z-levels")
    }
}

/// U on every (z-level, base node); level-major layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionField {
    pub grid: ExtensionGrid,
    pub values: Vec<f64>,
}

impl ExtensionField {
    pub fn level(&self, j: usize) -> GridFunction {
        let n = self.grid.base.len();
        GridFunction { grid: self.grid.base.clone(), values: self.values[j * n..(j + 1) * n].to_vec() }
    }

    pub fn trace(&self) -> GridFunction {
        self.level(0)
    }

    pub fn at(&self, j: usize, node: usize) -> f64 {
        self.values[j * self.grid.base.len() + node]
    }

    /// max_j ‖U(·, z_j)‖∞.
    pub fn level_norms(&self) -> Vec<f64> {
        (0..self.grid.levels()).map(|j| self.level(j).max_abs()).collect()
    }
}

fn check_data(op: &DiscreteOperator, u: &GridFunction) -> Result<()> {
    if u.grid != op.grid {
        return Err(FracError::InvalidParameter("data and operator live on different grids".into()));
    }
    GridFunction::new(&u.grid, u.values.clone()).map(|_| ())
}

/// U(x, z) = u + (s^{2s}z/Γ(s)) [Σ_k w_k e^{−c/t_k}(e^{−t_k L}u − u) − u c^{−s}γ(s, c/T_max)],
/// c = s²z^{1/s}, using the positive rule of `quad`. The bracket is the
/// semigroup representation after subtracting its value for e^{−tL}u ≡ u; the
/// last term is the part of that subtraction beyond T_max. Level 0 is u exactly.
pub fn extend_via_quadrature(
    op: &DiscreteOperator,
    u: &GridFunction,
    quad: &BalakrishnanQuad,
    evolve: &EvolveOptions,
    zgrid: &ExtensionGrid,
) -> Result<ExtensionField> {
    check_data(op, u)?;
    if zgrid.base != op.grid {
        return Err(FracError::InvalidParameter("extension grid base differs from the operator grid".into()));
    }
    let s = quad.s.get();
    let u0 = u.interior();
    let inc = march_increment(op, &u0, &quad.positive.times, evolve)?;
    let gs = gamma(s);
    let interior = op.grid.interior_nodes();
    let levels: Vec<Vec<f64>> = zgrid
        .z
        .par_iter()
        .map(|&z| {
            if z == 0.0 {
                return u.values.clone();
            }
            let c = s * s * z.powf(1.0 / s);
            let mut acc = vec![0.0; u0.len()];
            for ((d, w), t) in inc.iter().zip(&quad.positive.weights).zip(&quad.positive.times) {
                let k = w * (-c / t).exp();
                if k != 0.0 {
                    for (a, di) in acc.iter_mut().zip(d) {
                        *a += k * di;
                    }
                }
            }
            let tail = c.powf(-s) * lower_incomplete_gamma(s, c / quad.t_max);
            let pre = s.powf(2.0 * s) * z / gs;
            let mut row = vec![0.0; op.grid.len()];
            for (k, &node) in interior.iter().enumerate() {
                row[node] = u0[k] + pre * (acc[k] - u0[k] * tail);
            }
            row
        })
        .collect();
    Ok(ExtensionField { grid: zgrid.clone(), values: levels.concat() })
}

/// Condition imposed on the z = 0 row of the PDE path.
#[derive(Debug, Clone, PartialEq)]
pub enum BottomCondition {
    /// U(x, 0) = u(x).
    Dirichlet(GridFunction),
    /// −(U(x, z₁) − U(x, 0))/z₁ = f(x).
    Neumann(GridFunction),
}

/// Direct solve of L U − z^{2−1/s} ∂_zz U = g with lateral and top Dirichlet
/// zeros. `source` (one value per level and base node, or `None` for g = 0)
/// lets callers build supersolutions; it is ignored on the bottom row.
/// ∂_zz is the nonuniform three-point difference.
pub fn extend_via_pde(
    op: &DiscreteOperator,
    s: SParam,
    zgrid: &ExtensionGrid,
    bottom: &BottomCondition,
    source: Option<&[f64]>,
) -> Result<ExtensionField> {
    if zgrid.base != op.grid {
        return Err(FracError::InvalidParameter("extension grid base differs from the operator grid".into()));
    }
    let data = match bottom {
        BottomCondition::Dirichlet(u) | BottomCondition::Neumann(u) => u,
    };
    check_data(op, data)?;
    let base_len = op.grid.len();
    if let Some(g) = source {
        if g.len() != base_len * zgrid.levels() {
            return Err(FracError::InvalidParameter("source has the wrong length".into()));
        }
    }
    let neumann = matches!(bottom, BottomCondition::Neumann(_));
    let nx = op.unknowns();
    let j0 = if neumann { 0 } else { 1 };
    let m = zgrid.levels() - 1;
    let nl = m - j0;
    let kx = op.matrix.kl;
    // pick the ordering with the narrower band
    let z_inner = kx * nl < nx;
    let idx = |k: usize, j: usize| if z_inner { k * nl + (j - j0) } else { (j - j0) * nx + k };
    let band = if z_inner { kx * nl } else { nx };
    let mut a = Banded::zeros(nx * nl, band, band);
    let mut rhs = vec![0.0; nx * nl];
    let interior = op.grid.interior_nodes();
    let sv = s.get();
    let z = &zgrid.z;
    for j in j0..m {
        for k in 0..nx {
            let row = idx(k, j);
            if j == 0 {
                let inv = 1.0 / z[1];
                a.add(row, row, inv);
                a.add(row, idx(k, 1), -inv);
                rhs[row] = data.values[interior[k]];
                continue;
            }
            for (c, v) in op.matrix.row(k) {
                a.add(row, idx(c, j), v);
            }
            let (hm, hp) = (z[j] - z[j - 1], z[j + 1] - z[j]);
            let w = z[j].powf(2.0 - 1.0 / sv) * 2.0 / (hm + hp);
            a.add(row, row, w * (1.0 / hm + 1.0 / hp));
            if j + 1 < m {
                a.add(row, idx(k, j + 1), -w / hp);
            }
            if j - 1 >= j0 {
                a.add(row, idx(k, j - 1), -w / hm);
            } else {
                rhs[row] += w / hm * data.values[interior[k]];
            }
            if let Some(g) = source {
                rhs[row] += g[j * base_len + interior[k]];
            }
        }
    }
    // unit diagonal: rows near z = 0 carry weights many orders above the rest
    for (row, r) in rhs.iter_mut().enumerate() {
        let d = a.get(row, row);
        a.scale_row(row, 1.0 / d);
        *r /= d;
    }
    let sol = a.factor()?.solve(&rhs);
    let mut values = vec![0.0; base_len * zgrid.levels()];
    if !neumann {
        values[..base_len].copy_from_slice(&data.values);
    }
    for j in j0..m {
        for k in 0..nx {
            values[j * base_len + interior[k]] = sol[idx(k, j)];
        }
    }
    Ok(ExtensionField { grid: zgrid.clone(), values })
}

/// −∂_{z+}U(x, 0) on the base grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeumannTrace {
    pub values: GridFunction,
    /// Levels used by the extrapolation, lowest first.
    pub levels: Vec<usize>,
    /// Exponents eliminated by the extrapolation.
    pub exponents: Vec<f64>,
}

/// Powers of z in the expansion of D(z) = (U(z) − U(0))/z − ∂_{z+}U(0).
///
/// Each mode of U is a multiple of (x/2)^s K_s(x) with x = √λ y and
/// y^{2s} ∝ z, whose series carries the powers z^{k/s} and z^{1+k/s}. After
/// dividing by z the error powers are k/s − 1 and k/s for k ≥ 1.
pub fn trace_error_exponents(s: SParam, count: usize) -> Vec<f64> {
    let s = s.get();
    let mut e: Vec<f64> = (1..=2 * count.max(1)).flat_map(|k| [k as f64 / s - 1.0, k as f64 / s]).collect();
    e.sort_by(f64::total_cmp);
    e.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    e.truncate(count);
    e
}

/// Extrapolated one-sided quotient. With `terms = 1` this is the quotient
/// D(z) = (U(z_a) − U(0))/z_a plus one Richardson step against z_b ≈ 2z_a;
/// each further term adds a level near 2^i z_a and eliminates the next power
/// from [`trace_error_exponents`].
pub fn neumann_trace(field: &ExtensionField, s: SParam, z_target: f64, terms: usize) -> Result<NeumannTrace> {
    let z = &field.grid.z;
    if !(z_target > 0.0) {
        return Err(FracError::InvalidParameter(format!("trace target height must be positive, got {z_target}")));
    }
    let nearest = |t: f64| (1..z.len()).min_by(|&a, &b| (z[a] - t).abs().total_cmp(&(z[b] - t).abs())).expect("levels");
    let mut levels = vec![nearest(z_target)];
    for i in 1..=terms {
        let next = nearest(2f64.powi(i as i32) * z[levels[0]]).max(levels[i - 1] + 1);
        levels.push(next);
    }
    if *levels.last().expect("levels") >= z.len() - 1 {
        return Err(FracError::InvalidParameter("trace target too close to Z_max".into()));
    }
    let exponents = trace_error_exponents(s, terms);
    // weights c_i with Σc_i = 1 and Σc_i z_i^e = 0 for each eliminated power
    let k = levels.len();
    let mut m = vec![vec![0.0; k + 1]; k];
    for (i, &j) in levels.iter().enumerate() {
        m[0][i] = 1.0;
        for (r, e) in exponents.iter().enumerate() {
            m[r + 1][i] = (z[j] / z[levels[0]]).powf(*e);
        }
    }
    m[0][k] = 1.0;
    let weights = solve_small(m).ok_or_else(|| FracError::LinearSolve("singular trace extrapolation".into()))?;
    let base = &field.grid.base;
    let values = (0..base.len())
        .map(|node| {
            if base.is_boundary(node) {
                return 0.0;
            }
            let u0 = field.at(0, node);
            -levels.iter().zip(&weights).map(|(&j, c)| c * (field.at(j, node) - u0) / z[j]).sum::<f64>()
        })
        .collect();
    Ok(NeumannTrace { values: GridFunction { grid: base.clone(), values }, levels, exponents })
}

/// Gaussian elimination on an augmented k×(k+1) system.
fn solve_small(mut m: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let k = m.len();
    for c in 0..k {
        let p = (c..k).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs()))?;
        if m[p][c].abs() < 1e-14 {
            return None;
        }
        m.swap(c, p);
        for r in 0..k {
            if r != c {
                let f = m[r][c] / m[c][c];
                for col in c..=k {
                    m[r][col] -= f * m[c][col];
                }
            }
        }
    }
    Some((0..k).map(|r| m[r][k] / m[r][r]).collect())
}

/// Direction of the variable change z = (y/(2s))^{2s}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovDirection {
    YToZ,
    ZToY,
}

/// z = (y/(2s))^{2s} and its inverse y = 2s z^{1/(2s)}, for values ≥ 0.
pub fn change_of_variables(direction: CovDirection, value: f64, s: SParam) -> f64 {
    let s = s.get();
    debug_assert!(value >= 0.0);
    match direction {
        CovDirection::YToZ => (value / (2.0 * s)).powf(2.0 * s),
        CovDirection::ZToY => 2.0 * s * value.powf(1.0 / (2.0 * s)),
    }
}

/// Even extension Ũ(x, z) = U(x, |z|) on levels −Z_max..Z_max.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectedField {
    pub base: GridSpec,
    pub z: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn even_reflection(field: &ExtensionField) -> ReflectedField {
    let n = field.grid.base.len();
    let m = field.grid.levels();
    let mut z = Vec::with_capacity(2 * m - 1);
    let mut values = Vec::with_capacity((2 * m - 1) * n);
    for j in (1..m).rev() {
        z.push(-field.grid.z[j]);
        values.extend_from_slice(&field.values[j * n..(j + 1) * n]);
    }
    for j in 0..m {
        z.push(field.grid.z[j]);
        values.extend_from_slice(&field.values[j * n..(j + 1) * n]);
    }
    ReflectedField { base: field.grid.base.clone(), z, values }
}

impl ReflectedField {
    pub fn at(&self, j: usize, node: usize) -> f64 {
        self.values[j * self.base.len() + node]
    }

    /// Index of the z = 0 level.
    pub fn zero_level(&self) -> usize {
        self.z.len() / 2
    }

    /// max |Ũ(x, z) − Ũ(x, −z)| over all levels and nodes.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.base.len();
        let last = self.z.len() - 1;
        (0..self.z.len())
            .flat_map(|j| (0..n).map(move |k| (j, k)))
            .fold(0.0, |m, (j, k)| m.max((self.at(j, k) - self.at(last - j, k)).abs()))
    }

    /// One-sided ∂_z jump Ũ_z(0+) − Ũ_z(0−) using the first levels on each side.
    pub fn derivative_jump(&self) -> GridFunction {
        let c = self.zero_level();
        let (zp, zm) = (self.z[c + 1], self.z[c - 1]);
        let values = (0..self.base.len())
            .map(|k| {
                let up = (self.at(c + 1, k) - self.at(c, k)) / zp;
                let down = (self.at(c, k) - self.at(c - 1, k)) / (-zm);
                up - down
            })
            .collect();
        GridFunction { grid: self.base.clone(), values }
    }
}

/// Nodewise residual of L U − |z|^{2−1/s}∂_zz U at interior levels 0 < j < M.
pub fn extension_residual(op: &DiscreteOperator, s: SParam, field: &ExtensionField) -> Vec<f64> {
    let z = &field.grid.z;
    let interior = op.grid.interior_nodes();
    let mut out = Vec::new();
    for j in 1..z.len() - 1 {
        let lev: Vec<f64> = interior.iter().map(|&i| field.at(j, i)).collect();
        let lu = op.apply_interior(&lev);
        let (hm, hp) = (z[j] - z[j - 1], z[j + 1] - z[j]);
        for (k, &i) in interior.iter().enumerate() {
            let uzz = 2.0 / (hm + hp) * ((field.at(j + 1, i) - field.at(j, i)) / hp - (field.at(j, i) - field.at(j - 1, i)) / hm);
            out.push(lu[k] - z[j].powf(2.0 - 1.0 / s.get()) * uzz);
        }
    }
    out
}

/// Outcome of comparing the extension operator with tr((D²Φ)⁻¹D²U).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecastReport {
    /// max |tr(diag(a, |z|^{2−1/s})D²U) − tr((D²Φ)⁻¹D²U)| over interior nodes.
    pub max_mismatch: f64,
    /// max |tr((D²Φ)⁻¹D²U)| over interior nodes.
    pub max_recast: f64,
    /// Extremes over nodes of the eigenvalues of diag(a, |z|^{2−1/s}) relative to (D²Φ)⁻¹.
    pub ratio_min: f64,
    pub ratio_max: f64,
}

/// a^{ij}∂_ijU + |z|^{2−1/s}∂_zzU at interior base nodes and levels 0 < j < M,
/// with central differences that read boundary values as stored.
pub fn stencil_form(coeffs: &CoeffField, s: SParam, field: &ExtensionField) -> Vec<f64> {
    let base = &field.grid.base;
    let z = &field.grid.z;
    let hs: Vec<f64> = base.axes.iter().map(|a| a.spacing()).collect();
    let mut out = Vec::new();
    for j in 1..z.len() - 1 {
        let (hm, hp) = (z[j] - z[j - 1], z[j + 1] - z[j]);
        for node in base.interior_nodes() {
            let mi = base.multi(node);
            let at = |off: &[isize]| {
                let nb: Vec<usize> = mi.iter().zip(off).map(|(&i, &o)| (i as isize + o) as usize).collect();
                field.at(j, base.flat(&nb))
            };
            let c = field.at(j, node);
            let e = coeffs.entries[node];
            let x_part = if base.dim() == 1 {
                e[0] * (at(&[1]) - 2.0 * c + at(&[-1])) / (hs[0] * hs[0])
            } else {
                let uxx = (at(&[1, 0]) - 2.0 * c + at(&[-1, 0])) / (hs[0] * hs[0]);
                let uyy = (at(&[0, 1]) - 2.0 * c + at(&[0, -1])) / (hs[1] * hs[1]);
                let uxy = (at(&[1, 1]) - at(&[1, -1]) - at(&[-1, 1]) + at(&[-1, -1])) / (4.0 * hs[0] * hs[1]);
                e[0] * uxx + 2.0 * e[1] * uxy + e[2] * uyy
            };
            let uzz = 2.0 / (hm + hp) * ((field.at(j + 1, node) - c) / hp - (c - field.at(j - 1, node)) / hm);
            out.push(x_part + z[j].abs().powf(2.0 - 1.0 / s.get()) * uzz);
        }
    }
    out
}

/// Evaluates both forms with identical stencils. For a ≡ I the mismatch is 0;
/// in general the relative eigenvalues lie in [min(λ, 1), max(Λ, 1)].
pub fn recast_check(coeffs: &CoeffField, s: SParam, field: &ExtensionField) -> Result<RecastReport> {
    if coeffs.grid != field.grid.base {
        return Err(FracError::InvalidParameter("coefficients and field live on different grids".into()));
    }
    let id = CoeffField::identity(&coeffs.grid);
    let a = stencil_form(coeffs, s, field);
    let b = stencil_form(&id, s, field);
    let max_mismatch = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let max_recast = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let (mut lo, mut hi) = (1.0f64, 1.0f64);
    for i in coeffs.grid.interior_nodes() {
        let e = coeffs.entries[i];
        let (a, b) = if coeffs.grid.dim() == 1 { (e[0], e[0]) } else { sym_eigs(e) };
        lo = lo.min(a);
        hi = hi.max(b);
    }
    Ok(RecastReport { max_mismatch, max_recast, ratio_min: lo, ratio_max: hi })
}

use super::banded::Banded;
use super::coeff::CoeffField;
use super::grid::{GridFunction, GridSpec};
use crate::error::{FracError, Result};
use log::warn;
use serde::{Deserialize, Serialize};

/// Discretization of the mixed derivative ∂₁₂ in 2-D.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixedStencil {
    /// Four-corner central cross difference.
    #[default]
    Standard,
    /// Seven-point stencil using only the corners aligned with sign(a₁₂);
    /// an M-matrix when a₁₁/h₁ ≥ |a₁₂|/h₂ and a₂₂/h₂ ≥ |a₁₂|/h₁.
    Monotone,
}

/// L_h = −a^{ij}∂_ij on the interior unknowns with homogeneous Dirichlet data.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub grid: GridSpec,
    pub matrix: Banded,
    pub stencil: MixedStencil,
    /// True when every off-diagonal entry is ≤ 0.
    pub m_matrix: bool,
}

/// Assembles L_h. Boundary nodes are eliminated, so rows act on interior values only.
pub fn assemble_l(grid: &GridSpec, coeffs: &CoeffField, stencil: MixedStencil) -> Result<DiscreteOperator> {
    if coeffs.grid != *grid {
        return Err(FracError::InvalidParameter("coefficient field lives on a different grid".into()));
    }
    coeffs.certify()?;
    let n = grid.interior_len();
    let nx = grid.axes[0].interior();
    let band = if grid.dim() == 1 { 1 } else { nx + 1 };
    let mut m = Banded::zeros(n, band, band);
    let interior = grid.interior_nodes();
    for (row, &node) in interior.iter().enumerate() {
        let mi = grid.multi(node);
        let a = coeffs.entries[node];
        let mut put = |offset: &[isize], v: f64| {
            let nb: Vec<usize> = mi.iter().zip(offset).map(|(&i, &o)| (i as isize + o) as usize).collect();
            if !grid.is_boundary(grid.flat(&nb)) {
                m.add(row, grid.interior_index(&nb), v);
            }
        };
        if grid.dim() == 1 {
            let h2 = grid.axes[0].spacing().powi(2);
            put(&[0], 2.0 * a[0] / h2);
            put(&[-1], -a[0] / h2);
            put(&[1], -a[0] / h2);
            continue;
        }
        let (hx, hy) = (grid.axes[0].spacing(), grid.axes[1].spacing());
        let [a11, a12, a22] = a;
        let (cx, cy, cxy) = (a11 / (hx * hx), a22 / (hy * hy), a12 / (hx * hy));
        match stencil {
            MixedStencil::Standard => {
                put(&[0, 0], 2.0 * cx + 2.0 * cy);
                put(&[1, 0], -cx);
                put(&[-1, 0], -cx);
                put(&[0, 1], -cy);
                put(&[0, -1], -cy);
                // −2a₁₂ ∂₁₂u with ∂₁₂u ≈ (u₊₊ − u₊₋ − u₋₊ + u₋₋)/(4h₁h₂)
                put(&[1, 1], -0.5 * cxy);
                put(&[-1, -1], -0.5 * cxy);
                put(&[1, -1], 0.5 * cxy);
                put(&[-1, 1], 0.5 * cxy);
            }
            MixedStencil::Monotone => {
                let c = cxy.abs();
                let sg = if a12 >= 0.0 { 1 } else { -1 };
                put(&[0, 0], 2.0 * cx + 2.0 * cy - 2.0 * c);
                put(&[1, 0], -(cx - c));
                put(&[-1, 0], -(cx - c));
                put(&[0, 1], -(cy - c));
                put(&[0, -1], -(cy - c));
                put(&[1, sg], -c);
                put(&[-1, -sg], -c);
            }
        }
    }
    let m_matrix = (0..n).all(|i| m.row(i).all(|(j, v)| j == i || v <= 0.0));
    if !m_matrix {
        warn!("assembled operator is not an M-matrix ({stencil:?} stencil); discrete positivity may fail");
    }
    Ok(DiscreteOperator { grid: grid.clone(), matrix: m, stencil, m_matrix })
}

impl DiscreteOperator {
    pub fn unknowns(&self) -> usize {
        self.matrix.n
    }

    /// L_h applied to interior values.
    pub fn apply_interior(&self, u: &[f64]) -> Vec<f64> {
        self.matrix.matvec(u)
    }

    /// L_h u as a grid function; boundary rows are identity-with-zero.
    pub fn apply(&self, u: &GridFunction) -> GridFunction {
        GridFunction::from_interior(&self.grid, &self.apply_interior(&u.interior()))
    }

    /// Gershgorin upper bound on the spectrum of L_h.
    pub fn lambda_max_bound(&self) -> f64 {
        (0..self.unknowns()).map(|i| self.matrix.row(i).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn max_diagonal(&self) -> f64 {
        (0..self.unknowns()).map(|i| self.matrix.get(i, i)).fold(0.0, f64::max)
    }

    /// Largest step for which the explicit half of a θ-step, I − (1−θ)Δt L_h,
    /// is entrywise nonnegative. Infinite for θ = 1.
    pub fn positivity_dt(&self, theta: f64) -> f64 {
        if theta >= 1.0 {
            f64::INFINITY
        } else {
            1.0 / ((1.0 - theta) * self.max_diagonal())
        }
    }

    /// Dense matrix of L_h, for small diagnostics.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.unknowns();
        (0..n).map(|i| (0..n).map(|j| self.matrix.get(i, j)).collect()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn quadratic_is_exact_in_1d() {
        let g = GridSpec::line(0.0, 1.0, 33).unwrap();
        let op = assemble_l(&g, &CoeffField::identity(&g), MixedStencil::Standard).unwrap();
        let u = GridFunction::from_fn(&g, |x| x[0] * (1.0 - x[0]));
        let lu = op.apply(&u);
        for i in g.interior_nodes() {
            assert!((lu.values[i] - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn sine_is_second_order() {
        let mut errs = vec![];
        for &n in &[33, 65, 129] {
            let g = GridSpec::line(0.0, 1.0, n).unwrap();
            let op = assemble_l(&g, &CoeffField::identity(&g), MixedStencil::Standard).unwrap();
            let u = GridFunction::from_fn(&g, |x| (PI * x[0]).sin());
            let exact = u.scaled(PI * PI);
            errs.push(op.apply(&u).dist_inf(&exact));
        }
        for w in errs.windows(2) {
            let rate = (w[0] / w[1]).log2();
            assert!(rate > 1.9, "rate {rate}");
        }
    }

    #[test]
    fn diagonal_2d_quadratic_is_exact() {
        let g = GridSpec::square(0.0, 1.0, 12).unwrap();
        let c = CoeffField::constant(&g, [2.0, 0.0, 1.0], 1.0, 2.0).unwrap();
        let op = assemble_l(&g, &c, MixedStencil::Standard).unwrap();
        let u = GridFunction::from_fn(&g, |x| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]));
        let lu = op.apply(&u);
        for i in g.interior_nodes() {
            let x = g.coords(i);
            let exact = 2.0 * 2.0 * x[1] * (1.0 - x[1]) + 2.0 * x[0] * (1.0 - x[0]);
            assert!((lu.values[i] - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn mixed_stencils_are_exact_on_xy() {
        let g = GridSpec::square(0.0, 1.0, 14).unwrap();
        let c = CoeffField::constant(&g, [2.0, 0.7, 1.5], 0.5, 3.0).unwrap();
        let u = GridFunction::from_fn(&g, |x| x[0] * x[1] * (1.0 - x[0]) * (1.0 - x[1]));
        for st in [MixedStencil::Standard, MixedStencil::Monotone] {
            let op = assemble_l(&g, &c, st).unwrap();
            let lu = op.apply(&u);
            for i in g.interior_nodes() {
                let x = g.coords(i);
                let (p, q) = (x[0], x[1]);
                let uxx = -2.0 * q * (1.0 - q);
                let uyy = -2.0 * p * (1.0 - p);
                let uxy = (1.0 - 2.0 * p) * (1.0 - 2.0 * q);
                let exact = -(2.0 * uxx + 2.0 * 0.7 * uxy + 1.5 * uyy);
                // the monotone stencil picks up h²·u_xxyy from the diagonal second difference
                let tol = if st == MixedStencil::Standard { 1e-9 } else { 0.02 };
                assert!((lu.values[i] - exact).abs() < tol, "{st:?}: {} vs {exact}", lu.values[i]);
            }
        }
    }

    #[test]
    fn monotone_stencil_is_m_matrix_for_rotated_fields() {
        let g = GridSpec::square(0.0, 1.0, 20).unwrap();
        let c = CoeffField::smooth_random(&g, 1.0, 3.0, 3.0, 11).unwrap();
        assert!(assemble_l(&g, &c, MixedStencil::Monotone).unwrap().m_matrix);
        let skew = CoeffField::constant(&g, [1.0, 0.5, 1.0], 0.5, 1.5).unwrap();
        assert!(!assemble_l(&g, &skew, MixedStencil::Standard).unwrap().m_matrix);
    }
}

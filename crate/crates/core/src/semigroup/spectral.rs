//! Sine-series oracles for constant diagonal coefficients on a box.

use super::coeff::CoeffField;
use super::grid::GridFunction;
use crate::error::{FracError, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Which eigenvalues multiply the sine coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectralEigen {
    /// a(kπ/ℓ)², the continuum Dirichlet eigenvalues.
    #[default]
    Continuum,
    /// (4a/h²) sin²(kπh/2ℓ), the eigenvalues of the three-point stencil.
    Discrete,
}

/// DST-I basis on one axis: interior nodes i = 1..N−1, modes k = 1..N−1.
struct SineBasis {
    m: usize,
    table: Vec<f64>,
}

impl SineBasis {
    fn new(intervals: usize) -> Self {
        let m = intervals - 1;
        let mut table = vec![0.0; m * m];
        for k in 0..m {
            for i in 0..m {
                table[k * m + i] = (PI * ((k + 1) * (i + 1)) as f64 / intervals as f64).sin();
            }
        }
        Self { m, table }
    }

    fn forward(&self, u: &[f64], out: &mut [f64]) {
        let scale = 2.0 / (self.m + 1) as f64;
        for k in 0..self.m {
            let row = &self.table[k * self.m..(k + 1) * self.m];
            out[k] = scale * row.iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    fn inverse(&self, b: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..self.m).map(|k| b[k] * self.table[k * self.m + i]).sum();
        }
    }
}

/// Multiplies the sine coefficients of `u` by g(λ_k).
pub fn spectral_apply<G: Fn(f64) -> f64>(coeffs: &CoeffField, u: &GridFunction, eig: SpectralEigen, g: G) -> Result<GridFunction> {
    let [a1, a2] = coeffs
        .constant_diagonal()
        .ok_or_else(|| FracError::Precondition("spectral oracle needs constant diagonal coefficients".into()))?;
    if u.grid != coeffs.grid {
        return Err(FracError::InvalidParameter("grid function and coefficients live on different grids".into()));
    }
    let grid = &u.grid;
    let axis_eigs = |ax: usize, a: f64| -> Vec<f64> {
        let axis = &grid.axes[ax];
        let n = axis.nodes - 1;
        (1..n)
            .map(|k| match eig {
                SpectralEigen::Continuum => a * (k as f64 * PI / axis.length()).powi(2),
                SpectralEigen::Discrete => {
                    let h = axis.spacing();
                    4.0 * a / (h * h) * (k as f64 * PI / (2.0 * n as f64)).sin().powi(2)
                }
            })
            .collect()
    };
    let interior = u.interior();
    let out = if grid.dim() == 1 {
        let basis = SineBasis::new(grid.axes[0].nodes - 1);
        let lam = axis_eigs(0, a1);
        let mut b = vec![0.0; basis.m];
        basis.forward(&interior, &mut b);
        for (bk, l) in b.iter_mut().zip(&lam) {
            *bk *= g(*l);
        }
        let mut v = vec![0.0; basis.m];
        basis.inverse(&b, &mut v);
        v
    } else {
        let bx = SineBasis::new(grid.axes[0].nodes - 1);
        let by = SineBasis::new(grid.axes[1].nodes - 1);
        let (lx, ly) = (axis_eigs(0, a1), axis_eigs(1, a2));
        let (mx, my) = (bx.m, by.m);
        let mut c = vec![0.0; mx * my];
        let mut tmp = vec![0.0; mx.max(my)];
        for j in 0..my {
            bx.forward(&interior[j * mx..(j + 1) * mx], &mut tmp[..mx]);
            c[j * mx..(j + 1) * mx].copy_from_slice(&tmp[..mx]);
        }
        let mut col = vec![0.0; my];
        for i in 0..mx {
            for j in 0..my {
                col[j] = c[j * mx + i];
            }
            by.forward(&col, &mut tmp[..my]);
            for j in 0..my {
                c[j * mx + i] = tmp[j] * g(lx[i] + ly[j]);
            }
        }
        for i in 0..mx {
            for j in 0..my {
                col[j] = c[j * mx + i];
            }
            by.inverse(&col, &mut tmp[..my]);
            for j in 0..my {
                c[j * mx + i] = tmp[j];
            }
        }
        let mut v = vec![0.0; mx * my];
        for j in 0..my {
            bx.inverse(&c[j * mx..(j + 1) * mx], &mut v[j * mx..(j + 1) * mx]);
        }
        v
    };
    Ok(GridFunction::from_interior(grid, &out))
}

/// Exact sine-series evolution e^{−tL}u.
pub fn spectral_semigroup(coeffs: &CoeffField, u: &GridFunction, t: f64, eig: SpectralEigen) -> Result<GridFunction> {
    if !(t >= 0.0) {
        return Err(FracError::InvalidParameter(format!("t must be nonnegative, got {t}")));
    }
    spectral_apply(coeffs, u, eig, |l| (-l * t).exp())
}

/// L^p u for any real power p through the sine series.
pub fn spectral_power(coeffs: &CoeffField, u: &GridFunction, p: f64, eig: SpectralEigen) -> Result<GridFunction> {
    spectral_apply(coeffs, u, eig, |l| l.powf(p))
}

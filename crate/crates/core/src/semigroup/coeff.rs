use super::grid::GridSpec;
use crate::error::{FracError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Relative slack when certifying ellipticity bounds.
const CERT_SLACK: f64 = 1e-12;

/// Symmetric coefficient matrix (a11, a12, a22) sampled at every node, with
/// certified bounds λ ≤ eig ≤ Λ. In 1-D only `a11` is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffField {
    pub grid: GridSpec,
    pub entries: Vec<[f64; 3]>,
    pub lambda: f64,
    pub cap: f64,
}

/// Eigenvalues (min, max) of a 2×2 symmetric matrix.
pub fn sym_eigs(a: [f64; 3]) -> (f64, f64) {
    let [a11, a12, a22] = a;
    let mean = 0.5 * (a11 + a22);
    let rad = (0.25 * (a11 - a22) * (a11 - a22) + a12 * a12).sqrt();
    (mean - rad, mean + rad)
}

impl CoeffField {
    /// Wraps node entries and certifies ellipticity at every node.
    pub fn new(grid: &GridSpec, entries: Vec<[f64; 3]>, lambda: f64, cap: f64) -> Result<Self> {
        if !(lambda > 0.0) || !(cap >= lambda) || !cap.is_finite() {
            return Err(FracError::InvalidParameter(format!("need 0 < lambda <= Lambda, got [{lambda}, {cap}]")));
        }
        if entries.len() != grid.len() {
            return Err(FracError::InvalidParameter(format!(
                "coefficient field has {} entries for {} nodes",
                entries.len(),
                grid.len()
            )));
        }
        let field = Self { grid: grid.clone(), entries, lambda, cap };
        field.certify()?;
        Ok(field)
    }

    /// Constant matrix on every node.
    pub fn constant(grid: &GridSpec, a: [f64; 3], lambda: f64, cap: f64) -> Result<Self> {
        Self::new(grid, vec![a; grid.len()], lambda, cap)
    }

    /// a ≡ I.
    pub fn identity(grid: &GridSpec) -> Self {
        Self { grid: grid.clone(), entries: vec![[1.0, 0.0, 1.0]; grid.len()], lambda: 1.0, cap: 1.0 }
    }

    /// Samples a matrix-valued function at every node.
    pub fn from_fn<F: Fn(&[f64]) -> [f64; 3]>(grid: &GridSpec, f: F, lambda: f64, cap: f64) -> Result<Self> {
        let entries = (0..grid.len()).map(|i| f(&grid.coords(i))).collect();
        Self::new(grid, entries, lambda, cap)
    }

    /// Smooth random field with values in [λ, Λ]: each axis direction gets
    /// σ(x) = ½(1 + sin(Σ_k c_k sin(kπx/ℓ + φ_k))) built from a few modes.
    ///
    /// In 1-D this is a(x) = λ + (Λ − λ)σ(x). In 2-D the matrix is
    /// R(θ(x)) diag(λ̃, Λ̃) R(θ(x))ᵀ with Λ̃/λ̃ ≤ `max_ratio`.
    pub fn smooth_random(grid: &GridSpec, lambda: f64, cap: f64, max_ratio: f64, seed: u64) -> Result<Self> {
        if !(max_ratio >= 1.0) {
            return Err(FracError::InvalidParameter(format!("max_ratio must be >= 1, got {max_ratio}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lens: Vec<f64> = grid.axes.iter().map(|a| a.length()).collect();
        let los: Vec<f64> = grid.axes.iter().map(|a| a.lo).collect();
        let f1 = RandomModes::new(&mut rng, grid.dim());
        let f2 = RandomModes::new(&mut rng, grid.dim());
        let f3 = RandomModes::new(&mut rng, grid.dim());
        let entries = (0..grid.len())
            .map(|i| {
                let x: Vec<f64> = grid.coords(i).iter().zip(&los).zip(&lens).map(|((v, lo), l)| (v - lo) / l).collect();
                let small = lambda + (cap - lambda) * f1.sigma(&x);
                if grid.dim() == 1 {
                    return [small, 0.0, small];
                }
                let big_cap = cap.min(max_ratio * small);
                let big = small + (big_cap - small) * f2.sigma(&x);
                let th = PI * f3.eval(&x);
                let (sn, cs) = th.sin_cos();
                let a11 = small * cs * cs + big * sn * sn;
                let a22 = small * sn * sn + big * cs * cs;
                let a12 = (big - small) * sn * cs;
                [a11, a12, a22]
            })
            .collect();
        Self::new(grid, entries, lambda, cap)
    }

    /// True when the field is the same diagonal matrix at every node.
    pub fn constant_diagonal(&self) -> Option<[f64; 2]> {
        let first = self.entries[0];
        let same = self.entries.iter().all(|e| *e == first);
        let diag = self.grid.dim() == 1 || first[1] == 0.0;
        (same && diag).then_some([first[0], first[2]])
    }

    /// Checks λ|ξ|² ≤ a ξ·ξ ≤ Λ|ξ|² and finiteness at every node.
    pub fn certify(&self) -> Result<()> {
        for (node, e) in self.entries.iter().enumerate() {
            let (lo, hi) = if self.grid.dim() == 1 { (e[0], e[0]) } else { sym_eigs(*e) };
            let ok = e.iter().all(|v| v.is_finite())
                && lo >= self.lambda * (1.0 - CERT_SLACK)
                && hi <= self.cap * (1.0 + CERT_SLACK);
            if !ok {
                return Err(FracError::Ellipticity { node, min_eig: lo, max_eig: hi, lambda: self.lambda, cap: self.cap });
            }
        }
        Ok(())
    }
}

/// Random smooth function Σ_k c_k sin(kπ(x·d_k) + φ_k) / k in [−1, 1] per axis mix.
struct RandomModes {
    modes: Vec<(Vec<f64>, f64, f64)>,
}

impl RandomModes {
    fn new<R: Rng>(rng: &mut R, dim: usize) -> Self {
        let modes = (1..=4)
            .map(|k| {
                let dir: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let amp = rng.random_range(-1.0..1.0) / k as f64;
                let phase = rng.random_range(0.0..2.0 * PI);
                (dir.into_iter().map(|d| d * k as f64).collect(), amp, phase)
            })
            .collect();
        Self { modes }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let raw: f64 = self
            .modes
            .iter()
            .map(|(d, amp, ph)| amp * (PI * d.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + ph).sin())
            .sum();
        raw.clamp(-1.0, 1.0)
    }

    fn sigma(&self, x: &[f64]) -> f64 {
        0.5 * (1.0 + (PI * self.eval(x)).sin())
    }
}

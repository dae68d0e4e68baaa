//! Banded matrices and LU factorization with partial pivoting.

use crate::error::{FracError, Result};

/// Square band matrix; row i stores columns i−kl ..= i+ku.
#[derive(Debug, Clone, PartialEq)]
pub struct Banded {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    data: Vec<f64>,
}

impl Banded {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self { n, kl, ku, data: vec![0.0; n * (kl + ku + 1)] }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if j + self.kl < i || j > i + self.ku || j >= self.n {
            None
        } else {
            Some(i * (self.kl + self.ku + 1) + j + self.kl - i)
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |k| self.data[k])
    }

    /// Adds `v` at (i, j); panics outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.slot(i, j).unwrap_or_else(|| panic!("entry ({i}, {j}) outside band kl={} ku={}", self.kl, self.ku));
        self.data[k] += v;
    }

    /// Multiplies row i by `f`.
    pub fn scale_row(&mut self, i: usize, f: f64) {
        let w = self.kl + self.ku + 1;
        for v in &mut self.data[i * w..(i + 1) * w] {
            *v *= f;
        }
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// Nonzero entries of row i as (column, value).
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = i.saturating_sub(self.kl);
        let hi = (i + self.ku).min(self.n - 1);
        (lo..=hi).map(move |j| (j, self.get(i, j))).filter(|(_, v)| *v != 0.0)
    }

    /// α I + β A.
    pub fn shifted(&self, alpha: f64, beta: f64) -> Banded {
        let mut out = Banded { n: self.n, kl: self.kl, ku: self.ku, data: self.data.iter().map(|v| beta * v).collect() };
        for i in 0..self.n {
            out.add(i, i, alpha);
        }
        out
    }

    pub fn factor(&self) -> Result<BandedLu> {
        BandedLu::new(self)
    }
}

/// LU factors of a band matrix. U has upper bandwidth kl + ku after pivoting.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    width: usize,
    upper: usize,
    rows: Vec<f64>,
    mult: Vec<f64>,
    piv: Vec<usize>,
}

impl BandedLu {
    fn new(a: &Banded) -> Result<Self> {
        let (n, kl) = (a.n, a.kl);
        let upper = kl + a.ku;
        let width = kl + upper + 1;
        let mut lu = BandedLu { n, kl, width, upper, rows: vec![0.0; n * width], mult: vec![0.0; n * kl.max(1)], piv: vec![0; n] };
        for i in 0..n {
            for (j, v) in a.row(i) {
                let k = lu.at(i, j);
                lu.rows[k] = v;
            }
        }
        let scale = lu.rows.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.rows[lu.at(k, k)].abs();
            for i in k + 1..=last {
                let v = lu.rows[lu.at(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > scale * 1e-300) || !best.is_finite() {
                return Err(FracError::LinearSolve(format!("zero pivot in banded LU at column {k}")));
            }
            lu.piv[k] = p;
            let jmax = (k + upper).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let (a, b) = (lu.at(k, j), lu.at(p, j));
                    lu.rows.swap(a, b);
                }
            }
            let pivot = lu.rows[lu.at(k, k)];
            for i in k + 1..=last {
                let ik = lu.at(i, k);
                let l = lu.rows[ik] / pivot;
                lu.rows[ik] = 0.0;
                lu.mult[k * kl + (i - k - 1)] = l;
                if l != 0.0 {
                    for j in k + 1..=jmax {
                        let kj = lu.rows[lu.at(k, j)];
                        let ij = lu.at(i, j);
                        lu.rows[ij] -= l * kj;
                    }
                }
            }
        }
        Ok(lu)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        i * self.width + j + self.kl - i
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Solves A x = b in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kl) = (self.n, self.kl);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + kl).min(n - 1) {
                    b[i] -= self.mult[k * kl + (i - k - 1)] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut acc = b[k];
            for j in k + 1..=(k + self.upper).min(n - 1) {
                acc -= self.rows[self.at(k, j)] * b[j];
            }
            b[k] = acc / self.rows[self.at(k, k)];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

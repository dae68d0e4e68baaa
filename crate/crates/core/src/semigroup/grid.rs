use crate::error::{FracError, Result};
use serde::{Deserialize, Serialize};

/// Minimum number of interior nodes per axis.
pub const MIN_INTERIOR: usize = 8;

/// One uniform axis [lo, hi] with `nodes` points, both endpoints included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, nodes: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(FracError::InvalidParameter(format!("axis needs lo < hi, got [{lo}, {hi}]")));
        }
        if nodes < MIN_INTERIOR + 2 {
            return Err(FracError::InvalidParameter(format!(
                "axis needs at least {} nodes, got {nodes}",
                MIN_INTERIOR + 2
            )));
        }
        Ok(Self { lo, hi, nodes })
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.nodes - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.spacing()
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn interior(&self) -> usize {
        self.nodes - 2
    }
}

/// Structured grid on a box in dimension 1 or 2. Nodes are ordered with x fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(FracError::InvalidParameter(format!("grid dimension must be 1 or 2, got {}", axes.len())));
        }
        Ok(Self { axes })
    }

    /// (lo, hi) with `nodes` points including the boundary.
    pub fn line(lo: f64, hi: f64, nodes: usize) -> Result<Self> {
        Self::new(vec![Axis::new(lo, hi, nodes)?])
    }

    /// Unit square with `nodes` points per axis.
    pub fn square(lo: f64, hi: f64, nodes: usize) -> Result<Self> {
        Self::new(vec![Axis::new(lo, hi, nodes)?, Axis::new(lo, hi, nodes)?])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.nodes).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn interior_len(&self) -> usize {
        self.axes.iter().map(|a| a.interior()).product()
    }

    /// Cell volume h₁⋯h_n.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.spacing()).product()
    }

    /// Multi-index of a flat node index.
    pub fn multi(&self, idx: usize) -> Vec<usize> {
        let mut rem = idx;
        self.axes
            .iter()
            .map(|a| {
                let i = rem % a.nodes;
                rem /= a.nodes;
                i
            })
            .collect()
    }

    pub fn flat(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (a, &i) in self.axes.iter().zip(multi) {
            idx += i * stride;
            stride *= a.nodes;
        }
        idx
    }

    pub fn coords(&self, idx: usize) -> Vec<f64> {
        self.multi(idx).iter().zip(&self.axes).map(|(&i, a)| a.coord(i)).collect()
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        self.multi(idx).iter().zip(&self.axes).any(|(&i, a)| i == 0 || i + 1 == a.nodes)
    }

    /// Boundary mask, true on ∂Ω.
    pub fn boundary_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.is_boundary(i)).collect()
    }

    /// Flat node indices of the interior, in unknown order.
    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_boundary(i)).collect()
    }

    /// Interior unknown index of an interior multi-index.
    pub fn interior_index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (a, &i) in self.axes.iter().zip(multi) {
            idx += (i - 1) * stride;
            stride *= a.interior();
        }
        idx
    }
}

/// Values of a scalar field on every node of a grid, zero on the boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self { grid: grid.clone(), values: vec![0.0; grid.len()] }
    }

    /// Samples `f` at interior nodes; boundary values are set to 0.
    pub fn from_fn<F: Fn(&[f64]) -> f64>(grid: &GridSpec, f: F) -> Self {
        let values = (0..grid.len()).map(|i| if grid.is_boundary(i) { 0.0 } else { f(&grid.coords(i)) }).collect();
        Self { grid: grid.clone(), values }
    }

    /// Wraps node values; fails unless the boundary is exactly zero.
    pub fn new(grid: &GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(FracError::InvalidParameter(format!(
                "grid function has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = (0..grid.len()).find(|&i| grid.is_boundary(i) && values[i] != 0.0) {
            return Err(FracError::Precondition(format!("boundary node {i} carries {} instead of 0", values[i])));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FracError::InvalidParameter("grid function has non-finite values".into()));
        }
        Ok(Self { grid: grid.clone(), values })
    }

    /// Builds from interior values in unknown order.
    pub fn from_interior(grid: &GridSpec, interior: &[f64]) -> Self {
        let mut values = vec![0.0; grid.len()];
        for (k, idx) in grid.interior_nodes().into_iter().enumerate() {
            values[idx] = interior[k];
        }
        Self { grid: grid.clone(), values }
    }

    pub fn interior(&self) -> Vec<f64> {
        self.grid.interior_nodes().into_iter().map(|i| self.values[i]).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Σ v·h^n over all nodes.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn axpy(&self, alpha: f64, other: &GridFunction) -> GridFunction {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + alpha * b).collect();
        GridFunction { grid: self.grid.clone(), values }
    }

    pub fn scaled(&self, alpha: f64) -> GridFunction {
        GridFunction { grid: self.grid.clone(), values: self.values.iter().map(|v| alpha * v).collect() }
    }

    /// ‖self − other‖∞.
    pub fn dist_inf(&self, other: &GridFunction) -> f64 {
        self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

use crate::error::{FracError, Result};
use crate::extension::ReflectedField;
use crate::geometry::{mu_phi_box, AxisBox, CubeDesc, PointXZ, SParam, SectionDesc};
use crate::semigroup::GridSpec;
use serde::{Deserialize, Serialize};

/// Tensor grid: the base x grid times strictly increasing z levels.
/// Node index = level · base.len() + base node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XZGrid {
    pub base: GridSpec,
    pub z: Vec<f64>,
}

impl XZGrid {
    pub fn new(base: &GridSpec, z: Vec<f64>) -> Result<Self> {
        if z.len() < 2 || z.windows(2).any(|w| !(w[0] < w[1])) || z.iter().any(|v| !v.is_finite()) {
            return Err(FracError::InvalidParameter("z levels must be finite and strictly increasing, at least two".into()));
        }
        Ok(Self { base: base.clone(), z })
    }

    /// Levels −z_M..−z_1, 0, z_1..z_M from positive levels.
    pub fn symmetric(base: &GridSpec, positive: Vec<f64>) -> Result<Self> {
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(FracError::InvalidParameter("positive levels must be > 0".into()));
        }
        let mut z: Vec<f64> = positive.iter().rev().map(|v| -v).collect();
        z.push(0.0);
        z.extend_from_slice(&positive);
        Self::new(base, z)
    }

    pub fn n(&self) -> usize {
        self.base.dim()
    }

    pub fn len(&self) -> usize {
        self.base.len() * self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, level: usize, node: usize) -> usize {
        level * self.base.len() + node
    }

    pub fn level_of(&self, i: usize) -> usize {
        i / self.base.len()
    }

    pub fn base_node(&self, i: usize) -> usize {
        i % self.base.len()
    }

    pub fn point(&self, i: usize) -> PointXZ {
        PointXZ::new(self.base.coords(self.base_node(i)), self.z[self.level_of(i)])
    }

    pub fn zero_level(&self) -> Option<usize> {
        self.z.iter().position(|&v| v == 0.0)
    }

    pub fn first_positive_level(&self) -> Option<f64> {
        self.z.iter().copied().find(|&v| v > 0.0)
    }

    /// True on the outer faces of the tensor grid.
    pub fn is_outer(&self, i: usize) -> bool {
        let j = self.level_of(i);
        j == 0 || j + 1 == self.z.len() || self.base.is_boundary(self.base_node(i))
    }

    /// Grid neighbours ±1 along every axis.
    pub fn neighbours(&self, i: usize) -> Vec<usize> {
        let j = self.level_of(i);
        let k = self.base_node(i);
        let multi = self.base.multi(k);
        let mut out = Vec::with_capacity(2 * (self.n() + 1));
        for (d, &m) in multi.iter().enumerate() {
            if m > 0 {
                let mut q = multi.clone();
                q[d] -= 1;
                out.push(self.index(j, self.base.flat(&q)));
            }
            if m + 1 < self.base.axes[d].nodes {
                let mut q = multi.clone();
                q[d] += 1;
                out.push(self.index(j, self.base.flat(&q)));
            }
        }
        if j > 0 {
            out.push(self.index(j - 1, k));
        }
        if j + 1 < self.z.len() {
            out.push(self.index(j + 1, k));
        }
        out
    }

    /// Dual cell of node i: bounded by midpoints, clipped to the grid extent.
    pub fn dual_cell(&self, i: usize) -> AxisBox {
        let multi = self.base.multi(self.base_node(i));
        let mut lo = Vec::with_capacity(self.n() + 1);
        let mut hi = Vec::with_capacity(self.n() + 1);
        for (d, &m) in multi.iter().enumerate() {
            let ax = &self.base.axes[d];
            let c = ax.coord(m);
            let h = ax.spacing();
            lo.push(if m == 0 { c } else { c - 0.5 * h });
            hi.push(if m + 1 == ax.nodes { c } else { c + 0.5 * h });
        }
        let j = self.level_of(i);
        let z = &self.z;
        lo.push(if j == 0 { z[0] } else { 0.5 * (z[j - 1] + z[j]) });
        hi.push(if j + 1 == z.len() { z[j] } else { 0.5 * (z[j] + z[j + 1]) });
        AxisBox { lo, hi }
    }

    /// Exact μ_Φ of the dual cell.
    pub fn cell_measure(&self, s: SParam, i: usize) -> f64 {
        mu_phi_box(s, &self.dual_cell(i)).unwrap_or(0.0)
    }

    /// Grid extent as a closed box.
    pub fn extent(&self) -> AxisBox {
        let mut lo: Vec<f64> = self.base.axes.iter().map(|a| a.lo).collect();
        let mut hi: Vec<f64> = self.base.axes.iter().map(|a| a.hi).collect();
        lo.push(self.z[0]);
        hi.push(*self.z.last().unwrap());
        AxisBox { lo, hi }
    }
}

/// Values on an [`XZGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XZField {
    pub grid: XZGrid,
    pub values: Vec<f64>,
}

impl XZField {
    pub fn new(grid: &XZGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(FracError::InvalidParameter(format!("expected {} values, got {}", grid.len(), values.len())));
        }
        Ok(Self { grid: grid.clone(), values })
    }

    pub fn from_fn<F: FnMut(&PointXZ) -> f64>(grid: &XZGrid, mut f: F) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Self { grid: grid.clone(), values }
    }

    pub fn from_reflected(r: &ReflectedField) -> Result<Self> {
        let grid = XZGrid::new(&r.base, r.z.clone())?;
        Self::new(&grid, r.values.clone())
    }

    pub fn at(&self, level: usize, node: usize) -> f64 {
        self.values[self.grid.index(level, node)]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn negated(&self) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|v| -v).collect() }
    }
}

/// Where a paraboloid is allowed to rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SearchSet {
    All,
    /// Closed cube.
    Cube(CubeDesc),
    /// Open cube.
    OpenCube(CubeDesc),
    /// Open section δ_Φ(center, ·) < R.
    Section(SectionDesc),
    Nodes(Vec<usize>),
}

impl SearchSet {
    /// Node indices in ascending order.
    pub fn nodes(&self, grid: &XZGrid, s: SParam) -> Result<Vec<usize>> {
        let mut out = match self {
            SearchSet::All => (0..grid.len()).collect(),
            SearchSet::Cube(q) => (0..grid.len()).filter(|&i| q.contains_closed(&grid.point(i))).collect(),
            SearchSet::OpenCube(q) => (0..grid.len()).filter(|&i| q.contains(&grid.point(i))).collect(),
            SearchSet::Section(sec) => {
                let mut v = Vec::new();
                for i in 0..grid.len() {
                    if sec.contains(s, &grid.point(i))? {
                        v.push(i);
                    }
                }
                v
            }
            SearchSet::Nodes(v) => {
                if let Some(&bad) = v.iter().find(|&&i| i >= grid.len()) {
                    return Err(FracError::InvalidParameter(format!("node {bad} is outside the grid")));
                }
                let mut v = v.clone();
                v.sort_unstable();
                v.dedup();
                v
            }
        };
        out.shrink_to_fit();
        Ok(out)
    }
}

use super::{cube, CubeDesc, PointXZ, SParam};
use crate::error::{FracError, Result};
use serde::{Deserialize, Serialize};

/// Result of the cube-cover selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeCover {
    /// Selected cubes Q_{r_i}(p_i).
    pub cubes: Vec<CubeDesc>,
    /// Input indices of the selected centers.
    pub selected: Vec<usize>,
    /// Input points not covered by any selected cube; empty whenever K₀ is
    /// large enough for the 1-D quasi-triangle constants.
    pub uncovered: Vec<usize>,
}

impl CubeCover {
    /// Exhaustive check that the K₀-shrunk cubes are pairwise disjoint.
    pub fn shrunk_pairwise_disjoint(&self, s: SParam, k0: f64) -> Result<bool> {
        let shrunk: Vec<CubeDesc> =
            self.cubes.iter().map(|c| cube(s, &c.center, c.radius / k0)).collect::<Result<_>>()?;
        for i in 0..shrunk.len() {
            for j in (i + 1)..shrunk.len() {
                if shrunk[i].intersects(&shrunk[j]) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// Greedy selection over radii in decreasing order: a cube is kept when its
/// K₀-shrunk copy misses every shrunk cube kept so far.
///
/// A skipped point p meets a kept shrunk cube of radius r' ≥ r_p, and the
/// quasi-triangle inequality with K₀ > 2K puts p inside the full kept cube.
pub fn cube_cover(s: SParam, points: &[PointXZ], radii: &[f64], k0: f64) -> Result<CubeCover> {
    if points.len() != radii.len() {
        return Err(FracError::InvalidParameter("points and radii differ in length".into()));
    }
    if !(k0 >= 1.0) {
        return Err(FracError::InvalidParameter(format!("K0 must be >= 1, got {k0}")));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| radii[b].total_cmp(&radii[a]).then(a.cmp(&b)));

    let mut kept_shrunk: Vec<CubeDesc> = Vec::new();
    let mut cubes = Vec::new();
    let mut selected = Vec::new();
    for &i in &order {
        let shrunk = cube(s, &points[i], radii[i] / k0)?;
        if kept_shrunk.iter().all(|c| !c.intersects(&shrunk)) {
            kept_shrunk.push(shrunk);
            cubes.push(cube(s, &points[i], radii[i])?);
            selected.push(i);
        }
    }
    let uncovered = (0..points.len()).filter(|&i| !cubes.iter().any(|c| c.contains(&points[i]))).collect();
    Ok(CubeCover { cubes, selected, uncovered })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(s: f64) -> SParam {
        SParam::new(s).unwrap()
    }

    #[test]
    fn single_point() {
        let p = vec![PointXZ::new(vec![0.2], 0.1)];
        let c = cube_cover(sp(0.5), &p, &[0.3], 12.0).unwrap();
        assert_eq!(c.selected, vec![0]);
        assert!(c.uncovered.is_empty());
    }

    #[test]
    fn two_far_points() {
        let p = vec![PointXZ::new(vec![0.0], 0.0), PointXZ::new(vec![10.0], 5.0)];
        let c = cube_cover(sp(0.5), &p, &[0.1, 0.1], 12.0).unwrap();
        assert_eq!(c.cubes.len(), 2);
        assert!(c.shrunk_pairwise_disjoint(sp(0.5), 12.0).unwrap());
    }

    #[test]
    fn clustered_grid_is_covered() {
        let mut pts = Vec::new();
        let mut radii = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                pts.push(PointXZ::new(vec![i as f64 * 0.05], j as f64 * 0.05 - 0.2));
                radii.push(0.002 + 0.001 * ((i * 7 + j * 3) % 5) as f64);
            }
        }
        for &s in &[0.3, 0.5] {
            let c = cube_cover(sp(s), &pts, &radii, 12.0).unwrap();
            assert!(c.uncovered.is_empty());
            assert!(c.shrunk_pairwise_disjoint(sp(s), 12.0).unwrap());
            for p in &pts {
                assert!(c.cubes.iter().any(|q| q.contains(p)));
            }
        }
    }
}

use super::{delta, delta_h, h_second, PointXZ, Potential, SParam, TOL_ROOT};
use crate::error::{FracError, Result};
use crate::quadrature::bisect;
use serde::{Deserialize, Serialize};

/// Closed axis-aligned box; the last coordinate is z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(FracError::InvalidParameter("box bounds must have equal, nonzero length".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a <= b)) {
            return Err(FracError::InvalidParameter("box has lo > hi on some axis".into()));
        }
        Ok(Self { lo, hi })
    }

    /// Dimension n of the x part.
    pub fn n(&self) -> usize {
        self.lo.len() - 1
    }

    pub fn z_interval(&self) -> (f64, f64) {
        (self.lo[self.n()], self.hi[self.n()])
    }

    pub fn contains_closed(&self, p: &PointXZ) -> bool {
        let n = self.n();
        p.x.iter().enumerate().all(|(i, v)| *v >= self.lo[i] && *v <= self.hi[i])
            && p.z >= self.lo[n]
            && p.z <= self.hi[n]
    }

    /// Intersection, or `None` if it has empty interior.
    pub fn intersect(&self, other: &AxisBox) -> Option<AxisBox> {
        let lo: Vec<f64> = self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect();
        if lo.iter().zip(&hi).all(|(a, b)| a < b) {
            Some(AxisBox { lo, hi })
        } else {
            None
        }
    }
}

/// The 1-D section {z : δ_h(z₀, z) < R} as an open interval (z_L, z_R).
///
/// Centered at zero the endpoints are ±q_s R^s; otherwise each side is a
/// bisection on the monotone branch of δ_h(z₀, ·).
pub fn section_h(s: SParam, z0: f64, r: f64) -> Result<(f64, f64)> {
    if !(r > 0.0) || !r.is_finite() || !z0.is_finite() {
        return Err(FracError::InvalidParameter(format!("section needs R > 0 and finite center, got R={r}, z0={z0}")));
    }
    if z0 == 0.0 {
        let e = super::q_s(s) * r.powf(s.get());
        return Ok((-e, e));
    }
    let right = side_root(s, z0, r, 1.0)?;
    let left = side_root(s, z0, r, -1.0)?;
    Ok((left, right))
}

fn side_root(s: SParam, z0: f64, r: f64, dir: f64) -> Result<f64> {
    let f = |z: f64| delta_h(s, z0, z) - r;
    // Initial step from the local quadratic model, floored to stay positive.
    let curv = h_second(s, z0).unwrap_or(1.0).max(1e-300);
    let mut step = (2.0 * r / curv).sqrt().max(1e-300);
    if !step.is_finite() {
        step = 1.0;
    }
    let mut far = z0 + dir * step;
    let mut tries = 0;
    while f(far) < 0.0 {
        step *= 2.0;
        far = z0 + dir * step;
        tries += 1;
        if tries > 2000 || !far.is_finite() {
            return Err(FracError::RootNotConverged { lo: z0, hi: far, residual: f(far).abs() });
        }
    }
    let (lo, hi) = if dir > 0.0 { (z0, far) } else { (far, z0) };
    let root = bisect(f, lo, hi, 0.0)?;
    // bisection ran to floating-point resolution; confirm the relative target
    let half_width = (root - z0).abs();
    let dz = f64::EPSILON * root.abs().max(half_width);
    if dz > TOL_ROOT * half_width.max(f64::MIN_POSITIVE) * 1e3 {
        return Err(FracError::RootNotConverged { lo, hi, residual: f(root).abs() });
    }
    Ok(root)
}

/// Implicit description of a section S_R(center) for one of the potentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionDesc {
    pub potential: Potential,
    pub center: PointXZ,
    pub radius: f64,
}

impl SectionDesc {
    pub fn new(potential: Potential, center: PointXZ, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(FracError::InvalidParameter(format!("section radius must be positive, got {radius}")));
        }
        Ok(Self { potential, center, radius })
    }

    /// Exact membership δ(center, p) < R.
    pub fn contains(&self, s: SParam, p: &PointXZ) -> Result<bool> {
        Ok(delta(s, self.potential, &self.center, p)? < self.radius)
    }

    /// Tight bounding box. For φ and h it is the section itself; for Φ it is
    /// the tensor cube Q_R, which contains S_R and lies inside S_{(n+1)R}.
    pub fn bounds(&self, s: SParam) -> Result<AxisBox> {
        let c = &self.center;
        let rx = (2.0 * self.radius).sqrt();
        match self.potential {
            Potential::Phi => {
                let mut lo: Vec<f64> = c.x.iter().map(|v| v - rx).collect();
                let mut hi: Vec<f64> = c.x.iter().map(|v| v + rx).collect();
                lo.push(c.z);
                hi.push(c.z);
                AxisBox::new(lo, hi)
            }
            Potential::H => {
                let (a, b) = section_h(s, c.z, self.radius)?;
                let mut lo = c.x.clone();
                let mut hi = c.x.clone();
                lo.push(a);
                hi.push(b);
                AxisBox::new(lo, hi)
            }
            Potential::Full => Ok(cube(s, c, self.radius)?.to_box()),
        }
    }
}

/// Monge–Ampère cube: the product of the 1-D sections of radius R.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeDesc {
    pub center: PointXZ,
    pub radius: f64,
    /// One open interval per coordinate, x first, z last.
    pub axis_intervals: Vec<(f64, f64)>,
}

/// Build Q_R(center).
pub fn cube(s: SParam, center: &PointXZ, r: f64) -> Result<CubeDesc> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(FracError::InvalidParameter(format!("cube radius must be positive, got {r}")));
    }
    let rx = (2.0 * r).sqrt();
    let mut axis_intervals: Vec<(f64, f64)> = center.x.iter().map(|v| (v - rx, v + rx)).collect();
    axis_intervals.push(section_h(s, center.z, r)?);
    Ok(CubeDesc { center: center.clone(), radius: r, axis_intervals })
}

impl CubeDesc {
    pub fn n(&self) -> usize {
        self.axis_intervals.len() - 1
    }

    /// Membership in the open cube.
    pub fn contains(&self, p: &PointXZ) -> bool {
        let n = self.n();
        p.x.iter().enumerate().all(|(i, v)| *v > self.axis_intervals[i].0 && *v < self.axis_intervals[i].1)
            && p.z > self.axis_intervals[n].0
            && p.z < self.axis_intervals[n].1
    }

    /// Membership in the closed cube.
    pub fn contains_closed(&self, p: &PointXZ) -> bool {
        let n = self.n();
        p.x.iter().enumerate().all(|(i, v)| *v >= self.axis_intervals[i].0 && *v <= self.axis_intervals[i].1)
            && p.z >= self.axis_intervals[n].0
            && p.z <= self.axis_intervals[n].1
    }

    /// Open cubes intersect iff every pair of axis intervals overlaps.
    pub fn intersects(&self, other: &CubeDesc) -> bool {
        self.axis_intervals.iter().zip(&other.axis_intervals).all(|(a, b)| a.0 < b.1 && b.0 < a.1)
    }

    /// True if the closed cube meets the hyperplane {z = 0}.
    pub fn meets_z_zero(&self) -> bool {
        let (a, b) = self.axis_intervals[self.n()];
        a <= 0.0 && b >= 0.0
    }

    pub fn to_box(&self) -> AxisBox {
        AxisBox {
            lo: self.axis_intervals.iter().map(|i| i.0).collect(),
            hi: self.axis_intervals.iter().map(|i| i.1).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{delta_full, delta_h};
    use super::*;

    fn sp(s: f64) -> SParam {
        SParam::new(s).unwrap()
    }

    #[test]
    fn phi_section_is_ball() {
        let sec = SectionDesc::new(Potential::Phi, PointXZ::new(vec![0.0], 0.0), 2.0).unwrap();
        let b = sec.bounds(sp(0.5)).unwrap();
        assert_eq!(b.hi[0], 2.0);
        assert_eq!(b.lo[0], -2.0);
    }

    #[test]
    fn h_section_at_half() {
        let (a, b) = section_h(sp(0.5), 0.0, 1.0).unwrap();
        assert!((b - 2f64.sqrt()).abs() < 1e-15);
        assert!((a + 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn h_section_endpoints_solve_the_equation() {
        for &s in &[0.1, 0.3, 0.5, 0.7, 0.9] {
            for &z0 in &[-2.0, -0.3, 0.05, 1.0, 4.0] {
                for &r in &[1e-6, 1e-2, 1.0, 10.0] {
                    let (a, b) = section_h(sp(s), z0, r).unwrap();
                    assert!(a < z0 && z0 < b);
                    for e in [a, b] {
                        let d = delta_h(sp(s), z0, e);
                        assert!((d - r).abs() <= 1e-9 * r, "s={s} z0={z0} r={r} d={d}");
                    }
                }
            }
        }
    }

    #[test]
    fn cube_at_origin_half() {
        let q = cube(sp(0.5), &PointXZ::new(vec![0.0], 0.0), 1.0).unwrap();
        let r2 = 2f64.sqrt();
        assert!((q.axis_intervals[0].1 - r2).abs() < 1e-15);
        assert!((q.axis_intervals[1].1 - r2).abs() < 1e-15);
        assert!(q.contains(&q.center));
    }

    #[test]
    fn cube_contains_section_points() {
        let s = sp(0.35);
        let c = PointXZ::new(vec![0.2, -0.1], 0.4);
        let q = cube(s, &c, 0.3).unwrap();
        let sec = SectionDesc::new(Potential::Full, c.clone(), 0.3).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                let p = PointXZ::new(vec![c.x[0] + (i as f64 - 10.0) * 0.08, c.x[1]], c.z + (j as f64 - 10.0) * 0.1);
                if sec.contains(s, &p).unwrap() {
                    assert!(q.contains(&p));
                }
                if q.contains(&p) {
                    assert!(delta_full(s, &c, &p) < 3.0 * 0.3);
                }
            }
        }
    }
}

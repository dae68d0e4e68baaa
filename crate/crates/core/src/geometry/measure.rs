use super::{delta_h, h_prime, h_prime_inverse, section_h, AxisBox, PointXZ, SParam};
use crate::error::{FracError, Result};
use crate::quadrature::adaptive_simpson;

/// μ_h([a, b]) = h'(b) − h'(a), the integral of h'' = |z|^{1/s−2}.
pub fn mu_h_interval(s: SParam, a: f64, b: f64) -> Result<f64> {
    if !(a <= b) {
        return Err(FracError::InvalidParameter(format!("interval needs a <= b, got [{a}, {b}]")));
    }
    Ok(h_prime(s, b) - h_prime(s, a))
}

/// μ_Φ of a box: Lebesgue volume of the x part times μ_h of the z interval.
pub fn mu_phi_box(s: SParam, b: &AxisBox) -> Result<f64> {
    let n = b.n();
    let vol: f64 = (0..n).map(|i| b.hi[i] - b.lo[i]).product();
    if vol == 0.0 {
        return Ok(0.0);
    }
    let (za, zb) = b.z_interval();
    Ok(vol * mu_h_interval(s, za, zb)?)
}

/// Volume of the unit ball in R^n.
pub(crate) fn unit_ball_volume(n: usize) -> f64 {
    let nf = n as f64;
    std::f64::consts::PI.powf(0.5 * nf) / crate::special::gamma(0.5 * nf + 1.0)
}

/// μ_Φ(S_R(center)).
///
/// Each z-slice of the section is an x-ball of radius √(2(R − δ_h(z₀,z))).
/// The slice volumes are integrated against dμ_h = dw with w = h'(z), which
/// removes the |z|^{1/s−2} singularity; adaptive Simpson runs with tolerance
/// 1e−9 relative to the bounding-cube measure.
pub fn section_measure(s: SParam, center: &PointXZ, r: f64) -> Result<f64> {
    let (za, zb) = section_h(s, center.z, r)?;
    let (wa, wb) = (h_prime(s, za), h_prime(s, zb));
    let n = center.n();
    if n == 0 {
        return Ok(wb - wa);
    }
    let omega = unit_ball_volume(n);
    let slice = |w: f64| {
        let z = h_prime_inverse(s, w);
        let rem = r - delta_h(s, center.z, z);
        if rem <= 0.0 {
            0.0
        } else {
            omega * (2.0 * rem).powf(0.5 * n as f64)
        }
    };
    let scale = omega * (2.0 * r).powf(0.5 * n as f64) * (wb - wa);
    adaptive_simpson(slice, wa, wb, 1e-9 * scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(s: f64) -> SParam {
        SParam::new(s).unwrap()
    }

    #[test]
    fn mu_h_examples() {
        assert_eq!(mu_h_interval(sp(0.5), -1.0, 1.0).unwrap(), 2.0);
        assert_eq!(mu_h_interval(sp(0.7), 0.3, 0.3).unwrap(), 0.0);
        assert!((mu_h_interval(sp(0.25), 0.0, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(mu_h_interval(sp(0.5), 1.0, 0.0).is_err());
    }

    #[test]
    fn mu_phi_box_examples() {
        let b = AxisBox::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(mu_phi_box(sp(0.5), &b).unwrap(), 2.0);
        let flat = AxisBox::new(vec![0.5, -1.0], vec![0.5, 1.0]).unwrap();
        assert_eq!(mu_phi_box(sp(0.5), &flat).unwrap(), 0.0);
        let left = AxisBox::new(vec![0.0, -1.0], vec![0.4, 1.0]).unwrap();
        let right = AxisBox::new(vec![0.4, -1.0], vec![1.0, 1.0]).unwrap();
        let s = sp(0.3);
        let sum = mu_phi_box(s, &left).unwrap() + mu_phi_box(s, &right).unwrap();
        assert!((sum - mu_phi_box(s, &b).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn disk_measure_at_half() {
        // s = 1/2 centered at the origin: S_R is the disk of radius √(2R).
        let m = section_measure(sp(0.5), &PointXZ::new(vec![0.0], 0.0), 0.7).unwrap();
        let exact = std::f64::consts::PI * 2.0 * 0.7;
        assert!((m - exact).abs() < 1e-8 * exact, "{m} vs {exact}");
    }

    #[test]
    fn z_only_section_measure_scaling() {
        // μ_h(S_R(0)) = 2 (s/(1−s)) q_s^{1/s−1} R^{1−s}
        let s = 0.25;
        let qs = super::super::q_s(sp(s));
        for &r in &[0.1, 1.0, 3.0] {
            let m = section_measure(sp(s), &PointXZ::new(vec![], 0.0), r).unwrap();
            let exact = 2.0 * (s / (1.0 - s)) * qs.powf(1.0 / s - 1.0) * r.powf(1.0 - s);
            assert!((m - exact).abs() < 1e-12 * exact);
        }
    }
}

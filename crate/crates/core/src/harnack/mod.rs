//! Barriers, detachment, localization, covering and Harnack experiments.

mod barrier;
mod estimates;
mod experiments;

pub use barrier::{
    barrier_build, barrier_verify, bathtub_eps0, coeff_at, Barrier, BarrierCase, BarrierReport, BarrierSpec, Bypass,
    Corrector, VerifyOptions, ALPHA_SLACK,
};
pub use estimates::{
    alpha1_theory, ball_harnack, ball_oscillation, gamma_osc, harnack_extension_experiment, harnack_ls_experiment, holder_fit,
    section_harnack, section_oscillation, summarize, EnsembleSummary, HarnackConfig, HarnackConstants, HarnackReport, HolderFit,
};
pub use experiments::{
    absorb_neumann_rhs, covering_iteration, detachment_experiment, localization_experiment, normalize_w_eps, sublevel_ladder,
    AbsorbedRhs, CoveringReport, DetachLocation, DetachmentReport, LocalizationReport, NormalizedField,
};

use crate::error::{FracError, Result};
use crate::geometry::SParam;

/// Q(z₀, z) = (h'(z) − h'(z₀))² / (h''(z) δ_h(z₀, z)) for 0 < z₀, z and s ≤ 1/2.
///
/// With u = z/z₀ − 1 and p = 1/s the ratio depends on u only:
/// Q = ((1+u)^{p−1} − 1)² / ((1−s)((1+u)^p − 1 − p u)(1+u)^{p−2}).
pub fn quotient_q(s: SParam, z0: f64, z: f64) -> Result<f64> {
    if !(z0 > 0.0 && z > 0.0) || !z0.is_finite() || !z.is_finite() {
        return Err(FracError::InvalidParameter(format!("quotient needs z0 > 0 and z > 0, got z0={z0}, z={z}")));
    }
    let sv = s.get();
    if sv > 0.5 {
        return Err(FracError::InvalidParameter(format!("quotient bound is stated for s <= 1/2, got {sv}")));
    }
    if z == z0 {
        return Ok(2.0);
    }
    let p = 1.0 / sv;
    let u = z / z0 - 1.0;
    let l = u.ln_1p();
    let num = ((p - 1.0) * l).exp_m1();
    let b = if u.abs() < 1e-3 {
        let mut term = 1.0;
        let mut acc = 0.0;
        for k in 1..=10 {
            term *= (p - (k as f64 - 1.0)) / k as f64 * u;
            if k >= 2 {
                acc += term;
            }
        }
        acc
    } else {
        (p * l).exp_m1() - p * u
    };
    // divide in log space: (1+u)^{p−2} over- or underflows for extreme ratios
    let ln_q = 2.0 * num.abs().ln() - (1.0 - sv).ln() - b.ln() - (p - 2.0) * l;
    Ok(ln_q.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{delta_h, h_prime, h_second};

    #[test]
    fn quotient_matches_direct_formula() {
        for &s in &[0.1, 0.25, 0.4, 0.5] {
            let sp = SParam::new(s).unwrap();
            for &(z0, z) in &[(1.0, 2.0), (1.0, 0.5), (0.3, 0.9), (2.0, 1.1)] {
                let direct = (h_prime(sp, z) - h_prime(sp, z0)).powi(2) / (h_second(sp, z).unwrap() * delta_h(sp, z0, z));
                let q = quotient_q(sp, z0, z).unwrap();
                assert!((q - direct).abs() < 1e-9 * direct, "s={s} z0={z0} z={z}: {q} vs {direct}");
            }
        }
    }

    #[test]
    fn quotient_at_one_half_is_two() {
        let sp = SParam::new(0.5).unwrap();
        for &z in &[1e-6, 0.3, 1.0, 7.0, 1e5] {
            assert!((quotient_q(sp, 1.0, z).unwrap() - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quotient_is_scale_free_and_rejects_bad_input() {
        let sp = SParam::new(0.3).unwrap();
        let a = quotient_q(sp, 1.0, 3.0).unwrap();
        let b = quotient_q(sp, 1e-4, 3e-4).unwrap();
        assert!((a - b).abs() < 1e-12 * a);
        assert!(quotient_q(sp, 0.0, 1.0).is_err());
        assert!(quotient_q(SParam::new(0.7).unwrap(), 1.0, 2.0).is_err());
        assert!((quotient_q(sp, 1.0, 1.0 + 1e-9).unwrap() - 2.0).abs() < 1e-6);
    }
}

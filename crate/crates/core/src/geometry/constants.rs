use super::{delta, delta_h, section_h, section_measure, PointXZ, Potential, SParam, SectionDesc};
use crate::error::{FracError, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Safety factor applied to empirical maxima before they are used as constants.
pub const ESTIMATE_MARGIN: f64 = 1.05;

/// Structural constants of the Φ geometry.
///
/// `k0`, `eta`, `k2_hat` and `k3_hat` are exact functions of `k`, `theta` and
/// `n`. The remaining fields are empirical and stay `None` until measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryConstants {
    pub n: usize,
    pub theta: f64,
    pub k: f64,
    pub k0: f64,
    pub eta: f64,
    pub k2_hat: f64,
    pub k3_hat: f64,
    pub q_s: Option<f64>,
    pub k_d: Option<f64>,
    pub c0: Option<f64>,
    pub p: Option<f64>,
}

impl GeometryConstants {
    pub fn with_s(mut self, s: SParam) -> Self {
        self.q_s = Some(q_s(s));
        self
    }

    pub fn with_doubling(mut self, k_d: f64) -> Self {
        self.k_d = Some(k_d);
        self
    }

    pub fn with_inclusion(mut self, c0: f64, p: f64) -> Self {
        self.c0 = Some(c0);
        self.p = Some(p);
        self
    }
}

/// q_s = ((1−s)/s²)^s, so that S_R(0) = (−q_s R^s, q_s R^s) for h.
pub fn q_s(s: SParam) -> f64 {
    let s = s.get();
    ((1.0 - s) / (s * s)).powf(s)
}

/// K₀ = 2K² + 2K, η = 1/(K²(2K·K₀ + 1)), K̂₂ = (2n+3)K, K̂₃ = θ²K̂₂.
pub fn derived_constants(k: f64, theta: f64, n: usize) -> Result<GeometryConstants> {
    if !(k >= 1.0) || !(theta >= 1.0) {
        return Err(FracError::InvalidParameter(format!("need K >= 1 and theta >= 1, got K={k}, theta={theta}")));
    }
    let k0 = 2.0 * k * k + 2.0 * k;
    let eta = 1.0 / (k * k * (2.0 * k * k0 + 1.0));
    let k2_hat = (2.0 * n as f64 + 3.0) * k;
    Ok(GeometryConstants {
        n,
        theta,
        k,
        k0,
        eta,
        k2_hat,
        k3_hat: theta * theta * k2_hat,
        q_s: None,
        k_d: None,
        c0: None,
        p: None,
    })
}

/// Sampling region for constant estimates: centers uniform in a box of
/// half-width `half_width`, length scales log-uniform in
/// [10^`log10_min`, 10^`log10_max`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampler {
    pub n: usize,
    pub half_width: f64,
    pub log10_min: f64,
    pub log10_max: f64,
}

impl Default for Sampler {
    fn default() -> Self {
        Self { n: 1, half_width: 2.0, log10_min: -3.0, log10_max: 1.0 }
    }
}

impl Sampler {
    fn point<R: Rng>(&self, rng: &mut R, potential: Potential) -> PointXZ {
        let w = self.half_width;
        let x = (0..self.n).map(|_| rng.random_range(-w..=w)).collect();
        mask(PointXZ::new(x, rng.random_range(-w..=w)), potential)
    }

    fn scale<R: Rng>(&self, rng: &mut R) -> f64 {
        10f64.powf(rng.random_range(self.log10_min..=self.log10_max))
    }

    fn offset<R: Rng>(&self, rng: &mut R, base: &PointXZ, rho: f64, potential: Potential) -> PointXZ {
        let x = base.x.iter().map(|v| v + rho * rng.random_range(-1.0..=1.0)).collect();
        mask(PointXZ::new(x, base.z + rho * rng.random_range(-1.0..=1.0)), potential)
    }
}

fn mask(mut p: PointXZ, potential: Potential) -> PointXZ {
    match potential {
        Potential::Phi => p.z = 0.0,
        Potential::H => p.x.iter_mut().for_each(|v| *v = 0.0),
        Potential::Full => {}
    }
    p
}

/// An empirical constant: the raw maximum, the margin-inflated value, and the
/// configuration that produced the maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimate {
    pub name: String,
    pub raw: f64,
    pub estimate: f64,
    pub samples: usize,
    pub witness: Vec<PointXZ>,
}

impl ConstantEstimate {
    fn new(name: &str) -> Self {
        Self { name: name.into(), raw: 1.0, estimate: ESTIMATE_MARGIN, samples: 0, witness: Vec::new() }
    }

    fn offer(&mut self, ratio: f64, witness: impl FnOnce() -> Vec<PointXZ>) {
        self.samples += 1;
        if ratio.is_finite() && ratio > self.raw {
            self.raw = ratio;
            self.estimate = ratio * ESTIMATE_MARGIN;
            self.witness = witness();
        }
    }
}

/// Running maximum of δ(x₁,x₂) / (min{δ(x₁,x₃),δ(x₃,x₁)} + min{δ(x₂,x₃),δ(x₃,x₂)})
/// over `samples` random triples.
///
/// Half of the third points are placed near the segment [x₁, x₂], where the
/// ratio peaks. The stream of triples depends only on the RNG, so a longer run
/// with the same seed extends a shorter one and the estimate never decreases.
pub fn estimate_quasi_k<R: Rng>(
    s: SParam,
    potential: Potential,
    sampler: &Sampler,
    samples: usize,
    rng: &mut R,
) -> Result<ConstantEstimate> {
    let mut est = ConstantEstimate::new("K");
    let d = |a: &PointXZ, b: &PointXZ| delta(s, potential, a, b);
    for _ in 0..samples {
        let p1 = sampler.point(rng, potential);
        let rho = sampler.scale(rng);
        let p2 = sampler.offset(rng, &p1, rho, potential);
        let p3 = if rng.random_bool(0.5) {
            let t: f64 = rng.random_range(0.0..=1.0);
            let jitter = rho * 10f64.powf(rng.random_range(-4.0..=0.0));
            let mid = PointXZ::new(
                p1.x.iter().zip(&p2.x).map(|(a, b)| a + t * (b - a)).collect(),
                p1.z + t * (p2.z - p1.z),
            );
            sampler.offset(rng, &mid, jitter, potential)
        } else {
            sampler.offset(rng, &p1, 2.0 * rho, potential)
        };
        let num = d(&p1, &p2)?;
        let den = d(&p1, &p3)?.min(d(&p3, &p1)?) + d(&p2, &p3)?.min(d(&p3, &p2)?);
        if den > 0.0 {
            est.offer(num / den, || vec![p1.clone(), p2.clone(), p3.clone()]);
        } else {
            est.samples += 1;
        }
    }
    Ok(est)
}

/// A point on the boundary of S_R(center) for the given potential.
fn boundary_point<R: Rng>(s: SParam, potential: Potential, center: &PointXZ, r: f64, rng: &mut R) -> Result<PointXZ> {
    let n = center.n();
    let unit = |rng: &mut R| -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > 1e-3 && norm <= 1.0 {
                return v.into_iter().map(|a| a / norm).collect();
            }
        }
    };
    Ok(match potential {
        Potential::Phi => {
            let u = unit(rng);
            let rad = (2.0 * r).sqrt();
            PointXZ::new(center.x.iter().zip(&u).map(|(c, e)| c + rad * e).collect(), center.z)
        }
        Potential::H => {
            let (a, b) = section_h(s, center.z, r)?;
            PointXZ::new(center.x.clone(), if rng.random_bool(0.5) { a } else { b })
        }
        Potential::Full => {
            let (a, b) = section_h(s, center.z, r)?;
            let z = rng.random_range(a..=b);
            let rem = (r - delta_h(s, center.z, z)).max(0.0);
            let rad = (2.0 * rem).sqrt();
            let u = unit(rng);
            PointXZ::new(center.x.iter().zip(&u).map(|(c, e)| c + rad * e).collect(), z)
        }
    })
}

/// A point drawn uniformly from S_R(center) by rejection from its bounding box.
fn interior_point<R: Rng>(s: SParam, sec: &SectionDesc, rng: &mut R) -> Result<PointXZ> {
    let b = sec.bounds(s)?;
    let n = sec.center.n();
    for _ in 0..10_000 {
        let x = (0..n)
            .map(|i| if b.lo[i] < b.hi[i] { rng.random_range(b.lo[i]..b.hi[i]) } else { b.lo[i] })
            .collect();
        let z = if b.lo[n] < b.hi[n] { rng.random_range(b.lo[n]..b.hi[n]) } else { b.lo[n] };
        let p = PointXZ::new(x, z);
        if sec.contains(s, &p)? {
            return Ok(p);
        }
    }
    Ok(sec.center.clone())
}

/// Smallest θ making x₁ ∈ S_R(x) ⇒ S_R(x) ⊂ S_{θR}(x₁) on the sample.
///
/// Since δ(x₁, ·) is convex and sections are convex, the supremum over
/// S_R(x) is approached on its boundary; half of the test points are drawn
/// there and half from the interior.
pub fn estimate_engulfing_theta<R: Rng>(
    s: SParam,
    potential: Potential,
    sampler: &Sampler,
    samples: usize,
    rng: &mut R,
) -> Result<ConstantEstimate> {
    let mut est = ConstantEstimate::new("theta");
    for _ in 0..samples {
        let c = sampler.point(rng, potential);
        let r = sampler.scale(rng);
        let sec = SectionDesc::new(potential, c.clone(), r)?;
        let x1 = interior_point(s, &sec, rng)?;
        let y = if rng.random_bool(0.5) { boundary_point(s, potential, &c, r, rng)? } else { interior_point(s, &sec, rng)? };
        let ratio = delta(s, potential, &x1, &y)? / r;
        est.offer(ratio, || vec![c.clone(), x1.clone(), y.clone()]);
    }
    Ok(est)
}

/// Outcome of a doubling check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingCheck {
    pub passed: bool,
    /// μ(S_{r₂}) / ((r₂/r₁)^d μ(S_{r₁})) with d = n + 1.
    pub measured_k_d: f64,
    pub mu_r1: f64,
    pub mu_r2: f64,
}

/// Verify μ_Φ(S_{r₂}) ≤ K_d (r₂/r₁)^d μ_Φ(S_{r₁}) at `center`, d = n + 1.
pub fn reverse_doubling_check(s: SParam, center: &PointXZ, r1: f64, r2: f64, k_d: f64) -> Result<DoublingCheck> {
    if !(r1 > 0.0 && r1 <= r2) {
        return Err(FracError::InvalidParameter(format!("need 0 < r1 <= r2, got r1={r1}, r2={r2}")));
    }
    let d = center.n() as f64 + 1.0;
    let mu_r1 = section_measure(s, center, r1)?;
    let mu_r2 = if r2 == r1 { mu_r1 } else { section_measure(s, center, r2)? };
    let measured_k_d = mu_r2 / ((r2 / r1).powf(d) * mu_r1);
    Ok(DoublingCheck { passed: measured_k_d <= k_d, measured_k_d, mu_r1, mu_r2 })
}

/// Outcome of the section-inclusion check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionCheck {
    pub passed: bool,
    /// max δ(x₀, q)/(r₂ t) over sampled boundary points q of the inner section.
    pub max_ratio: f64,
    pub inner_radius: f64,
}

/// Deterministic boundary samples of S_ρ(center) for Φ.
fn boundary_samples(s: SParam, center: &PointXZ, rho: f64, per_axis: usize) -> Result<Vec<PointXZ>> {
    let n = center.n();
    let (a, b) = section_h(s, center.z, rho)?;
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    if n == 1 {
        dirs.push(vec![1.0]);
        dirs.push(vec![-1.0]);
    } else if n == 2 {
        for k in 0..16 {
            let t = k as f64 * std::f64::consts::PI / 8.0;
            dirs.push(vec![t.cos(), t.sin()]);
        }
    } else {
        for i in 0..n {
            for sign in [-1.0, 1.0] {
                let mut v = vec![0.0; n];
                v[i] = sign;
                dirs.push(v);
            }
        }
    }
    let mut pts = Vec::new();
    for k in 0..=per_axis {
        // cosine spacing clusters samples near the z endpoints
        let t = 0.5 - 0.5 * (std::f64::consts::PI * k as f64 / per_axis as f64).cos();
        let z = a + t * (b - a);
        let rem = (rho - delta_h(s, center.z, z)).max(0.0);
        let rad = (2.0 * rem).sqrt();
        if n == 0 {
            pts.push(PointXZ::new(vec![], z));
            continue;
        }
        for d in &dirs {
            pts.push(PointXZ::new(center.x.iter().zip(d).map(|(c, e)| c + rad * e).collect(), z));
        }
    }
    Ok(pts)
}

/// Check S_{C₀(r₂−r₁)^p t}(x₁) ⊂ S_{r₂t}(x₀) for x₁ ∈ S_{r₁t}(x₀) on sampled
/// boundary points of the inner section.
#[allow(clippy::too_many_arguments)]
pub fn guti_inclusion_check(
    s: SParam,
    x0: &PointXZ,
    x1: &PointXZ,
    r1: f64,
    r2: f64,
    t: f64,
    c0: f64,
    p: f64,
) -> Result<InclusionCheck> {
    if !(r1 > 0.0 && r1 <= r2 && r2 <= 1.0 && t > 0.0) {
        return Err(FracError::InvalidParameter(format!("need 0 < r1 <= r2 <= 1 and t > 0, got r1={r1}, r2={r2}, t={t}")));
    }
    if delta(s, Potential::Full, x0, x1)? >= r1 * t {
        return Err(FracError::Precondition("inner center must lie in S_{r1 t}(x0)".into()));
    }
    let rho = c0 * (r2 - r1).powf(p) * t;
    if rho <= 0.0 {
        return Ok(InclusionCheck { passed: true, max_ratio: 0.0, inner_radius: 0.0 });
    }
    let mut max_ratio: f64 = 0.0;
    for q in boundary_samples(s, x1, rho, 64)? {
        max_ratio = max_ratio.max(delta(s, Potential::Full, x0, &q)? / (r2 * t));
    }
    Ok(InclusionCheck { passed: max_ratio < 1.0, max_ratio, inner_radius: rho })
}

/// Largest C₀ for exponent `p` under which the inclusion holds on `samples`
/// random configurations, shrunk by the estimate margin.
pub fn calibrate_inclusion_c0<R: Rng>(s: SParam, n: usize, p: f64, samples: usize, rng: &mut R) -> Result<f64> {
    let mut best = f64::INFINITY;
    for _ in 0..samples {
        let x0 = PointXZ::new((0..n).map(|_| rng.random_range(-1.0..=1.0)).collect(), rng.random_range(-1.0..=1.0));
        let t = 10f64.powf(rng.random_range(-2.0..=0.0));
        let r1: f64 = rng.random_range(0.05..0.9);
        let r2: f64 = rng.random_range(r1..=1.0);
        if r2 - r1 < 1e-3 {
            continue;
        }
        let sec = SectionDesc::new(Potential::Full, x0.clone(), r1 * t)?;
        let x1 = interior_point(s, &sec, rng)?;
        if delta(s, Potential::Full, &x0, &x1)? >= r1 * t {
            continue;
        }
        // bisection on C₀ for this configuration
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while guti_inclusion_check(s, &x0, &x1, r1, r2, t, hi, p)?.passed && hi < 1e6 {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if guti_inclusion_check(s, &x0, &x1, r1, r2, t, mid, p)?.passed {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        best = best.min(lo);
    }
    Ok(best / ESTIMATE_MARGIN)
}

/// Verdict of the ordering lemma for x₀ ≤ x₁ ≤ x₂.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderingVerdict {
    /// δ(x₀,x₁) < δ(x₀,x₂)
    pub first: bool,
    /// δ(x₁,x₂) < δ(x₀,x₂)
    pub second: bool,
}

impl OrderingVerdict {
    pub fn holds(&self) -> bool {
        self.first && self.second
    }
}

/// Check both monotonicity inequalities for a 1-D potential (φ or h).
pub fn ordering_check(s: SParam, potential: Potential, x0: f64, x1: f64, x2: f64) -> Result<OrderingVerdict> {
    if !(x0 <= x1 && x1 <= x2 && x0 < x2) {
        return Err(FracError::InvalidParameter(format!("need x0 <= x1 <= x2 with x0 < x2, got ({x0}, {x1}, {x2})")));
    }
    let d = |a: f64, b: f64| -> Result<f64> {
        match potential {
            Potential::Phi => Ok(0.5 * (b - a) * (b - a)),
            Potential::H => Ok(delta_h(s, a, b)),
            Potential::Full => Err(FracError::InvalidParameter("ordering check needs a 1-D potential".into())),
        }
    };
    let d02 = d(x0, x2)?;
    Ok(OrderingVerdict { first: d(x0, x1)? < d02, second: d(x1, x2)? < d02 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sp(s: f64) -> SParam {
        SParam::new(s).unwrap()
    }

    #[test]
    fn derived_examples() {
        let g = derived_constants(2.0, 1.0, 1).unwrap();
        assert_eq!(g.k0, 12.0);
        assert_eq!(g.eta, 1.0 / 196.0);
        let g = derived_constants(2.0, 4.0, 1).unwrap();
        assert_eq!(g.k2_hat, 10.0);
        assert_eq!(g.k3_hat, 160.0);
        let g = derived_constants(1.0, 1.0, 3).unwrap();
        assert_eq!(g.k0, 4.0);
        assert_eq!(g.eta, 1.0 / 9.0);
        assert!(derived_constants(0.5, 1.0, 1).is_err());
    }

    #[test]
    fn q_half_is_sqrt2() {
        assert_eq!(q_s(sp(0.5)), 2f64.sqrt());
    }

    #[test]
    fn quasi_k_monotone_in_samples() {
        let s = sp(0.3);
        let smp = Sampler::default();
        let a = estimate_quasi_k(s, Potential::Full, &smp, 500, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = estimate_quasi_k(s, Potential::Full, &smp, 2000, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert!(b.raw >= a.raw);
        assert!(a.raw >= 1.0);
        assert_eq!(b.witness.len(), 3);
    }

    #[test]
    fn theta_for_phi_bounded_by_four() {
        let smp = Sampler { n: 2, ..Sampler::default() };
        let e = estimate_engulfing_theta(sp(0.5), Potential::Phi, &smp, 20_000, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(e.raw <= 4.0 + 1e-12, "{}", e.raw);
        assert!(e.raw > 2.0);
    }

    #[test]
    fn doubling_at_half_centered() {
        let c = PointXZ::new(vec![0.0], 0.0);
        let chk = reverse_doubling_check(sp(0.5), &c, 0.1, 0.4, 1.0).unwrap();
        // μ ∝ R in the plane, so the measured constant is (r1/r2)
        assert!((chk.measured_k_d - 0.25).abs() < 1e-7);
        assert!(chk.passed);
        let same = reverse_doubling_check(sp(0.5), &c, 0.3, 0.3, 1.0).unwrap();
        assert!((same.measured_k_d - 1.0).abs() < 1e-15 && same.passed);
    }

    #[test]
    fn inclusion_check_behaviour() {
        let s = sp(0.5);
        let x0 = PointXZ::new(vec![0.0], 0.0);
        let x1 = PointXZ::new(vec![0.1], 0.05);
        let same = guti_inclusion_check(s, &x0, &x1, 0.5, 0.5, 1.0, 0.125, 2.0).unwrap();
        assert!(same.passed && same.inner_radius == 0.0);
        let big = guti_inclusion_check(s, &x0, &x1, 0.5, 1.0, 1.0, 0.125, 2.0).unwrap();
        let small = guti_inclusion_check(s, &x0, &x1, 0.5, 1.0, 1.0, 0.0125, 2.0).unwrap();
        assert!(!big.passed || small.passed);
        assert!(small.max_ratio <= big.max_ratio);
    }

    #[test]
    fn ordering_examples() {
        assert!(ordering_check(sp(0.5), Potential::H, 0.0, 1.0, 2.0).unwrap().holds());
        assert!(ordering_check(sp(0.25), Potential::H, 0.1, 0.5, 0.9).unwrap().holds());
        let v = ordering_check(sp(0.4), Potential::H, 0.2, 0.2, 0.7).unwrap();
        assert!(v.first);
        assert!(ordering_check(sp(0.4), Potential::H, 0.5, 0.2, 0.7).is_err());
    }
}

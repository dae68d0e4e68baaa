use crate::error::{FracError, Result};
use crate::geometry::{delta_full, delta_phi, h_prime, h_prime_inverse, q_s, section_h, PointXZ, SParam};
use crate::quadrature::{bisect, composite_gauss_legendre};
use crate::semigroup::CoeffField;
use serde::{Deserialize, Serialize};

/// Slack factor on the smallest admissible exponent α.
pub const ALPHA_SLACK: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierCase {
    /// z₀ > 0, s ≤ 1/2: (δ_Φ)^{−α}.
    One,
    /// z₀ ≥ 0, s > 1/2: (δ_Φ − h_ε)^{−α}.
    Two,
    /// z₀ = 0, s ≤ 1/2: (δ_Φ − g_ε)^{−α}.
    Three,
    /// z₀ ≤ 0: even reflection of the case for (x₀, −z₀).
    Four,
}

impl BarrierCase {
    /// The case for the upper half when z₀ ≥ 0, otherwise [`BarrierCase::Four`].
    pub fn select(s: SParam, z0: f64) -> Self {
        if z0 < 0.0 {
            BarrierCase::Four
        } else if s.get() > 0.5 {
            BarrierCase::Two
        } else if z0 > 0.0 {
            BarrierCase::One
        } else {
            BarrierCase::Three
        }
    }

    pub fn number(self) -> u8 {
        match self {
            BarrierCase::One => 1,
            BarrierCase::Two => 2,
            BarrierCase::Three => 3,
            BarrierCase::Four => 4,
        }
    }

    pub fn from_number(k: u8) -> Result<Self> {
        Ok(match k {
            1 => BarrierCase::One,
            2 => BarrierCase::Two,
            3 => BarrierCase::Three,
            4 => BarrierCase::Four,
            _ => return Err(FracError::InvalidParameter(format!("barrier case must be 1..4, got {k}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierSpec {
    pub case: BarrierCase,
    pub s: SParam,
    pub gamma: f64,
    pub center: PointXZ,
    pub r: f64,
    /// Ellipticity bounds λ ≤ a^{ij} ≤ Λ.
    pub lambda: f64,
    pub cap: f64,
}

impl BarrierSpec {
    pub fn n(&self) -> usize {
        self.center.n()
    }

    /// nΛ + 1.
    pub fn trace_bound(&self) -> f64 {
        self.n() as f64 * self.cap + 1.0
    }
}

/// Convex correction h_ε for Case 2 on [S_{2r}(z₀)]⁺ = (z_L, z_R):
/// h_ε'' = 2(nΛ+1)ψ h'', h_ε(z_R) = 0, h_ε'(z_L) = ε μ_h(S_{2r}(z₀)).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bypass {
    pub s: SParam,
    pub eps: f64,
    /// A∞ threshold paired with ε.
    pub eps0: f64,
    pub z_l: f64,
    pub z_r: f64,
    /// ψ = 1 on [z_L, ζ].
    pub zeta: f64,
    /// ψ = ε beyond ζ̃.
    pub zeta_tilde: f64,
    /// μ_h(S_{2r}(z₀)).
    pub mu: f64,
    /// |S_{2r}(z₀)|.
    pub length: f64,
    /// 2(nΛ + 1).
    pub weight: f64,
}

const GL_PANELS: usize = 8;
const GL_ORDER: usize = 12;

impl Bypass {
    pub fn psi(&self, z: f64) -> f64 {
        if z <= self.zeta {
            1.0
        } else if z >= self.zeta_tilde {
            self.eps
        } else {
            let t = (z - self.zeta) / (self.zeta_tilde - self.zeta);
            1.0 - (1.0 - self.eps) * t * t * (3.0 - 2.0 * t)
        }
    }

    /// ∫_{lo}^{hi} ψ(u) g(u) dμ_h(u) over part of the transition, in w = h'(u).
    fn transition<G: Fn(f64) -> f64>(&self, lo: f64, hi: f64, g: G) -> f64 {
        let (lo, hi) = (lo.max(self.zeta), hi.min(self.zeta_tilde));
        if !(lo < hi) {
            return 0.0;
        }
        let (nodes, weights) = composite_gauss_legendre(h_prime(self.s, lo), h_prime(self.s, hi), GL_PANELS, GL_ORDER);
        nodes
            .iter()
            .zip(&weights)
            .map(|(&w, &wt)| {
                let u = h_prime_inverse(self.s, w);
                wt * self.psi(u) * g(u)
            })
            .sum()
    }

    /// ∫_{z_L}^{z} ψ dμ_h.
    fn psi_mass(&self, z: f64) -> f64 {
        let s = self.s;
        let z = z.clamp(self.z_l, self.z_r);
        let plateau = h_prime(s, z.min(self.zeta)) - h_prime(s, self.z_l);
        let mid = self.transition(self.zeta, z, |_| 1.0);
        let tail = if z > self.zeta_tilde { self.eps * (h_prime(s, z) - h_prime(s, self.zeta_tilde)) } else { 0.0 };
        plateau + mid + tail
    }

    /// h_ε'(z).
    pub fn d1(&self, z: f64) -> f64 {
        self.eps * self.mu + self.weight * self.psi_mass(z)
    }

    /// |z|^{2−1/s} h_ε''(z) = 2(nΛ+1)ψ(z).
    pub fn weighted_d2(&self, z: f64) -> f64 {
        self.weight * self.psi(z)
    }

    /// h_ε(z) = −εμ(z_R − z) − 2(nΛ+1)[(z_R − z)∫_{z_L}^{z}ψ dμ_h + ∫_z^{z_R}ψ(u)(z_R − u) dμ_h(u)].
    pub fn value(&self, z: f64) -> f64 {
        let s = self.s;
        let z = z.clamp(self.z_l, self.z_r);
        let zr = self.z_r;
        // ∫_a^b (z_R − u) dμ_h with ∫u dμ_h = s u^{1/s} for u ≥ 0
        let lin = |a: f64, b: f64| {
            if !(a < b) {
                return 0.0;
            }
            let p = 1.0 / s.get();
            zr * (h_prime(s, b) - h_prime(s, a)) - s.get() * (b.powf(p) - a.powf(p))
        };
        let plateau = lin(z.max(self.z_l), self.zeta.max(z));
        let mid = self.transition(z, zr, |u| zr - u);
        let tail = self.eps * lin(z.max(self.zeta_tilde), zr);
        -self.eps * self.mu * (zr - z) - self.weight * ((zr - z) * self.psi_mass(z) + plateau + mid + tail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corrector {
    None,
    Bypass(Bypass),
    /// g_ε(z) = ε r^{1−s} z − ε C̄₂ r.
    Linear { eps: f64, c2: f64, slope: f64 },
}

impl Corrector {
    fn value(&self, z: f64, r: f64) -> f64 {
        match self {
            Corrector::None => 0.0,
            Corrector::Bypass(b) => b.value(z),
            Corrector::Linear { eps, c2, slope } => slope * z - eps * c2 * r,
        }
    }

    fn d1(&self, z: f64) -> f64 {
        match self {
            Corrector::None => 0.0,
            Corrector::Bypass(b) => b.d1(z),
            Corrector::Linear { slope, .. } => *slope,
        }
    }

    fn weighted_d2(&self, z: f64) -> f64 {
        match self {
            Corrector::Bypass(b) => b.weighted_d2(z),
            _ => 0.0,
        }
    }
}

/// φ = a α⁻¹ ((2+E)r)^{α+1} [F^{−α} − ((1+E)r)^{−α}] with F = δ_Φ(c, ·) − k(z)
/// on the upper partial ring around c = (x₀, |z₀|); Case 4 evaluates at (x, −z).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Barrier {
    pub spec: BarrierSpec,
    /// Case actually built on the upper half.
    pub base_case: BarrierCase,
    pub base_center: PointXZ,
    pub mirrored: bool,
    pub a: f64,
    pub alpha: f64,
    /// Corrector size: −E r ≤ k ≤ 0.
    pub e: f64,
    pub corrector: Corrector,
    /// ln of the constant C in φ ≤ C a r on ∂S_{γr}.
    pub ln_c_bound: f64,
}

fn alpha_from(min_alpha_plus_one: f64) -> f64 {
    let base = min_alpha_plus_one - 1.0;
    if base > 0.0 {
        ALPHA_SLACK * base
    } else {
        1.0
    }
}

/// Builds the barrier; calibration failures name the inequality that broke.
pub fn barrier_build(spec: &BarrierSpec, a: f64) -> Result<Barrier> {
    let s = spec.s;
    if !(spec.gamma > 0.0 && spec.gamma < 1.0) {
        return Err(FracError::InvalidParameter(format!("gamma must lie in (0, 1), got {}", spec.gamma)));
    }
    if !(spec.r > 0.0) || !(a > 0.0) || !(spec.lambda > 0.0) || !(spec.cap >= spec.lambda) {
        return Err(FracError::InvalidParameter("barrier needs r > 0, a > 0 and 0 < lambda <= Lambda".into()));
    }
    let expected = BarrierCase::select(s, spec.center.z);
    let consistent = spec.case == expected || (spec.case == BarrierCase::Four && spec.center.z <= 0.0);
    if !consistent {
        return Err(FracError::InvalidParameter(format!(
            "case {} does not match s = {}, z0 = {} (expected case {})",
            spec.case.number(),
            s.get(),
            spec.center.z,
            expected.number()
        )));
    }
    let mirrored = spec.case == BarrierCase::Four;
    let base_center = PointXZ::new(spec.center.x.clone(), spec.center.z.abs());
    let base_case = BarrierCase::select(s, base_center.z);
    let (gamma, r, lambda) = (spec.gamma, spec.r, spec.lambda);
    let tb = spec.trace_bound();
    let (alpha, e, corrector) = match base_case {
        BarrierCase::One => {
            let need = tb * (1.0 + 4.0 / gamma);
            (alpha_from((need / (2.0 * lambda)).max(need)), 0.0, Corrector::None)
        }
        BarrierCase::Three => {
            let sv = s.get();
            let c2 = q_s(s) * 2f64.powf(sv);
            let c3 = 0.5 * gamma / c2;
            let eps = 0.5 * c3.min(1.0 / c2);
            let e = c2 * eps;
            let c4 = (c3 - eps) * (c3 - eps);
            let z_term = c4 * c2.powf((2.0 * sv - 1.0) / sv);
            let need = 2.0 * tb * (2.0 + e) * (1.0 / (lambda * gamma)).max(1.0 / z_term);
            let slope = eps * r.powf(1.0 - sv);
            (alpha_from(need), e, Corrector::Linear { eps, c2, slope })
        }
        BarrierCase::Two => {
            let (by, e, d2) = calibrate_bypass(s, base_center.z, r, gamma, tb)?;
            let ratio = by.length / by.mu;
            let need = 2.0 * tb * (2.0 + e) * (1.0 / (lambda * gamma)).max(r / (by.eps0 * ratio * d2));
            (alpha_from(need), e, Corrector::Bypass(by))
        }
        BarrierCase::Four => unreachable!("base case is built on the upper half"),
    };
    // Case 1: α⁻¹ 2^{α+1}(γ^{−α} − 1); Cases 2, 3: α⁻¹(2+E)^{α+1} γ^{−α}
    let ln_c_bound = match base_case {
        BarrierCase::One => -alpha.ln() + (alpha + 1.0) * 2f64.ln() + ln_exp_m1(-alpha * gamma.ln()),
        _ => -alpha.ln() + (alpha + 1.0) * (2.0 + e).ln() - alpha * gamma.ln(),
    };
    Ok(Barrier { spec: spec.clone(), base_case, base_center, mirrored, a, alpha, e, corrector, ln_c_bound })
}

/// ln(eˣ − 1) for x > 0.
fn ln_exp_m1(x: f64) -> f64 {
    if x > 30.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

/// Picks ε by halving until h_ε' stays below the lower bound of |∂_z δ_h|
/// away from z₀ and the correction is smaller than r. Returns the corrector,
/// E and the squared derivative gap.
fn calibrate_bypass(s: SParam, z0: f64, r: f64, gamma: f64, tb: f64) -> Result<(Bypass, f64, f64)> {
    let (zl_full, zr_full) = section_h(s, z0, 2.0 * r)?;
    let length = zr_full - zl_full;
    let mu = h_prime(s, zr_full) - h_prime(s, zl_full);
    let (z_l, z_r) = (zl_full.max(0.0), zr_full);
    let grad_floor = 0.5 * gamma * r / length;
    let p = 2.0 - 1.0 / s.get();
    let mut eps = 0.5;
    for _ in 0..60 {
        let eps0 = bathtub_eps0(s, zl_full, zr_full, eps)?;
        let zeta = (eps0 * length / mu).powf(1.0 / p).clamp(z_l, z_r);
        let zeta_tilde = h_prime_inverse(s, h_prime(s, zeta) + 0.5 * eps * mu).min(z_r);
        let by = Bypass { s, eps, eps0, z_l, z_r, zeta, zeta_tilde, mu, length, weight: 2.0 * tb };
        let max_d1 = by.d1(z_r);
        let e = -by.value(z_l) / r;
        if max_d1 < grad_floor && e < 1.0 {
            let gap = grad_floor - max_d1;
            return Ok((by, e, gap * gap));
        }
        eps *= 0.5;
    }
    Err(FracError::Calibration(format!(
        "no eps with max h_eps' < (gamma r/2)/|S| = {grad_floor:e} and E < 1 for s = {}, z0 = {z0}, r = {r}",
        s.get()
    )))
}

/// Largest ε₀ with |E|/|S| ≤ ε₀ ⇒ μ_h(E) ≤ ε μ_h(S) for E ⊂ S = (lo, hi).
///
/// For s > 1/2 the density |z|^{1/s−2} decreases in |z|, so the extremal set
/// of a given length is {|z| < τ} ∩ S; τ solves μ_h({|z| < τ} ∩ S) = ε μ_h(S).
pub fn bathtub_eps0(s: SParam, lo: f64, hi: f64, eps: f64) -> Result<f64> {
    if !(lo < hi) || !(eps > 0.0 && eps < 1.0) {
        return Err(FracError::InvalidParameter("bathtub needs lo < hi and eps in (0, 1)".into()));
    }
    if s.get() <= 0.5 {
        return Err(FracError::InvalidParameter("bathtub threshold is for s > 1/2".into()));
    }
    let total = h_prime(s, hi) - h_prime(s, lo);
    let near = |tau: f64| {
        let (a, b) = (lo.max(-tau), hi.min(tau));
        if a < b {
            (h_prime(s, b) - h_prime(s, a), b - a)
        } else {
            (0.0, 0.0)
        }
    };
    let tmax = lo.abs().max(hi.abs());
    let tau = bisect(|t| near(t).0 - eps * total, 0.0, tmax, 0.0)?;
    Ok(near(tau).1 / (hi - lo))
}

/// Multilinear interpolation of the coefficient matrix at x.
pub fn coeff_at(coeffs: &CoeffField, x: &[f64]) -> Result<[f64; 3]> {
    let g = &coeffs.grid;
    if x.len() != g.dim() {
        return Err(FracError::InvalidParameter("point dimension differs from the coefficient grid".into()));
    }
    let mut cells = Vec::with_capacity(x.len());
    for (d, &v) in x.iter().enumerate() {
        let ax = &g.axes[d];
        if v < ax.lo || v > ax.hi {
            return Err(FracError::Precondition(format!("x = {v} lies outside the coefficient grid")));
        }
        let t = (v - ax.lo) / ax.spacing();
        let i = (t.floor() as usize).min(ax.nodes - 2);
        cells.push((i, t - i as f64));
    }
    let mut out = [0.0; 3];
    for corner in 0..(1usize << x.len()) {
        let mut w = 1.0;
        let mut multi = Vec::with_capacity(x.len());
        for (d, &(i, t)) in cells.iter().enumerate() {
            let up = (corner >> d) & 1 == 1;
            w *= if up { t } else { 1.0 - t };
            multi.push(i + up as usize);
        }
        if w == 0.0 {
            continue;
        }
        let e = coeffs.entries[g.flat(&multi)];
        for k in 0..3 {
            out[k] += w * e[k];
        }
    }
    Ok(out)
}

impl Barrier {
    pub fn case(&self) -> BarrierCase {
        self.spec.case
    }

    fn to_base(&self, p: &PointXZ) -> PointXZ {
        if self.mirrored {
            p.mirrored()
        } else {
            p.clone()
        }
    }

    /// δ_Φ from the section center.
    pub fn distance(&self, p: &PointXZ) -> f64 {
        delta_full(self.spec.s, &self.base_center, &self.to_base(p))
    }

    /// True on the closed partial ring [S̄_{2r} \ S_{γr}]^±.
    pub fn in_domain(&self, p: &PointXZ) -> bool {
        let q = self.to_base(p);
        let d = delta_full(self.spec.s, &self.base_center, &q);
        q.z >= 0.0 && d >= self.spec.gamma * self.spec.r && d <= 2.0 * self.spec.r
    }

    /// F = δ_Φ − k(z) on the upper half.
    pub fn f_value(&self, p: &PointXZ) -> f64 {
        let q = self.to_base(p);
        delta_full(self.spec.s, &self.base_center, &q) - self.corrector.value(q.z, self.spec.r)
    }

    fn top(&self) -> f64 {
        (2.0 + self.e) * self.spec.r
    }

    /// φ > 0 iff F < (1+E)r.
    pub fn is_positive(&self, p: &PointXZ) -> bool {
        self.f_value(p) < (1.0 + self.e) * self.spec.r
    }

    /// ln(φ/(a r)) where φ > 0, −∞ otherwise.
    pub fn ln_value_over_ar(&self, p: &PointXZ) -> f64 {
        let f = self.f_value(p);
        let (l1, l2) = ((self.top() / f).ln(), ((2.0 + self.e) / (1.0 + self.e)).ln());
        if !(l1 > l2) {
            return f64::NEG_INFINITY;
        }
        let al = self.alpha;
        (-al.ln()) + (2.0 + self.e).ln() + al * l1 + (-(al * (l2 - l1)).exp()).ln_1p()
    }

    /// φ(p); may overflow to +∞ for very large α.
    pub fn value(&self, p: &PointXZ) -> f64 {
        let f = self.f_value(p);
        let al = self.alpha;
        let scale = self.a / al * self.top();
        scale * ((al * (self.top() / f).ln()).exp() - (al * ((2.0 + self.e) / (1.0 + self.e)).ln()).exp())
    }

    /// (a^{ij}∂_ij φ + |z|^{2−1/s}∂_zz φ) / (a(nΛ+1)) at z ≠ 0 with matrix `m`.
    pub fn l_ratio(&self, p: &PointXZ, m: [f64; 3]) -> f64 {
        let q = self.to_base(p);
        let s = self.spec.s;
        let c = &self.base_center;
        let n = q.n();
        let dx: Vec<f64> = q.x.iter().zip(&c.x).map(|(x, x0)| x - x0).collect();
        let (quad, tr) = if n == 1 {
            (m[0] * dx[0] * dx[0], m[0])
        } else {
            (m[0] * dx[0] * dx[0] + 2.0 * m[1] * dx[0] * dx[1] + m[2] * dx[1] * dx[1], m[0] + m[2])
        };
        let w = q.z.abs().powf(2.0 - 1.0 / s.get());
        let dzf = h_prime(s, q.z) - h_prime(s, c.z) - self.corrector.d1(q.z);
        let f = delta_phi(&c.x, &q.x) + crate::geometry::delta_h(s, c.z, q.z) - self.corrector.value(q.z, self.spec.r);
        let bracket = (self.alpha + 1.0) * (quad + w * dzf * dzf) - f * (tr + 1.0 - self.corrector.weighted_d2(q.z));
        if bracket <= 0.0 {
            return bracket;
        }
        let ln = (self.alpha + 1.0) * self.top().ln() - (self.alpha + 2.0) * f.ln() + bracket.ln() - self.spec.trace_bound().ln();
        ln.exp()
    }

    /// ∂_{z+}φ(x, 0) for the upper half, −∂_{z−}ψ(x, 0) for the mirror; both
    /// equal a((2+E)r)^{α+1}F^{−α−1}(h'(z₀) + k'(0)).
    pub fn neumann_derivative(&self, x: &[f64]) -> f64 {
        let p = PointXZ::new(x.to_vec(), 0.0);
        let f = self.f_value(&p);
        let slope = h_prime(self.spec.s, self.base_center.z) + self.corrector.d1(0.0);
        if slope <= 0.0 {
            return slope;
        }
        (self.a.ln() + (self.alpha + 1.0) * (self.top() / f).ln() + slope.ln()).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Tensor nodes per x axis and along z over the bounding box of S_{2r}.
    pub nx: usize,
    pub nz: usize,
    /// x samples for the exact boundary points of ∂S_{2r} and ∂S_{γr}.
    pub boundary: usize,
    /// Required margin: L φ ≥ (1 + slack) a(nΛ+1).
    pub slack: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { nx: 81, nz: 81, boundary: 400, slack: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierReport {
    pub case: u8,
    pub alpha: f64,
    pub e: f64,
    pub eps: Option<f64>,
    pub eps0: Option<f64>,
    pub interior_nodes: usize,
    /// min over interior nodes of Lφ/(a(nΛ+1)) − 1.
    pub min_excess: f64,
    pub inequality_ok: bool,
    pub inner_nodes: usize,
    pub inner_violations: usize,
    pub outer_points: usize,
    pub outer_violations: usize,
    pub bottom_nodes: usize,
    pub min_neumann: f64,
    pub neumann_ok: bool,
    pub inner_boundary_points: usize,
    /// ln of max φ/(a r) over ∂S_{γr}.
    pub ln_c_realized: f64,
    pub ln_c_bound: f64,
    pub inner_bound_ok: bool,
    pub passes: bool,
}

/// Exact boundary points of the upper half of ∂S_ρ around the base center.
fn boundary_points(b: &Barrier, rho: f64, count: usize) -> Result<Vec<PointXZ>> {
    let s = b.spec.s;
    let c = &b.base_center;
    let n = c.n();
    let rx = (2.0 * rho).sqrt();
    let per = if n == 1 { count } else { (count as f64).sqrt().ceil() as usize };
    let mut out = Vec::new();
    let xs: Vec<Vec<f64>> = if n == 1 {
        (0..per).map(|i| vec![c.x[0] - rx + 2.0 * rx * (i as f64 + 0.5) / per as f64]).collect()
    } else {
        let mut v = Vec::new();
        for i in 0..per {
            for j in 0..per {
                v.push(vec![
                    c.x[0] - rx + 2.0 * rx * (i as f64 + 0.5) / per as f64,
                    c.x[1] - rx + 2.0 * rx * (j as f64 + 0.5) / per as f64,
                ]);
            }
        }
        v
    };
    for x in xs {
        let rem = rho - delta_phi(&c.x, &x);
        if rem <= 0.0 {
            continue;
        }
        let (lo, hi) = section_h(s, c.z, rem)?;
        for z in [lo, hi] {
            if z >= 0.0 {
                out.push(PointXZ::new(x.clone(), z));
            }
        }
    }
    Ok(out)
}

/// Node checks of the four barrier conclusions on the partial ring.
pub fn barrier_verify(b: &Barrier, coeffs: &CoeffField, opts: &VerifyOptions) -> Result<BarrierReport> {
    let s = b.spec.s;
    let (r, gamma) = (b.spec.r, b.spec.gamma);
    let c = &b.base_center;
    let n = c.n();
    if coeffs.grid.dim() != n {
        return Err(FracError::InvalidParameter("coefficient grid dimension differs from the section".into()));
    }
    let rx = (4.0 * r).sqrt();
    let (zlo, zhi) = section_h(s, c.z, 2.0 * r)?;
    let zlo = zlo.max(0.0);
    let axis = |lo: f64, hi: f64, k: usize| -> Vec<f64> { (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect() };
    let xs = axis(c.x[0] - rx, c.x[0] + rx, opts.nx);
    let ys = if n == 2 { axis(c.x[1] - rx, c.x[1] + rx, opts.nx) } else { vec![0.0] };
    let zs = axis(zlo, zhi, opts.nz);
    let (mut interior, mut inner, mut inner_bad, mut bottom) = (0, 0, 0, 0);
    let mut min_excess = f64::INFINITY;
    let mut min_neumann = f64::INFINITY;
    for &x in &xs {
        for &y in &ys {
            let xv = if n == 1 { vec![x] } else { vec![x, y] };
            let m = coeff_at(coeffs, &xv)?;
            for &z in &zs {
                let q = PointXZ::new(xv.clone(), z);
                let d = delta_full(s, c, &q);
                if !(d >= gamma * r && d < 2.0 * r) {
                    continue;
                }
                let p = if b.mirrored { q.mirrored() } else { q.clone() };
                if z == 0.0 {
                    bottom += 1;
                    min_neumann = min_neumann.min(b.neumann_derivative(&xv));
                } else {
                    interior += 1;
                    min_excess = min_excess.min(b.l_ratio(&p, m) - 1.0);
                }
                if d < r {
                    inner += 1;
                    if !b.is_positive(&p) {
                        inner_bad += 1;
                    }
                }
            }
        }
    }
    let outer = boundary_points(b, 2.0 * r, opts.boundary)?;
    let outer_bad = outer
        .iter()
        .filter(|q| {
            let p = if b.mirrored { q.mirrored() } else { (*q).clone() };
            b.is_positive(&p)
        })
        .count();
    let inner_pts = boundary_points(b, gamma * r, opts.boundary)?;
    let ln_c_realized = inner_pts
        .iter()
        .map(|q| b.ln_value_over_ar(&if b.mirrored { q.mirrored() } else { q.clone() }))
        .fold(f64::NEG_INFINITY, f64::max);
    let inequality_ok = interior > 0 && min_excess > opts.slack;
    let neumann_ok = bottom == 0 || min_neumann > 0.0;
    let inner_bound_ok = ln_c_realized <= b.ln_c_bound + 1e-9 * b.ln_c_bound.abs().max(1.0);
    let (eps, eps0) = match &b.corrector {
        Corrector::None => (None, None),
        Corrector::Bypass(by) => (Some(by.eps), Some(by.eps0)),
        Corrector::Linear { eps, .. } => (Some(*eps), None),
    };
    Ok(BarrierReport {
        case: b.spec.case.number(),
        alpha: b.alpha,
        e: b.e,
        eps,
        eps0,
        interior_nodes: interior,
        min_excess,
        inequality_ok,
        inner_nodes: inner,
        inner_violations: inner_bad,
        outer_points: outer.len(),
        outer_violations: outer_bad,
        bottom_nodes: bottom,
        min_neumann,
        neumann_ok,
        inner_boundary_points: inner_pts.len(),
        ln_c_realized,
        ln_c_bound: b.ln_c_bound,
        inner_bound_ok,
        passes: inequality_ok && inner_bad == 0 && outer_bad == 0 && neumann_ok && inner_bound_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mu_h_interval;
    use crate::semigroup::GridSpec;

    fn sp(s: f64) -> SParam {
        SParam::new(s).unwrap()
    }

    fn spec(case: BarrierCase, s: f64, z0: f64) -> BarrierSpec {
        BarrierSpec { case, s: sp(s), gamma: 0.25, center: PointXZ::new(vec![0.5], z0), r: 0.02, lambda: 1.0, cap: 1.0 }
    }

    fn unit() -> CoeffField {
        CoeffField::identity(&GridSpec::line(0.0, 1.0, 33).unwrap())
    }

    #[test]
    fn case_selection_and_rejections() {
        assert_eq!(BarrierCase::select(sp(0.3), 0.2), BarrierCase::One);
        assert_eq!(BarrierCase::select(sp(0.7), 0.0), BarrierCase::Two);
        assert_eq!(BarrierCase::select(sp(0.5), 0.0), BarrierCase::Three);
        assert_eq!(BarrierCase::select(sp(0.5), -0.1), BarrierCase::Four);
        assert!(barrier_build(&spec(BarrierCase::One, 0.7, 0.2), 1.0).is_err());
        let mut g = spec(BarrierCase::One, 0.5, 0.2);
        g.gamma = 1.0;
        assert!(barrier_build(&g, 1.0).is_err());
    }

    #[test]
    fn case_one_passes_across_s() {
        for &s in &[0.1, 0.2, 0.3, 0.4, 0.5] {
            let b = barrier_build(&spec(BarrierCase::One, s, 0.3), 1.0).unwrap();
            let rep = barrier_verify(&b, &unit(), &VerifyOptions::default()).unwrap();
            assert!(rep.passes, "s={s}: {rep:?}");
            assert!(rep.interior_nodes > 100 && rep.inner_nodes > 10);
        }
    }

    #[test]
    fn case_one_near_axis_checks_neumann() {
        let b = barrier_build(&spec(BarrierCase::One, 0.5, 0.05), 2.0).unwrap();
        let rep = barrier_verify(&b, &unit(), &VerifyOptions::default()).unwrap();
        assert!(rep.bottom_nodes > 0 && rep.neumann_ok && rep.passes, "{rep:?}");
    }

    #[test]
    fn case_two_passes() {
        for &(s, z0) in &[(0.6, 0.0), (0.75, 0.0), (0.75, 0.05), (0.9, 0.02), (0.75, 0.5)] {
            let b = barrier_build(&spec(BarrierCase::Two, s, z0), 1.0).unwrap();
            let rep = barrier_verify(&b, &unit(), &VerifyOptions::default()).unwrap();
            assert!(rep.passes, "s={s} z0={z0}: {rep:?}");
        }
    }

    #[test]
    fn case_three_passes() {
        for &s in &[0.2, 0.35, 0.5] {
            let b = barrier_build(&spec(BarrierCase::Three, s, 0.0), 1.0).unwrap();
            let rep = barrier_verify(&b, &unit(), &VerifyOptions::default()).unwrap();
            assert!(rep.passes && rep.bottom_nodes > 0, "s={s}: {rep:?}");
        }
    }

    #[test]
    fn case_four_mirrors() {
        for &(s, z0) in &[(0.4, -0.2), (0.75, -0.03), (0.3, 0.0)] {
            let b4 = barrier_build(&spec(BarrierCase::Four, s, z0), 1.5).unwrap();
            let up = barrier_build(&spec(BarrierCase::select(sp(s), -z0), s, -z0), 1.5).unwrap();
            for &(x, z) in &[(0.45, -0.1), (0.52, -0.05), (0.6, -0.01)] {
                let p = PointXZ::new(vec![x], z);
                assert_eq!(b4.f_value(&p), up.f_value(&p.mirrored()));
                assert_eq!(b4.ln_value_over_ar(&p), up.ln_value_over_ar(&p.mirrored()));
            }
            let rep = barrier_verify(&b4, &unit(), &VerifyOptions::default()).unwrap();
            assert!(rep.passes, "{rep:?}");
        }
    }

    #[test]
    fn variable_coefficients_in_two_dimensions() {
        let grid = GridSpec::square(0.0, 1.0, 17).unwrap();
        let coeffs = CoeffField::smooth_random(&grid, 0.5, 2.0, 3.0, 4).unwrap();
        let sp2 = BarrierSpec {
            case: BarrierCase::One,
            s: sp(0.4),
            gamma: 0.3,
            center: PointXZ::new(vec![0.5, 0.5], 0.4),
            r: 0.01,
            lambda: 0.5,
            cap: 2.0,
        };
        let b = barrier_build(&sp2, 1.0).unwrap();
        let opts = VerifyOptions { nx: 21, nz: 21, boundary: 400, slack: 0.0 };
        assert!(barrier_verify(&b, &coeffs, &opts).unwrap().passes);
    }

    #[test]
    fn operator_matches_finite_differences() {
        for (case, s, z0) in [(BarrierCase::One, 0.5, 0.3), (BarrierCase::Two, 0.75, 0.1), (BarrierCase::Three, 0.5, 0.0)] {
            let mut sp1 = spec(case, s, z0);
            sp1.gamma = 0.6;
            let b = barrier_build(&sp1, 1.0).unwrap();
            if b.alpha > 200.0 {
                continue;
            }
            let c = &b.base_center;
            let (lo, hi) = section_h(sp(s), c.z, 1.2 * b.spec.r).unwrap();
            let p = PointXZ::new(vec![c.x[0] + 0.03], 0.5 * (lo.max(0.0) + hi) + 0.3 * (hi - lo.max(0.0)));
            if !b.in_domain(&p) {
                continue;
            }
            let hstep = 1e-4;
            let fx = |dx: f64, dz: f64| b.value(&PointXZ::new(vec![p.x[0] + dx], p.z + dz));
            let v = fx(0.0, 0.0);
            let dxx = (fx(hstep, 0.0) - 2.0 * v + fx(-hstep, 0.0)) / (hstep * hstep);
            let dzz = (fx(0.0, hstep) - 2.0 * v + fx(0.0, -hstep)) / (hstep * hstep);
            let fd = dxx + p.z.abs().powf(2.0 - 1.0 / s) * dzz;
            let exact = b.l_ratio(&p, [1.0, 0.0, 1.0]) * b.spec.trace_bound();
            assert!((fd - exact).abs() < 1e-4 * exact.abs(), "case {case:?}: fd={fd} exact={exact}");
        }
    }

    #[test]
    fn bypass_derivatives_are_consistent() {
        let b = barrier_build(&spec(BarrierCase::Two, 0.75, 0.0), 1.0).unwrap();
        let Corrector::Bypass(by) = &b.corrector else { panic!() };
        assert!(by.value(by.z_r).abs() < 1e-15);
        assert!((by.d1(by.z_l) - by.eps * by.mu).abs() < 1e-15);
        for k in 1..20 {
            let z = by.z_l + (by.z_r - by.z_l) * k as f64 / 20.0;
            let hs = 1e-6 * (by.z_r - by.z_l);
            let d1 = (by.value(z + hs) - by.value(z - hs)) / (2.0 * hs);
            assert!((d1 - by.d1(z)).abs() < 1e-5 * by.d1(by.z_r), "z={z}");
            assert!(by.value(z) <= 0.0);
        }
        // μ_h(H) ≤ ε μ_h(S) with H⁺ = [z_L, ζ]
        let mu_h_plus = mu_h_interval(sp(0.75), by.z_l, by.zeta).unwrap();
        assert!(mu_h_plus <= by.eps * by.mu * (1.0 + 1e-12));
    }

    #[test]
    fn bathtub_threshold() {
        let s = sp(0.75);
        let e0 = bathtub_eps0(s, -1.0, 1.0, 0.1).unwrap();
        // symmetric section: the extremal set is (−τ, τ) with τ^{1/3} = 0.1
        assert!((e0 - 1e-3).abs() < 1e-12);
        assert!(bathtub_eps0(sp(0.5), -1.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn coefficient_interpolation() {
        let g = GridSpec::line(0.0, 1.0, 11).unwrap();
        let c = CoeffField::from_fn(&g, |x| [1.0 + x[0], 0.0, 1.0 + x[0]], 1.0, 2.0).unwrap();
        let v = coeff_at(&c, &[0.37]).unwrap();
        assert!((v[0] - 1.37).abs() < 1e-14);
        assert!(coeff_at(&c, &[1.5]).is_err());
    }
}

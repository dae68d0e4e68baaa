use crate::error::{FracError, Result};
use crate::extension::{default_grading, extend_via_pde, BottomCondition, ExtensionGrid};
use crate::fractional::{solve_poisson, BalakrishnanQuad, QuadOptions};
use crate::geometry::{delta_full, q_s, PointXZ, SParam};
use crate::paraboloid::{XZField, XZGrid};
use crate::semigroup::{assemble_l, linear_fit, CoeffField, EvolveOptions, GridFunction, GridSpec, MixedStencil};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Constants of the Harnack and Hölder chain. Only the relations between them
/// are fixed; the base values are configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackConstants {
    pub kappa0: f64,
    pub k0_hat: f64,
    /// κ = √κ₀.
    pub kappa: f64,
    /// K̂ = √(2K̂₀).
    pub k_hat: f64,
    pub kappa1: f64,
    pub k1_hat: f64,
    pub kappa2: f64,
    pub k3_hat: f64,
    pub mu: f64,
    pub c_h: f64,
    /// (C_H − 1)/(C_H + 1).
    pub gamma_osc: f64,
    /// (1 − μ) ln γ / ln(κ₀/K̂₀).
    pub alpha1: f64,
    /// 2α₁.
    pub alpha0: f64,
    /// 1/(3K₀).
    pub beta: f64,
    /// ρ_k = c₀(1 − c)^{k/(n+1)}.
    pub rho_c0: f64,
    pub rho_c: f64,
}

impl HarnackConstants {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kappa0: f64,
        k0_hat: f64,
        kappa1: f64,
        k1_hat: f64,
        kappa2: f64,
        k3_hat: f64,
        k0: f64,
        mu: f64,
        c_h: f64,
        rho_c0: f64,
        rho_c: f64,
    ) -> Result<Self> {
        if !(kappa0 > 0.0 && kappa0 < k0_hat) {
            return Err(FracError::InvalidParameter(format!("need 0 < kappa0 < K0_hat, got {kappa0}, {k0_hat}")));
        }
        if !(c_h >= 1.0) || !(mu >= 0.0 && mu < 1.0) || !(k0 > 0.0) || !(rho_c > 0.0 && rho_c < 1.0) {
            return Err(FracError::InvalidParameter("need C_H >= 1, mu in [0, 1), K0 > 0, c in (0, 1)".into()));
        }
        let gamma = gamma_osc(c_h);
        let alpha1 = alpha1_theory(mu, gamma, kappa0, k0_hat);
        Ok(Self {
            kappa0,
            k0_hat,
            kappa: kappa0.sqrt(),
            k_hat: (2.0 * k0_hat).sqrt(),
            kappa1,
            k1_hat,
            kappa2,
            k3_hat,
            mu,
            c_h,
            gamma_osc: gamma,
            alpha1,
            alpha0: 2.0 * alpha1,
            beta: 1.0 / (3.0 * k0),
            rho_c0,
            rho_c,
        })
    }

    pub fn rho(&self, k: usize, n: usize) -> f64 {
        self.rho_c0 * (1.0 - self.rho_c).powf(k as f64 / (n as f64 + 1.0))
    }
}

/// γ = (C_H − 1)/(C_H + 1).
pub fn gamma_osc(c_h: f64) -> f64 {
    (c_h - 1.0) / (c_h + 1.0)
}

/// α₁ = (1 − μ) ln γ / ln(κ₀/K̂₀).
pub fn alpha1_theory(mu: f64, gamma: f64, kappa0: f64, k0_hat: f64) -> f64 {
    (1.0 - mu) * gamma.ln() / (kappa0 / k0_hat).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    pub radii: Vec<f64>,
    pub osc: Vec<f64>,
    pub slope: f64,
    /// min(slope, 1).
    pub alpha: f64,
    /// ω(r) ≈ C r^slope.
    pub c: f64,
    /// ω non-increasing as the radius shrinks.
    pub monotone: bool,
}

/// Fits ln ω against ln r over the rungs with ω > 0.
pub fn holder_fit(radii: &[f64], osc: &[f64]) -> Result<HolderFit> {
    if radii.len() != osc.len() {
        return Err(FracError::InvalidParameter("radii and oscillations differ in length".into()));
    }
    let rungs: Vec<(f64, f64)> = radii.iter().zip(osc).filter(|(r, w)| **r > 0.0 && **w > 0.0).map(|(r, w)| (*r, *w)).collect();
    if rungs.len() < 3 {
        return Err(FracError::InvalidParameter(format!("Hölder fit needs at least 3 rungs with positive oscillation, got {}", rungs.len())));
    }
    let (lr, lw): (Vec<f64>, Vec<f64>) = rungs.iter().map(|(r, w)| (r.ln(), w.ln())).unzip();
    let (slope, intercept) = linear_fit(&lr, &lw);
    let mut order: Vec<usize> = (0..radii.len()).collect();
    order.sort_by(|&i, &j| radii[j].total_cmp(&radii[i]));
    let monotone = order.windows(2).all(|w| osc[w[1]] <= osc[w[0]]);
    Ok(HolderFit { radii: radii.to_vec(), osc: osc.to_vec(), slope, alpha: slope.min(1.0), c: intercept.exp(), monotone })
}

fn extremes(values: impl Iterator<Item = f64>) -> Option<(f64, f64, usize)> {
    let mut n = 0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        n += 1;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (n > 0).then_some((hi, lo, n))
}

fn section_nodes(field: &XZField, s: SParam, center: &PointXZ, radius: f64) -> Vec<usize> {
    let g = &field.grid;
    (0..g.len()).filter(|&i| delta_full(s, center, &g.point(i)) < radius).collect()
}

/// ω over open sections S_ρ(center) for every ρ in the ladder.
pub fn section_oscillation(field: &XZField, s: SParam, center: &PointXZ, radii: &[f64]) -> Vec<f64> {
    radii
        .iter()
        .map(|&r| extremes(section_nodes(field, s, center, r).into_iter().map(|i| field.values[i])).map_or(0.0, |(hi, lo, _)| hi - lo))
        .collect()
}

fn ball_nodes(u: &GridFunction, center: &[f64], radius: f64) -> Vec<usize> {
    (0..u.grid.len())
        .filter(|&i| {
            let x = u.grid.coords(i);
            x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() < radius
        })
        .collect()
}

/// ω over open Euclidean balls B_ρ(center).
pub fn ball_oscillation(u: &GridFunction, center: &[f64], radii: &[f64]) -> Vec<f64> {
    radii
        .iter()
        .map(|&r| extremes(ball_nodes(u, center, r).into_iter().map(|i| u.values[i])).map_or(0.0, |(hi, lo, _)| hi - lo))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackReport {
    pub trial: usize,
    pub seed: u64,
    pub s: f64,
    pub coeff_seed: u64,
    pub r: f64,
    pub center: Vec<f64>,
    pub center_z: f64,
    pub nodes: usize,
    pub sup: f64,
    pub inf: f64,
    pub f_norm: f64,
    /// ‖f‖R^s for the extension, ‖f‖R^{2s} for L^s.
    pub rhs_term: f64,
    pub c_h: f64,
    /// False for 0/0.
    pub admissible: bool,
    /// Positive sup over a zero denominator.
    pub violation: bool,
    pub gamma_osc: f64,
    pub holder: Option<HolderFit>,
}

fn quotient(sup: f64, inf: f64, rhs: f64) -> (f64, bool, bool) {
    let den = inf + rhs;
    if den > 0.0 {
        (sup / den, true, false)
    } else if sup > 0.0 {
        (f64::INFINITY, true, true)
    } else {
        (f64::NAN, false, false)
    }
}

/// sup/(inf + ‖f‖R^s) over the open section S_ρ(center) of an extension solution.
pub fn section_harnack(field: &XZField, s: SParam, center: &PointXZ, rho: f64, r: f64, f_norm: f64) -> Result<HarnackReport> {
    let nodes = section_nodes(field, s, center, rho);
    let (sup, inf, n) = extremes(nodes.iter().map(|&i| field.values[i]))
        .ok_or_else(|| FracError::Precondition("the Harnack section contains no grid nodes".into()))?;
    let rhs_term = f_norm * r.powf(s.get());
    let (c_h, admissible, violation) = quotient(sup, inf, rhs_term);
    Ok(HarnackReport {
        trial: 0,
        seed: 0,
        s: s.get(),
        coeff_seed: 0,
        r,
        center: center.x.clone(),
        center_z: center.z,
        nodes: n,
        sup,
        inf,
        f_norm,
        rhs_term,
        c_h,
        admissible,
        violation,
        gamma_osc: gamma_osc(c_h),
        holder: None,
    })
}

/// sup/(inf + ‖f‖R^{2s}) over the open ball B_ρ(center).
pub fn ball_harnack(u: &GridFunction, s: SParam, center: &[f64], rho: f64, r: f64, f_norm: f64) -> Result<HarnackReport> {
    let nodes = ball_nodes(u, center, rho);
    let (sup, inf, n) = extremes(nodes.iter().map(|&i| u.values[i]))
        .ok_or_else(|| FracError::Precondition("the Harnack ball contains no grid nodes".into()))?;
    let rhs_term = f_norm * r.powf(2.0 * s.get());
    let (c_h, admissible, violation) = quotient(sup, inf, rhs_term);
    Ok(HarnackReport {
        trial: 0,
        seed: 0,
        s: s.get(),
        coeff_seed: 0,
        r,
        center: center.to_vec(),
        center_z: 0.0,
        nodes: n,
        sup,
        inf,
        f_norm,
        rhs_term,
        c_h,
        admissible,
        violation,
        gamma_osc: gamma_osc(c_h),
        holder: None,
    })
}

/// Ensemble of 1-D trials: random smooth a(x) ∈ [λ, Λ] on (0, 1) and random
/// smooth f ≥ 0. `refine` doubles every mesh count that many times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackConfig {
    pub s: f64,
    pub trials: usize,
    pub seed: u64,
    /// Base nodes on [0, 1] before refinement.
    pub nodes: usize,
    /// z-levels of the extension grid before refinement.
    pub levels: usize,
    pub refine: u32,
    pub lambda: f64,
    pub cap: f64,
    pub kappa0: f64,
    pub k0_hat: f64,
    pub r: f64,
    pub center: f64,
    pub f_scale: f64,
    /// Height of the extension grid; `None` takes 1.5 times the height of S_{K̂₀R}.
    pub z_max: Option<f64>,
    /// f vanishes on the x-range of the outer set S_{K̂₀R} or B_{K̂R}.
    pub homogeneous: bool,
    /// Rungs of the oscillation ladder, radii halving from the Harnack set.
    pub ladder: usize,
}

impl HarnackConfig {
    pub fn new(s: f64, trials: usize, seed: u64) -> Self {
        Self {
            s,
            trials,
            seed,
            nodes: 65,
            levels: 40,
            refine: 0,
            lambda: 0.5,
            cap: 2.0,
            kappa0: 0.25,
            k0_hat: 1.0,
            r: 0.08,
            center: 0.5,
            f_scale: 1.0,
            z_max: None,
            homogeneous: true,
            ladder: 5,
        }
    }

    /// Defaults for L^s: R = 0.2 keeps three ladder rungs above the mesh width.
    pub fn for_ls(s: f64, trials: usize, seed: u64) -> Self {
        Self { r: 0.2, ladder: 3, ..Self::new(s, trials, seed) }
    }

    pub fn refined(&self) -> Self {
        Self { refine: self.refine + 1, ..self.clone() }
    }

    fn mesh(&self) -> (usize, usize) {
        let k = 1usize << self.refine;
        ((self.nodes - 1) * k + 1, self.levels * k)
    }

    fn validate(&self) -> Result<SParam> {
        let s = SParam::new(self.s)?;
        if self.trials == 0 || self.ladder < 3 {
            return Err(FracError::InvalidParameter("need trials >= 1 and a ladder of at least 3 rungs".into()));
        }
        if !(self.lambda > 0.0 && self.cap >= self.lambda) || !(self.r > 0.0) || !(self.f_scale >= 0.0) {
            return Err(FracError::InvalidParameter("need 0 < lambda <= Lambda, R > 0, f_scale >= 0".into()));
        }
        if !(self.kappa0 > 0.0 && self.kappa0 < self.k0_hat) {
            return Err(FracError::InvalidParameter(format!("need 0 < kappa0 < K0_hat, got {}, {}", self.kappa0, self.k0_hat)));
        }
        Ok(s)
    }

    fn trial_rng(&self, trial: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial as u64 + 1);
        rng
    }
}

/// Random smooth nonnegative data, independent of the mesh.
#[derive(Debug, Clone, PartialEq)]
struct RandomData {
    coeff_seed: u64,
    amp: [f64; 3],
    phase: [f64; 3],
}

impl RandomData {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        let mut amp = [0.0; 3];
        let mut phase = [0.0; 3];
        for k in 0..3 {
            amp[k] = rng.random_range(-1.0..1.0) / 6.0;
            phase[k] = rng.random_range(0.0..2.0 * PI);
        }
        Self { coeff_seed: rng.random(), amp, phase }
    }

    /// sin²(πx)(1 + Σ a_k sin(kπx + φ_k)) ∈ [½, 3/2]·sin²(πx).
    fn f(&self, x: f64) -> f64 {
        let m: f64 = (0..3).map(|k| self.amp[k] * ((k as f64 + 1.0) * PI * x + self.phase[k]).sin()).sum();
        (PI * x).sin().powi(2) * (1.0 + m)
    }
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Data on the base grid and its supremum over |x − x̃| ≤ w.
fn neumann_data(cfg: &HarnackConfig, base: &GridSpec, data: &RandomData, w: f64) -> (GridFunction, f64) {
    let cut = |x: f64| if cfg.homogeneous { smoothstep(((x - cfg.center).abs() - w) / (0.5 * w)) } else { 1.0 };
    let f = GridFunction::from_fn(base, |x| cfg.f_scale * data.f(x[0]) * cut(x[0]));
    let local = (0..base.len())
        .filter(|&i| (base.coords(i)[0] - cfg.center).abs() <= w)
        .map(|i| f.values[i].abs())
        .fold(0.0, f64::max);
    (f, local)
}

fn coefficients(cfg: &HarnackConfig, base: &GridSpec, data: &RandomData) -> Result<CoeffField> {
    CoeffField::smooth_random(base, cfg.lambda, cfg.cap, 1.0, data.coeff_seed)
}

/// Harnack quotients of Neumann extension solutions over S_{κ₀R}(x̃, 0).
pub fn harnack_extension_experiment(cfg: &HarnackConfig) -> Result<Vec<HarnackReport>> {
    let s = cfg.validate()?;
    let (nx, levels) = cfg.mesh();
    let base = GridSpec::line(0.0, 1.0, nx)?;
    let outer = cfg.k0_hat * cfg.r;
    let (xw, zw) = ((2.0 * outer).sqrt(), q_s(s) * outer.powf(s.get()));
    let z_max = cfg.z_max.unwrap_or(1.5 * zw);
    if cfg.center - xw <= 0.0 || cfg.center + xw >= 1.0 || zw >= z_max {
        return Err(FracError::Precondition(format!(
            "S_(K0 R) reaches the grid boundary: x in ({}, {}), z < {zw} with Z_max = {z_max}",
            cfg.center - xw,
            cfg.center + xw
        )));
    }
    let zgrid = ExtensionGrid::new(&base, z_max, levels, default_grading(s))?;
    let xz = XZGrid::new(&base, zgrid.z.clone())?;
    let center = PointXZ::new(vec![cfg.center], 0.0);
    let rho = cfg.kappa0 * cfg.r;
    let radii: Vec<f64> = (0..cfg.ladder).map(|k| rho * 0.5f64.powi(k as i32)).collect();
    (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = cfg.trial_rng(trial);
            let data = RandomData::draw(&mut rng);
            let coeffs = coefficients(cfg, &base, &data)?;
            let op = assemble_l(&base, &coeffs, MixedStencil::Standard)?;
            let (f, f_norm) = neumann_data(cfg, &base, &data, xw);
            let ext = extend_via_pde(&op, s, &zgrid, &BottomCondition::Neumann(f), None)?;
            let field = XZField::new(&xz, ext.values)?;
            let mut rep = section_harnack(&field, s, &center, rho, cfg.r, f_norm)?;
            rep.holder = holder_fit(&radii, &section_oscillation(&field, s, &center, &radii)).ok();
            rep.trial = trial;
            rep.seed = cfg.seed;
            rep.coeff_seed = data.coeff_seed;
            Ok(rep)
        })
        .collect()
}

/// Harnack quotients of u = L^{−s}f over B_{κR}(x̃) with κ = √κ₀.
pub fn harnack_ls_experiment(cfg: &HarnackConfig) -> Result<Vec<HarnackReport>> {
    let s = cfg.validate()?;
    let (nx, _) = cfg.mesh();
    let base = GridSpec::line(0.0, 1.0, nx)?;
    let (kappa, k_hat) = (cfg.kappa0.sqrt(), (2.0 * cfg.k0_hat).sqrt());
    let outer = k_hat * cfg.r;
    if cfg.center - outer <= 0.0 || cfg.center + outer >= 1.0 {
        return Err(FracError::Precondition(format!("B_(K R) = ({}, {}) is not inside (0, 1)", cfg.center - outer, cfg.center + outer)));
    }
    let rho = kappa * cfg.r;
    let radii: Vec<f64> = (0..cfg.ladder).map(|k| rho * 0.5f64.powi(k as i32)).collect();
    let evolve = EvolveOptions::default();
    (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = cfg.trial_rng(trial);
            let data = RandomData::draw(&mut rng);
            let coeffs = coefficients(cfg, &base, &data)?;
            let op = assemble_l(&base, &coeffs, MixedStencil::Standard)?;
            let (f, f_norm) = neumann_data(cfg, &base, &data, outer);
            let quad = BalakrishnanQuad::for_operator(&op, s, QuadOptions::default(), &evolve)?;
            let sol = solve_poisson(&op, &f, &quad, &evolve, 1e-2)?;
            let mut rep = ball_harnack(&sol.u, s, &[cfg.center], rho, cfg.r, f_norm)?;
            rep.holder = holder_fit(&radii, &ball_oscillation(&sol.u, &[cfg.center], &radii)).ok();
            rep.trial = trial;
            rep.seed = cfg.seed;
            rep.coeff_seed = data.coeff_seed;
            Ok(rep)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub trials: usize,
    pub admissible: usize,
    pub violations: usize,
    pub max_c_h: f64,
    /// Nearest-rank 95th percentile.
    pub p95_c_h: f64,
    pub mean_c_h: f64,
    /// Smallest fitted Hölder exponent over the trials that produced a fit.
    pub alpha_fit: Option<f64>,
}

pub fn summarize(reports: &[HarnackReport]) -> EnsembleSummary {
    let mut ch: Vec<f64> = reports.iter().filter(|r| r.admissible).map(|r| r.c_h).collect();
    ch.sort_by(f64::total_cmp);
    let (max_c_h, p95_c_h, mean_c_h) = if ch.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        let rank = ((0.95 * ch.len() as f64).ceil() as usize).clamp(1, ch.len());
        (ch[ch.len() - 1], ch[rank - 1], ch.iter().sum::<f64>() / ch.len() as f64)
    };
    let alpha_fit = reports.iter().filter_map(|r| r.holder.as_ref().map(|h| h.alpha)).fold(None, |m: Option<f64>, a| Some(m.map_or(a, |v| v.min(a))));
    EnsembleSummary {
        trials: reports.len(),
        admissible: ch.len(),
        violations: reports.iter().filter(|r| r.violation).count(),
        max_c_h,
        p95_c_h,
        mean_c_h,
        alpha_fit,
    }
}

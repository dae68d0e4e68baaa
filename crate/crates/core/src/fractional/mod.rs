//! L^s and L^{−s} by quadrature of the semigroup integrals
//!
//! ```text
//!   L^s u  = 1/Γ(−s) ∫₀^∞ (e^{−tL}u − u) t^{−1−s} dt
//!   L^{−s}f = 1/Γ(s)  ∫₀^∞ e^{−tL}f t^{s−1} dt
//! ```

use crate::error::{FracError, Result};
use crate::quadrature::{composite_gauss_legendre, gauss_legendre};
use crate::semigroup::{
    default_probe, estimate_decay, march, march_increment, spectral_power, CoeffField, DiscreteOperator, EvolveOptions, GridFunction,
    SpectralEigen,
};
use crate::special::gamma;
use crate::SParam;
use serde::{Deserialize, Serialize};

/// Node and weight counts for the split t-integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadOptions {
    pub quad_tol: f64,
    pub n_near: usize,
    pub n_far: usize,
    /// Gauss–Legendre order of each far-field panel.
    pub panel_order: usize,
    /// Relative defect allowed in the scalar self-test.
    pub self_test_tol: f64,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { quad_tol: 1e-6, n_near: 128, n_far: 128, panel_order: 8, self_test_tol: 1e-4 }
    }
}

/// Times and weights of one t-rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSet {
    pub times: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Quadrature for both semigroup integrals, checked against the scalar identities
/// ∫₀^∞(e^{−λt} − 1)t^{−1−s}dt = Γ(−s)λ^s and ∫₀^∞ e^{−λt}t^{s−1}dt = Γ(s)λ^{−s}.
///
/// Both integrals split at T_split = 1/λ_max. On [0, T_split] the positive
/// rule substitutes t = T_split·τ^{1/(1−s)} and the negative rule
/// t = T_split·τ^{1/s}; either way the integrand becomes smooth in τ. On
/// [T_split, T_max] both rules are composite Gauss–Legendre in log t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalakrishnanQuad {
    pub s: SParam,
    pub t_split: f64,
    pub t_max: f64,
    pub eps: f64,
    pub options: QuadOptions,
    /// ∫₀^{T_max} g(t) t^{−1−s} dt ≈ Σ w_k g(t_k).
    pub positive: NodeSet,
    /// ∫₀^{T_max} g(t) t^{s−1} dt ≈ Σ w_k g(t_k).
    pub negative: NodeSet,
    pub gamma_neg_s: f64,
    pub gamma_s: f64,
    /// (λ, relative defect of L^s, relative defect of L^{−s}) from the self-test.
    pub self_test: Vec<(f64, f64, f64)>,
}

impl BalakrishnanQuad {
    /// Builds the rules for spectrum in [eps_decay, lambda_max] and runs the self-test.
    pub fn new(s: SParam, lambda_max: f64, eps_decay: f64, options: QuadOptions) -> Result<Self> {
        if !(lambda_max > 0.0) || !lambda_max.is_finite() {
            return Err(FracError::InvalidParameter(format!("lambda_max must be positive, got {lambda_max}")));
        }
        if !(eps_decay > 0.0) || !eps_decay.is_finite() {
            return Err(FracError::Precondition(format!("a positive decay rate is required, got {eps_decay}")));
        }
        if !(options.quad_tol > 0.0 && options.quad_tol < 1.0) || options.n_near == 0 || options.panel_order == 0 {
            return Err(FracError::InvalidParameter("quadrature options out of range".into()));
        }
        if options.n_far % options.panel_order != 0 || options.n_far == 0 {
            return Err(FracError::InvalidParameter("n_far must be a positive multiple of panel_order".into()));
        }
        let sv = s.get();
        // the self-test starts at λ = 1, so the tail cutoff covers rates down to 1
        let e = eps_decay.min(1.0);
        let t_max = (1.0 / (options.quad_tol * e)).ln() / e;
        let t_split = (1.0 / lambda_max).min(t_max);
        let (gx, gw) = gauss_legendre(options.n_near);
        let (ys, yw) = composite_gauss_legendre(t_split.ln(), t_max.ln(), options.n_far / options.panel_order, options.panel_order);
        let mut positive = NodeSet { times: vec![], weights: vec![] };
        let mut negative = NodeSet { times: vec![], weights: vec![] };
        for (x, w) in gx.iter().zip(&gw) {
            let tau = 0.5 * (x + 1.0);
            let w = 0.5 * w;
            let p = 1.0 / (1.0 - sv);
            positive.times.push(t_split * tau.powf(p));
            positive.weights.push(w * t_split.powf(-sv) * p * tau.powf(-p));
            negative.times.push(t_split * tau.powf(1.0 / sv));
            negative.weights.push(w * t_split.powf(sv) / sv);
        }
        if t_max > t_split {
            for (y, w) in ys.iter().zip(&yw) {
                let t = y.exp();
                positive.times.push(t);
                positive.weights.push(w * t.powf(-sv));
                negative.times.push(t);
                negative.weights.push(w * t.powf(sv));
            }
        }
        let mut q = Self {
            s,
            t_split,
            t_max,
            eps: eps_decay,
            options,
            positive,
            negative,
            gamma_neg_s: gamma(-sv),
            gamma_s: gamma(sv),
            self_test: vec![],
        };
        for lam in [1.0, 10.0, 100.0] {
            let dp = (q.scalar_positive(lam) / lam.powf(sv) - 1.0).abs();
            let dn = (q.scalar_negative(lam) / lam.powf(-sv) - 1.0).abs();
            q.self_test.push((lam, dp, dn));
            if !(dp <= options.self_test_tol) || !(dn <= options.self_test_tol) {
                return Err(FracError::Quadrature(format!(
                    "self-test at lambda={lam}: defects {dp:e} (L^s), {dn:e} (L^-s) exceed {:e}",
                    options.self_test_tol
                )));
            }
        }
        Ok(q)
    }

    /// Rules for an assembled operator: λ_max from Gershgorin, eps from the decay fit.
    pub fn for_operator(op: &DiscreteOperator, s: SParam, options: QuadOptions, evolve: &EvolveOptions) -> Result<Self> {
        let decay = estimate_decay(op, &[default_probe(&op.grid)], evolve)?;
        Self::new(s, op.lambda_max_bound(), decay.eps, options)
    }

    /// Quadrature value of λ^s.
    pub fn scalar_positive(&self, lambda: f64) -> f64 {
        let sv = self.s.get();
        let body: f64 = self.positive.times.iter().zip(&self.positive.weights).map(|(t, w)| w * (-lambda * t).exp_m1()).sum();
        (body - self.t_max.powf(-sv) / sv) / self.gamma_neg_s
    }

    /// Quadrature value of λ^{−s}.
    pub fn scalar_negative(&self, lambda: f64) -> f64 {
        let body: f64 = self.negative.times.iter().zip(&self.negative.weights).map(|(t, w)| w * (-lambda * t).exp()).sum();
        body / self.gamma_s
    }
}

fn check_grid(op: &DiscreteOperator, u: &GridFunction) -> Result<()> {
    if u.grid != op.grid {
        return Err(FracError::InvalidParameter("grid function and operator live on different grids".into()));
    }
    Ok(())
}

/// L_h^s u from the positive rule. Linear in u.
pub fn apply_ls(op: &DiscreteOperator, u: &GridFunction, quad: &BalakrishnanQuad, evolve: &EvolveOptions) -> Result<GridFunction> {
    check_grid(op, u)?;
    let u0 = u.interior();
    let increments = march_increment(op, &u0, &quad.positive.times, evolve)?;
    let sv = quad.s.get();
    let mut acc = vec![0.0; u0.len()];
    for (d, w) in increments.iter().zip(&quad.positive.weights) {
        for (a, di) in acc.iter_mut().zip(d) {
            *a += w * di;
        }
    }
    let tail = quad.t_max.powf(-sv) / sv;
    let out: Vec<f64> = acc.iter().zip(&u0).map(|(a, ui)| (a - ui * tail) / quad.gamma_neg_s).collect();
    Ok(GridFunction::from_interior(&op.grid, &out))
}

/// L_h^{−s} f from the negative rule, truncated at T_max.
pub fn apply_l_minus_s(op: &DiscreteOperator, f: &GridFunction, quad: &BalakrishnanQuad, evolve: &EvolveOptions) -> Result<GridFunction> {
    check_grid(op, f)?;
    let states = march(op, &f.interior(), &quad.negative.times, evolve)?;
    let mut acc = vec![0.0; op.unknowns()];
    for (v, w) in states.iter().zip(&quad.negative.weights) {
        for (a, vi) in acc.iter_mut().zip(v) {
            *a += w * vi;
        }
    }
    let out: Vec<f64> = acc.iter().map(|a| a / quad.gamma_s).collect();
    Ok(GridFunction::from_interior(&op.grid, &out))
}

/// Solution of L_h^s u = f with its residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonSolution {
    pub u: GridFunction,
    /// ‖L^s u − f‖∞ / ‖f‖∞, or 0 for f = 0.
    pub residual: f64,
    /// True when the residual exceeds the requested bound.
    pub flagged: bool,
}

/// u = L^{−s} f, then reports ‖L^s u − f‖∞/‖f‖∞ against `residual_bound`.
pub fn solve_poisson(
    op: &DiscreteOperator,
    f: &GridFunction,
    quad: &BalakrishnanQuad,
    evolve: &EvolveOptions,
    residual_bound: f64,
) -> Result<PoissonSolution> {
    let u = apply_l_minus_s(op, f, quad, evolve)?;
    let fnorm = f.max_abs();
    let residual = if fnorm == 0.0 { 0.0 } else { apply_ls(op, &u, quad, evolve)?.dist_inf(f) / fnorm };
    let flagged = residual > residual_bound;
    if flagged {
        log::warn!("fractional Poisson residual {residual:e} exceeds bound {residual_bound:e}");
    }
    Ok(PoissonSolution { u, residual, flagged })
}

/// Spectral oracle L^s u for constant diagonal coefficients.
pub fn spectral_ls(coeffs: &CoeffField, u: &GridFunction, s: f64, eig: SpectralEigen) -> Result<GridFunction> {
    spectral_power(coeffs, u, s, eig)
}

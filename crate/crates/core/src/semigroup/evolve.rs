use super::banded::BandedLu;
use super::grid::{GridFunction, GridSpec};
use super::operator::DiscreteOperator;
use crate::error::{FracError, Result};
use serde::{Deserialize, Serialize};

/// Time discretization of ∂_t v = −L_h v.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scheme {
    /// θ = ½; the very first step from t = 0 is replaced by `startup`
    /// implicit-Euler substeps (Rannacher smoothing).
    CrankNicolson { startup: usize },
    ImplicitEuler,
    Theta { theta: f64 },
}

impl Default for Scheme {
    fn default() -> Self {
        Scheme::CrankNicolson { startup: 2 }
    }
}

impl Scheme {
    pub fn theta(&self) -> f64 {
        match *self {
            Scheme::CrankNicolson { .. } => 0.5,
            Scheme::ImplicitEuler => 1.0,
            Scheme::Theta { theta } => theta,
        }
    }

    fn startup(&self) -> usize {
        match *self {
            Scheme::CrankNicolson { startup } => startup,
            _ => 0,
        }
    }
}

/// Step-size policy for the θ-method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub scheme: Scheme,
    /// Target Δt relative to the end of the current interval.
    pub rel_step: f64,
    /// Absolute cap on Δt.
    pub max_dt: Option<f64>,
    /// Cap Δt so that I − (1−θ)Δt L_h stays entrywise nonnegative. With an
    /// M-matrix L_h every step is then positivity preserving and a sup-norm
    /// contraction.
    pub positivity_cap: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { scheme: Scheme::default(), rel_step: 0.02, max_dt: None, positivity_cap: false }
    }
}

impl EvolveOptions {
    /// Default scheme with the positivity cap switched on.
    pub fn positive() -> Self {
        Self { positivity_cap: true, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        let th = self.scheme.theta();
        if !(0.5..=1.0).contains(&th) {
            return Err(FracError::InvalidParameter(format!("theta must lie in [1/2, 1], got {th}")));
        }
        if !(self.rel_step > 0.0 && self.rel_step <= 1.0) {
            return Err(FracError::InvalidParameter(format!("rel_step must lie in (0, 1], got {}", self.rel_step)));
        }
        if let Some(m) = self.max_dt {
            if !(m > 0.0) {
                return Err(FracError::InvalidParameter(format!("max_dt must be positive, got {m}")));
            }
        }
        Ok(())
    }
}

/// θ-method stepper with a one-entry factorization cache.
struct Stepper<'a> {
    op: &'a DiscreteOperator,
    cached: Option<(f64, f64, BandedLu)>,
}

impl<'a> Stepper<'a> {
    fn new(op: &'a DiscreteOperator) -> Self {
        Self { op, cached: None }
    }

    /// One step of v' = −L v + g.
    fn step(&mut self, v: &mut [f64], dt: f64, theta: f64, forcing: Option<&[f64]>) -> Result<()> {
        let hit = matches!(&self.cached, Some((d, t, _)) if *d == dt && *t == theta);
        if !hit {
            let lu = self.op.matrix.shifted(1.0, theta * dt).factor()?;
            self.cached = Some((dt, theta, lu));
        }
        let lu = &self.cached.as_ref().expect("factorization cached").2;
        if theta < 1.0 {
            let lv = self.op.apply_interior(v);
            let c = (1.0 - theta) * dt;
            for (x, l) in v.iter_mut().zip(&lv) {
                *x -= c * l;
            }
        }
        if let Some(g) = forcing {
            for (x, gi) in v.iter_mut().zip(g) {
                *x += dt * gi;
            }
        }
        lu.solve_in_place(v);
        if v.iter().any(|x| !x.is_finite()) {
            return Err(FracError::LinearSolve("non-finite state after time step".into()));
        }
        Ok(())
    }
}

/// Interior states e^{−t L_h}u₀ at each requested time.
///
/// Times must be nondecreasing and ≥ 0. The march is sequential: each
/// interval (t_k, t_{k+1}] is split into equal steps of at most
/// `rel_step·t_{k+1}`, so one factorization serves the whole interval.
pub fn march(op: &DiscreteOperator, u0: &[f64], times: &[f64], opts: &EvolveOptions) -> Result<Vec<Vec<f64>>> {
    march_impl(op, u0, times, opts, false)
}

/// Increments e^{−t L_h}u₀ − u₀ at each requested time.
///
/// The increment d solves d' = −L_h d − L_h u₀ with d(0) = 0 under the same
/// steps as [`march`], so in exact arithmetic it equals the difference of two
/// marched states. Computing it directly keeps its relative accuracy at tiny
/// t, where the difference of states would be rounding noise.
pub fn march_increment(op: &DiscreteOperator, u0: &[f64], times: &[f64], opts: &EvolveOptions) -> Result<Vec<Vec<f64>>> {
    march_impl(op, u0, times, opts, true)
}

fn march_impl(op: &DiscreteOperator, u0: &[f64], times: &[f64], opts: &EvolveOptions, increment: bool) -> Result<Vec<Vec<f64>>> {
    opts.validate()?;
    if u0.len() != op.unknowns() {
        return Err(FracError::InvalidParameter(format!("state has {} entries, operator {}", u0.len(), op.unknowns())));
    }
    if times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(FracError::InvalidParameter("times must be finite, nonnegative and nondecreasing".into()));
    }
    let theta = opts.scheme.theta();
    let mut cap = opts.max_dt.unwrap_or(f64::INFINITY);
    if opts.positivity_cap {
        cap = cap.min(op.positivity_dt(theta));
    }
    let forcing: Option<Vec<f64>> = increment.then(|| op.apply_interior(u0).iter().map(|v| -v).collect());
    let forcing = forcing.as_deref();
    let mut stepper = Stepper::new(op);
    let mut v = if increment { vec![0.0; u0.len()] } else { u0.to_vec() };
    let mut now = 0.0;
    let mut started = false;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        let span = target - now;
        if span > 0.0 {
            let goal = (opts.rel_step * target).min(cap);
            let steps = (span / goal).ceil().max(1.0) as usize;
            let dt = span / steps as f64;
            let mut first = 0;
            if !started && opts.scheme.startup() > 0 {
                let k = opts.scheme.startup();
                for _ in 0..k {
                    stepper.step(&mut v, dt / k as f64, 1.0, forcing)?;
                }
                first = 1;
            }
            for _ in first..steps {
                stepper.step(&mut v, dt, theta, forcing)?;
            }
            started = true;
            now = target;
        }
        out.push(v.clone());
    }
    Ok(out)
}

/// e^{−t L_h} u₀ by the θ-method; t = 0 returns u₀ exactly.
pub fn heat_evolve(op: &DiscreteOperator, u0: &GridFunction, t: f64, opts: &EvolveOptions) -> Result<GridFunction> {
    if u0.grid != op.grid {
        return Err(FracError::InvalidParameter("grid function and operator live on different grids".into()));
    }
    if t == 0.0 {
        return Ok(u0.clone());
    }
    let states = march(op, &u0.interior(), &[t], opts)?;
    Ok(GridFunction::from_interior(&op.grid, &states[0]))
}

/// Fitted bound ‖e^{−tL}u‖∞ ≤ M e^{−eps·t}‖u‖∞.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemigroupDecayEstimate {
    pub m: f64,
    pub eps: f64,
}

/// Smallest eigenvalue of L_h by inverse iteration, used to place the fit window.
pub fn lambda_min_estimate(op: &DiscreteOperator) -> Result<f64> {
    let lu = op.matrix.factor()?;
    let mut v = vec![1.0; op.unknowns()];
    let mut lam = 0.0;
    for _ in 0..200 {
        let w = lu.solve(&v);
        let nw = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let next = nv / nw;
        v = w.iter().map(|x| x / nw).collect();
        if (next - lam).abs() <= 1e-12 * next {
            return Ok(next);
        }
        lam = next;
    }
    Ok(lam)
}

/// A smooth positive bump ∏(x−lo)(hi−x), normalized to sup 1.
pub fn default_probe(grid: &GridSpec) -> GridFunction {
    let f = GridFunction::from_fn(grid, |x| {
        x.iter().zip(&grid.axes).map(|(v, a)| (v - a.lo) * (a.hi - v) * 4.0 / (a.length() * a.length())).product()
    });
    let m = f.max_abs();
    f.scaled(1.0 / m)
}

/// Least-squares fit of log‖e^{−tL}u‖∞ against t on the window
/// t ∈ [3, 10]/λ_min, where the principal mode dominates. eps is the smallest
/// fitted rate over the probes; M is the smallest constant making the bound
/// hold at every probed time, including t = 0.
pub fn estimate_decay(op: &DiscreteOperator, probes: &[GridFunction], opts: &EvolveOptions) -> Result<SemigroupDecayEstimate> {
    if probes.is_empty() {
        return Err(FracError::InvalidParameter("estimate_decay needs at least one probe".into()));
    }
    let t0 = 1.0 / lambda_min_estimate(op)?;
    let times: Vec<f64> = (0..8).map(|j| t0 * (3.0 + 7.0 * j as f64 / 7.0)).collect();
    let mut fits = Vec::with_capacity(probes.len());
    for p in probes {
        let norm0 = p.max_abs();
        if norm0 == 0.0 {
            return Err(FracError::InvalidParameter("decay probe is identically zero".into()));
        }
        let states = march(op, &p.interior(), &times, opts)?;
        let norms: Vec<f64> = states.iter().map(|s| s.iter().fold(0.0f64, |m, v| m.max(v.abs())) / norm0).collect();
        let (slope, _) = linear_fit(&times, &norms.iter().map(|n| n.ln()).collect::<Vec<_>>());
        fits.push(norms);
        if !(slope < 0.0) {
            return Err(FracError::Experiment(format!("probe does not decay: fitted slope {slope}")));
        }
    }
    let eps = fits
        .iter()
        .map(|norms| -linear_fit(&times, &norms.iter().map(|n| n.ln()).collect::<Vec<_>>()).0)
        .fold(f64::INFINITY, f64::min);
    let m = fits
        .iter()
        .flat_map(|norms| norms.iter().zip(&times).map(|(n, t)| n * (eps * t).exp()))
        .fold(1.0, f64::max);
    Ok(SemigroupDecayEstimate { m, eps })
}

/// Ordinary least squares y ≈ a·x + b, returning (a, b).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// One column of the discrete heat kernel with a Gaussian envelope fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatKernelColumn {
    pub column: GridFunction,
    /// Fit H_t(x, y) ≈ C t^{−n/2} e^{−c|x−y|²/t} over nodes above 1e−8 of the peak.
    pub c_amp: f64,
    pub c_exp: f64,
}

/// Evolves the normalized discrete delta at `node` to time t. The step is
/// always positivity capped so the kernel column is nonnegative.
pub fn heat_kernel_column(op: &DiscreteOperator, node: usize, t: f64, opts: &EvolveOptions) -> Result<HeatKernelColumn> {
    let grid = &op.grid;
    if !(t > 0.0) {
        return Err(FracError::InvalidParameter(format!("heat kernel needs t > 0, got {t}")));
    }
    if node >= grid.len() || grid.is_boundary(node) {
        return Err(FracError::InvalidParameter(format!("node {node} is not an interior node")));
    }
    let mut delta = GridFunction::zeros(grid);
    delta.values[node] = 1.0 / grid.cell_volume();
    let opts = EvolveOptions { positivity_cap: true, ..*opts };
    let column = heat_evolve(op, &delta, t, &opts)?;
    let y = grid.coords(node);
    let peak = column.max();
    let (mut r2, mut logs) = (vec![], vec![]);
    for i in grid.interior_nodes() {
        let v = column.values[i];
        if v > 1e-8 * peak {
            r2.push(grid.coords(i).iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>());
            logs.push(v.ln());
        }
    }
    let (c_amp, c_exp) = if r2.len() >= 2 && r2.iter().any(|r| *r > 0.0) {
        let (slope, icpt) = linear_fit(&r2, &logs);
        (icpt.exp() * t.powf(0.5 * grid.dim() as f64), -slope * t)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(HeatKernelColumn { column, c_amp, c_exp })
}

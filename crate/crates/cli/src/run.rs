//! One runner per subcommand; each fills an [`ExperimentReport`].

use crate::config::{CoeffSource, Command, DataKind, Estimate, Mode, RunConfig};
use crate::report::ExperimentReport;
use crate::CliError;
use frac_core::extension::{
    default_grading, default_z_max, even_reflection, extend_via_pde, extend_via_quadrature, neumann_trace, BottomCondition,
    ExtensionGrid,
};
use frac_core::fractional::{apply_ls, solve_poisson, spectral_ls, BalakrishnanQuad, QuadOptions};
use frac_core::geometry::{
    cube, cube_cover, derived_constants, estimate_engulfing_theta, estimate_quasi_k, ConstantEstimate, Sampler,
};
use frac_core::harnack::{
    alpha1_theory, barrier_build, barrier_verify, covering_iteration, harnack_extension_experiment, harnack_ls_experiment,
    summarize, BarrierCase, BarrierSpec, HarnackConfig, HarnackReport, VerifyOptions,
};
use frac_core::paraboloid::{abp_experiment, AbpOptions, VertexSet, XZField};
use frac_core::semigroup::{
    assemble_l, CoeffField, DiscreteOperator, EvolveOptions, GridFunction, GridSpec, MixedStencil, SpectralEigen,
};
use frac_core::special::d_s;
use frac_core::{PointXZ, Potential, SParam};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};
use std::f64::consts::PI;
use std::time::Instant;

/// Runs the configured experiment on a pool of `threads` workers.
pub fn run(cfg: &RunConfig, threads: usize) -> Result<ExperimentReport, CliError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| CliError::Io(e.to_string()))?;
    let start = Instant::now();
    let mut report = pool.install(|| match cfg.command {
        Command::Apply => apply(cfg, threads),
        Command::Solve => solve(cfg, threads),
        Command::Extend => extend(cfg, threads),
        Command::Geometry => geometry(cfg, threads),
        Command::Paraboloid => paraboloid(cfg, threads),
        Command::Barrier => barrier(cfg, threads),
        Command::Harnack => harnack(cfg, threads),
        Command::Holder => holder(cfg, threads),
        Command::Cover => cover(cfg, threads),
    })?;
    report.timing.elapsed_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

fn sparam(cfg: &RunConfig) -> Result<SParam, CliError> {
    Ok(SParam::new(cfg.s)?)
}

fn mesh_nodes(cfg: &RunConfig) -> usize {
    (cfg.nodes - 1) * (1 << cfg.refine) + 1
}

fn mesh_levels(cfg: &RunConfig) -> usize {
    cfg.levels * (1 << cfg.refine)
}

fn num(v: f64) -> Value {
    // non-finite values become null
    json!(v)
}

/// Coefficients on a 1-D grid from the configured source.
pub fn coefficients(cfg: &RunConfig, grid: &GridSpec) -> Result<CoeffField, CliError> {
    match &cfg.coefficients {
        CoeffSource::Identity => Ok(CoeffField::identity(grid)),
        CoeffSource::Random { seed } => Ok(CoeffField::smooth_random(grid, cfg.lambda, cfg.cap, cfg.cap / cfg.lambda, *seed)?),
        CoeffSource::Csv { path } => {
            let mut rd = csv::Reader::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let mut entries = Vec::new();
            for (i, rec) in rd.records().enumerate() {
                let rec = rec.map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                let field = |k: usize| -> Result<f64, CliError> {
                    rec.get(k)
                        .and_then(|v| v.trim().parse::<f64>().ok())
                        .ok_or_else(|| CliError::Config(vec![format!("{}: row {} needs numeric x,a", path.display(), i + 1)]))
                };
                let (x, a) = (field(0)?, field(1)?);
                if i >= grid.len() || (grid.coords(i)[0] - x).abs() > 1e-9 {
                    return Err(CliError::Config(vec![format!(
                        "{}: row {} at x = {x} does not match the {}-node grid",
                        path.display(),
                        i + 1,
                        grid.len()
                    )]));
                }
                entries.push([a, 0.0, a]);
            }
            if entries.len() != grid.len() {
                return Err(CliError::Config(vec![format!("{}: {} rows for {} nodes", path.display(), entries.len(), grid.len())]));
            }
            Ok(CoeffField::new(grid, entries, cfg.lambda, cfg.cap)?)
        }
    }
}

/// Input data vanishing on the boundary.
pub fn input_data(cfg: &RunConfig, grid: &GridSpec) -> GridFunction {
    match cfg.data {
        DataKind::Sine => GridFunction::from_fn(grid, |x| (PI * x[0]).sin()),
        DataKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.data_seed);
            let amps: Vec<f64> = (1..=6).map(|k| rng.random_range(-1.0..1.0) / (k * k) as f64).collect();
            GridFunction::from_fn(grid, |x| amps.iter().enumerate().map(|(k, a)| a * ((k + 1) as f64 * PI * x[0]).sin()).sum())
        }
    }
}

struct Problem {
    s: SParam,
    grid: GridSpec,
    coeffs: CoeffField,
    op: DiscreteOperator,
    quad: BalakrishnanQuad,
    evolve: EvolveOptions,
    u: GridFunction,
}

fn problem(cfg: &RunConfig) -> Result<Problem, CliError> {
    let s = sparam(cfg)?;
    let grid = GridSpec::line(0.0, 1.0, mesh_nodes(cfg))?;
    let coeffs = coefficients(cfg, &grid)?;
    let op = assemble_l(&grid, &coeffs, MixedStencil::Standard)?;
    let evolve = EvolveOptions::default();
    let quad = BalakrishnanQuad::for_operator(&op, s, QuadOptions { quad_tol: cfg.quad_tol, ..QuadOptions::default() }, &evolve)?;
    let u = input_data(cfg, &grid);
    Ok(Problem { s, grid, coeffs, op, quad, evolve, u })
}

fn apply(cfg: &RunConfig, threads: usize) -> Result<ExperimentReport, CliError> {
    let p = problem(cfg)?;
    let ls = apply_ls(&p.op, &p.u, &p.quad, &p.evolve)?;
    let oracle = match p.coeffs.constant_diagonal() {
        Some(_) => Some(spectral_ls(&p.coeffs, &p.u, cfg.s, SpectralEigen::Discrete)?),
        None => None,
    };
    let mut r = ExperimentReport::new(cfg, threads, &["x", "u", "ls_u", "oracle"]);
    for i in 0..p.grid.len() {
        let o = oracle.as_ref().map_or(Value::Null, |o| num(o.values[i]));
        r.push(vec![num(p.grid.coords(i)[0]), num(p.u.values[i]), num(ls.values[i]), o]);
    }
    r.set("max_abs_ls_u", num(ls.max_abs()));
    r.set("oracle_rel_error", oracle.map_or(Value::Null, |o| num(ls.dist_inf(&o) / o.max_abs())));
    r.set("t_max", num(p.quad.t_max));
    Ok(r)
}

fn solve(cfg: &RunConfig, threads: usize) -> Result<ExperimentReport, CliError> {
    let p = problem(cfg)?;
    let sol = solve_poisson(&p.op, &p.u, &p.quad, &p.evolve, cfg.residual_tol)?;
    let mut r = ExperimentReport::new(cfg, threads, &["x", "f", "u"]);
    for i in 0..p.grid.len() {
        r.push(vec![num(p.grid.coords(i)[0]), num(p.u.values[i]), num(sol.u.values[i])]);
    }
    r.set("residual", num(sol.residual));
    r.set("flagged", sol.flagged);
    r.set("max_abs_u", num(sol.u.max_abs()));
    Ok(r)
}

fn extend(cfg: &RunConfig, threads: usize) -> Result<ExperimentReport, CliError> {
    let p = problem(cfg)?;
    let z_max = default_z_max(p.s, p.quad.eps, 1e-8)?;
    let zg = ExtensionGrid::new(&p.grid, z_max, mesh_levels(cfg), default_grading(p.s))?;
    let pde = extend_via_pde(&p.op, p.s, &zg, &BottomCondition::Dirichlet(p.u.clone()), None)?;
    let quad = extend_via_quadrature(&p.op, &p.u, &p.quad, &p.evolve, &zg)?;
    let trace = neumann_trace(&pde, p.s, cfg.trace_height, 2)?;
    let target = apply_ls(&p.op, &p.u, &p.quad, &p.evolve)?.scaled(d_s(cfg.s));
    let n = p.grid.len();
    let mut two_path: f64 = 0.0;
    for j in 1..zg.levels() - 1 {
        for i in 1..n - 1 {
            two_path = two_path.max((pde.at(j, i) - quad.at(j, i)).abs());
        }
    }
    let mut r = ExperimentReport::new(cfg, threads, &["x", "u", "neumann_trace", "d_s_ls_u"]);
    for i in 0..n {
        r.push(vec![num(p.grid.coords(i)[0]), num(p.u.values[i]), num(trace.values.values[i]), num(target.values[i])]);
    }
    r.set("z_max", num(z_max));
    r.set("levels", zg.levels());
    r.set("d_s", num(d_s(cfg.s)));
    r.set("trace_rel_error", num(trace.values.dist_inf(&target) / target.max_abs()));
    r.set("two_path_rel_diff", num(two_path / p.u.max_abs()));
    Ok(r)
}

fn geometry(cfg: &RunConfig, threads: usize) -> Result<ExperimentReport, CliError> {
    let s = sparam(cfg)?;
    let sampler = Sampler::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut r = ExperimentReport::new(cfg, threads, &["name", "s", "raw", "estimate", "samples"]);
    let row = |e: &ConstantEstimate| vec![json!(e.name), num(cfg.s), num(e.raw), num(e.estimate), json!(e.samples)];
    match cfg.estimate {
        Estimate::K => {
            let k = estimate_quasi_k(s, Potential::Full, &sampler, cfg.samples, &mut rng)?;
            r.push(row(&k));
            r.set("K", num(k.raw));
        }
        Estimate::Theta => {
            let t = estimate_engulfing_theta(s, Potential::Full, &sampler, cfg.samples, &mut rng)?;
            r.push(row(&t));
            r.set("theta", num(t.raw));
        }
        Estimate::Constants => {
            let k = estimate_quasi_k(s, Potential::Full, &sampler, cfg.samples, &mut rng)?;
            let t = estimate_engulfing_theta(s, Potential::Full, &sampler, cfg.samples, &mut rng)?;
            r.push(row(&k));
            r.push(row(&t));
            let g = derived_constants(k.estimate, t.estimate, 1)?.with_s(s);
            for (name, v) in [("K0", g.k0), ("eta", g.eta), ("K2_hat", g.k2_hat), ("K3_hat", g.k3_hat), ("q_s", g.q_s.unwrap_or(f64::NAN))] {
                r.push(vec![json!(name), num(cfg.s), num(v), num(v), Value::Null]);
                r.set(name, num(v));
            }
            r.set("K", num(k.raw));
            r.set("theta", num(t.raw));
        }
    }
    Ok(r)
}

fn paraboloid(cfg: &RunConfig, threads: usize) -> Result<ExperimentReport, CliError> {
    let s = sparam(cfg)?;
    let nodes = mesh_nodes(cfg);
    let levels = mesh_levels(cfg);
    let trials: Vec<_> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| -> Result<_, CliError> {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(trial as u64 + 1);
            let base = GridSpec::line(0.0, 1.0, nodes)?;
            let coeff_seed: u64 = rng.random();
            let coeffs = CoeffField::smooth_random(&base, cfg.lambda, cfg.cap, cfg.cap / cfg.lambda, coeff_seed)?;
            let op = assemble_l(&base, &coeffs, MixedStencil::Standard)?;
            let zg = ExtensionGrid::new(&base, 2.0, levels, 2.0)?;
            let (a1, a2, ph) = (rng.random_range(0.0..0.5), rng.random_range(0.0..0.5), rng.random_range(0.0..PI));
            let f = GridFunction::from_fn(&base, |x| 1.0 + a1 * (3.0 * x[0] + ph).sin() + a2 * (5.0 * x[0]).cos());
            let src = vec![rng.random_range(0.25..1.0); base.len() * zg.levels()];
            let ext = extend_via_pde(&op, s, &zg, &BottomCondition::Neumann(f.clone()), Some(&src))?;
            let u = XZField::from_reflected(&even_reflection(&ext))?;
            let center = PointXZ::new(vec![rng.random_range(0.45..0.55)], rng.random_range(0.25..0.35));
            let q = cube(s, &center, 0.06)?;
            let b = cube(s, &center, 0.015)?;
            Ok(abp_experiment(&u, &op, s, &VertexSet::Cube(b), cfg.opening, &f, &AbpOptions::new(q, 2.0))?)
        })
        .collect::<Result<_, _>>()?;
    let mut r = ExperimentReport::new(
        cfg,
        threads,
        &["trial", "ratio", "mu_a", "mu_b", "n_vertices", "n_contacts", "pinch_checked", "pinch_violations", "sign_violations", "neumann_violations", "eps0"],
    );
    for (t, a) in trials.iter().enumerate() {
        r.push(vec![
            json!(t),
            num(a.ratio),
            num(a.mu_a),
            num(a.mu_b),
            json!(a.n_vertices),
            json!(a.n_contacts),
            json!(a.pinch_checked),
            json!(a.pinch_violations),
            json!(a.sign_violations),
            json!(a.neumann_violations),
            num(a.eps0),
        ]);
    }
    let ratios = trials.iter().map(|a| a.ratio);
    r.set("min_ratio", num(ratios.clone().fold(f64::INFINITY, f64::min)));
    r.set("max_ratio", num(ratios.fold(f64::NEG_INFINITY, f64::max)));
    r.set("pinch_violations", trials.iter().map(|a| a.pinch_violations).sum::<usize>());
    Ok(r)
}

fn barrier(cfg: &RunConfig, threads: usize) -> Result<ExperimentReport, CliError> {
    let s = sparam(cfg)?;
    let default_z0 = |case: BarrierCase| match case {
        BarrierCase::One => 0.3,
        BarrierCase::Two => 0.05,
        BarrierCase::Three => 0.0,
        BarrierCase::Four => -0.2,
    };
    let (case, z0) = match (cfg.case, cfg.z0) {
        (Some(n), z0) => {
            let case = BarrierCase::from_number(n)?;
            (case, z0.unwrap_or(default_z0(case)))
        }
        (None, Some(z0)) => (BarrierCase::select(s, z0), z0),
        (None, None) => {
            let z0 = if cfg.s > 0.5 { 0.05 } else { 0.3 };
            (BarrierCase::select(s, z0), z0)
        }
    };
    let spec = BarrierSpec { case, s, gamma: cfg.gamma, center: PointXZ::new(vec![0.5], z0), r: cfg.radius, lambda: cfg.lambda, cap: cfg.cap };
    let b = barrier_build(&spec, cfg.opening)?;
    let grid = GridSpec::line(0.0, 1.0, mesh_nodes(cfg))?;
    let rep = barrier_verify(&b, &coefficients(cfg, &grid)?, &VerifyOptions::default())?;
    let mut r = ExperimentReport::new(
        cfg,
        threads,
        &["case", "z0", "alpha", "e", "min_excess", "inner_violations", "outer_violations", "min_neumann", "ln_c_realized", "ln_c_bound", "passes"],
    );
    r.push(vec![
        json!(rep.case),
        num(z0),
        num(rep.alpha),
        num(rep.e),
        num(rep.min_excess),
        json!(rep.inner_violations),
        json!(rep.outer_violations),
        num(rep.min_neumann),
        num(rep.ln_c_realized),
        num(rep.ln_c_bound),
        json!(rep.passes),
    ]);
    r.set("case", rep.case);
    r.set("passes", rep.passes);
    r.set("inequality_ok", rep.inequality_ok);
    r.set("neumann_ok", rep.neumann_ok);
    r.set("inner_bound_ok", rep.inner_bound_ok);
    r.set("eps", rep.eps.map_or(Value::Null, num));
    r.set("eps0", rep.eps0.map_or(Value::Null, num));
    Ok(r)
}

fn ensemble(cfg: &RunConfig) -> Result<(HarnackConfig, Vec<HarnackReport>), CliError> {
    let base = match cfg.mode {
        Mode::Extension => HarnackConfig::new(cfg.s, cfg.trials, cfg.seed),
        Mode::Ls => HarnackConfig::for_ls(cfg.s, cfg.trials, cfg.seed),
    };
    let hc = HarnackConfig { nodes: cfg.nodes, levels: cfg.levels, refine: cfg.refine, lambda: cfg.lambda, cap: cfg.cap, ..base };
    let reports = match cfg.mode {
        Mode::Extension => harnack_extension_experiment(&hc)?,
        Mode::Ls => harnack_ls_experiment(&hc)?,
    };
    Ok((hc, reports))
}

fn harnack(cfg: &RunConfig, threads: usize) -> Result<ExperimentReport, CliError> {
    let (_, reports) = ensemble(cfg)?;
    let mut r = ExperimentReport::new(
        cfg,
        threads,
        &["trial", "coeff_seed", "r", "center_z", "nodes", "sup", "inf", "f_norm", "rhs_term", "c_h", "admissible", "violation", "gamma_osc", "alpha"],
    );
    for t in &reports {
        r.push(vec![
            json!(t.trial),
            json!(t.coeff_seed),
            num(t.r),
            num(t.center_z),
            json!(t.nodes),
            num(t.sup),
            num(t.inf),
            num(t.f_norm),
            num(t.rhs_term),
            num(t.c_h),
            json!(t.admissible),
            json!(t.violation),
            num(t.gamma_osc),
            t.holder.as_ref().map_or(Value::Null, |h| num(h.alpha)),
        ]);
    }
    let sum = summarize(&reports);
    r.set("max_CH", num(sum.max_c_h));
    r.set("p95_CH", num(sum.p95_c_h));
    r.set("mean_CH", num(sum.mean_c_h));
    r.set("alpha_fit", sum.alpha_fit.map_or(Value::Null, num));
    r.set("trials", sum.trials);
    r.set("admissible", sum.admissible);
    r.set("violations", sum.violations);
    Ok(r)
}

fn holder(cfg: &RunConfig, threads: usize) -> Result<ExperimentReport, CliError> {
    let (hc, reports) = ensemble(cfg)?;
    let mut r = ExperimentReport::new(cfg, threads, &["trial", "c_h", "gamma_osc", "alpha1_theory", "slope", "alpha", "monotone"]);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in &reports {
        let theory = if t.gamma_osc > 0.0 { alpha1_theory(cfg.mu, t.gamma_osc, hc.kappa0, hc.k0_hat) } else { f64::NAN };
        let (slope, alpha, mono) = match &t.holder {
            Some(h) => {
                lo = lo.min(h.alpha);
                hi = hi.max(h.alpha);
                (num(h.slope), num(h.alpha), json!(h.monotone))
            }
            None => (Value::Null, Value::Null, Value::Null),
        };
        r.push(vec![json!(t.trial), num(t.c_h), num(t.gamma_osc), num(theory), slope, alpha, mono]);
    }
    r.set("min_alpha", num(lo));
    r.set("max_alpha", num(hi));
    r.set("fits", reports.iter().filter(|t| t.holder.is_some()).count());
    r.set("alpha_in_unit_interval", lo > 0.0 && hi <= 1.0);
    Ok(r)
}

fn cover(cfg: &RunConfig, threads: usize) -> Result<ExperimentReport, CliError> {
    let s = sparam(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pts: Vec<PointXZ> = (0..cfg.points).map(|_| PointXZ::new(vec![rng.random_range(0.0..1.0)], rng.random_range(-0.5..0.5))).collect();
    let radii: Vec<f64> = (0..cfg.points).map(|_| 10f64.powf(rng.random_range(-4.0..-2.0))).collect();
    let k0 = derived_constants(2.0, 1.0, 1)?.k0;
    let cc = cube_cover(s, &pts, &radii, k0)?;
    let disjoint = cc.shrunk_pairwise_disjoint(s, k0)?;
    // synthetic nested sets whose complements shrink by exactly 1 − c per step
    let c = cfg.planted_c;
    let k_max = 12;
    let mut cells: Vec<f64> = (0..k_max).map(|k| c * (1.0 - c).powi(k as i32)).collect();
    cells.push((1.0 - c).powi(k_max as i32));
    let universe: Vec<usize> = (0..=k_max).collect();
    let sets: Vec<Vec<usize>> = (0..=k_max).map(|k| (0..k).collect()).collect();
    let it = covering_iteration(&cells, &universe, &sets, c)?;
    let mut r = ExperimentReport::new(cfg, threads, &["k", "measure", "bound"]);
    for (k, m) in it.measures.iter().enumerate() {
        r.push(vec![json!(k), num(*m), num((1.0 - c).powi(k as i32) * it.universe_measure)]);
    }
    r.set("cubes", cc.cubes.len());
    r.set("uncovered", cc.uncovered.len());
    r.set("shrunk_disjoint", disjoint);
    r.set("K0", num(k0));
    r.set("rate", it.rate.map_or(Value::Null, num));
    r.set("planted_rate", num(1.0 - c));
    r.set("c_observed", it.c_observed.map_or(Value::Null, num));
    r.set("bound_holds", it.bound_holds);
    Ok(r)
}

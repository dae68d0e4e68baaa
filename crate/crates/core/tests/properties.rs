use frac_core::extension::{default_grading, default_z_max, extend_via_pde, BottomCondition, ExtensionGrid};
use frac_core::fractional::{apply_ls, BalakrishnanQuad, QuadOptions};
use frac_core::geometry::{
    cube, delta, delta_h, derived_constants, estimate_quasi_k, h_second, mu_h_interval, Sampler,
};
use frac_core::harnack::{
    absorb_neumann_rhs, barrier_build, barrier_verify, covering_iteration, normalize_w_eps, quotient_q, BarrierCase,
    BarrierSpec, VerifyOptions,
};
use frac_core::paraboloid::{contact_set, reopen, slide_from_below, SearchSet, XZField, XZGrid, TOL_TOUCH};
use frac_core::quadrature::adaptive_simpson;
use frac_core::semigroup::{
    assemble_l, heat_evolve, spectral_semigroup, CoeffField, DiscreteOperator, EvolveOptions, GridFunction, GridSpec,
    MixedStencil, SpectralEigen,
};
use frac_core::{PointXZ, Potential, SParam};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn sp(s: f64) -> SParam {
    SParam::new(s).unwrap()
}

fn line_op(n: usize, seed: Option<u64>) -> DiscreteOperator {
    let g = GridSpec::line(0.0, 1.0, n).unwrap();
    let c = match seed {
        Some(k) => CoeffField::smooth_random(&g, 0.5, 2.0, 2.0, k).unwrap(),
        None => CoeffField::identity(&g),
    };
    assemble_l(&g, &c, MixedStencil::Standard).unwrap()
}

/// Smooth data from a few sine modes; vanishes on the boundary.
fn modes(g: &GridSpec, amps: &[f64]) -> GridFunction {
    GridFunction::from_fn(g, |x| amps.iter().enumerate().map(|(k, a)| a * ((k + 1) as f64 * PI * x[0]).sin()).sum())
}

fn xz_grid(nodes: usize, levels: usize, z_top: f64) -> XZGrid {
    let base = GridSpec::line(0.0, 1.0, nodes).unwrap();
    XZGrid::symmetric(&base, (1..=levels).map(|j| z_top * j as f64 / levels as f64).collect()).unwrap()
}

fn noisy_field(g: &XZGrid, seed: u64, symmetric: bool) -> XZField {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..g.len()).map(|_| rng.random::<f64>()).collect();
    let top = g.z.len() - 1;
    XZField::from_fn(g, |p| (3.0 * p.x[0]).sin() + p.z * p.z).values.iter().enumerate().fold(
        XZField::from_fn(g, |_| 0.0),
        |mut f, (i, v)| {
            // the mirror node shares its noise when the field must be even in z
            let k = if symmetric { i.min(g.index(top - g.level_of(i), g.base_node(i))) } else { i };
            f.values[i] = v + 0.05 * noise[k];
            f
        },
    )
}

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(n) }
}

proptest! {
    #![proptest_config(cases(256))]

    #[test]
    fn full_distance_separates(s in 0.05f64..0.95, x0 in -2.0f64..2.0, x1 in -2.0f64..2.0, y0 in -2.0f64..2.0,
                               y1 in -2.0f64..2.0, z0 in -2.0f64..2.0, z1 in -2.0f64..2.0) {
        let s = sp(s);
        let p0 = PointXZ::new(vec![x0, y0], z0);
        let p1 = PointXZ::new(vec![x1, y1], z1);
        let full = delta(s, Potential::Full, &p0, &p1).unwrap();
        let split = delta(s, Potential::Phi, &p0, &p1).unwrap() + delta(s, Potential::H, &p0, &p1).unwrap();
        prop_assert!((full - split).abs() <= 1e-14 * full.max(1e-300));
    }

    #[test]
    fn h_distance_is_odd_symmetric(s in 0.05f64..0.95, z0 in -3.0f64..3.0, z in -3.0f64..3.0) {
        let s = sp(s);
        let a = delta_h(s, z0, z);
        let b = delta_h(s, -z0, -z);
        prop_assert!((a - b).abs() <= 1e-15 * a.max(1e-300));
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn mu_h_closed_form_matches_quadrature(s in 0.05f64..0.95, a in 0.01f64..2.0, w in 0.01f64..2.0, neg in any::<bool>()) {
        let s = sp(s);
        let (lo, hi) = if neg { (-a - w, -a) } else { (a, a + w) };
        let exact = mu_h_interval(s, lo, hi).unwrap();
        let quad = adaptive_simpson(|z| h_second(s, z).unwrap(), lo, hi, 1e-13 * exact).unwrap();
        prop_assert!((exact - quad).abs() <= 1e-10 * exact, "{exact} vs {quad}");
    }

    #[test]
    fn tensor_cube_sits_between_sections(s in 0.05f64..0.95, cx in -1.0f64..1.0, cy in -1.0f64..1.0,
                                         cz in -1.0f64..1.0, r in 1e-3f64..2.0,
                                         u in prop::array::uniform3(-1.0f64..1.0)) {
        let s = sp(s);
        let c = PointXZ::new(vec![cx, cy], cz);
        let q = cube(s, &c, r).unwrap();
        let span = |d: usize| q.axis_intervals[d].1 - q.axis_intervals[d].0;
        let mid = |d: usize| 0.5 * (q.axis_intervals[d].1 + q.axis_intervals[d].0);
        // points of a slightly enlarged box, so both inclusions are exercised
        let p = PointXZ::new(vec![mid(0) + 0.6 * span(0) * u[0], mid(1) + 0.6 * span(1) * u[1]], mid(2) + 0.6 * span(2) * u[2]);
        let d = delta(s, Potential::Full, &c, &p).unwrap();
        if d < r {
            prop_assert!(q.contains(&p));
        }
        if q.contains(&p) {
            prop_assert!(d < 3.0 * r);
        }
    }

    #[test]
    fn derived_constants_are_pure(k in 1.0f64..10.0, theta in 1.0f64..5.0, n in 1usize..4) {
        let a = derived_constants(k, theta, n).unwrap();
        let b = derived_constants(k, theta, n).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.k0, 2.0 * k * k + 2.0 * k);
        prop_assert_eq!(a.k3_hat, theta * theta * a.k2_hat);
    }

    #[test]
    fn quotient_is_at_least_one_and_decreasing(si in 0usize..6, z0 in 1e-3f64..1e3) {
        let s = sp([0.05, 0.1, 0.2, 0.3, 0.4, 0.5][si]);
        let zs: Vec<f64> = (0..=240).map(|k| z0 * 10f64.powf(-6.0 + 12.0 * k as f64 / 240.0)).collect();
        let q: Vec<f64> = zs.iter().map(|&z| quotient_q(s, z0, z).unwrap()).collect();
        prop_assert!(q.iter().all(|v| *v >= 1.0 - 1e-12));
        for w in q.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn covering_recovers_any_planted_rate(c in 0.05f64..0.9, k_max in 4usize..16) {
        let mut cells: Vec<f64> = (0..k_max).map(|k| c * (1.0 - c).powi(k as i32)).collect();
        cells.push((1.0 - c).powi(k_max as i32));
        let universe: Vec<usize> = (0..=k_max).collect();
        let sets: Vec<Vec<usize>> = (0..=k_max).map(|k| (0..k).collect()).collect();
        let rep = covering_iteration(&cells, &universe, &sets, c).unwrap();
        prop_assert!((rep.rate.unwrap() - (1.0 - c)).abs() < 1e-3);
        prop_assert!(rep.bound_holds);
    }

    #[test]
    fn normalization_is_exact(scale in 0.1f64..10.0, f_norm in 0.0f64..2.0, eps in 1e-3f64..1.0, a in 0.1f64..5.0) {
        let g = xz_grid(11, 4, 1.0);
        let s = sp(0.5);
        let geo = derived_constants(2.0, 1.0, 1).unwrap();
        let u = XZField::from_fn(&g, |p| scale * (1.0 + p.x[0] * p.z.abs()));
        let c = g.index(4, 5);
        let out = normalize_w_eps(&u, s, f_norm, a, 0.1, c, &geo, eps).unwrap();
        let denom = 2.0 * geo.k0 * u.values[c] + f_norm * 0.1 / out.mu_h_section + eps;
        prop_assert_eq!(out.denominator, denom);
        for (w, v) in out.w.values.iter().zip(&u.values) {
            prop_assert!((w - a * 0.1 * v / denom).abs() <= 1e-15 * w.abs().max(1e-300));
        }
    }

    #[test]
    fn absorbed_rhs_is_nonnegative(s in 0.1f64..0.9, amps in prop::collection::vec(-1.0f64..1.0, 3), r in 0.01f64..0.2) {
        let s = sp(s);
        let g = xz_grid(21, 8, 0.5);
        let u = XZField::from_fn(&g, |p| 1.0 + p.x[0]);
        let f = modes(&g.base, &amps);
        let q = cube(s, &PointXZ::new(vec![0.5], 0.0), r).unwrap();
        let out = absorb_neumann_rhs(&u, s, &f, &q, 2.0).unwrap();
        let (xa, xb) = q.axis_intervals[0];
        for (i, v) in out.g.iter().enumerate() {
            let x = g.base.coords(i)[0];
            if x >= xa && x <= xb {
                prop_assert!(*v >= 0.0);
            }
        }
        prop_assert!(out.nonnegative_on_cube);
        for i in 0..g.len() {
            let z = g.point(i).z;
            prop_assert!((out.v.values[i] - u.values[i] - (out.shift - out.f_norm * z.abs())).abs() < 1e-14);
        }
    }
}

proptest! {
    #![proptest_config(cases(32))]

    #[test]
    fn touch_gap_is_zero_at_the_contact(seed in 0u64..1000, vx in 0.0f64..1.0, vz in -1.0f64..1.0, a in 0.5f64..20.0) {
        let s = sp(0.45);
        let g = xz_grid(21, 10, 1.0);
        let f = noisy_field(&g, seed, false);
        let t = slide_from_below(&f, s, a, &PointXZ::new(vec![vx], vz), &SearchSet::All).unwrap();
        prop_assert!(t.gap_min.abs() <= TOL_TOUCH * (1.0 + f.max_abs()));
        let at = f.values[t.contact] - t.paraboloid.eval(&t.point);
        prop_assert!(at.abs() <= TOL_TOUCH * (1.0 + f.max_abs()));
    }

    #[test]
    fn reopening_keeps_the_contact(seed in 0u64..1000, vx in 0.0f64..1.0, vz in -1.0f64..1.0, factor in 1.0f64..20.0) {
        let s = sp(0.35);
        let g = xz_grid(21, 10, 1.0);
        let f = noisy_field(&g, seed, false);
        let t = slide_from_below(&f, s, 1.0, &PointXZ::new(vec![vx], vz), &SearchSet::All).unwrap();
        let r = reopen(&f, &t, factor, &SearchSet::All, TOL_TOUCH).unwrap();
        prop_assert_eq!(r.contact, t.contact);
        for i in 0..g.len() {
            let p = g.point(i);
            prop_assert!(r.paraboloid.eval(&p) <= t.paraboloid.eval(&p) + 1e-12);
        }
    }

    #[test]
    fn contact_sets_ignore_vertex_order_and_shifts(seed in 0u64..1000, shift in -5.0f64..5.0, rot in 0usize..40) {
        let s = sp(0.6);
        let g = xz_grid(21, 10, 1.0);
        let f = noisy_field(&g, seed, false);
        let verts: Vec<PointXZ> = (0..40).map(|k| PointXZ::new(vec![0.2 + 0.015 * k as f64], 0.3 - 0.012 * k as f64)).collect();
        let all: Vec<usize> = (0..g.len()).collect();
        let base = contact_set(&f, s, 4.0, &verts, &all).unwrap();
        let mut perm = verts.clone();
        perm.rotate_left(rot);
        perm.reverse();
        prop_assert_eq!(&contact_set(&f, s, 4.0, &perm, &all).unwrap().nodes, &base.nodes);
        let shifted = XZField { grid: g.clone(), values: f.values.iter().map(|v| v + shift).collect() };
        prop_assert_eq!(&contact_set(&shifted, s, 4.0, &verts, &all).unwrap().nodes, &base.nodes);
    }

    #[test]
    fn symmetric_fields_have_mirrored_contacts(seed in 0u64..1000, s in 0.1f64..0.9) {
        let s = sp(s);
        let g = xz_grid(21, 10, 1.0);
        let f = noisy_field(&g, seed, true);
        let verts: Vec<PointXZ> = (0..20).map(|k| PointXZ::new(vec![0.2 + 0.03 * k as f64], 0.05 + 0.04 * k as f64)).collect();
        let mirrored: Vec<PointXZ> = verts.iter().map(PointXZ::mirrored).collect();
        let all: Vec<usize> = (0..g.len()).collect();
        let up = contact_set(&f, s, 3.0, &verts, &all).unwrap();
        let down = contact_set(&f, s, 3.0, &mirrored, &all).unwrap();
        let flip = |i: usize| g.index(g.z.len() - 1 - g.level_of(i), g.base_node(i));
        for ((_, a), (_, b)) in up.contacts.iter().zip(&down.contacts) {
            prop_assert_eq!(flip(*a), *b);
        }
    }

    #[test]
    fn heat_flow_is_positive_and_contractive(seed in 0u64..1000, amps in prop::collection::vec(0.0f64..1.0, 12),
                                             ti in 0usize..3) {
        let op = line_op(33, Some(seed));
        let g = op.grid.clone();
        // rough nonnegative data: tents of random height
        let u0 = GridFunction::from_fn(&g, |x| amps.iter().enumerate()
            .map(|(k, a)| a * (1.0 - 12.0 * (x[0] - (k as f64 + 0.5) / 12.0).abs()).max(0.0)).sum());
        let t = [0.01, 0.1, 1.0][ti];
        let u = heat_evolve(&op, &u0, t, &EvolveOptions::positive()).unwrap();
        prop_assert!(u.min() >= -1e-12);
        prop_assert!(u.max_abs() <= u0.max_abs() * (1.0 + 1e-12));
    }

    #[test]
    fn spectral_semigroup_composes(amps in prop::collection::vec(-1.0f64..1.0, 5), t1 in 0.0f64..0.5, t2 in 0.0f64..0.5) {
        let g = GridSpec::line(0.0, 1.0, 33).unwrap();
        let c = CoeffField::identity(&g);
        let u = modes(&g, &amps);
        let two = spectral_semigroup(&c, &spectral_semigroup(&c, &u, t1, SpectralEigen::Discrete).unwrap(), t2, SpectralEigen::Discrete).unwrap();
        let one = spectral_semigroup(&c, &u, t1 + t2, SpectralEigen::Discrete).unwrap();
        prop_assert!(two.dist_inf(&one) <= 1e-12 * u.max_abs().max(1.0));
    }

    #[test]
    fn extension_obeys_the_maximum_principle(amps in prop::collection::vec(-1.0f64..1.0, 4), si in 0usize..3, seed in 0u64..100) {
        let s = sp([0.25, 0.5, 0.75][si]);
        let op = line_op(33, Some(seed));
        let u = modes(&op.grid, &amps);
        let zg = ExtensionGrid::new(&op.grid, 3.0, 24, default_grading(s)).unwrap();
        let ext = extend_via_pde(&op, s, &zg, &BottomCondition::Dirichlet(u.clone()), None).unwrap();
        let (lo, hi) = (u.min().min(0.0), u.max().max(0.0));
        let tol = 1e-10 * u.max_abs().max(1.0);
        prop_assert!(ext.values.iter().all(|v| *v >= lo - tol && *v <= hi + tol));
    }
}

proptest! {
    #![proptest_config(cases(8))]

    #[test]
    fn fractional_power_is_linear(a in prop::collection::vec(-1.0f64..1.0, 3), b in prop::collection::vec(-1.0f64..1.0, 3),
                                  alpha in -2.0f64..2.0, seed in 0u64..100) {
        let op = line_op(33, Some(seed));
        let ev = EvolveOptions::default();
        let q = BalakrishnanQuad::for_operator(&op, sp(0.4), QuadOptions::default(), &ev).unwrap();
        let (u, v) = (modes(&op.grid, &a), modes(&op.grid, &b));
        let lhs = apply_ls(&op, &u.scaled(alpha).axpy(1.0, &v), &q, &ev).unwrap();
        let rhs = apply_ls(&op, &u, &q, &ev).unwrap().scaled(alpha).axpy(1.0, &apply_ls(&op, &v, &q, &ev).unwrap());
        prop_assert!(lhs.dist_inf(&rhs) <= 1e-10 * rhs.max_abs().max(1.0));
    }

    #[test]
    fn fractional_power_has_nonpositive_off_diagonals(node in 1usize..32, si in 0usize..3, seed in 0u64..100) {
        let op = line_op(33, Some(seed));
        let ev = EvolveOptions::positive();
        let q = BalakrishnanQuad::for_operator(&op, sp([0.25, 0.5, 0.75][si]), QuadOptions::default(), &ev).unwrap();
        let mut e = GridFunction::zeros(&op.grid);
        e.values[node] = 1.0;
        let col = apply_ls(&op, &e, &q, &ev).unwrap();
        let diag = col.values[node];
        prop_assert!(diag > 0.0);
        for (i, v) in col.values.iter().enumerate() {
            if i != node {
                prop_assert!(*v <= 1e-12 * diag, "entry {i}: {v}");
            }
        }
    }
}

#[test]
fn half_powers_compose_to_the_operator() {
    let op = line_op(65, None);
    let ev = EvolveOptions::default();
    let q = BalakrishnanQuad::for_operator(&op, sp(0.5), QuadOptions::default(), &ev).unwrap();
    let u = modes(&op.grid, &[1.0, 0.3, -0.2]);
    let twice = apply_ls(&op, &apply_ls(&op, &u, &q, &ev).unwrap(), &q, &ev).unwrap();
    let full = op.apply(&u);
    assert!(twice.dist_inf(&full) / full.max_abs() < 0.02, "{}", twice.dist_inf(&full) / full.max_abs());
}

#[test]
fn heat_flow_converges_at_second_order() {
    let op = line_op(33, None);
    let u0 = modes(&op.grid, &[1.0]);
    let lam = 4.0 * (32.0f64).powi(2) * (PI / 64.0).sin().powi(2);
    let exact = u0.scaled((-lam * 0.1).exp());
    let err = |rel: f64| {
        let opts = EvolveOptions { rel_step: rel, ..EvolveOptions::default() };
        heat_evolve(&op, &u0, 0.1, &opts).unwrap().dist_inf(&exact)
    };
    let (e1, e2) = (err(0.04), err(0.02));
    let order = (e1 / e2).log2();
    assert!(order > 1.7, "observed order {order}");
}

#[test]
fn graded_mesh_refinement_reduces_the_trace_error() {
    use frac_core::extension::neumann_trace;
    use frac_core::special::d_s;
    for s in [0.25, 0.75] {
        let s = sp(s);
        let op = line_op(33, None);
        let u = modes(&op.grid, &[1.0]);
        let lam = 4.0 * (32.0f64).powi(2) * (PI / 64.0).sin().powi(2);
        let exact = u.scaled(d_s(s.get()) * lam.powf(s.get()));
        let zmax = default_z_max(s, 1e-6, 1e-8).unwrap();
        let err = |m: usize| {
            let zg = ExtensionGrid::new(&op.grid, zmax, m, default_grading(s)).unwrap();
            let ext = extend_via_pde(&op, s, &zg, &BottomCondition::Dirichlet(u.clone()), None).unwrap();
            let tr = neumann_trace(&ext, s, 0.01, 2).unwrap();
            tr.values.dist_inf(&exact) / exact.max_abs()
        };
        let (coarse, fine) = (err(100), err(200));
        assert!(fine < coarse, "s={}: {coarse} -> {fine}", s.get());
    }
}

#[test]
fn quasi_triangle_estimate_is_a_running_max() {
    let s = sp(0.5);
    let sampler = Sampler::default();
    let mut last = 0.0;
    for n in [100, 1000, 5000] {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let est = estimate_quasi_k(s, Potential::H, &sampler, n, &mut rng).unwrap();
        assert!(est.raw >= last);
        last = est.raw;
    }
}

#[test]
fn barriers_pass_verification_in_every_case() {
    let unit = CoeffField::identity(&GridSpec::line(0.0, 1.0, 33).unwrap());
    for &(case, s, z0) in &[
        (BarrierCase::One, 0.3, 0.3),
        (BarrierCase::Two, 0.7, 0.0),
        (BarrierCase::Three, 0.4, 0.0),
        (BarrierCase::Four, 0.4, -0.2),
    ] {
        let spec = BarrierSpec { case, s: sp(s), gamma: 0.25, center: PointXZ::new(vec![0.5], z0), r: 0.02, lambda: 1.0, cap: 1.0 };
        let b = barrier_build(&spec, 1.0).unwrap();
        let rep = barrier_verify(&b, &unit, &VerifyOptions::default()).unwrap();
        assert!(rep.passes, "case {}: {rep:?}", case.number());
    }
}

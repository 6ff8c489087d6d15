use perchs_core::elliptic::*;
use perchs_core::evolution::*;
use perchs_core::geometry::*;
use perchs_core::homogenization::EffectiveTensor;
use perchs_core::obstacle::*;
use proptest::prelude::*;
use std::f64::consts::PI;

fn box_mask(n: usize, half: f64) -> DomainMask {
    DomainMask::all_fluid(GridSpec::square(n, -half, half).unwrap(), OuterBoundary::Dirichlet).unwrap()
}

#[test]
fn radial_obstacle_matches_mass_balance() {
    // load +1 in B_{r0}, -1 outside: the positivity set is B_ρ with ρ² = 2 r0²,
    // and integrating the radial ODE gives p(0) = r0² ln 2 / 2.
    let r0 = 0.5;
    let m = box_mask(384, 1.5);
    let load = ScalarField::from_fn(&m, |p| if p[0].hypot(p[1]) < r0 { 1.0 } else { -1.0 });
    let sol = solve_obstacle(&m, &load, &SolverConfig::default(), None).unwrap();
    assert!(sol.report.passes(1e-8), "{:?}", sol.report);
    let g = *m.grid();
    let rho = (sol.active_count() as f64 * g.h * g.h / PI).sqrt();
    assert!((rho / (2.0f64.sqrt() * r0) - 1.0).abs() < 0.02, "rho {rho}");
    let center = g.nearest_cell([0.0, 0.0]);
    let pc = sol.p.at(center.0, center.1).unwrap();
    let exact = r0 * r0 * 2.0f64.ln() / 2.0;
    assert!((pc / exact - 1.0).abs() < 0.02, "p(0) {pc} vs {exact}");
}

#[test]
fn projected_sor_and_active_set_agree() {
    let g = GridSpec::square(64, -1.0, 1.0).unwrap();
    let m = generate_domain(&PerforationModel::square_site(0.5, 0.7, 0.25, 4), &g).unwrap();
    let load = ScalarField::from_fn(&m, |p| if p[0].hypot(p[1]) < 0.4 { 1.0 } else { -0.5 });
    let a = solve_obstacle(&m, &load, &SolverConfig::default().with_tol(1e-11), None).unwrap();
    let mut cfg = SolverConfig::default().with_tol(1e-11).with_method(SolverMethod::Sor);
    cfg.max_iter = 1_000_000;
    let b = solve_obstacle(&m, &load, &cfg, None).unwrap();
    let d = a.p.defined().map(|(c, v)| (v - b.p.or_zero(c)).abs()).fold(0.0, f64::max);
    assert!(d < 1e-6 * a.p.max_abs(), "max difference {d}");
    assert!(complementarity_report(&b, &load).unwrap().passes(1e-6));
}

#[test]
fn identity_tensor_reproduces_the_plain_operator() {
    let m = box_mask(48, 1.0);
    let load = ScalarField::from_fn(&m, |p| 0.3 - p[0] * p[0] - p[1] * p[1]);
    let cfg = SolverConfig::default().with_tol(1e-12);
    let a = solve_obstacle(&m, &load, &cfg, None).unwrap();
    let b = solve_obstacle(&m, &load, &cfg, Some(&EffectiveTensor::identity())).unwrap();
    assert_eq!(a.active, b.active);
    let d = a.p.defined().map(|(c, v)| (v - b.p.or_zero(c)).abs()).fold(0.0, f64::max);
    assert!(d < 1e-10);
}

#[test]
fn singular_operator_with_positive_mass_is_rejected() {
    let m = DomainMask::all_fluid(GridSpec::square(16, 0.0, 1.0).unwrap(), OuterBoundary::Neumann).unwrap();
    let r = solve_obstacle(&m, &ScalarField::constant_on(&m, 1.0), &SolverConfig::default(), None);
    assert!(r.is_err());
}

#[test]
fn small_radial_evolution_tracks_exponential_area() {
    // the droplet area grows like e^t, so R(t) = r0 e^{t/2} and
    // p(t, 0) = ∫ R(s)²/4 ds = r0² (e^t - 1) / 4.
    let (r0, t_final) = (0.5, 0.5);
    let m = box_mask(192, 1.5);
    let s0 = init_state(&m, &RegionDescriptor::disc([0.0, 0.0], r0)).unwrap();
    let params = EvolutionParams { t_final, dt: 1.0 / 32.0, mode: StepMode::FixedPoint, ..Default::default() };
    let traj = run_evolution(&m, s0, None, &params).unwrap();
    let last = traj.final_state();
    let g = *m.grid();
    let radius = (last.area(&g) / PI).sqrt();
    let expected = r0 * (0.5 * t_final).exp();
    assert!((radius / expected - 1.0).abs() < 0.03, "R {radius} vs {expected}");
    let c = g.nearest_cell([0.0, 0.0]);
    let pc = last.p.at(c.0, c.1).unwrap();
    let p_exact = r0 * r0 * (t_final.exp() - 1.0) / 4.0;
    assert!((pc / p_exact - 1.0).abs() < 0.05, "p(0) {pc} vs {p_exact}");
    let u = recover_u(last, &m, &SolverConfig::default(), None).unwrap();
    let u_exact = expected * expected / 4.0;
    assert!((u.at(c.0, c.1).unwrap() / u_exact - 1.0).abs() < 0.06);
    assert!(traj.rows.iter().all(|r| r.monotonicity_violations == 0));
    assert!(traj.steps.iter().all(|s| !s.fell_back));
    let prev = traj.previous.as_ref().unwrap();
    let err = pressure_recovery_error(prev, last, &m, &SolverConfig::default(), None).unwrap();
    assert!(err < 0.1 * u_exact, "recovery error {err}");
}

#[test]
fn diagonal_tensor_elongates_along_the_stiff_axis() {
    let m = box_mask(96, 1.5);
    let t = EffectiveTensor::diagonal(1.0, 0.4, 0.75);
    let s0 = init_state(&m, &RegionDescriptor::disc([0.0, 0.0], 0.3)).unwrap();
    let params = EvolutionParams { t_final: 0.75, dt: 1.0 / 32.0, ..Default::default() };
    let traj = run_evolution(&m, s0, Some(&t), &params).unwrap();
    let last = traj.final_state();
    let g = *m.grid();
    let occ = last.occupied();
    let (mut wx, mut wy) = (0.0f64, 0.0f64);
    for c in (0..g.len()).filter(|&c| occ[c]) {
        let p = g.center_of(c);
        wx = wx.max(p[0].abs());
        wy = wy.max(p[1].abs());
    }
    assert!(wx > wy + 2.0 * g.h, "extent x {wx}, y {wy}");
    for s in &traj.snapshots {
        let rep = star_shape_check(s, &m, [0.0, 0.0], 0.1);
        assert!(rep.passes, "{rep:?} at t = {}", s.t);
    }
}

#[test]
fn free_boundary_metrics_on_known_sets() {
    let m = box_mask(40, 1.0);
    let g = *m.grid();
    let disc = |r: f64| -> Vec<bool> { (0..g.len()).map(|c| { let p = g.center_of(c); p[0].hypot(p[1]) <= r }).collect() };
    let (a, b) = (disc(0.4), disc(0.6));
    let rho = containment_radius(&a, &b, &m);
    assert!((rho - 0.2).abs() <= 1.5 * g.h, "containment {rho}");
    assert_eq!(containment_radius(&b, &a, &m), 0.0);
    let state = |set: &[bool]| {
        let mut s = init_state(&m, &RegionDescriptor::disc([0.0, 0.0], 0.05)).unwrap();
        s.p = ScalarField::from_fn(&m, |_| 0.0);
        for c in (0..g.len()).filter(|&c| set[c]) {
            s.p.values_mut()[c] = 1.0;
        }
        s
    };
    let fa = extract_free_boundary(&state(&a), &m);
    let fb = extract_free_boundary(&state(&b), &m);
    let d = hausdorff_distance(&fa, &fb, &g).unwrap();
    assert!((d - 0.2).abs() <= 1.5 * g.h, "hausdorff {d}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn obstacle_solutions_satisfy_kkt(seed in 0u64..500, q in 0.0f64..=1.0, c0 in 0.05f64..0.5, slope in 0.0f64..2.0) {
        let g = GridSpec::square(40, -1.0, 1.0).unwrap();
        let m = generate_domain(&PerforationModel::square_site(0.5, q, 0.25, seed), &g).unwrap();
        let load = ScalarField::from_fn(&m, |p| c0 - slope * p[0].hypot(p[1]));
        let sol = solve_obstacle(&m, &load, &SolverConfig::default().with_tol(1e-10), None).unwrap();
        prop_assert!(sol.report.passes(1e-8), "{:?}", sol.report);
    }

    #[test]
    fn larger_loads_give_larger_pressures(seed in 0u64..500, q in 0.0f64..=1.0, bump in 0.0f64..1.0) {
        let g = GridSpec::square(40, -1.0, 1.0).unwrap();
        let m = generate_domain(&PerforationModel::square_site(0.5, q, 0.25, seed), &g).unwrap();
        let cfg = SolverConfig::default().with_tol(1e-11);
        let f1 = ScalarField::from_fn(&m, |p| 0.4 - p[0].hypot(p[1]));
        let f2 = ScalarField::from_fn(&m, |p| 0.4 - p[0].hypot(p[1]) + bump * (1.0 + p[1]));
        let a = solve_obstacle(&m, &f1, &cfg, None).unwrap();
        let b = solve_obstacle(&m, &f2, &cfg, None).unwrap();
        let scale = b.p.max_abs().max(1.0);
        prop_assert!(a.p.defined().all(|(c, v)| v <= b.p.or_zero(c) + 1e-8 * scale));
    }

    #[test]
    fn droplets_grow_monotonically_on_perforated_domains(seed in 0u64..500, q in 0.3f64..=1.0) {
        let g = GridSpec::square(48, -1.5, 1.5).unwrap();
        let m = generate_domain(&PerforationModel::square_site(0.5, q, 0.25, seed), &g).unwrap();
        let s0 = init_state(&m, &RegionDescriptor::disc([0.0, 0.0], 0.5)).unwrap();
        let params = EvolutionParams { t_final: 0.25, dt: 1.0 / 16.0, ..Default::default() };
        let traj = run_evolution(&m, s0, None, &params).unwrap();
        for w in traj.snapshots.windows(2) {
            let (a, b) = (w[0].occupied(), w[1].occupied());
            prop_assert!(a.iter().zip(&b).all(|(x, y)| !x || *y));
        }
        prop_assert!(traj.rows.iter().all(|r| r.monotonicity_violations == 0));
    }
}

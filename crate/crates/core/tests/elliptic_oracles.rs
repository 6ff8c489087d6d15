use perchs_core::elliptic::*;
use perchs_core::geometry::*;
use perchs_core::homogenization::EffectiveTensor;
use proptest::prelude::*;
use std::f64::consts::PI;

/// Center value of `-Δu = 1` on the unit square with zero boundary values,
/// summed from the double sine series.
fn unit_square_center() -> f64 {
    let mut s = 0.0;
    for m in (1..400).step_by(2) {
        for n in (1..400).step_by(2) {
            let sign = if ((m + n) / 2) % 2 == 1 { 1.0 } else { -1.0 };
            s += sign * 16.0 / (PI.powi(4) * (m * n) as f64 * ((m * m + n * n) as f64));
        }
    }
    s
}

/// Mask whose ghost cells sit exactly on the unit square boundary.
fn node_aligned_square(n: usize) -> DomainMask {
    let h = 1.0 / n as f64;
    let g = GridSpec::new(n - 1, n - 1, h, [0.5 * h, 0.5 * h]).unwrap();
    DomainMask::all_fluid(g, OuterBoundary::Dirichlet).unwrap()
}

#[test]
fn unit_square_poisson_center_converges_at_second_order() {
    let exact = unit_square_center();
    assert!((exact - 0.073_671_353_3).abs() < 1e-8);
    let cfg = SolverConfig::default().with_tol(1e-12);
    let mut errs = Vec::new();
    for n in [16usize, 32, 64] {
        let m = node_aligned_square(n);
        let v = solve_poisson(&m, &ScalarField::constant_on(&m, 1.0), &cfg, None).unwrap();
        errs.push((v.at(n / 2 - 1, n / 2 - 1).unwrap() - exact).abs());
    }
    assert!(errs[2] < 1e-4, "{errs:?}");
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 2.0).abs() < 0.2, "{errs:?}");
    }
}

#[test]
fn sor_and_cg_agree() {
    let g = GridSpec::square(48, 0.0, 1.0).unwrap();
    let m = generate_domain(&PerforationModel::square_site(0.5, 0.6, 0.125, 3), &g).unwrap();
    let rhs = ScalarField::from_fn(&m, |p| (3.0 * p[0]).sin() + 1.0);
    let a = solve_poisson(&m, &rhs, &SolverConfig::default().with_tol(1e-11), None).unwrap();
    let b = solve_poisson(&m, &rhs, &SolverConfig::default().with_tol(1e-11).with_method(SolverMethod::Sor), None).unwrap();
    let d = a.defined().map(|(c, v)| (v - b.or_zero(c)).abs()).fold(0.0, f64::max);
    assert!(d < 1e-8 * a.max_abs(), "{d}");
}

#[test]
fn disc_greens_function_matches_logarithm() {
    let radius = 1.0;
    let g = GridSpec::square(200, -1.0, 1.0).unwrap();
    let m = DomainMask::all_fluid(g, OuterBoundary::Dirichlet).unwrap().with_dirichlet_outside_disc([0.0, 0.0], radius);
    let y = g.nearest_cell([0.0, 0.0]);
    let pole = g.center(y.0, y.1);
    let gf = greens_function(&m, y, &SolverConfig::default().with_tol(1e-12)).unwrap();
    let mut worst: f64 = 0.0;
    for (c, v) in gf.defined() {
        let p = g.center_of(c);
        let r = (p[0] - pole[0]).hypot(p[1] - pole[1]);
        if !(0.1..=0.6).contains(&r) {
            continue;
        }
        let reference = (radius / r).ln() / (2.0 * PI);
        worst = worst.max((v / reference - 1.0).abs());
    }
    assert!(worst < 0.03, "worst relative deviation {worst}");
}

#[test]
fn all_fluid_harnack_quotient_matches_poisson_integral() {
    // harmonic measure of the upper half circle in the unit disc
    let omega = |x: f64, y: f64| 0.5 + (2.0 * y / (1.0 - x * x - y * y)).atan() / PI;
    let (upper, lower) = (1.0, 0.1);
    let u = |y: f64| lower + (upper - lower) * omega(0.0, y);
    let continuum = u(0.5) / u(-0.5);
    assert!((continuum - 2.868).abs() < 2e-3);

    let g = GridSpec::square(256, 0.0, 1.0).unwrap();
    let m = DomainMask::all_fluid(g, OuterBoundary::Dirichlet).unwrap();
    let q = harnack_probe(&m, (128, 128), &[0.25, 0.375], BoundaryData::HalfPlanes { upper, lower }, &SolverConfig::default())
        .unwrap();
    for v in q {
        assert!((v / continuum - 1.0).abs() < 0.02, "{v} vs {continuum}");
    }
}

#[test]
fn perforated_holder_ratios_stay_below_one() {
    let g = GridSpec::square(128, 0.0, 1.0).unwrap();
    let m = generate_domain(&PerforationModel::square_site(0.5, 1.0, 0.125, 0), &g).unwrap();
    let center = g.nearest_cell([0.5, 0.5]);
    let r = holder_probe(&m, center, 0.375, BoundaryData::HalfPlanes { upper: 1.0, lower: 0.1 }, &SolverConfig::default())
        .unwrap();
    assert!(!r.is_empty());
    for x in r.into_iter().flatten() {
        assert!(x < 1.0, "{x}");
    }
}

fn random_mask(seed: u64, q: f64) -> DomainMask {
    let g = GridSpec::square(32, 0.0, 1.0).unwrap();
    generate_domain(&PerforationModel::square_site(0.5, q, 0.125, seed), &g).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn operator_is_symmetric(seed in 0u64..500, q in 0.0f64..=1.0, a in 0.2f64..2.0, b in 0.2f64..2.0,
                             xs in proptest::collection::vec(-1.0f64..1.0, 1024),
                             ys in proptest::collection::vec(-1.0f64..1.0, 1024)) {
        let m = random_mask(seed, q);
        let t = EffectiveTensor::new(a, 0.0, b, 1.0);
        let op = Operator::new(&m, Some(&t)).unwrap();
        let n = op.n();
        let (mut lx, mut ly) = (vec![0.0; n], vec![0.0; n]);
        op.apply(&xs[..n], &mut lx);
        op.apply(&ys[..n], &mut ly);
        let l: f64 = lx.iter().zip(&ys).map(|(p, q)| p * q).sum();
        let r: f64 = xs.iter().zip(&ly).map(|(p, q)| p * q).sum();
        prop_assert!((l - r).abs() <= 1e-11 * l.abs().max(r.abs()).max(1.0));
    }

    #[test]
    fn nonnegative_sources_give_nonnegative_solutions(seed in 0u64..500, q in 0.0f64..=1.0,
                                                      amp in proptest::collection::vec(0.0f64..1.0, 4)) {
        let m = random_mask(seed, q);
        let rhs = ScalarField::from_fn(&m, |p| amp[0] + amp[1] * p[0] + amp[2] * p[1] * p[1] + amp[3] * (p[0] - 0.5).abs());
        let v = solve_poisson(&m, &rhs, &SolverConfig::default().with_tol(1e-12), None).unwrap();
        let scale = v.max_abs().max(1e-300);
        prop_assert!(v.defined().all(|(_, x)| x >= -1e-9 * scale));
    }

    #[test]
    fn solutions_are_ordered_like_their_sources(seed in 0u64..500, q in 0.0f64..=1.0, bump in 0.0f64..2.0) {
        let m = random_mask(seed, q);
        let cfg = SolverConfig::default().with_tol(1e-12);
        let f1 = ScalarField::from_fn(&m, |p| (6.0 * p[0]).sin());
        let f2 = ScalarField::from_fn(&m, |p| (6.0 * p[0]).sin() + bump * p[1]);
        let v1 = solve_poisson(&m, &f1, &cfg, None).unwrap();
        let v2 = solve_poisson(&m, &f2, &cfg, None).unwrap();
        let scale = v1.max_abs().max(v2.max_abs());
        prop_assert!(v1.defined().all(|(c, x)| x <= v2.or_zero(c) + 1e-9 * scale));
    }

    #[test]
    fn greens_function_is_symmetric(seed in 0u64..500, q in 0.0f64..=1.0, a in 0usize..1024, b in 0usize..1024) {
        let m = random_mask(seed, q);
        prop_assume!(m.is_fluid(a) && m.is_fluid(b));
        let g = *m.grid();
        let cfg = SolverConfig::default().with_tol(1e-12);
        let ga = greens_function(&m, g.coords(a), &cfg).unwrap();
        let gb = greens_function(&m, g.coords(b), &cfg).unwrap();
        let (x, y) = (ga.or_zero(b), gb.or_zero(a));
        prop_assert!((x - y).abs() <= 1e-8 * x.abs().max(y.abs()).max(1e-12));
    }
}

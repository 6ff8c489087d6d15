use perchs_core::capacity::*;
use perchs_core::elliptic::*;
use perchs_core::geometry::*;
use perchs_core::homogenization::*;
use perchs_core::metrics::MetricsRecord;
use proptest::prelude::*;
use std::f64::consts::TAU;

fn cfg() -> SolverConfig {
    SolverConfig::default().with_tol(1e-12)
}

/// Cell-averaged energy of the corrected gradient, the variational form of `a_ξξ`.
fn corrector_energy(mask: &DomainMask, c: &CorrectorSolution) -> f64 {
    let g = *mask.grid();
    let mut e = 0.0;
    for cell in 0..g.len() {
        if !mask.is_fluid(cell) {
            continue;
        }
        for (d, axis) in [(0usize, 0usize), (2, 1)] {
            if let Link::Open(n) = mask.link(cell, d) {
                let grad = c.xi[axis] + (c.chi.or_zero(n) - c.chi.or_zero(cell)) / g.h;
                e += grad * grad;
            }
        }
    }
    e / g.len() as f64
}

#[test]
fn tensor_diagonal_equals_corrector_energy() {
    for (model, cpp) in [
        (PerforationModel::square_site(0.5, 1.0, 1.0, 0), 32),
        (PerforationModel::square_site(0.3, 1.0, 1.0, 0), 40),
    ] {
        let mask = periodic_cell(&model, 1, cpp).unwrap();
        let est = effective_tensor(&mask, &cfg()).unwrap();
        let c1 = solve_corrector(&mask, [1.0, 0.0], &cfg()).unwrap();
        let c2 = solve_corrector(&mask, [0.0, 1.0], &cfg()).unwrap();
        assert!((corrector_energy(&mask, &c1) - est.tensor.a11).abs() < 1e-9);
        assert!((corrector_energy(&mask, &c2) - est.tensor.a22).abs() < 1e-9);
    }
}

#[test]
fn square_inclusion_tensor_respects_hashin_shtrikman_bound() {
    // two-dimensional upper bound for an insulating phase of fraction φ
    for s in [0.3, 0.5, 0.7] {
        let model = PerforationModel::square_site(s, 1.0, 1.0, 0);
        let t = model_tensor(&model, 64, &[], &cfg()).unwrap();
        let phi = 1.0 - t.mu;
        assert!((phi - s * s).abs() < 0.02, "solid fraction {phi}");
        let upper = (1.0 - phi) / (1.0 + phi);
        assert!(t.a11 > 0.0 && t.a11 <= upper + 1e-9, "s {s}: a11 {} vs {upper}", t.a11);
        assert!((t.a11 - t.a22).abs() < 1e-8 && t.a12.abs() < 1e-8);
    }
}

#[test]
fn tensor_decreases_with_inclusion_size() {
    let a: Vec<f64> = [0.3, 0.5, 0.7]
        .iter()
        .map(|&s| model_tensor(&PerforationModel::square_site(s, 1.0, 1.0, 0), 40, &[], &cfg()).unwrap().a11)
        .collect();
    assert!(a[0] > a[1] && a[1] > a[2], "{a:?}");
}

#[test]
fn random_model_tensor_averages_supercells() {
    let model = PerforationModel { kind: PerforationKind::Chessboard, ..PerforationModel::square_site(0.5, 1.0, 1.0, 3) };
    let rec = model_tensor(&model, 8, &[], &SolverConfig::default()).unwrap();
    assert!(rec.seeds.len() >= MIN_RANDOM_SEEDS);
    assert_eq!(rec.grid.nx, SUPERCELL_PERIODS * 8);
    let t = rec.tensor();
    assert!(t.validate().is_ok());
    assert!(t.a11 < t.mu && t.a22 < t.mu);
}

#[test]
fn triangular_model_has_no_square_cell_tensor() {
    let model = PerforationModel { kind: PerforationKind::TriangularSite, ..PerforationModel::square_site(0.5, 1.0, 1.0, 0) };
    assert!(model_tensor(&model, 16, &[], &cfg()).is_err());
}

fn metric(records: &[MetricsRecord], name: &str) -> Vec<f64> {
    records.iter().filter(|r| r.metric == name).map(|r| r.value).collect()
}

#[test]
fn linear_homogenization_errors_shrink_with_epsilon() {
    let g = GridSpec::square(64, 0.0, 1.0).unwrap();
    let model = PerforationModel::square_site(0.5, 1.0, 0.25, 0);
    let recs = linear_homogenization_experiment(&model, &[0.25, 0.125], 1.0, &g, &SolverConfig::default()).unwrap();
    let l2 = metric(&recs, "l2_error");
    assert_eq!(l2.len(), 2);
    assert!(l2[1] < l2[0], "{l2:?}");
    let none = linear_homogenization_experiment(&PerforationModel::none(), &[0.25], 1.0, &g, &SolverConfig::default()).unwrap();
    assert!(metric(&none, "l2_error")[0] < 1e-9);
}

#[test]
fn annulus_capacity_matches_logarithmic_formula() {
    let g = GridSpec::square(256, -1.0, 1.0).unwrap();
    let m = DomainMask::all_fluid(g, OuterBoundary::Neumann).unwrap();
    for (r, big) in [(0.25, 0.9), (0.125, 0.75)] {
        let cap = ball_capacity(&m, [0.0, 0.0], r, big, &cfg()).unwrap();
        let exact = TAU / (big / r).ln();
        assert!((cap.value / exact - 1.0).abs() < 0.03, "r {r}: {} vs {exact}", cap.value);
        assert!(!cap.degenerate && !cap.no_path);
        assert!((dirichlet_energy(&m, &cap.potential) - cap.value).abs() < 1e-12 * cap.value);
    }
}

#[test]
fn green_level_sets_have_unit_capacity_product() {
    let g = GridSpec::square(128, -1.0, 1.0).unwrap();
    let m = DomainMask::all_fluid(g, OuterBoundary::Dirichlet).unwrap().with_dirichlet_outside_disc([0.0, 0.0], 0.9);
    let y = g.nearest_cell([0.0, 0.0]);
    for row in level_set_capacity_check(&m, y, &[0.1, 0.2, 0.3], &cfg()).unwrap() {
        assert!((row.product - 1.0).abs() < 0.03, "{row:?}");
    }
    assert!(level_set_capacity_check(&m, y, &[1e6], &cfg()).is_err());
}

#[test]
fn cut_off_inner_set_has_zero_capacity() {
    let g = GridSpec::square(16, 0.0, 1.0).unwrap();
    let mut fluid = vec![true; g.len()];
    // isolate the 2x2 block in the corner behind a solid wall
    for (c, f) in fluid.iter_mut().enumerate() {
        let (i, j) = g.coords(c);
        if (i == 2 && j <= 2) || (j == 2 && i <= 2) {
            *f = false;
        }
    }
    let m = DomainMask::new(g, fluid, OuterBoundary::Neumann).unwrap();
    let inner: Vec<bool> = (0..g.len()).map(|c| g.coords(c) == (0, 0)).collect();
    let outer: Vec<bool> = (0..g.len()).map(|c| g.coords(c) == (10, 10)).collect();
    let cap = capacity(&m, &inner, &outer, &cfg()).unwrap();
    assert!(cap.no_path);
    assert_eq!(cap.value, 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn capacity_grows_with_the_inner_set(r1 in 0.05f64..0.3, dr in 0.0f64..0.2, seed in 0u64..200, q in 0.0f64..=1.0) {
        let g = GridSpec::square(48, -1.0, 1.0).unwrap();
        let m = generate_domain(&PerforationModel::square_site(0.5, q, 0.25, seed), &g).unwrap().with_outer(OuterBoundary::Neumann);
        let c = g.nearest_cell([0.0, 0.0]);
        let small = ball_flags(&m, c, r1);
        let large = ball_flags(&m, c, r1 + dr);
        prop_assume!(small.iter().any(|&x| x));
        let outer: Vec<bool> = (0..g.len()).map(|k| { let p = g.center_of(k); p[0].hypot(p[1]) >= 0.9 }).collect();
        let a = capacity(&m, &small, &outer, &cfg()).unwrap().value;
        let b = capacity(&m, &large, &outer, &cfg()).unwrap().value;
        prop_assert!(a <= b * (1.0 + 1e-9), "{a} > {b}");
    }

    #[test]
    fn perforation_lowers_capacity(seed in 0u64..200, q in 0.0f64..=1.0) {
        let g = GridSpec::square(48, -1.0, 1.0).unwrap();
        let full = DomainMask::all_fluid(g, OuterBoundary::Neumann).unwrap();
        let m = generate_domain(&PerforationModel::square_site(0.5, q, 0.25, seed), &g).unwrap();
        let c = g.nearest_cell([0.0, 0.0]);
        prop_assume!(m.is_fluid(g.index(c.0, c.1)));
        let inner: Vec<bool> = (0..g.len()).map(|k| k == g.index(c.0, c.1)).collect();
        let outer: Vec<bool> = (0..g.len()).map(|k| { let p = g.center_of(k); p[0].hypot(p[1]) >= 0.9 }).collect();
        let a = capacity(&m.with_outer(OuterBoundary::Neumann), &inner, &outer, &cfg()).unwrap().value;
        let b = capacity(&full, &inner, &outer, &cfg()).unwrap().value;
        prop_assert!(a <= b * (1.0 + 1e-9));
    }
}

//! Condenser capacities, level sets of Green's functions and the two-sided
//! Green bounds in the plane.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::elliptic::{ball, greens_function, solve_linear, Operator, ScalarField, SolverConfig};
use crate::error::{Error, Result};
use crate::geometry::{generate_domain, DomainMask, GridSpec, Link, OuterBoundary, PerforationModel};

#[derive(Debug, Clone)]
pub struct CapacityResult {
    /// Discrete Dirichlet energy `Σ_faces (Δv)²` of the capacitary potential.
    pub value: f64,
    pub potential: ScalarField,
    pub inner_set: Vec<usize>,
    pub outer_set: Vec<usize>,
    /// The inner set shares an open face with the zero set.
    pub degenerate: bool,
    /// No fluid path joins the inner set to the zero set; `value` is 0.
    pub no_path: bool,
}

fn cells_of(flags: &[bool]) -> Vec<usize> {
    flags.iter().enumerate().filter(|(_, &f)| f).map(|(c, _)| c).collect()
}

/// Condenser capacity of `inner` relative to `outer` together with every
/// Dirichlet coupling the mask already carries (exterior cells, and the
/// ghost layer beyond the box for Dirichlet masks). Walls stay closed.
pub fn capacity(mask: &DomainMask, inner: &[bool], outer: &[bool], cfg: &SolverConfig) -> Result<CapacityResult> {
    let grid = *mask.grid();
    if inner.len() != grid.len() || outer.len() != grid.len() {
        return Err(Error::ShapeMismatch { expected: grid.len(), got: inner.len().min(outer.len()) });
    }
    let overlap = (0..grid.len()).filter(|&c| inner[c] && outer[c]).count();
    if overlap > 0 {
        return Err(Error::OverlappingSets(overlap));
    }
    let inner: Vec<bool> = (0..grid.len()).map(|c| inner[c] && mask.is_fluid(c)).collect();
    let outer: Vec<bool> = (0..grid.len()).map(|c| outer[c] && mask.is_fluid(c)).collect();
    if !inner.iter().any(|&x| x) {
        return Err(Error::EmptyInput("inner set has no fluid cell".into()));
    }

    let is_zero_link = |l: Link| match l {
        Link::Open(n) => outer[n],
        Link::Dirichlet(_) => true,
        Link::Closed => false,
    };
    let degenerate = (0..grid.len()).any(|c| inner[c] && (0..4).any(|d| is_zero_link(mask.link(c, d))));

    // breadth-first search from the inner set through free fluid cells
    let mut seen = inner.clone();
    let mut queue: VecDeque<usize> = cells_of(&inner).into();
    let mut reaches = degenerate;
    while let Some(c) = queue.pop_front() {
        if reaches {
            break;
        }
        for d in 0..4 {
            let l = mask.link(c, d);
            if is_zero_link(l) {
                reaches = true;
                break;
            }
            if let Link::Open(n) = l {
                if !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
    }

    let keep: Vec<bool> = (0..grid.len()).map(|c| mask.is_fluid(c) && !inner[c] && !outer[c]).collect();
    let mut v = ScalarField::constant_on(mask, 0.0);
    for (val, &is_inner) in v.values_mut().iter_mut().zip(&inner) {
        if is_inner {
            *val = 1.0;
        }
    }
    if !reaches {
        return Ok(CapacityResult {
            value: 0.0,
            potential: v,
            inner_set: cells_of(&inner),
            outer_set: cells_of(&outer),
            degenerate: false,
            no_path: true,
        });
    }
    let free = mask.restricted_to(&keep);
    if free.fluid_count() > 0 {
        let op = Operator::new(&free, None)?;
        let g: Vec<f64> = inner.iter().map(|&i| if i { 1.0 } else { 0.0 }).collect();
        let b = op.lift(&g);
        let mut x = vec![0.0; op.n()];
        if b.iter().any(|&y| y != 0.0) {
            // components cut off from the zero set are pinned by the inner values only
            let sub_cfg = SolverConfig { max_iter: cfg.max_iter.max(10 * op.n()), ..*cfg };
            solve_linear(&op, &b, &mut x, &sub_cfg)?;
        }
        for (k, &c) in op.cells().iter().enumerate() {
            v.values_mut()[c] = x[k];
        }
    }
    Ok(CapacityResult {
        value: dirichlet_energy(mask, &v),
        potential: v,
        inner_set: cells_of(&inner),
        outer_set: cells_of(&outer),
        degenerate,
        no_path: false,
    })
}

/// `Σ (v_a − v_b)²` over open faces plus `v²` over Dirichlet couplings.
pub fn dirichlet_energy(mask: &DomainMask, v: &ScalarField) -> f64 {
    let mut e = 0.0;
    for c in 0..mask.grid().len() {
        if !mask.is_fluid(c) {
            continue;
        }
        let vc = v.or_zero(c);
        for d in 0..4 {
            match mask.link(c, d) {
                // count each open face once
                Link::Open(n) if d == 0 || d == 2 => e += (vc - v.or_zero(n)).powi(2),
                Link::Dirichlet(_) => e += vc * vc,
                _ => {}
            }
        }
    }
    e
}

fn disc_flags(grid: &GridSpec, center: [f64; 2], r: f64, inside: bool) -> Vec<bool> {
    (0..grid.len())
        .map(|c| {
            let p = grid.center_of(c);
            let d = (p[0] - center[0]).hypot(p[1] - center[1]);
            if inside {
                d <= r
            } else {
                d >= r
            }
        })
        .collect()
}

/// Capacity of the grid ball `B_r(center)` inside the disc of radius
/// `outer_radius` (zero values at and beyond it).
pub fn ball_capacity(mask: &DomainMask, center: [f64; 2], r: f64, outer_radius: f64, cfg: &SolverConfig) -> Result<CapacityResult> {
    let grid = *mask.grid();
    let m = mask.with_outer(OuterBoundary::Neumann);
    capacity(&m, &disc_flags(&grid, center, r, true), &disc_flags(&grid, center, outer_radius, false), cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSetCapacity {
    pub a: f64,
    pub capacity: f64,
    /// `a · Cap({G ≥ a})`.
    pub product: f64,
}

/// For each level `a`: the capacity of `{G(·, y) ≥ a}` relative to the
/// mask's zero boundary, multiplied by `a`.
pub fn level_set_capacity_check(
    mask: &DomainMask,
    y: (usize, usize),
    a_list: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<LevelSetCapacity>> {
    let grid = *mask.grid();
    let g = greens_function(mask, y, cfg)?;
    let src = grid.index(y.0, y.1);
    let none = vec![false; grid.len()];
    let boundary = mask.outer_dirichlet();
    a_list
        .iter()
        .map(|&a| {
            let level: Vec<bool> = (0..grid.len()).map(|c| mask.is_fluid(c) && g.or_zero(c) >= a).collect();
            if !(0..grid.len()).any(|c| level[c] && c != src) {
                return Err(Error::LevelSetEmpty(a));
            }
            if (0..grid.len()).any(|c| level[c] && boundary[c]) {
                return Err(Error::LevelSetTouchesBoundary(a));
            }
            let cap = capacity(mask, &level, &none, cfg)?;
            Ok(LevelSetCapacity { a, capacity: cap.value, product: a * cap.value })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenBoundRow {
    pub r: f64,
    pub shell_min: f64,
    pub shell_max: f64,
    /// `(1/2π) log(R / r)`.
    pub reference: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// `1 / Cap(B_r)` relative to the same outer circle.
    pub inverse_capacity: f64,
    /// `shell_min ≤ 1/Cap ≤ shell_max` with 2% slack.
    pub sandwich: bool,
}

/// Green's function of the disc of radius `outer_radius` about fluid cell `y`
/// compared with the planar disc reference on shells `[r − h/2, r + h/2]`.
pub fn green_bounds_check(
    mask: &DomainMask,
    y: (usize, usize),
    radii: &[f64],
    outer_radius: f64,
    cfg: &SolverConfig,
) -> Result<Vec<GreenBoundRow>> {
    let grid = *mask.grid();
    let center = grid.center(y.0, y.1);
    let disc = mask.with_outer(OuterBoundary::Dirichlet).with_dirichlet_outside_disc(center, outer_radius);
    let g = greens_function(&disc, y, cfg)?;
    let h = grid.h;
    radii
        .iter()
        .map(|&r| {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for c in 0..grid.len() {
                if !disc.is_fluid(c) {
                    continue;
                }
                let p = grid.center_of(c);
                let d = (p[0] - center[0]).hypot(p[1] - center[1]);
                if d >= r - 0.5 * h && d <= r + 0.5 * h {
                    let v = g.or_zero(c);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            if !lo.is_finite() {
                return Err(Error::EmptyBall(y.0, y.1, r));
            }
            let reference = (outer_radius / r).ln() / std::f64::consts::TAU;
            let cap = ball_capacity(&disc, center, r, outer_radius, cfg)?;
            let inv = 1.0 / cap.value;
            Ok(GreenBoundRow {
                r,
                shell_min: lo,
                shell_max: hi,
                reference,
                ratio_min: lo / reference,
                ratio_max: hi / reference,
                inverse_capacity: inv,
                sandwich: lo <= inv * 1.02 && inv <= hi * 1.02,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityRatio {
    pub epsilon: f64,
    pub perforated: f64,
    pub all_fluid: f64,
    pub ratio: f64,
}

/// `Cap_ε(B_r) / Cap(B_r)` per ε, both relative to the circle of radius
/// `outer_radius` about `center`.
pub fn capacity_lower_bound_check(
    model: &PerforationModel,
    eps_list: &[f64],
    grid: &GridSpec,
    center: [f64; 2],
    r: f64,
    outer_radius: f64,
    cfg: &SolverConfig,
) -> Result<Vec<CapacityRatio>> {
    let full = DomainMask::all_fluid(*grid, OuterBoundary::Neumann)?;
    let reference = ball_capacity(&full, center, r, outer_radius, cfg)?.value;
    eps_list
        .iter()
        .map(|&eps| {
            let mask = generate_domain(&model.with_period(eps), grid)?;
            let value = ball_capacity(&mask, center, r, outer_radius, cfg)?.value;
            Ok(CapacityRatio { epsilon: eps, perforated: value, all_fluid: reference, ratio: value / reference })
        })
        .collect()
}

/// Fluid cells within distance `r` of `center`'s cell center, as flags.
pub fn ball_flags(mask: &DomainMask, center: (usize, usize), r: f64) -> Vec<bool> {
    let mut f = vec![false; mask.grid().len()];
    for c in ball(mask, center, r) {
        f[c] = true;
    }
    f
}

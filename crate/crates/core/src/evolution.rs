//! Droplet evolution through a family of obstacle problems: the load at time
//! `t` is `−1` outside the initial set plus the accumulated occupancy time,
//! and the pressure is recovered from the positivity set of the solution.

use serde::{Deserialize, Serialize};

use crate::elliptic::{solve_linear, Operator, ScalarField, SolverConfig};
use crate::error::{Error, Result};
use crate::geometry::{DomainMask, GridSpec, DIRS};
use crate::homogenization::EffectiveTensor;
use crate::metrics::{regression_slope, MetricsRecord};
use crate::obstacle::{activation_threshold, ObstacleSolver};

/// Initial droplet region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum RegionDescriptor {
    Disc { center: [f64; 2], radius: f64 },
    Ellipse { center: [f64; 2], semi_axes: [f64; 2] },
    Polygon { vertices: Vec<[f64; 2]> },
}

impl RegionDescriptor {
    pub fn disc(center: [f64; 2], radius: f64) -> Self {
        RegionDescriptor::Disc { center, radius }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            RegionDescriptor::Disc { center, radius } => (p[0] - center[0]).hypot(p[1] - center[1]) < *radius,
            RegionDescriptor::Ellipse { center, semi_axes } => {
                let x = (p[0] - center[0]) / semi_axes[0];
                let y = (p[1] - center[1]) / semi_axes[1];
                x * x + y * y < 1.0
            }
            RegionDescriptor::Polygon { vertices } => {
                let mut inside = false;
                let n = vertices.len();
                for k in 0..n {
                    let a = vertices[k];
                    let b = vertices[(k + 1) % n];
                    if (a[1] > p[1]) != (b[1] > p[1]) {
                        let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                        if p[0] < x {
                            inside = !inside;
                        }
                    }
                }
                inside
            }
        }
    }
}

/// Droplet state at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleState {
    pub t: f64,
    pub p: ScalarField,
    /// Accumulated time each cell has spent in the droplet.
    pub tau: ScalarField,
    pub d0_mask: Vec<bool>,
    pub step: usize,
}

impl ObstacleState {
    /// `{p > threshold}` per cell.
    pub fn active(&self) -> Vec<bool> {
        let thr = activation_threshold(self.p.max_abs());
        self.p.values().iter().map(|&v| v > thr).collect()
    }

    /// Droplet cells: the positivity set together with the initial set.
    pub fn occupied(&self) -> Vec<bool> {
        let mut a = self.active();
        for (x, &d) in a.iter_mut().zip(&self.d0_mask) {
            *x |= d;
        }
        a
    }

    pub fn area(&self, grid: &GridSpec) -> f64 {
        self.occupied().iter().filter(|&&a| a).count() as f64 * grid.h * grid.h
    }
}

/// Rasterizes `d0` onto the fluid cells of `mask` with `t = 0`, `p = tau = 0`.
pub fn init_state(mask: &DomainMask, d0: &RegionDescriptor) -> Result<ObstacleState> {
    let grid = *mask.grid();
    let d0_mask: Vec<bool> = (0..grid.len()).map(|c| mask.is_fluid(c) && d0.contains(grid.center_of(c))).collect();
    if !d0_mask.iter().any(|&d| d) {
        return Err(Error::EmptyInitialSet);
    }
    Ok(ObstacleState {
        t: 0.0,
        p: ScalarField::constant_on(mask, 0.0),
        tau: ScalarField::constant_on(mask, 0.0),
        d0_mask,
        step: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    /// Occupancy increment from the active set at the start of the step.
    Explicit,
    /// Occupancy increment from the active set at the end of the step,
    /// found by monotone fixed-point iteration.
    FixedPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub inner_iterations: usize,
    /// Largest decrease of `p` between consecutive inner iterates.
    pub inner_max_decrease: f64,
    /// Set when the inner iteration hit its cap and the explicit result was kept.
    pub fell_back: bool,
    pub obstacle_iterations: usize,
}

/// Marches one mask (and optional tensor) through time.
#[derive(Debug, Clone)]
pub struct Evolver {
    solver: ObstacleSolver,
    mu: f64,
}

impl Evolver {
    pub fn new(mask: &DomainMask, tensor: Option<&EffectiveTensor>) -> Result<Self> {
        Ok(Evolver { solver: ObstacleSolver::new(mask, tensor)?, mu: tensor.map_or(1.0, |t| t.mu) })
    }

    pub fn operator(&self) -> &Operator {
        self.solver.operator()
    }

    fn load(&self, d0: &[bool], tau: &[f64]) -> Vec<f64> {
        self.operator()
            .cells()
            .iter()
            .enumerate()
            .map(|(k, &c)| self.mu * (tau[k] - if d0[c] { 0.0 } else { 1.0 }))
            .collect()
    }

    fn increment(&self, tau: &[f64], x: &[f64], d0: &[bool], dt: f64) -> Vec<f64> {
        let thr = activation_threshold(x.iter().fold(0.0f64, |m, v| m.max(*v)));
        self.operator()
            .cells()
            .iter()
            .enumerate()
            .map(|(k, &c)| tau[k] + if x[k] > thr || d0[c] { dt } else { 0.0 })
            .collect()
    }

    /// Advances `state` by `dt`.
    pub fn step(
        &self,
        state: &mut ObstacleState,
        dt: f64,
        mode: StepMode,
        cfg: &SolverConfig,
        inner_max: usize,
    ) -> Result<StepReport> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let op = self.operator();
        let p_old = op.to_dofs(&state.p)?;
        let tau_old = op.to_dofs(&state.tau)?;
        let mut tau = self.increment(&tau_old, &p_old, &state.d0_mask, dt);
        let mut x = p_old.clone();
        let stats = self.solver.solve_dofs(&self.load(&state.d0_mask, &tau), &mut x, cfg)?;
        let mut report = StepReport {
            inner_iterations: 1,
            inner_max_decrease: 0.0,
            fell_back: false,
            obstacle_iterations: stats.iterations,
        };
        if mode == StepMode::FixedPoint {
            let explicit = (x.clone(), tau.clone());
            let mut settled = false;
            while report.inner_iterations < inner_max {
                let next_tau = self.increment(&tau_old, &x, &state.d0_mask, dt);
                if next_tau == tau {
                    settled = true;
                    break;
                }
                tau = next_tau;
                let prev = x.clone();
                let s = self.solver.solve_dofs(&self.load(&state.d0_mask, &tau), &mut x, cfg)?;
                report.obstacle_iterations += s.iterations;
                report.inner_iterations += 1;
                let dec = prev.iter().zip(&x).fold(0.0f64, |m, (a, b)| m.max(a - b));
                report.inner_max_decrease = report.inner_max_decrease.max(dec);
            }
            if !settled && self.increment(&tau_old, &x, &state.d0_mask, dt) != tau {
                report.fell_back = true;
                x = explicit.0;
                tau = explicit.1;
            }
        }
        state.p = op.to_field(&x);
        state.tau = op.to_field(&tau);
        state.t += dt;
        state.step += 1;
        Ok(report)
    }

    /// Pressure on the current positivity set: `−div(A∇u) = μ` there, zero on
    /// the remaining fluid cells, closed perforation walls.
    pub fn recover_u(&self, state: &ObstacleState, mask: &DomainMask, cfg: &SolverConfig, tensor: Option<&EffectiveTensor>) -> Result<ScalarField> {
        recover_u(state, mask, cfg, tensor)
    }
}

/// One time step; builds the operator for a single use (see [`Evolver`] for
/// repeated steps).
pub fn step(
    state: &ObstacleState,
    dt: f64,
    mode: StepMode,
    cfg: &SolverConfig,
    mask: &DomainMask,
    tensor: Option<&EffectiveTensor>,
) -> Result<(ObstacleState, StepReport)> {
    let ev = Evolver::new(mask, tensor)?;
    let mut next = state.clone();
    let rep = ev.step(&mut next, dt, mode, cfg, DEFAULT_INNER_MAX)?;
    Ok((next, rep))
}

pub const DEFAULT_INNER_MAX: usize = 50;

pub fn recover_u(
    state: &ObstacleState,
    mask: &DomainMask,
    cfg: &SolverConfig,
    tensor: Option<&EffectiveTensor>,
) -> Result<ScalarField> {
    let active = state.active();
    if !active.iter().any(|&a| a) {
        return Err(Error::EmptyInput("positivity set is empty".into()));
    }
    let sub = mask.restricted_to(&active);
    let op = Operator::new(&sub, tensor)?;
    let mu = tensor.map_or(1.0, |t| t.mu);
    let b = vec![mu; op.n()];
    let mut x = vec![0.0; op.n()];
    solve_linear(&op, &b, &mut x, cfg)?;
    let mut u = op.to_field(&x);
    for (c, val) in u.values_mut().iter_mut().enumerate() {
        if mask.is_fluid(c) && !active[c] {
            *val = 0.0;
        }
    }
    Ok(u)
}

/// `max |u(t) − (p(t) − p(t − dt)) / dt|` over cells active in both states,
/// with `u` recovered from the later state.
pub fn pressure_recovery_error(
    earlier: &ObstacleState,
    later: &ObstacleState,
    mask: &DomainMask,
    cfg: &SolverConfig,
    tensor: Option<&EffectiveTensor>,
) -> Result<f64> {
    let dt = later.t - earlier.t;
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("states must be strictly ordered in time".into()));
    }
    let u = recover_u(later, mask, cfg, tensor)?;
    let (a, b) = (earlier.active(), later.active());
    let mut err = 0.0f64;
    let mut any = false;
    for c in (0..a.len()).filter(|&c| a[c] && b[c]) {
        any = true;
        err = err.max((u.or_zero(c) - (later.p.or_zero(c) - earlier.p.or_zero(c)) / dt).abs());
    }
    if !any {
        return Err(Error::EmptyInput("no common active cells".into()));
    }
    Ok(err)
}

/// Active fluid cells with an inactive fluid face neighbor.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FreeBoundary {
    pub cells: Vec<usize>,
}

fn boundary_of(set: &[bool], mask: &DomainMask) -> Vec<usize> {
    (0..set.len())
        .filter(|&c| {
            set[c]
                && (0..4).any(|d| match mask.neighbor(c, d) {
                    Some(n) => mask.is_fluid(n) && !set[n],
                    None => false,
                })
        })
        .collect()
}

pub fn extract_free_boundary(state: &ObstacleState, mask: &DomainMask) -> FreeBoundary {
    FreeBoundary { cells: boundary_of(&state.active(), mask) }
}

fn dist(grid: &GridSpec, a: usize, b: usize) -> f64 {
    let pa = grid.center_of(a);
    let pb = grid.center_of(b);
    (pa[0] - pb[0]).hypot(pa[1] - pb[1])
}

fn directed(a: &[usize], b: &[usize], grid: &GridSpec) -> f64 {
    a.iter()
        .map(|&x| b.iter().map(|&y| dist(grid, x, y)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance between cell-center sets.
pub fn hausdorff_distance(a: &FreeBoundary, b: &FreeBoundary, grid: &GridSpec) -> Result<f64> {
    if a.cells.is_empty() || b.cells.is_empty() {
        return Err(Error::EmptyInput("free boundary has no cells".into()));
    }
    Ok(directed(&a.cells, &b.cells, grid).max(directed(&b.cells, &a.cells, grid)))
}

/// Smallest `ρ` with `later ⊆ earlier ⊕ B_ρ` (cell centers).
pub fn containment_radius(earlier: &[bool], later: &[bool], mask: &DomainMask) -> f64 {
    let grid = mask.grid();
    let fresh: Vec<usize> = (0..later.len()).filter(|&c| later[c] && !earlier[c]).collect();
    if fresh.is_empty() {
        return 0.0;
    }
    let edge: Vec<usize> = (0..earlier.len())
        .filter(|&c| earlier[c] && (0..4).any(|d| mask.neighbor(c, d).is_none_or(|n| !earlier[n])))
        .collect();
    if edge.is_empty() {
        return f64::INFINITY;
    }
    directed(&fresh, &edge, grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyReport {
    /// Mean over sampled cells of the log-log slope of `sup_{B_r} p` against `r`.
    pub slope: f64,
    pub slope_min: f64,
    pub slope_max: f64,
    /// `min s(r) / r²` over samples and radii.
    pub coefficient: f64,
    pub samples: usize,
}

/// Growth of `p` away from sampled free-boundary cells. Radii larger than
/// half the distance to the initial set are dropped per cell.
pub fn nondegeneracy_probe(
    state: &ObstacleState,
    mask: &DomainMask,
    radii: &[f64],
    max_samples: usize,
) -> Result<NondegeneracyReport> {
    let grid = *mask.grid();
    let fb = extract_free_boundary(state, mask);
    if fb.cells.is_empty() {
        return Err(Error::InsufficientData("no free-boundary cells".into()));
    }
    if radii.iter().any(|&r| r < 2.0 * grid.h * (1.0 - 1e-12)) {
        return Err(Error::InvalidArgument("probe radii must be at least 2h".into()));
    }
    let d0: Vec<usize> = (0..grid.len()).filter(|&c| state.d0_mask[c]).collect();
    let stride = (fb.cells.len() / max_samples.max(1)).max(1);
    let mut slopes = Vec::new();
    let mut coefficient = f64::INFINITY;
    for &x in fb.cells.iter().step_by(stride) {
        let to_d0 = d0.iter().map(|&y| dist(&grid, x, y)).fold(f64::INFINITY, f64::min);
        let usable: Vec<f64> = radii.iter().copied().filter(|&r| r <= 0.5 * to_d0).collect();
        if usable.len() < 2 {
            continue;
        }
        let (i, j) = grid.coords(x);
        let mut lr = Vec::new();
        let mut ls = Vec::new();
        for &r in &usable {
            let s = crate::elliptic::ball(mask, (i, j), r)
                .iter()
                .fold(0.0f64, |m, &c| m.max(state.p.or_zero(c)));
            if s <= 0.0 {
                continue;
            }
            coefficient = coefficient.min(s / (r * r));
            lr.push(r.ln());
            ls.push(s.ln());
        }
        if let Some(k) = regression_slope(&lr, &ls) {
            slopes.push(k);
        }
    }
    if slopes.is_empty() {
        return Err(Error::InsufficientData("no free-boundary cell admits two radii".into()));
    }
    let n = slopes.len();
    Ok(NondegeneracyReport {
        slope: slopes.iter().sum::<f64>() / n as f64,
        slope_min: slopes.iter().copied().fold(f64::INFINITY, f64::min),
        slope_max: slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        coefficient,
        samples: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StarShapeReport {
    pub passes: bool,
    /// Failing segments whose first inactive cell is not next to the droplet.
    pub violations: usize,
    /// Failing segments confined to the boundary cell layer.
    pub boundary_layer_violations: usize,
}

/// Checks that segments from sample points of `B_r(center)` (its center and
/// 16 points on its circle) to every free-boundary cell stay in the droplet.
pub fn star_shape_check(state: &ObstacleState, mask: &DomainMask, center: [f64; 2], r: f64) -> StarShapeReport {
    let grid = *mask.grid();
    let occ = state.occupied();
    let fb = boundary_of(&occ, mask);
    let mut ys = vec![center];
    for k in 0..16 {
        let a = std::f64::consts::TAU * k as f64 / 16.0;
        ys.push([center[0] + r * a.cos(), center[1] + r * a.sin()]);
    }
    let mut violations = 0;
    let mut layer = 0;
    for &x in &fb {
        let px = grid.center_of(x);
        for y in &ys {
            let len = (px[0] - y[0]).hypot(px[1] - y[1]);
            let steps = (2.0 * len / grid.h).ceil().max(1.0) as usize;
            let mut failed = None;
            for s in 0..=steps {
                let f = s as f64 / steps as f64;
                let q = [y[0] + f * (px[0] - y[0]), y[1] + f * (px[1] - y[1])];
                match grid.cell_at(q) {
                    Some((i, j)) => {
                        let c = grid.index(i, j);
                        if !occ[c] {
                            failed = Some(c);
                            break;
                        }
                    }
                    None => {
                        failed = Some(usize::MAX);
                        break;
                    }
                }
            }
            match failed {
                None => {}
                Some(c) if c != usize::MAX && is_layer(c, &occ, mask) => layer += 1,
                Some(_) => violations += 1,
            }
        }
    }
    StarShapeReport { passes: violations == 0, violations, boundary_layer_violations: layer }
}

/// An inactive cell with a face neighbor in the droplet.
fn is_layer(c: usize, occ: &[bool], mask: &DomainMask) -> bool {
    !occ[c] && (0..DIRS.len()).any(|d| mask.neighbor(c, d).is_some_and(|n| occ[n]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionParams {
    pub t_final: f64,
    pub dt: f64,
    pub mode: StepMode,
    pub inner_max: usize,
    pub solver: SolverConfig,
    /// Keep a snapshot every this many steps (the final state is always kept).
    pub snapshot_every: usize,
}

impl Default for EvolutionParams {
    fn default() -> Self {
        EvolutionParams {
            t_final: 1.0,
            dt: 1.0 / 64.0,
            mode: StepMode::Explicit,
            inner_max: DEFAULT_INNER_MAX,
            solver: SolverConfig::default(),
            snapshot_every: 0,
        }
    }
}

impl EvolutionParams {
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !(self.t_final >= 0.0) {
            return Err(Error::InvalidArgument("dt must be positive and T nonnegative".into()));
        }
        Ok((self.t_final / self.dt - 1e-9).ceil().max(0.0) as usize)
    }
}

/// Per-step measurements collected while marching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub area: f64,
    pub max_p: f64,
    pub fb_cell_count: usize,
    pub lipschitz_ratio: f64,
    pub area_ratio: f64,
    pub containment_radius: f64,
    pub monotonicity_violations: usize,
    pub inner_iterations: usize,
    pub inner_max_decrease: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Initial state, every `snapshot_every`-th state, and the final state.
    pub snapshots: Vec<ObstacleState>,
    /// One row for the initial state and one per step.
    pub rows: Vec<TrajectoryRow>,
    pub steps: Vec<StepReport>,
    /// State one step before the final one (`None` without steps).
    pub previous: Option<ObstacleState>,
}

impl Trajectory {
    pub fn final_state(&self) -> &ObstacleState {
        self.snapshots.last().expect("trajectory holds the initial state")
    }
}

/// Comparison of two consecutive states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMetrics {
    pub monotonicity_violations: usize,
    pub lipschitz_ratio: f64,
    pub containment_radius: f64,
}

pub fn compare_states(a: &ObstacleState, b: &ObstacleState, mask: &DomainMask, tol: f64) -> PairMetrics {
    let slack = 10.0 * tol * b.p.max_abs().max(1.0);
    let mut violations = 0;
    let mut lip = 0.0f64;
    for c in 0..mask.grid().len() {
        if !mask.is_fluid(c) {
            continue;
        }
        let d = b.p.or_zero(c) - a.p.or_zero(c);
        if d < -slack {
            violations += 1;
        }
        lip = lip.max(d.abs());
    }
    let span = b.t - a.t;
    PairMetrics {
        monotonicity_violations: violations,
        lipschitz_ratio: if span > 0.0 { lip / span } else { 0.0 },
        containment_radius: containment_radius(&a.occupied(), &b.occupied(), mask),
    }
}

fn row(state: &ObstacleState, mask: &DomainMask, area0: f64, pair: Option<PairMetrics>, rep: Option<StepReport>) -> TrajectoryRow {
    let grid = mask.grid();
    let area = state.area(grid);
    let pair = pair.unwrap_or(PairMetrics { monotonicity_violations: 0, lipschitz_ratio: 0.0, containment_radius: 0.0 });
    TrajectoryRow {
        t: state.t,
        area,
        max_p: state.p.max().max(0.0),
        fb_cell_count: extract_free_boundary(state, mask).cells.len(),
        lipschitz_ratio: pair.lipschitz_ratio,
        area_ratio: area * (-state.t).exp() / area0,
        containment_radius: pair.containment_radius,
        monotonicity_violations: pair.monotonicity_violations,
        inner_iterations: rep.map_or(0, |r| r.inner_iterations),
        inner_max_decrease: rep.map_or(0.0, |r| r.inner_max_decrease),
    }
}

/// Marches `state` to `params.t_final`.
pub fn run_evolution(
    mask: &DomainMask,
    state: ObstacleState,
    tensor: Option<&EffectiveTensor>,
    params: &EvolutionParams,
) -> Result<Trajectory> {
    let n = params.steps()?;
    let ev = Evolver::new(mask, tensor)?;
    let area0 = state.area(mask.grid());
    let mut rows = vec![row(&state, mask, area0, None, None)];
    let mut snapshots = vec![state.clone()];
    let mut steps = Vec::with_capacity(n);
    let mut cur = state;
    let mut previous = None;
    for k in 1..=n {
        let prev = cur.clone();
        let dt = params.dt.min(params.t_final - cur.t).max(params.dt * 1e-9);
        let rep = ev.step(&mut cur, dt, params.mode, &params.solver, params.inner_max)?;
        let pair = compare_states(&prev, &cur, mask, params.solver.tol);
        rows.push(row(&cur, mask, area0, Some(pair), Some(rep)));
        steps.push(rep);
        if k == n || (params.snapshot_every > 0 && k % params.snapshot_every == 0) {
            snapshots.push(cur.clone());
        }
        previous = Some(prev);
    }
    Ok(Trajectory { snapshots, rows, steps, previous })
}

/// Metrics between consecutive entries of a list of states.
pub fn evolution_checks(states: &[ObstacleState], mask: &DomainMask, tol: f64) -> Vec<MetricsRecord> {
    let mut out = Vec::new();
    let Some(first) = states.first() else {
        return out;
    };
    let area0 = first.area(mask.grid());
    for w in states.windows(2) {
        let pair = compare_states(&w[0], &w[1], mask, tol);
        let t = w[1].t;
        out.push(MetricsRecord::new(0.0, 0, t, "monotonicity_violations", pair.monotonicity_violations as f64));
        out.push(MetricsRecord::new(0.0, 0, t, "lipschitz_ratio", pair.lipschitz_ratio));
        out.push(MetricsRecord::new(0.0, 0, t, "containment_radius", pair.containment_radius));
        let ratio = w[1].area(mask.grid()) * (-t).exp() / area0;
        out.push(MetricsRecord::new(0.0, 0, t, "area_ratio", ratio));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_domain, OuterBoundary, PerforationModel};

    fn plane(n: usize, half: f64) -> DomainMask {
        DomainMask::all_fluid(GridSpec::square(n, -half, half).unwrap(), OuterBoundary::Dirichlet).unwrap()
    }

    #[test]
    fn initial_state_rasterizes_disc() {
        let m = plane(64, 1.0);
        let s = init_state(&m, &RegionDescriptor::disc([0.0, 0.0], 0.25)).unwrap();
        let n = s.d0_mask.iter().filter(|&&d| d).count() as f64;
        let area = n * m.grid().h * m.grid().h;
        assert!((area - std::f64::consts::PI * 0.0625).abs() < 0.02);
        assert!(s.p.defined().all(|(_, v)| v == 0.0));
        assert!(matches!(init_state(&m, &RegionDescriptor::disc([5.0, 5.0], 0.25)), Err(Error::EmptyInitialSet)));
    }

    #[test]
    fn perforated_initial_set_excludes_solid() {
        let g = GridSpec::square(64, -1.0, 1.0).unwrap();
        let m = generate_domain(&PerforationModel::square_site(0.5, 1.0, 0.25, 0), &g).unwrap();
        let s = init_state(&m, &RegionDescriptor::disc([0.0, 0.0], 0.5)).unwrap();
        assert!((0..g.len()).all(|c| !s.d0_mask[c] || m.is_fluid(c)));
    }

    #[test]
    fn polygon_membership() {
        let sq = RegionDescriptor::Polygon { vertices: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]] };
        assert!(sq.contains([0.5, 0.5]));
        assert!(!sq.contains([1.5, 0.5]));
    }

    #[test]
    fn explicit_step_increments_tau_on_start_set() {
        let m = plane(48, 1.5);
        let mut s = init_state(&m, &RegionDescriptor::disc([0.0, 0.0], 0.5)).unwrap();
        let ev = Evolver::new(&m, None).unwrap();
        let cfg = SolverConfig::default();
        ev.step(&mut s, 0.1, StepMode::Explicit, &cfg, 50).unwrap();
        let start = s.occupied();
        let tau0 = s.tau.clone();
        ev.step(&mut s, 0.1, StepMode::Explicit, &cfg, 50).unwrap();
        for c in 0..m.grid().len() {
            let inc = s.tau.values()[c] - tau0.values()[c];
            let want = if start[c] { 0.1 } else { 0.0 };
            assert!((inc - want).abs() < 1e-15);
        }
        assert!((0..m.grid().len()).all(|c| !s.d0_mask[c] || s.active()[c]));
    }

    #[test]
    fn free_boundary_of_empty_state_is_empty() {
        let m = plane(16, 1.0);
        let s = init_state(&m, &RegionDescriptor::disc([0.0, 0.0], 0.3)).unwrap();
        assert!(extract_free_boundary(&s, &m).cells.is_empty());
    }

    #[test]
    fn free_boundary_skips_perforation_walls() {
        let g = GridSpec::square(16, 0.0, 1.0).unwrap();
        let mut fluid = vec![true; g.len()];
        for j in 4..12 {
            fluid[g.index(8, j)] = false;
        }
        let m = DomainMask::new(g, fluid, OuterBoundary::Dirichlet).unwrap();
        let mut s = init_state(&m, &RegionDescriptor::disc([0.25, 0.5], 0.1)).unwrap();
        // active block flush against the wall column from the left
        for j in 5..11 {
            for i in 4..8 {
                s.p.values_mut()[g.index(i, j)] = 1.0;
            }
        }
        let fb = extract_free_boundary(&s, &m);
        for j in 6..10 {
            assert!(!fb.cells.contains(&g.index(7, j)));
        }
        assert!(fb.cells.contains(&g.index(4, 7)));
        assert!(fb.cells.contains(&g.index(7, 5)));
    }

    #[test]
    fn hausdorff_examples() {
        let g = GridSpec::square(16, 0.0, 1.0).unwrap();
        let a = FreeBoundary { cells: vec![g.index(1, 1), g.index(5, 5)] };
        assert_eq!(hausdorff_distance(&a, &a, &g).unwrap(), 0.0);
        let x = FreeBoundary { cells: vec![g.index(1, 1)] };
        let y = FreeBoundary { cells: vec![g.index(4, 5)] };
        assert!((hausdorff_distance(&x, &y, &g).unwrap() - 5.0 * g.h).abs() < 1e-12);
        assert!(hausdorff_distance(&x, &FreeBoundary::default(), &g).is_err());
    }

    #[test]
    fn star_shape_of_disc_and_annulus() {
        let m = plane(64, 1.0);
        let g = *m.grid();
        let mut s = init_state(&m, &RegionDescriptor::disc([0.0, 0.0], 0.1)).unwrap();
        for c in 0..g.len() {
            let p = g.center_of(c);
            s.p.values_mut()[c] = if p[0].hypot(p[1]) < 0.6 { 1.0 } else { 0.0 };
        }
        assert!(star_shape_check(&s, &m, [0.0, 0.0], 0.1).passes);
        let mut ring = s.clone();
        ring.d0_mask = vec![false; g.len()];
        for c in 0..g.len() {
            let p = g.center_of(c);
            let r = p[0].hypot(p[1]);
            ring.p.values_mut()[c] = if r > 0.3 && r < 0.6 { 1.0 } else { 0.0 };
        }
        assert!(!star_shape_check(&ring, &m, [0.0, 0.0], 0.1).passes);
    }

    #[test]
    fn no_source_means_zero_pressure() {
        let m = plane(16, 1.0);
        let mut s = init_state(&m, &RegionDescriptor::disc([0.0, 0.0], 0.2)).unwrap();
        s.d0_mask = vec![false; m.grid().len()];
        let ev = Evolver::new(&m, None).unwrap();
        ev.step(&mut s, 0.25, StepMode::FixedPoint, &SolverConfig::default(), 50).unwrap();
        assert!(s.p.defined().all(|(_, v)| v == 0.0));
    }

    #[test]
    fn nondegeneracy_needs_free_boundary() {
        let m = plane(16, 1.0);
        let s = init_state(&m, &RegionDescriptor::disc([0.0, 0.0], 0.2)).unwrap();
        assert!(matches!(nondegeneracy_probe(&s, &m, &[0.2, 0.4], 8), Err(Error::InsufficientData(_))));
    }
}

//! Obstacle problem `min ½⟨L p, p⟩ − ⟨load, p⟩` over `p ≥ 0`.
//!
//! Two solvers share the same interface: a primal-dual active-set iteration
//! whose linear subproblems go through conjugate gradients on the current
//! positivity set (`SolverMethod::Cg`), and projected SOR
//! (`SolverMethod::Sor`). Both return a triple satisfying the complementarity
//! conditions `p ≥ 0`, `L p − load ≥ 0`, `p (L p − load) = 0` up to tolerance.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::elliptic::{pcg, Operator, ScalarField, SolverConfig, SolverMethod};
use crate::error::{Error, Result};
use crate::geometry::DomainMask;
use crate::homogenization::EffectiveTensor;

const ACTIVATION: f64 = 1e-12;
const MAX_ACTIVE_SET_ROUNDS: usize = 200;

/// Threshold separating `{p > 0}` from round-off.
pub fn activation_threshold(p_max: f64) -> f64 {
    ACTIVATION * p_max.max(1.0)
}

/// KKT audit of an obstacle solution; residual means `L p − load`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplementarityReport {
    /// `max(0, -min p)`.
    pub max_negative_p: f64,
    /// Largest `|residual|` on the positivity set.
    pub max_active_residual: f64,
    /// Smallest residual on the zero set (`+inf` when the zero set is empty).
    pub min_inactive_residual: f64,
    /// Residual scale `max(1, ‖load‖₂)`.
    pub scale: f64,
}

impl ComplementarityReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_negative_p <= tol
            && self.max_active_residual <= tol * self.scale
            && self.min_inactive_residual >= -tol * self.scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleStats {
    /// Active-set rounds (`cg`) or sweeps (`sor`).
    pub iterations: usize,
    /// Conjugate-gradient iterations summed over all rounds.
    pub linear_iterations: usize,
    pub method: SolverMethod,
}

#[derive(Debug, Clone)]
pub struct ObstacleSolution {
    pub p: ScalarField,
    /// `{p > activation_threshold}` per cell (false off the fluid set).
    pub active: Vec<bool>,
    pub report: ComplementarityReport,
    pub stats: ObstacleStats,
    op: Arc<Operator>,
}

impl ObstacleSolution {
    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }
}

/// Reusable obstacle solver bound to one operator.
#[derive(Debug, Clone)]
pub struct ObstacleSolver {
    op: Arc<Operator>,
}

impl ObstacleSolver {
    pub fn new(mask: &DomainMask, tensor: Option<&EffectiveTensor>) -> Result<Self> {
        Ok(ObstacleSolver { op: Arc::new(Operator::new(mask, tensor)?) })
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }

    /// Solves in dof space, warm-started from `x` (negative entries are
    /// clamped to zero first).
    pub fn solve_dofs(&self, load: &[f64], x: &mut [f64], cfg: &SolverConfig) -> Result<ObstacleStats> {
        cfg.validate()?;
        if load.len() != self.op.n() || x.len() != self.op.n() {
            return Err(Error::ShapeMismatch { expected: self.op.n(), got: load.len().min(x.len()) });
        }
        x.iter_mut().for_each(|v| *v = v.max(0.0));
        if self.op.is_singular() {
            let total: f64 = load.iter().sum();
            if total > 0.0 {
                return Err(Error::UnboundedBelow { total });
            }
        }
        if load.iter().all(|&f| f <= 0.0) {
            x.iter_mut().for_each(|v| *v = 0.0);
            return Ok(ObstacleStats { iterations: 0, linear_iterations: 0, method: cfg.method });
        }
        match cfg.method {
            SolverMethod::Cg if !self.op.is_singular() => match self.active_set(load, x, cfg) {
                Ok(s) => Ok(s),
                Err(Error::InnerIterationDivergence(_)) => {
                    let mut s = self.psor(load, x, cfg)?;
                    s.method = SolverMethod::Sor;
                    Ok(s)
                }
                Err(e) => Err(e),
            },
            _ => self.psor(load, x, cfg),
        }
    }

    /// Primal-dual active-set iteration: solve on the current positivity set
    /// with zero values elsewhere, then drop cells that went nonpositive and
    /// add zero cells whose residual is negative.
    fn active_set(&self, load: &[f64], x: &mut [f64], cfg: &SolverConfig) -> Result<ObstacleStats> {
        let a = self.op.matrix();
        let n = a.n();
        let mut pos: Vec<bool> = (0..n).map(|i| x[i] > 0.0 || load[i] > 0.0).collect();
        let mut local = vec![u32::MAX; n];
        let mut linear_iterations = 0;
        for round in 1..=MAX_ACTIVE_SET_ROUNDS {
            let rows: Vec<usize> = (0..n).filter(|&i| pos[i]).collect();
            local.iter_mut().for_each(|l| *l = u32::MAX);
            for (k, &r) in rows.iter().enumerate() {
                local[r] = k as u32;
            }
            let sub = a.principal(&rows, &local);
            let b: Vec<f64> = rows.iter().map(|&r| load[r]).collect();
            let mut y: Vec<f64> = rows.iter().map(|&r| x[r]).collect();
            let stats = pcg(&sub, &b, &mut y, cfg.tol, cfg.max_iter, false)?;
            linear_iterations += stats.iterations;
            x.iter_mut().for_each(|v| *v = 0.0);
            for (k, &r) in rows.iter().enumerate() {
                x[r] = y[k];
            }
            let mut changed = false;
            for i in 0..n {
                let next = if pos[i] { x[i] > 0.0 } else { a.apply_row(i, x) - load[i] < 0.0 };
                if next != pos[i] {
                    changed = true;
                    pos[i] = next;
                }
            }
            if !changed {
                x.iter_mut().for_each(|v| *v = v.max(0.0));
                return Ok(ObstacleStats { iterations: round, linear_iterations, method: SolverMethod::Cg });
            }
        }
        x.iter_mut().for_each(|v| *v = v.max(0.0));
        Err(Error::InnerIterationDivergence(format!(
            "active set still changing after {MAX_ACTIVE_SET_ROUNDS} rounds"
        )))
    }

    /// Projected SOR; converged when the largest update falls below
    /// `tol · max(1, ‖p‖∞)`.
    fn psor(&self, load: &[f64], x: &mut [f64], cfg: &SolverConfig) -> Result<ObstacleStats> {
        let a = self.op.matrix();
        let omega = cfg.relaxation;
        let mut pmax = x.iter().fold(0.0f64, |m, &v| m.max(v));
        for sweep in 1..=cfg.max_iter {
            let mut max_update = 0.0f64;
            for i in 0..a.n() {
                let (cols, vals) = a.row(i);
                let mut s = load[i];
                for (&j, &v) in cols.iter().zip(vals) {
                    s -= v * x[j as usize];
                }
                let next = (x[i] + omega * (s / a.diag[i] - x[i])).max(0.0);
                max_update = max_update.max((next - x[i]).abs());
                x[i] = next;
            }
            pmax = x.iter().fold(0.0f64, |m, &v| m.max(v));
            if max_update < cfg.tol * pmax.max(1.0) {
                return Ok(ObstacleStats { iterations: sweep, linear_iterations: 0, method: SolverMethod::Sor });
            }
        }
        Err(Error::NoConvergence { iterations: cfg.max_iter, residual: pmax })
    }

    /// Packages a dof vector as a solution with its KKT report.
    pub fn solution(&self, x: &[f64], load: &[f64], stats: ObstacleStats) -> ObstacleSolution {
        let p = self.op.to_field(x);
        let mut sol = ObstacleSolution {
            active: vec![false; self.op.grid().len()],
            p,
            report: ComplementarityReport {
                max_negative_p: 0.0,
                max_active_residual: 0.0,
                min_inactive_residual: f64::INFINITY,
                scale: 1.0,
            },
            stats,
            op: Arc::clone(&self.op),
        };
        let thr = activation_threshold(sol.p.max_abs());
        for &c in self.op.cells() {
            sol.active[c] = sol.p.values()[c] > thr;
        }
        sol.report = report_dofs(&self.op, x, load);
        sol
    }

    pub fn solve(&self, load: &ScalarField, cfg: &SolverConfig) -> Result<ObstacleSolution> {
        let f = self.op.to_dofs(load)?;
        let mut x = vec![0.0; self.op.n()];
        let stats = self.solve_dofs(&f, &mut x, cfg)?;
        Ok(self.solution(&x, &f, stats))
    }
}

fn report_dofs(op: &Operator, x: &[f64], load: &[f64]) -> ComplementarityReport {
    let a = op.matrix();
    let pmax = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let thr = activation_threshold(pmax);
    let mut rep = ComplementarityReport {
        max_negative_p: 0.0,
        max_active_residual: 0.0,
        min_inactive_residual: f64::INFINITY,
        scale: load.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0),
    };
    for i in 0..a.n() {
        rep.max_negative_p = rep.max_negative_p.max(-x[i]);
        let r = a.apply_row(i, x) - load[i];
        if x[i] > thr {
            rep.max_active_residual = rep.max_active_residual.max(r.abs());
        } else {
            rep.min_inactive_residual = rep.min_inactive_residual.min(r);
        }
    }
    rep
}

/// Solves the obstacle problem on `mask` from a zero initial guess.
pub fn solve_obstacle(
    mask: &DomainMask,
    load: &ScalarField,
    cfg: &SolverConfig,
    tensor: Option<&EffectiveTensor>,
) -> Result<ObstacleSolution> {
    ObstacleSolver::new(mask, tensor)?.solve(load, cfg)
}

/// Recomputes the KKT audit for the current contents of `sol.p`.
pub fn complementarity_report(sol: &ObstacleSolution, load: &ScalarField) -> Result<ComplementarityReport> {
    let x = sol.op.to_dofs(&sol.p)?;
    let f = sol.op.to_dofs(load)?;
    Ok(report_dofs(&sol.op, &x, &f))
}

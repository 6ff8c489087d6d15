//! Cell-centered finite-volume operators on perforated masks, linear solvers
//! and the Green, Harnack and Hölder probes built on them.
//!
//! The operator is the 5-point discretization of `-Δ` with closed faces at
//! perforation walls (zero flux) and unit-spacing couplings to Dirichlet
//! cells. With a diagonal tensor the x- and y-faces are weighted by `a11` and
//! `a22`; a nonzero `a12` switches to the 9-point stencil for `-div(A ∇·)`,
//! which is only offered on masks without solid cells.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{write_pgm, DomainMask, GridSpec, Link, OuterBoundary};
use crate::homogenization::EffectiveTensor;

/// Cell-centered values; `NaN` marks cells where the field is undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn undefined(grid: GridSpec) -> Self {
        ScalarField { grid, values: vec![f64::NAN; grid.len()] }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch { expected: grid.len(), got: values.len() });
        }
        Ok(ScalarField { grid, values })
    }

    /// Field equal to `value` on fluid cells and undefined elsewhere.
    pub fn constant_on(mask: &DomainMask, value: f64) -> Self {
        Self::from_fn(mask, |_| value)
    }

    /// Field sampled from `f` at fluid cell centers.
    pub fn from_fn(mask: &DomainMask, f: impl Fn([f64; 2]) -> f64) -> Self {
        let grid = *mask.grid();
        let values = (0..grid.len())
            .map(|c| if mask.is_fluid(c) { f(grid.center_of(c)) } else { f64::NAN })
            .collect();
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, c: usize) -> Option<f64> {
        let v = self.values[c];
        (!v.is_nan()).then_some(v)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Option<f64> {
        self.get(self.grid.index(i, j))
    }

    /// Value with undefined cells read as zero.
    #[inline]
    pub fn or_zero(&self, c: usize) -> f64 {
        let v = self.values[c];
        if v.is_nan() {
            0.0
        } else {
            v
        }
    }

    pub fn defined(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().enumerate().filter(|(_, v)| !v.is_nan()).map(|(c, &v)| (c, v))
    }

    pub fn max_abs(&self) -> f64 {
        self.defined().fold(0.0, |m, (_, v)| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.defined().fold(f64::NEG_INFINITY, |m, (_, v)| m.max(v))
    }

    pub fn min(&self) -> f64 {
        self.defined().fold(f64::INFINITY, |m, (_, v)| m.min(v))
    }

    /// `i,j,value` rows for every defined cell.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("i,j,value\n");
        for (c, v) in self.defined() {
            let (i, j) = self.grid.coords(c);
            s.push_str(&format!("{i},{j},{v:.16e}\n"));
        }
        s
    }

    /// Linearly scaled binary PGM; undefined cells map to 0.
    pub fn to_pgm(&self) -> Vec<u8> {
        let lo = self.min();
        let hi = self.max();
        let span = if hi > lo { hi - lo } else { 1.0 };
        let bytes: Vec<u8> = self
            .values
            .iter()
            .map(|&v| if v.is_nan() { 0 } else { (1.0 + 254.0 * (v - lo) / span).round() as u8 })
            .collect();
        write_pgm(&self.grid, &bytes)
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(self.to_csv().as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    Cg,
    Sor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub relaxation: f64,
    pub method: SolverMethod,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol: 1e-10, max_iter: 100_000, relaxation: 1.9, method: SolverMethod::Cg }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("solver.tol must be positive, got {}", self.tol)));
        }
        if self.max_iter < 1 {
            return Err(Error::InvalidArgument("solver.max_iter must be at least 1".into()));
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return Err(Error::InvalidArgument(format!(
                "solver.relaxation must lie in (0, 2), got {}",
                self.relaxation
            )));
        }
        Ok(())
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_method(mut self, method: SolverMethod) -> Self {
        self.method = method;
        self
    }
}

/// Compressed sparse rows with the diagonal stored separately.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub diag: Vec<f64>,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n() {
            let (cols, vals) = self.row(i);
            let mut s = self.diag[i] * x[i];
            for (&j, &a) in cols.iter().zip(vals) {
                s += a * x[j as usize];
            }
            y[i] = s;
        }
    }

    /// `(A x)_i` for a single row.
    #[inline]
    pub fn apply_row(&self, i: usize, x: &[f64]) -> f64 {
        let (cols, vals) = self.row(i);
        let mut s = self.diag[i] * x[i];
        for (&j, &a) in cols.iter().zip(vals) {
            s += a * x[j as usize];
        }
        s
    }

    /// Principal submatrix on `rows` (local index = position in `rows`);
    /// `local[i]` must map every global row to its local index or `u32::MAX`.
    pub fn principal(&self, rows: &[usize], local: &[u32]) -> CsrMatrix {
        let mut diag = Vec::with_capacity(rows.len());
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for &r in rows {
            diag.push(self.diag[r]);
            let (cs, vs) = self.row(r);
            for (&j, &a) in cs.iter().zip(vs) {
                let lj = local[j as usize];
                if lj != u32::MAX {
                    cols.push(lj);
                    vals.push(a);
                }
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix { diag, row_ptr, cols, vals }
    }
}

/// Discrete operator on the fluid cells of a mask.
#[derive(Debug, Clone)]
pub struct Operator {
    grid: GridSpec,
    matrix: CsrMatrix,
    cells: Vec<usize>,
    dof_of: Vec<u32>,
    /// Per-dof couplings `(cell, coefficient)` to Dirichlet values; `cell` is
    /// `usize::MAX` for the zero ghost layer beyond the box.
    ghost_ptr: Vec<usize>,
    ghost_cells: Vec<usize>,
    ghost_vals: Vec<f64>,
    singular: bool,
}

pub const BOX_GHOST: usize = usize::MAX;

impl Operator {
    pub fn new(mask: &DomainMask, tensor: Option<&EffectiveTensor>) -> Result<Self> {
        let (a11, a12, a22) = match tensor {
            Some(t) => (t.a11, t.a12, t.a22),
            None => (1.0, 0.0, 1.0),
        };
        if a12.abs() > 1e-14 * (a11.abs() + a22.abs()) {
            if mask.has_solid() || mask.outer() == OuterBoundary::Neumann {
                return Err(Error::UnsupportedAnisotropy);
            }
            Ok(Self::nine_point(mask, a11, a12, a22))
        } else {
            Ok(Self::five_point(mask, a11, a22))
        }
    }

    fn index_dofs(mask: &DomainMask) -> (Vec<usize>, Vec<u32>) {
        let grid = mask.grid();
        let cells: Vec<usize> = (0..grid.len()).filter(|&c| mask.is_fluid(c)).collect();
        let mut dof_of = vec![u32::MAX; grid.len()];
        for (k, &c) in cells.iter().enumerate() {
            dof_of[c] = k as u32;
        }
        (cells, dof_of)
    }

    fn five_point(mask: &DomainMask, a11: f64, a22: f64) -> Self {
        let grid = *mask.grid();
        let (cells, dof_of) = Self::index_dofs(mask);
        let h2 = grid.h * grid.h;
        let mut diag = Vec::with_capacity(cells.len());
        let mut row_ptr = vec![0];
        let mut cols = Vec::with_capacity(4 * cells.len());
        let mut vals = Vec::with_capacity(4 * cells.len());
        let mut ghost_ptr = vec![0];
        let mut ghost_cells = Vec::new();
        let mut ghost_vals = Vec::new();
        for &c in &cells {
            let mut d = 0.0;
            for dir in 0..4 {
                let w = if dir < 2 { a11 } else { a22 } / h2;
                match mask.link(c, dir) {
                    Link::Open(n) => {
                        d += w;
                        cols.push(dof_of[n]);
                        vals.push(-w);
                    }
                    Link::Dirichlet(g) => {
                        d += w;
                        ghost_cells.push(g.unwrap_or(BOX_GHOST));
                        ghost_vals.push(-w);
                    }
                    Link::Closed => {}
                }
            }
            diag.push(d);
            row_ptr.push(cols.len());
            ghost_ptr.push(ghost_cells.len());
        }
        let singular = ghost_cells.is_empty();
        Operator {
            grid,
            matrix: CsrMatrix { diag, row_ptr, cols, vals },
            cells,
            dof_of,
            ghost_ptr,
            ghost_cells,
            ghost_vals,
            singular,
        }
    }

    fn nine_point(mask: &DomainMask, a11: f64, a12: f64, a22: f64) -> Self {
        let grid = *mask.grid();
        let (cells, dof_of) = Self::index_dofs(mask);
        let h2 = grid.h * grid.h;
        let stencil: [(i64, i64, f64); 8] = [
            (1, 0, -a11 / h2),
            (-1, 0, -a11 / h2),
            (0, 1, -a22 / h2),
            (0, -1, -a22 / h2),
            (1, 1, -0.5 * a12 / h2),
            (-1, -1, -0.5 * a12 / h2),
            (-1, 1, 0.5 * a12 / h2),
            (1, -1, 0.5 * a12 / h2),
        ];
        let d = 2.0 * (a11 + a22) / h2;
        let mut diag = Vec::with_capacity(cells.len());
        let mut row_ptr = vec![0];
        let mut cols = Vec::with_capacity(8 * cells.len());
        let mut vals = Vec::with_capacity(8 * cells.len());
        let mut ghost_ptr = vec![0];
        let mut ghost_cells = Vec::new();
        let mut ghost_vals = Vec::new();
        for &c in &cells {
            let (i, j) = grid.coords(c);
            for &(di, dj, w) in &stencil {
                match mask.offset(i, j, di, dj) {
                    Some(n) if mask.is_fluid(n) => {
                        cols.push(dof_of[n]);
                        vals.push(w);
                    }
                    Some(n) => {
                        ghost_cells.push(n);
                        ghost_vals.push(w);
                    }
                    None => {
                        ghost_cells.push(BOX_GHOST);
                        ghost_vals.push(w);
                    }
                }
            }
            diag.push(d);
            row_ptr.push(cols.len());
            ghost_ptr.push(ghost_cells.len());
        }
        let singular = ghost_cells.is_empty();
        Operator {
            grid,
            matrix: CsrMatrix { diag, row_ptr, cols, vals },
            cells,
            dof_of,
            ghost_ptr,
            ghost_cells,
            ghost_vals,
            singular,
        }
    }

    pub fn n(&self) -> usize {
        self.cells.len()
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    #[inline]
    pub fn dof(&self, cell: usize) -> Option<usize> {
        let d = self.dof_of[cell];
        (d != u32::MAX).then_some(d as usize)
    }

    pub fn dof_map(&self) -> &[u32] {
        &self.dof_of
    }

    /// True when no unknown couples to a Dirichlet value (constants in the kernel).
    pub fn is_singular(&self) -> bool {
        self.singular
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matrix.apply(x, y);
    }

    /// Dirichlet couplings of dof `k` as `(cell, coefficient)`.
    pub fn ghosts(&self, k: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.ghost_ptr[k]..self.ghost_ptr[k + 1];
        self.ghost_cells[r.clone()].iter().copied().zip(self.ghost_vals[r].iter().copied())
    }

    /// Right-hand side contribution of Dirichlet values `g` (per cell; the
    /// box ghost layer is always zero).
    pub fn lift(&self, g: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|k| {
                self.ghosts(k)
                    .filter(|&(c, _)| c != BOX_GHOST)
                    .map(|(c, a)| -a * g[c])
                    .sum()
            })
            .collect()
    }

    pub fn to_dofs(&self, field: &ScalarField) -> Result<Vec<f64>> {
        if field.grid().len() != self.grid.len() {
            return Err(Error::ShapeMismatch { expected: self.grid.len(), got: field.grid().len() });
        }
        self.cells
            .iter()
            .map(|&c| {
                field.get(c).ok_or_else(|| {
                    let (i, j) = self.grid.coords(c);
                    Error::InvalidArgument(format!("field undefined at fluid cell ({i}, {j})"))
                })
            })
            .collect()
    }

    pub fn to_field(&self, x: &[f64]) -> ScalarField {
        let mut f = ScalarField::undefined(self.grid);
        for (k, &c) in self.cells.iter().enumerate() {
            f.values[c] = x[k];
        }
        f
    }
}

/// `L x` as a field defined on the fluid cells of `mask`.
pub fn apply_operator(
    mask: &DomainMask,
    x: &ScalarField,
    tensor: Option<&EffectiveTensor>,
) -> Result<ScalarField> {
    let op = Operator::new(mask, tensor)?;
    let xv = op.to_dofs(x)?;
    let mut y = vec![0.0; op.n()];
    op.apply(&xv, &mut y);
    Ok(op.to_field(&y))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn remove_mean(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= m);
}

/// Jacobi-preconditioned conjugate gradients, warm-started from `x`. For
/// singular (pure Neumann) systems the right-hand side must have zero mean and
/// the zero-mean solution is returned.
pub fn pcg(a: &CsrMatrix, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize, singular: bool) -> Result<SolveStats> {
    let n = a.n();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats { iterations: 0, relative_residual: 0.0 });
    }
    let mut r = vec![0.0; n];
    a.apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    if singular {
        remove_mean(&mut r);
    }
    let inv_d: Vec<f64> = a.diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_d).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = norm(&r) / bnorm;
    let mut it = 0;
    while res > tol {
        if it >= max_iter {
            return Err(Error::NoConvergence { iterations: it, residual: res });
        }
        a.apply(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            break;
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        if singular {
            remove_mean(&mut r);
        }
        it += 1;
        // refresh the recursive residual now and then to limit drift
        if it % 500 == 0 {
            a.apply(x, &mut q);
            for i in 0..n {
                r[i] = b[i] - q[i];
            }
            if singular {
                remove_mean(&mut r);
            }
        }
        res = norm(&r) / bnorm;
        for i in 0..n {
            z[i] = r[i] * inv_d[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if singular {
        remove_mean(x);
    }
    let true_res = relative_residual(a, b, x);
    if true_res > tol * 10.0 && true_res > 1e-13 {
        return Err(Error::NoConvergence { iterations: it, residual: true_res });
    }
    Ok(SolveStats { iterations: it, relative_residual: true_res })
}

/// Successive over-relaxation, warm-started from `x`.
pub fn sor(a: &CsrMatrix, b: &[f64], x: &mut [f64], omega: f64, tol: f64, max_iter: usize, singular: bool) -> Result<SolveStats> {
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats { iterations: 0, relative_residual: 0.0 });
    }
    let n = a.n();
    let mut it = 0;
    loop {
        for i in 0..n {
            let (cols, vals) = a.row(i);
            let mut s = b[i];
            for (&j, &v) in cols.iter().zip(vals) {
                s -= v * x[j as usize];
            }
            x[i] += omega * (s / a.diag[i] - x[i]);
        }
        it += 1;
        if it % 10 == 0 || it >= max_iter {
            if singular {
                remove_mean(x);
            }
            let res = relative_residual(a, b, x);
            if res <= tol {
                return Ok(SolveStats { iterations: it, relative_residual: res });
            }
            if it >= max_iter {
                return Err(Error::NoConvergence { iterations: it, residual: res });
            }
        }
    }
}

pub fn relative_residual(a: &CsrMatrix, b: &[f64], x: &[f64]) -> f64 {
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return norm(x);
    }
    let mut r = vec![0.0; a.n()];
    a.apply(x, &mut r);
    let s: f64 = r.iter().zip(b).map(|(r, b)| (r - b) * (r - b)).sum();
    s.sqrt() / bnorm
}

/// Solves `L x = b` with the configured method, warm-started from `x`.
pub fn solve_linear(op: &Operator, b: &[f64], x: &mut [f64], cfg: &SolverConfig) -> Result<SolveStats> {
    cfg.validate()?;
    if op.is_singular() {
        let mean = b.iter().sum::<f64>() / b.len().max(1) as f64;
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if mean.abs() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::SingularSystem { mean });
        }
    }
    match cfg.method {
        SolverMethod::Cg => pcg(op.matrix(), b, x, cfg.tol, cfg.max_iter, op.is_singular()),
        SolverMethod::Sor => sor(op.matrix(), b, x, cfg.relaxation, cfg.tol, cfg.max_iter, op.is_singular()),
    }
}

/// Solves `L v = rhs` on the fluid cells with zero Dirichlet values and
/// closed perforation walls.
pub fn solve_poisson(
    mask: &DomainMask,
    rhs: &ScalarField,
    cfg: &SolverConfig,
    tensor: Option<&EffectiveTensor>,
) -> Result<ScalarField> {
    let op = Operator::new(mask, tensor)?;
    let b = op.to_dofs(rhs)?;
    let mut x = vec![0.0; op.n()];
    solve_linear(&op, &b, &mut x, cfg)?;
    Ok(op.to_field(&x))
}

/// Discrete Green's function with pole at fluid cell `y`: `L G = δ_y / h²`
/// with the mask's zero Dirichlet values.
pub fn greens_function(mask: &DomainMask, y: (usize, usize), cfg: &SolverConfig) -> Result<ScalarField> {
    let grid = mask.grid();
    let yc = grid.index(y.0, y.1);
    if !mask.is_fluid(yc) {
        return Err(Error::NotFluid(y.0, y.1));
    }
    if !mask.has_dirichlet() {
        return Err(Error::InvalidArgument("Green's function needs a Dirichlet boundary".into()));
    }
    let op = Operator::new(mask, None)?;
    let mut b = vec![0.0; op.n()];
    b[op.dof(yc).unwrap()] = 1.0 / (grid.h * grid.h);
    let mut x = vec![0.0; op.n()];
    solve_linear(&op, &b, &mut x, cfg)?;
    Ok(op.to_field(&x))
}

/// Fluid cells whose centers lie within distance `r` of the center of `center`.
pub fn ball(mask: &DomainMask, center: (usize, usize), r: f64) -> Vec<usize> {
    let grid = mask.grid();
    let c0 = grid.center(center.0, center.1);
    let reach = (r / grid.h).ceil() as i64 + 1;
    let mut out = Vec::new();
    for dj in -reach..=reach {
        for di in -reach..=reach {
            let i = center.0 as i64 + di;
            let j = center.1 as i64 + dj;
            if i < 0 || j < 0 || i >= grid.nx as i64 || j >= grid.ny as i64 {
                continue;
            }
            let c = grid.index(i as usize, j as usize);
            let p = grid.center_of(c);
            if mask.is_fluid(c) && (p[0] - c0[0]).hypot(p[1] - c0[1]) <= r + 1e-12 * grid.h {
                out.push(c);
            }
        }
    }
    out.sort_unstable();
    out
}

/// Dirichlet data on the sphere of a probe ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryData {
    Constant(f64),
    /// `upper` where the boundary cell lies above the center, `lower` otherwise.
    HalfPlanes { upper: f64, lower: f64 },
    /// `(x - center) · direction / r`.
    Linear { direction: [f64; 2] },
}

impl BoundaryData {
    fn eval(&self, p: [f64; 2], c: [f64; 2], r: f64) -> f64 {
        match *self {
            BoundaryData::Constant(v) => v,
            BoundaryData::HalfPlanes { upper, lower } => {
                if p[1] > c[1] {
                    upper
                } else {
                    lower
                }
            }
            BoundaryData::Linear { direction } => {
                ((p[0] - c[0]) * direction[0] + (p[1] - c[1]) * direction[1]) / r
            }
        }
    }
}

/// Harmonic function in `B_r(center)` with Dirichlet data on the fluid cells
/// just outside the ball; returns the field on the ball cells.
pub fn harmonic_in_ball(
    mask: &DomainMask,
    center: (usize, usize),
    r: f64,
    data: BoundaryData,
    cfg: &SolverConfig,
) -> Result<ScalarField> {
    let grid = *mask.grid();
    let cells = ball(mask, center, r);
    if cells.is_empty() {
        return Err(Error::EmptyBall(center.0, center.1, r));
    }
    let mut keep = vec![false; grid.len()];
    cells.iter().for_each(|&c| keep[c] = true);
    let sub = mask.restricted_to(&keep).with_outer(OuterBoundary::Neumann);
    let op = Operator::new(&sub, None)?;
    let c0 = grid.center(center.0, center.1);
    let g: Vec<f64> = (0..grid.len()).map(|c| data.eval(grid.center_of(c), c0, r)).collect();
    let b = op.lift(&g);
    let mut x = vec![0.0; op.n()];
    solve_linear(&op, &b, &mut x, cfg)?;
    Ok(op.to_field(&x))
}

/// Harnack quotients `sup / inf` over `B_{r/2}` of the positive harmonic
/// function in `B_r` with the given boundary data, one per radius.
pub fn harnack_probe(
    mask: &DomainMask,
    center: (usize, usize),
    radii: &[f64],
    data: BoundaryData,
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    radii
        .iter()
        .map(|&r| {
            let v = harmonic_in_ball(mask, center, r, data, cfg)?;
            let inner = ball(mask, center, 0.5 * r);
            if inner.is_empty() {
                return Err(Error::EmptyBall(center.0, center.1, 0.5 * r));
            }
            let (lo, hi) = inner.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| {
                let x = v.or_zero(c);
                (lo.min(x), hi.max(x))
            });
            Ok(hi / lo)
        })
        .collect()
}

/// Oscillation decay across dyadic balls: entry `k - 1` holds
/// `osc(B_{r/2^k}) / osc(B_{r/2^(k-1)})`, `None` when both vanish.
pub fn holder_probe(
    mask: &DomainMask,
    center: (usize, usize),
    r: f64,
    data: BoundaryData,
    cfg: &SolverConfig,
) -> Result<Vec<Option<f64>>> {
    let v = harmonic_in_ball(mask, center, r, data, cfg)?;
    let h = mask.grid().h;
    let osc = |rho: f64| -> Result<f64> {
        let cells = ball(mask, center, rho);
        if cells.is_empty() {
            return Err(Error::EmptyBall(center.0, center.1, rho));
        }
        let (lo, hi) = cells.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| {
            let x = v.or_zero(c);
            (lo.min(x), hi.max(x))
        });
        Ok(hi - lo)
    };
    let floor = 1e-8 * v.max_abs();
    let mut out = Vec::new();
    let mut prev = osc(r)?;
    let mut rho = 0.5 * r;
    while rho >= 2.0 * h - 1e-12 {
        let cur = osc(rho)?;
        let scale = prev.abs().max(cur.abs());
        out.push(if scale <= floor { None } else { Some(cur / prev) });
        prev = cur;
        rho *= 0.5;
    }
    Ok(out)
}

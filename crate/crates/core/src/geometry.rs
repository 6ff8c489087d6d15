//! Perforated domains: lattice perforation models, rasterization onto uniform
//! grids, connectivity repair and separation audits.
//!
//! Randomness is indexed by lattice site: each site draws from its own ChaCha
//! stream seeded by a hash of `(seed, k, l)`, so the law of the perforation
//! pattern is invariant under lattice translations and independent of the
//! window that is rasterized.

use std::collections::VecDeque;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform cell-centered grid. Cell `(i, j)` has center
/// `origin + ((i + 1/2) h, (j + 1/2) h)`; cells are stored row-major with `i`
/// fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: [f64; 2],
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, h: f64, origin: [f64; 2]) -> Result<Self> {
        let grid = GridSpec { nx, ny, h, origin };
        grid.validate()?;
        Ok(grid)
    }

    /// Square grid of `n x n` cells exactly covering `[lo, hi]^2`.
    pub fn square(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(n, n, (hi - lo) / n as f64, [lo, lo])
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 4 || self.ny < 4 {
            return Err(Error::InvalidGrid(format!(
                "need nx, ny >= 4, got {} x {}",
                self.nx, self.ny
            )));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidGrid(format!("cell width must be positive, got {}", self.h)));
        }
        if !(self.origin[0].is_finite() && self.origin[1].is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, c: usize) -> (usize, usize) {
        (c % self.nx, c / self.nx)
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.h,
            self.origin[1] + (j as f64 + 0.5) * self.h,
        ]
    }

    #[inline]
    pub fn center_of(&self, c: usize) -> [f64; 2] {
        let (i, j) = self.coords(c);
        self.center(i, j)
    }

    pub fn extent(&self) -> [f64; 2] {
        [self.nx as f64 * self.h, self.ny as f64 * self.h]
    }

    /// Cell containing `p`, if inside the grid.
    pub fn cell_at(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let fx = ((p[0] - self.origin[0]) / self.h).floor();
        let fy = ((p[1] - self.origin[1]) / self.h).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.nx as f64 || fy >= self.ny as f64 {
            return None;
        }
        Some((fx as usize, fy as usize))
    }

    /// Cell whose center is nearest to `p`, clamped into the grid.
    pub fn nearest_cell(&self, p: [f64; 2]) -> (usize, usize) {
        let fx = ((p[0] - self.origin[0]) / self.h - 0.5).round();
        let fy = ((p[1] - self.origin[1]) / self.h - 0.5).round();
        (
            fx.clamp(0.0, (self.nx - 1) as f64) as usize,
            fy.clamp(0.0, (self.ny - 1) as f64) as usize,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerforationKind {
    None,
    SquareSite,
    TriangularSite,
    Chessboard,
}

/// Lattice perforation model. `occupancy_prob` is the probability that a site
/// carries an inclusion (the complement of the exclusion probability used in
/// the percolation literature).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerforationModel {
    pub kind: PerforationKind,
    pub inclusion_scale: f64,
    pub occupancy_prob: f64,
    pub period: f64,
    pub seed: u64,
}

impl Default for PerforationModel {
    fn default() -> Self {
        PerforationModel {
            kind: PerforationKind::None,
            inclusion_scale: 0.5,
            occupancy_prob: 1.0,
            period: 0.125,
            seed: 0,
        }
    }
}

impl PerforationModel {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn square_site(inclusion_scale: f64, occupancy_prob: f64, period: f64, seed: u64) -> Self {
        PerforationModel {
            kind: PerforationKind::SquareSite,
            inclusion_scale,
            occupancy_prob,
            period,
            seed,
        }
    }

    pub fn with_period(mut self, period: f64) -> Self {
        self.period = period;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == PerforationKind::None {
            return Ok(());
        }
        if !(self.inclusion_scale > 0.0 && self.inclusion_scale < 1.0) {
            return Err(Error::InvalidModel(format!(
                "inclusion_scale must lie in (0, 1), got {}",
                self.inclusion_scale
            )));
        }
        if !(0.0..=1.0).contains(&self.occupancy_prob) {
            return Err(Error::InvalidModel(format!(
                "occupancy_prob must lie in [0, 1], got {}",
                self.occupancy_prob
            )));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::InvalidModel(format!("period must be positive, got {}", self.period)));
        }
        Ok(())
    }

    /// Guaranteed minimal gap between distinct inclusions.
    pub fn separation(&self) -> f64 {
        (1.0 - self.inclusion_scale) * self.period
    }

    /// Upper bound on the diameter of a single inclusion.
    pub fn diameter_bound(&self) -> f64 {
        self.inclusion_scale * self.period * std::f64::consts::SQRT_2
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: PerforationModel =
            serde_json::from_str(s).map_err(|e| Error::InvalidModel(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Rect { center: [f64; 2], half: [f64; 2] },
    Disc { center: [f64; 2], radius: f64 },
}

impl Shape {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match *self {
            Shape::Rect { center, half } => {
                (p[0] - center[0]).abs() < half[0] && (p[1] - center[1]).abs() < half[1]
            }
            Shape::Disc { center, radius } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                dx * dx + dy * dy < radius * radius
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        match *self {
            Shape::Rect { half, .. } => 2.0 * half[0].hypot(half[1]),
            Shape::Disc { radius, .. } => 2.0 * radius,
        }
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bbox(&self) -> ([f64; 2], [f64; 2]) {
        match *self {
            Shape::Rect { center, half } => (
                [center[0] - half[0], center[1] - half[1]],
                [center[0] + half[0], center[1] + half[1]],
            ),
            Shape::Disc { center, radius } => (
                [center[0] - radius, center[1] - radius],
                [center[0] + radius, center[1] + radius],
            ),
        }
    }

    /// Euclidean distance between the two closed shapes (0 if they overlap).
    pub fn gap(&self, other: &Shape) -> f64 {
        match (*self, *other) {
            (Shape::Rect { center: c1, half: h1 }, Shape::Rect { center: c2, half: h2 }) => {
                let dx = ((c1[0] - c2[0]).abs() - h1[0] - h2[0]).max(0.0);
                let dy = ((c1[1] - c2[1]).abs() - h1[1] - h2[1]).max(0.0);
                dx.hypot(dy)
            }
            (Shape::Disc { center: c1, radius: r1 }, Shape::Disc { center: c2, radius: r2 }) => {
                ((c1[0] - c2[0]).hypot(c1[1] - c2[1]) - r1 - r2).max(0.0)
            }
            (Shape::Rect { center, half }, Shape::Disc { center: c, radius })
            | (Shape::Disc { center: c, radius }, Shape::Rect { center, half }) => {
                let dx = ((c[0] - center[0]).abs() - half[0]).max(0.0);
                let dy = ((c[1] - center[1]).abs() - half[1]).max(0.0);
                (dx.hypot(dy) - radius).max(0.0)
            }
        }
    }
}

/// One placed perforation together with the lattice site that owns it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inclusion {
    pub site: [i64; 2],
    pub shape: Shape,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent random stream for lattice site `(k, l)`.
pub fn site_rng(seed: u64, k: i64, l: i64) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ (k as u64));
    h = splitmix64(h ^ (l as u64).rotate_left(32));
    ChaCha8Rng::seed_from_u64(h)
}

const SQRT3_2: f64 = 0.866_025_403_784_438_6;

/// Places every inclusion whose lattice cell intersects the window `[lo, hi]`.
pub fn place_inclusions(model: &PerforationModel, lo: [f64; 2], hi: [f64; 2]) -> Vec<Inclusion> {
    let eps = model.period;
    let s = model.inclusion_scale;
    let q = model.occupancy_prob;
    let mut out = Vec::new();
    match model.kind {
        PerforationKind::None => {}
        PerforationKind::SquareSite | PerforationKind::Chessboard => {
            let k0 = (lo[0] / eps).floor() as i64 - 1;
            let k1 = (hi[0] / eps).ceil() as i64 + 1;
            let l0 = (lo[1] / eps).floor() as i64 - 1;
            let l1 = (hi[1] / eps).ceil() as i64 + 1;
            for l in l0..=l1 {
                for k in k0..=k1 {
                    let chess = model.kind == PerforationKind::Chessboard;
                    if chess && (k + l).rem_euclid(2) != 0 {
                        continue;
                    }
                    let mut rng = site_rng(model.seed, k, l);
                    if rng.gen::<f64>() >= q {
                        continue;
                    }
                    let center = [(k as f64 + 0.5) * eps, (l as f64 + 0.5) * eps];
                    let half = if chess {
                        [
                            0.5 * s * eps * rng.gen_range(0.5..=1.0),
                            0.5 * s * eps * rng.gen_range(0.5..=1.0),
                        ]
                    } else {
                        [0.5 * s * eps, 0.5 * s * eps]
                    };
                    out.push(Inclusion { site: [k, l], shape: Shape::Rect { center, half } });
                }
            }
        }
        PerforationKind::TriangularSite => {
            let row = eps * SQRT3_2;
            let l0 = (lo[1] / row).floor() as i64 - 1;
            let l1 = (hi[1] / row).ceil() as i64 + 1;
            for l in l0..=l1 {
                let shift = 0.5 * eps * l as f64;
                let k0 = ((lo[0] - shift) / eps).floor() as i64 - 1;
                let k1 = ((hi[0] - shift) / eps).ceil() as i64 + 1;
                for k in k0..=k1 {
                    let mut rng = site_rng(model.seed, k, l);
                    if rng.gen::<f64>() >= q {
                        continue;
                    }
                    let center = [k as f64 * eps + shift, l as f64 * row];
                    out.push(Inclusion {
                        site: [k, l],
                        shape: Shape::Disc { center, radius: 0.5 * s * eps },
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterBoundary {
    /// Zero ghost value one cell beyond the box.
    Dirichlet,
    /// Zero flux through the box edges.
    Neumann,
    /// Opposite box edges identified.
    Periodic,
}

/// Relation of a fluid cell to one of its four face neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    /// Open face to the fluid cell with the given index.
    Open(usize),
    /// No flux: perforation wall or Neumann box edge.
    Closed,
    /// Coupling to a Dirichlet value: an exterior cell inside the grid, or
    /// the zero ghost layer beyond the box (`None`).
    Dirichlet(Option<usize>),
}

/// Rasterized perforated domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainMask {
    grid: GridSpec,
    fluid: Vec<bool>,
    dirichlet: Vec<bool>,
    outer: OuterBoundary,
    open_x: Vec<bool>,
    open_y: Vec<bool>,
}

/// Direction offsets in the order east, west, north, south.
pub const DIRS: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

impl DomainMask {
    pub fn new(grid: GridSpec, fluid: Vec<bool>, outer: OuterBoundary) -> Result<Self> {
        grid.validate()?;
        if fluid.len() != grid.len() {
            return Err(Error::ShapeMismatch { expected: grid.len(), got: fluid.len() });
        }
        let dirichlet = vec![false; grid.len()];
        Ok(Self::assemble(grid, fluid, dirichlet, outer))
    }

    pub fn all_fluid(grid: GridSpec, outer: OuterBoundary) -> Result<Self> {
        Self::new(grid, vec![true; grid.len()], outer)
    }

    fn assemble(grid: GridSpec, fluid: Vec<bool>, dirichlet: Vec<bool>, outer: OuterBoundary) -> Self {
        let mut mask = DomainMask {
            grid,
            fluid,
            dirichlet,
            outer,
            open_x: Vec::new(),
            open_y: Vec::new(),
        };
        let n = grid.len();
        let mut open_x = vec![false; n];
        let mut open_y = vec![false; n];
        for c in 0..n {
            if !mask.fluid[c] {
                continue;
            }
            open_x[c] = matches!(mask.link(c, 0), Link::Open(_));
            open_y[c] = matches!(mask.link(c, 2), Link::Open(_));
        }
        mask.open_x = open_x;
        mask.open_y = open_y;
        mask
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn outer(&self) -> OuterBoundary {
        self.outer
    }

    pub fn fluid(&self) -> &[bool] {
        &self.fluid
    }

    pub fn dirichlet(&self) -> &[bool] {
        &self.dirichlet
    }

    #[inline]
    pub fn is_fluid(&self, c: usize) -> bool {
        self.fluid[c]
    }

    #[inline]
    pub fn is_dirichlet(&self, c: usize) -> bool {
        self.dirichlet[c]
    }

    /// Open flag of the face between cell `c` and its east neighbor
    /// (wrapping across the box only for periodic masks).
    pub fn open_x(&self) -> &[bool] {
        &self.open_x
    }

    /// Open flag of the face between cell `c` and its north neighbor.
    pub fn open_y(&self) -> &[bool] {
        &self.open_y
    }

    pub fn fluid_count(&self) -> usize {
        self.fluid.iter().filter(|&&f| f).count()
    }

    pub fn has_solid(&self) -> bool {
        self.fluid.iter().zip(&self.dirichlet).any(|(&f, &d)| !f && !d)
    }

    /// Neighbor cell index in direction `d` (see [`DIRS`]), honoring periodic
    /// wrap. `None` means beyond the box.
    #[inline]
    pub fn neighbor(&self, c: usize, d: usize) -> Option<usize> {
        let (i, j) = self.grid.coords(c);
        let (di, dj) = DIRS[d];
        self.offset(i, j, di, dj)
    }

    /// Cell at `(i + di, j + dj)`, wrapping when periodic.
    #[inline]
    pub fn offset(&self, i: usize, j: usize, di: i64, dj: i64) -> Option<usize> {
        let nx = self.grid.nx as i64;
        let ny = self.grid.ny as i64;
        let mut ii = i as i64 + di;
        let mut jj = j as i64 + dj;
        if ii < 0 || ii >= nx || jj < 0 || jj >= ny {
            if self.outer != OuterBoundary::Periodic {
                return None;
            }
            ii = ii.rem_euclid(nx);
            jj = jj.rem_euclid(ny);
        }
        Some(self.grid.index(ii as usize, jj as usize))
    }

    /// How fluid cell `c` couples through its face in direction `d`.
    #[inline]
    pub fn link(&self, c: usize, d: usize) -> Link {
        match self.neighbor(c, d) {
            None => match self.outer {
                OuterBoundary::Dirichlet => Link::Dirichlet(None),
                _ => Link::Closed,
            },
            Some(n) if self.fluid[n] => Link::Open(n),
            Some(n) if self.dirichlet[n] => Link::Dirichlet(Some(n)),
            Some(_) => Link::Closed,
        }
    }

    /// Per-cell flag: fluid cell coupled to at least one Dirichlet value.
    pub fn outer_dirichlet(&self) -> Vec<bool> {
        (0..self.grid.len())
            .map(|c| self.fluid[c] && (0..4).any(|d| matches!(self.link(c, d), Link::Dirichlet(_))))
            .collect()
    }

    pub fn has_dirichlet(&self) -> bool {
        (0..self.grid.len()).any(|c| self.fluid[c] && (0..4).any(|d| matches!(self.link(c, d), Link::Dirichlet(_))))
    }

    pub fn with_outer(&self, outer: OuterBoundary) -> Self {
        Self::assemble(self.grid, self.fluid.clone(), self.dirichlet.clone(), outer)
    }

    /// Keeps only the fluid cells flagged in `keep`; the remaining fluid
    /// cells become zero Dirichlet cells.
    pub fn restricted_to(&self, keep: &[bool]) -> Self {
        let mut fluid = self.fluid.clone();
        let mut dirichlet = self.dirichlet.clone();
        for c in 0..fluid.len() {
            if fluid[c] && !keep[c] {
                fluid[c] = false;
                dirichlet[c] = true;
            }
        }
        Self::assemble(self.grid, fluid, dirichlet, self.outer)
    }

    /// Turns every fluid cell whose center lies farther than `radius` from
    /// `center` into a zero Dirichlet cell.
    pub fn with_dirichlet_outside_disc(&self, center: [f64; 2], radius: f64) -> Self {
        let keep: Vec<bool> = (0..self.grid.len())
            .map(|c| {
                let p = self.grid.center_of(c);
                (p[0] - center[0]).hypot(p[1] - center[1]) <= radius
            })
            .collect();
        self.restricted_to(&keep)
    }

    /// Face-connected components of the fluid set: per-cell labels
    /// (`usize::MAX` for non-fluid) and the component count.
    pub fn components(&self) -> (Vec<usize>, usize) {
        label_components(&self.grid, &self.fluid, self.outer)
    }

    /// Binary PGM (P5): 0 for non-fluid, 255 for fluid, top row first.
    pub fn to_pgm(&self) -> Vec<u8> {
        let bytes: Vec<u8> = self.fluid.iter().map(|&f| if f { 255 } else { 0 }).collect();
        write_pgm(&self.grid, &bytes)
    }
}

/// Encodes one byte per cell as a binary PGM with the top grid row first.
pub fn write_pgm(grid: &GridSpec, bytes: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(bytes.len() + 32);
    write!(out, "P5\n{} {}\n255\n", grid.nx, grid.ny).expect("write to vec");
    for j in (0..grid.ny).rev() {
        out.extend_from_slice(&bytes[j * grid.nx..(j + 1) * grid.nx]);
    }
    out
}

fn label_components(grid: &GridSpec, fluid: &[bool], outer: OuterBoundary) -> (Vec<usize>, usize) {
    let n = grid.len();
    let mut label = vec![usize::MAX; n];
    let mut count = 0;
    let mut queue = VecDeque::new();
    let wrap = outer == OuterBoundary::Periodic;
    for start in 0..n {
        if !fluid[start] || label[start] != usize::MAX {
            continue;
        }
        label[start] = count;
        queue.push_back(start);
        while let Some(c) = queue.pop_front() {
            for nb in neighbors4(grid, c, wrap).into_iter().flatten() {
                if fluid[nb] && label[nb] == usize::MAX {
                    label[nb] = count;
                    queue.push_back(nb);
                }
            }
        }
        count += 1;
    }
    (label, count)
}

fn neighbors4(grid: &GridSpec, c: usize, wrap: bool) -> [Option<usize>; 4] {
    let (i, j) = grid.coords(c);
    let mut out = [None; 4];
    for (d, &(di, dj)) in DIRS.iter().enumerate() {
        let mut ii = i as i64 + di;
        let mut jj = j as i64 + dj;
        if ii < 0 || jj < 0 || ii >= grid.nx as i64 || jj >= grid.ny as i64 {
            if !wrap {
                continue;
            }
            ii = ii.rem_euclid(grid.nx as i64);
            jj = jj.rem_euclid(grid.ny as i64);
        }
        out[d] = Some(grid.index(ii as usize, jj as usize));
    }
    out
}

const REPAIR_ATTEMPTS: usize = 3;

/// Reconnects the fluid set by opening the fewest solid cells along shortest
/// paths from each minor component to the largest one. Returns the number of
/// cells opened.
pub fn repair_connectivity(grid: &GridSpec, fluid: &mut [bool], outer: OuterBoundary) -> Result<usize> {
    let wrap = outer == OuterBoundary::Periodic;
    let mut opened = 0;
    for _ in 0..REPAIR_ATTEMPTS {
        let (label, count) = label_components(grid, fluid, outer);
        if count <= 1 {
            return Ok(opened);
        }
        let mut sizes = vec![0usize; count];
        for &l in label.iter().filter(|&&l| l != usize::MAX) {
            sizes[l] += 1;
        }
        let main = (0..count).max_by_key(|&k| (sizes[k], std::cmp::Reverse(k))).unwrap();
        for comp in (0..count).filter(|&k| k != main) {
            // 0-1 BFS: entering a solid cell costs one opening.
            let n = grid.len();
            let mut dist = vec![usize::MAX; n];
            let mut prev = vec![usize::MAX; n];
            let mut dq = VecDeque::new();
            for c in 0..n {
                if label[c] == comp {
                    dist[c] = 0;
                    dq.push_back(c);
                }
            }
            let mut target = None;
            while let Some(c) = dq.pop_front() {
                if label[c] == main {
                    target = Some(c);
                    break;
                }
                for nb in neighbors4(grid, c, wrap).into_iter().flatten() {
                    let w = usize::from(!fluid[nb]);
                    let nd = dist[c] + w;
                    if nd < dist[nb] {
                        dist[nb] = nd;
                        prev[nb] = c;
                        if w == 0 {
                            dq.push_front(nb);
                        } else {
                            dq.push_back(nb);
                        }
                    }
                }
            }
            let mut c = match target {
                Some(t) => t,
                None => continue,
            };
            while prev[c] != usize::MAX {
                if !fluid[c] {
                    fluid[c] = true;
                    opened += 1;
                }
                c = prev[c];
            }
        }
    }
    let (_, count) = label_components(grid, fluid, outer);
    if count <= 1 {
        Ok(opened)
    } else {
        Err(Error::DisconnectedFluid { attempts: REPAIR_ATTEMPTS, components: count })
    }
}

fn rasterize(grid: &GridSpec, inclusions: &[Inclusion]) -> Vec<bool> {
    let mut fluid = vec![true; grid.len()];
    let h = grid.h;
    for inc in inclusions {
        let (lo, hi) = inc.shape.bbox();
        let i0 = (((lo[0] - grid.origin[0]) / h - 0.5).floor().max(0.0)) as usize;
        let j0 = (((lo[1] - grid.origin[1]) / h - 0.5).floor().max(0.0)) as usize;
        let i1 = ((hi[0] - grid.origin[0]) / h + 0.5).ceil();
        let j1 = ((hi[1] - grid.origin[1]) / h + 0.5).ceil();
        if i1 < 0.0 || j1 < 0.0 {
            continue;
        }
        let i1 = (i1 as usize).min(grid.nx);
        let j1 = (j1 as usize).min(grid.ny);
        for j in j0..j1 {
            for i in i0..i1 {
                if inc.shape.contains(grid.center(i, j)) {
                    fluid[grid.index(i, j)] = false;
                }
            }
        }
    }
    fluid
}

/// Inclusions intersecting the grid window.
pub fn grid_inclusions(model: &PerforationModel, grid: &GridSpec) -> Vec<Inclusion> {
    let ext = grid.extent();
    let lo = grid.origin;
    let hi = [lo[0] + ext[0], lo[1] + ext[1]];
    place_inclusions(model, lo, hi)
        .into_iter()
        .filter(|inc| {
            let (a, b) = inc.shape.bbox();
            b[0] > lo[0] && b[1] > lo[1] && a[0] < hi[0] && a[1] < hi[1]
        })
        .collect()
}

/// Rasterizes the model onto the grid with a zero-Dirichlet outer box.
pub fn generate_domain(model: &PerforationModel, grid: &GridSpec) -> Result<DomainMask> {
    generate_domain_with(model, grid, OuterBoundary::Dirichlet)
}

pub fn generate_domain_with(
    model: &PerforationModel,
    grid: &GridSpec,
    outer: OuterBoundary,
) -> Result<DomainMask> {
    grid.validate()?;
    model.validate()?;
    if model.kind != PerforationKind::None && model.period < 4.0 * grid.h * (1.0 - 1e-12) {
        return Err(Error::ResolutionTooCoarse { period: model.period, h: grid.h });
    }
    let inclusions = grid_inclusions(model, grid);
    let mut fluid = rasterize(grid, &inclusions);
    repair_connectivity(grid, &mut fluid, outer)?;
    DomainMask::new(*grid, fluid, outer)
}

/// Periodic mask of `periods x periods` lattice cells at `cells_per_period`
/// grid cells each, anchored at the lattice origin.
pub fn periodic_cell(model: &PerforationModel, periods: usize, cells_per_period: usize) -> Result<DomainMask> {
    let n = periods * cells_per_period;
    let grid = GridSpec::new(n, n, model.period / cells_per_period as f64, [0.0, 0.0])?;
    generate_domain_with(model, &grid, OuterBoundary::Periodic)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationReport {
    pub inclusion_count: usize,
    /// Minimal pairwise gap; `f64::INFINITY` with fewer than two inclusions.
    pub min_gap: f64,
    pub max_diameter: f64,
    pub required_gap: f64,
    pub diameter_bound: f64,
    pub passes: bool,
}

/// Exhaustive pairwise audit of gaps and diameters, in physical coordinates.
pub fn verify_separation(model: &PerforationModel, inclusions: &[Inclusion]) -> SeparationReport {
    let mut min_gap = f64::INFINITY;
    let mut max_diameter: f64 = 0.0;
    for (a, ia) in inclusions.iter().enumerate() {
        max_diameter = max_diameter.max(ia.shape.diameter());
        for ib in &inclusions[a + 1..] {
            min_gap = min_gap.min(ia.shape.gap(&ib.shape));
        }
    }
    let required_gap = model.separation();
    let diameter_bound = model.diameter_bound();
    let slack = 1e-12 * model.period.max(1.0);
    SeparationReport {
        inclusion_count: inclusions.len(),
        min_gap,
        max_diameter,
        required_gap,
        diameter_bound,
        passes: min_gap >= required_gap - slack && max_diameter <= diameter_bound + slack,
    }
}

/// Fraction of grid cells occupied by fluid.
pub fn volume_fraction(mask: &DomainMask) -> f64 {
    mask.fluid_count() as f64 / mask.grid().len() as f64
}

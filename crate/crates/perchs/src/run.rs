//! Orchestration: fan out `(ε, seed)` jobs, write artifacts, reduce metrics.

use std::path::{Path, PathBuf};

use perchs_core::capacity::{ball_capacity, green_bounds_check, level_set_capacity_check};
use perchs_core::elliptic::{harnack_probe, holder_probe, solve_linear, Operator, ScalarField};
use perchs_core::evolution::{
    init_state, nondegeneracy_probe, pressure_recovery_error, recover_u, run_evolution, star_shape_check, ObstacleState,
    RegionDescriptor, Trajectory,
};
use perchs_core::geometry::{
    generate_domain_with, grid_inclusions, periodic_cell, verify_separation, volume_fraction, DomainMask,
    OuterBoundary, PerforationModel,
};
use perchs_core::homogenization::{
    cells_per_period, heleshaw_convergence_experiment, is_periodic_model, linear_homogenization_experiment, model_tensor,
    solve_corrector, SUPERCELL_PERIODS,
};
use perchs_core::metrics::MetricsRecord;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, ExperimentKind, ProbeKind};
use crate::error::{CliError, Result};
use crate::output;

/// One unit of work.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Job {
    pub index: usize,
    pub epsilon: f64,
    pub seed: u64,
}

impl Job {
    fn model(&self, cfg: &ExperimentConfig) -> PerforationModel {
        cfg.model.with_period(self.epsilon).with_seed(self.seed)
    }

    fn record(&self, t: f64, metric: &str, value: f64) -> MetricsRecord {
        MetricsRecord::new(self.epsilon, self.seed, t, metric, value)
    }
}

/// Jobs in the deterministic `(ε, seed)` order of the config lists.
pub fn plan(cfg: &ExperimentConfig) -> Vec<Job> {
    let seeds: Vec<u64> = match cfg.kind {
        // the tensor routine replicates over the seed list itself
        ExperimentKind::Homogenize => vec![cfg.model.seed],
        _ => cfg.seeds.clone(),
    };
    let mut jobs = Vec::new();
    for &epsilon in &cfg.eps_list {
        for &seed in &seeds {
            jobs.push(Job { index: jobs.len(), epsilon, seed });
        }
    }
    jobs
}

fn job_dir(out: &Path, job: &Job, total: usize) -> PathBuf {
    if total == 1 {
        out.to_path_buf()
    } else {
        out.join(format!("job_{:03}_eps{}_seed{}", job.index, job.epsilon, job.seed))
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub metrics_path: PathBuf,
    pub jobs: usize,
    pub records: usize,
}

/// Runs every job on a pool of `threads` workers and reduces their metrics
/// into `<output_dir>/metrics.csv`; also writes `config-echo.json`.
pub fn run(cfg: &ExperimentConfig, threads: usize) -> Result<RunSummary> {
    let out = PathBuf::from(&cfg.output_dir);
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    output::write_file(&out.join("config-echo.json"), cfg.to_json_pretty().as_bytes())?;
    let stale = output::staging_dir(&out);
    if stale.exists() {
        std::fs::remove_dir_all(&stale).map_err(|e| CliError::io(&stale, e))?;
    }
    let jobs = plan(cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("jobs: {e}")))?;
    let counts: Vec<Result<usize>> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let dir = job_dir(&out, job, jobs.len());
                let mut records = run_job(cfg, job, &dir).map_err(|e| match e {
                    CliError::Core(source) => CliError::Job {
                        context: format!("{} job eps={} seed={}", cfg.kind.name(), job.epsilon, job.seed),
                        source,
                    },
                    other => other,
                })?;
                for r in &mut records {
                    r.experiment_id = cfg.experiment_id.clone();
                }
                output::check_records(&records)?;
                output::write_staging(&out, job.index, &records)?;
                Ok(records.len())
            })
            .collect()
    });
    let mut total = 0;
    for c in counts {
        total += c?;
    }
    let metrics_path = output::reduce(&out, jobs.len())?;
    Ok(RunSummary { metrics_path, jobs: jobs.len(), records: total })
}

fn run_job(cfg: &ExperimentConfig, job: &Job, dir: &Path) -> Result<Vec<MetricsRecord>> {
    match cfg.kind {
        ExperimentKind::GenDomain => gen_domain(cfg, job, dir),
        ExperimentKind::SolveLinear => solve_linear_job(cfg, job, dir),
        ExperimentKind::Evolve => evolve(cfg, job, dir),
        ExperimentKind::Corrector => corrector(cfg, job, dir),
        ExperimentKind::Homogenize => homogenize(cfg, job, dir),
        ExperimentKind::ConvergeLinear => {
            Ok(linear_homogenization_experiment(&job.model(cfg), &[job.epsilon], cfg.rhs, &cfg.grid, &cfg.solver)?)
        }
        ExperimentKind::ConvergeHeleshaw => Ok(heleshaw_convergence_experiment(
            &job.model(cfg),
            &[job.epsilon],
            &cfg.d0,
            &cfg.grid,
            &cfg.evolution_params(),
            &cfg.solver,
        )?),
        ExperimentKind::Green => green(cfg, job),
        ExperimentKind::Capacity => capacity(cfg, job),
        ExperimentKind::Probe => probe(cfg, job),
    }
}

fn mask_for(cfg: &ExperimentConfig, job: &Job) -> Result<DomainMask> {
    Ok(generate_domain_with(&job.model(cfg), &cfg.grid, cfg.outer)?)
}

fn nearest_fluid(mask: &DomainMask, p: [f64; 2]) -> Result<(usize, usize)> {
    let g = mask.grid();
    let (i, j) = g.nearest_cell(p);
    if mask.is_fluid(g.index(i, j)) {
        return Ok((i, j));
    }
    let best = (0..g.len()).filter(|&c| mask.is_fluid(c)).min_by(|&a, &b| {
        let (pa, pb) = (g.center_of(a), g.center_of(b));
        let da = (pa[0] - p[0]).hypot(pa[1] - p[1]);
        let db = (pb[0] - p[0]).hypot(pb[1] - p[1]);
        da.total_cmp(&db).then(a.cmp(&b))
    });
    best.map(|c| g.coords(c)).ok_or_else(|| CliError::Core(perchs_core::Error::EmptyInput("mask has no fluid cells".into())))
}

fn gen_domain(cfg: &ExperimentConfig, job: &Job, dir: &Path) -> Result<Vec<MetricsRecord>> {
    let model = job.model(cfg);
    let mask = mask_for(cfg, job)?;
    output::write_file(&dir.join("mask.pgm"), &mask.to_pgm())?;
    let sep = verify_separation(&model, &grid_inclusions(&model, &cfg.grid));
    Ok(vec![
        job.record(0.0, "volume_fraction", volume_fraction(&mask)),
        job.record(0.0, "fluid_cells", mask.fluid_count() as f64),
        job.record(0.0, "components", mask.components().1 as f64),
        job.record(0.0, "inclusions", sep.inclusion_count as f64),
        job.record(0.0, "separation_ok", if sep.passes { 1.0 } else { 0.0 }),
    ])
}

fn solve_linear_job(cfg: &ExperimentConfig, job: &Job, dir: &Path) -> Result<Vec<MetricsRecord>> {
    let mask = mask_for(cfg, job)?;
    let op = Operator::new(&mask, cfg.tensor.as_ref())?;
    let b = op.to_dofs(&ScalarField::constant_on(&mask, cfg.rhs))?;
    let mut x = vec![0.0; op.n()];
    let stats = solve_linear(&op, &b, &mut x, &cfg.solver)?;
    let u = op.to_field(&x);
    output::write_file(&dir.join("solution.csv"), u.to_csv().as_bytes())?;
    output::write_file(&dir.join("solution.pgm"), &u.to_pgm())?;
    let h2 = cfg.grid.h * cfg.grid.h;
    let l2 = (x.iter().map(|v| v * v).sum::<f64>() * h2).sqrt();
    Ok(vec![
        job.record(0.0, "max_u", u.max()),
        job.record(0.0, "l2_norm", l2),
        job.record(0.0, "iterations", stats.iterations as f64),
        job.record(0.0, "relative_residual", stats.relative_residual),
    ])
}

fn region_center(d0: &RegionDescriptor) -> [f64; 2] {
    match d0 {
        RegionDescriptor::Disc { center, .. } | RegionDescriptor::Ellipse { center, .. } => *center,
        RegionDescriptor::Polygon { vertices } => {
            let n = vertices.len() as f64;
            let s = vertices.iter().fold([0.0, 0.0], |a, v| [a[0] + v[0], a[1] + v[1]]);
            [s[0] / n, s[1] / n]
        }
    }
}

fn trajectory_csv(traj: &Trajectory) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &traj.rows {
        w.serialize(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn write_snapshots(dir: &Path, states: &[ObstacleState]) -> Result<()> {
    for s in states {
        output::write_file(&dir.join(format!("state_{:06}.pgm", s.step)), &s.p.to_pgm())?;
    }
    Ok(())
}

fn evolve(cfg: &ExperimentConfig, job: &Job, dir: &Path) -> Result<Vec<MetricsRecord>> {
    let mask = mask_for(cfg, job)?;
    let tensor = cfg.tensor.as_ref();
    let traj = run_evolution(&mask, init_state(&mask, &cfg.d0)?, tensor, &cfg.evolution_params())?;
    output::write_file(&dir.join("trajectory.csv"), &trajectory_csv(&traj))?;
    if cfg.snapshot_every > 0 {
        write_snapshots(dir, &traj.snapshots)?;
    }
    let mut out = Vec::new();
    for (k, r) in traj.rows.iter().enumerate() {
        out.push(job.record(r.t, "area", r.area));
        out.push(job.record(r.t, "area_ratio", r.area_ratio));
        out.push(job.record(r.t, "max_p", r.max_p));
        out.push(job.record(r.t, "fb_cell_count", r.fb_cell_count as f64));
        if k == 0 {
            continue;
        }
        let s = &traj.steps[k - 1];
        out.push(job.record(r.t, "monotonicity_violations", r.monotonicity_violations as f64));
        out.push(job.record(r.t, "lipschitz_ratio", r.lipschitz_ratio));
        out.push(job.record(r.t, "containment_radius", r.containment_radius));
        out.push(job.record(r.t, "inner_iterations", r.inner_iterations as f64));
        out.push(job.record(r.t, "inner_max_decrease", r.inner_max_decrease));
        out.push(job.record(r.t, "fell_back", if s.fell_back { 1.0 } else { 0.0 }));
    }
    if let Some(star) = &cfg.star_check {
        for s in &traj.snapshots {
            let rep = star_shape_check(s, &mask, star.center, star.radius);
            out.push(job.record(s.t, "star_violations", rep.violations as f64));
            out.push(job.record(s.t, "star_layer_violations", rep.boundary_layer_violations as f64));
        }
    }
    let last = traj.final_state();
    let g = mask.grid();
    let c = nearest_fluid(&mask, region_center(&cfg.d0))?;
    out.push(job.record(last.t, "radius", (last.area(g) / std::f64::consts::PI).sqrt()));
    out.push(job.record(last.t, "p_center", last.p.or_zero(g.index(c.0, c.1))));
    if let Some(prev) = &traj.previous {
        let u = recover_u(last, &mask, &cfg.solver, tensor)?;
        out.push(job.record(last.t, "u_center", u.or_zero(g.index(c.0, c.1))));
        out.push(job.record(last.t, "pressure_recovery_error", pressure_recovery_error(prev, last, &mask, &cfg.solver, tensor)?));
    }
    Ok(out)
}

fn cell_resolution(cfg: &ExperimentConfig, job: &Job) -> Result<usize> {
    match cfg.cells_per_period {
        Some(n) => Ok(n),
        None => Ok(cells_per_period(job.epsilon, cfg.grid.h)?),
    }
}

fn corrector(cfg: &ExperimentConfig, job: &Job, dir: &Path) -> Result<Vec<MetricsRecord>> {
    let model = job.model(cfg);
    let periods = if is_periodic_model(&model) { 1 } else { SUPERCELL_PERIODS };
    let mask = periodic_cell(&model, periods, cell_resolution(cfg, job)?)?;
    let sol = solve_corrector(&mask, cfg.xi, &cfg.solver)?;
    output::write_file(&dir.join("chi.csv"), sol.chi.to_csv().as_bytes())?;
    output::write_file(&dir.join("chi.pgm"), &sol.chi.to_pgm())?;
    Ok(vec![
        job.record(0.0, "flux_avg_x", sol.flux_avg[0]),
        job.record(0.0, "flux_avg_y", sol.flux_avg[1]),
        job.record(0.0, "relative_residual", sol.residual),
        job.record(0.0, "mu", volume_fraction(&mask)),
    ])
}

fn homogenize(cfg: &ExperimentConfig, job: &Job, dir: &Path) -> Result<Vec<MetricsRecord>> {
    let rec = model_tensor(&job.model(cfg), cell_resolution(cfg, job)?, &cfg.seeds, &cfg.solver)?;
    let json = serde_json::to_string_pretty(&rec).expect("tensor record serializes");
    output::write_file(&dir.join("tensor.json"), json.as_bytes())?;
    let [lo, hi] = rec.tensor().eigenvalues();
    Ok(vec![
        job.record(0.0, "a11", rec.a11),
        job.record(0.0, "a12", rec.a12),
        job.record(0.0, "a22", rec.a22),
        job.record(0.0, "mu", rec.mu),
        job.record(0.0, "asymmetry", rec.asymmetry),
        job.record(0.0, "lambda_min", lo),
        job.record(0.0, "lambda_max", hi),
    ])
}

fn green(cfg: &ExperimentConfig, job: &Job) -> Result<Vec<MetricsRecord>> {
    let mask = mask_for(cfg, job)?;
    let gc = &cfg.green;
    let y = nearest_fluid(&mask, gc.pole)?;
    let mut out = Vec::new();
    let rows = green_bounds_check(&mask, y, &gc.radii, gc.outer_radius, &cfg.solver)?;
    for r in &rows {
        out.push(job.record(0.0, &format!("green_ratio_min_r{}", r.r), r.ratio_min));
        out.push(job.record(0.0, &format!("green_ratio_max_r{}", r.r), r.ratio_max));
        out.push(job.record(0.0, &format!("inverse_capacity_r{}", r.r), r.inverse_capacity));
        out.push(job.record(0.0, &format!("sandwich_r{}", r.r), if r.sandwich { 1.0 } else { 0.0 }));
    }
    if !rows.is_empty() {
        let lo = rows.iter().map(|r| r.ratio_min).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(|r| r.ratio_max).fold(f64::NEG_INFINITY, f64::max);
        out.push(job.record(0.0, "green_ratio_min", lo));
        out.push(job.record(0.0, "green_ratio_max", hi));
    }
    if !gc.levels.is_empty() {
        let g = mask.grid();
        let disc = mask.with_outer(OuterBoundary::Dirichlet).with_dirichlet_outside_disc(g.center(y.0, y.1), gc.outer_radius);
        for l in level_set_capacity_check(&disc, y, &gc.levels, &cfg.solver)? {
            out.push(job.record(0.0, &format!("level_capacity_a{}", l.a), l.capacity));
            out.push(job.record(0.0, &format!("level_product_a{}", l.a), l.product));
        }
    }
    Ok(out)
}

fn capacity(cfg: &ExperimentConfig, job: &Job) -> Result<Vec<MetricsRecord>> {
    let c = &cfg.capacity;
    let mask = mask_for(cfg, job)?;
    let full = DomainMask::all_fluid(cfg.grid, OuterBoundary::Neumann)?;
    let perforated = ball_capacity(&mask, c.center, c.radius, c.outer_radius, &cfg.solver)?;
    let reference = ball_capacity(&full, c.center, c.radius, c.outer_radius, &cfg.solver)?;
    Ok(vec![
        job.record(0.0, "capacity", perforated.value),
        job.record(0.0, "all_fluid_capacity", reference.value),
        job.record(0.0, "capacity_ratio", perforated.value / reference.value),
    ])
}

fn probe(cfg: &ExperimentConfig, job: &Job) -> Result<Vec<MetricsRecord>> {
    let p = &cfg.probe;
    let mask = mask_for(cfg, job)?;
    let mut out = Vec::new();
    match p.kind {
        ProbeKind::Harnack => {
            let center = nearest_fluid(&mask, p.center)?;
            for (r, q) in p.radii.iter().zip(harnack_probe(&mask, center, &p.radii, p.data, &cfg.solver)?) {
                out.push(job.record(0.0, &format!("harnack_quotient_r{r}"), q));
            }
        }
        ProbeKind::Holder => {
            let center = nearest_fluid(&mask, p.center)?;
            for &r in &p.radii {
                for (k, ratio) in holder_probe(&mask, center, r, p.data, &cfg.solver)?.into_iter().enumerate() {
                    if let Some(x) = ratio {
                        out.push(job.record(0.0, &format!("holder_ratio_r{r}_k{}", k + 1), x));
                    }
                }
            }
        }
        ProbeKind::Nondegeneracy => {
            let traj = run_evolution(&mask, init_state(&mask, &cfg.d0)?, cfg.tensor.as_ref(), &cfg.evolution_params())?;
            let last = traj.final_state();
            let rep = nondegeneracy_probe(last, &mask, &p.radii, p.max_samples)?;
            out.push(job.record(last.t, "nondeg_slope", rep.slope));
            out.push(job.record(last.t, "nondeg_slope_min", rep.slope_min));
            out.push(job.record(last.t, "nondeg_slope_max", rep.slope_max));
            out.push(job.record(last.t, "nondeg_coefficient", rep.coefficient));
            out.push(job.record(last.t, "nondeg_samples", rep.samples as f64));
        }
    }
    Ok(out)
}

//! Experiment configuration: JSON file, defaults, and `--set` overrides.

use std::path::Path;

use perchs_core::elliptic::{BoundaryData, SolverConfig};
use perchs_core::evolution::{EvolutionParams, RegionDescriptor, StepMode, DEFAULT_INNER_MAX};
use perchs_core::geometry::{GridSpec, OuterBoundary, PerforationKind, PerforationModel};
use perchs_core::homogenization::EffectiveTensor;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    GenDomain,
    SolveLinear,
    Evolve,
    Corrector,
    Homogenize,
    ConvergeLinear,
    ConvergeHeleshaw,
    Green,
    Capacity,
    Probe,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::GenDomain => "gen-domain",
            ExperimentKind::SolveLinear => "solve-linear",
            ExperimentKind::Evolve => "evolve",
            ExperimentKind::Corrector => "corrector",
            ExperimentKind::Homogenize => "homogenize",
            ExperimentKind::ConvergeLinear => "converge-linear",
            ExperimentKind::ConvergeHeleshaw => "converge-heleshaw",
            ExperimentKind::Green => "green",
            ExperimentKind::Capacity => "capacity",
            ExperimentKind::Probe => "probe",
        }
    }

    fn is_convergence(&self) -> bool {
        matches!(self, ExperimentKind::ConvergeLinear | ExperimentKind::ConvergeHeleshaw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Harnack,
    Holder,
    /// Quadratic growth at the free boundary after an evolution run.
    Nondegeneracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub kind: ProbeKind,
    pub center: [f64; 2],
    pub radii: Vec<f64>,
    pub data: BoundaryData,
    pub max_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenConfig {
    pub pole: [f64; 2],
    pub radii: Vec<f64>,
    pub outer_radius: f64,
    pub levels: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityConfig {
    pub center: [f64; 2],
    pub radius: f64,
    pub outer_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StarCheck {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Defaults to the kind name.
    pub experiment_id: String,
    pub model: PerforationModel,
    pub grid: GridSpec,
    pub outer: OuterBoundary,
    /// Periods to sweep; empty means the model's own period.
    pub eps_list: Vec<f64>,
    /// Seeds to replicate over; empty means the model's own seed.
    pub seeds: Vec<u64>,
    pub d0: RegionDescriptor,
    pub t_final: f64,
    pub dt: f64,
    pub mode: StepMode,
    pub inner_max: usize,
    pub solver: SolverConfig,
    /// Effective tensor for `evolve` and `solve-linear` (none means the Laplacian).
    pub tensor: Option<EffectiveTensor>,
    /// Constant source for the linear problems.
    pub rhs: f64,
    /// Cell-problem resolution; none derives it from the period and `grid.h`.
    pub cells_per_period: Option<usize>,
    /// Macroscopic slope for `corrector`.
    pub xi: [f64; 2],
    pub probe: ProbeConfig,
    pub green: GreenConfig,
    pub capacity: CapacityConfig,
    pub star_check: Option<StarCheck>,
    pub output_dir: String,
    pub snapshot_every: usize,
}

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        ExperimentConfig {
            kind,
            experiment_id: String::new(),
            model: PerforationModel::none(),
            grid: GridSpec { nx: 128, ny: 128, h: 1.0 / 64.0, origin: [-1.0, -1.0] },
            outer: OuterBoundary::Dirichlet,
            eps_list: Vec::new(),
            seeds: Vec::new(),
            d0: RegionDescriptor::disc([0.0, 0.0], 0.5),
            t_final: 1.0,
            dt: 1.0 / 64.0,
            mode: StepMode::Explicit,
            inner_max: DEFAULT_INNER_MAX,
            solver: SolverConfig::default(),
            tensor: None,
            rhs: 1.0,
            cells_per_period: None,
            xi: [1.0, 0.0],
            probe: ProbeConfig {
                kind: ProbeKind::Harnack,
                center: [0.0, 0.0],
                radii: vec![0.25],
                data: BoundaryData::HalfPlanes { upper: 1.0, lower: 0.1 },
                max_samples: 32,
            },
            green: GreenConfig { pole: [0.0, 0.0], radii: vec![0.0625, 0.125, 0.25], outer_radius: 0.9, levels: vec![0.1, 0.2, 0.3] },
            capacity: CapacityConfig { center: [0.0, 0.0], radius: 0.25, outer_radius: 0.9 },
            star_check: None,
            output_dir: "out".into(),
            snapshot_every: 0,
        }
    }

    /// Reads `path`, layers it over the defaults for `kind`, applies the
    /// `key=value` overrides and validates the result.
    pub fn load(kind: ExperimentKind, path: &Path, sets: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config("--config", format!("{}: {e}", path.display())))?;
        let file: Value = serde_json::from_str(&text).map_err(|e| CliError::config("--config", format!("invalid JSON: {e}")))?;
        Self::from_value(kind, file, sets)
    }

    pub fn from_value(kind: ExperimentKind, file: Value, sets: &[String]) -> Result<Self> {
        if !file.is_object() {
            return Err(CliError::config("--config", "top level must be an object"));
        }
        let mut v = serde_json::to_value(Self::defaults(kind)).expect("defaults serialize");
        merge(&mut v, file, "");
        for s in sets {
            apply_set(&mut v, s)?;
        }
        // the command line kind wins over the file
        v["kind"] = Value::String(kind.name().into());
        let mut cfg: ExperimentConfig = serde_json::from_value(v).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.experiment_id.is_empty() {
            cfg.experiment_id = kind.name().into();
        }
        if cfg.seeds.is_empty() {
            cfg.seeds = vec![cfg.model.seed];
        }
        if cfg.eps_list.is_empty() && !kind.is_convergence() {
            cfg.eps_list = vec![cfg.model.period];
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate().map_err(|e| CliError::config("grid", e))?;
        self.model.validate().map_err(|e| CliError::config("model", e))?;
        self.solver.validate().map_err(|e| CliError::config("solver", e))?;
        if self.kind.is_convergence() && self.eps_list.is_empty() {
            return Err(CliError::config("eps_list", format!("must be nonempty for {}", self.kind.name())));
        }
        if let Some(e) = self.eps_list.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return Err(CliError::config("eps_list", format!("entries must be positive, got {e}")));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(CliError::config("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(CliError::config("t_final", format!("must be nonnegative, got {}", self.t_final)));
        }
        if self.inner_max < 1 {
            return Err(CliError::config("inner_max", "must be at least 1"));
        }
        if let Some(t) = &self.tensor {
            t.validate().map_err(|e| CliError::config("tensor", e))?;
        }
        if let Some(n) = self.cells_per_period {
            if n < 4 {
                return Err(CliError::config("cells_per_period", format!("must be at least 4, got {n}")));
            }
        }
        if !self.rhs.is_finite() {
            return Err(CliError::config("rhs", "must be finite"));
        }
        if let RegionDescriptor::Polygon { vertices } = &self.d0 {
            if vertices.len() < 3 {
                return Err(CliError::config("d0", "polygon needs at least 3 vertices"));
            }
        }
        match self.kind {
            ExperimentKind::Probe => {
                if self.probe.radii.is_empty() || self.probe.radii.iter().any(|r| !(*r > 0.0)) {
                    return Err(CliError::config("probe.radii", "must be a nonempty list of positive radii"));
                }
                if self.probe.max_samples < 1 {
                    return Err(CliError::config("probe.max_samples", "must be at least 1"));
                }
            }
            ExperimentKind::Green => {
                if !(self.green.outer_radius > 0.0) {
                    return Err(CliError::config("green.outer_radius", "must be positive"));
                }
                if self.green.radii.iter().any(|r| !(*r > 0.0 && *r < self.green.outer_radius)) {
                    return Err(CliError::config("green.radii", "must lie in (0, outer_radius)"));
                }
                if self.green.levels.iter().any(|a| !(*a > 0.0)) {
                    return Err(CliError::config("green.levels", "must be positive"));
                }
            }
            ExperimentKind::Capacity => {
                let c = &self.capacity;
                if !(c.radius > 0.0 && c.radius < c.outer_radius) {
                    return Err(CliError::config("capacity.radius", "must lie in (0, outer_radius)"));
                }
            }
            ExperimentKind::Corrector | ExperimentKind::Homogenize if self.model.kind == PerforationKind::TriangularSite => {
                return Err(CliError::config("model.kind", "cell problems need a square-lattice model"));
            }
            _ => {}
        }
        if let Some(s) = &self.star_check {
            if !(s.radius >= 0.0) {
                return Err(CliError::config("star_check.radius", "must be nonnegative"));
            }
        }
        Ok(())
    }

    pub fn evolution_params(&self) -> EvolutionParams {
        EvolutionParams {
            t_final: self.t_final,
            dt: self.dt,
            mode: self.mode,
            inner_max: self.inner_max,
            solver: self.solver,
            snapshot_every: self.snapshot_every,
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Keys whose values are tagged unions and are replaced rather than merged.
const REPLACE: &[&str] = &["d0", "probe.data", "tensor", "star_check"];

fn merge(base: &mut Value, over: Value, path: &str) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) if !REPLACE.contains(&path) => {
            for (k, v) in o {
                let sub = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &sub),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Applies one `a.b.c=value` override; the value is parsed as JSON and
/// taken as a string when that fails.
fn apply_set(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::config("--set", format!("expected key=value, got {assignment:?}")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(CliError::config("--set", "empty key"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (n, part) in parts.iter().enumerate() {
        let last = n + 1 == parts.len();
        match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                cur = map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
                if cur.is_null() {
                    *cur = Value::Object(Default::default());
                }
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| CliError::config(key, format!("{part:?} is not an array index")))?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| CliError::config(key, format!("index {idx} out of range (len {len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                cur = slot;
            }
            _ => return Err(CliError::config(key, format!("cannot descend into {part:?}"))),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn defaults_fill_missing_fields() {
        let c = ExperimentConfig::from_value(ExperimentKind::Evolve, json!({}), &[]).unwrap();
        assert_eq!(c.experiment_id, "evolve");
        assert_eq!(c.seeds, vec![0]);
        assert_eq!(c.eps_list, vec![c.model.period]);
        assert_eq!(c.solver, SolverConfig::default());
    }

    #[test]
    fn nested_sets_override_the_file() {
        let c = ExperimentConfig::from_value(
            ExperimentKind::Evolve,
            json!({"model": {"kind": "square_site", "period": 0.25}, "dt": 0.1}),
            &["model.period=0.125".into(), "solver.method=sor".into(), "dt=0.05".into(), "eps_list=[0.5,0.25]".into()],
        )
        .unwrap();
        assert_eq!(c.model.kind, PerforationKind::SquareSite);
        assert_eq!(c.model.period, 0.125);
        assert_eq!(c.solver.method, perchs_core::elliptic::SolverMethod::Sor);
        assert_eq!(c.dt, 0.05);
        assert_eq!(c.eps_list, vec![0.5, 0.25]);
    }

    #[test]
    fn tagged_sections_are_replaced() {
        let c = ExperimentConfig::from_value(
            ExperimentKind::Evolve,
            json!({"d0": {"shape": "ellipse", "center": [0, 0], "semi_axes": [0.5, 0.25]}}),
            &["d0.center.0=0.1".into()],
        )
        .unwrap();
        assert_eq!(c.d0, RegionDescriptor::Ellipse { center: [0.1, 0.0], semi_axes: [0.5, 0.25] });
    }

    #[test]
    fn errors_name_the_field() {
        let e = ExperimentConfig::from_value(ExperimentKind::Evolve, json!({"dt": -1.0}), &[]).unwrap_err();
        assert!(e.to_string().contains("dt"), "{e}");
        let e = ExperimentConfig::from_value(ExperimentKind::ConvergeLinear, json!({}), &[]).unwrap_err();
        assert!(e.to_string().contains("eps_list"), "{e}");
        let e = ExperimentConfig::from_value(ExperimentKind::Evolve, json!({"bogus": 1}), &[]).unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        let e = ExperimentConfig::from_value(ExperimentKind::Evolve, json!({}), &["model.inclusion_scale".into()]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn echo_round_trips() {
        let c = ExperimentConfig::from_value(
            ExperimentKind::Green,
            json!({"model": {"kind": "square_site"}, "seeds": [3, 4]}),
            &["green.outer_radius=0.8".into()],
        )
        .unwrap();
        let echoed: Value = serde_json::from_str(&c.to_json_pretty()).unwrap();
        assert_eq!(ExperimentConfig::from_value(ExperimentKind::Green, echoed, &[]).unwrap(), c);
    }
}

//! Config-driven experiments.
//!
//! A config is a TOML document with top-level run settings and `[schedule]`,
//! `[problem]` and optional `[graph]` sections:
//!
//! ```toml
//! mode = "central"          # or "distributed"
//! geometry = "entropy"      # or "euclidean"
//! iters = 100000
//! monitor = true
//! decimation = "auto"       # or a stride such as 10
//! trace = "fig1a_entropy.csv"
//! init_seed = 1001
//!
//! [schedule]
//! kind = "harmonic"         # harmonic | sqrt | custom
//! a = 0.2
//!
//! [problem]
//! rows = 100
//! dim = 10
//! seed = 1
//! reference = "descent"     # grid | descent | none
//!
//! [graph]
//! nodes = 100
//! edges = 939
//! seed = 1
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{MirrorMap, Point};
use crate::network::{generate_graph, metropolis_weights, Graph, MixingMatrix};
use crate::problems::{random_start, reference_optimum, ProblemInstance, ReferenceOptimum};
use crate::solver_central::{run_md, Decimation, RunOptions, StepSchedule};
use crate::solver_dist::{run_dmd, Assignment, DistOptions};

/// Overrides the directory of the trace file named in a config.
pub const TRACE_DIR_ENV: &str = "MIRROR_DESCENT_TRACE_DIR";

/// Iteration budget of each run used by [`estimate_reference`].
pub const DESCENT_REFERENCE_ITERS: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Central,
    Distributed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    Euclidean,
    Entropy,
}

impl From<Geometry> for MirrorMap {
    fn from(g: Geometry) -> Self {
        match g {
            Geometry::Euclidean => MirrorMap::Euclidean,
            Geometry::Entropy => MirrorMap::NegativeEntropy,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Harmonic,
    Sqrt,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<StepSchedule> {
        let scale = || {
            self.a
                .ok_or_else(|| Error::Config("schedule.a: required for harmonic and sqrt schedules".into()))
        };
        Ok(match self.kind {
            ScheduleKind::Harmonic => StepSchedule::Harmonic { a: scale()? },
            ScheduleKind::Sqrt => StepSchedule::SqrtDecay { a: scale()? },
            ScheduleKind::Custom => StepSchedule::Custom(
                self.values
                    .clone()
                    .ok_or_else(|| Error::Config("schedule.values: required for custom schedules".into()))?,
            ),
        })
    }
}

/// Where the reference optimum used for `f_gap` comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceSource {
    /// Grid oracle; `d <= 4` only.
    Grid,
    /// Best point seen by long centralized runs of both geometries.
    #[default]
    Descent,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub reference: ReferenceSource,
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
}

fn default_grid_step() -> f64 {
    1e-3
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssignmentKind {
    /// One data row per agent.
    #[default]
    Rows,
    /// Contiguous row blocks, for fewer agents than rows.
    Blocks,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub assignment: AssignmentKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DecimationConfig {
    Stride(usize),
    Named(AutoTag),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

impl Default for DecimationConfig {
    fn default() -> Self {
        DecimationConfig::Named(AutoTag::Auto)
    }
}

impl From<DecimationConfig> for Decimation {
    fn from(d: DecimationConfig) -> Self {
        match d {
            DecimationConfig::Named(AutoTag::Auto) => Decimation::Auto,
            DecimationConfig::Stride(s) => Decimation::Every(s),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub geometry: Geometry,
    pub iters: usize,
    #[serde(default)]
    pub monitor: bool,
    #[serde(default)]
    pub decimation: DecimationConfig,
    pub trace: PathBuf,
    /// Seed of the uniformly random starting point shared by all agents.
    #[serde(default)]
    pub init_seed: u64,
    #[serde(default)]
    pub parallel: bool,
    pub schedule: ScheduleConfig,
    pub problem: ProblemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphConfig>,
}

impl ExperimentConfig {
    /// Parses and validates a config. Relative file paths are resolved against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::Config("config is empty".into()));
        }
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(base) = base {
            cfg.resolve_paths(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.parent())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.trace);
        if let Some(f) = self.problem.file.as_mut() {
            fix(f);
        }
        if let Some(f) = self.graph.as_mut().and_then(|g| g.file.as_mut()) {
            fix(f);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            return Err(Error::Config("iters: must be positive".into()));
        }
        self.schedule.build()?.validate(self.iters).map_err(|e| Error::Config(format!("schedule: {e}")))?;
        match (&self.problem.file, self.problem.rows, self.problem.dim) {
            (Some(f), _, _) => {
                if !f.exists() {
                    return Err(Error::Config(format!("problem.file: {} does not exist", f.display())));
                }
            }
            (None, Some(r), Some(d)) => {
                if r == 0 {
                    return Err(Error::Config("problem.rows: must be positive".into()));
                }
                if d < 2 {
                    return Err(Error::Config("problem.dim: must be at least 2".into()));
                }
            }
            _ => return Err(Error::Config("problem: give either `file` or both `rows` and `dim`".into())),
        }
        if self.problem.reference == ReferenceSource::Grid && self.problem.dim.is_some_and(|d| d > 4) {
            return Err(Error::Config("problem.reference: grid oracle needs dim <= 4".into()));
        }
        if self.mode == Mode::Distributed {
            let g = self
                .graph
                .as_ref()
                .ok_or_else(|| Error::Config("graph: distributed mode needs a [graph] section".into()))?;
            let nodes = match (&g.file, g.nodes, g.edges) {
                (Some(f), _, _) => {
                    if !f.exists() {
                        return Err(Error::Config(format!("graph.file: {} does not exist", f.display())));
                    }
                    None
                }
                (None, Some(n), Some(_)) => Some(n),
                _ => return Err(Error::Config("graph: give either `file` or both `nodes` and `edges`".into())),
            };
            if let (Some(n), Some(rows), AssignmentKind::Rows) = (nodes, self.problem.rows, g.assignment) {
                if n != rows {
                    return Err(Error::Config(format!(
                        "graph.nodes: {n} agents but {rows} problem rows; set assignment = \"blocks\""
                    )));
                }
            }
        }
        Ok(())
    }

    /// Trace location after applying [`TRACE_DIR_ENV`].
    pub fn trace_path(&self) -> PathBuf {
        match std::env::var_os(TRACE_DIR_ENV) {
            Some(dir) => Path::new(&dir).join(self.trace.file_name().unwrap_or(self.trace.as_os_str())),
            None => self.trace.clone(),
        }
    }

    pub fn build_problem(&self) -> Result<ProblemInstance> {
        match &self.problem.file {
            Some(f) => ProblemInstance::read_file(f),
            None => ProblemInstance::generate(
                self.problem.rows.unwrap_or_default(),
                self.problem.dim.unwrap_or_default(),
                self.problem.seed.unwrap_or_default(),
            ),
        }
    }

    pub fn build_graph(&self) -> Result<Option<Graph>> {
        let Some(g) = &self.graph else { return Ok(None) };
        Ok(Some(match &g.file {
            Some(f) => Graph::read_file(f)?,
            None => generate_graph(g.nodes.unwrap_or_default(), g.edges.unwrap_or_default(), g.seed.unwrap_or_default())?,
        }))
    }
}

/// Best point seen by centralized harmonic(0.2) runs of both geometries.
///
/// Not certified: `accuracy` is `NaN`.
pub fn estimate_reference(p: &ProblemInstance, x0: &Point, iters: usize) -> Result<ReferenceOptimum> {
    let sched = StepSchedule::harmonic(0.2);
    let mut best = (p.objective(x0), x0.clone());
    for map in [MirrorMap::Euclidean, MirrorMap::NegativeEntropy] {
        let mut x = map.admit(x0);
        for k in 0..iters {
            let f = p.objective(&x);
            if f < best.0 {
                best = (f, x.clone());
            }
            x = map.step(&x, &p.subgradient(&x), sched.alpha(k))?;
        }
        let f = p.objective(&x);
        if f < best.0 {
            best = (f, x);
        }
    }
    Ok(ReferenceOptimum { f_star: best.0, x_star: best.1, accuracy: f64::NAN })
}

/// Outcome of [`run_experiment`].
#[derive(Clone, Debug)]
pub struct ExitReport {
    pub trace_path: PathBuf,
    pub iterations: usize,
    pub initial_f: f64,
    pub final_f: f64,
    pub final_gap: f64,
    pub f_star: f64,
    pub consensus_error: Option<f64>,
    pub sigma2: Option<f64>,
    pub violations: usize,
}

impl ExitReport {
    pub fn success(&self) -> bool {
        self.violations == 0
    }
}

/// Builds the instance (and graph), runs the configured solver and writes the trace.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExitReport> {
    cfg.validate()?;
    let p = cfg.build_problem()?;
    let map = MirrorMap::from(cfg.geometry);
    let sched = cfg.schedule.build()?;
    let x0 = random_start(p.dim(), cfg.init_seed);
    let reference = match cfg.problem.reference {
        ReferenceSource::Grid => Some(reference_optimum(&p, cfg.problem.grid_step)?),
        ReferenceSource::Descent => Some(estimate_reference(&p, &x0, DESCENT_REFERENCE_ITERS.max(cfg.iters))?),
        ReferenceSource::None => None,
    };
    let trace_path = cfg.trace_path();
    if let Some(dir) = trace_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let f_star = reference.as_ref().map_or(f64::NAN, |r| r.f_star);
    let initial_f = p.objective(&x0);

    match cfg.mode {
        Mode::Central => {
            let opts = RunOptions { monitor: cfg.monitor, monitor_point: None, decimation: cfg.decimation.into() };
            let t = run_md(&p, map, &sched, &x0, cfg.iters, reference.as_ref(), &opts)?;
            std::fs::write(&trace_path, t.to_csv())?;
            Ok(ExitReport {
                trace_path,
                iterations: cfg.iters,
                initial_f,
                final_f: t.final_f,
                final_gap: t.final_gap,
                f_star,
                consensus_error: None,
                sigma2: None,
                violations: t.violations,
            })
        }
        Mode::Distributed => {
            let graph = cfg.build_graph()?.expect("validated: distributed mode has a graph");
            let a: MixingMatrix = metropolis_weights(&graph)?;
            let assignment = match cfg.graph.as_ref().map(|g| g.assignment).unwrap_or_default() {
                AssignmentKind::Rows => Assignment::OneRowPerAgent,
                AssignmentKind::Blocks => Assignment::contiguous(p.n_rows(), a.size())?,
            };
            let opts = DistOptions {
                monitor: cfg.monitor,
                parallel: cfg.parallel,
                decimation: cfg.decimation.into(),
                assignment,
            };
            let x0s = vec![x0; a.size()];
            let t = run_dmd(&p, map, &sched, &a, &x0s, cfg.iters, reference.as_ref(), &opts)?;
            std::fs::write(&trace_path, t.to_csv())?;
            Ok(ExitReport {
                trace_path,
                iterations: cfg.iters,
                initial_f,
                final_f: t.final_f_centroid,
                final_gap: t.final_gap,
                f_star,
                consensus_error: Some(t.final_consensus_error),
                sigma2: Some(a.sigma2()),
                violations: t.monitor_violations(),
            })
        }
    }
}

//! Error measurement, experiment configuration and the sweep driver that
//! writes CSV tables and grid files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fem1d::l2_norm_spacetime;
use crate::grid::{SpaceTimeField, SpatialMesh};
use crate::mpc::{run_mpc, MpcConfig, MpcRun, MpcVariant};
use crate::problem::ProblemSpec;
use crate::problems::ProblemDescriptor;

/// `L²(0,T; L²(0,1))` distance between a nodal field and the exact state
/// sampled on the same grid and mesh.
pub fn field_error(field: &SpaceTimeField, problem: &ProblemSpec) -> Result<f64> {
    if !problem.has_reference() {
        return Err(Error::NoReference);
    }
    let exact = SpaceTimeField::sample(field.grid().clone(), *field.mesh(), |t, x| {
        problem.exact_state(t, x).unwrap_or(0.0)
    });
    Ok(l2_norm_spacetime(&field.sub(&exact)?))
}

/// Closed-loop state error of a run.
pub fn compute_error(run: &MpcRun, problem: &ProblemSpec) -> Result<f64> {
    field_error(&run.closed_loop_y, problem)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    problem: RawProblem,
    mpc: RawMpc,
    #[serde(default)]
    mesh: RawMesh,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
struct RawProblem {
    name: String,
    #[serde(flatten)]
    parameters: BTreeMap<String, f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMpc {
    variants: Vec<String>,
    #[serde(default)]
    m: Vec<usize>,
    n: Vec<usize>,
    #[serde(default)]
    horizon_length: Vec<f64>,
    #[serde(default = "default_theta")]
    theta: f64,
    #[serde(default)]
    warm_start: bool,
}

fn default_theta() -> f64 {
    0.5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawMesh {
    coarse: usize,
    fine: usize,
}

impl Default for RawMesh {
    fn default() -> Self {
        Self {
            coarse: 5,
            fine: 100,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawOutput {
    dir: PathBuf,
    seed: u64,
}

impl Default for RawOutput {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("output"),
            seed: 0,
        }
    }
}

/// A sweep over variants and `(m, N)` or `(T̄, N)` combinations.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemDescriptor,
    pub variants: Vec<MpcVariant>,
    pub m_values: Vec<usize>,
    pub n_values: Vec<usize>,
    pub horizon_lengths: Vec<f64>,
    pub theta: f64,
    pub warm_start: bool,
    pub coarse_mesh: SpatialMesh,
    pub fine_mesh: SpatialMesh,
    pub output_dir: PathBuf,
    /// Reserved; every run is deterministic.
    pub seed: u64,
}

/// One point of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Combination {
    pub variant: MpcVariant,
    pub m: Option<usize>,
    pub n: usize,
    pub horizon_length: Option<f64>,
}

impl Combination {
    /// Directory name of the run inside the output directory.
    pub fn label(&self) -> String {
        match (self.m, self.horizon_length) {
            (Some(m), _) => format!("{}_m{}_N{}", self.variant, m, self.n),
            (None, Some(h)) => format!("{}_T{}_N{}", self.variant, h, self.n),
            (None, None) => format!("{}_N{}", self.variant, self.n),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text)?;
        let variants = raw
            .mpc
            .variants
            .iter()
            .map(|v| v.parse())
            .collect::<Result<Vec<MpcVariant>>>()?;
        let mut problem = ProblemDescriptor::new(raw.problem.name);
        problem.parameters = raw.problem.parameters;
        let config = Self {
            problem,
            variants,
            m_values: raw.mpc.m,
            n_values: raw.mpc.n,
            horizon_lengths: raw.mpc.horizon_length,
            theta: raw.mpc.theta,
            warm_start: raw.mpc.warm_start,
            coarse_mesh: SpatialMesh::new(raw.mesh.coarse)
                .map_err(|e| Error::InvalidConfig(e.to_string()))?,
            fine_mesh: SpatialMesh::new(raw.mesh.fine)
                .map_err(|e| Error::InvalidConfig(e.to_string()))?,
            output_dir: raw.output.dir,
            seed: raw.output.seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.variants.is_empty() {
            return bad("at least one variant is required");
        }
        if self.n_values.is_empty() {
            return bad("the N list is empty");
        }
        let offline_like = self.variants.iter().any(|v| !v.is_online());
        let online = self.variants.iter().any(|v| v.is_online());
        if offline_like && self.m_values.is_empty() {
            return bad("uniform and offline variants need a non-empty m list");
        }
        if online && self.horizon_lengths.is_empty() {
            return bad("online variants need a non-empty horizon_length list");
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return bad("theta must lie in (0, 1]");
        }
        self.problem.build()?;
        Ok(())
    }

    /// Every swept combination, in the order of the comparison table.
    pub fn combinations(&self) -> Vec<Combination> {
        let mut out = Vec::new();
        for &variant in &self.variants {
            for &n in &self.n_values {
                if variant.is_online() {
                    for &h in &self.horizon_lengths {
                        out.push(Combination {
                            variant,
                            m: None,
                            n,
                            horizon_length: Some(h),
                        });
                    }
                } else {
                    for &m in &self.m_values {
                        out.push(Combination {
                            variant,
                            m: Some(m),
                            n,
                            horizon_length: None,
                        });
                    }
                }
            }
        }
        sort_combinations(&mut out);
        out.dedup();
        out
    }

    pub fn mpc_config(&self, c: &Combination) -> MpcConfig {
        MpcConfig {
            variant: c.variant,
            m: c.m.unwrap_or(0),
            n: c.n,
            horizon_length: c.horizon_length,
            doerfler_theta: self.theta,
            coarse_mesh: self.coarse_mesh,
            fine_mesh: self.fine_mesh,
            warm_start: self.warm_start,
        }
    }
}

fn sort_combinations(list: &mut [Combination]) {
    list.sort_by(|a, b| {
        (a.variant, a.n, a.m)
            .cmp(&(b.variant, b.n, b.m))
            .then(a.horizon_length.unwrap_or(0.0).total_cmp(&b.horizon_length.unwrap_or(0.0)))
    });
}

/// One row of the summary and comparison tables.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub combination: Combination,
    pub l2_error_y: Option<f64>,
    pub tracking_cost: Option<f64>,
    pub control_cost: Option<f64>,
    pub total_wall_time: Option<f64>,
    /// `ok` or the failure message.
    pub status: String,
}

impl SummaryRow {
    fn from_run(combination: Combination, run: &MpcRun) -> Self {
        Self {
            combination,
            l2_error_y: run.l2_error_y,
            tracking_cost: Some(run.tracking_cost),
            control_cost: Some(run.control_cost),
            total_wall_time: Some(run.total_wall_time),
            status: "ok".into(),
        }
    }

    fn failed(combination: Combination, err: &Error) -> Self {
        Self {
            combination,
            l2_error_y: None,
            tracking_cost: None,
            control_cost: None,
            total_wall_time: None,
            status: format!("failed: {err}"),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn record(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let c = &self.combination;
        vec![
            c.variant.to_string(),
            c.m.map(|m| m.to_string()).unwrap_or_default(),
            c.n.to_string(),
            opt(c.horizon_length),
            opt(self.l2_error_y),
            opt(self.tracking_cost),
            opt(self.control_cost),
            self.total_wall_time.map(|t| format!("{t:.3}")).unwrap_or_default(),
        ]
    }
}

const SUMMARY_HEADER: [&str; 8] = [
    "variant",
    "m",
    "N",
    "horizon_length",
    "l2_error_y",
    "tracking_cost",
    "control_cost",
    "total_wall_time_s",
];

pub fn write_summary_csv(rows: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

/// Summary table plus a `status` column.
pub fn write_comparison_csv(rows: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = SUMMARY_HEADER.to_vec();
    header.push("status");
    w.write_record(header)?;
    for r in rows {
        let mut rec = r.record();
        rec.push(r.status.clone());
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the per-run files (`trajectory.csv`, `iterations.csv`,
/// `summary.csv`, `grid.txt`) into `dir`.
pub fn write_run(run: &MpcRun, row: &SummaryRow, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let files = [
        dir.join("trajectory.csv"),
        dir.join("iterations.csv"),
        dir.join("summary.csv"),
        dir.join("grid.txt"),
    ];
    run.write_trajectory_csv(&files[0])?;
    run.write_iterations_csv(&files[1])?;
    write_summary_csv(std::slice::from_ref(row), &files[2])?;
    run.grid().write(&files[3])?;
    Ok(files.to_vec())
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub rows: Vec<SummaryRow>,
    pub files: Vec<PathBuf>,
}

impl ExperimentOutcome {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_ok()).count()
    }
}

/// Runs every combination; failed runs are recorded, not propagated.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let problem = config.problem.build()?;
    fs::create_dir_all(&config.output_dir)?;
    let mut rows = Vec::new();
    let mut files = Vec::new();
    for c in config.combinations() {
        let result = run_mpc(&problem, &config.mpc_config(&c)).and_then(|run| {
            let row = SummaryRow::from_run(c, &run);
            let written = write_run(&run, &row, config.output_dir.join(c.label()))?;
            Ok((row, written))
        });
        match result {
            Ok((row, written)) => {
                rows.push(row);
                files.extend(written);
            }
            Err(e) => rows.push(SummaryRow::failed(c, &e)),
        }
    }
    let comparison = config.output_dir.join("comparison.csv");
    write_comparison_csv(&rows, &comparison)?;
    files.push(comparison);
    Ok(ExperimentOutcome { rows, files })
}

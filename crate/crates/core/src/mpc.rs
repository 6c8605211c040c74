//! Closed-loop drivers: equidistant, offline-adaptive and online-adaptive
//! model predictive control.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::estimator::{adapt_time_grid_with, AdaptOptions};
use crate::fem1d::l2_norm_spacetime_sq;
use crate::grid::{SpaceTimeField, SpatialMesh, TimeGrid};
use crate::openloop::{advance_state, solve_open_loop, OpenLoopSolution};
use crate::problem::ProblemSpec;
use crate::report::field_error;

/// Relative tolerance (times `T`) for snapping to the final time and for
/// the online stagnation guard.
pub const STEP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MpcVariant {
    /// `m` equal steps, horizons of `N` equal steps.
    Uniform,
    /// One estimator-driven master grid on `[0, T]`, extended past `T`.
    Offline,
    /// A new estimator-driven grid on every window `[t, t + T̄]`.
    Online,
    /// Online loop with equidistant windows of length `T̄`.
    OnlineUniform,
}

impl MpcVariant {
    pub const ALL: [MpcVariant; 4] = [
        MpcVariant::Uniform,
        MpcVariant::Offline,
        MpcVariant::Online,
        MpcVariant::OnlineUniform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MpcVariant::Uniform => "uniform",
            MpcVariant::Offline => "offline",
            MpcVariant::Online => "online",
            MpcVariant::OnlineUniform => "online-uniform",
        }
    }

    /// True for the variants driven by a window length rather than `m`.
    pub fn is_online(self) -> bool {
        matches!(self, MpcVariant::Online | MpcVariant::OnlineUniform)
    }
}

impl fmt::Display for MpcVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MpcVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MpcVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown variant {s:?} (expected uniform, offline, online or online-uniform)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig {
    pub variant: MpcVariant,
    /// Closed-loop steps (uniform and offline).
    pub m: usize,
    /// Time instances per prediction horizon.
    pub n: usize,
    /// Window length `T̄` (online variants).
    pub horizon_length: Option<f64>,
    pub doerfler_theta: f64,
    pub coarse_mesh: SpatialMesh,
    pub fine_mesh: SpatialMesh,
    pub warm_start: bool,
}

impl MpcConfig {
    pub fn new(variant: MpcVariant, m: usize, n: usize) -> Self {
        Self {
            variant,
            m,
            n,
            horizon_length: None,
            doerfler_theta: 0.5,
            coarse_mesh: SpatialMesh::new(5).expect("valid mesh"),
            fine_mesh: SpatialMesh::new(100).expect("valid mesh"),
            warm_start: false,
        }
    }

    pub fn online(variant: MpcVariant, horizon_length: f64, n: usize) -> Self {
        Self {
            horizon_length: Some(horizon_length),
            ..Self::new(variant, 0, n)
        }
    }

    pub fn validate(&self, problem: &ProblemSpec) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n < 2 {
            return bad(format!("N must be at least 2, got {}", self.n));
        }
        if !(self.doerfler_theta > 0.0 && self.doerfler_theta <= 1.0) {
            return bad(format!("theta must be in (0, 1], got {}", self.doerfler_theta));
        }
        if self.variant.is_online() {
            match self.horizon_length {
                Some(h) if h > 0.0 && h <= problem.t_end() => {}
                other => {
                    return bad(format!(
                        "horizon length must be in (0, {}], got {other:?}",
                        problem.t_end()
                    ))
                }
            }
        } else {
            if self.m < 1 {
                return bad("m must be at least 1".into());
            }
            if self.n > self.m + 1 {
                return bad(format!("N = {} exceeds m + 1 = {}", self.n, self.m + 1));
            }
        }
        Ok(())
    }
}

/// Bookkeeping of one closed-loop iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub index: usize,
    pub t_start: f64,
    /// End of the applied segment (equals the next `t_start`).
    pub t_applied: f64,
    pub horizon_length: f64,
    pub n_instances: usize,
    pub wall_time: f64,
    pub subproblem_cost: f64,
    pub grid: TimeGrid,
    pub initial_state: Vec<f64>,
    /// Subproblem control on the first interval, applied on `(t_start, t_applied]`.
    pub applied_control: Vec<f64>,
    pub terminal_state: Vec<f64>,
}

/// Result of one closed-loop simulation.
#[derive(Debug, Clone)]
pub struct MpcRun {
    pub config: MpcConfig,
    pub closed_loop_y: SpaceTimeField,
    /// Row `i + 1` holds the control applied on `(t_i, t_{i+1}]`; row 0
    /// repeats row 1.
    pub feedback_u: SpaceTimeField,
    pub iterations: Vec<IterationRecord>,
    /// Grid construction before the loop (offline adaptation).
    pub setup_wall_time: f64,
    pub total_wall_time: f64,
    pub l2_error_y: Option<f64>,
    pub tracking_cost: f64,
    pub control_cost: f64,
}

impl MpcRun {
    pub fn per_iteration_grids(&self) -> Vec<&TimeGrid> {
        self.iterations.iter().map(|r| &r.grid).collect()
    }

    pub fn per_iteration_wall_time(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.wall_time).collect()
    }

    /// Realized closed-loop grid.
    pub fn grid(&self) -> &TimeGrid {
        self.closed_loop_y.grid()
    }

    /// CSV with columns `t, x, y, u`.
    pub fn write_trajectory_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "x", "y", "u"])?;
        let mesh = *self.closed_loop_y.mesh();
        for (i, &t) in self.grid().instances().iter().enumerate() {
            for j in 0..mesh.n_nodes() {
                w.write_record([
                    t.to_string(),
                    mesh.node(j).to_string(),
                    self.closed_loop_y.get(i, j).to_string(),
                    self.feedback_u.get(i, j).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// CSV with columns `i, t_start, horizon_length, n_instances, wall_time_s,
    /// subproblem_cost`.
    pub fn write_iterations_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "i",
            "t_start",
            "horizon_length",
            "n_instances",
            "wall_time_s",
            "subproblem_cost",
        ])?;
        for r in &self.iterations {
            w.write_record([
                r.index.to_string(),
                r.t_start.to_string(),
                r.horizon_length.to_string(),
                r.n_instances.to_string(),
                format!("{:.3}", r.wall_time),
                r.subproblem_cost.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn run_mpc(problem: &ProblemSpec, config: &MpcConfig) -> Result<MpcRun> {
    match config.variant {
        MpcVariant::Uniform => run_mpc_uniform(problem, config),
        MpcVariant::Offline => run_mpc_offline(problem, config),
        MpcVariant::Online | MpcVariant::OnlineUniform => run_mpc_online(problem, config),
    }
}

fn expect_variant(config: &MpcConfig, allowed: &[MpcVariant]) -> Result<()> {
    if allowed.contains(&config.variant) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "driver does not handle variant {}",
            config.variant
        )))
    }
}

/// Algorithm with `Δt = T/m` and horizons `[t_i, t_i + (N-1)Δt]`.
pub fn run_mpc_uniform(problem: &ProblemSpec, config: &MpcConfig) -> Result<MpcRun> {
    expect_variant(config, &[MpcVariant::Uniform])?;
    config.validate(problem)?;
    let t_end = problem.t_end();
    let m = config.m;
    let master: Vec<f64> = (0..m + config.n)
        .map(|k| if k == m { t_end } else { t_end * k as f64 / m as f64 })
        .collect();
    run_on_master(problem, config, TimeGrid::new(master)?, 0.0)
}

/// Adapts `[0, T]` to `m + 1` instances on the coarse mesh, appends `N - 1`
/// instances at the last spacing, then runs the loop on that master grid.
pub fn run_mpc_offline(problem: &ProblemSpec, config: &MpcConfig) -> Result<MpcRun> {
    expect_variant(config, &[MpcVariant::Offline])?;
    config.validate(problem)?;
    let clock = Instant::now();
    let master = offline_master_grid(problem, config)?;
    let setup = clock.elapsed().as_secs_f64();
    run_on_master(problem, config, master, setup)
}

/// Master grid of the offline variant: `m + N` instances, `t_m = T`.
pub fn offline_master_grid(problem: &ProblemSpec, config: &MpcConfig) -> Result<TimeGrid> {
    let options = AdaptOptions {
        theta: config.doerfler_theta,
        ..AdaptOptions::default()
    };
    let base = adapt_time_grid_with(
        problem,
        (0.0, problem.t_end()),
        config.m + 1,
        &config.coarse_mesh,
        &options,
    )?;
    let mut t = base.instances().to_vec();
    let last_step = base.step(base.intervals() - 1);
    for k in 1..config.n {
        t.push(problem.t_end() + k as f64 * last_step);
    }
    TimeGrid::new(t)
}

fn run_on_master(
    problem: &ProblemSpec,
    config: &MpcConfig,
    master: TimeGrid,
    setup_wall_time: f64,
) -> Result<MpcRun> {
    let mesh = config.fine_mesh;
    let mut state = mesh.sample(|x| problem.initial_state(x));
    let mut records = Vec::with_capacity(config.m);
    for i in 0..config.m {
        let clock = Instant::now();
        let window = master.slice(i, i + config.n - 1)?;
        let record = (|| {
            let sol = solve_open_loop(problem, &window, &state, &mesh)?;
            apply_first_segment(problem, i, &sol, &state, window.instances()[1], clock)
        })()
        .map_err(|e| Error::Iteration {
            iteration: i,
            source: Box::new(e),
        })?;
        state = record.terminal_state.clone();
        records.push(record);
    }
    finish(problem, config, records, setup_wall_time)
}

fn apply_first_segment(
    problem: &ProblemSpec,
    index: usize,
    sol: &OpenLoopSolution,
    state: &[f64],
    t_applied: f64,
    clock: Instant,
) -> Result<IterationRecord> {
    let grid = &sol.grid;
    let mesh = *sol.y.mesh();
    let terminal = advance_state(
        problem,
        state,
        &sol.u,
        (grid.start(), t_applied),
        &mesh,
        1,
    )?;
    Ok(IterationRecord {
        index,
        t_start: grid.start(),
        t_applied,
        horizon_length: grid.end() - grid.start(),
        n_instances: grid.len(),
        wall_time: clock.elapsed().as_secs_f64(),
        subproblem_cost: sol.cost,
        grid: grid.clone(),
        initial_state: state.to_vec(),
        applied_control: sol.u.row(1).to_vec(),
        terminal_state: terminal,
    })
}

/// Online loop: each window `[t, t + T̄]` gets its own `N`-instance grid,
/// the first step is applied and the window moves to the end of that step.
pub fn run_mpc_online(problem: &ProblemSpec, config: &MpcConfig) -> Result<MpcRun> {
    expect_variant(config, &[MpcVariant::Online, MpcVariant::OnlineUniform])?;
    config.validate(problem)?;
    let t_end = problem.t_end();
    let window_len = config.horizon_length.expect("validated");
    let tol = STEP_TOL * t_end;
    let mesh = config.fine_mesh;
    let coarse = config.coarse_mesh;
    let mut state = mesh.sample(|x| problem.initial_state(x));
    let mut t0 = 0.0;
    let mut seed: Option<TimeGrid> = None;
    let mut records = Vec::new();

    while t0 < t_end {
        let i = records.len();
        let clock = Instant::now();
        let record = (|| {
            let span = (t0, t0 + window_len);
            let window = match config.variant {
                MpcVariant::Online => {
                    let options = AdaptOptions {
                        theta: config.doerfler_theta,
                        initial_state: Some(coarse.transfer_from(&mesh, &state)),
                        seed: seed.take(),
                        ..AdaptOptions::default()
                    };
                    adapt_time_grid_with(problem, span, config.n, &coarse, &options)?
                }
                _ => TimeGrid::uniform(span.0, span.1, config.n)?,
            };
            let mut t1 = window.instances()[1];
            if t1 - t0 < tol {
                return Err(Error::Stagnation { t: t0, step: t1 - t0 });
            }
            if t1 > t_end - tol {
                t1 = t_end;
            }
            let sol = solve_open_loop(problem, &window, &state, &mesh)?;
            apply_first_segment(problem, i, &sol, &state, t1, clock)
        })()
        .map_err(|e| Error::Iteration {
            iteration: i,
            source: Box::new(e),
        })?;
        if config.warm_start && config.variant == MpcVariant::Online {
            seed = warm_seed(&record.grid, record.t_applied, window_len);
        }
        t0 = record.t_applied;
        state = record.terminal_state.clone();
        records.push(record);
    }
    finish(problem, config, records, 0.0)
}

/// Seed for the next window `[t_next, t_next + T̄]`: the previous window
/// without its first instance, every other interior instance kept, closed
/// by the new end point.
pub fn warm_seed(previous: &TimeGrid, t_next: f64, window_len: f64) -> Option<TimeGrid> {
    let t_end = t_next + window_len;
    let inner: Vec<f64> = previous
        .instances()
        .iter()
        .copied()
        .filter(|&t| t > t_next && t < t_end)
        .collect();
    let mut t = vec![t_next];
    t.extend(inner.into_iter().step_by(2));
    t.push(t_end);
    TimeGrid::new(t).ok()
}

fn finish(
    problem: &ProblemSpec,
    config: &MpcConfig,
    records: Vec<IterationRecord>,
    setup_wall_time: f64,
) -> Result<MpcRun> {
    let mesh = config.fine_mesh;
    let mut times = vec![0.0];
    let mut y_rows = vec![mesh.sample(|x| problem.initial_state(x))];
    let mut u_rows = Vec::with_capacity(records.len() + 1);
    for r in &records {
        times.push(r.t_applied);
        y_rows.push(r.terminal_state.clone());
        if u_rows.is_empty() {
            u_rows.push(r.applied_control.clone());
        }
        u_rows.push(r.applied_control.clone());
    }
    let grid = TimeGrid::new(times)?;
    let closed_loop_y = SpaceTimeField::from_rows(grid.clone(), mesh, y_rows)?;
    let feedback_u = SpaceTimeField::from_rows(grid.clone(), mesh, u_rows)?;
    let desired = SpaceTimeField::sample(grid, mesh, |t, x| problem.desired_state(t, x));
    let tracking_cost = l2_norm_spacetime_sq(&closed_loop_y.sub(&desired)?);
    let control_cost = l2_norm_spacetime_sq(&feedback_u);
    let l2_error_y = field_error(&closed_loop_y, problem).ok();
    let total_wall_time = setup_wall_time + records.iter().map(|r| r.wall_time).sum::<f64>();
    Ok(MpcRun {
        config: config.clone(),
        closed_loop_y,
        feedback_u,
        iterations: records,
        setup_wall_time,
        total_wall_time,
        l2_error_y,
        tracking_cost,
        control_cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_test1, make_zero_problem};

    fn small(variant: MpcVariant, m: usize, n: usize) -> MpcConfig {
        MpcConfig {
            fine_mesh: SpatialMesh::new(10).unwrap(),
            ..MpcConfig::new(variant, m, n)
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in MpcVariant::ALL {
            assert_eq!(v.name().parse::<MpcVariant>().unwrap(), v);
        }
        assert!("sideways".parse::<MpcVariant>().is_err());
    }

    #[test]
    fn config_validation() {
        let p = make_test1(1e-3).unwrap();
        assert!(small(MpcVariant::Uniform, 4, 6).validate(&p).is_err());
        assert!(small(MpcVariant::Uniform, 4, 5).validate(&p).is_ok());
        assert!(small(MpcVariant::Uniform, 4, 1).validate(&p).is_err());
        assert!(small(MpcVariant::Online, 4, 3).validate(&p).is_err());
        let mut c = MpcConfig::online(MpcVariant::Online, 0.2, 5);
        assert!(c.validate(&p).is_ok());
        c.horizon_length = Some(1.5);
        assert!(c.validate(&p).is_err());
        c.horizon_length = Some(0.2);
        c.doerfler_theta = 0.0;
        assert!(c.validate(&p).is_err());
    }

    #[test]
    fn zero_problem_stays_at_rest() {
        let p = make_zero_problem();
        for v in [MpcVariant::Uniform, MpcVariant::Offline] {
            let run = run_mpc(&p, &small(v, 6, 3)).unwrap();
            assert_eq!(run.closed_loop_y.max_abs(), 0.0);
            assert_eq!(run.feedback_u.max_abs(), 0.0);
            assert_eq!(run.iterations.len(), 6);
            assert_eq!(run.grid(), &TimeGrid::uniform(0.0, 1.0, 7).unwrap());
            assert_eq!(run.l2_error_y, Some(0.0));
        }
    }

    #[test]
    fn zero_problem_online_steps_uniformly() {
        let p = make_zero_problem();
        for v in [MpcVariant::Online, MpcVariant::OnlineUniform] {
            let mut c = MpcConfig::online(v, 0.3, 5);
            c.fine_mesh = SpatialMesh::new(10).unwrap();
            let run = run_mpc(&p, &c).unwrap();
            // ⌈T (N-1) / T̄⌉ = ⌈13.33⌉
            assert_eq!(run.iterations.len(), 14);
            for r in &run.iterations[..13] {
                assert!((r.t_applied - r.t_start - 0.075).abs() < 1e-12);
            }
            assert_eq!(run.grid().end(), 1.0);
        }
    }

    #[test]
    fn full_horizon_first_segment_matches_open_loop() {
        let p = make_test1(1e-3).unwrap();
        let c = small(MpcVariant::Uniform, 4, 5);
        let run = run_mpc(&p, &c).unwrap();
        let grid = TimeGrid::uniform(0.0, 1.0, 5).unwrap();
        let y0 = c.fine_mesh.sample(|x| p.initial_state(x));
        let sol = solve_open_loop(&p, &grid, &y0, &c.fine_mesh).unwrap();
        assert_eq!(run.feedback_u.row(1), sol.u.row(1));
        for (a, b) in run.closed_loop_y.row(1).iter().zip(sol.y.row(1)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn iterations_chain_exactly() {
        let p = make_test1(1e-3).unwrap();
        let mut c = MpcConfig::online(MpcVariant::Online, 0.3, 5);
        c.fine_mesh = SpatialMesh::new(10).unwrap();
        c.warm_start = true;
        let run = run_mpc(&p, &c).unwrap();
        for w in run.iterations.windows(2) {
            assert_eq!(w[0].terminal_state, w[1].initial_state);
            assert_eq!(w[0].t_applied, w[1].t_start);
        }
        for (i, r) in run.iterations.iter().enumerate() {
            assert_eq!(run.feedback_u.row(i + 1), r.applied_control.as_slice());
            assert_eq!(r.grid.len(), 5);
        }
    }

    #[test]
    fn offline_master_grid_counts() {
        let p = make_test1(1e-3).unwrap();
        let c = small(MpcVariant::Offline, 12, 4);
        let g = offline_master_grid(&p, &c).unwrap();
        assert_eq!(g.len(), 12 + 4);
        assert_eq!(g.instances()[12], 1.0);
        assert!(g.end() > 1.0);
    }

    #[test]
    fn horizons_have_n_instances() {
        let p = make_test1(1e-3).unwrap();
        let run = run_mpc(&p, &small(MpcVariant::Uniform, 5, 3)).unwrap();
        for r in &run.iterations {
            assert_eq!(r.n_instances, 3);
            assert!((r.horizon_length - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let p = make_test1(1e-3).unwrap();
        let c = small(MpcVariant::Offline, 8, 3);
        let (a, b) = (run_mpc(&p, &c).unwrap(), run_mpc(&p, &c).unwrap());
        assert_eq!(a.closed_loop_y, b.closed_loop_y);
        assert_eq!(a.per_iteration_grids(), b.per_iteration_grids());
    }

    #[test]
    fn warm_seed_drops_first_instance() {
        let g = TimeGrid::new(vec![0.0, 0.1, 0.15, 0.2, 0.3, 0.4]).unwrap();
        let s = warm_seed(&g, 0.1, 0.4).unwrap();
        assert_eq!(s.instances(), &[0.1, 0.15, 0.3, 0.5]);
    }

    #[test]
    fn wrong_driver_is_rejected() {
        let p = make_test1(1e-3).unwrap();
        assert!(run_mpc_offline(&p, &small(MpcVariant::Uniform, 4, 3)).is_err());
    }
}

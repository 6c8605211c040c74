//! Temporal residual estimator, Dörfler marking, bisection and the adaptive
//! grid loop.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fem1d::{discrete_laplacian, mass_norm_sq};
use crate::grid::{SpatialMesh, TimeGrid, TIME_TOL};
use crate::problem::ProblemSpec;
use crate::quadrature::GAUSS2;
use crate::spacetime::{solve_mixed_from, LoadCache, MixedSolution};

/// Per-interval squared indicators `η_i²` on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorReport {
    pub grid: TimeGrid,
    pub eta_sq_per_interval: Vec<f64>,
    pub eta_sq_total: f64,
    /// Set when `μ > ν π²`; the estimate is then not backed by a bound.
    pub stability_warning: bool,
}

impl EstimatorReport {
    /// Interval with the largest indicator (lowest index on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.eta_sq_per_interval.iter().enumerate() {
            if v > self.eta_sq_per_interval[best] {
                best = i;
            }
        }
        best
    }

    /// CSV with columns `i, t_left, t_right, dt, eta_sq`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["i", "t_left", "t_right", "dt", "eta_sq"])?;
        let t = self.grid.instances();
        for (i, eta) in self.eta_sq_per_interval.iter().enumerate() {
            w.write_record([
                i.to_string(),
                t[i].to_string(),
                t[i + 1].to_string(),
                (t[i + 1] - t[i]).to_string(),
                eta.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `Δt² ∫_I ∫_Ω |r|²` from the nodal residuals at the two Gauss points.
fn interval_eta_sq(mesh: &SpatialMesh, dt: f64, residuals: &[Vec<f64>; 2]) -> f64 {
    let integral = 0.5 * dt * residuals.iter().map(|r| mass_norm_sq(mesh, r)).sum::<f64>();
    dt * dt * integral
}

/// Evaluates the strong residual of the mixed system, with `y` and `w` linear
/// in time on each interval, and returns the squared indicators.
pub fn estimate(solution: &MixedSolution) -> EstimatorReport {
    let problem = &solution.problem;
    let grid = solution.grid().clone();
    let mesh = *solution.mesh();
    let (nu, mu) = (problem.nu(), problem.mu());
    let reaction = 1.0 / problem.alpha() + mu * mu;
    let nodes = mesh.nodes();

    let lap_y: Vec<Vec<f64>> = solution.y.rows().map(|r| discrete_laplacian(r, &mesh)).collect();
    let lap_w: Vec<Vec<f64>> = solution.w.rows().map(|r| discrete_laplacian(r, &mesh)).collect();

    let mut eta = Vec::with_capacity(grid.intervals());
    for i in 0..grid.intervals() {
        let (a, b) = (grid.instances()[i], grid.instances()[i + 1]);
        let dt = b - a;
        let residuals = GAUSS2.map(|xi| {
            let s = 0.5 * (1.0 + xi);
            let t = a + s * dt;
            let lerp = |u: &[f64], v: &[f64], j: usize| (1.0 - s) * u[j] + s * v[j];
            (0..mesh.n_nodes())
                .map(|j| {
                    let y = lerp(solution.y.row(i), solution.y.row(i + 1), j);
                    let ly = lerp(&lap_y[i], &lap_y[i + 1], j);
                    let lw = lerp(&lap_w[i], &lap_w[i + 1], j);
                    problem.elliptic_load(t, nodes[j]) + nu * lw - 2.0 * nu * mu * ly - reaction * y
                })
                .collect::<Vec<f64>>()
        });
        eta.push(interval_eta_sq(&mesh, dt, &residuals));
    }
    let total = eta.iter().sum();
    EstimatorReport {
        grid,
        eta_sq_per_interval: eta,
        eta_sq_total: total,
        stability_warning: !problem.estimator_condition_ok(),
    }
}

/// Smallest set of intervals carrying at least `theta` of the total
/// indicator, returned in ascending index order.
pub fn doerfler_mark(report: &EstimatorReport, theta: f64) -> Vec<usize> {
    mark_indicators(&report.eta_sq_per_interval, theta)
}

/// [`doerfler_mark`] on a bare indicator vector.
pub fn mark_indicators(eta_sq: &[f64], theta: f64) -> Vec<usize> {
    let total: f64 = eta_sq.iter().sum();
    let goal = theta * total;
    let mut order: Vec<usize> = (0..eta_sq.len()).collect();
    // stable sort keeps lower indices first among equal values
    order.sort_by(|&a, &b| eta_sq[b].total_cmp(&eta_sq[a]));
    let mut sum = 0.0;
    let mut marked = Vec::new();
    for i in order {
        if sum >= goal {
            break;
        }
        sum += eta_sq[i];
        marked.push(i);
    }
    marked.sort_unstable();
    marked
}

/// Inserts the midpoint of every marked interval.
pub fn bisect(grid: &TimeGrid, marked: &[usize]) -> Result<TimeGrid> {
    let m = grid.intervals();
    if let Some(&bad) = marked.iter().find(|&&i| i >= m) {
        return Err(Error::InvalidGrid(format!(
            "interval index {bad} out of range for {m} intervals"
        )));
    }
    let mut flag = vec![false; m];
    for &i in marked {
        flag[i] = true;
    }
    let t = grid.instances();
    let mut out = Vec::with_capacity(t.len() + marked.len());
    for i in 0..m {
        out.push(t[i]);
        if flag[i] {
            out.push(0.5 * (t[i] + t[i + 1]));
        }
    }
    out.push(t[m]);
    TimeGrid::new(out)
}

/// Knobs of the adaptive loop.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptOptions {
    pub theta: f64,
    pub max_cycles: usize,
    /// Nodal initial state on the estimation mesh; defaults to `y0`.
    pub initial_state: Option<Vec<f64>>,
    /// Starting grid used instead of the uniform one (must span the window
    /// and have fewer than `target_count` instances, otherwise ignored).
    pub seed: Option<TimeGrid>,
}

impl Default for AdaptOptions {
    fn default() -> Self {
        Self {
            theta: 0.5,
            max_cycles: 50,
            initial_state: None,
            seed: None,
        }
    }
}

/// Estimator-driven grid on `[t_a, t_b]` with exactly `target_count` instances.
pub fn adapt_time_grid(
    problem: &ProblemSpec,
    span: (f64, f64),
    target_count: usize,
    mesh: &SpatialMesh,
    theta: f64,
) -> Result<TimeGrid> {
    let options = AdaptOptions {
        theta,
        ..AdaptOptions::default()
    };
    adapt_time_grid_with(problem, span, target_count, mesh, &options)
}

pub fn adapt_time_grid_with(
    problem: &ProblemSpec,
    span: (f64, f64),
    target_count: usize,
    mesh: &SpatialMesh,
    options: &AdaptOptions,
) -> Result<TimeGrid> {
    let (ta, tb) = span;
    if target_count < 2 {
        return Err(Error::InvalidGrid(format!(
            "target count must be at least 2, got {target_count}"
        )));
    }
    if !(ta.is_finite() && tb.is_finite() && tb > ta) {
        return Err(Error::InvalidGrid(format!("empty span [{ta}, {tb}]")));
    }
    if !(options.theta > 0.0 && options.theta <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "marking fraction must be in (0, 1], got {}",
            options.theta
        )));
    }
    let seed = options.seed.as_ref().filter(|g| {
        g.len() < target_count
            && (g.start() - ta).abs() <= TIME_TOL * (1.0 + ta.abs())
            && (g.end() - tb).abs() <= TIME_TOL * (1.0 + tb.abs())
    });
    let mut grid = match seed {
        Some(g) => {
            let mut t = g.instances().to_vec();
            t[0] = ta;
            *t.last_mut().unwrap() = tb;
            TimeGrid::new(t)?
        }
        None => TimeGrid::uniform(ta, tb, 2.max(target_count.div_ceil(4)))?,
    };
    let initial = options.initial_state.as_deref();
    let mut cache = LoadCache::new();
    let mut solve =
        |g: &TimeGrid| solve_mixed_from(problem, g, mesh, initial, Some(&mut cache));

    let mut cycles = 0;
    let mut previous = grid.clone();
    while grid.len() < target_count {
        if cycles == options.max_cycles {
            return Err(Error::NotConverged {
                target: target_count,
                cycles,
            });
        }
        let report = estimate(&solve(&grid)?);
        if report.eta_sq_total == 0.0 {
            return TimeGrid::uniform(ta, tb, target_count);
        }
        let marked = doerfler_mark(&report, options.theta);
        previous = grid;
        grid = bisect(&previous, &marked)?;
        cycles += 1;
    }
    if grid.len() == target_count {
        return Ok(grid);
    }

    // Undo the cheapest bisections of the last cycle.
    let surplus = grid.len() - target_count;
    let report = estimate(&solve(&grid)?);
    let t = grid.instances();
    let old = previous.instances();
    let mut added = Vec::new();
    let mut k = 0;
    for (j, &tj) in t.iter().enumerate() {
        if k < old.len() && tj == old[k] {
            k += 1;
        } else {
            let children = report.eta_sq_per_interval[j - 1] + report.eta_sq_per_interval[j];
            added.push((children, j));
        }
    }
    added.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut remove = vec![false; t.len()];
    for &(_, j) in added.iter().take(surplus) {
        remove[j] = true;
    }
    let kept = t
        .iter()
        .zip(&remove)
        .filter(|(_, &r)| !r)
        .map(|(&v, _)| v)
        .collect();
    TimeGrid::new(kept)
}

//! Finite-horizon linear-quadratic subproblems: implicit Euler in time, P1 in
//! space, solved through the symmetric KKT system in `(y, u, p)`.
//!
//! Discrete problem on a grid `t_0 < … < t_{N-1}` with `Δt_i = t_i - t_{i-1}`:
//!
//! ```text
//! min  Σ_{i≥1} Δt_i [ ½ (y_i - yd_i)ᵀ M (y_i - yd_i) + α/2 u_iᵀ M u_i ]
//! s.t. M (y_i - y_{i-1}) + Δt_i (ν K - μ M) y_i = Δt_i M (f_i + u_i),  i ≥ 1
//! ```
//!
//! `y_i` vanishes on the boundary, `u_i` lives on all nodes, data are nodal
//! samples at `t_i`. The multiplier `p_i` of step `i` approximates the
//! adjoint state at `t_i`; the terminal condition sits one level past the
//! grid (`p_N = 0`), and `α u_i + p_i = 0` holds nodally.

use std::path::Path;

use crate::banded::BandedMatrix;
use crate::error::{Error, Result};
use crate::fem1d::mass_norm_sq;
use crate::grid::{SpaceTimeField, SpatialMesh, TimeGrid};
use crate::problem::ProblemSpec;

/// Optimal state, control and adjoint of one subproblem.
#[derive(Debug, Clone)]
pub struct OpenLoopSolution {
    pub grid: TimeGrid,
    pub y: SpaceTimeField,
    /// Row 0 repeats row 1 (controls live on levels `1..N-1`).
    pub u: SpaceTimeField,
    /// Row 0 repeats row 1, like `u`.
    pub p: SpaceTimeField,
    pub cost: f64,
}

impl OpenLoopSolution {
    /// Controls on levels `1..N-1`, the unknowns of the reduced problem.
    pub fn controls(&self) -> Vec<Vec<f64>> {
        self.u.rows().skip(1).map(<[f64]>::to_vec).collect()
    }

    /// CSV with columns `t, x, y, u, p`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "x", "y", "u", "p"])?;
        let mesh = *self.y.mesh();
        for (i, &t) in self.grid.instances().iter().enumerate() {
            for j in 0..mesh.n_nodes() {
                w.write_record([
                    t.to_string(),
                    mesh.node(j).to_string(),
                    self.y.get(i, j).to_string(),
                    self.u.get(i, j).to_string(),
                    self.p.get(i, j).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Interior rows of `M v` for a full nodal vector `v`.
fn mass_rows(mesh: &SpatialMesh, v: &[f64]) -> Vec<f64> {
    let dx = mesh.dx();
    (1..mesh.n_cells())
        .map(|j| dx / 6.0 * (v[j - 1] + v[j + 1]) + 2.0 * dx / 3.0 * v[j])
        .collect()
}

/// `M_II + Δt (ν K_II - μ M_II)` on the interior nodes.
fn step_matrix(mesh: &SpatialMesh, dt: f64, nu: f64, mu: f64) -> BandedMatrix {
    let dx = mesh.dx();
    let n = mesh.n_cells() - 1;
    let diag = 2.0 * dx / 3.0 + dt * (2.0 * nu / dx - mu * 2.0 * dx / 3.0);
    let off = dx / 6.0 + dt * (-nu / dx - mu * dx / 6.0);
    let mut a = BandedMatrix::zeros(n, 1, 1);
    for j in 0..n {
        a.set(j, j, diag);
        if j + 1 < n {
            a.set(j, j + 1, off);
            a.set(j + 1, j, off);
        }
    }
    a
}

fn embed(interior: &[f64]) -> Vec<f64> {
    let mut full = Vec::with_capacity(interior.len() + 2);
    full.push(0.0);
    full.extend_from_slice(interior);
    full.push(0.0);
    full
}

fn check_inputs(grid: &TimeGrid, mesh: &SpatialMesh, y_init: &[f64]) -> Result<()> {
    if y_init.len() != mesh.n_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has {} values for {} nodes",
            y_init.len(),
            mesh.n_nodes()
        )));
    }
    if grid.len() < 2 {
        return Err(Error::InvalidGrid("horizon needs at least 2 instances".into()));
    }
    Ok(())
}

fn check_controls(grid: &TimeGrid, mesh: &SpatialMesh, controls: &[Vec<f64>]) -> Result<()> {
    if controls.len() != grid.intervals() || controls.iter().any(|u| u.len() != mesh.n_nodes()) {
        return Err(Error::DimensionMismatch(format!(
            "expected {} control rows of {} values",
            grid.intervals(),
            mesh.n_nodes()
        )));
    }
    Ok(())
}

/// Implicit Euler step `y_prev → y_next` with nodal forcing `g = f + u` at the
/// new time level.
fn euler_step(
    mesh: &SpatialMesh,
    a: &BandedMatrix,
    dt: f64,
    y_prev: &[f64],
    g: &[f64],
) -> Result<Vec<f64>> {
    let my = mass_rows(mesh, y_prev);
    let mg = mass_rows(mesh, g);
    let rhs: Vec<f64> = my.iter().zip(&mg).map(|(a, b)| a + dt * b).collect();
    Ok(embed(&a.solve(&rhs)?))
}

/// States at every grid instance (row 0 is `y_init`) for the given controls
/// on levels `1..N-1`.
pub fn state_trajectory(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    y_init: &[f64],
    mesh: &SpatialMesh,
    controls: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    check_inputs(grid, mesh, y_init)?;
    check_controls(grid, mesh, controls)?;
    let mut rows = vec![y_init.to_vec()];
    for i in 1..grid.len() {
        let dt = grid.step(i - 1);
        let t = grid.instances()[i];
        let a = step_matrix(mesh, dt, problem.nu(), problem.mu());
        let g: Vec<f64> = (0..mesh.n_nodes())
            .map(|j| problem.source(t, mesh.node(j)) + controls[i - 1][j])
            .collect();
        let next = euler_step(mesh, &a, dt, &rows[i - 1], &g)?;
        rows.push(next);
    }
    Ok(rows)
}

/// Discrete cost of given state rows (including row 0) and control rows on
/// levels `1..N-1`.
pub fn discrete_cost(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    mesh: &SpatialMesh,
    states: &[Vec<f64>],
    controls: &[Vec<f64>],
) -> f64 {
    let desired = HorizonData::sample(problem, grid, mesh).desired;
    nodal_cost(problem.alpha(), grid, mesh, states, controls, &desired)
}

fn nodal_cost(
    alpha: f64,
    grid: &TimeGrid,
    mesh: &SpatialMesh,
    states: &[Vec<f64>],
    controls: &[Vec<f64>],
    desired: &[Vec<f64>],
) -> f64 {
    let mut cost = 0.0;
    for i in 1..grid.len() {
        let dt = grid.step(i - 1);
        let diff: Vec<f64> = states[i].iter().zip(&desired[i - 1]).map(|(a, b)| a - b).collect();
        cost += dt
            * (0.5 * mass_norm_sq(mesh, &diff)
                + 0.5 * alpha * mass_norm_sq(mesh, &controls[i - 1]));
    }
    cost
}

/// Reduced cost `Ĵ(u)`: forward solve, then evaluate the discrete cost.
pub fn reduced_cost(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    y_init: &[f64],
    mesh: &SpatialMesh,
    controls: &[Vec<f64>],
) -> Result<f64> {
    let states = state_trajectory(problem, grid, y_init, mesh, controls)?;
    Ok(discrete_cost(problem, grid, mesh, &states, controls))
}

/// Gradient of [`reduced_cost`] with respect to the nodal controls,
/// by one backward adjoint sweep.
pub fn reduced_gradient(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    y_init: &[f64],
    mesh: &SpatialMesh,
    controls: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let states = state_trajectory(problem, grid, y_init, mesh, controls)?;
    let nn = mesh.n_nodes();
    let levels = grid.intervals();
    let mut grad = vec![Vec::new(); levels];
    let mut p_next = vec![0.0; nn];
    for i in (1..=levels).rev() {
        let dt = grid.step(i - 1);
        let t = grid.instances()[i];
        let a = step_matrix(mesh, dt, problem.nu(), problem.mu());
        let diff: Vec<f64> = (0..nn)
            .map(|j| states[i][j] - problem.desired_state(t, mesh.node(j)))
            .collect();
        let rhs: Vec<f64> = mass_rows(mesh, &p_next)
            .iter()
            .zip(mass_rows(mesh, &diff))
            .map(|(mp, md)| mp + dt * md)
            .collect();
        // A is symmetric, so the transpose solve is a plain solve
        let p = embed(&a.solve(&rhs)?);
        let combined: Vec<f64> = (0..nn)
            .map(|j| problem.alpha() * controls[i - 1][j] + p[j])
            .collect();
        grad[i - 1] = full_mass_apply(mesh, &combined)
            .into_iter()
            .map(|v| dt * v)
            .collect();
        p_next = p;
    }
    Ok(grad)
}

/// `M v` on all nodes.
fn full_mass_apply(mesh: &SpatialMesh, v: &[f64]) -> Vec<f64> {
    let dx = mesh.dx();
    let n = mesh.n_nodes();
    (0..n)
        .map(|j| {
            let mut s = 0.0;
            if j > 0 {
                s += dx / 6.0 * v[j - 1] + dx / 3.0 * v[j];
            }
            if j + 1 < n {
                s += dx / 6.0 * v[j + 1] + dx / 3.0 * v[j];
            }
            s
        })
        .collect()
}

/// Unknown numbering of the KKT system: nodes outermost, then levels
/// `1..N-1`, then `(y, u, p)`. On boundary nodes the `y` and `p` slots are
/// identity rows fixed at zero.
struct KktLayout {
    levels: usize,
}

impl KktLayout {
    #[inline]
    fn index(&self, level: usize, node: usize, comp: usize) -> usize {
        (node * self.levels + level - 1) * 3 + comp
    }
}

const Y: usize = 0;
const U: usize = 1;
const P: usize = 2;

/// Nodal source and desired state on levels `1..N-1` of a horizon grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonData {
    pub source: Vec<Vec<f64>>,
    pub desired: Vec<Vec<f64>>,
}

impl HorizonData {
    pub fn sample(problem: &ProblemSpec, grid: &TimeGrid, mesh: &SpatialMesh) -> Self {
        let levels = &grid.instances()[1..];
        Self {
            source: levels.iter().map(|&t| mesh.sample(|x| problem.source(t, x))).collect(),
            desired: levels
                .iter()
                .map(|&t| mesh.sample(|x| problem.desired_state(t, x)))
                .collect(),
        }
    }
}

/// Exact minimizer of the discrete subproblem on `grid` from `y_init`.
pub fn solve_open_loop(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    y_init: &[f64],
    mesh: &SpatialMesh,
) -> Result<OpenLoopSolution> {
    check_inputs(grid, mesh, y_init)?;
    let data = HorizonData::sample(problem, grid, mesh);
    solve_open_loop_with(problem, grid, y_init, mesh, &data)
}

/// [`solve_open_loop`] with explicit nodal data; only the coefficients of
/// `problem` are used.
pub fn solve_open_loop_with(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    y_init: &[f64],
    mesh: &SpatialMesh,
    data: &HorizonData,
) -> Result<OpenLoopSolution> {
    check_inputs(grid, mesh, y_init)?;
    check_controls(grid, mesh, &data.source)?;
    check_controls(grid, mesh, &data.desired)?;
    let levels = grid.intervals();
    let nn = mesh.n_nodes();
    let last = nn - 1;
    let lay = KktLayout { levels };
    let dim = 3 * levels * nn;
    let (nu, mu, alpha) = (problem.nu(), problem.mu(), problem.alpha());
    let dx = mesh.dx();
    let mx = [[dx / 3.0, dx / 6.0], [dx / 6.0, dx / 3.0]];
    let kx = [[1.0 / dx, -1.0 / dx], [-1.0 / dx, 1.0 / dx]];
    let interior = |j: usize| j != 0 && j != last;

    let mut triplets = Vec::with_capacity(levels * mesh.n_cells() * 4 * 8 + 4 * levels);
    for i in 1..=levels {
        let dt = grid.step(i - 1);
        for c in 0..mesh.n_cells() {
            for a in 0..2 {
                for b in 0..2 {
                    let (r, s) = (c + a, c + b);
                    let m = mx[a][b];
                    let step = m + dt * (nu * kx[a][b] - mu * m);
                    let mut push = |ri, ci, v| triplets.push((ri, ci, v));
                    push(lay.index(i, r, U), lay.index(i, s, U), dt * alpha * m);
                    if interior(s) {
                        push(lay.index(i, r, U), lay.index(i, s, P), dt * m);
                    }
                    if !interior(r) {
                        continue;
                    }
                    push(lay.index(i, r, P), lay.index(i, s, U), dt * m);
                    if interior(s) {
                        push(lay.index(i, r, Y), lay.index(i, s, Y), dt * m);
                        push(lay.index(i, r, Y), lay.index(i, s, P), -step);
                        push(lay.index(i, r, P), lay.index(i, s, Y), -step);
                        if i < levels {
                            push(lay.index(i, r, Y), lay.index(i + 1, s, P), m);
                            push(lay.index(i + 1, r, P), lay.index(i, s, Y), m);
                        }
                    }
                }
            }
        }
        for j in [0, last] {
            triplets.push((lay.index(i, j, Y), lay.index(i, j, Y), 1.0));
            triplets.push((lay.index(i, j, P), lay.index(i, j, P), 1.0));
        }
    }
    let kkt = BandedMatrix::from_triplets(dim, &triplets);

    let mut rhs = vec![0.0; dim];
    for i in 1..=levels {
        let dt = grid.step(i - 1);
        let myd = mass_rows(mesh, &data.desired[i - 1]);
        let mf = mass_rows(mesh, &data.source[i - 1]);
        for j in 1..last {
            rhs[lay.index(i, j, Y)] = dt * myd[j - 1];
            rhs[lay.index(i, j, P)] = -dt * mf[j - 1];
        }
    }
    let my0 = mass_rows(mesh, y_init);
    for j in 1..last {
        rhs[lay.index(1, j, P)] -= my0[j - 1];
    }

    let x = kkt.solve(&rhs)?;

    let mut y_rows = vec![y_init.to_vec()];
    let mut u_rows = Vec::with_capacity(levels);
    let mut p_rows = Vec::with_capacity(levels);
    for i in 1..=levels {
        y_rows.push((0..nn).map(|j| x[lay.index(i, j, Y)]).collect());
        u_rows.push((0..nn).map(|j| x[lay.index(i, j, U)]).collect::<Vec<f64>>());
        p_rows.push((0..nn).map(|j| x[lay.index(i, j, P)]).collect::<Vec<f64>>());
    }
    let cost = nodal_cost(problem.alpha(), grid, mesh, &y_rows, &u_rows, &data.desired);
    let extend = |rows: Vec<Vec<f64>>| {
        let mut out = vec![rows[0].clone()];
        out.extend(rows);
        out
    };
    Ok(OpenLoopSolution {
        grid: grid.clone(),
        y: SpaceTimeField::from_rows(grid.clone(), *mesh, y_rows)?,
        u: SpaceTimeField::from_rows(grid.clone(), *mesh, extend(u_rows))?,
        p: SpaceTimeField::from_rows(grid.clone(), *mesh, extend(p_rows))?,
        cost,
    })
}

/// Max-norm residuals of the three optimality blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub state: f64,
    pub adjoint: f64,
    pub optimality: f64,
}

/// Evaluates the discrete state equation, adjoint equation and `α u + p = 0`
/// at a returned solution.
pub fn kkt_residuals(problem: &ProblemSpec, solution: &OpenLoopSolution) -> KktResiduals {
    let grid = &solution.grid;
    let mesh = *solution.y.mesh();
    let nn = mesh.n_nodes();
    let (nu, mu, alpha) = (problem.nu(), problem.mu(), problem.alpha());
    let mut out = KktResiduals {
        state: 0.0,
        adjoint: 0.0,
        optimality: 0.0,
    };
    let levels = grid.intervals();
    for i in 1..=levels {
        let dt = grid.step(i - 1);
        let t = grid.instances()[i];
        let a = step_matrix(&mesh, dt, nu, mu);
        let y = solution.y.row(i);
        let p = solution.p.row(i);
        let g: Vec<f64> = (0..nn)
            .map(|j| problem.source(t, mesh.node(j)) + solution.u.get(i, j))
            .collect();
        let ay = a.matvec(&y[1..nn - 1]);
        let my = mass_rows(&mesh, solution.y.row(i - 1));
        let mg = mass_rows(&mesh, &g);
        for k in 0..nn - 2 {
            out.state = out.state.max((ay[k] - my[k] - dt * mg[k]).abs());
        }
        let p_next = if i < levels {
            solution.p.row(i + 1).to_vec()
        } else {
            vec![0.0; nn]
        };
        let diff: Vec<f64> = (0..nn)
            .map(|j| y[j] - problem.desired_state(t, mesh.node(j)))
            .collect();
        let ap = a.matvec(&p[1..nn - 1]);
        let mp = mass_rows(&mesh, &p_next);
        let md = mass_rows(&mesh, &diff);
        for k in 0..nn - 2 {
            out.adjoint = out.adjoint.max((ap[k] - mp[k] - dt * md[k]).abs());
        }
        for j in 0..nn {
            out.optimality = out.optimality.max((alpha * solution.u.get(i, j) + p[j]).abs());
        }
    }
    out
}

/// Integrates the closed-loop state over `span` with `steps` implicit Euler
/// substeps; the control is interpolated linearly in time (and transferred
/// to `mesh` if needed), the source is sampled at the substep ends.
pub fn advance_state(
    problem: &ProblemSpec,
    y_start: &[f64],
    control: &SpaceTimeField,
    span: (f64, f64),
    mesh: &SpatialMesh,
    steps: usize,
) -> Result<Vec<f64>> {
    let (ta, tb) = span;
    if y_start.len() != mesh.n_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "state has {} values for {} nodes",
            y_start.len(),
            mesh.n_nodes()
        )));
    }
    if steps == 0 || !(tb > ta) {
        return Err(Error::InvalidGrid(format!(
            "cannot advance over [{ta}, {tb}] in {steps} steps"
        )));
    }
    let dt = (tb - ta) / steps as f64;
    let a = step_matrix(mesh, dt, problem.nu(), problem.mu());
    let mut y = y_start.to_vec();
    for k in 1..=steps {
        let t = if k == steps { tb } else { ta + k as f64 * dt };
        let u = mesh.transfer_from(control.mesh(), &control.at_time(t));
        let g: Vec<f64> = (0..mesh.n_nodes())
            .map(|j| problem.source(t, mesh.node(j)) + u[j])
            .collect();
        y = euler_step(mesh, &a, dt, &y, &g)?;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem1d::l2_norm_spacetime;
    use crate::grid::uniform_time_grid;
    use crate::problems::{make_test1, make_test2, make_zero_problem, ProblemData};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn mesh(n: usize) -> SpatialMesh {
        SpatialMesh::new(n).unwrap()
    }

    fn max_abs(rows: &[Vec<f64>]) -> f64 {
        rows.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn zero_problem_gives_zero_solution() {
        let p = make_zero_problem();
        let grid = uniform_time_grid(0.0, 1.0, 4).unwrap();
        let sol = solve_open_loop(&p, &grid, &[0.0; 5], &mesh(4)).unwrap();
        assert_eq!(sol.u.max_abs(), 0.0);
        assert_eq!(sol.y.max_abs(), 0.0);
        assert_eq!(sol.cost, 0.0);
    }

    #[test]
    fn optimality_blocks_vanish() {
        for p in [make_test1(1e-3).unwrap(), make_test2(0.1, 3.0, 1e-2).unwrap()] {
            let grid = TimeGrid::new(vec![0.3, 0.35, 0.45, 0.5, 0.52, 0.7]).unwrap();
            let msh = mesh(12);
            let y0 = msh.sample(|x| p.exact_state(0.3, x).unwrap());
            let sol = solve_open_loop(&p, &grid, &y0, &msh).unwrap();
            let r = kkt_residuals(&p, &sol);
            let scale = 1.0 + sol.y.max_abs() + sol.u.max_abs();
            assert!(r.state < 1e-9 * scale, "{r:?}");
            assert!(r.adjoint < 1e-9 * scale, "{r:?}");
            assert!(r.optimality < 1e-9 * scale, "{r:?}");
            assert_eq!(sol.y.row(0), y0.as_slice());
        }
    }

    #[test]
    fn cost_matches_forward_recomputation() {
        let p = make_test1(1e-3).unwrap();
        let grid = uniform_time_grid(0.0, 1.0, 7).unwrap();
        let msh = mesh(10);
        let y0 = msh.sample(|x| p.initial_state(x));
        let sol = solve_open_loop(&p, &grid, &y0, &msh).unwrap();
        let again = reduced_cost(&p, &grid, &y0, &msh, &sol.controls()).unwrap();
        assert!((sol.cost - again).abs() <= 1e-10 * sol.cost);
        let states = state_trajectory(&p, &grid, &y0, &msh, &sol.controls()).unwrap();
        for (i, row) in states.iter().enumerate() {
            for (a, b) in row.iter().zip(sol.y.row(i)) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn gradient_vanishes_at_minimizer() {
        let p = make_test2(0.1, 3.0, 1e-2).unwrap();
        let grid = uniform_time_grid(0.0, 0.5, 6).unwrap();
        let msh = mesh(8);
        let y0 = msh.sample(|x| p.initial_state(x));
        let sol = solve_open_loop(&p, &grid, &y0, &msh).unwrap();
        let g = reduced_gradient(&p, &grid, &y0, &msh, &sol.controls()).unwrap();
        assert!(max_abs(&g) < 1e-10, "{}", max_abs(&g));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let p = make_test1(1e-3).unwrap();
        let grid = TimeGrid::new(vec![0.0, 0.1, 0.3, 0.45, 0.5, 0.8]).unwrap();
        let msh = mesh(8);
        let y0 = msh.sample(|x| p.initial_state(x));
        let mut rng = StdRng::seed_from_u64(5);
        let u: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..9).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let g = reduced_gradient(&p, &grid, &y0, &msh, &u).unwrap();
        for _ in 0..4 {
            let d: Vec<Vec<f64>> = (0..5)
                .map(|_| (0..9).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let h = 1e-4;
            let shift = |s: f64| -> Vec<Vec<f64>> {
                u.iter()
                    .zip(&d)
                    .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + s * y).collect())
                    .collect()
            };
            let jp = reduced_cost(&p, &grid, &y0, &msh, &shift(h)).unwrap();
            let jm = reduced_cost(&p, &grid, &y0, &msh, &shift(-h)).unwrap();
            let fd = (jp - jm) / (2.0 * h);
            let adj: f64 = g.iter().flatten().zip(d.iter().flatten()).map(|(a, b)| a * b).sum();
            assert!((fd - adj).abs() <= 1e-6 * adj.abs().max(1e-12), "{fd} vs {adj}");
        }
    }

    #[test]
    fn free_trajectory_as_target_needs_no_control() {
        let p = ProblemSpec::new("free", 0.5, 1.0, 0.1, 1.0, ProblemData::Zero).unwrap();
        let grid = TimeGrid::new(vec![0.0, 0.05, 0.15, 0.2, 0.4]).unwrap();
        let msh = mesh(6);
        let y0 = msh.sample(|x| (PI * x).sin() + 0.3 * (2.0 * PI * x).sin());
        let source: Vec<Vec<f64>> = (1..5)
            .map(|i| msh.sample(|x| (i as f64 * x).cos()))
            .collect();
        // forward with u = 0 by hand, one tridiagonal solve per step
        let mut free = vec![y0.clone()];
        for i in 1..5 {
            let a = step_matrix(&msh, grid.step(i - 1), 0.5, 1.0);
            let next = euler_step(&msh, &a, grid.step(i - 1), &free[i - 1], &source[i - 1]);
            free.push(next.unwrap());
        }
        let data = HorizonData {
            source,
            desired: free[1..].to_vec(),
        };
        let sol = solve_open_loop_with(&p, &grid, &y0, &msh, &data).unwrap();
        let bound = 1e-8 * (1.0 + max_abs(&data.desired));
        assert!(sol.u.max_abs() <= bound, "{}", sol.u.max_abs());
        assert!(sol.cost.abs() < 1e-16);
    }

    #[test]
    fn alpha_increase_shrinks_control() {
        let grid = TimeGrid::new(vec![0.4, 0.45, 0.5, 0.55, 0.6]).unwrap();
        let msh = mesh(10);
        let norm = |alpha: f64| {
            let p = ProblemSpec::new("t1", 1.0, 0.0, alpha, 1.0, ProblemData::AtanLayer {
                epsilon: 1e-3,
            })
            .unwrap();
            let y0 = msh.sample(|x| p.exact_state(0.4, x).unwrap());
            l2_norm_spacetime(&solve_open_loop(&p, &grid, &y0, &msh).unwrap().u)
        };
        assert!(norm(10.0) <= norm(1.0));
        assert!(norm(1.0) <= norm(0.1));
    }

    #[test]
    fn advance_state_reproduces_open_loop_step() {
        let p = make_test2(0.1, 3.0, 1e-2).unwrap();
        let grid = TimeGrid::new(vec![0.2, 0.27, 0.4, 0.5]).unwrap();
        let msh = mesh(10);
        let y0 = msh.sample(|x| p.exact_state(0.2, x).unwrap());
        let sol = solve_open_loop(&p, &grid, &y0, &msh).unwrap();
        let y1 = advance_state(&p, &y0, &sol.u, (0.2, 0.27), &msh, 1).unwrap();
        for (a, b) in y1.iter().zip(sol.y.row(1)) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn advance_state_with_no_data_stays_zero() {
        let p = make_zero_problem();
        let msh = mesh(5);
        let u = SpaceTimeField::zeros(uniform_time_grid(0.0, 1.0, 2).unwrap(), msh);
        let y = advance_state(&p, &[0.0; 6], &u, (0.0, 0.5), &msh, 7).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn advance_state_is_first_order() {
        // y = sin(πx) e^{-π² t} solves the free heat equation
        let p = make_zero_problem();
        let msh = mesh(400);
        let y0 = msh.sample(|x| (PI * x).sin());
        let u = SpaceTimeField::zeros(uniform_time_grid(0.0, 1.0, 2).unwrap(), msh);
        let tb = 0.05;
        let exact = msh.sample(|x| (PI * x).sin() * (-PI * PI * tb).exp());
        let err = |steps| {
            let y = advance_state(&p, &y0, &u, (0.0, tb), &msh, steps).unwrap();
            let d: Vec<f64> = y.iter().zip(&exact).map(|(a, b)| a - b).collect();
            mass_norm_sq(&msh, &d).sqrt()
        };
        let ratio = err(4) / err(8);
        assert!((1.7..=2.3).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = make_zero_problem();
        let grid = uniform_time_grid(0.0, 1.0, 3).unwrap();
        assert!(solve_open_loop(&p, &grid, &[0.0; 4], &mesh(4)).is_err());
        assert!(reduced_cost(&p, &grid, &[0.0; 5], &mesh(4), &[vec![0.0; 5]]).is_err());
    }
}

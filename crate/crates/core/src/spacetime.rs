//! Q1 space-time discretization of the mixed elliptic reformulation of the
//! optimality system.
//!
//! Eliminating the adjoint and the control from the optimality system gives
//! a problem that is second order in time and fourth order in space for the
//! state alone. With `w = -ν y_xx` it becomes the mixed system
//!
//! ```text
//! -y_tt - ν w_xx + 2νμ y_xx + (1/α + μ²) y = y_d/α - f_t - ν f_xx - μ f
//!  ν y_xx + w = 0
//! ```
//!
//! with `y(0) = y0`, `y = 0` and `w = f` on the lateral boundary, and the
//! natural end-time condition `(y_t - ν y_xx - μ y)(T) = f(T)`. The discrete
//! unknowns are the nodal values of `y` and `w` on the tensor grid.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::banded::{BandedMatrix, BandedSystem};
use crate::error::{Error, Result};
use crate::fem1d;
use crate::grid::{SpaceTimeField, SpatialMesh, TimeGrid};
use crate::problem::ProblemSpec;
use crate::quadrature::integrate_vec;

/// Unknown numbering: `(level, node, component)` with component 0 = y, 1 = w.
///
/// Levels or nodes run outermost, whichever gives the narrower band.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MixedLayout {
    pub n_levels: usize,
    pub n_nodes: usize,
    time_major: bool,
}

impl MixedLayout {
    pub fn new(n_levels: usize, n_nodes: usize) -> Self {
        Self {
            n_levels,
            n_nodes,
            time_major: n_nodes <= n_levels,
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.n_levels * self.n_nodes
    }

    #[inline]
    pub fn index(&self, level: usize, node: usize, comp: usize) -> usize {
        if self.time_major {
            2 * (level * self.n_nodes + node) + comp
        } else {
            2 * (node * self.n_levels + level) + comp
        }
    }
}

/// Time-interval load integrals, reusable across solves on nested grids.
///
/// Entries are keyed by the exact bit patterns of the interval endpoints, so
/// a cache must only be shared between solves of one problem on one mesh.
#[derive(Debug, Default, Clone)]
pub struct LoadCache {
    entries: HashMap<(u64, u64), Vec<f64>>,
}

impl LoadCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// The assembled (unconstrained) bilinear form and load, plus the strongly
/// imposed values.
#[derive(Debug, Clone)]
pub struct MixedSystem {
    pub layout: MixedLayout,
    pub grid: TimeGrid,
    pub mesh: SpatialMesh,
    /// Matrix of the bilinear form on all unknowns, before constraints.
    pub operator: BandedMatrix,
    /// Load vector on all unknowns, before constraints.
    pub load: Vec<f64>,
    /// `(unknown, value)` pairs fixed by initial and lateral conditions.
    pub constraints: Vec<(usize, f64)>,
}

impl MixedSystem {
    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Linear system with the constrained rows replaced by identities and the
    /// known values moved to the right-hand side.
    pub fn constrained(&self) -> BandedSystem {
        let mut matrix = self.operator.clone();
        let mut rhs = self.load.clone();
        let dim = self.dim();
        let (kl, ku) = (matrix.lower(), matrix.upper());
        for &(k, value) in &self.constraints {
            for r in k.saturating_sub(ku)..(k + kl + 1).min(dim) {
                let a = matrix.get(r, k);
                if a != 0.0 {
                    rhs[r] -= a * value;
                    matrix.set(r, k, 0.0);
                }
            }
        }
        for &(k, value) in &self.constraints {
            matrix.replace_row_with_unit(k, 1.0);
            rhs[k] = value;
        }
        BandedSystem { matrix, rhs }
    }
}

/// Assembles the mixed system on `grid × mesh`, starting from the nodal
/// initial state `initial` (or the problem's `y0` when `None`).
pub fn assemble_mixed(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    mesh: &SpatialMesh,
    initial: Option<&[f64]>,
) -> Result<MixedSystem> {
    assemble_mixed_cached(problem, grid, mesh, initial, None)
}

pub(crate) fn assemble_mixed_cached(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    mesh: &SpatialMesh,
    initial: Option<&[f64]>,
    mut cache: Option<&mut LoadCache>,
) -> Result<MixedSystem> {
    let nn = mesh.n_nodes();
    let nl = grid.len();
    let init = match initial {
        Some(v) if v.len() != nn => {
            return Err(Error::DimensionMismatch(format!(
                "initial state has {} values for {} nodes",
                v.len(),
                nn
            )))
        }
        Some(v) => v.to_vec(),
        None => mesh.sample(|x| problem.initial_state(x)),
    };
    let layout = MixedLayout::new(nl, nn);
    let (nu, mu, alpha) = (problem.nu(), problem.mu(), problem.alpha());
    let reaction = 1.0 / alpha + mu * mu;
    let dx = mesh.dx();
    let mx = [[dx / 3.0, dx / 6.0], [dx / 6.0, dx / 3.0]];
    let kx = [[1.0 / dx, -1.0 / dx], [-1.0 / dx, 1.0 / dx]];

    let mut triplets = Vec::with_capacity(grid.intervals() * mesh.n_cells() * 64 + 4 * nn);
    for e in 0..grid.intervals() {
        let h = grid.step(e);
        let mt = [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]];
        let kt = [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]];
        for c in 0..mesh.n_cells() {
            for a in 0..2 {
                for b in 0..2 {
                    for p in 0..2 {
                        for q in 0..2 {
                            let (li, lj) = (e + a, e + b);
                            let (ni, nj) = (c + p, c + q);
                            let mm = mt[a][b] * mx[p][q];
                            let mk = mt[a][b] * kx[p][q];
                            let yy = kt[a][b] * mx[p][q] + reaction * mm - 2.0 * nu * mu * mk;
                            triplets.push((layout.index(li, ni, 0), layout.index(lj, nj, 0), yy));
                            triplets.push((layout.index(li, ni, 0), layout.index(lj, nj, 1), nu * mk));
                            triplets.push((layout.index(li, ni, 1), layout.index(lj, nj, 0), -nu * mk));
                            triplets.push((layout.index(li, ni, 1), layout.index(lj, nj, 1), mm));
                        }
                    }
                }
            }
        }
    }
    // natural end-time terms ν(y_x(T), v_x(T)) - μ(y(T), v(T))
    let last = nl - 1;
    for c in 0..mesh.n_cells() {
        for p in 0..2 {
            for q in 0..2 {
                let v = nu * kx[p][q] - mu * mx[p][q];
                triplets.push((layout.index(last, c + p, 0), layout.index(last, c + q, 0), v));
            }
        }
    }
    let operator = BandedMatrix::from_triplets(layout.dim(), &triplets);

    let mut load = vec![0.0; layout.dim()];
    for e in 0..grid.intervals() {
        let (a, b) = (grid.instances()[e], grid.instances()[e + 1]);
        let local = match cache.as_deref_mut() {
            Some(cache) => cache
                .entries
                .entry((a.to_bits(), b.to_bits()))
                .or_insert_with(|| interval_load(problem, mesh, a, b))
                .clone(),
            None => interval_load(problem, mesh, a, b),
        };
        for j in 0..nn {
            load[layout.index(e, j, 0)] += local[j];
            load[layout.index(e + 1, j, 0)] += local[nn + j];
        }
    }
    let t_end = grid.end();
    let end_load = fem1d::load_vector(mesh, |x| problem.source(t_end, x));
    for (j, v) in end_load.into_iter().enumerate() {
        load[layout.index(last, j, 0)] += v;
    }

    let mut constraints = Vec::with_capacity(nn + 4 * nl);
    for (j, &v) in init.iter().enumerate() {
        constraints.push((layout.index(0, j, 0), v));
    }
    for (i, &t) in grid.instances().iter().enumerate() {
        if i > 0 {
            constraints.push((layout.index(i, 0, 0), 0.0));
            constraints.push((layout.index(i, nn - 1, 0), 0.0));
        }
        constraints.push((layout.index(i, 0, 1), problem.source(t, 0.0)));
        constraints.push((layout.index(i, nn - 1, 1), problem.source(t, 1.0)));
    }

    Ok(MixedSystem {
        layout,
        grid: grid.clone(),
        mesh: *mesh,
        operator,
        load,
        constraints,
    })
}

/// `∫_a^b ∫ ỹ_d φ_k(t) ψ_j(x)` for the two time hats on `[a, b]`.
/// Layout: first the left hat for every node, then the right hat.
fn interval_load(problem: &ProblemSpec, mesh: &SpatialMesh, a: f64, b: f64) -> Vec<f64> {
    let nn = mesh.n_nodes();
    let points = fem1d::quadrature_points(mesh);
    let h = b - a;
    integrate_vec(
        |t, out| {
            let right = (t - a) / h;
            let left = 1.0 - right;
            for &(x, w, cell, s) in &points {
                let g = problem.elliptic_load(t, x) * w;
                out[cell] += left * g * (1.0 - s);
                out[cell + 1] += left * g * s;
                out[nn + cell] += right * g * (1.0 - s);
                out[nn + cell + 1] += right * g * s;
            }
        },
        a,
        b,
        2 * nn,
        1e-13,
        1e-10,
        400,
    )
}

/// Discrete mixed solution `(y, w)`.
#[derive(Debug, Clone)]
pub struct MixedSolution {
    pub y: SpaceTimeField,
    pub w: SpaceTimeField,
    pub problem: ProblemSpec,
    /// `‖A x - b‖∞` of the constrained system at the returned solution.
    pub algebraic_residual: f64,
    /// `‖b‖∞` of the constrained system.
    pub rhs_norm: f64,
}

impl MixedSolution {
    pub fn grid(&self) -> &TimeGrid {
        self.y.grid()
    }

    pub fn mesh(&self) -> &SpatialMesh {
        self.y.mesh()
    }

    /// CSV with columns `t, x, y, w`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = csv::Writer::from_path(path)?;
        out.write_record(["t", "x", "y", "w"])?;
        let mesh = *self.mesh();
        for (i, &t) in self.grid().instances().iter().enumerate() {
            for j in 0..mesh.n_nodes() {
                out.write_record([
                    t.to_string(),
                    mesh.node(j).to_string(),
                    self.y.get(i, j).to_string(),
                    self.w.get(i, j).to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

pub fn solve_mixed(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    mesh: &SpatialMesh,
) -> Result<MixedSolution> {
    solve_mixed_from(problem, grid, mesh, None, None)
}

/// Solves the mixed system from an explicit initial state; `cache` reuses
/// interval loads between calls on nested grids.
pub fn solve_mixed_from(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    mesh: &SpatialMesh,
    initial: Option<&[f64]>,
    cache: Option<&mut LoadCache>,
) -> Result<MixedSolution> {
    let system = assemble_mixed_cached(problem, grid, mesh, initial, cache)?;
    let constrained = system.constrained();
    let x = constrained.matrix.solve(&constrained.rhs)?;
    let algebraic_residual = constrained.residual_norm(&x);
    let rhs_norm = constrained.rhs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));

    let layout = system.layout;
    let mut y = SpaceTimeField::zeros(grid.clone(), *mesh);
    let mut w = SpaceTimeField::zeros(grid.clone(), *mesh);
    for i in 0..layout.n_levels {
        for j in 0..layout.n_nodes {
            y.set(i, j, x[layout.index(i, j, 0)]);
            w.set(i, j, x[layout.index(i, j, 1)]);
        }
    }
    Ok(MixedSolution {
        y,
        w,
        problem: problem.clone(),
        algebraic_residual,
        rhs_norm,
    })
}

/// Writes the solution table to any writer (used by the CLI for stdout).
pub fn write_mixed_table(solution: &MixedSolution, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "x", "y", "w"])?;
    let mesh = *solution.mesh();
    for (i, &t) in solution.grid().instances().iter().enumerate() {
        for j in 0..mesh.n_nodes() {
            w.write_record([
                t.to_string(),
                mesh.node(j).to_string(),
                solution.y.get(i, j).to_string(),
                solution.w.get(i, j).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

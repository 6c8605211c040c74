//! Time grids, the uniform spatial mesh on (0,1), and nodal space-time fields.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Absolute tolerance used when comparing time instances across grids.
pub const TIME_TOL: f64 = 1e-12;

/// Strictly increasing list of time instances `t_0 < t_1 < ... < t_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    instances: Vec<f64>,
}

impl TimeGrid {
    pub fn new(instances: Vec<f64>) -> Result<Self> {
        if instances.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 instances, got {}",
                instances.len()
            )));
        }
        if let Some(bad) = instances.iter().position(|t| !t.is_finite()) {
            return Err(Error::InvalidGrid(format!("instance {bad} is not finite")));
        }
        if let Some(i) = instances.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "instances not strictly increasing at index {}: {} -> {}",
                i + 1,
                instances[i],
                instances[i + 1]
            )));
        }
        Ok(Self { instances })
    }

    /// `count` equispaced instances from `t_start` to `t_stop`, both included.
    pub fn uniform(t_start: f64, t_stop: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::InvalidGrid(format!("count must be >= 2, got {count}")));
        }
        if !(t_stop > t_start) {
            return Err(Error::InvalidGrid(format!(
                "empty span [{t_start}, {t_stop}]"
            )));
        }
        let steps = (count - 1) as f64;
        let mut instances: Vec<f64> = (0..count)
            .map(|k| t_start + (t_stop - t_start) * (k as f64) / steps)
            .collect();
        instances[count - 1] = t_stop;
        Self::new(instances)
    }

    pub fn instances(&self) -> &[f64] {
        &self.instances
    }

    /// Number of instances (`m + 1`).
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of intervals (`m`).
    pub fn intervals(&self) -> usize {
        self.instances.len() - 1
    }

    pub fn start(&self) -> f64 {
        self.instances[0]
    }

    pub fn end(&self) -> f64 {
        self.instances[self.instances.len() - 1]
    }

    /// Length of interval `i` (0-based), i.e. `t_{i+1} - t_i`.
    pub fn step(&self, i: usize) -> f64 {
        self.instances[i + 1] - self.instances[i]
    }

    pub fn steps(&self) -> impl Iterator<Item = f64> + '_ {
        self.instances.windows(2).map(|w| w[1] - w[0])
    }

    pub fn min_step(&self) -> f64 {
        self.steps().fold(f64::INFINITY, f64::min)
    }

    /// Sub-grid made of instances `from..=to`.
    pub fn slice(&self, from: usize, to: usize) -> Result<Self> {
        if to >= self.len() || from >= to {
            return Err(Error::InvalidGrid(format!(
                "slice {from}..={to} out of range for {} instances",
                self.len()
            )));
        }
        Self::new(self.instances[from..=to].to_vec())
    }

    /// True if every instance of `self` appears in `other` (within [`TIME_TOL`]).
    pub fn is_nested_in(&self, other: &TimeGrid) -> bool {
        self.instances.iter().all(|&t| {
            other
                .instances
                .iter()
                .any(|&s| (s - t).abs() <= TIME_TOL)
        })
    }

    /// Plain-text form: one instance per line, 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.len() * 24);
        for t in &self.instances {
            let _ = writeln!(out, "{t:.16e}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut instances = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let t: f64 = line.parse().map_err(|_| {
                Error::InvalidGrid(format!("line {}: cannot parse {line:?}", lineno + 1))
            })?;
            instances.push(t);
        }
        Self::new(instances)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Free-function form of [`TimeGrid::uniform`].
pub fn uniform_time_grid(t_start: f64, t_stop: f64, count: usize) -> Result<TimeGrid> {
    TimeGrid::uniform(t_start, t_stop, count)
}

/// Uniform mesh of `n_cells` cells on the unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpatialMesh {
    n_cells: usize,
}

impl SpatialMesh {
    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::InvalidMesh(format!(
                "need at least 2 cells, got {n_cells}"
            )));
        }
        Ok(Self { n_cells })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        if j == self.n_cells {
            1.0
        } else {
            j as f64 / self.n_cells as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|j| self.node(j)).collect()
    }

    /// Nodal samples of `g` on this mesh.
    pub fn sample(&self, g: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.n_nodes()).map(|j| g(self.node(j))).collect()
    }

    /// Value at `x` of the piecewise-linear interpolant with nodal `values`.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        debug_assert_eq!(values.len(), self.n_nodes());
        let s = (x.clamp(0.0, 1.0) * self.n_cells as f64).min(self.n_cells as f64);
        let cell = (s.floor() as usize).min(self.n_cells - 1);
        let local = s - cell as f64;
        values[cell] * (1.0 - local) + values[cell + 1] * local
    }

    /// Transfers nodal values from `from` onto this mesh by linear interpolation.
    pub fn transfer_from(&self, from: &SpatialMesh, values: &[f64]) -> Vec<f64> {
        if from == self {
            return values.to_vec();
        }
        self.sample(|x| from.interpolate(values, x))
    }
}

/// Nodal values on a time grid times a spatial mesh; row `i` holds time `t_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    grid: TimeGrid,
    mesh: SpatialMesh,
    values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(grid: TimeGrid, mesh: SpatialMesh) -> Self {
        let values = vec![0.0; grid.len() * mesh.n_nodes()];
        Self { grid, mesh, values }
    }

    pub fn from_rows(grid: TimeGrid, mesh: SpatialMesh, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} rows for {} time instances",
                rows.len(),
                grid.len()
            )));
        }
        let mut values = Vec::with_capacity(grid.len() * mesh.n_nodes());
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != mesh.n_nodes() {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} values for {} nodes",
                    row.len(),
                    mesh.n_nodes()
                )));
            }
            values.extend(row);
        }
        Ok(Self { grid, mesh, values })
    }

    /// Samples `g(t, x)` at every grid instance and mesh node.
    pub fn sample(grid: TimeGrid, mesh: SpatialMesh, g: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len() * mesh.n_nodes());
        for &t in grid.instances() {
            for j in 0..mesh.n_nodes() {
                values.push(g(t, mesh.node(j)));
            }
        }
        Self { grid, mesh, values }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn mesh(&self) -> &SpatialMesh {
        &self.mesh
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.mesh.n_nodes() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let n = self.mesh.n_nodes();
        self.values[i * n + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.mesh.n_nodes();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.mesh.n_nodes();
        &mut self.values[i * n..(i + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.mesh.n_nodes())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Nodal values at time `t`, linearly interpolated between grid rows and
    /// held constant outside the grid span.
    pub fn at_time(&self, t: f64) -> Vec<f64> {
        let ts = self.grid.instances();
        if t <= ts[0] {
            return self.row(0).to_vec();
        }
        if t >= ts[ts.len() - 1] {
            return self.row(ts.len() - 1).to_vec();
        }
        let k = ts.partition_point(|&s| s <= t).clamp(1, ts.len() - 1);
        let (a, b) = (ts[k - 1], ts[k]);
        let theta = (t - a) / (b - a);
        self.row(k - 1)
            .iter()
            .zip(self.row(k))
            .map(|(lo, hi)| lo * (1.0 - theta) + hi * theta)
            .collect()
    }

    pub fn map(&self, g: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            mesh: self.mesh,
            values: self.values.iter().map(|&v| g(v)).collect(),
        }
    }

    /// Pointwise `self - other`; both fields must live on the same grid and mesh.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.mesh != other.mesh || self.grid.len() != other.grid.len() {
            return Err(Error::DimensionMismatch(
                "fields live on different grids".into(),
            ));
        }
        Ok(Self {
            grid: self.grid.clone(),
            mesh: self.mesh,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_examples() {
        assert_eq!(uniform_time_grid(0.0, 1.0, 2).unwrap().instances(), &[0.0, 1.0]);
        assert_eq!(
            uniform_time_grid(0.0, 1.0, 5).unwrap().instances(),
            &[0.0, 0.25, 0.5, 0.75, 1.0]
        );
        let g = uniform_time_grid(0.2, 0.4, 3).unwrap();
        for (a, b) in g.instances().iter().zip([0.2, 0.3, 0.4]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_grid_rejects_bad_input() {
        assert!(uniform_time_grid(0.0, 1.0, 1).is_err());
        assert!(uniform_time_grid(1.0, 1.0, 3).is_err());
        assert!(uniform_time_grid(1.0, 0.0, 3).is_err());
    }

    #[test]
    fn grid_rejects_non_monotone() {
        assert!(TimeGrid::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.6, 0.5]).is_err());
        assert!(TimeGrid::new(vec![0.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn grid_text_round_trip_is_exact() {
        let g = TimeGrid::new(vec![0.0, 0.1, 1.0 / 3.0, 0.5 + 1e-9, 1.0]).unwrap();
        let text = g.to_text();
        assert_eq!(text.lines().count(), 5);
        assert_eq!(TimeGrid::from_text(&text).unwrap(), g);
    }

    #[test]
    fn mesh_nodes() {
        let mesh = SpatialMesh::new(5).unwrap();
        let nodes = mesh.nodes();
        assert_eq!(nodes.len(), 6);
        assert_eq!(nodes[0], 0.0);
        assert_eq!(nodes[5], 1.0);
        assert!((mesh.dx() - 0.2).abs() < 1e-15);
        assert!(SpatialMesh::new(1).is_err());
    }

    #[test]
    fn transfer_reproduces_linear_functions() {
        let coarse = SpatialMesh::new(5).unwrap();
        let fine = SpatialMesh::new(100).unwrap();
        let v = fine.sample(|x| 2.0 * x - 0.5);
        let w = coarse.transfer_from(&fine, &v);
        for (j, val) in w.iter().enumerate() {
            assert!((val - (2.0 * coarse.node(j) - 0.5)).abs() < 1e-14);
        }
    }

    #[test]
    fn field_accessors_round_trip() {
        let grid = uniform_time_grid(0.0, 1.0, 4).unwrap();
        let mesh = SpatialMesh::new(3).unwrap();
        let mut field = SpaceTimeField::zeros(grid, mesh);
        for i in 0..4 {
            for j in 0..4 {
                field.set(i, j, (10 * i + j) as f64 + 0.125);
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(field.get(i, j), (10 * i + j) as f64 + 0.125);
                assert_eq!(field.row(i)[j], field.get(i, j));
            }
        }
    }

    #[test]
    fn at_time_interpolates_linearly() {
        let grid = TimeGrid::new(vec![0.0, 1.0, 3.0]).unwrap();
        let mesh = SpatialMesh::new(2).unwrap();
        let field = SpaceTimeField::sample(grid, mesh, |t, x| t + x);
        let mid = field.at_time(2.0);
        assert!((mid[1] - 2.5).abs() < 1e-15);
        assert_eq!(field.at_time(-1.0), field.row(0));
        assert_eq!(field.at_time(5.0), field.row(2));
    }
}

//! Piecewise-linear finite elements on the uniform mesh of (0,1).

use crate::banded::BandedMatrix;
use crate::grid::{SpaceTimeField, SpatialMesh};
use crate::quadrature::GAUSS3;

/// P1 mass matrix over all mesh nodes (boundary nodes included).
pub fn assemble_mass(mesh: &SpatialMesh) -> BandedMatrix {
    let dx = mesh.dx();
    assemble_element_matrix(mesh, [[dx / 3.0, dx / 6.0], [dx / 6.0, dx / 3.0]])
}

/// P1 stiffness matrix `∫ φ'_i φ'_j` over all mesh nodes.
pub fn assemble_stiffness(mesh: &SpatialMesh) -> BandedMatrix {
    let inv = 1.0 / mesh.dx();
    assemble_element_matrix(mesh, [[inv, -inv], [-inv, inv]])
}

fn assemble_element_matrix(mesh: &SpatialMesh, local: [[f64; 2]; 2]) -> BandedMatrix {
    let mut m = BandedMatrix::zeros(mesh.n_nodes(), 1, 1);
    for cell in 0..mesh.n_cells() {
        for a in 0..2 {
            for b in 0..2 {
                m.add(cell + a, cell + b, local[a][b]);
            }
        }
    }
    m
}

/// Row sums of the mass matrix.
pub fn lumped_mass(mesh: &SpatialMesh) -> Vec<f64> {
    let dx = mesh.dx();
    let mut d = vec![dx; mesh.n_nodes()];
    d[0] = 0.5 * dx;
    d[mesh.n_cells()] = 0.5 * dx;
    d
}

/// `∫ g ψ_j dx` for every nodal basis function, by 3-point Gauss per cell.
pub fn load_vector(mesh: &SpatialMesh, g: impl Fn(f64) -> f64) -> Vec<f64> {
    let dx = mesh.dx();
    let mut out = vec![0.0; mesh.n_nodes()];
    for cell in 0..mesh.n_cells() {
        let x0 = mesh.node(cell);
        for &(xi, w) in &GAUSS3 {
            let s = 0.5 * (xi + 1.0);
            let gv = g(x0 + s * dx) * w * 0.5 * dx;
            out[cell] += gv * (1.0 - s);
            out[cell + 1] += gv * s;
        }
    }
    out
}

/// Spatial quadrature points of the mesh as `(x, weight, cell, local coordinate)`.
pub fn quadrature_points(mesh: &SpatialMesh) -> Vec<(f64, f64, usize, f64)> {
    let dx = mesh.dx();
    let mut pts = Vec::with_capacity(3 * mesh.n_cells());
    for cell in 0..mesh.n_cells() {
        let x0 = mesh.node(cell);
        for &(xi, w) in &GAUSS3 {
            let s = 0.5 * (xi + 1.0);
            pts.push((x0 + s * dx, w * 0.5 * dx, cell, s));
        }
    }
    pts
}

/// `vᵀ M v` with the tridiagonal P1 mass matrix, without assembling it.
pub fn mass_norm_sq(mesh: &SpatialMesh, v: &[f64]) -> f64 {
    let dx = mesh.dx();
    v.windows(2)
        .map(|w| dx / 3.0 * (w[0] * w[0] + w[0] * w[1] + w[1] * w[1]))
        .sum()
}

/// `L²(t_0, t_m; L²(0,1))` norm of a nodal field: trapezoidal rule in time,
/// exact P1 mass in space.
pub fn l2_norm_spacetime(field: &SpaceTimeField) -> f64 {
    l2_norm_spacetime_sq(field).sqrt()
}

pub fn l2_norm_spacetime_sq(field: &SpaceTimeField) -> f64 {
    let mesh = field.mesh();
    let q: Vec<f64> = field.rows().map(|r| mass_norm_sq(mesh, r)).collect();
    field
        .grid()
        .steps()
        .zip(q.windows(2))
        .map(|(dt, w)| 0.5 * dt * (w[0] + w[1]))
        .sum::<f64>()
        .max(0.0)
}

/// Nodal Laplacian `-(K v)_j / (lumped mass)_j` at interior nodes; boundary
/// entries are zero.
pub fn discrete_laplacian(values: &[f64], mesh: &SpatialMesh) -> Vec<f64> {
    let n = mesh.n_nodes();
    assert_eq!(values.len(), n, "one value per mesh node expected");
    let inv_dx2 = 1.0 / (mesh.dx() * mesh.dx());
    let mut out = vec![0.0; n];
    for j in 1..n - 1 {
        out[j] = (values[j - 1] - 2.0 * values[j] + values[j + 1]) * inv_dx2;
    }
    out
}

//! Banded matrices and a direct LU solver with partial pivoting.

use crate::error::{Error, Result};

/// Pivots smaller than this (relative to the largest matrix entry) are
/// treated as singular.
pub const PIVOT_TOL: f64 = 1e-14;

/// Square matrix stored by diagonals with `lower` sub- and `upper`
/// super-diagonals.
///
/// Each row keeps `lower` extra slots above the band so that the LU
/// factorization can absorb fill-in from row interchanges in place.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    dim: usize,
    lower: usize,
    upper: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(dim: usize, lower: usize, upper: usize) -> Self {
        let width = 2 * lower + upper + 1;
        Self {
            dim,
            lower,
            upper,
            width,
            data: vec![0.0; dim * width],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, 0, 0);
        for i in 0..dim {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let (mut lower, mut upper) = (0, 0);
        for &(i, j, _) in triplets {
            if i > j {
                lower = lower.max(i - j);
            } else {
                upper = upper.max(j - i);
            }
        }
        let mut m = Self::zeros(dim, lower, upper);
        for &(i, j, v) in triplets {
            m.add(i, j, v);
        }
        m
    }

    /// Dense row-major input; the bandwidth is detected from the nonzeros.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let dim = rows.len();
        let mut triplets = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), dim, "matrix must be square");
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::from_triplets(dim, &triplets)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self) -> usize {
        self.lower
    }

    pub fn upper(&self) -> usize {
        self.upper
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.dim && j < self.dim && j + self.lower >= i && j <= i + self.upper
    }

    // Storage slot of (i, j); valid for i - lower <= j <= i + lower + upper.
    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.lower - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.slot(i, j)]
        } else {
            0.0
        }
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(self.in_band(i, j), "({i},{j}) outside the band");
        let s = self.slot(i, j);
        self.data[s] = value;
    }

    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        assert!(self.in_band(i, j), "({i},{j}) outside the band");
        let s = self.slot(i, j);
        self.data[s] += value;
    }

    fn col_range(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.lower)..(i + self.upper + 1).min(self.dim)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        (0..self.dim)
            .map(|i| self.col_range(i).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(self.matvec(y)).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.dim).all(|i| {
            self.col_range(i)
                .all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol)
        })
    }

    /// Zeroes row `i` and puts `diag` on its diagonal.
    pub fn replace_row_with_unit(&mut self, i: usize, diag: f64) {
        for j in self.col_range(i) {
            let s = self.slot(i, j);
            self.data[s] = 0.0;
        }
        self.set(i, i, diag);
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// LU factorization with partial (row) pivoting.
    pub fn factorize(&self) -> Result<BandedLu> {
        let n = self.dim;
        let (kl, ku) = (self.lower, self.upper);
        let mut a = self.clone();
        let mut pivots = vec![0usize; n];
        let threshold = PIVOT_TOL * self.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = a.data[a.slot(k, k)].abs();
            for r in k + 1..=last_row {
                let v = a.data[a.slot(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if !(best >= threshold) {
                return Err(Error::Singular { row: k, pivot: best });
            }
            pivots[k] = p;
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let (sk, sp) = (a.slot(k, j), a.slot(p, j));
                    a.data.swap(sk, sp);
                }
            }
            let pivot = a.data[a.slot(k, k)];
            for r in k + 1..=last_row {
                let sr = a.slot(r, k);
                let factor = a.data[sr] / pivot;
                a.data[sr] = factor;
                if factor == 0.0 {
                    continue;
                }
                for j in k + 1..=last_col {
                    let v = a.data[a.slot(k, j)];
                    let s = a.slot(r, j);
                    a.data[s] -= factor * v;
                }
            }
        }
        Ok(BandedLu { lu: a, pivots })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "rhs of length {} for a {}x{} matrix",
                rhs.len(),
                self.dim,
                self.dim
            )));
        }
        Ok(self.factorize()?.solve(rhs))
    }
}

/// Factors produced by [`BandedMatrix::factorize`].
#[derive(Debug, Clone)]
pub struct BandedLu {
    lu: BandedMatrix,
    pivots: Vec<usize>,
}

impl BandedLu {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let a = &self.lu;
        let n = a.dim;
        let (kl, ku) = (a.lower, a.upper);
        let mut x = rhs.to_vec();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            if xk != 0.0 {
                for r in k + 1..=(k + kl).min(n - 1) {
                    x[r] -= a.data[a.slot(r, k)] * xk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in k + 1..=(k + kl + ku).min(n - 1) {
                s -= a.data[a.slot(k, j)] * x[j];
            }
            x[k] = s / a.data[a.slot(k, k)];
        }
        x
    }
}

/// A banded matrix paired with its right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSystem {
    pub matrix: BandedMatrix,
    pub rhs: Vec<f64>,
}

impl BandedSystem {
    pub fn new(matrix: BandedMatrix, rhs: Vec<f64>) -> Result<Self> {
        if matrix.dim() == 0 {
            return Err(Error::DimensionMismatch("empty system".into()));
        }
        if rhs.len() != matrix.dim() {
            return Err(Error::DimensionMismatch(format!(
                "rhs of length {} for dimension {}",
                rhs.len(),
                matrix.dim()
            )));
        }
        Ok(Self { matrix, rhs })
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// `‖A x - b‖∞`
    pub fn residual_norm(&self, x: &[f64]) -> f64 {
        self.matrix
            .matvec(x)
            .iter()
            .zip(&self.rhs)
            .fold(0.0_f64, |m, (ax, b)| m.max((ax - b).abs()))
    }
}

pub fn solve_banded(system: &BandedSystem) -> Result<Vec<f64>> {
    system.matrix.solve(&system.rhs)
}

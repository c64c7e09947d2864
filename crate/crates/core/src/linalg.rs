//! Small dense matrices and the handful of solvers the rest of the crate
//! needs. Everything here targets dimensions in the single or low double
//! digits; no attempt is made at cache blocking or sparsity.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Relative pivot threshold below which a linear solve is declared singular.
const PIVOT_REL_TOL: f64 = 1e-12;

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Matrix {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Build from row slices. Panics if the rows are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == n_cols), "ragged rows");
        Matrix {
            n_rows,
            n_cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.n_cols, self.n_rows);
        for i in 0..self.n_rows {
            for j in 0..self.n_cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            data: self.data.iter().map(|x| c * x).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n_rows, other.n_rows);
        assert_eq!(self.n_cols, other.n_cols);
        Matrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    /// Principal submatrix on the (sorted) index set `idx`.
    pub fn principal_submatrix(&self, idx: &[usize]) -> Matrix {
        let k = idx.len();
        let mut s = Matrix::zeros(k, k);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                s[(a, b)] = self[(i, j)];
            }
        }
        s
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n_cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n_cols + j]
    }
}

// Matrices serialize as row arrays so the JSON output stays readable.
impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        Ok(Matrix::from_rows(&rows))
    }
}

/// Row vector times matrix: `(v M)_j = sum_i v_i M[i][j]`.
pub fn vec_mat(v: &[f64], m: &Matrix) -> Vec<f64> {
    assert_eq!(v.len(), m.n_rows());
    let mut out = vec![0.0; m.n_cols()];
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        for (j, out_j) in out.iter_mut().enumerate() {
            *out_j += vi * m[(i, j)];
        }
    }
    out
}

/// Matrix times column vector.
pub fn mat_vec(m: &Matrix, x: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), m.n_cols());
    (0..m.n_rows())
        .map(|i| m.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    assert!(a.is_square());
    assert_eq!(a.n_rows(), b.len());
    let n = a.n_rows();
    let mut m = a.clone();
    let mut rhs = b.to_vec();
    let scale = m.max_abs().max(1e-300);

    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r1, &r2| m[(r1, col)].abs().partial_cmp(&m[(r2, col)].abs()).unwrap())
            .unwrap();
        let pivot = m[(pivot_row, col)];
        if pivot.abs() < PIVOT_REL_TOL * scale {
            return Err(Error::Numeric(format!(
                "singular linear system (pivot {pivot:.3e} at column {col})"
            )));
        }
        if pivot_row != col {
            for j in 0..n {
                let tmp = m[(col, j)];
                m[(col, j)] = m[(pivot_row, j)];
                m[(pivot_row, j)] = tmp;
            }
            rhs.swap(col, pivot_row);
        }
        for row in col + 1..n {
            let factor = m[(row, col)] / m[(col, col)];
            if factor == 0.0 {
                continue;
            }
            m[(row, col)] = 0.0;
            for j in col + 1..n {
                m[(row, j)] -= factor * m[(col, j)];
            }
            rhs[row] -= factor * rhs[col];
        }
    }

    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for j in row + 1..n {
            acc -= m[(row, j)] * x[j];
        }
        x[row] = acc / m[(row, row)];
    }
    Ok(x)
}

/// Left Perron pair of an irreducible non-negative matrix with strictly
/// positive diagonal (hence primitive): returns `(rho, v)` with `v B = rho v`,
/// `v > 0`, `|v|_1 = 1`.
///
/// Power iteration with 1-norm normalization; if the subdominant gap is too
/// small to converge in `MAX_ITERS`, falls back to normalized repeated
/// squaring of `B`, which squares the gap 60 times.
fn left_perron_primitive(b: &Matrix) -> (f64, Vec<f64>) {
    const MAX_ITERS: usize = 100_000;
    const RQ_TOL: f64 = 1e-13;
    let k = b.n_rows();
    if k == 1 {
        return (b[(0, 0)], vec![1.0]);
    }

    let mut v = vec![1.0 / k as f64; k];
    let mut prev_est = f64::NAN;
    for _ in 0..MAX_ITERS {
        let w = vec_mat(&v, b);
        let norm: f64 = w.iter().sum();
        let est = norm; // |v|_1 == 1 and w > 0, so the 1-norm ratio is the estimate
        v = w.iter().map(|x| x / norm).collect();
        if (est - prev_est).abs() < RQ_TOL * est.abs().max(1.0) {
            return (est, v);
        }
        prev_est = est;
    }

    // Repeated squaring: after 60 squarings the subdominant ratio is
    // gap^(2^60), so the row sums give the Perron direction to machine
    // precision. Eigenvalue is recovered on the original matrix.
    let mut p = b.clone();
    for _ in 0..60 {
        let norm = p.max_abs();
        p = p.scale(1.0 / norm);
        let mut sq = Matrix::zeros(k, k);
        for i in 0..k {
            for l in 0..k {
                let pil = p[(i, l)];
                if pil == 0.0 {
                    continue;
                }
                for j in 0..k {
                    sq[(i, j)] += pil * p[(l, j)];
                }
            }
        }
        p = sq;
    }
    let ones = vec![1.0; k];
    let mut v = vec_mat(&ones, &p);
    let norm: f64 = v.iter().sum();
    for x in &mut v {
        *x /= norm;
    }
    let w = vec_mat(&v, b);
    let est: f64 = w.iter().sum();
    (est, v)
}

/// Perron root and left Perron vector of an irreducible Metzler matrix.
///
/// Shifts by `s = 1 + max |diag|` so the block becomes non-negative with a
/// strictly positive diagonal, runs the primitive-matrix power iteration,
/// and shifts the eigenvalue back.
pub fn perron_left_irreducible(block: &Matrix) -> (f64, Vec<f64>) {
    let k = block.n_rows();
    if k == 1 {
        return (block[(0, 0)], vec![1.0]);
    }
    let max_diag = (0..k).fold(0.0f64, |m, i| m.max(block[(i, i)].abs()));
    let shift = 1.0 + max_diag;
    let shifted = block.add(&Matrix::identity(k).scale(shift));
    let (rho, v) = left_perron_primitive(&shifted);
    (rho - shift, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_small_system() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        let x = solve(&a, &[5.0, 10.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn solve_reports_singular() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(solve(&a, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn perron_of_symmetric_block() {
        // [[-1,2],[2,-1]] has largest eigenvalue 1 with left vector (1,1)/2.
        let m = Matrix::from_rows(&[vec![-1.0, 2.0], vec![2.0, -1.0]]);
        let (r, v) = perron_left_irreducible(&m);
        assert!((r - 1.0).abs() < 1e-11);
        assert!((v[0] - 0.5).abs() < 1e-9);
        assert!((v[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn perron_matches_closed_form_2x2() {
        // [[-4, 1.5], [0.5, 0]]: eigenvalues -2 +- 2 sqrt(1 + 3/16).
        let m = Matrix::from_rows(&[vec![-4.0, 1.5], vec![0.5, 0.0]]);
        let (r, _) = perron_left_irreducible(&m);
        let expected = -2.0 + 2.0 * (1.0 + 3.0 / 16.0f64).sqrt();
        assert!((r - expected).abs() < 1e-11, "r={r}, expected={expected}");
    }

    #[test]
    fn vec_mat_row_convention() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let v = vec_mat(&[1.0, 1.0], &m);
        assert_eq!(v, vec![4.0, 6.0]);
    }
}

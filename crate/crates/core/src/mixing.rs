//! Stationary distribution of the switching matrix, the stationary-weighted
//! mixed matrix, and the per-species correction vectors `z^m` that absorb the
//! difference between each environment's drift and the mixed drift.
//!
//! For each species `m` in the designated support, `z^m` solves
//!
//! ```text
//! sum_{j != i} q_ij (z^m_j - z^m_i) + (v M_i)_m  =  (v M)_m / (w_i n)
//! ```
//!
//! for every environment `i`. The solution is unique up to a common additive
//! shift; we normalize so the minimum entry is 1, which keeps the vectors
//! strictly positive.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::LinearData;

/// Residual bound certified by construction.
pub const Z_IDENTITY_TOL: f64 = 1e-10;
/// Residual above which inputs are rejected as inconsistent.
const Z_REJECT_TOL: f64 = 1e-8;
/// Orthogonality check on the right-hand side of the z-systems.
const PSI_ORTHO_TOL: f64 = 1e-9;
/// Residual bound on `w Q` for the stationary distribution.
pub const STATIONARY_TOL: f64 = 1e-10;

/// Stationary distribution and mixed matrix of a model.
#[derive(Debug, Clone, Serialize)]
pub struct MixData {
    pub w: Vec<f64>,
    pub mixed_matrix: Matrix,
}

pub fn mix_data(linear: &[LinearData], q: &Matrix) -> Result<MixData> {
    let w = stationary_distribution(q)?;
    let mixed_matrix = mixed_matrix(linear, &w);
    Ok(MixData { w, mixed_matrix })
}

/// Unique stationary distribution of an irreducible conservative rate matrix.
///
/// Solves the transposed balance equations with the first equation replaced
/// by the normalization `sum w = 1`; the replaced equation is redundant
/// because the balance equations sum to zero. The system is solved on the
/// magnitude-normalized matrix with one step of iterative refinement so the
/// residual bound holds for badly scaled rates too.
pub fn stationary_distribution(q: &Matrix) -> Result<Vec<f64>> {
    assert!(q.is_square());
    let n = q.n_rows();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let scale = q.max_abs().max(1e-300);
    let qt = q.transpose().scale(1.0 / scale);
    let mut a = Matrix::zeros(n, n);
    for j in 0..n {
        a[(0, j)] = 1.0;
    }
    for i in 1..n {
        for j in 0..n {
            a[(i, j)] = qt[(i, j)];
        }
    }
    let mut rhs = vec![0.0; n];
    rhs[0] = 1.0;
    let mut w = linalg::solve(&a, &rhs)
        .map_err(|_| Error::Numeric("stationary solve is singular: q not irreducible?".into()))?;
    let residual: Vec<f64> = {
        let aw = crate::linalg::mat_vec(&a, &w);
        rhs.iter().zip(&aw).map(|(b, y)| b - y).collect()
    };
    if let Ok(correction) = linalg::solve(&a, &residual) {
        for (wi, c) in w.iter_mut().zip(&correction) {
            *wi += c;
        }
    }

    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    if w.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Numeric(
            "stationary distribution has a non-positive entry".into(),
        ));
    }
    let residual = linalg::vec_mat(&w, q)
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()));
    if residual > STATIONARY_TOL {
        return Err(Error::Numeric(format!(
            "stationary residual {residual:.3e} exceeds {STATIONARY_TOL:.0e}"
        )));
    }
    Ok(w)
}

/// Stationary-weighted average of the environment matrices.
pub fn mixed_matrix(linear: &[LinearData], w: &[f64]) -> Matrix {
    assert_eq!(linear.len(), w.len());
    assert!(!linear.is_empty());
    let d = linear[0].matrix.n_rows();
    let mut m = Matrix::zeros(d, d);
    for (data, &wi) in linear.iter().zip(w) {
        m = m.add(&data.matrix.scale(wi));
    }
    m
}

/// Correction vectors, one per species: `z[m]` has length `n_env` and is the
/// zero vector for `m` outside the designated support.
#[derive(Debug, Clone, Serialize)]
pub struct ZVectors {
    pub z: Vec<Vec<f64>>,
}

impl ZVectors {
    /// `u^i` with `u^i_m = z^m_i`.
    pub fn env_vector(&self, i: usize) -> Vec<f64> {
        self.z.iter().map(|zm| zm[i]).collect()
    }
}

/// Solve the correction systems for every `m` in `support` and re-verify the
/// defining identity coordinatewise.
///
/// `w` must be the stationary distribution of `q`; a residual above 1e-8 is
/// rejected as inconsistent input.
pub fn solve_z(
    q: &Matrix,
    linear: &[LinearData],
    w: &[f64],
    v: &[f64],
    support: &[usize],
) -> Result<ZVectors> {
    let n = q.n_rows();
    let d = v.len();
    assert_eq!(linear.len(), n);
    assert_eq!(w.len(), n);

    let mixed = mixed_matrix(linear, w);
    let v_mixed = linalg::vec_mat(v, &mixed);
    let v_envs: Vec<Vec<f64>> = linear
        .iter()
        .map(|l| linalg::vec_mat(v, &l.matrix))
        .collect();

    // Coefficient matrix shared by all m: diag(w) Q with the first row
    // replaced by the shift constraint 1.z = 0. The replaced balance row is
    // redundant because the rows of diag(w) Q sum to the zero vector.
    let mut a = Matrix::zeros(n, n);
    for j in 0..n {
        a[(0, j)] = 1.0;
    }
    for i in 1..n {
        for j in 0..n {
            a[(i, j)] = w[i] * q[(i, j)];
        }
    }

    let mut z = vec![vec![0.0; n]; d];
    for &m in support {
        assert!(m < d, "support index out of range");
        // psi_i = (v (n^{-1} M - w_i M_i))_m
        let psi: Vec<f64> = (0..n)
            .map(|i| v_mixed[m] / n as f64 - w[i] * v_envs[i][m])
            .collect();
        let ortho: f64 = psi.iter().sum();
        if ortho.abs() > PSI_ORTHO_TOL * psi.iter().fold(1.0f64, |a, x| a.max(x.abs())) {
            return Err(Error::Numeric(format!(
                "z-system right-hand side not orthogonal to ones (sum {ortho:.3e}); w not stationary?"
            )));
        }
        let mut rhs = vec![0.0; n];
        rhs[0] = 0.0;
        rhs[1..n].copy_from_slice(&psi[1..n]);
        let raw = if n == 1 {
            vec![0.0]
        } else {
            linalg::solve(&a, &rhs)
                .map_err(|_| Error::Numeric("z-system solve failed: q not irreducible?".into()))?
        };
        // Shift so the minimum entry is 1: the identity only constrains
        // differences, and positivity is needed downstream.
        let min = raw.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        z[m] = raw.iter().map(|x| x - min + 1.0).collect();
    }

    let zv = ZVectors { z };
    let residual = z_identity_residual(q, linear, w, v, support, &zv);
    if residual > Z_REJECT_TOL {
        return Err(Error::Numeric(format!(
            "z identity residual {residual:.3e}; inconsistent inputs (w not stationary?)"
        )));
    }
    Ok(zv)
}

/// Max coordinatewise residual of the defining identity over `support`.
pub fn z_identity_residual(
    q: &Matrix,
    linear: &[LinearData],
    w: &[f64],
    v: &[f64],
    support: &[usize],
    zv: &ZVectors,
) -> f64 {
    let n = q.n_rows();
    let mixed = mixed_matrix(linear, w);
    let v_mixed = linalg::vec_mat(v, &mixed);
    let mut worst = 0.0f64;
    for &m in support {
        let zm = &zv.z[m];
        for i in 0..n {
            let coupling: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| q[(i, j)] * (zm[j] - zm[i]))
                .sum();
            let v_mi = linalg::vec_mat(v, &linear[i].matrix)[m];
            let lhs = coupling + v_mi;
            let rhs = v_mixed[m] / (w[i] * n as f64);
            worst = worst.max((lhs - rhs).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SwitchedModel;
    use crate::parse::parse_model;

    fn symmetric_two_state(rate: f64) -> Matrix {
        Matrix::from_rows(&[vec![-rate, rate], vec![rate, -rate]])
    }

    #[test]
    fn stationary_symmetric() {
        let w = stationary_distribution(&symmetric_two_state(1.0)).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-12);
        assert!((w[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn stationary_birth_death_binomial() {
        // Tridiagonal chain with up-rates n-i+1 and down-rates i-1 on n+1
        // states: stationary weights are binomial(n, i-1) / 2^n.
        let n = 4;
        let size = n + 1;
        let mut q = Matrix::zeros(size, size);
        for i in 0..size {
            if i + 1 < size {
                q[(i, i + 1)] = (n - i) as f64;
            }
            if i > 0 {
                q[(i, i - 1)] = i as f64;
            }
            q[(i, i)] = -((0..size)
                .filter(|&j| j != i)
                .map(|j| q[(i, j)])
                .sum::<f64>());
        }
        let w = stationary_distribution(&q).unwrap();
        let binom = [1.0, 4.0, 6.0, 4.0, 1.0];
        for (i, b) in binom.iter().enumerate() {
            assert!((w[i] - b / 16.0).abs() < 1e-12, "w[{i}] = {}", w[i]);
        }
    }

    #[test]
    fn stationary_uniform_for_grouped_pairs() {
        // The paired 4-state matrix is symmetric, so the uniform vector
        // solves the balance equations for any cross-pair rate.
        let w = stationary_distribution(&crate::drift::grouped_q(0.1)).unwrap();
        for wi in w {
            assert!((wi - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn stationary_scale_invariant() {
        let q = Matrix::from_rows(&[
            vec![-3.0, 1.0, 2.0],
            vec![0.5, -0.5, 0.0],
            vec![4.0, 1.0, -5.0],
        ]);
        let w1 = stationary_distribution(&q).unwrap();
        let w2 = stationary_distribution(&q.scale(37.5)).unwrap();
        for (a, b) in w1.iter().zip(&w2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn two_env_model() -> SwitchedModel {
        // Destructive cross-production pair at epsilon = 0.25.
        parse_model(
            "species S1 S2\n\
             environment 1\n\
             S1 -> 0 @ 3.75\n\
             0 -> S1 @ 1\n\
             S1 -> 2 S2 @ 0.25\n\
             S2 -> 2 S2 @ 2\n\
             S2 -> 0 @ 1.25\n\
             S2 -> 2 S1 @ 0.75\n\
             0 -> S2 @ 1\n\
             environment 2\n\
             S1 -> 0 @ 1.25\n\
             S1 -> 2 S1 @ 2\n\
             0 -> S1 @ 1\n\
             S1 -> 2 S2 @ 0.75\n\
             S2 -> 0 @ 3.75\n\
             S2 -> 2 S1 @ 0.25\n\
             0 -> S2 @ 1\n\
             switching\n\
             q 1 2 1\n\
             q 2 1 1\n",
        )
        .unwrap()
    }

    #[test]
    fn z_closed_form_two_environments() {
        // For n = 2 the construction 2 w1 w2 s z^m_i = (w_i v M_i)_m, with s
        // the total switching rate q12 + q21, solves the identity; solver
        // output must match it up to a common shift. For s = 1 this is the
        // plain form 2 w1 w2 z^m_i = (w_i v M_i)_m.
        let model = two_env_model();
        let linear = model.linearizations();
        let w = stationary_distribution(model.q()).unwrap();
        let s = model.q()[(0, 1)] + model.q()[(1, 0)];
        let v = vec![1.0, 1.0];
        let support = [0usize, 1];
        let zv = solve_z(model.q(), &linear, &w, &v, &support).unwrap();
        for m in 0..2 {
            let closed: Vec<f64> = (0..2)
                .map(|i| {
                    let v_mi = linalg::vec_mat(&v, &linear[i].matrix)[m];
                    w[i] * v_mi / (2.0 * w[0] * w[1] * s)
                })
                .collect();
            let got_diff = zv.z[m][0] - zv.z[m][1];
            let closed_diff = closed[0] - closed[1];
            assert!(
                (got_diff - closed_diff).abs() < 1e-10,
                "m={m}: {got_diff} vs {closed_diff}"
            );
        }
    }

    #[test]
    fn z_identity_residual_small() {
        let model = two_env_model();
        let linear = model.linearizations();
        let w = stationary_distribution(model.q()).unwrap();
        let v = vec![1.0, 1.0];
        let support = [0usize, 1];
        let zv = solve_z(model.q(), &linear, &w, &v, &support).unwrap();
        let res = z_identity_residual(model.q(), &linear, &w, &v, &support, &zv);
        assert!(res <= Z_IDENTITY_TOL, "residual {res}");
        // All entries on the support strictly positive with floor 1.
        for m in 0..2 {
            assert!(zv.z[m].iter().all(|&x| x >= 1.0));
        }
    }

    #[test]
    fn z_single_environment() {
        let model = parse_model("species A\nenvironment 1\nA -> 0 @ 1\n").unwrap();
        let linear = model.linearizations();
        let w = vec![1.0];
        let zv = solve_z(model.q(), &linear, &w, &[1.0], &[0]).unwrap();
        assert_eq!(zv.z[0], vec![1.0]);
    }

    #[test]
    fn z_shift_invariance() {
        // Adding a constant to z^m leaves the identity's left side unchanged.
        let model = two_env_model();
        let linear = model.linearizations();
        let w = stationary_distribution(model.q()).unwrap();
        let v = vec![0.5, 2.0];
        let support = [0usize, 1];
        let mut zv = solve_z(model.q(), &linear, &w, &v, &support).unwrap();
        let base = z_identity_residual(model.q(), &linear, &w, &v, &support, &zv);
        for zm in &mut zv.z {
            for x in zm.iter_mut() {
                *x += 17.25;
            }
        }
        let shifted = z_identity_residual(model.q(), &linear, &w, &v, &support, &zv);
        assert!((base - shifted).abs() < 1e-10);
    }
}

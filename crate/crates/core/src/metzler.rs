//! Constructive stability toolkit for Metzler matrices: Frobenius normal
//! form, spectral abscissa via per-block Perron roots, and the direction
//! certificates that witness stability or instability.
//!
//! Conventions: row vectors act on the left (`v M`), and a matrix is stable
//! when its largest (always real, for Metzler) eigenvalue is negative.
//! Matrices within [`ABSCISSA_TOL`] of the stability boundary yield no
//! certificate of either kind; callers treat that as indeterminate.

use serde::Serialize;

use crate::graph;
use crate::linalg::{self, Matrix};

/// Absolute tolerance on the spectral abscissa around the stability boundary.
pub const ABSCISSA_TOL: f64 = 1e-9;

/// True iff all off-diagonal entries are non-negative (exact comparison).
pub fn is_metzler(m: &Matrix) -> bool {
    assert!(m.is_square());
    let d = m.n_rows();
    (0..d).all(|i| (0..d).all(|j| i == j || m[(i, j)] >= 0.0))
}

/// Frobenius normal form: the strongly connected components of the nonzero
/// off-diagonal pattern, ordered so the permuted matrix is block
/// upper-triangular.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FrobeniusForm {
    /// Index sets partitioning `0..d`, each inducing an irreducible block.
    pub blocks: Vec<Vec<usize>>,
}

pub fn frobenius_form(m: &Matrix) -> FrobeniusForm {
    assert!(m.is_square());
    let d = m.n_rows();
    let adj: Vec<Vec<usize>> = (0..d)
        .map(|i| (0..d).filter(|&j| j != i && m[(i, j)] != 0.0).collect())
        .collect();
    FrobeniusForm {
        blocks: graph::strongly_connected_components(&adj),
    }
}

/// Largest eigenvalue of a Metzler matrix: the maximum of the Perron roots of
/// its Frobenius blocks.
///
/// Panics if `m` is not Metzler.
pub fn spectral_abscissa(m: &Matrix) -> f64 {
    assert!(is_metzler(m), "spectral_abscissa requires a Metzler matrix");
    frobenius_form(m)
        .blocks
        .iter()
        .map(|block| linalg::perron_left_irreducible(&m.principal_submatrix(block)).0)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    /// `v > 0` with `v M <= -margin` elementwise.
    Decreasing,
    /// `v > 0` with `v M >= margin` elementwise.
    Increasing,
    /// `v >= 0` with `(v M)_m >= margin` on `support = supp(v)`.
    UnstableSupport,
}

/// A direction certificate, re-verified by direct multiplication at
/// construction time so a returned certificate is always sound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionCertificate {
    pub kind: CertificateKind,
    pub v: Vec<f64>,
    pub support: Vec<usize>,
    pub margin: f64,
}

impl DirectionCertificate {
    /// Check the kind's inequalities against `m` with the stored margin.
    pub fn verify(&self, m: &Matrix) -> bool {
        if self.margin <= 0.0 {
            return false;
        }
        let vm = linalg::vec_mat(&self.v, m);
        let support_ok = self
            .support
            .iter()
            .all(|&i| i < self.v.len() && self.v[i] > 0.0);
        match self.kind {
            CertificateKind::Decreasing => {
                self.v.iter().all(|&x| x > 0.0) && vm.iter().all(|&x| x <= -self.margin)
            }
            CertificateKind::Increasing => {
                self.v.iter().all(|&x| x > 0.0) && vm.iter().all(|&x| x >= self.margin)
            }
            CertificateKind::UnstableSupport => {
                support_ok
                    && !self.support.is_empty()
                    && self
                        .v
                        .iter()
                        .enumerate()
                        .all(|(i, &x)| self.support.contains(&i) == (x > 0.0))
                    && self.support.iter().all(|&i| vm[i] >= self.margin)
            }
        }
    }
}

/// Strictly positive `v` with `v M` elementwise negative, present exactly
/// when `m` is stable (abscissa below `-ABSCISSA_TOL`).
///
/// Solves `v M = -1`; for a stable Metzler matrix the inverse is entrywise
/// non-positive with no zero column, which forces `v > 0`. The stored margin
/// is recomputed from the actual products.
pub fn decreasing_direction(m: &Matrix) -> Option<DirectionCertificate> {
    assert!(is_metzler(m));
    if spectral_abscissa(m) >= -ABSCISSA_TOL {
        return None;
    }
    let d = m.n_rows();
    // v M = -1  <=>  M^T v^T = -1^T.
    let v = linalg::solve(&m.transpose(), &vec![-1.0; d]).ok()?;
    let vm = linalg::vec_mat(&v, m);
    let margin = vm.iter().fold(f64::INFINITY, |acc, &x| acc.min(-x));
    let cert = DirectionCertificate {
        kind: CertificateKind::Decreasing,
        v,
        support: (0..d).collect(),
        margin,
    };
    cert.verify(m).then_some(cert)
}

/// Strictly positive `v` with `v M` elementwise positive, present exactly
/// when every Frobenius block has a positive Perron root.
///
/// Assembled from per-block left Perron vectors scaled by powers of `gamma`
/// along the topological block order. Off-diagonal blocks of a Metzler matrix
/// are non-negative, so `gamma = 1` already works; the doubling loop is a
/// verified fallback.
pub fn increasing_direction(m: &Matrix) -> Option<DirectionCertificate> {
    assert!(is_metzler(m));
    let d = m.n_rows();
    let form = frobenius_form(m);
    let mut roots = Vec::with_capacity(form.blocks.len());
    let mut vectors = Vec::with_capacity(form.blocks.len());
    for block in &form.blocks {
        let (r, w) = linalg::perron_left_irreducible(&m.principal_submatrix(block));
        if r <= ABSCISSA_TOL {
            return None;
        }
        roots.push(r);
        vectors.push(w);
    }
    let min_root = roots.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let rel_margin = 0.5 * min_root;

    let mut gamma = 1.0f64;
    while gamma <= 2f64.powi(60) {
        let mut v = vec![0.0; d];
        for (rank, block) in form.blocks.iter().enumerate() {
            let scale = gamma.powi(rank as i32);
            for (&i, &w) in block.iter().zip(&vectors[rank]) {
                v[i] = scale * w;
            }
        }
        let vm = linalg::vec_mat(&v, m);
        if vm.iter().zip(&v).all(|(&p, &vi)| p >= rel_margin * vi) {
            let margin = vm.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            let cert = DirectionCertificate {
                kind: CertificateKind::Increasing,
                v,
                support: (0..d).collect(),
                margin,
            };
            return cert.verify(m).then_some(cert);
        }
        gamma *= 2.0;
    }
    unreachable!("increasing direction assembly failed for all gamma up to 2^60");
}

/// Non-negative `v` supported on an unstable Frobenius block, present exactly
/// when the abscissa exceeds `ABSCISSA_TOL`.
///
/// Picks the block with maximal Perron root (first in topological order on
/// ties), embeds its left Perron vector with zeros elsewhere; on the support
/// `(v M)_m = r v_m`.
pub fn unstable_support_vector(m: &Matrix) -> Option<DirectionCertificate> {
    assert!(is_metzler(m));
    let d = m.n_rows();
    let form = frobenius_form(m);
    let mut best: Option<(f64, usize)> = None;
    let mut vectors = Vec::with_capacity(form.blocks.len());
    for (idx, block) in form.blocks.iter().enumerate() {
        let (r, w) = linalg::perron_left_irreducible(&m.principal_submatrix(block));
        vectors.push(w);
        if best.is_none_or(|(br, _)| r > br) {
            best = Some((r, idx));
        }
    }
    let (r, idx) = best?;
    if r <= ABSCISSA_TOL {
        return None;
    }
    let block = &form.blocks[idx];
    let mut v = vec![0.0; d];
    for (&i, &w) in block.iter().zip(&vectors[idx]) {
        v[i] = w;
    }
    let vm = linalg::vec_mat(&v, m);
    let margin = block.iter().fold(f64::INFINITY, |a, &i| a.min(vm[i]));
    let cert = DirectionCertificate {
        kind: CertificateKind::UnstableSupport,
        v,
        support: block.clone(),
        margin,
    };
    cert.verify(m).then_some(cert)
}

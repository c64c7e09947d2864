//! Exact generator evaluation on concrete Lyapunov functions, construction
//! of the regime Lyapunov functions from certificates, and verification of
//! the drift inequalities, including sufficient switching-rate thresholds.
//!
//! The thresholds reported here are boundaries of sufficient conditions
//! found on doubling/halving grids over `[2^-30, 2^30]`; they are not phase
//! boundaries. Algebraic passes are the certificates; lattice-shell sampling
//! only guards against implementation bugs and never certifies anything.

use serde::Serialize;

use crate::classify::{self, Analysis};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::metzler::{CertificateKind, DirectionCertificate};
use crate::mixing::{self, ZVectors};
use crate::model::{propensity, LinearData, SwitchedModel};

/// Switching-rate grids scan powers of two in this exponent range.
const KAPPA_GRID_MIN_EXP: i32 = -30;
const KAPPA_GRID_MAX_EXP: i32 = 30;
/// Largest lattice-shell radius attempted.
const SHELL_MAX_B: f64 = 1.0e12;
/// Cap on sampled lattice states per shell band.
const SHELL_SAMPLE_CAP: usize = 10_000;
/// Cap on enumerated states in the box check.
const BOX_STATE_CAP: f64 = 1.0e6;

/// Concrete Lyapunov functions used by the drift checks.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum LyapunovFn {
    /// `h(x, i) = c^i . x`.
    Linear { coeffs: Vec<Vec<f64>> },
    /// `h(x, i) = 1 - 1 / (1 + c^i . x)`.
    Reciprocal { coeffs: Vec<Vec<f64>> },
    /// `h(x, i) = s_i * x_1 ^ p`, single-species models only.
    Power { scales: Vec<f64>, exponent: f64 },
}

impl LyapunovFn {
    pub fn evaluate(&self, x: &[u64], env: usize) -> f64 {
        match self {
            LyapunovFn::Linear { coeffs } => dot_state(&coeffs[env], x),
            LyapunovFn::Reciprocal { coeffs } => 1.0 - 1.0 / (1.0 + dot_state(&coeffs[env], x)),
            LyapunovFn::Power { scales, exponent } => {
                assert_eq!(x.len(), 1, "power form is single-species only");
                scales[env] * (x[0] as f64).powf(*exponent)
            }
        }
    }

    fn check_shape(&self, model: &SwitchedModel) -> Result<()> {
        let n = model.n_env();
        let d = model.n_species();
        let coeffs_ok = |coeffs: &Vec<Vec<f64>>| {
            coeffs.len() == n
                && coeffs
                    .iter()
                    .all(|c| c.len() == d && c.iter().all(|&x| x >= 0.0))
        };
        let ok = match self {
            LyapunovFn::Linear { coeffs } | LyapunovFn::Reciprocal { coeffs } => coeffs_ok(coeffs),
            LyapunovFn::Power { scales, .. } => scales.len() == n && d == 1,
        };
        ok.then_some(())
            .ok_or_else(|| Error::Input("lyapunov function shape does not match the model".into()))
    }
}

fn dot_state(c: &[f64], x: &[u64]) -> f64 {
    c.iter().zip(x).map(|(a, &b)| a * b as f64).sum()
}

/// Exact generator value `L_kappa h (x, i)`: environment-jump terms plus
/// propensity-weighted reaction increments. Mass action guarantees that any
/// transition with positive propensity stays in the non-negative lattice.
pub fn generator_apply(
    model: &SwitchedModel,
    kappa: f64,
    h: &LyapunovFn,
    x: &[u64],
    env: usize,
) -> Result<f64> {
    h.check_shape(model)?;
    generator_apply_fn(model, kappa, &|x, i| h.evaluate(x, i), x, env)
}

/// Generator applied to an arbitrary function of (state, environment).
pub fn generator_apply_fn(
    model: &SwitchedModel,
    kappa: f64,
    h: &dyn Fn(&[u64], usize) -> f64,
    x: &[u64],
    env: usize,
) -> Result<f64> {
    let d = model.n_species();
    let n = model.n_env();
    if x.len() != d || env >= n {
        return Err(Error::Input("state or environment out of range".into()));
    }
    if !(kappa >= 0.0) {
        return Err(Error::Input(format!(
            "kappa must be non-negative, got {kappa}"
        )));
    }
    let q = model.q();
    let h_here = h(x, env);
    let mut acc = 0.0;
    for j in 0..n {
        if j != env && q[(env, j)] != 0.0 {
            acc += kappa * q[(env, j)] * (h(x, j) - h_here);
        }
    }
    let mut next = vec![0u64; d];
    for reaction in &model.environment(env).reactions {
        let lambda = propensity(reaction, x);
        if lambda <= 0.0 {
            continue;
        }
        for (m, slot) in next.iter_mut().enumerate() {
            let v = x[m] as i64 + reaction.delta(m);
            debug_assert!(v >= 0, "positive propensity implies a lattice move");
            *slot = v as u64;
        }
        acc += lambda * (h(&next, env) - h_here);
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftMode {
    ErgodicDrift,
    TransientDrift,
}

/// A sampled generator value that breaks the inequality under test.
#[derive(Debug, Clone, Serialize)]
pub struct ViolationSample {
    pub x: Vec<u64>,
    pub env: usize,
    pub value: f64,
}

/// Outcome of a drift verification.
///
/// `algebraic_pass` reports the exact leading-coefficient inequality and is
/// the actual certificate. For transient checks `b` is the smallest sampled
/// shell radius with all generator values positive; for ergodic box checks
/// `c` is half the decay ratio fitted on the box boundary and `dconst` the
/// smallest offset making the inequality hold on the inner half of the box.
#[derive(Debug, Clone, Serialize)]
pub struct DriftReport {
    pub mode: DriftMode,
    pub algebraic_pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dconst: Option<f64>,
    pub sampled_violations: Vec<ViolationSample>,
}

fn kappa_grid_doubling() -> impl Iterator<Item = f64> {
    (KAPPA_GRID_MIN_EXP..=KAPPA_GRID_MAX_EXP).map(|e| 2f64.powi(e))
}

fn kappa_grid_halving() -> impl Iterator<Item = f64> {
    (KAPPA_GRID_MIN_EXP..=KAPPA_GRID_MAX_EXP)
        .rev()
        .map(|e| 2f64.powi(e))
}

/// Fast-regime ergodic Lyapunov function `h(x, i) = (v + kappa^{-1} u^i) . x`
/// built from a decreasing direction of the mixed matrix.
///
/// Returns the coefficients at the smallest grid `kappa` for which the exact
/// per-environment leading-coefficient vector is elementwise negative,
/// together with that threshold.
pub fn build_fast_ergodic(
    model: &SwitchedModel,
    cert: &DirectionCertificate,
) -> Result<(LyapunovFn, f64)> {
    if cert.kind != CertificateKind::Decreasing {
        return Err(Error::Input(
            "expected a decreasing-direction certificate".into(),
        ));
    }
    let analysis = classify::analyze(model)?;
    let d = model.n_species();
    let full_support: Vec<usize> = (0..d).collect();
    let zv = mixing::solve_z(
        model.q(),
        &analysis.linear,
        &analysis.mix.w,
        &cert.v,
        &full_support,
    )?;
    let u: Vec<Vec<f64>> = (0..model.n_env()).map(|i| zv.env_vector(i)).collect();

    for kappa in kappa_grid_doubling() {
        if fast_ergodic_coefficients(model, &analysis, &cert.v, &u, kappa)
            .iter()
            .all(|row| row.iter().all(|&x| x < 0.0))
        {
            let coeffs = u
                .iter()
                .map(|ui| cert.v.iter().zip(ui).map(|(a, b)| a + b / kappa).collect())
                .collect();
            return Ok((LyapunovFn::Linear { coeffs }, kappa));
        }
    }
    Err(Error::Numeric(
        "no switching rate on the grid satisfies the fast ergodic inequality".into(),
    ))
}

/// Exact leading coefficients of the fast ergodic drift: entry `[i][m]` is
/// `sum_{j != i} q_ij (u^j_m - u^i_m) + ((v + kappa^{-1} u^i) M_i)_m`.
pub fn fast_ergodic_coefficients(
    model: &SwitchedModel,
    analysis: &Analysis,
    v: &[f64],
    u: &[Vec<f64>],
    kappa: f64,
) -> Vec<Vec<f64>> {
    let n = model.n_env();
    let d = model.n_species();
    let q = model.q();
    (0..n)
        .map(|i| {
            let phi: Vec<f64> = v.iter().zip(&u[i]).map(|(a, b)| a + b / kappa).collect();
            let phi_mi = linalg::vec_mat(&phi, &analysis.linear[i].matrix);
            (0..d)
                .map(|m| {
                    let coupling: f64 = (0..n)
                        .filter(|&j| j != i)
                        .map(|j| q[(i, j)] * (u[j][m] - u[i][m]))
                        .sum();
                    coupling + phi_mi[m]
                })
                .collect()
        })
        .collect()
}

/// Slow-regime ergodic Lyapunov function `h(x, i) = v^i . x` from per-
/// environment decreasing directions; the threshold is the largest grid
/// `kappa` keeping the exact leading coefficients negative.
pub fn build_slow_ergodic(
    model: &SwitchedModel,
    certs: &[DirectionCertificate],
) -> Result<(LyapunovFn, f64)> {
    if certs.len() != model.n_env() || certs.iter().any(|c| c.kind != CertificateKind::Decreasing) {
        return Err(Error::Input(
            "expected one decreasing-direction certificate per environment".into(),
        ));
    }
    let analysis = classify::analyze(model)?;
    let vs: Vec<&[f64]> = certs.iter().map(|c| c.v.as_slice()).collect();
    for kappa in kappa_grid_halving() {
        if slow_ergodic_coefficients(model, &analysis, &vs, kappa)
            .iter()
            .all(|row| row.iter().all(|&x| x < 0.0))
        {
            let coeffs = vs.iter().map(|v| v.to_vec()).collect();
            return Ok((LyapunovFn::Linear { coeffs }, kappa));
        }
    }
    Err(Error::Numeric(
        "no switching rate on the grid satisfies the slow ergodic inequality".into(),
    ))
}

/// Entry `[i][m]` is `sum_{j != i} kappa q_ij (v^j_m - v^i_m) + (v^i M_i)_m`.
pub fn slow_ergodic_coefficients(
    model: &SwitchedModel,
    analysis: &Analysis,
    vs: &[&[f64]],
    kappa: f64,
) -> Vec<Vec<f64>> {
    let n = model.n_env();
    let d = model.n_species();
    let q = model.q();
    (0..n)
        .map(|i| {
            let vi_mi = linalg::vec_mat(vs[i], &analysis.linear[i].matrix);
            (0..d)
                .map(|m| {
                    let coupling: f64 = (0..n)
                        .filter(|&j| j != i)
                        .map(|j| kappa * q[(i, j)] * (vs[j][m] - vs[i][m]))
                        .sum();
                    coupling + vi_mi[m]
                })
                .collect()
        })
        .collect()
}

/// Net change vectors, across all environments, of reactions that move at
/// least one species in `support`.
fn reaction_vectors_meeting(model: &SwitchedModel, support: &[usize]) -> Vec<Vec<f64>> {
    let d = model.n_species();
    let mut out = Vec::new();
    for env in model.environments() {
        for r in &env.reactions {
            let delta: Vec<f64> = (0..d).map(|m| r.delta(m) as f64).collect();
            if support.iter().any(|&m| delta[m] != 0.0) && !out.contains(&delta) {
                out.push(delta);
            }
        }
    }
    out
}

fn require_monomolecular(analysis: &Analysis) -> Result<()> {
    if analysis
        .linear
        .iter()
        .any(|l| !l.is_at_most_monomolecular || !l.is_mass_action)
    {
        return Err(Error::Input(
            "transience drift checks require at-most-monomolecular mass-action environments".into(),
        ));
    }
    Ok(())
}

/// Fast-regime transience check at a concrete `kappa`.
///
/// `v` must satisfy `(v M)_m > 0` on its support (e.g. an unstable-support
/// vector of the mixed matrix). The direction is first perturbed so it sees
/// every reaction touching its support, correction vectors `z^m` are solved
/// on the support, and the exact leading-coefficient inequality is evaluated
/// with the worst-case comparison factors `a^m_{ij}`. On an algebraic pass a
/// lattice shell is sampled for a radius at which the associated bounded
/// Lyapunov function has positive generator everywhere sampled.
pub fn check_fast_transience(model: &SwitchedModel, kappa: f64, v: &[f64]) -> Result<DriftReport> {
    let analysis = classify::analyze(model)?;
    require_monomolecular(&analysis)?;
    if !(kappa > 0.0) {
        return Err(Error::Input("kappa must be positive".into()));
    }
    if v.len() != model.n_species() {
        return Err(Error::Input(
            "direction length does not match species count".into(),
        ));
    }
    let mixed = &analysis.mix.mixed_matrix;
    let support: Vec<usize> = (0..v.len()).filter(|&m| v[m] > 0.0).collect();
    let xi_set = reaction_vectors_meeting(model, &support);
    let v_eps = classify::perturb_direction(v, mixed, &xi_set)?;

    let zv = mixing::solve_z(
        model.q(),
        &analysis.linear,
        &analysis.mix.w,
        &v_eps,
        &support,
    )?;
    let lhs = fast_transience_lhs(model, &analysis, &v_eps, &zv, kappa, &support);
    let algebraic_pass = lhs.iter().all(|row| row.iter().all(|&x| x > 0.0));

    let mut report = DriftReport {
        mode: DriftMode::TransientDrift,
        algebraic_pass,
        b: None,
        c: None,
        dconst: None,
        sampled_violations: Vec::new(),
    };
    if algebraic_pass {
        let phi: Vec<Vec<f64>> = (0..model.n_env())
            .map(|i| {
                (0..v_eps.len())
                    .map(|m| v_eps[m] + zv.z[m].get(i).copied().unwrap_or(0.0) / kappa)
                    .collect()
            })
            .collect();
        let (b, violations) = shell_search(model, kappa, &phi, &v_eps);
        report.b = b;
        report.sampled_violations = violations;
    }
    Ok(report)
}

/// `lhs[i][k]` over support positions `k`:
/// `sum_{j != i} q_ij a^m_{ij} (z^m_j - z^m_i) + (phi^i M_i)_m`.
fn fast_transience_lhs(
    model: &SwitchedModel,
    analysis: &Analysis,
    v: &[f64],
    zv: &ZVectors,
    kappa: f64,
    support: &[usize],
) -> Vec<Vec<f64>> {
    let n = model.n_env();
    let q = model.q();
    let phi: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..v.len())
                .map(|m| v[m] + zv.z[m].get(i).copied().unwrap_or(0.0) / kappa)
                .collect()
        })
        .collect();
    (0..n)
        .map(|i| {
            let phi_mi = linalg::vec_mat(&phi[i], &analysis.linear[i].matrix);
            support
                .iter()
                .map(|&m| {
                    let coupling: f64 = (0..n)
                        .filter(|&j| j != i)
                        .map(|j| {
                            let diff = zv.z[m][j] - zv.z[m][i];
                            q[(i, j)] * comparison_factor(&phi[i], &phi[j], support, diff) * diff
                        })
                        .sum();
                    coupling + phi_mi[m]
                })
                .collect()
        })
        .collect()
}

/// Worst-case factor replacing the ratio `(1 + phi^i . x) / (1 + phi^j . x)`:
/// the minimum of the coordinate ratios when the coupled difference is
/// positive, the maximum when negative, 1 when zero (each clamped toward 1).
fn comparison_factor(phi_i: &[f64], phi_j: &[f64], support: &[usize], diff: f64) -> f64 {
    if diff == 0.0 {
        return 1.0;
    }
    let ratios = support.iter().map(|&l| phi_i[l] / phi_j[l]);
    if diff > 0.0 {
        ratios.fold(1.0f64, f64::min)
    } else {
        ratios.fold(1.0f64, f64::max)
    }
}

/// Smallest grid `kappa` at which [`check_fast_transience`] passes
/// algebraically.
pub fn fast_transience_threshold(model: &SwitchedModel, v: &[f64]) -> Result<Option<f64>> {
    for kappa in kappa_grid_doubling() {
        if check_fast_transience(model, kappa, v)?.algebraic_pass {
            return Ok(Some(kappa));
        }
    }
    Ok(None)
}

/// Slow-regime transience check at a concrete `kappa >= 0` from a common
/// unstable support and its per-environment directions.
pub fn check_slow_transience(
    model: &SwitchedModel,
    kappa: f64,
    support: &[usize],
    vs: &[Vec<f64>],
) -> Result<DriftReport> {
    let analysis = classify::analyze(model)?;
    require_monomolecular(&analysis)?;
    if !(kappa >= 0.0) {
        return Err(Error::Input("kappa must be non-negative".into()));
    }
    let n = model.n_env();
    let d = model.n_species();
    if vs.len() != n {
        return Err(Error::Input("need one direction per environment".into()));
    }
    for (i, vi) in vs.iter().enumerate() {
        if vi.len() != d {
            return Err(Error::Input(
                "direction length does not match species count".into(),
            ));
        }
        let sup: Vec<usize> = (0..d).filter(|&m| vi[m] > 0.0).collect();
        if sup != support {
            return Err(Error::Input(format!(
                "direction for environment {} has support {:?}, expected common support {:?}",
                i + 1,
                sup,
                support
            )));
        }
        let vm = linalg::vec_mat(vi, &analysis.linear[i].matrix);
        if support.iter().any(|&m| vm[m] <= 0.0) {
            return Err(Error::Input(format!(
                "(v^i M_i) is not positive on the support for environment {}",
                i + 1
            )));
        }
    }

    let q = model.q();
    let mut algebraic_pass = true;
    for i in 0..n {
        let vi_mi = linalg::vec_mat(&vs[i], &analysis.linear[i].matrix);
        for &m in support {
            let coupling: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let diff = vs[j][m] - vs[i][m];
                    kappa * q[(i, j)] * comparison_factor(&vs[i], &vs[j], support, diff) * diff
                })
                .sum();
            if coupling + vi_mi[m] <= 0.0 {
                algebraic_pass = false;
            }
        }
    }

    let mut report = DriftReport {
        mode: DriftMode::TransientDrift,
        algebraic_pass,
        b: None,
        c: None,
        dconst: None,
        sampled_violations: Vec::new(),
    };
    if algebraic_pass {
        // Band measured against the first direction; all share the support.
        let (b, violations) = shell_search(model, kappa, vs, &vs[0]);
        report.b = b;
        report.sampled_violations = violations;
    }
    Ok(report)
}

/// Largest grid `kappa` at which [`check_slow_transience`] passes
/// algebraically.
pub fn slow_transience_threshold(
    model: &SwitchedModel,
    support: &[usize],
    vs: &[Vec<f64>],
) -> Result<Option<f64>> {
    for kappa in kappa_grid_halving() {
        if check_slow_transience(model, kappa, support, vs)?.algebraic_pass {
            return Ok(Some(kappa));
        }
    }
    Ok(None)
}

/// The 4-environment switching matrix with unit rates within the pairs
/// {1,2} and {3,4} and rate `eps` across pairs.
pub fn grouped_q(eps: f64) -> Matrix {
    let mut q = Matrix::zeros(4, 4);
    for i in 0..4 {
        for j in 0..4 {
            if i == j {
                continue;
            }
            q[(i, j)] = if i / 2 == j / 2 { 1.0 } else { eps };
        }
        q[(i, i)] = -(1.0 + 2.0 * eps);
    }
    q
}

fn paired_env(i: usize) -> usize {
    i ^ 1
}

/// Correction vectors for one pair of environments under the unit symmetric
/// two-state switching matrix: `z_hi - z_lo = ((v M_hi) - (v M_lo)) / 2`
/// per species, shifted so the minimum entry is 1.
fn pair_z(lin_lo: &LinearData, lin_hi: &LinearData, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let v_lo = linalg::vec_mat(v, &lin_lo.matrix);
    let v_hi = linalg::vec_mat(v, &lin_hi.matrix);
    let d = v.len();
    let mut z_lo = vec![0.0; d];
    let mut z_hi = vec![0.0; d];
    for m in 0..d {
        let delta = 0.5 * (v_hi[m] - v_lo[m]);
        z_lo[m] = 1.0 + (-delta).max(0.0);
        z_hi[m] = z_lo[m] + delta;
    }
    (z_lo, z_hi)
}

/// Exact leading terms of the grouped intermediate-switching inequality:
/// entry `[i][m]` is
/// `a^{i,p}_m (u^p_m - u^i_m) + (phi^i M_i)_m
///  + sum_{j != i,p} kappa eps a^{i,j}_m (phi^j_m - phi^i_m)`
/// with `p` the environment paired with `i`.
pub fn grouped_leading_terms(
    model: &SwitchedModel,
    kappa: f64,
    eps: f64,
    v1: &[f64],
    v2: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let analysis = grouped_validate(model, kappa, eps, v1, v2)?;
    let d = model.n_species();
    let full: Vec<usize> = (0..d).collect();

    // Per-pair correction vectors from the two-environment construction.
    let (z1, z2) = pair_z(&analysis.linear[0], &analysis.linear[1], v1);
    let (z3, z4) = pair_z(&analysis.linear[2], &analysis.linear[3], v2);
    let u = [z1, z2, z3, z4];
    let group = |i: usize| if i < 2 { v1 } else { v2 };
    let phi: Vec<Vec<f64>> = (0..4)
        .map(|i| {
            group(i)
                .iter()
                .zip(&u[i])
                .map(|(a, b)| a + b / kappa)
                .collect()
        })
        .collect();

    let mut lhs = vec![vec![0.0; d]; 4];
    for i in 0..4 {
        let p = paired_env(i);
        let phi_mi = linalg::vec_mat(&phi[i], &analysis.linear[i].matrix);
        for m in 0..d {
            let pair_diff = u[p][m] - u[i][m];
            let mut acc =
                comparison_factor(&phi[i], &phi[p], &full, pair_diff) * pair_diff + phi_mi[m];
            for j in 0..4 {
                if j == i || j == p {
                    continue;
                }
                let diff = phi[j][m] - phi[i][m];
                acc += kappa * eps * comparison_factor(&phi[i], &phi[j], &full, diff) * diff;
            }
            lhs[i][m] = acc;
        }
    }
    Ok(lhs)
}

fn grouped_validate(
    model: &SwitchedModel,
    kappa: f64,
    eps: f64,
    v1: &[f64],
    v2: &[f64],
) -> Result<Analysis> {
    if model.n_env() != 4 {
        return Err(Error::Input(
            "grouped check expects exactly 4 environments".into(),
        ));
    }
    if !(kappa > 0.0) || !(eps > 0.0) {
        return Err(Error::Input("kappa and eps must be positive".into()));
    }
    let expected = grouped_q(eps);
    let q = model.q();
    for i in 0..4 {
        for j in 0..4 {
            if (q[(i, j)] - expected[(i, j)]).abs() > 1e-12 {
                return Err(Error::Input(format!(
                    "switching matrix is not of the grouped form at eps = {eps} \
                     (entry [{i}][{j}] is {} vs {})",
                    q[(i, j)],
                    expected[(i, j)]
                )));
            }
        }
    }
    let analysis = classify::analyze(model)?;
    require_monomolecular(&analysis)?;
    let d = model.n_species();
    for (g, v) in [(0usize, v1), (1, v2)] {
        if v.len() != d || v.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::Input(format!(
                "direction for group {} must be strictly positive of length {d}",
                g + 1
            )));
        }
        let a = pair_average(&analysis, g);
        let va = linalg::vec_mat(v, &a);
        if va.iter().any(|&x| x <= 0.0) {
            return Err(Error::Input(format!(
                "direction for group {} is not increasing for the pair average",
                g + 1
            )));
        }
    }
    Ok(analysis)
}

/// Average of one pair's environment matrices (`g` = 0 or 1).
pub fn pair_average(analysis: &Analysis, g: usize) -> Matrix {
    let a = &analysis.linear[2 * g].matrix;
    let b = &analysis.linear[2 * g + 1].matrix;
    a.add(b).scale(0.5)
}

/// Grouped intermediate-switching transience check at `(kappa, eps)`.
pub fn check_grouped_transience(
    model: &SwitchedModel,
    kappa: f64,
    eps: f64,
    v1: &[f64],
    v2: &[f64],
) -> Result<DriftReport> {
    let lhs = grouped_leading_terms(model, kappa, eps, v1, v2)?;
    let algebraic_pass = lhs.iter().all(|row| row.iter().all(|&x| x > 0.0));
    let mut report = DriftReport {
        mode: DriftMode::TransientDrift,
        algebraic_pass,
        b: None,
        c: None,
        dconst: None,
        sampled_violations: Vec::new(),
    };
    if algebraic_pass {
        let analysis = classify::analyze(model)?;
        let (z1, z2) = pair_z(&analysis.linear[0], &analysis.linear[1], v1);
        let (z3, z4) = pair_z(&analysis.linear[2], &analysis.linear[3], v2);
        let u = [z1, z2, z3, z4];
        let group = |i: usize| if i < 2 { v1 } else { v2 };
        let phi: Vec<Vec<f64>> = (0..4)
            .map(|i| {
                group(i)
                    .iter()
                    .zip(&u[i])
                    .map(|(a, b)| a + b / kappa)
                    .collect()
            })
            .collect();
        let (b, violations) = shell_search(model, kappa, &phi, v1);
        report.b = b;
        report.sampled_violations = violations;
    }
    Ok(report)
}

/// One cell of a `(kappa, eps)` scan.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GroupedScanCell {
    pub kappa: f64,
    pub eps: f64,
    pub pass: bool,
}

/// Evaluate the grouped certificate across `(kappa, eps)` grids, rebuilding
/// the switching matrix for each `eps`. The environments and the group
/// directions are held fixed.
pub fn grouped_scan(
    model: &SwitchedModel,
    v1: &[f64],
    v2: &[f64],
    kappas: &[f64],
    epss: &[f64],
) -> Result<Vec<GroupedScanCell>> {
    if model.n_env() != 4 {
        return Err(Error::Input(
            "grouped scan expects exactly 4 environments".into(),
        ));
    }
    let mut cells = Vec::with_capacity(kappas.len() * epss.len());
    for &eps in epss {
        let remodel = SwitchedModel::new(
            model.species().to_vec(),
            model.environments().to_vec(),
            grouped_q(eps),
        )?;
        for &kappa in kappas {
            let pass = grouped_leading_terms(&remodel, kappa, eps, v1, v2)?
                .iter()
                .all(|row| row.iter().all(|&x| x > 0.0));
            cells.push(GroupedScanCell { kappa, eps, pass });
        }
    }
    Ok(cells)
}

/// Exhaustive generator evaluation on the sup-norm box of the given radius.
///
/// `algebraic_pass` reports the exact leading-coefficient inequality for the
/// Lyapunov form. The fitted constants: `c` is half the minimum of `-Lh / h`
/// over boundary states, `dconst` the smallest offset making
/// `Lh <= -c h + dconst` hold on the inner half of the box, and any state in
/// the box violating that fitted inequality is reported.
pub fn verify_foster_lyapunov(
    model: &SwitchedModel,
    kappa: f64,
    h: &LyapunovFn,
    box_radius: u64,
) -> Result<DriftReport> {
    h.check_shape(model)?;
    let analysis = classify::analyze(model)?;
    let d = model.n_species();
    let n = model.n_env();
    match h {
        LyapunovFn::Linear { coeffs } => {
            if coeffs.iter().any(|c| c.iter().any(|&x| !(x > 0.0))) {
                return Err(Error::Input(
                    "box check needs strictly positive linear coefficients (finite sublevel sets)"
                        .into(),
                ));
            }
        }
        LyapunovFn::Power { scales, exponent } => {
            if scales.iter().any(|&s| !(s > 0.0)) || !(*exponent > 0.0) {
                return Err(Error::Input(
                    "box check needs positive scales and exponent".into(),
                ));
            }
        }
        LyapunovFn::Reciprocal { .. } => {
            return Err(Error::Input(
                "box check needs a function with finite sublevel sets".into(),
            ));
        }
    }
    let states_f = ((box_radius + 1) as f64).powi(d as i32);
    if states_f > BOX_STATE_CAP {
        return Err(Error::Input(format!(
            "box of radius {box_radius} in dimension {d} exceeds the {BOX_STATE_CAP:.0e} state cap"
        )));
    }

    let algebraic_pass = match h {
        LyapunovFn::Linear { coeffs } => {
            let vs: Vec<&[f64]> = coeffs.iter().map(|c| c.as_slice()).collect();
            slow_ergodic_coefficients(model, &analysis, &vs, kappa)
                .iter()
                .all(|row| row.iter().all(|&x| x < 0.0))
        }
        LyapunovFn::Power { scales, exponent } => {
            let q = model.q();
            (0..n).all(|i| {
                let m_i = analysis.linear[i].matrix[(0, 0)];
                let coupling: f64 = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| kappa * q[(i, j)] * (scales[j] - scales[i]))
                    .sum();
                exponent * scales[i] * m_i + coupling < 0.0
            })
        }
        LyapunovFn::Reciprocal { .. } => unreachable!(),
    };

    // Evaluate everywhere; fit the constants, then look for breaches.
    let mut boundary_ratio = f64::INFINITY;
    let mut inner_offset = f64::NEG_INFINITY;
    let mut values: Vec<(Vec<u64>, usize, f64, f64)> = Vec::new();
    let mut x = vec![0u64; d];
    loop {
        let on_boundary = x.contains(&box_radius);
        let inner = x.iter().all(|&c| c <= box_radius / 2);
        for i in 0..n {
            let hv = h.evaluate(&x, i);
            let lv = generator_apply(model, kappa, h, &x, i)?;
            if on_boundary && hv > 0.0 {
                boundary_ratio = boundary_ratio.min(-lv / hv);
            }
            values.push((x.clone(), i, hv, lv));
            if inner {
                inner_offset = inner_offset.max(lv); // updated with c below
            }
        }
        if !advance_odometer(&mut x, box_radius) {
            break;
        }
    }
    let c = if boundary_ratio.is_finite() {
        (0.5 * boundary_ratio).max(0.0)
    } else {
        0.0
    };
    let mut dconst = f64::NEG_INFINITY;
    for (x, _, hv, lv) in &values {
        if x.iter().all(|&cnt| cnt <= box_radius / 2) {
            dconst = dconst.max(lv + c * hv);
        }
    }
    if !dconst.is_finite() {
        dconst = 0.0;
    }
    let tol = 1e-9 * (1.0 + dconst.abs());
    let sampled_violations = values
        .into_iter()
        .filter(|(_, _, hv, lv)| lv + c * hv > dconst + tol)
        .map(|(x, env, _, lv)| ViolationSample { x, env, value: lv })
        .collect();

    Ok(DriftReport {
        mode: DriftMode::ErgodicDrift,
        algebraic_pass,
        b: None,
        c: Some(c),
        dconst: Some(dconst),
        sampled_violations,
    })
}

fn advance_odometer(x: &mut [u64], radius: u64) -> bool {
    for slot in x.iter_mut() {
        if *slot < radius {
            *slot += 1;
            return true;
        }
        *slot = 0;
    }
    false
}

/// Stream `state, env, generator value` rows over the box as CSV.
pub fn generator_samples_csv(
    model: &SwitchedModel,
    kappa: f64,
    h: &LyapunovFn,
    box_radius: u64,
    out: &mut dyn std::io::Write,
) -> Result<()> {
    h.check_shape(model)?;
    let d = model.n_species();
    let states_f = ((box_radius + 1) as f64).powi(d as i32);
    if states_f > BOX_STATE_CAP {
        return Err(Error::Input("box exceeds the state cap".into()));
    }
    let header: Vec<String> = (0..d).map(|m| format!("x_{}", m + 1)).collect();
    writeln!(out, "{},env,value", header.join(","))
        .map_err(|e| Error::Numeric(format!("write failed: {e}")))?;
    let mut x = vec![0u64; d];
    loop {
        for i in 0..model.n_env() {
            let lv = generator_apply(model, kappa, h, &x, i)?;
            let coords: Vec<String> = x.iter().map(u64::to_string).collect();
            writeln!(out, "{},{},{}", coords.join(","), i + 1, lv)
                .map_err(|e| Error::Numeric(format!("write failed: {e}")))?;
        }
        if !advance_odometer(&mut x, box_radius) {
            break;
        }
    }
    Ok(())
}

/// Doubling search for the smallest shell radius at which every sampled
/// lattice state in the band `[b, 2b]` (measured by `band_vec . x`) gives a
/// positive generator value for the bounded function `1 - 1/(1 + phi^i . x)`.
///
/// Returns the radius and, when none is found on the grid, the violations
/// sampled at the last attempted radius.
fn shell_search(
    model: &SwitchedModel,
    kappa: f64,
    phi: &[Vec<f64>],
    band_vec: &[f64],
) -> (Option<f64>, Vec<ViolationSample>) {
    let h = LyapunovFn::Reciprocal {
        coeffs: phi.to_vec(),
    };
    let mut last_violations = Vec::new();
    let mut b = 1.0f64;
    while b <= SHELL_MAX_B {
        let states = band_states(band_vec, b, 2.0 * b, SHELL_SAMPLE_CAP);
        if !states.is_empty() {
            let mut violations = Vec::new();
            for x in &states {
                for i in 0..model.n_env() {
                    let lv =
                        generator_apply(model, kappa, &h, x, i).expect("shape-checked evaluation");
                    if lv <= 0.0 {
                        violations.push(ViolationSample {
                            x: x.clone(),
                            env: i,
                            value: lv,
                        });
                    }
                }
            }
            if violations.is_empty() {
                return (Some(b), Vec::new());
            }
            last_violations = violations;
        }
        b *= 2.0;
    }
    (None, last_violations)
}

/// Fractional parts of multiples of sqrt(prime): a low-discrepancy driver
/// for deterministic lattice sampling.
fn halton_like(k: u64, dim: usize) -> f64 {
    const PRIMES: [f64; 21] = [
        2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0, 23.0, 29.0, 31.0, 37.0, 41.0, 43.0, 47.0, 53.0,
        59.0, 61.0, 67.0, 71.0, 73.0,
    ];
    let alpha = PRIMES[dim % PRIMES.len()].sqrt();
    ((k + 1) as f64 * alpha).fract()
}

/// Deterministic sample of lattice states with `v . x` in `[lo, hi]`.
///
/// Off-support coordinates cycle through 0..3 so reactions fed by species
/// the direction cannot see still get exercised.
fn band_states(v: &[f64], lo: f64, hi: f64, cap: usize) -> Vec<Vec<u64>> {
    let d = v.len();
    let support: Vec<usize> = (0..d).filter(|&m| v[m] > 0.0).collect();
    if support.is_empty() {
        return Vec::new();
    }
    let mut states = Vec::new();

    // Axis-aligned seeds.
    for &m in &support {
        let count = (lo / v[m]).ceil() as u64;
        let mut x = vec![0u64; d];
        x[m] = count;
        let val = v[m] * count as f64;
        if val >= lo && val <= hi {
            states.push(x);
        }
    }

    let budget = cap.saturating_mul(4) as u64;
    for k in 0..budget {
        if states.len() >= cap {
            break;
        }
        let target = lo + (hi - lo) * halton_like(k, d);
        let weights: Vec<f64> = support
            .iter()
            .enumerate()
            .map(|(slot, _)| halton_like(k, slot) + 1e-3)
            .collect();
        let denom: f64 = support.iter().zip(&weights).map(|(&m, w)| v[m] * w).sum();
        let mut x = vec![0u64; d];
        for (slot, &m) in support.iter().enumerate() {
            x[m] = (target * weights[slot] / denom + 0.5).floor().max(0.0) as u64;
        }
        for m in 0..d {
            if !support.contains(&m) {
                x[m] = k % 3;
            }
        }
        let val: f64 = support.iter().map(|&m| v[m] * x[m] as f64).sum();
        if val >= lo && val <= hi {
            states.push(x);
        }
    }
    states.sort_unstable();
    states.dedup();
    states
}

/// The fast-regime ergodic function `(v + kappa^{-1} u^i) . x` at a concrete
/// switching rate, derived from the model's own certificates.
pub fn fast_ergodic_function(model: &SwitchedModel, kappa: f64) -> Result<LyapunovFn> {
    if !(kappa > 0.0) {
        return Err(Error::Input("kappa must be positive".into()));
    }
    let analysis = classify::analyze(model)?;
    let cert = crate::metzler::decreasing_direction(&analysis.mix.mixed_matrix)
        .ok_or_else(|| Error::Input("mixed matrix admits no decreasing direction".into()))?;
    let d = model.n_species();
    let full: Vec<usize> = (0..d).collect();
    let zv = mixing::solve_z(model.q(), &analysis.linear, &analysis.mix.w, &cert.v, &full)?;
    let coeffs = (0..model.n_env())
        .map(|i| {
            cert.v
                .iter()
                .zip(zv.env_vector(i))
                .map(|(a, b)| a + b / kappa)
                .collect()
        })
        .collect();
    Ok(LyapunovFn::Linear { coeffs })
}

/// The slow-regime ergodic function `v^i . x` from per-environment
/// decreasing directions.
pub fn slow_ergodic_function(model: &SwitchedModel) -> Result<LyapunovFn> {
    let analysis = classify::analyze(model)?;
    let coeffs = analysis
        .linear
        .iter()
        .enumerate()
        .map(|(i, l)| {
            crate::metzler::decreasing_direction(&l.matrix)
                .map(|c| c.v)
                .ok_or_else(|| {
                    Error::Input(format!(
                        "environment {} admits no decreasing direction",
                        i + 1
                    ))
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LyapunovFn::Linear { coeffs })
}

/// The bounded fast-regime transience function
/// `1 - 1/(1 + (v + kappa^{-1} z^m_i) . x)` from the mixed matrix's unstable
/// support at a concrete switching rate.
pub fn fast_transient_function(model: &SwitchedModel, kappa: f64) -> Result<LyapunovFn> {
    if !(kappa > 0.0) {
        return Err(Error::Input("kappa must be positive".into()));
    }
    let analysis = classify::analyze(model)?;
    let cert = crate::metzler::unstable_support_vector(&analysis.mix.mixed_matrix)
        .ok_or_else(|| Error::Input("mixed matrix admits no unstable support".into()))?;
    let mixed = &analysis.mix.mixed_matrix;
    let support = cert.support.clone();
    let xi_set = reaction_vectors_meeting(model, &support);
    let v_eps = classify::perturb_direction(&cert.v, mixed, &xi_set)?;
    let zv = mixing::solve_z(
        model.q(),
        &analysis.linear,
        &analysis.mix.w,
        &v_eps,
        &support,
    )?;
    let coeffs = (0..model.n_env())
        .map(|i| {
            (0..v_eps.len())
                .map(|m| v_eps[m] + zv.z[m].get(i).copied().unwrap_or(0.0) / kappa)
                .collect()
        })
        .collect();
    Ok(LyapunovFn::Reciprocal { coeffs })
}

/// The bounded slow-regime transience function `1 - 1/(1 + v^i . x)` from a
/// common unstable support.
pub fn slow_transient_function(model: &SwitchedModel) -> Result<LyapunovFn> {
    let (_, certs) = classify::common_unstable_support(model)?
        .ok_or_else(|| Error::Input("no common unstable support exists".into()))?;
    Ok(LyapunovFn::Reciprocal {
        coeffs: certs.into_iter().map(|c| c.v).collect(),
    })
}

pub mod checks {
    //! Name-addressed drift checks: each verification routine sits behind a
    //! common trait, derives its own certificate inputs from the model, and
    //! reports JSON. The CLI selects one by name at runtime.

    use serde_json::json;

    use super::*;
    use crate::metzler::{decreasing_direction, unstable_support_vector};

    /// Optional inputs a check may consume.
    #[derive(Debug, Clone, Default)]
    pub struct DriftArgs {
        pub kappa: Option<f64>,
        pub eps: Option<f64>,
        pub radius: Option<u64>,
        pub lyapunov: Option<LyapunovFn>,
    }

    pub trait DriftCheck: Sync {
        fn name(&self) -> &'static str;
        fn summary(&self) -> &'static str;
        fn run(&self, model: &SwitchedModel, args: &DriftArgs) -> Result<serde_json::Value>;
    }

    pub fn registry() -> &'static [&'static dyn DriftCheck] {
        static REGISTRY: &[&dyn DriftCheck] = &[
            &FastErgodic,
            &SlowErgodic,
            &FastTransience,
            &SlowTransience,
            &Grouped,
            &FosterBox,
        ];
        REGISTRY
    }

    pub fn lookup(name: &str) -> Result<&'static dyn DriftCheck> {
        registry()
            .iter()
            .find(|c| c.name() == name)
            .copied()
            .ok_or_else(|| {
                Error::Input(format!(
                    "unknown drift check {name:?} (try: {})",
                    registry()
                        .iter()
                        .map(|c| c.name())
                        .collect::<Vec<_>>()
                        .join(", ")
                ))
            })
    }

    struct FastErgodic;

    impl DriftCheck for FastErgodic {
        fn name(&self) -> &'static str {
            "fast-ergodic"
        }
        fn summary(&self) -> &'static str {
            "linear function from a decreasing direction of the mixed matrix; \
             reports the smallest certified switching rate"
        }
        fn run(&self, model: &SwitchedModel, _args: &DriftArgs) -> Result<serde_json::Value> {
            let analysis = classify::analyze(model)?;
            let cert = decreasing_direction(&analysis.mix.mixed_matrix).ok_or_else(|| {
                Error::Input("mixed matrix admits no decreasing direction".into())
            })?;
            let (h, threshold) = build_fast_ergodic(model, &cert)?;
            Ok(json!({
                "check": self.name(),
                "direction": cert.v,
                "kappa_threshold": threshold,
                "lyapunov": h,
            }))
        }
    }

    struct SlowErgodic;

    impl DriftCheck for SlowErgodic {
        fn name(&self) -> &'static str {
            "slow-ergodic"
        }
        fn summary(&self) -> &'static str {
            "per-environment linear functions from decreasing directions; \
             reports the largest certified switching rate"
        }
        fn run(&self, model: &SwitchedModel, _args: &DriftArgs) -> Result<serde_json::Value> {
            let analysis = classify::analyze(model)?;
            let certs = analysis
                .linear
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    decreasing_direction(&l.matrix).ok_or_else(|| {
                        Error::Input(format!(
                            "environment {} admits no decreasing direction",
                            i + 1
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let (h, threshold) = build_slow_ergodic(model, &certs)?;
            Ok(json!({
                "check": self.name(),
                "directions": certs.iter().map(|c| c.v.clone()).collect::<Vec<_>>(),
                "kappa_threshold": threshold,
                "lyapunov": h,
            }))
        }
    }

    struct FastTransience;

    impl DriftCheck for FastTransience {
        fn name(&self) -> &'static str {
            "fast-transience"
        }
        fn summary(&self) -> &'static str {
            "transience inequality for the mixed matrix's unstable support; \
             checked at --kappa (default: the smallest passing rate)"
        }
        fn run(&self, model: &SwitchedModel, args: &DriftArgs) -> Result<serde_json::Value> {
            let analysis = classify::analyze(model)?;
            let cert = unstable_support_vector(&analysis.mix.mixed_matrix)
                .ok_or_else(|| Error::Input("mixed matrix admits no unstable support".into()))?;
            let threshold = fast_transience_threshold(model, &cert.v)?;
            let kappa = match args.kappa.or(threshold) {
                Some(k) => k,
                None => {
                    return Err(Error::Numeric(
                        "no switching rate on the grid passes; supply --kappa".into(),
                    ))
                }
            };
            let report = check_fast_transience(model, kappa, &cert.v)?;
            Ok(json!({
                "check": self.name(),
                "direction": cert.v,
                "support": cert.support,
                "kappa": kappa,
                "kappa_threshold": threshold,
                "report": report,
            }))
        }
    }

    struct SlowTransience;

    impl DriftCheck for SlowTransience {
        fn name(&self) -> &'static str {
            "slow-transience"
        }
        fn summary(&self) -> &'static str {
            "transience inequality on a common unstable support; checked at \
             --kappa (default: the largest passing rate)"
        }
        fn run(&self, model: &SwitchedModel, args: &DriftArgs) -> Result<serde_json::Value> {
            let (support, certs) = classify::common_unstable_support(model)?
                .ok_or_else(|| Error::Input("no common unstable support exists".into()))?;
            let vs: Vec<Vec<f64>> = certs.iter().map(|c| c.v.clone()).collect();
            let threshold = slow_transience_threshold(model, &support, &vs)?;
            let kappa = match args.kappa.or(threshold) {
                Some(k) => k,
                None => {
                    return Err(Error::Numeric(
                        "no switching rate on the grid passes; supply --kappa".into(),
                    ))
                }
            };
            let report = check_slow_transience(model, kappa, &support, &vs)?;
            Ok(json!({
                "check": self.name(),
                "support": support,
                "directions": vs,
                "kappa": kappa,
                "kappa_threshold": threshold,
                "report": report,
            }))
        }
    }

    struct Grouped;

    impl DriftCheck for Grouped {
        fn name(&self) -> &'static str {
            "grouped"
        }
        fn summary(&self) -> &'static str {
            "paired-environment transience inequality for 4-environment \
             grouped models at (--kappa, --eps)"
        }
        fn run(&self, model: &SwitchedModel, args: &DriftArgs) -> Result<serde_json::Value> {
            // Default eps: read the cross-pair rate off the model itself.
            let eps = args.eps.unwrap_or_else(|| model.q()[(0, 2)]);
            let analysis = classify::analyze(model)?;
            if model.n_env() != 4 {
                return Err(Error::Input("grouped check expects 4 environments".into()));
            }
            let v1 = crate::metzler::increasing_direction(&pair_average(&analysis, 0)).ok_or_else(
                || Error::Input("first pair average admits no increasing direction".into()),
            )?;
            let v2 = crate::metzler::increasing_direction(&pair_average(&analysis, 1)).ok_or_else(
                || Error::Input("second pair average admits no increasing direction".into()),
            )?;
            let kappa = match args.kappa {
                Some(k) => k,
                // Smallest passing rate on a doubling scan at this eps.
                None => {
                    let kappas: Vec<f64> = (0..=24).map(|e| 2f64.powi(e)).collect();
                    grouped_scan(model, &v1.v, &v2.v, &kappas, &[eps])?
                        .iter()
                        .find(|c| c.pass)
                        .map(|c| c.kappa)
                        .ok_or_else(|| {
                            Error::Numeric(format!(
                                "no switching rate on the scan grid passes at eps = {eps}; \
                                 supply --kappa"
                            ))
                        })?
                }
            };
            let report = check_grouped_transience(model, kappa, eps, &v1.v, &v2.v)?;
            Ok(json!({
                "check": self.name(),
                "kappa": kappa,
                "eps": eps,
                "directions": [v1.v, v2.v],
                "report": report,
            }))
        }
    }

    struct FosterBox;

    impl DriftCheck for FosterBox {
        fn name(&self) -> &'static str {
            "foster"
        }
        fn summary(&self) -> &'static str {
            "exhaustive generator evaluation on a lattice box for a supplied \
             Lyapunov function (--kappa, --lyapunov, --radius)"
        }
        fn run(&self, model: &SwitchedModel, args: &DriftArgs) -> Result<serde_json::Value> {
            let kappa = args
                .kappa
                .ok_or_else(|| Error::Input("foster check requires --kappa".into()))?;
            let h = args
                .lyapunov
                .as_ref()
                .ok_or_else(|| Error::Input("foster check requires --lyapunov".into()))?;
            let radius = args.radius.unwrap_or(50);
            let report = verify_foster_lyapunov(model, kappa, h, radius)?;
            Ok(json!({
                "check": self.name(),
                "kappa": kappa,
                "radius": radius,
                "report": report,
            }))
        }
    }
}

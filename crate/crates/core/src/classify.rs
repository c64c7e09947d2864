//! Regime classification: mechanical application of the fast/slow switching
//! stability criteria, with every non-`Unknown` verdict carrying certificates
//! that are re-verified by direct matrix arithmetic.
//!
//! Fast regime (large `kappa`): the process inherits the behavior of the
//! mixed matrix `M = sum w_i M_i`. Slow regime (small `kappa`): it inherits
//! the common behavior of the individual `M_i`, when they agree. Verdicts are
//! always "for all `kappa` beyond/below some unspecified threshold"; nothing
//! is claimed about intermediate switching rates.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::metzler::{
    self, decreasing_direction, increasing_direction, unstable_support_vector, CertificateKind,
    DirectionCertificate, ABSCISSA_TOL,
};
use crate::mixing::{self, MixData};
use crate::model::{propensities, LinearData, SwitchedModel};
use crate::sim::SplitMix64;

/// Largest dimension for which support enumeration is attempted.
pub const MAX_SUPPORT_DIM: usize = 20;

/// Linearizations plus mixing data for a model; the input to every verdict.
#[derive(Debug, Clone, Serialize)]
pub struct Analysis {
    pub linear: Vec<LinearData>,
    pub mix: MixData,
}

pub fn analyze(model: &SwitchedModel) -> Result<Analysis> {
    let linear = model.linearizations();
    let mix = mixing::mix_data(&linear, model.q())?;
    Ok(Analysis { linear, mix })
}

/// Why a regime conclusion is `Unknown`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownReason {
    /// A relevant spectral abscissa sits within tolerance of zero.
    NearCritical,
    /// Some environment's generator is not linear (non-cancelling
    /// higher-order reactions); no criterion applies.
    NonlinearGenerator,
    /// Instability holds but a transience conclusion would need
    /// at-most-monomolecular mass-action reactions.
    NotMonomolecular,
    /// Every environment is unstable but no common support carries an
    /// increasing direction in all of them.
    NoCommonSupport,
    /// Some environments are stable and others unstable; neither slow-regime
    /// criterion applies.
    MixedStability,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "conclusion", rename_all = "snake_case")]
pub enum Conclusion {
    /// Exponentially ergodic once the regime's threshold is passed.
    ErgodicEventually {
        certificates: Vec<DirectionCertificate>,
    },
    /// Evanescent once the threshold is passed, for every state whose
    /// support meets `support`.
    EvanescentEventually {
        support: Vec<usize>,
        certificates: Vec<DirectionCertificate>,
    },
    Unknown {
        reason: UnknownReason,
    },
}

impl Conclusion {
    pub fn kind_str(&self) -> &'static str {
        match self {
            Conclusion::ErgodicEventually { .. } => "ergodic",
            Conclusion::EvanescentEventually { .. } => "evanescent",
            Conclusion::Unknown { .. } => "unknown",
        }
    }

    pub fn unknown_reason(&self) -> Option<UnknownReason> {
        match self {
            Conclusion::Unknown { reason } => Some(*reason),
            _ => None,
        }
    }

    pub fn support(&self) -> Option<&[usize]> {
        match self {
            Conclusion::EvanescentEventually { support, .. } => Some(support),
            _ => None,
        }
    }
}

/// Per-regime verdict for a model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeVerdict {
    pub fast: Conclusion,
    pub slow: Conclusion,
}

/// Classify both regimes.
pub fn classify(model: &SwitchedModel) -> Result<RegimeVerdict> {
    let analysis = analyze(model)?;
    Ok(RegimeVerdict {
        fast: classify_fast_with(&analysis),
        slow: classify_slow_with(&analysis),
    })
}

pub fn classify_fast(model: &SwitchedModel) -> Result<Conclusion> {
    Ok(classify_fast_with(&analyze(model)?))
}

pub fn classify_slow(model: &SwitchedModel) -> Result<Conclusion> {
    Ok(classify_slow_with(&analyze(model)?))
}

/// Fast-switching conclusion from a precomputed analysis.
///
/// Ergodic when the mixed matrix admits a decreasing direction; evanescent
/// when all environments are at-most-monomolecular mass-action and the mixed
/// matrix admits an unstable-support vector; `Unknown` otherwise.
pub fn classify_fast_with(analysis: &Analysis) -> Conclusion {
    if let Some(reason) = generator_obstruction(analysis) {
        return Conclusion::Unknown { reason };
    }
    let mixed = &analysis.mix.mixed_matrix;
    if let Some(cert) = decreasing_direction(mixed) {
        return Conclusion::ErgodicEventually {
            certificates: vec![cert],
        };
    }
    if metzler::spectral_abscissa(mixed).abs() <= ABSCISSA_TOL {
        return Conclusion::Unknown {
            reason: UnknownReason::NearCritical,
        };
    }
    if !all_monomolecular(analysis) {
        return Conclusion::Unknown {
            reason: UnknownReason::NotMonomolecular,
        };
    }
    match unstable_support_vector(mixed) {
        Some(cert) => Conclusion::EvanescentEventually {
            support: cert.support.clone(),
            certificates: vec![cert],
        },
        // Unreachable: abscissa > tol guarantees an unstable block.
        None => Conclusion::Unknown {
            reason: UnknownReason::NearCritical,
        },
    }
}

/// Slow-switching conclusion from a precomputed analysis.
///
/// Ergodic when every environment matrix admits a decreasing direction;
/// evanescent when all environments are at-most-monomolecular and share a
/// common unstable support; `Unknown` with the most informative reason
/// otherwise.
pub fn classify_slow_with(analysis: &Analysis) -> Conclusion {
    if let Some(reason) = generator_obstruction(analysis) {
        return Conclusion::Unknown { reason };
    }
    let matrices: Vec<&Matrix> = analysis.linear.iter().map(|l| &l.matrix).collect();
    let decreasing: Vec<Option<DirectionCertificate>> =
        matrices.iter().map(|m| decreasing_direction(m)).collect();
    if decreasing.iter().all(Option::is_some) {
        return Conclusion::ErgodicEventually {
            certificates: decreasing.into_iter().map(Option::unwrap).collect(),
        };
    }

    let abscissas: Vec<f64> = matrices
        .iter()
        .map(|m| metzler::spectral_abscissa(m))
        .collect();
    if abscissas.iter().any(|a| a.abs() <= ABSCISSA_TOL) {
        return Conclusion::Unknown {
            reason: UnknownReason::NearCritical,
        };
    }
    if abscissas.iter().any(|&a| a < -ABSCISSA_TOL) {
        return Conclusion::Unknown {
            reason: UnknownReason::MixedStability,
        };
    }
    // All environments unstable.
    if !all_monomolecular(analysis) {
        return Conclusion::Unknown {
            reason: UnknownReason::NotMonomolecular,
        };
    }
    match common_unstable_support_with(analysis) {
        Ok(Some((support, certificates))) => Conclusion::EvanescentEventually {
            support,
            certificates,
        },
        Ok(None) | Err(_) => Conclusion::Unknown {
            reason: UnknownReason::NoCommonSupport,
        },
    }
}

fn generator_obstruction(analysis: &Analysis) -> Option<UnknownReason> {
    analysis
        .linear
        .iter()
        .any(|l| !l.is_linear_generator)
        .then_some(UnknownReason::NonlinearGenerator)
}

fn all_monomolecular(analysis: &Analysis) -> bool {
    analysis
        .linear
        .iter()
        .all(|l| l.is_at_most_monomolecular && l.is_mass_action)
}

/// Search for an index set `I` such that every environment's principal
/// submatrix on `I` admits an increasing direction.
///
/// Enumerates nonempty `I` by decreasing cardinality, then lexicographically,
/// and returns the first hit with the per-environment certificates embedded
/// into full dimension (zeros off `I`). Refuses dimensions above
/// [`MAX_SUPPORT_DIM`].
pub fn common_unstable_support(
    model: &SwitchedModel,
) -> Result<Option<(Vec<usize>, Vec<DirectionCertificate>)>> {
    common_unstable_support_with(&analyze(model)?)
}

pub fn common_unstable_support_with(
    analysis: &Analysis,
) -> Result<Option<(Vec<usize>, Vec<DirectionCertificate>)>> {
    let d = analysis.linear[0].matrix.n_rows();
    if d > MAX_SUPPORT_DIM {
        return Err(Error::Input(format!(
            "support enumeration refuses d = {d} > {MAX_SUPPORT_DIM}"
        )));
    }
    for size in (1..=d).rev() {
        let mut subset: Vec<usize> = (0..size).collect();
        loop {
            if let Some(vectors) = try_common_support(analysis, &subset) {
                return Ok(Some((subset, vectors)));
            }
            if !next_combination(&mut subset, d) {
                break;
            }
        }
    }
    Ok(None)
}

fn try_common_support(analysis: &Analysis, idx: &[usize]) -> Option<Vec<DirectionCertificate>> {
    let d = analysis.linear[0].matrix.n_rows();
    let mut certs = Vec::with_capacity(analysis.linear.len());
    for l in &analysis.linear {
        let sub = l.matrix.principal_submatrix(idx);
        let cert = increasing_direction(&sub)?;
        // Embed into full dimension with zeros off the support.
        let mut v = vec![0.0; d];
        for (&i, &w) in idx.iter().zip(&cert.v) {
            v[i] = w;
        }
        let vm = linalg::vec_mat(&v, &l.matrix);
        let margin = idx.iter().fold(f64::INFINITY, |a, &m| a.min(vm[m]));
        let embedded = DirectionCertificate {
            kind: CertificateKind::UnstableSupport,
            v,
            support: idx.to_vec(),
            margin,
        };
        if !embedded.verify(&l.matrix) {
            return None;
        }
        certs.push(embedded);
    }
    Some(certs)
}

/// Advance `subset` to the next size-`k` combination of `0..d` in
/// lexicographic order; false when exhausted.
fn next_combination(subset: &mut [usize], d: usize) -> bool {
    let k = subset.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if subset[i] < d - (k - i) {
            subset[i] += 1;
            for j in i + 1..k {
                subset[j] = subset[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Perturb a transience direction so it is not orthogonal to any vector in
/// `xi_set` while keeping its support and the positivity of `(v M)` there.
///
/// If `v` already satisfies every condition it is returned unchanged. The
/// perturbation draws from a fixed-seed generator so output is deterministic.
pub fn perturb_direction(v: &[f64], m: &Matrix, xi_set: &[Vec<f64>]) -> Result<Vec<f64>> {
    let d = v.len();
    let support: Vec<usize> = (0..d).filter(|&i| v[i] > 0.0).collect();
    if support.is_empty() {
        return Err(Error::Input("direction has empty support".into()));
    }
    if v.iter().any(|&x| x < 0.0) {
        return Err(Error::Input("direction has a negative entry".into()));
    }
    let vm = linalg::vec_mat(v, m);
    if support.iter().any(|&i| vm[i] <= 0.0) {
        return Err(Error::Input(
            "(v M) must be positive on the support of v".into(),
        ));
    }
    for xi in xi_set {
        if !support.iter().any(|&i| xi[i] != 0.0) {
            return Err(Error::Input(
                "a reaction vector has support disjoint from v".into(),
            ));
        }
    }

    let satisfied =
        |cand: &[f64]| -> bool { xi_set.iter().all(|xi| linalg::dot(cand, xi).abs() > 0.0) };
    if satisfied(v) {
        return Ok(v.to_vec());
    }

    let mut rng = SplitMix64::new(0x5eed_d1ec_7104_u64);
    for _attempt in 0..100 {
        let mut z = vec![0.0; d];
        for &i in &support {
            z[i] = 2.0 * rng.next_f64() - 1.0;
        }
        let mut eps = 1.0f64;
        for _ in 0..80 {
            let cand: Vec<f64> = v.iter().zip(&z).map(|(a, b)| a + eps * b).collect();
            let support_ok = (0..d).all(|i| (cand[i] > 0.0) == (v[i] > 0.0));
            if support_ok {
                let cm = linalg::vec_mat(&cand, m);
                if support.iter().all(|&i| cm[i] > 0.0) && satisfied(&cand) {
                    return Ok(cand);
                }
            }
            eps *= 0.5;
        }
    }
    Err(Error::Numeric(
        "perturbation retries exhausted (degenerate direction set)".into(),
    ))
}

/// One step of an escape path: environment index and reaction index within
/// that environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EscapeStep {
    pub env: usize,
    pub reaction: usize,
}

/// Greedy witness that states of unbounded `v`-value are reachable: from
/// `x0`, repeatedly fire any admissible reaction that strictly increases
/// `v . x`, in any environment, until `v . x > c`.
///
/// Requires all environments at-most-monomolecular mass-action and
/// `supp(v)
/// meeting `supp(x0)`. Under these hypotheses a step always exists; a stall
/// reports an error instead of looping.
pub fn escape_witness(
    model: &SwitchedModel,
    v: &[f64],
    x0: &[u64],
    c: f64,
) -> Result<(Vec<EscapeStep>, Vec<u64>)> {
    let d = model.n_species();
    assert_eq!(v.len(), d);
    assert_eq!(x0.len(), d);
    for l in &model.linearizations() {
        if !l.is_at_most_monomolecular {
            return Err(Error::Input(
                "escape witness requires at-most-monomolecular environments".into(),
            ));
        }
    }
    if !(0..d).any(|i| v[i] > 0.0 && x0[i] > 0) {
        return Err(Error::Input("supp(v) does not meet supp(x0)".into()));
    }

    let mut x = x0.to_vec();
    let mut path = Vec::new();
    let mut value = weighted_value(v, &x);
    while value <= c {
        let mut advanced = false;
        'envs: for (env_idx, env) in model.environments().iter().enumerate() {
            let lambdas = propensities(env, &x);
            for (r_idx, reaction) in env.reactions.iter().enumerate() {
                if lambdas[r_idx] <= 0.0 {
                    continue;
                }
                let gain: f64 = (0..d).map(|m| v[m] * reaction.delta(m) as f64).sum();
                if gain > 0.0 {
                    for m in 0..d {
                        let nx = x[m] as i64 + reaction.delta(m);
                        debug_assert!(nx >= 0);
                        x[m] = nx as u64;
                    }
                    path.push(EscapeStep {
                        env: env_idx,
                        reaction: r_idx,
                    });
                    value = weighted_value(v, &x);
                    advanced = true;
                    break 'envs;
                }
            }
        }
        if !advanced {
            return Err(Error::Numeric(
                "witness stalled: no admissible v-increasing reaction".into(),
            ));
        }
    }
    Ok((path, x))
}

fn weighted_value(v: &[f64], x: &[u64]) -> f64 {
    v.iter().zip(x).map(|(a, &b)| a * b as f64).sum()
}

/// Re-verify every certificate attached to a verdict against the model.
pub fn verify_verdict(model: &SwitchedModel, verdict: &RegimeVerdict) -> Result<bool> {
    let analysis = analyze(model)?;
    let fast_ok = match &verdict.fast {
        Conclusion::ErgodicEventually { certificates }
        | Conclusion::EvanescentEventually { certificates, .. } => certificates
            .iter()
            .all(|c| c.verify(&analysis.mix.mixed_matrix)),
        Conclusion::Unknown { .. } => true,
    };
    let slow_ok = match &verdict.slow {
        Conclusion::ErgodicEventually { certificates }
        | Conclusion::EvanescentEventually { certificates, .. } => {
            certificates.len() == analysis.linear.len()
                && certificates
                    .iter()
                    .zip(&analysis.linear)
                    .all(|(c, l)| c.verify(&l.matrix))
        }
        Conclusion::Unknown { .. } => true,
    };
    Ok(fast_ok && slow_ok)
}

//! Built-in model registry: every worked example ships as a namedentry
//! behind one trait, with a parameterized builder, the verdict the theory
//! predicts for it, and sweep defaults for reproduction runs.
//!
//! Entries are looked up by id at runtime (CLI `reproduce`, `gallery-list`).
//! Parameter defaults that the theory does not pin (scan-derived switching
//! windows, sweep grids, seeds) are implementation choices documented on
//! each entry.

use std::collections::BTreeMap;

use crate::classify::UnknownReason;
use crate::drift;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metzler::increasing_direction;
use crate::model::{Complex, CrnSpec, Reaction, SwitchedModel};

pub type Params = BTreeMap<String, f64>;

/// A declared parameter with its default and documented valid range.
#[derive(Debug, Clone, Copy)]
pub struct ParamSpec {
    pub name: &'static str,
    pub default: f64,
    pub domain: &'static str,
}

/// Conclusion skeleton an entry is expected to produce.
#[derive(Debug, Clone, PartialEq)]
pub enum ExpectedConclusion {
    Ergodic,
    Evanescent { support: Vec<usize> },
    Unknown { reason: UnknownReason },
}

impl ExpectedConclusion {
    pub fn matches(&self, conclusion: &crate::classify::Conclusion) -> bool {
        use crate::classify::Conclusion as C;
        match (self, conclusion) {
            (ExpectedConclusion::Ergodic, C::ErgodicEventually { .. }) => true,
            (
                ExpectedConclusion::Evanescent { support },
                C::EvanescentEventually { support: got, .. },
            ) => support == got,
            (ExpectedConclusion::Unknown { reason }, C::Unknown { reason: got }) => reason == got,
            _ => false,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ExpectedConclusion::Ergodic => "ergodic".into(),
            ExpectedConclusion::Evanescent { support } => {
                format!("evanescent on support {support:?}")
            }
            ExpectedConclusion::Unknown { reason } => format!("unknown ({reason:?})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedVerdict {
    pub fast: ExpectedConclusion,
    pub slow: ExpectedConclusion,
}

/// Default settings for an entry's escape-fraction sweep.
#[derive(Debug, Clone)]
pub struct SweepDefaults {
    pub kappa_grid: Vec<f64>,
    pub x0: Vec<u64>,
    pub t_max: f64,
    pub escape_norm: u64,
    pub n_traj: u64,
    pub max_events: u64,
}

/// One registered model family.
pub trait GalleryModel: Sync {
    fn id(&self) -> &'static str;
    /// One-line description of the construction.
    fn summary(&self) -> &'static str;
    fn params(&self) -> &'static [ParamSpec];
    fn build(&self, params: &Params) -> Result<SwitchedModel>;
    /// Verdict skeleton valid on the documented parameter domain.
    fn expected(&self) -> ExpectedVerdict;
    fn sweep_defaults(&self, params: &Params) -> Result<SweepDefaults>;
}

/// Resolve caller-supplied parameters against the declared specs; unknown
/// names are rejected.
pub fn resolve_params(entry: &dyn GalleryModel, given: &Params) -> Result<Params> {
    let specs = entry.params();
    for name in given.keys() {
        if !specs.iter().any(|s| s.name == name) {
            return Err(Error::Input(format!(
                "unknown parameter {name:?} for {} (valid: {})",
                entry.id(),
                specs.iter().map(|s| s.name).collect::<Vec<_>>().join(", ")
            )));
        }
    }
    Ok(specs
        .iter()
        .map(|s| {
            (
                s.name.to_string(),
                given.get(s.name).copied().unwrap_or(s.default),
            )
        })
        .collect())
}

pub fn registry() -> &'static [&'static dyn GalleryModel] {
    static REGISTRY: &[&dyn GalleryModel] = &[
        &DestructivePair,
        &DestructivePairNonMono,
        &CrossProductionPair,
        &ConservedCatalystChain,
        &CloneWithStableSide,
        &DisjointSupports,
        &OpposedBirthDeath,
        &TwoBlockComposite,
        &GroupedQuartet,
        &WindowLadder,
        &SharedMiddleSpecies,
    ];
    REGISTRY
}

pub fn lookup(id: &str) -> Result<&'static dyn GalleryModel> {
    registry()
        .iter()
        .find(|e| e.id() == id)
        .copied()
        .ok_or_else(|| {
            Error::Input(format!(
                "unknown gallery id {id:?} (try: {})",
                registry().map_ids().join(", ")
            ))
        })
}

trait Ids {
    fn map_ids(&self) -> Vec<&'static str>;
}

impl Ids for &'static [&'static dyn GalleryModel] {
    fn map_ids(&self) -> Vec<&'static str> {
        self.iter().map(|e| e.id()).collect()
    }
}

/// Build a registered model.
pub fn build(id: &str, params: &Params) -> Result<SwitchedModel> {
    let entry = lookup(id)?;
    entry.build(&resolve_params(entry, params)?)
}

/// Expected verdict skeleton of a registered model.
pub fn expected_verdict(id: &str) -> Result<ExpectedVerdict> {
    Ok(lookup(id)?.expected())
}

// --- construction helpers ---------------------------------------------------

fn complex(pairs: &[(usize, u32)]) -> Complex {
    Complex::from_pairs(pairs.iter().copied())
}

fn rxn(source: &[(usize, u32)], product: &[(usize, u32)], rate: f64) -> Reaction {
    Reaction::new(complex(source), complex(product), rate).expect("gallery reaction")
}

fn species_names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("S{}", i + 1)).collect()
}

fn symmetric_q(n: usize) -> Matrix {
    let mut q = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                q[(i, j)] = 1.0;
            }
        }
        q[(i, i)] = -((n - 1) as f64);
    }
    q
}

fn get(params: &Params, name: &str) -> f64 {
    params[name]
}

fn check_range(name: &str, value: f64, lo: f64, hi: f64) -> Result<()> {
    if value > lo && value < hi {
        Ok(())
    } else {
        Err(Error::Input(format!(
            "parameter {name} = {value} outside ({lo}, {hi})"
        )))
    }
}

fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![lo];
    }
    let lr = lo.ln();
    let step = (hi.ln() - lr) / (count - 1) as f64;
    (0..count).map(|i| (lr + step * i as f64).exp()).collect()
}

fn generic_sweep(d: usize) -> SweepDefaults {
    SweepDefaults {
        kappa_grid: log_grid(1e-3, 1e3, 13),
        x0: vec![1; d],
        t_max: 200.0,
        escape_norm: 1_000,
        n_traj: 200,
        max_events: 10_000_000,
    }
}

// --- entries -----------------------------------------------------------------

/// Two species destroying each other's stock while producing two of the
/// other; both environments unstable, the average stable.
struct DestructivePair;

fn destructive_pair_envs(eps: f64) -> [Vec<Reaction>; 2] {
    let e = eps;
    let env1 = vec![
        rxn(&[(1, 1)], &[(1, 2)], 2.0),
        rxn(&[(1, 1)], &[], 1.0 + e),
        rxn(&[(1, 1)], &[(0, 2)], 1.0 - e),
        rxn(&[], &[(0, 1)], 1.0),
        rxn(&[], &[(1, 1)], 1.0),
        rxn(&[(0, 1)], &[], 4.0 - e),
        rxn(&[(0, 1)], &[(1, 2)], e),
    ];
    let env2 = vec![
        rxn(&[(1, 1)], &[], 4.0 - e),
        rxn(&[(1, 1)], &[(0, 2)], e),
        rxn(&[], &[(0, 1)], 1.0),
        rxn(&[], &[(1, 1)], 1.0),
        rxn(&[(0, 1)], &[], 1.0 + e),
        rxn(&[(0, 1)], &[(0, 2)], 2.0),
        rxn(&[(0, 1)], &[(1, 2)], 1.0 - e),
    ];
    [env1, env2]
}

impl GalleryModel for DestructivePair {
    fn id(&self) -> &'static str {
        "ex4.1"
    }
    fn summary(&self) -> &'static str {
        "two-species pair, each environment unstable, stable average: \
         evanescent for slow switching, ergodic for fast"
    }
    fn params(&self) -> &'static [ParamSpec] {
        &[ParamSpec {
            name: "eps",
            default: 0.25,
            domain: "(0, 1)",
        }]
    }
    fn build(&self, params: &Params) -> Result<SwitchedModel> {
        let eps = get(params, "eps");
        check_range("eps", eps, 0.0, 1.0)?;
        let [env1, env2] = destructive_pair_envs(eps);
        SwitchedModel::new(
            species_names(2),
            vec![CrnSpec::new(2, env1)?, CrnSpec::new(2, env2)?],
            symmetric_q(2),
        )
    }
    fn expected(&self) -> ExpectedVerdict {
        ExpectedVerdict {
            fast: ExpectedConclusion::Ergodic,
            slow: ExpectedConclusion::Evanescent {
                support: vec![0, 1],
            },
        }
    }
    fn sweep_defaults(&self, _params: &Params) -> Result<SweepDefaults> {
        Ok(generic_sweep(2))
    }
}

/// The destructive pair plus higher-order reactions whose drift cancels:
/// the ergodic conclusion survives, the transience machinery refuses.
struct DestructivePairNonMono;

impl GalleryModel for DestructivePairNonMono {
    fn id(&self) -> &'static str {
        "ex4.2"
    }
    fn summary(&self) -> &'static str {
        "destructive pair with cancelling second-order reactions: fast regime \
         still ergodic, transience criteria refuse the model"
    }
    fn params(&self) -> &'static [ParamSpec] {
        &[ParamSpec {
            name: "eps",
            default: 0.25,
            domain: "(0, 1)",
        }]
    }
    fn build(&self, params: &Params) -> Result<SwitchedModel> {
        let eps = get(params, "eps");
        check_range("eps", eps, 0.0, 1.0)?;
        let [mut env1, mut env2] = destructive_pair_envs(eps);
        env1.push(rxn(&[(0, 2)], &[(0, 1)], 1.0));
        env1.push(rxn(&[(0, 2)], &[(0, 3)], 1.0));
        env2.push(rxn(&[(1, 2)], &[(1, 3)], 1.0));
        env2.push(rxn(&[(1, 2)], &[(1, 1)], 1.0));
        SwitchedModel::new(
            species_names(2),
            vec![CrnSpec::new(2, env1)?, CrnSpec::new(2, env2)?],
            symmetric_q(2),
        )
    }
    fn expected(&self) -> ExpectedVerdict {
        ExpectedVerdict {
            fast: ExpectedConclusion::Ergodic,
            slow: ExpectedConclusion::Unknown {
                reason: UnknownReason::NotMonomolecular,
            },
        }
    }
    fn sweep_defaults(&self, _params: &Params) -> Result<SweepDefaults> {
        Ok(generic_sweep(2))
    }
}

/// Each species converts into four of the other; environments individually
/// stable for small eps, the average unstable.
struct CrossProductionPair;

fn cross_production_envs(eps: f64) -> [Vec<Reaction>; 2] {
    let e = eps;
    let env = |k_self: f64, k_cross: f64| {
        vec![
            rxn(&[(0, 1)], &[], k_self),
            rxn(&[], &[(0, 1)], 1.0),
            rxn(&[(0, 1)], &[(1, 4)], k_cross),
            rxn(&[(1, 1)], &[], k_cross),
            rxn(&[], &[(1, 1)], 1.0),
            rxn(&[(1, 1)], &[(0, 4)], k_self),
        ]
    };
    [env(1.0 - e, e), env(e, 1.0 - e)]
}

impl GalleryModel for CrossProductionPair {
    fn id(&self) -> &'static str {
        "ex4.3"
    }
    fn summary(&self) -> &'static str {
        "fourfold cross-production pair: ergodic for slow switching, \
         evanescent for fast"
    }
    fn params(&self) -> &'static [ParamSpec] {
        // Individual environments are stable iff 1 - 16 eps + 16 eps^2 > 0,
        // i.e. eps below 1/2 - sqrt(3)/4.
        &[ParamSpec {
            name: "eps",
            default: 0.05,
            domain: "(0, 0.066)",
        }]
    }
    fn build(&self, params: &Params) -> Result<SwitchedModel> {
        let eps = get(params, "eps");
        check_range("eps", eps, 0.0, 0.5 - 3f64.sqrt() / 4.0)?;
        let [env1, env2] = cross_production_envs(eps);
        SwitchedModel::new(
            species_names(2),
            vec![CrnSpec::new(2, env1)?, CrnSpec::new(2, env2)?],
            symmetric_q(2),
        )
    }
    fn expected(&self) -> ExpectedVerdict {
        ExpectedVerdict {
            fast: ExpectedConclusion::Evanescent {
                support: vec![0, 1],
            },
            slow: ExpectedConclusion::Ergodic,
        }
    }
    fn sweep_defaults(&self, _params: &Params) -> Result<SweepDefaults> {
        Ok(generic_sweep(2))
    }
}

/// A catalyst hopping between two forms turns a birth-death species into a
/// switched model with binomial environment weights: one species, n+1
/// environments, birth rate (i-1) alpha in environment i.
struct ConservedCatalystChain;

impl GalleryModel for ConservedCatalystChain {
    fn id(&self) -> &'static str {
        "ex4.4"
    }
    fn summary(&self) -> &'static str {
        "catalyst-count reformulation: n+1 environments with a tridiagonal \
         switching chain and binomial weights; verdict flips at n*alpha = 2*beta"
    }
    fn params(&self) -> &'static [ParamSpec] {
        &[
            ParamSpec {
                name: "n",
                default: 4.0,
                domain: "integer >= 1",
            },
            ParamSpec {
                name: "alpha",
                default: 1.0,
                domain: "> 0; frozen expected verdict assumes n*alpha > 2*beta",
            },
            ParamSpec {
                name: "beta",
                default: 1.0,
                domain: "> 0",
            },
        ]
    }
    fn build(&self, params: &Params) -> Result<SwitchedModel> {
        let n = get(params, "n");
        let alpha = get(params, "alpha");
        let beta = get(params, "beta");
        if n < 1.0 || n.fract() != 0.0 || n > 64.0 {
            return Err(Error::Input(format!(
                "n must be an integer in [1, 64], got {n}"
            )));
        }
        if !(alpha > 0.0) || !(beta > 0.0) {
            return Err(Error::Input("alpha and beta must be positive".into()));
        }
        let n = n as usize;
        let mut envs = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let mut reactions = vec![rxn(&[(0, 1)], &[], beta), rxn(&[], &[(0, 1)], 1.0)];
            if i > 0 {
                reactions.push(rxn(&[(0, 1)], &[(0, 2)], i as f64 * alpha));
            }
            envs.push(CrnSpec::new(1, reactions)?);
        }
        let size = n + 1;
        let mut q = Matrix::zeros(size, size);
        for i in 0..size {
            if i + 1 < size {
                q[(i, i + 1)] = (n - i) as f64;
            }
            if i > 0 {
                q[(i, i - 1)] = i as f64;
            }
            q[(i, i)] = -(n as f64);
        }
        SwitchedModel::new(vec!["Y".into()], envs, q)
    }
    fn expected(&self) -> ExpectedVerdict {
        // For n*alpha > 2*beta: the mixed scalar n*alpha/2 - beta is
        // positive while environment 1 stays stable, so the slow regime has
        // mixed stability.
        ExpectedVerdict {
            fast: ExpectedConclusion::Evanescent { support: vec![0] },
            slow: ExpectedConclusion::Unknown {
                reason: UnknownReason::MixedStability,
            },
        }
    }
    fn sweep_defaults(&self, _params: &Params) -> Result<SweepDefaults> {
        Ok(generic_sweep(1))
    }
}

/// Stable birth-death next to an untouched clone species: instability lives
/// on a proper support.
struct CloneWithStableSide;

impl GalleryModel for CloneWithStableSide {
    fn id(&self) -> &'static str {
        "ex4.5"
    }
    fn summary(&self) -> &'static str {
        "single environment, 0 <-> X plus Y -> 2Y: evanescent exactly from \
         states with a Y molecule"
    }
    fn params(&self) -> &'static [ParamSpec] {
        &[]
    }
    fn build(&self, _params: &Params) -> Result<SwitchedModel> {
        let env = vec![
            rxn(&[], &[(0, 1)], 1.0),
            rxn(&[(0, 1)], &[], 1.0),
            rxn(&[(1, 1)], &[(1, 2)], 1.0),
        ];
        SwitchedModel::new(
            vec!["X".into(), "Y".into()],
            vec![CrnSpec::new(2, env)?],
            Matrix::zeros(1, 1),
        )
    }
    fn expected(&self) -> ExpectedVerdict {
        ExpectedVerdict {
            fast: ExpectedConclusion::Evanescent { support: vec![1] },
            slow: ExpectedConclusion::Evanescent { support: vec![1] },
        }
    }
    fn sweep_defaults(&self, _params: &Params) -> Result<SweepDefaults> {
        let mut s = generic_sweep(2);
        s.x0 = vec![1, 1];
        Ok(s)
    }
}

/// Two unstable environments whose growing species are disjoint; the mixed
/// process is positive recurrent for every switching rate, which no regime
/// criterion here can see.
struct DisjointSupports;

impl GalleryModel for DisjointSupports {
    fn id(&self) -> &'static str {
        "ex_disjoint"
    }
    fn summary(&self) -> &'static str {
        "unstable species disjoint across environments: slow regime \
         undecided, fast regime averages to a stable matrix"
    }
    fn params(&self) -> &'static [ParamSpec] {
        &[]
    }
    fn build(&self, _params: &Params) -> Result<SwitchedModel> {
        let env1 = vec![
            rxn(&[(1, 1)], &[(1, 2)], 1.0),
            rxn(&[], &[(1, 1)], 1.0),
            rxn(&[(0, 1)], &[], 2.0),
        ];
        let env2 = vec![
            rxn(&[(1, 1)], &[], 2.0),
            rxn(&[], &[(0, 1)], 1.0),
            rxn(&[(0, 1)], &[(0, 2)], 1.0),
        ];
        SwitchedModel::new(
            vec!["A".into(), "B".into()],
            vec![CrnSpec::new(2, env1)?, CrnSpec::new(2, env2)?],
            symmetric_q(2),
        )
    }
    fn expected(&self) -> ExpectedVerdict {
        ExpectedVerdict {
            fast: ExpectedConclusion::Ergodic,
            slow: ExpectedConclusion::Unknown {
                reason: UnknownReason::NoCommonSupport,
            },
        }
    }
    fn sweep_defaults(&self, _params: &Params) -> Result<SweepDefaults> {
        Ok(generic_sweep(2))
    }
}

/// One stable and one unstable birth-death environment; recurrent for every
/// switching rate by a bespoke power-function argument the classifier does
/// not attempt.
struct OpposedBirthDeath;

impl GalleryModel for OpposedBirthDeath {
    fn id(&self) -> &'static str {
        "ex4.7"
    }
    fn summary(&self) -> &'static str {
        "stable and unstable birth-death environments: fast regime ergodic, \
         slow regime undecided (mixed stability)"
    }
    fn params(&self) -> &'static [ParamSpec] {
        &[]
    }
    fn build(&self, _params: &Params) -> Result<SwitchedModel> {
        let env1 = vec![
            rxn(&[], &[(0, 1)], 1.0),
            rxn(&[(0, 1)], &[], 1.0),
            rxn(&[(0, 1)], &[(0, 2)], 2.0),
        ];
        let env2 = vec![
            rxn(&[], &[(0, 1)], 1.0),
            rxn(&[(0, 1)], &[], 3.0),
            rxn(&[(0, 1)], &[(0, 2)], 1.0),
        ];
        SwitchedModel::new(
            vec!["S".into()],
            vec![CrnSpec::new(1, env1)?, CrnSpec::new(1, env2)?],
            symmetric_q(2),
        )
    }
    fn expected(&self) -> ExpectedVerdict {
        ExpectedVerdict {
            fast: ExpectedConclusion::Ergodic,
            slow: ExpectedConclusion::Unknown {
                reason: UnknownReason::MixedStability,
            },
        }
    }
    fn sweep_defaults(&self, _params: &Params) -> Result<SweepDefaults> {
        Ok(generic_sweep(1))
    }
}

/// Non-interacting union of the destructive pair and a rate-scaled
/// cross-production pair: transient at both switching extremes, ergodic in a
/// window between them.
struct TwoBlockComposite;

impl GalleryModel for TwoBlockComposite {
    fn id(&self) -> &'static str {
        "ex5.1"
    }
    fn summary(&self) -> &'static str {
        "destructive pair plus beta-scaled cross-production pair on disjoint \
         species: evanescent for slow and fast switching, ergodic between"
    }
    fn params(&self) -> &'static [ParamSpec] {
        // beta = 0 requests the threshold-derived default spacing.
        &[
            ParamSpec {
                name: "eps",
                default: 0.05,
                domain: "(0, 0.066)",
            },
            ParamSpec {
                name: "beta",
                default: 0.0,
                domain: "> 0, or 0 for the threshold-derived default",
            },
        ]
    }
    fn build(&self, params: &Params) -> Result<SwitchedModel> {
        let eps = get(params, "eps");
        check_range("eps", eps, 0.0, 0.5 - 3f64.sqrt() / 4.0)?;
        let mut beta = get(params, "beta");
        if beta < 0.0 {
            return Err(Error::Input("beta must be non-negative".into()));
        }
        if beta == 0.0 {
            beta = default_block_spacing(eps)?;
        }
        let [d1, d2] = destructive_pair_envs(eps);
        let [c1, c2] = cross_production_envs(eps);
        let shift_scale = |reactions: &[Reaction], by: usize, scale: f64| -> Vec<Reaction> {
            reactions
                .iter()
                .map(|r| {
                    let move_complex =
                        |c: &Complex| Complex::from_pairs(c.iter().map(|(m, cnt)| (m + by, cnt)));
                    Reaction::new(
                        move_complex(&r.source),
                        move_complex(&r.product),
                        r.rate * scale,
                    )
                    .expect("shifted gallery reaction")
                })
                .collect()
        };
        let env1 = [d1.clone(), shift_scale(&c1, 2, beta)].concat();
        let env2 = [d2.clone(), shift_scale(&c2, 2, beta)].concat();
        SwitchedModel::new(
            species_names(4),
            vec![CrnSpec::new(4, env1)?, CrnSpec::new(4, env2)?],
            symmetric_q(2),
        )
    }
    fn expected(&self) -> ExpectedVerdict {
        ExpectedVerdict {
            fast: ExpectedConclusion::Evanescent {
                support: vec![2, 3],
            },
            slow: ExpectedConclusion::Evanescent {
                support: vec![0, 1],
            },
        }
    }
    fn sweep_defaults(&self, params: &Params) -> Result<SweepDefaults> {
        let eps = get(params, "eps");
        let mut beta = get(params, "beta");
        if beta == 0.0 {
            beta = default_block_spacing(eps)?;
        }
        Ok(SweepDefaults {
            kappa_grid: log_grid(1e-3, 1e3 * beta.max(1.0), 13),
            x0: vec![1; 4],
            t_max: 200.0,
            escape_norm: 1_000,
            n_traj: 200,
            max_events: 20_000_000,
        })
    }
}

/// Spacing for the composite's second block so its ergodic window overlaps
/// the first block's: ratio of the fast-ergodic threshold of the destructive
/// pair to the slow-ergodic threshold of the cross-production pair, doubled.
fn default_block_spacing(eps: f64) -> Result<f64> {
    let first = build("ex4.1", &[("eps".to_string(), eps)].into_iter().collect())?;
    let second = build("ex4.3", &[("eps".to_string(), eps)].into_iter().collect())?;
    let first_analysis = crate::classify::analyze(&first)?;
    let cert = crate::metzler::decreasing_direction(&first_analysis.mix.mixed_matrix)
        .ok_or_else(|| Error::Numeric("destructive pair mix lost stability".into()))?;
    let (_, kappa_min) = drift::build_fast_ergodic(&first, &cert)?;
    let second_analysis = crate::classify::analyze(&second)?;
    let certs: Vec<_> = second_analysis
        .linear
        .iter()
        .map(|l| {
            crate::metzler::decreasing_direction(&l.matrix)
                .ok_or_else(|| Error::Numeric("cross pair environment lost stability".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (_, kappa_max) = drift::build_slow_ergodic(&second, &certs)?;
    Ok(2.0 * kappa_min / kappa_max)
}

/// Four environments in two fast pairs with weak coupling across pairs; all
/// individual and fully averaged matrices stable, pair averages unstable.
struct GroupedQuartet;

/// Default cross-pair coupling: seeded escape sweeps show a clean transient
/// window around switching rates 32..512 at this value, with both sweep
/// endpoints quiet.
const QUARTET_DEFAULT_EPS: f64 = 6.103515625e-5; // 2^-14

fn grouped_quartet_envs() -> [Vec<Reaction>; 4] {
    let env = |deg_s1: f64, deg_s2: f64, s1_makes_s2: f64, s2_makes_s1: f64| {
        vec![
            rxn(&[(1, 1)], &[], deg_s2),
            rxn(&[(1, 1)], &[(0, 1), (1, 1)], s2_makes_s1),
            rxn(&[], &[(0, 1)], 1.0),
            rxn(&[], &[(1, 1)], 1.0),
            rxn(&[(0, 1)], &[], deg_s1),
            rxn(&[(0, 1)], &[(0, 1), (1, 1)], s1_makes_s2),
        ]
    };
    [
        env(15.0, 1.0, 2.0, 6.0),
        env(15.0, 1.0, 6.0, 2.0),
        env(1.0, 15.0, 2.0, 6.0),
        env(1.0, 15.0, 6.0, 2.0),
    ]
}

impl GalleryModel for GroupedQuartet {
    fn id(&self) -> &'static str {
        "ex5.4"
    }
    fn summary(&self) -> &'static str {
        "two fast pairs with weak cross-pair switching: ergodic at both \
         extremes, evanescent for intermediate rates"
    }
    fn params(&self) -> &'static [ParamSpec] {
        &[ParamSpec {
            name: "eps",
            default: QUARTET_DEFAULT_EPS,
            domain: "(0, 1); default from seeded escape sweeps",
        }]
    }
    fn build(&self, params: &Params) -> Result<SwitchedModel> {
        let eps = get(params, "eps");
        check_range("eps", eps, 0.0, 1.0)?;
        let envs = grouped_quartet_envs();
        SwitchedModel::new(
            species_names(2),
            envs.into_iter()
                .map(|r| CrnSpec::new(2, r))
                .collect::<Result<Vec<_>>>()?,
            drift::grouped_q(eps),
        )
    }
    fn expected(&self) -> ExpectedVerdict {
        ExpectedVerdict {
            fast: ExpectedConclusion::Ergodic,
            slow: ExpectedConclusion::Ergodic,
        }
    }
    fn sweep_defaults(&self, _params: &Params) -> Result<SweepDefaults> {
        Ok(SweepDefaults {
            kappa_grid: vec![0.25, 4.0, 32.0, 128.0, 512.0, 4096.0, 16384.0],
            x0: vec![20, 20],
            t_max: 120.0,
            escape_norm: 500,
            n_traj: 100,
            max_events: 20_000_000,
        })
    }
}

/// Group directions for the quartet: increasing directions of the two pair
/// averages.
pub fn quartet_directions(model: &SwitchedModel) -> Result<(Vec<f64>, Vec<f64>)> {
    let analysis = crate::classify::analyze(model)?;
    let a1 = drift::pair_average(&analysis, 0);
    let a2 = drift::pair_average(&analysis, 1);
    let v1 = increasing_direction(&a1).ok_or_else(|| {
        Error::Numeric("first pair average admits no increasing direction".into())
    })?;
    let v2 = increasing_direction(&a2).ok_or_else(|| {
        Error::Numeric("second pair average admits no increasing direction".into())
    })?;
    Ok((v1.v, v2.v))
}

/// Block-diagonal ladder of rate-scaled quartets: one transient switching
/// window per block, interleaved so the gaps stay ergodic.
///
/// Each block additionally degrades its own species at a rate proportional
/// to the block's scale. The damping subtracts a constant from every growth
/// exponent, so switching rates whose residual growth is below it are
/// genuinely ergodic at any horizon: the blocks' transient windows get hard
/// edges instead of tails that bleed into each other once the faster blocks
/// are observed over their rescaled (longer) effective horizons.
struct WindowLadder;

/// Coupling for the ladder blocks: wide enough that each block's transient
/// window spans roughly one decade, so consecutive windows separate cleanly.
const LADDER_DEFAULT_EPS: f64 = 2.44140625e-4; // 2^-12

/// Per-unit-scale damping rate added to each block.
const LADDER_DAMPING: f64 = 0.0075;

/// Scale ratio between consecutive blocks.
const LADDER_SPACING: f64 = 64.0;

/// Escape-measured geometry of one damped block at the default coupling,
/// from seeded sweeps: fractions above one half on roughly [48, 128],
/// identically zero at 8 and below and at 1024 and above regardless of the
/// horizon (the damping makes those regimes decay outright).
const LADDER_STRONG: (f64, f64) = (48.0, 96.0);
const LADDER_DIP: f64 = 512.0;
const LADDER_TOP: f64 = 1024.0;

impl GalleryModel for WindowLadder {
    fn id(&self) -> &'static str {
        "ex5.6"
    }
    fn summary(&self) -> &'static str {
        "n rate-scaled copies of the quartet on disjoint species: at least n \
         separate transient windows as the switching rate increases"
    }
    fn params(&self) -> &'static [ParamSpec] {
        &[
            ParamSpec {
                name: "n",
                default: 2.0,
                domain: "integer in [1, 6]",
            },
            ParamSpec {
                name: "eps",
                default: LADDER_DEFAULT_EPS,
                domain: "(0, 1)",
            },
        ]
    }
    fn build(&self, params: &Params) -> Result<SwitchedModel> {
        let n = get(params, "n");
        let eps = get(params, "eps");
        if n < 1.0 || n.fract() != 0.0 || n > 6.0 {
            return Err(Error::Input(format!(
                "n must be an integer in [1, 6], got {n}"
            )));
        }
        check_range("eps", eps, 0.0, 1.0)?;
        let n = n as usize;
        let betas = ladder_scales(n);
        let base = grouped_quartet_envs();
        let d = 2 * n;
        let mut envs: Vec<Vec<Reaction>> = vec![Vec::new(); 4];
        for (block, &beta) in betas.iter().enumerate() {
            for (env_idx, reactions) in base.iter().enumerate() {
                let env = &mut envs[env_idx];
                let move_complex = |c: &Complex| {
                    Complex::from_pairs(c.iter().map(|(m, cnt)| (m + 2 * block, cnt)))
                };
                for r in reactions {
                    env.push(
                        Reaction::new(
                            move_complex(&r.source),
                            move_complex(&r.product),
                            r.rate * beta,
                        )
                        .expect("scaled ladder reaction"),
                    );
                }
                for m in [2 * block, 2 * block + 1] {
                    env.push(
                        Reaction::new(Complex::species(m), Complex::zero(), LADDER_DAMPING * beta)
                            .expect("ladder damping reaction"),
                    );
                }
            }
        }
        SwitchedModel::new(
            species_names(d),
            envs.into_iter()
                .map(|r| CrnSpec::new(d, r))
                .collect::<Result<Vec<_>>>()?,
            drift::grouped_q(eps),
        )
    }
    fn expected(&self) -> ExpectedVerdict {
        ExpectedVerdict {
            fast: ExpectedConclusion::Ergodic,
            slow: ExpectedConclusion::Ergodic,
        }
    }
    fn sweep_defaults(&self, params: &Params) -> Result<SweepDefaults> {
        let n = get(params, "n") as usize;
        let betas = ladder_scales(n);
        // Low endpoint, two strong points per window, a dip point between
        // consecutive windows, and a hard-zero upper endpoint.
        let mut grid = vec![2.0];
        for (j, &beta) in betas.iter().enumerate() {
            grid.push(beta * LADDER_STRONG.0);
            grid.push(beta * LADDER_STRONG.1);
            if j + 1 < betas.len() {
                grid.push(beta * LADDER_DIP);
            } else {
                grid.push(beta * LADDER_TOP);
            }
        }
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid.dedup();
        Ok(SweepDefaults {
            kappa_grid: grid,
            x0: vec![75; 2 * n],
            t_max: 150.0,
            escape_norm: 500,
            n_traj: 50,
            max_events: 40_000_000,
        })
    }
}

/// Rate scales separating the ladder's windows.
fn ladder_scales(n: usize) -> Vec<f64> {
    (0..n).map(|j| LADDER_SPACING.powi(j as i32)).collect()
}

/// Three species, both environments unstable along supports sharing only the
/// middle species; outside the scope of every criterion here.
struct SharedMiddleSpecies;

impl GalleryModel for SharedMiddleSpecies {
    fn id(&self) -> &'static str {
        "ex6.2"
    }
    fn summary(&self) -> &'static str {
        "unstable supports overlap in one species only: slow regime \
         undecided, fast regime follows the mixed matrix"
    }
    fn params(&self) -> &'static [ParamSpec] {
        &[ParamSpec {
            name: "alpha",
            default: 1.0,
            domain: "(0, 2]; frozen fast verdict derived on this range",
        }]
    }
    fn build(&self, params: &Params) -> Result<SwitchedModel> {
        let alpha = get(params, "alpha");
        if !(alpha > 0.0) || alpha > 2.0 {
            return Err(Error::Input(format!(
                "alpha must be in (0, 2], got {alpha}"
            )));
        }
        let env1 = vec![
            rxn(&[(0, 1)], &[(0, 4), (1, 1)], 1.0),
            rxn(&[(1, 1)], &[(0, 1)], 1.0),
            rxn(&[(2, 1)], &[], alpha),
            rxn(&[], &[(2, 1)], 1.0),
        ];
        let env2 = vec![
            rxn(&[(0, 1)], &[], alpha),
            rxn(&[], &[(0, 1)], 1.0),
            rxn(&[(1, 1)], &[(2, 1)], 1.0),
            rxn(&[(2, 1)], &[(2, 4), (1, 1)], 1.0),
        ];
        SwitchedModel::new(
            species_names(3),
            vec![CrnSpec::new(3, env1)?, CrnSpec::new(3, env2)?],
            symmetric_q(2),
        )
    }
    fn expected(&self) -> ExpectedVerdict {
        // Fast conclusion derived once from the mixed matrix on the
        // documented alpha range and frozen as a regression value.
        ExpectedVerdict {
            fast: ExpectedConclusion::Evanescent {
                support: vec![0, 1, 2],
            },
            slow: ExpectedConclusion::Unknown {
                reason: UnknownReason::NoCommonSupport,
            },
        }
    }
    fn sweep_defaults(&self, _params: &Params) -> Result<SweepDefaults> {
        Ok(generic_sweep(3))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;

    #[test]
    fn registry_has_eleven_entries_with_unique_ids() {
        let ids = registry().map_ids();
        assert_eq!(ids.len(), 11);
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 11);
    }

    #[test]
    fn destructive_pair_linearization() {
        let params: Params = [("eps".to_string(), 0.25)].into_iter().collect();
        let model = build("ex4.1", &params).unwrap();
        let lin = model.linearizations();
        // d S1 = -4 x1 + 2(1-eps) x2 + 1, d S2 = 2 eps x1 + 1.
        let m1 = &lin[0].matrix;
        assert_eq!(m1[(0, 0)], -4.0);
        assert_eq!(m1[(0, 1)], 1.5);
        assert_eq!(m1[(1, 0)], 0.5);
        assert_eq!(m1[(1, 1)], 0.0);
        assert_eq!(lin[0].inflow, vec![1.0, 1.0]);
        assert!(lin[0].is_at_most_monomolecular);
    }

    #[test]
    fn non_mono_variant_keeps_same_matrix() {
        let params: Params = [("eps".to_string(), 0.25)].into_iter().collect();
        let base = build("ex4.1", &params).unwrap();
        let variant = build("ex4.2", &params).unwrap();
        let lb = base.linearizations();
        let lv = variant.linearizations();
        for i in 0..2 {
            assert_eq!(lb[i].matrix, lv[i].matrix);
            assert!(!lv[i].is_at_most_monomolecular);
            assert!(lv[i].is_linear_generator);
        }
    }

    #[test]
    fn catalyst_chain_mixed_scalar() {
        let params: Params = [
            ("n".to_string(), 4.0),
            ("alpha".to_string(), 1.0),
            ("beta".to_string(), 1.0),
        ]
        .into_iter()
        .collect();
        let model = build("ex4.4", &params).unwrap();
        assert_eq!(model.n_env(), 5);
        let analysis = crate::classify::analyze(&model).unwrap();
        // Weights binomial(4, i)/16, mixed scalar = 4*1/2 - 1 = 1.
        let binom = [1.0, 4.0, 6.0, 4.0, 1.0];
        for (i, b) in binom.iter().enumerate() {
            assert!((analysis.mix.w[i] - b / 16.0).abs() < 1e-12);
        }
        assert!((analysis.mix.mixed_matrix[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shared_middle_matrices() {
        let params: Params = [("alpha".to_string(), 1.0)].into_iter().collect();
        let model = build("ex6.2", &params).unwrap();
        let lin = model.linearizations();
        let expect_1 = [[3.0, 1.0, 0.0], [1.0, -1.0, 0.0], [0.0, 0.0, -1.0]];
        for (i, row) in expect_1.iter().enumerate() {
            for (j, &val) in row.iter().enumerate() {
                assert_eq!(lin[0].matrix[(i, j)], val);
            }
        }
        // v1 M1 = (7, 1, 0) and v2 M2 = (0, 1, 7).
        let v1m = linalg::vec_mat(&[2.0, 1.0, 0.0], &lin[0].matrix);
        assert_eq!(v1m, vec![7.0, 1.0, 0.0]);
        let v2m = linalg::vec_mat(&[0.0, 1.0, 2.0], &lin[1].matrix);
        assert_eq!(v2m, vec![0.0, 1.0, 7.0]);
    }

    #[test]
    fn quartet_pair_averages() {
        let model = build("ex5.4", &Params::new()).unwrap();
        let analysis = crate::classify::analyze(&model).unwrap();
        let a1 = drift::pair_average(&analysis, 0);
        let a2 = drift::pair_average(&analysis, 1);
        for (a, expect) in [
            (&a1, [[-15.0, 4.0], [4.0, -1.0]]),
            (&a2, [[-1.0, 4.0], [4.0, -15.0]]),
        ] {
            for i in 0..2 {
                for j in 0..2 {
                    assert_eq!(a[(i, j)], expect[i][j]);
                }
            }
            // Negative determinant: one unstable direction per pair average.
            let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
            assert!(det < 0.0);
        }
    }

    #[test]
    fn out_of_domain_params_rejected() {
        let params: Params = [("eps".to_string(), 1.5)].into_iter().collect();
        assert!(build("ex4.1", &params).is_err());
        let params: Params = [("eps".to_string(), 0.3)].into_iter().collect();
        assert!(build("ex4.3", &params).is_err());
        let params: Params = [("bogus".to_string(), 1.0)].into_iter().collect();
        assert!(build("ex4.1", &params).is_err());
        assert!(build("no-such-id", &Params::new()).is_err());
    }
}

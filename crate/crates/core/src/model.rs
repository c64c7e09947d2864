//! Domain types for reaction networks in switching environments, plus the
//! linearization that every stability criterion in this crate consumes.
//!
//! A model is a list of environments sharing one species set, each
//! environment a mass-action reaction network, together with a conservative
//! rate matrix `Q` driving the environment switches. The runtime switching
//! speed is `kappa * Q` with `kappa` supplied per call, never stored.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph;
use crate::linalg::Matrix;

/// Absolute tolerance on row sums of an imported `Q` matrix.
pub const Q_ROW_SUM_TOL: f64 = 1e-12;

/// A complex: non-negative integer combination of species, stored sparsely.
/// The empty map is the zero complex.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Complex {
    coeffs: BTreeMap<usize, u32>,
}

impl Complex {
    pub fn zero() -> Self {
        Complex::default()
    }

    /// Single molecule of species `m`.
    pub fn species(m: usize) -> Self {
        Complex::from_pairs([(m, 1)])
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, u32)>) -> Self {
        let mut coeffs = BTreeMap::new();
        for (m, c) in pairs {
            if c > 0 {
                *coeffs.entry(m).or_insert(0) += c;
            }
        }
        Complex { coeffs }
    }

    pub fn count(&self, m: usize) -> u32 {
        self.coeffs.get(&m).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.coeffs.iter().map(|(&m, &c)| (m, c))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Total molecule count.
    pub fn order(&self) -> u32 {
        self.coeffs.values().sum()
    }

    pub fn max_species(&self) -> Option<usize> {
        self.coeffs.keys().next_back().copied()
    }
}

/// A reaction `source -> product` with a positive mass-action rate constant.
#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub source: Complex,
    pub product: Complex,
    pub rate: f64,
}

impl Reaction {
    pub fn new(source: Complex, product: Complex, rate: f64) -> Result<Self> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::Model(format!(
                "rate constant must be positive and finite, got {rate}"
            )));
        }
        if source == product {
            return Err(Error::Model(
                "reaction source and product complexes must differ".into(),
            ));
        }
        Ok(Reaction {
            source,
            product,
            rate,
        })
    }

    /// Net change of species `m` when the reaction fires.
    pub fn delta(&self, m: usize) -> i64 {
        self.product.count(m) as i64 - self.source.count(m) as i64
    }

    /// Sparse net change vector.
    pub fn delta_vec(&self, d: usize) -> Vec<i64> {
        (0..d).map(|m| self.delta(m)).collect()
    }
}

/// One environment's reaction network over `n_species` species.
#[derive(Debug, Clone, PartialEq)]
pub struct CrnSpec {
    pub n_species: usize,
    pub reactions: Vec<Reaction>,
}

impl CrnSpec {
    pub fn new(n_species: usize, reactions: Vec<Reaction>) -> Result<Self> {
        if n_species == 0 {
            return Err(Error::Model("a network needs at least one species".into()));
        }
        for r in &reactions {
            for c in [&r.source, &r.product] {
                if let Some(m) = c.max_species() {
                    if m >= n_species {
                        return Err(Error::Model(format!(
                            "species index {m} out of range (d = {n_species})"
                        )));
                    }
                }
            }
        }
        Ok(CrnSpec {
            n_species,
            reactions,
        })
    }
}

/// Mass-action propensities of every reaction at state `x`:
/// `rate * prod_m x_m (x_m - 1) ... (x_m - y_m + 1)`.
///
/// The falling factorial vanishes whenever a required input count exceeds
/// availability, so no clamping is needed.
pub fn propensities(crn: &CrnSpec, x: &[u64]) -> Vec<f64> {
    assert_eq!(x.len(), crn.n_species);
    crn.reactions.iter().map(|r| propensity(r, x)).collect()
}

pub fn propensity(reaction: &Reaction, x: &[u64]) -> f64 {
    let mut lambda = reaction.rate;
    for (m, count) in reaction.source.iter() {
        let xm = x[m];
        if xm < count as u64 {
            return 0.0;
        }
        for j in 0..count as u64 {
            lambda *= (xm - j) as f64;
        }
    }
    lambda
}

/// Per-environment linearization data.
///
/// `matrix[(m, l)]` is the coefficient of `x_l` in the net drift of species
/// `m`; `inflow[m]` collects the constant contribution of inflow reactions.
/// For an at-most-monomolecular network the drift is exactly
/// `matrix * x + inflow`.
#[derive(Debug, Clone, Serialize)]
pub struct LinearData {
    pub matrix: Matrix,
    pub inflow: Vec<f64>,
    pub is_mass_action: bool,
    pub is_at_most_monomolecular: bool,
    pub is_linear_generator: bool,
}

/// Extract the linearization of one environment.
///
/// Higher-order source complexes are tolerated: the network still counts as
/// a linear generator when, for every such complex, the net drift of its
/// reactions cancels exactly.
pub fn linearize(crn: &CrnSpec) -> LinearData {
    let d = crn.n_species;
    let mut matrix = Matrix::zeros(d, d);
    let mut inflow = vec![0.0; d];
    let mut at_most_mono = true;
    let mut higher_order: BTreeMap<&Complex, Vec<f64>> = BTreeMap::new();

    for r in &crn.reactions {
        match r.source.order() {
            0 => {
                for (m, c) in r.product.iter() {
                    inflow[m] += r.rate * c as f64;
                }
            }
            1 => {
                let (l, _) = r.source.iter().next().unwrap();
                for m in 0..d {
                    let delta = r.delta(m);
                    if delta != 0 {
                        matrix[(m, l)] += r.rate * delta as f64;
                    }
                }
            }
            _ => {
                at_most_mono = false;
                let drift = higher_order
                    .entry(&r.source)
                    .or_insert_with(|| vec![0.0; d]);
                for (m, slot) in drift.iter_mut().enumerate() {
                    *slot += r.rate * r.delta(m) as f64;
                }
            }
        }
    }

    let is_linear_generator = higher_order
        .values()
        .all(|drift| drift.iter().all(|&v| v == 0.0));

    LinearData {
        matrix,
        inflow,
        is_mass_action: true,
        is_at_most_monomolecular: at_most_mono,
        is_linear_generator,
    }
}

/// A reaction network family over shared species with a switching rate
/// matrix. Immutable after construction; all invariants checked by `new`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedModel {
    species: Vec<String>,
    environments: Vec<CrnSpec>,
    q: Matrix,
}

impl SwitchedModel {
    /// Validates: at least one environment, all environments over the same
    /// species, `q` square of matching size with non-negative off-diagonal
    /// entries, row sums within [`Q_ROW_SUM_TOL`], and irreducible.
    pub fn new(species: Vec<String>, environments: Vec<CrnSpec>, q: Matrix) -> Result<Self> {
        let d = species.len();
        if d == 0 {
            return Err(Error::Model("species list is empty".into()));
        }
        {
            let mut sorted = species.clone();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != d {
                return Err(Error::Model("duplicate species name".into()));
            }
        }
        let n = environments.len();
        if n == 0 {
            return Err(Error::Model("at least one environment is required".into()));
        }
        for (i, env) in environments.iter().enumerate() {
            if env.n_species != d {
                return Err(Error::Model(format!(
                    "environment {} has {} species, expected {}",
                    i + 1,
                    env.n_species,
                    d
                )));
            }
        }
        if !q.is_square() || q.n_rows() != n {
            return Err(Error::Model(format!(
                "q must be {n}x{n}, got {}x{}",
                q.n_rows(),
                q.n_cols()
            )));
        }
        for i in 0..n {
            // Off-diagonals first, in index order, so a diagonal derived as
            // the negated off-diagonal sum cancels exactly.
            let mut row_sum = 0.0;
            for j in 0..n {
                let entry = q[(i, j)];
                if !entry.is_finite() {
                    return Err(Error::Model("q contains a non-finite entry".into()));
                }
                if i != j {
                    if entry < 0.0 {
                        return Err(Error::Model(format!(
                            "negative off-diagonal switching rate q[{}][{}] = {entry}",
                            i + 1,
                            j + 1
                        )));
                    }
                    row_sum += entry;
                }
            }
            row_sum += q[(i, i)];
            if row_sum.abs() > Q_ROW_SUM_TOL {
                return Err(Error::Model(format!(
                    "row {} of q sums to {row_sum:.3e}, expected 0",
                    i + 1
                )));
            }
        }
        if !Self::q_irreducible(&q) {
            return Err(Error::Model("switching matrix q is not irreducible".into()));
        }
        Ok(SwitchedModel {
            species,
            environments,
            q,
        })
    }

    fn q_irreducible(q: &Matrix) -> bool {
        let n = q.n_rows();
        let adj: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&j| j != i && q[(i, j)] > 0.0).collect())
            .collect();
        graph::strongly_connected_components(&adj).len() == 1
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn n_env(&self) -> usize {
        self.environments.len()
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s == name)
    }

    pub fn environments(&self) -> &[CrnSpec] {
        &self.environments
    }

    pub fn environment(&self, i: usize) -> &CrnSpec {
        &self.environments[i]
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    /// Linearize every environment.
    pub fn linearizations(&self) -> Vec<LinearData> {
        self.environments.iter().map(linearize).collect()
    }

    /// The model with every rate constant and switching rate multiplied by
    /// `c > 0`. Long-term behavior is unchanged up to a time rescaling.
    pub fn rescaled(&self, c: f64) -> Result<SwitchedModel> {
        if !(c > 0.0) {
            return Err(Error::Input(format!("scale must be positive, got {c}")));
        }
        let environments = self
            .environments
            .iter()
            .map(|env| {
                let reactions = env
                    .reactions
                    .iter()
                    .map(|r| Reaction::new(r.source.clone(), r.product.clone(), r.rate * c))
                    .collect::<Result<Vec<_>>>()?;
                CrnSpec::new(env.n_species, reactions)
            })
            .collect::<Result<Vec<_>>>()?;
        // Re-derive diagonals instead of scaling them: scaling amplifies the
        // stored rows' float residue past the row-sum tolerance.
        let n = self.n_env();
        let mut q = self.q.scale(c);
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| q[(i, j)]).sum();
            q[(i, i)] = -off;
        }
        SwitchedModel::new(self.species.clone(), environments, q)
    }
}

impl fmt::Display for SwitchedModel {
    /// Emits the textual model format; `parse_model` round-trips it.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "species")?;
        for s in &self.species {
            write!(f, " {s}")?;
        }
        writeln!(f)?;
        for (i, env) in self.environments.iter().enumerate() {
            writeln!(f, "environment {}", i + 1)?;
            for r in &env.reactions {
                writeln!(
                    f,
                    "{} -> {} @ {}",
                    self.format_complex(&r.source),
                    self.format_complex(&r.product),
                    r.rate
                )?;
            }
        }
        writeln!(f, "switching")?;
        let n = self.n_env();
        for i in 0..n {
            for j in 0..n {
                if i != j && self.q[(i, j)] != 0.0 {
                    writeln!(f, "q {} {} {}", i + 1, j + 1, self.q[(i, j)])?;
                }
            }
        }
        Ok(())
    }
}

impl SwitchedModel {
    fn format_complex(&self, c: &Complex) -> String {
        if c.is_zero() {
            return "0".into();
        }
        c.iter()
            .map(|(m, count)| {
                if count == 1 {
                    self.species[m].clone()
                } else {
                    format!("{count} {}", self.species[m])
                }
            })
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

/// Serde mirror of the model for JSON import/export. Complexes map species
/// names to counts; `q` is the full matrix including diagonal entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub species: Vec<String>,
    pub environments: Vec<EnvironmentFile>,
    pub q: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvironmentFile {
    pub reactions: Vec<ReactionFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReactionFile {
    pub source: BTreeMap<String, u32>,
    pub product: BTreeMap<String, u32>,
    pub rate: f64,
}

impl From<&SwitchedModel> for ModelFile {
    fn from(model: &SwitchedModel) -> Self {
        let name = |m: usize| model.species[m].clone();
        let complex_map = |c: &Complex| c.iter().map(|(m, cnt)| (name(m), cnt)).collect();
        ModelFile {
            species: model.species.clone(),
            environments: model
                .environments
                .iter()
                .map(|env| EnvironmentFile {
                    reactions: env
                        .reactions
                        .iter()
                        .map(|r| ReactionFile {
                            source: complex_map(&r.source),
                            product: complex_map(&r.product),
                            rate: r.rate,
                        })
                        .collect(),
                })
                .collect(),
            q: model.q.to_rows(),
        }
    }
}

impl TryFrom<ModelFile> for SwitchedModel {
    type Error = Error;

    fn try_from(file: ModelFile) -> Result<SwitchedModel> {
        let index: BTreeMap<&str, usize> = file
            .species
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let to_complex = |map: &BTreeMap<String, u32>, env: usize| -> Result<Complex> {
            let mut pairs = Vec::new();
            for (name, &count) in map {
                let &m = index.get(name.as_str()).ok_or_else(|| {
                    Error::Model(format!("environment {}: unknown species {name:?}", env + 1))
                })?;
                pairs.push((m, count));
            }
            Ok(Complex::from_pairs(pairs))
        };
        let d = file.species.len();
        let environments = file
            .environments
            .iter()
            .enumerate()
            .map(|(i, env)| {
                let reactions = env
                    .reactions
                    .iter()
                    .map(|r| {
                        Reaction::new(
                            to_complex(&r.source, i)?,
                            to_complex(&r.product, i)?,
                            r.rate,
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                CrnSpec::new(d, reactions)
            })
            .collect::<Result<Vec<_>>>()?;
        SwitchedModel::new(file.species, environments, Matrix::from_rows(&file.q))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_env(reactions: Vec<Reaction>, d: usize) -> SwitchedModel {
        SwitchedModel::new(
            (0..d).map(|i| format!("S{}", i + 1)).collect(),
            vec![CrnSpec::new(d, reactions).unwrap()],
            Matrix::zeros(1, 1),
        )
        .unwrap()
    }

    #[test]
    fn degenerate_reaction_rejected() {
        let c = Complex::species(0);
        assert!(Reaction::new(c.clone(), c, 1.0).is_err());
    }

    #[test]
    fn propensity_falling_factorial_vanishes() {
        // 3S -> 2S at x = 2: 2 * 1 * 0 = 0.
        let r = Reaction::new(
            Complex::from_pairs([(0, 3)]),
            Complex::from_pairs([(0, 2)]),
            1.0,
        )
        .unwrap();
        assert_eq!(propensity(&r, &[2]), 0.0);
    }

    #[test]
    fn propensity_linear_and_quadratic() {
        // S1 -> 4 S2 at rate 0.01, x = (7, 3): 0.07.
        let r = Reaction::new(Complex::species(0), Complex::from_pairs([(1, 4)]), 0.01).unwrap();
        assert!((propensity(&r, &[7, 3]) - 0.07).abs() < 1e-15);

        // 2S -> 3S at rate 1, x = 5: 5 * 4 = 20.
        let r2 = Reaction::new(
            Complex::from_pairs([(0, 2)]),
            Complex::from_pairs([(0, 3)]),
            1.0,
        )
        .unwrap();
        assert_eq!(propensity(&r2, &[5]), 20.0);
    }

    #[test]
    fn linearize_higher_order_cancellation() {
        // 0 -> S -> 2S <- 3S -> 4S, all rates one: drift is exactly x + 1,
        // so the generator is linear despite the third-order sources.
        let reactions = vec![
            Reaction::new(Complex::zero(), Complex::species(0), 1.0).unwrap(),
            Reaction::new(Complex::species(0), Complex::from_pairs([(0, 2)]), 1.0).unwrap(),
            Reaction::new(
                Complex::from_pairs([(0, 3)]),
                Complex::from_pairs([(0, 2)]),
                1.0,
            )
            .unwrap(),
            Reaction::new(
                Complex::from_pairs([(0, 3)]),
                Complex::from_pairs([(0, 4)]),
                1.0,
            )
            .unwrap(),
        ];
        let model = single_env(reactions, 1);
        let lin = linearize(model.environment(0));
        assert_eq!(lin.matrix[(0, 0)], 1.0);
        assert_eq!(lin.inflow, vec![1.0]);
        assert!(!lin.is_at_most_monomolecular);
        assert!(lin.is_linear_generator);
    }

    #[test]
    fn monomolecular_drift_identity() {
        // For at-most-monomolecular networks the propensity-weighted drift
        // equals matrix * x + inflow.
        let reactions = vec![
            Reaction::new(Complex::zero(), Complex::species(0), 1.5).unwrap(),
            Reaction::new(Complex::species(0), Complex::zero(), 2.0).unwrap(),
            Reaction::new(Complex::species(0), Complex::from_pairs([(1, 4)]), 0.25).unwrap(),
            Reaction::new(
                Complex::species(1),
                Complex::from_pairs([(0, 2), (1, 1)]),
                3.0,
            )
            .unwrap(),
        ];
        let model = single_env(reactions, 2);
        let crn = model.environment(0);
        let lin = linearize(crn);
        assert!(lin.is_at_most_monomolecular);
        for x in [[0u64, 0], [3, 5], [10, 1], [7, 7]] {
            let lambdas = propensities(crn, &x);
            for m in 0..2 {
                let drift: f64 = crn
                    .reactions
                    .iter()
                    .zip(&lambdas)
                    .map(|(r, l)| l * r.delta(m) as f64)
                    .sum();
                let expected = crate::linalg::mat_vec(&lin.matrix, &[x[0] as f64, x[1] as f64])[m]
                    + lin.inflow[m];
                assert!(
                    (drift - expected).abs() <= 1e-10 * expected.abs().max(1.0),
                    "species {m} at {x:?}: {drift} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn q_validation() {
        let species = vec!["A".to_string()];
        let env = CrnSpec::new(1, vec![]).unwrap();
        // Nonzero row sum.
        let q = Matrix::from_rows(&[vec![-1.0, 1.5], vec![1.0, -1.0]]);
        assert!(SwitchedModel::new(species.clone(), vec![env.clone(); 2], q).is_err());
        // Negative off-diagonal.
        let q = Matrix::from_rows(&[vec![1.0, -1.0], vec![1.0, -1.0]]);
        assert!(SwitchedModel::new(species.clone(), vec![env.clone(); 2], q).is_err());
        // Not irreducible.
        let q = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, -1.0]]);
        assert!(SwitchedModel::new(species.clone(), vec![env.clone(); 2], q).is_err());
        // Valid symmetric chain.
        let q = Matrix::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]]);
        assert!(SwitchedModel::new(species, vec![env; 2], q).is_ok());
    }

    #[test]
    fn empty_single_environment_is_valid() {
        let model = single_env(vec![], 1);
        assert_eq!(model.n_env(), 1);
        assert!(model.environment(0).reactions.is_empty());
    }
}

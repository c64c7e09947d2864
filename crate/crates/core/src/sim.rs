//! Statistically exact simulation of the joint (species, environment) jump
//! process, plus seeded escape-fraction estimation and switching-rate sweeps.
//!
//! Direct-method sampling: one exponential holding time from the total rate,
//! one categorical draw across reactions and environment jumps. Reaction
//! counts per environment are small, so the linear scan per event is the
//! right trade.
//!
//! Reproducibility: all randomness flows from `SplitMix64`. A sweep cell
//! `(kappa index k, trajectory index t)` is seeded as
//! `derive_seed(master, k) + t`, and a standalone escape-fraction run seeds
//! trajectory `t` with `seed + t`, so results are bitwise independent of
//! thread scheduling.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{propensity, SwitchedModel};

/// SplitMix64 (Steele, Lea, Flood 2014). Fixed here so seeded runs reproduce
/// across platforms.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Exponential holding time with the given total rate.
    pub fn exp(&mut self, rate: f64) -> f64 {
        let u = self.next_f64();
        let u = if u == 0.0 { f64::MIN_POSITIVE } else { u };
        -u.ln() / rate
    }
}

/// Mix a stream index into a master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut rng = SplitMix64::new(master ^ stream.wrapping_mul(0xA24B_AED4_963E_E407));
    rng.next_u64()
}

/// One simulation run's parameters. `kappa` scales the switching matrix; the
/// run stops at `t_max`, when the l1 norm reaches `escape_norm`, or after
/// `max_events` events.
#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    pub kappa: f64,
    pub x0: Vec<u64>,
    pub i0: usize,
    pub t_max: f64,
    pub escape_norm: u64,
    pub max_events: u64,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(kappa: f64, x0: Vec<u64>, i0: usize) -> Self {
        SimConfig {
            kappa,
            x0,
            i0,
            t_max: 1e3,
            escape_norm: 1_000,
            max_events: 10_000_000,
            seed: 0,
        }
    }

    fn validate(&self, model: &SwitchedModel) -> Result<()> {
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::Input(format!(
                "kappa must be positive, got {}",
                self.kappa
            )));
        }
        if self.x0.len() != model.n_species() {
            return Err(Error::Input(format!(
                "x0 has {} entries, model has {} species",
                self.x0.len(),
                model.n_species()
            )));
        }
        if self.i0 >= model.n_env() {
            return Err(Error::Input(format!(
                "initial environment {} out of range (n = {})",
                self.i0,
                model.n_env()
            )));
        }
        if !(self.t_max > 0.0) || self.escape_norm == 0 || self.max_events == 0 {
            return Err(Error::Input(
                "t_max, escape_norm and max_events must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Reached `t_max`.
    TimeLimit,
    /// l1 norm reached `escape_norm`.
    Escaped,
    /// Event budget exhausted.
    EventCapped,
    /// Total rate hit zero; the state can never change again.
    Absorbed,
}

/// Endpoint summary of one run.
#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub termination: Termination,
    pub final_time: f64,
    pub final_state: Vec<u64>,
    pub final_env: usize,
    pub n_events: u64,
}

/// Full event record of one run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Flat row-major states, `n_species` entries per recorded point.
    pub states: Vec<u64>,
    pub envs: Vec<usize>,
    pub n_species: usize,
    pub outcome: Outcome,
}

impl Trajectory {
    pub fn state_at(&self, k: usize) -> &[u64] {
        &self.states[k * self.n_species..(k + 1) * self.n_species]
    }

    pub fn n_points(&self) -> usize {
        self.times.len()
    }
}

/// Simulate and record every event. Deterministic given the config.
pub fn simulate(model: &SwitchedModel, config: &SimConfig) -> Result<Trajectory> {
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut envs = Vec::new();
    let outcome = run(model, config, |t, x, i| {
        times.push(t);
        states.extend_from_slice(x);
        envs.push(i);
    })?;
    Ok(Trajectory {
        times,
        states,
        envs,
        n_species: model.n_species(),
        outcome,
    })
}

/// Simulate without recording; returns only the endpoint.
pub fn simulate_terminal(model: &SwitchedModel, config: &SimConfig) -> Result<Outcome> {
    run(model, config, |_, _, _| {})
}

fn run(
    model: &SwitchedModel,
    config: &SimConfig,
    mut on_event: impl FnMut(f64, &[u64], usize),
) -> Result<Outcome> {
    config.validate(model)?;
    let n = model.n_env();
    let q = model.q();
    let kappa = config.kappa;

    // Per environment: total outflow rate and cumulative jump targets.
    let env_jump_rate: Vec<f64> = (0..n).map(|i| kappa * -q[(i, i)]).collect();

    let mut rng = SplitMix64::new(config.seed);
    let mut x = config.x0.clone();
    let mut env = config.i0;
    let mut t = 0.0f64;
    let mut l1: u64 = x.iter().sum();
    let mut n_events: u64 = 0;
    let mut lambdas: Vec<f64> = Vec::new();

    on_event(t, &x, env);

    if l1 >= config.escape_norm {
        return Ok(Outcome {
            termination: Termination::Escaped,
            final_time: t,
            final_state: x,
            final_env: env,
            n_events,
        });
    }

    loop {
        let reactions = &model.environment(env).reactions;
        lambdas.clear();
        let mut reaction_total = 0.0;
        for r in reactions {
            let l = propensity(r, &x);
            lambdas.push(l);
            reaction_total += l;
        }
        let total = reaction_total + env_jump_rate[env];
        if total <= 0.0 {
            return Ok(Outcome {
                termination: Termination::Absorbed,
                final_time: t,
                final_state: x,
                final_env: env,
                n_events,
            });
        }

        t += rng.exp(total);
        if t >= config.t_max {
            return Ok(Outcome {
                termination: Termination::TimeLimit,
                final_time: config.t_max,
                final_state: x,
                final_env: env,
                n_events,
            });
        }

        let mut u = rng.next_f64() * total;
        let mut fired = None;
        for (idx, &l) in lambdas.iter().enumerate() {
            if u < l {
                fired = Some(idx);
                break;
            }
            u -= l;
        }
        match fired {
            Some(idx) => {
                let reaction = &reactions[idx];
                for (m, count) in reaction.source.iter() {
                    x[m] -= count as u64;
                    l1 -= count as u64;
                }
                for (m, count) in reaction.product.iter() {
                    x[m] += count as u64;
                    l1 += count as u64;
                }
            }
            None => {
                // Environment jump: select target by off-diagonal weight.
                let mut w = u / kappa;
                let mut target = env;
                for j in 0..n {
                    if j == env {
                        continue;
                    }
                    let rate = q[(env, j)];
                    if w < rate {
                        target = j;
                        break;
                    }
                    w -= rate;
                }
                // Guard against roundoff walking past the last positive rate.
                if target == env {
                    target = (0..n)
                        .rev()
                        .find(|&j| j != env && q[(env, j)] > 0.0)
                        .expect("irreducible q has an outgoing rate");
                }
                env = target;
            }
        }
        n_events += 1;
        on_event(t, &x, env);

        if l1 >= config.escape_norm {
            return Ok(Outcome {
                termination: Termination::Escaped,
                final_time: t,
                final_state: x,
                final_env: env,
                n_events,
            });
        }
        if n_events >= config.max_events {
            return Ok(Outcome {
                termination: Termination::EventCapped,
                final_time: t,
                final_state: x,
                final_env: env,
                n_events,
            });
        }
    }
}

/// Wilson 95% score interval for `k` successes out of `n`.
pub fn wilson_interval(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054_f64;
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Escape statistics of `n_traj` independent runs.
#[derive(Debug, Clone, Serialize)]
pub struct EscapeStats {
    pub fraction: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub mean_final_l1: f64,
    pub n_trajectories: u64,
    pub n_event_capped: u64,
}

/// Run `n_traj` trajectories seeded `config.seed + index` and report the
/// escape share. Event-capped runs are excluded from the denominator; they
/// carry evidence for neither verdict.
pub fn escape_fraction(
    model: &SwitchedModel,
    config: &SimConfig,
    n_traj: u64,
) -> Result<EscapeStats> {
    config.validate(model)?;
    let outcomes: Vec<Outcome> = (0..n_traj)
        .into_par_iter()
        .map(|idx| {
            let mut cfg = config.clone();
            cfg.seed = config.seed.wrapping_add(idx);
            simulate_terminal(model, &cfg).expect("validated config")
        })
        .collect();

    let capped = outcomes
        .iter()
        .filter(|o| o.termination == Termination::EventCapped)
        .count() as u64;
    let counted: Vec<&Outcome> = outcomes
        .iter()
        .filter(|o| o.termination != Termination::EventCapped)
        .collect();
    let escapes = counted
        .iter()
        .filter(|o| o.termination == Termination::Escaped)
        .count() as u64;
    let denom = counted.len() as u64;
    let fraction = if denom == 0 {
        0.0
    } else {
        escapes as f64 / denom as f64
    };
    let (lo, hi) = wilson_interval(escapes, denom);
    let mean_final_l1 = if counted.is_empty() {
        0.0
    } else {
        counted
            .iter()
            .map(|o| o.final_state.iter().sum::<u64>() as f64)
            .sum::<f64>()
            / counted.len() as f64
    };
    Ok(EscapeStats {
        fraction,
        wilson_low: lo,
        wilson_high: hi,
        mean_final_l1,
        n_trajectories: n_traj,
        n_event_capped: capped,
    })
}

/// One row of a switching-rate sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub kappa: f64,
    pub escape_fraction: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub mean_final_l1: f64,
    pub n_trajectories: u64,
    pub n_event_capped: u64,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub const CSV_HEADER: &'static str =
        "kappa,escape_fraction,wilson_low,wilson_high,mean_final_l1,n_traj,n_event_capped";

    /// CSV with shortest round-trip float formatting; byte-identical across
    /// runs and thread counts.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.kappa,
                r.escape_fraction,
                r.wilson_low,
                r.wilson_high,
                r.mean_final_l1,
                r.n_trajectories,
                r.n_event_capped
            ));
        }
        out
    }
}

/// Escape fraction per switching rate over an ascending grid.
///
/// Cell `(k, t)` uses seed `derive_seed(master, k) + t`, so the result is a
/// pure function of the inputs regardless of parallel scheduling.
pub fn sweep_kappa(
    model: &SwitchedModel,
    kappa_grid: &[f64],
    base_config: &SimConfig,
    n_traj: u64,
) -> Result<SweepResult> {
    if kappa_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Input("kappa grid must be sorted ascending".into()));
    }
    let master = base_config.seed;
    let rows: Vec<SweepRow> = kappa_grid
        .par_iter()
        .enumerate()
        .map(|(k_idx, &kappa)| {
            let mut cfg = base_config.clone();
            cfg.kappa = kappa;
            cfg.seed = derive_seed(master, k_idx as u64);
            let stats = escape_fraction(model, &cfg, n_traj)?;
            Ok(SweepRow {
                kappa,
                escape_fraction: stats.fraction,
                wilson_low: stats.wilson_low,
                wilson_high: stats.wilson_high,
                mean_final_l1: stats.mean_final_l1,
                n_trajectories: stats.n_trajectories,
                n_event_capped: stats.n_event_capped,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_model;

    #[test]
    fn pure_birth_event_count_is_poissonian() {
        // Only 0 -> S at rate 1: events on [0, T] are Poisson(T).
        let model = parse_model("species S\nenvironment 1\n0 -> S @ 1\n").unwrap();
        let t = 100.0;
        let n_runs = 1000u64;
        let mut total_events = 0u64;
        for seed in 0..n_runs {
            let mut cfg = SimConfig::new(1.0, vec![0], 0);
            cfg.t_max = t;
            cfg.escape_norm = u64::MAX;
            cfg.seed = seed;
            let out = simulate_terminal(&model, &cfg).unwrap();
            total_events += out.n_events;
        }
        let mean = total_events as f64 / n_runs as f64;
        assert!(
            (mean - t).abs() < 4.0 * t.sqrt(),
            "mean event count {mean} too far from {t}"
        );
    }

    #[test]
    fn birth_death_stationary_mean() {
        // 0 <-> S at unit rates: stationary law Poisson(1).
        let model = parse_model("species S\nenvironment 1\n0 -> S @ 1\nS -> 0 @ 1\n").unwrap();
        let n_runs = 500;
        let mut finals = Vec::new();
        for seed in 0..n_runs {
            let mut cfg = SimConfig::new(1.0, vec![1], 0);
            cfg.t_max = 50.0;
            cfg.escape_norm = u64::MAX;
            cfg.seed = 1000 + seed;
            finals.push(simulate_terminal(&model, &cfg).unwrap().final_state[0] as f64);
        }
        let n = finals.len() as f64;
        let mean: f64 = finals.iter().sum::<f64>() / n;
        let var: f64 = finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!(
            (mean - 1.0).abs() < 3.0 * se.max(1e-6),
            "mean {mean}, se {se}"
        );
    }

    #[test]
    fn conserved_quantity_stays_constant() {
        // X <-> X': total count invariant along every trajectory.
        let model = parse_model("species X Xp\nenvironment 1\nX -> Xp @ 1\nXp -> X @ 1\n").unwrap();
        let mut cfg = SimConfig::new(1.0, vec![3, 2], 0);
        cfg.t_max = 100.0;
        cfg.escape_norm = u64::MAX;
        cfg.seed = 42;
        let traj = simulate(&model, &cfg).unwrap();
        for k in 0..traj.n_points() {
            let s: u64 = traj.state_at(k).iter().sum();
            assert_eq!(s, 5);
        }
    }

    #[test]
    fn determinism_same_seed() {
        let model = parse_model(
            "species S\nenvironment 1\n0 -> S @ 2\nS -> 0 @ 1\nenvironment 2\n0 -> S @ 1\nS -> 0 @ 3\nswitching\nq 1 2 1\nq 2 1 1\n",
        )
        .unwrap();
        let mut cfg = SimConfig::new(0.7, vec![5], 0);
        cfg.t_max = 200.0;
        cfg.seed = 7;
        let a = simulate(&model, &cfg).unwrap();
        let b = simulate(&model, &cfg).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.times, b.times);
        assert_eq!(a.envs, b.envs);
    }

    #[test]
    fn absorbing_state_terminates() {
        // Single decay with no inflow: hits zero, then no transitions.
        let model = parse_model("species S\nenvironment 1\nS -> 0 @ 1\n").unwrap();
        let mut cfg = SimConfig::new(1.0, vec![4], 0);
        cfg.t_max = 1e6;
        cfg.escape_norm = u64::MAX;
        cfg.seed = 3;
        let out = simulate_terminal(&model, &cfg).unwrap();
        assert_eq!(out.termination, Termination::Absorbed);
        assert_eq!(out.final_state, vec![0]);
        assert_eq!(out.n_events, 4);
    }

    #[test]
    fn escape_with_unit_threshold_is_immediate() {
        let model = parse_model("species S\nenvironment 1\n0 -> S @ 1\n").unwrap();
        let mut cfg = SimConfig::new(1.0, vec![1], 0);
        cfg.escape_norm = 1;
        let stats = escape_fraction(&model, &cfg, 50).unwrap();
        assert_eq!(stats.fraction, 1.0);
    }

    #[test]
    fn escape_monotone_in_threshold() {
        let model = parse_model("species S\nenvironment 1\n0 -> S @ 5\nS -> 0 @ 1\n").unwrap();
        let mut escapes = Vec::new();
        for h in [5u64, 10, 20] {
            let mut cfg = SimConfig::new(1.0, vec![0], 0);
            cfg.t_max = 20.0;
            cfg.escape_norm = h;
            cfg.seed = 11;
            let mut count = 0;
            for t in 0..100u64 {
                let mut c = cfg.clone();
                c.seed = cfg.seed + t;
                if simulate_terminal(&model, &c).unwrap().termination == Termination::Escaped {
                    count += 1;
                }
            }
            escapes.push(count);
        }
        assert!(
            escapes[0] >= escapes[1] && escapes[1] >= escapes[2],
            "{escapes:?}"
        );
    }

    #[test]
    fn sweep_deterministic_across_thread_counts() {
        let model = parse_model(
            "species S\nenvironment 1\n0 -> S @ 2\nS -> 0 @ 1\nenvironment 2\n0 -> S @ 1\nS -> 0 @ 2\nswitching\nq 1 2 1\nq 2 1 1\n",
        )
        .unwrap();
        let mut cfg = SimConfig::new(1.0, vec![1], 0);
        cfg.t_max = 30.0;
        cfg.escape_norm = 40;
        cfg.seed = 99;
        let grid = [0.1, 1.0, 10.0];
        let run_with = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| sweep_kappa(&model, &grid, &cfg, 40).unwrap().to_csv())
        };
        assert_eq!(run_with(1), run_with(4));
    }

    #[test]
    fn empty_grid_yields_empty_result() {
        let model = parse_model("species S\nenvironment 1\n0 -> S @ 1\n").unwrap();
        let cfg = SimConfig::new(1.0, vec![0], 0);
        let res = sweep_kappa(&model, &[], &cfg, 10).unwrap();
        assert!(res.rows.is_empty());
    }

    #[test]
    fn wilson_brackets_fraction() {
        let (lo, hi) = wilson_interval(5, 10);
        assert!(lo < 0.5 && 0.5 < hi);
        assert_eq!(wilson_interval(0, 0), (0.0, 1.0));
    }
}

//! Command-line front end: model analysis, verdicts, drift checks, exact
//! simulation, and seeded switching-rate sweeps.
//!
//! Exit codes: 0 success, 1 usage error, 2 model validation error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use switchcrn::classify;
use switchcrn::drift::{self, checks::DriftArgs, LyapunovFn};
use switchcrn::gallery::{self, Params};
use switchcrn::model::ModelFile;
use switchcrn::parse;
use switchcrn::sim::{self, SimConfig};
use switchcrn::{Error, SwitchedModel};

/// Print a line to stdout, exiting quietly when the reader hung up.
macro_rules! emit {
    ($($arg:tt)*) => {
        emit_raw(&format!("{}\n", format_args!($($arg)*)))
    };
}

fn emit_raw(s: &str) {
    use std::io::Write as _;
    let mut out = std::io::stdout().lock();
    if out.write_all(s.as_bytes()).is_err() {
        std::process::exit(0);
    }
}

#[derive(Parser)]
#[command(
    name = "switchcrn",
    version,
    about = "Stability analysis and exact simulation of \
reaction networks with randomly switching rate constants"
)]
struct Cli {
    /// Cap the number of worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print per-environment linearizations, stationary weights, and the
    /// mixed matrix as JSON (re-ingestable as a JSON model).
    Analyze {
        /// Model file (.crn text or .json), or `gallery:<id>`.
        model: String,
    },
    /// Print the fast/slow regime verdict with certificates as JSON.
    Classify { model: String },
    /// Evaluate the generator on a Lyapunov function at one state.
    Generator {
        model: String,
        #[arg(long)]
        kappa: f64,
        /// Function spec: linear:.. | reciprocal:.. | power:.. | a derived
        /// name (fast-ergodic, slow-ergodic, fast-transient, slow-transient).
        #[arg(long)]
        lyapunov: String,
        /// Comma-separated species counts.
        #[arg(long)]
        state: String,
        /// Environment (1-based).
        #[arg(long, default_value_t = 1)]
        env: usize,
    },
    /// Run a named drift check.
    Drift {
        model: String,
        /// fast-ergodic | slow-ergodic | fast-transience | slow-transience |
        /// grouped | foster
        #[arg(long)]
        check: String,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        radius: Option<u64>,
        #[arg(long)]
        lyapunov: Option<String>,
        /// Dump generator values over the box as CSV (foster check).
        #[arg(long)]
        samples_out: Option<PathBuf>,
    },
    /// Simulate one trajectory.
    Simulate {
        model: String,
        #[arg(long)]
        kappa: f64,
        #[command(flatten)]
        run: RunArgs,
        /// Write every event as `t,x_1..x_d,env` CSV to this file.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Escape-fraction sweep over a switching-rate grid; writes CSV.
    Sweep {
        model: String,
        /// Grid: `log:<lo>:<hi>:<count>`, `lin:<lo>:<hi>:<count>`, or a number.
        #[arg(long)]
        kappa: String,
        #[arg(long, default_value_t = 200)]
        trials: u64,
        #[command(flatten)]
        run: RunArgs,
        /// Output path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// csv (default) or json.
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Run the full pipeline for a gallery entry into a directory.
    Reproduce {
        id: String,
        #[arg(long)]
        out_dir: PathBuf,
        /// Override entry parameters, e.g. --param eps=0.1 (repeatable).
        #[arg(long)]
        param: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override the entry's default trajectory count.
        #[arg(long)]
        trials: Option<u64>,
    },
    /// List the built-in gallery entries.
    GalleryList {
        #[arg(long, default_value = "text")]
        format: String,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Comma-separated initial counts (default: all ones).
    #[arg(long)]
    x0: Option<String>,
    /// Initial environment (1-based).
    #[arg(long, default_value_t = 1)]
    env0: usize,
    #[arg(long, default_value_t = 1e3)]
    t_max: f64,
    /// l1-norm escape threshold.
    #[arg(long, default_value_t = 1_000)]
    escape_norm: u64,
    #[arg(long, default_value_t = 10_000_000)]
    max_events: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" with zero exit.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Parse { .. } | Error::Model(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Analyze { model } => {
            let model = load_model(&model)?;
            let analysis = classify::analyze(&model)?;
            // Top level stays a valid JSON model; the analysis rides along.
            let mut value = serde_json::to_value(ModelFile::from(&model)).unwrap();
            value["analysis"] = json!({
                "linearizations": analysis.linear,
                "w": analysis.mix.w,
                "mixed_matrix": analysis.mix.mixed_matrix,
            });
            emit!("{}", serde_json::to_string_pretty(&value).unwrap());
            Ok(())
        }
        Command::Classify { model } => {
            let model = load_model(&model)?;
            let verdict = classify::classify(&model)?;
            emit!("{}", serde_json::to_string_pretty(&verdict).unwrap());
            Ok(())
        }
        Command::Generator {
            model,
            kappa,
            lyapunov,
            state,
            env,
        } => {
            let model = load_model(&model)?;
            let h = parse_lyapunov(&lyapunov, &model, kappa)?;
            let x = parse_counts(&state)?;
            let env_idx = check_env(env, model.n_env())?;
            let value = drift::generator_apply(&model, kappa, &h, &x, env_idx)?;
            emit!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "kappa": kappa,
                    "state": x,
                    "env": env,
                    "lyapunov": h,
                    "value": value,
                }))
                .unwrap()
            );
            Ok(())
        }
        Command::Drift {
            model,
            check,
            kappa,
            eps,
            radius,
            lyapunov,
            samples_out,
        } => {
            let model = load_model(&model)?;
            let h = lyapunov
                .map(|spec| parse_lyapunov(&spec, &model, kappa.unwrap_or(1.0)))
                .transpose()?;
            let args = DriftArgs {
                kappa,
                eps,
                radius,
                lyapunov: h.clone(),
            };
            let result = drift::checks::lookup(&check)?.run(&model, &args)?;
            emit!("{}", serde_json::to_string_pretty(&result).unwrap());
            if let Some(path) = samples_out {
                let h = h.ok_or_else(|| Error::Input("--samples-out needs --lyapunov".into()))?;
                let mut file = fs::File::create(&path)
                    .map_err(|e| Error::Input(format!("cannot create {path:?}: {e}")))?;
                drift::generator_samples_csv(
                    &model,
                    kappa.unwrap_or(1.0),
                    &h,
                    radius.unwrap_or(50),
                    &mut file,
                )?;
                eprintln!("generator samples written to {}", path.display());
            }
            Ok(())
        }
        Command::Simulate {
            model,
            kappa,
            run,
            dump,
        } => {
            let model = load_model(&model)?;
            let cfg = sim_config(&model, kappa, &run)?;
            if let Some(path) = dump {
                let traj = sim::simulate(&model, &cfg)?;
                let mut out = String::new();
                let names: Vec<String> = model.species().iter().map(|s| format!("x_{s}")).collect();
                out.push_str(&format!("t,{},env\n", names.join(",")));
                for k in 0..traj.n_points() {
                    let coords: Vec<String> = traj.state_at(k).iter().map(u64::to_string).collect();
                    out.push_str(&format!(
                        "{},{},{}\n",
                        traj.times[k],
                        coords.join(","),
                        traj.envs[k] + 1
                    ));
                }
                fs::write(&path, out)
                    .map_err(|e| Error::Input(format!("cannot write {path:?}: {e}")))?;
                emit!("{}", serde_json::to_string_pretty(&traj.outcome).unwrap());
            } else {
                let outcome = sim::simulate_terminal(&model, &cfg)?;
                emit!("{}", serde_json::to_string_pretty(&outcome).unwrap());
            }
            Ok(())
        }
        Command::Sweep {
            model,
            kappa,
            trials,
            run,
            out,
            format,
        } => {
            let model = load_model(&model)?;
            let grid = parse_grid(&kappa)?;
            let cfg = sim_config(&model, grid.first().copied().unwrap_or(1.0), &run)?;
            let result = sim::sweep_kappa(&model, &grid, &cfg, trials)?;
            let rendered = match format.as_str() {
                "csv" => result.to_csv(),
                "json" => serde_json::to_string_pretty(&result).unwrap(),
                other => {
                    return Err(Error::Input(format!(
                        "unknown format {other:?} (use csv or json)"
                    )))
                }
            };
            match out {
                Some(path) => fs::write(&path, rendered)
                    .map_err(|e| Error::Input(format!("cannot write {path:?}: {e}")))?,
                None => emit_raw(&rendered),
            }
            Ok(())
        }
        Command::Reproduce {
            id,
            out_dir,
            param,
            seed,
            trials,
        } => reproduce(&id, &out_dir, &param, seed, trials),
        Command::GalleryList { format } => {
            match format.as_str() {
                "json" => {
                    let entries: Vec<_> = gallery::registry()
                        .iter()
                        .map(|e| {
                            json!({
                                "id": e.id(),
                                "summary": e.summary(),
                                "params": e.params().iter().map(|p| {
                                    json!({
                                        "name": p.name,
                                        "default": p.default,
                                        "domain": p.domain,
                                    })
                                }).collect::<Vec<_>>(),
                            })
                        })
                        .collect();
                    emit!("{}", serde_json::to_string_pretty(&entries).unwrap());
                }
                "text" => {
                    for e in gallery::registry() {
                        let params: Vec<String> = e
                            .params()
                            .iter()
                            .map(|p| format!("{}={} [{}]", p.name, p.default, p.domain))
                            .collect();
                        let params = if params.is_empty() {
                            "-".to_string()
                        } else {
                            params.join(", ")
                        };
                        emit!("{:<12} {}", e.id(), params);
                        emit!("{:<12} {}", "", e.summary());
                    }
                }
                other => {
                    return Err(Error::Input(format!(
                        "unknown format {other:?} (use text or json)"
                    )))
                }
            }
            Ok(())
        }
    }
}

fn reproduce(
    id: &str,
    out_dir: &Path,
    param_args: &[String],
    seed: u64,
    trials: Option<u64>,
) -> Result<(), Error> {
    let entry = gallery::lookup(id)?;
    let mut params = Params::new();
    for p in param_args {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| Error::Input(format!("--param wants name=value, got {p:?}")))?;
        let v: f64 = v
            .parse()
            .map_err(|_| Error::Input(format!("invalid value in --param {p:?}")))?;
        params.insert(k.to_string(), v);
    }
    let params = gallery::resolve_params(entry, &params)?;
    let model = entry.build(&params)?;
    fs::create_dir_all(out_dir)
        .map_err(|e| Error::Input(format!("cannot create {out_dir:?}: {e}")))?;

    let write = |name: &str, contents: String| -> Result<(), Error> {
        let path = out_dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::Input(format!("cannot write {path:?}: {e}")))
    };

    write("model.crn", model.to_string())?;
    write("model.json", parse::to_json(&model))?;

    let verdict = classify::classify(&model)?;
    write(
        "verdict.json",
        serde_json::to_string_pretty(&verdict).unwrap(),
    )?;

    // Every applicable drift check; inapplicable ones record their refusal.
    let drift_results: Vec<serde_json::Value> = drift::checks::registry()
        .iter()
        .filter(|c| c.name() != "foster")
        .map(|c| match c.run(&model, &DriftArgs::default()) {
            Ok(v) => v,
            Err(e) => json!({"check": c.name(), "error": e.to_string()}),
        })
        .collect();
    write(
        "drift.json",
        serde_json::to_string_pretty(&drift_results).unwrap(),
    )?;

    let defaults = entry.sweep_defaults(&params)?;
    let mut cfg = SimConfig::new(1.0, defaults.x0.clone(), 0);
    cfg.t_max = defaults.t_max;
    cfg.escape_norm = defaults.escape_norm;
    cfg.max_events = defaults.max_events;
    cfg.seed = seed;
    let n_traj = trials.unwrap_or(defaults.n_traj);
    let sweep = sim::sweep_kappa(&model, &defaults.kappa_grid, &cfg, n_traj)?;
    write("sweep.csv", sweep.to_csv())?;

    emit!(
        "{id}: fast {}, slow {}; artifacts in {}",
        verdict.fast.kind_str(),
        verdict.slow.kind_str(),
        out_dir.display()
    );
    for row in &sweep.rows {
        emit!(
            "  kappa {:>12.6}: escape fraction {:.3}",
            row.kappa,
            row.escape_fraction
        );
    }
    Ok(())
}

fn load_model(spec: &str) -> Result<SwitchedModel, Error> {
    if let Some(id) = spec.strip_prefix("gallery:") {
        return gallery::build(id, &Params::new());
    }
    let path = Path::new(spec);
    let text =
        fs::read_to_string(path).map_err(|e| Error::Input(format!("cannot read {spec:?}: {e}")))?;
    if path.extension().is_some_and(|e| e == "json") {
        parse::parse_model_json(&text)
    } else {
        parse::parse_model(&text)
    }
}

fn sim_config(model: &SwitchedModel, kappa: f64, run: &RunArgs) -> Result<SimConfig, Error> {
    let x0 = match &run.x0 {
        Some(s) => parse_counts(s)?,
        None => vec![1; model.n_species()],
    };
    let env0 = check_env(run.env0, model.n_env())?;
    let mut cfg = SimConfig::new(kappa, x0, env0);
    cfg.t_max = run.t_max;
    cfg.escape_norm = run.escape_norm;
    cfg.max_events = run.max_events;
    cfg.seed = run.seed;
    Ok(cfg)
}

fn check_env(env_one_based: usize, n: usize) -> Result<usize, Error> {
    if env_one_based == 0 || env_one_based > n {
        return Err(Error::Input(format!(
            "environment {env_one_based} out of range (1..={n})"
        )));
    }
    Ok(env_one_based - 1)
}

fn parse_counts(s: &str) -> Result<Vec<u64>, Error> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse()
                .map_err(|_| Error::Input(format!("invalid count {tok:?}")))
        })
        .collect()
}

/// Grid specs: `log:<lo>:<hi>:<count>`, `lin:<lo>:<hi>:<count>`, or a single
/// positive number.
fn parse_grid(s: &str) -> Result<Vec<f64>, Error> {
    if let Ok(single) = s.parse::<f64>() {
        if single > 0.0 {
            return Ok(vec![single]);
        }
        return Err(Error::Input("kappa must be positive".into()));
    }
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 4 || (parts[0] != "log" && parts[0] != "lin") {
        return Err(Error::Input(format!(
            "invalid grid {s:?} (use log:<lo>:<hi>:<count> or lin:<lo>:<hi>:<count>)"
        )));
    }
    let lo: f64 = parts[1]
        .parse()
        .map_err(|_| Error::Input(format!("invalid grid bound {:?}", parts[1])))?;
    let hi: f64 = parts[2]
        .parse()
        .map_err(|_| Error::Input(format!("invalid grid bound {:?}", parts[2])))?;
    let count: usize = parts[3]
        .parse()
        .map_err(|_| Error::Input(format!("invalid grid count {:?}", parts[3])))?;
    let bounds_ok = lo.is_finite() && hi.is_finite() && lo > 0.0 && hi >= lo && count > 0;
    if !bounds_ok {
        return Err(Error::Input(
            "grid wants 0 < lo <= hi and count >= 1".into(),
        ));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let grid = match parts[0] {
        "log" => {
            let step = (hi.ln() - lo.ln()) / (count - 1) as f64;
            (0..count)
                .map(|i| (lo.ln() + step * i as f64).exp())
                .collect()
        }
        _ => {
            let step = (hi - lo) / (count - 1) as f64;
            (0..count).map(|i| lo + step * i as f64).collect()
        }
    };
    Ok(grid)
}

/// Lyapunov specs: explicit forms
/// `linear:<c11,c12;c21,c22>`, `reciprocal:<...>`, `power:<exp>:<s1;s2>`,
/// or a derived name built from the model's certificates at `kappa`.
fn parse_lyapunov(spec: &str, model: &SwitchedModel, kappa: f64) -> Result<LyapunovFn, Error> {
    let parse_env_vectors = |body: &str| -> Result<Vec<Vec<f64>>, Error> {
        body.split(';')
            .map(|env| {
                env.split(',')
                    .map(|tok| {
                        tok.trim()
                            .parse()
                            .map_err(|_| Error::Input(format!("invalid coefficient {tok:?}")))
                    })
                    .collect()
            })
            .collect()
    };
    if let Some(body) = spec.strip_prefix("linear:") {
        return Ok(LyapunovFn::Linear {
            coeffs: parse_env_vectors(body)?,
        });
    }
    if let Some(body) = spec.strip_prefix("reciprocal:") {
        return Ok(LyapunovFn::Reciprocal {
            coeffs: parse_env_vectors(body)?,
        });
    }
    if let Some(body) = spec.strip_prefix("power:") {
        let (exp_str, scales_str) = body
            .split_once(':')
            .ok_or_else(|| Error::Input("power wants power:<exponent>:<s1;s2;...>".into()))?;
        let exponent: f64 = exp_str
            .parse()
            .map_err(|_| Error::Input(format!("invalid exponent {exp_str:?}")))?;
        let scales = scales_str
            .split(';')
            .map(|tok| {
                tok.trim()
                    .parse()
                    .map_err(|_| Error::Input(format!("invalid scale {tok:?}")))
            })
            .collect::<Result<Vec<f64>, Error>>()?;
        return Ok(LyapunovFn::Power { scales, exponent });
    }
    match spec {
        "fast-ergodic" => drift::fast_ergodic_function(model, kappa),
        "slow-ergodic" => drift::slow_ergodic_function(model),
        "fast-transient" => drift::fast_transient_function(model, kappa),
        "slow-transient" => drift::slow_transient_function(model),
        other => Err(Error::Input(format!(
            "unknown lyapunov spec {other:?} (linear:, reciprocal:, power:, or a derived name)"
        ))),
    }
}

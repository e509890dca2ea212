//! Command-line front end: analysis commands, CSV/JSON emission and run
//! manifests.
//!
//! Exit codes: 0 success, 2 validation failure, 3 a numerical-degeneracy flag
//! was raised, 4 a crosscheck/compare tolerance was breached.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::bp::{self, StoppingTimeDistribution};
use crate::inact;
use crate::karp;
use crate::model::{DegreeDistribution, Model, ModelError, ModelInput};
use crate::opt::{self, OptConfig};
use crate::poisson;
use crate::sim::{self, BatchCount};
use crate::Real;

const CSV_SCHEMA_VERSION: &str = "v1";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Opt(#[from] opt::OptError),
    #[error(transparent)]
    Expmv(#[from] poisson::ExpmvError),
    #[error(transparent)]
    Karp(#[from] karp::KarpError),
    #[error(transparent)]
    Sim(#[from] sim::SimError),
}

#[derive(Parser, Debug)]
#[command(
    name = "bats-flan",
    version,
    about = "Exact finite-length analysis and simulation of BATS / LT / Raptor codes"
)]
pub struct Cli {
    /// Model JSON path (see README for the schema).
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Output path (CSV or JSON depending on the command).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Simulation seed.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Tolerance for matrix-exponential truncation.
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub tol: f64,
    /// Worker threads for simulation (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Renormalize probability vectors that sum slightly away from one.
    #[arg(long, global = true)]
    pub renormalize: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print the solvability vectors and the capacity of a model.
    Solvability,
    /// Exact BP stopping-time distribution for a fixed batch count.
    Bp(BpArgs),
    /// Exact BP stopping-time distribution for a Poisson batch count.
    Poisson(PoissonArgs),
    /// Expected inactivation count (fixed or Poisson batch count).
    Inact(InactArgs),
    /// Degree-distribution design LP.
    Optimize(OptimizeArgs),
    /// Monte Carlo encoder/decoder simulation.
    Simulate(SimulateArgs),
    /// Cross-check the per-degree recursion against the ripple recursion.
    Crosscheck(CrosscheckArgs),
    /// Side-by-side analytic vs Monte Carlo comparison with pass/fail bands.
    Compare(CompareArgs),
    /// Emit table-shaped CSV bundles for (K, n) sweeps and degree candidates.
    Tables(TablesArgs),
}

#[derive(Args, Debug)]
pub struct BpArgs {
    /// Number of received batches.
    #[arg(long)]
    pub n: usize,
    /// Decoding target; error = Pr{stop before kprime}. Defaults to K.
    #[arg(long)]
    pub kprime: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PoissonArgs {
    /// Mean number of received batches.
    #[arg(long)]
    pub nbar: f64,
    #[arg(long)]
    pub kprime: Option<usize>,
}

#[derive(Args, Debug)]
pub struct InactArgs {
    /// Fixed number of received batches.
    #[arg(long)]
    pub n: Option<usize>,
    /// Mean batch count (Poisson mode).
    #[arg(long)]
    pub nbar: Option<f64>,
}

#[derive(Args, Debug)]
pub struct OptimizeArgs {
    /// Recovery-gap fraction in (0, 1).
    #[arg(long)]
    pub eta: f64,
    /// Heuristic strength; 0 gives the asymptotic design.
    #[arg(long, default_value_t = 0.0)]
    pub c: f64,
    /// Heuristic exponent.
    #[arg(long, default_value_t = 0.0)]
    pub cprime: f64,
    /// Block length for the heuristic penalty term.
    #[arg(long = "K")]
    pub block_len: Option<usize>,
    /// Optimization grid size.
    #[arg(long, default_value_t = 512)]
    pub grid: usize,
    /// Maximum designed degree (default: ceil(M/eta) - 1).
    #[arg(long)]
    pub max_degree: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Number of batches (the Poisson mean when --poisson is set).
    #[arg(long)]
    pub n: f64,
    #[arg(long)]
    pub trials: u64,
    /// Also run inactivation decoding per trial.
    #[arg(long)]
    pub inactivation: bool,
    /// Draw the batch count from a Poisson law with mean --n.
    #[arg(long)]
    pub poisson: bool,
}

#[derive(Args, Debug)]
pub struct CrosscheckArgs {
    #[arg(long)]
    pub n: usize,
    /// Maximum allowed pointwise discrepancy.
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub trials: u64,
    /// Also compare expected inactivation counts.
    #[arg(long)]
    pub inactivation: bool,
}

#[derive(Args, Debug)]
pub struct TablesArgs {
    /// Table configuration JSON (see README).
    #[arg(long)]
    pub config: PathBuf,
}

/// Sweep configuration for the `tables` command.
#[derive(Debug, Serialize, Deserialize)]
pub struct TablesConfig {
    /// Path to a model JSON, or an inline model object.
    pub model: Value,
    pub eta: f64,
    #[serde(default)]
    pub kprime: Option<usize>,
    pub runs: Vec<TableRun>,
    #[serde(default)]
    pub psis: Vec<TablePsi>,
    #[serde(default)]
    pub emit_cdf: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TableRun {
    /// Block length override; defaults to the model's K.
    #[serde(default, rename = "K")]
    pub k: Option<usize>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub nbar: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TablePsi {
    pub name: String,
    pub degree_dist: Vec<f64>,
}

/// Provenance record written beside every output file.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub model: Option<String>,
    pub parameters: Value,
    pub seed: u64,
    pub tool_version: String,
    pub flags: Vec<String>,
    pub wall_time_secs: f64,
}

struct CommandOutput {
    summary: Value,
    flags: Vec<String>,
    breach: bool,
}

fn load_model(cli: &Cli) -> Result<(Model<Real>, String), CliError> {
    let path = cli
        .model
        .as_ref()
        .ok_or_else(|| CliError::Validation("--model is required".into()))?;
    let input = ModelInput::from_path(path)?;
    let model = input.into_model::<Real>(cli.renormalize)?;
    Ok((model, path.display().to_string()))
}

fn csv_header(kind: &str, columns: &str) -> String {
    format!("# bats-flan-csv {CSV_SCHEMA_VERSION} {kind}\n{columns}\n")
}

fn write_stopping_csv(path: &Path, dist: &StoppingTimeDistribution<Real>) -> Result<(), CliError> {
    let mut text = csv_header("stopping-time", "t,pmf,cdf");
    let cdf = dist.cdf();
    for (t, (&p, &c)) in dist.pmf.iter().zip(cdf.iter()).enumerate() {
        writeln!(text, "{t},{p},{c}").expect("string write");
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn write_manifest(
    out: Option<&Path>,
    command: &str,
    model: Option<&str>,
    parameters: Value,
    seed: u64,
    flags: &[String],
    started: Instant,
) -> Result<(), CliError> {
    let Some(out) = out else { return Ok(()) };
    let manifest = RunManifest {
        command: command.to_string(),
        model: model.map(str::to_string),
        parameters,
        seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        flags: flags.to_vec(),
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    let mut path = out.as_os_str().to_owned();
    path.push(".manifest.json");
    std::fs::write(
        PathBuf::from(path),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

fn cmd_solvability(cli: &Cli) -> Result<CommandOutput, CliError> {
    let (model, _) = load_model(cli)?;
    let solv = model.solvability();
    let m = model.batch_size();
    let mut table = String::new();
    writeln!(table, "{:>3} {:>22} {:>22}", "s", "hbar", "hbar_prime").expect("write");
    for s in 0..=m {
        writeln!(
            table,
            "{:>3} {:>22} {:>22}",
            s,
            solv.hbar(s),
            solv.hbar_prime(s)
        )
        .expect("write");
    }
    print!("{table}");
    println!("capacity C = {}", solv.capacity());
    let summary = json!({
        "command": "solvability",
        "hbar": solv.hbar_all(),
        "hbar_prime": solv.hbar_prime_all(),
        "expected_rank": solv.expected_rank(),
        "capacity": solv.capacity(),
        "flags": [],
    });
    if let Some(out) = &cli.out {
        std::fs::write(out, serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(CommandOutput {
        summary,
        flags: vec![],
        breach: false,
    })
}

fn cmd_bp(cli: &Cli, args: &BpArgs) -> Result<CommandOutput, CliError> {
    let (model, _) = load_model(cli)?;
    let kprime = args.kprime.unwrap_or(model.k());
    if kprime == 0 || kprime > model.k() {
        return Err(CliError::Validation(format!(
            "kprime must satisfy 1 <= kprime <= K = {}",
            model.k()
        )));
    }
    let dist = bp::stopping_time(&model, args.n);
    if let Some(out) = &cli.out {
        write_stopping_csv(out, &dist)?;
    }
    let summary = json!({
        "command": "bp",
        "n": args.n,
        "kprime": kprime,
        "p_error": dist.error_probability(kprime),
        "flags": dist.flags,
    });
    Ok(CommandOutput {
        flags: dist.flags.clone(),
        summary,
        breach: false,
    })
}

fn cmd_poisson(cli: &Cli, args: &PoissonArgs) -> Result<CommandOutput, CliError> {
    let (model, _) = load_model(cli)?;
    if args.nbar < 0.0 {
        return Err(CliError::Validation("nbar must be >= 0".into()));
    }
    let kprime = args.kprime.unwrap_or(model.k());
    if kprime == 0 || kprime > model.k() {
        return Err(CliError::Validation(format!(
            "kprime must satisfy 1 <= kprime <= K = {}",
            model.k()
        )));
    }
    let dist = poisson::poisson_stopping_time(&model, args.nbar, cli.tol)?;
    if let Some(out) = &cli.out {
        write_stopping_csv(out, &dist)?;
    }
    let summary = json!({
        "command": "poisson",
        "nbar": args.nbar,
        "kprime": kprime,
        "tol": cli.tol,
        "p_error": dist.error_probability(kprime),
        "flags": dist.flags,
    });
    Ok(CommandOutput {
        flags: dist.flags.clone(),
        summary,
        breach: false,
    })
}

fn cmd_inact(cli: &Cli, args: &InactArgs) -> Result<CommandOutput, CliError> {
    let (model, _) = load_model(cli)?;
    let analysis = match (args.n, args.nbar) {
        (Some(n), None) => inact::expected_inactivations_fixed(&model, n),
        (None, Some(nbar)) => {
            if nbar < 0.0 {
                return Err(CliError::Validation("nbar must be >= 0".into()));
            }
            inact::expected_inactivations_poisson(&model, nbar, cli.tol)?
        }
        _ => {
            return Err(CliError::Validation(
                "exactly one of --n or --nbar is required".into(),
            ))
        }
    };
    let summary = json!({
        "command": "inact",
        "n": args.n,
        "nbar": args.nbar,
        "expected_inactivations": analysis.expected,
        "per_step_inact_prob": analysis.per_step,
        "flags": analysis.flags,
    });
    if let Some(out) = &cli.out {
        std::fs::write(out, serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(CommandOutput {
        flags: analysis.flags.clone(),
        summary,
        breach: false,
    })
}

fn cmd_optimize(cli: &Cli, args: &OptimizeArgs) -> Result<CommandOutput, CliError> {
    let (model, _) = load_model(cli)?;
    if !(args.eta > 0.0 && args.eta < 1.0) {
        return Err(CliError::Validation("eta must lie in (0, 1)".into()));
    }
    let mut cfg = OptConfig::new(args.eta).with_heuristic(args.c, args.cprime);
    cfg.grid_points = args.grid;
    cfg.max_degree = args.max_degree;
    let solv = model.solvability();
    let result = if args.c > 0.0 {
        let k = args.block_len.unwrap_or(model.k());
        opt::optimize_heuristic(solv, &cfg, k)?
    } else {
        opt::optimize_asymptotic(solv, &cfg)?
    };
    let mut flags = Vec::new();
    if !result.feasible {
        flags.push(format!(
            "design_infeasible_after_refinement(violation={:e})",
            result.max_violation
        ));
    }
    let summary = json!({
        "command": "optimize",
        "eta": args.eta,
        "c": args.c,
        "cprime": args.cprime,
        "theta": result.theta,
        "degree_dist": result.psi.probs(),
        "active_constraints": result.active_constraints,
        "max_violation": result.max_violation,
        "grid_points": result.grid_points,
        "feasible": result.feasible,
        "flags": flags,
    });
    if let Some(out) = &cli.out {
        std::fs::write(out, serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(CommandOutput {
        summary,
        flags,
        breach: false,
    })
}

fn cmd_simulate(cli: &Cli, args: &SimulateArgs) -> Result<CommandOutput, CliError> {
    let (model, _) = load_model(cli)?;
    if args.trials == 0 {
        return Err(CliError::Validation("trials must be >= 1".into()));
    }
    if args.n < 0.0 {
        return Err(CliError::Validation("n must be >= 0".into()));
    }
    let count = if args.poisson {
        BatchCount::Poisson(args.n)
    } else {
        if args.n.fract() != 0.0 {
            return Err(CliError::Validation(
                "fixed batch count must be an integer (use --poisson for a mean)".into(),
            ));
        }
        BatchCount::Fixed(args.n as usize)
    };
    let report = sim::monte_carlo(&model, count, args.trials, cli.seed, args.inactivation)?;
    if let Some(out) = &cli.out {
        let mut text = csv_header("sim-histogram", "value,stop_count,inact_count");
        for v in 0..=report.k {
            let i = report
                .inact_hist
                .as_ref()
                .map(|h| h[v].to_string())
                .unwrap_or_default();
            writeln!(text, "{v},{},{i}", report.stop_hist[v]).expect("write");
        }
        std::fs::write(out, text)?;
    }
    let trials_f = report.trials as f64;
    let mean_stop = report.mean_stop_time();
    let stop_var: f64 = report
        .stop_hist
        .iter()
        .enumerate()
        .map(|(v, &c)| c as f64 * (v as f64 - mean_stop).powi(2))
        .sum::<f64>()
        / (trials_f - 1.0).max(1.0);
    let mean_inact = report.mean_inactivations();
    let inact_band = report.inact_hist.as_ref().zip(mean_inact).map(|(h, m)| {
        let var: f64 = h
            .iter()
            .enumerate()
            .map(|(v, &c)| c as f64 * (v as f64 - m).powi(2))
            .sum::<f64>()
            / (trials_f - 1.0).max(1.0);
        3.0 * (var / trials_f).sqrt()
    });
    let summary = json!({
        "command": "simulate",
        "mode": if args.poisson { "poisson" } else { "fixed" },
        "n": args.n,
        "trials": report.trials,
        "seed": cli.seed,
        "mean_stop_time": mean_stop,
        "mean_stop_time_band3sigma": 3.0 * (stop_var / trials_f).sqrt(),
        "bp_success_rate": report.bp_successes as f64 / trials_f,
        "mean_inactivations": mean_inact,
        "mean_inactivations_band3sigma": inact_band,
        "inact_solvable_rate": report
            .inact_solvable
            .map(|s| s as f64 / trials_f),
        "flags": [],
    });
    Ok(CommandOutput {
        summary,
        flags: vec![],
        breach: false,
    })
}

fn cmd_crosscheck(cli: &Cli, args: &CrosscheckArgs) -> Result<CommandOutput, CliError> {
    let (model, _) = load_model(cli)?;
    let reference = bp::stopping_time(&model, args.n);
    let karp_pmf = karp::karp_stopping_time(&model, args.n)?;
    let mut max_diff = 0.0f64;
    let mut argmax = 0usize;
    for (t, (&a, &b)) in reference.pmf.iter().zip(karp_pmf.iter()).enumerate() {
        let d = (a - b).abs();
        if d > max_diff {
            max_diff = d;
            argmax = t;
        }
    }
    let breach = max_diff > args.tolerance;
    println!(
        "max pointwise stopping-pmf discrepancy {max_diff:e} at t = {argmax} (tolerance {:e})",
        args.tolerance
    );
    let summary = json!({
        "command": "crosscheck",
        "n": args.n,
        "max_discrepancy": max_diff,
        "at_t": argmax,
        "tolerance": args.tolerance,
        "pass": !breach,
        "flags": reference.flags,
    });
    Ok(CommandOutput {
        flags: reference.flags.clone(),
        summary,
        breach,
    })
}

fn cmd_compare(cli: &Cli, args: &CompareArgs) -> Result<CommandOutput, CliError> {
    let (model, _) = load_model(cli)?;
    if args.trials == 0 {
        return Err(CliError::Validation("trials must be >= 1".into()));
    }
    let dist = bp::stopping_time(&model, args.n);
    let report = sim::monte_carlo(
        &model,
        BatchCount::Fixed(args.n),
        args.trials,
        cli.seed,
        args.inactivation,
    )?;
    let analytic = dist.cdf();
    let empirical = report.empirical_stop_cdf();
    let mut max_z = 0.0f64;
    let mut cdf_pass = true;
    let mut text = csv_header("compare", "t,analytic_cdf,empirical_cdf,band");
    for t in 0..=model.k() {
        let band = sim::confidence_band(analytic[t], args.trials);
        let diff = (analytic[t] - empirical[t]).abs();
        if band > 0.0 {
            max_z = max_z.max(diff / band);
        }
        if diff > band {
            cdf_pass = false;
        }
        writeln!(text, "{t},{},{},{band}", analytic[t], empirical[t]).expect("write");
    }
    if let Some(out) = &cli.out {
        std::fs::write(out, text)?;
    }
    let mut inact_pass = true;
    let mut inact_detail = Value::Null;
    if args.inactivation {
        let analysis = inact::expected_inactivations_fixed(&model, args.n);
        let hist = report.inact_hist.as_ref().expect("inactivation histogram");
        let trials = report.trials as f64;
        let mean = report.mean_inactivations().expect("inactivation mean");
        let var: f64 = hist
            .iter()
            .enumerate()
            .map(|(v, &c)| c as f64 * (v as f64 - mean).powi(2))
            .sum::<f64>()
            / (trials - 1.0).max(1.0);
        let sigma_mean = (var / trials).sqrt();
        let diff = (analysis.expected - mean).abs();
        inact_pass = diff <= 3.0 * sigma_mean + 1e-9;
        inact_detail = json!({
            "analytic": analysis.expected,
            "empirical_mean": mean,
            "sigma_of_mean": sigma_mean,
            "pass": inact_pass,
        });
    }
    let pass = cdf_pass && inact_pass;
    println!(
        "compare: {} (max |cdf diff| / band = {max_z:.3})",
        if pass { "PASS" } else { "FAIL" }
    );
    let summary = json!({
        "command": "compare",
        "n": args.n,
        "trials": args.trials,
        "seed": cli.seed,
        "cdf_pass": cdf_pass,
        "max_band_ratio": max_z,
        "inactivation": inact_detail,
        "pass": pass,
        "flags": dist.flags,
    });
    Ok(CommandOutput {
        flags: dist.flags.clone(),
        summary,
        breach: !pass,
    })
}

fn rebuild_with_k(
    input: &ModelInput,
    k: usize,
    renormalize: bool,
) -> Result<Model<Real>, CliError> {
    let mut patched = input.clone();
    patched.k = k;
    Ok(patched.into_model::<Real>(renormalize)?)
}

fn cmd_tables(cli: &Cli, args: &TablesArgs) -> Result<CommandOutput, CliError> {
    let cfg: TablesConfig = serde_json::from_str(&std::fs::read_to_string(&args.config)?)?;
    let input: ModelInput = match &cfg.model {
        Value::String(path) => ModelInput::from_path(Path::new(path))?,
        inline => serde_json::from_value(inline.clone())?,
    };
    let base = input.into_model::<Real>(cli.renormalize)?;
    if !(cfg.eta > 0.0 && cfg.eta < 1.0) {
        return Err(CliError::Validation("eta must lie in (0, 1)".into()));
    }
    let prefix = cli.out.clone().unwrap_or_else(|| PathBuf::from("tables"));
    let prefix = prefix.to_string_lossy().to_string();
    let mut flags: Vec<String> = Vec::new();

    // overhead table: pure design algebra, no decoding analysis involved
    let mut overhead_csv = csv_header("design-overhead", "K,n,rate,capacity,overhead");
    for run in &cfg.runs {
        let k = run.k.unwrap_or(base.k());
        let n_eff = match (run.n, run.nbar) {
            (Some(n), _) => n as f64,
            (None, Some(nbar)) => nbar,
            (None, None) => return Err(CliError::Validation("each run needs n or nbar".into())),
        };
        let m = opt::design_metrics(
            base.solvability(),
            k,
            n_eff.round().max(1.0) as usize,
            cfg.eta,
        );
        writeln!(
            overhead_csv,
            "{k},{n_eff},{},{},{}",
            m.rate, m.capacity, m.overhead
        )
        .expect("write");
    }
    std::fs::write(format!("{prefix}_overhead.csv"), &overhead_csv)?;

    // candidate degree distributions: the model's own plus any configured
    let mut candidates: Vec<(String, Option<Vec<f64>>)> = vec![("model".to_string(), None)];
    for p in &cfg.psis {
        candidates.push((p.name.clone(), Some(p.degree_dist.clone())));
    }

    let mut results_csv = csv_header(
        "analysis-results",
        "psi,K,mode,n,p_error,expected_inactivations",
    );
    for (name, psi) in &candidates {
        for run in &cfg.runs {
            let k = run.k.unwrap_or(base.k());
            let mut model = rebuild_with_k(&input, k, cli.renormalize)?;
            if let Some(raw) = psi {
                let degree = DegreeDistribution::new(raw.to_vec(), cli.renormalize)?;
                model = model.with_degree(degree);
            }
            let kprime = cfg
                .kprime
                .unwrap_or_else(|| ((1.0 - cfg.eta) * k as f64).ceil() as usize)
                .min(k)
                .max(1);
            let (mode, n_label, dist, expected): (&str, f64, StoppingTimeDistribution<Real>, f64) =
                match (run.n, run.nbar) {
                    (Some(n), _) => {
                        let dist = bp::stopping_time(&model, n);
                        let e = inact::expected_inactivations_fixed(&model, n).expected;
                        ("fixed", n as f64, dist, e)
                    }
                    (None, Some(nbar)) => {
                        let dist = poisson::poisson_stopping_time(&model, nbar, cli.tol)?;
                        let e =
                            inact::expected_inactivations_poisson(&model, nbar, cli.tol)?.expected;
                        ("poisson", nbar, dist, e)
                    }
                    (None, None) => unreachable!("validated above"),
                };
            flags.extend(dist.flags.iter().cloned());
            writeln!(
                results_csv,
                "{name},{k},{mode},{n_label},{},{expected}",
                dist.error_probability(kprime)
            )
            .expect("write");
            if cfg.emit_cdf {
                let path = format!("{prefix}_cdf_{name}_{mode}{n_label}_K{k}.csv");
                write_stopping_csv(Path::new(&path), &dist)?;
            }
        }
    }
    std::fs::write(format!("{prefix}_results.csv"), &results_csv)?;
    flags.sort();
    flags.dedup();
    let summary = json!({
        "command": "tables",
        "outputs": [
            format!("{prefix}_overhead.csv"),
            format!("{prefix}_results.csv"),
        ],
        "flags": flags,
    });
    Ok(CommandOutput {
        summary,
        flags,
        breach: false,
    })
}

/// Runs a parsed invocation; returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    if let Some(threads) = cli.threads {
        // ignore failure when a pool already exists (repeated calls in-process)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let started = Instant::now();
    let result = match &cli.command {
        Command::Solvability => cmd_solvability(cli),
        Command::Bp(args) => cmd_bp(cli, args),
        Command::Poisson(args) => cmd_poisson(cli, args),
        Command::Inact(args) => cmd_inact(cli, args),
        Command::Optimize(args) => cmd_optimize(cli, args),
        Command::Simulate(args) => cmd_simulate(cli, args),
        Command::Crosscheck(args) => cmd_crosscheck(cli, args),
        Command::Compare(args) => cmd_compare(cli, args),
        Command::Tables(args) => cmd_tables(cli, args),
    };
    match result {
        Ok(output) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&output.summary).expect("summary serialization")
            );
            let params = output.summary.clone();
            if write_manifest(
                cli.out.as_deref(),
                &command_name(&cli.command),
                cli.model
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .as_deref(),
                params,
                cli.seed,
                &output.flags,
                started,
            )
            .is_err()
            {
                eprintln!("warning: failed to write manifest");
            }
            if output.breach {
                4
            } else if !output.flags.is_empty() {
                3
            } else {
                0
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            2
        }
    }
}

fn command_name(cmd: &Command) -> String {
    match cmd {
        Command::Solvability => "solvability",
        Command::Bp(_) => "bp",
        Command::Poisson(_) => "poisson",
        Command::Inact(_) => "inact",
        Command::Optimize(_) => "optimize",
        Command::Simulate(_) => "simulate",
        Command::Crosscheck(_) => "crosscheck",
        Command::Compare(_) => "compare",
        Command::Tables(_) => "tables",
    }
    .to_string()
}

/// Parses CLI arguments and runs; the entry point used by `main`.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    run(&cli)
}

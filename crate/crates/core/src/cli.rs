//! Command-line front end.
//!
//! Every command writes under `--out` and always leaves a `manifest.json`
//! there. Exit codes: 0 success, 2 configuration, 3 runtime, 4 estimation.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::analytics::{self, DEFAULT_TAIL_WINDOW};
use crate::config::{self, AnalyticQuery, ParsedConfig, SteadyRun, TransientRun, MAX_SEED};
use crate::dist::DistSpec;
use crate::engine::Policy;
use crate::error::{Error, Result};
use crate::experiments::{self, fmt_f64, Scale, Scenario, ScenarioId, ScenarioSpec, VERSION};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_ESTIMATION: i32 = 4;

/// Exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidParameter { .. } | Error::Config(_) => EXIT_CONFIG,
        Error::Estimation(_) => EXIT_ESTIMATION,
        Error::Analytic(_) | Error::Contract(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) => EXIT_RUNTIME,
    }
}

#[derive(Debug, Parser)]
#[command(name = "restartq", version, about = "Queues with failure-driven restarts: analysis and simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form quantities.
    Analytic(AnalyticArgs),
    /// Steady-state simulation with arrivals, from a config file.
    Simulate(RunArgs),
    /// Samples of the completion time of a batch with no arrivals.
    Transient(RunArgs),
    /// One of the catalog scenarios.
    Experiment(ExperimentArgs),
    /// Tail-index fit of a column of samples.
    Tail(TailArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the seed of the run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for replication (0 = all cores). Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Scenario id, e.g. ex1_instability. Omit when --config is given.
    pub scenario: Option<String>,
    /// Run file with `mode = "experiment"`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Comma-separated grid, meaning depends on the scenario.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub max_failures: Option<u64>,
    #[arg(long)]
    pub trace_stride: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyticArgs {
    #[command(subcommand)]
    pub query: Option<AnalyticCommand>,
    /// Run file with `mode = "analytic"`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "out", global = true)]
    pub out: PathBuf,
}

/// Failure law: `--mu` for exponential, or `--failure` as inline TOML
/// such as `family = "weibull", scale = 2.0, shape = 2.0`.
#[derive(Debug, Args)]
pub struct FailureArg {
    #[arg(long, conflicts_with = "failure")]
    pub mu: Option<f64>,
    #[arg(long)]
    pub failure: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum AnalyticCommand {
    /// E[N], E[S], the FCFS threshold λ* and, with --lambda, the load ρ.
    Stability {
        #[command(flatten)]
        failure: FailureArg,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// E[1/Ḡ(B)] for a random job law (inline TOML).
    RandomJob {
        #[command(flatten)]
        failure: FailureArg,
        #[arg(long)]
        job: String,
    },
    /// Bounded-queue throughput bound and critical job size.
    Throughput {
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        queue_cap: usize,
        #[arg(long)]
        size: Option<f64>,
    },
    /// P(B^(i) > x) for the i-th smallest of m sizes.
    OrderStat {
        #[arg(long)]
        job: String,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        i: usize,
        #[arg(long, value_delimiter = ',')]
        x: Vec<f64>,
    },
    /// Predicted tail index of the batch completion time.
    TailIndex {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        m: usize,
        /// fcfs, fcfs_idle, ps or ps_idle.
        #[arg(long, default_value = "ps")]
        policy: String,
    },
}

#[derive(Debug, Args)]
pub struct TailArgs {
    /// CSV file of samples.
    #[arg(long)]
    pub input: PathBuf,
    /// Column name (when the file has a header) or 0-based index.
    #[arg(long, default_value = "0")]
    pub column: String,
    /// Quantile window `lower,upper`.
    #[arg(long, value_delimiter = ',', default_values_t = [DEFAULT_TAIL_WINDOW.0, DEFAULT_TAIL_WINDOW.1])]
    pub window: Vec<f64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

/// Parses `args` (program name first), runs, and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analytic(a) => analytic(a),
        Command::Simulate(a) => simulate(a),
        Command::Transient(a) => transient(a),
        Command::Experiment(a) => experiment(a),
        Command::Tail(a) => tail(a),
    }
}

fn check_seed(seed: Option<u64>) -> Result<()> {
    match seed {
        Some(s) if s > MAX_SEED => Err(Error::Config(format!("--seed must be at most {MAX_SEED}"))),
        _ => Ok(()),
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn manifest(out: &Path, command: &str, body: serde_json::Value) -> Result<()> {
    let mut m = json!({"artifact": env!("CARGO_PKG_NAME"), "version": VERSION, "command": command});
    if let (Some(m), serde_json::Value::Object(b)) = (m.as_object_mut(), body) {
        m.extend(b);
    }
    write_json(&out.join("manifest.json"), &m)
}

fn inline_dist(text: &str) -> Result<DistSpec> {
    #[derive(serde::Deserialize)]
    struct Wrap {
        d: DistSpec,
    }
    let w: Wrap = toml::from_str(&format!("d = {{ {text} }}")).map_err(|e| Error::Config(format!("bad law `{text}`: {e}")))?;
    Ok(w.d)
}

fn failure_law(f: &FailureArg) -> Result<DistSpec> {
    match (&f.mu, &f.failure) {
        (Some(mu), _) => DistSpec::exponential(*mu),
        (None, Some(text)) => inline_dist(text),
        (None, None) => Err(Error::Config("give --mu or --failure".into())),
    }
}

fn policy_named(name: &str) -> Result<Policy> {
    match name {
        "fcfs" => Ok(Policy::Fcfs),
        "fcfs_idle" => Ok(Policy::FcfsIdle),
        "ps" => Ok(Policy::Ps),
        "ps_idle" => Ok(Policy::PsIdle),
        other => Err(Error::Config(format!("unknown policy `{other}`"))),
    }
}

fn analytic(a: AnalyticArgs) -> Result<()> {
    let query = match (a.query, &a.config) {
        (Some(_), Some(_)) => return Err(Error::Config("give either a query or --config, not both".into())),
        (None, None) => return Err(Error::Config("give a query or --config".into())),
        (None, Some(path)) => match config::parse_config(path)? {
            ParsedConfig::Analytic(q) => q,
            other => return Err(Error::Config(format!("expected mode = \"analytic\", found {:?}", other.mode()))),
        },
        (Some(cmd), None) => match cmd {
            AnalyticCommand::Stability { failure, beta, lambda } => AnalyticQuery::Stability {
                failure: failure_law(&failure)?,
                beta,
                lambda,
            },
            AnalyticCommand::RandomJob { failure, job } => AnalyticQuery::RandomJobRestarts {
                failure: failure_law(&failure)?,
                job: inline_dist(&job)?,
            },
            AnalyticCommand::Throughput {
                lambda,
                mu,
                queue_cap,
                size,
            } => AnalyticQuery::Throughput {
                lambda,
                mu,
                queue_cap,
                size,
            },
            AnalyticCommand::OrderStat { job, m, i, x } => AnalyticQuery::OrderStatistic {
                job: inline_dist(&job)?,
                m,
                i,
                x,
            },
            AnalyticCommand::TailIndex { alpha, gamma, m, policy } => AnalyticQuery::TailIndex {
                alpha,
                gamma,
                m,
                policy: policy_named(&policy)?,
            },
        },
    };
    let parsed = ParsedConfig::Analytic(query.clone());
    let resolved = parsed.to_toml()?;
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("resolved_config.toml"), &resolved)?;
    manifest(&a.out, "analytic", json!({"query": query}))?;
    let value = query.evaluate()?;
    write_json(&a.out.join("analytic.json"), &value)?;
    if let AnalyticQuery::Stability { .. } = query {
        print!("lambda* = {:.6}", value["lambda_star"].as_f64().unwrap_or(f64::NAN));
        if let Some(rho) = value["rho"].as_f64() {
            print!("  rho = {rho:.6}  stable = {}", value["stable"]);
        }
        println!();
    }
    println!("{value}");
    Ok(())
}

fn steady_run(path: &Path, args: &RunArgs) -> Result<SteadyRun> {
    check_seed(args.common.seed)?;
    let mut run = match config::parse_config(path)? {
        ParsedConfig::Steady(r) => r,
        other => return Err(Error::Config(format!("simulate expects mode = \"steady\", found {:?}", other.mode()))),
    };
    if args.samples.is_some() {
        return Err(Error::Config("--samples applies to transient runs".into()));
    }
    if let Some(s) = args.common.seed {
        run.config.master_seed = s;
    }
    if let Some(h) = args.horizon {
        run.config.horizon = h;
    }
    if let Some(r) = args.replicas {
        run.replicas = r;
    }
    if let Some(t) = args.common.threads {
        run.threads = t;
    }
    run.config.validate()?;
    if run.replicas == 0 {
        return Err(Error::invalid("replicas", "must be >= 1"));
    }
    Ok(run)
}

fn simulate(args: RunArgs) -> Result<()> {
    let run = steady_run(&args.config, &args)?;
    let out = &args.common.out;
    fs::create_dir_all(out)?;
    fs::write(out.join("resolved_config.toml"), ParsedConfig::Steady(run.clone()).to_toml()?)?;
    let scenario = Scenario::Custom {
        config: run.config.clone(),
        replicas: run.replicas,
        threads: run.threads,
    };
    let report = experiments::run_scenario(&scenario, out)?;
    if let Some(s) = report.steady("custom") {
        let m = &s.merged;
        println!(
            "replicas = {}  saturated = {}  throughput = {:.6}  final Q = {:.1}",
            m.replicas, m.saturated, m.throughput.mean, m.final_queue.mean
        );
    }
    Ok(())
}

fn transient(args: RunArgs) -> Result<()> {
    check_seed(args.common.seed)?;
    let mut run: TransientRun = match config::parse_config(&args.config)? {
        ParsedConfig::Transient(r) => r,
        other => return Err(Error::Config(format!("transient expects mode = \"transient\", found {:?}", other.mode()))),
    };
    if args.horizon.is_some() || args.replicas.is_some() {
        return Err(Error::Config("--horizon and --replicas apply to steady runs".into()));
    }
    if let Some(s) = args.common.seed {
        run.seed = s;
    }
    if let Some(n) = args.samples {
        if n == 0 {
            return Err(Error::invalid("samples", "must be >= 1"));
        }
        run.samples = n;
    }
    if let Some(t) = args.common.threads {
        run.threads = t;
    }
    let out = &args.common.out;
    fs::create_dir_all(out)?;
    let parsed = ParsedConfig::Transient(run.clone());
    fs::write(out.join("resolved_config.toml"), parsed.to_toml()?)?;
    manifest(out, "transient", json!({"case": run.case, "samples": run.samples, "seed": run.seed, "max_failures": run.options.max_failures}))?;

    let s = experiments::transient_samples(&run.case, run.samples, run.seed, run.threads, run.options)?;
    let mut w = csv::Writer::from_path(out.join("samples.csv"))?;
    w.write_record(["sample", "theta", "truncated"])?;
    // truncation flags per sample are recomputed cheaply from the cap only for flagged runs
    let flags = truncation_flags(&run, &s);
    for (k, (theta, tr)) in s.theta.iter().zip(&flags).enumerate() {
        w.write_record([k.to_string(), fmt_f64(*theta), (*tr as u8).to_string()])?;
    }
    w.flush()?;
    let summary = experiments::TransientSummary::of(&run.case, &s, DEFAULT_TAIL_WINDOW);
    let line = json!({"record": "transient", "series": "custom", "policy": run.case.policy.name(), "m": run.case.m, "seed": run.seed, "stats": summary});
    fs::write(out.join("summary.jsonl"), format!("{line}\n"))?;
    println!(
        "samples = {}  truncated = {}  median = {:.6}",
        summary.samples, summary.truncated, summary.median_theta
    );
    Ok(())
}

fn truncation_flags(run: &TransientRun, s: &experiments::TransientSamples) -> Vec<bool> {
    if s.truncated == 0 {
        return vec![false; s.theta.len()];
    }
    (0..s.theta.len())
        .map(|k| {
            let seed = crate::rng::derive_seed(run.seed, k as u64);
            experiments::transient_sample(&run.case, seed, run.options).truncated
        })
        .collect()
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    check_seed(a.common.seed)?;
    let mut spec = match (&a.scenario, &a.config) {
        (Some(_), Some(_)) => return Err(Error::Config("give either a scenario id or --config, not both".into())),
        (None, None) => return Err(Error::Config("give a scenario id or --config".into())),
        (Some(id), None) => ScenarioSpec::new(id.parse::<ScenarioId>()?),
        (None, Some(path)) => match config::parse_config(path)? {
            ParsedConfig::Experiment(s) => s,
            other => return Err(Error::Config(format!("expected mode = \"experiment\", found {:?}", other.mode()))),
        },
    };
    if let Some(s) = a.common.seed {
        spec.seed = s;
    }
    if let Some(t) = a.common.threads {
        spec.threads = t;
    }
    let sc: &mut Scale = &mut spec.scale;
    macro_rules! over {
        ($($f:ident),*) => { $( if a.$f.is_some() { sc.$f = a.$f.clone(); } )* };
    }
    over!(horizon, replicas, samples, grid, lambda, beta, max_failures, trace_stride);
    spec.plan()?;
    let out = &a.common.out;
    fs::create_dir_all(out)?;
    fs::write(out.join("resolved_config.toml"), ParsedConfig::Experiment(spec.clone()).to_toml()?)?;
    let report = experiments::run_scenario(&Scenario::Catalog(spec), out)?;
    for s in &report.series {
        match s {
            experiments::SeriesReport::Steady { name, summary } => println!(
                "{name}: saturated {}/{}  throughput {:.4}  utilization {:.4}",
                summary.merged.saturated, summary.merged.replicas, summary.merged.throughput.mean, summary.merged.utilization.mean
            ),
            experiments::SeriesReport::Transient { name, summary } => println!(
                "{name}: slope {}  predicted {}  truncated {}",
                summary.tail.as_ref().map_or("n/a".to_string(), |t| format!("{:.3}", t.slope)),
                summary.predicted_index.map_or("n/a".to_string(), |p| format!("{:.3}", -p)),
                summary.truncated
            ),
        }
    }
    Ok(())
}

/// Reads one numeric column. A first row whose cell is not a number is a
/// header, which is what lets `--column` be a name.
pub fn read_column(path: &Path, column: &str) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut rows = rdr.records();
    let first = match rows.next() {
        Some(r) => r?,
        None => return Err(Error::Estimation(format!("{}: no rows", path.display()))),
    };
    let by_index = column.parse::<usize>().ok();
    let (idx, mut values) = match by_index {
        Some(i) if first.get(i).is_some_and(|c| c.trim().parse::<f64>().is_ok()) => {
            (i, vec![first[i].trim().parse::<f64>().unwrap_or(f64::NAN)])
        }
        Some(i) => (i, Vec::new()),
        None => {
            let i = first
                .iter()
                .position(|h| h.trim() == column)
                .ok_or_else(|| Error::Config(format!("no column `{column}` in {}", path.display())))?;
            (i, Vec::new())
        }
    };
    for (line, r) in rows.enumerate() {
        let r = r?;
        let cell = r
            .get(idx)
            .ok_or_else(|| Error::Config(format!("row {} has no column {idx}", line + 2)))?;
        let v = cell
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("row {}: `{cell}` is not a number", line + 2)))?;
        values.push(v);
    }
    Ok(values)
}

fn tail(a: TailArgs) -> Result<()> {
    let window = match a.window[..] {
        [lo, hi] => (lo, hi),
        _ => return Err(Error::Config("--window takes two values `lower,upper`".into())),
    };
    fs::create_dir_all(&a.out)?;
    manifest(
        &a.out,
        "tail",
        json!({"input": a.input.display().to_string(), "column": a.column, "window": [window.0, window.1]}),
    )?;
    let samples = read_column(&a.input, &a.column)?;
    let est = analytics::estimate_tail_index(&samples, window)?;
    let value = serde_json::to_value(&est)?;
    write_json(&a.out.join("tail.json"), &value)?;
    println!("{value}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::invalid("a", "b")), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::Estimation("x".into())), EXIT_ESTIMATION);
        assert_eq!(exit_code(&Error::Analytic("x".into())), EXIT_RUNTIME);
    }

    #[test]
    fn inline_law_parses() {
        assert_eq!(
            inline_dist("family = \"weibull\", scale = 2.0, shape = 2.0").unwrap(),
            DistSpec::weibull(2.0, 2.0).unwrap()
        );
        assert!(inline_dist("family = \"pareto\", scale = 1.0, index = 1.0").is_err());
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}

//! Single binary front door: diagram validation, model sampling, information
//! queries, bound checks, proxy bootstrapping, feature engineering, the
//! benchmark pipelines, and the end-to-end procedure.
//!
//! All outputs are JSON or CSV. Exit codes: 0 success, 1 internal error,
//! 2 user or configuration error; failures also emit a machine-readable
//! error envelope on stderr.

mod pipeline;

use clap::{Args, Parser, Subcommand};
use percis_core::bench::{
    ingest_tabular, run_synthetic_sweep, run_tabular, EnvPoint, SyntheticConfig, TabularConfig,
};
use percis_core::bootstrap::{
    bootstrap_labels, dependence_graph_oracle, dependence_graph_statistical,
    verify_seed_conditions, CiTest, CiTestConfig, LabelState, SeedConditionReport,
};
use percis_core::cis::{check_improvement, emit_features, train_isolation, CisConfig, LearnerSpec};
use percis_core::formats::{
    read_csv, read_dsd, read_scm, read_seeds, write_csv, write_json, ErrorEnvelope,
};
use percis_core::graph::{classify_hidden, classify_proxies};
use percis_core::info::{check_bounds, Binning, InfoQuery};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "percis",
    about = "Proxy-based robustness toolkit: shift diagrams, dropout models, proxy bootstrapping, and causal information splitting",
    version
)]
struct Cli {
    /// Worker-thread cap for parallel sections (also PER_CIS_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a diagram file and print classifications.
    Validate(ValidateArgs),
    /// Draw rows from a dropout model into a CSV.
    Sample(SampleArgs),
    /// Evaluate information queries against a dropout model.
    Info(InfoArgs),
    /// Check the inequality bounds on a dropout model.
    Bounds(BoundsArgs),
    /// Build the dependence graph and propagate seed labels.
    Bootstrap(BootstrapArgs),
    /// Train per-stratum isolation models and emit engineered columns.
    Cis(CisArgs),
    /// Run a benchmark pipeline.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Run the full procedure: dependence graph, bootstrap, splitting, fit.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct ValidateArgs {
    /// Diagram JSON file.
    #[arg(long)]
    dsd: PathBuf,
    /// Also print the hidden/proxy classifications.
    #[arg(long)]
    classify: bool,
    /// Unused; accepted so every subcommand takes --seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SampleArgs {
    /// Model JSON file.
    #[arg(long)]
    scm: PathBuf,
    #[arg(short, long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InfoArgs {
    #[arg(long)]
    scm: PathBuf,
    /// JSON array of queries.
    #[arg(long)]
    queries: PathBuf,
    /// Output JSON path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    scm: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for the sampled conditioning subsets.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BootstrapArgs {
    /// Model JSON: build the dependence graph by d-separation.
    #[arg(long, conflicts_with = "data")]
    scm: Option<PathBuf>,
    /// Dataset CSV: build the graph with conditional independence tests.
    #[arg(long, requires = "label")]
    data: Option<PathBuf>,
    /// Label column (statistical mode).
    #[arg(long)]
    label: Option<String>,
    /// Proxy columns, comma separated (statistical mode; defaults to every
    /// column except the label).
    #[arg(long, value_delimiter = ',')]
    proxies: Vec<String>,
    /// Seeds JSON file: {"name": "good" | "bad" | "ambiguous"}.
    #[arg(long)]
    seeds: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    alpha_level: f64,
    #[arg(long, default_value_t = 30)]
    min_stratum: usize,
    /// Permutation rounds; 0 uses the likelihood-ratio test.
    #[arg(long, default_value_t = 0)]
    permutation_rounds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CisArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    target: String,
    #[arg(long, value_delimiter = ',')]
    source: Vec<String>,
    #[arg(long)]
    label: String,
    #[arg(long, default_value_t = 50)]
    min_stratum: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Augmented CSV output.
    #[arg(long)]
    out_csv: PathBuf,
    /// Improvement report JSON output.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Serialized model parameters JSON output.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Shift sweep on generated Gaussian data.
    Synthetic(BenchSyntheticArgs),
    /// Train-era/evaluation-era comparison on tabular CSVs.
    Tabular(BenchTabularArgs),
}

#[derive(Args)]
struct BenchSyntheticArgs {
    /// SyntheticConfig JSON plus a "sweep" array of {sigma_mg, sigma_mb}.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Optional plot-ready CSV of the sweep curves.
    #[arg(long)]
    curves: Option<PathBuf>,
    /// Overrides the config seed when set.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BenchTabularArgs {
    /// TabularConfig JSON.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PipelineArgs {
    /// PipelineConfig JSON.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed when set.
    #[arg(long)]
    seed: Option<u64>,
}

/// User-facing failures exit 2, unexpected internal states exit 1.
#[derive(Debug)]
pub enum CliError {
    User(String),
    Internal(String),
}

impl CliError {
    fn user(message: impl Into<String>) -> Self {
        CliError::User(message.into())
    }
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::User(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn emit<T: Serialize>(out: Option<&PathBuf>, value: &T) -> CliResult {
    match out {
        Some(path) => {
            write_json(path, value)?;
        }
        None => {
            use std::io::Write;
            let body =
                serde_json::to_string_pretty(value).map_err(|e| CliError::user(e.to_string()))?;
            // A consumer closing the pipe early (e.g. `| head`) is not an
            // error worth reporting.
            if let Err(e) = writeln!(std::io::stdout(), "{body}") {
                if e.kind() != std::io::ErrorKind::BrokenPipe {
                    return Err(CliError::user(e.to_string()));
                }
            }
        }
    }
    Ok(())
}

fn read_json_file<T: serde::de::DeserializeOwned>(path: &PathBuf) -> CliResult<T> {
    let body = std::fs::read_to_string(path)
        .map_err(|e| CliError::user(format!("cannot read `{}`: {e}", path.display())))?;
    serde_json::from_str(&body)
        .map_err(|e| CliError::user(format!("cannot parse `{}`: {e}", path.display())))
}

#[derive(Serialize)]
struct ValidateReport {
    valid: bool,
    violations: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hidden: Option<BTreeMap<String, Vec<String>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    proxies: Option<BTreeMap<String, Vec<String>>>,
}

fn cmd_validate(args: &ValidateArgs) -> CliResult {
    let dsd = read_dsd(&args.dsd)?;
    let violations = dsd.validate();
    let mut report = ValidateReport {
        valid: violations.is_empty(),
        violations,
        hidden: None,
        proxies: None,
    };
    if args.classify && report.valid {
        let hp = classify_hidden(&dsd)?;
        let pp = classify_proxies(&dsd, &hp);
        let names = |ids: &std::collections::BTreeSet<usize>| -> Vec<String> {
            ids.iter().map(|&v| dsd.dag().name(v).to_string()).collect()
        };
        report.hidden = Some(BTreeMap::from([
            ("good".to_string(), names(&hp.good)),
            ("bad".to_string(), names(&hp.bad)),
        ]));
        report.proxies = Some(BTreeMap::from([
            ("good".to_string(), names(&pp.good)),
            ("bad".to_string(), names(&pp.bad)),
            ("ambiguous".to_string(), names(&pp.ambiguous)),
        ]));
    }
    emit(None, &report)?;
    if report.valid {
        Ok(())
    } else {
        Err(CliError::user("diagram is invalid"))
    }
}

fn cmd_sample(args: &SampleArgs) -> CliResult {
    let scm = read_scm(&args.scm)?;
    let ds = scm.sample(args.n, args.seed)?;
    write_csv(&args.out, &ds)?;
    Ok(())
}

#[derive(Serialize)]
struct QueryResult {
    query: InfoQuery,
    bits: f64,
}

fn cmd_info(args: &InfoArgs) -> CliResult {
    let scm = read_scm(&args.scm)?;
    let queries: Vec<InfoQuery> = read_json_file(&args.queries)?;
    let table = scm.enumerate_full()?;
    let mut results = Vec::with_capacity(queries.len());
    for query in queries {
        let bits = query.evaluate(&table)?;
        results.push(QueryResult { query, bits });
    }
    emit(args.out.as_ref(), &results)
}

fn cmd_bounds(args: &BoundsArgs) -> CliResult {
    let scm = read_scm(&args.scm)?;
    let outcome = check_bounds(&scm, args.seed)?;
    emit(args.out.as_ref(), &outcome)
}

#[derive(Serialize)]
struct BootstrapReport {
    labels: BTreeMap<String, percis_core::bootstrap::ProxyClass>,
    state: LabelState,
    edges: Vec<(String, String)>,
    undetermined: Vec<(String, String)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    conditions: Option<SeedConditionReport>,
}

fn cmd_bootstrap(args: &BootstrapArgs) -> CliResult {
    let seeds = read_seeds(&args.seeds)?;
    let (graph, conditions) = match (&args.scm, &args.data) {
        (Some(scm_path), None) => {
            let scm = read_scm(scm_path)?;
            let graph = dependence_graph_oracle(scm.dsd())?;
            let conditions = verify_seed_conditions(scm.dsd(), &seeds)?;
            (graph, Some(conditions))
        }
        (None, Some(data_path)) => {
            let label = args
                .label
                .as_deref()
                .ok_or_else(|| CliError::user("--label is required with --data"))?;
            let (ds, _) = read_csv(data_path, None)?;
            let proxies: Vec<String> = if args.proxies.is_empty() {
                ds.column_names()
                    .into_iter()
                    .filter(|c| *c != label)
                    .map(|c| c.to_string())
                    .collect()
            } else {
                args.proxies.clone()
            };
            let proxy_refs: Vec<&str> = proxies.iter().map(String::as_str).collect();
            let cfg = CiTestConfig {
                test: if args.permutation_rounds > 0 {
                    CiTest::Permutation {
                        rounds: args.permutation_rounds,
                    }
                } else {
                    CiTest::GTest
                },
                min_stratum: args.min_stratum,
                binning: Binning::default(),
                seed: args.seed,
            };
            let graph =
                dependence_graph_statistical(&ds, &proxy_refs, label, args.alpha_level, &cfg)?;
            (graph, None)
        }
        _ => return Err(CliError::user("pass exactly one of --scm or --data")),
    };
    let state = bootstrap_labels(&graph, &seeds)?;
    let report = BootstrapReport {
        labels: state
            .labels
            .iter()
            .map(|(name, info)| (name.clone(), info.class))
            .collect(),
        edges: graph.named_edges(),
        undetermined: graph
            .undetermined
            .iter()
            .map(|&(a, b)| (graph.nodes[a].clone(), graph.nodes[b].clone()))
            .collect(),
        conditions,
        state,
    };
    emit(args.out.as_ref(), &report)
}

fn cmd_cis(args: &CisArgs) -> CliResult {
    if args.source.is_empty() {
        return Err(CliError::user("--source needs at least one column"));
    }
    let (ds, _) = read_csv(&args.data, None)?;
    let source: Vec<&str> = args.source.iter().map(String::as_str).collect();
    let cfg = CisConfig {
        min_stratum: args.min_stratum,
        seed: args.seed,
    };
    let isolation = train_isolation(
        &ds,
        &args.target,
        &source,
        &args.label,
        LearnerSpec::default(),
        &cfg,
    )?;
    let augmented = emit_features(&isolation, &ds)?;
    write_csv(&args.out_csv, &augmented)?;
    if let Some(path) = &args.report {
        let report = check_improvement(
            &ds,
            &args.target,
            &source,
            &args.label,
            LearnerSpec::default(),
            5,
            0.0,
            &cfg,
        )?;
        write_json(path, &report)?;
    }
    if let Some(path) = &args.model {
        write_json(path, &isolation)?;
    }
    Ok(())
}

#[derive(serde::Deserialize)]
struct SyntheticBenchFile {
    #[serde(flatten)]
    config: SyntheticConfig,
    sweep: Vec<EnvPoint>,
}

fn cmd_bench_synthetic(args: &BenchSyntheticArgs) -> CliResult {
    let mut file: SyntheticBenchFile = read_json_file(&args.config)?;
    if let Some(seed) = args.seed {
        file.config.seed = seed;
    }
    let report = run_synthetic_sweep(&file.config, &file.sweep)?;
    write_json(&args.out, &report)?;
    if let Some(path) = &args.curves {
        std::fs::write(path, report.to_curves_csv())
            .map_err(|e| CliError::user(format!("cannot write `{}`: {e}", path.display())))?;
    }
    eprintln!("synthetic bench finished in {:.1?}", report.runtime);
    Ok(())
}

fn cmd_bench_tabular(args: &BenchTabularArgs) -> CliResult {
    let mut config: TabularConfig = read_json_file(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    // Surface ingestion problems (missing files/columns) before the run.
    ingest_tabular(&config)?;
    let report = run_tabular(&config)?;
    write_json(&args.out, &report)?;
    eprintln!("tabular bench finished in {:.1?}", report.runtime);
    Ok(())
}

fn configure_threads(cli_threads: Option<usize>) {
    let from_env = std::env::var("PER_CIS_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    if let Some(threads) = cli_threads.or(from_env) {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

fn run(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Validate(args) => cmd_validate(args),
        Command::Sample(args) => cmd_sample(args),
        Command::Info(args) => cmd_info(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Bootstrap(args) => cmd_bootstrap(args),
        Command::Cis(args) => cmd_cis(args),
        Command::Bench(BenchCommand::Synthetic(args)) => cmd_bench_synthetic(args),
        Command::Bench(BenchCommand::Tabular(args)) => cmd_bench_tabular(args),
        Command::Pipeline(args) => pipeline::run(args.config.clone(), args.seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads(cli.threads);
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::User(message)) => {
            let envelope = ErrorEnvelope::user(&message);
            eprintln!("{}", serde_json::to_string(&envelope).unwrap());
            ExitCode::from(2)
        }
        Err(CliError::Internal(message)) => {
            let envelope = ErrorEnvelope::internal(&message);
            eprintln!("{}", serde_json::to_string(&envelope).unwrap());
            ExitCode::from(1)
        }
    }
}

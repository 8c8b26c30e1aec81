//! `clusterinfo`: rank additional data sets for clustering by their
//! Fisher-information criterion, and reproduce the synthetic experiment.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 the additional data set
//! degrades the estimate (`ic` only), 3 numerical failure.

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use clusterinfo::experiment::{
    self, default_alpha, rank_additional_files, run_trials, run_true_row, summarize, write_summary_csv, CandidateFile,
    ExperimentConfig,
};
use clusterinfo::{Dataset, DatasetKind, FisherMethod, FisherTriple, QuadratureGrid, ScenarioKind, Stream, Verdict};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "clusterinfo",
    version,
    about = "Fisher-information criterion for choosing additional clustering data"
)]
struct Cli {
    /// Config file (TOML); defaults to $CLUSTERINFO_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Progress and timing on stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the synthetic experiment; writes true_row.json, trials.json, summary.csv.
    Repro(ReproArgs),
    /// Criterion for one additional data set, as JSON on stdout.
    Ic(IcArgs),
    /// Rank several additional data sets by the criterion.
    Rank(RankArgs),
    /// Fisher matrices at the configured true parameter.
    FisherDump(FisherDumpArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo draws per Fisher matrix.
    #[arg(long)]
    nprime: Option<usize>,
}

#[derive(Debug, Args)]
struct ReproArgs {
    #[command(flatten)]
    common: Common,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Trials per initial size.
    #[arg(long)]
    trials: Option<usize>,
    /// Initial sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Fisher method at the true parameter.
    #[arg(long, value_enum)]
    true_row: Option<Method>,
    /// Only compute the true-parameter row.
    #[arg(long)]
    skip_trials: bool,
}

#[derive(Debug, Args)]
struct IcArgs {
    #[command(flatten)]
    common: Common,
    /// Initial data (CSV).
    #[arg(long)]
    init: PathBuf,
    /// Additional data (CSV).
    #[arg(long)]
    add: PathBuf,
    /// Scenario, e.g. same-unlabeled, positive-labeled(1), class-prior-change(labeled).
    #[arg(long, value_parser = parse_scenario)]
    scenario: ScenarioKind,
    /// Size ratio; defaults to |add| / |init|.
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Debug, Args)]
struct RankArgs {
    #[command(flatten)]
    common: Common,
    /// Initial data (CSV).
    #[arg(long)]
    init: PathBuf,
    /// Candidate as SCENARIO=PATH or SCENARIO=PATH@ALPHA; repeatable.
    #[arg(long = "candidate", required = true, value_parser = parse_candidate)]
    candidates: Vec<CandidateFile>,
}

#[derive(Debug, Args)]
struct FisherDumpArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = parse_scenario)]
    scenario: ScenarioKind,
    #[arg(long, value_enum, default_value = "quadrature")]
    method: Method,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Quadrature,
    MonteCarlo,
}

fn parse_scenario(s: &str) -> Result<ScenarioKind, String> {
    s.parse().map_err(|e: clusterinfo::Error| e.to_string())
}

fn parse_candidate(s: &str) -> Result<CandidateFile, String> {
    let (scenario, rest) = s
        .split_once('=')
        .ok_or_else(|| format!("expected SCENARIO=PATH[@ALPHA], got `{s}`"))?;
    let (path, alpha) = match rest.rsplit_once('@') {
        Some((p, a)) => (p, Some(a.parse::<f64>().map_err(|e| format!("bad alpha `{a}`: {e}"))?)),
        None => (rest, None),
    };
    Ok(CandidateFile {
        path: PathBuf::from(path),
        kind: parse_scenario(scenario)?,
        alpha,
    })
}

fn experiment_config(cli_config: Option<PathBuf>, common: &Common) -> Result<ExperimentConfig> {
    let path = config::resolve_path(cli_config);
    let mut c = config::load(path.as_deref())?;
    if let Some(seed) = common.seed {
        c.master_seed = seed;
    }
    if let Some(n) = common.nprime {
        c.n_prime = n;
        if let FisherMethod::MonteCarlo { n_prime } = &mut c.true_row_method {
            *n_prime = n;
        }
    }
    Ok(c)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Serialize)]
struct TrueRowFile<'a> {
    alpha: f64,
    method: FisherMethod,
    rows: &'a [experiment::TrueRowEntry],
}

#[derive(Serialize)]
struct TrialsFile<'a> {
    master_seed: u64,
    alpha: f64,
    n_prime: usize,
    results: &'a [experiment::TrialResult],
}

fn repro(args: ReproArgs, config_path: Option<PathBuf>, verbose: bool) -> Result<ExitCode> {
    let mut c = experiment_config(config_path, &args.common)?;
    if let Some(t) = args.trials {
        c.trials = t;
    }
    if let Some(n) = args.n {
        c.n_list = n;
    }
    match args.true_row {
        Some(Method::Quadrature) if !matches!(c.true_row_method, FisherMethod::Quadrature(_)) => {
            c.true_row_method = FisherMethod::Quadrature(QuadratureGrid::default())
        }
        Some(Method::MonteCarlo) => c.true_row_method = FisherMethod::MonteCarlo { n_prime: c.n_prime },
        _ => {}
    }
    c.validate()?;
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;

    let start = Instant::now();
    let rows = run_true_row(&c)?;
    write_json(
        &args.out.join("true_row.json"),
        &TrueRowFile {
            alpha: c.alpha,
            method: c.true_row_method,
            rows: &rows,
        },
    )?;
    if verbose {
        eprintln!("true row in {:.1?}", start.elapsed());
        for r in &rows {
            eprintln!("  {:<24} log IC {:.6}", r.label, r.report.log_ic);
        }
    }
    if args.skip_trials {
        return Ok(ExitCode::SUCCESS);
    }

    let start = Instant::now();
    let results = run_trials(&c)?;
    write_json(
        &args.out.join("trials.json"),
        &TrialsFile {
            master_seed: c.master_seed,
            alpha: c.alpha,
            n_prime: c.n_prime,
            results: &results,
        },
    )?;
    let summary_path = args.out.join("summary.csv");
    let file = fs::File::create(&summary_path).with_context(|| format!("cannot write {}", summary_path.display()))?;
    write_summary_csv(&summarize(&results), file)?;
    if verbose {
        eprintln!("{} trials in {:.1?}", results.len(), start.elapsed());
        for r in results.iter().filter(|r| r.flagged) {
            eprintln!("  flagged: n = {}, trial {}", r.n, r.trial);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn ic(args: IcArgs, config_path: Option<PathBuf>) -> Result<ExitCode> {
    let c = experiment_config(config_path, &args.common)?;
    let init = Dataset::read_csv_path(&args.init, DatasetKind::Initial, c.k())?;
    let add = Dataset::read_csv_path(&args.add, DatasetKind::Additional, c.k())?;
    let alpha = args.alpha.unwrap_or_else(|| default_alpha(&init, &add));
    let scenario = c.scenario(args.scenario, alpha)?;
    let method = FisherMethod::MonteCarlo { n_prime: c.n_prime };
    let stream = Stream::new(c.master_seed).named("ic");
    let (_, report) = experiment::estimate_ic(&scenario, &init, &add, &c, method, stream)?;
    print_json(&report)?;
    Ok(if report.verdict == Verdict::Degrading {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn rank(args: RankArgs, config_path: Option<PathBuf>) -> Result<ExitCode> {
    let c = experiment_config(config_path, &args.common)?;
    let ranked = rank_additional_files(&args.init, &args.candidates, &c)?;
    print_json(&ranked)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct FisherDump<'a> {
    scenario: String,
    layout: (usize, usize, usize),
    triple: &'a FisherTriple,
}

fn fisher_dump(args: FisherDumpArgs, config_path: Option<PathBuf>) -> Result<ExitCode> {
    let c = experiment_config(config_path, &args.common)?;
    let scenario = c.scenario(args.scenario, c.alpha)?;
    let u = scenario.true_parameter(&c.true_mixture()?, &c.extras)?;
    let method = match args.method {
        Method::Quadrature => match c.true_row_method {
            FisherMethod::Quadrature(g) => FisherMethod::Quadrature(g),
            FisherMethod::MonteCarlo { .. } => FisherMethod::Quadrature(QuadratureGrid::default()),
        },
        Method::MonteCarlo => FisherMethod::MonteCarlo { n_prime: c.n_prime },
    };
    let triple = FisherTriple::compute(&scenario, &u, method, Stream::new(c.master_seed).named("fisher-dump"))?;
    let l = &scenario.layout;
    print_json(&FisherDump {
        scenario: args.scenario.to_string(),
        layout: (l.d1, l.d2, l.d3),
        triple: &triple,
    })?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| anyhow!("cannot configure thread pool: {e}"))?;
    }
    match cli.command {
        Command::Repro(a) => repro(a, cli.config, cli.verbose),
        Command::Ic(a) => ic(a, cli.config),
        Command::Rank(a) => rank(a, cli.config),
        Command::FisherDump(a) => fisher_dump(a, cli.config),
    }
}

fn exit_code(err: &anyhow::Error) -> ExitCode {
    let numerical = err
        .chain()
        .filter_map(|e| e.downcast_ref::<clusterinfo::Error>())
        .any(clusterinfo::Error::is_numerical);
    ExitCode::from(if numerical { 3 } else { 1 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

//! `ara`: generate networks, run episodes and the factorial experiment, and
//! analyse its results.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ara_core::adversary::{AdversaryConfig, AdversaryKind};
use ara_core::engine::{run_episode, BeliefMode, EpisodeConfig};
use ara_core::experiment::{
    anova, read_rows_file, run_factorial, summarize_interactions, write_rows_file, FactorialSpec,
};
use ara_core::network::{build_grid_moments, sample_truth, GridGenSpec, Network};
use ara_core::policy::{PolicyConfig, PolicyKind};
use ara_core::seed::{derive, Stream};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::{ConfigError, RunConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(
    name = "ara",
    version,
    about = "Bayesian graph traversal against a payoff-cutting opponent"
)]
#[command(arg_required_else_help = true)]
struct Cli {
    /// JSON run configuration; flags override its values
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one ground-truth grid network as JSON
    GenNetwork(GenArgs),
    /// Run one episode and optionally write its step trace
    Simulate(SimArgs),
    /// Run the full factorial experiment to CSV
    Experiment(ExperimentArgs),
    /// Four-way ANOVA of an experiment CSV
    Anova(AnovaArgs),
    /// Interaction cell means and runtime medians of an experiment CSV
    Summarize(SummarizeArgs),
}

/// Model constants shared by the subcommands that run episodes.
#[derive(Args, Default)]
struct ModelArgs {
    /// Grid size as WIDTHxHEIGHT [default: 6x6]
    #[arg(long)]
    grid: Option<String>,
    /// Correlation base of the grid covariance [default: 0.5]
    #[arg(long)]
    rho: Option<f64>,
    /// Fraction of payoff removed by a cut [default: 0.3]
    #[arg(long)]
    delta: Option<f64>,
    /// Ascending tau cut points for depths 4|3|2|1 [default: 0.05,0.10,0.20]
    #[arg(long, value_delimiter = ',', num_args = 3)]
    cutpoints: Option<Vec<f64>>,
    /// Look-ahead of the H-path policy [default: 3]
    #[arg(long)]
    horizon: Option<usize>,
    /// Monte Carlo draws per neighbour assessment [default: 10000]
    #[arg(long)]
    mc_samples: Option<usize>,
    /// Mixture components lighter than this are dropped [default: 0.001]
    #[arg(long)]
    prune_epsilon: Option<f64>,
    /// Cap on candidate paths per decision [default: 512]
    #[arg(long)]
    max_paths: Option<usize>,
    /// Episode step limit [default: 200]
    #[arg(long)]
    max_steps: Option<usize>,
}

#[derive(Args)]
struct GenArgs {
    /// Base seed [default: 42]
    #[arg(long)]
    seed: Option<u64>,
    /// Grid size as WIDTHxHEIGHT [default: 6x6]
    #[arg(long)]
    grid: Option<String>,
    /// Correlation base of the grid covariance [default: 0.5]
    #[arg(long)]
    rho: Option<f64>,
    /// Output file; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    /// myopic | hpath | uncertainty
    #[arg(long, default_value = "uncertainty")]
    policy: String,
    /// none | type0 | type1
    #[arg(long, default_value = "none")]
    adversary: String,
    /// pessimistic | accurate | optimistic
    #[arg(long, default_value = "accurate")]
    belief: String,
    /// Account for the opponent (q estimates, mixture split, Beta update)
    #[arg(long)]
    account: bool,
    /// Base seed for the network and the traveler's Monte Carlo [default: 42]
    #[arg(long)]
    seed: Option<u64>,
    /// Network JSON from gen-network instead of sampling one
    #[arg(long)]
    network: Option<PathBuf>,
    /// Write the per-step JSON trace here
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Networks per cell [default: 100]
    #[arg(long)]
    replicates: Option<usize>,
    /// Base seed [default: 42]
    #[arg(long)]
    seed: Option<u64>,
    /// Results CSV
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads [default: all cores]
    #[arg(long, env = "ARA_THREADS")]
    threads: Option<usize>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct AnovaArgs {
    /// Experiment CSV
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// ANOVA CSV; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Experiment CSV
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Summary CSV; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<ara_core::Error> for Failure {
    fn from(e: ara_core::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("ara: invalid configuration: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("ara: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::GenNetwork(a) => {
            override_opt(&mut cfg.seed, a.seed);
            override_opt(&mut cfg.grid, a.grid);
            override_opt(&mut cfg.rho, a.rho);
            cfg.out = a.out.or(cfg.out);
            cfg.validate()?;
            let net = network_for_seed(&cfg)?;
            emit(cfg.out.as_deref(), net.to_json()?.as_bytes())
        }
        Command::Simulate(a) => simulate(cfg, a),
        Command::Experiment(a) => {
            override_opt(&mut cfg.replicates, a.replicates);
            override_opt(&mut cfg.seed, a.seed);
            cfg.threads = a.threads.or(cfg.threads);
            cfg.out = a.out.or(cfg.out);
            apply_model(&mut cfg, a.model);
            cfg.validate()?;
            let out = cfg
                .out
                .clone()
                .ok_or_else(|| Failure::Config("out: an output CSV path is required".into()))?;
            let spec = factorial_spec(&cfg)?;
            let result = run_factorial(&spec)?;
            write_rows_file(&result.rows, &out)?;
            eprintln!(
                "wrote {} rows to {} ({} failed episodes)",
                result.rows.len(),
                out.display(),
                result.errors.len()
            );
            for e in &result.errors {
                eprintln!("  {e}");
            }
            Ok(())
        }
        Command::Anova(a) => {
            let rows = read_rows_file(&a.input)?;
            let table = anova(&rows)?;
            let mut buf = Vec::new();
            table.write_csv(&mut buf)?;
            emit(a.out.as_deref(), &buf)
        }
        Command::Summarize(a) => {
            let rows = read_rows_file(&a.input)?;
            let summary = summarize_interactions(&rows);
            let mut buf = Vec::new();
            summary.write_csv(&mut buf)?;
            if summary.failed_rows > 0 {
                eprintln!("skipped {} failed rows", summary.failed_rows);
            }
            emit(a.out.as_deref(), &buf)
        }
    }
}

fn override_opt<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn apply_model(cfg: &mut RunConfig, m: ModelArgs) {
    override_opt(&mut cfg.grid, m.grid);
    override_opt(&mut cfg.rho, m.rho);
    override_opt(&mut cfg.delta, m.delta);
    if let Some(c) = m.cutpoints {
        cfg.cutpoints = [c[0], c[1], c[2]];
    }
    override_opt(&mut cfg.horizon, m.horizon);
    override_opt(&mut cfg.mc_samples, m.mc_samples);
    override_opt(&mut cfg.prune_epsilon, m.prune_epsilon);
    override_opt(&mut cfg.max_paths, m.max_paths);
    override_opt(&mut cfg.max_steps, m.max_steps);
}

fn network_for_seed(cfg: &RunConfig) -> Result<Network, Failure> {
    let (width, height) = cfg.grid_size()?;
    let spec = GridGenSpec {
        width,
        height,
        rho: cfg.rho,
        seed: derive(cfg.seed, Stream::Network, 0),
    };
    Ok(sample_truth(&build_grid_moments(&spec)?, spec.seed))
}

fn factorial_spec(cfg: &RunConfig) -> Result<FactorialSpec, Failure> {
    let (width, height) = cfg.grid_size()?;
    Ok(FactorialSpec {
        replicates: cfg.replicates,
        base_seed: cfg.seed,
        width,
        height,
        rho: cfg.rho,
        delta: cfg.delta,
        horizon: cfg.horizon,
        cutpoints: cfg.cutpoints,
        max_paths: cfg.max_paths,
        mc_samples: cfg.mc_samples,
        prune_epsilon: cfg.prune_epsilon,
        max_steps: cfg.max_steps,
        threads: cfg.threads,
        ..FactorialSpec::default()
    })
}

fn parse_level<T>(
    field: &str,
    value: &str,
    parse: fn(&str) -> Option<T>,
    allowed: &str,
) -> Result<T, Failure> {
    parse(value)
        .ok_or_else(|| Failure::Config(format!("{field} = {value:?}: must be one of {allowed}")))
}

#[derive(Serialize)]
struct SimulationReport<'a> {
    policy: &'a str,
    adversary: &'a str,
    belief: &'a str,
    account: bool,
    net_reward: f64,
    steps: usize,
    truncated: bool,
    path: &'a [ara_core::network::NodeId],
    final_alpha: f64,
    final_beta: f64,
    component_count_max: usize,
    runtime_ms: f64,
}

#[derive(Serialize)]
struct TraceDocument<'a> {
    net_reward: f64,
    trace: &'a [ara_core::engine::StepRecord],
}

fn simulate(mut cfg: RunConfig, a: SimArgs) -> Result<(), Failure> {
    override_opt(&mut cfg.seed, a.seed);
    cfg.trace_out = a.trace_out.or(cfg.trace_out);
    apply_model(&mut cfg, a.model);
    cfg.validate()?;
    let policy = parse_level(
        "policy",
        &a.policy,
        PolicyKind::parse,
        "myopic, hpath, uncertainty",
    )?;
    let adversary = parse_level(
        "adversary",
        &a.adversary,
        AdversaryKind::parse,
        "none, type0, type1",
    )?;
    let belief = parse_level(
        "belief",
        &a.belief,
        BeliefMode::parse,
        "pessimistic, accurate, optimistic",
    )?;

    let net = match &a.network {
        Some(path) => Network::read_json(path)?,
        None => network_for_seed(&cfg)?,
    };
    let mut ep = EpisodeConfig::new(
        PolicyConfig {
            kind: policy,
            horizon: cfg.horizon,
            cutpoints: cfg.cutpoints,
            max_paths: cfg.max_paths,
        },
        AdversaryConfig {
            kind: adversary,
            delta: cfg.delta,
        },
        belief,
        a.account,
    );
    ep.traveler_seed = derive(cfg.seed, Stream::Traveler, 0);
    ep.mc_samples = cfg.mc_samples;
    ep.prune_epsilon = cfg.prune_epsilon;
    ep.max_steps = cfg.max_steps;
    ep.rho = cfg.rho;
    let result = run_episode(&ep, &net)?;

    if let Some(path) = &cfg.trace_out {
        let doc = TraceDocument {
            net_reward: result.net_reward,
            trace: &result.trace,
        };
        let text =
            serde_json::to_string_pretty(&doc).map_err(|e| Failure::Runtime(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
    }
    let report = SimulationReport {
        policy: policy.label(),
        adversary: adversary.label(),
        belief: belief.label(),
        account: a.account,
        net_reward: result.net_reward,
        steps: result.steps,
        truncated: result.truncated,
        path: &result.path,
        final_alpha: result.final_alpha,
        final_beta: result.final_beta,
        component_count_max: result.component_count_max,
        runtime_ms: result.runtime_ms(),
    };
    let text =
        serde_json::to_string_pretty(&report).map_err(|e| Failure::Runtime(e.to_string()))?;
    emit(None, (text + "\n").as_bytes())
}

fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

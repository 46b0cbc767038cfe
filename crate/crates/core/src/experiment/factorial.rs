//! The crossed policy x belief x adversary x strategy experiment.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{AdversaryConfig, AdversaryKind, DEFAULT_DELTA};
use crate::belief::{DEFAULT_MC_SAMPLES, DEFAULT_PRUNE_EPSILON};
use crate::engine::{
    build_prior, run_episode_with_prior, BeliefMode, EpisodeConfig, DEFAULT_MAX_STEPS,
};
use crate::network::{build_grid_moments, sample_truth, GridGenSpec, Network};
use crate::policy::{
    PolicyConfig, PolicyKind, DEFAULT_CUTPOINTS, DEFAULT_HORIZON, DEFAULT_MAX_PATHS,
};
use crate::seed::{derive, Stream};
use crate::{Error, Result};

pub const CSV_HEADER: [&str; 9] = [
    "replicate",
    "policy",
    "belief",
    "adversary",
    "strategy",
    "net_reward",
    "steps",
    "runtime_ms",
    "truncated",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    Account,
    Ignore,
}

impl Strategy {
    pub const ALL: [Strategy; 2] = [Strategy::Account, Strategy::Ignore];

    pub fn label(self) -> &'static str {
        match self {
            Strategy::Account => "account",
            Strategy::Ignore => "ignore",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.label().eq_ignore_ascii_case(s))
    }

    pub fn accounts(self) -> bool {
        self == Strategy::Account
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorialSpec {
    pub replicates: usize,
    pub base_seed: u64,
    pub policies: Vec<PolicyKind>,
    pub beliefs: Vec<BeliefMode>,
    pub adversaries: Vec<AdversaryKind>,
    pub strategies: Vec<Strategy>,
    pub width: usize,
    pub height: usize,
    pub rho: f64,
    pub delta: f64,
    pub horizon: usize,
    pub cutpoints: [f64; 3],
    pub max_paths: usize,
    pub mc_samples: usize,
    pub prune_epsilon: f64,
    pub max_steps: usize,
    /// Worker threads; `None` lets rayon decide.
    pub threads: Option<usize>,
}

impl Default for FactorialSpec {
    fn default() -> Self {
        Self {
            replicates: 100,
            base_seed: 42,
            policies: PolicyKind::ALL.to_vec(),
            beliefs: BeliefMode::ALL.to_vec(),
            adversaries: AdversaryKind::ALL.to_vec(),
            strategies: Strategy::ALL.to_vec(),
            width: 6,
            height: 6,
            rho: 0.5,
            delta: DEFAULT_DELTA,
            horizon: DEFAULT_HORIZON,
            cutpoints: DEFAULT_CUTPOINTS,
            max_paths: DEFAULT_MAX_PATHS,
            mc_samples: DEFAULT_MC_SAMPLES,
            prune_epsilon: DEFAULT_PRUNE_EPSILON,
            max_steps: DEFAULT_MAX_STEPS,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub policy: PolicyKind,
    pub belief: BeliefMode,
    pub adversary: AdversaryKind,
    pub strategy: Strategy,
}

impl FactorialSpec {
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &policy in &self.policies {
            for &belief in &self.beliefs {
                for &adversary in &self.adversaries {
                    for &strategy in &self.strategies {
                        out.push(Cell {
                            policy,
                            belief,
                            adversary,
                            strategy,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn grid(&self, replicate: usize) -> GridGenSpec {
        GridGenSpec {
            width: self.width,
            height: self.height,
            rho: self.rho,
            seed: derive(self.base_seed, Stream::Network, replicate as u64),
        }
    }

    /// Traveler stream for `replicate`, shared by every cell.
    pub fn traveler_seed(&self, replicate: usize) -> u64 {
        derive(self.base_seed, Stream::Traveler, replicate as u64)
    }

    pub fn episode_config(&self, cell: Cell, replicate: usize) -> EpisodeConfig {
        let policy = PolicyConfig {
            kind: cell.policy,
            horizon: self.horizon,
            cutpoints: self.cutpoints,
            max_paths: self.max_paths,
        };
        let mut cfg = EpisodeConfig::new(
            policy,
            AdversaryConfig {
                kind: cell.adversary,
                delta: self.delta,
            },
            cell.belief,
            cell.strategy.accounts(),
        );
        cfg.traveler_seed = self.traveler_seed(replicate);
        cfg.mc_samples = self.mc_samples;
        cfg.prune_epsilon = self.prune_epsilon;
        cfg.max_steps = self.max_steps;
        cfg.rho = self.rho;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::invalid("replicates must be at least 1"));
        }
        if self.policies.is_empty()
            || self.beliefs.is_empty()
            || self.adversaries.is_empty()
            || self.strategies.is_empty()
        {
            return Err(Error::invalid("every factor needs at least one level"));
        }
        if self.threads == Some(0) {
            return Err(Error::invalid("threads must be at least 1"));
        }
        self.episode_config(self.cells()[0], 0).validate()
    }
}

/// One CSV row. An episode that failed carries a NaN reward.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub replicate: usize,
    pub policy: PolicyKind,
    pub belief: BeliefMode,
    pub adversary: AdversaryKind,
    pub strategy: Strategy,
    pub net_reward: f64,
    pub steps: usize,
    pub runtime_ms: f64,
    pub truncated: bool,
}

impl ResultRow {
    pub fn cell(&self) -> Cell {
        Cell {
            policy: self.policy,
            belief: self.belief,
            adversary: self.adversary,
            strategy: self.strategy,
        }
    }

    pub fn failed(&self) -> bool {
        self.net_reward.is_nan()
    }
}

#[derive(Debug, Clone)]
pub struct FactorialOutcome {
    pub rows: Vec<ResultRow>,
    pub errors: Vec<String>,
}

/// The replicate's network, generated once and shared by every cell.
pub fn replicate_network(spec: &FactorialSpec, replicate: usize) -> Result<Network> {
    let grid = spec.grid(replicate);
    Ok(sample_truth(&build_grid_moments(&grid)?, grid.seed))
}

/// Runs every (replicate, cell) pair. Rows come back sorted by replicate,
/// then cell, whatever the scheduling.
pub fn run_factorial(spec: &FactorialSpec) -> Result<FactorialOutcome> {
    spec.validate()?;
    let moments = build_grid_moments(&spec.grid(0))?;
    let priors: Vec<(BeliefMode, crate::niw::NiwParams)> = spec
        .beliefs
        .iter()
        .map(|&b| build_prior(&moments, b).map(|p| (b, p)))
        .collect::<Result<_>>()?;
    let networks: Vec<Network> = (0..spec.replicates)
        .map(|r| sample_truth(&moments, spec.grid(r).seed))
        .collect();
    let cells = spec.cells();
    let jobs: Vec<(usize, Cell)> = (0..spec.replicates)
        .flat_map(|r| cells.iter().map(move |&c| (r, c)))
        .collect();

    let work = || {
        jobs.par_iter()
            .map(|&(r, cell)| {
                let cfg = spec.episode_config(cell, r);
                let prior = &priors
                    .iter()
                    .find(|(b, _)| *b == cell.belief)
                    .expect("prior per belief")
                    .1;
                let outcome = run_episode_with_prior(&cfg, &networks[r], prior);
                let base = ResultRow {
                    replicate: r,
                    policy: cell.policy,
                    belief: cell.belief,
                    adversary: cell.adversary,
                    strategy: cell.strategy,
                    net_reward: f64::NAN,
                    steps: 0,
                    runtime_ms: 0.0,
                    truncated: false,
                };
                match outcome {
                    Ok(res) => (
                        ResultRow {
                            net_reward: res.net_reward,
                            steps: res.steps,
                            runtime_ms: res.runtime_ms(),
                            truncated: res.truncated,
                            ..base
                        },
                        None,
                    ),
                    Err(e) => (base, Some(format!("replicate {r} {cell:?}: {e}"))),
                }
            })
            .collect::<Vec<_>>()
    };
    let results = match spec.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let mut rows = Vec::with_capacity(results.len());
    let mut errors = Vec::new();
    for (row, err) in results {
        rows.push(row);
        errors.extend(err);
    }
    Ok(FactorialOutcome { rows, errors })
}

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_rows<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.replicate.to_string(),
            r.policy.label().to_string(),
            r.belief.label().to_string(),
            r.adversary.label().to_string(),
            r.strategy.label().to_string(),
            float(r.net_reward),
            r.steps.to_string(),
            float(r.runtime_ms),
            r.truncated.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rows_file(rows: &[ResultRow], path: &Path) -> Result<()> {
    write_rows(rows, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::invalid(format!(
            "unexpected CSV header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad =
            |field: &str| Error::invalid(format!("line {line}: bad {field} {:?}", rec.get(0)));
        let field = |j: usize| rec.get(j).unwrap_or("");
        rows.push(ResultRow {
            replicate: field(0).parse().map_err(|_| bad("replicate"))?,
            policy: PolicyKind::parse(field(1)).ok_or_else(|| bad("policy"))?,
            belief: BeliefMode::parse(field(2)).ok_or_else(|| bad("belief"))?,
            adversary: AdversaryKind::parse(field(3)).ok_or_else(|| bad("adversary"))?,
            strategy: Strategy::parse(field(4)).ok_or_else(|| bad("strategy"))?,
            net_reward: field(5).parse().map_err(|_| bad("net_reward"))?,
            steps: field(6).parse().map_err(|_| bad("steps"))?,
            runtime_ms: field(7).parse().map_err(|_| bad("runtime_ms"))?,
            truncated: field(8).parse().map_err(|_| bad("truncated"))?,
        });
    }
    Ok(rows)
}

pub fn read_rows_file(path: &Path) -> Result<Vec<ResultRow>> {
    read_rows(std::io::BufReader::new(std::fs::File::open(path)?))
}

//! The episode loop and the open-loop baseline.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{choose_reduction, AdversaryConfig};
use crate::belief::{
    assess_neighbors, incorporate_observation, Candidate, MixtureBelief, NeighborAssessment,
    Observation, DEFAULT_MC_SAMPLES, DEFAULT_PRUNE_EPSILON,
};
use crate::network::{moments_for_graph, EdgeId, Graph, GridMoments, Network, NodeId};
use crate::niw::NiwParams;
use crate::policy::{compute_tau, decide, CutDiscount, Knowledge, PolicyConfig};
use crate::{Error, Result};

pub const DEFAULT_MAX_STEPS: usize = 200;
pub const DEFAULT_RHO: f64 = 0.5;
/// Prior degrees of freedom exceed the dimension by this much.
pub const PRIOR_DOF_OFFSET: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BeliefMode {
    Pessimistic,
    Accurate,
    Optimistic,
}

impl BeliefMode {
    pub const ALL: [BeliefMode; 3] = [
        BeliefMode::Pessimistic,
        BeliefMode::Accurate,
        BeliefMode::Optimistic,
    ];

    /// Factor applied to every prior mean.
    pub fn mean_scale(self) -> f64 {
        match self {
            BeliefMode::Pessimistic => 0.9,
            BeliefMode::Accurate => 1.0,
            BeliefMode::Optimistic => 1.1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            BeliefMode::Pessimistic => "pessimistic",
            BeliefMode::Accurate => "accurate",
            BeliefMode::Optimistic => "optimistic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.label().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub policy: PolicyConfig,
    pub adversary: AdversaryConfig,
    pub belief_mode: BeliefMode,
    pub account_for_adversary: bool,
    /// Seeds the traveler's Monte Carlo stream.
    pub traveler_seed: u64,
    pub mc_samples: usize,
    pub prune_epsilon: f64,
    pub max_steps: usize,
    /// Correlation of the prior's covariance recipe.
    pub rho: f64,
    pub prior_alpha: f64,
    pub prior_beta: f64,
}

impl EpisodeConfig {
    pub fn new(
        policy: PolicyConfig,
        adversary: AdversaryConfig,
        belief_mode: BeliefMode,
        account: bool,
    ) -> Self {
        Self {
            policy,
            adversary,
            belief_mode,
            account_for_adversary: account,
            traveler_seed: 0,
            mc_samples: DEFAULT_MC_SAMPLES,
            prune_epsilon: DEFAULT_PRUNE_EPSILON,
            max_steps: DEFAULT_MAX_STEPS,
            rho: DEFAULT_RHO,
            prior_alpha: 1.0,
            prior_beta: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        if !(0.0..1.0).contains(&self.adversary.delta) {
            return Err(Error::invalid(format!(
                "delta = {} must lie in [0, 1)",
                self.adversary.delta
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::invalid("max_steps must be at least 1"));
        }
        Ok(())
    }
}

/// One move of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub node: NodeId,
    pub edge: EdgeId,
    pub cost: f64,
    /// Payoff as collected, after any cut; zero on a revisit.
    pub payoff: f64,
    pub revisit: bool,
    pub was_reduced: bool,
    /// Node the opponent cut before this move, if any.
    pub reduction: Option<NodeId>,
    pub tau: f64,
    pub depth: usize,
    pub gamma: Option<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub component_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub net_reward: f64,
    /// Every node occupied, starting node first.
    pub path: Vec<NodeId>,
    pub steps: usize,
    pub truncated: bool,
    pub component_count_max: usize,
    pub final_alpha: f64,
    pub final_beta: f64,
    pub degenerate_posteriors: usize,
    pub trace: Vec<StepRecord>,
    #[serde(skip)]
    pub timing: Timing,
}

/// Wall-clock measurements; excluded from equality.
#[derive(Debug, Clone, Default)]
pub struct Timing {
    pub total: Duration,
    /// Time spent in each policy decision. Steps along a committed
    /// transit take no decision and have no entry.
    pub decide: Vec<Duration>,
}

impl PartialEq for Timing {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl EpisodeResult {
    pub fn runtime_ms(&self) -> f64 {
        self.timing.total.as_secs_f64() * 1e3
    }

    /// Net reward recomputed from the trace.
    pub fn trace_reward(&self) -> f64 {
        self.trace.iter().map(|s| s.payoff - s.cost).sum()
    }
}

/// Starting node: lattice coordinate (1, 1) when present, else node 0.
pub fn start_node(graph: &Graph) -> NodeId {
    graph.node_at(1, 1).unwrap_or(NodeId(0))
}

/// NIW prior with means scaled by `mode`, `nu = p + 4` and
/// `Psi = Sigma * (nu - p - 1)`.
pub fn build_prior(moments: &GridMoments, mode: BeliefMode) -> Result<NiwParams> {
    let p = moments.dim() as f64;
    let nu = p + PRIOR_DOF_OFFSET;
    NiwParams::new(
        &moments.mean * mode.mean_scale(),
        &moments.covariance * (nu - p - 1.0),
        nu,
        moments.coords.clone(),
    )
}

pub fn initial_belief(cfg: &EpisodeConfig, prior: NiwParams) -> Result<MixtureBelief> {
    MixtureBelief::new(prior, cfg.prior_alpha, cfg.prior_beta, cfg.prune_epsilon)
}

/// Runs one adaptive episode on a fresh copy of `net`.
pub fn run_episode(cfg: &EpisodeConfig, net: &Network) -> Result<EpisodeResult> {
    let moments = moments_for_graph(net.shared_graph(), cfg.rho)?;
    let prior = build_prior(&moments, cfg.belief_mode)?;
    run_episode_with_prior(cfg, net, &prior)
}

/// [`run_episode`] with a prebuilt prior, which must match `cfg.belief_mode`.
pub fn run_episode_with_prior(
    cfg: &EpisodeConfig,
    net: &Network,
    prior: &NiwParams,
) -> Result<EpisodeResult> {
    cfg.validate()?;
    let clock = Instant::now();
    let mut net = net.clone();
    net.reset_flags();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.traveler_seed);
    let mut belief = initial_belief(cfg, prior.clone())?;
    let delta = cfg.adversary.delta;

    let mut current = start_node(net.graph());
    net.mark_visited(current);
    let mut known_costs = vec![None; net.graph().edge_count()];
    let mut path = vec![current];
    let mut trace = Vec::new();
    let mut decide_times = Vec::new();
    let mut tau: Option<f64> = None;
    let mut reward = 0.0;
    let mut component_count_max = belief.component_count();
    let mut degenerate = 0;
    let mut truncated = false;
    let mut transit: VecDeque<(NodeId, EdgeId)> = VecDeque::new();
    let mut depth = 0;

    loop {
        if net.visited_flags().iter().all(|&v| v) {
            break;
        }
        if trace.len() >= cfg.max_steps {
            truncated = true;
            break;
        }
        let reduction = choose_reduction(&cfg.adversary, &net, current);
        if let Some(n) = reduction {
            net.apply_reduction(n, delta)?;
        }
        let candidates: Vec<Candidate> = net
            .graph()
            .neighbors(current)
            .iter()
            .filter(|(n, _)| !net.is_visited(*n))
            .map(|&(node, edge)| Candidate { node, edge })
            .collect();

        let committed = transit.pop_front();
        let lands_fresh = committed.is_none_or(|(n, _)| !net.is_visited(n));
        let started = Instant::now();
        let assessments: Vec<NeighborAssessment> =
            if cfg.account_for_adversary && lands_fresh && !candidates.is_empty() {
                assess_neighbors(&belief, &candidates, delta, cfg.mc_samples, &mut rng)?
            } else {
                Vec::new()
            };
        let (node, edge) = match committed {
            Some(step) => step,
            None => {
                let d = cfg.policy.depth(tau);
                let discount = cfg.account_for_adversary.then(|| CutDiscount {
                    assessments: &assessments,
                    expected_pi: belief.expected_pi(),
                    delta,
                });
                let know = Knowledge::new(net.graph(), net.visited_flags(), &known_costs);
                let decision = decide(
                    &know,
                    current,
                    &belief,
                    d,
                    cfg.policy.max_paths,
                    discount.as_ref(),
                )?;
                let Some(decision) = decision else {
                    break;
                };
                decide_times.push(started.elapsed());
                depth = d;
                // A move onto a visited node commits to the path through to
                // its first unvisited node.
                if net.is_visited(decision.next_node()) {
                    let steps = decision.path.nodes.iter().zip(&decision.path.edges);
                    for (&n, &e) in steps.skip(1) {
                        transit.push_back((n, e));
                        if !net.is_visited(n) {
                            break;
                        }
                    }
                }
                (decision.next_node(), decision.next_edge())
            }
        };
        let revisit = net.is_visited(node);
        let cost = net.cost(edge);
        let payoff = if revisit { 0.0 } else { net.payoff(node) };
        net.mark_visited(node);
        known_costs[edge.0] = Some(cost);
        reward += payoff - cost;

        let before = belief.means();
        let obs = if revisit {
            Observation::revisit(node, edge, cost)
        } else {
            Observation::new(node, payoff, edge, cost, delta)
        };
        let assessment = assessments.iter().find(|a| a.node == node);
        let inc = incorporate_observation(&belief, &obs, assessment, cfg.account_for_adversary)?;
        degenerate += usize::from(inc.degenerate);
        belief = inc.belief;
        let t = compute_tau(&before, &belief.means());
        tau = Some(t);
        component_count_max = component_count_max.max(belief.component_count());

        trace.push(StepRecord {
            step: trace.len() + 1,
            node,
            edge,
            cost,
            payoff,
            revisit,
            was_reduced: net.is_reduced(node),
            reduction,
            tau: t,
            depth,
            gamma: inc.gamma,
            alpha: belief.alpha(),
            beta: belief.beta(),
            component_count: belief.component_count(),
        });
        path.push(node);
        current = node;
    }

    Ok(EpisodeResult {
        net_reward: reward,
        steps: trace.len(),
        path,
        truncated,
        component_count_max,
        final_alpha: belief.alpha(),
        final_beta: belief.beta(),
        degenerate_posteriors: degenerate,
        trace,
        timing: Timing {
            total: clock.elapsed(),
            decide: decide_times,
        },
    })
}

/// Walks `path` (starting node first) without adapting. The opponent still
/// acts before every move.
pub fn run_fixed_path(
    cfg: &EpisodeConfig,
    net: &Network,
    path: &[NodeId],
) -> Result<EpisodeResult> {
    cfg.validate()?;
    let clock = Instant::now();
    let mut net = net.clone();
    net.reset_flags();
    let empty = || EpisodeResult {
        net_reward: 0.0,
        path: path.to_vec(),
        steps: 0,
        truncated: false,
        component_count_max: 0,
        final_alpha: cfg.prior_alpha,
        final_beta: cfg.prior_beta,
        degenerate_posteriors: 0,
        trace: Vec::new(),
        timing: Timing::default(),
    };
    let Some((&first, rest)) = path.split_first() else {
        return Ok(empty());
    };
    if first != start_node(net.graph()) {
        return Err(Error::invalid(format!(
            "fixed path starts at node {} instead of the start node",
            first.0
        )));
    }
    net.mark_visited(first);
    let mut current = first;
    let mut trace = Vec::with_capacity(rest.len());
    let mut reward = 0.0;
    for &node in rest {
        let edge = net.graph().edge_between(current, node).ok_or_else(|| {
            Error::invalid(format!(
                "nodes {} and {} are not adjacent",
                current.0, node.0
            ))
        })?;
        let reduction = choose_reduction(&cfg.adversary, &net, current);
        if let Some(n) = reduction {
            net.apply_reduction(n, cfg.adversary.delta)?;
        }
        let cost = net.cost(edge);
        let payoff_collected_before = net.is_visited(node);
        let payoff = if payoff_collected_before {
            0.0
        } else {
            net.payoff(node)
        };
        net.mark_visited(node);
        reward += payoff - cost;
        trace.push(StepRecord {
            step: trace.len() + 1,
            node,
            edge,
            cost,
            payoff,
            revisit: payoff_collected_before,
            was_reduced: net.is_reduced(node),
            reduction,
            tau: 0.0,
            depth: 0,
            gamma: None,
            alpha: cfg.prior_alpha,
            beta: cfg.prior_beta,
            component_count: 0,
        });
        current = node;
    }
    Ok(EpisodeResult {
        net_reward: reward,
        steps: trace.len(),
        trace,
        timing: Timing {
            total: clock.elapsed(),
            decide: Vec::new(),
        },
        ..empty()
    })
}

/// The path the policy would commit to at the outset: it plans on prior
/// means alone and never conditions on what it sees.
pub fn prior_mean_path(
    cfg: &EpisodeConfig,
    graph: &Graph,
    prior: &NiwParams,
) -> Result<Vec<NodeId>> {
    let belief = initial_belief(cfg, prior.clone())?;
    let mut visited = vec![false; graph.node_count()];
    let mut current = start_node(graph);
    visited[current.0] = true;
    let known_costs = vec![None; graph.edge_count()];
    let mut path = vec![current];
    let depth = cfg.policy.depth(None);
    while path.len() <= cfg.max_steps {
        let know = Knowledge::new(graph, &visited, &known_costs);
        let Some(d) = decide(&know, current, &belief, depth, cfg.policy.max_paths, None)? else {
            break;
        };
        current = d.next_node();
        visited[current.0] = true;
        path.push(current);
    }
    Ok(path)
}

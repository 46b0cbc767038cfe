//! The traveler's epistemic state.
//!
//! Costs and payoffs are believed to follow a mixture of NIW components; the
//! opponent is believed to be Type 0 with probability `pi ~ Beta(alpha, beta)`.
//! When an adversary is accounted for, every payoff observation splits each
//! component into a "was reduced" branch (conditioned on the rescaled payoff
//! `x / (1 - delta)`) and a "was not reduced" branch (conditioned on `x`).

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::network::{EdgeId, NodeId};
use crate::niw::{centered_t_draws, cholesky_jittered, Conditioner, Coord, IndexMap, NiwParams};
use crate::{Error, Result};

pub const DEFAULT_PRUNE_EPSILON: f64 = 1e-3;
pub const DEFAULT_MC_SAMPLES: usize = 10_000;
pub const MIN_MC_SAMPLES: usize = 1_000;
/// Densities below this are treated as underflow.
pub const DENSITY_FLOOR: f64 = 1e-300;
const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Component {
    pub weight: f64,
    pub params: NiwParams,
}

/// Weighted NIW components plus the Beta state over the opponent's type.
#[derive(Debug, Clone)]
pub struct MixtureBelief {
    components: Vec<Component>,
    alpha: f64,
    beta: f64,
    prune_epsilon: f64,
}

impl MixtureBelief {
    pub fn new(prior: NiwParams, alpha: f64, beta: f64, prune_epsilon: f64) -> Result<Self> {
        Self::from_components(
            vec![Component {
                weight: 1.0,
                params: prior,
            }],
            alpha,
            beta,
            prune_epsilon,
        )
    }

    pub fn from_components(
        components: Vec<Component>,
        alpha: f64,
        beta: f64,
        prune_epsilon: f64,
    ) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(Error::invalid(format!(
                "Beta parameters must be positive, got ({alpha}, {beta})"
            )));
        }
        if !(0.0..1.0).contains(&prune_epsilon) {
            return Err(Error::invalid(format!(
                "prune_epsilon = {prune_epsilon} must lie in [0, 1)"
            )));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if components.iter().any(|c| !(c.weight > 0.0)) || (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(Error::invalid(format!(
                "weights must be positive and sum to 1 (sum = {total})"
            )));
        }
        let coords = components[0].params.index().coords();
        if components
            .iter()
            .any(|c| c.params.index().coords() != coords)
        {
            return Err(Error::invalid(
                "mixture components cover different coordinates",
            ));
        }
        Ok(Self {
            components,
            alpha,
            beta,
            prune_epsilon,
        })
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn component_count(&self) -> usize {
        self.components.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn prune_epsilon(&self) -> f64 {
        self.prune_epsilon
    }

    /// Posterior mean probability that the opponent is Type 0.
    pub fn expected_pi(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn index(&self) -> &IndexMap {
        self.components[0].params.index()
    }

    pub fn dim(&self) -> usize {
        self.index().len()
    }

    pub fn contains(&self, c: Coord) -> bool {
        self.index().contains(c)
    }

    pub fn mean_of(&self, c: Coord) -> Option<f64> {
        let i = self.index().position(c)?;
        Some(
            self.components
                .iter()
                .map(|k| k.weight * k.params.mu()[i])
                .sum(),
        )
    }

    /// Mixture mean of every unobserved coordinate, in index order.
    pub fn mean_vector(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim());
        for k in &self.components {
            m.axpy(k.weight, k.params.mu(), 1.0);
        }
        m
    }

    pub fn means(&self) -> Vec<(Coord, f64)> {
        self.index()
            .coords()
            .iter()
            .copied()
            .zip(self.mean_vector().iter().copied())
            .collect()
    }
}

/// A neighbour the traveler might move to, and the edge leading there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub node: NodeId,
    pub edge: EdgeId,
}

/// Order statistics of one neighbour's net gain `payoff - cost`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborAssessment {
    pub node: NodeId,
    pub edge: EdgeId,
    pub delta_mean: f64,
    /// Probability this neighbour has the largest net gain (a Type 0 target).
    pub q1: f64,
    /// Probability this neighbour has the largest net gain once the best
    /// neighbour's payoff is cut (a Type 1 target).
    pub q2: f64,
    pub expected_payoff: f64,
    pub expected_cost: f64,
}

/// Monte Carlo estimate of `q1`, `q2` for each candidate.
///
/// Draws come from each component's joint multivariate-t over the candidates'
/// payoffs and costs. The `mc_samples` budget is stratified over components,
/// `ceil(w * mc_samples)` each, so the mixture estimate costs the same however
/// many components there are. Components sharing a scale reuse one set of
/// centered draws and only shift them by their own means. Candidates whose payoff has
/// already been observed contribute payoff 0. Output is sorted by node id, and
/// equal net gains are resolved toward the lower id.
pub fn assess_neighbors<R: Rng + ?Sized>(
    belief: &MixtureBelief,
    candidates: &[Candidate],
    delta: f64,
    mc_samples: usize,
    rng: &mut R,
) -> Result<Vec<NeighborAssessment>> {
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    if mc_samples < MIN_MC_SAMPLES {
        return Err(Error::invalid(format!(
            "mc_samples = {mc_samples} is below {MIN_MC_SAMPLES}"
        )));
    }
    let mut cands = candidates.to_vec();
    cands.sort_by_key(|c| c.node);
    let m = cands.len();

    // Sub-vector layout: every cost, then the payoffs that are still unknown.
    let index = belief.index();
    let mut sub = Vec::with_capacity(2 * m);
    let mut cost_slot = Vec::with_capacity(m);
    let mut payoff_slot = Vec::with_capacity(m);
    for c in &cands {
        let pos = index
            .position(Coord::Cost(c.edge))
            .ok_or(Error::UnknownCoordinate(Coord::Cost(c.edge)))?;
        cost_slot.push(sub.len());
        sub.push(pos);
    }
    for c in &cands {
        match index.position(Coord::Payoff(c.node)) {
            Some(pos) => {
                payoff_slot.push(Some(sub.len()));
                sub.push(pos);
            }
            None => payoff_slot.push(None),
        }
    }
    let d = sub.len();

    let mut q1 = vec![0.0; m];
    let mut q2 = vec![0.0; m];
    let mut used_weight = 0.0;
    let mut done = vec![false; belief.components.len()];
    let mut count1 = vec![0u32; m];
    let mut count2 = vec![0u32; m];
    let mut payoff = vec![0.0; m];
    let mut net = vec![0.0; m];

    for lead in 0..belief.components.len() {
        if done[lead] {
            continue;
        }
        let rep = &belief.components[lead].params;
        let group: Vec<usize> = (lead..belief.components.len())
            .filter(|&j| !done[j] && belief.components[j].params.shares_scale_with(rep))
            .collect();
        for &j in &group {
            done[j] = true;
        }
        let dof = rep.t_dof();
        if !(dof > 0.0) {
            continue;
        }
        let shape: DMatrix<f64> = rep.psi().select_rows(&sub).select_columns(&sub) / dof;
        let Ok(chol) = cholesky_jittered(&shape) else {
            continue;
        };
        let stratum = |j: usize| {
            ((belief.components[j].weight * mc_samples as f64).ceil() as usize).clamp(1, mc_samples)
        };
        let longest = group.iter().map(|&j| stratum(j)).max().unwrap_or(1);
        let draws = centered_t_draws(&chol.l(), dof, longest, rng)?;

        for &j in &group {
            let comp = &belief.components[j];
            let n = stratum(j);
            let mu = comp.params.mu();
            let centre: Vec<f64> = sub.iter().map(|&p| mu[p]).collect();
            count1.fill(0);
            count2.fill(0);
            for row in draws.chunks_exact(d).take(n) {
                let mut best = 0;
                for i in 0..m {
                    payoff[i] = payoff_slot[i].map_or(0.0, |s| centre[s] + row[s]);
                    let cost = centre[cost_slot[i]] + row[cost_slot[i]];
                    net[i] = payoff[i] - cost;
                    if net[i] > net[best] {
                        best = i;
                    }
                }
                count1[best] += 1;
                let cut = net[best] - delta * payoff[best];
                let mut promoted = best;
                let mut promoted_net = cut;
                for i in 0..m {
                    if i != best
                        && (net[i] > promoted_net || (net[i] == promoted_net && i < promoted))
                    {
                        promoted = i;
                        promoted_net = net[i];
                    }
                }
                count2[promoted] += 1;
            }
            let w = comp.weight / n as f64;
            for i in 0..m {
                q1[i] += w * count1[i] as f64;
                q2[i] += w * count2[i] as f64;
            }
            used_weight += comp.weight;
        }
    }
    if !(used_weight > 0.0) {
        return Err(Error::Degenerate(
            "every mixture component failed to factorize".into(),
        ));
    }

    Ok(cands
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let expected_payoff = belief.mean_of(Coord::Payoff(c.node)).unwrap_or(0.0);
            let expected_cost = belief.mean_of(Coord::Cost(c.edge)).unwrap_or(0.0);
            NeighborAssessment {
                node: c.node,
                edge: c.edge,
                delta_mean: expected_payoff - expected_cost,
                q1: q1[i] / used_weight,
                q2: q2[i] / used_weight,
                expected_payoff,
                expected_cost,
            }
        })
        .collect())
}

/// One component's payoff likelihoods, as logs: `f(x)` under "not reduced"
/// and `f(x*)` under "reduced".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayoffLikelihood {
    pub weight: f64,
    pub ln_f_x: f64,
    pub ln_f_x_star: f64,
}

impl PayoffLikelihood {
    pub fn from_densities(weight: f64, f_x: f64, f_x_star: f64) -> Self {
        Self {
            weight,
            ln_f_x: f_x.ln(),
            ln_f_x_star: f_x_star.ln(),
        }
    }
}

/// Per-component payoff likelihoods of `belief` at `x` and `x_star`.
pub fn payoff_likelihoods(
    belief: &MixtureBelief,
    node: NodeId,
    x: f64,
    x_star: f64,
) -> Result<Vec<PayoffLikelihood>> {
    belief
        .components
        .iter()
        .map(|k| {
            let (loc, scale, dof) = k.params.marginal_t(Coord::Payoff(node))?;
            Ok(PayoffLikelihood {
                weight: k.weight,
                ln_f_x: crate::special::student_t_ln_pdf(x, loc, scale, dof),
                ln_f_x_star: crate::special::student_t_ln_pdf(x_star, loc, scale, dof),
            })
        })
        .collect()
}

/// A posterior probability; `degenerate` marks a fall back to the prior term
/// because both likelihoods underflowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub value: f64,
    pub degenerate: bool,
}

fn ln_floor() -> f64 {
    DENSITY_FLOOR.ln()
}

/// Likelihoods rescaled by their common maximum, or `None` when both
/// underflow the floor.
fn relative_likelihoods(l: &PayoffLikelihood) -> Option<(f64, f64)> {
    let floor = ln_floor();
    if !(l.ln_f_x >= floor) && !(l.ln_f_x_star >= floor) {
        return None;
    }
    let top = l.ln_f_x.max(l.ln_f_x_star);
    Some(((l.ln_f_x - top).exp(), (l.ln_f_x_star - top).exp()))
}

fn combine(parts: &[PayoffLikelihood], each: impl Fn(&PayoffLikelihood) -> Posterior) -> Posterior {
    let total: f64 = parts.iter().map(|p| p.weight).sum();
    let mut value = 0.0;
    let mut degenerate = false;
    for p in parts {
        let r = each(p);
        value += p.weight * r.value;
        degenerate |= r.degenerate;
    }
    Posterior {
        value: (value / total).clamp(0.0, 1.0),
        degenerate,
    }
}

/// Probability that the visited node had been reduced, for one component.
pub fn reduction_posterior_component(q1: f64, q2: f64, pi: f64, l: &PayoffLikelihood) -> Posterior {
    let reduced_prior = pi * q1 + (1.0 - pi) * q2;
    let intact_prior = (1.0 - pi) * q1 + pi * q2;
    // Equal likelihoods: the prior odds alone.
    let even = if reduced_prior + intact_prior > 0.0 {
        reduced_prior / (reduced_prior + intact_prior)
    } else {
        0.0
    };
    let fallback = Posterior {
        value: even,
        degenerate: true,
    };
    let Some((f_x, f_star)) = relative_likelihoods(l) else {
        return fallback;
    };
    let num = f_star * reduced_prior;
    let den = num + f_x * intact_prior;
    if !(den > 0.0) {
        return fallback;
    }
    Posterior {
        value: num / den,
        degenerate: false,
    }
}

/// `P(reduced | x)`, evaluated per component and combined by weight.
pub fn reduction_posterior(q1: f64, q2: f64, pi: f64, parts: &[PayoffLikelihood]) -> Posterior {
    combine(parts, |p| reduction_posterior_component(q1, q2, pi, p))
}

/// Probability the opponent is Type 0 given the payoff, for one component.
pub fn type_posterior_component(q1: f64, q2: f64, pi: f64, l: &PayoffLikelihood) -> Posterior {
    let fallback = Posterior {
        value: pi,
        degenerate: true,
    };
    let Some((f_x, f_star)) = relative_likelihoods(l) else {
        return fallback;
    };
    if f_x == f_star {
        return Posterior {
            value: pi,
            degenerate: false,
        };
    }
    let num = pi * (f_star * q1 + f_x * (1.0 - q1));
    let den =
        f_star * (pi * q1 + (1.0 - pi) * q2) + f_x * (pi * (1.0 - q1) + (1.0 - pi) * (1.0 - q2));
    if !(den > 0.0) {
        return fallback;
    }
    Posterior {
        value: num / den,
        degenerate: false,
    }
}

/// Posterior probability `gamma` that the opponent is Type 0.
pub fn type_posterior_gamma(q1: f64, q2: f64, pi: f64, parts: &[PayoffLikelihood]) -> Posterior {
    combine(parts, |p| type_posterior_component(q1, q2, pi, p))
}

/// `Beta(alpha, beta) -> Beta(alpha + gamma, beta + 1 - gamma)`.
pub fn update_type_belief(belief: &MixtureBelief, gamma: f64) -> Result<MixtureBelief> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid(format!(
            "gamma = {gamma} must lie in [0, 1]"
        )));
    }
    let mut next = belief.clone();
    next.alpha += gamma;
    next.beta += 1.0 - gamma;
    Ok(next)
}

/// What the traveler sees on arriving at a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub node: NodeId,
    pub payoff_observed: f64,
    pub edge: EdgeId,
    pub cost_observed: f64,
    /// `payoff_observed / (1 - delta)`: the payoff before a putative cut.
    pub rescaled_payoff: f64,
    /// False on a revisit, where no payoff is paid out.
    pub reveals_payoff: bool,
}

impl Observation {
    pub fn new(node: NodeId, payoff: f64, edge: EdgeId, cost: f64, delta: f64) -> Self {
        Self {
            node,
            payoff_observed: payoff,
            edge,
            cost_observed: cost,
            rescaled_payoff: payoff / (1.0 - delta),
            reveals_payoff: true,
        }
    }

    /// Traversal onto a node whose payoff was already paid or forgone.
    pub fn revisit(node: NodeId, edge: EdgeId, cost: f64) -> Self {
        Self {
            node,
            payoff_observed: 0.0,
            edge,
            cost_observed: cost,
            rescaled_payoff: 0.0,
            reveals_payoff: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Incorporation {
    pub belief: MixtureBelief,
    /// Posterior Type 0 probability, when the adversary was accounted for.
    pub gamma: Option<f64>,
    /// Weight-averaged posterior that the payoff had been cut.
    pub reduction_probability: Option<f64>,
    pub degenerate: bool,
}

/// Conditions every component on one coordinate. Components sharing a scale
/// reuse one factorization from `cache` and come out sharing a scale again.
fn condition_components(
    cache: &mut Vec<Conditioner>,
    components: &[Component],
    coord: Coord,
    value: f64,
) -> Result<Vec<NiwParams>> {
    components
        .iter()
        .map(|k| {
            let pos = match cache.iter().position(|c| c.applies_to(&k.params)) {
                Some(pos) => pos,
                None => {
                    cache.push(Conditioner::new(&k.params, &[coord])?);
                    cache.len() - 1
                }
            };
            cache[pos].apply(&k.params, &[value])
        })
        .collect()
}

fn prune(mut components: Vec<Component>, epsilon: f64) -> Vec<Component> {
    let heaviest = components
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.weight.total_cmp(&b.1.weight))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let kept: Vec<Component> = components
        .iter()
        .filter(|k| k.weight > 0.0 && k.weight >= epsilon)
        .cloned()
        .collect();
    let mut kept = if kept.is_empty() {
        vec![components.swap_remove(heaviest)]
    } else {
        kept
    };
    let total: f64 = kept.iter().map(|k| k.weight).sum();
    for k in &mut kept {
        k.weight /= total;
    }
    kept
}

/// Folds one arrival into the belief.
///
/// Without adversary accounting each component is conditioned on the cost and
/// payoff as seen. With it, the cost is conditioned first, then `gamma` and
/// the Beta update are computed from the (unsplit) mixture, then each
/// component splits into reduced / not-reduced branches and light components
/// are pruned.
pub fn incorporate_observation(
    belief: &MixtureBelief,
    obs: &Observation,
    assessment: Option<&NeighborAssessment>,
    account_for_adversary: bool,
) -> Result<Incorporation> {
    let cost = Coord::Cost(obs.edge);
    let payoff = Coord::Payoff(obs.node);

    let mut components = belief.components.clone();
    if belief.contains(cost) {
        let conditioned =
            condition_components(&mut Vec::new(), &components, cost, obs.cost_observed)?;
        for (k, p) in components.iter_mut().zip(conditioned) {
            k.params = p;
        }
    }
    let with_cost = MixtureBelief {
        components,
        ..belief.clone()
    };
    if !obs.reveals_payoff || !with_cost.contains(payoff) {
        return Ok(Incorporation {
            belief: with_cost,
            gamma: None,
            reduction_probability: None,
            degenerate: false,
        });
    }

    if !account_for_adversary {
        let conditioned = condition_components(
            &mut Vec::new(),
            &with_cost.components,
            payoff,
            obs.payoff_observed,
        )?;
        let components = with_cost
            .components
            .iter()
            .zip(conditioned)
            .map(|(k, p)| Component {
                weight: k.weight,
                params: p,
            })
            .collect();
        return Ok(Incorporation {
            belief: MixtureBelief {
                components,
                ..with_cost
            },
            gamma: None,
            reduction_probability: None,
            degenerate: false,
        });
    }

    let a = assessment
        .ok_or_else(|| Error::invalid("adversary accounting needs the neighbour assessment"))?;
    if a.node != obs.node {
        return Err(Error::invalid(
            "assessment is for a different node than the observation",
        ));
    }
    let pi = with_cost.expected_pi();
    let parts = payoff_likelihoods(
        &with_cost,
        obs.node,
        obs.payoff_observed,
        obs.rescaled_payoff,
    )?;
    let gamma = type_posterior_gamma(a.q1, a.q2, pi, &parts);
    let per_component: Vec<Posterior> = parts
        .iter()
        .map(|l| reduction_posterior_component(a.q1, a.q2, pi, l))
        .collect();
    let reduction = reduction_posterior(a.q1, a.q2, pi, &parts);

    // One cache for both branches keeps every child on a shared scale.
    let mut cache = Vec::new();
    let reduced = condition_components(
        &mut cache,
        &with_cost.components,
        payoff,
        obs.rescaled_payoff,
    )?;
    let intact = condition_components(
        &mut cache,
        &with_cost.components,
        payoff,
        obs.payoff_observed,
    )?;
    let mut split = Vec::with_capacity(2 * with_cost.components.len());
    for ((k, r), (red, int)) in with_cost
        .components
        .iter()
        .zip(&per_component)
        .zip(reduced.into_iter().zip(intact))
    {
        split.push(Component {
            weight: k.weight * r.value,
            params: red,
        });
        split.push(Component {
            weight: k.weight * (1.0 - r.value),
            params: int,
        });
    }
    let components = prune(split, with_cost.prune_epsilon);
    let updated = update_type_belief(
        &MixtureBelief {
            components,
            ..with_cost
        },
        gamma.value,
    )?;
    Ok(Incorporation {
        belief: updated,
        gamma: Some(gamma.value),
        reduction_probability: Some(reduction.value),
        degenerate: gamma.degenerate || reduction.degenerate,
    })
}

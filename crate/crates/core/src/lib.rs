//! Bayesian traversal of a graph with unknown edge costs and node payoffs,
//! played against an opponent who can cut the payoff of one neighbouring node
//! per turn.
//!
//! The traveler holds a mixture of Normal-Inverse-Wishart beliefs over every
//! unobserved cost and payoff, conditions it on each observed value, and keeps
//! a Beta belief over whether the opponent is a level-0 or level-1 thinker.
//!
//! Module map:
//! - [`niw`]: conditioning, multivariate-t marginals and sampling.
//! - [`belief`]: mixture belief, neighbour order probabilities, posterior
//!   reduction and opponent-type probabilities.
//! - [`network`]: graph, the correlated grid generator, ground truth.
//! - [`adversary`]: Type 0 / Type 1 opponents.
//! - [`policy`]: path enumeration and the myopic, H-path and uncertainty policies.
//! - [`engine`]: the episode loop and the fixed-path baseline.
//! - [`experiment`]: factorial runner, balanced ANOVA, interaction summaries.

pub mod adversary;
pub mod belief;
pub mod engine;
mod error;
pub mod experiment;
pub mod network;
pub mod niw;
pub mod policy;
pub mod seed;
pub mod special;

pub use error::{Error, Result};

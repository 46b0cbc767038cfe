//! Factorial runner, balanced ANOVA and interaction summaries.

pub mod anova;
pub mod factorial;
pub mod summary;

pub use anova::{anova_balanced, AnovaRow, AnovaTable, Factor};
pub use factorial::{
    read_rows, read_rows_file, replicate_network, run_factorial, write_rows, write_rows_file, Cell,
    FactorialOutcome, FactorialSpec, ResultRow, Strategy, CSV_HEADER,
};
pub use summary::{summarize_interactions, InteractionSummary, SummaryEntry};

use crate::adversary::AdversaryKind;
use crate::engine::BeliefMode;
use crate::policy::PolicyKind;
use crate::{Error, Result};

fn level<T: PartialEq + std::fmt::Debug>(all: &[T], v: &T) -> usize {
    all.iter()
        .position(|x| x == v)
        .expect("level among its enum's values")
}

/// Four-way ANOVA of net reward on policy, belief, adversary and strategy.
/// Failed rows make the design unbalanced and are an error.
pub fn anova(rows: &[ResultRow]) -> Result<AnovaTable> {
    if let Some(r) = rows.iter().find(|r| r.failed()) {
        return Err(Error::invalid(format!(
            "replicate {} cell {:?} has no reward",
            r.replicate,
            r.cell()
        )));
    }
    let factors = [
        Factor::new("policy", PolicyKind::ALL.len()),
        Factor::new("belief", BeliefMode::ALL.len()),
        Factor::new("adversary", AdversaryKind::ALL.len()),
        Factor::new("strategy", Strategy::ALL.len()),
    ];
    let levels: Vec<Vec<usize>> = rows
        .iter()
        .map(|r| {
            vec![
                level(&PolicyKind::ALL, &r.policy),
                level(&BeliefMode::ALL, &r.belief),
                level(&AdversaryKind::ALL, &r.adversary),
                level(&Strategy::ALL, &r.strategy),
            ]
        })
        .collect();
    let y: Vec<f64> = rows.iter().map(|r| r.net_reward).collect();
    anova_balanced(&factors, &levels, &y)
}

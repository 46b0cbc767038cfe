//! Cell-mean interaction tables and runtime medians, as long-format CSV.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::factorial::ResultRow;
use crate::adversary::AdversaryKind;
use crate::Result;

pub const ADVERSARY_BY_STRATEGY: &str = "adversary_x_strategy";
pub const ADVERSARY_BY_POLICY: &str = "adversary_x_policy";
pub const ADVERSARY_BY_BELIEF: &str = "adversary_x_belief";
pub const POLICY_BY_STRATEGY_PRESENT: &str = "policy_x_strategy_adversary_present";
pub const MEDIAN_RUNTIME: &str = "median_runtime_ms";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryEntry {
    pub table: String,
    pub row: String,
    pub col: String,
    pub value: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteractionSummary {
    pub entries: Vec<SummaryEntry>,
    /// Rows excluded because their episode failed.
    pub failed_rows: usize,
}

impl InteractionSummary {
    pub fn get(&self, table: &str, row: &str, col: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.table == table && e.row == row && e.col == col)
            .map(|e| e.value)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["table", "row", "col", "value", "n"])?;
        for e in &self.entries {
            w.write_record([
                e.table.clone(),
                e.row.clone(),
                e.col.clone(),
                format!("{:.16e}", e.value),
                e.n.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn two_way<'a>(
    table: &str,
    rows: impl Iterator<Item = &'a ResultRow>,
    key: impl Fn(&ResultRow) -> (&'static str, &'static str),
    value: impl Fn(&ResultRow) -> f64,
    reduce: fn(&[f64]) -> f64,
) -> Vec<SummaryEntry> {
    let mut groups: BTreeMap<(&'static str, &'static str), (usize, Vec<f64>)> = BTreeMap::new();
    for (order, r) in rows.enumerate() {
        groups
            .entry(key(r))
            .or_insert_with(|| (order, Vec::new()))
            .1
            .push(value(r));
    }
    let mut ordered: Vec<_> = groups.into_iter().collect();
    ordered.sort_by_key(|(_, (first, _))| *first);
    ordered
        .into_iter()
        .map(|((row, col), (_, vals))| SummaryEntry {
            table: table.to_string(),
            row: row.to_string(),
            col: col.to_string(),
            value: reduce(&vals),
            n: vals.len(),
        })
        .collect()
}

/// Cell means of the interaction tables and per-policy median runtimes on
/// adversary-present episodes. Failed rows are skipped.
pub fn summarize_interactions(rows: &[ResultRow]) -> InteractionSummary {
    let mut sorted: Vec<&ResultRow> = rows.iter().filter(|r| !r.failed()).collect();
    sorted.sort_by_key(|r| (r.adversary, r.policy, r.belief, r.strategy, r.replicate));
    let ok = || sorted.iter().copied();
    let present = || ok().filter(|r| r.adversary != AdversaryKind::None);
    let reward = |r: &ResultRow| r.net_reward;

    let mut entries = Vec::new();
    entries.extend(two_way(
        ADVERSARY_BY_STRATEGY,
        ok(),
        |r| (r.adversary.label(), r.strategy.label()),
        reward,
        mean,
    ));
    entries.extend(two_way(
        ADVERSARY_BY_POLICY,
        ok(),
        |r| (r.adversary.label(), r.policy.label()),
        reward,
        mean,
    ));
    entries.extend(two_way(
        ADVERSARY_BY_BELIEF,
        ok(),
        |r| (r.adversary.label(), r.belief.label()),
        reward,
        mean,
    ));
    let mut by_policy: Vec<&ResultRow> = present().collect();
    by_policy.sort_by_key(|r| (r.policy, r.strategy));
    entries.extend(two_way(
        POLICY_BY_STRATEGY_PRESENT,
        by_policy.iter().copied(),
        |r| (r.policy.label(), r.strategy.label()),
        reward,
        mean,
    ));
    by_policy.sort_by_key(|r| r.policy);
    entries.extend(two_way(
        MEDIAN_RUNTIME,
        by_policy.iter().copied(),
        |r| (r.policy.label(), "adversary_present"),
        |r| r.runtime_ms,
        median,
    ));
    let mut all: Vec<&ResultRow> = ok().collect();
    all.sort_by_key(|r| r.policy);
    entries.extend(two_way(
        MEDIAN_RUNTIME,
        all.into_iter(),
        |r| (r.policy.label(), "all"),
        |r| r.runtime_ms,
        median,
    ));
    InteractionSummary {
        entries,
        failed_rows: rows.len() - sorted.len(),
    }
}

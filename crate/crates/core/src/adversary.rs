//! Opponents who see the true costs and payoffs and cut one neighbouring
//! payoff per turn.

use serde::{Deserialize, Serialize};

use crate::network::{Network, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AdversaryKind {
    None,
    /// Level-0: cuts the neighbour with the largest true net gain.
    Type0,
    /// Level-1: expects the traveler to dodge a level-0 cut and hits the
    /// runner-up, unless the cut best node still beats it.
    Type1,
}

impl AdversaryKind {
    pub const ALL: [AdversaryKind; 3] = [
        AdversaryKind::None,
        AdversaryKind::Type0,
        AdversaryKind::Type1,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AdversaryKind::None => "none",
            AdversaryKind::Type0 => "type0",
            AdversaryKind::Type1 => "type1",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.label().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdversaryConfig {
    pub kind: AdversaryKind,
    pub delta: f64,
}

pub const DEFAULT_DELTA: f64 = 0.3;

impl Default for AdversaryConfig {
    fn default() -> Self {
        Self {
            kind: AdversaryKind::None,
            delta: DEFAULT_DELTA,
        }
    }
}

/// Node the opponent cuts this turn, if any.
///
/// Candidates are the unvisited, not yet reduced neighbours of `traveler`,
/// ranked by true net gain; ties go to the lower node id.
pub fn choose_reduction(cfg: &AdversaryConfig, net: &Network, traveler: NodeId) -> Option<NodeId> {
    if cfg.kind == AdversaryKind::None {
        return None;
    }
    let mut ranked: Vec<(NodeId, f64, f64)> = net
        .graph()
        .neighbors(traveler)
        .iter()
        .filter(|(n, _)| !net.is_visited(*n) && !net.is_reduced(*n))
        .map(|&(n, e)| (n, net.payoff(n), net.cost(e)))
        .collect();
    ranked.sort_by(|a, b| (b.1 - b.2).total_cmp(&(a.1 - a.2)).then(a.0.cmp(&b.0)));

    let best = *ranked.first()?;
    match cfg.kind {
        AdversaryKind::None => None,
        AdversaryKind::Type0 => Some(best.0),
        AdversaryKind::Type1 => match ranked.get(1) {
            None => Some(best.0),
            Some(second) => {
                let cut_best = (1.0 - cfg.delta) * best.1 - best.2;
                if cut_best > second.1 - second.2 {
                    Some(best.0)
                } else {
                    Some(second.0)
                }
            }
        },
    }
}

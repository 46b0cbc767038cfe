//! Path enumeration and the three traversal policies.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::belief::{MixtureBelief, NeighborAssessment};
use crate::network::{EdgeId, Graph, NodeId};
use crate::niw::Coord;
use crate::{Error, Result};

/// Relative change reported when a coordinate's old mean is near zero.
pub const TAU_SENTINEL: f64 = 1.0;
const TAU_FLOOR: f64 = 1e-6;

pub const DEFAULT_HORIZON: usize = 3;
pub const DEFAULT_CUTPOINTS: [f64; 3] = [0.05, 0.10, 0.20];
pub const DEFAULT_MAX_PATHS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PolicyKind {
    Myopic,
    HPath,
    Uncertainty,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [
        PolicyKind::Myopic,
        PolicyKind::HPath,
        PolicyKind::Uncertainty,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::Myopic => "myopic",
            PolicyKind::HPath => "hpath",
            PolicyKind::Uncertainty => "uncertainty",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.label().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Look-ahead of the H-path policy.
    pub horizon: usize,
    /// Ascending tau cut points separating depths 4 | 3 | 2 | 1.
    pub cutpoints: [f64; 3],
    pub max_paths: usize,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            horizon: DEFAULT_HORIZON,
            cutpoints: DEFAULT_CUTPOINTS,
            max_paths: DEFAULT_MAX_PATHS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if self.max_paths == 0 {
            return Err(Error::invalid("max_paths must be at least 1"));
        }
        let [a, b, c] = self.cutpoints;
        if !(0.0 <= a && a < b && b < c) {
            return Err(Error::invalid(format!(
                "cutpoints {:?} must be non-negative and strictly ascending",
                self.cutpoints
            )));
        }
        Ok(())
    }

    /// Look-ahead used this turn; `tau = None` before any observation.
    pub fn depth(&self, tau: Option<f64>) -> usize {
        match self.kind {
            PolicyKind::Myopic => 1,
            PolicyKind::HPath => self.horizon,
            PolicyKind::Uncertainty => tau.map_or(1, |t| select_search_depth(t, &self.cutpoints)),
        }
    }
}

/// Largest relative change between aligned coordinate means. Coordinates
/// present in only one of the two lists are ignored.
pub fn compute_tau(old: &[(Coord, f64)], new: &[(Coord, f64)]) -> f64 {
    let old: HashMap<Coord, f64> = old.iter().copied().collect();
    new.iter()
        .filter_map(|(c, v)| old.get(c).map(|o| (*o, *v)))
        .map(|(o, v)| {
            let diff = (v - o).abs();
            if o.abs() < TAU_FLOOR {
                if diff == 0.0 {
                    0.0
                } else {
                    (diff / TAU_FLOOR).min(TAU_SENTINEL)
                }
            } else {
                diff / o.abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Depth 1 above the top cut point, down to depth 4 at or below the lowest.
pub fn select_search_depth(tau: f64, cutpoints: &[f64; 3]) -> usize {
    let [low, mid, high] = *cutpoints;
    if tau > high {
        1
    } else if tau > mid {
        2
    } else if tau > low {
        3
    } else {
        4
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePath {
    pub nodes: Vec<NodeId>,
    pub edges: Vec<EdgeId>,
}

/// What the traveler knows when choosing a move: the map, the nodes already
/// visited and the edge costs already paid.
#[derive(Debug, Clone, Copy)]
pub struct Knowledge<'a> {
    pub graph: &'a Graph,
    pub visited: &'a [bool],
    /// Observed cost per edge id, `None` while untraversed.
    pub known_costs: &'a [Option<f64>],
}

impl<'a> Knowledge<'a> {
    /// Nothing traversed yet beyond `visited`.
    pub fn new(graph: &'a Graph, visited: &'a [bool], known_costs: &'a [Option<f64>]) -> Self {
        debug_assert_eq!(visited.len(), graph.node_count());
        debug_assert_eq!(known_costs.len(), graph.edge_count());
        Self {
            graph,
            visited,
            known_costs,
        }
    }
}

/// Simple paths of `depth` nodes beyond `start`, shorter only where the
/// graph forces it. Paths may pass through visited nodes; trailing visited
/// nodes are dropped, and so are paths that reach no unvisited node. First
/// steps are explored in descending `first_step_value`; enumeration stops
/// after `max_paths`.
pub fn enumerate_paths(
    know: &Knowledge<'_>,
    start: NodeId,
    depth: usize,
    max_paths: usize,
    first_step_value: impl Fn(NodeId, EdgeId) -> f64,
) -> Vec<CandidatePath> {
    let mut out = Vec::new();
    if depth == 0 || max_paths == 0 {
        return out;
    }
    let graph = know.graph;
    let mut first: Vec<(NodeId, EdgeId, f64)> = graph
        .neighbors(start)
        .iter()
        .map(|&(n, e)| (n, e, first_step_value(n, e)))
        .collect();
    first.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));

    let mut walk = Walk {
        know,
        depth,
        max_paths,
        on_path: vec![false; graph.node_count()],
        nodes: Vec::with_capacity(depth),
        edges: Vec::with_capacity(depth),
        out: &mut out,
    };
    walk.on_path[start.0] = true;
    for (n, e, _) in first {
        if walk.out.len() >= max_paths {
            break;
        }
        walk.push(n, e);
        walk.extend();
        walk.pop(n);
    }
    out
}

struct Walk<'k, 'o> {
    know: &'k Knowledge<'k>,
    depth: usize,
    max_paths: usize,
    on_path: Vec<bool>,
    nodes: Vec<NodeId>,
    edges: Vec<EdgeId>,
    out: &'o mut Vec<CandidatePath>,
}

impl Walk<'_, '_> {
    fn push(&mut self, n: NodeId, e: EdgeId) {
        self.nodes.push(n);
        self.edges.push(e);
        self.on_path[n.0] = true;
    }

    fn pop(&mut self, n: NodeId) {
        self.on_path[n.0] = false;
        self.nodes.pop();
        self.edges.pop();
    }

    fn extend(&mut self) {
        if self.out.len() >= self.max_paths {
            return;
        }
        let tail = *self.nodes.last().expect("non-empty path");
        let next: Vec<(NodeId, EdgeId)> = self
            .know
            .graph
            .neighbors(tail)
            .iter()
            .copied()
            .filter(|(n, _)| !self.on_path[n.0])
            .collect();
        if self.nodes.len() == self.depth || next.is_empty() {
            self.emit();
            return;
        }
        for (n, e) in next {
            self.push(n, e);
            self.extend();
            self.pop(n);
        }
    }

    fn emit(&mut self) {
        let Some(last) = self.nodes.iter().rposition(|n| !self.know.visited[n.0]) else {
            return;
        };
        let path = CandidatePath {
            nodes: self.nodes[..=last].to_vec(),
            edges: self.edges[..=last].to_vec(),
        };
        // Trimming can reproduce a path emitted by a sibling branch.
        if last + 1 == self.nodes.len() || !self.out.contains(&path) {
            self.out.push(path);
        }
    }
}

/// Expected payoff and cost of each step, built once per decision: mixture
/// means for what is unknown, zero payoff at visited nodes and paid costs on
/// traversed edges.
pub struct Valuation<'a> {
    means: HashMap<Coord, f64>,
    know: Knowledge<'a>,
}

impl<'a> Valuation<'a> {
    pub fn new(belief: &MixtureBelief, know: Knowledge<'a>) -> Self {
        Self {
            means: belief.means().into_iter().collect(),
            know,
        }
    }

    pub fn payoff(&self, n: NodeId) -> Result<f64> {
        if self.know.visited[n.0] {
            return Ok(0.0);
        }
        let c = Coord::Payoff(n);
        self.means
            .get(&c)
            .copied()
            .ok_or(Error::UnknownCoordinate(c))
    }

    pub fn cost(&self, e: EdgeId) -> Result<f64> {
        if let Some(v) = self.know.known_costs[e.0] {
            return Ok(v);
        }
        let c = Coord::Cost(e);
        self.means
            .get(&c)
            .copied()
            .ok_or(Error::UnknownCoordinate(c))
    }
}

/// Expected payoff lost on the first step to a cut, when the traveler
/// accounts for the opponent.
#[derive(Debug, Clone, Copy)]
pub struct CutDiscount<'a> {
    pub assessments: &'a [NeighborAssessment],
    pub expected_pi: f64,
    pub delta: f64,
}

impl CutDiscount<'_> {
    pub fn for_node(&self, n: NodeId) -> f64 {
        self.assessments
            .iter()
            .find(|a| a.node == n)
            .map_or(0.0, |a| {
                let hit = self.expected_pi * a.q1 + (1.0 - self.expected_pi) * a.q2;
                self.delta * a.expected_payoff * hit
            })
    }
}

/// Sum of expected payoffs minus expected costs along `path`, less the
/// first-step cut discount if one is given.
pub fn score_path(
    value: &Valuation<'_>,
    path: &CandidatePath,
    discount: Option<&CutDiscount<'_>>,
) -> Result<f64> {
    let mut score = 0.0;
    for (n, e) in path.nodes.iter().zip(&path.edges) {
        score += value.payoff(*n)? - value.cost(*e)?;
    }
    if let (Some(d), Some(first)) = (discount, path.nodes.first()) {
        score -= d.for_node(*first);
    }
    Ok(score)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub path: CandidatePath,
    pub score: f64,
    pub depth: usize,
}

impl Decision {
    pub fn next_node(&self) -> NodeId {
        self.path.nodes[0]
    }

    pub fn next_edge(&self) -> EdgeId {
        self.path.edges[0]
    }
}

/// Best-scoring path of the given depth, or `None` to stop: no candidate
/// path, or the best score is negative. Equal scores go to the
/// lexicographically smallest node sequence.
pub fn decide(
    know: &Knowledge<'_>,
    current: NodeId,
    belief: &MixtureBelief,
    depth: usize,
    max_paths: usize,
    discount: Option<&CutDiscount<'_>>,
) -> Result<Option<Decision>> {
    let value = Valuation::new(belief, *know);
    let first_value = |n: NodeId, e: EdgeId| {
        let v = value.payoff(n).unwrap_or(f64::NEG_INFINITY) - value.cost(e).unwrap_or(0.0);
        v - discount.map_or(0.0, |d| d.for_node(n))
    };
    let paths = enumerate_paths(know, current, depth, max_paths, first_value);
    let mut best: Option<(CandidatePath, f64)> = None;
    for path in paths {
        let score = score_path(&value, &path, discount)?;
        let better = match &best {
            None => true,
            Some((bp, bs)) => match score.total_cmp(bs) {
                Ordering::Greater => true,
                Ordering::Equal => path.nodes < bp.nodes,
                Ordering::Less => false,
            },
        };
        if better {
            best = Some((path, score));
        }
    }
    Ok(best
        .filter(|(_, s)| *s >= 0.0)
        .map(|(path, score)| Decision { path, score, depth }))
}

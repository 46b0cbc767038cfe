//! Graph topology, the correlated grid generator and ground-truth networks.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::niw::{cholesky_jittered, Coord};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub x: i64,
    pub y: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub id: EdgeId,
    pub u: NodeId,
    pub v: NodeId,
}

impl Edge {
    pub fn other(&self, n: NodeId) -> NodeId {
        if self.u == n {
            self.v
        } else {
            self.u
        }
    }

    pub fn touches(&self, n: NodeId) -> bool {
        self.u == n || self.v == n
    }
}

/// Connected undirected graph with dense ids `0..n` and `0..m`.
#[derive(Debug, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(NodeId, EdgeId)>>,
}

impl Graph {
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::invalid("graph has no nodes"));
        }
        for (i, n) in nodes.iter().enumerate() {
            if n.id.0 != i {
                return Err(Error::invalid(format!(
                    "node ids must be dense; position {i} has id {}",
                    n.id.0
                )));
            }
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (i, e) in edges.iter().enumerate() {
            if e.id.0 != i {
                return Err(Error::invalid(format!(
                    "edge ids must be dense; position {i} has id {}",
                    e.id.0
                )));
            }
            if e.u.0 >= nodes.len() || e.v.0 >= nodes.len() || e.u == e.v {
                return Err(Error::invalid(format!("edge {i} has invalid endpoints")));
            }
            if adjacency[e.u.0].iter().any(|&(n, _)| n == e.v) {
                return Err(Error::invalid(format!(
                    "edge {i} duplicates an existing edge"
                )));
            }
            adjacency[e.u.0].push((e.v, e.id));
            adjacency[e.v.0].push((e.u, e.id));
        }
        for adj in &mut adjacency {
            adj.sort();
        }
        let g = Self {
            nodes,
            edges,
            adjacency,
        };
        if !g.is_connected() {
            return Err(Error::invalid("graph is not connected"));
        }
        Ok(g)
    }

    /// `width x height` lattice with nodes at `(1,1)..(width,height)`.
    /// Node `(x, y)` has id `(y-1)*width + (x-1)`; edges are listed per node in
    /// id order, east edge first, then north.
    pub fn grid(width: usize, height: usize) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::invalid(format!(
                "grid must be at least 2x2, got {width}x{height}"
            )));
        }
        let id = |x: usize, y: usize| NodeId((y - 1) * width + (x - 1));
        let mut nodes = Vec::with_capacity(width * height);
        let mut edges = Vec::new();
        for y in 1..=height {
            for x in 1..=width {
                nodes.push(Node {
                    id: id(x, y),
                    x: x as i64,
                    y: y as i64,
                });
            }
        }
        for y in 1..=height {
            for x in 1..=width {
                if x < width {
                    edges.push(Edge {
                        id: EdgeId(edges.len()),
                        u: id(x, y),
                        v: id(x + 1, y),
                    });
                }
                if y < height {
                    edges.push(Edge {
                        id: EdgeId(edges.len()),
                        u: id(x, y),
                        v: id(x, y + 1),
                    });
                }
            }
        }
        Self::new(nodes, edges)
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(n) = queue.pop_front() {
            for &(m, _) in &self.adjacency[n] {
                if !seen[m.0] {
                    seen[m.0] = true;
                    queue.push_back(m.0);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.0]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Neighbours of `n` with the connecting edge, sorted by neighbour id.
    pub fn neighbors(&self, n: NodeId) -> &[(NodeId, EdgeId)] {
        &self.adjacency[n.0]
    }

    pub fn edge_between(&self, a: NodeId, b: NodeId) -> Option<EdgeId> {
        self.adjacency[a.0]
            .iter()
            .find(|&&(m, _)| m == b)
            .map(|&(_, e)| e)
    }

    pub fn node_at(&self, x: i64, y: i64) -> Option<NodeId> {
        self.nodes
            .iter()
            .find(|n| n.x == x && n.y == y)
            .map(|n| n.id)
    }

    fn manhattan(&self, a: NodeId, b: NodeId) -> i64 {
        let (a, b) = (self.node(a), self.node(b));
        (a.x - b.x).abs() + (a.y - b.y).abs()
    }

    /// Every coordinate of the graph: node payoffs in id order, then edge costs.
    pub fn coords(&self) -> Vec<Coord> {
        self.nodes
            .iter()
            .map(|n| Coord::Payoff(n.id))
            .chain(self.edges.iter().map(|e| Coord::Cost(e.id)))
            .collect()
    }
}

/// Parameters of the correlated grid generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGenSpec {
    pub width: usize,
    pub height: usize,
    pub rho: f64,
    pub seed: u64,
}

impl Default for GridGenSpec {
    fn default() -> Self {
        Self {
            width: 6,
            height: 6,
            rho: 0.5,
            seed: 0,
        }
    }
}

/// Generative mean and covariance over all payoffs and costs of a grid.
#[derive(Debug, Clone)]
pub struct GridMoments {
    pub graph: Arc<Graph>,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub coords: Vec<Coord>,
    lower: DMatrix<f64>,
}

/// Prior variance of every coordinate: the node-node covariance formula
/// `rho^(2d-1)` evaluated at `d = 0`.
pub fn grid_variance(rho: f64) -> f64 {
    1.0 / rho
}

/// Covariance between two coordinates under the grid recipe.
pub fn grid_covariance(graph: &Graph, rho: f64, a: Coord, b: Coord) -> f64 {
    if a == b {
        return grid_variance(rho);
    }
    match (a, b) {
        (Coord::Payoff(n1), Coord::Payoff(n2)) => rho.powi(2 * graph.manhattan(n1, n2) as i32 - 1),
        (Coord::Cost(e1), Coord::Cost(e2)) => {
            let (e1, e2) = (graph.edge(e1), graph.edge(e2));
            if e1.touches(e2.u) || e1.touches(e2.v) {
                rho
            } else {
                let d = [(e1.u, e2.u), (e1.u, e2.v), (e1.v, e2.u), (e1.v, e2.v)]
                    .iter()
                    .map(|&(p, q)| graph.manhattan(p, q))
                    .min()
                    .unwrap_or(0);
                rho.powi(2 * d as i32 + 1)
            }
        }
        (Coord::Payoff(n), Coord::Cost(e)) | (Coord::Cost(e), Coord::Payoff(n)) => {
            let e = graph.edge(e);
            if e.touches(n) {
                rho
            } else {
                let d = graph.manhattan(n, e.u).min(graph.manhattan(n, e.v));
                rho.powi(2 * d as i32)
            }
        }
    }
}

/// Mean `x + y` for node payoffs and `(x1 + y1 + x2 + y2) / 4` for edge costs.
pub fn grid_mean(graph: &Graph, c: Coord) -> f64 {
    match c {
        Coord::Payoff(n) => {
            let n = graph.node(n);
            (n.x + n.y) as f64
        }
        Coord::Cost(e) => {
            let e = graph.edge(e);
            let (a, b) = (graph.node(e.u), graph.node(e.v));
            (a.x + a.y + b.x + b.y) as f64 / 4.0
        }
    }
}

pub fn build_grid_moments(spec: &GridGenSpec) -> Result<GridMoments> {
    if !(spec.rho > 0.0 && spec.rho < 1.0) {
        return Err(Error::invalid(format!(
            "rho = {} must lie in (0, 1)",
            spec.rho
        )));
    }
    let graph = Arc::new(Graph::grid(spec.width, spec.height)?);
    moments_for_graph(graph, spec.rho)
}

/// The grid recipe applied to an arbitrary graph with lattice coordinates.
pub fn moments_for_graph(graph: Arc<Graph>, rho: f64) -> Result<GridMoments> {
    let coords = graph.coords();
    let p = coords.len();
    let mean = DVector::from_iterator(p, coords.iter().map(|&c| grid_mean(&graph, c)));
    let covariance = DMatrix::from_fn(p, p, |i, j| {
        grid_covariance(&graph, rho, coords[i], coords[j])
    });
    let lower = cholesky_jittered(&covariance)
        .map_err(|_| Error::Generation { rho })?
        .l();
    Ok(GridMoments {
        graph,
        mean,
        covariance,
        coords,
        lower,
    })
}

impl GridMoments {
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn position(&self, c: Coord) -> usize {
        match c {
            Coord::Payoff(n) => n.0,
            Coord::Cost(e) => self.graph.node_count() + e.0,
        }
    }
}

/// One Gaussian draw of every payoff and cost.
pub fn sample_truth(moments: &GridMoments, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = moments.dim();
    let z = DVector::from_iterator(p, (0..p).map(|_| StandardNormal.sample(&mut rng)));
    let draw = &moments.mean + &moments.lower * z;
    let n = moments.graph.node_count();
    Network::new(
        Arc::clone(&moments.graph),
        draw.iter().take(n).copied().collect(),
        draw.iter().skip(n).copied().collect(),
    )
    .expect("draw dimensions match the graph")
}

/// Ground truth for one episode plus its mutable flags.
#[derive(Debug, Clone)]
pub struct Network {
    graph: Arc<Graph>,
    payoffs: Vec<f64>,
    costs: Vec<f64>,
    reduced: Vec<bool>,
    visited: Vec<bool>,
}

impl Network {
    pub fn new(graph: Arc<Graph>, payoffs: Vec<f64>, costs: Vec<f64>) -> Result<Self> {
        if payoffs.len() != graph.node_count() || costs.len() != graph.edge_count() {
            return Err(Error::invalid("payoff/cost vectors do not match the graph"));
        }
        let n = graph.node_count();
        Ok(Self {
            graph,
            payoffs,
            costs,
            reduced: vec![false; n],
            visited: vec![false; n],
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn shared_graph(&self) -> Arc<Graph> {
        Arc::clone(&self.graph)
    }

    pub fn payoff(&self, n: NodeId) -> f64 {
        self.payoffs[n.0]
    }

    pub fn cost(&self, e: EdgeId) -> f64 {
        self.costs[e.0]
    }

    pub fn payoffs(&self) -> &[f64] {
        &self.payoffs
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn is_reduced(&self, n: NodeId) -> bool {
        self.reduced[n.0]
    }

    pub fn is_visited(&self, n: NodeId) -> bool {
        self.visited[n.0]
    }

    pub fn visited_flags(&self) -> &[bool] {
        &self.visited
    }

    pub fn mark_visited(&mut self, n: NodeId) {
        self.visited[n.0] = true;
    }

    /// Multiplies the node's payoff by `1 - delta`. Each node at most once.
    pub fn apply_reduction(&mut self, n: NodeId, delta: f64) -> Result<()> {
        if self.reduced[n.0] {
            return Err(Error::Contract(format!("node {} already reduced", n.0)));
        }
        self.payoffs[n.0] *= 1.0 - delta;
        self.reduced[n.0] = true;
        Ok(())
    }

    /// Resets the episode flags, keeping the values.
    pub fn reset_flags(&mut self) {
        self.reduced.fill(false);
        self.visited.fill(false);
    }

    pub fn to_document(&self) -> NetworkDocument {
        NetworkDocument {
            nodes: self
                .graph
                .nodes()
                .iter()
                .map(|n| NodeRecord {
                    id: n.id.0,
                    x: n.x,
                    y: n.y,
                    payoff: self.payoffs[n.id.0],
                })
                .collect(),
            edges: self
                .graph
                .edges()
                .iter()
                .map(|e| EdgeRecord {
                    id: e.id.0,
                    u: e.u.0,
                    v: e.v.0,
                    cost: self.costs[e.id.0],
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &NetworkDocument) -> Result<Self> {
        let mut nodes: Vec<&NodeRecord> = doc.nodes.iter().collect();
        nodes.sort_by_key(|n| n.id);
        let mut edges: Vec<&EdgeRecord> = doc.edges.iter().collect();
        edges.sort_by_key(|e| e.id);
        let graph = Graph::new(
            nodes
                .iter()
                .map(|n| Node {
                    id: NodeId(n.id),
                    x: n.x,
                    y: n.y,
                })
                .collect(),
            edges
                .iter()
                .map(|e| Edge {
                    id: EdgeId(e.id),
                    u: NodeId(e.u),
                    v: NodeId(e.v),
                })
                .collect(),
        )?;
        Network::new(
            Arc::new(graph),
            nodes.iter().map(|n| n.payoff).collect(),
            edges.iter().map(|e| e.cost).collect(),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(s)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// On-disk network: `{nodes:[{id,x,y,payoff}], edges:[{id,u,v,cost}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDocument {
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub x: i64,
    pub y: i64,
    pub payoff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub id: usize,
    pub u: usize,
    pub v: usize,
    pub cost: f64,
}

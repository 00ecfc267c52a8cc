//! Watts-Strogatz topology generation and hop-distance queries.
//!
//! Links are homogeneous: an edge carries no attributes, and the hop count
//! between two nodes is all the network layer needs to index the lookup
//! table.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rngutil;

pub const TOPOLOGY_FILE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TopoError {
    #[error("invalid Watts-Strogatz parameters: {0}")]
    InvalidParams(String),
    #[error("node index {0} out of range (V={1})")]
    NodeOutOfRange(usize, usize),
    #[error("failed to generate a connected topology after {0} attempts")]
    Disconnected(usize),
    #[error("invalid topology file: {0}")]
    InvalidFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("topology parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Watts-Strogatz parameters: V nodes, ring degree K, rewiring probability p.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WsParams {
    pub node_count: usize,
    pub ring_degree: usize,
    pub rewire_prob: f64,
    pub seed: u64,
}

impl WsParams {
    pub fn validate(&self) -> Result<(), TopoError> {
        if self.node_count < 3 {
            return Err(TopoError::InvalidParams(format!(
                "node_count {} < 3",
                self.node_count
            )));
        }
        if self.ring_degree < 1 || self.ring_degree >= self.node_count {
            return Err(TopoError::InvalidParams(format!(
                "ring_degree {} outside [1, V)",
                self.ring_degree
            )));
        }
        if !(0.0..=1.0).contains(&self.rewire_prob) {
            return Err(TopoError::InvalidParams(format!(
                "rewire_prob {} outside [0,1]",
                self.rewire_prob
            )));
        }
        if self.ring_degree % 2 == 1 && self.node_count % 2 == 1 {
            return Err(TopoError::InvalidParams(
                "odd ring_degree requires an even node count".into(),
            ));
        }
        Ok(())
    }
}

/// A connected undirected graph with precomputed all-pairs hop distances.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    dist: Vec<Vec<u32>>,
}

#[derive(Serialize, Deserialize)]
struct TopologyFile {
    version: u32,
    params: WsParams,
    edges: Vec<(usize, usize)>,
}

impl Topology {
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Sorted unordered edge pairs (u < v).
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn hop_distance(&self, a: usize, b: usize) -> Result<u32, TopoError> {
        for n in [a, b] {
            if n >= self.node_count {
                return Err(TopoError::NodeOutOfRange(n, self.node_count));
            }
        }
        Ok(self.dist[a][b])
    }

    /// Largest hop distance between any pair; bounds the lookup table.
    pub fn diameter(&self) -> u32 {
        self.dist
            .iter()
            .flat_map(|row| row.iter().copied())
            .max()
            .unwrap_or(0)
    }

    fn from_edges(node_count: usize, edge_set: &BTreeSet<(usize, usize)>) -> Option<Self> {
        let edges: Vec<(usize, usize)> = edge_set.iter().copied().collect();
        let dist = all_pairs_bfs(node_count, &edges);
        let connected = dist
            .iter()
            .all(|row| row.iter().all(|&d| d != u32::MAX));
        connected.then_some(Topology {
            node_count,
            edges,
            dist,
        })
    }

    pub fn save(&self, params: &WsParams, path: &Path) -> Result<(), TopoError> {
        let file = TopologyFile {
            version: TOPOLOGY_FILE_VERSION,
            params: *params,
            edges: self.edges.clone(),
        };
        fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, WsParams), TopoError> {
        let file: TopologyFile = serde_json::from_str(&fs::read_to_string(path)?)?;
        if file.version != TOPOLOGY_FILE_VERSION {
            return Err(TopoError::InvalidFile(format!(
                "unsupported topology version {}",
                file.version
            )));
        }
        let v = file.params.node_count;
        let mut set = BTreeSet::new();
        for (a, b) in file.edges {
            if a >= v || b >= v || a == b {
                return Err(TopoError::InvalidFile(format!("bad edge ({a},{b})")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        Topology::from_edges(v, &set)
            .map(|t| (t, file.params))
            .ok_or_else(|| TopoError::InvalidFile("graph is disconnected".into()))
    }
}

/// Ring lattice for the Watts-Strogatz construction.
///
/// Each node links to its floor(K/2) nearest neighbors on each side. For odd
/// K the classical construction is ill-defined; here every even-index node
/// additionally links clockwise at ring distance ceil(K/2), which needs an
/// even V and keeps the edge count at exactly V*K/2.
fn ring_lattice(v: usize, k: usize) -> BTreeSet<(usize, usize)> {
    let mut edges = BTreeSet::new();
    let half = k / 2;
    for i in 0..v {
        for j in 1..=half {
            let n = (i + j) % v;
            edges.insert((i.min(n), i.max(n)));
        }
    }
    if k % 2 == 1 {
        let reach = k.div_ceil(2);
        for i in (0..v).step_by(2) {
            let n = (i + reach) % v;
            edges.insert((i.min(n), i.max(n)));
        }
    }
    edges
}

/// Generate a connected Watts-Strogatz topology. Each ring edge is rewired
/// independently with probability p to a uniformly random endpoint that
/// creates neither a self-loop nor a duplicate edge; disconnected results are
/// regenerated from a derived seed.
pub fn generate(params: &WsParams) -> Result<Topology, TopoError> {
    params.validate()?;
    const MAX_ATTEMPTS: usize = 1_000;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = rngutil::stream(params.seed, "nettopo.ws", &[attempt as u64]);
        let base: Vec<(usize, usize)> = ring_lattice(params.node_count, params.ring_degree)
            .into_iter()
            .collect();
        let mut edges: BTreeSet<(usize, usize)> = base.iter().copied().collect();
        for &(u, v) in &base {
            if rng.random::<f64>() >= params.rewire_prob {
                continue;
            }
            let candidates: Vec<usize> = (0..params.node_count)
                .filter(|&w| {
                    w != u && w != v && !edges.contains(&(u.min(w), u.max(w)))
                })
                .collect();
            if candidates.is_empty() {
                continue;
            }
            let w = candidates[rng.random_range(0..candidates.len())];
            edges.remove(&(u.min(v), u.max(v)));
            edges.insert((u.min(w), u.max(w)));
        }
        if let Some(topology) = Topology::from_edges(params.node_count, &edges) {
            return Ok(topology);
        }
    }
    Err(TopoError::Disconnected(MAX_ATTEMPTS))
}

fn all_pairs_bfs(v: usize, edges: &[(usize, usize)]) -> Vec<Vec<u32>> {
    let mut adj = vec![Vec::new(); v];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut dist = vec![vec![u32::MAX; v]; v];
    for start in 0..v {
        let row = &mut dist[start];
        row[start] = 0;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(node) = queue.pop_front() {
            for &next in &adj[node] {
                if row[next] == u32::MAX {
                    row[next] = row[node] + 1;
                    queue.push_back(next);
                }
            }
        }
    }
    dist
}

//! The reward-network task: a small leveled directed graph whose edges carry
//! point rewards, played for exactly [`MOVES_PER_EPISODE`] moves.

mod env;
mod generate;
mod oracle;
mod validate;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use env::{EnvError, EnvState, Observation, Trajectory};
pub use generate::{generate_batch, generate_network, GenConfig, GenError, GenStats, RewardRule, RewardRuleEntry};
pub use oracle::{oracle_best_score, OracleResult};
pub use validate::{min_losses_to_top, validate_network, Violation};

pub const NODE_COUNT: usize = 12;
pub const EDGE_COUNT: usize = 30;
pub const LEVEL_COUNT: usize = 4;
pub const TOP_LEVEL: u8 = 3;
pub const MOVES_PER_EPISODE: usize = 10;
pub const MIN_LOSSES_TO_TOP: usize = 3;

/// Admissible edge rewards, in one-hot index order.
pub const REWARDS: [i32; 5] = [-50, 0, 100, 200, 400];
pub const LOSS_REWARD: i32 = -50;
pub const TOP_REWARD: i32 = 400;
pub const BASE_LOOP_REWARD: i32 = 200;

pub type NodeId = usize;

pub fn reward_index(reward: i32) -> Option<usize> {
    REWARDS.iter().position(|&r| r == reward)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub level: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub source: NodeId,
    pub target: NodeId,
    pub reward: i32,
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    network_id: String,
    start_node: NodeId,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

/// A task instance. Immutable once built; outgoing edges are indexed per
/// node and sorted by target id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "NetworkFile", into = "NetworkFile")]
pub struct Network {
    network_id: String,
    start_node: NodeId,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(NodeId, i32)>>,
}

impl From<NetworkFile> for Network {
    fn from(f: NetworkFile) -> Self {
        Network::new(f.network_id, f.start_node, f.nodes, f.edges)
    }
}

impl From<Network> for NetworkFile {
    fn from(n: Network) -> Self {
        NetworkFile {
            network_id: n.network_id,
            start_node: n.start_node,
            nodes: n.nodes,
            edges: n.edges,
        }
    }
}

impl Network {
    /// Builds a network without checking any task constraint; see
    /// [`validate_network`].
    pub fn new(network_id: impl Into<String>, start_node: NodeId, nodes: Vec<Node>, edges: Vec<Edge>) -> Self {
        let slots = nodes
            .iter()
            .map(|n| n.id + 1)
            .chain(edges.iter().map(|e| e.source.max(e.target) + 1))
            .max()
            .unwrap_or(0);
        let mut adjacency = vec![Vec::new(); slots];
        for e in &edges {
            adjacency[e.source].push((e.target, e.reward));
        }
        for out in &mut adjacency {
            out.sort_by_key(|&(t, _)| t);
        }
        Network {
            network_id: network_id.into(),
            start_node,
            nodes,
            edges,
            adjacency,
        }
    }

    pub fn id(&self) -> &str {
        &self.network_id
    }

    pub fn start_node(&self) -> NodeId {
        self.start_node
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Outgoing `(target, reward)` pairs of `node`, ascending by target.
    pub fn out_edges(&self, node: NodeId) -> &[(NodeId, i32)] {
        self.adjacency.get(node).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn edge_reward(&self, source: NodeId, target: NodeId) -> Option<i32> {
        self.out_edges(source).iter().find(|&&(t, _)| t == target).map(|&(_, r)| r)
    }

    pub fn level(&self, node: NodeId) -> Option<u8> {
        self.nodes.iter().find(|n| n.id == node).map(|n| n.level)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("network serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self, PoolError> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed network record: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Writes one network per line.
pub fn write_pool<W: Write>(mut w: W, networks: &[Network]) -> Result<(), PoolError> {
    for n in networks {
        writeln!(w, "{}", n.to_json())?;
    }
    Ok(())
}

pub fn read_pool<R: BufRead>(r: R) -> Result<Vec<Network>, PoolError> {
    r.lines()
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
        .map(|l| Network::from_json(&l?))
        .collect()
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Hand-built network following the default reward rule. Levels hold
    /// nodes {0,1,2}, {3,4,5}, {6,7,8}, {9,10,11}; start is node 0.
    pub fn canonical() -> Network {
        let nodes = (0..12).map(|id| Node { id, level: (id / 3) as u8 }).collect();
        let e = |source, target, reward| Edge { source, target, reward };
        let edges = vec![
            // level 0: loop + ascent
            e(0, 1, 200),
            e(0, 3, -50),
            e(0, 4, -50),
            e(1, 2, 200),
            e(1, 4, -50),
            e(1, 0, 200),
            e(2, 0, 200),
            e(2, 5, -50),
            // level 1
            e(3, 4, 100),
            e(3, 6, -50),
            e(3, 5, 0),
            e(4, 5, 0),
            e(4, 7, -50),
            e(5, 3, 100),
            e(5, 8, -50),
            e(5, 7, -50),
            // level 2
            e(6, 7, 0),
            e(6, 9, -50),
            e(6, 10, -50),
            e(7, 8, 100),
            e(7, 10, -50),
            e(8, 6, 0),
            e(8, 11, -50),
            e(8, 9, -50),
            // level 3
            e(9, 10, 400),
            e(9, 11, 400),
            e(10, 11, 400),
            e(10, 9, 400),
            e(11, 9, 400),
            e(11, 10, 400),
        ];
        Network::new("canonical", 0, nodes, edges)
    }

    /// Replaces the reward of `source -> target`.
    pub fn with_reward(net: &Network, source: NodeId, target: NodeId, reward: i32) -> Network {
        let edges = net
            .edges()
            .iter()
            .map(|e| if e.source == source && e.target == target { Edge { reward, ..*e } } else { *e })
            .collect();
        Network::new(net.id(), net.start_node(), net.nodes().to_vec(), edges)
    }

    /// Redirects the edge `source -> old_target` to `new_target`.
    pub fn with_target(net: &Network, source: NodeId, old_target: NodeId, new_target: NodeId, reward: i32) -> Network {
        let edges = net
            .edges()
            .iter()
            .map(|e| {
                if e.source == source && e.target == old_target {
                    Edge { source, target: new_target, reward }
                } else {
                    *e
                }
            })
            .collect();
        Network::new(net.id(), net.start_node(), net.nodes().to_vec(), edges)
    }
}

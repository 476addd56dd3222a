use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{reward_index, Network, NodeId, MOVES_PER_EPISODE, NODE_COUNT, REWARDS};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum EnvError {
    #[error("no edge from node {from} to node {to}")]
    IllegalMove { from: NodeId, to: NodeId },
    #[error("episode is over after {} moves", MOVES_PER_EPISODE)]
    EpisodeOver,
    #[error("trajectory belongs to network {found}, expected {expected}")]
    WrongNetwork { expected: String, found: String },
    #[error("trajectory has {found} moves, expected {}", MOVES_PER_EPISODE)]
    WrongLength { found: usize },
    #[error("recorded reward {recorded} at move {index} differs from edge reward {actual}")]
    RewardMismatch { index: usize, recorded: i32, actual: i32 },
}

/// Position of a player inside one episode.
#[derive(Debug, Clone)]
pub struct EnvState<'a> {
    network: &'a Network,
    current: NodeId,
    move_index: usize,
    accrued: i32,
    revealed: BTreeSet<NodeId>,
}

impl<'a> EnvState<'a> {
    pub fn new(network: &'a Network) -> Self {
        let start = network.start_node();
        EnvState {
            network,
            current: start,
            move_index: 0,
            accrued: 0,
            revealed: BTreeSet::from([start]),
        }
    }

    pub fn network(&self) -> &'a Network {
        self.network
    }

    pub fn current(&self) -> NodeId {
        self.current
    }

    pub fn move_index(&self) -> usize {
        self.move_index
    }

    pub fn accrued(&self) -> i32 {
        self.accrued
    }

    pub fn revealed(&self) -> &BTreeSet<NodeId> {
        &self.revealed
    }

    pub fn is_terminal(&self) -> bool {
        self.move_index >= MOVES_PER_EPISODE
    }

    /// The moves available from the current node.
    pub fn choices(&self) -> &'a [(NodeId, i32)] {
        self.network.out_edges(self.current)
    }

    /// Moves along `current -> target` and returns the edge reward.
    pub fn step(&mut self, target: NodeId) -> Result<i32, EnvError> {
        if self.is_terminal() {
            return Err(EnvError::EpisodeOver);
        }
        let reward = self
            .network
            .edge_reward(self.current, target)
            .ok_or(EnvError::IllegalMove { from: self.current, to: target })?;
        self.current = target;
        self.move_index += 1;
        self.accrued += reward;
        self.revealed.insert(target);
        Ok(reward)
    }

    pub fn observe(&self) -> Observation {
        Observation::of(self.network, self.current)
    }
}

/// One-hot reward of every outgoing edge, one row per target node, plus the
/// mask of reachable targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub rows: [[f64; REWARDS.len()]; NODE_COUNT],
    pub mask: [bool; NODE_COUNT],
}

impl Observation {
    pub fn of(network: &Network, node: NodeId) -> Self {
        let mut rows = [[0.0; REWARDS.len()]; NODE_COUNT];
        let mut mask = [false; NODE_COUNT];
        for &(target, reward) in network.out_edges(node) {
            if target < NODE_COUNT {
                if let Some(k) = reward_index(reward) {
                    rows[target][k] = 1.0;
                }
                mask[target] = true;
            }
        }
        Observation { rows, mask }
    }

    /// Row-major flattening (`node * 5 + reward_index`).
    pub fn flat(&self) -> [f64; NODE_COUNT * REWARDS.len()] {
        let mut out = [0.0; NODE_COUNT * REWARDS.len()];
        for (j, row) in self.rows.iter().enumerate() {
            out[j * REWARDS.len()..(j + 1) * REWARDS.len()].copy_from_slice(row);
        }
        out
    }
}

/// A complete 10-move episode. `moves` are the visited targets; the start
/// node is implied by the network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub network_id: String,
    pub moves: Vec<NodeId>,
    pub rewards: Vec<i32>,
    pub total: i32,
}

impl Trajectory {
    /// Plays `moves` from the start node, failing on the first illegal move.
    pub fn play(network: &Network, moves: &[NodeId]) -> Result<Trajectory, EnvError> {
        let mut state = EnvState::new(network);
        let rewards = moves.iter().map(|&m| state.step(m)).collect::<Result<Vec<_>, _>>()?;
        Ok(Trajectory {
            network_id: network.id().to_string(),
            moves: moves.to_vec(),
            total: rewards.iter().sum(),
            rewards,
        })
    }

    pub fn is_complete(&self) -> bool {
        self.moves.len() == MOVES_PER_EPISODE && self.rewards.len() == MOVES_PER_EPISODE
    }

    /// Replays the moves through [`EnvState::step`] and checks that the
    /// recorded rewards and total agree with the network. Returns the
    /// replayed total.
    pub fn verify(&self, network: &Network) -> Result<i32, EnvError> {
        if network.id() != self.network_id {
            return Err(EnvError::WrongNetwork {
                expected: network.id().to_string(),
                found: self.network_id.clone(),
            });
        }
        if !self.is_complete() {
            return Err(EnvError::WrongLength { found: self.moves.len() });
        }
        let replay = Trajectory::play(network, &self.moves)?;
        for (index, (&recorded, &actual)) in self.rewards.iter().zip(&replay.rewards).enumerate() {
            if recorded != actual {
                return Err(EnvError::RewardMismatch { index, recorded, actual });
            }
        }
        Ok(replay.total)
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::canonical;
    use super::*;

    #[test]
    fn base_loop_edge_pays_200() {
        let net = canonical();
        let mut s = EnvState::new(&net);
        assert_eq!(s.step(1), Ok(200));
        assert_eq!(s.current(), 1);
        assert_eq!(s.move_index(), 1);
        assert_eq!(s.accrued(), 200);
        assert!(s.revealed().contains(&1));
    }

    #[test]
    fn non_adjacent_move_is_illegal() {
        let net = canonical();
        let mut s = EnvState::new(&net);
        assert_eq!(s.step(11), Err(EnvError::IllegalMove { from: 0, to: 11 }));
        assert_eq!(s.move_index(), 0);
    }

    #[test]
    fn eleventh_move_is_rejected() {
        let net = canonical();
        let mut s = EnvState::new(&net);
        for i in 0..10 {
            s.step(if i % 2 == 0 { 1 } else { 0 }).unwrap();
        }
        assert!(s.is_terminal());
        assert_eq!(s.accrued(), 2000);
        assert_eq!(s.step(1), Err(EnvError::EpisodeOver));
    }

    #[test]
    fn observation_one_hot_rows() {
        let net = canonical();
        // node 4: (->5, 0), (->7, -50)
        let obs = Observation::of(&net, 4);
        let mut expected = [[0.0; 5]; 12];
        expected[5][1] = 1.0;
        expected[7][0] = 1.0;
        assert_eq!(obs.rows, expected);
        let reachable: Vec<_> = (0..12).filter(|&j| obs.mask[j]).collect();
        assert_eq!(reachable, vec![5, 7]);
        for row in obs.rows {
            let s: f64 = row.iter().sum();
            assert!(s == 0.0 || s == 1.0);
        }
        assert_eq!(obs.flat()[5 * 5 + 1], 1.0);
        assert_eq!(obs.flat()[7 * 5], 1.0);
    }

    #[test]
    fn out_degree_one_has_single_row() {
        let nodes = vec![super::super::Node { id: 0, level: 0 }, super::super::Node { id: 1, level: 0 }];
        let edges = vec![
            super::super::Edge { source: 0, target: 1, reward: 100 },
            super::super::Edge { source: 1, target: 0, reward: 100 },
        ];
        let net = Network::new("pair", 0, nodes, edges);
        let obs = Observation::of(&net, 0);
        let nonzero = obs.rows.iter().filter(|r| r.iter().any(|&x| x != 0.0)).count();
        assert_eq!(nonzero, 1);
    }

    #[test]
    fn verify_detects_tampering() {
        let net = canonical();
        let mut t = Trajectory::play(&net, &[3, 6, 9, 10, 11, 9, 10, 11, 9, 10]).unwrap();
        assert_eq!(t.total, 2650);
        assert_eq!(t.verify(&net), Ok(2650));
        t.rewards[4] = 0;
        assert!(matches!(t.verify(&net), Err(EnvError::RewardMismatch { index: 4, .. })));
        let short = Trajectory::play(&net, &[3, 6, 9]).unwrap();
        assert_eq!(short.verify(&net), Err(EnvError::WrongLength { found: 3 }));
    }
}

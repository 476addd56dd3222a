//! Rule-based reference players and the network filter built on them.

use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::network::{EnvState, Network, NodeId, Trajectory, LOSS_REWARD, MOVES_PER_EPISODE};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Random,
    Myopic,
    LossSeeking,
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RuleKind::Random => "random",
            RuleKind::Myopic => "myopic",
            RuleKind::LossSeeking => "loss",
        })
    }
}

impl FromStr for RuleKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(RuleKind::Random),
            "myopic" => Ok(RuleKind::Myopic),
            "loss" | "loss_seeking" | "loss-seeking" => Ok(RuleKind::LossSeeking),
            other => Err(format!("unknown policy `{other}` (expected myopic, loss or random)")),
        }
    }
}

/// A stateless rule player. The seed is used by the random kind only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RulePolicy {
    pub kind: RuleKind,
    pub seed: u64,
}

impl RulePolicy {
    pub const MYOPIC: RulePolicy = RulePolicy { kind: RuleKind::Myopic, seed: 0 };
    pub const LOSS_SEEKING: RulePolicy = RulePolicy { kind: RuleKind::LossSeeking, seed: 0 };

    pub fn random(seed: u64) -> Self {
        RulePolicy { kind: RuleKind::Random, seed }
    }

    /// Picks the next target. `rng` is only consulted by the random kind.
    ///
    /// Panics if the state has no outgoing edge.
    pub fn act(&self, state: &EnvState<'_>, rng: &mut seed::Rng) -> NodeId {
        let choices = state.choices();
        match self.kind {
            RuleKind::Myopic => myopic_choice(choices),
            RuleKind::LossSeeking => loss_seeking_choice(choices),
            RuleKind::Random => choices.choose(rng).expect("node without outgoing edges").0,
        }
    }

    /// Plays a full episode from the start node.
    pub fn run(&self, net: &Network) -> Trajectory {
        let mut rng = seed::rng_at(self.seed, &[seed::label(net.id())]);
        let mut state = EnvState::new(net);
        let mut moves = Vec::with_capacity(MOVES_PER_EPISODE);
        while !state.is_terminal() {
            let target = self.act(&state, &mut rng);
            state.step(target).expect("rule policies only pick existing edges");
            moves.push(target);
        }
        Trajectory::play(net, &moves).expect("moves were just played")
    }
}

/// Highest immediate reward; ties go to the smallest node id.
pub fn myopic_choice(choices: &[(NodeId, i32)]) -> NodeId {
    // choices are sorted by target, so the first maximum is the smallest id
    let mut best = *choices.first().expect("node without outgoing edges");
    for &c in &choices[1..] {
        if c.1 > best.1 {
            best = c;
        }
    }
    best.0
}

/// A loss edge when one exists (smallest id), otherwise the myopic choice.
pub fn loss_seeking_choice(choices: &[(NodeId, i32)]) -> NodeId {
    choices
        .iter()
        .find(|&&(_, r)| r == LOSS_REWARD)
        .map(|&(t, _)| t)
        .unwrap_or_else(|| myopic_choice(choices))
}

pub fn run_policy(policy: &RulePolicy, net: &Network) -> Trajectory {
    policy.run(net)
}

/// Keeps a network unless the myopic player outscores the loss-seeking one.
pub fn filter_network(net: &Network) -> bool {
    RulePolicy::LOSS_SEEKING.run(net).total >= RulePolicy::MYOPIC.run(net).total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::{canonical, with_reward};
    use crate::network::{Edge, Node};

    #[test]
    fn myopic_takes_gain_loss_seeker_takes_loss() {
        let choices = [(2, 200), (5, -50)];
        assert_eq!(myopic_choice(&choices), 2);
        assert_eq!(loss_seeking_choice(&choices), 5);
    }

    #[test]
    fn loss_seeker_falls_back_to_myopic() {
        assert_eq!(loss_seeking_choice(&[(1, 0), (4, 100)]), 4);
    }

    #[test]
    fn single_edge_is_forced_for_every_kind() {
        let nodes = vec![Node { id: 0, level: 0 }, Node { id: 1, level: 0 }];
        let edges = vec![Edge { source: 0, target: 1, reward: 0 }, Edge { source: 1, target: 0, reward: 0 }];
        let net = Network::new("pair", 0, nodes, edges);
        let state = EnvState::new(&net);
        let mut rng = seed::rng(1);
        for p in [RulePolicy::MYOPIC, RulePolicy::LOSS_SEEKING, RulePolicy::random(3)] {
            assert_eq!(p.act(&state, &mut rng), 1);
        }
    }

    #[test]
    fn myopic_ties_go_to_smallest_id() {
        assert_eq!(myopic_choice(&[(1, 200), (3, 200), (7, -50)]), 1);
    }

    #[test]
    fn canonical_ceilings() {
        let net = canonical();
        assert_eq!(RulePolicy::MYOPIC.run(&net).total, 2000);
        assert_eq!(RulePolicy::LOSS_SEEKING.run(&net).total, 2650);
        assert!(filter_network(&net));
    }

    #[test]
    fn random_runs_are_seeded() {
        let net = canonical();
        assert_eq!(RulePolicy::random(5).run(&net), RulePolicy::random(5).run(&net));
        let runs: std::collections::BTreeSet<_> = (0..20).map(|s| RulePolicy::random(s).run(&net).moves).collect();
        assert!(runs.len() > 1);
    }

    #[test]
    fn myopic_winner_is_excluded() {
        // make the first ascent pay a loss but remove every gain above it:
        // level 1 internal edges stay, level-3 loops drop to 0
        let mut net = canonical();
        for (s, t) in [(9, 10), (9, 11), (10, 11), (10, 9), (11, 9), (11, 10)] {
            net = with_reward(&net, s, t, 0);
        }
        assert!(RulePolicy::MYOPIC.run(&net).total > RulePolicy::LOSS_SEEKING.run(&net).total);
        assert!(!filter_network(&net));
    }

    #[test]
    fn equal_totals_are_kept() {
        let nodes = vec![Node { id: 0, level: 0 }, Node { id: 1, level: 0 }];
        let edges = vec![Edge { source: 0, target: 1, reward: 200 }, Edge { source: 1, target: 0, reward: 200 }];
        let net = Network::new("tie", 0, nodes, edges);
        assert!(filter_network(&net));
    }
}

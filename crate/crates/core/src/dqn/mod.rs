//! The machine player: a recurrent deep-Q network trained with whole-episode
//! replay, plus greedy rollouts and behavioural congruency.

mod adam;
mod checkpoint;
mod gradcheck;
mod model;
mod replay;
mod train;

use thiserror::Error;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, CheckpointError, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use model::{masked_argmax, masked_max, Features, Hidden, Input, QNetwork, QValues, ACTIONS, HIDDEN, INPUT, LAYOUT, PARAM_COUNT};
pub use replay::{Episode, ReplayBuffer, Transition};
pub use train::{
    evaluate, play_episode, select_action, td_targets, train, train_with, CurvePoint, Evaluation, Learner, TrainConfig,
    TrainError, TrainOutcome,
};

use crate::network::{EnvError, EnvState, Network, Trajectory};

/// Epsilon-zero rollout from the start node.
pub fn greedy_trajectory(net: &QNetwork, network: &Network) -> Trajectory {
    let mut state = EnvState::new(network);
    let mut hidden = QNetwork::initial_hidden();
    let mut moves = Vec::new();
    while !state.is_terminal() {
        let input = Input::from(&state.observe());
        let q = net.forward_q(&mut hidden, &input);
        let a = masked_argmax(&q, &input.mask).expect("node without outgoing edges");
        state.step(a).expect("argmax is reachable");
        moves.push(a);
    }
    Trajectory::play(network, &moves).expect("moves were just played")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("trajectory does not fit network {network}: {source}")]
pub struct TrajectoryMismatch {
    pub network: String,
    pub source: EnvError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Congruency {
    /// Whether the player's move matched the network's argmax, per step.
    pub matches: Vec<bool>,
}

impl Congruency {
    pub fn fraction(&self) -> f64 {
        if self.matches.is_empty() {
            0.0
        } else {
            self.matches.iter().filter(|&&m| m).count() as f64 / self.matches.len() as f64
        }
    }
}

/// Compares every move of `trajectory` with the machine's masked argmax,
/// feeding the player's own history through the recurrent state.
pub fn congruency(net: &QNetwork, network: &Network, trajectory: &Trajectory) -> Result<Congruency, TrajectoryMismatch> {
    let mismatch = |source| TrajectoryMismatch { network: network.id().to_string(), source };
    if trajectory.network_id != network.id() {
        return Err(mismatch(EnvError::WrongNetwork {
            expected: network.id().to_string(),
            found: trajectory.network_id.clone(),
        }));
    }
    let mut state = EnvState::new(network);
    let mut hidden = QNetwork::initial_hidden();
    let mut matches = Vec::with_capacity(trajectory.moves.len());
    for &m in &trajectory.moves {
        if state.is_terminal() {
            return Err(mismatch(EnvError::EpisodeOver));
        }
        let input = Input::from(&state.observe());
        let q = net.forward_q(&mut hidden, &input);
        matches.push(masked_argmax(&q, &input.mask) == Some(m));
        state.step(m).map_err(mismatch)?;
    }
    Ok(Congruency { matches })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::canonical;
    use crate::network::generate_batch;

    #[test]
    fn own_greedy_rollout_is_fully_congruent() {
        let net = QNetwork::new(21);
        let (pool, _) = generate_batch(&Default::default(), "c", 5).unwrap();
        for n in &pool {
            let t = greedy_trajectory(&net, n);
            assert_eq!(congruency(&net, n, &t).unwrap().fraction(), 1.0);
            assert_eq!(t.verify(n), Ok(t.total));
        }
    }

    #[test]
    fn non_argmax_moves_score_zero() {
        let net = QNetwork::new(4);
        let network = canonical();
        let mut state = EnvState::new(&network);
        let mut hidden = QNetwork::initial_hidden();
        let mut moves = Vec::new();
        while !state.is_terminal() {
            let input = Input::from(&state.observe());
            let q = net.forward_q(&mut hidden, &input);
            let best = masked_argmax(&q, &input.mask).unwrap();
            let other = state.choices().iter().map(|c| c.0).find(|&t| t != best).unwrap();
            state.step(other).unwrap();
            moves.push(other);
        }
        let t = Trajectory::play(&network, &moves).unwrap();
        assert_eq!(congruency(&net, &network, &t).unwrap().fraction(), 0.0);
    }

    #[test]
    fn illegal_history_is_a_mismatch() {
        let network = canonical();
        let mut t = Trajectory::play(&network, &[1, 0, 1, 0, 1, 0, 1, 0, 1, 0]).unwrap();
        t.moves[3] = 11;
        let err = congruency(&QNetwork::new(0), &network, &t).unwrap_err();
        assert_eq!(err.source, EnvError::IllegalMove { from: 1, to: 11 });
    }

    #[test]
    fn zero_policy_walk_is_tie_broken() {
        // all reachable Q-values tie, so the smallest id is taken each step
        let t = greedy_trajectory(&QNetwork::zeros(), &canonical());
        assert_eq!(t.moves, vec![1, 0, 1, 0, 1, 0, 1, 0, 1, 0]);
    }

    #[test]
    fn rollouts_ignore_previous_episodes() {
        let net = QNetwork::new(6);
        let (pool, _) = generate_batch(&Default::default(), "h", 4).unwrap();
        let forward: Vec<_> = pool.iter().map(|n| greedy_trajectory(&net, n)).collect();
        let backward: Vec<_> = pool.iter().rev().map(|n| greedy_trajectory(&net, n)).collect();
        assert_eq!(forward, backward.into_iter().rev().collect::<Vec<_>>());
    }
}

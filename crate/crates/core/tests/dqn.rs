use proptest::prelude::*;
use rewardnet_core::dqn::{
    congruency, evaluate, gradient_check, greedy_trajectory, masked_argmax, play_episode, train, Checkpoint, QNetwork,
    TrainConfig, ACTIONS, HIDDEN, INPUT, PARAM_COUNT,
};
use rewardnet_core::network::{generate_batch, GenConfig, Network};
use rewardnet_core::seed;
use rewardnet_core::strategies::RulePolicy;

fn pool(prefix: &str, n: usize) -> Vec<Network> {
    generate_batch(&GenConfig { seed: 21, ..Default::default() }, prefix, n).unwrap().0
}

#[test]
fn parameter_count() {
    let encoder = INPUT * HIDDEN + HIDDEN;
    // update, reset and candidate gates, each with input and recurrent biases
    let gru = 3 * (HIDDEN * HIDDEN + HIDDEN * HIDDEN + 2 * HIDDEN);
    let head = HIDDEN * ACTIONS + ACTIONS;
    assert_eq!(PARAM_COUNT, encoder + gru + head);
    assert_eq!(PARAM_COUNT, 2547);
}

#[test]
fn gradients_match_central_differences() {
    let nets = pool("grad", 6);
    for s in 1..=3u64 {
        let mut rng = seed::rng(s);
        let behaviour = QNetwork::new(s + 50);
        let batch: Vec<_> = nets.iter().map(|n| play_episode(&behaviour, n, 0.5, &mut rng)).collect();
        let r = gradient_check(&QNetwork::new(s), &QNetwork::new(s + 10), &batch, 0.99, 0.0025, 250, 1e-4, s);
        assert!(r.probed.len() >= 200);
        assert!(r.max_rel_error < 1e-4, "seed {s}: {r:?}");
    }
}

#[test]
fn checkpoint_reload_is_exact() {
    let net = QNetwork::new(9);
    let cfg = TrainConfig { seed: 9, ..Default::default() };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    std::fs::write(&path, Checkpoint::new(&net, &cfg).to_json()).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.seed, 9);
    assert_eq!(back.config, cfg);
    let reloaded = back.network().unwrap();
    assert!(net.params().iter().zip(reloaded.params()).all(|(a, b)| a.to_bits() == b.to_bits()));
    for n in pool("ck", 10) {
        assert_eq!(greedy_trajectory(&net, &n), greedy_trajectory(&reloaded, &n));
    }
}

#[test]
fn greedy_play_is_self_congruent() {
    let net = QNetwork::new(4);
    for n in pool("cong", 20) {
        let t = greedy_trajectory(&net, &n);
        assert!(t.is_complete());
        assert_eq!(congruency(&net, &n, &t).unwrap().fraction(), 1.0);
    }
}

#[test]
fn short_training_beats_random_play() {
    let training = pool("training", 200);
    let validation = pool("validation", 200);
    let random = validation.iter().map(|n| RulePolicy::random(3).run(n).total as f64).sum::<f64>() / 200.0;
    let cfg = TrainConfig { episodes: 400, eval_every: 200, eval_set_size: 200, seed: 2, ..Default::default() };
    let out = train(&cfg, &training, &validation).unwrap();
    assert_eq!(out.curve.len(), 3);
    let end = evaluate(&out.policy, &validation).mean_reward;
    assert!(end > random, "{end} vs random {random}");
    assert_eq!(out.curve.last().unwrap().mean_reward, end);
}

#[test]
fn training_is_deterministic() {
    let training = pool("training", 50);
    let validation = pool("validation", 50);
    let cfg = TrainConfig { episodes: 60, eval_every: 30, eval_set_size: 50, seed: 5, ..Default::default() };
    let a = train(&cfg, &training, &validation).unwrap();
    let b = train(&cfg, &training, &validation).unwrap();
    assert_eq!(a.policy, b.policy);
    assert_eq!(a.curve, b.curve);
}

proptest! {
    #[test]
    fn schedules_never_increase(e in 0usize..40_000, step in 1usize..5_000) {
        let cfg = TrainConfig::default();
        prop_assert!(cfg.epsilon(e + step) <= cfg.epsilon(e));
        prop_assert!(cfg.epsilon(e) >= cfg.epsilon_floor);
        prop_assert!(cfg.learning_rate_at(e + step) <= cfg.learning_rate_at(e));
    }

    #[test]
    fn argmax_respects_mask(q in prop::array::uniform12(-1e3f64..1e3), mask in prop::array::uniform12(any::<bool>())) {
        match masked_argmax(&q, &mask) {
            Some(i) => {
                prop_assert!(mask[i]);
                prop_assert!((0..ACTIONS).filter(|&j| mask[j]).all(|j| q[j] <= q[i]));
            }
            None => prop_assert!(mask.iter().all(|m| !m)),
        }
    }
}

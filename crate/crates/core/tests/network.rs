use proptest::prelude::*;
use rewardnet_core::network::{
    generate_batch, generate_network, oracle_best_score, read_pool, validate_network, write_pool, EnvState, GenConfig,
    Network, NodeId, Trajectory, MOVES_PER_EPISODE,
};
use rewardnet_core::strategies::{RuleKind, RulePolicy};

fn batch(seed: u64, n: usize) -> Vec<Network> {
    generate_batch(&GenConfig { seed, ..Default::default() }, "t", n).unwrap().0
}

/// Best 10-move score by dynamic programming over (node, moves left).
fn dp_best(net: &Network) -> i32 {
    let mut best = vec![0i32; 12];
    for _ in 0..MOVES_PER_EPISODE {
        best = (0..12)
            .map(|n| net.out_edges(n).iter().map(|&(t, r)| r + best[t]).max().unwrap_or(i32::MIN / 4))
            .collect();
    }
    best[net.start_node()]
}

/// Every walk from a level-0 node that first reaches level 3 within ten
/// moves, with the number of negative edges it used.
fn walks_to_top(net: &Network) -> Vec<usize> {
    fn go(net: &Network, node: NodeId, depth: usize, losses: usize, out: &mut Vec<usize>) {
        if net.level(node) == Some(3) {
            out.push(losses);
            return;
        }
        if depth == MOVES_PER_EPISODE {
            return;
        }
        for &(t, r) in net.out_edges(node) {
            go(net, t, depth + 1, losses + (r < 0) as usize, out);
        }
    }
    let mut out = Vec::new();
    for n in net.nodes().iter().filter(|n| n.level == 0) {
        go(net, n.id, 0, 0, &mut out);
    }
    out
}

#[test]
fn generated_networks_validate() {
    for net in batch(11, 300) {
        assert!(validate_network(&net).is_empty(), "{}", net.id());
        assert_eq!(net.edges().len(), 30);
        assert_eq!(net.nodes().len(), 12);
    }
}

#[test]
fn every_climb_takes_three_losses() {
    for net in batch(12, 60) {
        let walks = walks_to_top(&net);
        assert!(!walks.is_empty());
        assert!(walks.iter().all(|&l| l >= 3), "{}", net.id());
    }
}

#[test]
fn strategy_ceilings() {
    for net in batch(13, 200) {
        assert_eq!(RulePolicy::LOSS_SEEKING.run(&net).total, 3 * -50 + 7 * 400);
        assert_eq!(RulePolicy::MYOPIC.run(&net).total, 2000);
        let oracle = oracle_best_score(&net).unwrap();
        assert_eq!(oracle.score, dp_best(&net));
        assert!(oracle.score >= 2650);
        assert_eq!(oracle.trajectory.verify(&net).unwrap(), oracle.score);
    }
}

#[test]
fn same_seed_same_pool_bytes() {
    let write = |nets: &[Network]| {
        let mut b = Vec::new();
        write_pool(&mut b, nets).unwrap();
        b
    };
    assert_eq!(write(&batch(5, 40)), write(&batch(5, 40)));
    assert_ne!(write(&batch(5, 40)), write(&batch(6, 40)));
}

#[test]
fn illegal_moves_are_reported() {
    let net = &batch(3, 1)[0];
    let bad = (0..12).find(|t| !net.out_edges(net.start_node()).iter().any(|e| e.0 == *t)).unwrap();
    assert!(Trajectory::play(net, &[bad]).is_err());
    let t = RulePolicy::MYOPIC.run(net);
    let short = Trajectory::play(net, &t.moves[..9]).unwrap();
    assert!(short.verify(net).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pool_round_trip(seed in any::<u64>()) {
        let (net, _) = generate_network(&GenConfig { seed, ..Default::default() }).unwrap();
        let mut buf = Vec::new();
        write_pool(&mut buf, std::slice::from_ref(&net)).unwrap();
        let back = read_pool(buf.as_slice()).unwrap();
        prop_assert_eq!(&back[0], &net);
    }

    #[test]
    fn totals_are_reward_sums(seed in any::<u64>(), policy_seed in any::<u64>()) {
        let (net, _) = generate_network(&GenConfig { seed, ..Default::default() }).unwrap();
        let t = RulePolicy { kind: RuleKind::Random, seed: policy_seed }.run(&net);
        prop_assert_eq!(t.total, t.rewards.iter().sum::<i32>());
        prop_assert_eq!(t.verify(&net).unwrap(), t.total);
        let mut env = EnvState::new(&net);
        let mut acc = 0;
        for &m in &t.moves {
            acc += env.step(m).unwrap();
            prop_assert_eq!(env.accrued(), acc);
        }
        prop_assert!(env.is_terminal());
    }

    #[test]
    fn oracle_dominates_random_play(seed in any::<u64>(), policy_seed in any::<u64>()) {
        let (net, _) = generate_network(&GenConfig { seed, ..Default::default() }).unwrap();
        let best = oracle_best_score(&net).unwrap().score;
        let t = RulePolicy::random(policy_seed).run(&net);
        prop_assert!(t.total <= best);
    }
}

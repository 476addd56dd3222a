use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{
    reward_index, Edge, Network, NodeId, BASE_LOOP_REWARD, EDGE_COUNT, LEVEL_COUNT, MIN_LOSSES_TO_TOP,
    MOVES_PER_EPISODE, NODE_COUNT, TOP_LEVEL, TOP_REWARD,
};

/// A broken task constraint, naming the offending element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NodeCount { found: usize },
    EdgeCount { found: usize },
    NodeIds { ids: Vec<NodeId> },
    NodeLevel { node: NodeId, level: u8 },
    StartNode { node: NodeId },
    UnknownEndpoint { edge: Edge },
    SelfLoop { edge: Edge },
    DuplicateEdge { edge: Edge },
    RewardNotAllowed { edge: Edge },
    TopRewardBelowTop { edge: Edge, source_level: u8 },
    BaseLoopReward { edge: Edge },
    DeadEnd { node: NodeId },
    TooFewLosses { path: Vec<NodeId>, losses: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = |e: &Edge| format!("{}->{} ({})", e.source, e.target, e.reward);
        match self {
            Violation::NodeCount { found } => write!(f, "node count: {found}, expected {NODE_COUNT}"),
            Violation::EdgeCount { found } => write!(f, "edge count: {found}, expected {EDGE_COUNT}"),
            Violation::NodeIds { ids } => write!(f, "node ids {ids:?} are not 0..{NODE_COUNT} without repeats"),
            Violation::NodeLevel { node, level } => write!(f, "node {node}: level {level} out of range"),
            Violation::StartNode { node } => write!(f, "start node {node} is not a level-0 node"),
            Violation::UnknownEndpoint { edge } => write!(f, "edge {} references an unknown node", e(edge)),
            Violation::SelfLoop { edge } => write!(f, "edge {} is a self-loop", e(edge)),
            Violation::DuplicateEdge { edge } => write!(f, "edge {} duplicates an earlier edge", e(edge)),
            Violation::RewardNotAllowed { edge } => write!(f, "edge {} has a reward outside the reward set", e(edge)),
            Violation::TopRewardBelowTop { edge, source_level } => {
                write!(f, "edge {} carries the top reward from level {source_level}", e(edge))
            }
            Violation::BaseLoopReward { edge } => write!(f, "level-0 edge {} must carry {BASE_LOOP_REWARD}", e(edge)),
            Violation::DeadEnd { node } => write!(f, "node {node} has no outgoing edge"),
            Violation::TooFewLosses { path, losses } => {
                write!(f, "path {path:?} reaches the top level with only {losses} losses")
            }
        }
    }
}

/// Checks every task constraint. The loss constraint is checked by
/// enumerating paths of up to ten edges out of every level-0 node.
pub fn validate_network(net: &Network) -> Vec<Violation> {
    let mut out = Vec::new();
    if net.nodes().len() != NODE_COUNT {
        out.push(Violation::NodeCount { found: net.nodes().len() });
    }
    if net.edges().len() != EDGE_COUNT {
        out.push(Violation::EdgeCount { found: net.edges().len() });
    }
    let ids: BTreeSet<NodeId> = net.nodes().iter().map(|n| n.id).collect();
    if ids.len() != net.nodes().len() || ids.iter().any(|&id| id >= NODE_COUNT) {
        out.push(Violation::NodeIds { ids: net.nodes().iter().map(|n| n.id).collect() });
    }
    for n in net.nodes() {
        if n.level as usize >= LEVEL_COUNT {
            out.push(Violation::NodeLevel { node: n.id, level: n.level });
        }
    }
    if net.level(net.start_node()) != Some(0) {
        out.push(Violation::StartNode { node: net.start_node() });
    }

    let mut seen = BTreeSet::new();
    for edge in net.edges() {
        let (src, dst) = (net.level(edge.source), net.level(edge.target));
        if src.is_none() || dst.is_none() {
            out.push(Violation::UnknownEndpoint { edge: *edge });
            continue;
        }
        if edge.source == edge.target {
            out.push(Violation::SelfLoop { edge: *edge });
        }
        if !seen.insert((edge.source, edge.target)) {
            out.push(Violation::DuplicateEdge { edge: *edge });
        }
        if reward_index(edge.reward).is_none() {
            out.push(Violation::RewardNotAllowed { edge: *edge });
        }
        if edge.reward == TOP_REWARD && src != Some(TOP_LEVEL) {
            out.push(Violation::TopRewardBelowTop { edge: *edge, source_level: src.unwrap_or_default() });
        }
        if src == Some(0) && dst == Some(0) && edge.reward != BASE_LOOP_REWARD {
            out.push(Violation::BaseLoopReward { edge: *edge });
        }
    }
    for n in net.nodes() {
        if net.out_edges(n.id).is_empty() {
            out.push(Violation::DeadEnd { node: n.id });
        }
    }
    if let Some(v) = find_cheap_ascent(net) {
        out.push(v);
    }
    out
}

/// Depth-first enumeration of level-0 to top-level paths with fewer than
/// three losses. Walks stop at the first top-level node and at any return
/// to level 0, and never revisit a node: each pruned continuation is
/// dominated by a shorter walk that is enumerated on its own.
fn find_cheap_ascent(net: &Network) -> Option<Violation> {
    fn dfs(net: &Network, path: &mut Vec<NodeId>, losses: usize) -> Option<Violation> {
        let here = *path.last().unwrap();
        if path.len() > 1 {
            match net.level(here) {
                Some(TOP_LEVEL) => {
                    return (losses < MIN_LOSSES_TO_TOP).then(|| Violation::TooFewLosses { path: path.clone(), losses });
                }
                Some(0) | None => return None,
                _ => {}
            }
        }
        if path.len() > MOVES_PER_EPISODE {
            return None;
        }
        for &(next, reward) in net.out_edges(here) {
            if path.contains(&next) {
                continue;
            }
            path.push(next);
            let found = dfs(net, path, losses + usize::from(reward < 0));
            path.pop();
            if found.is_some() {
                return found;
            }
        }
        None
    }

    let mut starts: Vec<NodeId> = net.nodes().iter().filter(|n| n.level == 0).map(|n| n.id).collect();
    starts.sort_unstable();
    starts.into_iter().find_map(|s| dfs(net, &mut vec![s], 0))
}

/// Fewest negative edges on any walk from a level-0 node to a top-level
/// node (0-1 breadth-first search), or `None` if the top level is
/// unreachable.
pub fn min_losses_to_top(net: &Network) -> Option<usize> {
    let slots = net.nodes().iter().map(|n| n.id + 1).max().unwrap_or(0);
    let mut dist = vec![usize::MAX; slots];
    let mut queue = VecDeque::new();
    for n in net.nodes().iter().filter(|n| n.level == 0) {
        dist[n.id] = 0;
        queue.push_back(n.id);
    }
    while let Some(u) = queue.pop_front() {
        for &(v, r) in net.out_edges(u) {
            if v >= slots {
                continue;
            }
            let w = usize::from(r < 0);
            if dist[u] + w < dist[v] {
                dist[v] = dist[u] + w;
                if w == 0 {
                    queue.push_front(v);
                } else {
                    queue.push_back(v);
                }
            }
        }
    }
    net.nodes()
        .iter()
        .filter(|n| n.level == TOP_LEVEL)
        .map(|n| dist[n.id])
        .filter(|&d| d != usize::MAX)
        .min()
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::{canonical, with_reward, with_target};
    use super::*;

    #[test]
    fn top_reward_from_level_two_is_named() {
        // 7 -> 8 is a level-2 internal edge
        let net = with_reward(&canonical(), 7, 8, 400);
        let v = validate_network(&net);
        assert_eq!(
            v,
            vec![Violation::TopRewardBelowTop { edge: Edge { source: 7, target: 8, reward: 400 }, source_level: 2 }]
        );
        assert!(v[0].to_string().contains("7->8"));
    }

    #[test]
    fn two_loss_shortcut_is_one_path_violation() {
        // 3 -> 5 (level 1 internal) becomes a level-skip 3 -> 9 with a loss
        let net = with_target(&canonical(), 3, 5, 9, -50);
        let v = validate_network(&net);
        assert_eq!(v.len(), 1, "{v:?}");
        match &v[0] {
            Violation::TooFewLosses { path, losses } => {
                assert_eq!(*losses, 2);
                assert_eq!(path.first(), Some(&0));
                assert_eq!(path.last(), Some(&9));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(min_losses_to_top(&net), Some(2));
    }

    #[test]
    fn base_level_edges_must_pay_200() {
        let net = with_reward(&canonical(), 1, 2, 100);
        assert_eq!(
            validate_network(&net),
            vec![Violation::BaseLoopReward { edge: Edge { source: 1, target: 2, reward: 100 } }]
        );
    }

    #[test]
    fn structural_violations() {
        let base = canonical();
        let mut edges = base.edges().to_vec();
        edges.retain(|e| e.source != 2);
        edges.push(Edge { source: 3, target: 3, reward: 0 });
        edges.push(Edge { source: 3, target: 4, reward: 0 });
        edges.push(Edge { source: 4, target: 5, reward: 7 });
        let net = Network::new("broken", 4, base.nodes().to_vec(), edges);
        let v = validate_network(&net);
        assert!(v.contains(&Violation::EdgeCount { found: 31 }));
        assert!(v.contains(&Violation::StartNode { node: 4 }));
        assert!(v.contains(&Violation::SelfLoop { edge: Edge { source: 3, target: 3, reward: 0 } }));
        assert!(v.contains(&Violation::DuplicateEdge { edge: Edge { source: 3, target: 4, reward: 0 } }));
        assert!(v.contains(&Violation::RewardNotAllowed { edge: Edge { source: 4, target: 5, reward: 7 } }));
        assert!(v.contains(&Violation::DeadEnd { node: 2 }));
    }

    #[test]
    fn loss_count_agrees_with_bfs_on_canonical() {
        assert_eq!(min_losses_to_top(&canonical()), Some(3));
    }
}

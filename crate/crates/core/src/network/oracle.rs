use super::{Network, NodeId, Trajectory, MOVES_PER_EPISODE};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleResult {
    pub score: i32,
    pub trajectory: Trajectory,
}

/// Best achievable 10-move score by exhaustive enumeration of every edge
/// sequence from the start node. Among maximizers, the lexicographically
/// smallest move sequence wins. Returns `None` if no 10-move walk exists.
pub fn oracle_best_score(net: &Network) -> Option<OracleResult> {
    struct Search<'a> {
        net: &'a Network,
        path: Vec<NodeId>,
        best: Option<(i32, Vec<NodeId>)>,
    }

    impl Search<'_> {
        fn walk(&mut self, at: NodeId, total: i32) {
            if self.path.len() == MOVES_PER_EPISODE {
                if self.best.as_ref().is_none_or(|(b, _)| total > *b) {
                    self.best = Some((total, self.path.clone()));
                }
                return;
            }
            for &(next, reward) in self.net.out_edges(at) {
                self.path.push(next);
                self.walk(next, total + reward);
                self.path.pop();
            }
        }
    }

    let mut s = Search { net, path: Vec::with_capacity(MOVES_PER_EPISODE), best: None };
    s.walk(net.start_node(), 0);
    let (score, moves) = s.best?;
    let trajectory = Trajectory::play(net, &moves).expect("enumerated moves follow edges");
    Some(OracleResult { score, trajectory })
}

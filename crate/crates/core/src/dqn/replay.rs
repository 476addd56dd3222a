use std::collections::VecDeque;

use rand::seq::index;

use super::model::{Features, ACTIONS};
use crate::seed;

/// One recorded move: what the player saw, what it did, what it got.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub features: Features,
    pub mask: [bool; ACTIONS],
    pub action: usize,
    pub reward: i32,
}

/// A complete episode. Recurrent training replays whole sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub steps: Vec<Transition>,
}

impl Episode {
    pub fn total(&self) -> i32 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn features(&self) -> Vec<Features> {
        self.steps.iter().map(|s| s.features).collect()
    }
}

/// Ring of whole episodes, oldest evicted first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    episodes: VecDeque<Episode>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer { episodes: VecDeque::with_capacity(capacity), capacity }
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn push(&mut self, episode: Episode) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
    }

    /// `batch` distinct episodes drawn uniformly, or `None` if fewer are
    /// stored.
    pub fn sample(&self, batch: usize, rng: &mut seed::Rng) -> Option<Vec<&Episode>> {
        if self.episodes.len() < batch {
            return None;
        }
        Some(index::sample(rng, self.episodes.len(), batch).into_iter().map(|i| &self.episodes[i]).collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Episode> {
        self.episodes.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ep(reward: i32) -> Episode {
        Episode { steps: vec![Transition { features: [0.0; 60], mask: [true; 12], action: 0, reward }] }
    }

    #[test]
    fn evicts_oldest_first() {
        let mut b = ReplayBuffer::new(3);
        for r in 0..5 {
            b.push(ep(r));
        }
        let totals: Vec<i32> = b.iter().map(Episode::total).collect();
        assert_eq!(totals, vec![2, 3, 4]);
    }

    #[test]
    fn sampling_needs_a_full_batch() {
        let mut b = ReplayBuffer::new(10);
        let mut rng = seed::rng(0);
        b.push(ep(1));
        assert!(b.sample(2, &mut rng).is_none());
        b.push(ep(2));
        let s = b.sample(2, &mut rng).unwrap();
        assert_ne!(s[0].total(), s[1].total());
    }
}

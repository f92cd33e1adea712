//! Uniform replay buffer over full transition records, including the
//! trajectory vectors current when the transition was collected.

use std::collections::VecDeque;

use rand::seq::index;
use rand_chacha::ChaCha8Rng;

use crate::trajmodel::TrajectoryVec;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub tau_prev: TrajectoryVec,
    pub tau_next: TrajectoryVec,
    pub done: bool,
}

pub struct ReplayBuffer {
    items: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1);
        ReplayBuffer {
            items: VecDeque::new(),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Transition {
        &self.items[idx]
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    /// Distinct uniform indices for one minibatch.
    pub fn sample_indices(&self, rng: &mut ChaCha8Rng, batch: usize) -> Vec<usize> {
        assert!(batch <= self.items.len(), "buffer underfilled");
        index::sample(rng, self.items.len(), batch).into_vec()
    }
}

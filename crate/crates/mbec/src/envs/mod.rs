//! Environments: a deterministic-core maze family, two classic-control
//! tasks, and observation/reward noise wrappers. All stochasticity flows
//! through caller-provided RNGs so seeded runs replay exactly.

mod classic;
mod maze;
mod noise;

pub use classic::{CartPole, MountainCar};
pub use maze::{MazeEnv, MazeMode, MAZE_MAX_STEPS, NOISY_FEATURE_DIM};
pub use noise::{NoiseConfig, NoisyEnv};

use rand_chacha::ChaCha8Rng;

/// Result of one environment transition.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

pub trait Environment {
    fn obs_dim(&self) -> usize;
    fn num_actions(&self) -> usize;
    /// Start a new episode and return the first observation.
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64>;
    /// Advance one step. Calling after `done` without a reset is a logic
    /// error and may panic.
    fn step(&mut self, action: usize, rng: &mut ChaCha8Rng) -> StepOutcome;
}

impl Environment for Box<dyn Environment> {
    fn obs_dim(&self) -> usize {
        (**self).obs_dim()
    }

    fn num_actions(&self) -> usize {
        (**self).num_actions()
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (**self).reset(rng)
    }

    fn step(&mut self, action: usize, rng: &mut ChaCha8Rng) -> StepOutcome {
        (**self).step(action, rng)
    }
}

//! Cart-pole and mountain-car with the canonical published dynamics and
//! 200-step episode caps.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Environment, StepOutcome};

const CARTPOLE_GRAVITY: f64 = 9.8;
const CARTPOLE_MASSCART: f64 = 1.0;
const CARTPOLE_MASSPOLE: f64 = 0.1;
const CARTPOLE_HALF_LENGTH: f64 = 0.5;
const CARTPOLE_FORCE: f64 = 10.0;
const CARTPOLE_DT: f64 = 0.02;
const CARTPOLE_X_LIMIT: f64 = 2.4;
const CARTPOLE_THETA_LIMIT: f64 = 12.0 * std::f64::consts::PI / 180.0;
pub const CLASSIC_MAX_STEPS: u32 = 200;

/// Pole balancing: state (x, x_dot, theta, theta_dot), semi-implicit-free
/// Euler integration, +1 reward per step.
pub struct CartPole {
    state: [f64; 4],
    steps: u32,
}

impl CartPole {
    pub fn new() -> Self {
        CartPole {
            state: [0.0; 4],
            steps: 0,
        }
    }

    pub fn state(&self) -> [f64; 4] {
        self.state
    }
}

impl Default for CartPole {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for CartPole {
    fn obs_dim(&self) -> usize {
        4
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        for v in self.state.iter_mut() {
            *v = rng.gen_range(-0.05..0.05);
        }
        self.steps = 0;
        self.state.to_vec()
    }

    fn step(&mut self, action: usize, rng: &mut ChaCha8Rng) -> StepOutcome {
        assert!(action < 2, "cart-pole action out of range");
        let _ = rng;
        let [x, x_dot, theta, theta_dot] = self.state;
        let force = if action == 1 {
            CARTPOLE_FORCE
        } else {
            -CARTPOLE_FORCE
        };
        let total_mass = CARTPOLE_MASSCART + CARTPOLE_MASSPOLE;
        let polemass_length = CARTPOLE_MASSPOLE * CARTPOLE_HALF_LENGTH;
        let cos = theta.cos();
        let sin = theta.sin();
        let temp = (force + polemass_length * theta_dot * theta_dot * sin) / total_mass;
        let theta_acc = (CARTPOLE_GRAVITY * sin - cos * temp)
            / (CARTPOLE_HALF_LENGTH * (4.0 / 3.0 - CARTPOLE_MASSPOLE * cos * cos / total_mass));
        let x_acc = temp - polemass_length * theta_acc * cos / total_mass;
        self.state = [
            x + CARTPOLE_DT * x_dot,
            x_dot + CARTPOLE_DT * x_acc,
            theta + CARTPOLE_DT * theta_dot,
            theta_dot + CARTPOLE_DT * theta_acc,
        ];
        self.steps += 1;
        let fell = self.state[0].abs() > CARTPOLE_X_LIMIT
            || self.state[2].abs() > CARTPOLE_THETA_LIMIT;
        let done = fell || self.steps >= CLASSIC_MAX_STEPS;
        StepOutcome {
            obs: self.state.to_vec(),
            reward: 1.0,
            done,
        }
    }
}

const MC_FORCE: f64 = 0.001;
const MC_GRAVITY: f64 = 0.0025;
const MC_POS_MIN: f64 = -1.2;
const MC_POS_MAX: f64 = 0.6;
const MC_VEL_LIMIT: f64 = 0.07;
const MC_GOAL: f64 = 0.5;

/// Underpowered car in a valley: state (position, velocity), -1 reward per
/// step, goal at position 0.5.
pub struct MountainCar {
    pos: f64,
    vel: f64,
    steps: u32,
}

impl MountainCar {
    pub fn new() -> Self {
        MountainCar {
            pos: -0.5,
            vel: 0.0,
            steps: 0,
        }
    }

    pub fn state(&self) -> (f64, f64) {
        (self.pos, self.vel)
    }
}

impl Default for MountainCar {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for MountainCar {
    fn obs_dim(&self) -> usize {
        2
    }

    fn num_actions(&self) -> usize {
        3
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.pos = rng.gen_range(-0.6..-0.4);
        self.vel = 0.0;
        self.steps = 0;
        vec![self.pos, self.vel]
    }

    fn step(&mut self, action: usize, rng: &mut ChaCha8Rng) -> StepOutcome {
        assert!(action < 3, "mountain-car action out of range");
        let _ = rng;
        self.vel += (action as f64 - 1.0) * MC_FORCE + (3.0 * self.pos).cos() * (-MC_GRAVITY);
        self.vel = self.vel.clamp(-MC_VEL_LIMIT, MC_VEL_LIMIT);
        self.pos += self.vel;
        self.pos = self.pos.clamp(MC_POS_MIN, MC_POS_MAX);
        if self.pos <= MC_POS_MIN && self.vel < 0.0 {
            self.vel = 0.0;
        }
        self.steps += 1;
        let done = self.pos >= MC_GOAL || self.steps >= CLASSIC_MAX_STEPS;
        StepOutcome {
            obs: vec![self.pos, self.vel],
            reward: -1.0,
            done,
        }
    }
}

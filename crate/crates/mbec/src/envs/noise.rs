//! Observation and reward corruption around an inner environment. The
//! wrapper owns its RNG so noise draws never perturb the inner
//! environment's stream; true dynamics and termination are untouched.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Environment, StepOutcome};

/// Which corruptions are active. At most one reward noise kind may be
/// enabled at a time.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NoiseConfig {
    /// Std of additive zero-mean Gaussian reward noise.
    pub gaussian_reward_std: f64,
    /// Probability of observing the negated reward.
    pub bernoulli_reward_p: f64,
    /// Probability that the observed next state repeats the previous
    /// observation instead of the true one.
    pub transition_freeze_p: f64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.gaussian_reward_std < 0.0 {
            return Err(format!(
                "gaussian_reward_std must be >= 0, got {}",
                self.gaussian_reward_std
            ));
        }
        for (name, p) in [
            ("bernoulli_reward_p", self.bernoulli_reward_p),
            ("transition_freeze_p", self.transition_freeze_p),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        if self.gaussian_reward_std > 0.0 && self.bernoulli_reward_p > 0.0 {
            return Err("at most one reward noise kind may be active".into());
        }
        Ok(())
    }

    pub fn is_noop(&self) -> bool {
        self.gaussian_reward_std == 0.0
            && self.bernoulli_reward_p == 0.0
            && self.transition_freeze_p == 0.0
    }
}

pub struct NoisyEnv<E> {
    inner: E,
    cfg: NoiseConfig,
    rng: ChaCha8Rng,
    /// Most recent observation shown to the agent; freeze repeats it.
    last_obs: Vec<f64>,
}

impl<E: Environment> NoisyEnv<E> {
    pub fn new(inner: E, cfg: NoiseConfig, rng: ChaCha8Rng) -> Self {
        cfg.validate().expect("invalid noise config");
        NoisyEnv {
            inner,
            cfg,
            rng,
            last_obs: Vec::new(),
        }
    }
}

impl<E: Environment> Environment for NoisyEnv<E> {
    fn obs_dim(&self) -> usize {
        self.inner.obs_dim()
    }

    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let obs = self.inner.reset(rng);
        self.last_obs = obs.clone();
        obs
    }

    fn step(&mut self, action: usize, rng: &mut ChaCha8Rng) -> StepOutcome {
        let mut out = self.inner.step(action, rng);
        // Fixed draw order keeps replays aligned: freeze first, reward next.
        if self.cfg.transition_freeze_p > 0.0 {
            let freeze = self.rng.gen::<f64>() < self.cfg.transition_freeze_p;
            if freeze {
                out.obs = self.last_obs.clone();
            } else {
                self.last_obs = out.obs.clone();
            }
        } else {
            self.last_obs = out.obs.clone();
        }
        if self.cfg.gaussian_reward_std > 0.0 {
            let noise = Normal::new(0.0, self.cfg.gaussian_reward_std)
                .expect("validated std")
                .sample(&mut self.rng);
            out.reward += noise;
        } else if self.cfg.bernoulli_reward_p > 0.0
            && self.rng.gen::<f64>() < self.cfg.bernoulli_reward_p
        {
            out.reward = -out.reward;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{CartPole, MazeEnv, MazeMode, MountainCar};
    use rand::SeedableRng;

    fn noise_rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn rejects_two_reward_noise_kinds() {
        let cfg = NoiseConfig {
            gaussian_reward_std: 0.2,
            bernoulli_reward_p: 0.2,
            transition_freeze_p: 0.0,
        };
        assert!(cfg.validate().is_err());
        assert!(NoiseConfig::default().validate().is_ok());
        assert!(NoiseConfig {
            transition_freeze_p: 1.5,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn noop_config_passes_everything_through() {
        let mut env_rng = ChaCha8Rng::seed_from_u64(1);
        let mut plain = CartPole::new();
        let mut wrapped = NoisyEnv::new(CartPole::new(), NoiseConfig::default(), noise_rng(2));
        let mut env_rng2 = ChaCha8Rng::seed_from_u64(1);
        let a = plain.reset(&mut env_rng);
        let b = wrapped.reset(&mut env_rng2);
        assert_eq!(a, b);
        for i in 0..50 {
            let oa = plain.step(i % 2, &mut env_rng);
            let ob = wrapped.step(i % 2, &mut env_rng2);
            assert_eq!(oa, ob);
            if oa.done {
                break;
            }
        }
    }

    #[test]
    fn gaussian_noise_shifts_rewards_but_not_termination() {
        let cfg = NoiseConfig {
            gaussian_reward_std: 0.2,
            ..Default::default()
        };
        let mut env_rng = ChaCha8Rng::seed_from_u64(3);
        let mut env_rng2 = ChaCha8Rng::seed_from_u64(3);
        let mut plain = CartPole::new();
        let mut wrapped = NoisyEnv::new(CartPole::new(), cfg, noise_rng(4));
        plain.reset(&mut env_rng);
        wrapped.reset(&mut env_rng2);
        let mut sum = 0.0;
        let mut n = 0;
        loop {
            let oa = plain.step(1, &mut env_rng);
            let ob = wrapped.step(1, &mut env_rng2);
            assert_eq!(oa.obs, ob.obs, "gaussian reward noise must not touch obs");
            assert_eq!(oa.done, ob.done);
            sum += ob.reward - oa.reward;
            n += 1;
            if oa.done {
                break;
            }
        }
        assert!(n > 5);
        assert!(sum != 0.0, "noise never fired");
        assert!(sum.abs() < 0.2 * (n as f64).sqrt() * 5.0, "noise implausibly large");
    }

    #[test]
    fn bernoulli_flip_fraction_matches_probability() {
        let cfg = NoiseConfig {
            bernoulli_reward_p: 0.2,
            ..Default::default()
        };
        let mut env_rng = ChaCha8Rng::seed_from_u64(5);
        let mut wrapped = NoisyEnv::new(CartPole::new(), cfg, noise_rng(6));
        wrapped.reset(&mut env_rng);
        let mut flipped = 0usize;
        let total = 100_000usize;
        for i in 0..total {
            let out = wrapped.step(i % 2, &mut env_rng);
            // True cart-pole reward is exactly +1, so -1 marks a flip.
            if out.reward < 0.0 {
                flipped += 1;
            }
            if out.done {
                wrapped.reset(&mut env_rng);
            }
        }
        let frac = flipped as f64 / total as f64;
        assert!((frac - 0.2).abs() < 0.01, "flip fraction {frac}");
    }

    #[test]
    fn full_freeze_pins_the_observation_while_dynamics_advance() {
        let cfg = NoiseConfig {
            transition_freeze_p: 1.0,
            ..Default::default()
        };
        let mut env_rng = ChaCha8Rng::seed_from_u64(7);
        let mut env_rng2 = ChaCha8Rng::seed_from_u64(7);
        let mut plain = MountainCar::new();
        let mut wrapped = NoisyEnv::new(MountainCar::new(), cfg, noise_rng(8));
        let first = wrapped.reset(&mut env_rng2);
        plain.reset(&mut env_rng);
        let mut plain_done_at = None;
        let mut wrapped_done_at = None;
        for i in 0..CLASSIC_STEPS {
            let action = 2;
            if plain_done_at.is_none() {
                let oa = plain.step(action, &mut env_rng);
                if oa.done {
                    plain_done_at = Some(i);
                }
            }
            if wrapped_done_at.is_none() {
                let ob = wrapped.step(action, &mut env_rng2);
                assert_eq!(ob.obs, first, "frozen observation changed");
                if ob.done {
                    wrapped_done_at = Some(i);
                }
            }
        }
        assert_eq!(
            plain_done_at, wrapped_done_at,
            "termination must track the hidden state"
        );
    }

    const CLASSIC_STEPS: usize = 200;

    #[test]
    fn partial_freeze_chains_and_hidden_state_is_untouched() {
        let cfg = NoiseConfig {
            transition_freeze_p: 0.5,
            ..Default::default()
        };
        let mut env_rng = ChaCha8Rng::seed_from_u64(9);
        let mut env_rng2 = ChaCha8Rng::seed_from_u64(9);
        let mut build1 = ChaCha8Rng::seed_from_u64(100);
        let mut build2 = ChaCha8Rng::seed_from_u64(100);
        let mut plain = MazeEnv::new(3, MazeMode::Plain, &mut build1);
        let mut wrapped = NoisyEnv::new(
            MazeEnv::new(3, MazeMode::Plain, &mut build2),
            cfg,
            noise_rng(10),
        );
        let true_obs = plain.reset(&mut env_rng);
        let mut shown = wrapped.reset(&mut env_rng2);
        assert_eq!(true_obs, shown);
        let mut froze = 0;
        let mut action_rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let action = action_rng.gen_range(0..4);
            let oa = plain.step(action, &mut env_rng);
            let ob = wrapped.step(action, &mut env_rng2);
            assert_eq!(oa.reward, ob.reward, "freeze must not alter rewards");
            assert_eq!(oa.done, ob.done, "freeze must not alter termination");
            if ob.obs == shown && ob.obs != oa.obs {
                froze += 1;
            } else {
                // Not frozen: the shown observation is the true one.
                assert_eq!(ob.obs, oa.obs);
            }
            shown = ob.obs.clone();
            if oa.done {
                let fresh = plain.reset(&mut env_rng);
                shown = wrapped.reset(&mut env_rng2);
                assert_eq!(fresh, shown, "reset is never frozen");
            }
        }
        assert!(froze > 100, "freeze fired only {froze}/500 times");
    }
}

//! Acting-time value assembly: planning values from the reward model plus
//! episodic reads, epsilon-greedy selection, Monte-Carlo returns, and the
//! running contribution window.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::diffnum::ParamSet;
use crate::memcore::{EpisodicMemory, MemoryError, ReadRule};
use crate::trajmodel::{key_of, TrajModel, TrajectoryVec};
use crate::valuenets::RewardModel;

/// Discounted sum of a reward suffix.
pub fn mc_returns(rewards: &[f64], gamma: f64) -> f64 {
    let mut v = 0.0;
    for r in rewards.iter().rev() {
        v = r + gamma * v;
    }
    v
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    assert!(!values.is_empty());
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy over precomputed action values. Always consumes exactly
/// one uniform draw, plus one more when exploring.
pub fn select_action(values: &[f64], eps: f64, rng: &mut ChaCha8Rng) -> usize {
    debug_assert!((0.0..=1.0).contains(&eps));
    if rng.gen::<f64>() < eps {
        rng.gen_range(0..values.len())
    } else {
        argmax(values)
    }
}

/// Planning values, one per action.
#[derive(Clone, Debug)]
pub struct QMbec {
    pub values: Vec<f64>,
    /// True when the memory was empty and the episodic term is absent.
    pub memory_cold: bool,
}

/// Estimated reward plus discounted episodic read of the post-action
/// trajectory, per action.
#[allow(clippy::too_many_arguments)]
pub fn q_mbec(
    traj: &TrajModel,
    phi: &ParamSet,
    reward: &RewardModel,
    reward_ps: &ParamSet,
    memory: &EpisodicMemory,
    state: &[f64],
    tau_prev: &TrajectoryVec,
    rule: ReadRule,
    k: usize,
    normalize: bool,
    gamma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<QMbec, MemoryError> {
    let n = traj.num_actions();
    let mut values = Vec::with_capacity(n);
    let cold = memory.is_empty();
    for a in 0..n {
        let mut v = reward.predict(reward_ps, state, a);
        if !cold {
            let tau = traj.step(phi, state, a, tau_prev);
            v += gamma * memory.read(&key_of(&tau, normalize), rule, k, rng)?;
        }
        values.push(v);
    }
    Ok(QMbec {
        values,
        memory_cold: cold,
    })
}

/// Running window of per-step argmax-agreement indicators, mirroring how
/// much each value source drives the acted policy.
pub struct ContributionWindow {
    window: VecDeque<(bool, bool)>,
    cap: usize,
    episodic_hits: usize,
    semantic_hits: usize,
}

impl ContributionWindow {
    pub fn new(cap: usize) -> Self {
        assert!(cap >= 1);
        ContributionWindow {
            window: VecDeque::with_capacity(cap),
            cap,
            episodic_hits: 0,
            semantic_hits: 0,
        }
    }

    pub fn push(&mut self, episodic_agrees: bool, semantic_agrees: bool) {
        if self.window.len() == self.cap {
            let (e, s) = self.window.pop_front().unwrap();
            self.episodic_hits -= e as usize;
            self.semantic_hits -= s as usize;
        }
        self.window.push_back((episodic_agrees, semantic_agrees));
        self.episodic_hits += episodic_agrees as usize;
        self.semantic_hits += semantic_agrees as usize;
    }

    /// (episodic fraction, semantic fraction) over the current window.
    pub fn fractions(&self) -> (f64, f64) {
        let n = self.window.len().max(1) as f64;
        (
            self.episodic_hits as f64 / n,
            self.semantic_hits as f64 / n,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnum::Tensor;
    use rand::SeedableRng;

    #[test]
    fn mc_returns_match_brute_force() {
        assert_eq!(mc_returns(&[1.0, 0.0, 2.0], 0.5), 1.5);
        assert_eq!(mc_returns(&[0.0, 0.0, 0.0], 0.9), 0.0);
        assert_eq!(mc_returns(&[1.0, 1.0, 1.0], 1.0), 3.0);
        let rewards = [0.3, -0.7, 1.1, 0.05];
        let gamma: f64 = 0.93;
        let brute: f64 = rewards
            .iter()
            .enumerate()
            .map(|(i, r)| gamma.powi(i as i32) * r)
            .sum();
        assert!((mc_returns(&rewards, gamma) - brute).abs() < 1e-12);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
        assert_eq!(argmax(&[-1.0, -1.0, 0.5, 0.5]), 2);
    }

    #[test]
    fn full_exploration_is_uniform_within_three_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let values = [0.0, 0.0, 0.0, 10.0];
        let mut counts = [0usize; 4];
        let draws = 10_000;
        for _ in 0..draws {
            counts[select_action(&values, 1.0, &mut rng)] += 1;
        }
        let expect = draws as f64 / 4.0;
        let sigma = (draws as f64 * 0.25 * 0.75).sqrt();
        for (a, c) in counts.iter().enumerate() {
            assert!(
                (*c as f64 - expect).abs() < 3.0 * sigma,
                "action {a} drawn {c} times"
            );
        }
    }

    #[test]
    fn zero_exploration_is_greedy_with_low_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(select_action(&[1.0, 3.0, 2.0], 0.0, &mut rng), 1);
        assert_eq!(select_action(&[2.0, 2.0], 0.0, &mut rng), 0);
    }

    fn zero_reward_model(state_dim: usize, actions: usize) -> (RewardModel, ParamSet) {
        let rm = RewardModel::new(state_dim, actions);
        let d = state_dim + actions;
        let mut ps = ParamSet::new();
        ps.insert("reward/w0", Tensor::matrix(32, d, vec![0.0; 32 * d]));
        ps.insert("reward/b0", Tensor::vector(vec![0.0; 32]));
        ps.insert("reward/w1", Tensor::matrix(1, 32, vec![0.0; 32]));
        ps.insert("reward/b1", Tensor::vector(vec![0.0]));
        (rm, ps)
    }

    fn small_traj(state_dim: usize, actions: usize, hidden: usize, seed: u64) -> (TrajModel, ParamSet) {
        let traj = TrajModel::new(state_dim, actions, hidden);
        let mut phi = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        traj.init_phi(&mut phi, &mut rng);
        (traj, phi)
    }

    #[test]
    fn zero_discount_reduces_to_reward_model() {
        let (traj, phi) = small_traj(2, 3, 4, 5);
        let (rm, mut rps) = zero_reward_model(2, 3);
        rps.get_mut("reward/b1").unwrap().data_mut()[0] = 0.25;
        let mut memory = EpisodicMemory::new(4, 10);
        memory.write(&[0.1; 4], 9.0, 0.5, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let out = q_mbec(
            &traj,
            &phi,
            &rm,
            &rps,
            &memory,
            &[0.3, -0.2],
            &TrajectoryVec::zeros(4),
            ReadRule::Average,
            2,
            false,
            0.0,
            &mut rng,
        )
        .unwrap();
        assert!(!out.memory_cold);
        for v in out.values {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_memory_is_flagged_cold_and_uses_reward_only() {
        let (traj, phi) = small_traj(2, 2, 4, 7);
        let (rm, rps) = zero_reward_model(2, 2);
        let memory = EpisodicMemory::new(4, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let out = q_mbec(
            &traj,
            &phi,
            &rm,
            &rps,
            &memory,
            &[0.0, 0.0],
            &TrajectoryVec::zeros(4),
            ReadRule::Mixed(0.7),
            3,
            false,
            0.99,
            &mut rng,
        )
        .unwrap();
        assert!(out.memory_cold);
        assert_eq!(out.values, vec![0.0, 0.0]);
    }

    #[test]
    fn single_slot_memory_gives_gamma_v_everywhere() {
        let (traj, phi) = small_traj(2, 3, 4, 9);
        let (rm, rps) = zero_reward_model(2, 3);
        let mut memory = EpisodicMemory::new(4, 10);
        memory.write(&[0.5, -0.5, 0.0, 0.2], 6.0, 0.5, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let out = q_mbec(
            &traj,
            &phi,
            &rm,
            &rps,
            &memory,
            &[0.1, 0.9],
            &TrajectoryVec::zeros(4),
            ReadRule::Average,
            5,
            false,
            0.5,
            &mut rng,
        )
        .unwrap();
        for v in out.values {
            assert!((v - 3.0).abs() < 1e-12, "expected gamma * v = 3, got {v}");
        }
    }

    #[test]
    fn three_action_values_match_manual_composition() {
        let (traj, phi) = small_traj(2, 3, 4, 11);
        let rm = RewardModel::new(2, 3);
        let mut rps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        rm.init(&mut rps, &mut rng);
        let mut memory = EpisodicMemory::new(4, 10);
        memory.write(&[0.2, 0.1, -0.3, 0.4], 2.0, 0.5, 1).unwrap();
        memory.write(&[-0.6, 0.5, 0.0, 0.1], -1.0, 0.5, 1).unwrap();
        let state = [0.4, -0.8];
        let tau = TrajectoryVec::zeros(4);
        let mut read_rng = ChaCha8Rng::seed_from_u64(13);
        let out = q_mbec(
            &traj, &phi, &rm, &rps, &memory, &state, &tau,
            ReadRule::Average, 2, true, 0.9, &mut read_rng,
        )
        .unwrap();
        for a in 0..3 {
            let stepped = traj.step(&phi, &state, a, &tau);
            let read = memory
                .read_resolved(&key_of(&stepped, true), true, 2)
                .unwrap();
            let expect = rm.predict(&rps, &state, a) + 0.9 * read;
            assert!((out.values[a] - expect).abs() < 1e-12, "action {a}");
        }
    }

    #[test]
    fn contribution_window_rolls_and_handles_partial_fill() {
        let mut w = ContributionWindow::new(3);
        w.push(true, false);
        assert_eq!(w.fractions(), (1.0, 0.0));
        w.push(false, true);
        let (e, s) = w.fractions();
        assert!((e - 0.5).abs() < 1e-12 && (s - 0.5).abs() < 1e-12);
        w.push(true, true);
        w.push(true, true);
        // Window now holds the last three: (f,t), (t,t), (t,t).
        let (e, s) = w.fractions();
        assert!((e - 2.0 / 3.0).abs() < 1e-12);
        assert!((s - 1.0).abs() < 1e-12);
    }
}

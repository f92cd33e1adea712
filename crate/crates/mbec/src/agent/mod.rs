//! The training loop: trajectory-keyed episodic control with an optional
//! parametric value head, plus the pure-parametric baseline obtained by
//! structurally disabling the episodic path.
//!
//! One loop serves all modes. Per step: assemble action values, act
//! epsilon-greedily, advance the trajectory, store the transition, maybe
//! refine the memory, train value and reward heads on one replay minibatch,
//! handle chunk boundaries, and on termination write all chunk trajectories
//! with their Monte-Carlo returns.

mod policy;
mod replay;
mod streams;

pub use policy::{argmax, mc_returns, q_mbec, select_action, ContributionWindow, QMbec};
pub use replay::{ReplayBuffer, Transition};
pub use streams::RngStreams;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::diffnum::{DiffnumError, ParamSet};
use crate::envs::Environment;
use crate::memcore::{EpisodicMemory, MemoryError, ReadRule};
use crate::trajmodel::{key_of, RecallMode, StateAction, TrajModel, TrajectoryVec};
use crate::util::rng::stream;
use crate::valuenets::{
    combined_q, sync_target, td_loss_batch, GateNet, QBreakdown, QNet, RewardModel, TdBatch,
    TdEpisodic, TdGate,
};

#[derive(thiserror::Error, Debug)]
pub enum AgentError {
    #[error("invalid config field {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("non-finite {loss} loss at step {step}")]
    NonFiniteLoss { loss: &'static str, step: u64 },
    #[error(transparent)]
    Graph(#[from] DiffnumError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Planning values only; no parametric value head.
    Mbec,
    /// Blended episodic and parametric values.
    MbecPlusPlus,
    /// Parametric values only; the episodic path never exists.
    Dqn,
}

/// Component switches for ablation arms. All off reproduces the full agent.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Ablations {
    /// Leave the trajectory model at its initialization.
    pub no_tr: bool,
    /// Train the trajectory model with the parallel-prediction loss.
    pub tp_loss: bool,
    /// Single-slot writes.
    pub kw1: bool,
    /// Never refine stored values.
    pub no_refine: bool,
    /// Constant blend weight instead of the learned gate.
    pub fixed_beta: Option<f64>,
    /// Structurally disable the episodic path while keeping the mode's
    /// network shapes; used for baseline-equivalence checks.
    pub disable_memory: bool,
}

#[derive(Clone, Debug)]
pub struct AgentConfig {
    pub total_steps: u64,
    /// Neighbors for reads and writes.
    pub k: usize,
    /// Trajectory chunk length between memory keys.
    pub chunk_len: usize,
    pub memory_capacity: usize,
    pub alpha_w: f64,
    pub gamma: f64,
    pub p_read: f64,
    pub p_u: f64,
    pub p_rec: f64,
    pub eps_start: f64,
    pub eps_final: f64,
    /// Fraction of the run over which epsilon decays linearly.
    pub eps_decay_frac: f64,
    pub lr_td: f64,
    pub lr_reward: f64,
    pub lr_tr: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub target_sync: u64,
    pub traj_hidden: usize,
    pub q_width: usize,
    pub tr_samples: usize,
    pub tr_noise_scale: f64,
    pub normalize_keys: bool,
    pub gate_uses_state: bool,
}

impl AgentConfig {
    fn base(total_steps: u64) -> Self {
        AgentConfig {
            total_steps,
            k: 5,
            chunk_len: 5,
            memory_capacity: 1000,
            alpha_w: 0.5,
            gamma: 0.99,
            p_read: 0.7,
            p_u: 0.1,
            p_rec: 0.5,
            eps_start: 1.0,
            eps_final: 0.01,
            eps_decay_frac: 0.1,
            lr_td: 1e-3,
            lr_reward: 1e-3,
            lr_tr: 1e-3,
            replay_capacity: 1_000_000,
            batch_size: 32,
            target_sync: 100,
            traj_hidden: 16,
            q_width: 128,
            tr_samples: 4,
            tr_noise_scale: 0.1,
            normalize_keys: false,
            gate_uses_state: false,
        }
    }

    pub fn maze_defaults(total_steps: u64) -> Self {
        Self::base(total_steps)
    }

    pub fn classic_defaults(total_steps: u64) -> Self {
        AgentConfig {
            k: 15,
            chunk_len: 10,
            memory_capacity: 3000,
            ..Self::base(total_steps)
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |field: &'static str, reason: String| AgentError::InvalidConfig { field, reason };
        let positive = [
            ("k", self.k),
            ("chunk_len", self.chunk_len),
            ("memory_capacity", self.memory_capacity),
            ("batch_size", self.batch_size),
            ("traj_hidden", self.traj_hidden),
            ("q_width", self.q_width),
            ("tr_samples", self.tr_samples),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(bad(field, "must be at least 1".into()));
            }
        }
        if self.target_sync == 0 {
            return Err(bad("target_sync", "must be at least 1".into()));
        }
        if self.replay_capacity < self.batch_size {
            return Err(bad(
                "replay_capacity",
                format!("must hold a batch of {}", self.batch_size),
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha_w) {
            return Err(bad("alpha_w", format!("must be in [0, 1], got {}", self.alpha_w)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(bad("gamma", format!("must be in (0, 1], got {}", self.gamma)));
        }
        for (field, p) in [
            ("p_read", self.p_read),
            ("p_u", self.p_u),
            ("p_rec", self.p_rec),
            ("eps_start", self.eps_start),
            ("eps_final", self.eps_final),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(bad(field, format!("must be in [0, 1], got {p}")));
            }
        }
        if self.eps_final > self.eps_start {
            return Err(bad("eps_final", "must not exceed eps_start".into()));
        }
        if !(self.eps_decay_frac > 0.0 && self.eps_decay_frac <= 1.0) {
            return Err(bad(
                "eps_decay_frac",
                format!("must be in (0, 1], got {}", self.eps_decay_frac),
            ));
        }
        for (field, lr) in [
            ("lr_td", self.lr_td),
            ("lr_reward", self.lr_reward),
            ("lr_tr", self.lr_tr),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(bad(field, format!("must be positive, got {lr}")));
            }
        }
        if self.tr_noise_scale < 0.0 {
            return Err(bad(
                "tr_noise_scale",
                format!("must be >= 0, got {}", self.tr_noise_scale),
            ));
        }
        Ok(())
    }
}

/// Linear decay from `start` to `finish` over the first `decay_frac` of the
/// run, then constant.
pub fn linear_eps(start: f64, finish: f64, decay_frac: f64, total_steps: u64, step: u64) -> f64 {
    let warm = (total_steps as f64 * decay_frac).ceil();
    if warm <= 0.0 {
        return finish;
    }
    let t = step as f64;
    if t >= warm {
        finish
    } else {
        start + (finish - start) * t / warm
    }
}

pub fn eps_at(cfg: &AgentConfig, step: u64) -> f64 {
    linear_eps(
        cfg.eps_start,
        cfg.eps_final,
        cfg.eps_decay_frac,
        cfg.total_steps,
        step,
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub episode: u64,
    pub reward: f64,
    pub episode_len: u32,
    pub eps: f64,
    pub episodic_contribution: f64,
    pub semantic_contribution: f64,
    pub memory_occupancy: usize,
    pub td_loss: Option<f64>,
    pub tr_loss: Option<f64>,
    pub reward_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub end_step: u64,
    pub total_reward: f64,
    pub length: u32,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsLog {
    pub steps: Vec<StepRecord>,
    pub episodes: Vec<EpisodeRecord>,
    /// Acted actions per step; kept in memory for equivalence checks, not
    /// part of the CSV schema.
    pub actions: Vec<usize>,
}

pub struct RunOutput {
    pub metrics: MetricsLog,
    pub memory: EpisodicMemory,
    /// Named parameter sets for checkpointing, mode-dependent.
    pub params: Vec<(&'static str, ParamSet)>,
    pub syncs: u64,
}

struct TdNets<'a> {
    qnet: &'a QNet,
    gate: &'a GateNet,
    traj: &'a TrajModel,
    rewardm: &'a RewardModel,
}

/// One TD minibatch: assemble constants (targets, episodic reads), run the
/// differentiable loss, and apply optimizer steps.
#[allow(clippy::too_many_arguments)]
fn train_td(
    cfg: &AgentConfig,
    ab: &Ablations,
    nets: &TdNets,
    theta: &mut ParamSet,
    theta_target: &ParamSet,
    beta: &mut ParamSet,
    phi: &ParamSet,
    reward_ps: &ParamSet,
    memory: &EpisodicMemory,
    replay: &ReplayBuffer,
    idxs: &[usize],
    episodic_on: bool,
    read_rng: &mut ChaCha8Rng,
) -> Result<f64, AgentError> {
    let b = idxs.len();
    let n_a = nets.traj.num_actions();
    let mut obs = Vec::with_capacity(b);
    let mut actions = Vec::with_capacity(b);
    let mut targets = vec![0.0; b];
    for idx in idxs {
        let t = replay.get(*idx);
        obs.push(t.state.clone());
        actions.push(t.action);
    }
    let episodic = if episodic_on {
        // Batched reads: one current-side query per transition, then one
        // per action for non-terminal target sides. Mixed-rule draws happen
        // in query order.
        let mut queries = Vec::new();
        let mut avg = Vec::new();
        let mut target_offset = vec![usize::MAX; b];
        for (i, idx) in idxs.iter().enumerate() {
            let t = replay.get(*idx);
            queries.push(key_of(
                &nets.traj.step(phi, &t.state, t.action, &t.tau_prev),
                cfg.normalize_keys,
            ));
            avg.push(read_rng.gen::<f64>() < cfg.p_read);
            if !t.done {
                target_offset[i] = queries.len();
                for a in 0..n_a {
                    queries.push(key_of(
                        &nets.traj.step(phi, &t.next_state, a, &t.tau_next),
                        cfg.normalize_keys,
                    ));
                    avg.push(read_rng.gen::<f64>() < cfg.p_read);
                }
            }
        }
        let reads = memory.read_batch(&queries, cfg.k, &avg)?;
        let mut cur_offset = 0usize;
        let mut qmbec = Vec::with_capacity(b);
        let mut gate_inputs = Vec::with_capacity(b);
        for (i, idx) in idxs.iter().enumerate() {
            let t = replay.get(*idx);
            qmbec.push(
                nets.rewardm.predict(reward_ps, &t.state, t.action)
                    + cfg.gamma * reads[cur_offset],
            );
            if ab.fixed_beta.is_none() {
                gate_inputs.push(nets.gate.input(&t.tau_prev.hidden, &t.state));
            }
            targets[i] = if t.done {
                t.reward
            } else {
                let sem = nets.qnet.forward(theta_target, &t.next_state);
                let g = match ab.fixed_beta {
                    Some(fixed) => fixed,
                    None => nets
                        .gate
                        .forward(beta, &nets.gate.input(&t.tau_next.hidden, &t.next_state)),
                };
                let base = target_offset[i];
                let mut best = f64::NEG_INFINITY;
                for a in 0..n_a {
                    let qm = nets.rewardm.predict(reward_ps, &t.next_state, a)
                        + cfg.gamma * reads[base + a];
                    let q = sem[a] + g * qm;
                    if q > best {
                        best = q;
                    }
                }
                t.reward + cfg.gamma * best
            };
            cur_offset += 1 + if t.done { 0 } else { n_a };
        }
        let gate = match ab.fixed_beta {
            Some(fixed) => TdGate::Fixed(fixed),
            None => TdGate::Learned { inputs: gate_inputs },
        };
        Some(TdEpisodic { gate, qmbec })
    } else {
        for (i, idx) in idxs.iter().enumerate() {
            let t = replay.get(*idx);
            targets[i] = if t.done {
                t.reward
            } else {
                let sem = nets.qnet.forward(theta_target, &t.next_state);
                t.reward + cfg.gamma * sem.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            };
        }
        None
    };
    let batch = TdBatch {
        obs,
        actions,
        targets,
        episodic,
    };
    theta.zero_grads();
    let train_gate = episodic_on && ab.fixed_beta.is_none();
    if train_gate {
        beta.zero_grads();
    }
    let loss = td_loss_batch(nets.qnet, nets.gate, theta, beta, &batch)?;
    theta.adam_step(cfg.lr_td)?;
    if train_gate {
        beta.adam_step(cfg.lr_td)?;
    }
    Ok(loss)
}

/// Run one seeded training session to completion.
pub fn run_training<E: Environment + ?Sized>(
    cfg: &AgentConfig,
    mode: Mode,
    ab: &Ablations,
    env: &mut E,
    master_seed: u64,
) -> Result<RunOutput, AgentError> {
    cfg.validate()?;
    let obs_dim = env.obs_dim();
    let n_actions = env.num_actions();
    let mut streams = RngStreams::new(master_seed);

    let use_traj = mode != Mode::Dqn;
    let use_q = mode != Mode::Mbec;
    let memory_active = use_traj && !ab.disable_memory;
    let learned_gate = mode == Mode::MbecPlusPlus && ab.fixed_beta.is_none();

    let traj = TrajModel::new(obs_dim, n_actions, cfg.traj_hidden);
    let mut phi = ParamSet::new();
    let mut omega = ParamSet::new();
    let rewardm = RewardModel::new(obs_dim, n_actions);
    let mut reward_ps = ParamSet::new();
    if use_traj {
        traj.init_phi(&mut phi, &mut stream(master_seed, "init/traj"));
        traj.init_omega(&mut omega, &mut stream(master_seed, "init/recon"));
        rewardm.init(&mut reward_ps, &mut stream(master_seed, "init/reward"));
    }
    let qnet = QNet::new(obs_dim, n_actions, cfg.q_width);
    let mut theta = ParamSet::new();
    let mut theta_target = ParamSet::new();
    if use_q {
        qnet.init(&mut theta, &mut stream(master_seed, "init/q"));
        sync_target(&theta, &mut theta_target);
    }
    let gate = GateNet::new(cfg.traj_hidden, cfg.gate_uses_state.then_some(obs_dim));
    let mut beta = ParamSet::new();
    if learned_gate {
        gate.init(&mut beta, &mut stream(master_seed, "init/gate"));
    }

    let mut memory = EpisodicMemory::new(cfg.traj_hidden, cfg.memory_capacity);
    let mut replay = ReplayBuffer::new(cfg.replay_capacity);
    let k_w = if ab.kw1 { 1 } else { cfg.k };
    let nets = TdNets {
        qnet: &qnet,
        gate: &gate,
        traj: &traj,
        rewardm: &rewardm,
    };

    let mut metrics = MetricsLog::default();
    let mut window = ContributionWindow::new(100);
    let mut syncs = 0u64;

    let mut obs = env.reset(&mut streams.env);
    let mut tau = TrajectoryVec::zeros(cfg.traj_hidden);
    let mut episode: u64 = 0;
    let mut ep_len: u32 = 0;
    let mut ep_reward_total = 0.0;
    let mut ep_rewards: Vec<f64> = Vec::new();
    let mut ep_pairs: Vec<StateAction> = Vec::new();
    let mut chunks: Vec<(TrajectoryVec, usize)> = Vec::new();

    for step in 0..cfg.total_steps {
        let eps = eps_at(cfg, step);
        let breakdown: QBreakdown = match mode {
            Mode::Mbec => {
                let qm = q_mbec(
                    &traj,
                    &phi,
                    &rewardm,
                    &reward_ps,
                    &memory,
                    &obs,
                    &tau,
                    ReadRule::Mixed(cfg.p_read),
                    cfg.k,
                    cfg.normalize_keys,
                    cfg.gamma,
                    &mut streams.read_rule,
                )?;
                QBreakdown {
                    combined: qm.values.clone(),
                    semantic: Vec::new(),
                    episodic: Some(qm.values),
                    gate: None,
                }
            }
            Mode::Dqn => {
                let q = qnet.forward(&theta, &obs);
                combined_q(q, None, 0.0)
            }
            Mode::MbecPlusPlus => {
                let semantic = qnet.forward(&theta, &obs);
                if memory_active && !memory.is_empty() {
                    let qm = q_mbec(
                        &traj,
                        &phi,
                        &rewardm,
                        &reward_ps,
                        &memory,
                        &obs,
                        &tau,
                        ReadRule::Mixed(cfg.p_read),
                        cfg.k,
                        cfg.normalize_keys,
                        cfg.gamma,
                        &mut streams.read_rule,
                    )?;
                    let g = match ab.fixed_beta {
                        Some(fixed) => fixed,
                        None => gate.forward(&beta, &gate.input(&tau.hidden, &obs)),
                    };
                    combined_q(semantic, Some(&qm.values), g)
                } else {
                    combined_q(semantic, None, 0.0)
                }
            }
        };
        let action = select_action(&breakdown.combined, eps, &mut streams.exploration);
        let best = argmax(&breakdown.combined);
        let (ep_agree, sem_agree) = match mode {
            Mode::Mbec => (true, false),
            Mode::Dqn => (false, true),
            Mode::MbecPlusPlus => (
                breakdown
                    .episodic
                    .as_ref()
                    .is_some_and(|e| argmax(e) == best),
                argmax(&breakdown.semantic) == best,
            ),
        };
        window.push(ep_agree, sem_agree);

        let out = env.step(action, &mut streams.env);
        let tau_next = if use_traj {
            traj.step(&phi, &obs, action, &tau)
        } else {
            TrajectoryVec::zeros(cfg.traj_hidden)
        };
        replay.push(Transition {
            state: obs.clone(),
            action,
            next_state: out.obs.clone(),
            reward: out.reward,
            tau_prev: tau.clone(),
            tau_next: tau_next.clone(),
            done: out.done,
        });
        ep_pairs.push((obs.clone(), action));
        ep_rewards.push(out.reward);
        ep_reward_total += out.reward;
        ep_len += 1;

        if memory_active && !ab.no_refine && streams.refine.gen::<f64>() < cfg.p_u {
            let state_ref = &obs;
            let tau_ref = &tau;
            memory.refine(
                n_actions,
                &key_of(tau_ref, cfg.normalize_keys),
                |a| key_of(&traj.step(&phi, state_ref, a, tau_ref), cfg.normalize_keys),
                |a| rewardm.predict(&reward_ps, state_ref, a),
                cfg.gamma,
                cfg.alpha_w,
                cfg.k,
                k_w,
            )?;
        }

        let mut td_loss = None;
        let mut reward_loss = None;
        if replay.len() >= cfg.batch_size {
            let idxs = replay.sample_indices(&mut streams.replay, cfg.batch_size);
            if use_q {
                let episodic_on =
                    mode == Mode::MbecPlusPlus && memory_active && !memory.is_empty();
                let loss = train_td(
                    cfg,
                    ab,
                    &nets,
                    &mut theta,
                    &theta_target,
                    &mut beta,
                    &phi,
                    &reward_ps,
                    &memory,
                    &replay,
                    &idxs,
                    episodic_on,
                    &mut streams.read_rule,
                )?;
                if !loss.is_finite() {
                    return Err(AgentError::NonFiniteLoss { loss: "td", step });
                }
                td_loss = Some(loss);
            }
            if use_traj {
                let batch: Vec<(&[f64], usize, f64)> = idxs
                    .iter()
                    .map(|i| {
                        let t = replay.get(*i);
                        (t.state.as_slice(), t.action, t.reward)
                    })
                    .collect();
                reward_ps.zero_grads();
                let loss = rewardm.loss_batch(&mut reward_ps, &batch)?;
                if !loss.is_finite() {
                    return Err(AgentError::NonFiniteLoss { loss: "reward", step });
                }
                reward_ps.adam_step(cfg.lr_reward)?;
                reward_loss = Some(loss);
            }
        }
        if use_q && (step + 1) % cfg.target_sync == 0 {
            sync_target(&theta, &mut theta_target);
            syncs += 1;
        }

        let mut tr_loss = None;
        if memory_active && ep_len as usize % cfg.chunk_len == 0 {
            chunks.push((tau.clone(), (ep_len - 1) as usize));
            if !ab.no_tr && streams.rec.gen::<f64>() < cfg.p_rec {
                let recall_mode = if ab.tp_loss {
                    RecallMode::Parallel
                } else {
                    RecallMode::Serial
                };
                phi.zero_grads();
                omega.zero_grads();
                if let Some(loss) = traj.recall_loss(
                    recall_mode,
                    &mut phi,
                    &mut omega,
                    &ep_pairs,
                    cfg.tr_samples,
                    cfg.tr_noise_scale,
                    &mut streams.tr_sample,
                    &mut streams.tr_noise,
                )? {
                    if !loss.is_finite() {
                        return Err(AgentError::NonFiniteLoss { loss: "tr", step });
                    }
                    phi.adam_step(cfg.lr_tr)?;
                    omega.adam_step(cfg.lr_tr)?;
                    tr_loss = Some(loss);
                }
            }
        }

        let done = out.done;
        if done && memory_active {
            for (tau_b, b) in &chunks {
                let v = mc_returns(&ep_rewards[*b..], cfg.gamma);
                memory.write(&key_of(tau_b, cfg.normalize_keys), v, cfg.alpha_w, k_w)?;
            }
        }

        let (ec, sc) = window.fractions();
        metrics.steps.push(StepRecord {
            step,
            episode,
            reward: out.reward,
            episode_len: ep_len,
            eps,
            episodic_contribution: ec,
            semantic_contribution: sc,
            memory_occupancy: memory.occupancy(),
            td_loss,
            tr_loss,
            reward_loss,
        });
        metrics.actions.push(action);

        tau = tau_next;
        obs = out.obs;
        if done {
            metrics.episodes.push(EpisodeRecord {
                episode,
                end_step: step,
                total_reward: ep_reward_total,
                length: ep_len,
            });
            episode += 1;
            ep_len = 0;
            ep_reward_total = 0.0;
            ep_rewards.clear();
            ep_pairs.clear();
            chunks.clear();
            obs = env.reset(&mut streams.env);
            tau = TrajectoryVec::zeros(cfg.traj_hidden);
        }
    }

    let mut params: Vec<(&'static str, ParamSet)> = Vec::new();
    if use_traj {
        params.push(("traj", phi));
        params.push(("recon", omega));
        params.push(("reward", reward_ps));
    }
    if use_q {
        params.push(("theta", theta));
        params.push(("theta_target", theta_target));
    }
    if learned_gate {
        params.push(("beta", beta));
    }
    Ok(RunOutput {
        metrics,
        memory,
        params,
        syncs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{CartPole, MazeEnv, MazeMode};

    fn tiny_cfg(total_steps: u64) -> AgentConfig {
        AgentConfig {
            traj_hidden: 4,
            q_width: 16,
            k: 3,
            chunk_len: 4,
            memory_capacity: 200,
            ..AgentConfig::maze_defaults(total_steps)
        }
    }

    fn maze(seed: u64) -> MazeEnv {
        MazeEnv::new(3, MazeMode::Plain, &mut stream(seed, "env_build"))
    }

    #[test]
    fn config_validation_names_the_offending_field() {
        let mut cfg = tiny_cfg(10);
        cfg.gamma = 0.0;
        match cfg.validate() {
            Err(AgentError::InvalidConfig { field, .. }) => assert_eq!(field, "gamma"),
            other => panic!("expected config error, got {other:?}"),
        }
        let mut cfg = tiny_cfg(10);
        cfg.p_read = 1.5;
        assert!(cfg.validate().is_err());
        assert!(tiny_cfg(10).validate().is_ok());
    }

    #[test]
    fn eps_schedule_decays_linearly_then_holds() {
        let cfg = tiny_cfg(1000);
        assert_eq!(eps_at(&cfg, 0), 1.0);
        let warm = 100;
        assert!((eps_at(&cfg, warm / 2) - 0.505).abs() < 1e-12);
        assert_eq!(eps_at(&cfg, warm), 0.01);
        assert_eq!(eps_at(&cfg, 999), 0.01);
        for s in 1..warm {
            assert!(eps_at(&cfg, s) < eps_at(&cfg, s - 1));
        }
    }

    #[test]
    fn zero_steps_give_empty_log_and_cold_memory() {
        let cfg = tiny_cfg(0);
        let mut env = maze(1);
        let out = run_training(&cfg, Mode::MbecPlusPlus, &Ablations::default(), &mut env, 1)
            .unwrap();
        assert!(out.metrics.steps.is_empty());
        assert!(out.metrics.episodes.is_empty());
        assert_eq!(out.memory.occupancy(), 0);
        assert_eq!(out.syncs, 0);
    }

    #[test]
    fn chunk_longer_than_every_episode_never_writes() {
        let mut cfg = tiny_cfg(500);
        // Cart-pole episodes cap at 200 steps, below the chunk length.
        cfg.chunk_len = 300;
        let mut env = CartPole::new();
        let out = run_training(&cfg, Mode::MbecPlusPlus, &Ablations::default(), &mut env, 3)
            .unwrap();
        assert!(out.metrics.episodes.len() > 1, "should finish episodes");
        assert!(out
            .metrics
            .steps
            .iter()
            .all(|r| r.memory_occupancy == 0));
    }

    #[test]
    fn same_seed_replays_identically() {
        let cfg = tiny_cfg(400);
        let a = run_training(&cfg, Mode::Mbec, &Ablations::default(), &mut maze(5), 42).unwrap();
        let b = run_training(&cfg, Mode::Mbec, &Ablations::default(), &mut maze(5), 42).unwrap();
        assert_eq!(a.metrics, b.metrics);
        let c = run_training(&cfg, Mode::Mbec, &Ablations::default(), &mut maze(5), 43).unwrap();
        assert_ne!(
            a.metrics.actions, c.metrics.actions,
            "different seeds should explore differently"
        );
    }

    #[test]
    fn occupancy_never_exceeds_capacity() {
        let mut cfg = tiny_cfg(800);
        cfg.memory_capacity = 7;
        cfg.chunk_len = 2;
        // Keep exploring so the goal keeps terminating episodes.
        cfg.eps_final = 0.3;
        let out = run_training(&cfg, Mode::Mbec, &Ablations::default(), &mut maze(7), 9).unwrap();
        let max_occ = out
            .metrics
            .steps
            .iter()
            .map(|r| r.memory_occupancy)
            .max()
            .unwrap();
        assert!(max_occ <= 7);
        assert_eq!(max_occ, 7, "cap should be reached in 800 steps");
        assert_eq!(out.memory.occupancy(), 7);
    }

    #[test]
    fn terminal_writes_match_chunk_count_per_episode() {
        let mut cfg = tiny_cfg(600);
        cfg.p_u = 0.0;
        cfg.chunk_len = 3;
        cfg.memory_capacity = 100_000;
        cfg.eps_final = 0.3;
        let out = run_training(&cfg, Mode::Mbec, &Ablations::default(), &mut maze(11), 13).unwrap();
        assert!(out.metrics.episodes.len() >= 3);
        let mut expected = 0usize;
        for ep in &out.metrics.episodes {
            expected += ep.length as usize / 3;
            let row = &out.metrics.steps[ep.end_step as usize];
            assert_eq!(
                row.memory_occupancy, expected,
                "episode {} of length {}",
                ep.episode, ep.length
            );
        }
    }

    #[test]
    fn pure_mbec_never_touches_parametric_values() {
        let cfg = tiny_cfg(300);
        let out = run_training(&cfg, Mode::Mbec, &Ablations::default(), &mut maze(15), 17).unwrap();
        assert!(out.metrics.steps.iter().all(|r| r.td_loss.is_none()));
        assert!(out
            .metrics
            .steps
            .iter()
            .all(|r| r.semantic_contribution == 0.0));
        assert!(out.params.iter().all(|(name, _)| *name != "theta"));
        // Reward model trains once the replay warms up.
        assert!(out
            .metrics
            .steps
            .iter()
            .any(|r| r.reward_loss.is_some()));
    }

    #[test]
    fn disabled_memory_matches_baseline_action_for_action() {
        let mut cfg = tiny_cfg(600);
        cfg.q_width = 24;
        let ab_off = Ablations {
            disable_memory: true,
            ..Default::default()
        };
        let plus = run_training(&cfg, Mode::MbecPlusPlus, &ab_off, &mut CartPole::new(), 23)
            .unwrap();
        let dqn = run_training(
            &cfg,
            Mode::Dqn,
            &Ablations::default(),
            &mut CartPole::new(),
            23,
        )
        .unwrap();
        assert_eq!(plus.metrics.actions, dqn.metrics.actions);
        let rewards_a: Vec<f64> = plus.metrics.steps.iter().map(|r| r.reward).collect();
        let rewards_b: Vec<f64> = dqn.metrics.steps.iter().map(|r| r.reward).collect();
        assert_eq!(rewards_a, rewards_b);
        assert!(plus.metrics.steps.iter().all(|r| r.memory_occupancy == 0));
        // The baseline never trains the auxiliary heads.
        assert!(dqn.metrics.steps.iter().all(|r| r.reward_loss.is_none()));
        assert!(plus.metrics.steps.iter().any(|r| r.reward_loss.is_some()));
    }

    #[test]
    fn target_sync_count_is_floor_of_steps_over_period() {
        let mut cfg = tiny_cfg(450);
        cfg.target_sync = 100;
        let out = run_training(
            &cfg,
            Mode::Dqn,
            &Ablations::default(),
            &mut CartPole::new(),
            29,
        )
        .unwrap();
        assert_eq!(out.syncs, 4);
    }

    #[test]
    fn mbec_plus_plus_gains_episodic_contribution_once_memory_warms() {
        let mut cfg = tiny_cfg(700);
        cfg.chunk_len = 2;
        cfg.eps_final = 0.3;
        let out = run_training(
            &cfg,
            Mode::MbecPlusPlus,
            &Ablations::default(),
            &mut maze(31),
            37,
        )
        .unwrap();
        let occupied = out.metrics.steps.iter().any(|r| r.memory_occupancy > 0);
        assert!(occupied, "memory never filled");
        let late = out.metrics.steps.last().unwrap();
        assert!(late.episodic_contribution > 0.0, "episodic path never drove the policy");
        assert!(out.params.iter().any(|(n, _)| *n == "beta"));
    }

    #[test]
    fn fixed_beta_skips_gate_parameters() {
        let mut cfg = tiny_cfg(300);
        cfg.chunk_len = 2;
        let ab = Ablations {
            fixed_beta: Some(0.5),
            ..Default::default()
        };
        let out = run_training(&cfg, Mode::MbecPlusPlus, &ab, &mut maze(41), 43).unwrap();
        assert!(out.params.iter().all(|(n, _)| *n != "beta"));
    }
}

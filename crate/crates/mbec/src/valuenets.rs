//! Semantic value network, reward model, and the gating head that blends
//! episodic estimates into the final action values.
//!
//! The temporal-difference loss here takes episodic read results as
//! precomputed constants: gradients reach the semantic net and the gate but
//! never the recurrence that produced the keys. Callers assemble targets
//! (including any bootstrap term) before invoking the loss.

use rand::Rng;

use crate::diffnum::{Act, DiffnumError, Mlp, ParamSet, Tape, Tensor};

pub const Q_PREFIX: &str = "q";
pub const REWARD_PREFIX: &str = "reward";
pub const GATE_PREFIX: &str = "gate";

/// Three-layer ReLU action-value network.
pub struct QNet {
    mlp: Mlp,
    obs_dim: usize,
    num_actions: usize,
}

impl QNet {
    pub fn new(obs_dim: usize, num_actions: usize, width: usize) -> Self {
        QNet {
            mlp: Mlp::new(Q_PREFIX, &[obs_dim, width, width, num_actions], Act::Relu, None),
            obs_dim,
            num_actions,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn init(&self, ps: &mut ParamSet, rng: &mut impl Rng) {
        self.mlp.init_params(ps, rng);
    }

    pub fn forward(&self, ps: &ParamSet, obs: &[f64]) -> Vec<f64> {
        assert_eq!(obs.len(), self.obs_dim, "observation dim mismatch");
        self.mlp.forward(ps, obs)
    }
}

/// Copy every parameter value from the online set into the target set,
/// creating missing entries so the first sync also works on an empty set.
pub fn sync_target(online: &ParamSet, target: &mut ParamSet) {
    for (name, tensor) in online.iter() {
        if target.contains(name) {
            target
                .get_mut(name)
                .expect("checked")
                .data_mut()
                .copy_from_slice(tensor.data());
        } else {
            target.insert(name, tensor.clone());
        }
    }
}

/// Two-layer ReLU reward head over a state and one-hot action.
pub struct RewardModel {
    mlp: Mlp,
    state_dim: usize,
    num_actions: usize,
}

pub const REWARD_HIDDEN: usize = 32;

impl RewardModel {
    pub fn new(state_dim: usize, num_actions: usize) -> Self {
        let d = state_dim + num_actions;
        RewardModel {
            mlp: Mlp::new(REWARD_PREFIX, &[d, REWARD_HIDDEN, 1], Act::Relu, None),
            state_dim,
            num_actions,
        }
    }

    pub fn init(&self, ps: &mut ParamSet, rng: &mut impl Rng) {
        self.mlp.init_params(ps, rng);
    }

    fn encode(&self, state: &[f64], action: usize) -> Vec<f64> {
        assert_eq!(state.len(), self.state_dim, "state dim mismatch");
        assert!(action < self.num_actions, "action out of range");
        let mut x = Vec::with_capacity(self.state_dim + self.num_actions);
        x.extend_from_slice(state);
        for a in 0..self.num_actions {
            x.push(if a == action { 1.0 } else { 0.0 });
        }
        x
    }

    pub fn predict(&self, ps: &ParamSet, state: &[f64], action: usize) -> f64 {
        self.mlp.forward(ps, &self.encode(state, action))[0]
    }

    /// Mean squared error over a batch; accumulates gradients.
    pub fn loss_batch(
        &self,
        ps: &mut ParamSet,
        batch: &[(&[f64], usize, f64)],
    ) -> Result<f64, DiffnumError> {
        assert!(!batch.is_empty());
        let rows = batch.len();
        let d = self.state_dim + self.num_actions;
        let mut xs = Vec::with_capacity(rows * d);
        let mut ys = Vec::with_capacity(rows);
        for (s, a, r) in batch {
            xs.extend_from_slice(&self.encode(s, *a));
            ys.push(*r);
        }
        let mut tape = Tape::new();
        let bind = tape.bind(ps, REWARD_PREFIX);
        let x = tape.constant(Tensor::matrix(rows, d, xs));
        let out = self.mlp.on_tape(&mut tape, &bind, x)?;
        let flat = tape.flatten(out);
        let target = tape.constant(Tensor::vector(ys));
        let d = tape.sub(flat, target)?;
        let ss = tape.sum_sq(d);
        let loss = tape.scale(ss, 1.0 / rows as f64);
        tape.backward(loss)?;
        tape.export_grads(ps)?;
        Ok(tape.value(loss).item())
    }
}

/// Sigmoid gate deciding how much episodic value enters the blend. Input is
/// the trajectory vector, optionally concatenated with the observation.
pub struct GateNet {
    mlp: Mlp,
    traj_dim: usize,
    obs_dim: Option<usize>,
}

pub const GATE_HIDDEN: usize = 16;

impl GateNet {
    pub fn new(traj_dim: usize, obs_dim: Option<usize>) -> Self {
        let in_dim = traj_dim + obs_dim.unwrap_or(0);
        GateNet {
            mlp: Mlp::new(
                GATE_PREFIX,
                &[in_dim, GATE_HIDDEN, 1],
                Act::Relu,
                Some(Act::Sigmoid),
            ),
            traj_dim,
            obs_dim,
        }
    }

    pub fn init(&self, ps: &mut ParamSet, rng: &mut impl Rng) {
        self.mlp.init_params(ps, rng);
    }

    pub fn input(&self, tau_hidden: &[f64], obs: &[f64]) -> Vec<f64> {
        assert_eq!(tau_hidden.len(), self.traj_dim, "trajectory dim mismatch");
        let mut x = Vec::with_capacity(self.traj_dim + self.obs_dim.unwrap_or(0));
        x.extend_from_slice(tau_hidden);
        if let Some(od) = self.obs_dim {
            assert_eq!(obs.len(), od, "observation dim mismatch");
            x.extend_from_slice(obs);
        }
        x
    }

    pub fn forward(&self, ps: &ParamSet, input: &[f64]) -> f64 {
        self.mlp.forward(ps, input)[0]
    }
}

/// Action values split into their sources.
#[derive(Clone, Debug)]
pub struct QBreakdown {
    pub combined: Vec<f64>,
    pub semantic: Vec<f64>,
    /// Gated episodic component per action; `None` when the episodic path is
    /// inactive (empty memory or disabled).
    pub episodic: Option<Vec<f64>>,
    pub gate: Option<f64>,
}

/// Blend semantic values with gated episodic reads.
pub fn combined_q(semantic: Vec<f64>, episodic_raw: Option<&[f64]>, gate: f64) -> QBreakdown {
    match episodic_raw {
        None => QBreakdown {
            combined: semantic.clone(),
            semantic,
            episodic: None,
            gate: None,
        },
        Some(raw) => {
            assert_eq!(raw.len(), semantic.len());
            let episodic: Vec<f64> = raw.iter().map(|m| gate * m).collect();
            let combined: Vec<f64> = semantic
                .iter()
                .zip(&episodic)
                .map(|(q, e)| q + e)
                .collect();
            QBreakdown {
                combined,
                semantic,
                episodic: Some(episodic),
                gate: Some(gate),
            }
        }
    }
}

/// Gate configuration inside a TD batch.
pub enum TdGate {
    /// Gate net evaluated on these inputs, receiving gradients.
    Learned { inputs: Vec<Vec<f64>> },
    /// Constant blend weight; nothing to train.
    Fixed(f64),
}

/// Episodic constants for the current side of a TD batch.
pub struct TdEpisodic {
    pub gate: TdGate,
    /// Raw episodic read for the taken action, one per transition.
    pub qmbec: Vec<f64>,
}

/// One TD minibatch with fully precomputed targets.
pub struct TdBatch {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub targets: Vec<f64>,
    pub episodic: Option<TdEpisodic>,
}

/// Squared TD error of the blended value against precomputed targets,
/// averaged over the batch. Accumulates gradients into `theta` and, for a
/// learned gate, into `beta`.
pub fn td_loss_batch(
    qnet: &QNet,
    gate_net: &GateNet,
    theta: &mut ParamSet,
    beta: &mut ParamSet,
    batch: &TdBatch,
) -> Result<f64, DiffnumError> {
    let rows = batch.obs.len();
    assert!(rows > 0);
    assert_eq!(batch.actions.len(), rows);
    assert_eq!(batch.targets.len(), rows);
    let mut tape = Tape::new();
    let bind_q = tape.bind(theta, Q_PREFIX);
    let mut xs = Vec::with_capacity(rows * qnet.obs_dim);
    for o in &batch.obs {
        assert_eq!(o.len(), qnet.obs_dim);
        xs.extend_from_slice(o);
    }
    let x = tape.constant(Tensor::matrix(rows, qnet.obs_dim, xs));
    let qall = qnet.mlp.on_tape(&mut tape, &bind_q, x)?;
    let qsel = tape.gather(qall, batch.actions.clone())?;
    let current = match &batch.episodic {
        None => qsel,
        Some(ep) => {
            assert_eq!(ep.qmbec.len(), rows);
            let mem = tape.constant(Tensor::vector(ep.qmbec.clone()));
            let gated = match &ep.gate {
                TdGate::Fixed(b) => tape.scale(mem, *b),
                TdGate::Learned { inputs } => {
                    assert_eq!(inputs.len(), rows);
                    let bind_g = tape.bind(beta, GATE_PREFIX);
                    let gd = inputs[0].len();
                    let mut gs = Vec::with_capacity(rows * gd);
                    for gi in inputs {
                        assert_eq!(gi.len(), gd);
                        gs.extend_from_slice(gi);
                    }
                    let gin = tape.constant(Tensor::matrix(rows, gd, gs));
                    let gout = gate_net.mlp.on_tape(&mut tape, &bind_g, gin)?;
                    let gflat = tape.flatten(gout);
                    tape.mul(gflat, mem)?
                }
            };
            tape.add(qsel, gated)?
        }
    };
    let y = tape.constant(Tensor::vector(batch.targets.clone()));
    let d = tape.sub(current, y)?;
    let ss = tape.sum_sq(d);
    let loss = tape.scale(ss, 1.0 / rows as f64);
    tape.backward(loss)?;
    let grads = tape.grad_map();
    for (name, g) in &grads {
        if name.starts_with(GATE_PREFIX) {
            beta.accumulate_grad(name, g.data())?;
        } else {
            theta.accumulate_grad(name, g.data())?;
        }
    }
    Ok(tape.value(loss).item())
}

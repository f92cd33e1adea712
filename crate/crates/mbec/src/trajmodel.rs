//! Recurrent trajectory model and its recall-based training losses.
//!
//! The model consumes one (state, action) pair per step through an LSTM cell
//! and exposes the hidden state as the trajectory vector used for memory
//! keys. Training asks a reconstructor network to recover a stored
//! transition from a noised query plus the recurrent summary; the serial
//! variant conditions on the trajectory at the chunk end, the parallel
//! variant on the trajectory just before the queried step.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rand_chacha::ChaCha8Rng;

use crate::diffnum::{Act, DiffnumError, LstmCell, Mlp, NodeId, ParamSet, Tape, Tensor};

/// Hidden and cell state of the trajectory recurrence.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryVec {
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
}

impl TrajectoryVec {
    pub fn zeros(hidden: usize) -> Self {
        TrajectoryVec {
            hidden: vec![0.0; hidden],
            cell: vec![0.0; hidden],
        }
    }
}

/// Memory key for a trajectory vector; optionally projected into the unit
/// ball by dividing by `max(1, l2 norm)`.
pub fn key_of(tau: &TrajectoryVec, normalize: bool) -> Vec<f64> {
    if !normalize {
        return tau.hidden.clone();
    }
    let norm = tau.hidden.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = 1.0 / norm.max(1.0);
    tau.hidden.iter().map(|v| v * scale).collect()
}

/// One observed (state, action) pair of an episode.
pub type StateAction = (Vec<f64>, usize);

/// Which timestep the reconstructor conditions on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecallMode {
    /// Serial recall: condition on the trajectory at the chunk end.
    Serial,
    /// Parallel prediction: condition on the trajectory just before the
    /// queried step.
    Parallel,
}

/// Pre-drawn recall branches: queried index and the already-noised query.
#[derive(Clone, Debug)]
pub struct RecallPlan {
    pub entries: Vec<(usize, Vec<f64>)>,
}

pub struct TrajModel {
    cell: LstmCell,
    recon: Mlp,
    state_dim: usize,
    num_actions: usize,
}

pub const TRAJ_PREFIX: &str = "traj";
pub const RECON_PREFIX: &str = "recon";

impl TrajModel {
    /// `hidden` is the trajectory-vector dimension; the reconstructor is a
    /// two-layer ReLU net of width `2 * (state_dim + num_actions)`.
    pub fn new(state_dim: usize, num_actions: usize, hidden: usize) -> Self {
        let d = state_dim + num_actions;
        TrajModel {
            cell: LstmCell::new(TRAJ_PREFIX, d, hidden),
            recon: Mlp::new(RECON_PREFIX, &[hidden, 2 * d, d], Act::Relu, None),
            state_dim,
            num_actions,
        }
    }

    pub fn hidden(&self) -> usize {
        self.cell.hidden()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn init_phi(&self, ps: &mut ParamSet, rng: &mut impl Rng) {
        self.cell.init_params(ps, rng);
    }

    pub fn init_omega(&self, ps: &mut ParamSet, rng: &mut impl Rng) {
        self.recon.init_params(ps, rng);
    }

    /// Concatenate a state with a one-hot action.
    pub fn encode(&self, state: &[f64], action: usize) -> Vec<f64> {
        assert_eq!(state.len(), self.state_dim, "state dim mismatch");
        assert!(action < self.num_actions, "action out of range");
        let mut x = Vec::with_capacity(self.state_dim + self.num_actions);
        x.extend_from_slice(state);
        for a in 0..self.num_actions {
            x.push(if a == action { 1.0 } else { 0.0 });
        }
        x
    }

    /// Advance the trajectory by one observed step.
    pub fn step(
        &self,
        phi: &ParamSet,
        state: &[f64],
        action: usize,
        prev: &TrajectoryVec,
    ) -> TrajectoryVec {
        let x = self.encode(state, action);
        let (hidden, cell) = self.cell.forward(phi, &x, &prev.hidden, &prev.cell);
        TrajectoryVec { hidden, cell }
    }

    /// All trajectory states of an episode prefix: index i holds the state
    /// after i steps, starting from zeros.
    pub fn unroll(&self, phi: &ParamSet, episode: &[StateAction]) -> Vec<TrajectoryVec> {
        let mut out = Vec::with_capacity(episode.len() + 1);
        out.push(TrajectoryVec::zeros(self.hidden()));
        for (s, a) in episode {
            let next = self.step(phi, s, *a, out.last().unwrap());
            out.push(next);
        }
        out
    }

    /// Draw recall branches: uniform eligible index plus Gaussian query noise
    /// with per-component standard deviation `noise_scale * ||q||`. Returns
    /// `None` (consuming no randomness) when the episode has no transition
    /// with a stored successor.
    pub fn plan_recall(
        &self,
        episode: &[StateAction],
        n_samples: usize,
        noise_scale: f64,
        sample_rng: &mut ChaCha8Rng,
        noise_rng: &mut ChaCha8Rng,
    ) -> Option<RecallPlan> {
        if episode.len() < 2 || n_samples == 0 {
            return None;
        }
        let eligible = episode.len() - 1;
        let mut entries = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            let idx = sample_rng.gen_range(0..eligible);
            let (s, a) = &episode[idx];
            let mut q = self.encode(s, *a);
            if noise_scale > 0.0 {
                let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
                let sigma = noise_scale * norm;
                for v in q.iter_mut() {
                    let z: f64 = StandardNormal.sample(noise_rng);
                    *v += sigma * z;
                }
            }
            entries.push((idx, q));
        }
        Some(RecallPlan { entries })
    }

    /// Reconstruction loss over planned branches. Accumulates gradients for
    /// the recurrence and reconstructor parameter sets and returns the loss.
    pub fn recall_loss_planned(
        &self,
        mode: RecallMode,
        phi: &mut ParamSet,
        omega: &mut ParamSet,
        episode: &[StateAction],
        plan: &RecallPlan,
    ) -> Result<f64, DiffnumError> {
        assert!(!plan.entries.is_empty());
        let mut tape = Tape::new();
        let bind_phi = tape.bind(phi, TRAJ_PREFIX);
        let bind_omega = tape.bind(omega, RECON_PREFIX);
        let h = self.hidden();
        let mut states: Vec<(NodeId, NodeId)> = Vec::with_capacity(episode.len() + 1);
        let h0 = tape.constant(Tensor::vector(vec![0.0; h]));
        let c0 = tape.constant(Tensor::vector(vec![0.0; h]));
        states.push((h0, c0));
        for (s, a) in episode {
            let x = tape.constant(Tensor::vector(self.encode(s, *a)));
            let (hp, cp) = *states.last().unwrap();
            let next = self.cell.on_tape(&mut tape, &bind_phi, x, hp, cp)?;
            states.push(next);
        }
        let mut total: Option<NodeId> = None;
        for (idx, query) in &plan.entries {
            let (hc, cc) = match mode {
                RecallMode::Serial => *states.last().unwrap(),
                RecallMode::Parallel => states[*idx],
            };
            let q = tape.constant(Tensor::vector(query.clone()));
            let (hb, _cb) = self.cell.on_tape(&mut tape, &bind_phi, q, hc, cc)?;
            let y = self.recon.on_tape(&mut tape, &bind_omega, hb)?;
            let (ts, ta) = &episode[idx + 1];
            let target = tape.constant(Tensor::vector(self.encode(ts, *ta)));
            let d = tape.sub(y, target)?;
            let branch = tape.sum_sq(d);
            total = Some(match total {
                None => branch,
                Some(t) => tape.add(t, branch)?,
            });
        }
        let sum = total.expect("at least one branch");
        let loss = tape.scale(sum, 1.0 / plan.entries.len() as f64);
        tape.backward(loss)?;
        let grads = tape.grad_map();
        for (name, g) in &grads {
            if name.starts_with(TRAJ_PREFIX) {
                phi.accumulate_grad(name, g.data())?;
            } else {
                omega.accumulate_grad(name, g.data())?;
            }
        }
        Ok(tape.value(loss).item())
    }

    /// Plan and evaluate in one call; `None` when nothing is eligible.
    #[allow(clippy::too_many_arguments)]
    pub fn recall_loss(
        &self,
        mode: RecallMode,
        phi: &mut ParamSet,
        omega: &mut ParamSet,
        episode: &[StateAction],
        n_samples: usize,
        noise_scale: f64,
        sample_rng: &mut ChaCha8Rng,
        noise_rng: &mut ChaCha8Rng,
    ) -> Result<Option<f64>, DiffnumError> {
        match self.plan_recall(episode, n_samples, noise_scale, sample_rng, noise_rng) {
            None => Ok(None),
            Some(plan) => self
                .recall_loss_planned(mode, phi, omega, episode, &plan)
                .map(Some),
        }
    }
}

/// CSV trace of hidden components per step: `t,h_0..h_{H-1}`.
pub fn trace_csv(states: &[TrajectoryVec], w: &mut impl Write) -> io::Result<()> {
    let h = states.first().map_or(0, |s| s.hidden.len());
    write!(w, "t")?;
    for d in 0..h {
        write!(w, ",h_{d}")?;
    }
    writeln!(w)?;
    for (t, s) in states.iter().enumerate() {
        write!(w, "{t}")?;
        for v in &s.hidden {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// A fully linear stand-in for the recurrence and reconstructor:
/// `y = W (U tau + V q)`, with two trajectories sharing a transition set.
#[derive(Clone, Debug)]
pub struct LinearRecallInstance {
    pub w: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub tau1: DVector<f64>,
    pub tau2: DVector<f64>,
    /// Transitions (query, target) present in both trajectories' sets.
    pub shared: Vec<(DVector<f64>, DVector<f64>)>,
    pub extra1: Vec<(DVector<f64>, DVector<f64>)>,
    pub extra2: Vec<(DVector<f64>, DVector<f64>)>,
}

/// Outcome of the trajectory-separation bound on a linear instance.
#[derive(Clone, Debug)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub sigma_min: f64,
    pub loss1: f64,
    pub loss2: f64,
    /// True when `W U (tau1 - tau2)` vanishes and the bound is vacuous.
    pub degenerate: bool,
    pub holds: bool,
}

/// Right-hand side of the separation bound.
pub fn recall_bound_rhs(loss1: f64, loss2: f64, shared: usize, sigma_min: f64) -> f64 {
    (loss1 + loss2) / (shared as f64 * sigma_min)
}

/// Check that two trajectories with low reconstruction loss on shared
/// transitions cannot be far apart:
/// `||tau1 - tau2||^2 <= (L1 + L2) / (|S| sigma_min(WU))`.
pub fn linear_tr_bound_check(inst: &LinearRecallInstance) -> BoundCheck {
    assert!(!inst.shared.is_empty(), "bound needs a shared transition");
    let wu = &inst.w * &inst.u;
    let svd = wu.clone().svd(false, false);
    let sigma_max = svd
        .singular_values
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    let sigma_min = svd
        .singular_values
        .iter()
        .cloned()
        .filter(|s| *s > 1e-9 * sigma_max.max(1.0))
        .fold(f64::INFINITY, f64::min);
    let loss_of = |tau: &DVector<f64>, sets: [&Vec<(DVector<f64>, DVector<f64>)>; 2]| -> f64 {
        let mut total = 0.0;
        for set in sets {
            for (q, y) in set {
                let pred = &inst.w * (&inst.u * tau + &inst.v * q);
                total += (pred - y).norm_squared();
            }
        }
        total
    };
    let loss1 = loss_of(&inst.tau1, [&inst.shared, &inst.extra1]);
    let loss2 = loss_of(&inst.tau2, [&inst.shared, &inst.extra2]);
    let diff = &inst.tau1 - &inst.tau2;
    let degenerate = (&wu * &diff).norm() < 1e-12;
    let lhs = diff.norm_squared();
    let rhs = recall_bound_rhs(loss1, loss2, inst.shared.len(), sigma_min);
    BoundCheck {
        lhs,
        rhs,
        sigma_min,
        loss1,
        loss2,
        degenerate,
        holds: lhs <= rhs,
    }
}

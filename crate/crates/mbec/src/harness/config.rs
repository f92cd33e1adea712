//! Experiment configuration: one TOML file describing task, agent, noise,
//! seeds, and hyperparameter overrides. Unknown keys are rejected so typos
//! fail loudly instead of silently running defaults.

use serde::Deserialize;
use std::path::{Path, PathBuf};

use super::baselines::MfecConfig;
use super::HarnessError;
use crate::agent::{Ablations, AgentConfig, Mode};
use crate::envs::{MazeMode, NoiseConfig};

/// Hidden width for the plain parametric baseline.
pub const DQN_WIDTH: usize = 144;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// One of `maze`, `cartpole`, `mountaincar`.
    pub task: String,
    /// One of `mbec`, `mbec++`, `dqn`, `mfec`, `random`.
    pub agent: String,
    pub total_steps: u64,
    pub seeds: Vec<u64>,
    /// Trailing episode window for the summary's final score.
    #[serde(default = "default_eval_window")]
    pub eval_window: usize,
    /// Output directory; relative paths resolve under the output root.
    #[serde(default)]
    pub out_dir: Option<String>,
    #[serde(default)]
    pub env: EnvBlock,
    #[serde(default)]
    pub agent_config: AgentOverrides,
    #[serde(default)]
    pub ablations: AblationBlock,
    #[serde(default)]
    pub mfec: MfecBlock,
}

fn default_eval_window() -> usize {
    100
}

fn default_maze_size() -> usize {
    3
}

fn default_maze_mode() -> String {
    "plain".to_string()
}

fn default_drop_rate() -> f64 {
    0.2
}

/// Maze wall layouts are carved from this seed, not the per-run seed, so
/// every seed of an experiment trains on the same map and seeds only vary
/// the agent. The default layout has the modal difficulty for its size
/// (3x3: shortest path 4).
pub const DEFAULT_LAYOUT_SEED: u64 = 1;

fn default_layout_seed() -> u64 {
    DEFAULT_LAYOUT_SEED
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvBlock {
    /// Maze side length; ignored for classic control.
    #[serde(default = "default_maze_size")]
    pub size: usize,
    /// Maze mode: `plain`, `noisy`, `trap`, or `dynamic`.
    #[serde(default = "default_maze_mode")]
    pub mode: String,
    /// Feature dropout rate for the noisy maze mode.
    #[serde(default = "default_drop_rate")]
    pub drop_rate: f64,
    /// Seed for carving the maze wall layout, shared across run seeds.
    #[serde(default = "default_layout_seed")]
    pub layout_seed: u64,
    #[serde(default)]
    pub gaussian_reward_std: f64,
    #[serde(default)]
    pub bernoulli_reward_p: f64,
    #[serde(default)]
    pub transition_freeze_p: f64,
}

impl Default for EnvBlock {
    fn default() -> Self {
        EnvBlock {
            size: default_maze_size(),
            mode: default_maze_mode(),
            drop_rate: default_drop_rate(),
            layout_seed: default_layout_seed(),
            gaussian_reward_std: 0.0,
            bernoulli_reward_p: 0.0,
            transition_freeze_p: 0.0,
        }
    }
}

/// Per-field overrides on top of the task's default agent hyperparameters.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentOverrides {
    pub k: Option<usize>,
    pub chunk_len: Option<usize>,
    pub memory_capacity: Option<usize>,
    pub alpha_w: Option<f64>,
    pub gamma: Option<f64>,
    pub p_read: Option<f64>,
    pub p_u: Option<f64>,
    pub p_rec: Option<f64>,
    pub eps_start: Option<f64>,
    pub eps_final: Option<f64>,
    pub eps_decay_frac: Option<f64>,
    pub lr_td: Option<f64>,
    pub lr_reward: Option<f64>,
    pub lr_tr: Option<f64>,
    pub replay_capacity: Option<usize>,
    pub batch_size: Option<usize>,
    pub target_sync: Option<u64>,
    pub traj_hidden: Option<usize>,
    pub q_width: Option<usize>,
    pub tr_samples: Option<usize>,
    pub tr_noise_scale: Option<f64>,
    pub normalize_keys: Option<bool>,
    pub gate_uses_state: Option<bool>,
}

impl AgentOverrides {
    fn apply(&self, cfg: &mut AgentConfig) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        set!(
            k,
            chunk_len,
            memory_capacity,
            alpha_w,
            gamma,
            p_read,
            p_u,
            p_rec,
            eps_start,
            eps_final,
            eps_decay_frac,
            lr_td,
            lr_reward,
            lr_tr,
            replay_capacity,
            batch_size,
            target_sync,
            traj_hidden,
            q_width,
            tr_samples,
            tr_noise_scale,
            normalize_keys,
            gate_uses_state
        );
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationBlock {
    #[serde(default)]
    pub no_tr: bool,
    #[serde(default)]
    pub tp_loss: bool,
    #[serde(default)]
    pub kw1: bool,
    #[serde(default)]
    pub no_refine: bool,
    #[serde(default)]
    pub fixed_beta: Option<f64>,
    #[serde(default)]
    pub disable_memory: bool,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MfecBlock {
    pub key_dim: Option<usize>,
    pub k: Option<usize>,
    pub table_capacity: Option<usize>,
}

impl Default for MfecBlock {
    fn default() -> Self {
        MfecBlock {
            key_dim: None,
            k: None,
            table_capacity: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Task {
    Maze { size: usize, mode: MazeMode },
    CartPole,
    MountainCar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AgentKind {
    Mbec,
    MbecPlusPlus,
    Dqn,
    Mfec,
    Random,
}

impl AgentKind {
    /// Training-loop mode for the learned agents; `None` for baselines that
    /// bypass the loop.
    pub fn mode(&self) -> Option<Mode> {
        match self {
            AgentKind::Mbec => Some(Mode::Mbec),
            AgentKind::MbecPlusPlus => Some(Mode::MbecPlusPlus),
            AgentKind::Dqn => Some(Mode::Dqn),
            AgentKind::Mfec | AgentKind::Random => None,
        }
    }
}

/// Everything a seed run needs, validated and with defaults filled in.
#[derive(Clone, Debug)]
pub struct ResolvedExperiment {
    pub task: Task,
    pub agent_kind: AgentKind,
    pub agent_cfg: AgentConfig,
    pub ablations: Ablations,
    pub noise: NoiseConfig,
    pub mfec: MfecConfig,
    pub total_steps: u64,
    pub seeds: Vec<u64>,
    pub eval_window: usize,
    pub layout_seed: u64,
}

impl ExperimentConfig {
    pub fn from_toml(raw: &str) -> Result<Self, HarnessError> {
        toml::from_str(raw).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    pub fn resolve(&self) -> Result<ResolvedExperiment, HarnessError> {
        let bad = |field: &'static str, reason: String| HarnessError::InvalidConfig {
            field,
            reason,
        };
        let task = match self.task.as_str() {
            "maze" => {
                if self.env.size < 2 {
                    return Err(bad("env.size", "maze needs size >= 2".into()));
                }
                let mode = match self.env.mode.as_str() {
                    "plain" => MazeMode::Plain,
                    "noisy" => {
                        if !(0.0..1.0).contains(&self.env.drop_rate) {
                            return Err(bad(
                                "env.drop_rate",
                                format!("must be in [0, 1), got {}", self.env.drop_rate),
                            ));
                        }
                        MazeMode::Noisy {
                            drop_rate: self.env.drop_rate,
                        }
                    }
                    "trap" => MazeMode::Trap,
                    "dynamic" => MazeMode::Dynamic,
                    other => {
                        return Err(bad(
                            "env.mode",
                            format!("unknown maze mode {other:?}; expected plain, noisy, trap, or dynamic"),
                        ))
                    }
                };
                Task::Maze {
                    size: self.env.size,
                    mode,
                }
            }
            "cartpole" => Task::CartPole,
            "mountaincar" => Task::MountainCar,
            other => {
                return Err(bad(
                    "task",
                    format!("unknown task {other:?}; expected maze, cartpole, or mountaincar"),
                ))
            }
        };
        let agent_kind = match self.agent.as_str() {
            "mbec" => AgentKind::Mbec,
            "mbec++" => AgentKind::MbecPlusPlus,
            "dqn" => AgentKind::Dqn,
            "mfec" => AgentKind::Mfec,
            "random" => AgentKind::Random,
            other => {
                return Err(bad(
                    "agent",
                    format!("unknown agent kind {other:?}; expected mbec, mbec++, dqn, mfec, or random"),
                ))
            }
        };
        if self.seeds.is_empty() {
            return Err(bad("seeds", "need at least one seed".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(bad("seeds", "duplicate seeds would collide on disk".into()));
        }
        if self.eval_window == 0 {
            return Err(bad("eval_window", "must be at least 1".into()));
        }
        let noise = NoiseConfig {
            gaussian_reward_std: self.env.gaussian_reward_std,
            bernoulli_reward_p: self.env.bernoulli_reward_p,
            transition_freeze_p: self.env.transition_freeze_p,
        };
        noise
            .validate()
            .map_err(|reason| bad("env", reason))?;
        let mut agent_cfg = match task {
            Task::Maze { .. } => AgentConfig::maze_defaults(self.total_steps),
            Task::CartPole | Task::MountainCar => {
                AgentConfig::classic_defaults(self.total_steps)
            }
        };
        if agent_kind == AgentKind::Dqn && self.agent_config.q_width.is_none() {
            agent_cfg.q_width = DQN_WIDTH;
        }
        self.agent_config.apply(&mut agent_cfg);
        agent_cfg.validate()?;
        if let Some(beta) = self.ablations.fixed_beta {
            if !(0.0..=1.0).contains(&beta) {
                return Err(bad(
                    "ablations.fixed_beta",
                    format!("must be in [0, 1], got {beta}"),
                ));
            }
        }
        let ablations = Ablations {
            no_tr: self.ablations.no_tr,
            tp_loss: self.ablations.tp_loss,
            kw1: self.ablations.kw1,
            no_refine: self.ablations.no_refine,
            fixed_beta: self.ablations.fixed_beta,
            disable_memory: self.ablations.disable_memory,
        };
        let mut mfec = MfecConfig::default();
        if let Some(v) = self.mfec.key_dim {
            mfec.key_dim = v;
        }
        if let Some(v) = self.mfec.k {
            mfec.k = v;
        }
        if let Some(v) = self.mfec.table_capacity {
            mfec.table_capacity = v;
        }
        mfec.gamma = agent_cfg.gamma;
        mfec.eps_start = agent_cfg.eps_start;
        mfec.eps_final = agent_cfg.eps_final;
        mfec.eps_decay_frac = agent_cfg.eps_decay_frac;
        if mfec.key_dim == 0 {
            return Err(bad("mfec.key_dim", "must be at least 1".into()));
        }
        if mfec.k == 0 {
            return Err(bad("mfec.k", "must be at least 1".into()));
        }
        if mfec.table_capacity == 0 {
            return Err(bad("mfec.table_capacity", "must be at least 1".into()));
        }
        Ok(ResolvedExperiment {
            task,
            agent_kind,
            agent_cfg,
            ablations,
            noise,
            mfec,
            total_steps: self.total_steps,
            seeds: self.seeds.clone(),
            eval_window: self.eval_window,
            layout_seed: self.env.layout_seed,
        })
    }
}

/// Resolve the run directory: explicit `out_dir` if given, otherwise
/// `runs/<config file stem>`; relative paths land under `root` when set.
pub fn resolve_out_dir(
    out_dir: Option<&str>,
    config_path: &Path,
    root: Option<&Path>,
) -> PathBuf {
    let rel = match out_dir {
        Some(d) => PathBuf::from(d),
        None => {
            let stem = config_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "experiment".to_string());
            PathBuf::from("runs").join(stem)
        }
    };
    if rel.is_absolute() {
        rel
    } else {
        root.map(|r| r.join(&rel)).unwrap_or(rel)
    }
}

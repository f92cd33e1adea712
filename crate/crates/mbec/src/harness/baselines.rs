//! Head-to-head baseline agents: table-based episodic control over
//! random-projection keys, and a uniform-random policy. Both emit the same
//! metrics rows as the training loop so curves line up column for column.

use rand::Rng;
use rand_distr::StandardNormal;

use super::HarnessError;
use crate::agent::{
    linear_eps, mc_returns, select_action, ContributionWindow, EpisodeRecord, MetricsLog,
    StepRecord,
};
use crate::envs::Environment;
use crate::util::rng::stream;

#[derive(Clone, Debug)]
pub struct MfecConfig {
    pub key_dim: usize,
    /// Neighbors averaged when a key has not been seen exactly.
    pub k: usize,
    /// Per-action table capacity; oldest entries evicted first.
    pub table_capacity: usize,
    pub gamma: f64,
    pub eps_start: f64,
    pub eps_final: f64,
    pub eps_decay_frac: f64,
}

impl Default for MfecConfig {
    fn default() -> Self {
        MfecConfig {
            key_dim: 64,
            k: 11,
            table_capacity: 1_000_000,
            gamma: 0.99,
            eps_start: 1.0,
            eps_final: 0.01,
            eps_decay_frac: 0.1,
        }
    }
}

struct ActionTable {
    keys: Vec<Vec<f64>>,
    values: Vec<f64>,
    /// Next slot to overwrite once the table is full.
    cursor: usize,
}

impl ActionTable {
    fn new() -> Self {
        ActionTable {
            keys: Vec::new(),
            values: Vec::new(),
            cursor: 0,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Episodic control with per-action value tables: exact-match reads return
/// the stored value, unseen keys average the nearest neighbors, and writes
/// keep the maximum return ever observed for a key.
pub struct MfecAgent {
    proj: Vec<Vec<f64>>,
    tables: Vec<ActionTable>,
    cfg: MfecConfig,
    obs_dim: usize,
}

impl MfecAgent {
    pub fn new(obs_dim: usize, num_actions: usize, cfg: MfecConfig, rng: &mut impl Rng) -> Self {
        assert!(obs_dim > 0 && num_actions > 0);
        let proj = (0..cfg.key_dim)
            .map(|_| (0..obs_dim).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        MfecAgent {
            proj,
            tables: (0..num_actions).map(|_| ActionTable::new()).collect(),
            cfg,
            obs_dim,
        }
    }

    pub fn project(&self, obs: &[f64]) -> Vec<f64> {
        assert_eq!(obs.len(), self.obs_dim, "observation dim mismatch");
        self.proj
            .iter()
            .map(|row| row.iter().zip(obs).map(|(w, x)| w * x).sum())
            .collect()
    }

    /// Estimated return of `action` at `key`; untried actions read as
    /// positive infinity so the greedy policy tries everything once.
    pub fn value(&self, key: &[f64], action: usize) -> f64 {
        let table = &self.tables[action];
        if table.keys.is_empty() {
            return f64::INFINITY;
        }
        if let Some(hit) = table.keys.iter().position(|k| k.as_slice() == key) {
            return table.values[hit];
        }
        let mut dists: Vec<(f64, usize)> = table
            .keys
            .iter()
            .enumerate()
            .map(|(i, k)| (sq_dist(key, k), i))
            .collect();
        let take = self.cfg.k.min(dists.len());
        dists.select_nth_unstable_by(take - 1, |a, b| a.0.total_cmp(&b.0));
        dists[..take].iter().map(|(_, i)| table.values[*i]).sum::<f64>() / take as f64
    }

    /// Max-rule write: a revisited key keeps the larger return; new keys
    /// append, evicting the oldest entry at capacity.
    pub fn write(&mut self, key: &[f64], action: usize, ret: f64) {
        let cap = self.cfg.table_capacity;
        let table = &mut self.tables[action];
        if let Some(hit) = table.keys.iter().position(|k| k.as_slice() == key) {
            if ret > table.values[hit] {
                table.values[hit] = ret;
            }
            return;
        }
        if table.keys.len() < cap {
            table.keys.push(key.to_vec());
            table.values.push(ret);
        } else {
            table.keys[table.cursor] = key.to_vec();
            table.values[table.cursor] = ret;
            table.cursor = (table.cursor + 1) % cap;
        }
    }

    pub fn occupancy(&self) -> usize {
        self.tables.iter().map(|t| t.keys.len()).sum()
    }
}

/// Run the table-based baseline for `total_steps`, logging the same schema
/// as the training loop (losses stay empty).
pub fn run_mfec<E: Environment + ?Sized>(
    cfg: &MfecConfig,
    total_steps: u64,
    env: &mut E,
    master_seed: u64,
) -> Result<MetricsLog, HarnessError> {
    let mut env_rng = stream(master_seed, "env");
    let mut explore_rng = stream(master_seed, "exploration");
    let mut agent = MfecAgent::new(
        env.obs_dim(),
        env.num_actions(),
        cfg.clone(),
        &mut stream(master_seed, "init/mfec_proj"),
    );
    let n_actions = env.num_actions();
    let mut metrics = MetricsLog::default();
    let mut window = ContributionWindow::new(100);
    let mut obs = env.reset(&mut env_rng);
    let mut episode: u64 = 0;
    let mut ep_len: u32 = 0;
    let mut ep_reward_total = 0.0;
    let mut ep_rewards: Vec<f64> = Vec::new();
    let mut ep_keys: Vec<(Vec<f64>, usize)> = Vec::new();
    for step in 0..total_steps {
        let eps = linear_eps(
            cfg.eps_start,
            cfg.eps_final,
            cfg.eps_decay_frac,
            total_steps,
            step,
        );
        let key = agent.project(&obs);
        let values: Vec<f64> = (0..n_actions).map(|a| agent.value(&key, a)).collect();
        let action = select_action(&values, eps, &mut explore_rng);
        window.push(true, false);
        let out = env.step(action, &mut env_rng);
        ep_keys.push((key, action));
        ep_rewards.push(out.reward);
        ep_reward_total += out.reward;
        ep_len += 1;
        if out.done {
            for (t, (k, a)) in ep_keys.iter().enumerate() {
                agent.write(k, *a, mc_returns(&ep_rewards[t..], cfg.gamma));
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
            memory_occupancy: agent.occupancy(),
            td_loss: None,
            tr_loss: None,
            reward_loss: None,
        });
        metrics.actions.push(action);
        obs = out.obs;
        if out.done {
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
            ep_keys.clear();
            obs = env.reset(&mut env_rng);
        }
    }
    Ok(metrics)
}

/// Uniform-random policy, the floor every learner should clear.
pub fn run_random<E: Environment + ?Sized>(
    total_steps: u64,
    env: &mut E,
    master_seed: u64,
) -> MetricsLog {
    let mut env_rng = stream(master_seed, "env");
    let mut explore_rng = stream(master_seed, "exploration");
    let n_actions = env.num_actions();
    let mut metrics = MetricsLog::default();
    env.reset(&mut env_rng);
    let mut episode: u64 = 0;
    let mut ep_len: u32 = 0;
    let mut ep_reward_total = 0.0;
    for step in 0..total_steps {
        let action = explore_rng.gen_range(0..n_actions);
        let out = env.step(action, &mut env_rng);
        ep_reward_total += out.reward;
        ep_len += 1;
        metrics.steps.push(StepRecord {
            step,
            episode,
            reward: out.reward,
            episode_len: ep_len,
            eps: 1.0,
            episodic_contribution: 0.0,
            semantic_contribution: 0.0,
            memory_occupancy: 0,
            td_loss: None,
            tr_loss: None,
            reward_loss: None,
        });
        metrics.actions.push(action);
        if out.done {
            metrics.episodes.push(EpisodeRecord {
                episode,
                end_step: step,
                total_reward: ep_reward_total,
                length: ep_len,
            });
            episode += 1;
            ep_len = 0;
            ep_reward_total = 0.0;
            env.reset(&mut env_rng);
        }
    }
    metrics
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::argmax;
    use crate::envs::{CartPole, MazeEnv, MazeMode};

    fn tiny_agent(k: usize, cap: usize) -> MfecAgent {
        let cfg = MfecConfig {
            key_dim: 2,
            k,
            table_capacity: cap,
            ..MfecConfig::default()
        };
        MfecAgent::new(2, 2, cfg, &mut stream(1, "init/mfec_proj"))
    }

    #[test]
    fn write_keeps_the_maximum_return() {
        let mut agent = tiny_agent(3, 10);
        let key = vec![1.0, 2.0];
        agent.write(&key, 0, 3.0);
        assert_eq!(agent.value(&key, 0), 3.0);
        agent.write(&key, 0, 5.0);
        assert_eq!(agent.value(&key, 0), 5.0);
        agent.write(&key, 0, 2.0);
        assert_eq!(agent.value(&key, 0), 5.0, "smaller return must not regress");
    }

    #[test]
    fn exact_match_beats_neighbor_average() {
        let mut agent = tiny_agent(2, 10);
        agent.write(&[0.0, 0.0], 0, 1.0);
        agent.write(&[1.0, 0.0], 0, 5.0);
        agent.write(&[0.0, 1.0], 0, 9.0);
        assert_eq!(agent.value(&[1.0, 0.0], 0), 5.0);
    }

    #[test]
    fn unseen_key_reads_mean_of_nearest_neighbors() {
        let mut agent = tiny_agent(2, 10);
        agent.write(&[0.0, 0.0], 0, 2.0);
        agent.write(&[0.1, 0.0], 0, 4.0);
        agent.write(&[10.0, 0.0], 0, 100.0);
        // Nearest two of (0.05, 0) are the first pair.
        assert!((agent.value(&[0.05, 0.0], 0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_table_reads_infinite_optimism() {
        let agent = tiny_agent(2, 10);
        assert_eq!(agent.value(&[0.0, 0.0], 1), f64::INFINITY);
        assert_eq!(argmax(&[1.0, f64::INFINITY]), 1);
    }

    #[test]
    fn fifo_eviction_replaces_the_oldest_entry() {
        let mut agent = tiny_agent(1, 2);
        agent.write(&[0.0, 0.0], 0, 1.0);
        agent.write(&[1.0, 0.0], 0, 2.0);
        agent.write(&[2.0, 0.0], 0, 3.0);
        assert_eq!(agent.occupancy(), 2);
        // (0,0) was evicted, so its read now averages the survivor nearest it.
        assert_eq!(agent.value(&[0.0, 0.0], 0), 2.0);
        assert_eq!(agent.value(&[2.0, 0.0], 0), 3.0);
    }

    #[test]
    fn mfec_run_is_deterministic_and_fills_tables() {
        let cfg = MfecConfig {
            key_dim: 8,
            ..MfecConfig::default()
        };
        let mut env = MazeEnv::new(3, MazeMode::Plain, &mut stream(3, "env_build"));
        let a = run_mfec(&cfg, 400, &mut env, 7).unwrap();
        let mut env = MazeEnv::new(3, MazeMode::Plain, &mut stream(3, "env_build"));
        let b = run_mfec(&cfg, 400, &mut env, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.steps.last().unwrap().memory_occupancy > 0);
        assert!(!a.episodes.is_empty());
    }

    #[test]
    fn random_agent_visits_every_action() {
        let mut env = CartPole::new();
        let log = run_random(500, &mut env, 5);
        assert_eq!(log.steps.len(), 500);
        for a in 0..2 {
            assert!(log.actions.contains(&a));
        }
        assert!(log.episodes.len() > 2, "random cart-pole should fall often");
    }
}

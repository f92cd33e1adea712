//! Experiment execution: build the environment, run every seed (parallel
//! across seeds, each with fully private state), and lay down the artifact
//! directory with per-seed logs, checkpoint, summary, and manifest.

use std::fs;
use std::path::{Path, PathBuf};

use super::baselines::{run_mfec, run_random};
use super::config::{AgentKind, ExperimentConfig, ResolvedExperiment, Task};
use super::metrics::{
    atomic_write, build_summary, episodes_csv, read_episodes_csv, read_json, read_steps_csv,
    seed_summary, steps_csv, write_json, Manifest, SeedSummary, Summary,
};
use super::HarnessError;
use crate::agent::{run_training, MetricsLog};
use crate::diffnum::{save_checkpoint, ParamSet};
use crate::envs::{CartPole, Environment, MazeEnv, MountainCar, NoisyEnv};
use crate::memcore::EpisodicMemory;
use crate::util::par::{map_collect, ExecMode};
use crate::util::rng::stream;

pub struct SeedOutcome {
    pub seed: u64,
    pub metrics: MetricsLog,
    pub params: Vec<(&'static str, ParamSet)>,
    pub memory: Option<EpisodicMemory>,
}

/// Build the (possibly noise-wrapped) environment for one seed. The maze
/// layout is carved from the experiment's layout seed, not the run seed, so
/// every seed trains on the same map.
pub fn build_env(rx: &ResolvedExperiment, seed: u64) -> Box<dyn Environment> {
    let base: Box<dyn Environment> = match &rx.task {
        Task::Maze { size, mode } => {
            let mut layout_rng = stream(rx.layout_seed, "env_build");
            Box::new(MazeEnv::new(*size, mode.clone(), &mut layout_rng))
        }
        Task::CartPole => Box::new(CartPole::new()),
        Task::MountainCar => Box::new(MountainCar::new()),
    };
    if rx.noise.is_noop() {
        base
    } else {
        Box::new(NoisyEnv::new(base, rx.noise.clone(), stream(seed, "noise")))
    }
}

/// Run one seed of the experiment and return its full in-memory outcome.
pub fn run_seed(rx: &ResolvedExperiment, seed: u64) -> Result<SeedOutcome, HarnessError> {
    let mut env = build_env(rx, seed);
    match rx.agent_kind.mode() {
        Some(mode) => {
            let out = run_training(&rx.agent_cfg, mode, &rx.ablations, env.as_mut(), seed)?;
            Ok(SeedOutcome {
                seed,
                metrics: out.metrics,
                params: out.params,
                memory: Some(out.memory),
            })
        }
        None => {
            let metrics = match rx.agent_kind {
                AgentKind::Mfec => run_mfec(&rx.mfec, rx.total_steps, env.as_mut(), seed)?,
                AgentKind::Random => run_random(rx.total_steps, env.as_mut(), seed),
                _ => unreachable!("learned agents handled above"),
            };
            Ok(SeedOutcome {
                seed,
                metrics,
                params: Vec::new(),
                memory: None,
            })
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_seed_dir(dir: &Path, outcome: &SeedOutcome) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let steps_path = dir.join("steps.csv");
    atomic_write(&steps_path, steps_csv(&outcome.metrics.steps).as_bytes())
        .map_err(io_err(&steps_path))?;
    let ep_path = dir.join("episodes.csv");
    atomic_write(&ep_path, episodes_csv(&outcome.metrics.episodes).as_bytes())
        .map_err(io_err(&ep_path))?;
    if !outcome.params.is_empty() {
        let refs: Vec<(&str, &ParamSet)> =
            outcome.params.iter().map(|(n, p)| (*n, p)).collect();
        save_checkpoint(&dir.join("checkpoint.bin"), &refs)?;
    }
    if let Some(memory) = &outcome.memory {
        let mut buf = Vec::new();
        memory
            .snapshot_csv(&mut buf)
            .map_err(io_err(&dir.join("memory.csv")))?;
        atomic_write(&dir.join("memory.csv"), &buf).map_err(io_err(&dir.join("memory.csv")))?;
    }
    Ok(())
}

/// Execute a whole experiment from a config file. Returns the artifact
/// directory. On a mid-run failure, per-seed logs written so far survive and
/// the manifest keeps `complete: false`.
pub fn run_experiment(
    config_path: &Path,
    exec: ExecMode,
    out_root: Option<&Path>,
) -> Result<PathBuf, HarnessError> {
    let raw = fs::read(config_path).map_err(io_err(config_path))?;
    let raw_str = std::str::from_utf8(&raw)
        .map_err(|e| HarnessError::Parse(format!("config is not UTF-8: {e}")))?;
    let cfg = ExperimentConfig::from_toml(raw_str)?;
    let rx = cfg.resolve()?;
    let dir = super::config::resolve_out_dir(cfg.out_dir.as_deref(), config_path, out_root);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    atomic_write(&dir.join("config.toml"), &raw).map_err(io_err(&dir.join("config.toml")))?;
    let mut manifest = Manifest::new(
        &cfg.task,
        &cfg.agent,
        rx.total_steps,
        &rx.seeds,
        rx.eval_window,
        &raw,
    );
    write_json(&dir.join("manifest.json"), &manifest)?;

    let results: Vec<Result<SeedOutcome, HarnessError>> =
        map_collect(exec, rx.seeds.clone(), |seed| run_seed(&rx, seed));
    let mut per_seed: Vec<SeedSummary> = Vec::new();
    for result in results {
        let outcome = result?;
        write_seed_dir(&dir.join(format!("seed_{}", outcome.seed)), &outcome)?;
        per_seed.push(seed_summary(
            outcome.seed,
            &outcome.metrics.steps,
            &outcome.metrics.episodes,
            rx.eval_window,
        ));
    }
    let summary = build_summary(rx.eval_window, per_seed);
    write_json(&dir.join("summary.json"), &summary)?;
    manifest.complete = true;
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(dir)
}

pub struct SummarizeReport {
    pub recomputed: Summary,
    /// Deviation from the emitted summary.json, when one exists.
    pub emitted_deviation: Option<f64>,
    pub complete: bool,
}

/// Recompute the summary of a finished run directory from its raw CSVs and
/// compare against the emitted summary.
pub fn summarize_dir(dir: &Path) -> Result<SummarizeReport, HarnessError> {
    let manifest: Manifest = read_json(&dir.join("manifest.json"))?;
    let mut per_seed = Vec::new();
    for seed in &manifest.seeds {
        let sd = dir.join(format!("seed_{seed}"));
        let steps = read_steps_csv(&sd.join("steps.csv"))?;
        let episodes = read_episodes_csv(&sd.join("episodes.csv"))?;
        per_seed.push(seed_summary(*seed, &steps, &episodes, manifest.eval_window));
    }
    let recomputed = build_summary(manifest.eval_window, per_seed);
    let emitted_deviation = if dir.join("summary.json").exists() {
        let emitted: Summary = read_json(&dir.join("summary.json"))?;
        let dev = super::metrics::summary_deviation(&recomputed, &emitted)
            .map_err(HarnessError::SummaryMismatch)?;
        Some(dev)
    } else {
        None
    };
    Ok(SummarizeReport {
        recomputed,
        emitted_deviation,
        complete: manifest.complete,
    })
}

/// Render a summary as an aligned text table for terminal output.
pub fn render_summary(summary: &Summary) -> String {
    let fmt_opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    let mut out = String::new();
    out.push_str("seed     steps  episodes  mean_step  mean_episode  final_window\n");
    for s in &summary.per_seed {
        out.push_str(&format!(
            "{:<6} {:>7} {:>9} {:>10} {:>13} {:>13}\n",
            s.seed,
            s.steps,
            s.completed_episodes,
            fmt_opt(s.mean_step_reward),
            fmt_opt(s.mean_episode_reward),
            fmt_opt(s.final_window_reward),
        ));
    }
    for (name, a) in &summary.aggregate {
        out.push_str(&format!(
            "{name}: mean {:.6} std {:.6} over {} seeds\n",
            a.mean, a.std, a.n
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    const MAZE_CFG: &str = r#"
task = "maze"
agent = "mbec"
total_steps = 300
seeds = [1, 2, 3]

[agent_config]
traj_hidden = 4
eps_final = 0.3
"#;

    fn write_cfg(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("exp.toml");
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn experiment_lays_down_expected_artifacts() {
        let tmp = tempdir().unwrap();
        let cfg = write_cfg(tmp.path(), MAZE_CFG);
        let out = run_experiment(&cfg, ExecMode::Sequential, Some(tmp.path())).unwrap();
        assert_eq!(out, tmp.path().join("runs/exp"));
        for seed in [1, 2, 3] {
            let sd = out.join(format!("seed_{seed}"));
            let steps = read_steps_csv(&sd.join("steps.csv")).unwrap();
            assert_eq!(steps.len(), 300);
            assert!(sd.join("episodes.csv").exists());
            assert!(sd.join("checkpoint.bin").exists());
            assert!(sd.join("memory.csv").exists());
        }
        let manifest: Manifest = read_json(&out.join("manifest.json")).unwrap();
        assert!(manifest.complete);
        assert_eq!(manifest.seeds, vec![1, 2, 3]);
        let summary: Summary = read_json(&out.join("summary.json")).unwrap();
        assert_eq!(summary.per_seed.len(), 3);
    }

    #[test]
    fn rerun_is_byte_identical() {
        let tmp = tempdir().unwrap();
        let cfg = write_cfg(tmp.path(), MAZE_CFG);
        let first = run_experiment(&cfg, ExecMode::Sequential, Some(tmp.path())).unwrap();
        let bytes_a = fs::read(first.join("seed_2/steps.csv")).unwrap();
        let summary_a = fs::read(first.join("summary.json")).unwrap();
        let second = run_experiment(&cfg, ExecMode::Parallel, Some(tmp.path())).unwrap();
        assert_eq!(first, second);
        let bytes_b = fs::read(second.join("seed_2/steps.csv")).unwrap();
        let summary_b = fs::read(second.join("summary.json")).unwrap();
        assert_eq!(bytes_a, bytes_b, "per-seed CSVs must be reproducible");
        assert_eq!(summary_a, summary_b);
    }

    #[test]
    fn summarize_recomputes_the_emitted_summary_exactly() {
        let tmp = tempdir().unwrap();
        let cfg = write_cfg(tmp.path(), MAZE_CFG);
        let out = run_experiment(&cfg, ExecMode::Sequential, Some(tmp.path())).unwrap();
        let report = summarize_dir(&out).unwrap();
        assert!(report.complete);
        let dev = report.emitted_deviation.unwrap();
        assert!(dev <= 1e-9, "deviation {dev}");
        let rendered = render_summary(&report.recomputed);
        assert!(rendered.contains("seed"));
        assert!(rendered.contains("mean_episode_reward"));
    }

    #[test]
    fn baseline_agents_run_end_to_end() {
        let tmp = tempdir().unwrap();
        let body = r#"
task = "cartpole"
agent = "mfec"
total_steps = 400
seeds = [5]
"#;
        let cfg = write_cfg(tmp.path(), body);
        let out = run_experiment(&cfg, ExecMode::Sequential, Some(tmp.path())).unwrap();
        let steps = read_steps_csv(&out.join("seed_5/steps.csv")).unwrap();
        assert_eq!(steps.len(), 400);
        assert!(steps.last().unwrap().memory_occupancy > 0);
        assert!(!out.join("seed_5/checkpoint.bin").exists());
        let report = summarize_dir(&out).unwrap();
        assert_eq!(report.emitted_deviation, Some(0.0));
    }

    #[test]
    fn invalid_config_fails_before_touching_the_run_dir() {
        let tmp = tempdir().unwrap();
        let cfg = write_cfg(tmp.path(), "task = \"maze\"\nagent = \"nope\"\ntotal_steps = 1\nseeds = [1]\n");
        let err = run_experiment(&cfg, ExecMode::Sequential, Some(tmp.path())).unwrap_err();
        assert!(matches!(err, HarnessError::InvalidConfig { field: "agent", .. }));
        assert!(!tmp.path().join("runs/exp").exists());
    }
}

//! Run artifacts: per-seed CSV logs, the cross-seed summary, and the run
//! manifest. Floats are printed with the shortest round-trip formatting, so
//! reading a CSV back reproduces bit-identical values and the summary can be
//! recomputed from raw logs exactly.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use super::HarnessError;
use crate::agent::{EpisodeRecord, StepRecord};

pub const CSV_SCHEMA_VERSION: u32 = 1;
pub const STEPS_HEADER: &str = "step,episode,reward,episode_len,eps,episodic_contribution,semantic_contribution,memory_occupancy,td_loss,tr_loss,reward_loss";
pub const EPISODES_HEADER: &str = "episode,end_step,total_reward,length";

/// Write `bytes` to `path` via a temp file and rename, so readers never see
/// a half-written artifact.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_file_name(format!(
        "{}.tmp",
        path.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "artifact".to_string())
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn steps_csv(rows: &[StepRecord]) -> String {
    let mut out = String::from(STEPS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.step,
            r.episode,
            r.reward,
            r.episode_len,
            r.eps,
            r.episodic_contribution,
            r.semantic_contribution,
            r.memory_occupancy,
            fmt_opt(r.td_loss),
            fmt_opt(r.tr_loss),
            fmt_opt(r.reward_loss),
        ));
    }
    out
}

pub fn episodes_csv(rows: &[EpisodeRecord]) -> String {
    let mut out = String::from(EPISODES_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.episode, r.end_step, r.total_reward, r.length
        ));
    }
    out
}

fn csv_err(path: &Path, line: usize, reason: impl Into<String>) -> HarnessError {
    HarnessError::Csv {
        path: path.display().to_string(),
        line,
        reason: reason.into(),
    }
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    line: usize,
    field: &str,
    raw: &str,
) -> Result<T, HarnessError> {
    raw.parse()
        .map_err(|_| csv_err(path, line, format!("bad {field}: {raw:?}")))
}

fn parse_opt(path: &Path, line: usize, field: &str, raw: &str) -> Result<Option<f64>, HarnessError> {
    if raw.is_empty() {
        Ok(None)
    } else {
        parse_field(path, line, field, raw).map(Some)
    }
}

pub fn read_steps_csv(path: &Path) -> Result<Vec<StepRecord>, HarnessError> {
    let raw = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = raw.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == STEPS_HEADER => {}
        other => return Err(csv_err(path, 1, format!("bad header: {other:?}"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 11 {
            return Err(csv_err(path, i + 1, format!("expected 11 columns, got {}", cols.len())));
        }
        rows.push(StepRecord {
            step: parse_field(path, i + 1, "step", cols[0])?,
            episode: parse_field(path, i + 1, "episode", cols[1])?,
            reward: parse_field(path, i + 1, "reward", cols[2])?,
            episode_len: parse_field(path, i + 1, "episode_len", cols[3])?,
            eps: parse_field(path, i + 1, "eps", cols[4])?,
            episodic_contribution: parse_field(path, i + 1, "episodic_contribution", cols[5])?,
            semantic_contribution: parse_field(path, i + 1, "semantic_contribution", cols[6])?,
            memory_occupancy: parse_field(path, i + 1, "memory_occupancy", cols[7])?,
            td_loss: parse_opt(path, i + 1, "td_loss", cols[8])?,
            tr_loss: parse_opt(path, i + 1, "tr_loss", cols[9])?,
            reward_loss: parse_opt(path, i + 1, "reward_loss", cols[10])?,
        });
    }
    Ok(rows)
}

pub fn read_episodes_csv(path: &Path) -> Result<Vec<EpisodeRecord>, HarnessError> {
    let raw = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = raw.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == EPISODES_HEADER => {}
        other => return Err(csv_err(path, 1, format!("bad header: {other:?}"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(csv_err(path, i + 1, format!("expected 4 columns, got {}", cols.len())));
        }
        rows.push(EpisodeRecord {
            episode: parse_field(path, i + 1, "episode", cols[0])?,
            end_step: parse_field(path, i + 1, "end_step", cols[1])?,
            total_reward: parse_field(path, i + 1, "total_reward", cols[2])?,
            length: parse_field(path, i + 1, "length", cols[3])?,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub steps: u64,
    pub completed_episodes: u64,
    /// Mean per-step reward; absent for an empty run.
    pub mean_step_reward: Option<f64>,
    /// Mean total reward over completed episodes.
    pub mean_episode_reward: Option<f64>,
    /// Mean total reward over the last `eval_window` completed episodes.
    pub final_window_reward: Option<f64>,
}

/// Mean and population standard deviation over the seeds that reported the
/// statistic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub eval_window: usize,
    pub per_seed: Vec<SeedSummary>,
    pub aggregate: BTreeMap<String, Aggregate>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

fn aggregate_of(xs: &[f64]) -> Option<Aggregate> {
    let m = mean(xs)?;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    Some(Aggregate {
        mean: m,
        std: var.sqrt(),
        n: xs.len(),
    })
}

pub fn seed_summary(
    seed: u64,
    steps: &[StepRecord],
    episodes: &[EpisodeRecord],
    eval_window: usize,
) -> SeedSummary {
    let step_rewards: Vec<f64> = steps.iter().map(|r| r.reward).collect();
    let ep_rewards: Vec<f64> = episodes.iter().map(|e| e.total_reward).collect();
    let tail = &ep_rewards[ep_rewards.len().saturating_sub(eval_window)..];
    SeedSummary {
        seed,
        steps: steps.len() as u64,
        completed_episodes: episodes.len() as u64,
        mean_step_reward: mean(&step_rewards),
        mean_episode_reward: mean(&ep_rewards),
        final_window_reward: mean(tail),
    }
}

pub fn build_summary(eval_window: usize, per_seed: Vec<SeedSummary>) -> Summary {
    let mut aggregate = BTreeMap::new();
    let collect = |f: &dyn Fn(&SeedSummary) -> Option<f64>| -> Vec<f64> {
        per_seed.iter().filter_map(|s| f(s)).collect()
    };
    let entries: [(&str, Vec<f64>); 4] = [
        ("mean_step_reward", collect(&|s| s.mean_step_reward)),
        ("mean_episode_reward", collect(&|s| s.mean_episode_reward)),
        ("final_window_reward", collect(&|s| s.final_window_reward)),
        (
            "completed_episodes",
            per_seed.iter().map(|s| s.completed_episodes as f64).collect(),
        ),
    ];
    for (name, xs) in entries {
        if let Some(a) = aggregate_of(&xs) {
            aggregate.insert(name.to_string(), a);
        }
    }
    Summary {
        schema_version: CSV_SCHEMA_VERSION,
        eval_window,
        per_seed,
        aggregate,
    }
}

/// Largest absolute difference between two summaries' numbers, or an error
/// describing a structural mismatch.
pub fn summary_deviation(a: &Summary, b: &Summary) -> Result<f64, String> {
    if a.per_seed.len() != b.per_seed.len() {
        return Err(format!(
            "seed count differs: {} vs {}",
            a.per_seed.len(),
            b.per_seed.len()
        ));
    }
    let mut dev = 0.0f64;
    let mut track_opt = |x: Option<f64>, y: Option<f64>, what: &str| -> Result<(), String> {
        match (x, y) {
            (None, None) => Ok(()),
            (Some(x), Some(y)) => {
                dev = dev.max((x - y).abs());
                Ok(())
            }
            _ => Err(format!("{what} present on one side only")),
        }
    };
    for (x, y) in a.per_seed.iter().zip(&b.per_seed) {
        if x.seed != y.seed || x.steps != y.steps || x.completed_episodes != y.completed_episodes
        {
            return Err(format!("seed row mismatch: {x:?} vs {y:?}"));
        }
        track_opt(x.mean_step_reward, y.mean_step_reward, "mean_step_reward")?;
        track_opt(
            x.mean_episode_reward,
            y.mean_episode_reward,
            "mean_episode_reward",
        )?;
        track_opt(
            x.final_window_reward,
            y.final_window_reward,
            "final_window_reward",
        )?;
    }
    if a.aggregate.keys().ne(b.aggregate.keys()) {
        return Err("aggregate key sets differ".to_string());
    }
    for (k, x) in &a.aggregate {
        let y = &b.aggregate[k];
        if x.n != y.n {
            return Err(format!("aggregate {k} n differs"));
        }
        dev = dev.max((x.mean - y.mean).abs()).max((x.std - y.std).abs());
    }
    Ok(dev)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub csv_schema_version: u32,
    pub code_version: String,
    pub config_sha256: String,
    pub task: String,
    pub agent: String,
    pub total_steps: u64,
    pub seeds: Vec<u64>,
    pub eval_window: usize,
    pub steps_header: String,
    pub episodes_header: String,
    pub complete: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    pub fn new(
        task: &str,
        agent: &str,
        total_steps: u64,
        seeds: &[u64],
        eval_window: usize,
        config_bytes: &[u8],
    ) -> Self {
        Manifest {
            manifest_version: 1,
            csv_schema_version: CSV_SCHEMA_VERSION,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: sha256_hex(config_bytes),
            task: task.to_string(),
            agent: agent.to_string(),
            total_steps,
            seeds: seeds.to_vec(),
            eval_window,
            steps_header: STEPS_HEADER.to_string(),
            episodes_header: EPISODES_HEADER.to_string(),
            complete: false,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut body = serde_json::to_string_pretty(value)
        .map_err(|e| HarnessError::Parse(e.to_string()))?;
    body.push('\n');
    atomic_write(path, body.as_bytes()).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, HarnessError> {
    let raw = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&raw).map_err(|e| HarnessError::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn sample_steps() -> Vec<StepRecord> {
        vec![
            StepRecord {
                step: 0,
                episode: 0,
                reward: -0.011111111111111112,
                episode_len: 1,
                eps: 1.0,
                episodic_contribution: 1.0,
                semantic_contribution: 0.0,
                memory_occupancy: 0,
                td_loss: None,
                tr_loss: None,
                reward_loss: None,
            },
            StepRecord {
                step: 1,
                episode: 0,
                reward: 0.9888888888888889,
                episode_len: 2,
                eps: 0.9,
                episodic_contribution: 0.5,
                semantic_contribution: 0.5,
                memory_occupancy: 3,
                td_loss: Some(0.125),
                tr_loss: None,
                reward_loss: Some(1e-9),
            },
        ]
    }

    fn sample_episodes() -> Vec<EpisodeRecord> {
        vec![
            EpisodeRecord {
                episode: 0,
                end_step: 1,
                total_reward: 0.9777777777777779,
                length: 2,
            },
            EpisodeRecord {
                episode: 1,
                end_step: 5,
                total_reward: -1.25,
                length: 4,
            },
        ]
    }

    #[test]
    fn csv_round_trips_bit_exactly() {
        let dir = tempdir().unwrap();
        let steps = sample_steps();
        let episodes = sample_episodes();
        let sp = dir.path().join("steps.csv");
        let ep = dir.path().join("episodes.csv");
        atomic_write(&sp, steps_csv(&steps).as_bytes()).unwrap();
        atomic_write(&ep, episodes_csv(&episodes).as_bytes()).unwrap();
        assert_eq!(read_steps_csv(&sp).unwrap(), steps);
        assert_eq!(read_episodes_csv(&ep).unwrap(), episodes);
        // No temp files left behind.
        let leftovers: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".tmp"))
            .collect();
        assert!(leftovers.is_empty(), "{leftovers:?}");
    }

    #[test]
    fn malformed_csv_reports_line_and_field() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("steps.csv");
        let body = format!("{STEPS_HEADER}\n0,0,oops,1,1.0,0,0,0,,,\n");
        fs::write(&p, body).unwrap();
        match read_steps_csv(&p) {
            Err(HarnessError::Csv { line, reason, .. }) => {
                assert_eq!(line, 2);
                assert!(reason.contains("reward"));
            }
            other => panic!("expected csv error, got {other:?}"),
        }
    }

    #[test]
    fn summary_statistics_match_hand_computation() {
        let s1 = seed_summary(1, &sample_steps(), &sample_episodes(), 1);
        assert_eq!(s1.completed_episodes, 2);
        assert!((s1.mean_episode_reward.unwrap() - (0.9777777777777779 - 1.25) / 2.0).abs() < 1e-15);
        assert_eq!(s1.final_window_reward.unwrap(), -1.25);
        let s2 = SeedSummary {
            seed: 2,
            steps: 2,
            completed_episodes: 4,
            mean_step_reward: Some(0.5),
            mean_episode_reward: Some(1.0),
            final_window_reward: Some(2.0),
        };
        let summary = build_summary(1, vec![s1.clone(), s2]);
        let agg = &summary.aggregate["completed_episodes"];
        assert_eq!(agg.mean, 3.0);
        assert_eq!(agg.std, 1.0);
        assert_eq!(agg.n, 2);
        assert_eq!(summary_deviation(&summary, &summary), Ok(0.0));
        let mut other = summary.clone();
        other.aggregate.get_mut("completed_episodes").unwrap().mean += 1e-6;
        assert!(summary_deviation(&summary, &other).unwrap() > 1e-7);
    }

    #[test]
    fn empty_run_yields_absent_statistics() {
        let s = seed_summary(0, &[], &[], 100);
        assert_eq!(s.mean_step_reward, None);
        assert_eq!(s.mean_episode_reward, None);
        let summary = build_summary(100, vec![s]);
        assert!(summary.aggregate.contains_key("completed_episodes"));
        assert!(!summary.aggregate.contains_key("mean_step_reward"));
    }

    #[test]
    fn manifest_and_summary_round_trip_as_json() {
        let dir = tempdir().unwrap();
        let m = Manifest::new("maze", "mbec", 100, &[1, 2], 100, b"config text");
        let p = dir.path().join("manifest.json");
        write_json(&p, &m).unwrap();
        let back: Manifest = read_json(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.config_sha256.len(), 64);
        assert!(!back.complete);
    }
}

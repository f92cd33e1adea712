//! Executable checks of the analytical claims behind the library: the write
//! operator converges on known targets, refinement contracts at the
//! predicted modulus, reconstruction losses bound trajectory separation, and
//! a planar memory's value surface can be dumped for inspection.
//!
//! Every oracle is a deterministic job keyed off a master seed. `verify_all`
//! runs the full set, writes one CSV artifact per oracle plus a JSON
//! summary, and reports pass/fail per claim.

pub mod contraction;
pub mod dump;
pub mod finite_mdp;
pub mod tr_bound;
pub mod write_conv;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::agent::{Ablations, AgentConfig, AgentError, Mode, run_training};
use crate::envs::{MazeEnv, MazeMode};
use crate::harness::metrics::atomic_write;
use crate::memcore::MemoryError;
use crate::util::par::{ExecMode, map_collect};
use crate::util::rng::stream;

use contraction::{memory_refine_fixed_point, refine_contraction_oracle};
use finite_mdp::{FiniteMdp, sup_dist, two_state_chain};

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("transition row ({state}, {action}) sums to {sum}, not 1")]
    NonStochasticRow {
        state: usize,
        action: usize,
        sum: f64,
    },
    #[error("value surface needs a populated memory")]
    EmptyMemory,
    #[error("failed writing {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

/// Pass/fail for one claim, with a human-readable measurement summary.
#[derive(Clone, Debug, Serialize)]
pub struct OracleOutcome {
    pub name: String,
    pub passed: bool,
    pub details: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub master_seed: u64,
    pub outcomes: Vec<OracleOutcome>,
    pub all_passed: bool,
}

fn write_artifact(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), OracleError> {
    let path = dir.join(name);
    atomic_write(&path, bytes).map_err(|source| OracleError::Io { path, source })
}

fn decay_oracle(dir: &Path, master: u64) -> Result<OracleOutcome, OracleError> {
    let curve = write_conv::decaying_write_curve(1.0, 0.2, 10_000, 20, master)?;
    let check = write_conv::decay_check(&curve.smoothed);
    let mut csv = String::from("write,mean_abs_error,smoothed\n");
    for (n, (raw, sm)) in curve.mean_abs_error.iter().zip(&curve.smoothed).enumerate() {
        writeln!(csv, "{},{raw},{sm}", n + 1).expect("string write");
    }
    write_artifact(dir, "write_conv_decay.csv", csv.as_bytes())?;
    let passed = curve.final_error < 0.02 && check.monotone;
    Ok(OracleOutcome {
        name: "write_decay".into(),
        passed,
        details: format!(
            "final error {:.6} (tolerance 0.02), max smoothed rise {:.2e}, decade shrink factors {:?}",
            curve.final_error, check.max_adjacent_rise, check.shrink_factors
        ),
    })
}

fn bias_oracle(dir: &Path, master: u64) -> Result<OracleOutcome, OracleError> {
    let truths = [0.0, 1.0, 2.0];
    let check = write_conv::knn_bias_check(truths, 0.2, 3000, 20, master)?;
    let mut csv = String::from("vertex,true_value,predicted,mean,se\n");
    for v in 0..3 {
        writeln!(
            csv,
            "{v},{},{},{},{}",
            truths[v], check.predicted, check.vertex_means[v], check.vertex_ses[v]
        )
        .expect("string write");
    }
    write_artifact(dir, "write_conv_bias.csv", csv.as_bytes())?;
    Ok(OracleOutcome {
        name: "write_knn_bias".into(),
        passed: check.within_two_se,
        details: format!(
            "predicted {}, vertex means {:?}, standard errors {:?}",
            check.predicted, check.vertex_means, check.vertex_ses
        ),
    })
}

fn kw_oracle(dir: &Path, master: u64) -> Result<OracleOutcome, OracleError> {
    let cmp = write_conv::kw_comparison(1.0, 0.2, 3000, 20, master)?;
    let csv = format!("k_w,final_error\n1,{}\n3,{}\n", cmp.err_kw1, cmp.err_kw3);
    write_artifact(dir, "write_conv_kw.csv", csv.as_bytes())?;
    Ok(OracleOutcome {
        name: "write_kw_pooling".into(),
        passed: cmp.err_kw3 <= cmp.err_kw1,
        details: format!("k_w=1 error {:.5}, k_w=3 error {:.5}", cmp.err_kw1, cmp.err_kw3),
    })
}

fn contraction_oracle(
    dir: &Path,
    master: u64,
    exec: ExecMode,
) -> Result<OracleOutcome, OracleError> {
    let mut rng = stream(master, "oracle/mdp");
    let cases: Vec<(usize, FiniteMdp, usize)> = (0..20)
        .map(|i| {
            let n_states = 2 + (i % 19);
            let n_actions = 1 + (i % 4);
            let mdp = FiniteMdp::random(n_states, n_actions, 0.99, &mut rng);
            let k = if i % 2 == 0 { 1 } else { 5 };
            (i, mdp, k)
        })
        .collect();
    let reports = map_collect(exec, cases, |(i, mdp, k)| {
        let report = refine_contraction_oracle(&mdp, k, 20_000)?;
        Ok::<_, OracleError>((i, mdp, k, report))
    });
    let mut csv = String::from("mdp,states,actions,k,gamma_k,max_ratio,residual,sweeps\n");
    let mut passed = true;
    let mut worst_margin = f64::INFINITY;
    for item in reports {
        let (i, mdp, k, report) = item?;
        let ok = report.max_post_burnin_ratio <= report.gamma_k + 0.05
            && report.fixed_point_residual < 1e-6;
        passed &= ok;
        worst_margin =
            worst_margin.min(report.gamma_k + 0.05 - report.max_post_burnin_ratio);
        writeln!(
            csv,
            "{i},{},{},{k},{},{},{},{}",
            mdp.n_states,
            mdp.n_actions,
            report.gamma_k,
            report.max_post_burnin_ratio,
            report.fixed_point_residual,
            report.distances.len()
        )
        .expect("string write");
    }
    write_artifact(dir, "contraction.csv", csv.as_bytes())?;
    Ok(OracleOutcome {
        name: "refine_contraction".into(),
        passed,
        details: format!(
            "20 random tabular models, worst ratio margin below gamma_k + 0.05: {worst_margin:.2e}"
        ),
    })
}

fn fixed_point_oracle(master: u64) -> Result<OracleOutcome, OracleError> {
    // the chain rewards differ by seed only through gamma; keep it fixed and
    // vary the stay reward a little for variety across masters
    let stay_r = -0.1 - (master % 7) as f64 * 0.05;
    let mdp = two_state_chain(0.9, stay_r);
    let exact = mdp.value_iteration(1e-12);
    let via_memory = memory_refine_fixed_point(&mdp, 400)?;
    let gap = sup_dist(&exact, &via_memory);
    Ok(OracleOutcome {
        name: "refine_fixed_point".into(),
        passed: gap < 1e-6,
        details: format!(
            "sup-distance between memory refinement and value iteration: {gap:.2e}"
        ),
    })
}

fn tr_bound_oracle(dir: &Path, master: u64) -> Result<OracleOutcome, OracleError> {
    let report = tr_bound::tr_bound_report(100, master);
    let mut csv = String::from("trial,lhs,rhs,sigma_min,slack\n");
    for row in &report.rows {
        writeln!(
            csv,
            "{},{},{},{},{}",
            row.trial, row.lhs, row.rhs, row.sigma_min, row.slack
        )
        .expect("string write");
    }
    write_artifact(dir, "tr_bound.csv", csv.as_bytes())?;
    Ok(OracleOutcome {
        name: "tr_separation_bound".into(),
        passed: report.passes == report.rows.len(),
        details: format!(
            "{}/{} instances hold, min slack {:.3}, degenerate resamples {}",
            report.passes,
            report.rows.len(),
            report.min_slack,
            report.degenerate_resamples
        ),
    })
}

fn dump_oracle(dir: &Path, master: u64) -> Result<OracleOutcome, OracleError> {
    // planar-key run: small maze, short horizon, exploration kept warm so
    // episodes finish and the memory fills
    let mut cfg = AgentConfig::maze_defaults(2000);
    cfg.traj_hidden = 2;
    cfg.normalize_keys = true;
    cfg.eps_final = 0.3;
    cfg.memory_capacity = 400;
    let mut env = MazeEnv::new(3, MazeMode::Plain, &mut stream(master, "env_build"));
    let out = run_training(&cfg, Mode::Mbec, &Ablations::default(), &mut env, master)?;
    let grid = dump::trajectory_space_dump(&out.memory, cfg.k)?;
    let mut grid_bytes = Vec::new();
    dump::grid_csv(&grid, &mut grid_bytes).expect("vec write");
    write_artifact(dir, "traj_surface.csv", &grid_bytes)?;
    let mut key_bytes = Vec::new();
    out.memory.snapshot_csv(&mut key_bytes).expect("vec write");
    write_artifact(dir, "traj_keys.csv", &key_bytes)?;
    let lo = grid.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = grid.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(OracleOutcome {
        name: "trajectory_surface".into(),
        passed: out.memory.occupancy() > 0 && lo.is_finite() && hi.is_finite(),
        details: format!(
            "memory occupancy {}, surface range [{lo:.3}, {hi:.3}]",
            out.memory.occupancy()
        ),
    })
}

/// Runs every oracle, writing artifacts and `verify.json` under `out_dir`.
pub fn verify_all(
    out_dir: &Path,
    master: u64,
    exec: ExecMode,
) -> Result<VerifyReport, OracleError> {
    std::fs::create_dir_all(out_dir).map_err(|source| OracleError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let outcomes = vec![
        decay_oracle(out_dir, master)?,
        bias_oracle(out_dir, master)?,
        kw_oracle(out_dir, master)?,
        contraction_oracle(out_dir, master, exec)?,
        fixed_point_oracle(master)?,
        tr_bound_oracle(out_dir, master)?,
        dump_oracle(out_dir, master)?,
    ];
    let all_passed = outcomes.iter().all(|o| o.passed);
    let report = VerifyReport {
        master_seed: master,
        outcomes,
        all_passed,
    };
    let json = serde_json::to_vec_pretty(&report).expect("report serializes");
    write_artifact(out_dir, "verify.json", &json)?;
    Ok(report)
}

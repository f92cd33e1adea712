//! Random-instance audit of the trajectory-separation bound.
//!
//! Draws fully linear recall instances with gaussian weights, trajectory
//! vectors, and transition sets, and evaluates the separation inequality on
//! each: two trajectory vectors whose reconstruction losses on a shared
//! transition set are small must themselves be close. Degenerate draws where
//! the composed map annihilates the difference vector make the inequality
//! vacuous; those are resampled and counted rather than scored.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::trajmodel::{LinearRecallInstance, linear_tr_bound_check};
use crate::util::rng::stream;

/// Hidden width of the sampled trajectory vectors.
pub const HIDDEN: usize = 6;
/// Query (state-action embedding) dimension.
pub const QUERY_DIM: usize = 4;
/// Reconstruction output dimension; taller than [`HIDDEN`] so the composed
/// map is full column rank for generic draws.
pub const OUT_DIM: usize = 8;
/// Shared transitions per instance.
pub const SHARED: usize = 12;

/// One scored instance.
#[derive(Clone, Debug)]
pub struct TrialRow {
    pub trial: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub sigma_min: f64,
    /// `rhs - lhs`; nonnegative on a pass.
    pub slack: f64,
}

/// Aggregate over all trials.
#[derive(Clone, Debug)]
pub struct TrBoundReport {
    pub rows: Vec<TrialRow>,
    pub passes: usize,
    pub min_slack: f64,
    /// Degenerate draws discarded across the whole run.
    pub degenerate_resamples: usize,
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    DMatrix::from_fn(rows, cols, |_, _| normal.sample(rng))
}

fn gaussian_vector(len: usize, rng: &mut impl Rng) -> DVector<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    DVector::from_fn(len, |_, _| normal.sample(rng))
}

fn transition_set(count: usize, rng: &mut impl Rng) -> Vec<(DVector<f64>, DVector<f64>)> {
    (0..count)
        .map(|_| (gaussian_vector(QUERY_DIM, rng), gaussian_vector(OUT_DIM, rng)))
        .collect()
}

/// Draws a dense random instance; every matrix entry, trajectory entry, and
/// transition is standard normal.
pub fn random_instance(rng: &mut impl Rng) -> LinearRecallInstance {
    LinearRecallInstance {
        w: gaussian_matrix(OUT_DIM, HIDDEN, rng),
        u: gaussian_matrix(HIDDEN, HIDDEN, rng),
        v: gaussian_matrix(HIDDEN, QUERY_DIM, rng),
        tau1: gaussian_vector(HIDDEN, rng),
        tau2: gaussian_vector(HIDDEN, rng),
        shared: transition_set(SHARED, rng),
        extra1: transition_set(rng.gen_range(0..4), rng),
        extra2: transition_set(rng.gen_range(0..4), rng),
    }
}

/// Scores `trials` random instances, resampling degenerate draws.
pub fn tr_bound_report(trials: usize, master: u64) -> TrBoundReport {
    assert!(trials >= 1, "need at least one trial");
    let mut rng = stream(master, "oracle/tr_bound");
    let mut rows = Vec::with_capacity(trials);
    let mut degenerate_resamples = 0;
    for trial in 0..trials {
        let check = loop {
            let check = linear_tr_bound_check(&random_instance(&mut rng));
            if !check.degenerate {
                break check;
            }
            degenerate_resamples += 1;
        };
        rows.push(TrialRow {
            trial,
            lhs: check.lhs,
            rhs: check.rhs,
            sigma_min: check.sigma_min,
            slack: check.rhs - check.lhs,
        });
    }
    let passes = rows.iter().filter(|r| r.slack >= 0.0).count();
    let min_slack = rows
        .iter()
        .map(|r| r.slack)
        .fold(f64::INFINITY, f64::min);
    TrBoundReport {
        rows,
        passes,
        min_slack,
        degenerate_resamples,
    }
}

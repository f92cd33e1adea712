//! Contraction check for the memory-refinement operator under the
//! equal-distance neighbor simplification: each synchronous sweep moves the
//! read function by at most `gamma_k = (gamma + K - 1) / K` of the previous
//! move, so iterates converge geometrically to a fixed point.

use super::finite_mdp::{sup_dist, FiniteMdp};
use super::OracleError;
use crate::memcore::EpisodicMemory;

pub const BURN_IN_SWEEPS: usize = 5;

#[derive(Clone, Debug)]
pub struct ContractionReport {
    /// Sup-norm move per sweep.
    pub distances: Vec<f64>,
    /// Ratio of successive moves, after burn-in.
    pub ratios: Vec<f64>,
    pub gamma_k: f64,
    pub max_post_burnin_ratio: f64,
    /// Sup-norm of one extra sweep applied to the final iterate.
    pub fixed_point_residual: f64,
    pub final_values: Vec<f64>,
}

pub fn gamma_k(gamma: f64, k: usize) -> f64 {
    (gamma + k as f64 - 1.0) / k as f64
}

/// One synchronous sweep with K equal-distance neighbors: replacing one of
/// the K averaged slots moves each state's read 1/K of the way toward the
/// one-step lookahead target built from the previous reads.
pub fn refine_sweep(mdp: &FiniteMdp, reads: &[f64], k: usize) -> Vec<f64> {
    let backed = mdp.backup(reads);
    let kf = k as f64;
    reads
        .iter()
        .zip(&backed)
        .map(|(old, target)| target / kf + (kf - 1.0) / kf * old)
        .collect()
}

pub fn refine_contraction_oracle(
    mdp: &FiniteMdp,
    k: usize,
    max_sweeps: usize,
) -> Result<ContractionReport, OracleError> {
    assert!(k >= 1, "need at least one neighbor");
    let gk = gamma_k(mdp.gamma, k);
    let mut reads = vec![0.0; mdp.n_states];
    let mut distances = Vec::new();
    for _ in 0..max_sweeps {
        let next = refine_sweep(mdp, &reads, k);
        let d = sup_dist(&reads, &next);
        reads = next;
        distances.push(d);
        if d < 1e-9 {
            break;
        }
    }
    let ratios: Vec<f64> = distances
        .windows(2)
        .skip(BURN_IN_SWEEPS)
        .filter(|w| w[0] > 1e-13)
        .map(|w| w[1] / w[0])
        .collect();
    let max_post_burnin_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    let fixed_point_residual = sup_dist(&reads, &refine_sweep(mdp, &reads, k));
    Ok(ContractionReport {
        distances,
        ratios,
        gamma_k: gk,
        max_post_burnin_ratio,
        fixed_point_residual,
        final_values: reads,
    })
}

/// Drive the real memory's refine through repeated exact-key sweeps on a
/// tabular MDP whose states are far-apart keys, so every read resolves to
/// exactly one slot. With full write rate and a single neighbor each refine
/// is one optimality backup per state, so the memory must converge to the
/// value-iteration fixed point.
pub fn memory_refine_fixed_point(
    mdp: &FiniteMdp,
    sweeps: usize,
) -> Result<Vec<f64>, OracleError> {
    assert!(
        mdp.p
            .iter()
            .all(|pa| pa.iter().all(|row| row.iter().all(|v| *v == 0.0 || *v == 1.0))),
        "real-memory sweep needs deterministic transitions"
    );
    let key_of = |x: usize| vec![x as f64 * 1000.0];
    let next_of = |x: usize, a: usize| -> usize {
        mdp.p[a][x]
            .iter()
            .position(|v| *v == 1.0)
            .expect("deterministic row has a 1")
    };
    let mut memory = EpisodicMemory::new(1, mdp.n_states);
    for x in 0..mdp.n_states {
        memory.write(&key_of(x), 0.0, 1.0, 1)?;
    }
    for _ in 0..sweeps {
        for x in 0..mdp.n_states {
            memory.refine(
                mdp.n_actions,
                &key_of(x),
                |a| key_of(next_of(x, a)),
                |a| mdp.r[x][a],
                mdp.gamma,
                1.0,
                1,
                1,
            )?;
        }
    }
    let mut out = vec![0.0; mdp.n_states];
    for slot in 0..memory.occupancy() {
        let x = (memory.key(slot)[0] / 1000.0).round() as usize;
        out[x] = memory.value(slot);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::finite_mdp::two_state_chain;
    use crate::util::rng::stream;

    #[test]
    fn gamma_k_matches_hand_substitution() {
        assert!((gamma_k(0.99, 1) - 0.99).abs() < 1e-15);
        assert!((gamma_k(0.99, 5) - 0.998).abs() < 1e-15);
        assert!((gamma_k(0.5, 2) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn single_neighbor_sweep_is_value_iteration() {
        let mdp = two_state_chain(0.9, -0.5);
        let report = refine_contraction_oracle(&mdp, 1, 10_000).unwrap();
        let vi = mdp.value_iteration(1e-13);
        assert!(sup_dist(&report.final_values, &vi) < 1e-6);
        assert!(report.fixed_point_residual < 1e-6);
    }

    #[test]
    fn empirical_ratios_respect_the_modulus() {
        let mut rng = stream(11, "oracle/mdp");
        for trial in 0..5 {
            let mdp = FiniteMdp::random(9, 3, 0.9, &mut rng);
            for k in [1, 4] {
                let report = refine_contraction_oracle(&mdp, k, 50_000).unwrap();
                assert!(
                    report.max_post_burnin_ratio <= report.gamma_k + 0.05,
                    "trial {trial} k {k}: ratio {} vs modulus {}",
                    report.max_post_burnin_ratio,
                    report.gamma_k
                );
                assert!(report.fixed_point_residual < 1e-6);
            }
        }
    }

    #[test]
    fn larger_neighborhoods_converge_more_slowly() {
        let mdp = two_state_chain(0.5, 0.0);
        let fast = refine_contraction_oracle(&mdp, 1, 50_000).unwrap();
        let slow = refine_contraction_oracle(&mdp, 5, 50_000).unwrap();
        assert!(slow.distances.len() > fast.distances.len());
        assert!(sup_dist(&fast.final_values, &slow.final_values) < 1e-5);
    }

    #[test]
    fn real_memory_refine_reaches_the_value_iteration_fixed_point() {
        let mdp = two_state_chain(0.9, -0.5);
        let values = memory_refine_fixed_point(&mdp, 400).unwrap();
        let vi = mdp.value_iteration(1e-13);
        assert!(
            sup_dist(&values, &vi) < 1e-6,
            "memory {values:?} vs value iteration {vi:?}"
        );
    }
}

//! Small tabular MDPs with exact value iteration, used as ground truth for
//! the memory-refinement checks.

use rand::Rng;

use super::OracleError;

/// Tabular MDP: `p[a][x][y]` is the transition probability, `r[x][a]` the
/// reward for taking `a` in `x`.
#[derive(Clone, Debug)]
pub struct FiniteMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub p: Vec<Vec<Vec<f64>>>,
    pub r: Vec<Vec<f64>>,
    pub gamma: f64,
}

const ROW_TOL: f64 = 1e-9;

impl FiniteMdp {
    pub fn new(
        p: Vec<Vec<Vec<f64>>>,
        r: Vec<Vec<f64>>,
        gamma: f64,
    ) -> Result<Self, OracleError> {
        let n_actions = p.len();
        assert!(n_actions > 0, "need at least one action");
        let n_states = p[0].len();
        assert!(n_states > 0, "need at least one state");
        assert_eq!(r.len(), n_states, "reward table state count");
        for (a, pa) in p.iter().enumerate() {
            assert_eq!(pa.len(), n_states, "transition tensor state count");
            for (x, row) in pa.iter().enumerate() {
                assert_eq!(row.len(), n_states, "transition row length");
                let sum: f64 = row.iter().sum();
                if row.iter().any(|v| *v < -ROW_TOL) || (sum - 1.0).abs() > ROW_TOL {
                    return Err(OracleError::NonStochasticRow {
                        state: x,
                        action: a,
                        sum,
                    });
                }
            }
        }
        for row in &r {
            assert_eq!(row.len(), n_actions, "reward row length");
            assert!(row.iter().all(|v| v.is_finite()), "rewards must be finite");
        }
        assert!(gamma > 0.0 && gamma < 1.0, "gamma must be in (0, 1)");
        Ok(FiniteMdp {
            n_states,
            n_actions,
            p,
            r,
            gamma,
        })
    }

    /// Random dense MDP with normalized uniform transition rows and rewards
    /// in [-1, 1].
    pub fn random(n_states: usize, n_actions: usize, gamma: f64, rng: &mut impl Rng) -> Self {
        let p = (0..n_actions)
            .map(|_| {
                (0..n_states)
                    .map(|_| {
                        let mut row: Vec<f64> =
                            (0..n_states).map(|_| rng.gen_range(0.01..1.0)).collect();
                        let sum: f64 = row.iter().sum();
                        for v in &mut row {
                            *v /= sum;
                        }
                        row
                    })
                    .collect()
            })
            .collect();
        let r = (0..n_states)
            .map(|_| (0..n_actions).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        FiniteMdp::new(p, r, gamma).expect("normalized rows are stochastic")
    }

    /// One optimality backup: `(TV)(x) = max_a r(x,a) + gamma * sum_y P_a(x,y) V(y)`.
    pub fn backup(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n_states)
            .map(|x| {
                (0..self.n_actions)
                    .map(|a| {
                        let exp: f64 = self.p[a][x]
                            .iter()
                            .zip(v)
                            .map(|(prob, vy)| prob * vy)
                            .sum();
                        self.r[x][a] + self.gamma * exp
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }

    /// Optimal values by fixed-point iteration to sup-norm tolerance `tol`.
    pub fn value_iteration(&self, tol: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.n_states];
        for _ in 0..1_000_000 {
            let next = self.backup(&v);
            let diff = sup_dist(&v, &next);
            v = next;
            if diff < tol {
                break;
            }
        }
        v
    }
}

pub fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Deterministic two-state chain with a known closed-form optimum: state 0
/// may move right for no reward or stay for `stay_r`; state 1 is absorbing
/// with reward 1 per step.
pub fn two_state_chain(gamma: f64, stay_r: f64) -> FiniteMdp {
    let p = vec![
        // action 0: advance (0 -> 1), 1 stays.
        vec![vec![0.0, 1.0], vec![0.0, 1.0]],
        // action 1: stay put.
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
    ];
    let r = vec![vec![0.0, stay_r], vec![1.0, 1.0]];
    FiniteMdp::new(p, r, gamma).expect("hand-built chain is stochastic")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::rng::stream;

    #[test]
    fn bad_rows_are_rejected_with_location() {
        let p = vec![vec![vec![0.5, 0.4], vec![0.0, 1.0]]];
        let r = vec![vec![0.0], vec![0.0]];
        match FiniteMdp::new(p, r, 0.9) {
            Err(OracleError::NonStochasticRow { state, action, sum }) => {
                assert_eq!((state, action), (0, 0));
                assert!((sum - 0.9).abs() < 1e-12);
            }
            other => panic!("expected row rejection, got {other:?}"),
        }
    }

    #[test]
    fn random_mdps_validate() {
        let mut rng = stream(1, "oracle/mdp");
        for _ in 0..10 {
            let mdp = FiniteMdp::random(7, 3, 0.95, &mut rng);
            assert_eq!(mdp.n_states, 7);
        }
    }

    #[test]
    fn chain_value_iteration_matches_closed_form() {
        // Best play: advance immediately, then collect 1 forever:
        // V(1) = 1/(1-g), V(0) = 0 + g V(1).
        let gamma = 0.9;
        let mdp = two_state_chain(gamma, -0.5);
        let v = mdp.value_iteration(1e-13);
        let v1 = 1.0 / (1.0 - gamma);
        assert!((v[1] - v1).abs() < 1e-9);
        assert!((v[0] - gamma * v1).abs() < 1e-9);
    }

    #[test]
    fn value_iteration_is_a_fixed_point() {
        let mut rng = stream(2, "oracle/mdp");
        let mdp = FiniteMdp::random(12, 4, 0.9, &mut rng);
        let v = mdp.value_iteration(1e-13);
        assert!(sup_dist(&v, &mdp.backup(&v)) < 1e-10);
    }
}

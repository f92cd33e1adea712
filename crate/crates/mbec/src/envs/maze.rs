//! Grid maze with four observation modes. The layout is a spanning tree
//! carved by randomized depth-first search, so every cell is reachable from
//! every other and connectivity never needs a repair pass.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Environment, StepOutcome};

pub const MAZE_MAX_STEPS: u32 = 1000;
pub const NOISY_FEATURE_DIM: usize = 512;

/// Directions in action order: north, east, south, west.
const DELTAS: [(i64, i64); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

fn opposite(dir: usize) -> usize {
    (dir + 2) % 4
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MazeMode {
    /// Observation: normalized (row, col).
    Plain,
    /// Plain position plus a per-cell feature vector with component dropout
    /// at the given rate.
    Noisy { drop_rate: f64 },
    /// Plain position plus the normalized location of a per-episode trap
    /// cell worth -2 on entry.
    Trap,
    /// Agent one-hot plus the flattened wall bits; the layout is re-carved
    /// every episode.
    Dynamic,
}

pub struct MazeEnv {
    n: usize,
    mode: MazeMode,
    /// Per-cell wall bits in direction order; bit set blocks the move.
    walls: Vec<u8>,
    pos: (usize, usize),
    steps: u32,
    trap: Option<(usize, usize)>,
    /// Unit-norm per-cell features, fixed for the life of the maze.
    features: Vec<Vec<f64>>,
}

impl MazeEnv {
    pub fn new(n: usize, mode: MazeMode, build_rng: &mut ChaCha8Rng) -> Self {
        assert!(n >= 2, "maze needs at least 2x2 cells");
        if let MazeMode::Noisy { drop_rate } = mode {
            assert!((0.0..=1.0).contains(&drop_rate), "drop rate out of range");
        }
        let walls = carve(n, build_rng);
        let features = if matches!(mode, MazeMode::Noisy { .. }) {
            (0..n * n)
                .map(|_| {
                    let mut f: Vec<f64> = (0..NOISY_FEATURE_DIM)
                        .map(|_| StandardNormal.sample(build_rng))
                        .collect();
                    let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
                    for v in f.iter_mut() {
                        *v /= norm;
                    }
                    f
                })
                .collect()
        } else {
            Vec::new()
        };
        MazeEnv {
            n,
            mode,
            walls,
            pos: (0, 0),
            steps: 0,
            trap: None,
            features,
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn walls(&self) -> &[u8] {
        &self.walls
    }

    pub fn trap(&self) -> Option<(usize, usize)> {
        self.trap
    }

    fn goal(&self) -> (usize, usize) {
        (self.n - 1, self.n - 1)
    }

    fn cell(&self, pos: (usize, usize)) -> usize {
        pos.0 * self.n + pos.1
    }

    fn observe(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let scale = (self.n - 1) as f64;
        let base = vec![self.pos.0 as f64 / scale, self.pos.1 as f64 / scale];
        match self.mode {
            MazeMode::Plain => base,
            MazeMode::Trap => {
                let (tr, tc) = self.trap.expect("trap placed at reset");
                let mut obs = base;
                obs.push(tr as f64 / scale);
                obs.push(tc as f64 / scale);
                obs
            }
            MazeMode::Noisy { drop_rate } => {
                let mut obs = base;
                for v in &self.features[self.cell(self.pos)] {
                    let keep = drop_rate == 0.0 || rng.gen::<f64>() >= drop_rate;
                    obs.push(if keep { *v } else { 0.0 });
                }
                obs
            }
            MazeMode::Dynamic => {
                let mut obs = vec![0.0; self.n * self.n];
                obs[self.cell(self.pos)] = 1.0;
                for w in &self.walls {
                    for d in 0..4 {
                        obs.push(if w & (1 << d) != 0 { 1.0 } else { 0.0 });
                    }
                }
                obs
            }
        }
    }
}

/// Spanning-tree layout via randomized depth-first search; all walls start
/// closed and only tree edges are opened.
fn carve(n: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut walls = vec![0b1111u8; n * n];
    let mut visited = vec![false; n * n];
    let mut stack = vec![(0usize, 0usize)];
    visited[0] = true;
    while let Some(&(r, c)) = stack.last() {
        let mut dirs = [0usize, 1, 2, 3];
        dirs.shuffle(rng);
        let mut advanced = false;
        for d in dirs {
            let nr = r as i64 + DELTAS[d].0;
            let nc = c as i64 + DELTAS[d].1;
            if nr < 0 || nc < 0 || nr >= n as i64 || nc >= n as i64 {
                continue;
            }
            let (nr, nc) = (nr as usize, nc as usize);
            if visited[nr * n + nc] {
                continue;
            }
            walls[r * n + c] &= !(1 << d);
            walls[nr * n + nc] &= !(1 << opposite(d));
            visited[nr * n + nc] = true;
            stack.push((nr, nc));
            advanced = true;
            break;
        }
        if !advanced {
            stack.pop();
        }
    }
    walls
}

impl Environment for MazeEnv {
    fn obs_dim(&self) -> usize {
        match self.mode {
            MazeMode::Plain => 2,
            MazeMode::Trap => 4,
            MazeMode::Noisy { .. } => 2 + NOISY_FEATURE_DIM,
            MazeMode::Dynamic => 5 * self.n * self.n,
        }
    }

    fn num_actions(&self) -> usize {
        4
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.pos = (0, 0);
        self.steps = 0;
        if self.mode == MazeMode::Dynamic {
            self.walls = carve(self.n, rng);
        }
        if self.mode == MazeMode::Trap {
            // Uniform over cells excluding start and goal.
            let start = 0;
            let goal = self.cell(self.goal());
            loop {
                let idx = rng.gen_range(0..self.n * self.n);
                if idx != start && idx != goal {
                    self.trap = Some((idx / self.n, idx % self.n));
                    break;
                }
            }
        }
        self.observe(rng)
    }

    fn step(&mut self, action: usize, rng: &mut ChaCha8Rng) -> StepOutcome {
        assert!(action < 4, "maze action out of range");
        self.steps += 1;
        let penalty = -0.1 / (self.n * self.n) as f64;
        let mut reward = penalty;
        let blocked = self.walls[self.cell(self.pos)] & (1 << action) != 0;
        if blocked {
            reward += -1.0;
        } else {
            let prev = self.pos;
            self.pos = (
                (self.pos.0 as i64 + DELTAS[action].0) as usize,
                (self.pos.1 as i64 + DELTAS[action].1) as usize,
            );
            if self.trap == Some(self.pos) && self.pos != prev {
                reward += -2.0;
            }
        }
        let at_goal = self.pos == self.goal();
        if at_goal {
            reward += 1.0;
        }
        let done = at_goal || self.steps >= MAZE_MAX_STEPS;
        StepOutcome {
            obs: self.observe(rng),
            reward,
            done,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use std::collections::VecDeque;

    fn bfs_reaches_goal(walls: &[u8], n: usize) -> bool {
        let mut seen = vec![false; n * n];
        let mut queue = VecDeque::from([(0usize, 0usize)]);
        seen[0] = true;
        while let Some((r, c)) = queue.pop_front() {
            if (r, c) == (n - 1, n - 1) {
                return true;
            }
            for d in 0..4 {
                if walls[r * n + c] & (1 << d) != 0 {
                    continue;
                }
                let nr = (r as i64 + DELTAS[d].0) as usize;
                let nc = (c as i64 + DELTAS[d].1) as usize;
                if !seen[nr * n + nc] {
                    seen[nr * n + nc] = true;
                    queue.push_back((nr, nc));
                }
            }
        }
        false
    }

    #[test]
    fn every_generated_layout_connects_start_to_goal() {
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for n in [2, 3, 5, 8] {
                let env = MazeEnv::new(n, MazeMode::Plain, &mut rng);
                assert!(bfs_reaches_goal(env.walls(), n), "seed {seed} n {n}");
            }
        }
    }

    #[test]
    fn dynamic_mode_relayouts_stay_connected_and_change() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut env = MazeEnv::new(4, MazeMode::Dynamic, &mut rng);
        let mut layouts = Vec::new();
        for _ in 0..20 {
            env.reset(&mut rng);
            assert!(bfs_reaches_goal(env.walls(), 4));
            layouts.push(env.walls().to_vec());
        }
        assert!(
            layouts.windows(2).any(|w| w[0] != w[1]),
            "20 episodes never changed the layout"
        );
    }

    #[test]
    fn free_move_costs_exactly_the_step_penalty() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut env = MazeEnv::new(3, MazeMode::Plain, &mut rng);
        env.reset(&mut rng);
        // From (0,0) one of east/south is open in a spanning tree.
        let open = if env.walls()[0] & 0b0010 == 0 { 1 } else { 2 };
        let out = env.step(open, &mut rng);
        assert!((out.reward - (-0.1 / 9.0)).abs() < 1e-15);
        assert!(!out.done);
    }

    #[test]
    fn wall_bump_costs_minus_one_and_stays() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut env = MazeEnv::new(3, MazeMode::Plain, &mut rng);
        let before = env.reset(&mut rng);
        // North from (0,0) is always a border wall.
        let out = env.step(0, &mut rng);
        assert!((out.reward - (-1.0 - 0.1 / 9.0)).abs() < 1e-15);
        assert_eq!(out.obs, before, "bump must not move the agent");
    }

    /// Action sequence from start to goal following tree edges.
    fn solve(walls: &[u8], n: usize) -> Vec<usize> {
        let mut parent = vec![usize::MAX; n * n];
        let mut queue = VecDeque::from([0usize]);
        parent[0] = 0;
        while let Some(cell) = queue.pop_front() {
            let (r, c) = (cell / n, cell % n);
            for d in 0..4 {
                if walls[cell] & (1 << d) != 0 {
                    continue;
                }
                let next =
                    ((r as i64 + DELTAS[d].0) as usize) * n + (c as i64 + DELTAS[d].1) as usize;
                if parent[next] == usize::MAX {
                    parent[next] = cell * 4 + d;
                    queue.push_back(next);
                }
            }
        }
        let mut actions = Vec::new();
        let mut cell = n * n - 1;
        while cell != 0 {
            let (from, d) = (parent[cell] / 4, parent[cell] % 4);
            actions.push(d);
            cell = from;
        }
        actions.reverse();
        actions
    }

    #[test]
    fn reaching_goal_pays_plus_one_and_terminates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut env = MazeEnv::new(2, MazeMode::Plain, &mut rng);
        env.reset(&mut rng);
        let path = solve(env.walls(), 2);
        for (i, action) in path.iter().enumerate() {
            let out = env.step(*action, &mut rng);
            if i + 1 == path.len() {
                assert!(out.done);
                assert!((out.reward - (1.0 - 0.1 / 4.0)).abs() < 1e-15);
            } else {
                assert!(!out.done);
            }
        }
    }

    #[test]
    fn step_cap_fires_done_without_goal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut env = MazeEnv::new(3, MazeMode::Plain, &mut rng);
        env.reset(&mut rng);
        for i in 0..MAZE_MAX_STEPS {
            // Bump the north border forever.
            let out = env.step(0, &mut rng);
            if i + 1 < MAZE_MAX_STEPS {
                assert!(!out.done);
            } else {
                assert!(out.done, "cap must terminate");
            }
        }
    }

    #[test]
    fn plain_observation_is_normalized_position() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut env = MazeEnv::new(3, MazeMode::Plain, &mut rng);
        assert_eq!(env.reset(&mut rng), vec![0.0, 0.0]);
        env.pos = (2, 1);
        assert_eq!(env.observe(&mut rng), vec![1.0, 0.5]);
    }

    #[test]
    fn trap_avoids_start_and_goal_and_costs_two_on_entry() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut env = MazeEnv::new(3, MazeMode::Trap, &mut rng);
        for _ in 0..100 {
            let obs = env.reset(&mut rng);
            let trap = env.trap().unwrap();
            assert_ne!(trap, (0, 0));
            assert_ne!(trap, (2, 2));
            assert_eq!(obs.len(), 4);
            assert_eq!(obs[2], trap.0 as f64 / 2.0);
            assert_eq!(obs[3], trap.1 as f64 / 2.0);
        }
        // Plant the trap next to the agent and walk in.
        env.reset(&mut rng);
        env.trap = Some((0, 1));
        env.walls[0] &= !0b0010;
        env.walls[1] &= !0b1000;
        let out = env.step(1, &mut rng);
        assert!((out.reward - (-2.0 - 0.1 / 9.0)).abs() < 1e-15);
        assert!(!out.done, "trap must not terminate");
        // Bumping a wall while on the trap is not an entry.
        env.walls[1] |= 0b0001;
        let bump = env.step(0, &mut rng);
        assert!((bump.reward - (-1.0 - 0.1 / 9.0)).abs() < 1e-15);
    }

    #[test]
    fn noisy_features_are_stable_per_cell_and_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut env = MazeEnv::new(3, MazeMode::Noisy { drop_rate: 0.0 }, &mut rng);
        let first = env.reset(&mut rng);
        assert_eq!(first.len(), 2 + NOISY_FEATURE_DIM);
        let again = env.observe(&mut rng);
        assert_eq!(first, again, "zero dropout must be deterministic");
        let norm: f64 = first[2..].iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dropout_zeroes_components_at_the_configured_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut env = MazeEnv::new(3, MazeMode::Noisy { drop_rate: 0.3 }, &mut rng);
        env.reset(&mut rng);
        let mut zeroed = 0usize;
        let mut total = 0usize;
        for _ in 0..200 {
            let obs = env.observe(&mut rng);
            zeroed += obs[2..].iter().filter(|v| **v == 0.0).count();
            total += NOISY_FEATURE_DIM;
        }
        let rate = zeroed as f64 / total as f64;
        assert!((rate - 0.3).abs() < 0.01, "observed dropout {rate}");
    }

    #[test]
    fn dynamic_observation_encodes_position_and_walls() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mut env = MazeEnv::new(3, MazeMode::Dynamic, &mut rng);
        let obs = env.reset(&mut rng);
        assert_eq!(obs.len(), 45);
        assert_eq!(obs[0], 1.0);
        assert_eq!(obs[1..9].iter().sum::<f64>(), 0.0);
        for (cell, w) in env.walls().iter().enumerate() {
            for d in 0..4 {
                let expect = if w & (1 << d) != 0 { 1.0 } else { 0.0 };
                assert_eq!(obs[9 + cell * 4 + d], expect);
            }
        }
    }
}

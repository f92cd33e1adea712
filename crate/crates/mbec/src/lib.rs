//! Episodic control with trajectory-keyed memory.
//!
//! The crate is organized bottom-up:
//!
//! - [`diffnum`]: dense tensors, a reverse-mode tape, Adam, layer primitives,
//!   checkpoint serialization, and finite-difference gradient checking.
//! - [`memcore`]: the episodic memory (kernel-weighted KNN reads, multi-slot
//!   writes, FIFO eviction, value refinement).
//! - [`trajmodel`]: the recurrent trajectory model and its recall-based
//!   reconstruction losses.
//! - [`valuenets`]: reward model, Q-networks, the consolidation gate, and the
//!   temporal-difference loss on the combined value.
//! - [`agent`]: the training loop tying memory, trajectory model, and value
//!   networks together.
//! - [`envs`]: small fully-owned environments (mazes, cart-pole, mountain-car)
//!   and observation/reward noise wrappers.
//! - [`harness`]: experiment configs, seeded runs, metrics, baselines.
//! - [`oracles`]: independent numerical checks of the convergence and bound
//!   claims the memory update is built on.

pub mod agent;
pub mod diffnum;
pub mod envs;
pub mod harness;
pub mod memcore;
pub mod oracles;
pub mod trajmodel;
pub mod util;
pub mod valuenets;

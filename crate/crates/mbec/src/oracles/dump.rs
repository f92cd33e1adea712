//! Value-surface dump over a 2-d key plane.
//!
//! With a hidden width of 2 the trajectory keys live in the plane, so the
//! memory's read operator defines a scalar field that can be rendered
//! directly: evaluate the weighted-average read at every point of a fixed
//! grid over [-1, 1]^2 and emit it as CSV alongside the stored keys.

use std::io::{self, Write};

use crate::memcore::EpisodicMemory;

use super::OracleError;

/// Grid spacing along each axis.
pub const GRID_STEP: f64 = 0.05;
/// Points per axis over [-1, 1]; 41 including both endpoints.
pub const GRID_POINTS: usize = 41;

/// Read values over the grid, row-major with `y` varying fastest.
#[derive(Clone, Debug)]
pub struct ValueGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `values[ix * GRID_POINTS + iy]` is the read at `(xs[ix], ys[iy])`.
    pub values: Vec<f64>,
}

fn axis() -> Vec<f64> {
    // (i - 20) / 20 lands exactly on the printed grid coordinates
    (0..GRID_POINTS)
        .map(|i| (i as f64 - 20.0) / 20.0)
        .collect()
}

/// Evaluates the weighted-average read with `k` neighbors at every grid
/// point. The neighbor count is clamped to the occupancy inside the read.
pub fn trajectory_space_dump(
    memory: &EpisodicMemory,
    k: usize,
) -> Result<ValueGrid, OracleError> {
    if memory.is_empty() {
        return Err(OracleError::EmptyMemory);
    }
    assert_eq!(memory.key_dim(), 2, "surface dump needs planar keys");
    let xs = axis();
    let ys = axis();
    let mut values = Vec::with_capacity(GRID_POINTS * GRID_POINTS);
    for &x in &xs {
        for &y in &ys {
            values.push(memory.read_resolved(&[x, y], true, k)?);
        }
    }
    Ok(ValueGrid { xs, ys, values })
}

/// Writes the grid as `x,y,value` rows.
pub fn grid_csv(grid: &ValueGrid, w: &mut impl Write) -> io::Result<()> {
    writeln!(w, "x,y,value")?;
    for (ix, x) in grid.xs.iter().enumerate() {
        for (iy, y) in grid.ys.iter().enumerate() {
            writeln!(w, "{x},{y},{}", grid.values[ix * GRID_POINTS + iy])?;
        }
    }
    Ok(())
}

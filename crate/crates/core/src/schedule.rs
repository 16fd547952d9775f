//! Node-update sweep orderings.

use crate::error::{Error, Result};

/// A cyclic list of sweep orderings; iteration `t` uses sweep `t mod len`.
/// Every sweep is a permutation of the node set.
#[derive(Debug, Clone)]
pub struct Schedule {
    sweeps: Vec<Vec<usize>>,
    node_count: usize,
}

impl Schedule {
    pub fn from_sweeps(sweeps: Vec<Vec<usize>>) -> Result<Self> {
        let node_count = match sweeps.first() {
            Some(s) if !s.is_empty() => s.len(),
            _ => return Err(Error::InvalidSchedule("no sweeps".into())),
        };
        for sweep in &sweeps {
            if sweep.len() != node_count {
                return Err(Error::InvalidSchedule("sweeps of unequal length".into()));
            }
            let mut seen = vec![false; node_count];
            for &u in sweep {
                if u >= node_count || seen[u] {
                    return Err(Error::InvalidSchedule(format!(
                        "sweep is not a permutation (node {u})"
                    )));
                }
                seen[u] = true;
            }
        }
        Ok(Self {
            sweeps,
            node_count,
        })
    }

    /// Single sweep in natural node order.
    pub fn natural(node_count: usize) -> Self {
        Self::from_sweeps(vec![(0..node_count).collect()]).expect("valid sweep")
    }

    /// Alternates the natural order with its reverse; the default for trees.
    pub fn forward_backward(node_count: usize) -> Self {
        Self::from_sweeps(vec![
            (0..node_count).collect(),
            (0..node_count).rev().collect(),
        ])
        .expect("valid sweeps")
    }

    /// The four classical grid orderings, cycled in turn: top-down-left-right,
    /// left-right-top-down, down-up-right-left and right-left-down-up
    /// (row-major, column-major and their reverses, for row-major node ids).
    pub fn grid_classical(rows: usize, cols: usize) -> Self {
        let node = |r: usize, c: usize| r * cols + c;
        let mut tdlr = Vec::with_capacity(rows * cols);
        let mut lrtd = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                tdlr.push(node(r, c));
            }
        }
        for c in 0..cols {
            for r in 0..rows {
                lrtd.push(node(r, c));
            }
        }
        let durl: Vec<usize> = tdlr.iter().rev().cloned().collect();
        let rldu: Vec<usize> = lrtd.iter().rev().cloned().collect();
        Self::from_sweeps(vec![tdlr, lrtd, durl, rldu]).expect("valid sweeps")
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn sweep(&self, iteration: usize) -> &[usize] {
        &self.sweeps[iteration % self.sweeps.len()]
    }
}

//! The inference backends over particle messages: EPBP with EP-adapted
//! Gaussian proposals, PBP with MCMC-sampled belief proposals (optionally
//! seeded with fixed Gaussians from a pure-EP run), and pure Gaussian EP.
//!
//! Node updates within a sweep are strictly sequential: each update consumes
//! the latest messages. All reductions run in a fixed left-to-right order so a
//! given seed reproduces bit-identical output.

mod epbp;
mod pbp;
mod pure_ep;

pub use epbp::{run_epbp, EpbpConfig, EpbpRunner};
pub use pbp::{
    mh_sample_from_belief, run_pbp, PbpConfig, PbpProposal, PbpRunner, DEFAULT_MH_PROPOSAL_STD,
    DEFAULT_MH_STEPS,
};
pub use pure_ep::{run_pure_ep, PureEpResult, PureEpRunner};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::mesh_oracle::{Mesh, MeshBelief};
use crate::model::{DirectedEdgeIndex, PairwiseMRF};
use crate::particles::{log_belief_at_full, Message};

/// Per-(iteration, node) diagnostic record.
#[derive(Debug, Clone)]
pub struct DiagnosticRow {
    pub iteration: usize,
    pub node: usize,
    pub wall_us: u128,
    /// Minimum effective sample size over the node's outgoing messages;
    /// absent for backends without importance weights.
    pub min_ess: Option<f64>,
    pub ep_reverts: usize,
}

/// Diagnostics stream collected during a run.
#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    pub rows: Vec<DiagnosticRow>,
}

impl Diagnostics {
    pub fn total_ep_reverts(&self) -> usize {
        self.rows.iter().map(|r| r.ep_reverts).sum()
    }

    pub fn min_ess(&self) -> Option<f64> {
        self.rows
            .iter()
            .filter_map(|r| r.min_ess)
            .min_by(|a, b| a.total_cmp(b))
    }
}

pub(crate) mod salt {
    pub const DRAW: u64 = 1;
    pub const SUBSAMPLE: u64 = 100;
    pub const MCMC: u64 = 2;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One deterministic stream per (iteration, node, purpose), split from the
/// master seed.
pub(crate) fn node_stream(master: u64, iteration: usize, node: usize, purpose: u64) -> ChaCha8Rng {
    let mut s = splitmix64(master);
    s = splitmix64(s ^ iteration as u64);
    s = splitmix64(s ^ node as u64);
    s = splitmix64(s ^ purpose);
    ChaCha8Rng::seed_from_u64(s)
}

/// Evaluates the final beliefs on the mesh with full-sum message evaluation
/// and normalizes each node.
pub(crate) fn render_beliefs(
    mrf: &PairwiseMRF,
    messages: &[Message],
    dir: &DirectedEdgeIndex,
    mesh: &Mesh,
) -> Result<Vec<MeshBelief>> {
    let graph = mrf.graph();
    let mut beliefs = Vec::with_capacity(graph.node_count());
    for u in 0..graph.node_count() {
        let incoming: Vec<&Message> = graph
            .neighbors(u)
            .iter()
            .map(|&w| &messages[dir.id(graph, w, u)])
            .collect();
        let logs: Vec<f64> = mesh
            .points()
            .iter()
            .map(|&x| log_belief_at_full(mrf, u, &incoming, x))
            .collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let values: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        beliefs.push(MeshBelief::normalized(u, values, mesh)?);
    }
    Ok(beliefs)
}

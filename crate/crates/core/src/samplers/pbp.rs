//! Particle BP with the reference proposal mechanisms: the current belief
//! estimate sampled through a short Metropolis-Hastings chain, or fixed
//! per-node Gaussians (typically a pure-EP result, the "PBP after EP"
//! baseline).

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{node_stream, render_beliefs, salt, DiagnosticRow, Diagnostics};
use crate::error::{Error, Result};
use crate::gaussian_ep::GaussianFactor;
use crate::mesh_oracle::{Mesh, MeshBelief};
use crate::model::{DirectedEdgeIndex, PairwiseMRF};
use crate::particles::{
    compute_outgoing_weights, effective_sample_size, log_belief_at, normalize_log_weights,
    Message, ParticleMessage,
};
use crate::schedule::Schedule;

pub const DEFAULT_MH_STEPS: usize = 20;

/// Default random-walk step size for the belief-targeting chains: large
/// enough to mix within one mode of a belief, far too small to hop between
/// well-separated modes within 20 steps. That undermixing is the point of
/// this baseline; raise it via config to make the sampler honest.
pub const DEFAULT_MH_PROPOSAL_STD: f64 = 0.3;

/// Width of the Gaussian used to seed chains on the very first update of a
/// node, centered at its observation.
const FIRST_SWEEP_INIT_STD: f64 = 5.0;

/// Where a node's particles come from.
#[derive(Debug, Clone)]
pub enum PbpProposal {
    /// Refresh particles with an MH chain targeting the current belief
    /// estimate, warm-started at the previous particles. With this proposal
    /// the outgoing weight reduces exactly to `1 / m_vu(x_i)`: the proposal
    /// density cancels everything else in the normalized weights.
    LastBelief,
    /// "After EP": draw exactly from fixed per-node Gaussians (a pure-EP
    /// result); weights follow the generic importance-sampling form.
    FixedGaussians(Vec<GaussianFactor>),
}

#[derive(Debug, Clone)]
pub struct PbpConfig {
    pub particles: usize,
    pub seed: u64,
    pub mh_steps: usize,
    pub mh_proposal_std: f64,
    pub proposal: PbpProposal,
}

impl PbpConfig {
    pub fn last_belief(particles: usize, seed: u64) -> Self {
        Self {
            particles,
            seed,
            mh_steps: DEFAULT_MH_STEPS,
            mh_proposal_std: DEFAULT_MH_PROPOSAL_STD,
            proposal: PbpProposal::LastBelief,
        }
    }

    pub fn after_ep(particles: usize, seed: u64, gaussians: Vec<GaussianFactor>) -> Self {
        Self {
            particles,
            seed,
            mh_steps: DEFAULT_MH_STEPS,
            mh_proposal_std: DEFAULT_MH_PROPOSAL_STD,
            proposal: PbpProposal::FixedGaussians(gaussians),
        }
    }
}

/// Independent Metropolis-Hastings chains with symmetric Gaussian increments,
/// one chain per init position; returns the final states.
fn mh_chains<R: Rng + ?Sized>(
    log_target: impl Fn(f64) -> f64,
    init_positions: &[f64],
    steps: usize,
    proposal_std: f64,
    rng: &mut R,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(init_positions.len());
    for &init in init_positions {
        let mut x = init;
        let mut log_p = log_target(x);
        for _ in 0..steps {
            let candidate = x + proposal_std * rng.sample::<f64, _>(StandardNormal);
            let log_c = log_target(candidate);
            let accept = rng.gen::<f64>().ln() < log_c - log_p;
            if accept {
                x = candidate;
                log_p = log_c;
            }
        }
        out.push(x);
    }
    out
}

/// Runs independent Metropolis-Hastings chains targeting the belief estimate
/// at node `u` (node potential times incoming messages), one chain per init
/// position. Returns the final states.
pub fn mh_sample_from_belief<R: Rng + ?Sized>(
    mrf: &PairwiseMRF,
    u: usize,
    incoming: &[&Message],
    init_positions: &[f64],
    steps: usize,
    proposal_std: f64,
    rng: &mut R,
) -> Vec<f64> {
    mh_chains(
        |x| log_belief_at(mrf, u, incoming, x),
        init_positions,
        steps,
        proposal_std,
        rng,
    )
}

pub struct PbpRunner<'a> {
    mrf: &'a PairwiseMRF,
    schedule: &'a Schedule,
    config: PbpConfig,
    dir: DirectedEdgeIndex,
    messages: Vec<Message>,
    particles: Vec<Vec<f64>>,
    iteration: usize,
    diagnostics: Diagnostics,
}

impl<'a> PbpRunner<'a> {
    pub fn new(mrf: &'a PairwiseMRF, schedule: &'a Schedule, config: PbpConfig) -> Result<Self> {
        if config.particles == 0 {
            return Err(Error::InvalidInput("particle count must be positive".into()));
        }
        let graph = mrf.graph();
        if schedule.node_count() != graph.node_count() {
            return Err(Error::DimensionMismatch(format!(
                "schedule over {} nodes for a {}-node graph",
                schedule.node_count(),
                graph.node_count()
            )));
        }
        if let PbpProposal::FixedGaussians(gs) = &config.proposal {
            if gs.len() != graph.node_count() {
                return Err(Error::DimensionMismatch(format!(
                    "{} proposal Gaussians for {} nodes",
                    gs.len(),
                    graph.node_count()
                )));
            }
            if let Some(bad) = gs.iter().position(|g| !g.is_proper()) {
                return Err(Error::ImproperFactor {
                    precision: gs[bad].precision(),
                });
            }
        }
        let dir = DirectedEdgeIndex::new(graph);
        Ok(Self {
            mrf,
            schedule,
            config,
            messages: vec![Message::Init; dir.count()],
            dir,
            particles: vec![Vec::new(); graph.node_count()],
            iteration: 0,
            diagnostics: Diagnostics::default(),
        })
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    pub fn into_diagnostics(self) -> Diagnostics {
        self.diagnostics
    }

    pub fn sweep(&mut self) -> Result<()> {
        let order: Vec<usize> = self.schedule.sweep(self.iteration).to_vec();
        for u in order {
            self.update_node(u)?;
        }
        self.iteration += 1;
        Ok(())
    }

    fn update_node(&mut self, u: usize) -> Result<()> {
        let start = Instant::now();
        let graph = self.mrf.graph();
        let neighbors = graph.neighbors(u);
        let n = self.config.particles;
        let mut rng = node_stream(self.config.seed, self.iteration, u, salt::MCMC);

        enum Drawn {
            Belief(Vec<f64>),
            Gaussian(Vec<f64>, GaussianFactor),
        }

        let drawn = match &self.config.proposal {
            PbpProposal::LastBelief => {
                let inits: Vec<f64> = if self.particles[u].is_empty() {
                    let y = self.mrf.observations()[u];
                    (0..n)
                        .map(|_| {
                            y + FIRST_SWEEP_INIT_STD * rng.sample::<f64, _>(StandardNormal)
                        })
                        .collect()
                } else {
                    self.particles[u].clone()
                };
                let incoming: Vec<&Message> = neighbors
                    .iter()
                    .map(|&w| &self.messages[self.dir.id(graph, w, u)])
                    .collect();
                Drawn::Belief(mh_sample_from_belief(
                    self.mrf,
                    u,
                    &incoming,
                    &inits,
                    self.config.mh_steps,
                    self.config.mh_proposal_std,
                    &mut rng,
                ))
            }
            PbpProposal::FixedGaussians(gs) => {
                let g = gs[u];
                let (mean, variance) = g.moments()?;
                let sd = variance.sqrt();
                let xs = (0..n)
                    .map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                Drawn::Gaussian(xs, g)
            }
        };

        let mut min_ess = f64::INFINITY;
        match drawn {
            Drawn::Belief(xs) => {
                // Belief proposal: weights reduce to 1 / m_vu(x_i).
                for (pos, &v) in neighbors.iter().enumerate() {
                    let m_vu = &self.messages[self.dir.id(graph, v, u)];
                    let logs: Vec<f64> = xs.iter().map(|&x| -m_vu.log_eval(x)).collect();
                    let weights = normalize_log_weights(&logs, u, v)?;
                    min_ess = min_ess.min(effective_sample_size(&weights));
                    self.messages[self.dir.id_at(u, pos)] = Message::Full(ParticleMessage::new(
                        u,
                        v,
                        xs.clone(),
                        weights,
                        self.mrf.edge_kernel().clone(),
                    )?);
                }
                self.particles[u] = xs;
            }
            Drawn::Gaussian(xs, g) => {
                let log_incoming: Vec<Vec<f64>> = neighbors
                    .iter()
                    .map(|&w| {
                        let m = &self.messages[self.dir.id(graph, w, u)];
                        xs.iter().map(|&x| m.log_eval(x)).collect()
                    })
                    .collect();
                let mut log_belief: Vec<f64> = xs
                    .iter()
                    .map(|&x| self.mrf.log_node_potential(u, x))
                    .collect();
                for lm in &log_incoming {
                    for (b, l) in log_belief.iter_mut().zip(lm) {
                        *b += l;
                    }
                }
                let log_proposal: Vec<f64> =
                    xs.iter().map(|&x| g.log_density_unnorm(x)).collect();
                for (pos, &v) in neighbors.iter().enumerate() {
                    let weights = compute_outgoing_weights(
                        &log_belief,
                        &log_incoming[pos],
                        &log_proposal,
                        u,
                        v,
                    )?;
                    min_ess = min_ess.min(effective_sample_size(&weights));
                    self.messages[self.dir.id_at(u, pos)] = Message::Full(ParticleMessage::new(
                        u,
                        v,
                        xs.clone(),
                        weights,
                        self.mrf.edge_kernel().clone(),
                    )?);
                }
                self.particles[u] = xs;
            }
        }

        self.diagnostics.rows.push(DiagnosticRow {
            iteration: self.iteration,
            node: u,
            wall_us: start.elapsed().as_micros(),
            min_ess: if neighbors.is_empty() {
                None
            } else {
                Some(min_ess)
            },
            ep_reverts: 0,
        });
        Ok(())
    }

    pub fn beliefs(&self, mesh: &Mesh) -> Result<Vec<MeshBelief>> {
        render_beliefs(self.mrf, &self.messages, &self.dir, mesh)
    }
}

/// Runs PBP for `iterations` sweeps and renders the final beliefs.
pub fn run_pbp(
    mrf: &PairwiseMRF,
    mesh: &Mesh,
    particles: usize,
    iterations: usize,
    schedule: &Schedule,
    seed: u64,
    proposal: PbpProposal,
) -> Result<(Vec<MeshBelief>, Diagnostics)> {
    let mut runner = PbpRunner::new(
        mrf,
        schedule,
        PbpConfig {
            particles,
            seed,
            mh_steps: DEFAULT_MH_STEPS,
            mh_proposal_std: DEFAULT_MH_PROPOSAL_STD,
            proposal,
        },
    )?;
    for _ in 0..iterations {
        runner.sweep()?;
    }
    let beliefs = runner.beliefs(mesh)?;
    Ok((beliefs, runner.into_diagnostics()))
}

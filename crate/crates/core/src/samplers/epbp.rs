//! Expectation particle BP: importance-sampled messages whose per-node
//! Gaussian proposals are adapted by EP moment matching.
//!
//! A node update draws particles from the node's proposal, evaluates the
//! belief at the particles, and for every neighbor: divides out that
//! neighbor's incoming message, normalizes the importance weights, replaces
//! the outgoing message, and EP-refines the neighbor's proposal (node factor
//! first, then the factor for the freshly updated message). Factor updates
//! that would make a proposal product improper are reverted.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{node_stream, render_beliefs, salt, DiagnosticRow, Diagnostics};
use crate::error::{Error, Result};
use crate::gaussian_ep::{project_tilted, GaussianFactor, Projection, Proposal, Quadrature};
use crate::mesh_oracle::{Mesh, MeshBelief};
use crate::model::{DirectedEdgeIndex, PairwiseMRF};
use crate::particles::{
    compute_outgoing_weights, effective_sample_size, normalize_log_weights, Message,
    ParticleMessage,
};
use crate::schedule::Schedule;

#[derive(Debug, Clone)]
pub struct EpbpConfig {
    pub particles: usize,
    /// Sub-quadratic mode: evaluate messages through this many multinomially
    /// drawn components instead of the full sum.
    pub subquad: Option<usize>,
    pub seed: u64,
}

/// Mutable EPBP state exposing per-sweep stepping, so callers can trace
/// beliefs over iterations.
pub struct EpbpRunner<'a> {
    mrf: &'a PairwiseMRF,
    schedule: &'a Schedule,
    config: EpbpConfig,
    fallback: (f64, f64),
    dir: DirectedEdgeIndex,
    proposals: Vec<Proposal>,
    messages: Vec<Message>,
    particles: Vec<Vec<f64>>,
    draw_density: Vec<Option<GaussianFactor>>,
    iteration: usize,
    diagnostics: Diagnostics,
}

impl<'a> EpbpRunner<'a> {
    /// Initializes proposals by projecting each node potential against a unit
    /// cavity on the fallback range; message factors start flat and messages
    /// start as the constant-one initial message.
    pub fn new(
        mrf: &'a PairwiseMRF,
        schedule: &'a Schedule,
        fallback: (f64, f64),
        config: EpbpConfig,
    ) -> Result<Self> {
        if config.particles == 0 {
            return Err(Error::InvalidInput("particle count must be positive".into()));
        }
        if let Some(m) = config.subquad {
            if m == 0 {
                return Err(Error::InvalidInput("subsample size must be positive".into()));
            }
        }
        let graph = mrf.graph();
        if schedule.node_count() != graph.node_count() {
            return Err(Error::DimensionMismatch(format!(
                "schedule over {} nodes for a {}-node graph",
                schedule.node_count(),
                graph.node_count()
            )));
        }
        let quad = Quadrature::for_cavity(&GaussianFactor::UNIT, fallback);
        let mut proposals = Vec::with_capacity(graph.node_count());
        for u in 0..graph.node_count() {
            let projected =
                project_tilted(|x| mrf.log_node_potential(u, x), GaussianFactor::UNIT, &quad)?;
            let factor = match projected {
                Projection::Updated(f) if f.is_proper() => f,
                _ => {
                    return Err(Error::NumericalFailure {
                        node: u,
                        iteration: 0,
                        detail: "node-potential projection is improper".into(),
                    })
                }
            };
            proposals.push(Proposal::init(factor, graph.degree(u))?);
        }
        let dir = DirectedEdgeIndex::new(graph);
        Ok(Self {
            mrf,
            schedule,
            config,
            fallback,
            messages: vec![Message::Init; dir.count()],
            dir,
            proposals,
            particles: vec![Vec::new(); graph.node_count()],
            draw_density: vec![None; graph.node_count()],
            iteration: 0,
            diagnostics: Diagnostics::default(),
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn proposal(&self, u: usize) -> &Proposal {
        &self.proposals[u]
    }

    pub fn message(&self, u: usize, v: usize) -> &Message {
        &self.messages[self.dir.id(self.mrf.graph(), u, v)]
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    pub fn into_diagnostics(self) -> Diagnostics {
        self.diagnostics
    }

    /// One LBP iteration: every node updated once, in the schedule's order
    /// for the current iteration.
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
        let n = self.config.particles;
        let graph = self.mrf.graph();
        let neighbors = graph.neighbors(u);

        // 1. Draw particles from the proposal product (proper by invariant).
        let q = self.proposals[u].product();
        debug_assert!(q.is_proper(), "proposal product must stay proper");
        let (mean, variance) = q.moments()?;
        let sd = variance.sqrt();
        let mut rng = node_stream(self.config.seed, self.iteration, u, salt::DRAW);
        let xs: Vec<f64> = (0..n)
            .map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal))
            .collect();

        // 2. Belief at the particles, keeping each incoming message's
        //    contribution for the divisions below. In sub-quadratic mode each
        //    point evaluates an unbiased M-component estimate with fresh
        //    multinomial draws; fresh draws keep the estimator noise
        //    independent across points, so it averages out of the outgoing
        //    weights instead of tilting them coherently.
        let mut sub_rng = node_stream(self.config.seed, self.iteration, u, salt::SUBSAMPLE);
        let mut index_scratch: Vec<usize> = Vec::new();
        let log_incoming: Vec<Vec<f64>> = neighbors
            .iter()
            .map(|&w| {
                let m = &self.messages[self.dir.id(graph, w, u)];
                match (self.config.subquad, m.full()) {
                    (Some(count), Some(full)) => xs
                        .iter()
                        .map(|&x| {
                            full.draw_indices(count, &mut sub_rng, &mut index_scratch);
                            full.log_eval_at_indices(x, &index_scratch)
                        })
                        .collect(),
                    _ => xs.iter().map(|&x| m.log_eval(x)).collect(),
                }
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
        let log_proposal: Vec<f64> = xs.iter().map(|&x| q.log_density_unnorm(x)).collect();

        // 3. Per neighbor: new outgoing message, then the two EP refinements
        //    at the receiving node.
        let mut min_ess = f64::INFINITY;
        let mut ep_reverts = 0usize;
        for (pos, &v) in neighbors.iter().enumerate() {
            let weights = compute_outgoing_weights(
                &log_belief,
                &log_incoming[pos],
                &log_proposal,
                u,
                v,
            )?;
            min_ess = min_ess.min(effective_sample_size(&weights));
            let message = ParticleMessage::new(
                u,
                v,
                xs.clone(),
                weights,
                self.mrf.edge_kernel().clone(),
            )?;
            let id = self.dir.id_at(u, pos);
            self.messages[id] = Message::Full(message);

            // EP at v: node-potential factor first, then the factor for the
            // message that just changed. The tilted target always evaluates
            // the full mixture; the 61-point grid keeps that cheap.
            let mrf = self.mrf;
            if !self.proposals[v]
                .refine_node_factor(|x| mrf.log_node_potential(v, x), self.fallback)
            {
                ep_reverts += 1;
            }
            let full = self.messages[id].full().expect("message was just built");
            let back_pos = graph
                .neighbor_index(v, u)
                .expect("adjacency is symmetric");
            if !self.proposals[v].refine_message_factor(
                back_pos,
                |x| full.log_eval(x),
                self.fallback,
            ) {
                ep_reverts += 1;
            }
            debug_assert!(self.proposals[v].product().is_proper());
        }

        self.particles[u] = xs;
        self.draw_density[u] = Some(q);
        self.diagnostics.rows.push(DiagnosticRow {
            iteration: self.iteration,
            node: u,
            wall_us: start.elapsed().as_micros(),
            min_ess: if neighbors.is_empty() {
                None
            } else {
                Some(min_ess)
            },
            ep_reverts,
        });
        Ok(())
    }

    /// Final beliefs on the mesh, evaluated with full-sum messages.
    pub fn beliefs(&self, mesh: &Mesh) -> Result<Vec<MeshBelief>> {
        render_beliefs(self.mrf, &self.messages, &self.dir, mesh)
    }

    /// Self-normalized importance estimate of each node's posterior mean:
    /// final particles weighted by belief over the density they were drawn
    /// from.
    pub fn posterior_means(&self) -> Result<Vec<f64>> {
        let graph = self.mrf.graph();
        let mut means = Vec::with_capacity(graph.node_count());
        for u in 0..graph.node_count() {
            let xs = &self.particles[u];
            let q = self.draw_density[u].ok_or_else(|| {
                Error::InvalidInput(format!(
                    "node {u} has no particles; run at least one sweep"
                ))
            })?;
            let incoming: Vec<&Message> = graph
                .neighbors(u)
                .iter()
                .map(|&w| &self.messages[self.dir.id(graph, w, u)])
                .collect();
            let logs: Vec<f64> = xs
                .iter()
                .map(|&x| {
                    crate::particles::log_belief_at_full(self.mrf, u, &incoming, x)
                        - q.log_density_unnorm(x)
                })
                .collect();
            let weights = normalize_log_weights(&logs, u, u)?;
            means.push(xs.iter().zip(&weights).map(|(x, w)| x * w).sum());
        }
        Ok(means)
    }
}

/// Runs EPBP for `iterations` sweeps and renders the final beliefs.
pub fn run_epbp(
    mrf: &PairwiseMRF,
    mesh: &Mesh,
    particles: usize,
    iterations: usize,
    schedule: &Schedule,
    subquad: Option<usize>,
    seed: u64,
) -> Result<(Vec<MeshBelief>, Diagnostics)> {
    let mut runner = EpbpRunner::new(
        mrf,
        schedule,
        mesh.range(),
        EpbpConfig {
            particles,
            subquad,
            seed,
        },
    )?;
    for _ in 0..iterations {
        runner.sweep()?;
    }
    let beliefs = runner.beliefs(mesh)?;
    Ok((beliefs, runner.into_diagnostics()))
}

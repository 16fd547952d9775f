//! Particle representation of continuous BP messages.
//!
//! A message from `u` to `v` is a weighted mixture over edge-potential slices
//! anchored at `u`'s particles. Evaluation, belief products and importance
//! weights all run in log space: the tight denoising potentials underflow
//! linear-scale products on 4-neighbor grids.

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::Rng;

use crate::densities::DensityKernel;
use crate::error::{Error, Result};
use crate::model::PairwiseMRF;

/// Weight vectors must be normalized within this tolerance.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A BP message as a weighted mixture `Σ_i w_i ψ_uv(x_i, ·)`.
#[derive(Debug, Clone)]
pub struct ParticleMessage {
    source: usize,
    target: usize,
    particles: Vec<f64>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    edge_kernel: DensityKernel,
}

impl ParticleMessage {
    pub fn new(
        source: usize,
        target: usize,
        particles: Vec<f64>,
        weights: Vec<f64>,
        edge_kernel: DensityKernel,
    ) -> Result<Self> {
        if particles.is_empty() || particles.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} particles with {} weights",
                particles.len(),
                weights.len()
            )));
        }
        if particles.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite particle".into()));
        }
        let mut sum = 0.0;
        for &w in &weights {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidInput(format!("bad weight {w}")));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidInput(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            source,
            target,
            particles,
            weights,
            log_weights,
            edge_kernel,
        })
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[f64] {
        &self.particles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `log Σ_i w_i ψ_uv(x_i, x)`, via two-pass log-sum-exp.
    pub fn log_eval(&self, x: f64) -> f64 {
        let mut max = f64::NEG_INFINITY;
        for (lw, &p) in self.log_weights.iter().zip(&self.particles) {
            if lw.is_finite() {
                let t = lw + self.edge_kernel.log_eval(p - x);
                if t > max {
                    max = t;
                }
            }
        }
        if !max.is_finite() {
            return max;
        }
        let mut sum = 0.0;
        for (lw, &p) in self.log_weights.iter().zip(&self.particles) {
            if lw.is_finite() {
                sum += (lw + self.edge_kernel.log_eval(p - x) - max).exp();
            }
        }
        max + sum.ln()
    }

    /// 1 / Σ w_i²: degeneracy diagnostic for the normalized weights.
    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Appends `m` multinomial component-index draws to `out` (cleared first).
    pub fn draw_indices<R: Rng + ?Sized>(&self, m: usize, rng: &mut R, out: &mut Vec<usize>) {
        assert!(m >= 1, "subsample size must be at least 1");
        let dist = WeightedIndex::new(&self.weights).expect("weights are normalized");
        out.clear();
        out.extend((0..m).map(|_| dist.sample(rng)));
    }

    /// `log (1/M) Σ_ℓ ψ_uv(x_{i_ℓ}, x)`: the unbiased estimator of the full
    /// mixture through the given component indices.
    pub fn log_eval_at_indices(&self, x: f64, indices: &[usize]) -> f64 {
        let mut max = f64::NEG_INFINITY;
        for &i in indices {
            let t = self.edge_kernel.log_eval(self.particles[i] - x);
            if t > max {
                max = t;
            }
        }
        if !max.is_finite() {
            return max;
        }
        let mut sum = 0.0;
        for &i in indices {
            sum += (self.edge_kernel.log_eval(self.particles[i] - x) - max).exp();
        }
        max + sum.ln() - (indices.len() as f64).ln()
    }

    /// Draws `m` component indices from a multinomial over the weights and
    /// freezes them: the result evaluates the same `m`-component average at
    /// every point.
    pub fn subsample<R: Rng + ?Sized>(self, m: usize, rng: &mut R) -> SubsampledMessage {
        let mut indices = Vec::with_capacity(m);
        self.draw_indices(m, rng, &mut indices);
        SubsampledMessage {
            base: self,
            indices,
        }
    }
}

/// Unbiased cheap view of a [`ParticleMessage`]: the uniform average of `m`
/// multinomially drawn mixture components.
#[derive(Debug, Clone)]
pub struct SubsampledMessage {
    base: ParticleMessage,
    indices: Vec<usize>,
}

impl SubsampledMessage {
    pub fn base(&self) -> &ParticleMessage {
        &self.base
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// `log (1/M) Σ_ℓ ψ_uv(x_{i_ℓ}, x)`.
    pub fn log_eval(&self, x: f64) -> f64 {
        self.base.log_eval_at_indices(x, &self.indices)
    }
}

/// A directed-edge message slot: the constant-one initial message, a full
/// particle message, or its subsampled view.
#[derive(Debug, Clone)]
pub enum Message {
    Init,
    Full(ParticleMessage),
    Subsampled(SubsampledMessage),
}

impl Message {
    /// Log message value at `x`. The initial message is 1 everywhere.
    pub fn log_eval(&self, x: f64) -> f64 {
        match self {
            Message::Init => 0.0,
            Message::Full(m) => m.log_eval(x),
            Message::Subsampled(m) => m.log_eval(x),
        }
    }

    /// Linear-scale message value.
    pub fn eval(&self, x: f64) -> f64 {
        self.log_eval(x).exp()
    }

    /// The underlying full particle message, if any. Subsampled messages
    /// expose their base: EP tilted targets and final belief rendering always
    /// use the full sum.
    pub fn full(&self) -> Option<&ParticleMessage> {
        match self {
            Message::Init => None,
            Message::Full(m) => Some(m),
            Message::Subsampled(m) => Some(m.base()),
        }
    }

    /// Log of the full-sum evaluation, ignoring any subsampling.
    pub fn log_eval_full(&self, x: f64) -> f64 {
        match self.full() {
            None => 0.0,
            Some(m) => m.log_eval(x),
        }
    }

    pub fn ess(&self) -> Option<f64> {
        self.full().map(|m| m.ess())
    }
}

/// Log belief at node `u`: `log ψ_u(x) + Σ_w log m_wu(x)` with one incoming
/// message per neighbor, in the adjacency order of `u`.
pub fn log_belief_at(mrf: &PairwiseMRF, u: usize, incoming: &[&Message], x: f64) -> f64 {
    debug_assert_eq!(incoming.len(), mrf.graph().degree(u));
    let mut l = mrf.log_node_potential(u, x);
    for m in incoming {
        l += m.log_eval(x);
    }
    l
}

/// Same as [`log_belief_at`] but forcing full-sum message evaluation.
pub fn log_belief_at_full(mrf: &PairwiseMRF, u: usize, incoming: &[&Message], x: f64) -> f64 {
    debug_assert_eq!(incoming.len(), mrf.graph().degree(u));
    let mut l = mrf.log_node_potential(u, x);
    for m in incoming {
        l += m.log_eval_full(x);
    }
    l
}

/// Normalizes a vector of unnormalized log weights to linear-scale weights
/// summing to one, with the usual max shift.
///
/// The reduction runs left to right so results are bit-stable given a seed.
/// `source`/`target` only label the degenerate-weights error, raised when
/// every weight underflows to zero in log space.
pub fn normalize_log_weights(logs: &[f64], source: usize, target: usize) -> Result<Vec<f64>> {
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateWeights {
            node: source,
            target,
        });
    }
    let mut weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = weights.iter().sum();
    if !sum.is_finite() || sum <= 0.0 {
        return Err(Error::DegenerateWeights {
            node: source,
            target,
        });
    }
    for w in &mut weights {
        *w /= sum;
    }
    Ok(weights)
}

/// Normalizes outgoing-message weights from log-scale inputs:
/// `w_i ∝ exp(log_belief_i - log_incoming_i - log_proposal_i)`.
pub fn compute_outgoing_weights(
    log_belief: &[f64],
    log_incoming: &[f64],
    log_proposal: &[f64],
    source: usize,
    target: usize,
) -> Result<Vec<f64>> {
    debug_assert_eq!(log_belief.len(), log_incoming.len());
    debug_assert_eq!(log_belief.len(), log_proposal.len());
    let logs: Vec<f64> = (0..log_belief.len())
        .map(|i| log_belief[i] - log_incoming[i] - log_proposal[i])
        .collect();
    normalize_log_weights(&logs, source, target)
}

/// 1 / Σ w_i² for an already-normalized weight vector.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

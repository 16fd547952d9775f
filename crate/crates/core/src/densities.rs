//! Univariate unnormalized density kernels.
//!
//! All node and edge potentials of the experiment models are built from these
//! kernels. Evaluation is in log scale and every kernel is unnormalized: the
//! message-passing algorithms are invariant to the scale of the potentials, so
//! normalization only happens where beliefs are rendered on a mesh.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Mixture weights must sum to one within this tolerance.
pub const MIXTURE_WEIGHT_TOL: f64 = 1e-12;

/// A univariate unnormalized log-density.
///
/// * `Normal(mu, sigma)`: `-(x-mu)^2 / (2 sigma^2)`
/// * `Gumbel(mu, beta)`: `-(z + exp(-z))` with `z = (x-mu)/beta`
/// * `Laplace(mu, beta)`: `-|x-mu| / beta`
/// * `TruncatedLaplace(mu, beta, lambda)`: Laplace inside `|x-mu| <= lambda`,
///   constant floor `-lambda/beta` outside
/// * `Mixture`: convex combination of component kernels
#[derive(Debug, Clone, PartialEq)]
pub enum DensityKernel {
    Normal {
        mu: f64,
        sigma: f64,
    },
    Gumbel {
        mu: f64,
        beta: f64,
    },
    Laplace {
        mu: f64,
        beta: f64,
    },
    TruncatedLaplace {
        mu: f64,
        beta: f64,
        lambda: f64,
    },
    Mixture {
        weights: Vec<f64>,
        components: Vec<DensityKernel>,
    },
}

fn check_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidDensity(format!(
            "{name} must be strictly positive and finite, got {value}"
        )))
    }
}

fn check_location(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidDensity(format!(
            "{name} must be finite, got {value}"
        )))
    }
}

impl DensityKernel {
    pub fn normal(mu: f64, sigma: f64) -> Result<Self> {
        check_location("mu", mu)?;
        check_positive("sigma", sigma)?;
        Ok(Self::Normal { mu, sigma })
    }

    pub fn gumbel(mu: f64, beta: f64) -> Result<Self> {
        check_location("mu", mu)?;
        check_positive("beta", beta)?;
        Ok(Self::Gumbel { mu, beta })
    }

    pub fn laplace(mu: f64, beta: f64) -> Result<Self> {
        check_location("mu", mu)?;
        check_positive("beta", beta)?;
        Ok(Self::Laplace { mu, beta })
    }

    pub fn truncated_laplace(mu: f64, beta: f64, lambda: f64) -> Result<Self> {
        check_location("mu", mu)?;
        check_positive("beta", beta)?;
        check_positive("lambda", lambda)?;
        Ok(Self::TruncatedLaplace { mu, beta, lambda })
    }

    /// Builds a mixture kernel. Weights must be nonnegative and sum to one
    /// within [`MIXTURE_WEIGHT_TOL`].
    pub fn mixture(weights: Vec<f64>, components: Vec<DensityKernel>) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(Error::InvalidDensity(format!(
                "mixture needs matching, nonempty weights and components (got {} and {})",
                weights.len(),
                components.len()
            )));
        }
        let mut sum = 0.0;
        for &w in &weights {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidDensity(format!(
                    "mixture weight {w} is not a finite nonnegative number"
                )));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > MIXTURE_WEIGHT_TOL {
            return Err(Error::InvalidDensity(format!(
                "mixture weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self::Mixture {
            weights,
            components,
        })
    }

    fn variant_name(&self) -> &'static str {
        match self {
            Self::Normal { .. } => "Normal",
            Self::Gumbel { .. } => "Gumbel",
            Self::Laplace { .. } => "Laplace",
            Self::TruncatedLaplace { .. } => "TruncatedLaplace",
            Self::Mixture { .. } => "Mixture",
        }
    }

    /// Log of the unnormalized kernel at `x`.
    ///
    /// Finite for every finite `x`: results that would underflow past the most
    /// negative finite f64 are clamped so downstream log-space sums stay
    /// NaN-free. Non-finite `x` is a contract violation.
    pub fn log_eval(&self, x: f64) -> f64 {
        assert!(x.is_finite(), "invalid input: log_eval requires finite x");
        let value = match self {
            Self::Normal { mu, sigma } => {
                let z = (x - mu) / sigma;
                -0.5 * z * z
            }
            Self::Gumbel { mu, beta } => {
                let z = (x - mu) / beta;
                -(z + (-z).exp())
            }
            Self::Laplace { mu, beta } => -(x - mu).abs() / beta,
            Self::TruncatedLaplace { mu, beta, lambda } => {
                let d = (x - mu).abs();
                if d <= *lambda {
                    -d / beta
                } else {
                    -lambda / beta
                }
            }
            Self::Mixture {
                weights,
                components,
            } => {
                // Two-pass log-sum-exp; recomputing the component values is
                // cheaper than allocating a scratch buffer on the hot path.
                let mut max = f64::NEG_INFINITY;
                for (w, c) in weights.iter().zip(components) {
                    if *w > 0.0 {
                        let t = w.ln() + c.log_eval(x);
                        if t > max {
                            max = t;
                        }
                    }
                }
                let mut sum = 0.0;
                for (w, c) in weights.iter().zip(components) {
                    if *w > 0.0 {
                        sum += (w.ln() + c.log_eval(x) - max).exp();
                    }
                }
                max + sum.ln()
            }
        };
        value.max(f64::MIN)
    }

    /// Unnormalized kernel value `exp(log_eval(x))`.
    pub fn eval(&self, x: f64) -> f64 {
        self.log_eval(x).exp()
    }

    /// Draws from the normalized kernel. Only `Normal` kernels and mixtures of
    /// `Normal` kernels are sampleable; the other variants report an
    /// unsupported-variant error.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        match self {
            Self::Normal { mu, sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                Ok(mu + sigma * z)
            }
            Self::Mixture {
                weights,
                components,
            } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (w, c) in weights.iter().zip(components) {
                    acc += w;
                    if u <= acc {
                        return c.sample(rng);
                    }
                }
                // Weight rounding can leave acc marginally below 1.
                components
                    .last()
                    .expect("mixture is nonempty")
                    .sample(rng)
            }
            other => Err(Error::UnsupportedSample(other.variant_name())),
        }
    }
}

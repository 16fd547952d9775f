//! Gaussian exponential-family factors in natural parameters and the EP
//! moment-matching projection used to adapt proposal distributions.
//!
//! A factor is `exp(shift·x - precision·x²/2)`, so products and quotients are
//! componentwise additions and subtractions. Individual factors may be
//! improper (`precision <= 0`); only the full proposal product must stay
//! proper so it can be sampled.

use crate::error::{Error, Result};

/// Default number of quadrature points for tilted-moment computation.
pub const QUADRATURE_POINTS: usize = 61;

/// Half-width of the quadrature window in cavity standard deviations.
const QUADRATURE_SIGMAS: f64 = 6.0;

/// Gaussian factor in natural parameters `(precision, shift)` with
/// `precision = 1/variance` and `shift = mean/variance`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFactor {
    precision: f64,
    shift: f64,
}

impl GaussianFactor {
    /// The unit (flat) factor: evaluates to 1 everywhere.
    pub const UNIT: Self = Self {
        precision: 0.0,
        shift: 0.0,
    };

    pub fn new(precision: f64, shift: f64) -> Self {
        assert!(
            precision.is_finite() && shift.is_finite(),
            "natural parameters must be finite"
        );
        Self { precision, shift }
    }

    /// Factor whose normalized density is the Gaussian with given moments.
    pub fn from_moments(mean: f64, variance: f64) -> Self {
        assert!(
            variance.is_finite() && variance > 0.0,
            "variance must be positive and finite"
        );
        Self::new(1.0 / variance, mean / variance)
    }

    pub fn precision(&self) -> f64 {
        self.precision
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn is_proper(&self) -> bool {
        self.precision > 0.0
    }

    /// `(mean, variance)` of the normalized density; errors when improper.
    pub fn moments(&self) -> Result<(f64, f64)> {
        if !self.is_proper() {
            return Err(Error::ImproperFactor {
                precision: self.precision,
            });
        }
        Ok((self.shift / self.precision, 1.0 / self.precision))
    }

    /// Unnormalized log density `shift·x - precision·x²/2`.
    #[inline]
    pub fn log_density_unnorm(&self, x: f64) -> f64 {
        self.shift * x - 0.5 * self.precision * x * x
    }
}

impl std::ops::Mul for GaussianFactor {
    type Output = GaussianFactor;
    fn mul(self, rhs: GaussianFactor) -> GaussianFactor {
        GaussianFactor {
            precision: self.precision + rhs.precision,
            shift: self.shift + rhs.shift,
        }
    }
}

impl std::ops::Div for GaussianFactor {
    type Output = GaussianFactor;
    fn div(self, rhs: GaussianFactor) -> GaussianFactor {
        GaussianFactor {
            precision: self.precision - rhs.precision,
            shift: self.shift - rhs.shift,
        }
    }
}

/// Equally spaced evaluation grid with Riemann weights.
#[derive(Debug, Clone)]
pub struct Quadrature {
    points: Vec<f64>,
    spacing: f64,
}

impl Quadrature {
    /// Grid adapted to a cavity: `mean ± 6σ` when the cavity is proper,
    /// otherwise the fallback range. 61 points by default.
    pub fn for_cavity(cavity: &GaussianFactor, fallback: (f64, f64)) -> Self {
        Self::with_points(cavity, fallback, QUADRATURE_POINTS)
    }

    pub fn with_points(cavity: &GaussianFactor, fallback: (f64, f64), k: usize) -> Self {
        let (lo, hi) = match cavity.moments() {
            Ok((mean, variance)) => {
                let sd = variance.sqrt();
                let span = (mean - QUADRATURE_SIGMAS * sd, mean + QUADRATURE_SIGMAS * sd);
                // A cavity whose precision barely survived the subtraction can
                // have absurd moments; treat it like an improper one.
                if span.0.is_finite() && span.1.is_finite() && span.0 < span.1 {
                    span
                } else {
                    fallback
                }
            }
            Err(_) => fallback,
        };
        Self::on_range(lo, hi, k)
    }

    pub fn on_range(lo: f64, hi: f64, k: usize) -> Self {
        assert!(k >= 2, "quadrature needs at least 2 points");
        assert!(lo < hi && lo.is_finite() && hi.is_finite());
        let spacing = (hi - lo) / (k - 1) as f64;
        let mut points: Vec<f64> = (0..k).map(|i| lo + i as f64 * spacing).collect();
        points[k - 1] = hi;
        Self { points, spacing }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }
}

/// Outcome of an EP projection: either a new factor or a revert signal.
/// Reverting is a value, not an error; the caller keeps the previous factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Updated(GaussianFactor),
    Revert,
}

/// Moment-matches the tilted distribution `exp(target_log(x)) · cavity(x)` on
/// the quadrature grid and returns the factor `η⁺` such that `η⁺ · cavity` has
/// the tilted moments.
///
/// The uniform Riemann weights cancel in the normalized moments. Returns
/// [`Projection::Revert`] when the tilted variance is nonpositive or
/// non-finite; the propriety of the owning proposal's product is the caller's
/// check.
pub fn project_tilted(
    target_log: impl Fn(f64) -> f64,
    cavity: GaussianFactor,
    quad: &Quadrature,
) -> Result<Projection> {
    let pts = quad.points();
    if pts.len() < 3 {
        return Err(Error::EmptyQuadrature(pts.len()));
    }

    let mut max = f64::NEG_INFINITY;
    let logs: Vec<f64> = pts
        .iter()
        .map(|&x| {
            let l = target_log(x) + cavity.log_density_unnorm(x);
            if l > max {
                max = l;
            }
            l
        })
        .collect();
    if !max.is_finite() {
        return Ok(Projection::Revert);
    }

    let mut mass = 0.0;
    let mut mean_acc = 0.0;
    for (&x, &l) in pts.iter().zip(&logs) {
        let w = (l - max).exp();
        mass += w;
        mean_acc += w * x;
    }
    let mean = mean_acc / mass;
    let mut var_acc = 0.0;
    for (&x, &l) in pts.iter().zip(&logs) {
        let d = x - mean;
        var_acc += (l - max).exp() * d * d;
    }
    let variance = var_acc / mass;

    if !mean.is_finite() || !variance.is_finite() || variance <= 0.0 {
        return Ok(Projection::Revert);
    }
    Ok(Projection::Updated(
        GaussianFactor::from_moments(mean, variance) / cavity,
    ))
}

/// A node's sampling proposal: the node-potential factor `η_∘u`, one factor
/// per incoming neighbor message `η_wu`, and their cached product.
///
/// The product is kept proper at all times after initialization: any factor
/// update that would break that is rolled back (EP revert).
#[derive(Debug, Clone)]
pub struct Proposal {
    node_factor: GaussianFactor,
    message_factors: Vec<GaussianFactor>,
    product: GaussianFactor,
}

impl Proposal {
    /// Starts with unit message factors; the node factor must make the initial
    /// product proper.
    pub fn init(node_factor: GaussianFactor, neighbor_count: usize) -> Result<Self> {
        if !node_factor.is_proper() {
            return Err(Error::ImproperFactor {
                precision: node_factor.precision(),
            });
        }
        Ok(Self {
            node_factor,
            message_factors: vec![GaussianFactor::UNIT; neighbor_count],
            product: node_factor,
        })
    }

    pub fn product(&self) -> GaussianFactor {
        self.product
    }

    pub fn node_factor(&self) -> GaussianFactor {
        self.node_factor
    }

    pub fn message_factor(&self, neighbor_pos: usize) -> GaussianFactor {
        self.message_factors[neighbor_pos]
    }

    fn recompute_product(&mut self) {
        let mut p = self.node_factor;
        for f in &self.message_factors {
            p = p * *f;
        }
        self.product = p;
    }

    fn try_commit(&mut self, slot: Option<usize>, factor: GaussianFactor) -> bool {
        let old = match slot {
            None => std::mem::replace(&mut self.node_factor, factor),
            Some(i) => std::mem::replace(&mut self.message_factors[i], factor),
        };
        self.recompute_product();
        if self.product.is_proper() {
            true
        } else {
            match slot {
                None => self.node_factor = old,
                Some(i) => self.message_factors[i] = old,
            }
            self.recompute_product();
            false
        }
    }

    /// EP update of the node-potential factor against `target_log` (the log
    /// node potential). Returns whether the update was accepted.
    pub fn refine_node_factor(
        &mut self,
        target_log: impl Fn(f64) -> f64,
        fallback: (f64, f64),
    ) -> bool {
        let cavity = self.product / self.node_factor;
        let quad = Quadrature::for_cavity(&cavity, fallback);
        match project_tilted(target_log, cavity, &quad).expect("default quadrature is nonempty") {
            Projection::Updated(f) => self.try_commit(None, f),
            Projection::Revert => false,
        }
    }

    /// EP update of the factor for the message arriving from the neighbor at
    /// `neighbor_pos`, against the log of that message.
    pub fn refine_message_factor(
        &mut self,
        neighbor_pos: usize,
        target_log: impl Fn(f64) -> f64,
        fallback: (f64, f64),
    ) -> bool {
        let cavity = self.product / self.message_factors[neighbor_pos];
        let quad = Quadrature::for_cavity(&cavity, fallback);
        match project_tilted(target_log, cavity, &quad).expect("default quadrature is nonempty") {
            Projection::Updated(f) => self.try_commit(Some(neighbor_pos), f),
            Projection::Revert => false,
        }
    }
}

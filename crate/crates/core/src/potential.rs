//! Dissipation potentials.
//!
//! Two smooth strongly convex families ship: the diagonal quadratic
//! `½ (h - h*)ᵀ Γ (h - h*)` and a log-cosh-regularized quadratic
//! `½ μ ‖h - h*‖² + c Σ log cosh(h_i - h*_i)`. Both are separable, so their
//! Hessians are diagonal. [`DissipationPotential::Absent`] (ψ ≡ 0, μ = 0)
//! exists only for the no-dissipation stress runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticPotential {
    gamma: Vec<f64>,
    h_star: Vec<f64>,
}

impl QuadraticPotential {
    pub fn new(gamma: Vec<f64>, h_star: Vec<f64>) -> Result<Self> {
        check_dim(gamma.len(), h_star.len())?;
        if gamma.is_empty() {
            return Err(Error::InvalidArgument("potential dimension must be positive".into()));
        }
        if let Some(g) = gamma.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "quadratic potential needs positive gamma entries, got {g}"
            )));
        }
        Ok(Self { gamma, h_star })
    }

    /// `Γ = γ I` anchored at `h_star`.
    pub fn uniform(gamma: f64, h_star: Vec<f64>) -> Result<Self> {
        Self::new(vec![gamma; h_star.len()], h_star)
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn h_star(&self) -> &[f64] {
        &self.h_star
    }

    pub fn gamma_min(&self) -> f64 {
        self.gamma.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn gamma_max(&self) -> f64 {
        self.gamma.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogCoshPotential {
    mu: f64,
    weight: f64,
    h_star: Vec<f64>,
}

impl LogCoshPotential {
    /// `weight` multiplies the log-cosh part; the ψ'' of that part lies in `(0, weight]`.
    pub fn new(mu: f64, weight: f64, h_star: Vec<f64>) -> Result<Self> {
        if h_star.is_empty() {
            return Err(Error::InvalidArgument("potential dimension must be positive".into()));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidArgument(format!("log-cosh potential needs mu > 0, got {mu}")));
        }
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "log-cosh weight must be nonnegative, got {weight}"
            )));
        }
        Ok(Self { mu, weight, h_star })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn h_star(&self) -> &[f64] {
        &self.h_star
    }
}

/// `log cosh x` without overflow for large `|x|`.
fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DissipationPotential {
    Quadratic(QuadraticPotential),
    LogCosh(LogCoshPotential),
    /// ψ ≡ 0. Not strongly convex; the flow has no equilibrium under net influx.
    Absent { n: usize },
}

impl From<QuadraticPotential> for DissipationPotential {
    fn from(q: QuadraticPotential) -> Self {
        Self::Quadratic(q)
    }
}

impl From<LogCoshPotential> for DissipationPotential {
    fn from(l: LogCoshPotential) -> Self {
        Self::LogCosh(l)
    }
}

impl DissipationPotential {
    pub fn dim(&self) -> usize {
        match self {
            Self::Quadratic(q) => q.gamma.len(),
            Self::LogCosh(l) => l.h_star.len(),
            Self::Absent { n } => *n,
        }
    }

    pub fn value(&self, h: &[f64]) -> Result<f64> {
        check_dim(self.dim(), h.len())?;
        Ok(self.value_unchecked(h))
    }

    pub(crate) fn value_unchecked(&self, h: &[f64]) -> f64 {
        match self {
            Self::Quadratic(q) => {
                0.5 * h
                    .iter()
                    .zip(&q.h_star)
                    .zip(&q.gamma)
                    .map(|((x, s), g)| g * (x - s) * (x - s))
                    .sum::<f64>()
            }
            Self::LogCosh(l) => h
                .iter()
                .zip(&l.h_star)
                .map(|(x, s)| {
                    let d = x - s;
                    0.5 * l.mu * d * d + l.weight * log_cosh(d)
                })
                .sum(),
            Self::Absent { .. } => 0.0,
        }
    }

    pub fn gradient(&self, h: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), h.len())?;
        let mut out = vec![0.0; h.len()];
        self.add_gradient(h, 1.0, &mut out);
        Ok(out)
    }

    /// `out += scale · ∇ψ(h)`.
    pub(crate) fn add_gradient(&self, h: &[f64], scale: f64, out: &mut [f64]) {
        match self {
            Self::Quadratic(q) => {
                for (((o, x), s), g) in out.iter_mut().zip(h).zip(&q.h_star).zip(&q.gamma) {
                    *o += scale * g * (x - s);
                }
            }
            Self::LogCosh(l) => {
                for ((o, x), s) in out.iter_mut().zip(h).zip(&l.h_star) {
                    let d = x - s;
                    *o += scale * (l.mu * d + l.weight * d.tanh());
                }
            }
            Self::Absent { .. } => {}
        }
    }

    /// Value and gradient together.
    pub fn eval(&self, h: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((self.value(h)?, self.gradient(h)?))
    }

    /// Diagonal of ∇²ψ(h) (every shipped potential is separable).
    pub fn hessian_diag(&self, h: &[f64]) -> Vec<f64> {
        match self {
            Self::Quadratic(q) => q.gamma.clone(),
            Self::LogCosh(l) => h
                .iter()
                .zip(&l.h_star)
                .map(|(x, s)| {
                    let t = (x - s).tanh();
                    l.mu + l.weight * (1.0 - t * t)
                })
                .collect(),
            Self::Absent { n } => vec![0.0; *n],
        }
    }

    /// Strong-convexity modulus μ.
    pub fn modulus(&self) -> f64 {
        match self {
            Self::Quadratic(q) => q.gamma_min(),
            Self::LogCosh(l) => l.mu,
            Self::Absent { .. } => 0.0,
        }
    }

    /// Lipschitz constant of ∇ψ.
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            Self::Quadratic(q) => Some(q.gamma_max()),
            Self::LogCosh(l) => Some(l.mu + l.weight),
            Self::Absent { .. } => Some(0.0),
        }
    }

    /// Minimizer of ψ (zeros when ψ is absent).
    pub fn h_star(&self) -> Vec<f64> {
        match self {
            Self::Quadratic(q) => q.h_star.clone(),
            Self::LogCosh(l) => l.h_star.clone(),
            Self::Absent { n } => vec![0.0; *n],
        }
    }

    /// The potential `θ ψ`.
    pub fn scaled(&self, theta: f64) -> Result<Self> {
        Ok(match self {
            Self::Quadratic(q) => Self::Quadratic(QuadraticPotential::new(
                q.gamma.iter().map(|g| g * theta).collect(),
                q.h_star.clone(),
            )?),
            Self::LogCosh(l) => {
                Self::LogCosh(LogCoshPotential::new(l.mu * theta, l.weight * theta, l.h_star.clone())?)
            }
            Self::Absent { n } => Self::Absent { n: *n },
        })
    }

    pub fn as_quadratic(&self) -> Option<&QuadraticPotential> {
        match self {
            Self::Quadratic(q) => Some(q),
            _ => None,
        }
    }
}

fn sample_pair(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> (Vec<f64>, Vec<f64>) {
    let mut draw = || -> Vec<f64> {
        (0..n)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let x = draw();
    let y = draw();
    (x, y)
}

/// Smallest sampled ratio `⟨∇ψ(x) - ∇ψ(y), x - y⟩ / ‖x - y‖²`.
///
/// Pairs are drawn at several scales so both the quadratic and the saturated
/// regimes of nonlinear potentials are visited.
pub fn strong_convexity_certificate(pot: &DissipationPotential, trials: usize, seed: u64) -> f64 {
    certificate(pot, trials, seed, f64::INFINITY, |gap, dx2, _| gap / dx2, f64::min)
}

/// Largest sampled ratio `‖∇ψ(x) - ∇ψ(y)‖ / ‖x - y‖`.
pub fn lipschitz_certificate(pot: &DissipationPotential, trials: usize, seed: u64) -> f64 {
    certificate(
        pot,
        trials,
        seed,
        0.0,
        |_, dx2, dg2| (dg2 / dx2).sqrt(),
        f64::max,
    )
}

fn certificate(
    pot: &DissipationPotential,
    trials: usize,
    seed: u64,
    init: f64,
    ratio: impl Fn(f64, f64, f64) -> f64,
    fold: impl Fn(f64, f64) -> f64,
) -> f64 {
    const SCALES: [f64; 4] = [0.01, 0.3, 1.0, 10.0];
    let n = pot.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = init;
    for k in 0..trials.max(1) {
        let (x, y) = sample_pair(&mut rng, n, SCALES[k % SCALES.len()]);
        let gx = pot.gradient(&x).expect("dimension fixed by construction");
        let gy = pot.gradient(&y).expect("dimension fixed by construction");
        let mut gap = 0.0;
        let mut dx2 = 0.0;
        let mut dg2 = 0.0;
        for i in 0..n {
            let dx = x[i] - y[i];
            let dg = gx[i] - gy[i];
            gap += dx * dg;
            dx2 += dx * dx;
            dg2 += dg * dg;
        }
        if dx2 > 0.0 {
            acc = fold(acc, ratio(gap, dx2, dg2));
        }
    }
    acc
}

/// A value given either once for every node or per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrVec {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl ScalarOrVec {
    pub fn expand(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            Self::Scalar(x) => Ok(vec![*x; n]),
            Self::Vector(v) => {
                check_dim(n, v.len())?;
                Ok(v.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialKind {
    Quadratic,
    Logcosh,
}

/// Serializable description of a potential, resolved against a node count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialConfig {
    pub kind: PotentialKind,
    #[serde(default)]
    pub gamma: Option<ScalarOrVec>,
    #[serde(default)]
    pub h_star: Option<ScalarOrVec>,
    #[serde(default)]
    pub mu: Option<f64>,
    /// Log-cosh weight; defaults to 1.
    #[serde(default)]
    pub weight: Option<f64>,
}

impl PotentialConfig {
    pub fn build(&self, n: usize) -> Result<DissipationPotential> {
        let h_star = self
            .h_star
            .as_ref()
            .map_or(Ok(vec![0.0; n]), |h| h.expand(n))?;
        match self.kind {
            PotentialKind::Quadratic => {
                let gamma = self
                    .gamma
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument("quadratic potential needs gamma".into()))?
                    .expand(n)?;
                Ok(QuadraticPotential::new(gamma, h_star)?.into())
            }
            PotentialKind::Logcosh => {
                let mu = self
                    .mu
                    .ok_or_else(|| Error::InvalidArgument("log-cosh potential needs mu".into()))?;
                Ok(LogCoshPotential::new(mu, self.weight.unwrap_or(1.0), h_star)?.into())
            }
        }
    }
}

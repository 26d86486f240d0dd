//! Discrete-time iterations: explicit Euler on the linear-quadratic model,
//! resolvents, forward–backward splitting, and stochastic resolvent
//! iterations with fixed or Robbins–Monro step sizes.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::graph::Graph;
use crate::linalg::{dist2, norm2};
use crate::operators::{solve_equilibrium, ModelParams, MonotoneSystem};
use crate::potential::DissipationPotential;

/// `‖e^k‖` above this is treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e12;
/// Chains held in memory at once by [`stochastic_ensemble`].
const ENSEMBLE_BATCH: usize = 64;
/// Below `1e-14 (1 + ‖h_∞‖)` the error is at roundoff and deterministic runs stop.
const ROUNDOFF_STOP: f64 = 1e-14;
/// Errors below `1e-11 (1 + ‖h_∞‖)` are excluded from contraction-factor fits.
const FACTOR_FLOOR: f64 = 1e-11;
/// Largest system for which the linear resolvent caches an eigendecomposition.
const EIGEN_CACHE_LIMIT: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeReport {
    /// `‖e^k‖` for `k = 0..=iterations`.
    pub errors: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub diverged: bool,
    /// Geometric mean of consecutive error ratios over the last half of the
    /// run (NaN when fewer than two usable errors).
    pub measured_factor: f64,
    /// Mean of `‖e^k‖²` over the tail (NaN for deterministic runs).
    pub floor_estimate: f64,
    /// Whether consecutive quarter-averages of `‖e^k‖²` agree within 5%
    /// (stochastic runs only).
    pub plateaued: Option<bool>,
    pub final_state: Vec<f64>,
}

/// Geometric mean of `e_{k+1}/e_k` over the last half of the errors that stay
/// above `floor` (the run is cut at the first error at or below it).
pub fn measured_factor(errors: &[f64], floor: f64) -> f64 {
    let usable = errors
        .iter()
        .position(|e| !(*e > floor && e.is_finite()))
        .unwrap_or(errors.len());
    if usable < 2 {
        return f64::NAN;
    }
    let start = (usable - 1) / 2;
    let last = usable - 1;
    if last == start {
        return f64::NAN;
    }
    (errors[last] / errors[start]).powf(1.0 / (last - start) as f64)
}

fn linear_matrix(g: &Graph, alpha: f64, gamma: &[f64]) -> Result<DMatrix<f64>> {
    check_dim(g.node_count(), gamma.len())?;
    let mut m = g.dense_laplacian() * alpha;
    for (i, gi) in gamma.iter().enumerate() {
        m[(i, i)] += gi;
    }
    Ok(m)
}

/// `2 / λ_max(αL + Γ)`.
pub fn euler_threshold(g: &Graph, alpha: f64, gamma_diag: &[f64]) -> Result<f64> {
    let vals = crate::linalg::symmetric_eigenvalues(linear_matrix(g, alpha, gamma_diag)?);
    Ok(2.0 / vals[vals.len() - 1])
}

/// Spectral radius `max_i |1 - η λ_i(αL + Γ)|` of the Euler iteration matrix.
pub fn euler_factor(g: &Graph, alpha: f64, gamma_diag: &[f64], eta: f64) -> Result<f64> {
    let vals = crate::linalg::symmetric_eigenvalues(linear_matrix(g, alpha, gamma_diag)?);
    Ok(vals.iter().map(|l| (1.0 - eta * l).abs()).fold(0.0, f64::max))
}

/// Explicit Euler `h ← h + η(-(αL + Γ)h + s + Γh*)` for `k_max` steps.
///
/// Runs end early at roundoff-level error or at divergence; divergence is
/// reported, not raised.
#[allow(clippy::too_many_arguments)]
pub fn run_euler(
    g: &Graph,
    alpha: f64,
    gamma_diag: &[f64],
    h_star: &[f64],
    s_inf: &[f64],
    eta: f64,
    h0: &[f64],
    k_max: usize,
) -> Result<SchemeReport> {
    let n = g.node_count();
    for len in [gamma_diag.len(), h_star.len(), s_inf.len(), h0.len()] {
        check_dim(n, len)?;
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {eta}")));
    }
    let params = ModelParams::linear_quadratic(alpha, gamma_diag.to_vec(), h_star.to_vec())?;
    let h_inf = solve_equilibrium(&params, g, s_inf, 1e-14, 1)?;
    let scale = 1.0 + norm2(&h_inf);
    let forcing: Vec<f64> = (0..n).map(|i| s_inf[i] + gamma_diag[i] * h_star[i]).collect();

    let mut h = h0.to_vec();
    let mut lh = vec![0.0; n];
    let mut errors = vec![dist2(&h, &h_inf)];
    let mut diverged = false;
    for _ in 0..k_max {
        g.laplacian_apply_into(&h, &mut lh);
        for i in 0..n {
            h[i] += eta * (forcing[i] - alpha * lh[i] - gamma_diag[i] * h[i]);
        }
        let e = dist2(&h, &h_inf);
        errors.push(e);
        if !(e <= DIVERGENCE_LIMIT) {
            diverged = true;
            break;
        }
        if e < ROUNDOFF_STOP * scale {
            break;
        }
    }
    Ok(finish_deterministic(errors, h, scale, diverged))
}

fn finish_deterministic(errors: Vec<f64>, h: Vec<f64>, scale: f64, diverged: bool) -> SchemeReport {
    let last = *errors.last().expect("initial error recorded");
    let measured = if diverged {
        measured_factor(&errors, 0.0)
    } else {
        measured_factor(&errors, FACTOR_FLOOR * scale)
    };
    SchemeReport {
        iterations: errors.len() - 1,
        converged: !diverged && last < 1e-8 * scale,
        diverged,
        measured_factor: measured,
        floor_estimate: f64::NAN,
        plateaued: None,
        errors,
        final_state: h,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ResolventMode {
    /// `J_{ηA}` with `A = αL + α_pΔ_p`.
    OperatorA,
    /// `J_{ηF}` with the full drift `F = A + ∇ψ`.
    Full,
}

/// Cached spectral form of a linear resolvent: `(I + ηM)^{-1}(z + ηb)`.
struct LinearCache {
    q: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    offset: Vec<f64>,
}

impl LinearCache {
    fn apply(&self, eta: f64, z: &[f64]) -> Vec<f64> {
        let rhs = DVector::from_iterator(z.len(), z.iter().zip(&self.offset).map(|(zi, bi)| zi + eta * bi));
        let mut coords = self.q.tr_mul(&rhs);
        for (c, a) in coords.iter_mut().zip(&self.eigenvalues) {
            *c /= 1.0 + eta * a;
        }
        (&self.q * coords).as_slice().to_vec()
    }
}

/// Resolvent `J = (I + ηT)^{-1}` of `T = A` or `T = F`, prepared once and applied many times.
///
/// When `T` is affine (no p-term or p = 2, and ψ quadratic or not included) and
/// the graph is small, the eigendecomposition of its linear part is cached and
/// each application costs two dense matrix-vector products for any `η`.
pub struct Resolvent<'a> {
    params: &'a ModelParams,
    graph: &'a Graph,
    mode: ResolventMode,
    cache: Option<LinearCache>,
}

impl<'a> Resolvent<'a> {
    pub fn new(params: &'a ModelParams, graph: &'a Graph, mode: ResolventMode) -> Result<Self> {
        check_dim(graph.node_count(), params.dim())?;
        let n = graph.node_count();
        let include_psi = mode == ResolventMode::Full;
        let affine = params.graph_part_is_linear()
            && (!include_psi || !matches!(params.potential, DissipationPotential::LogCosh(_)));
        let cache = (affine && n <= EIGEN_CACHE_LIMIT).then(|| {
            let c = if params.p == 2.0 { params.alpha + params.alpha_p } else { params.alpha };
            let mut m = graph.dense_laplacian() * c;
            let mut offset = vec![0.0; n];
            if let (true, DissipationPotential::Quadratic(q)) = (include_psi, &params.potential) {
                for i in 0..n {
                    m[(i, i)] += q.gamma()[i];
                    offset[i] = q.gamma()[i] * q.h_star()[i];
                }
            }
            let eig = SymmetricEigen::new(m);
            LinearCache {
                q: eig.eigenvectors,
                eigenvalues: eig.eigenvalues.iter().copied().collect(),
                offset,
            }
        });
        Ok(Self {
            params,
            graph,
            mode,
            cache,
        })
    }

    pub fn mode(&self) -> ResolventMode {
        self.mode
    }

    /// Solves `x + ηT(x) = z`.
    pub fn apply(&self, eta: f64, z: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.graph.node_count(), z.len())?;
        if !(eta > 0.0) {
            return Err(Error::InvalidArgument(format!("resolvent step must be positive, got {eta}")));
        }
        if let Some(c) = &self.cache {
            return Ok(c.apply(eta, z));
        }
        let sys = MonotoneSystem {
            params: self.params,
            graph: self.graph,
            shift: 1.0,
            scale: eta,
            include_psi: self.mode == ResolventMode::Full,
        };
        sys.solve(z, z, 1e-12 * (1.0 + norm2(z)), 100)
    }
}

/// One-shot resolvent solve; see [`Resolvent`] for repeated use.
pub fn resolvent(params: &ModelParams, g: &Graph, eta: f64, z: &[f64], mode: ResolventMode) -> Result<Vec<f64>> {
    check_dim(g.node_count(), z.len())?;
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("resolvent step must be positive, got {eta}")));
    }
    let sys = MonotoneSystem {
        params,
        graph: g,
        shift: 1.0,
        scale: eta,
        include_psi: mode == ResolventMode::Full,
    };
    sys.solve(z, z, 1e-12 * (1.0 + norm2(z)), 100)
}

/// Forward–backward contraction factor `√(1 - 2ημ(1 - ηL_ψ/2))`.
pub fn fb_contraction_factor(eta: f64, mu: f64, lipschitz: f64) -> f64 {
    (1.0 - 2.0 * eta * mu * (1.0 - eta * lipschitz / 2.0)).max(0.0).sqrt()
}

/// Source for discrete iterations: constant, or an arbitrary sequence `s^k`
/// converging to `s_inf` (used as the reference equilibrium).
pub enum DiscreteSource<'a> {
    Constant(Vec<f64>),
    Sequence {
        s_inf: Vec<f64>,
        at: &'a (dyn Fn(usize, &mut [f64]) + Sync),
    },
}

impl DiscreteSource<'_> {
    fn s_inf(&self) -> &[f64] {
        match self {
            Self::Constant(s) | Self::Sequence { s_inf: s, .. } => s,
        }
    }
}

/// Forward–backward splitting `h ← J_{ηA}(h - η∇ψ(h) + ηs^k)`.
///
/// Requires `0 < η < 2/L_ψ`.
pub fn run_forward_backward(
    params: &ModelParams,
    g: &Graph,
    src: &DiscreteSource<'_>,
    eta: f64,
    h0: &[f64],
    k_max: usize,
) -> Result<SchemeReport> {
    let n = g.node_count();
    check_dim(n, h0.len())?;
    check_dim(n, src.s_inf().len())?;
    let l_psi = params.potential.lipschitz().ok_or_else(|| {
        Error::InvalidArgument("forward-backward needs a Lipschitz gradient".into())
    })?;
    let limit = if l_psi > 0.0 { 2.0 / l_psi } else { f64::INFINITY };
    if !(eta > 0.0 && eta < limit) {
        return Err(Error::InvalidArgument(format!(
            "forward-backward step must satisfy 0 < eta < 2/L_psi = {limit}, got {eta}"
        )));
    }
    let h_inf = solve_equilibrium(params, g, src.s_inf(), 1e-13, 200)?;
    let scale = 1.0 + norm2(&h_inf);
    let res = Resolvent::new(params, g, ResolventMode::OperatorA)?;

    let mut h = h0.to_vec();
    let mut s = src.s_inf().to_vec();
    let mut z = vec![0.0; n];
    let mut errors = vec![dist2(&h, &h_inf)];
    let mut diverged = false;
    for k in 0..k_max {
        if let DiscreteSource::Sequence { at, .. } = src {
            at(k, &mut s);
        }
        z.iter_mut().for_each(|v| *v = 0.0);
        params.potential.add_gradient(&h, -eta, &mut z);
        for i in 0..n {
            z[i] += h[i] + eta * s[i];
        }
        h = res.apply(eta, &z)?;
        let e = dist2(&h, &h_inf);
        errors.push(e);
        if !(e <= DIVERGENCE_LIMIT) {
            diverged = true;
            break;
        }
        if matches!(src, DiscreteSource::Constant(_)) && e < ROUNDOFF_STOP * scale {
            break;
        }
    }
    Ok(finish_deterministic(errors, h, scale, diverged))
}

/// `η²σ² / (2ημ + η²μ²)`.
pub fn noise_floor_bound(eta: f64, mu: f64, sigma2: f64) -> Result<f64> {
    if !(eta > 0.0 && mu > 0.0 && sigma2 >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise floor needs eta > 0, mu > 0, sigma2 >= 0 (got {eta}, {mu}, {sigma2})"
        )));
    }
    Ok(eta * eta * sigma2 / (2.0 * eta * mu + eta * eta * mu * mu))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum StepSchedule {
    Constant(f64),
    /// `η_k = eta0 / (k + 1)`.
    RobbinsMonro { eta0: f64 },
}

impl StepSchedule {
    pub fn eta(&self, k: usize) -> f64 {
        match *self {
            Self::Constant(eta) => eta,
            Self::RobbinsMonro { eta0 } => eta0 / (k as f64 + 1.0),
        }
    }

    fn validate(&self) -> Result<()> {
        let e = self.eta(0);
        if e > 0.0 && e.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("step size must be positive, got {e}")))
        }
    }
}

/// Shared setup of a stochastic resolvent chain.
struct StochasticProblem<'a> {
    resolvent: Resolvent<'a>,
    s_inf: &'a [f64],
    h_inf: Vec<f64>,
    noise: Option<Normal<f64>>,
    schedule: StepSchedule,
}

impl<'a> StochasticProblem<'a> {
    fn new(
        params: &'a ModelParams,
        g: &'a Graph,
        s_inf: &'a [f64],
        sigma2: f64,
        schedule: StepSchedule,
    ) -> Result<Self> {
        let n = g.node_count();
        check_dim(n, s_inf.len())?;
        schedule.validate()?;
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma2 must be >= 0, got {sigma2}")));
        }
        let noise = (sigma2 > 0.0)
            .then(|| Normal::new(0.0, (sigma2 / n as f64).sqrt()))
            .transpose()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(Self {
            resolvent: Resolvent::new(params, g, ResolventMode::Full)?,
            s_inf,
            h_inf: solve_equilibrium(params, g, s_inf, 1e-13, 200)?,
            noise,
            schedule,
        })
    }

    /// Runs one chain and returns `‖e^k‖²` for `k = 0..=k_max` and the final state.
    fn chain(&self, h0: &[f64], k_max: usize, seed: u64, stream: u64) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let n = h0.len();
        let mut h = h0.to_vec();
        let mut z = vec![0.0; n];
        let mut sq = Vec::with_capacity(k_max + 1);
        sq.push(dist2(&h, &self.h_inf).powi(2));
        for k in 0..k_max {
            let eta = self.schedule.eta(k);
            for i in 0..n {
                let xi = self.noise.map_or(0.0, |d| d.sample(&mut rng));
                z[i] = h[i] + eta * (self.s_inf[i] + xi);
            }
            h = self.resolvent.apply(eta, &z)?;
            sq.push(dist2(&h, &self.h_inf).powi(2));
        }
        Ok((sq, h))
    }
}

fn tail_mean(values: &[f64], tail_fraction: f64) -> f64 {
    let len = values.len();
    let count = ((len as f64 * tail_fraction).ceil() as usize).clamp(1, len);
    values[len - count..].iter().sum::<f64>() / count as f64
}

/// Relative drift of the last two quarter-averages below 5%.
fn plateau_check(values: &[f64]) -> bool {
    let q = values.len() / 4;
    if q == 0 {
        return false;
    }
    let a = values[2 * q..3 * q].iter().sum::<f64>() / q as f64;
    let b = values[3 * q..4 * q].iter().sum::<f64>() / q as f64;
    let m = a.abs().max(b.abs());
    m == 0.0 || (a - b).abs() <= 0.05 * m
}

fn stochastic_report(sq: Vec<f64>, h: Vec<f64>, tail_fraction: f64, converged: bool) -> SchemeReport {
    let floor = tail_mean(&sq, tail_fraction);
    SchemeReport {
        iterations: sq.len() - 1,
        converged,
        diverged: false,
        measured_factor: f64::NAN,
        floor_estimate: floor,
        plateaued: Some(plateau_check(&sq)),
        errors: sq.into_iter().map(f64::sqrt).collect(),
        final_state: h,
    }
}

/// Single chain of `h ← J_{ηF}(h + η(s_inf + ξ^k))` with Gaussian `ξ^k`,
/// `E‖ξ^k‖² = σ²`.
#[allow(clippy::too_many_arguments)]
pub fn run_stochastic_resolvent(
    params: &ModelParams,
    g: &Graph,
    s_inf: &[f64],
    sigma2: f64,
    eta: f64,
    h0: &[f64],
    k_max: usize,
    seed: u64,
    tail_fraction: f64,
) -> Result<SchemeReport> {
    check_dim(g.node_count(), h0.len())?;
    let prob = StochasticProblem::new(params, g, s_inf, sigma2, StepSchedule::Constant(eta))?;
    let (sq, h) = prob.chain(h0, k_max, seed, 0)?;
    let scale = 1.0 + norm2(&prob.h_inf);
    let converged = sigma2 == 0.0 && sq.last().is_some_and(|e| e.sqrt() < 1e-8 * scale);
    Ok(stochastic_report(sq, h, tail_fraction, converged))
}

/// Stochastic resolvent iteration with `η_k = eta0/(k+1)`.
///
/// Converged when the final `‖e‖²` is below `1e-2 σ²/(2μ)` (or, without
/// noise, when `‖e‖ < 1e-8 (1 + ‖h_∞‖)`).
#[allow(clippy::too_many_arguments)]
pub fn run_robbins_monro(
    params: &ModelParams,
    g: &Graph,
    s_inf: &[f64],
    sigma2: f64,
    eta0: f64,
    h0: &[f64],
    k_max: usize,
    seed: u64,
) -> Result<SchemeReport> {
    check_dim(g.node_count(), h0.len())?;
    let prob = StochasticProblem::new(params, g, s_inf, sigma2, StepSchedule::RobbinsMonro { eta0 })?;
    let (sq, h) = prob.chain(h0, k_max, seed, 0)?;
    let scale = 1.0 + norm2(&prob.h_inf);
    let target = (1e-2 * sigma2 / (2.0 * params.mu())).max((1e-8 * scale).powi(2));
    let converged = sq.last().is_some_and(|e| *e < target);
    Ok(stochastic_report(sq, h, 0.5, converged))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleReport {
    /// Ensemble mean of `‖e^k‖²` for `k = 0..=k_max`.
    pub mean_sq_err: Vec<f64>,
    pub chains: usize,
    /// Tail average of `mean_sq_err`.
    pub floor_estimate: f64,
    pub final_mean_sq_err: f64,
    pub plateaued: bool,
}

/// Runs `chains` independent stochastic resolvent chains in parallel.
///
/// Chain `c` uses stream `c` of a ChaCha8 generator seeded with `seed`; the
/// per-iteration means are summed in chain order, so results are independent
/// of thread count.
#[allow(clippy::too_many_arguments)]
pub fn stochastic_ensemble(
    params: &ModelParams,
    g: &Graph,
    s_inf: &[f64],
    sigma2: f64,
    schedule: StepSchedule,
    h0: &[f64],
    k_max: usize,
    chains: usize,
    seed: u64,
    tail_fraction: f64,
) -> Result<EnsembleReport> {
    check_dim(g.node_count(), h0.len())?;
    if chains == 0 {
        return Err(Error::InvalidArgument("ensemble needs at least one chain".into()));
    }
    let prob = StochasticProblem::new(params, g, s_inf, sigma2, schedule)?;
    let mut mean = vec![0.0; k_max + 1];
    // Summing batch by batch keeps the chain order, so thread count never changes the result.
    for start in (0..chains).step_by(ENSEMBLE_BATCH) {
        let end = (start + ENSEMBLE_BATCH).min(chains);
        let runs: Vec<Vec<f64>> = (start..end)
            .into_par_iter()
            .map(|c| prob.chain(h0, k_max, seed, c as u64).map(|(sq, _)| sq))
            .collect::<Result<_>>()?;
        for run in &runs {
            for (m, v) in mean.iter_mut().zip(run) {
                *m += v;
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= chains as f64);
    Ok(EnsembleReport {
        floor_estimate: tail_mean(&mean, tail_fraction),
        final_mean_sq_err: *mean.last().expect("k_max + 1 entries"),
        plateaued: plateau_check(&mean),
        mean_sq_err: mean,
        chains,
    })
}

/// Smallest eigenvalue-based contraction `(1 + ημ)^{-2}` of one stochastic step.
pub fn stochastic_step_contraction(eta: f64, mu: f64) -> f64 {
    (1.0 + eta * mu).powi(-2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphFamily;
    use crate::potential::{LogCoshPotential, QuadraticPotential};

    fn p3() -> Graph {
        GraphFamily::Path { n: 3 }.generate().unwrap()
    }

    #[test]
    fn euler_threshold_values() {
        let g = p3();
        assert!((euler_threshold(&g, 1.0, &[0.1; 3]).unwrap() - 2.0 / 3.1).abs() < 1e-12);
        assert!((euler_threshold(&g, 0.5, &[0.1; 3]).unwrap() - 1.25).abs() < 1e-12);
        let k = GraphFamily::Complete { n: 7 }.generate().unwrap();
        let gamma = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];
        let thr = euler_threshold(&k, 1.0, &gamma).unwrap();
        // Γ is not uniform, so only a bracket is exact: λ_max ∈ [N + γ_min, N + γ_max].
        assert!((2.0 / 7.7 - 1e-12..=2.0 / 7.1 + 1e-12).contains(&thr));
        let uniform = euler_threshold(&k, 1.0, &[0.3; 7]).unwrap();
        assert!((uniform - 2.0 / 7.3).abs() < 1e-12);
    }

    #[test]
    fn euler_factor_at_inverse_lambda_max() {
        let g = p3();
        let eta = 1.0 / 3.1;
        let f = euler_factor(&g, 1.0, &[0.1; 3], eta).unwrap();
        assert!((f - (1.0 - 0.1 / 3.1)).abs() < 1e-12);
    }

    #[test]
    fn euler_sides_of_threshold() {
        let g = p3();
        let thr = 2.0 / 3.1;
        let h0 = [1.0, -0.5, 2.0];
        let s = [1.0 / 3.0; 3];
        let ok = run_euler(&g, 1.0, &[0.1; 3], &[0.0; 3], &s, 0.99 * thr, &h0, 10_000).unwrap();
        assert!(ok.converged && ok.measured_factor < 1.0);
        let bad = run_euler(&g, 1.0, &[0.1; 3], &[0.0; 3], &s, 1.01 * thr, &h0, 10_000).unwrap();
        assert!(!bad.converged);
        assert!(bad.errors.windows(2).any(|w| w[1] > w[0]));
    }

    #[test]
    fn measured_factor_of_geometric_sequence() {
        let errs: Vec<f64> = (0..40).map(|k| 0.7f64.powi(k)).collect();
        assert!((measured_factor(&errs, 0.0) - 0.7).abs() < 1e-12);
        assert!(measured_factor(&[1.0], 0.0).is_nan());
    }

    fn nonlinear_params(n: usize) -> ModelParams {
        ModelParams::new(
            1.0,
            0.5,
            3.0,
            QuadraticPotential::uniform(0.1, vec![0.0; n]).unwrap().into(),
        )
        .unwrap()
    }

    #[test]
    fn resolvent_limits() {
        let g = GraphFamily::Cycle { n: 6 }.generate().unwrap();
        let params = nonlinear_params(6);
        let z = [0.3, -1.0, 2.0, 0.5, 0.0, 1.5];
        let eta = 1e-8;
        let x = resolvent(&params, &g, eta, &z, ResolventMode::OperatorA).unwrap();
        let mut az = vec![0.0; 6];
        params.graph_drift_into(&g, &z, &mut az);
        assert!(dist2(&x, &z) <= eta * norm2(&az) * (1.0 + 1e-6));
        let c = resolvent(&params, &g, 2.0, &[4.0; 6], ResolventMode::OperatorA).unwrap();
        assert!(dist2(&c, &[4.0; 6]) < 1e-12);
    }

    #[test]
    fn cached_resolvent_matches_newton_path() {
        let g = GraphFamily::Star { n: 12 }.generate().unwrap();
        let params = ModelParams::linear_quadratic(0.7, (0..12).map(|i| 0.1 + 0.05 * i as f64).collect(), vec![1.0; 12]).unwrap();
        let z: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        for mode in [ResolventMode::OperatorA, ResolventMode::Full] {
            let cached = Resolvent::new(&params, &g, mode).unwrap().apply(0.8, &z).unwrap();
            let direct = resolvent(&params, &g, 0.8, &z, mode).unwrap();
            assert!(dist2(&cached, &direct) < 1e-11);
        }
    }

    #[test]
    fn fb_factor_formula() {
        assert!((fb_contraction_factor(1.0, 0.1, 0.1) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn fb_matches_equilibrium() {
        let g = p3();
        let params = nonlinear_params(3);
        let s = vec![0.5, -0.2, 0.1];
        let h_inf = solve_equilibrium(&params, &g, &s, 1e-13, 100).unwrap();
        let rep = run_forward_backward(&params, &g, &DiscreteSource::Constant(s.clone()), 1.0, &[0.0; 3], 2000).unwrap();
        assert!(rep.converged);
        assert!(dist2(&rep.final_state, &h_inf) < 1e-8);
        assert!(rep.measured_factor <= fb_contraction_factor(1.0, 0.1, 0.1) + 1e-6);
        let still = run_forward_backward(&params, &g, &DiscreteSource::Constant(s), 1.0, &h_inf, 10).unwrap();
        assert!(still.errors.iter().all(|e| *e < 1e-10));
    }

    #[test]
    fn fb_rejects_large_steps() {
        let g = p3();
        let params = nonlinear_params(3);
        let src = DiscreteSource::Constant(vec![0.0; 3]);
        for eta in [20.0, 25.0, 0.0] {
            assert!(matches!(
                run_forward_backward(&params, &g, &src, eta, &[0.0; 3], 10),
                Err(Error::InvalidArgument(_))
            ));
        }
        let lc = ModelParams::new(1.0, 0.0, 2.0, LogCoshPotential::new(0.2, 1.0, vec![0.0; 3]).unwrap().into()).unwrap();
        assert!(run_forward_backward(&lc, &g, &src, 2.0 / 1.2, &[0.0; 3], 10).is_err());
        assert!(run_forward_backward(&lc, &g, &src, 1.6, &[0.0; 3], 10).is_ok());
    }

    #[test]
    fn noise_floor_values() {
        assert!((noise_floor_bound(2.0, 0.5, 0.01).unwrap() - 0.04 / 3.0).abs() < 1e-15);
        assert!((noise_floor_bound(1.0, 0.5, 0.01).unwrap() - 0.008).abs() < 1e-15);
        assert_eq!(noise_floor_bound(1.0, 0.5, 0.0).unwrap(), 0.0);
        assert!(noise_floor_bound(0.5, 0.5, 0.01).unwrap() < noise_floor_bound(1.0, 0.5, 0.01).unwrap());
        assert!(noise_floor_bound(1.0, 0.0, 0.01).is_err());
    }

    #[test]
    fn noiseless_stochastic_chain_converges() {
        let g = GraphFamily::Star { n: 10 }.generate().unwrap();
        let params = ModelParams::linear_quadratic(1.0, vec![0.5; 10], vec![0.0; 10]).unwrap();
        let s = vec![0.2; 10];
        let rep = run_stochastic_resolvent(&params, &g, &s, 0.0, 1.0, &[1.0; 10], 200, 1, 0.5).unwrap();
        assert!(rep.converged);
        // Deterministic error decays like k^{-eta0 mu}, so a large eta0 reaches roundoff quickly.
        let rm = run_robbins_monro(&params, &g, &s, 0.0, 40.0, &[1.0; 10], 20_000, 1).unwrap();
        assert!(rm.converged);
    }

    #[test]
    fn robbins_monro_schedule_sums() {
        let s = StepSchedule::RobbinsMonro { eta0: 2.0 };
        let partial = |k: usize| (0..k).map(|i| s.eta(i)).sum::<f64>();
        let partial_sq = |k: usize| (0..k).map(|i| s.eta(i).powi(2)).sum::<f64>();
        assert!(partial(100_000) > partial(1000) + 9.0);
        assert!(partial_sq(100_000) - partial_sq(1000) < 4.0 * 1e-3);
        assert!(partial_sq(100_000) < 4.0 * std::f64::consts::PI.powi(2) / 6.0);
    }

    #[test]
    fn ensemble_is_thread_independent() {
        let g = GraphFamily::Star { n: 8 }.generate().unwrap();
        let params = ModelParams::linear_quadratic(1.0, vec![0.5; 8], vec![0.0; 8]).unwrap();
        let s = vec![0.1; 8];
        let run = || {
            stochastic_ensemble(&params, &g, &s, 0.01, StepSchedule::Constant(1.0), &[0.0; 8], 100, 16, 5, 0.5).unwrap()
        };
        let a = run();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(run);
        assert_eq!(a, b);
    }
}

//! Graph p-gap `C_p(G) = inf_{x ⊥ 1, x ≠ 0} Σ W_ij |x_i - x_j|^p / ‖x‖_p^p`.
//!
//! Two closed forms are provided. [`cp_lower_bound`] is the spectral formula
//! `m^{1-p/2} (2λ₂)^{p/2} N^{(p-2)/2}`; note that it returns `2λ₂` at `p = 2`,
//! twice the true `C_2 = λ₂`, and that for `p > 2` it can exceed `C_p` (on
//! `P3`, `x = (1, 0, -1)` has quotient 1 while the formula gives `2√3`).
//! [`cp_power_mean_bound`] is `(ΣW)^{1-p/2} λ₂^{p/2}`, which does hold: by the
//! power-mean inequality `Σ W|d|^p ≥ (ΣW)^{1-p/2} (Σ W d²)^{p/2}`, and
//! `‖x‖_p ≤ ‖x‖₂` for `p ≥ 2`.
//!
//! [`estimate_cp`] minimizes the quotient numerically and therefore returns an
//! upper bound on `C_p` together with its witness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::graph::{check_p, signed_pow, Graph};
use crate::linalg::{dot, project_out_mean};

pub fn cp_lower_bound(g: &Graph, p: f64) -> Result<f64> {
    check_p(p)?;
    let lambda2 = g.spectral_summary()?.lambda2;
    Ok(cp_lower_bound_with(g.node_count(), g.edge_count(), lambda2, p))
}

/// [`cp_lower_bound`] from precomputed `N`, `m` and `λ₂`.
pub fn cp_lower_bound_with(n: usize, m: usize, lambda2: f64, p: f64) -> f64 {
    (m as f64).powf(1.0 - p / 2.0) * (2.0 * lambda2).powf(p / 2.0) * (n as f64).powf((p - 2.0) / 2.0)
}

pub fn cp_power_mean_bound(g: &Graph, p: f64) -> Result<f64> {
    check_p(p)?;
    let lambda2 = g.spectral_summary()?.lambda2;
    Ok(g.total_weight().powf(1.0 - p / 2.0) * lambda2.powf(p / 2.0))
}

fn p_norm_pow(x: &[f64], p: f64) -> f64 {
    x.iter().map(|v| v.abs().powf(p)).sum()
}

/// The p-Rayleigh quotient of `x` after projecting it onto `1⊥`.
pub fn rayleigh_quotient_p(g: &Graph, x: &[f64], p: f64) -> Result<f64> {
    check_p(p)?;
    check_dim(g.node_count(), x.len())?;
    let mut y = x.to_vec();
    project_out_mean(&mut y);
    let den = p_norm_pow(&y, p);
    if den == 0.0 || !den.is_finite() {
        return Err(Error::InvalidArgument(
            "Rayleigh quotient undefined for vectors with no component orthogonal to 1".into(),
        ));
    }
    Ok(g.dirichlet_energy_unchecked(&y, p) / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CpOptions {
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for CpOptions {
    fn default() -> Self {
        Self {
            restarts: 20,
            max_iter: 5000,
            tol: 1e-10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PGapEstimate {
    pub value: f64,
    /// Minimizing vector, `⟨x, 1⟩ = 0` and `‖x‖_p = 1`.
    pub argmin_vector: Vec<f64>,
    pub restarts_used: usize,
    /// Final value of each successful restart, in restart order.
    pub per_restart: Vec<f64>,
}

const STEP_FLOOR: f64 = 1e-14;
/// Consecutive small relative changes required before a restart stops.
const STALL_ITERS: usize = 5;

struct Quotient<'g> {
    g: &'g Graph,
    p: f64,
}

impl Quotient<'_> {
    fn normalize(&self, x: &mut [f64]) -> bool {
        project_out_mean(x);
        let norm = p_norm_pow(x, self.p).powf(1.0 / self.p);
        if !(norm > 0.0 && norm.is_finite()) {
            return false;
        }
        x.iter_mut().for_each(|v| *v /= norm);
        true
    }

    /// Value on the normalized sphere `‖x‖_p = 1`.
    fn value(&self, x: &[f64]) -> f64 {
        self.g.dirichlet_energy_unchecked(x, self.p) / p_norm_pow(x, self.p)
    }

    /// Projected gradient `(p Δ_p(x) - R p sign(x)|x|^{p-1}) / ‖x‖_p^p`, minus its mean.
    fn gradient(&self, x: &[f64], r: f64, out: &mut [f64]) {
        let p = self.p;
        self.g.p_laplacian_apply_into(x, p, out);
        let den = p_norm_pow(x, p);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = p * (*o - r * signed_pow(*xi, p - 1.0)) / den;
        }
        project_out_mean(out);
    }

    /// One projected-gradient restart from `x`; `None` if the start is degenerate.
    fn descend(&self, mut x: Vec<f64>, opts: &CpOptions) -> Option<(f64, Vec<f64>)> {
        if !self.normalize(&mut x) {
            return None;
        }
        let n = x.len();
        let mut v = self.value(&x);
        let mut g = vec![0.0; n];
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        let mut trial = vec![0.0; n];
        let mut stalled = 0;
        for _ in 0..opts.max_iter {
            self.gradient(&x, v, &mut g);
            let mut step = match &prev {
                Some((xp, gp)) => {
                    let s: Vec<f64> = x.iter().zip(xp).map(|(a, b)| a - b).collect();
                    let y: Vec<f64> = g.iter().zip(gp).map(|(a, b)| a - b).collect();
                    let sy = dot(&s, &y);
                    if sy != 0.0 {
                        (dot(&s, &s) / sy).abs()
                    } else {
                        1.0
                    }
                }
                None => 1.0,
            };
            let mut accepted = None;
            while step >= STEP_FLOOR {
                for i in 0..n {
                    trial[i] = x[i] - step * g[i];
                }
                if self.normalize(&mut trial) {
                    let vt = self.value(&trial);
                    if vt < v {
                        accepted = Some(vt);
                        break;
                    }
                }
                step *= 0.5;
            }
            let Some(vt) = accepted else { break };
            let rel = (v - vt).abs() / v;
            prev = Some((x.clone(), g.clone()));
            x.copy_from_slice(&trial);
            v = vt;
            stalled = if rel < opts.tol { stalled + 1 } else { 0 };
            if stalled >= STALL_ITERS {
                break;
            }
        }
        v.is_finite().then_some((v, x))
    }
}

/// Estimates `C_p(G)` by projected gradient descent with random restarts.
///
/// Restarts run in parallel; restart `r` draws its start from stream `r` of
/// a ChaCha8 generator seeded with `opts.seed`, so the result does not depend
/// on thread scheduling.
pub fn estimate_cp(g: &Graph, p: f64, opts: &CpOptions) -> Result<PGapEstimate> {
    check_p(p)?;
    if g.node_count() < 2 {
        return Err(Error::DegenerateGraph("p-gap needs at least two nodes".into()));
    }
    if opts.restarts == 0 {
        return Err(Error::InvalidArgument("estimate_cp needs at least one restart".into()));
    }
    let q = Quotient { g, p };
    let n = g.node_count();
    let runs: Vec<Option<(f64, Vec<f64>)>> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(r as u64);
            let x0: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            q.descend(x0, opts)
        })
        .collect();

    let ok: Vec<(f64, Vec<f64>)> = runs.into_iter().flatten().collect();
    let per_restart: Vec<f64> = ok.iter().map(|(v, _)| *v).collect();
    let (value, argmin_vector) = ok
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .ok_or(Error::NonConvergence {
            solver: "p-gap projected gradient",
            iterations: opts.max_iter,
            residual: f64::NAN,
        })?;
    Ok(PGapEstimate {
        value,
        argmin_vector,
        restarts_used: per_restart.len(),
        per_restart,
    })
}

//! Calibration of `(α, Γ)` to a target time constant `τ*` and steady-state
//! mass `H*`, plus the non-synonymy sweep and the complete-graph mean-field
//! closed form.
//!
//! The mass target fixes the mean dissipation `γ̄ = s̄ / (H* - 1ᵀh*)`, because
//! at equilibrium `1ᵀΓ(h_∞ - h*) = 1ᵀs_∞`. A diagonal `Γ` with mean `γ̄` has
//! minimum at most `γ̄`, so `Γ` is always uniform `γ̄ I` here. The rate target
//! is met on the consensus-free subspace `1⊥`, where the contraction rate is
//! at least `αλ₂ + γ_min = ρ* + γ̄`. When `γ̄ < ρ*` the constant mode still
//! relaxes at `γ̄`; that case is reported through `full_space_rate_met`.

use nalgebra::SymmetricEigen;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::graph::{Graph, GraphFamily};
use crate::linalg::SpdSystem;
use crate::operators::{drift_jacobian, solve_equilibrium, total_mass, ModelParams};
use crate::potential::{DissipationPotential, QuadraticPotential};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationTargets {
    pub tau_star: f64,
    /// Target total mass `H*` at equilibrium.
    pub h_target: f64,
    pub h_star: Vec<f64>,
    pub s_inf: Vec<f64>,
}

impl CalibrationTargets {
    pub fn rho_star(&self) -> f64 {
        1.0 / self.tau_star
    }

    pub fn source_mass(&self) -> f64 {
        total_mass(&self.s_inf)
    }

    /// Reasons the targets violate the feasibility hypotheses (empty if none).
    pub fn infeasibility(&self) -> Vec<String> {
        let mut reasons = Vec::new();
        if !(self.tau_star > 0.0 && self.tau_star.is_finite()) {
            reasons.push(format!("tau_star must be positive, got {}", self.tau_star));
        }
        let base = total_mass(&self.h_star);
        if !(self.h_target > base) {
            reasons.push(format!(
                "target mass {} must exceed baseline mass {base}",
                self.h_target
            ));
        }
        if !(self.source_mass() > 0.0) {
            reasons.push(format!("source mass must be positive, got {}", self.source_mass()));
        }
        reasons
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub alpha: f64,
    /// Diagonal of Γ (for nonlinear potentials, of ∇²ψ at `h_inf`).
    pub gamma_diag: Vec<f64>,
    pub h_inf: Vec<f64>,
    /// Guaranteed contraction rate on `1⊥` (`αλ₂ + γ_min` in the quadratic case).
    pub predicted_rate: f64,
    /// Full-space rate bound `min{γ_min, αλ₂}`.
    pub rate_bound: f64,
    pub rho_star: f64,
    pub gamma_bar: f64,
    pub lambda2: f64,
    pub feasible: bool,
    /// Whether `rate_bound ≥ ρ*`, i.e. the constant mode also meets the rate.
    pub full_space_rate_met: bool,
    pub reasons: Vec<String>,
    /// Scale applied to the base potential (nonlinear calibration only).
    pub theta: Option<f64>,
    pub outer_iterations: usize,
}

impl CalibrationResult {
    fn infeasible(rho_star: f64, lambda2: f64, reasons: Vec<String>) -> Self {
        Self {
            alpha: rho_star / lambda2,
            gamma_diag: Vec::new(),
            h_inf: Vec::new(),
            predicted_rate: f64::NAN,
            rate_bound: f64::NAN,
            rho_star,
            gamma_bar: f64::NAN,
            lambda2,
            feasible: false,
            full_space_rate_met: false,
            reasons,
            theta: None,
            outer_iterations: 0,
        }
    }

    pub fn mass(&self) -> f64 {
        total_mass(&self.h_inf)
    }
}

/// Calibrates `α` and a uniform `Γ` on `g`.
///
/// Infeasible targets produce a result with `feasible = false`, never an error;
/// errors are reserved for dimension mismatches and solver failures.
pub fn sgps(g: &Graph, targets: &CalibrationTargets) -> Result<CalibrationResult> {
    let lambda2 = g.spectral_summary()?.lambda2;
    sgps_with_lambda2(g, targets, lambda2)
}

/// [`sgps`] with a precomputed λ₂.
pub fn sgps_with_lambda2(g: &Graph, targets: &CalibrationTargets, lambda2: f64) -> Result<CalibrationResult> {
    let n = g.node_count();
    check_dim(n, targets.h_star.len())?;
    check_dim(n, targets.s_inf.len())?;
    let rho_star = targets.rho_star();
    let reasons = targets.infeasibility();
    if !reasons.is_empty() {
        return Ok(CalibrationResult::infeasible(rho_star, lambda2, reasons));
    }
    let alpha = rho_star / lambda2;
    let gamma_bar = targets.source_mass() / (targets.h_target - total_mass(&targets.h_star));
    let gamma_diag = vec![gamma_bar; n];

    let coeffs = g.edges().iter().map(|e| alpha * e.w).collect();
    let rhs: Vec<f64> = (0..n)
        .map(|i| targets.s_inf[i] + gamma_bar * targets.h_star[i])
        .collect();
    let h_inf = SpdSystem::new(g, coeffs, gamma_diag.clone()).solve(&rhs, 1e-14)?;

    let predicted_rate = alpha * lambda2 + gamma_bar;
    let rate_bound = gamma_bar.min(alpha * lambda2);
    let full_space_rate_met = rate_bound >= rho_star * (1.0 - 1e-12);
    let mut notes = Vec::new();
    if !full_space_rate_met {
        notes.push(format!(
            "mean dissipation {gamma_bar} is below rho* = {rho_star}: the mass mode relaxes at {gamma_bar}"
        ));
    }
    Ok(CalibrationResult {
        alpha,
        gamma_diag,
        h_inf,
        predicted_rate,
        rate_bound,
        rho_star,
        gamma_bar,
        lambda2,
        feasible: predicted_rate >= rho_star,
        full_space_rate_met,
        reasons: notes,
        theta: None,
        outer_iterations: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NonlinearOptions {
    /// Relative mass tolerance `|1ᵀh_∞ - H*| ≤ tol · max(1, |H*|)`.
    pub tol: f64,
    pub max_outer: usize,
    pub alpha_p: f64,
    pub p: f64,
}

impl Default for NonlinearOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_outer: 100,
            alpha_p: 0.0,
            p: 2.0,
        }
    }
}

/// Bracket for the α bisection, as multiples of `ρ*/λ₂`.
const ALPHA_BRACKET: (f64, f64) = (1.0, 100.0);
const ALPHA_BISECTIONS: usize = 60;

/// Smallest eigenvalue of the drift Jacobian at `h` compressed to `1⊥`.
pub fn linearized_perp_rate(params: &ModelParams, g: &Graph, h: &[f64]) -> Result<f64> {
    let jac = drift_jacobian(params, g, h)?.to_dense();
    let n = g.node_count();
    let mut proj = jac;
    // P J P with P = I - 11ᵀ/N.
    let row_means: Vec<f64> = (0..n).map(|i| proj.row(i).sum() / n as f64).collect();
    for i in 0..n {
        for j in 0..n {
            proj[(i, j)] -= row_means[i];
        }
    }
    let col_means: Vec<f64> = (0..n).map(|j| proj.column(j).sum() / n as f64).collect();
    for i in 0..n {
        for j in 0..n {
            proj[(i, j)] -= col_means[j];
        }
    }
    let eig = SymmetricEigen::new(proj);
    // Drop the eigenpair along 1 (eigenvalue 0 of the compression).
    let ones_dir = (0..n)
        .max_by(|&a, &b| {
            let ca = eig.eigenvectors.column(a).sum().abs();
            let cb = eig.eigenvectors.column(b).sum().abs();
            ca.total_cmp(&cb)
        })
        .expect("n >= 1");
    Ok((0..n)
        .filter(|&k| k != ones_dir)
        .map(|k| eig.eigenvalues[k])
        .fold(f64::INFINITY, f64::min))
}

/// Calibration with a nonlinear potential family `θ ψ_base`.
///
/// Starts from the quadratic calibration, then alternates an α bisection on
/// `[ρ*/λ₂, 100 ρ*/λ₂]` (smallest α whose linearized rate on `1⊥` reaches
/// ρ*) with a log-space bisection on θ for the mass target, until α settles.
pub fn sgps_nonlinear(
    g: &Graph,
    targets: &CalibrationTargets,
    base: &DissipationPotential,
    opts: &NonlinearOptions,
) -> Result<CalibrationResult> {
    let n = g.node_count();
    check_dim(n, base.dim())?;
    let linear = sgps(g, targets)?;
    if !linear.feasible {
        return Ok(linear);
    }
    let mu_base = base.modulus();
    if !(mu_base > 0.0) {
        return Err(Error::InvalidArgument(
            "nonlinear calibration needs a strongly convex base potential".into(),
        ));
    }
    let rho_star = linear.rho_star;
    let lambda2 = linear.lambda2;
    let h_target = targets.h_target;
    let mass_tol = opts.tol * h_target.abs().max(1.0);

    let build = |alpha: f64, theta: f64| -> Result<ModelParams> {
        let pot = rebase(base, theta, &targets.h_star)?;
        ModelParams::new(alpha, opts.alpha_p, opts.p, pot)
    };
    let equilibrium = |params: &ModelParams| solve_equilibrium(params, g, &targets.s_inf, 1e-13, 200);

    let mut alpha = linear.alpha;
    let mut theta = linear.gamma_bar / mu_base;
    let mut budget = opts.max_outer;
    let mut used = 0;
    let mut reasons = Vec::new();

    loop {
        // Mass: mass(θ) decreases in θ; bracket in log space, then bisect.
        let mass_at = |theta: f64| -> Result<(f64, Vec<f64>)> {
            let h = equilibrium(&build(alpha, theta)?)?;
            Ok((total_mass(&h) - h_target, h))
        };
        let (mut lo, mut hi) = (theta, theta);
        let (mut f_lo, _) = mass_at(lo)?;
        let mut f_hi = f_lo;
        while f_lo < 0.0 && budget > 0 {
            lo /= 2.0;
            f_lo = mass_at(lo)?.0;
            budget -= 1;
            used += 1;
        }
        while f_hi > 0.0 && budget > 0 {
            hi *= 2.0;
            f_hi = mass_at(hi)?.0;
            budget -= 1;
            used += 1;
        }
        let mut h_inf;
        let mut residual;
        (residual, h_inf) = mass_at(theta)?;
        if f_lo >= 0.0 && f_hi <= 0.0 {
            while residual.abs() > mass_tol && budget > 0 {
                theta = (lo * hi).sqrt();
                (residual, h_inf) = mass_at(theta)?;
                if residual > 0.0 {
                    lo = theta;
                } else {
                    hi = theta;
                }
                budget -= 1;
                used += 1;
            }
        }
        if residual.abs() > mass_tol {
            reasons.push(format!(
                "mass target not met within {} outer iterations (residual {residual:e})",
                opts.max_outer
            ));
            return nonlinear_result(
                g, alpha, theta, build(alpha, theta)?, h_inf, rho_star, lambda2, false, reasons, used,
            );
        }

        // Rate: smallest α in the bracket whose linearized 1⊥ rate reaches ρ*.
        let rate_at = |a: f64| -> Result<f64> {
            let params = build(a, theta)?;
            let h = equilibrium(&params)?;
            linearized_perp_rate(&params, g, &h)
        };
        let a_lo = ALPHA_BRACKET.0 * rho_star / lambda2;
        let a_hi = ALPHA_BRACKET.1 * rho_star / lambda2;
        let new_alpha = if rate_at(a_lo)? >= rho_star {
            a_lo
        } else if rate_at(a_hi)? < rho_star {
            reasons.push(format!("rate target not reached for alpha up to {a_hi}"));
            a_hi
        } else {
            let (mut l, mut r) = (a_lo, a_hi);
            for _ in 0..ALPHA_BISECTIONS {
                let m = 0.5 * (l + r);
                if rate_at(m)? >= rho_star {
                    r = m;
                } else {
                    l = m;
                }
            }
            r
        };
        let settled = (new_alpha - alpha).abs() <= opts.tol * alpha;
        alpha = new_alpha;
        if settled || budget == 0 {
            let params = build(alpha, theta)?;
            let h = equilibrium(&params)?;
            let mass_ok = (total_mass(&h) - h_target).abs() <= mass_tol;
            if !settled {
                reasons.push("alpha did not settle within the outer budget".into());
            }
            let feasible = settled && mass_ok && reasons.is_empty();
            return nonlinear_result(g, alpha, theta, params, h, rho_star, lambda2, feasible, reasons, used);
        }
        used += 1;
        budget -= 1;
    }
}

/// `θ ψ_base`, re-anchored at the targets' baseline.
fn rebase(base: &DissipationPotential, theta: f64, h_star: &[f64]) -> Result<DissipationPotential> {
    Ok(match base {
        DissipationPotential::Quadratic(q) => DissipationPotential::Quadratic(QuadraticPotential::new(
            q.gamma().iter().map(|g| g * theta).collect(),
            h_star.to_vec(),
        )?),
        DissipationPotential::LogCosh(l) => crate::potential::LogCoshPotential::new(
            l.mu() * theta,
            l.weight() * theta,
            h_star.to_vec(),
        )?
        .into(),
        DissipationPotential::Absent { .. } => {
            return Err(Error::InvalidArgument("cannot calibrate without dissipation".into()))
        }
    })
}

#[allow(clippy::too_many_arguments)]
fn nonlinear_result(
    g: &Graph,
    alpha: f64,
    theta: f64,
    params: ModelParams,
    h_inf: Vec<f64>,
    rho_star: f64,
    lambda2: f64,
    feasible: bool,
    reasons: Vec<String>,
    outer_iterations: usize,
) -> Result<CalibrationResult> {
    let gamma_diag = params.potential.hessian_diag(&h_inf);
    let predicted_rate = linearized_perp_rate(&params, g, &h_inf)?;
    let mu = params.mu();
    let rate_bound = mu.min(alpha * lambda2);
    let gamma_bar = gamma_diag.iter().sum::<f64>() / gamma_diag.len() as f64;
    Ok(CalibrationResult {
        alpha,
        gamma_diag,
        h_inf,
        predicted_rate,
        rate_bound,
        rho_star,
        gamma_bar,
        lambda2,
        feasible,
        full_space_rate_met: rate_bound >= rho_star * (1.0 - 1e-12),
        reasons,
        theta: Some(theta),
        outer_iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathRow {
    pub n: usize,
    pub lambda2: f64,
    pub rate: f64,
    pub meets_target: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpanderRow {
    pub n: usize,
    pub degree: usize,
    pub lambda2: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonSynonymyReport {
    pub alpha: f64,
    pub rho_star: f64,
    pub paths: Vec<PathRow>,
    /// Smallest `n` with `α λ₂(P_n) < ρ*`.
    pub first_violation: Option<usize>,
    /// When no violation is found: `n` at which `α π²/n² = ρ*`.
    pub extrapolated_violation: Option<f64>,
    pub expanders: Vec<ExpanderRow>,
}

pub const EXPANDER_SIZES: [usize; 3] = [50, 100, 200];
pub const EXPANDER_DEGREE: usize = 4;

/// Sweeps `P_3..=P_{n_max}` and random 4-regular graphs at a fixed `α`.
pub fn nonsynonymy_report(alpha: f64, rho_star: f64, n_max: usize, seed: u64) -> Result<NonSynonymyReport> {
    if !(alpha > 0.0 && rho_star > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha and rho* must be positive, got {alpha}, {rho_star}"
        )));
    }
    if n_max < 3 {
        return Err(Error::InvalidArgument(format!("n_max must be at least 3, got {n_max}")));
    }
    let paths: Vec<PathRow> = (3..=n_max)
        .into_par_iter()
        .map(|n| {
            let lambda2 = GraphFamily::Path { n }.generate()?.spectral_summary()?.lambda2;
            let rate = alpha * lambda2;
            Ok(PathRow {
                n,
                lambda2,
                rate,
                meets_target: rate >= rho_star,
            })
        })
        .collect::<Result<_>>()?;
    let first_violation = paths.iter().find(|r| !r.meets_target).map(|r| r.n);
    let extrapolated_violation =
        first_violation.is_none().then(|| std::f64::consts::PI * (alpha / rho_star).sqrt());
    let expanders = EXPANDER_SIZES
        .par_iter()
        .map(|&n| {
            let g = GraphFamily::RandomRegular {
                n,
                degree: EXPANDER_DEGREE,
                seed: seed.wrapping_add(n as u64),
            }
            .generate()?;
            let lambda2 = g.spectral_summary()?.lambda2;
            Ok(ExpanderRow {
                n,
                degree: EXPANDER_DEGREE,
                lambda2,
                rate: alpha * lambda2,
            })
        })
        .collect::<Result<_>>()?;
    Ok(NonSynonymyReport {
        alpha,
        rho_star,
        paths,
        first_violation,
        extrapolated_violation,
        expanders,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanField {
    pub h_inf: Vec<f64>,
    /// `min{γ_min, α w N}`.
    pub slow_mode: f64,
}

/// Equilibrium on `K_N` with uniform weight `w`, using `L = w(NI - 11ᵀ)`.
///
/// `(αwN I + Γ) h - αw (1ᵀh) 1 = s + Γh*` is solved in closed form by
/// Sherman–Morrison.
pub fn kn_meanfield(
    n: usize,
    w: f64,
    alpha: f64,
    gamma_diag: &[f64],
    h_star: &[f64],
    s_inf: &[f64],
) -> Result<MeanField> {
    if n < 2 || !(w > 0.0) || !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "mean-field needs N >= 2, w > 0, alpha > 0 (got {n}, {w}, {alpha})"
        )));
    }
    for len in [gamma_diag.len(), h_star.len(), s_inf.len()] {
        check_dim(n, len)?;
    }
    if gamma_diag.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::InvalidArgument("gamma entries must be positive".into()));
    }
    let aw = alpha * w;
    let d: Vec<f64> = gamma_diag.iter().map(|g| aw * n as f64 + g).collect();
    let b: Vec<f64> = (0..n).map(|i| s_inf[i] + gamma_diag[i] * h_star[i]).collect();
    let sum_b_over_d: f64 = b.iter().zip(&d).map(|(bi, di)| bi / di).sum();
    let sum_inv_d: f64 = d.iter().map(|di| 1.0 / di).sum();
    let mass = sum_b_over_d / (1.0 - aw * sum_inv_d);
    let h_inf = (0..n).map(|i| (b[i] + aw * mass) / d[i]).collect();
    let gamma_min = gamma_diag.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(MeanField {
        h_inf,
        slow_mode: gamma_min.min(aw * n as f64),
    })
}

//! The drift `F(h) = αLh + α_pΔ_p(h) + ∇ψ(h)`, its energy, and the Newton
//! machinery behind equilibria and resolvents.

use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::graph::{check_p, Graph};
use crate::linalg::{dist2, norm2, SpdSystem};
use crate::potential::{DissipationPotential, QuadraticPotential};

/// Relative tolerance of the inner SPD solves.
pub const LINEAR_SOLVE_TOL: f64 = 1e-12;

const MAX_BACKTRACKS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub alpha_p: f64,
    pub p: f64,
    pub potential: DissipationPotential,
}

impl ModelParams {
    pub fn new(alpha: f64, alpha_p: f64, p: f64, potential: DissipationPotential) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
        }
        if !(alpha_p >= 0.0 && alpha_p.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "alpha_p must be nonnegative, got {alpha_p}"
            )));
        }
        check_p(p)?;
        Ok(Self {
            alpha,
            alpha_p,
            p,
            potential,
        })
    }

    /// `α L + Γ` with quadratic ψ and no p-term.
    pub fn linear_quadratic(alpha: f64, gamma: Vec<f64>, h_star: Vec<f64>) -> Result<Self> {
        Self::new(alpha, 0.0, 2.0, QuadraticPotential::new(gamma, h_star)?.into())
    }

    pub fn dim(&self) -> usize {
        self.potential.dim()
    }

    pub fn mu(&self) -> f64 {
        self.potential.modulus()
    }

    /// True when `αL + α_pΔ_p` is linear (no p-term, or p = 2).
    pub fn graph_part_is_linear(&self) -> bool {
        self.alpha_p == 0.0 || self.p == 2.0
    }

    /// Coefficient of `L` once a linear p-term is folded in.
    fn linear_coefficient(&self) -> f64 {
        if self.p == 2.0 {
            self.alpha + self.alpha_p
        } else {
            self.alpha
        }
    }

    fn check(&self, g: &Graph, h: &[f64]) -> Result<()> {
        check_dim(g.node_count(), self.dim())?;
        check_dim(g.node_count(), h.len())
    }

    /// `out = αLh + α_pΔ_p(h)`, accumulated in one pass over the edges.
    pub(crate) fn graph_drift_into(&self, g: &Graph, h: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let (a, ap, p) = (self.alpha, self.alpha_p, self.p);
        let has_p = ap != 0.0;
        for e in g.edges() {
            let d = h[e.i] - h[e.j];
            let mut f = a * d;
            if has_p {
                f += ap * d * d.abs().powf(p - 2.0);
            }
            let f = e.w * f;
            out[e.i] += f;
            out[e.j] -= f;
        }
    }

    pub(crate) fn drift_into(&self, g: &Graph, h: &[f64], out: &mut [f64]) {
        self.graph_drift_into(g, h, out);
        self.potential.add_gradient(h, 1.0, out);
    }

    /// Per-edge coefficient of the Jacobian of `αL + α_pΔ_p` at `h`.
    pub(crate) fn jacobian_edge_coeffs(&self, g: &Graph, h: &[f64], scale: f64) -> Vec<f64> {
        g.edges()
            .iter()
            .map(|e| {
                let mut c = self.alpha;
                if self.alpha_p != 0.0 {
                    let d = (h[e.i] - h[e.j]).abs();
                    c += self.alpha_p * (self.p - 1.0) * d.powf(self.p - 2.0);
                }
                scale * e.w * c
            })
            .collect()
    }
}

pub fn drift(params: &ModelParams, g: &Graph, h: &[f64]) -> Result<Vec<f64>> {
    params.check(g, h)?;
    let mut out = vec![0.0; h.len()];
    params.drift_into(g, h, &mut out);
    Ok(out)
}

/// `E(h) = (α/2) hᵀLh + (α_p/p) Σ W|h_i - h_j|^p + ψ(h)`; its gradient is the drift.
pub fn energy(params: &ModelParams, g: &Graph, h: &[f64]) -> Result<f64> {
    params.check(g, h)?;
    Ok(energy_unchecked(params, g, h))
}

pub(crate) fn energy_unchecked(params: &ModelParams, g: &Graph, h: &[f64]) -> f64 {
    let quad = g.dirichlet_energy_unchecked(h, 2.0);
    let mut e = 0.5 * params.alpha * quad;
    if params.alpha_p != 0.0 {
        let pterm = if params.p == 2.0 {
            quad
        } else {
            g.dirichlet_energy_unchecked(h, params.p)
        };
        e += params.alpha_p / params.p * pterm;
    }
    e + params.potential.value_unchecked(h)
}

pub fn total_mass(h: &[f64]) -> f64 {
    h.iter().sum()
}

/// Jacobian of F at `h`: `αL + α_p D_p(h) + ∇²ψ(h)`.
pub fn drift_jacobian<'g>(params: &ModelParams, g: &'g Graph, h: &[f64]) -> Result<SpdSystem<'g>> {
    params.check(g, h)?;
    let coeffs = params.jacobian_edge_coeffs(g, h, 1.0);
    Ok(SpdSystem::new(g, coeffs, params.potential.hessian_diag(h)))
}

/// The monotone system `shift·x + scale·G(x) = rhs`, where `G` is the graph
/// part of the drift plus, optionally, `∇ψ`.
///
/// Equilibria use `shift = 0, scale = 1` with ψ; resolvents use `shift = 1,
/// scale = η`.
pub(crate) struct MonotoneSystem<'a> {
    pub params: &'a ModelParams,
    pub graph: &'a Graph,
    pub shift: f64,
    pub scale: f64,
    pub include_psi: bool,
}

impl MonotoneSystem<'_> {
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        self.params.graph_drift_into(self.graph, x, out);
        if self.include_psi {
            self.params.potential.add_gradient(x, 1.0, out);
        }
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.shift * xi + self.scale * *o;
        }
    }

    fn residual(&self, x: &[f64], rhs: &[f64], out: &mut [f64]) -> f64 {
        self.eval_into(x, out);
        for (o, r) in out.iter_mut().zip(rhs) {
            *o -= r;
        }
        norm2(out)
    }

    fn jacobian(&self, x: &[f64]) -> SpdSystem<'_> {
        let coeffs = self.params.jacobian_edge_coeffs(self.graph, x, self.scale);
        let mut diag = if self.include_psi {
            self.params.potential.hessian_diag(x)
        } else {
            vec![0.0; x.len()]
        };
        for d in diag.iter_mut() {
            *d = self.shift + self.scale * *d;
        }
        SpdSystem::new(self.graph, coeffs, diag)
    }

    /// Closed-form path: the system is linear when the graph part is linear
    /// and ψ is quadratic or omitted.
    fn linear_solution(&self, rhs: &[f64]) -> Option<Result<Vec<f64>>> {
        if !self.params.graph_part_is_linear() {
            return None;
        }
        let n = rhs.len();
        let mut diag = vec![self.shift; n];
        let mut b = rhs.to_vec();
        if self.include_psi {
            match &self.params.potential {
                DissipationPotential::Quadratic(q) => {
                    for i in 0..n {
                        diag[i] += self.scale * q.gamma()[i];
                        b[i] += self.scale * q.gamma()[i] * q.h_star()[i];
                    }
                }
                DissipationPotential::Absent { .. } => {}
                DissipationPotential::LogCosh(_) => return None,
            }
        }
        let c = self.scale * self.params.linear_coefficient();
        let coeffs = self.graph.edges().iter().map(|e| c * e.w).collect();
        Some(SpdSystem::new(self.graph, coeffs, diag).solve(&b, LINEAR_SOLVE_TOL))
    }

    /// Damped Newton from `x0` until `‖residual‖ ≤ abs_tol`.
    pub fn solve(&self, rhs: &[f64], x0: &[f64], abs_tol: f64, max_iter: usize) -> Result<Vec<f64>> {
        if let Some(sol) = self.linear_solution(rhs) {
            return sol;
        }
        let n = rhs.len();
        let mut x = x0.to_vec();
        let mut r = vec![0.0; n];
        let mut trial_r = vec![0.0; n];
        let mut res = self.residual(&x, rhs, &mut r);
        for _ in 0..max_iter {
            if res <= abs_tol {
                return Ok(x);
            }
            let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
            let step = self.jacobian(&x).solve(&neg_r, LINEAR_SOLVE_TOL)?;
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..MAX_BACKTRACKS {
                let trial: Vec<f64> = x.iter().zip(&step).map(|(xi, si)| xi + t * si).collect();
                let trial_res = self.residual(&trial, rhs, &mut trial_r);
                if trial_res < res {
                    x = trial;
                    res = trial_res;
                    std::mem::swap(&mut r, &mut trial_r);
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if res <= abs_tol {
            Ok(x)
        } else {
            Err(Error::NonConvergence {
                solver: "damped Newton",
                iterations: max_iter,
                residual: res,
            })
        }
    }
}

/// Solves `F(h) = s_inf` to `‖F(h) - s_inf‖ ≤ tol (1 + ‖s_inf‖)`, starting from `h*`.
pub fn solve_equilibrium(
    params: &ModelParams,
    g: &Graph,
    s_inf: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let h0 = params.potential.h_star();
    solve_equilibrium_from(params, g, s_inf, &h0, tol, max_iter)
}

/// [`solve_equilibrium`] with an explicit Newton starting point.
pub fn solve_equilibrium_from(
    params: &ModelParams,
    g: &Graph,
    s_inf: &[f64],
    h0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    params.check(g, s_inf)?;
    check_dim(s_inf.len(), h0.len())?;
    if params.mu() <= 0.0 {
        return Err(Error::InvalidArgument(
            "equilibrium requires a strongly convex potential (mu > 0)".into(),
        ));
    }
    let sys = MonotoneSystem {
        params,
        graph: g,
        shift: 0.0,
        scale: 1.0,
        include_psi: true,
    };
    sys.solve(s_inf, h0, tol * (1.0 + norm2(s_inf)), max_iter)
}

/// Both sides of the Lipschitz sensitivity bound `‖h*(s1) - h*(s2)‖ ≤ ‖s1 - s2‖ / μ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sensitivity {
    pub lhs: f64,
    pub rhs: f64,
}

impl Sensitivity {
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs <= self.rhs + slack
    }
}

pub fn sensitivity_check(params: &ModelParams, g: &Graph, s1: &[f64], s2: &[f64]) -> Result<Sensitivity> {
    let h1 = solve_equilibrium(params, g, s1, 1e-13, 100)?;
    let h2 = solve_equilibrium(params, g, s2, 1e-13, 100)?;
    Ok(Sensitivity {
        lhs: dist2(&h1, &h2),
        rhs: dist2(s1, s2) / params.mu(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphFamily;
    use crate::potential::LogCoshPotential;

    fn p3() -> Graph {
        GraphFamily::Path { n: 3 }.generate().unwrap()
    }

    fn lq(alpha: f64, gamma: f64, n: usize) -> ModelParams {
        ModelParams::linear_quadratic(alpha, vec![gamma; n], vec![0.0; n]).unwrap()
    }

    #[test]
    fn drift_hand_value() {
        let f = drift(&lq(1.0, 0.1, 3), &p3(), &[1.0, 1.0, 1.0]).unwrap();
        for v in f {
            assert!((v - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn energy_hand_values() {
        let g = p3();
        assert!((energy(&lq(1.0, 0.1, 3), &g, &[1.0, 0.0, -1.0]).unwrap() - 1.1).abs() < 1e-14);
        let anchored =
            ModelParams::linear_quadratic(1.0, vec![0.1; 3], vec![2.0; 3]).unwrap();
        assert_eq!(energy(&anchored, &g, &[2.0; 3]).unwrap(), 0.0);
    }

    #[test]
    fn energy_gradient_is_drift() {
        let g = GraphFamily::Cycle { n: 6 }.generate().unwrap();
        let pot = LogCoshPotential::new(0.2, 1.0, vec![0.1; 6]).unwrap();
        let params = ModelParams::new(0.7, 0.5, 3.0, pot.into()).unwrap();
        let h = [0.3, -1.2, 2.0, 0.1, 0.7, -0.4];
        let f = drift(&params, &g, &h).unwrap();
        let mut x = h.to_vec();
        for i in 0..6 {
            let step = 1e-6;
            x[i] = h[i] + step;
            let up = energy(&params, &g, &x).unwrap();
            x[i] = h[i] - step;
            let down = energy(&params, &g, &x).unwrap();
            x[i] = h[i];
            assert!(((up - down) / (2.0 * step) - f[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn mass_examples() {
        assert_eq!(total_mass(&[0.0; 4]), 0.0);
        assert_eq!(total_mass(&[1.0, 2.0, 3.0]), 6.0);
    }

    #[test]
    fn uniform_source_gives_uniform_equilibrium() {
        let h = solve_equilibrium(&lq(1.0, 0.1, 3), &p3(), &[1.0 / 3.0; 3], 1e-12, 50).unwrap();
        for v in &h {
            assert!((v - 10.0 / 3.0).abs() < 1e-10);
        }
    }

    #[test]
    fn nonlinear_equilibrium_matches_picard_iteration() {
        let g = p3();
        let params = ModelParams::new(
            1.0,
            0.5,
            3.0,
            QuadraticPotential::uniform(0.1, vec![0.0; 3]).unwrap().into(),
        )
        .unwrap();
        let s = [0.4, -0.3, 0.15];
        let h = solve_equilibrium(&params, &g, &s, 1e-12, 100).unwrap();
        let mut f = drift(&params, &g, &h).unwrap();
        assert!(dist2(&f, &s) <= 1e-12 * (1.0 + norm2(&s)));

        let mut x = vec![0.0; 3];
        for _ in 0..2_000_000 {
            f = drift(&params, &g, &x).unwrap();
            let r: Vec<f64> = f.iter().zip(&s).map(|(a, b)| a - b).collect();
            if norm2(&r) < 1e-10 {
                break;
            }
            for i in 0..3 {
                x[i] -= 0.01 * r[i];
            }
        }
        assert!(dist2(&x, &h) < 1e-8);
    }

    #[test]
    fn newton_starts_agree() {
        let g = GraphFamily::Karate.generate().unwrap();
        let n = g.node_count();
        let pot = LogCoshPotential::new(0.1, 1.0, vec![0.0; n]).unwrap();
        let params = ModelParams::new(1.0, 0.5, 3.5, pot.into()).unwrap();
        let s: Vec<f64> = (0..n).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        let a = solve_equilibrium(&params, &g, &s, 1e-12, 100).unwrap();
        let start: Vec<f64> = (0..n).map(|i| 5.0 * ((i * 3) % 5) as f64).collect();
        let b = solve_equilibrium_from(&params, &g, &s, &start, 1e-12, 100).unwrap();
        assert!(dist2(&a, &b) < 1e-9);
    }

    #[test]
    fn equilibrium_needs_dissipation() {
        let params = ModelParams::new(1.0, 0.0, 2.0, DissipationPotential::Absent { n: 3 }).unwrap();
        assert!(matches!(
            solve_equilibrium(&params, &p3(), &[1.0; 3], 1e-10, 10),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn sensitivity_examples() {
        let g = p3();
        let params = lq(1.0, 0.1, 3);
        let same = sensitivity_check(&params, &g, &[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!(same.lhs < 1e-12);
        let s = sensitivity_check(&params, &g, &[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]).unwrap();
        assert!(s.holds(1e-8));
    }

    #[test]
    fn parameter_validation() {
        let pot: DissipationPotential = QuadraticPotential::uniform(0.1, vec![0.0; 3]).unwrap().into();
        assert!(ModelParams::new(0.0, 0.0, 2.0, pot.clone()).is_err());
        assert!(ModelParams::new(1.0, -0.1, 2.0, pot.clone()).is_err());
        assert!(ModelParams::new(1.0, 0.1, 1.5, pot.clone()).is_err());
        let params = ModelParams::new(1.0, 0.0, 2.0, pot).unwrap();
        assert!(matches!(
            drift(&params, &GraphFamily::Path { n: 4 }.generate().unwrap(), &[0.0; 4]),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}

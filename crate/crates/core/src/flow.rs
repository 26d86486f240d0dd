//! Continuous-time integration of the diffusion flow
//! `dh/dt = -F(h) + s(t)` with an adaptive Dormand–Prince 5(4) pair.
//!
//! The maximum step is capped by a stability estimate
//! `1 / (L_ψ + α λ_max + α_p Ĵ(h))`, where `Ĵ` bounds the p-term Jacobian at
//! the current state by Gershgorin. Steps are clipped so that every sample
//! time (and every noise hold boundary for stochastic sources) is hit exactly.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::graph::Graph;
use crate::linalg::{dist2, perp_norm};
use crate::operators::{energy_unchecked, solve_equilibrium, total_mass, ModelParams};

type SourceFn = Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>;

/// External influx `s(t)`.
#[derive(Clone)]
pub enum SourceSignal {
    Constant(Vec<f64>),
    /// `f(t, out)` writes `s(t)`; `s_inf` is its long-time limit.
    TimeVarying { s_inf: Vec<f64>, f: SourceFn },
    /// `s_inf + ξ`, with `ξ ~ N(0, σ²/N · I)` redrawn every `hold` time units.
    Stochastic {
        s_inf: Vec<f64>,
        sigma2: f64,
        seed: u64,
        hold: f64,
    },
}

impl fmt::Debug for SourceSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(s) => f.debug_tuple("Constant").field(s).finish(),
            Self::TimeVarying { s_inf, .. } => f
                .debug_struct("TimeVarying")
                .field("s_inf", s_inf)
                .finish_non_exhaustive(),
            Self::Stochastic {
                s_inf,
                sigma2,
                seed,
                hold,
            } => f
                .debug_struct("Stochastic")
                .field("s_inf", s_inf)
                .field("sigma2", sigma2)
                .field("seed", seed)
                .field("hold", hold)
                .finish(),
        }
    }
}

impl SourceSignal {
    pub fn time_varying(s_inf: Vec<f64>, f: impl Fn(f64, &mut [f64]) + Send + Sync + 'static) -> Self {
        Self::TimeVarying { s_inf, f: Arc::new(f) }
    }

    pub fn s_inf(&self) -> &[f64] {
        match self {
            Self::Constant(s) => s,
            Self::TimeVarying { s_inf, .. } | Self::Stochastic { s_inf, .. } => s_inf,
        }
    }

    fn validate(&self) -> Result<()> {
        if let Self::Stochastic { sigma2, hold, .. } = self {
            if !(*sigma2 >= 0.0 && sigma2.is_finite()) {
                return Err(Error::InvalidArgument(format!("sigma2 must be >= 0, got {sigma2}")));
            }
            if !(*hold > 0.0 && hold.is_finite()) {
                return Err(Error::InvalidArgument(format!("noise hold must be positive, got {hold}")));
            }
        }
        Ok(())
    }
}

/// Per-run source evaluator. Stochastic noise is generated lazily, hold
/// interval by hold interval, so it only ever moves forward in time.
struct SourceState<'a> {
    signal: &'a SourceSignal,
    current: Vec<f64>,
    hold_index: Option<u64>,
    rng: Option<(ChaCha8Rng, Normal<f64>)>,
}

impl<'a> SourceState<'a> {
    fn new(signal: &'a SourceSignal) -> Result<Self> {
        let n = signal.s_inf().len();
        let rng = match signal {
            SourceSignal::Stochastic { sigma2, seed, .. } => {
                let normal = Normal::new(0.0, (sigma2 / n as f64).sqrt())
                    .map_err(|e| Error::InvalidArgument(e.to_string()))?;
                Some((ChaCha8Rng::seed_from_u64(*seed), normal))
            }
            _ => None,
        };
        Ok(Self {
            signal,
            current: signal.s_inf().to_vec(),
            hold_index: None,
            rng,
        })
    }

    /// Index of the hold interval containing `t`, tolerant of roundoff at boundaries.
    fn index_of(t: f64, hold: f64) -> u64 {
        (t / hold + 1e-9).floor().max(0.0) as u64
    }

    /// Next time the source changes discontinuously after `t`.
    fn next_break(&self, t: f64) -> f64 {
        match self.signal {
            SourceSignal::Stochastic { hold, .. } => (Self::index_of(t, *hold) + 1) as f64 * hold,
            _ => f64::INFINITY,
        }
    }

    /// Must be called with the start time of every step before `eval`.
    fn begin_step(&mut self, t: f64) {
        if let (SourceSignal::Stochastic { s_inf, hold, .. }, Some((rng, normal))) =
            (self.signal, self.rng.as_mut())
        {
            let target = Self::index_of(t, *hold);
            while self.hold_index.is_none_or(|k| k < target) {
                for (c, s) in self.current.iter_mut().zip(s_inf) {
                    *c = s + normal.sample(rng);
                }
                self.hold_index = Some(self.hold_index.map_or(0, |k| k + 1));
            }
        }
    }

    fn eval(&mut self, t: f64) -> &[f64] {
        if let SourceSignal::TimeVarying { f, .. } = self.signal {
            f(t, &mut self.current);
        }
        &self.current
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Observables are recorded every `sample_interval` time units.
    pub sample_interval: f64,
    pub max_steps: usize,
    /// λ_max(L); Gershgorin `2·max degree` when absent.
    pub lambda_max: Option<f64>,
    pub keep_states: bool,
    /// End the run at the first sample with `perp_err` below this value.
    pub stop_when_perp_below: Option<f64>,
    /// Equilibrium used for `err`/`perp_err`; solved from `s_inf` when absent.
    pub reference: Option<Vec<f64>>,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            sample_interval: 0.1,
            max_steps: 50_000_000,
            lambda_max: None,
            keep_states: false,
            stop_when_perp_below: None,
            reference: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    /// `‖h - h_∞‖`; NaN when there is no reference equilibrium.
    pub err: f64,
    /// Component of `h - h_∞` orthogonal to `1` (of `h` itself without a reference).
    pub perp_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub states: Option<Vec<Vec<f64>>>,
    pub reference: Option<Vec<f64>>,
    pub final_state: Vec<f64>,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    /// True when the run ended on `stop_when_perp_below`.
    pub stopped_early: bool,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn series(&self, obs: Observable) -> Vec<f64> {
        self.samples.iter().map(|s| obs.of(s)).collect()
    }
}

/// Scalar observables a decay rate can be fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Observable {
    Err,
    PerpErr,
    /// `u = perp_err²`.
    PerpErrSquared,
}

impl Observable {
    fn of(self, s: &Sample) -> f64 {
        match self {
            Self::Err => s.err,
            Self::PerpErr => s.perp_err,
            Self::PerpErrSquared => s.perp_err * s.perp_err,
        }
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Rhs<'a> {
    params: &'a ModelParams,
    graph: &'a Graph,
}

impl Rhs<'_> {
    fn eval(&self, h: &[f64], s: &[f64], out: &mut [f64]) {
        self.params.drift_into(self.graph, h, out);
        for (o, si) in out.iter_mut().zip(s) {
            *o = si - *o;
        }
    }

    /// Gershgorin bound on the p-term Jacobian: `2 max_i Σ_j W_ij (p-1)|h_i - h_j|^{p-2}`.
    fn p_stiffness(&self, h: &[f64], scratch: &mut [f64]) -> f64 {
        let p = self.params.p;
        scratch.iter_mut().for_each(|v| *v = 0.0);
        for e in self.graph.edges() {
            let c = e.w * (p - 1.0) * (h[e.i] - h[e.j]).abs().powf(p - 2.0);
            scratch[e.i] += c;
            scratch[e.j] += c;
        }
        2.0 * scratch.iter().copied().fold(0.0, f64::max)
    }
}

fn observe(params: &ModelParams, g: &Graph, h: &[f64], t: f64, reference: Option<&[f64]>) -> Sample {
    let (err, perp_err) = match reference {
        Some(r) => {
            let e: Vec<f64> = h.iter().zip(r).map(|(a, b)| a - b).collect();
            (dist2(h, r), perp_norm(&e))
        }
        None => (f64::NAN, perp_norm(h)),
    };
    Sample {
        t,
        mass: total_mass(h),
        energy: energy_unchecked(params, g, h),
        err,
        perp_err,
    }
}

/// Integrates the flow from `h0` over `[0, t_end]`.
pub fn integrate(
    params: &ModelParams,
    g: &Graph,
    src: &SourceSignal,
    h0: &[f64],
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    let n = g.node_count();
    check_dim(n, h0.len())?;
    check_dim(n, params.dim())?;
    check_dim(n, src.s_inf().len())?;
    src.validate()?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!("t_end must be positive, got {t_end}")));
    }
    if !(opts.sample_interval > 0.0) {
        return Err(Error::InvalidArgument("sample interval must be positive".into()));
    }

    let reference = match (&opts.reference, params.mu() > 0.0) {
        (Some(r), _) => {
            check_dim(n, r.len())?;
            Some(r.clone())
        }
        (None, true) => Some(solve_equilibrium(params, g, src.s_inf(), 1e-13, 200)?),
        (None, false) => None,
    };

    let rhs = Rhs { params, graph: g };
    let lambda_max = opts.lambda_max.unwrap_or(2.0 * g.max_degree());
    let linear_stiffness = params.potential.lipschitz().unwrap_or(0.0) + params.alpha * lambda_max;
    let use_p_stiffness = params.alpha_p != 0.0;

    let mut source = SourceState::new(src)?;
    let mut h = h0.to_vec();
    let mut t = 0.0;
    let mut samples = vec![observe(params, g, &h, t, reference.as_deref())];
    let mut states = opts.keep_states.then(|| vec![h.clone()]);
    let mut stopped_early = false;
    let stop_check = |s: &Sample| opts.stop_when_perp_below.is_some_and(|thr| s.perp_err < thr);
    if stop_check(&samples[0]) {
        stopped_early = true;
    }

    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut next_sample_idx: u64 = 1;
    let mut step: Option<f64> = None;
    let mut accepted = 0usize;
    let mut rejected = 0usize;

    while !stopped_early && t < t_end {
        if accepted + rejected >= opts.max_steps {
            return Err(Error::Integration {
                t,
                step: step.unwrap_or(0.0),
                detail: format!("step budget of {} exhausted", opts.max_steps),
            });
        }
        let next_sample = (next_sample_idx as f64 * opts.sample_interval).min(t_end);
        let boundary = next_sample.min(source.next_break(t));

        let mut stiffness = linear_stiffness;
        if use_p_stiffness {
            stiffness += params.alpha_p * rhs.p_stiffness(&h, &mut scratch);
        }
        let cap = if stiffness > 0.0 { 1.0 / stiffness } else { f64::INFINITY };
        let remaining = boundary - t;
        let mut dt = step.unwrap_or(cap.min(opts.sample_interval)).min(cap);
        let hits_boundary = dt >= remaining * (1.0 - 1e-12);
        if hits_boundary {
            dt = remaining;
        }
        if dt <= 1e-14 * t.abs().max(1.0) {
            return Err(Error::Integration {
                t,
                step: dt,
                detail: "step size underflow".into(),
            });
        }

        source.begin_step(t);
        rhs.eval(&h, source.eval(t), &mut k[0]);
        for st in 1..7 {
            for i in 0..n {
                let mut acc = h[i];
                for (j, kj) in k.iter().enumerate().take(st) {
                    acc += dt * A[st][j] * kj[i];
                }
                if st == 6 {
                    y_new[i] = acc;
                } else {
                    stage[i] = acc;
                }
            }
            let input = if st == 6 { &y_new } else { &stage };
            rhs.eval(input, source.eval(t + C[st] * dt), &mut k[st]);
        }

        let mut err_sq = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += E[j] * kj[i];
            }
            let sc = opts.atol + opts.rtol * h[i].abs().max(y_new[i].abs());
            let r = dt * e / sc;
            err_sq += r * r;
        }
        let err = (err_sq / n as f64).sqrt();
        if !err.is_finite() {
            rejected += 1;
            step = Some(dt * 0.1);
            continue;
        }

        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        if err <= 1.0 {
            accepted += 1;
            std::mem::swap(&mut h, &mut y_new);
            t = if hits_boundary { boundary } else { t + dt };
            // Keep the controller's proposal, not the clipped step.
            if !hits_boundary || step.is_none() {
                step = Some(dt * factor);
            }
            if hits_boundary && boundary == next_sample {
                let s = observe(params, g, &h, t, reference.as_deref());
                stopped_early = stop_check(&s);
                samples.push(s);
                if let Some(st) = states.as_mut() {
                    st.push(h.clone());
                }
                next_sample_idx += 1;
            }
        } else {
            rejected += 1;
            step = Some(dt * factor);
        }
    }

    Ok(Trajectory {
        samples,
        states,
        reference,
        final_state: h,
        steps_accepted: accepted,
        steps_rejected: rejected,
        stopped_early,
    })
}

/// Negated least-squares slope of `ln y` against `t`.
pub fn fit_log_slope(ts: &[f64], ys: &[f64]) -> Result<f64> {
    if ts.len() != ys.len() || ts.len() < 2 {
        return Err(Error::Measurement("need at least two points to fit a rate".into()));
    }
    if let Some(y) = ys.iter().find(|y| !(**y > 0.0 && y.is_finite())) {
        return Err(Error::Measurement(format!("non-positive or non-finite value {y} in window")));
    }
    let m = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / m;
    let logs: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let lm = logs.iter().sum::<f64>() / m;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (t, l) in ts.iter().zip(&logs) {
        sxy += (t - tm) * (l - lm);
        sxx += (t - tm) * (t - tm);
    }
    if sxx == 0.0 {
        return Err(Error::Measurement("window has no time spread".into()));
    }
    Ok(-sxy / sxx)
}

/// Decay rate of `obs` fitted over samples with `t ∈ [t1, t2]`.
pub fn measure_decay_rate(traj: &Trajectory, window: (f64, f64), obs: Observable) -> Result<f64> {
    let (t1, t2) = window;
    let (ts, ys): (Vec<f64>, Vec<f64>) = traj
        .samples
        .iter()
        .filter(|s| s.t >= t1 && s.t <= t2)
        .map(|s| (s.t, obs.of(s)))
        .unzip();
    fit_log_slope(&ts, &ys)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Crossing {
    Reached { time: f64 },
    NotReached { final_value: f64, t_end: f64 },
}

impl Crossing {
    pub fn time(&self) -> Option<f64> {
        match self {
            Self::Reached { time } => Some(*time),
            Self::NotReached { .. } => None,
        }
    }
}

/// First time `obs` drops below `threshold`, interpolated linearly in `ln obs`
/// between the bracketing samples.
pub fn first_crossing(traj: &Trajectory, threshold: f64, obs: Observable) -> Crossing {
    let first = &traj.samples[0];
    if obs.of(first) < threshold {
        return Crossing::Reached { time: first.t };
    }
    for w in traj.samples.windows(2) {
        let (a, b) = (obs.of(&w[0]), obs.of(&w[1]));
        if b < threshold {
            let time = if a > 0.0 && b > 0.0 && threshold > 0.0 {
                let frac = (a.ln() - threshold.ln()) / (a.ln() - b.ln());
                w[0].t + frac * (w[1].t - w[0].t)
            } else {
                w[1].t
            };
            return Crossing::Reached { time };
        }
    }
    let last = traj.samples.last().expect("trajectory has an initial sample");
    Crossing::NotReached {
        final_value: obs.of(last),
        t_end: last.t,
    }
}

/// Time for `‖e_⊥‖` to fall below `threshold` under a constant source.
pub fn transient_time_to_threshold(
    params: &ModelParams,
    g: &Graph,
    src: &SourceSignal,
    h0: &[f64],
    threshold: f64,
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<Crossing> {
    let opts = IntegratorOptions {
        stop_when_perp_below: Some(threshold),
        ..opts.clone()
    };
    let traj = integrate(params, g, src, h0, t_end, &opts)?;
    Ok(first_crossing(&traj, threshold, Observable::PerpErr))
}

/// Constants of the two-regime decay of `u = ‖e_⊥‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoRegimeConstants {
    pub kappa2: f64,
    pub kappa_p: f64,
    pub u_th: f64,
    pub p: f64,
}

impl TwoRegimeConstants {
    /// Upper bound on the time for `u` to fall from `u0` to `u_th`; zero when `u0 ≤ u_th`.
    pub fn t_bound(&self, u0: f64) -> f64 {
        if u0 <= self.u_th {
            return 0.0;
        }
        let q = (self.p - 2.0) / 2.0;
        (self.u_th.powf(-q) - u0.powf(-q)) / (self.kappa_p * (self.p - 2.0))
    }
}

pub fn two_regime_constants(params: &ModelParams, g: &Graph, cp_value: f64) -> Result<TwoRegimeConstants> {
    let lambda2 = g.spectral_summary()?.lambda2;
    two_regime_constants_with(params, g.node_count(), lambda2, cp_value)
}

/// [`two_regime_constants`] with a precomputed λ₂.
pub fn two_regime_constants_with(
    params: &ModelParams,
    n: usize,
    lambda2: f64,
    cp_value: f64,
) -> Result<TwoRegimeConstants> {
    let p = params.p;
    if p <= 2.0 {
        return Err(Error::InvalidArgument(format!("two-regime constants need p > 2, got {p}")));
    }
    if params.alpha_p <= 0.0 {
        return Err(Error::InvalidArgument("two-regime constants need alpha_p > 0".into()));
    }
    if !(cp_value > 0.0) {
        return Err(Error::InvalidArgument(format!("C_p must be positive, got {cp_value}")));
    }
    let kappa2 = params.alpha * lambda2;
    let kappa_p =
        params.alpha_p / p * 2f64.powf(2.0 - p) * cp_value * (n as f64).powf(1.0 - p / 2.0);
    let u_th = (kappa2 / kappa_p).powf(2.0 / (p - 2.0));
    Ok(TwoRegimeConstants {
        kappa2,
        kappa_p,
        u_th,
        p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphFamily;
    use crate::potential::{DissipationPotential, QuadraticPotential};

    fn synthetic(f: impl Fn(f64) -> f64) -> Trajectory {
        let samples = (0..=50)
            .map(|k| {
                let t = k as f64 * 0.1;
                Sample {
                    t,
                    mass: 0.0,
                    energy: 0.0,
                    err: f(t),
                    perp_err: f(t),
                }
            })
            .collect();
        Trajectory {
            samples,
            states: None,
            reference: None,
            final_state: vec![],
            steps_accepted: 0,
            steps_rejected: 0,
            stopped_early: false,
        }
    }

    #[test]
    fn exact_exponential_rate() {
        let traj = synthetic(|t| (-2.0 * t).exp());
        let r = measure_decay_rate(&traj, (0.0, 5.0), Observable::Err).unwrap();
        assert!((r - 2.0).abs() < 1e-6);
    }

    #[test]
    fn rate_rejects_nonpositive_values() {
        let traj = synthetic(|t| 1.0 - t);
        assert!(matches!(
            measure_decay_rate(&traj, (0.0, 5.0), Observable::Err),
            Err(Error::Measurement(_))
        ));
    }

    #[test]
    fn crossing_interpolates_in_log() {
        let traj = synthetic(|t| (-t).exp());
        let c = first_crossing(&traj, (-1.234f64).exp(), Observable::PerpErr);
        assert!((c.time().unwrap() - 1.234).abs() < 1e-12);
        assert_eq!(first_crossing(&traj, 2.0, Observable::PerpErr).time(), Some(0.0));
        assert!(matches!(
            first_crossing(&traj, 1e-9, Observable::PerpErr),
            Crossing::NotReached { .. }
        ));
    }

    #[test]
    fn two_regime_hand_values() {
        let g = GraphFamily::Path { n: 3 }.generate().unwrap();
        let pot: DissipationPotential = QuadraticPotential::uniform(0.1, vec![0.0; 3]).unwrap().into();
        let params = ModelParams::new(1.0, 0.5, 3.0, pot).unwrap();
        let c = two_regime_constants(&params, &g, 2.0 * 3f64.sqrt()).unwrap();
        assert!((c.kappa2 - 1.0).abs() < 1e-12);
        assert!((c.kappa_p - 1.0 / 6.0).abs() < 1e-12);
        assert!((c.u_th - 36.0).abs() < 1e-9);
        assert_eq!(c.t_bound(10.0), 0.0);
        // p = 3: t_bound(u0) = 2 (u_th^{-1/2} - u0^{-1/2}) / (2 κ_p)
        let expected = (1.0 / 6.0 - 1.0 / 10.0) / (1.0 / 6.0);
        assert!((c.t_bound(100.0) - expected).abs() < 1e-12);
        let p2 = ModelParams { p: 2.0, ..params };
        assert!(two_regime_constants(&p2, &g, 1.0).is_err());
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let g = GraphFamily::Cycle { n: 8 }.generate().unwrap();
        let params = ModelParams::new(
            1.0,
            0.5,
            3.0,
            QuadraticPotential::uniform(0.2, vec![0.5; 8]).unwrap().into(),
        )
        .unwrap();
        let s: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).sin()).collect();
        let h_inf = solve_equilibrium(&params, &g, &s, 1e-13, 100).unwrap();
        let traj = integrate(
            &params,
            &g,
            &SourceSignal::Constant(s),
            &h_inf,
            10.0,
            &IntegratorOptions::default(),
        )
        .unwrap();
        assert!(traj.samples.iter().all(|s| s.err < 1e-8));
    }

    #[test]
    fn samples_are_on_the_grid() {
        let g = GraphFamily::Path { n: 4 }.generate().unwrap();
        let params = ModelParams::linear_quadratic(1.0, vec![0.3; 4], vec![0.0; 4]).unwrap();
        let opts = IntegratorOptions {
            sample_interval: 0.25,
            keep_states: true,
            ..Default::default()
        };
        let traj = integrate(
            &params,
            &g,
            &SourceSignal::Constant(vec![0.0; 4]),
            &[1.0, -1.0, 2.0, 0.0],
            2.1,
            &opts,
        )
        .unwrap();
        let ts = traj.times();
        assert_eq!(ts.len(), 10);
        assert!((ts[8] - 2.0).abs() < 1e-12);
        assert_eq!(*ts.last().unwrap(), 2.1);
        assert!(ts.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(traj.states.as_ref().unwrap().len(), 10);
    }

    #[test]
    fn linear_flow_matches_matrix_exponential() {
        // Γ = γI commutes with L, so e(t) = e^{-γt} Q e^{-tαΛ} Qᵀ e(0).
        let g = GraphFamily::Path { n: 5 }.generate().unwrap();
        let (alpha, gamma) = (0.8, 0.3);
        let params = ModelParams::linear_quadratic(alpha, vec![gamma; 5], vec![0.0; 5]).unwrap();
        let h0 = [2.0, -1.0, 0.5, 3.0, -0.25];
        let traj = integrate(
            &params,
            &g,
            &SourceSignal::Constant(vec![0.0; 5]),
            &h0,
            3.0,
            &IntegratorOptions::default(),
        )
        .unwrap();
        let eig = nalgebra::SymmetricEigen::new(g.dense_laplacian());
        let t = 3.0;
        let decay = nalgebra::DMatrix::from_diagonal(&eig.eigenvalues.map(|l| (-t * (gamma + alpha * l)).exp()));
        let exact = &eig.eigenvectors * decay * eig.eigenvectors.transpose() * nalgebra::DVector::from_column_slice(&h0);
        assert!(dist2(&traj.final_state, exact.as_slice()) < 1e-7);
    }

    #[test]
    fn stochastic_source_is_reproducible() {
        let g = GraphFamily::Cycle { n: 6 }.generate().unwrap();
        let params = ModelParams::linear_quadratic(1.0, vec![0.5; 6], vec![0.0; 6]).unwrap();
        let src = SourceSignal::Stochastic {
            s_inf: vec![0.1; 6],
            sigma2: 0.05,
            seed: 9,
            hold: 0.1,
        };
        let run = || {
            integrate(&params, &g, &src, &[0.0; 6], 5.0, &IntegratorOptions::default()).unwrap()
        };
        let a = run();
        assert_eq!(a, run());
        let clean = integrate(
            &params,
            &g,
            &SourceSignal::Constant(vec![0.1; 6]),
            &[0.0; 6],
            5.0,
            &IntegratorOptions::default(),
        )
        .unwrap();
        assert!(dist2(&a.final_state, &clean.final_state) > 1e-4);
    }

    #[test]
    fn time_varying_source_is_sampled_at_stage_times() {
        // dh/dt = -γh + cos t with h(0)=0 on a single-edge graph with zero coupling effect.
        let g = GraphFamily::Path { n: 2 }.generate().unwrap();
        let gamma = 0.5;
        let params = ModelParams::linear_quadratic(1.0, vec![gamma; 2], vec![0.0; 2]).unwrap();
        let src = SourceSignal::time_varying(vec![0.0; 2], |t, out| out.iter_mut().for_each(|o| *o = t.cos()));
        let traj = integrate(&params, &g, &src, &[0.0; 2], 4.0, &IntegratorOptions::default()).unwrap();
        let t: f64 = 4.0;
        let exact = (gamma * t.cos() + t.sin() - gamma * (-gamma * t).exp()) / (1.0 + gamma * gamma);
        assert!((traj.final_state[0] - exact).abs() < 1e-7);
    }

    #[test]
    fn rejects_bad_arguments() {
        let g = GraphFamily::Path { n: 3 }.generate().unwrap();
        let params = ModelParams::linear_quadratic(1.0, vec![0.1; 3], vec![0.0; 3]).unwrap();
        let src = SourceSignal::Constant(vec![0.0; 3]);
        let o = IntegratorOptions::default();
        assert!(integrate(&params, &g, &src, &[0.0; 2], 1.0, &o).is_err());
        assert!(integrate(&params, &g, &src, &[0.0; 3], 0.0, &o).is_err());
    }
}

//! Experiment drivers. Each resolves its settings against defaults, runs the
//! library, and returns a [`Table`] with a fixed column schema.

use caldiff::calibrate::{sgps, CalibrationTargets};
use caldiff::flow::{first_crossing, two_regime_constants};
use caldiff::linalg::{dist2, norm2, project_out_mean};
use caldiff::pgap::cp_power_mean_bound;
use caldiff::schemes::{euler_factor, euler_threshold, fb_contraction_factor, DiscreteSource};
use caldiff::{
    cp_lower_bound, estimate_cp, integrate, measure_decay_rate, noise_floor_bound, nonsynonymy_report,
    run_euler, run_forward_backward, solve_equilibrium, stochastic_ensemble, transient_time_to_threshold,
    CpOptions, Crossing, DissipationPotential, Graph, GraphFamily, IntegratorOptions, LogCoshPotential,
    ModelParams, Observable, QuadraticPotential, SourceSignal, StepSchedule,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{Experiment, PotentialChoice, Settings};
use crate::error::CliError;
use crate::report::Table;
use crate::row;

type Result<T> = std::result::Result<T, CliError>;

pub const CP_TABLE_GRAPHS: [&str; 6] = ["path:10", "path:100", "cycle:20", "grid:10x10", "karate", "er:100:0.1:1"];

pub fn run(exp: Experiment, s: &Settings) -> Result<Table> {
    match exp {
        Experiment::CpTable => cp_table(s),
        Experiment::SpeedupTable => speedup_table(s),
        Experiment::NoiseFloorTable => noise_floor_table(s),
        Experiment::SgpsDemo => sgps_demo(s),
        Experiment::SensitivityTable => sensitivity_table(s),
        Experiment::EulerStress => euler_stress(s),
        Experiment::Nonsyn => nonsyn(s),
        Experiment::TwoRegime => two_regime(s),
    }
}

// ---- settings helpers

fn graphs(s: &Settings, defaults: &[&str]) -> Result<Vec<(String, Graph)>> {
    if let Some(path) = &s.graph_file {
        let g = Graph::load(path).map_err(|e| match e {
            caldiff::Error::Io(io) => CliError::Io(format!("reading {}: {io}", path.display())),
            other => CliError::Usage(format!("graph file {}: {other}", path.display())),
        })?;
        return Ok(vec![(path.display().to_string(), g)]);
    }
    let specs: Vec<String> = match &s.graph {
        Some(list) if !list.is_empty() => list.clone(),
        _ => defaults.iter().map(|d| d.to_string()).collect(),
    };
    specs
        .iter()
        .map(|spec| {
            let fam: GraphFamily = spec.parse().map_err(|e| CliError::Usage(format!("graph: {e}")))?;
            Ok((fam.to_string(), fam.generate()?))
        })
        .collect()
}

fn one_graph(s: &Settings, default: &str) -> Result<(String, Graph)> {
    let mut gs = graphs(s, &[default])?;
    if gs.len() != 1 {
        return Err(CliError::Usage(format!("graph: expected one graph, got {}", gs.len())));
    }
    Ok(gs.remove(0))
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("{name} must be positive, got {v}")))
    }
}

fn nonnegative(name: &str, v: f64) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("{name} must be nonnegative, got {v}")))
    }
}

fn count(name: &str, v: usize) -> Result<usize> {
    if v > 0 {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("{name} must be at least 1")))
    }
}

fn list(name: &str, v: &Option<Vec<f64>>, default: &[f64]) -> Result<Vec<f64>> {
    let values = v.clone().filter(|l| !l.is_empty()).unwrap_or_else(|| default.to_vec());
    for &x in &values {
        positive(name, x)?;
    }
    Ok(values)
}

/// Model defaults for one experiment.
struct ModelDefaults {
    alpha: f64,
    alpha_p: f64,
    p: f64,
    gamma: f64,
}

/// Resolved model: parameters plus a JSON record of them.
fn model(s: &Settings, n: usize, p: Option<f64>, d: ModelDefaults) -> Result<(ModelParams, serde_json::Value)> {
    let alpha = nonnegative("alpha", s.alpha.unwrap_or(d.alpha))?;
    let alpha_p = nonnegative("alpha_p", s.alpha_p.unwrap_or(d.alpha_p))?;
    let p = p.unwrap_or(d.p);
    let gamma = positive("gamma", s.gamma.unwrap_or(d.gamma))?;
    let h_star = s.h_star.unwrap_or(0.0);
    let kind = s.potential.unwrap_or(PotentialChoice::Quadratic);
    let weight = nonnegative("weight", s.weight.unwrap_or(1.0))?;
    let potential: DissipationPotential = match kind {
        PotentialChoice::Quadratic => QuadraticPotential::uniform(gamma, vec![h_star; n])?.into(),
        PotentialChoice::Logcosh => LogCoshPotential::new(gamma, weight, vec![h_star; n])?.into(),
    };
    let record = json!({
        "alpha": alpha,
        "alpha_p": alpha_p,
        "p": p,
        "potential": kind,
        "gamma": gamma,
        "weight": if kind == PotentialChoice::Logcosh { Some(weight) } else { None },
        "h_star": h_star,
    });
    Ok((ModelParams::new(alpha, alpha_p, p, potential)?, record))
}

/// Gaussian start on `1⊥` with `‖h⊥‖ = norm`, from stream `run` of the master seed.
fn random_perp_start(n: usize, norm: f64, seed: u64, run: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    let mut h: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    project_out_mean(&mut h);
    let scale = norm / norm2(&h);
    h.iter_mut().for_each(|x| *x *= scale);
    h
}

fn uniform_source(s: &Settings, n: usize, default_total: f64) -> Result<Vec<f64>> {
    let per_node = s.source.unwrap_or(default_total / n as f64);
    if !per_node.is_finite() {
        return Err(CliError::Usage(format!("source must be finite, got {per_node}")));
    }
    Ok(vec![per_node; n])
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var.sqrt())
}

// ---- named tables

pub fn cp_table(s: &Settings) -> Result<Table> {
    let gs = graphs(s, &CP_TABLE_GRAPHS)?;
    let ps = list("p", &s.p, &[3.0])?;
    let opts = CpOptions {
        restarts: count("restarts", s.restarts.unwrap_or(20))?,
        seed: s.seed(),
        ..CpOptions::default()
    };
    let mut t = Table::new(
        "cp-table",
        s.seed(),
        &["graph", "n", "m", "p", "empirical_cp", "lower_bound", "ratio", "power_mean_bound", "bound_holds"],
    );
    for (name, g) in &gs {
        for &p in &ps {
            let est = estimate_cp(g, p, &opts)?;
            let lb = cp_lower_bound(g, p)?;
            let pm = cp_power_mean_bound(g, p)?;
            t.push(row![
                name.as_str(),
                g.node_count(),
                g.edge_count(),
                p,
                est.value,
                lb,
                est.value / lb,
                pm,
                est.value >= lb - 1e-9,
            ]);
        }
    }
    t.params = json!({
        "graphs": gs.iter().map(|(n, _)| n).collect::<Vec<_>>(),
        "p": ps,
        "restarts": opts.restarts,
        "max_iter": opts.max_iter,
        "tol": opts.tol,
    });
    Ok(t)
}

pub fn speedup_table(s: &Settings) -> Result<Table> {
    let (name, g) = one_graph(s, "grid:20x20")?;
    let n = g.node_count();
    let ps = list("p", &s.p, &[2.0, 2.5, 3.0, 4.0])?;
    let runs = count("runs", s.runs.unwrap_or(100))?;
    let norm = positive("norm", s.norm.unwrap_or(5.0))?;
    let threshold = positive("threshold", s.threshold.unwrap_or(0.1))?;
    let t_end = positive("t_end", s.t_end.unwrap_or(500.0))?;
    let sample_interval = positive("sample_interval", s.sample_interval.unwrap_or(0.01))?;
    let source = uniform_source(s, n, 0.0)?;
    let starts: Vec<Vec<f64>> = (0..runs as u64).map(|r| random_perp_start(n, norm, s.seed(), r)).collect();
    let opts = IntegratorOptions {
        sample_interval,
        ..IntegratorOptions::default()
    };
    let src = SourceSignal::Constant(source.clone());

    let mut t = Table::new(
        "speedup-table",
        s.seed(),
        &["p", "sim_time", "sim_time_std", "relative_speedup", "runs"],
    );
    let mut model_record = serde_json::Value::Null;
    let mut baseline = None;
    for &p in &ps {
        let (params, record) = model(s, n, Some(p), ModelDefaults { alpha: 1.0, alpha_p: 0.5, p, gamma: 0.1 })?;
        model_record = record;
        let times: Vec<f64> = starts
            .par_iter()
            .map(|h0| match transient_time_to_threshold(&params, &g, &src, h0, threshold, t_end, &opts)? {
                Crossing::Reached { time } => Ok(time),
                Crossing::NotReached { final_value, .. } => Err(CliError::Numerical(format!(
                    "p={p}: ‖h⊥‖ = {final_value:.3e} still above {threshold} at t_end = {t_end}"
                ))),
            })
            .collect::<Result<_>>()?;
        let (mean, std) = mean_std(&times);
        let base = *baseline.get_or_insert(mean);
        t.push(row![p, mean, std, base / mean, runs]);
    }
    model_record["p"] = json!(ps);
    t.params = json!({
        "graph": name,
        "model": model_record,
        "source_per_node": source[0],
        "runs": runs,
        "norm": norm,
        "threshold": threshold,
        "t_end": t_end,
        "sample_interval": sample_interval,
        "relative_speedup_baseline_p": ps[0],
    });
    Ok(t)
}

pub fn noise_floor_table(s: &Settings) -> Result<Table> {
    let (name, g) = one_graph(s, "star:50")?;
    let n = g.node_count();
    let (params, record) = model(s, n, None, ModelDefaults { alpha: 1.0, alpha_p: 0.0, p: 2.0, gamma: 0.5 })?;
    let etas = list("eta", &s.eta, &[0.5, 1.0, 2.0, 4.0])?;
    let sigma2 = nonnegative("sigma2", s.sigma2.unwrap_or(0.01))?;
    let chains = count("chains", s.chains.unwrap_or(1000))?;
    let iterations = count("iterations", s.iterations.unwrap_or(200_000))?;
    let tail_fraction = 0.5;
    let source = uniform_source(s, n, 1.0)?;
    let mu = params.mu();
    let h_inf = solve_equilibrium(&params, &g, &source, 1e-13, 200)?;

    let mut t = Table::new(
        "noise-floor-table",
        s.seed(),
        &["eta", "empirical_floor", "theoretical_bound", "ratio"],
    );
    let mut plateaued = Vec::new();
    for &eta in &etas {
        let rep = stochastic_ensemble(
            &params,
            &g,
            &source,
            sigma2,
            StepSchedule::Constant(eta),
            &h_inf,
            iterations,
            chains,
            s.seed(),
            tail_fraction,
        )?;
        let bound = noise_floor_bound(eta, mu, sigma2)?;
        t.push(row![eta, rep.floor_estimate, bound, rep.floor_estimate / bound]);
        plateaued.push(rep.plateaued);
    }
    t.params = json!({
        "graph": name,
        "model": record,
        "mu": mu,
        "sigma2": sigma2,
        "eta": etas,
        "chains": chains,
        "iterations": iterations,
        "tail_fraction": tail_fraction,
        "source_per_node": source[0],
        "start": "equilibrium",
    });
    t.extra = json!({ "plateaued": plateaued });
    Ok(t)
}

fn targets_for(s: &Settings, n: usize, tau: f64, h: f64) -> Result<CalibrationTargets> {
    Ok(CalibrationTargets {
        tau_star: positive("tau_star", tau)?,
        h_target: positive("h_target", h)?,
        h_star: vec![s.h_star.unwrap_or(0.0); n],
        s_inf: uniform_source(s, n, 1.0)?,
    })
}

pub fn sgps_demo(s: &Settings) -> Result<Table> {
    let (name, g) = one_graph(s, "path:3")?;
    let n = g.node_count();
    let targets = targets_for(s, n, s.tau_star.unwrap_or(1.0), s.h_target.unwrap_or(10.0))?;
    let res = sgps(&g, &targets)?;

    let params = ModelParams::linear_quadratic(res.alpha, res.gamma_diag.clone(), targets.h_star.clone())?;
    let h0: Vec<f64> = res
        .h_inf
        .iter()
        .zip(random_perp_start(n, 1.0, s.seed(), 0))
        .map(|(h, d)| h + d)
        .collect();
    let rate_scale = res.predicted_rate.max(1e-12);
    let t_end = 8.0 / rate_scale;
    let opts = IntegratorOptions {
        sample_interval: t_end / 400.0,
        reference: Some(res.h_inf.clone()),
        ..IntegratorOptions::default()
    };
    let traj = integrate(&params, &g, &SourceSignal::Constant(targets.s_inf.clone()), &h0, t_end, &opts)?;
    let simulated = measure_decay_rate(&traj, (1.0 / rate_scale, t_end), Observable::PerpErr)?;

    let mut t = Table::new(
        "sgps-demo",
        s.seed(),
        &[
            "tau_star",
            "h_target",
            "rho_star",
            "alpha",
            "gamma_bar",
            "lambda2",
            "predicted_rate",
            "rate_bound",
            "mass",
            "feasible",
            "full_space_rate_met",
            "simulated_perp_rate",
        ],
    );
    t.push(row![
        targets.tau_star,
        targets.h_target,
        res.rho_star,
        res.alpha,
        res.gamma_bar,
        res.lambda2,
        res.predicted_rate,
        res.rate_bound,
        res.mass(),
        res.feasible,
        res.full_space_rate_met,
        simulated,
    ]);
    t.params = json!({
        "graph": name,
        "tau_star": targets.tau_star,
        "h_target": targets.h_target,
        "h_star_per_node": targets.h_star[0],
        "source_per_node": targets.s_inf[0],
        "simulation": { "t_end": t_end, "fit_window": [1.0 / rate_scale, t_end], "perturbation_norm": 1.0 },
    });
    t.extra = json!({
        "gamma_diag": res.gamma_diag,
        "h_inf": res.h_inf,
        "reasons": res.reasons,
    });
    Ok(t)
}

fn parse_target_pair(text: &str) -> Result<(f64, f64)> {
    let bad = || CliError::Usage(format!("targets: expected tau:H, got {text:?}"));
    let (a, b) = text.split_once(':').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

pub fn sensitivity_table(s: &Settings) -> Result<Table> {
    let (name, g) = one_graph(s, "path:3")?;
    let n = g.node_count();
    let pairs: Vec<(f64, f64)> = match &s.targets {
        Some(list) if !list.is_empty() => list.iter().map(|p| parse_target_pair(p)).collect::<Result<_>>()?,
        _ => vec![(1.0, 10.0), (2.0, 20.0), (0.5, 5.0)],
    };
    let mut t = Table::new(
        "sensitivity-table",
        s.seed(),
        &["tau_star", "h_target", "rho_star", "alpha", "gamma_bar"],
    );
    for &(tau, h) in &pairs {
        let res = sgps(&g, &targets_for(s, n, tau, h)?)?;
        t.push(row![tau, h, res.rho_star, res.alpha, res.gamma_bar]);
    }
    t.params = json!({
        "graph": name,
        "targets": pairs,
        "h_star_per_node": s.h_star.unwrap_or(0.0),
        "source_per_node": uniform_source(s, n, 1.0)?[0],
    });
    Ok(t)
}

pub fn euler_stress(s: &Settings) -> Result<Table> {
    let (name, g) = one_graph(s, "path:3")?;
    let n = g.node_count();
    let alpha = positive("alpha", s.alpha.unwrap_or(1.0))?;
    let gamma = positive("gamma", s.gamma.unwrap_or(0.1))?;
    let gamma_diag = vec![gamma; n];
    let h_star = vec![s.h_star.unwrap_or(0.0); n];
    let source = uniform_source(s, n, 1.0)?;
    let iterations = count("iterations", s.iterations.unwrap_or(10_000))?;
    let threshold = euler_threshold(&g, alpha, &gamma_diag)?;
    let etas = list(
        "eta",
        &s.eta,
        &[0.5, 0.9, 0.99, 1.01, 1.1].map(|f| f * threshold),
    )?;
    let h0: Vec<f64> = random_perp_start(n, 1.0, s.seed(), 0)
        .iter()
        .enumerate()
        .map(|(i, x)| x + 1.0 + i as f64 / n as f64)
        .collect();

    let mut t = Table::new(
        "euler-stress",
        s.seed(),
        &[
            "eta",
            "eta_over_threshold",
            "threshold",
            "predicted_factor",
            "measured_factor",
            "converged",
            "diverged",
            "iterations",
        ],
    );
    for &eta in &etas {
        let rep = run_euler(&g, alpha, &gamma_diag, &h_star, &source, eta, &h0, iterations)?;
        let predicted = euler_factor(&g, alpha, &gamma_diag, eta)?;
        t.push(row![
            eta,
            eta / threshold,
            threshold,
            predicted,
            rep.measured_factor,
            rep.converged,
            rep.diverged,
            rep.iterations,
        ]);
    }
    t.params = json!({
        "graph": name,
        "alpha": alpha,
        "gamma": gamma,
        "h_star_per_node": h_star[0],
        "source_per_node": source[0],
        "eta": etas,
        "max_iterations": iterations,
    });
    Ok(t)
}

pub fn nonsyn(s: &Settings) -> Result<Table> {
    let alpha = positive("alpha", s.alpha.unwrap_or(1.0))?;
    let rho_star = positive("rho_star", s.rho_star.unwrap_or(0.5))?;
    let n_max = s.n_max.unwrap_or(50);
    let rep = nonsynonymy_report(alpha, rho_star, n_max, s.seed())?;
    let mut t = Table::new("nonsyn", s.seed(), &["family", "n", "degree", "lambda2", "rate", "meets_target"]);
    for r in &rep.paths {
        t.push(row!["path", r.n, 2usize, r.lambda2, r.rate, r.meets_target]);
    }
    for r in &rep.expanders {
        t.push(row!["regular", r.n, r.degree, r.lambda2, r.rate, r.rate >= rho_star]);
    }
    t.params = json!({ "alpha": alpha, "rho_star": rho_star, "n_max": n_max });
    t.extra = json!({
        "first_violation": rep.first_violation,
        "extrapolated_violation": rep.extrapolated_violation,
    });
    Ok(t)
}

pub fn two_regime(s: &Settings) -> Result<Table> {
    let gs = graphs(s, &["path:3", "cycle:4", "path:10"])?;
    let ps = list("p", &s.p, &[3.0, 4.0])?;
    let restarts = count("restarts", s.restarts.unwrap_or(20))?;
    let mut t = Table::new(
        "two-regime",
        s.seed(),
        &["graph", "p", "cp_estimate", "kappa2", "kappa_p", "u_th", "u0", "t_bound", "measured_time", "ratio"],
    );
    let mut model_record = serde_json::Value::Null;
    for (name, g) in &gs {
        let n = g.node_count();
        for &p in &ps {
            if p <= 2.0 {
                return Err(CliError::Usage(format!("p must exceed 2 for two-regime, got {p}")));
            }
            let (params, record) = model(s, n, Some(p), ModelDefaults { alpha: 1.0, alpha_p: 1.0, p, gamma: 0.1 })?;
            model_record = record;
            let est = estimate_cp(g, p, &CpOptions { restarts, seed: s.seed(), ..CpOptions::default() })?;
            let c = two_regime_constants(&params, g, est.value)?;
            let u0 = match s.norm {
                Some(norm) => positive("norm", norm)?.powi(2),
                None => 25.0 * c.u_th,
            };
            let t_bound = c.t_bound(u0);
            let measured = if u0 <= c.u_th {
                0.0
            } else {
                let mut h0 = est.argmin_vector.clone();
                project_out_mean(&mut h0);
                let scale = u0.sqrt() / norm2(&h0);
                h0.iter_mut().for_each(|x| *x *= scale);
                let reference = solve_equilibrium(&params, g, &vec![0.0; n], 1e-13, 200)?;
                let opts = IntegratorOptions {
                    sample_interval: t_bound / 2000.0,
                    stop_when_perp_below: Some(c.u_th.sqrt()),
                    reference: Some(reference),
                    ..IntegratorOptions::default()
                };
                let src = SourceSignal::Constant(vec![0.0; n]);
                let traj = integrate(&params, g, &src, &h0, 4.0 * t_bound, &opts)?;
                match first_crossing(&traj, c.u_th, Observable::PerpErrSquared) {
                    Crossing::Reached { time } => time,
                    Crossing::NotReached { .. } => f64::INFINITY,
                }
            };
            t.push(row![
                name.as_str(),
                p,
                est.value,
                c.kappa2,
                c.kappa_p,
                c.u_th,
                u0,
                t_bound,
                measured,
                if t_bound > 0.0 { measured / t_bound } else { f64::NAN },
            ]);
        }
    }
    model_record["p"] = json!(ps);
    t.params = json!({
        "graphs": gs.iter().map(|(n, _)| n).collect::<Vec<_>>(),
        "model": model_record,
        "restarts": restarts,
        "u0": if s.norm.is_some() { "norm^2" } else { "25 u_th" },
        "initial_direction": "C_p argmin witness",
    });
    Ok(t)
}

// ---- other subcommands

pub fn simulate(s: &Settings) -> Result<Table> {
    let (name, g) = one_graph(s, "path:3")?;
    let n = g.node_count();
    let p = match s.p.as_deref() {
        None | Some([]) => None,
        Some([p]) => Some(*p),
        Some(_) => return Err(CliError::Usage("p: simulate takes a single value".into())),
    };
    let (params, record) = model(s, n, p, ModelDefaults { alpha: 1.0, alpha_p: 0.0, p: 2.0, gamma: 0.1 })?;
    let source = uniform_source(s, n, 1.0)?;
    let t_end = positive("t_end", s.t_end.unwrap_or(20.0))?;
    let sample_interval = positive("sample_interval", s.sample_interval.unwrap_or(0.1))?;
    let norm = positive("norm", s.norm.unwrap_or(1.0))?;
    let src = match s.sigma2 {
        Some(sigma2) if sigma2 > 0.0 => SourceSignal::Stochastic {
            s_inf: source.clone(),
            sigma2,
            seed: s.seed(),
            hold: sample_interval,
        },
        _ => SourceSignal::Constant(source.clone()),
    };
    let h0: Vec<f64> = random_perp_start(n, norm, s.seed(), 0)
        .iter()
        .map(|x| x + s.h_star.unwrap_or(0.0))
        .collect();
    let opts = IntegratorOptions {
        sample_interval,
        ..IntegratorOptions::default()
    };
    let traj = integrate(&params, &g, &src, &h0, t_end, &opts)?;
    let mut t = Table::new("simulate", s.seed(), &["t", "mass", "energy", "err", "perp_err"]);
    for x in &traj.samples {
        t.push(row![x.t, x.mass, x.energy, x.err, x.perp_err]);
    }
    t.params = json!({
        "graph": name,
        "model": record,
        "source_per_node": source[0],
        "sigma2": s.sigma2.unwrap_or(0.0),
        "t_end": t_end,
        "sample_interval": sample_interval,
        "initial_perp_norm": norm,
    });
    t.extra = json!({
        "steps_accepted": traj.steps_accepted,
        "steps_rejected": traj.steps_rejected,
        "final_state": traj.final_state,
        "reference": traj.reference,
    });
    Ok(t)
}

pub fn forward_backward(s: &Settings) -> Result<Table> {
    let (name, g) = one_graph(s, "path:3")?;
    let n = g.node_count();
    let p = match s.p.as_deref() {
        None | Some([]) => None,
        Some([p]) => Some(*p),
        Some(_) => return Err(CliError::Usage("p: fb takes a single value".into())),
    };
    let (params, record) = model(s, n, p, ModelDefaults { alpha: 1.0, alpha_p: 0.5, p: 3.0, gamma: 0.1 })?;
    let l_psi = params
        .potential
        .lipschitz()
        .ok_or_else(|| CliError::Usage("fb needs a potential with Lipschitz gradient".into()))?;
    let mu = params.mu();
    let etas = list("eta", &s.eta, &[1.0 / l_psi])?;
    let iterations = count("iterations", s.iterations.unwrap_or(2000))?;
    let source = uniform_source(s, n, 1.0)?;
    let h0 = random_perp_start(n, 1.0, s.seed(), 0);
    let h_inf = solve_equilibrium(&params, &g, &source, 1e-13, 200)?;
    let src = DiscreteSource::Constant(source.clone());
    let mut t = Table::new(
        "fb",
        s.seed(),
        &["eta", "q_fb", "measured_factor", "converged", "iterations", "final_err"],
    );
    for &eta in &etas {
        let rep = run_forward_backward(&params, &g, &src, eta, &h0, iterations)?;
        t.push(row![
            eta,
            fb_contraction_factor(eta, mu, l_psi),
            rep.measured_factor,
            rep.converged,
            rep.iterations,
            dist2(&rep.final_state, &h_inf),
        ]);
    }
    t.params = json!({
        "graph": name,
        "model": record,
        "mu": mu,
        "lipschitz": l_psi,
        "eta": etas,
        "max_iterations": iterations,
        "source_per_node": source[0],
    });
    Ok(t)
}

/// `0, 1, 2, 5, 10, 20, 50, …` up to and including `k_max`.
fn checkpoints(k_max: usize) -> Vec<usize> {
    let mut ks = vec![0];
    let mut decade = 1;
    while decade <= k_max {
        for m in [1, 2, 5] {
            if m * decade <= k_max {
                ks.push(m * decade);
            }
        }
        decade *= 10;
    }
    if ks.last() != Some(&k_max) {
        ks.push(k_max);
    }
    ks
}

pub fn robbins_monro(s: &Settings) -> Result<Table> {
    let (name, g) = one_graph(s, "star:50")?;
    let n = g.node_count();
    let (params, record) = model(s, n, None, ModelDefaults { alpha: 1.0, alpha_p: 0.0, p: 2.0, gamma: 0.5 })?;
    let eta0 = positive("eta0", s.eta0.unwrap_or(2.0))?;
    let sigma2 = nonnegative("sigma2", s.sigma2.unwrap_or(0.01))?;
    let chains = count("chains", s.chains.unwrap_or(64))?;
    let iterations = count("iterations", s.iterations.unwrap_or(100_000))?;
    let source = uniform_source(s, n, 1.0)?;
    let h_inf = solve_equilibrium(&params, &g, &source, 1e-13, 200)?;
    let h0: Vec<f64> = h_inf.iter().map(|h| h + 1.0).collect();
    let schedule = StepSchedule::RobbinsMonro { eta0 };
    let rep = stochastic_ensemble(&params, &g, &source, sigma2, schedule, &h0, iterations, chains, s.seed(), 0.01)?;
    let mut t = Table::new("rm", s.seed(), &["k", "eta_k", "mean_sq_err"]);
    for k in checkpoints(iterations) {
        t.push(row![k, schedule.eta(k), rep.mean_sq_err[k]]);
    }
    t.params = json!({
        "graph": name,
        "model": record,
        "eta0": eta0,
        "sigma2": sigma2,
        "chains": chains,
        "iterations": iterations,
        "source_per_node": source[0],
        "start": "equilibrium + 1",
    });
    t.extra = json!({ "final_mean_sq_err": rep.final_mean_sq_err });
    Ok(t)
}

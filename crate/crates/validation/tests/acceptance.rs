//! Acceptance criteria C1–C12.
//!
//! Prints one `[PASS]`/`[FAIL]` line per criterion and exits non-zero if any
//! fail. Positional arguments select criteria by id (`C3 C8`).

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use caldiff::calibrate::sgps;
use caldiff::flow::{first_crossing, two_regime_constants};
use caldiff::linalg::{dist2, dot, norm2, project_out_mean, symmetric_eigenvalues};
use caldiff::schemes::{euler_factor, euler_threshold, stochastic_step_contraction, DiscreteSource};
use caldiff::{
    cp_lower_bound, drift, energy, estimate_cp, integrate, measure_decay_rate, noise_floor_bound,
    nonsynonymy_report, resolvent, run_euler, run_forward_backward, sensitivity_check,
    solve_equilibrium, stochastic_ensemble, total_mass, CalibrationTargets, CpOptions, Crossing,
    DissipationPotential, Graph, GraphFamily, IntegratorOptions, LogCoshPotential, ModelParams,
    Observable, QuadraticPotential, ResolventMode, SourceSignal, StepSchedule,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

type Check = std::result::Result<String, String>;

struct Criterion {
    id: &'static str,
    title: &'static str,
    budget: Duration,
    run: fn() -> Check,
}

fn main() {
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .map(|a| a.to_ascii_uppercase())
        .collect();
    let criteria = [
        Criterion { id: "C1", title: "closed-form C_p anchors", budget: secs(1), run: c1 },
        Criterion { id: "C2", title: "sandwich estimate_cp >= cp_lower_bound", budget: secs(60), run: c2 },
        Criterion { id: "C3", title: "linear-quadratic decay rate", budget: secs(10), run: c3 },
        Criterion { id: "C4", title: "Euler threshold sharpness and factor", budget: secs(5), run: c4 },
        Criterion { id: "C5", title: "SGPS on P3 and sensitivity rows", budget: secs(5), run: c5 },
        Criterion { id: "C6", title: "two-regime speedup on grid 20x20", budget: secs(300), run: c6 },
        Criterion { id: "C7", title: "transient time bound", budget: secs(60), run: c7 },
        Criterion { id: "C8", title: "stochastic noise floor", budget: secs(180), run: c8 },
        Criterion { id: "C9", title: "Robbins-Monro below fixed-step floors", budget: secs(120), run: c9 },
        Criterion { id: "C10", title: "property sweeps", budget: secs(120), run: c10 },
        Criterion { id: "C11", title: "non-synonymy report", budget: secs(30), run: c11 },
        Criterion { id: "C12", title: "stress: mu = 0 and FB step rejection", budget: secs(5), run: c12 },
    ];

    let mut failed = Vec::new();
    let mut ran = 0;
    for c in criteria.iter().filter(|c| filters.is_empty() || filters.iter().any(|f| f == c.id)) {
        ran += 1;
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed().saturating_sub(excluded_time(c.id));
        let in_budget = elapsed <= c.budget;
        let (ok, detail) = match outcome {
            Ok(d) => (in_budget, d),
            Err(d) => (false, d),
        };
        let budget_note = if in_budget { "" } else { " OVER BUDGET" };
        println!(
            "[{}] {:<4} {} ({:.2} s / {} s{budget_note}): {detail}",
            if ok { "PASS" } else { "FAIL" },
            c.id,
            c.title,
            elapsed.as_secs_f64(),
            c.budget.as_secs(),
        );
        if !ok {
            failed.push(c.id);
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(" "));
        std::process::exit(1);
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

/// C9 reuses the C8 floors; their computation is not charged to C9 when C8
/// did not run first.
fn excluded_time(id: &str) -> Duration {
    if id == "C9" {
        C9_SETUP.get().copied().unwrap_or_default()
    } else {
        Duration::ZERO
    }
}

static C9_SETUP: OnceLock<Duration> = OnceLock::new();

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gen(f: GraphFamily) -> Graph {
    f.generate().expect("graph generation")
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn uniform_lq(g: &Graph, alpha: f64, gamma: f64) -> ModelParams {
    let n = g.node_count();
    ModelParams::linear_quadratic(alpha, vec![gamma; n], vec![0.0; n]).unwrap()
}

// ---------------------------------------------------------------- C1

fn c1() -> Check {
    let p3 = cp_lower_bound(&gen(GraphFamily::Path { n: 3 }), 3.0).map_err(|e| e.to_string())?;
    let c4 = cp_lower_bound(&gen(GraphFamily::Cycle { n: 4 }), 3.0).map_err(|e| e.to_string())?;
    let want = 2.0 * 3f64.sqrt();
    ensure((p3 - want).abs() <= 1e-9, || format!("P3: {p3} vs 2*sqrt(3) = {want}"))?;
    ensure((c4 - 8.0).abs() <= 1e-9, || format!("C4: {c4} vs 8"))?;
    Ok(format!("P3 p=3 -> {p3:.12}, C4 p=3 -> {c4:.12}"))
}

// ---------------------------------------------------------------- C2

fn c2() -> Check {
    let graphs = [
        ("P10", GraphFamily::Path { n: 10 }),
        ("P100", GraphFamily::Path { n: 100 }),
        ("C20", GraphFamily::Cycle { n: 20 }),
        ("grid10x10", GraphFamily::Grid { rows: 10, cols: 10 }),
        ("karate", GraphFamily::Karate),
        ("ER(100,0.1,1)", GraphFamily::ErdosRenyi { n: 100, prob: 0.1, seed: 1 }),
    ];
    let opts = CpOptions::default();
    let mut violations = Vec::new();
    let mut p2_worst: f64 = 0.0;
    for (name, fam) in graphs {
        let g = gen(fam);
        let lambda2 = g.spectral_summary().map_err(|e| e.to_string())?.lambda2;
        let est2 = estimate_cp(&g, 2.0, &opts).map_err(|e| e.to_string())?.value;
        p2_worst = p2_worst.max((est2 - lambda2).abs());
        if (est2 - lambda2).abs() > 1e-6 {
            violations.push(format!("{name} p=2: estimate {est2:.9} vs lambda2 {lambda2:.9}"));
        }
        for p in [2.5, 3.0, 4.0] {
            let est = estimate_cp(&g, p, &opts).map_err(|e| e.to_string())?.value;
            let lb = cp_lower_bound(&g, p).map_err(|e| e.to_string())?;
            if est < lb - 1e-9 {
                violations.push(format!("{name} p={p}: estimate {est:.4e} < bound {lb:.4e}"));
            }
        }
    }
    let summary = format!("p=2 max |est - lambda2| = {p2_worst:.2e}");
    if violations.is_empty() {
        Ok(summary)
    } else {
        Err(format!(
            "{summary}; {} violations, e.g. {}",
            violations.len(),
            violations.iter().take(3).cloned().collect::<Vec<_>>().join("; ")
        ))
    }
}

// ---------------------------------------------------------------- C3

fn c3() -> Check {
    let cases = [
        ("P3", gen(GraphFamily::Path { n: 3 }), (10.0, 60.0), 60.0),
        ("C20", gen(GraphFamily::Cycle { n: 20 }), (40.0, 150.0), 150.0),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut lines = Vec::new();
    for (name, g, window, t_end) in cases {
        let n = g.node_count();
        let (alpha, gamma) = (1.0, 0.1);
        let params = uniform_lq(&g, alpha, gamma);
        let lambda2 = g.spectral_summary().map_err(|e| e.to_string())?.lambda2;
        let predicted = gamma.min(alpha * lambda2);
        let src = SourceSignal::Constant(vec![1.0 / n as f64; n]);
        let h0: Vec<f64> = gaussian(&mut rng, n).iter().map(|x| 10.0 / 3.0 + x).collect();
        let traj = integrate(&params, &g, &src, &h0, t_end, &IntegratorOptions::default())
            .map_err(|e| e.to_string())?;
        let rate = measure_decay_rate(&traj, window, Observable::Err).map_err(|e| e.to_string())?;
        let dev = rel_diff(rate, predicted);
        lines.push(format!("{name}: fitted {rate:.5} vs {predicted:.5} ({:.2}%)", 100.0 * dev));
        ensure(dev <= 0.05, || lines.join(", "))?;
    }
    Ok(lines.join(", "))
}

// ---------------------------------------------------------------- C4

fn c4() -> Check {
    let g = gen(GraphFamily::Path { n: 3 });
    let gamma = vec![0.1; 3];
    let h_star = vec![0.0; 3];
    let s = vec![1.0 / 3.0; 3];
    let h0 = vec![4.0, -1.0, 2.5];
    let threshold = euler_threshold(&g, 1.0, &gamma).map_err(|e| e.to_string())?;
    ensure((threshold - 2.0 / 3.1).abs() <= 1e-12, || format!("threshold {threshold} != 2/3.1"))?;
    let run = |eta: f64| run_euler(&g, 1.0, &gamma, &h_star, &s, eta, &h0, 10_000).map_err(|e| e.to_string());

    let below = run(0.99 * threshold)?;
    let above = run(1.01 * threshold)?;
    ensure(below.converged, || format!("eta = 0.99 thr did not converge ({} iterations)", below.iterations))?;
    ensure(!above.converged, || "eta = 1.01 thr converged".into())?;

    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for eta in [0.3, 0.5, 0.99 * threshold] {
        let rep = run(eta)?;
        let want = euler_factor(&g, 1.0, &gamma, eta).map_err(|e| e.to_string())?;
        let dev = rel_diff(rep.measured_factor, want);
        worst = worst.max(dev);
        parts.push(format!("eta={eta:.4}: {:.6}/{want:.6}", rep.measured_factor));
    }
    ensure(worst <= 0.01, || format!("factor mismatch {:.3}%: {}", 100.0 * worst, parts.join(", ")))?;
    Ok(format!(
        "0.99 thr converged in {} it, 1.01 thr {}; factors {} (max dev {:.1e})",
        below.iterations,
        if above.diverged { "diverged" } else { "did not converge" },
        parts.join(", "),
        worst
    ))
}

// ---------------------------------------------------------------- C5

fn c5() -> Check {
    let g = gen(GraphFamily::Path { n: 3 });
    let targets = CalibrationTargets {
        tau_star: 1.0,
        h_target: 10.0,
        h_star: vec![0.0; 3],
        s_inf: vec![1.0 / 3.0; 3],
    };
    let res = sgps(&g, &targets).map_err(|e| e.to_string())?;
    ensure((res.alpha - 1.0).abs() <= 1e-12, || format!("alpha = {}", res.alpha))?;
    ensure((res.gamma_bar - 0.1).abs() <= 1e-12, || format!("gamma_bar = {}", res.gamma_bar))?;
    ensure((res.mass() - 10.0).abs() <= 1e-8, || format!("mass = {}", res.mass()))?;

    let mut m = g.dense_laplacian() * res.alpha;
    for (i, gi) in res.gamma_diag.iter().enumerate() {
        m[(i, i)] += gi;
    }
    let lam_min = symmetric_eigenvalues(m)[0];
    ensure(lam_min >= 0.1 - 1e-12, || format!("lambda_min(aL+G) = {lam_min}"))?;

    let params = ModelParams::linear_quadratic(res.alpha, res.gamma_diag.clone(), targets.h_star.clone())
        .map_err(|e| e.to_string())?;
    let h0: Vec<f64> = res.h_inf.iter().zip([0.7, -0.4, 0.2]).map(|(h, d)| h + d).collect();
    let opts = IntegratorOptions { sample_interval: 0.05, ..Default::default() };
    let traj = integrate(&params, &g, &SourceSignal::Constant(targets.s_inf.clone()), &h0, 10.0, &opts)
        .map_err(|e| e.to_string())?;
    let rate = measure_decay_rate(&traj, (1.0, 8.0), Observable::PerpErr).map_err(|e| e.to_string())?;
    ensure(rate >= 0.95, || format!("simulated 1-perp decay rate {rate:.4}"))?;

    let mut rows = Vec::new();
    for (tau, h, alpha, gamma) in [(2.0, 20.0, 0.5, 0.05), (0.5, 5.0, 2.0, 0.2)] {
        let t = CalibrationTargets {
            tau_star: tau,
            h_target: h,
            h_star: vec![0.0; 3],
            s_inf: vec![1.0 / 3.0; 3],
        };
        let r = sgps(&g, &t).map_err(|e| e.to_string())?;
        ensure(
            (r.rho_star - 1.0 / tau).abs() <= 1e-12
                && (r.alpha - alpha).abs() <= 1e-12
                && (r.gamma_bar - gamma).abs() <= 1e-12,
            || format!("row ({tau},{h}): rho={} alpha={} gamma={}", r.rho_star, r.alpha, r.gamma_bar),
        )?;
        rows.push(format!("({tau},{h}) -> {:.3}/{:.3}", r.alpha, r.gamma_bar));
    }
    Ok(format!(
        "alpha={}, gamma_bar={}, mass={:.10}, lambda_min={lam_min:.6}, perp rate {rate:.4}; rows {}",
        res.alpha,
        res.gamma_bar,
        res.mass(),
        rows.join(", ")
    ))
}

// ---------------------------------------------------------------- C6

fn c6() -> Check {
    let g = gen(GraphFamily::Grid { rows: 20, cols: 20 });
    let n = g.node_count();
    let runs = 100;
    let starts: Vec<Vec<f64>> = (0..runs)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(r);
            let mut h = gaussian(&mut rng, n);
            project_out_mean(&mut h);
            let scale = 5.0 / norm2(&h);
            h.iter_mut().for_each(|x| *x *= scale);
            h
        })
        .collect();
    let src = SourceSignal::Constant(vec![0.0; n]);
    let opts = IntegratorOptions {
        sample_interval: 0.01,
        reference: Some(vec![0.0; n]),
        ..Default::default()
    };
    let ps = [2.0, 2.5, 3.0, 4.0];
    let mut means = Vec::new();
    for p in ps {
        let params = ModelParams::new(1.0, 0.5, p, QuadraticPotential::uniform(0.1, vec![0.0; n]).unwrap().into())
            .map_err(|e| e.to_string())?;
        let times: Vec<f64> = starts
            .par_iter()
            .map(|h0| {
                let c = caldiff::transient_time_to_threshold(&params, &g, &src, h0, 0.1, 500.0, &opts)
                    .map_err(|e| e.to_string())?;
                c.time().ok_or_else(|| format!("p={p}: threshold not reached"))
            })
            .collect::<std::result::Result<_, String>>()?;
        means.push(times.iter().sum::<f64>() / runs as f64);
    }
    let table = ps
        .iter()
        .zip(&means)
        .map(|(p, t)| format!("p={p}: {t:.3}"))
        .collect::<Vec<_>>()
        .join(", ");
    let ratio = means[2] / means[0];
    let monotone = means.windows(2).all(|w| w[1] <= w[0]);
    ensure(ratio <= 0.85 && monotone, || {
        format!("mean sim_time {table}; time(p=3)/time(p=2) = {ratio:.3} (need <= 0.85), monotone = {monotone}")
    })?;
    Ok(format!("mean sim_time {table}; ratio {ratio:.3}"))
}

// ---------------------------------------------------------------- C7

fn c7() -> Check {
    let cases = [
        ("P3", GraphFamily::Path { n: 3 }, 3.0),
        ("C4", GraphFamily::Cycle { n: 4 }, 3.0),
        ("P10", GraphFamily::Path { n: 10 }, 4.0),
    ];
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for (name, fam, p) in cases {
        let g = gen(fam);
        let n = g.node_count();
        let params = ModelParams::new(1.0, 1.0, p, QuadraticPotential::uniform(0.1, vec![0.0; n]).unwrap().into())
            .map_err(|e| e.to_string())?;
        let est = estimate_cp(&g, p, &CpOptions::default()).map_err(|e| e.to_string())?;
        let consts = two_regime_constants(&params, &g, est.value).map_err(|e| e.to_string())?;
        let u0 = 25.0 * consts.u_th;
        let t_bound = consts.t_bound(u0);

        let mut directions = vec![est.argmin_vector.clone(), g.spectral_summary().unwrap().fiedler_vector];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        directions.extend((0..2).map(|_| gaussian(&mut rng, n)));
        let mut case_worst: f64 = 0.0;
        for mut d in directions {
            project_out_mean(&mut d);
            let scale = u0.sqrt() / norm2(&d);
            d.iter_mut().for_each(|x| *x *= scale);
            let opts = IntegratorOptions {
                sample_interval: t_bound / 2000.0,
                stop_when_perp_below: Some(consts.u_th.sqrt()),
                reference: Some(vec![0.0; n]),
                ..Default::default()
            };
            let traj = integrate(&params, &g, &SourceSignal::Constant(vec![0.0; n]), &d, 2.0 * t_bound, &opts)
                .map_err(|e| e.to_string())?;
            let t = match first_crossing(&traj, consts.u_th, Observable::PerpErrSquared) {
                Crossing::Reached { time } => time,
                Crossing::NotReached { final_value, .. } => {
                    return Err(format!("{name}: u stuck at {final_value:.3e} > u_th {:.3e}", consts.u_th));
                }
            };
            case_worst = case_worst.max(t / t_bound);
        }
        worst = worst.max(case_worst);
        lines.push(format!(
            "{name} p={p}: C_p~{:.4}, u_th={:.3e}, t_bound={t_bound:.4}, max t/t_bound={case_worst:.3}",
            est.value, consts.u_th
        ));
    }
    ensure(worst <= 1.05, || lines.join("; "))?;
    Ok(lines.join("; "))
}

// ---------------------------------------------------------------- C8, C9

const S50_SIGMA2: f64 = 0.01;
const S50_MU: f64 = 0.5;
const C8_ETAS: [f64; 3] = [0.5, 1.0, 2.0];

struct FloorRow {
    eta: f64,
    floor: f64,
    bound: f64,
    worst_recursion: f64,
}

fn s50_problem() -> (Graph, ModelParams, Vec<f64>) {
    let g = gen(GraphFamily::Star { n: 50 });
    let params = uniform_lq(&g, 1.0, S50_MU);
    (g, params, vec![0.02; 50])
}

fn c8_rows() -> &'static std::result::Result<Vec<FloorRow>, String> {
    static ROWS: OnceLock<std::result::Result<Vec<FloorRow>, String>> = OnceLock::new();
    ROWS.get_or_init(|| {
        let (g, params, s) = s50_problem();
        let h_inf = solve_equilibrium(&params, &g, &s, 1e-13, 10).map_err(|e| e.to_string())?;
        C8_ETAS
            .iter()
            .map(|&eta| {
                let rep = stochastic_ensemble(
                    &params,
                    &g,
                    &s,
                    S50_SIGMA2,
                    StepSchedule::Constant(eta),
                    &h_inf,
                    2000,
                    1000,
                    8,
                    0.5,
                )
                .map_err(|e| e.to_string())?;
                let c2 = stochastic_step_contraction(eta, S50_MU);
                let forcing = eta * eta * S50_SIGMA2;
                let worst_recursion = rep
                    .mean_sq_err
                    .windows(2)
                    .map(|w| w[1] / (c2 * (w[0] + forcing)))
                    .fold(0.0, f64::max);
                Ok(FloorRow {
                    eta,
                    floor: rep.floor_estimate,
                    bound: noise_floor_bound(eta, S50_MU, S50_SIGMA2).map_err(|e| e.to_string())?,
                    worst_recursion,
                })
            })
            .collect()
    })
}

fn c8() -> Check {
    let rows = c8_rows().as_ref().map_err(Clone::clone)?;
    let text = rows
        .iter()
        .map(|r| {
            format!(
                "eta={}: floor {:.4e} / bound {:.4e} = {:.3}, recursion max ratio {:.3}",
                r.eta,
                r.floor,
                r.bound,
                r.floor / r.bound,
                r.worst_recursion
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    let ok = rows.iter().all(|r| r.floor <= 1.1 * r.bound && r.worst_recursion <= 1.05);
    ensure(ok, || text.clone())?;
    Ok(text)
}

fn c9() -> Check {
    let setup = Instant::now();
    let rows = c8_rows().as_ref().map_err(Clone::clone)?;
    C9_SETUP.get_or_init(|| setup.elapsed());
    let min_floor = rows.iter().map(|r| r.floor).fold(f64::INFINITY, f64::min);

    let (g, params, s) = s50_problem();
    let h_inf = solve_equilibrium(&params, &g, &s, 1e-13, 10).map_err(|e| e.to_string())?;
    let h0: Vec<f64> = h_inf.iter().map(|h| h + 1.0).collect();
    let rep = stochastic_ensemble(
        &params,
        &g,
        &s,
        S50_SIGMA2,
        StepSchedule::RobbinsMonro { eta0: 2.0 },
        &h0,
        100_000,
        64,
        9,
        0.01,
    )
    .map_err(|e| e.to_string())?;
    let last = rep.final_mean_sq_err;
    ensure(last < min_floor, || format!("final E|e|^2 {last:.3e} >= smallest floor {min_floor:.3e}"))?;
    Ok(format!("final E|e|^2 after 1e5 steps {last:.3e} < smallest fixed-step floor {min_floor:.3e} (64 chains)"))
}

// ---------------------------------------------------------------- C10

fn graph_pool() -> Vec<Graph> {
    let mut pool = vec![
        gen(GraphFamily::Path { n: 2 }),
        gen(GraphFamily::Path { n: 7 }),
        gen(GraphFamily::Cycle { n: 5 }),
        gen(GraphFamily::Cycle { n: 12 }),
        gen(GraphFamily::Star { n: 9 }),
        gen(GraphFamily::Complete { n: 6 }),
        gen(GraphFamily::Grid { rows: 3, cols: 4 }),
        gen(GraphFamily::Karate),
        gen(GraphFamily::ErdosRenyi { n: 20, prob: 0.3, seed: 4 }),
        gen(GraphFamily::RandomRegular { n: 16, degree: 3, seed: 5 }),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let reweighted: Vec<Graph> = pool
        .iter()
        .map(|g| {
            let edges: Vec<_> = g.edges().iter().map(|e| (e.i, e.j, rng.random_range(0.2..3.0))).collect();
            Graph::new(g.node_count(), edges).unwrap()
        })
        .collect();
    pool.extend(reweighted);
    pool
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-r..r)).collect()
}

fn random_potential(rng: &mut ChaCha8Rng, n: usize) -> DissipationPotential {
    let h_star = uniform_vec(rng, n, 1.0);
    if rng.random_bool(0.5) {
        let gamma = (0..n).map(|_| rng.random_range(0.05..2.0)).collect();
        QuadraticPotential::new(gamma, h_star).unwrap().into()
    } else {
        LogCoshPotential::new(rng.random_range(0.05..1.0), rng.random_range(0.0..2.0), h_star)
            .unwrap()
            .into()
    }
}

fn random_params(rng: &mut ChaCha8Rng, n: usize, p: f64) -> ModelParams {
    ModelParams::new(
        rng.random_range(0.1..2.0),
        rng.random_range(0.0..1.5),
        p,
        random_potential(rng, n),
    )
    .unwrap()
}

fn c10() -> Check {
    let pool = graph_pool();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut report = Vec::new();
    let pick = |rng: &mut ChaCha8Rng| &pool[rng.random_range(0..pool.len())];

    // Mass annihilation.
    for _ in 0..10_000 {
        let g = pick(&mut rng);
        let h = uniform_vec(&mut rng, g.node_count(), 1.0);
        let p = rng.random_range(2.0..6.0);
        let tol = 1e-10 * norm2(&h) * g.max_degree();
        let l = g.laplacian_apply(&h).unwrap().iter().sum::<f64>().abs();
        let lp = g.p_laplacian_apply(&h, p).unwrap().iter().sum::<f64>().abs();
        ensure(l <= tol && lp <= tol, || format!("mass annihilation: {l:.2e}, {lp:.2e} > {tol:.2e}"))?;
    }
    report.push("mass 1e4");

    // Poincaré.
    let lambda2s: Vec<f64> = pool.iter().map(|g| g.spectral_summary().unwrap().lambda2).collect();
    for _ in 0..10_000 {
        let k = rng.random_range(0..pool.len());
        let g = &pool[k];
        let mut h = gaussian(&mut rng, g.node_count());
        project_out_mean(&mut h);
        let lhs = dot(&h, &g.laplacian_apply(&h).unwrap());
        let rhs = (1.0 - 1e-8) * lambda2s[k] * dot(&h, &h);
        ensure(lhs >= rhs, || format!("Poincare: {lhs} < {rhs}"))?;
    }
    report.push("Poincare 1e4");

    // Scalar p-monotonicity.
    for _ in 0..100_000 {
        let a = rng.random_range(-3.0..3.0);
        let b = rng.random_range(-3.0..3.0);
        let p: f64 = rng.random_range(2.0..6.0);
        let phi = |x: f64| x.abs().powf(p - 2.0) * x;
        let lhs = (phi(a) - phi(b)) * (a - b);
        let rhs = 2f64.powf(2.0 - p) * (a - b).abs().powf(p);
        ensure(lhs >= rhs - 1e-12, || format!("p-monotonicity at a={a}, b={b}, p={p}: {lhs} < {rhs}"))?;
    }
    report.push("p-monotone 1e5");

    // Drift strong monotonicity.
    for _ in 0..10_000 {
        let g = pick(&mut rng);
        let n = g.node_count();
        let p = rng.random_range(2.0..5.0);
        let params = random_params(&mut rng, n, p);
        let h1 = uniform_vec(&mut rng, n, 2.0);
        let h2 = uniform_vec(&mut rng, n, 2.0);
        let dh: Vec<f64> = h1.iter().zip(&h2).map(|(a, b)| a - b).collect();
        let f1 = drift(&params, g, &h1).unwrap();
        let f2 = drift(&params, g, &h2).unwrap();
        let df: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| a - b).collect();
        let lhs = dot(&dh, &df);
        let rhs = params.mu() * dot(&dh, &dh);
        ensure(lhs >= rhs - 1e-9 * lhs.abs().max(1.0), || format!("drift monotonicity: {lhs} < {rhs}"))?;
    }
    report.push("drift monotone 1e4");

    // Energy gradient.
    let mut fd_worst: f64 = 0.0;
    for _ in 0..500 {
        let g = pick(&mut rng);
        let n = g.node_count();
        let p = rng.random_range(2.0..4.0);
        let params = random_params(&mut rng, n, p);
        let h = uniform_vec(&mut rng, n, 1.5);
        let f = drift(&params, g, &h).unwrap();
        let step = 1e-5;
        let mut x = h.clone();
        for i in 0..n {
            x[i] = h[i] + step;
            let ep = energy(&params, g, &x).unwrap();
            x[i] = h[i] - step;
            let em = energy(&params, g, &x).unwrap();
            x[i] = h[i];
            fd_worst = fd_worst.max(((ep - em) / (2.0 * step) - f[i]).abs());
        }
    }
    ensure(fd_worst <= 1e-6, || format!("grad E vs F: max error {fd_worst:.2e}"))?;
    report.push("grad E = F 500");

    // Sensitivity.
    for _ in 0..100 {
        let g = pick(&mut rng);
        let n = g.node_count();
        let params = random_params(&mut rng, n, 3.0);
        let s1 = uniform_vec(&mut rng, n, 1.0);
        let s2 = uniform_vec(&mut rng, n, 1.0);
        let sens = sensitivity_check(&params, g, &s1, &s2).map_err(|e| e.to_string())?;
        ensure(sens.holds(1e-8), || format!("sensitivity: {} > {}", sens.lhs, sens.rhs))?;
    }
    report.push("sensitivity 100");

    // Resolvent.
    for _ in 0..2_000 {
        let g = pick(&mut rng);
        let n = g.node_count();
        let p = rng.random_range(2.0..4.0);
        let params = random_params(&mut rng, n, p);
        let eta = 10f64.powf(rng.random_range(-2.0..1.0));
        let z1 = uniform_vec(&mut rng, n, 2.0);
        let z2 = uniform_vec(&mut rng, n, 2.0);
        for mode in [ResolventMode::OperatorA, ResolventMode::Full] {
            let j1 = resolvent(&params, g, eta, &z1, mode).map_err(|e| e.to_string())?;
            let j2 = resolvent(&params, g, eta, &z2, mode).map_err(|e| e.to_string())?;
            let dj: Vec<f64> = j1.iter().zip(&j2).map(|(a, b)| a - b).collect();
            let dz: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| a - b).collect();
            let jj = dot(&dj, &dj);
            let jz = dot(&dj, &dz);
            let slack = 1e-9 * dot(&dz, &dz);
            ensure(jj <= jz + slack, || format!("firm nonexpansiveness: {jj} > {jz}"))?;
            if mode == ResolventMode::Full {
                let bound = norm2(&dz) / (1.0 + eta * params.mu());
                ensure(norm2(&dj) <= bound * (1.0 + 1e-8), || {
                    format!("contraction: {} > {bound}", norm2(&dj))
                })?;
            }
        }
    }
    report.push("resolvent 2e3");
    Ok(report.join(", "))
}

// ---------------------------------------------------------------- C11

fn c11() -> Check {
    let rep = nonsynonymy_report(1.0, 0.5, 50, 11).map_err(|e| e.to_string())?;
    ensure(rep.first_violation == Some(5), || format!("first violation {:?}", rep.first_violation))?;
    let max_n = rep.expanders.iter().map(|r| r.n).max().unwrap_or(0);
    let min_rate = rep.expanders.iter().map(|r| r.rate).fold(f64::INFINITY, f64::min);
    ensure(max_n >= 200 && min_rate > 0.1, || {
        format!("expanders up to n={max_n}, min rate {min_rate:.4}")
    })?;
    let rates = rep
        .expanders
        .iter()
        .map(|r| format!("n={}: {:.3}", r.n, r.rate))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(format!("first path violation n=5; 4-regular rates {rates}"))
}

// ---------------------------------------------------------------- C12

fn c12() -> Check {
    let g = gen(GraphFamily::Cycle { n: 20 });
    let n = g.node_count();
    let params = ModelParams::new(1.0, 0.5, 3.0, DissipationPotential::Absent { n }).map_err(|e| e.to_string())?;
    let s = vec![0.1; n];
    let influx: f64 = s.iter().sum();
    ensure(solve_equilibrium(&params, &g, &s, 1e-10, 100).is_err(), || {
        "solve_equilibrium accepted mu = 0".into()
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let h0 = gaussian(&mut rng, n);
    let m0 = total_mass(&h0);
    let traj = integrate(&params, &g, &SourceSignal::Constant(s.clone()), &h0, 50.0, &IntegratorOptions::default())
        .map_err(|e| e.to_string())?;
    ensure(traj.reference.is_none() && traj.samples.iter().all(|x| x.err.is_nan()), || {
        "trajectory reported an equilibrium".into()
    })?;
    let mass_dev = traj
        .samples
        .iter()
        .map(|x| (x.mass - (m0 + influx * x.t)).abs() / (1.0 + x.mass.abs()))
        .fold(0.0, f64::max);
    ensure(mass_dev <= 1e-6, || format!("mass deviates from linear growth by {mass_dev:.2e}"))?;
    let ts = traj.times();
    let masses: Vec<f64> = traj.samples.iter().map(|x| x.mass).collect();
    let slope = linear_slope(&ts, &masses);
    ensure(rel_diff(slope, influx) <= 1e-6, || format!("mass slope {slope} vs influx {influx}"))?;

    let quad = ModelParams::linear_quadratic(1.0, vec![0.1; n], vec![0.0; n]).unwrap();
    let l_psi = 0.1;
    let src = DiscreteSource::Constant(s.clone());
    let mut rejected = Vec::new();
    for factor in [1.0, 1.25, 3.0] {
        let eta = factor * 2.0 / l_psi;
        let r = run_forward_backward(&quad, &g, &src, eta, &h0, 10);
        ensure(r.is_err(), || format!("FB accepted eta = {eta} >= 2/L_psi"))?;
        rejected.push(format!("{eta}"));
    }
    ensure(run_forward_backward(&quad, &g, &src, 0.99 * 2.0 / l_psi, &h0, 10).is_ok(), || {
        "FB rejected eta < 2/L_psi".into()
    })?;
    let spread = dist2(&traj.final_state, &h0);
    Ok(format!(
        "mass slope {slope:.9} (influx {influx}), max dev {mass_dev:.1e}, no equilibrium, |h(T)-h0| = {spread:.2}; FB rejected eta in {{{}}}",
        rejected.join(", ")
    ))
}

fn linear_slope(x: &[f64], y: &[f64]) -> f64 {
    let mx = x.iter().sum::<f64>() / x.len() as f64;
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

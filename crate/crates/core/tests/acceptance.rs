//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Run with `cargo test --test acceptance -- --nocapture` (the harness is a plain
//! `main`, so output is always shown). Exits nonzero when any criterion fails.

mod common;

use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stochastic_gn::algorithms::rate_envelope;
use stochastic_gn::diagnostics::{descent_certificate, evaluate_objective, stationarity_report};
use stochastic_gn::estimators::{sample_batch, sarah_update, BatchSchedule, Estimate, JacobianEstimate};
use stochastic_gn::linalg::SparseVector;
use stochastic_gn::problems::{
    cvar_component, gen_synthetic_classification, gen_synthetic_returns, make_cvar_problem, make_nlse_problem,
    nlse_component, ClassificationDataset, CvarParams,
};
use stochastic_gn::subsolver::{solve, ProxLinearSubproblem, SolverKind, SolverOptions};
use stochastic_gn::{run, Algorithm, CompositionProblem, OuterFunction, RunConfig, RunTrace};

use common::{central_difference, gaussian_matrix, gaussian_vector, oracle_solve, random_outer, relative_error};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn gn_config(m: f64, iterations: usize) -> RunConfig {
    RunConfig::new(Algorithm::Gn, m, iterations, BatchSchedule::Fixed { b: 1, bhat: 1 })
}

// 1. ADPG and primal-dual against the enumeration oracle on tiny subproblems.
fn subsolver_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_oracle, mut worst_pair) = (0.0f64, 0.0f64);
    let mut failures = 0;
    for k in 0..200 {
        let p = rng.random_range(1..=3);
        let q = rng.random_range(1..=3);
        let f = gaussian_vector(q, &mut rng);
        let j = gaussian_matrix(q, p, &mut rng);
        let m = rng.random_range(0.5..3.0);
        let phi = random_outer(k, &mut rng);
        let center = DVector::zeros(p);
        let sub = ProxLinearSubproblem::new(&f, &j, m, &phi, None, &center).expect("valid subproblem");
        let expected = oracle_solve(&phi, &f, &j, m);
        let mut sols = Vec::new();
        for kind in [SolverKind::Adpg, SolverKind::PrimalDual] {
            let opts = SolverOptions { kind, tol: Some(1e-12), k_max: 200_000 };
            match solve(&sub, &opts, None) {
                Ok(s) => sols.push(s.d_star),
                Err(_) => failures += 1,
            }
        }
        if sols.len() == 2 {
            worst_oracle = worst_oracle.max((&sols[0] - &expected).norm()).max((&sols[1] - &expected).norm());
            worst_pair = worst_pair.max((&sols[0] - &sols[1]).norm());
        }
    }
    Outcome::new(
        failures == 0 && worst_oracle <= 1e-4 && worst_pair <= 1e-6,
        format!("200 instances, max |d - d_oracle| = {worst_oracle:.2e}, max |d_adpg - d_pd| = {worst_pair:.2e}, solver errors = {failures}"),
    )
}

fn nlse_toy() -> CompositionProblem {
    make_nlse_problem(gen_synthetic_classification(200, 10, 7).unwrap(), OuterFunction::l2()).unwrap()
}

// 2. Exact-oracle GN satisfies the sufficient-decrease inequality.
fn descent_inequality() -> Outcome {
    let prob = nlse_toy();
    let c = prob.constants;
    let m = c.m_phi * c.l_f;
    let mut cfg = gn_config(m, 60);
    cfg.keep_iterates = true;
    cfg.subsolver.tol = Some(1e-12);
    let tr = run(&prob, &DVector::zeros(10), &cfg).unwrap();
    let xs = tr.iterates.as_ref().unwrap();
    let mut min_slack = f64::INFINITY;
    let mut vacuous = false;
    for w in xs.windows(2) {
        let cert = descent_certificate(&prob, &w[0], &w[1], 0.0, 0.0, m, 1.0).unwrap();
        min_slack = min_slack.min(cert.slack);
        vacuous |= cert.vacuous;
    }
    let psi: Vec<f64> = tr.records.iter().map(|r| r.psi.unwrap()).collect();
    let monotone = psi.windows(2).all(|w| w[1] <= w[0]);
    Outcome::new(
        !vacuous && min_slack >= -1e-8 && monotone,
        format!("M = M_phi L_F = {m:.4}, 60 steps, min slack = {min_slack:.3e}, objective nonincreasing = {monotone}"),
    )
}

// 3. Average squared prox-gradient norm under the rate envelope.
fn rate_envelope_check() -> Outcome {
    let prob = nlse_toy();
    let c = prob.constants;
    let m = c.m_phi * c.l_f;
    let c_g = 2.0 * m - c.m_phi * (c.l_f + 1.0);
    let x0 = DVector::zeros(10);
    let mut long = gn_config(m, 2000);
    long.objective_every = 50;
    let psi_star = run(&prob, &x0, &long).unwrap().best_psi().unwrap();
    let mut details = Vec::new();
    let mut pass = c_g > 0.0;
    for t in [10usize, 100] {
        let mut cfg = gn_config(m, t + 1);
        cfg.subsolver.tol = Some(1e-12);
        let tr = run(&prob, &x0, &cfg).unwrap();
        let g: Vec<f64> = tr.records[..=t].iter().map(|r| r.gnorm_sq.unwrap()).collect();
        let avg = g.iter().sum::<f64>() / (t + 1) as f64;
        let env = rate_envelope(tr.records[0].psi.unwrap(), psi_star, m, c_g, t, 0.0);
        pass &= avg <= env * (1.0 + 1e-6);
        details.push(format!("T={t}: {avg:.3e} <= {env:.3e}"));
    }
    Outcome::new(pass, details.join(", "))
}

fn three_sigma(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 3.0 * (var / n).sqrt())
}

// 4. Unbiasedness, variance bound and the SARAH second-moment identity by Monte Carlo.
fn estimator_statistics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, p) = (5usize, 3usize);
    let rows = (0..n).map(|_| SparseVector::from_dense(gaussian_vector(p, &mut rng).as_slice()).with_dim(p)).collect();
    let labels = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let prob = make_nlse_problem(ClassificationDataset::new(rows, labels, p).unwrap(), OuterFunction::l2()).unwrap();
    let x_prev = gaussian_vector(p, &mut rng);
    let x = gaussian_vector(p, &mut rng);
    let f_x = prob.exact_value(&x).unwrap();
    let j_x = prob.exact_jacobian(&x).unwrap();
    let fi: Vec<DVector<f64>> = (0..n).map(|i| prob.sample_value(&x, i)).collect();
    let ji: Vec<DMatrix<f64>> = (0..n).map(|i| prob.sample_jacobian(&x, i).to_dense(4, p)).collect();
    let sigma_f2 = fi.iter().map(|v| (v - &f_x).norm_squared()).sum::<f64>() / n as f64;
    let sigma_d2 = ji.iter().map(|v| (v - &j_x).norm_squared()).sum::<f64>() / n as f64;

    let (b, bhat) = (2usize, 3usize);
    let trials = 100_000;
    let mut f_dev: Vec<Vec<f64>> = vec![Vec::with_capacity(trials); 4];
    let mut j_dev: Vec<Vec<f64>> = vec![Vec::with_capacity(trials); 4 * p];
    let mut f_sq = Vec::with_capacity(trials);
    let mut j_sq = Vec::with_capacity(trials);
    for _ in 0..trials {
        let bf = sample_batch(prob.count(), b, &mut rng).unwrap();
        let bj = sample_batch(prob.count(), bhat, &mut rng).unwrap();
        let f = prob.average_value(&x, &bf);
        let j = prob.average_jacobian(&x, &bj);
        for r in 0..4 {
            f_dev[r].push(f[r] - f_x[r]);
        }
        for (k, v) in (&j - &j_x).iter().enumerate() {
            j_dev[k].push(*v);
        }
        f_sq.push((f - &f_x).norm_squared());
        j_sq.push((j - &j_x).norm_squared());
    }
    let unbiased = f_dev.iter().chain(&j_dev).all(|s| {
        let (mean, tol) = three_sigma(s);
        mean.abs() <= tol
    });
    let (mf, tf) = three_sigma(&f_sq);
    let (mj, tj) = three_sigma(&j_sq);
    let variance_ok = mf <= sigma_f2 / b as f64 + tf && mj <= sigma_d2 / bhat as f64 + tj;

    // SARAH step from a perturbed estimate at x_prev
    let f_prev = prob.exact_value(&x_prev).unwrap();
    let j_prev = prob.exact_jacobian(&x_prev).unwrap();
    let prev = Estimate {
        f_tilde: &f_prev + gaussian_vector(4, &mut rng) * 0.1,
        j_tilde: JacobianEstimate::Dense(&j_prev + gaussian_matrix(4, p, &mut rng) * 0.1),
        b_used: n,
        bhat_used: n,
        cumulative_f_calls: 0,
        cumulative_j_calls: 0,
    };
    let rho = |b: usize| (n - b) as f64 / ((n - 1) * b) as f64;
    let df_mean = (0..n).map(|i| (&fi[i] - prob.sample_value(&x_prev, i)).norm_squared()).sum::<f64>() / n as f64;
    let dj_mean = (0..n)
        .map(|i| (&ji[i] - prob.sample_jacobian(&x_prev, i).to_dense(4, p)).norm_squared())
        .sum::<f64>()
        / n as f64;
    let prev_j = match &prev.j_tilde {
        JacobianEstimate::Dense(m) => m.clone(),
        JacobianEstimate::Sampled(_) => unreachable!(),
    };
    let pred_f = (&prev.f_tilde - &f_prev).norm_squared() + rho(b) * (df_mean - (&f_x - &f_prev).norm_squared());
    let pred_j = (&prev_j - &j_prev).norm_squared() + rho(bhat) * (dj_mean - (&j_x - &j_prev).norm_squared());
    let mut sf = Vec::with_capacity(trials);
    let mut sj = Vec::with_capacity(trials);
    for _ in 0..trials {
        let bf = sample_batch(prob.count(), b, &mut rng).unwrap();
        let bj = sample_batch(prob.count(), bhat, &mut rng).unwrap();
        let est = sarah_update(&prob, &prev, &x_prev, &x, &bf, &bj).unwrap();
        sf.push((&est.f_tilde - &f_x).norm_squared());
        sj.push((est.j_tilde.into_dense() - &j_x).norm_squared());
    }
    let (msf, tsf) = three_sigma(&sf);
    let (msj, tsj) = three_sigma(&sj);
    let sarah_ok = (msf - pred_f).abs() <= tsf && (msj - pred_j).abs() <= tsj;
    Outcome::new(
        unbiased && variance_ok && sarah_ok,
        format!(
            "1e5 batches: unbiased = {unbiased}; E|F~-F|^2 = {mf:.4e} vs sigma_F^2/b = {:.4e}; E|J~-J|^2 = {mj:.4e} vs sigma_D^2/b^ = {:.4e}; SARAH F {msf:.4e} vs {pred_f:.4e} (3se {tsf:.1e}), J {msj:.4e} vs {pred_j:.4e} (3se {tsj:.1e})",
            sigma_f2 / b as f64,
            sigma_d2 / bhat as f64
        ),
    )
}

// 5. Analytic gradients against central differences.
fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let p = 6;
    let h = 1e-5;
    let mut worst = [0.0f64; 5];
    for _ in 0..100 {
        let x = gaussian_vector(p, &mut rng);
        let a = SparseVector::from_dense((gaussian_vector(p, &mut rng) / (p as f64).sqrt()).as_slice()).with_dim(p);
        let b = 0.1 * rng.random::<f64>();
        let y = if rng.random::<bool>() { 1.0 } else { -1.0 };
        for id in 1..=4 {
            let (_, g) = nlse_component(id, &x, &a, b, y).unwrap();
            let fd = central_difference(|z| nlse_component(id, z, &a, b, y).unwrap().0, &x, h);
            worst[id - 1] = worst[id - 1].max(relative_error(&g, &fd));
        }
    }
    let (beta, gamma) = (0.1, 1e-3);
    for _ in 0..100 {
        let w: Vec<f64> = (0..p).map(|_| rng.random::<f64>() + 1e-3).collect();
        let total: f64 = w.iter().sum();
        let mut x = DVector::zeros(p + 1);
        for i in 0..p {
            x[i] = w[i] / total;
        }
        x[p] = rng.random::<f64>();
        let xi = gaussian_vector(p, &mut rng) * 0.1;
        let (_, g) = cvar_component(&x, &xi, beta, gamma).unwrap();
        let fd = central_difference(|z| cvar_component(z, &xi, beta, gamma).unwrap().0, &x, h);
        worst[4] = worst[4].max(relative_error(&g, &fd));
    }
    Outcome::new(
        worst.iter().all(|&e| e <= 1e-6),
        format!(
            "max relative error: l1 {:.1e}, l2 {:.1e}, l3 {:.1e}, l4 {:.1e}, cvar {:.1e}",
            worst[0], worst[1], worst[2], worst[3], worst[4]
        ),
    )
}

/// Tuned fixed batches, with the function batch twice the Jacobian batch.
const SGN_BATCHES: (usize, usize) = (512, 256);
const SGN2_BATCHES: (usize, usize) = (32, 16);
const SGN2_INNER: usize = 100;

// 6. SGN and SGN2 reach a 1e-3 relative residual with far fewer function calls than GN.
fn sample_efficiency(keep: &mut Vec<(CompositionProblem, RunTrace)>) -> Outcome {
    let mut details = Vec::new();
    let mut held = 0;
    for seed in [1u64, 2, 3] {
        let prob = make_nlse_problem(gen_synthetic_classification(5000, 50, seed).unwrap(), OuterFunction::l2()).unwrap();
        let x0 = DVector::zeros(50);
        let gn = run(&prob, &x0, &gn_config(1.0, 700)).unwrap();

        let mut cfg = RunConfig::new(
            Algorithm::Sgn,
            1.0,
            600,
            BatchSchedule::Fixed { b: SGN_BATCHES.0, bhat: SGN_BATCHES.1 },
        );
        cfg.seed = seed;
        cfg.keep_last_step = true;
        let sgn = run(&prob, &x0, &cfg).unwrap();

        cfg.algorithm = Algorithm::Sgn2;
        cfg.schedule = BatchSchedule::Fixed { b: SGN2_BATCHES.0, bhat: SGN2_BATCHES.1 };
        cfg.inner = SGN2_INNER;
        cfg.iterations = 6;
        let sgn2 = run(&prob, &x0, &cfg).unwrap();

        let psi_star = [&gn, &sgn, &sgn2].iter().filter_map(|t| t.best_psi()).fold(f64::INFINITY, f64::min);
        let calls = |t: &RunTrace| t.first_reaching(psi_star, 1e-3).map(|r| r.oracle_f);
        let (c_gn, c_sgn, c_sgn2) = (calls(&gn), calls(&sgn), calls(&sgn2));
        let ok = match (c_gn, c_sgn, c_sgn2) {
            (Some(g), Some(s), Some(s2)) => 2 * s <= g && 2 * s2 <= g && s2 <= s,
            _ => false,
        };
        held += ok as usize;
        details.push(format!("seed {seed}: GN {c_gn:?}, SGN {c_sgn:?}, SGN2 {c_sgn2:?}"));
        let share = |t: &RunTrace| RunTrace { iterates: None, ..t.clone() };
        let sgn_kept = share(&sgn);
        let sgn2_kept = share(&sgn2);
        let prob2 = make_nlse_problem(gen_synthetic_classification(5000, 50, seed).unwrap(), OuterFunction::l2()).unwrap();
        keep.push((prob, sgn_kept));
        keep.push((prob2, sgn2_kept));
    }
    Outcome::new(
        held == 3,
        format!(
            "function calls to rel. residual 1e-3 (SGN {:?}, SGN2 {:?} inner {}): {}",
            SGN_BATCHES,
            SGN2_BATCHES,
            SGN2_INNER,
            details.join("; ")
        ),
    )
}

// 7. SGN on smoothed CVaR stays feasible and closes at least half of GN's gap.
fn cvar_pipeline() -> Outcome {
    let data = gen_synthetic_returns(10_000, 50, 11).unwrap();
    let prob = make_cvar_problem(data, CvarParams::default()).unwrap();
    let g = prob.regularizer.clone().unwrap();
    let x0 = g.feasible_point(prob.dim());
    let mut cfg = gn_config(CvarParams::DEFAULT_M, 200);
    cfg.subsolver.kind = SolverKind::PrimalDual;
    cfg.objective_every = 0;
    let gn = run(&prob, &x0, &cfg).unwrap();
    let psi0 = evaluate_objective(&prob, &x0).unwrap();
    let gap = psi0 - evaluate_objective(&prob, &gn.final_iterate).unwrap();

    cfg.algorithm = Algorithm::Sgn;
    cfg.schedule = BatchSchedule::Fixed { b: 2048, bhat: 1024 };
    cfg.seed = 11;
    cfg.keep_iterates = true;
    let sgn = run(&prob, &x0, &cfg).unwrap();
    let feasible = sgn.iterates.as_ref().unwrap().iter().all(|x| g.is_feasible(x, 1e-9));
    let reduction = psi0 - evaluate_objective(&prob, &sgn.final_iterate).unwrap();
    Outcome::new(
        feasible && gap > 0.0 && reduction >= 0.5 * gap,
        format!(
            "n=10000, p=50, 200 iterations: GN decrease {gap:.4e}, SGN (2048/1024) decrease {reduction:.4e} ({:.1}%), all iterates feasible = {feasible}",
            100.0 * reduction / gap
        ),
    )
}

// 8. Identical CLI invocations write identical bytes.
fn cli_determinism() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_sgn");
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let sh = |args: &[&str]| -> bool {
        Command::new(exe).args(args).status().map(|s| s.success()).unwrap_or(false)
    };
    let mut ok = true;
    for (problem, file, n, p) in [("nlse", "c.svm", "500", "10"), ("cvar", "r.csv", "500", "5")] {
        for suffix in ["", ".2"] {
            ok &= sh(&["gen-data", "--problem", problem, "--n", n, "--p", p, "--seed", "3", "--out", &path(&format!("{file}{suffix}"))]);
        }
        ok &= std::fs::read(path(file)).ok() == std::fs::read(path(&format!("{file}.2"))).ok();
    }
    let runs: Vec<Vec<String>> = vec![
        vec!["--algo", "gn", "--problem", "nlse", "--data", &path("c.svm"), "--iters", "10"],
        vec!["--algo", "sgn", "--problem", "nlse", "--data", &path("c.svm"), "--iters", "20", "--bF", "64", "--bJ", "32", "--seed", "9"],
        vec!["--algo", "sgn2", "--problem", "nlse", "--phi", "huber", "--data", &path("c.svm"), "--iters", "2", "--inner", "10", "--bF", "32", "--bJ", "16", "--seed", "9"],
        vec!["--algo", "sgn", "--problem", "cvar", "--data", &path("r.csv"), "--iters", "20", "--bF", "128", "--bJ", "64", "--seed", "4"],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    let mut compared = 0;
    for (k, args) in runs.iter().enumerate() {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out = path(&format!("trace{k}_{rep}.csv"));
            let mut full: Vec<&str> = vec!["run"];
            full.extend(args.iter().map(String::as_str));
            full.extend(["--out", &out]);
            ok &= sh(&full);
            outputs.push(std::fs::read(&out).unwrap_or_default());
        }
        ok &= !outputs[0].is_empty() && outputs[0] == outputs[1];
        compared += 1;
    }
    Outcome::new(ok, format!("2 generated data sets and {compared} run invocations, each executed twice: byte-identical = {ok}"))
}

// 9. Stationarity bound at the last step of every run from criterion 6.
fn stationarity_check(runs: &[(CompositionProblem, RunTrace)]) -> Outcome {
    let mut held = 0;
    let mut worst_ratio = 0.0f64;
    for (prob, tr) in runs {
        let Some(s) = tr.last_step.as_ref() else { continue };
        let rep = stationarity_report(prob, &s.x, &s.next, &s.f_tilde, &s.j_tilde, &s.u_star, 1.0).unwrap();
        held += rep.holds() as usize;
        worst_ratio = worst_ratio.max(rep.measure / rep.bound);
    }
    Outcome::new(
        !runs.is_empty() && held == runs.len(),
        format!("{held}/{} final steps satisfy measure <= bound, max measure/bound = {worst_ratio:.3}", runs.len()),
    )
}

fn main() {
    let mut kept = Vec::new();
    let mut failed = 0;
    let mut report = |k: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("{verdict} [{k}] {name}: {} ({:.1} s)", o.detail, start.elapsed().as_secs_f64());
        failed += (!o.pass) as usize;
    };
    report(1, "subsolver oracle equivalence", &mut subsolver_oracle);
    report(2, "descent inequality under exact oracles", &mut descent_inequality);
    report(3, "rate envelope", &mut rate_envelope_check);
    report(4, "estimator statistics", &mut estimator_statistics);
    report(5, "gradient checks", &mut gradient_checks);
    report(6, "sample efficiency ordering", &mut || sample_efficiency(&mut kept));
    report(7, "CVaR pipeline", &mut cvar_pipeline);
    report(8, "CLI determinism", &mut cli_determinism);
    report(9, "stationarity diagnostics", &mut || stationarity_check(&kept));
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}


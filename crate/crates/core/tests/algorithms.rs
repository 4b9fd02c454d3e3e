use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stochastic_gn::algorithms::select_output;
use stochastic_gn::estimators::{sample_batch, BatchSchedule};
use stochastic_gn::problems::{
    bootstrap_resample, gen_synthetic_classification, make_nlse_problem, ClassificationDataset, FactorModel,
};
use stochastic_gn::{run, Algorithm, CompositionProblem, OuterFunction, RunConfig, SampleCount};

fn toy(n: usize, p: usize) -> CompositionProblem {
    make_nlse_problem(gen_synthetic_classification(n, p, 4).unwrap(), OuterFunction::l2()).unwrap()
}

fn config(alg: Algorithm, iters: usize, b: usize, bhat: usize) -> RunConfig {
    let mut cfg = RunConfig::new(alg, 1.0, iters, BatchSchedule::Fixed { b, bhat });
    cfg.subsolver.tol = Some(1e-13);
    cfg
}

fn max_gap(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax()
}

#[test]
fn full_batch_sgn_follows_gn() {
    let prob = toy(60, 5);
    let x0 = DVector::zeros(5);
    let gn = run(&prob, &x0, &config(Algorithm::Gn, 15, 1, 1)).unwrap();
    let sgn = run(&prob, &x0, &config(Algorithm::Sgn, 15, 60, 60)).unwrap();
    // identical up to summation order of the full batch
    assert!(max_gap(&gn.final_iterate, &sgn.final_iterate) < 1e-10);
    for (a, b) in gn.records.iter().zip(&sgn.records) {
        assert!((a.psi.unwrap() - b.psi.unwrap()).abs() < 1e-10);
        assert_eq!(a.oracle_f, b.oracle_f);
    }
}

#[test]
fn full_batch_sgn2_follows_gn() {
    let prob = toy(40, 4);
    let x0 = DVector::zeros(4);
    let gn = run(&prob, &x0, &config(Algorithm::Gn, 12, 1, 1)).unwrap();
    let mut cfg = config(Algorithm::Sgn2, 3, 40, 40);
    cfg.inner = 3;
    let sgn2 = run(&prob, &x0, &cfg).unwrap();
    assert_eq!(sgn2.steps(), 12);
    // the SARAH correction telescopes back to the exact values
    assert!(max_gap(&gn.final_iterate, &sgn2.final_iterate) < 1e-10, "{} vs {}", gn.final_iterate, sgn2.final_iterate);
}

#[test]
fn oracle_calls_are_charged_per_batch() {
    let prob = toy(100, 3);
    let x0 = DVector::zeros(3);
    let sgn = run(&prob, &x0, &config(Algorithm::Sgn, 4, 16, 8)).unwrap();
    let f: Vec<u64> = sgn.records.iter().map(|r| r.oracle_f).collect();
    let j: Vec<u64> = sgn.records.iter().map(|r| r.oracle_j).collect();
    assert_eq!(f, vec![0, 16, 32, 48, 64]);
    assert_eq!(j, vec![0, 8, 16, 24, 32]);

    let mut cfg = config(Algorithm::Sgn2, 2, 10, 5);
    cfg.inner = 2;
    let sgn2 = run(&prob, &x0, &cfg).unwrap();
    let f: Vec<u64> = sgn2.records.iter().map(|r| r.oracle_f).collect();
    let j: Vec<u64> = sgn2.records.iter().map(|r| r.oracle_j).collect();
    // snapshot of n, then two evaluations per inner sample
    assert_eq!(f, vec![0, 100, 120, 140, 240, 260, 280]);
    assert_eq!(j, vec![0, 100, 110, 120, 220, 230, 240]);
    assert_eq!(sgn2.final_record().epochs, Some(2.8));
}

#[test]
fn runs_are_reproducible() {
    let prob = toy(80, 4);
    let x0 = DVector::zeros(4);
    let mut cfg = config(Algorithm::Sgn2, 3, 8, 4);
    cfg.inner = 5;
    cfg.seed = 21;
    let a = run(&prob, &x0, &cfg).unwrap();
    let b = run(&prob, &x0, &cfg).unwrap();
    assert_eq!(a, b);
    cfg.seed = 22;
    let c = run(&prob, &x0, &cfg).unwrap();
    assert_ne!(a.final_iterate, c.final_iterate);
}

#[test]
fn output_iterate_is_uniform() {
    let prob = toy(20, 2);
    let mut cfg = config(Algorithm::Gn, 4, 1, 1);
    cfg.keep_iterates = true;
    let trace = run(&prob, &DVector::zeros(2), &cfg).unwrap();
    let iterates = trace.iterates.clone().unwrap();
    assert_eq!(iterates.len(), 5);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let draws = 50_000;
    let mut counts = [0usize; 5];
    for _ in 0..draws {
        let x = select_output(&trace, &mut rng).unwrap();
        counts[iterates.iter().position(|y| *y == x).unwrap()] += 1;
    }
    // binomial sd at p = 0.2 is about 0.0018
    for c in counts {
        assert!((c as f64 / draws as f64 - 0.2).abs() < 0.01, "{counts:?}");
    }
}

#[test]
fn factor_model_scenarios_center_on_the_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = FactorModel::random(6, &mut rng);
    let n = 20_000;
    let xi = model.sample(n, &mut rng);
    for j in 0..6 {
        let col = xi.column(j);
        let mean = col.mean();
        let sd = col.variance().sqrt();
        assert!((mean - model.mean[j]).abs() <= 3.0 * sd / (n as f64).sqrt(), "asset {j}");
    }
}

#[test]
fn bootstrap_draws_rows_uniformly() {
    let rows = (0..4).map(|i| stochastic_gn::linalg::SparseVector::new(1, vec![0], vec![i as f64])).collect();
    let data = ClassificationDataset::new(rows, vec![1.0; 4], 1).unwrap();
    let out = bootstrap_resample(&data, 40_000, 3).unwrap();
    let mut counts = [0usize; 4];
    for r in out.rows() {
        counts[r.values()[0] as usize] += 1;
    }
    for c in counts {
        assert!((c as f64 / 40_000.0 - 0.25).abs() < 0.01, "{counts:?}");
    }
}

proptest! {
    #[test]
    fn batches_are_distinct_indices(n in 1usize..200, b in 1usize..200, seed in any::<u64>()) {
        let b = b.min(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut batch = sample_batch(SampleCount::Finite(n), b, &mut rng).unwrap();
        prop_assert_eq!(batch.len(), b);
        batch.sort_unstable();
        batch.dedup();
        prop_assert_eq!(batch.len(), b);
        prop_assert!(batch.iter().all(|&i| i < n));
    }
}

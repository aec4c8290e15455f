mod common;

use common::*;
use gem_core::continuum::{ContinuumSpec, DatasetKind, Minibatch, TaskData};
use gem_core::metrics::evaluate_all;
use gem_core::learners::{build_learner, Ewc, Gem, Learner, LearnerConfig, LearnerKind, PlainSgd, ProblemShape};
use gem_core::linalg::Matrix;
use gem_core::memory::EpisodicMemory;
use gem_core::predictor::{HeadMode, MlpConfig, Predictor};
use gem_core::{experiment, ExperimentConfig};
use proptest::prelude::*;
use rand::Rng;

/// Two-class problem in the plane whose label is the sign of `<x, w>`.
fn halfplane_batches(seed: u64, task: usize, w: [f64; 2], batches: usize) -> Vec<Minibatch> {
    let mut r = rng(seed);
    (0..batches)
        .map(|_| {
            let x = random_matrix(&mut r, 10, 2);
            let y = (0..10)
                .map(|i| (x.get(i, 0) * w[0] + x.get(i, 1) * w[1] > 0.0) as usize)
                .collect();
            Minibatch { task, x, y }
        })
        .collect()
}

fn logistic_model() -> Predictor {
    Predictor::new(MlpConfig::new(2, 2, 2).with_hidden(vec![]), 0).unwrap()
}

/// Increase of task 0's memory loss over task 1's training: the largest
/// value seen after any step, minus the value when task 1 starts.
fn memory_loss_rise<L: Learner>(mut learner: L, model: fn(&L) -> &Predictor) -> f64 {
    let task0 = halfplane_batches(1, 0, [1.0, 0.0], 60);
    let task1 = halfplane_batches(2, 1, [1.0, 1.0], 60);
    for b in &task0 {
        learner.observe(b).unwrap();
    }
    learner.on_task_end(0).unwrap();
    // the reference memory: the last 50 examples of task 0
    let mut mem = EpisodicMemory::new(100, 2).unwrap();
    for b in &task0 {
        mem.store(0, &b.x, &b.y).unwrap();
    }
    let loss = |l: &L| mem.memory_loss_grad(0, model(l)).unwrap().0;
    let start = loss(&learner);
    let mut worst = f64::NEG_INFINITY;
    for b in &task1 {
        learner.observe(b).unwrap();
        worst = worst.max(loss(&learner) - start);
    }
    worst
}

#[test]
fn gem_keeps_memory_loss_on_a_convex_problem() {
    let mut cfg = LearnerConfig::new(LearnerKind::Gem);
    cfg.memory = 100;
    cfg.lr = 0.5;
    let gem = Gem::new(logistic_model(), &cfg, 2).unwrap();
    let single = PlainSgd::new(LearnerKind::Single, logistic_model(), cfg.lr);
    let gem_rise = memory_loss_rise(gem, Gem::model);
    let single_rise = memory_loss_rise(single, PlainSgd::model);
    assert!(gem_rise <= 1e-3, "GEM memory loss rose by {gem_rise}");
    assert!(single_rise >= 0.05, "single memory loss rose by only {single_rise}");
}

#[test]
fn ewc_drift_shrinks_as_lambda_grows() {
    let task0 = halfplane_batches(11, 0, [1.0, 0.0], 40);
    let task1 = halfplane_batches(12, 1, [0.0, 1.0], 40);
    let drift = |lambda: f64| {
        let mut cfg = LearnerConfig::new(LearnerKind::Ewc);
        cfg.memory = 200;
        cfg.lr = 0.05;
        cfg.ewc_lambda = lambda;
        let mut ewc = Ewc::new(logistic_model(), &cfg, 2).unwrap();
        for b in &task0 {
            ewc.observe(b).unwrap();
        }
        ewc.on_task_end(0).unwrap();
        let anchor = ewc.model().params().clone();
        for b in &task1 {
            ewc.observe(b).unwrap();
        }
        ewc.model().params().sub(&anchor).norm()
    };
    let drifts: Vec<f64> = [0.0, 1.0, 10.0, 100.0].iter().map(|&l| drift(l)).collect();
    for w in drifts.windows(2) {
        assert!(w[1] < w[0], "drift did not shrink: {drifts:?}");
    }
    assert!(drifts[3] < 0.2 * drifts[0], "{drifts:?}");
}

#[test]
fn on_task_end_leaves_gem_and_single_untouched() {
    let shape = ProblemShape {
        input_dim: 2,
        num_classes: 2,
        num_tasks: 2,
        head_mode: HeadMode::Shared,
    };
    for kind in [LearnerKind::Single, LearnerKind::Gem] {
        let mut cfg = LearnerConfig::new(kind);
        cfg.memory = 20;
        cfg.hidden_dims = vec![3];
        let mut l = build_learner(&cfg, &shape).unwrap();
        for b in halfplane_batches(3, 0, [1.0, 1.0], 2) {
            l.observe(&b).unwrap();
        }
        let probe = random_matrix(&mut rng(4), 5, 2);
        let before = l.logits(&probe, 0).unwrap();
        l.on_task_end(0).unwrap();
        assert_eq!(l.logits(&probe, 0).unwrap(), before);
    }
}

fn synthetic(kind: LearnerKind, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(DatasetKind::Synthetic, kind);
    cfg.continuum = ContinuumSpec {
        seed,
        ..ContinuumSpec::new(DatasetKind::Synthetic)
    };
    cfg.continuum.examples_per_task = 200;
    cfg.learner.seed = seed;
    cfg.learner.memory = 250;
    cfg
}

#[test]
fn repeated_runs_are_bit_identical() {
    for kind in [
        LearnerKind::Single,
        LearnerKind::Independent,
        LearnerKind::Multimodal,
        LearnerKind::Ewc,
        LearnerKind::Gem,
    ] {
        let cfg = synthetic(kind, 3);
        let a = experiment::run(&cfg).unwrap();
        let b = experiment::run(&cfg).unwrap();
        assert_eq!(a.r, b.r, "{kind}");
        assert_eq!(a.baseline, b.baseline);
        assert_eq!(a.to_json_without_timing().unwrap(), b.to_json_without_timing().unwrap());
    }
}

#[test]
fn gem_takes_longer_than_single() {
    let single = experiment::run(&synthetic(LearnerKind::Single, 0)).unwrap();
    let gem = experiment::run(&synthetic(LearnerKind::Gem, 0)).unwrap();
    assert!(gem.wall_clock_seconds > single.wall_clock_seconds);
}

#[test]
fn random_init_accuracy_is_at_chance() {
    // labels drawn independently of the inputs, so any fixed model scores 1/C
    // up to sampling noise
    let mut r = rng(9);
    let test: Vec<TaskData> = (0..3)
        .map(|_| TaskData {
            x: random_matrix(&mut r, 1000, 8),
            y: (0..1000).map(|_| r.random_range(0..10)).collect(),
        })
        .collect();
    for seed in 0..5 {
        let model = Predictor::new(MlpConfig::new(8, 10, 3), seed).unwrap();
        let learner = PlainSgd::new(LearnerKind::Single, model, 0.1);
        for a in evaluate_all(&learner, &test).unwrap() {
            assert!((a - 0.1).abs() <= 0.03, "accuracy {a}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn memory_replays_the_last_examples_of_each_task(
        budget in 1usize..40,
        tasks in 1usize..5,
        ops in proptest::collection::vec((0usize..5, 1usize..6), 0..40),
    ) {
        let mut mem = EpisodicMemory::new(budget, tasks).unwrap();
        let m = budget / tasks;
        let mut seen: Vec<Vec<usize>> = vec![Vec::new(); tasks];
        let mut next = 0usize;
        for (t, n) in ops {
            let t = t % tasks;
            let labels: Vec<usize> = (next..next + n).collect();
            next += n;
            let x = Matrix::new(n, 1, labels.iter().map(|&v| v as f64).collect()).unwrap();
            mem.store(t, &x, &labels).unwrap();
            seen[t].extend(&labels);
            prop_assert!(mem.total_len() <= budget);
        }
        for (t, s) in seen.iter().enumerate() {
            let keep = &s[s.len().saturating_sub(m)..];
            let (x, y) = mem.contents(t).unwrap();
            prop_assert_eq!(&y[..], keep);
            prop_assert!(x.data().iter().zip(keep).all(|(&a, &b)| a == b as f64));
        }
    }
}

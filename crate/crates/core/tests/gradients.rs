mod common;

use common::*;
use gem_core::linalg::Matrix;
use gem_core::memory::EpisodicMemory;
use gem_core::predictor::{HeadMode, MlpConfig, Predictor};
use proptest::prelude::*;
use rand::Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-6;

fn batch(seed: u64, n: usize, d: usize, classes: std::ops::Range<usize>) -> (Matrix, Vec<usize>) {
    let mut r = rng(seed);
    let x = random_matrix(&mut r, n, d);
    let y = (0..n).map(|_| r.random_range(classes.clone())).collect();
    (x, y)
}

fn check(model: &Predictor, x: &Matrix, t: usize, y: &[usize]) -> f64 {
    let (_, g) = model.loss_and_grad(x, t, y).unwrap();
    rel_err(g.as_slice(), &predictor_fd(model, x, t, y, H))
}

#[test]
fn four_parameter_net() {
    let model = Predictor::new(MlpConfig::new(1, 2, 1).with_hidden(vec![]), 0).unwrap();
    assert_eq!(model.param_count(), 4);
    let (x, y) = batch(1, 5, 1, 0..2);
    assert!(check(&model, &x, 0, &y) <= TOL);
}

#[test]
fn shared_head() {
    let model = Predictor::new(MlpConfig::new(4, 3, 2).with_hidden(vec![5, 4]), 2).unwrap();
    let (x, y) = batch(3, 6, 4, 0..3);
    for t in 0..2 {
        assert!(check(&model, &x, t, &y) <= TOL);
    }
}

#[test]
fn per_task_input_layers() {
    let cfg = MlpConfig::new(3, 3, 3).with_hidden(vec![4, 3]).with_head(HeadMode::PerTaskInput);
    let model = Predictor::new(cfg, 4).unwrap();
    let (x, y) = batch(5, 6, 3, 0..3);
    for t in 0..3 {
        let (_, g) = model.loss_and_grad(&x, t, &y).unwrap();
        assert!(rel_err(g.as_slice(), &predictor_fd(&model, &x, t, &y, H)) <= TOL);
        // other tasks' input layers receive no gradient
        for other in (0..3).filter(|&o| o != t) {
            assert!(g.as_slice()[model.input_layer_span(other)].iter().all(|&v| v == 0.0));
        }
    }
}

#[test]
fn per_task_output_heads() {
    let cfg = MlpConfig::new(3, 6, 3).with_hidden(vec![4]).with_head(HeadMode::PerTaskOutput);
    let model = Predictor::new(cfg.clone(), 6).unwrap();
    for t in 0..3 {
        let (x, y) = batch(7 + t as u64, 5, 3, cfg.task_classes(t));
        assert!(check(&model, &x, t, &y) <= TOL);
    }
}

#[test]
fn memory_gradient() {
    let model = Predictor::new(MlpConfig::new(3, 4, 2).with_hidden(vec![5]), 8).unwrap();
    let mut mem = EpisodicMemory::new(12, 2).unwrap();
    for s in 0..3 {
        let (x, y) = batch(20 + s, 4, 3, 0..4);
        mem.store(1, &x, &y).unwrap();
    }
    let (_, g) = mem.memory_loss_grad(1, &model).unwrap();
    let mut probe = model.clone();
    let fd = central_diff(model.params().as_slice(), H, |theta| {
        probe.set_params(flat(theta)).unwrap();
        mem.memory_loss_grad(1, &probe).unwrap().0
    });
    assert!(rel_err(g.as_slice(), &fd) <= TOL);
}

#[test]
fn duplicated_memory_leaves_loss_and_gradient_unchanged() {
    let model = Predictor::new(MlpConfig::new(3, 4, 1).with_hidden(vec![5]), 9).unwrap();
    let (x, y) = batch(30, 4, 3, 0..4);
    let mut once = EpisodicMemory::new(8, 1).unwrap();
    once.store(0, &x, &y).unwrap();
    let mut twice = EpisodicMemory::new(8, 1).unwrap();
    twice.store(0, &x, &y).unwrap();
    twice.store(0, &x, &y).unwrap();
    let (l1, g1) = once.memory_loss_grad(0, &model).unwrap();
    let (l2, g2) = twice.memory_loss_grad(0, &model).unwrap();
    assert!((l1 - l2).abs() <= 1e-15);
    assert!(g1.sub(&g2).norm() <= 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_shapes_match_finite_differences(
        seed in any::<u64>(),
        d in 1usize..5,
        h1 in 1usize..5,
        h2 in 0usize..4,
        c in 2usize..5,
        n in 1usize..6,
    ) {
        let hidden = if h2 == 0 { vec![h1] } else { vec![h1, h2] };
        let model = Predictor::new(MlpConfig::new(d, c, 1).with_hidden(hidden), seed).unwrap();
        let (x, y) = batch(seed ^ 0xabc, n, d, 0..c);
        prop_assert!(check(&model, &x, 0, &y) <= TOL);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn small_descent_step_lowers_batch_loss(seed in any::<u64>()) {
        let model = Predictor::new(MlpConfig::new(4, 3, 1).with_hidden(vec![6, 5]), seed).unwrap();
        let (x, y) = batch(seed.wrapping_add(1), 8, 4, 0..3);
        let (before, g) = model.loss_and_grad(&x, 0, &y).unwrap();
        prop_assume!(g.norm() > 1e-8);
        let mut stepped = model.clone();
        gem_core::projection::sgd_step(&mut stepped, &g, 1e-3).unwrap();
        prop_assert!(stepped.loss(&x, 0, &y).unwrap() < before);
    }
}

mod common;

use common::*;
use gem_core::linalg::Matrix;
use gem_core::predictor::{MlpConfig, Predictor};
use gem_core::projection::{
    kkt_residual, project, project_with, sgd_step, solve_dual, DualSolverOptions, GradientBank,
    ProjectionConfig,
};
use proptest::prelude::*;

fn bank(g: &[f64], past: &[Vec<f64>]) -> GradientBank {
    GradientBank::new(flat(g), past.iter().map(|r| flat(r)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn projected_gradient_is_feasible(seed in any::<u64>(), p in 3usize..=50, k in 1usize..=5) {
        let (g, past) = violating_instance(&mut rng(seed), p, k);
        let z = project(&bank(&g, &past), 0.0).unwrap();
        for row in &past {
            let bound = -1e-6 * z.norm() * norm(row);
            prop_assert!(dot(z.as_slice(), row) >= bound);
        }
    }

    #[test]
    fn projection_matches_active_set_oracle(seed in any::<u64>(), p in 3usize..=50, k in 1usize..=3) {
        let (g, past) = violating_instance(&mut rng(seed), p, k);
        let z = project(&bank(&g, &past), 0.0).unwrap();
        let oracle = active_set_projection(&g, &past);
        prop_assert!(dist(z.as_slice(), &oracle) <= 1e-6, "distance {}", dist(z.as_slice(), &oracle));
    }

    #[test]
    fn single_constraint_matches_closed_form(seed in any::<u64>(), p in 3usize..=50) {
        let (g, past) = violating_instance(&mut rng(seed), p, 1);
        let z = project(&bank(&g, &past), 0.0).unwrap();
        prop_assert!(dist(z.as_slice(), &halfspace_projection(&g, &past[0])) <= 1e-9);
    }

    #[test]
    fn projection_is_idempotent(seed in any::<u64>(), p in 3usize..=50, k in 1usize..=5) {
        let (g, past) = violating_instance(&mut rng(seed), p, k);
        let once = project(&bank(&g, &past), 0.0).unwrap();
        let twice = project(&bank(once.as_slice(), &past), 0.0).unwrap();
        prop_assert!(dist(once.as_slice(), twice.as_slice()) <= 1e-9);
    }

    #[test]
    fn projection_commutes_with_positive_scaling(
        seed in any::<u64>(), p in 3usize..=50, k in 1usize..=5, c in 0.01f64..100.0,
    ) {
        let (g, past) = violating_instance(&mut rng(seed), p, k);
        let base = project(&bank(&g, &past), 0.0).unwrap().scaled(c);
        let gc: Vec<f64> = g.iter().map(|v| c * v).collect();
        let scaled = project(&bank(&gc, &past), 0.0).unwrap();
        prop_assert!(dist(base.as_slice(), scaled.as_slice()) <= 1e-9 * c.max(1.0) * norm(&g).max(1.0));
    }

    #[test]
    fn dual_recovery_equals_primal_optimum(seed in any::<u64>(), p in 3usize..=50, k in 1usize..=3) {
        let (g, past) = violating_instance(&mut rng(seed), p, k);
        let out = project_with(&bank(&g, &past), &ProjectionConfig::with_gamma(0.0)).unwrap();
        let v = &out.dual.expect("violating input solves the QP").v;
        prop_assert!(v.iter().all(|&x| x >= 0.0));
        let mut recovered = g.clone();
        for (row, &vk) in past.iter().zip(v) {
            for (r, x) in recovered.iter_mut().zip(row) {
                *r += vk * x;
            }
        }
        prop_assert!(dist(&recovered, &active_set_projection(&g, &past)) <= 1e-6);
    }

    #[test]
    fn satisfied_constraints_pass_through(seed in any::<u64>(), p in 3usize..=30, k in 0usize..=4) {
        let mut r = rng(seed);
        let g = gaussian_vec(&mut r, p);
        // every past gradient has a nonnegative inner product with g
        let past: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                let v = gaussian_vec(&mut r, p);
                if dot(&v, &g) < 0.0 { v.iter().map(|x| -x).collect() } else { v }
            })
            .collect();
        let z = project(&bank(&g, &past), 0.5).unwrap();
        prop_assert_eq!(z.as_slice(), g.as_slice());
    }

    #[test]
    fn gamma_pushes_into_the_interior(seed in any::<u64>(), p in 3usize..=30, k in 1usize..=3, gamma in 0.01f64..1.0) {
        let (g, past) = violating_instance(&mut rng(seed), p, k);
        let b = bank(&g, &past);
        let plain = project(&b, 0.0).unwrap();
        let biased = project(&b, gamma).unwrap();
        let mut expect = plain.clone();
        for row in &past {
            expect.axpy(gamma, &flat(row));
        }
        prop_assert!(dist(expect.as_slice(), biased.as_slice()) <= 1e-9 * (1.0 + norm(&g)));
    }
}

#[test]
fn dual_solver_matches_grid_search() {
    let mut r = rng(7);
    for _ in 0..5 {
        let (h, q) = psd_instance(&mut r);
        let sol = solve_dual(&h, &q, &DualSolverOptions::default()).unwrap();
        let grid = grid_min_3(&h, &q, 0.01, 3.0);
        assert!((objective(&h, &q, &sol.v) - grid).abs() <= 0.02);
        assert!(kkt_residual(&h, &q, &sol.v) <= 1e-8);
    }
}

#[test]
fn parallel_past_gradients_are_handled() {
    let g = [1.0, -2.0, 0.5];
    let a = vec![0.0, 1.0, 0.0];
    let past = vec![a.clone(), a.iter().map(|v| 2.0 * v).collect(), a.clone()];
    let z = project(&bank(&g, &past), 0.0).unwrap();
    assert!(dist(z.as_slice(), &halfspace_projection(&g, &a)) <= 1e-6);
}

#[test]
fn sgd_step_is_linear_in_the_learning_rate() {
    let model = Predictor::new(MlpConfig::new(3, 2, 1).with_hidden(vec![4]), 5).unwrap();
    let g = flat(&gaussian_vec(&mut rng(1), model.param_count()));

    let mut frozen = model.clone();
    sgd_step(&mut frozen, &g, 0.0).unwrap();
    assert_eq!(frozen.params(), model.params());

    let mut two = model.clone();
    sgd_step(&mut two, &g, 0.25).unwrap();
    sgd_step(&mut two, &g, 0.25).unwrap();
    let mut one = model.clone();
    sgd_step(&mut one, &g, 0.5).unwrap();
    assert!(dist(two.params().as_slice(), one.params().as_slice()) <= 1e-15);

    let short = flat(&[1.0]);
    assert!(sgd_step(&mut one, &short, 0.1).is_err());
}

#[test]
fn projected_step_keeps_quadratic_memory_losses() {
    // losses L_k(theta) = 0.5 ||theta - c_k||^2 with gradients theta - c_k
    let mut r = rng(3);
    for _ in 0..50 {
        let p = 6;
        let theta = gaussian_vec(&mut r, p);
        let centers: Vec<Vec<f64>> = (0..3).map(|_| gaussian_vec(&mut r, p)).collect();
        let target = gaussian_vec(&mut r, p);
        let grad = |c: &[f64]| theta.iter().zip(c).map(|(t, c)| t - c).collect::<Vec<_>>();
        let loss = |th: &[f64], c: &[f64]| 0.5 * dist(th, c).powi(2);
        let g = grad(&target);
        let past: Vec<Vec<f64>> = centers.iter().map(|c| grad(c)).collect();
        let z = project(&bank(&g, &past), 0.0).unwrap();
        let lr = 1e-4;
        let next: Vec<f64> = theta.iter().zip(z.as_slice()).map(|(t, z)| t - lr * z).collect();
        for c in &centers {
            // first-order change is <= 0; the quadratic remainder is lr^2 ||z||^2 / 2
            let slack = 0.5 * lr * lr * z.norm().powi(2) + 1e-12;
            assert!(loss(&next, c) <= loss(&theta, c) + slack);
        }
    }
}

#[test]
fn dual_of_worked_example() {
    let h = Matrix::from_rows(&[[1.0]]).unwrap();
    let sol = solve_dual(&h, &[-1.0], &DualSolverOptions::default()).unwrap();
    assert!((sol.v[0] - 1.0).abs() <= 1e-9);
    let z = project(&bank(&[1.0, -1.0], &[vec![0.0, 1.0]]), 0.0).unwrap();
    assert!(dist(z.as_slice(), &[1.0, 0.0]) <= 1e-9);
}

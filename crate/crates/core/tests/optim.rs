use pnode_core::optim::{minimize, minimize_with, LbfgsOptions, Status};
use proptest::prelude::*;

/// `½ xᵀ diag(d) x − bᵀx`, minimized at `x = b / d`.
fn quadratic(d: Vec<f64>, b: Vec<f64>) -> impl FnMut(&[f64]) -> Option<(f64, Vec<f64>)> {
    move |x: &[f64]| {
        let mut f = 0.0;
        let mut g = Vec::with_capacity(x.len());
        for i in 0..x.len() {
            f += 0.5 * d[i] * x[i] * x[i] - b[i] * x[i];
            g.push(d[i] * x[i] - b[i]);
        }
        Some((f, g))
    }
}

#[test]
fn ill_conditioned_quadratic_in_fifty_iterations() {
    let n = 10;
    let d: Vec<f64> = (0..n).map(|i| 10f64.powf(2.0 * i as f64 / (n - 1) as f64)).collect();
    let b: Vec<f64> = (0..n).map(|i| (i as f64 + 1.0).sin()).collect();
    let opts = LbfgsOptions {
        max_iters: 50,
        grad_tol: 1e-8,
        ..Default::default()
    };
    let r = minimize(quadratic(d.clone(), b.clone()), &vec![0.0; n], &opts);
    assert_eq!(r.status, Status::Converged, "after {} iterations", r.iterations());
    assert!(r.iterations() <= 50);
    for i in 0..n {
        assert!((r.x[i] - b[i] / d[i]).abs() < 1e-8);
    }
}

#[test]
fn steps_respect_the_length_cap() {
    let opts = LbfgsOptions {
        max_step: 0.5,
        max_iters: 200,
        grad_tol: 1e-10,
        ..Default::default()
    };
    let mut steps = Vec::new();
    let r = minimize_with(quadratic(vec![1.0, 4.0], vec![10.0, -20.0]), &[0.0, 0.0], &opts, |rec, _| {
        steps.push(rec.step)
    });
    assert_eq!(r.status, Status::Converged);
    assert!(steps.iter().all(|&s| s <= 0.5 + 1e-12));
    // The minimum is ~14 away, so the cap must have been active.
    assert!(steps.iter().filter(|&&s| (s - 0.5).abs() < 1e-12).count() > 10);
    assert!((r.x[0] - 10.0).abs() < 1e-8 && (r.x[1] + 5.0).abs() < 1e-8);
}

#[test]
fn runs_are_reproducible() {
    let f = |x: &[f64]| {
        let (a, b) = (x[0], x[1]);
        Some((
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2),
            vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)],
        ))
    };
    let opts = LbfgsOptions {
        max_iters: 300,
        grad_tol: 1e-9,
        ..Default::default()
    };
    let a = minimize(f, &[-1.2, 1.0], &opts);
    let b = minimize(f, &[-1.2, 1.0], &opts);
    assert_eq!(a.x, b.x);
    assert_eq!(a.history, b.history);
    assert_eq!(a.evals, b.evals);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn convex_quadratics_converge_monotonically(
        d in prop::collection::vec(1.0f64..100.0, 1..12),
        seed in 0u64..1000,
    ) {
        let n = d.len();
        let b: Vec<f64> = (0..n).map(|i| ((seed + i as u64) as f64 * 0.7).cos()).collect();
        // Kept well above sqrt(d·eps·|f|), where rounding hides the decrease.
        let opts = LbfgsOptions { max_iters: 200, grad_tol: 1e-6, ..Default::default() };
        let r = minimize(quadratic(d.clone(), b.clone()), &vec![1.0; n], &opts);
        prop_assert_eq!(r.status, Status::Converged);
        prop_assert!(r.history.windows(2).all(|w| w[1].loss <= w[0].loss));
        for i in 0..n {
            prop_assert!((r.x[i] - b[i] / d[i]).abs() < 1e-6);
        }
    }
}

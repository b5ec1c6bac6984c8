use nalgebra::{DMatrix, DVector};
use pnode_core::autodiff::Tape;
use pnode_core::neural::{forward, MlpParams, MlpSpec};
use pnode_core::Real;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

/// Dense matrix-vector evaluation of the same network.
fn matmul_forward(net: &MlpParams, x: &[f64]) -> Vec<f64> {
    let sizes = &net.spec.layer_sizes;
    let mut h = DVector::from_column_slice(x);
    for l in 0..net.spec.n_layers() {
        let w = DMatrix::from_row_slice(sizes[l + 1], sizes[l], net.weights(l));
        let z = w * h + DVector::from_column_slice(net.bias(l));
        h = if l + 1 == net.spec.n_layers() {
            z
        } else {
            z.map(f64::tanh)
        };
    }
    h.as_slice().to_vec()
}

fn random_net(rng: &mut impl Rng, sizes: Vec<usize>) -> MlpParams {
    let mut net = MlpParams::init(&MlpSpec::new(sizes).unwrap(), rng.gen());
    for v in net.params.iter_mut() {
        *v += rng.gen_range(-0.2..0.2);
    }
    net
}

#[test]
fn forward_matches_dense_matrix_products() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
    for sizes in [vec![7, 300, 300, 1], vec![6, 50, 50, 3], vec![2, 1, 1], vec![3, 9, 4, 8, 2]] {
        let net = random_net(&mut rng, sizes);
        let x: Vec<f64> = (0..net.spec.n_inputs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = net.forward(&x);
        let b = matmul_forward(&net, &x);
        assert_eq!(a.len(), net.spec.n_outputs());
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() <= 1e-12 * q.abs().max(1.0), "{p} vs {q}");
        }
    }
}

#[test]
fn init_is_seeded_and_bounded() {
    let spec = MlpSpec::with_hidden(7, &[300, 300], 1).unwrap();
    let a = MlpParams::init(&spec, 11);
    assert_eq!(a, MlpParams::init(&spec, 11));
    assert_ne!(a, MlpParams::init(&spec, 12));
    let limit = (6.0f64 / 307.0).sqrt();
    assert!(a.weights(0).iter().all(|w| w.abs() <= limit));
    assert!(a.bias(1).iter().all(|&b| b == 0.0));
}

#[test]
fn parameter_gradient_matches_finite_differences() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(9);
    let net = random_net(&mut rng, vec![4, 6, 5, 2]);
    let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let objective = |p: &[f64]| {
        let y = forward(&net.spec, p, &x);
        y[0] * y[0] + 3.0 * y[1]
    };
    let tape = Tape::new().unwrap();
    let w = tape.params(&net.params);
    let xv: Vec<_> = x.iter().map(|&v| Real::cst(v)).collect();
    let y = forward(&net.spec, &w, &xv);
    let g = tape.backward(y[0] * y[0] + y[1] * 3.0).unwrap().params();
    for i in 0..net.params.len() {
        let h = 1e-6;
        let mut pp = net.params.clone();
        let mut pm = net.params.clone();
        pp[i] += h;
        pm[i] -= h;
        let fd = (objective(&pp) - objective(&pm)) / (2.0 * h);
        assert!((g[i] - fd).abs() < 1e-7, "parameter {i}: {} vs {fd}", g[i]);
    }
}

#[test]
fn unflatten_checks_the_length() {
    let spec = MlpSpec::with_hidden(3, &[4], 2).unwrap();
    assert_eq!(spec.n_params(), 3 * 4 + 4 + 4 * 2 + 2);
    let flat: Vec<f64> = (0..spec.n_params()).map(|i| i as f64).collect();
    let net = MlpParams::unflatten(&spec, &flat).unwrap();
    assert_eq!(net.flatten(), flat);
    assert_eq!(net.bias(0), &[12.0, 13.0, 14.0, 15.0]);
    assert_eq!(spec.offset(1), 16);
    assert!(MlpParams::unflatten(&spec, &flat[1..]).is_err());
}

proptest! {
    #[test]
    fn taped_forward_equals_plain_forward(seed in 0u64..10_000, width in 1usize..12) {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let net = random_net(&mut rng, vec![3, width, width, 2]);
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let tape = Tape::new().unwrap();
        let w = tape.params(&net.params);
        let xv: Vec<_> = x.iter().map(|&v| Real::cst(v)).collect();
        let taped: Vec<f64> = forward(&net.spec, &w, &xv).iter().map(|v| v.value()).collect();
        let plain = net.forward(&x);
        prop_assert_eq!(taped, plain);
    }

    #[test]
    fn hidden_activations_bound_the_output(seed in 0u64..10_000) {
        // |y_j| ≤ Σ|W_jk| + |b_j| because every hidden unit lies in (−1, 1).
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let net = random_net(&mut rng, vec![2, 5, 3]);
        let x = [rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0)];
        let y = net.forward(&x);
        let w = net.weights(1);
        for j in 0..3 {
            let bound: f64 = w[j * 5..(j + 1) * 5].iter().map(|v| v.abs()).sum::<f64>() + net.bias(1)[j].abs();
            prop_assert!(y[j].abs() <= bound + 1e-12);
        }
    }
}

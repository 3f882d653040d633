use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scalar objective used by the gradient checks: output · out_grad.
fn scalar_objective(net: &Mlp, input: &[f64], out_grad: &[f64]) -> f64 {
    let y = net.output(input).unwrap();
    y.iter().zip(out_grad).map(|(a, b)| a * b).sum()
}

/// Central finite differences over every parameter of the flat vector.
fn finite_difference_grads(net: &Mlp, input: &[f64], out_grad: &[f64], h: f64) -> Vec<f64> {
    let base = net.flat_params();
    let mut out = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += h;
        let mut minus = base.clone();
        minus[i] -= h;
        let fp = scalar_objective(
            &Mlp::from_flat_params(net.sizes(), net.activation(), &plus).unwrap(),
            input,
            out_grad,
        );
        let fm = scalar_objective(
            &Mlp::from_flat_params(net.sizes(), net.activation(), &minus).unwrap(),
            input,
            out_grad,
        );
        out.push((fp - fm) / (2.0 * h));
    }
    out
}

fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-4))
        .fold(0.0, f64::max)
}

pub(crate) fn gradient_check(sizes: &[usize], seed: u64) -> f64 {
    let net = Mlp::init(sizes, Activation::Tanh, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
    let input: Vec<f64> = (0..sizes[0]).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let out_grad: Vec<f64> = (0..*sizes.last().unwrap())
        .map(|_| rng.random::<f64>() * 2.0 - 1.0)
        .collect();
    let (_, tape) = net.forward(&input).unwrap();
    let grads = net.backward(&tape, &out_grad).unwrap();
    let mut flat = Vec::new();
    for l in 0..sizes.len() - 1 {
        flat.extend_from_slice(&grads.weights[l]);
        flat.extend_from_slice(&grads.biases[l]);
    }
    let fd = finite_difference_grads(&net, &input, &out_grad, 1e-5);
    max_relative_error(&flat, &fd)
}

#[test]
fn init_is_deterministic() {
    let a = Mlp::init(&[2, 3, 1], Activation::Tanh, 7).unwrap();
    let b = Mlp::init(&[2, 3, 1], Activation::Tanh, 7).unwrap();
    assert_eq!(a.flat_params(), b.flat_params());
}

#[test]
fn init_biases_are_zero() {
    let net = Mlp::init(&[4, 5, 2], Activation::Tanh, 1).unwrap();
    for b in net.biases_ref() {
        assert!(b.iter().all(|&x| x == 0.0));
    }
}

#[test]
fn init_weight_bound_holds() {
    let net = Mlp::init(&[100, 100], Activation::Tanh, 3).unwrap();
    let bound = (6.0f64 / 200.0).sqrt();
    assert!(net.weights_ref()[0].iter().all(|w| w.abs() <= bound));
}

#[test]
fn zero_net_zero_input_gives_zero_output() {
    let net = Mlp::zeros(&[3, 4, 2], Activation::Tanh).unwrap();
    let y = net.output(&[0.0, 0.0, 0.0]).unwrap();
    assert!(y.iter().all(|&v| v == 0.0));
}

#[test]
fn two_layer_composition_matches_hand_formula() {
    // 1-1-1 net: hidden weight 1 bias 0, output weight w_out bias 0.
    let w_out = 0.37;
    let net = Mlp::from_flat_params(&[1, 1, 1], Activation::Tanh, &[1.0, 0.0, w_out, 0.0]).unwrap();
    for &x in &[-1.5, -0.2, 0.0, 0.8, 2.0] {
        let y = net.output(&[x]).unwrap();
        assert!((y[0] - x.tanh() * w_out).abs() < 1e-15);
    }
}

#[test]
fn output_finite_for_finite_params() {
    let net = Mlp::init(&[6, 8, 3], Activation::Tanh, 11).unwrap();
    let y = net.output(&[100.0, -100.0, 3.0, 0.0, 1e6, -1e6]).unwrap();
    assert!(y.iter().all(|v| v.is_finite()));
}

#[test]
fn input_dimension_mismatch_is_an_error() {
    let net = Mlp::init(&[3, 2], Activation::Tanh, 0).unwrap();
    assert!(net.output(&[1.0, 2.0]).is_err());
    assert!(net.forward(&[1.0; 4]).is_err());
}

#[test]
fn backward_matches_finite_differences() {
    let err = gradient_check(&[3, 4, 2], 42);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn zero_output_gradient_gives_zero_grads() {
    let net = Mlp::init(&[3, 5, 2], Activation::Tanh, 9).unwrap();
    let (_, tape) = net.forward(&[0.3, -0.2, 0.9]).unwrap();
    let grads = net.backward(&tape, &[0.0, 0.0]).unwrap();
    assert!(grads.weights.iter().all(|w| w.iter().all(|&g| g == 0.0)));
    assert!(grads.biases.iter().all(|b| b.iter().all(|&g| g == 0.0)));
}

#[test]
fn linear_layer_gradient_is_outer_product() {
    // Single-layer net has no activation: grad(W) = out_grad ⊗ input.
    let net = Mlp::init(&[3, 2], Activation::Tanh, 5).unwrap();
    let input = [0.5, -1.0, 2.0];
    let out_grad = [0.7, -0.3];
    let (_, tape) = net.forward(&input).unwrap();
    let grads = net.backward(&tape, &out_grad).unwrap();
    for o in 0..2 {
        for i in 0..3 {
            assert!((grads.weights[0][o * 3 + i] - out_grad[o] * input[i]).abs() < 1e-15);
        }
        assert!((grads.biases[0][o] - out_grad[o]).abs() < 1e-15);
    }
}

#[test]
fn adam_first_step_is_minus_lr() {
    // Single parameter, gradient 1: bias-corrected first step is -lr (up to eps).
    let mut net = Mlp::zeros(&[1, 1], Activation::Tanh).unwrap();
    let mut grads = Gradients::zeros_like(&net);
    grads.weights[0][0] = 1.0;
    let mut state = AdamState::new(&net, AdamConfig::with_lr(0.1));
    adam_step(&mut net, &grads, &mut state).unwrap();
    assert!((net.weights_ref()[0][0] + 0.1).abs() < 1e-6);
    assert_eq!(state.step_count(), 1);
}

#[test]
fn adam_zero_gradient_keeps_parameters() {
    let mut net = Mlp::init(&[2, 2], Activation::Tanh, 1).unwrap();
    let before = net.flat_params();
    let grads = Gradients::zeros_like(&net);
    let mut state = AdamState::new(&net, AdamConfig::default());
    adam_step(&mut net, &grads, &mut state).unwrap();
    assert_eq!(net.flat_params(), before);
    assert_eq!(state.step_count(), 1);
}

#[test]
fn adam_rejects_non_finite_gradient() {
    let mut net = Mlp::init(&[2, 2], Activation::Tanh, 1).unwrap();
    let before = net.flat_params();
    let mut grads = Gradients::zeros_like(&net);
    grads.weights[0][0] = f64::NAN;
    let mut state = AdamState::new(&net, AdamConfig::default());
    assert!(adam_step(&mut net, &grads, &mut state).is_err());
    assert_eq!(net.flat_params(), before);
    assert_eq!(state.step_count(), 0);
}

#[test]
fn adam_minimizes_quadratic() {
    // f(w) = (w-3)^2 from w=0, 500 steps at lr 0.05.
    let mut w = vec![0.0];
    let mut opt = AdamVec::new(1, AdamConfig::with_lr(0.05));
    for _ in 0..500 {
        let g = vec![2.0 * (w[0] - 3.0)];
        opt.step(&mut w, &g).unwrap();
    }
    assert!((w[0] - 3.0).abs() < 0.05, "w = {}", w[0]);
}

#[test]
fn checkpoint_roundtrip_is_lossless() {
    let net = Mlp::init(&[5, 7, 3], Activation::Tanh, 123).unwrap();
    let json = serde_json::to_string(&net.to_checkpoint(123)).unwrap();
    let back: MlpCheckpoint = serde_json::from_str(&json).unwrap();
    let restored = Mlp::from_checkpoint(&back).unwrap();
    assert_eq!(net.flat_params(), restored.flat_params());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Gradient check on random architectures up to [8,16,16,8].
    #[test]
    fn prop_gradient_check(
        n_in in 1usize..=8,
        h1 in 1usize..=16,
        h2 in 0usize..=16,
        n_out in 1usize..=8,
        seed in 0u64..1_000_000,
    ) {
        let sizes = if h2 == 0 {
            vec![n_in, h1, n_out]
        } else {
            vec![n_in, h1, h2, n_out]
        };
        let err = gradient_check(&sizes, seed);
        prop_assert!(err < 1e-4, "max relative error {} for {:?}", err, sizes);
    }
}

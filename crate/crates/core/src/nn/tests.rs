use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::frontend::ContextWindow;

fn toy_spec() -> NetworkSpec {
    NetworkSpec {
        conv: (2, 3, 2),
        fc_layers: 2,
        fc_width: 4,
        bottleneck: 3,
        n_outputs: 4,
        context: 5,
        n_mels: 4,
        scale: 1.0,
    }
}

fn window(block: Vec<f64>, context: usize, n_mels: usize) -> ContextWindow {
    ContextWindow {
        block,
        context,
        n_mels,
        center_index: 0,
    }
}

fn random_window(spec: &NetworkSpec, rng: &mut ChaCha8Rng) -> ContextWindow {
    let block = (0..spec.input_len())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    window(block, spec.context, spec.n_mels)
}

#[test]
fn selu_values() {
    assert_eq!(selu(0.0), 0.0);
    assert_eq!(selu(1.0), SELU_LAMBDA);
    assert!((selu(-20.0) - (-1.7581)).abs() < 1e-4);
    assert!((selu(-20.0) - SELU_LAMBDA * SELU_ALPHA * ((-20f64).exp() - 1.0)).abs() < 1e-15);
}

#[test]
fn zero_network_is_uniform() {
    let spec = toy_spec();
    let net = NetworkParameters::zeros(&spec, HeadKind::Softmax, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let w = random_window(&spec, &mut rng);
    for p in net.forward_am(&w).unwrap() {
        assert!((p - 0.25).abs() < 1e-15);
    }
    assert!(net
        .bottleneck_features(&w)
        .unwrap()
        .iter()
        .all(|&v| v == 0.0));
}

#[test]
fn hand_computed_forward_pass() {
    // 1 filter 1x1, one hidden layer of width 2, bottleneck 2, 2 outputs
    let spec = NetworkSpec {
        conv: (1, 1, 1),
        fc_layers: 1,
        fc_width: 2,
        bottleneck: 2,
        n_outputs: 2,
        context: 1,
        n_mels: 2,
        scale: 1.0,
    };
    let mut net = NetworkParameters::zeros(&spec, HeadKind::Softmax, 2).unwrap();
    net.layers[0].weight[(0, 0)] = 0.5;
    net.layers[0].bias[0] = 0.1;
    net.layers[1].weight = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, 0.5]);
    net.layers[1].bias = DVector::from_vec(vec![0.0, 0.2]);
    net.layers[2].weight = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, -1.0]);
    net.layers[2].bias = DVector::from_vec(vec![0.3, 0.0]);
    net.layers[3].weight = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
    let w = window(vec![1.0, -2.0], 1, 2);

    // conv: [0.6, -0.9]; hidden pre-activations -1.2 and -0.85
    let la = 1.0507009873554805 * 1.6732632423543772;
    let h1 = la * ((-1.2f64).exp() - 1.0);
    let h2 = la * ((-0.85f64).exp() - 1.0);
    let z = [h1 + 0.3, 0.5 * h1 - h2];
    let bn = net.bottleneck_features(&w).unwrap();
    assert!((bn[0] - z[0]).abs() < 1e-9 && (bn[1] - z[1]).abs() < 1e-9);
    let (l0, l1) = (2.0 * z[0], z[1]);
    let p0 = 1.0 / (1.0 + (l1 - l0).exp());
    let p = net.forward_am(&w).unwrap();
    assert!((p[0] - p0).abs() < 1e-9 && (p[1] - (1.0 - p0)).abs() < 1e-9);
}

#[test]
fn posterior_is_head_of_bottleneck_and_shift_invariant() {
    let spec = toy_spec();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut net = NetworkParameters::init(&spec, HeadKind::Softmax, 4, &mut rng).unwrap();
    let w = random_window(&spec, &mut rng);
    let p = net.forward_am(&w).unwrap();
    let z = DMatrix::from_vec(3, 1, net.bottleneck_features(&w).unwrap());
    let q = softmax(net.head_from_bottleneck(&z).as_slice());
    for (a, b) in p.iter().zip(&q) {
        assert!((a - b).abs() < 1e-9);
    }
    net.head_mut().bias.add_scalar_mut(3.7);
    for (a, b) in p.iter().zip(net.forward_am(&w).unwrap()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn shape_mismatch_is_an_error() {
    let spec = toy_spec();
    let net = NetworkParameters::zeros(&spec, HeadKind::Softmax, 4).unwrap();
    assert!(net.forward_am(&window(vec![0.0; 12], 3, 4)).is_err());
    let bad = NetworkSpec {
        conv: (2, 7, 2),
        ..spec
    };
    assert!(bad.validate().is_err());
}

#[test]
fn uniform_cross_entropy_is_log_n() {
    let y = DMatrix::zeros(7, 1);
    let (loss, _) = network::loss_grad(HeadKind::Softmax, &y, &LossTarget::Labels(&[3])).unwrap();
    assert!((loss - 7f64.ln()).abs() < 1e-12);
}

/// Central differences on every entry of layer `li`, compared with the
/// analytic gradient.
fn check_layer(net: &NetworkParameters, x: &DMatrix<f64>, target: &LossTarget, li: usize) -> f64 {
    let (_, grads) = net.loss_and_gradients(x, target, 0).unwrap();
    let (dw, db) = grads[li].clone().unwrap();
    let eps = 1e-5;
    let loss = |n: &NetworkParameters| {
        n.loss_and_gradients(x, target, net.layers.len() - 1)
            .unwrap()
            .0
    };
    let mut worst: f64 = 0.0;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
    for i in 0..dw.len() {
        let mut p = net.clone();
        p.layers[li].weight[i] += eps;
        let mut m = net.clone();
        m.layers[li].weight[i] -= eps;
        worst = worst.max(rel(dw[i], (loss(&p) - loss(&m)) / (2.0 * eps)));
    }
    for i in 0..db.len() {
        let mut p = net.clone();
        p.layers[li].bias[i] += eps;
        let mut m = net.clone();
        m.layers[li].bias[i] -= eps;
        worst = worst.max(rel(db[i], (loss(&p) - loss(&m)) / (2.0 * eps)));
    }
    worst
}

fn randomize_biases(net: &mut NetworkParameters, rng: &mut ChaCha8Rng) {
    for l in &mut net.layers {
        for b in l.bias.iter_mut() {
            *b = rng.random_range(-0.5..0.5);
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    let spec = toy_spec();
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut net = NetworkParameters::init(&spec, HeadKind::Softmax, 4, &mut rng).unwrap();
        randomize_biases(&mut net, &mut rng);
        let x = DMatrix::from_fn(spec.input_len(), 3, |_, _| rng.random_range(-1.0..1.0));
        let labels = [0, 3, 1];
        for li in 0..net.layers.len() {
            let e = check_layer(&net, &x, &LossTarget::Labels(&labels), li);
            assert!(e < 1e-4, "seed {seed} layer {li}: relative error {e}");
        }

        let mut reg = NetworkParameters::init(&spec, HeadKind::Regression, 2, &mut rng).unwrap();
        randomize_biases(&mut reg, &mut rng);
        let t = DMatrix::from_fn(2, 3, |_, _| rng.random_range(0.0..1.0));
        for li in 0..reg.layers.len() {
            let e = check_layer(&reg, &x, &LossTarget::Values(&t), li);
            assert!(
                e < 1e-4,
                "seed {seed} regression layer {li}: relative error {e}"
            );
        }
    }
}

fn windows_dataset<T: Clone>(spec: &NetworkSpec, targets: Vec<T>, seed: u64) -> Dataset<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = targets
        .into_iter()
        .map(|t| (random_window(spec, &mut rng), t))
        .collect();
    Dataset::from_windows(pairs).unwrap()
}

#[test]
fn single_sample_is_memorized() {
    let spec = toy_spec();
    let data = windows_dataset(&spec, vec![2usize], 5);
    let cfg = TrainingConfig {
        batch_size: 1,
        learning_rate: 0.1,
        epochs: 300,
        seed: 1,
        ..TrainingConfig::default()
    };
    let (net, log) = train_am(&spec, &data, &cfg).unwrap();
    assert!(log.last().unwrap().loss < 0.01, "{:?}", log.last());
    assert_eq!(frame_accuracy(&net, &data).unwrap(), 100.0);
}

#[test]
fn training_is_deterministic() {
    let spec = toy_spec();
    let data = windows_dataset(&spec, vec![0usize, 1, 2, 3, 1, 2, 0], 6);
    let cfg = TrainingConfig {
        batch_size: 3,
        epochs: 5,
        seed: 9,
        ..TrainingConfig::default()
    };
    let (a, la) = train_am(&spec, &data, &cfg).unwrap();
    let (b, lb) = train_am(&spec, &data, &cfg).unwrap();
    assert_eq!(save_checkpoint(&a), save_checkpoint(&b));
    assert_eq!(la, lb);
    let (c, _) = train_am(&spec, &data, &TrainingConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn bad_datasets_are_rejected() {
    let spec = toy_spec();
    let cfg = TrainingConfig::default();
    assert!(train_am(&spec, &windows_dataset(&spec, vec![4usize], 1), &cfg).is_err());
    let empty: Dataset<usize> = Dataset::new(5, 4).unwrap();
    assert!(train_am(&spec, &empty, &cfg).is_err());
    let net = NetworkParameters::zeros(&spec, HeadKind::Softmax, 4).unwrap();
    assert!(frame_accuracy(&net, &empty).is_err());
}

#[test]
fn frame_accuracy_counts_argmax_hits() {
    let spec = toy_spec();
    let mut net = NetworkParameters::zeros(&spec, HeadKind::Softmax, 4).unwrap();
    net.head_mut().bias[1] = 1.0;
    let two_of_three = windows_dataset(&spec, vec![1usize, 1, 3], 2);
    assert!((frame_accuracy(&net, &two_of_three).unwrap() - 200.0 / 3.0).abs() < 1e-9);
    let all = windows_dataset(&spec, vec![1usize; 5], 3);
    assert_eq!(frame_accuracy(&net, &all).unwrap(), 100.0);
}

#[test]
fn adaptation_swaps_the_head_and_freezes_the_trunk() {
    let spec = toy_spec();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let am = NetworkParameters::init(&spec, HeadKind::Softmax, 4, &mut rng).unwrap();
    let adapted = adapt_to_regression(&am);
    assert_eq!(adapted.n_head_outputs(), 32);
    let w = random_window(&spec, &mut rng);
    assert!(adapted
        .forward_regression(&w)
        .unwrap()
        .iter()
        .all(|&v| v == 0.0));
    assert_eq!(
        am.bottleneck_features(&w).unwrap(),
        adapted.bottleneck_features(&w).unwrap()
    );
    let bi = adapted.bottleneck_index();
    assert!(adapted.layers[..=bi].iter().all(|l| l.frozen));
    assert!(!adapted.head().frozen);
    let open = adapt_with(
        &am,
        &AdaptOptions {
            n_targets: 8,
            freeze_bottleneck: false,
        },
    );
    assert!(!open.layers[bi].frozen && open.layers[bi - 1].frozen);
    assert!(am.forward_regression(&w).is_err());
}

fn constant_targets(spec: &NetworkSpec, n: usize, d: usize, c: f64) -> Dataset<Vec<f64>> {
    windows_dataset(spec, vec![vec![c; d]; n], 8)
}

#[test]
fn regression_training_respects_the_freeze() {
    let spec = toy_spec();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let am = NetworkParameters::init(&spec, HeadKind::Softmax, 4, &mut rng).unwrap();
    let adapted = adapt_with(
        &am,
        &AdaptOptions {
            n_targets: 2,
            freeze_bottleneck: false,
        },
    );
    let targets = (0..20)
        .map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
        .collect();
    let data = windows_dataset(&spec, targets, 9);
    let cfg = TrainingConfig {
        loss: Loss::Mae,
        epochs: 5,
        batch_size: 4,
        ..TrainingConfig::default()
    };
    let (trained, _) = train_regression(&adapted, &data, &cfg).unwrap();
    for (a, b) in adapted.layers.iter().zip(&trained.layers) {
        if a.frozen {
            assert_eq!(a.weight.as_slice(), b.weight.as_slice(), "{}", a.name);
            assert_eq!(a.bias.as_slice(), b.bias.as_slice());
        } else {
            assert_ne!(a.weight, b.weight, "{}", a.name);
        }
    }
    assert_eq!(adapted.input_mean, trained.input_mean);
}

#[test]
fn constant_targets_are_fit_by_the_bias() {
    let spec = toy_spec();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let am = NetworkParameters::init(&spec, HeadKind::Softmax, 4, &mut rng).unwrap();
    let adapted = adapt_with(
        &am,
        &AdaptOptions {
            n_targets: 3,
            freeze_bottleneck: true,
        },
    );
    let data = constant_targets(&spec, 16, 3, 0.37);
    let cfg = TrainingConfig {
        loss: Loss::Mae,
        epochs: 3000,
        batch_size: 16,
        learning_rate: 0.002,
        ..TrainingConfig::default()
    };
    let (trained, _) = train_regression(&adapted, &data, &cfg).unwrap();
    let mae = regression_mae(&trained, &data).unwrap();
    assert!(mae < 1e-3, "mae {mae}");
}

#[test]
fn full_batch_head_training_never_increases_loss() {
    let spec = toy_spec();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let am = NetworkParameters::init(&spec, HeadKind::Softmax, 4, &mut rng).unwrap();
    let mut net = adapt_with(
        &am,
        &AdaptOptions {
            n_targets: 2,
            freeze_bottleneck: true,
        },
    );
    let targets = (0..6)
        .map(|_| vec![rng.random_range(0.5..1.0), rng.random_range(0.5..1.0)])
        .collect();
    let data = windows_dataset(&spec, targets, 10);
    let cfg = TrainingConfig {
        loss: Loss::Mae,
        epochs: 1,
        batch_size: data.len(),
        learning_rate: 1e-3,
        ..TrainingConfig::default()
    };
    let mut prev = regression_mae(&net, &data).unwrap();
    for _ in 0..100 {
        net = train_regression(&net, &data, &cfg).unwrap().0;
        let now = regression_mae(&net, &data).unwrap();
        assert!(now <= prev, "{now} > {prev}");
        prev = now;
    }
}

#[test]
fn regression_errors() {
    let spec = toy_spec();
    let am = NetworkParameters::zeros(&spec, HeadKind::Softmax, 4).unwrap();
    let cfg = TrainingConfig {
        loss: Loss::Mae,
        ..TrainingConfig::default()
    };
    let data = constant_targets(&spec, 2, 32, 0.5);
    assert!(matches!(
        train_regression(&am, &data, &cfg),
        Err(crate::Error::NotRegression)
    ));
    let adapted = adapt_to_regression(&am);
    let short = constant_targets(&spec, 2, 3, 0.5);
    assert!(train_regression(&adapted, &short, &cfg).is_err());
    let out_of_range = constant_targets(&spec, 2, 32, 1.5);
    assert!(train_regression(&adapted, &out_of_range, &cfg).is_err());
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let spec = toy_spec();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut net = NetworkParameters::init(&spec, HeadKind::Softmax, 4, &mut rng).unwrap();
    net.input_mean = vec![0.1, -3.0, 1e-300, f64::MIN_POSITIVE];
    let adapted = adapt_to_regression(&net);
    for n in [&net, &adapted] {
        let bytes = save_checkpoint(n);
        let back = load_checkpoint(&bytes).unwrap();
        assert_eq!(&back, n);
        assert_eq!(save_checkpoint(&back), bytes);
    }
    let bytes = save_checkpoint(&net);
    assert!(load_checkpoint(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(load_checkpoint(&bad).is_err());
}

#[test]
fn desk_spec_widths() {
    let s = NetworkSpec::desk(64);
    assert_eq!(
        (s.n_filters(), s.hidden_width(), s.bottleneck_width()),
        (16, 128, 64)
    );
    assert_eq!(s.conv_positions(), 33);
    let full = NetworkSpec::default();
    assert_eq!(full.n_filters() * full.conv_positions(), 128 * 33);
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(logits in proptest::collection::vec(-50.0f64..50.0, 1..20)) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        prop_assert!(p.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn posteriors_are_positive_and_normalized(seed in 0u64..1000, gain in 0.1f64..20.0) {
        let spec = toy_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = NetworkParameters::init(&spec, HeadKind::Softmax, 4, &mut rng).unwrap();
        net.head_mut().weight *= gain;
        let p = net.forward_am(&random_window(&spec, &mut rng)).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        prop_assert!(p.iter().all(|&v| v > 0.0));
    }
}

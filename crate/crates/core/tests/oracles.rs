mod common;

use common::*;
use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sketchnet::ensemble::Predictor;
use sketchnet::eval::{evaluate, mean_cross_entropy, top_k_accuracy};
use sketchnet::model::ArchitectureSpec;
use sketchnet::nn::{softmax, softmax_cross_entropy, Conv1dLayer, ParamTensor};
use sketchnet::stroke::{encode, EncodedSequence, Sketch, Stroke};
use sketchnet::train::{adam_step, AdamState, TrainConfig};
use sketchnet::{ModelState, Result};

#[test]
fn rdp_matches_recursive_oracle_on_200_polylines() {
    let cases = random_polylines(200, 7);
    let misses: Vec<_> = cases.iter().filter(|(p, e)| !rdp_matches(p, *e)).collect();
    assert!(misses.is_empty(), "mismatches: {misses:?}");
}

proptest! {
    #[test]
    fn rdp_oracle_property(
        pts in prop::collection::vec((0i64..=20, 0i64..=20), 1..=8),
        half_eps in 0i64..=12,
    ) {
        prop_assert!(rdp_matches(&pts, half_eps));
    }
}

#[test]
fn rdp_oracle_hand_case() {
    // (2,3) is 3 off the base chord; (4,1) is 0.4 off the (2,3)-(6,0) chord
    let pts = [(0, 0), (2, 3), (4, 1), (6, 0)];
    assert_eq!(rdp_oracle(&pts, 4), vec![(0, 0), (2, 3), (6, 0)]);
    assert!(rdp_matches(&pts, 4));
}

#[test]
fn conv1d_forward_matches_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (cin, cout, k, t) in [(3, 4, 5, 9), (2, 3, 3, 1), (4, 2, 7, 4), (1, 1, 1, 6)] {
        let mut layer = Conv1dLayer::new("c", cin, cout, k, &mut rng).unwrap();
        for (i, b) in layer.bias.values.iter_mut().enumerate() {
            *b = 0.1 * i as f64 - 0.05;
        }
        let x = random_tensor((2, t, cin), 11 + k as u64);
        let expected = naive_conv(&layer, &x);
        let (y, _) = layer.forward(&x).unwrap();
        assert!(max_abs_diff(&y, &expected) <= 1e-12);
        assert!(max_abs_diff(&layer.infer(&x).unwrap(), &expected) <= 1e-12);
    }
}

#[test]
fn conv1d_backward_matches_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut layer = Conv1dLayer::new("c", 3, 4, 5, &mut rng).unwrap();
    let x = random_tensor((2, 8, 3), 21);
    let dy = random_tensor((2, 8, 4), 22);
    let (dx_ref, dw_ref, db_ref) = naive_conv_grads(&layer, &x, &dy);
    let (_, cache) = layer.forward(&x).unwrap();
    let dx = layer.backward(&cache, &dy);
    assert!(max_abs_diff(&dx, &dx_ref) <= 1e-12);
    assert!(max_abs_diff(&layer.weight.grad, &dw_ref) <= 1e-12);
    assert!(max_abs_diff(&layer.bias.grad, &db_ref) <= 1e-12);
}

#[test]
fn uniform_logits_give_ln_class_count() {
    let logits = Array2::from_elem((3, 345), 0.7);
    let (loss, _) = softmax_cross_entropy(&logits, &[0, 100, 344]).unwrap();
    assert!((loss - 5.8435).abs() < 1e-4);
    assert!((loss - 345f64.ln()).abs() < 1e-12);
}

#[test]
fn softmax_hand_values() {
    // e^0, e^1, e^2 over their sum
    let p = softmax(&[0.0, 1.0, 2.0]).unwrap();
    let z = 1.0 + std::f64::consts::E + std::f64::consts::E.powi(2);
    for (got, want) in p.iter().zip([1.0 / z, std::f64::consts::E / z, std::f64::consts::E.powi(2) / z]) {
        assert!((got - want).abs() < 1e-15);
    }
}

#[test]
fn softmax_cross_entropy_gradient_hand_case() {
    let logits = Array2::from_shape_vec((1, 2), vec![0.0, 0.0]).unwrap();
    let (loss, grad) = softmax_cross_entropy(&logits, &[1]).unwrap();
    assert!((loss - 2f64.ln()).abs() < 1e-15);
    assert_eq!(grad.row(0).to_vec(), vec![0.5, -0.5]);
}

proptest! {
    #[test]
    fn softmax_shift_invariance(
        logits in prop::collection::vec(-30.0f64..30.0, 1..40),
        c in -500.0f64..500.0,
    ) {
        let a = softmax(&logits).unwrap();
        let shifted: Vec<f64> = logits.iter().map(|v| v + c).collect();
        let b = softmax(&shifted).unwrap();
        prop_assert!(max_abs_diff(&a, &b) <= 1e-12);
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn parameter_count_closed_form() {
    for spec in [
        ArchitectureSpec::default(),
        ArchitectureSpec::desk_scale(10),
        ArchitectureSpec::micro(4),
    ] {
        let model = ModelState::build(&spec, 0).unwrap();
        assert_eq!(model.parameter_count(), closed_form_parameter_count(&spec));
    }
}

#[test]
fn default_parameter_count_literal() {
    // conv: 48*3*5+144 + 64*48*5+192 + 96*64*3+288
    // lstm: 2*(96*1024+256*1024+1024) + 2*2*(512*1024+256*1024+1024)
    // dense: 512*345+345
    let conv = 864 + 15_552 + 18_720;
    let lstm = 2 * (98_304 + 262_144 + 1024) + 4 * (524_288 + 262_144 + 1024);
    let dense = 176_640 + 345;
    let model = ModelState::build(&ArchitectureSpec::default(), 0).unwrap();
    assert_eq!(model.parameter_count(), conv + lstm + dense);
}

#[test]
fn adam_two_steps_by_hand() {
    let config = TrainConfig {
        learning_rate: 0.1,
        ..TrainConfig::default()
    };
    let mut p = ParamTensor::from_values("w", &[1], vec![1.0]).unwrap();
    let mut state = AdamState::new(&[&p]);

    p.grad[0] = 0.5;
    adam_step(&mut [&mut p], &mut state, &config).unwrap();
    // m = 0.05, v = 0.00025; bias-corrected 0.5 and 0.25
    let after_one = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8);
    assert!((p.values[0] - after_one).abs() < 1e-15);

    p.grad[0] = -0.25;
    adam_step(&mut [&mut p], &mut state, &config).unwrap();
    // m = 0.9*0.05 - 0.1*0.25 = 0.02, v = 0.999*0.00025 + 0.001*0.0625 = 0.00031225
    let m_hat = 0.02 / 0.19;
    let v_hat: f64 = 0.000_312_25 / 0.001_999;
    let after_two = after_one - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
    assert!((p.values[0] - after_two).abs() < 1e-14);
    assert_eq!(state.t, 2);
}

/// Same probability row for every input.
struct Constant(Vec<f64>);

impl Predictor for Constant {
    fn class_count(&self) -> usize {
        self.0.len()
    }

    fn predict_proba(&self, seqs: &[&EncodedSequence]) -> Result<Array2<f64>> {
        let c = self.0.len();
        Ok(Array2::from_shape_fn((seqs.len(), c), |(_, j)| self.0[j]))
    }
}

/// One-hot on the true label.
struct Oracle(usize);

impl Predictor for Oracle {
    fn class_count(&self) -> usize {
        self.0
    }

    fn predict_proba(&self, seqs: &[&EncodedSequence]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((seqs.len(), self.0));
        for (i, s) in seqs.iter().enumerate() {
            out[[i, s.label.unwrap()]] = 1.0;
        }
        Ok(out)
    }
}

fn labeled(labels: &[usize]) -> Vec<EncodedSequence> {
    labels
        .iter()
        .map(|&l| encode(&Sketch::new(vec![Stroke::from_xy(&[(0.5, 0.5)]).unwrap()], Some(l)).unwrap()).unwrap())
        .collect()
}

#[test]
fn oracle_predictor_is_perfect() {
    let data = labeled(&[0, 3, 2, 1, 3]);
    let m = evaluate(&Oracle(4), &data).unwrap();
    assert_eq!((m.top1, m.top5), (100.0, 100.0));
    assert_eq!(m.cross_entropy, 0.0);
}

#[test]
fn uniform_predictor_accuracy_expectation() {
    // label uniform over 345 classes, constant uniform scores: ties rank by
    // index, so top-5 hits exactly when label < 5
    let n = 20_000;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let labels: Vec<usize> = (0..n).map(|_| rand::Rng::random_range(&mut rng, 0..345)).collect();
    let data = labeled(&labels);
    let acc = top_k_accuracy(&Constant(vec![1.0 / 345.0; 345]), &data, 5).unwrap();
    let p = 5.0 / 345.0;
    let sigma = 100.0 * (p * (1.0 - p) / n as f64).sqrt();
    assert!((acc - 100.0 * p).abs() <= 3.0 * sigma, "{acc}");
    let xent = mean_cross_entropy(&Constant(vec![1.0 / 345.0; 345]), &data).unwrap();
    assert!((xent - 5.8435).abs() < 1e-4);
}

#[test]
fn cross_entropy_three_example_hand_sum() {
    let data = labeled(&[0, 1, 2]);
    let probs = Constant(vec![0.5, 0.3, 0.2]);
    let want = -(0.5f64.ln() + 0.3f64.ln() + 0.2f64.ln()) / 3.0;
    assert!((mean_cross_entropy(&probs, &data).unwrap() - want).abs() < 1e-15);
}

#[test]
fn zero_probability_is_clamped() {
    let data = labeled(&[1]);
    let xent = mean_cross_entropy(&Constant(vec![1.0, 0.0]), &data).unwrap();
    assert!((xent + 1e-12f64.ln()).abs() < 1e-9);
}

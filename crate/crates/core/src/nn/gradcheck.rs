//! Central finite-difference gradient checking.
//!
//! A [`CheckTarget`] exposes groups of scalar entries (parameters and
//! inputs), a scalar loss and its analytic gradient. [`grad_check`]
//! perturbs every entry by `±STEP`, compares against the analytic value and
//! reports the largest relative error
//! `|analytic - numeric| / max(|analytic|, |numeric|, 1e-3)`.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    softmax, softmax_cross_entropy, BatchNormLayer, BiLstmLayer, Conv1dLayer, DenseLayer,
    DropoutLayer, Mode, ParamTensor,
};
use crate::error::Result;
use crate::model::{ArchitectureSpec, Batch, ModelState};
use crate::stroke::{prepare, Sketch, Stroke};

pub const STEP: f64 = 1e-5;
const SCALE_FLOOR: f64 = 1e-3;

pub trait CheckTarget {
    /// `(group name, entry count)` in a fixed order.
    fn groups(&self) -> Vec<(String, usize)>;
    fn value(&self, group: usize, index: usize) -> f64;
    fn set_value(&mut self, group: usize, index: usize, value: f64);
    fn loss(&mut self) -> f64;
    /// Analytic gradient per group, same order as [`CheckTarget::groups`].
    fn gradients(&mut self) -> Vec<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Offender {
    pub group: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub target: String,
    pub tolerance: f64,
    pub checked: usize,
    pub max_relative_error: f64,
    pub offenders: Vec<Offender>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.offenders.is_empty() && self.max_relative_error.is_finite()
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(SCALE_FLOOR)
}

pub fn grad_check(name: &str, target: &mut dyn CheckTarget, tolerance: f64) -> GradCheckReport {
    let analytic = target.gradients();
    let groups = target.groups();
    let mut report = GradCheckReport {
        target: name.to_string(),
        tolerance,
        checked: 0,
        max_relative_error: 0.0,
        offenders: Vec::new(),
    };
    for (g, (group, len)) in groups.iter().enumerate() {
        for i in 0..*len {
            let orig = target.value(g, i);
            target.set_value(g, i, orig + STEP);
            let up = target.loss();
            target.set_value(g, i, orig - STEP);
            let down = target.loss();
            target.set_value(g, i, orig);
            let numeric = (up - down) / (2.0 * STEP);
            let a = analytic[g][i];
            let rel = relative_error(a, numeric);
            report.checked += 1;
            if !(rel <= report.max_relative_error) {
                report.max_relative_error = rel;
            }
            if !(rel < tolerance) {
                report.offenders.push(Offender {
                    group: group.clone(),
                    index: i,
                    analytic: a,
                    numeric,
                    relative_error: rel,
                });
            }
        }
    }
    report
}

fn random_array3(dims: (usize, usize, usize), rng: &mut impl Rng) -> Array3<f64> {
    Array3::from_shape_fn(dims, |_| rng.random_range(-1.0..1.0))
}

fn random_array2(dims: (usize, usize), rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_fn(dims, |_| rng.random_range(-1.0..1.0))
}

fn param_groups(params: &[&ParamTensor]) -> Vec<(String, usize)> {
    params.iter().map(|p| (p.name.clone(), p.len())).collect()
}

/// `loss = sum(r * y)` for a fixed random projection `r`.
pub struct DenseTarget {
    pub layer: DenseLayer,
    pub input: Array2<f64>,
    pub projection: Array2<f64>,
}

impl CheckTarget for DenseTarget {
    fn groups(&self) -> Vec<(String, usize)> {
        let mut g = param_groups(&[&self.layer.weight, &self.layer.bias]);
        g.push(("input".into(), self.input.len()));
        g
    }
    fn value(&self, group: usize, index: usize) -> f64 {
        match group {
            0 => self.layer.weight.values[index],
            1 => self.layer.bias.values[index],
            _ => self.input.as_slice().unwrap()[index],
        }
    }
    fn set_value(&mut self, group: usize, index: usize, value: f64) {
        match group {
            0 => self.layer.weight.values[index] = value,
            1 => self.layer.bias.values[index] = value,
            _ => self.input.as_slice_mut().unwrap()[index] = value,
        }
    }
    fn loss(&mut self) -> f64 {
        (self.layer.infer(&self.input).unwrap() * &self.projection).sum()
    }
    fn gradients(&mut self) -> Vec<Vec<f64>> {
        self.layer.weight.zero_grad();
        self.layer.bias.zero_grad();
        let (_, cache) = self.layer.forward(&self.input).unwrap();
        let dx = self.layer.backward(&cache, &self.projection);
        vec![self.layer.weight.grad.clone(), self.layer.bias.grad.clone(), dx.into_raw_vec_and_offset().0]
    }
}

pub struct Conv1dTarget {
    pub layer: Conv1dLayer,
    pub input: Array3<f64>,
    pub projection: Array3<f64>,
}

impl CheckTarget for Conv1dTarget {
    fn groups(&self) -> Vec<(String, usize)> {
        let mut g = param_groups(&[&self.layer.weight, &self.layer.bias]);
        g.push(("input".into(), self.input.len()));
        g
    }
    fn value(&self, group: usize, index: usize) -> f64 {
        match group {
            0 => self.layer.weight.values[index],
            1 => self.layer.bias.values[index],
            _ => self.input.as_slice().unwrap()[index],
        }
    }
    fn set_value(&mut self, group: usize, index: usize, value: f64) {
        match group {
            0 => self.layer.weight.values[index] = value,
            1 => self.layer.bias.values[index] = value,
            _ => self.input.as_slice_mut().unwrap()[index] = value,
        }
    }
    fn loss(&mut self) -> f64 {
        (self.layer.infer(&self.input).unwrap() * &self.projection).sum()
    }
    fn gradients(&mut self) -> Vec<Vec<f64>> {
        self.layer.weight.zero_grad();
        self.layer.bias.zero_grad();
        let (_, cache) = self.layer.forward(&self.input).unwrap();
        let dx = self.layer.backward(&cache, &self.projection);
        vec![self.layer.weight.grad.clone(), self.layer.bias.grad.clone(), dx.into_raw_vec_and_offset().0]
    }
}

/// Batch norm checked in train mode (batch statistics) with an optional
/// padding mask.
pub struct BatchNormTarget {
    pub layer: BatchNormLayer,
    pub input: Array3<f64>,
    pub mask: Option<Array2<f64>>,
    pub projection: Array3<f64>,
    pub mode: Mode,
}

impl CheckTarget for BatchNormTarget {
    fn groups(&self) -> Vec<(String, usize)> {
        let mut g = param_groups(&[&self.layer.gamma, &self.layer.beta]);
        g.push(("input".into(), self.input.len()));
        g
    }
    fn value(&self, group: usize, index: usize) -> f64 {
        match group {
            0 => self.layer.gamma.values[index],
            1 => self.layer.beta.values[index],
            _ => self.input.as_slice().unwrap()[index],
        }
    }
    fn set_value(&mut self, group: usize, index: usize, value: f64) {
        match group {
            0 => self.layer.gamma.values[index] = value,
            1 => self.layer.beta.values[index] = value,
            _ => self.input.as_slice_mut().unwrap()[index] = value,
        }
    }
    fn loss(&mut self) -> f64 {
        let mut layer = self.layer.clone();
        let (y, _) = layer.forward(&self.input, self.mask.as_ref(), self.mode).unwrap();
        (y * &self.projection).sum()
    }
    fn gradients(&mut self) -> Vec<Vec<f64>> {
        let mut layer = self.layer.clone();
        layer.gamma.zero_grad();
        layer.beta.zero_grad();
        let (_, cache) = layer.forward(&self.input, self.mask.as_ref(), self.mode).unwrap();
        let dx = layer.backward(&cache, &self.projection);
        vec![layer.gamma.grad.clone(), layer.beta.grad.clone(), dx.into_raw_vec_and_offset().0]
    }
}

/// Dropout in train mode with a mask re-drawn from the same seed on every
/// evaluation.
pub struct DropoutTarget {
    pub layer: DropoutLayer,
    pub input: Array3<f64>,
    pub projection: Array3<f64>,
    pub seed: u64,
}

impl CheckTarget for DropoutTarget {
    fn groups(&self) -> Vec<(String, usize)> {
        vec![("input".into(), self.input.len())]
    }
    fn value(&self, _: usize, index: usize) -> f64 {
        self.input.as_slice().unwrap()[index]
    }
    fn set_value(&mut self, _: usize, index: usize, value: f64) {
        self.input.as_slice_mut().unwrap()[index] = value;
    }
    fn loss(&mut self) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (y, _) = self.layer.forward(self.input.clone(), Mode::Train, &mut rng);
        (y * &self.projection).sum()
    }
    fn gradients(&mut self) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (_, cache) = self.layer.forward(self.input.clone(), Mode::Train, &mut rng);
        vec![self.layer.backward(&cache, self.projection.clone()).into_raw_vec_and_offset().0]
    }
}

pub struct BiLstmTarget {
    pub layer: BiLstmLayer,
    pub input: Array3<f64>,
    pub mask: Option<Array2<f64>>,
    pub projection: Array3<f64>,
}

impl CheckTarget for BiLstmTarget {
    fn groups(&self) -> Vec<(String, usize)> {
        let mut g = param_groups(&self.layer.params());
        g.push(("input".into(), self.input.len()));
        g
    }
    fn value(&self, group: usize, index: usize) -> f64 {
        match self.layer.params().get(group) {
            Some(p) => p.values[index],
            None => self.input.as_slice().unwrap()[index],
        }
    }
    fn set_value(&mut self, group: usize, index: usize, value: f64) {
        if group < 6 {
            self.layer.params_mut()[group].values[index] = value;
        } else {
            self.input.as_slice_mut().unwrap()[index] = value;
        }
    }
    fn loss(&mut self) -> f64 {
        (self.layer.infer(&self.input, self.mask.as_ref()).unwrap() * &self.projection).sum()
    }
    fn gradients(&mut self) -> Vec<Vec<f64>> {
        for p in self.layer.params_mut() {
            p.zero_grad();
        }
        let (_, cache) = self.layer.forward_pass(&self.input, self.mask.as_ref()).unwrap();
        let dx = self.layer.backward_pass(&cache, &self.projection);
        let mut out: Vec<Vec<f64>> = self.layer.params().iter().map(|p| p.grad.clone()).collect();
        out.push(dx.into_raw_vec_and_offset().0);
        out
    }
}

/// Mean softmax cross-entropy w.r.t. the logits.
pub struct SoftmaxCrossEntropyTarget {
    pub logits: Array2<f64>,
    pub labels: Vec<usize>,
}

impl CheckTarget for SoftmaxCrossEntropyTarget {
    fn groups(&self) -> Vec<(String, usize)> {
        vec![("logits".into(), self.logits.len())]
    }
    fn value(&self, _: usize, index: usize) -> f64 {
        self.logits.as_slice().unwrap()[index]
    }
    fn set_value(&mut self, _: usize, index: usize, value: f64) {
        self.logits.as_slice_mut().unwrap()[index] = value;
    }
    fn loss(&mut self) -> f64 {
        softmax_cross_entropy(&self.logits, &self.labels).unwrap().0
    }
    fn gradients(&mut self) -> Vec<Vec<f64>> {
        let (_, g) = softmax_cross_entropy(&self.logits, &self.labels).unwrap();
        vec![g.into_raw_vec_and_offset().0]
    }
}

/// Whole network, cross-entropy loss, parameters and input entries.
pub struct ModelTarget {
    pub model: ModelState,
    pub batch: Batch,
    pub mode: Mode,
    pub seed: u64,
}

impl CheckTarget for ModelTarget {
    fn groups(&self) -> Vec<(String, usize)> {
        let mut g = param_groups(&self.model.params());
        g.push(("input".into(), self.batch.data.len()));
        g
    }
    fn value(&self, group: usize, index: usize) -> f64 {
        match self.model.params().get(group) {
            Some(p) => p.values[index],
            None => self.batch.data.as_slice().unwrap()[index],
        }
    }
    fn set_value(&mut self, group: usize, index: usize, value: f64) {
        let mut params = self.model.params_mut();
        if group < params.len() {
            params[group].values[index] = value;
        } else {
            self.batch.data.as_slice_mut().unwrap()[index] = value;
        }
    }
    fn loss(&mut self) -> f64 {
        let mut model = self.model.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (logits, _) = model.forward(&self.batch, self.mode, &mut rng).unwrap();
        let labels = self.batch.require_labels().unwrap();
        softmax_cross_entropy(&logits, &labels).unwrap().0
    }
    fn gradients(&mut self) -> Vec<Vec<f64>> {
        let mut model = self.model.clone();
        model.zero_grad();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (logits, cache) = model.forward(&self.batch, self.mode, &mut rng).unwrap();
        let labels = self.batch.require_labels().unwrap();
        let (_, dlogits) = softmax_cross_entropy(&logits, &labels).unwrap();
        let dx = model.backward(&cache, &dlogits);
        let mut out: Vec<Vec<f64>> = model.params().iter().map(|p| p.grad.clone()).collect();
        out.push(dx.into_raw_vec_and_offset().0);
        out
    }
}

/// Tolerance for layers that are linear in their parameters.
pub const LINEAR_TOLERANCE: f64 = 1e-6;
/// Tolerance for everything else.
pub const NONLINEAR_TOLERANCE: f64 = 1e-4;

fn random_sketch(points: usize, label: usize, rng: &mut impl Rng) -> Sketch {
    let mut strokes = Vec::new();
    let mut left = points;
    while left > 0 {
        let n = rng.random_range(1..=left.min(4));
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.random_range(0.0..255.0), rng.random_range(0.0..255.0)))
            .collect();
        strokes.push(Stroke::from_xy(&pts).expect("non-empty"));
        left -= n;
    }
    Sketch::new(strokes, Some(label)).expect("non-empty")
}

/// The micro network used for the composite check: 2 conv + 1 BiLSTM +
/// dense over `C = 4` classes, a batch of two sequences of lengths 7 and 5.
pub fn micro_network_target(seed: u64, mode: Mode) -> Result<ModelTarget> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = ModelState::build(&ArchitectureSpec::micro(4), seed)?;
    let a = prepare(&random_sketch(7, 1, &mut rng))?;
    let b = prepare(&random_sketch(5, 3, &mut rng))?;
    let batch = Batch::from_sequences([&a, &b])?;
    Ok(ModelTarget {
        model,
        batch,
        mode,
        seed,
    })
}

/// Runs every layer check plus the composite network check.
pub fn run_suite(seed: u64) -> Result<Vec<GradCheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::new();

    let mut dense = DenseTarget {
        layer: DenseLayer::new("dense", 5, 3, &mut rng),
        input: random_array2((3, 5), &mut rng),
        projection: random_array2((3, 3), &mut rng),
    };
    dense.layer.bias.values = vec![0.1, -0.2, 0.3];
    reports.push(grad_check("dense", &mut dense, LINEAR_TOLERANCE));

    let mut conv = Conv1dTarget {
        layer: Conv1dLayer::new("conv", 2, 2, 3, &mut rng)?,
        input: random_array3((2, 6, 2), &mut rng),
        projection: random_array3((2, 6, 2), &mut rng),
    };
    reports.push(grad_check("conv1d", &mut conv, LINEAR_TOLERANCE));

    let mut mask = Array2::ones((2, 6));
    mask[[1, 4]] = 0.0;
    mask[[1, 5]] = 0.0;
    let mut bn = BatchNormTarget {
        layer: BatchNormLayer::new("bn", 3),
        input: random_array3((2, 6, 3), &mut rng),
        mask: Some(mask.clone()),
        projection: random_array3((2, 6, 3), &mut rng),
        mode: Mode::Train,
    };
    bn.layer.gamma.values = vec![1.5, 0.7, -0.4];
    reports.push(grad_check("batchnorm-train", &mut bn, NONLINEAR_TOLERANCE));
    bn.mode = Mode::Eval;
    bn.layer.running_mean = vec![0.2, -0.1, 0.05];
    bn.layer.running_var = vec![0.8, 1.3, 0.5];
    reports.push(grad_check("batchnorm-eval", &mut bn, LINEAR_TOLERANCE));

    let mut dropout = DropoutTarget {
        layer: DropoutLayer::new(0.3)?,
        input: random_array3((2, 4, 3), &mut rng),
        projection: random_array3((2, 4, 3), &mut rng),
        seed,
    };
    reports.push(grad_check("dropout", &mut dropout, LINEAR_TOLERANCE));

    let mut lstm = BiLstmTarget {
        layer: BiLstmLayer::new("lstm", 3, 4, &mut rng)?,
        input: random_array3((2, 6, 3), &mut rng),
        mask: Some(mask),
        projection: random_array3((2, 6, 8), &mut rng),
    };
    reports.push(grad_check("bilstm", &mut lstm, NONLINEAR_TOLERANCE));

    let logits = random_array2((3, 5), &mut rng) * 3.0;
    let mut xent = SoftmaxCrossEntropyTarget {
        logits,
        labels: vec![0, 4, 2],
    };
    reports.push(grad_check("softmax-cross-entropy", &mut xent, NONLINEAR_TOLERANCE));

    let mut micro = micro_network_target(seed, Mode::Train)?;
    reports.push(grad_check("micro-network-train", &mut micro, NONLINEAR_TOLERANCE));
    let mut micro = micro_network_target(seed.wrapping_add(1), Mode::Eval)?;
    reports.push(grad_check("micro-network-eval", &mut micro, NONLINEAR_TOLERANCE));

    // softmax itself is only used inside the loss; keep it referenced so a
    // signature change shows up here.
    let _ = softmax(&[0.0, 1.0])?;
    Ok(reports)
}

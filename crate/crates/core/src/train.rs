//! Mini-batch training: Adam, global-norm gradient clipping, early stopping
//! on validation cross-entropy with best-state restoration.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Batch, ModelState};
use crate::nn::{softmax_cross_entropy, Mode, ParamTensor};
use crate::stroke::EncodedSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Group similar-length sequences into batches (batch order stays
    /// shuffled) to cut padding work.
    pub length_buckets: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3e-4,
            batch_size: 256,
            clip_norm: 1.0,
            patience: 20,
            max_epochs: 200,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            length_buckets: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("clip_norm", self.clip_norm),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::arg(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::arg(format!("{name} must be in [0, 1), got {v}")));
            }
        }
        if self.batch_size == 0 || self.patience == 0 {
            return Err(Error::arg("batch_size and patience must be at least 1"));
        }
        Ok(())
    }
}

/// Scales every gradient by `clip_norm / g` when the global L2 norm `g`
/// exceeds `clip_norm`. Returns the norm before clipping.
pub fn clip_gradients(params: &mut [&mut ParamTensor], clip_norm: f64) -> Result<f64> {
    if !(clip_norm > 0.0) {
        return Err(Error::arg(format!("clip_norm must be positive, got {clip_norm}")));
    }
    let mut sq = 0.0;
    for p in params.iter() {
        if p.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(p.name.clone()));
        }
        sq += p.grad_norm_sq();
    }
    let norm = sq.sqrt();
    if norm > clip_norm {
        let scale = clip_norm / norm;
        for p in params.iter_mut() {
            for g in &mut p.grad {
                *g *= scale;
            }
        }
    }
    Ok(norm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[&ParamTensor]) -> Self {
        AdamState {
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update from the accumulated gradients.
pub fn adam_step(params: &mut [&mut ParamTensor], state: &mut AdamState, config: &TrainConfig) -> Result<()> {
    if state.m.len() != params.len() || params.iter().zip(&state.m).any(|(p, m)| p.len() != m.len()) {
        return Err(Error::Shape("optimizer state does not match parameters".into()));
    }
    state.t += 1;
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        for i in 0..p.values.len() {
            let g = p.grad[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p.values[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Progress {
    Improved,
    NoImprovement,
    Stop,
}

/// Patience counter over validation loss. A loss counts as an improvement
/// only when strictly below the best so far.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: Option<f64>,
    pub best_epoch: Option<usize>,
    stale: usize,
    epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            best_epoch: None,
            stale: 0,
            epoch: 0,
        }
    }

    pub fn observe(&mut self, loss: f64) -> Progress {
        self.epoch += 1;
        if self.best.is_none_or(|b| loss < b) {
            self.best = Some(loss);
            self.best_epoch = Some(self.epoch);
            self.stale = 0;
            Progress::Improved
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                Progress::Stop
            } else {
                Progress::NoImprovement
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
    pub validation_top1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// 1-based; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
    pub stop_reason: StopReason,
    pub wall_time: Duration,
}

impl TrainReport {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.best_epoch.map(|e| &self.epochs[e - 1])
    }

    /// One JSON object per epoch, then a summary line.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&serde_json::json!({
            "best_epoch": self.best_epoch,
            "stop_reason": self.stop_reason,
            "wall_time_secs": self.wall_time.as_secs_f64(),
        }))?);
        out.push('\n');
        Ok(out)
    }

    /// Everything except wall time.
    pub fn same_trajectory(&self, other: &TrainReport) -> bool {
        self.epochs == other.epochs && self.best_epoch == other.best_epoch && self.stop_reason == other.stop_reason
    }
}

/// Mean cross-entropy and top-1 percentage in eval mode.
pub fn evaluate_loss(model: &ModelState, data: &[EncodedSequence], batch_size: usize) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::arg("cannot evaluate on an empty set"));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for chunk in data.chunks(batch_size.max(1)) {
        let batch = Batch::from_sequences(chunk)?;
        let labels = batch.require_labels()?;
        let logits = model.infer(&batch)?;
        loss += softmax_cross_entropy(&logits, &labels)?.0 * chunk.len() as f64;
        for (row, &label) in logits.rows().into_iter().zip(&labels) {
            if argmax(row.iter().copied()) == label {
                correct += 1;
            }
        }
    }
    Ok((loss / data.len() as f64, 100.0 * correct as f64 / data.len() as f64))
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Forward, backward, clip and Adam update on one batch. Returns the
/// batch loss before the update.
pub fn train_step(
    model: &mut ModelState,
    batch: &Batch,
    adam: &mut AdamState,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let labels = batch.require_labels()?;
    model.zero_grad();
    let (logits, cache) = model.forward(batch, Mode::Train, rng)?;
    let (loss, dlogits) = softmax_cross_entropy(&logits, &labels)?;
    if !loss.is_finite() {
        return Err(Error::Diverged { epoch: 0, batch: 0, loss });
    }
    model.backward(&cache, &dlogits);
    let mut params = model.params_mut();
    clip_gradients(&mut params, config.clip_norm)?;
    adam_step(&mut params, adam, config)?;
    Ok(loss)
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    rng
}

/// Batch index lists for one epoch. With bucketing, the shuffled order is
/// cut into windows of 16 batches, each window sorted by jittered length, and the
/// resulting batches shuffled again.
fn epoch_batches(
    order: &mut [usize],
    data: &[EncodedSequence],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    order.sort_unstable();
    order.shuffle(rng);
    if !config.length_buckets {
        return order.chunks(config.batch_size).map(<[usize]>::to_vec).collect();
    }
    let mut batches = Vec::new();
    for window in order.chunks_mut(config.batch_size * 16) {
        // Jittered lengths keep batch membership random when a window holds
        // the whole dataset.
        let mut keyed: Vec<(f64, usize)> = window
            .iter()
            .map(|&i| (data[i].len() as f64 * rng.random_range(0.75..1.25), i))
            .collect();
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (slot, (_, i)) in window.iter_mut().zip(keyed) {
            *slot = i;
        }
        batches.extend(window.chunks(config.batch_size).map(<[usize]>::to_vec));
    }
    batches.shuffle(rng);
    batches
}

/// Trains a copy of `initial` and returns the state with the lowest
/// validation loss together with the per-epoch report.
pub fn train(
    initial: &ModelState,
    train_set: &[EncodedSequence],
    validation_set: &[EncodedSequence],
    config: &TrainConfig,
) -> Result<(ModelState, TrainReport)> {
    config.validate()?;
    if train_set.is_empty() || validation_set.is_empty() {
        return Err(Error::arg("training needs non-empty train and validation sets"));
    }
    let start = Instant::now();
    let mut model = initial.clone_state();
    let mut best_state = initial.clone_state();
    let mut adam = AdamState::new(&model.params());
    let mut stopper = EarlyStopping::new(config.patience);
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.max_epochs {
        let mut rng = epoch_rng(config.seed, epoch);
        let batches = epoch_batches(&mut order, train_set, config, &mut rng);
        let mut total = 0.0;
        for (b, idx) in batches.iter().enumerate() {
            let batch = Batch::from_sequences(idx.iter().map(|&i| &train_set[i]))?;
            let loss = train_step(&mut model, &batch, &mut adam, config, &mut rng).map_err(|e| match e {
                Error::Diverged { loss, .. } => Error::Diverged { epoch, batch: b, loss },
                other => other,
            })?;
            total += loss * idx.len() as f64;
        }
        let (validation_loss, validation_top1) = evaluate_loss(&model, validation_set, config.batch_size)?;
        if !validation_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: batches.len(),
                loss: validation_loss,
            });
        }
        let record = EpochRecord {
            epoch,
            train_loss: total / train_set.len() as f64,
            validation_loss,
            validation_top1,
        };
        log::info!(
            "epoch {epoch}: train {:.4} val {:.4} top1 {:.2}%",
            record.train_loss,
            validation_loss,
            validation_top1
        );
        epochs.push(record);
        match stopper.observe(validation_loss) {
            Progress::Improved => best_state = model.clone_state(),
            Progress::NoImprovement => {}
            Progress::Stop => {
                stop_reason = StopReason::Patience;
                break;
            }
        }
    }
    Ok((
        best_state,
        TrainReport {
            epochs,
            best_epoch: stopper.best_epoch,
            stop_reason,
            wall_time: start.elapsed(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(values: &[f64], grad: &[f64]) -> ParamTensor {
        let mut p = ParamTensor::from_values("p", &[values.len()], values.to_vec()).unwrap();
        p.grad = grad.to_vec();
        p
    }

    #[test]
    fn clip_single() {
        let mut p = tensor(&[0.0, 0.0], &[3.0, 4.0]);
        let norm = clip_gradients(&mut [&mut p], 1.0).unwrap();
        assert_eq!(norm, 5.0);
        assert!((p.grad[0] - 0.6).abs() < 1e-15 && (p.grad[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn clip_below_threshold_untouched() {
        let mut p = tensor(&[0.0, 0.0], &[0.3, 0.4]);
        clip_gradients(&mut [&mut p], 1.0).unwrap();
        assert_eq!(p.grad, vec![0.3, 0.4]);
    }

    #[test]
    fn clip_is_global() {
        let mut a = tensor(&[0.0], &[3.0]);
        let mut b = tensor(&[0.0], &[4.0]);
        clip_gradients(&mut [&mut a, &mut b], 1.0).unwrap();
        assert!((a.grad[0] - 0.6).abs() < 1e-15);
        assert!((b.grad[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn clip_names_non_finite() {
        let mut p = tensor(&[0.0], &[f64::NAN]);
        p.name = "lstm0.fwd.w_input".into();
        match clip_gradients(&mut [&mut p], 1.0) {
            Err(Error::NonFiniteGradient(name)) => assert_eq!(name, "lstm0.fwd.w_input"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut p = tensor(&[1.5, -2.0], &[0.0, 0.0]);
        let mut s = AdamState::new(&[&p]);
        for _ in 0..10 {
            adam_step(&mut [&mut p], &mut s, &TrainConfig::default()).unwrap();
        }
        assert_eq!(p.values, vec![1.5, -2.0]);
        assert_eq!(s.t, 10);
    }

    #[test]
    fn patience_counts_strictly_worse_epochs() {
        let mut es = EarlyStopping::new(3);
        let outcomes: Vec<Progress> = [1.0, 2.0, 3.0, 4.0].iter().map(|&l| es.observe(l)).collect();
        assert_eq!(
            outcomes,
            vec![Progress::Improved, Progress::NoImprovement, Progress::NoImprovement, Progress::Stop]
        );
        assert_eq!(es.best_epoch, Some(1));
    }

    #[test]
    fn equal_loss_is_not_improvement() {
        let mut es = EarlyStopping::new(5);
        es.observe(1.0);
        assert_eq!(es.observe(1.0), Progress::NoImprovement);
    }

    #[test]
    fn invalid_config() {
        let c = TrainConfig {
            patience: 0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            learning_rate: -1.0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_from_partial_json() {
        let c: TrainConfig = serde_json::from_str(r#"{"batch_size": 32, "seed": 4}"#).unwrap();
        assert_eq!(c.batch_size, 32);
        assert_eq!(c.learning_rate, 3e-4);
        assert_eq!(c.patience, 20);
    }
}

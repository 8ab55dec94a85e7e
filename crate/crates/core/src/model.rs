//! The sketch classifier: a 1-D convolution stack, a bidirectional LSTM
//! stack and a dense layer producing class logits.
//!
//! Each conv block is `conv -> dropout -> batch norm`, followed by zeroing
//! of padded steps; each recurrent layer is followed by dropout. The
//! recurrent output is summarized per sequence as the forward half at the
//! last valid step concatenated with the backward half at step 0.

use ndarray::{s, Array2, Array3, Ix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    softmax, BatchNormCache, BatchNormLayer, BiLstmCache, BiLstmLayer, Conv1dCache, Conv1dLayer,
    DenseCache, DenseLayer, DropoutCache, DropoutLayer, Mode, ParamTensor,
};
use crate::stroke::EncodedSequence;

/// Width of an encoded row: x, y, stroke-end flag.
pub const INPUT_CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchitectureSpec {
    pub conv_channels: Vec<usize>,
    pub conv_kernels: Vec<usize>,
    pub lstm_layers: usize,
    pub hidden_size: usize,
    pub dropout_rate: f64,
    pub class_count: usize,
    pub input_channels: usize,
    pub batchnorm_momentum: f64,
    pub batchnorm_eps: f64,
}

impl Default for ArchitectureSpec {
    fn default() -> Self {
        ArchitectureSpec {
            conv_channels: vec![48, 64, 96],
            conv_kernels: vec![5, 5, 3],
            lstm_layers: 3,
            hidden_size: 256,
            dropout_rate: 0.3,
            class_count: 345,
            input_channels: INPUT_CHANNELS,
            batchnorm_momentum: crate::nn::BATCHNORM_MOMENTUM,
            batchnorm_eps: crate::nn::BATCHNORM_EPS,
        }
    }
}

impl ArchitectureSpec {
    /// Scaled-down network for CPU-sized experiments: same topology, fewer
    /// feature maps, one recurrent layer.
    pub fn desk_scale(class_count: usize) -> Self {
        ArchitectureSpec {
            conv_channels: vec![16, 24, 32],
            conv_kernels: vec![5, 5, 3],
            lstm_layers: 1,
            hidden_size: 32,
            class_count,
            ..ArchitectureSpec::default()
        }
    }

    /// Two conv layers, one BiLSTM, dense: the gradient-check network.
    pub fn micro(class_count: usize) -> Self {
        ArchitectureSpec {
            conv_channels: vec![4, 5],
            conv_kernels: vec![3, 3],
            lstm_layers: 1,
            hidden_size: 3,
            dropout_rate: 0.0,
            class_count,
            ..ArchitectureSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::arg(m));
        if self.conv_channels.len() != self.conv_kernels.len() {
            return bad(format!(
                "{} conv channel counts but {} kernel sizes",
                self.conv_channels.len(),
                self.conv_kernels.len()
            ));
        }
        if self.conv_channels.iter().chain(&self.conv_kernels).any(|&v| v == 0) {
            return bad("conv channels and kernels must be positive".into());
        }
        if let Some(k) = self.conv_kernels.iter().find(|&&k| k % 2 == 0) {
            return bad(format!("kernel size {k} is even; same padding needs odd kernels"));
        }
        if self.lstm_layers == 0 || self.hidden_size == 0 {
            return bad("need at least one recurrent layer with positive hidden size".into());
        }
        if self.class_count < 2 {
            return bad(format!("class_count must be >= 2, got {}", self.class_count));
        }
        if self.input_channels != INPUT_CHANNELS {
            return bad(format!("input_channels must be {INPUT_CHANNELS}"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout rate {} outside [0, 1)", self.dropout_rate));
        }
        if !(self.batchnorm_momentum > 0.0 && self.batchnorm_momentum <= 1.0 && self.batchnorm_eps > 0.0) {
            return bad("batch-norm momentum must be in (0, 1] and eps positive".into());
        }
        Ok(())
    }

    pub fn summary_width(&self) -> usize {
        2 * self.hidden_size
    }
}

/// Right-padded batch of encoded sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `(B, T, 3)`, zero past each sequence's length.
    pub data: Array3<f64>,
    pub lengths: Vec<usize>,
    pub labels: Vec<Option<usize>>,
}

impl Batch {
    pub fn from_sequences<'a>(seqs: impl IntoIterator<Item = &'a EncodedSequence>) -> Result<Self> {
        let seqs: Vec<&EncodedSequence> = seqs.into_iter().collect();
        Batch::padded_to(&seqs, seqs.iter().map(|s| s.len()).max().unwrap_or(0))
    }

    /// Pads every sequence to `steps` (at least the longest length).
    pub fn padded_to(seqs: &[&EncodedSequence], steps: usize) -> Result<Self> {
        if seqs.is_empty() {
            return Err(Error::arg("empty batch"));
        }
        let longest = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        if steps < longest {
            return Err(Error::arg(format!("cannot pad to {steps} steps, longest is {longest}")));
        }
        let mut data = Array3::zeros((seqs.len(), steps, INPUT_CHANNELS));
        for (b, seq) in seqs.iter().enumerate() {
            for (t, row) in seq.rows().iter().enumerate() {
                for c in 0..INPUT_CHANNELS {
                    data[[b, t, c]] = row[c];
                }
            }
        }
        Ok(Batch {
            data,
            lengths: seqs.iter().map(|s| s.len()).collect(),
            labels: seqs.iter().map(|s| s.label).collect(),
        })
    }

    pub fn size(&self) -> usize {
        self.lengths.len()
    }

    pub fn steps(&self) -> usize {
        self.data.dim().1
    }

    /// `(B, T)` with 1 at valid steps.
    pub fn mask(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.size(), self.steps()), |(b, t)| {
            if t < self.lengths[b] {
                1.0
            } else {
                0.0
            }
        })
    }

    fn validate(&self) -> Result<()> {
        if let Some(b) = self.lengths.iter().position(|&l| l == 0) {
            return Err(Error::arg(format!("batch row {b} has no valid steps")));
        }
        if self.lengths.iter().any(|&l| l > self.steps()) || self.data.dim().2 != INPUT_CHANNELS {
            return Err(Error::Shape("batch lengths or channels inconsistent with data".into()));
        }
        Ok(())
    }

    pub fn require_labels(&self) -> Result<Vec<usize>> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, l)| l.ok_or_else(|| Error::arg(format!("batch row {i} is unlabeled"))))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    pub conv: Conv1dLayer,
    pub norm: BatchNormLayer,
}

/// Every learned and tracked quantity of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub spec: ArchitectureSpec,
    pub init_seed: u64,
    pub conv: Vec<ConvBlock>,
    pub lstm: Vec<BiLstmLayer>,
    pub dense: DenseLayer,
    dropout: DropoutLayer,
}

pub struct ForwardCache {
    mask: Array2<f64>,
    lengths: Vec<usize>,
    conv: Vec<(Conv1dCache, DropoutCache<Ix3>, BatchNormCache)>,
    lstm: Vec<(BiLstmCache, DropoutCache<Ix3>)>,
    recurrent_dims: (usize, usize, usize),
    dense: DenseCache,
}

/// Running statistics of one batch-norm layer, addressable by name.
pub struct RunningStats<'a> {
    pub name: String,
    pub mean: &'a mut Vec<f64>,
    pub var: &'a mut Vec<f64>,
}

impl ModelState {
    /// Xavier-uniform weights, zero biases except LSTM forget gates (1.0).
    pub fn build(spec: &ArchitectureSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut conv = Vec::with_capacity(spec.conv_channels.len());
        let mut width = spec.input_channels;
        for (i, (&ch, &k)) in spec.conv_channels.iter().zip(&spec.conv_kernels).enumerate() {
            let mut norm = BatchNormLayer::new(&format!("conv{i}.bn"), ch);
            norm.momentum = spec.batchnorm_momentum;
            norm.eps = spec.batchnorm_eps;
            conv.push(ConvBlock {
                conv: Conv1dLayer::new(&format!("conv{i}"), width, ch, k, &mut rng)?,
                norm,
            });
            width = ch;
        }
        let mut lstm = Vec::with_capacity(spec.lstm_layers);
        for i in 0..spec.lstm_layers {
            lstm.push(BiLstmLayer::new(&format!("lstm{i}"), width, spec.hidden_size, &mut rng)?);
            width = 2 * spec.hidden_size;
        }
        let dense = DenseLayer::new("dense", width, spec.class_count, &mut rng);
        Ok(ModelState {
            spec: spec.clone(),
            init_seed: seed,
            conv,
            lstm,
            dense,
            dropout: DropoutLayer::new(spec.dropout_rate)?,
        })
    }

    /// Deep copy; the clone shares nothing with `self`.
    pub fn clone_state(&self) -> ModelState {
        self.clone()
    }

    pub fn class_count(&self) -> usize {
        self.spec.class_count
    }

    /// Parameters in canonical order.
    pub fn params(&self) -> Vec<&ParamTensor> {
        let mut out = Vec::new();
        for block in &self.conv {
            out.extend([&block.conv.weight, &block.conv.bias, &block.norm.gamma, &block.norm.beta]);
        }
        for layer in &self.lstm {
            out.extend(layer.params());
        }
        out.extend([&self.dense.weight, &self.dense.bias]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut out = Vec::new();
        for block in &mut self.conv {
            out.extend([
                &mut block.conv.weight,
                &mut block.conv.bias,
                &mut block.norm.gamma,
                &mut block.norm.beta,
            ]);
        }
        for layer in &mut self.lstm {
            out.extend(layer.params_mut());
        }
        out.extend([&mut self.dense.weight, &mut self.dense.bias]);
        out
    }

    pub fn running_stats_mut(&mut self) -> Vec<RunningStats<'_>> {
        self.conv
            .iter_mut()
            .enumerate()
            .map(|(i, b)| RunningStats {
                name: format!("conv{i}.bn"),
                mean: &mut b.norm.running_mean,
                var: &mut b.norm.running_var,
            })
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn summarize(&self, y: &Array3<f64>, lengths: &[usize]) -> Array2<f64> {
        let h = self.spec.hidden_size;
        let mut out = Array2::zeros((lengths.len(), 2 * h));
        for (b, &len) in lengths.iter().enumerate() {
            out.slice_mut(s![b, ..h]).assign(&y.slice(s![b, len - 1, ..h]));
            out.slice_mut(s![b, h..]).assign(&y.slice(s![b, 0, h..]));
        }
        out
    }

    /// Train- or eval-mode forward pass recording activations for
    /// [`ModelState::backward`]. Train mode advances batch-norm running
    /// statistics and draws dropout masks from `rng`.
    pub fn forward<R: Rng>(
        &mut self,
        batch: &Batch,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Array2<f64>, ForwardCache)> {
        batch.validate()?;
        let mask = batch.mask();
        let mask3 = mask.clone().insert_axis(ndarray::Axis(2));
        let mut x = batch.data.clone();
        let mut conv_caches = Vec::with_capacity(self.conv.len());
        for block in &mut self.conv {
            let (y, cc) = block.conv.forward(&x)?;
            let (y, dc) = self.dropout.forward(y, mode, rng);
            let (mut y, bc) = block.norm.forward(&y, Some(&mask), mode)?;
            y *= &mask3;
            conv_caches.push((cc, dc, bc));
            x = y;
        }
        let mut lstm_caches = Vec::with_capacity(self.lstm.len());
        for layer in &self.lstm {
            let (y, lc) = layer.forward_pass(&x, Some(&mask))?;
            let (y, dc) = self.dropout.forward(y, mode, rng);
            lstm_caches.push((lc, dc));
            x = y;
        }
        let summary = self.summarize(&x, &batch.lengths);
        let (logits, dense) = self.dense.forward(&summary)?;
        Ok((
            logits,
            ForwardCache {
                mask,
                lengths: batch.lengths.clone(),
                conv: conv_caches,
                lstm: lstm_caches,
                recurrent_dims: x.dim(),
                dense,
            },
        ))
    }

    /// Eval-mode logits `(B, C)`. Pure in `(self, batch)`.
    pub fn infer(&self, batch: &Batch) -> Result<Array2<f64>> {
        batch.validate()?;
        let mask = batch.mask();
        let mask3 = mask.clone().insert_axis(ndarray::Axis(2));
        let mut x = batch.data.clone();
        for block in &self.conv {
            let y = block.conv.infer(&x)?;
            let mut y = block.norm.infer(&y)?;
            y *= &mask3;
            x = y;
        }
        for layer in &self.lstm {
            x = layer.infer(&x, Some(&mask))?;
        }
        self.dense.infer(&self.summarize(&x, &batch.lengths))
    }

    /// Accumulates parameter gradients for `dlogits` and returns the input
    /// gradient `(B, T, 3)`.
    pub fn backward(&mut self, cache: &ForwardCache, dlogits: &Array2<f64>) -> Array3<f64> {
        let h = self.spec.hidden_size;
        let dsummary = self.dense.backward(&cache.dense, dlogits);
        let mut dx = Array3::zeros(cache.recurrent_dims);
        for (b, &len) in cache.lengths.iter().enumerate() {
            let mut fwd = dx.slice_mut(s![b, len - 1, ..h]);
            fwd += &dsummary.slice(s![b, ..h]);
            let mut bwd = dx.slice_mut(s![b, 0, h..]);
            bwd += &dsummary.slice(s![b, h..]);
        }
        for (layer, (lc, dc)) in self.lstm.iter_mut().zip(&cache.lstm).rev() {
            let dy = self.dropout.backward(dc, dx);
            dx = layer.backward_pass(lc, &dy);
        }
        let mask3 = cache.mask.clone().insert_axis(ndarray::Axis(2));
        for (block, (cc, dc, bc)) in self.conv.iter_mut().zip(&cache.conv).rev() {
            dx *= &mask3;
            let dy = block.norm.backward(bc, &dx);
            let dy = self.dropout.backward(dc, dy);
            dx = block.conv.backward(cc, &dy);
        }
        dx
    }

    /// Eval-mode class probabilities, one row per sequence.
    pub fn predict_proba(&self, seqs: &[&EncodedSequence]) -> Result<Array2<f64>> {
        let batch = Batch::from_sequences(seqs.iter().copied())?;
        let logits = self.infer(&batch)?;
        let mut probs = Array2::zeros(logits.dim());
        for (i, row) in logits.rows().into_iter().enumerate() {
            let p = softmax(row.as_slice().expect("contiguous logits"))?;
            probs.row_mut(i).assign(&ndarray::Array1::from(p));
        }
        Ok(probs)
    }
}

use ndarray::{Array1, Array2, Array3, Axis};

use super::param::ParamTensor;
use super::Mode;
use crate::error::{Error, Result};

pub const DEFAULT_MOMENTUM: f64 = 0.1;
pub const DEFAULT_EPS: f64 = 1e-5;

/// Batch normalization over the channel axis, statistics pooled across
/// batch and time. Masked-out (padding) steps do not contribute to the
/// batch statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormLayer {
    pub gamma: ParamTensor,
    pub beta: ParamTensor,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    /// Normalized input, `(B*T, C)`.
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    /// Row weights: 1 for rows that fed the batch statistics.
    valid: Array1<f64>,
    count: f64,
    train: bool,
    dims: (usize, usize, usize),
}

impl BatchNormLayer {
    pub fn new(prefix: &str, channels: usize) -> Self {
        BatchNormLayer {
            gamma: ParamTensor::filled(format!("{prefix}.gamma"), &[channels], 1.0),
            beta: ParamTensor::zeros(format!("{prefix}.beta"), &[channels]),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: DEFAULT_MOMENTUM,
            eps: DEFAULT_EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn flatten(&self, x: &Array3<f64>) -> Result<Array2<f64>> {
        let (b, t, c) = x.dim();
        if c != self.channels() {
            return Err(Error::Shape(format!(
                "{}: expected {} channels, got {c}",
                self.gamma.name,
                self.channels()
            )));
        }
        Ok(x.as_standard_layout()
            .into_owned()
            .into_shape_with_order((b * t, c))
            .unwrap())
    }

    fn scale_shift(&self, xhat: &Array2<f64>) -> Array2<f64> {
        let mut y = xhat.clone();
        for mut row in y.rows_mut() {
            for ((v, g), b) in row.iter_mut().zip(&self.gamma.values).zip(&self.beta.values) {
                *v = *v * g + b;
            }
        }
        y
    }

    fn eval_normalize(&self, x2: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
        let inv_std: Array1<f64> = self
            .running_var
            .iter()
            .map(|v| 1.0 / (v + self.eps).sqrt())
            .collect();
        let mut xhat = x2.clone();
        for mut row in xhat.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (*v - self.running_mean[c]) * inv_std[c];
            }
        }
        (xhat, inv_std)
    }

    /// `mask` is `(B, T)` with 1 for valid steps; `None` means all valid.
    /// Train mode also advances the running statistics.
    pub fn forward(
        &mut self,
        x: &Array3<f64>,
        mask: Option<&Array2<f64>>,
        mode: Mode,
    ) -> Result<(Array3<f64>, BatchNormCache)> {
        let dims = x.dim();
        let x2 = self.flatten(x)?;
        let rows = x2.nrows();
        let valid: Array1<f64> = match mask {
            Some(m) => m.iter().copied().collect(),
            None => Array1::ones(rows),
        };
        if valid.len() != rows {
            return Err(Error::Shape(format!("{}: mask does not match input", self.gamma.name)));
        }

        let (xhat, inv_std, count) = match mode {
            Mode::Eval => {
                let (xhat, inv_std) = self.eval_normalize(&x2);
                (xhat, inv_std, valid.sum())
            }
            Mode::Train => {
                let n = valid.sum();
                if n < 2.0 {
                    return Err(Error::Shape(format!(
                        "{}: train-mode batch statistics need at least 2 valid steps, got {n}",
                        self.gamma.name
                    )));
                }
                let mean = valid.dot(&x2) / n;
                let centered = &x2 - &mean;
                let var = valid.dot(&(&centered * &centered)) / n;
                let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
                let xhat = &centered * &inv_std;

                let unbiased = n / (n - 1.0);
                for c in 0..self.channels() {
                    self.running_mean[c] =
                        (1.0 - self.momentum) * self.running_mean[c] + self.momentum * mean[c];
                    self.running_var[c] = (1.0 - self.momentum) * self.running_var[c]
                        + self.momentum * var[c] * unbiased;
                }
                (xhat, inv_std, n)
            }
        };

        let y = self
            .scale_shift(&xhat)
            .into_shape_with_order(dims)
            .unwrap();
        let cache = BatchNormCache {
            xhat,
            inv_std,
            valid,
            count,
            train: mode == Mode::Train,
            dims,
        };
        Ok((y, cache))
    }

    pub fn infer(&self, x: &Array3<f64>) -> Result<Array3<f64>> {
        let dims = x.dim();
        let (xhat, _) = self.eval_normalize(&self.flatten(x)?);
        Ok(self.scale_shift(&xhat).into_shape_with_order(dims).unwrap())
    }

    pub fn backward(&mut self, cache: &BatchNormCache, dy: &Array3<f64>) -> Array3<f64> {
        let (b, t, c) = cache.dims;
        let dy2 = dy
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((b * t, c))
            .unwrap();

        for (g, s) in self.gamma.grad.iter_mut().zip((&dy2 * &cache.xhat).sum_axis(Axis(0))) {
            *g += s;
        }
        for (g, s) in self.beta.grad.iter_mut().zip(dy2.sum_axis(Axis(0))) {
            *g += s;
        }

        let gamma = Array1::from(self.gamma.values.clone());
        let dxhat = &dy2 * &gamma;
        let mut dx = &dxhat * &cache.inv_std;
        if cache.train {
            // Statistics depend only on valid rows, but every row's output
            // depends on the statistics.
            let n = cache.count;
            let sum_dxhat = dxhat.sum_axis(Axis(0));
            let sum_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(0));
            for (r, mut row) in dx.rows_mut().into_iter().enumerate() {
                let w = cache.valid[r];
                if w == 0.0 {
                    continue;
                }
                for ch in 0..c {
                    row[ch] -= w * cache.inv_std[ch] / n
                        * (sum_dxhat[ch] + cache.xhat[[r, ch]] * sum_dxhat_xhat[ch]);
                }
            }
        }
        dx.into_shape_with_order((b, t, c)).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_input(b: usize, t: usize, c: usize, seed: u64) -> Array3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array3::from_shape_fn((b, t, c), |(_, _, ch)| {
            rng.random_range(-2.0..2.0) * (ch + 1) as f64 + 3.0
        })
    }

    #[test]
    fn train_mode_standardizes() {
        let mut bn = BatchNormLayer::new("bn", 3);
        let x = random_input(4, 9, 3, 1);
        let (y, _) = bn.forward(&x, None, Mode::Train).unwrap();
        let y2 = y.into_shape_with_order((36, 3)).unwrap();
        let mean = y2.mean_axis(Axis(0)).unwrap();
        let var = y2.var_axis(Axis(0), 0.0);
        for c in 0..3 {
            assert!(mean[c].abs() < 1e-6);
            assert!((var[c] - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn eval_mode_with_unit_stats_is_identity() {
        let bn = BatchNormLayer::new("bn", 2);
        let x = random_input(2, 5, 2, 2);
        let y = bn.infer(&x).unwrap();
        let scale = 1.0 / (1.0 + DEFAULT_EPS).sqrt();
        for (a, b) in y.iter().zip(x.iter()) {
            assert!((a - b * scale).abs() < 1e-12);
            assert!((a - b).abs() < 1e-4 * b.abs().max(1.0));
        }
    }

    #[test]
    fn running_mean_ema() {
        let mut bn = BatchNormLayer::new("bn", 2);
        let x = random_input(3, 4, 2, 3);
        let batch_mean = x
            .clone()
            .into_shape_with_order((12, 2))
            .unwrap()
            .mean_axis(Axis(0))
            .unwrap();
        bn.forward(&x, None, Mode::Train).unwrap();
        for c in 0..2 {
            let expected = 0.9 * 0.0 + 0.1 * batch_mean[c];
            assert!((bn.running_mean[c] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn single_step_batch_rejected() {
        let mut bn = BatchNormLayer::new("bn", 2);
        let x = random_input(1, 1, 2, 4);
        assert!(bn.forward(&x, None, Mode::Train).is_err());
        assert!(bn.forward(&x, None, Mode::Eval).is_ok());
    }

    #[test]
    fn masked_rows_do_not_move_statistics() {
        let mut a = BatchNormLayer::new("bn", 2);
        let mut b = a.clone();
        let short = random_input(1, 4, 2, 5);
        let mut padded = Array3::from_elem((1, 7, 2), 99.0);
        padded.slice_mut(ndarray::s![.., ..4, ..]).assign(&short);
        let mut mask = Array2::zeros((1, 7));
        mask.slice_mut(ndarray::s![.., ..4]).fill(1.0);
        let (ya, _) = a.forward(&short, None, Mode::Train).unwrap();
        let (yb, _) = b.forward(&padded, Some(&mask), Mode::Train).unwrap();
        assert_eq!(a.running_mean, b.running_mean);
        for (p, q) in ya.iter().zip(yb.slice(ndarray::s![.., ..4, ..]).iter()) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}

use ndarray::{Array2, Array3, Axis};
use rand::Rng;

use super::param::ParamTensor;
use crate::error::{Error, Result};

/// 1-D convolution over the time axis, stride 1, zero "same" padding.
///
/// `weight` is `[out, in, k]`; `out[b, t, o] = bias[o] +
/// sum_{c, j} weight[o, c, j] * x[b, t + j - k/2, c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1dLayer {
    pub weight: ParamTensor,
    pub bias: ParamTensor,
}

#[derive(Debug, Clone)]
pub struct Conv1dCache {
    cols: Array2<f64>,
    batch: usize,
    steps: usize,
}

impl Conv1dLayer {
    pub fn new(prefix: &str, in_ch: usize, out_ch: usize, kernel: usize, rng: &mut impl Rng) -> Result<Self> {
        if kernel % 2 == 0 || in_ch == 0 || out_ch == 0 {
            return Err(Error::Shape(format!(
                "{prefix}: kernel must be odd and channels positive (k={kernel}, in={in_ch}, out={out_ch})"
            )));
        }
        Ok(Conv1dLayer {
            weight: ParamTensor::xavier(
                format!("{prefix}.weight"),
                &[out_ch, in_ch, kernel],
                in_ch * kernel,
                out_ch * kernel,
                rng,
            ),
            bias: ParamTensor::zeros(format!("{prefix}.bias"), &[out_ch]),
        })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    /// Weight rearranged to `[k * in, out]` so that `cols . w` is the convolution.
    fn weight_matrix(&self) -> Array2<f64> {
        let (out, inp, k) = (self.out_channels(), self.in_channels(), self.kernel());
        let mut w = Array2::zeros((k * inp, out));
        for o in 0..out {
            for c in 0..inp {
                for j in 0..k {
                    w[[j * inp + c, o]] = self.weight.values[(o * inp + c) * k + j];
                }
            }
        }
        w
    }

    fn im2col(&self, x: &Array3<f64>) -> Result<Array2<f64>> {
        let (b, t, c) = x.dim();
        if c != self.in_channels() {
            return Err(Error::Shape(format!(
                "{}: expected {} input channels, got {c}",
                self.weight.name,
                self.in_channels()
            )));
        }
        let k = self.kernel();
        let pad = k / 2;
        let mut cols = Array2::zeros((b * t, k * c));
        for bi in 0..b {
            for ti in 0..t {
                let mut row = cols.row_mut(bi * t + ti);
                for j in 0..k {
                    let src = ti + j;
                    if src < pad || src - pad >= t {
                        continue;
                    }
                    let xs = x.slice(ndarray::s![bi, src - pad, ..]);
                    row.slice_mut(ndarray::s![j * c..(j + 1) * c]).assign(&xs);
                }
            }
        }
        Ok(cols)
    }

    fn apply(&self, cols: &Array2<f64>, b: usize, t: usize) -> Array3<f64> {
        let mut y = cols.dot(&self.weight_matrix());
        for mut row in y.rows_mut() {
            for (v, bias) in row.iter_mut().zip(&self.bias.values) {
                *v += bias;
            }
        }
        y.into_shape_with_order((b, t, self.out_channels())).unwrap()
    }

    pub fn forward(&self, x: &Array3<f64>) -> Result<(Array3<f64>, Conv1dCache)> {
        let (b, t, _) = x.dim();
        let cols = self.im2col(x)?;
        let y = self.apply(&cols, b, t);
        Ok((y, Conv1dCache { cols, batch: b, steps: t }))
    }

    pub fn infer(&self, x: &Array3<f64>) -> Result<Array3<f64>> {
        let (b, t, _) = x.dim();
        Ok(self.apply(&self.im2col(x)?, b, t))
    }

    pub fn backward(&mut self, cache: &Conv1dCache, dy: &Array3<f64>) -> Array3<f64> {
        let (b, t) = (cache.batch, cache.steps);
        let (out, inp, k) = (self.out_channels(), self.in_channels(), self.kernel());
        let dy2 = dy
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((b * t, out))
            .unwrap();

        let dw = cache.cols.t().dot(&dy2);
        for o in 0..out {
            for c in 0..inp {
                for j in 0..k {
                    self.weight.grad[(o * inp + c) * k + j] += dw[[j * inp + c, o]];
                }
            }
        }
        for (g, s) in self.bias.grad.iter_mut().zip(dy2.sum_axis(Axis(0))) {
            *g += s;
        }

        let dcols = dy2.dot(&self.weight_matrix().t());
        let pad = k / 2;
        let mut dx = Array3::zeros((b, t, inp));
        for bi in 0..b {
            for ti in 0..t {
                let row = dcols.row(bi * t + ti);
                for j in 0..k {
                    let src = ti + j;
                    if src < pad || src - pad >= t {
                        continue;
                    }
                    let mut dst = dx.slice_mut(ndarray::s![bi, src - pad, ..]);
                    dst += &row.slice(ndarray::s![j * inp..(j + 1) * inp]);
                }
            }
        }
        dx
    }
}

use ndarray::{Array2, Axis};
use rand::Rng;

use super::param::ParamTensor;
use crate::error::{Error, Result};

/// Fully connected layer, `y = x W + b` with `W: [in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: ParamTensor,
    pub bias: ParamTensor,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    x: Array2<f64>,
}

impl DenseLayer {
    pub fn new(prefix: &str, input: usize, output: usize, rng: &mut impl Rng) -> Self {
        DenseLayer {
            weight: ParamTensor::xavier(format!("{prefix}.weight"), &[input, output], input, output, rng),
            bias: ParamTensor::zeros(format!("{prefix}.bias"), &[output]),
        }
    }

    pub fn input_size(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn output_size(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn infer(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_size() {
            return Err(Error::Shape(format!(
                "{}: expected input width {}, got {}",
                self.weight.name,
                self.input_size(),
                x.ncols()
            )));
        }
        let mut y = x.dot(&self.weight.view2());
        for mut row in y.rows_mut() {
            row += &ndarray::ArrayView1::from(&self.bias.values[..]);
        }
        Ok(y)
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<(Array2<f64>, DenseCache)> {
        let y = self.infer(x)?;
        Ok((y, DenseCache { x: x.clone() }))
    }

    pub fn backward(&mut self, cache: &DenseCache, dy: &Array2<f64>) -> Array2<f64> {
        let dw = cache.x.t().dot(dy);
        self.weight.grad2_mut().zip_mut_with(&dw, |g, d| *g += d);
        for (g, s) in self.bias.grad.iter_mut().zip(dy.sum_axis(Axis(0))) {
            *g += s;
        }
        dy.dot(&self.weight.view2().t())
    }
}

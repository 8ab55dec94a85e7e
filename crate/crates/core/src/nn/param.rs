use ndarray::{ArrayView2, ArrayViewMut2};
use rand::Rng;

use crate::error::{Error, Result};

/// A named, trainable tensor and its accumulated gradient, stored flat in
/// row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    shape: Vec<usize>,
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
}

/// Glorot/Xavier uniform bound `sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl ParamTensor {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        let n = shape.iter().product();
        ParamTensor {
            name: name.into(),
            shape: shape.to_vec(),
            values: vec![0.0; n],
            grad: vec![0.0; n],
        }
    }

    pub fn filled(name: impl Into<String>, shape: &[usize], value: f64) -> Self {
        let mut p = ParamTensor::zeros(name, shape);
        p.values.fill(value);
        p
    }

    pub fn from_values(name: impl Into<String>, shape: &[usize], values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        let n: usize = shape.iter().product();
        if values.len() != n {
            return Err(Error::Shape(format!(
                "{name}: {} values for shape {shape:?}",
                values.len()
            )));
        }
        Ok(ParamTensor {
            name,
            shape: shape.to_vec(),
            grad: vec![0.0; n],
            values,
        })
    }

    pub fn xavier(
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        fan_out: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = xavier_bound(fan_in, fan_out);
        let mut p = ParamTensor::zeros(name, shape);
        for v in &mut p.values {
            *v = rng.random_range(-bound..=bound);
        }
        p
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn grad_norm_sq(&self) -> f64 {
        self.grad.iter().map(|g| g * g).sum()
    }

    pub(crate) fn view2(&self) -> ArrayView2<'_, f64> {
        debug_assert_eq!(self.shape.len(), 2);
        ArrayView2::from_shape((self.shape[0], self.shape[1]), &self.values).unwrap()
    }

    pub(crate) fn grad2_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        debug_assert_eq!(self.shape.len(), 2);
        ArrayViewMut2::from_shape((self.shape[0], self.shape[1]), &mut self.grad).unwrap()
    }
}

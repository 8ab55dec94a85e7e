use ndarray::{Array, Dimension};
use rand::Rng;

use super::Mode;
use crate::error::{Error, Result};

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` at train time,
/// eval mode is the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutLayer {
    rate: f64,
}

/// Per-element keep scale (`0` or `1 / (1 - rate)`); `None` when nothing
/// was dropped.
#[derive(Debug, Clone)]
pub struct DropoutCache<D: Dimension> {
    scale: Option<Array<f64, D>>,
}

impl DropoutLayer {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::arg(format!("dropout rate must be in [0, 1), got {rate}")));
        }
        Ok(DropoutLayer { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn forward<D: Dimension, R: Rng>(
        &self,
        x: Array<f64, D>,
        mode: Mode,
        rng: &mut R,
    ) -> (Array<f64, D>, DropoutCache<D>) {
        if mode == Mode::Eval || self.rate == 0.0 {
            return (x, DropoutCache { scale: None });
        }
        let keep = 1.0 / (1.0 - self.rate);
        let scale = x.map(|_| if rng.random::<f64>() < self.rate { 0.0 } else { keep });
        (&x * &scale, DropoutCache { scale: Some(scale) })
    }

    pub fn backward<D: Dimension>(&self, cache: &DropoutCache<D>, dy: Array<f64, D>) -> Array<f64, D> {
        match &cache.scale {
            Some(s) => dy * s,
            None => dy,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eval_is_identity() {
        let d = DropoutLayer::new(0.3).unwrap();
        let x = Array1::from(vec![1.0, -2.0, 3.5]);
        let (y, _) = d.forward(x.clone(), Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(y, x);
    }

    #[test]
    fn train_preserves_expectation() {
        let d = DropoutLayer::new(0.3).unwrap();
        let n = 20_000;
        let x = Array1::from_elem(n, 2.0);
        let (y, _) = d.forward(x, Mode::Train, &mut ChaCha8Rng::seed_from_u64(9));
        let mean = y.sum() / n as f64;
        assert!((mean - 2.0).abs() / 2.0 < 0.02, "mean {mean}");
        let dropped = y.iter().filter(|&&v| v == 0.0).count() as f64 / n as f64;
        assert!((dropped - 0.3).abs() < 0.02);
    }

    #[test]
    fn backward_uses_same_mask() {
        let d = DropoutLayer::new(0.5).unwrap();
        let x = Array1::from_elem(64, 1.0);
        let (y, cache) = d.forward(x, Mode::Train, &mut ChaCha8Rng::seed_from_u64(2));
        let dx = d.backward(&cache, Array1::from_elem(64, 1.0));
        assert_eq!(dx, y);
    }

    #[test]
    fn rate_validated() {
        assert!(DropoutLayer::new(1.0).is_err());
        assert!(DropoutLayer::new(-0.1).is_err());
    }
}

use ndarray::Array2;

use crate::error::{Error, Result};

/// Probabilities are clamped to this floor before taking logs.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Max-subtracted softmax. `-inf` logits map to exactly zero.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::arg("softmax input must be finite or -inf"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::arg("softmax needs at least one finite logit"));
    }
    let mut out: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    Ok(out)
}

/// `-ln(max(p[label], 1e-12))`.
pub fn cross_entropy(probabilities: &[f64], label: usize) -> Result<f64> {
    let p = probabilities.get(label).ok_or_else(|| {
        Error::arg(format!(
            "label {label} out of range for {} classes",
            probabilities.len()
        ))
    })?;
    Ok(-p.max(PROBABILITY_FLOOR).ln())
}

/// Mean softmax cross-entropy over a batch and its gradient w.r.t. the
/// logits (`(p - onehot) / B`).
pub fn softmax_cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (b, c) = logits.dim();
    if labels.len() != b {
        return Err(Error::Shape(format!("{} labels for batch of {b}", labels.len())));
    }
    let mut grad = Array2::zeros((b, c));
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row: Vec<f64> = logits.row(i).to_vec();
        let p = softmax(&row)?;
        total += cross_entropy(&p, label)?;
        for (j, pj) in p.into_iter().enumerate() {
            grad[[i, j]] = (pj - if j == label { 1.0 } else { 0.0 }) / b as f64;
        }
    }
    Ok((total / b as f64, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits() {
        let p = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn masked_logit_is_exactly_zero() {
        assert_eq!(softmax(&[f64::NEG_INFINITY, 0.0]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn large_logits_do_not_overflow() {
        assert_eq!(softmax(&[1000.0, 1000.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn all_masked_is_error() {
        assert!(softmax(&[f64::NEG_INFINITY; 3]).is_err());
        assert!(softmax(&[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn cross_entropy_cases() {
        let uniform = vec![1.0 / 345.0; 345];
        assert!((cross_entropy(&uniform, 17).unwrap() - 5.843544).abs() < 1e-4);
        assert_eq!(cross_entropy(&[0.0, 1.0], 1).unwrap(), 0.0);
        assert!((cross_entropy(&[0.5, 0.5], 0).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((cross_entropy(&[1.0, 0.0], 1).unwrap() - 27.631021).abs() < 1e-5);
        assert!(cross_entropy(&[0.5, 0.5], 2).is_err());
    }

    #[test]
    fn batch_gradient_rows_sum_to_zero() {
        let logits = Array2::from_shape_vec((2, 3), vec![0.1, 2.0, -1.0, 0.0, 0.0, 3.0]).unwrap();
        let (loss, g) = softmax_cross_entropy(&logits, &[1, 0]).unwrap();
        assert!(loss > 0.0);
        for row in g.rows() {
            assert!(row.sum().abs() < 1e-15);
        }
    }
}

//! Accuracy and cross-entropy metrics and the model x dataset grid.

use std::fmt::Write as _;

use crate::ensemble::Predictor;
use crate::error::{Error, Result};
use crate::nn::PROBABILITY_FLOOR;
use crate::stroke::EncodedSequence;

const EVAL_BATCH: usize = 256;

/// `true` when `label` is among the `k` largest entries, ties ranked by
/// lower index.
pub fn in_top_k(probs: &[f64], label: usize, k: usize) -> bool {
    let p = probs[label];
    let rank = probs
        .iter()
        .enumerate()
        .filter(|&(j, &q)| q > p || (q == p && j < label))
        .count();
    rank < k
}

/// Per-example `(top1 hit, top5 hit, cross-entropy)` totals.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub top1: f64,
    pub top5: f64,
    pub cross_entropy: f64,
    pub n_examples: usize,
}

fn labels(data: &[EncodedSequence]) -> Result<Vec<usize>> {
    data.iter()
        .enumerate()
        .map(|(i, s)| s.label.ok_or_else(|| Error::arg(format!("example {i} is unlabeled"))))
        .collect()
}

/// Top-1 and top-5 percentages and mean cross-entropy in one pass.
pub fn evaluate(predictor: &dyn Predictor, data: &[EncodedSequence]) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::arg("cannot evaluate on an empty dataset"));
    }
    let labels = labels(data)?;
    let (mut top1, mut top5, mut xent) = (0usize, 0usize, 0.0);
    for (chunk, chunk_labels) in data.chunks(EVAL_BATCH).zip(labels.chunks(EVAL_BATCH)) {
        let refs: Vec<&EncodedSequence> = chunk.iter().collect();
        let probs = predictor.predict_proba(&refs)?;
        for (row, &label) in probs.rows().into_iter().zip(chunk_labels) {
            let row = row.to_vec();
            if label >= row.len() {
                return Err(Error::arg(format!("label {label} out of range for {} classes", row.len())));
            }
            top1 += in_top_k(&row, label, 1) as usize;
            top5 += in_top_k(&row, label, 5) as usize;
            xent -= row[label].max(PROBABILITY_FLOOR).ln();
        }
    }
    let n = data.len() as f64;
    Ok(Metrics {
        top1: 100.0 * top1 as f64 / n,
        top5: 100.0 * top5 as f64 / n,
        cross_entropy: xent / n,
        n_examples: data.len(),
    })
}

/// Percentage of examples whose label is in the top `k`.
pub fn top_k_accuracy(predictor: &dyn Predictor, data: &[EncodedSequence], k: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::arg("cannot evaluate on an empty dataset"));
    }
    let labels = labels(data)?;
    let mut hits = 0usize;
    for (chunk, chunk_labels) in data.chunks(EVAL_BATCH).zip(labels.chunks(EVAL_BATCH)) {
        let refs: Vec<&EncodedSequence> = chunk.iter().collect();
        let probs = predictor.predict_proba(&refs)?;
        for (row, &label) in probs.rows().into_iter().zip(chunk_labels) {
            hits += in_top_k(&row.to_vec(), label, k) as usize;
        }
    }
    Ok(100.0 * hits as f64 / data.len() as f64)
}

/// Mean `-ln(max(p[label], 1e-12))`.
pub fn mean_cross_entropy(predictor: &dyn Predictor, data: &[EncodedSequence]) -> Result<f64> {
    Ok(evaluate(predictor, data)?.cross_entropy)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub model: String,
    pub dataset: String,
    pub top1: f64,
    pub top5: f64,
    pub cross_entropy: f64,
    pub n_examples: usize,
    pub repeats: usize,
}

/// A model evaluated once per repeat (typically one training seed each).
pub struct GridModel<'a> {
    pub name: String,
    pub repeats: Vec<&'a dyn Predictor>,
}

/// A test set per repeat; a single entry is shared by all repeats.
pub struct GridDataset<'a> {
    pub name: String,
    pub repeats: Vec<&'a [EncodedSequence]>,
}

/// Every model on every dataset, metrics averaged over repeats. Rows are
/// model-major.
pub fn evaluate_grid(models: &[GridModel<'_>], datasets: &[GridDataset<'_>]) -> Result<Vec<MetricRow>> {
    if models.is_empty() || datasets.is_empty() {
        return Err(Error::arg("grid needs at least one model and one dataset"));
    }
    let mut rows = Vec::with_capacity(models.len() * datasets.len());
    for model in models {
        if model.repeats.is_empty() {
            return Err(Error::arg(format!("model `{}` has no repeats", model.name)));
        }
        for dataset in datasets {
            let r = model.repeats.len();
            if dataset.repeats.len() != 1 && dataset.repeats.len() != r {
                return Err(Error::arg(format!(
                    "dataset `{}` has {} repeats, model `{}` has {r}",
                    dataset.name,
                    dataset.repeats.len(),
                    model.name
                )));
            }
            let mut sum = Metrics::default();
            for (i, predictor) in model.repeats.iter().enumerate() {
                let data = dataset.repeats[i.min(dataset.repeats.len() - 1)];
                let m = evaluate(*predictor, data)?;
                sum.top1 += m.top1;
                sum.top5 += m.top5;
                sum.cross_entropy += m.cross_entropy;
                sum.n_examples += m.n_examples;
            }
            rows.push(MetricRow {
                model: model.name.clone(),
                dataset: dataset.name.clone(),
                top1: sum.top1 / r as f64,
                top5: sum.top5 / r as f64,
                cross_entropy: sum.cross_entropy / r as f64,
                n_examples: sum.n_examples / r,
                repeats: r,
            });
        }
    }
    Ok(rows)
}

pub const CSV_HEADER: &str = "model,dataset,top1,top5,xent,n_examples,repeats";

pub fn to_csv(rows: &[MetricRow]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.2},{:.2},{:.2},{},{}",
            r.model, r.dataset, r.top1, r.top5, r.cross_entropy, r.n_examples, r.repeats
        );
    }
    out
}

/// Aligned plain-text table.
pub fn to_text(rows: &[MetricRow]) -> String {
    let mw = rows.iter().map(|r| r.model.len()).max().unwrap_or(0).max(5);
    let dw = rows.iter().map(|r| r.dataset.len()).max().unwrap_or(0).max(7);
    let mut out = format!(
        "{:<mw$}  {:<dw$}  {:>7}  {:>7}  {:>6}  {:>6}  {:>7}\n",
        "model", "dataset", "top1", "top5", "xent", "n", "repeats"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<mw$}  {:<dw$}  {:>7.2}  {:>7.2}  {:>6.2}  {:>6}  {:>7}",
            r.model, r.dataset, r.top1, r.top5, r.cross_entropy, r.n_examples, r.repeats
        );
    }
    out
}

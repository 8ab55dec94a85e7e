//! Specialist adaptation and probability-averaging ensembles.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::checkpoint::load_checkpoint;
use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::stroke::EncodedSequence;
use crate::train::{train, TrainConfig, TrainReport};

/// Anything that maps encoded sequences to class probabilities.
pub trait Predictor {
    fn class_count(&self) -> usize;
    /// One probability row per sequence.
    fn predict_proba(&self, seqs: &[&EncodedSequence]) -> Result<Array2<f64>>;
}

impl Predictor for ModelState {
    fn class_count(&self) -> usize {
        ModelState::class_count(self)
    }

    fn predict_proba(&self, seqs: &[&EncodedSequence]) -> Result<Array2<f64>> {
        ModelState::predict_proba(self, seqs)
    }
}

/// Fine-tunes a clone of `baseline` on one strategy's data with the
/// baseline's hyperparameters. The baseline is never touched.
pub fn adapt_specialist(
    baseline: &ModelState,
    train_set: &[EncodedSequence],
    validation_set: &[EncodedSequence],
    config: &TrainConfig,
) -> Result<(ModelState, TrainReport)> {
    if train_set.is_empty() {
        return Err(Error::arg("strategy train set is empty"));
    }
    train(&baseline.clone_state(), train_set, validation_set, config)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMember {
    pub name: String,
    pub model: ModelState,
}

/// Members combined by the weighted arithmetic mean of their softmax
/// outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleBundle {
    members: Vec<EnsembleMember>,
    weights: Vec<f64>,
}

impl EnsembleBundle {
    /// Uniform weights.
    pub fn new(members: Vec<EnsembleMember>) -> Result<Self> {
        let n = members.len();
        EnsembleBundle::with_weights(members, vec![1.0; n])
    }

    /// `weights` are normalized to sum to 1.
    pub fn with_weights(members: Vec<EnsembleMember>, weights: Vec<f64>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::arg("ensemble needs at least one member"));
        }
        if weights.len() != members.len() {
            return Err(Error::arg(format!("{} weights for {} members", weights.len(), members.len())));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::arg("ensemble weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::arg("ensemble weights sum to zero"));
        }
        let c = members[0].model.class_count();
        if let Some(m) = members.iter().find(|m| m.model.class_count() != c) {
            return Err(Error::Shape(format!(
                "member `{}` has {} classes, expected {c}",
                m.name,
                m.model.class_count()
            )));
        }
        Ok(EnsembleBundle {
            members,
            weights: weights.iter().map(|w| w / total).collect(),
        })
    }

    pub fn members(&self) -> &[EnsembleMember] {
        &self.members
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Combined probabilities for one sequence.
    pub fn predict(&self, seq: &EncodedSequence) -> Result<Vec<f64>> {
        Ok(self.predict_proba(&[seq])?.row(0).to_vec())
    }

    /// The `k` most probable classes outside `blacklist`, best first, with
    /// their probabilities renormalized over the allowed classes.
    pub fn top_k(&self, seq: &EncodedSequence, k: usize, blacklist: &BTreeSet<usize>) -> Result<Vec<(usize, f64)>> {
        top_k_masked(&self.predict(seq)?, k, blacklist)
    }

    /// Loads members from a manifest; relative checkpoint paths resolve
    /// against the manifest's directory.
    pub fn load_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let manifest: BundleManifest = serde_json::from_str(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        manifest.load(base)
    }
}

impl Predictor for EnsembleBundle {
    fn class_count(&self) -> usize {
        self.members[0].model.class_count()
    }

    fn predict_proba(&self, seqs: &[&EncodedSequence]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((seqs.len(), self.class_count()));
        for (m, &w) in self.members.iter().zip(&self.weights) {
            out.scaled_add(w, &m.model.predict_proba(seqs)?);
        }
        Ok(out)
    }
}

/// Ranks the non-blacklisted entries of `probs`, ties to the lower index,
/// renormalizing over the allowed classes.
pub fn top_k_masked(probs: &[f64], k: usize, blacklist: &BTreeSet<usize>) -> Result<Vec<(usize, f64)>> {
    if k == 0 {
        return Err(Error::arg("k must be at least 1"));
    }
    let allowed: Vec<usize> = (0..probs.len()).filter(|i| !blacklist.contains(i)).collect();
    if allowed.is_empty() {
        return Err(Error::arg("every class is blacklisted"));
    }
    let mass: f64 = allowed.iter().map(|&i| probs[i]).sum();
    let mut ranked = allowed;
    ranked.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    ranked.truncate(k);
    Ok(ranked
        .into_iter()
        .map(|i| (i, if mass > 0.0 { probs[i] / mass } else { 0.0 }))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestMember {
    pub name: String,
    /// One checkpoint per training repeat; the first is used for serving.
    pub checkpoints: Vec<PathBuf>,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

/// JSON description of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub members: Vec<ManifestMember>,
}

impl BundleManifest {
    pub fn repeats(&self) -> usize {
        self.members.iter().map(|m| m.checkpoints.len()).min().unwrap_or(0)
    }

    /// Builds the bundle from checkpoint `repeat` of every member.
    pub fn load_repeat(&self, base: &Path, repeat: usize) -> Result<EnsembleBundle> {
        let mut members = Vec::with_capacity(self.members.len());
        for m in &self.members {
            let path = m.checkpoints.get(repeat).ok_or_else(|| {
                Error::arg(format!("member `{}` has no checkpoint for repeat {repeat}", m.name))
            })?;
            members.push(EnsembleMember {
                name: m.name.clone(),
                model: load_checkpoint(base.join(path))?.model,
            });
        }
        EnsembleBundle::with_weights(members, self.members.iter().map(|m| m.weight).collect())
    }

    pub fn load(&self, base: &Path) -> Result<EnsembleBundle> {
        self.load_repeat(base, 0)
    }
}

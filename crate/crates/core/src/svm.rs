//! Binary linear max-margin classifier trained by stochastic subgradient
//! descent on the hinge loss.
//!
//! Objective: `(lambda / 2) * |w|^2 + mean_i max(0, 1 - y_i (w . x_i + b))`.
//!
//! At global step `t` (1-based) with rate `eta = 1 / (lambda * t)`, the margin
//! of the visited example is measured on the current iterate, then `w` and `b`
//! are both scaled by `1 - eta * lambda`, and on a margin violation
//! `w += eta * y * x`, `b += eta * y`. Scaling the bias with the weights keeps
//! it on the same `1 / t` footing as `w`; without it the first few steps,
//! where `eta` is huge, pin the bias for the rest of training.
//!
//! Epoch `e` visits examples in a Fisher-Yates permutation drawn from a
//! ChaCha8 stream keyed by `(seed, "svm-epoch", e)`.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureVector;
use crate::rng;

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("{0} class is empty")]
    EmptyClass(&'static str),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite feature value in {0}")]
    NonFiniteFeature(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("model io on {path}: {reason}")]
    ModelIo { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1e-4,
            epochs: 30,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), SvmError> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(SvmError::InvalidConfig(format!(
                "lambda must be > 0, got {}",
                self.lambda
            )));
        }
        if self.epochs == 0 {
            return Err(SvmError::InvalidConfig("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub category: String,
    pub lambda: f64,
    pub bias: f64,
    pub final_objective: f64,
    pub weights: Vec<f64>,
}

impl LinearModel {
    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialises")
    }

    pub fn from_json(s: &str) -> Result<Self, SvmError> {
        let m: LinearModel = serde_json::from_str(s).map_err(|e| SvmError::ModelIo {
            path: "<string>".into(),
            reason: e.to_string(),
        })?;
        if m.weights.iter().any(|w| !w.is_finite()) || !m.bias.is_finite() {
            return Err(SvmError::NonFiniteFeature(format!("model {}", m.category)));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SvmError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| SvmError::ModelIo {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SvmError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| SvmError::ModelIo {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        LinearModel::from_json(&text).map_err(|e| match e {
            SvmError::ModelIo { reason, .. } => SvmError::ModelIo {
                path: path.display().to_string(),
                reason,
            },
            other => other,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_inputs(dim: usize, sets: &[&[FeatureVector]]) -> Result<(), SvmError> {
    for set in sets {
        for v in *set {
            if v.dimension() != dim {
                return Err(SvmError::DimensionMismatch {
                    expected: dim,
                    found: v.dimension(),
                });
            }
            if v.values.iter().any(|x| !x.is_finite()) {
                return Err(SvmError::NonFiniteFeature(v.image_id.clone()));
            }
        }
    }
    Ok(())
}

/// Trains a one-vs-rest model for `category`.
pub fn train(
    category: &str,
    positives: &[FeatureVector],
    negatives: &[FeatureVector],
    cfg: &TrainConfig,
) -> Result<LinearModel, SvmError> {
    cfg.validate()?;
    if positives.is_empty() {
        return Err(SvmError::EmptyClass("positive"));
    }
    if negatives.is_empty() {
        return Err(SvmError::EmptyClass("negative"));
    }
    let dim = positives[0].dimension();
    check_inputs(dim, &[positives, negatives])?;

    let examples: Vec<(&[f64], f64)> = positives
        .iter()
        .map(|v| (v.values.as_slice(), 1.0))
        .chain(negatives.iter().map(|v| (v.values.as_slice(), -1.0)))
        .collect();

    let lambda = cfg.lambda;
    let mut w = vec![0.0f64; dim];
    let mut b = 0.0f64;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut t: u64 = 0;
    for epoch in 0..cfg.epochs {
        let mut stream = rng::stream(cfg.seed, "svm-epoch", &[&epoch.to_string()]);
        order.sort_unstable();
        order.shuffle(&mut stream);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let (x, y) = examples[i];
            let margin = y * (dot(&w, x) + b);
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|wj| *wj *= shrink);
            b *= shrink;
            if margin < 1.0 {
                let step = eta * y;
                w.iter_mut().zip(x).for_each(|(wj, xj)| *wj += step * xj);
                b += step;
            }
        }
    }

    let mut model = LinearModel {
        category: category.to_string(),
        lambda,
        bias: b,
        final_objective: 0.0,
        weights: w,
    };
    model.final_objective = objective(&model, positives, negatives)?;
    Ok(model)
}

/// `w . x + b`.
pub fn score(model: &LinearModel, x: &FeatureVector) -> Result<f64, SvmError> {
    if x.dimension() != model.dimension() {
        return Err(SvmError::DimensionMismatch {
            expected: model.dimension(),
            found: x.dimension(),
        });
    }
    Ok(dot(&model.weights, &x.values) + model.bias)
}

/// Regularised mean hinge loss of `model` on the given data.
pub fn objective(
    model: &LinearModel,
    positives: &[FeatureVector],
    negatives: &[FeatureVector],
) -> Result<f64, SvmError> {
    check_inputs(model.dimension(), &[positives, negatives])?;
    let n = positives.len() + negatives.len();
    let hinge: f64 = positives
        .iter()
        .map(|v| (v, 1.0))
        .chain(negatives.iter().map(|v| (v, -1.0)))
        .map(|(v, y)| (1.0 - y * (dot(&model.weights, &v.values) + model.bias)).max(0.0))
        .sum();
    let reg = 0.5 * model.lambda * dot(&model.weights, &model.weights);
    let mean = if n == 0 { 0.0 } else { hinge / n as f64 };
    Ok(reg + mean)
}

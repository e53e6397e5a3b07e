//! The pluggable labeler contract and the built-in baseline: per-category
//! binary logistic regression over TF-IDF features, trained by full-batch
//! gradient descent from a zero initialization. The objective is convex, so
//! zero init plus a fixed iteration order makes training deterministic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec;
use crate::features::FeatureVector;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training set must contain at least one example of each class")]
    SingleClass,
    #[error("training set is empty")]
    Empty,
    #[error("vectors and labels have different lengths ({vectors} vs {labels})")]
    LengthMismatch { vectors: usize, labels: usize },
    #[error("vector dimension {found} does not match model dimension {expected}")]
    DimensionMismatch { expected: u32, found: u32 },
    #[error("labeler has not been trained")]
    NotTrained,
    #[error("model record: {0}")]
    BadRecord(String),
}

/// Behavioral contract for anything that can label feature vectors. The
/// built-in binding is [`LogRegLabeler`]; transformer backends can implement
/// the same surface.
pub trait Labeler: Send + Sync {
    fn train(&mut self, vectors: &[FeatureVector], labels: &[u8]) -> Result<(), ClassifierError>;
    /// Predicted label plus the probability of that predicted class.
    fn predict(&self, vector: &FeatureVector) -> Result<(u8, f64), ClassifierError>;
    fn is_trained(&self) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    pub learning_rate: f64,
    pub epochs: usize,
    /// L2 strength on the weights (bias unregularized).
    pub l2: f64,
    /// Decision threshold in (0, 1); label 1 iff probability >= threshold.
    pub threshold: f64,
    /// Inverse-frequency class weighting. Off by default so augmentation,
    /// not reweighting, is the variable under test.
    pub class_weighting: bool,
}

impl Default for LogRegParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 200,
            l2: 1e-4,
            threshold: 0.5,
            class_weighting: false,
        }
    }
}

/// A trained logistic-regression model.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub params: LogRegParams,
    pub seed: u64,
    pub final_loss: f64,
    /// Full-batch loss after each epoch (not persisted).
    pub loss_history: Vec<f64>,
}

impl LogRegModel {
    pub fn dim(&self) -> u32 {
        self.weights.len() as u32
    }

    fn margin(&self, vector: &FeatureVector) -> f64 {
        let mut m = self.bias;
        for &(idx, w) in vector.entries() {
            m += self.weights[idx as usize] * w;
        }
        m
    }

    /// `probability = sigmoid(w . x + b)`; label 1 iff probability >= threshold.
    pub fn predict(&self, vector: &FeatureVector) -> Result<(u8, f64), ClassifierError> {
        if vector.dim() != self.dim() {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim(),
                found: vector.dim(),
            });
        }
        let p = sigmoid(self.margin(vector));
        let label = u8::from(p >= self.params.threshold);
        Ok((label, p))
    }

    /// Persistable record: sparse weights, bias, hyperparameters, seed, and
    /// the fingerprint of the vocabulary the model was trained against.
    pub fn to_record(&self, vocab_fingerprint: &str) -> String {
        let sparse: Vec<(u32, f64)> = self
            .weights
            .iter()
            .enumerate()
            .filter(|&(_, &w)| w != 0.0)
            .map(|(i, &w)| (i as u32, w))
            .collect();
        let record = ModelRecord {
            dim: self.dim(),
            sparse_weights: sparse,
            bias: self.bias,
            params: self.params,
            seed: self.seed,
            final_loss: self.final_loss,
            vocab_fingerprint: vocab_fingerprint.to_string(),
        };
        serde_json::to_string(&record).expect("model record serializes")
    }

    pub fn from_record(record: &str) -> Result<(Self, String), ClassifierError> {
        let record: ModelRecord =
            serde_json::from_str(record).map_err(|e| ClassifierError::BadRecord(e.to_string()))?;
        let mut weights = vec![0.0; record.dim as usize];
        for (i, w) in record.sparse_weights {
            if i >= record.dim {
                return Err(ClassifierError::BadRecord(format!("weight index {i} out of range")));
            }
            weights[i as usize] = w;
        }
        Ok((
            Self {
                weights,
                bias: record.bias,
                params: record.params,
                seed: record.seed,
                final_loss: record.final_loss,
                loss_history: Vec::new(),
            },
            record.vocab_fingerprint,
        ))
    }
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    dim: u32,
    sparse_weights: Vec<(u32, f64)>,
    bias: f64,
    params: LogRegParams,
    seed: u64,
    final_loss: f64,
    vocab_fingerprint: String,
}

fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable cross-entropy for label y and margin m:
/// `max(m,0) - m*y + ln(1 + exp(-|m|))`.
fn cross_entropy(margin: f64, y: f64) -> f64 {
    margin.max(0.0) - margin * y + (-margin.abs()).exp().ln_1p()
}

fn class_weights(labels: &[u8], enabled: bool) -> (f64, f64) {
    if !enabled {
        return (1.0, 1.0);
    }
    let n = labels.len() as f64;
    let pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    let neg = n - pos;
    // Inverse-frequency: each class contributes half the total mass.
    (n / (2.0 * neg.max(1.0)), n / (2.0 * pos.max(1.0)))
}

/// Weighted-mean logistic loss plus `0.5 * l2 * ||w||^2`, and its exact
/// analytic gradient with respect to (weights, bias).
///
/// With no examples the loss is the L2 term alone and the data gradient is
/// zero.
pub fn loss_and_gradient(
    model: &LogRegModel,
    vectors: &[FeatureVector],
    labels: &[u8],
) -> Result<(f64, Vec<f64>, f64), ClassifierError> {
    if vectors.len() != labels.len() {
        return Err(ClassifierError::LengthMismatch {
            vectors: vectors.len(),
            labels: labels.len(),
        });
    }
    let (w0, w1) = class_weights(labels, model.params.class_weighting);
    let l2_term = 0.5 * model.params.l2 * model.weights.iter().map(|w| w * w).sum::<f64>();
    let mut grad_w: Vec<f64> = model.weights.iter().map(|w| model.params.l2 * w).collect();
    let mut grad_b = 0.0;
    if vectors.is_empty() {
        return Ok((l2_term, grad_w, grad_b));
    }
    // Margins in parallel (order-preserving), accumulation sequential so the
    // floating-point sum order never depends on thread count.
    let margins: Vec<f64> = exec::map_collect(vectors, |v| model.margin(v));
    let denom: f64 = labels.iter().map(|&y| if y == 1 { w1 } else { w0 }).sum();
    let mut loss = 0.0;
    for ((vector, &label), &margin) in vectors.iter().zip(labels).zip(&margins) {
        let y = f64::from(label);
        let weight = if label == 1 { w1 } else { w0 };
        loss += weight * cross_entropy(margin, y);
        let residual = weight * (sigmoid(margin) - y) / denom;
        for &(idx, x) in vector.entries() {
            grad_w[idx as usize] += residual * x;
        }
        grad_b += residual;
    }
    Ok((loss / denom + l2_term, grad_w, grad_b))
}

/// Train by full-batch gradient descent from zeros. Deterministic for a
/// given seed (the seed is recorded for provenance; the convex objective
/// makes initialization immaterial).
pub fn train(
    vectors: &[FeatureVector],
    labels: &[u8],
    params: LogRegParams,
    seed: u64,
) -> Result<LogRegModel, ClassifierError> {
    if vectors.is_empty() {
        return Err(ClassifierError::Empty);
    }
    if vectors.len() != labels.len() {
        return Err(ClassifierError::LengthMismatch {
            vectors: vectors.len(),
            labels: labels.len(),
        });
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(ClassifierError::SingleClass);
    }
    let dim = vectors[0].dim();
    for v in vectors {
        if v.dim() != dim {
            return Err(ClassifierError::DimensionMismatch {
                expected: dim,
                found: v.dim(),
            });
        }
    }
    let mut model = LogRegModel {
        weights: vec![0.0; dim as usize],
        bias: 0.0,
        params,
        seed,
        final_loss: f64::NAN,
        loss_history: Vec::with_capacity(params.epochs),
    };
    for _ in 0..params.epochs {
        let (loss, grad_w, grad_b) = loss_and_gradient(&model, vectors, labels)?;
        for (w, g) in model.weights.iter_mut().zip(&grad_w) {
            *w -= params.learning_rate * g;
        }
        model.bias -= params.learning_rate * grad_b;
        model.loss_history.push(loss);
    }
    let (final_loss, _, _) = loss_and_gradient(&model, vectors, labels)?;
    model.final_loss = final_loss;
    Ok(model)
}

/// The built-in [`Labeler`] binding around logistic regression.
pub struct LogRegLabeler {
    params: LogRegParams,
    seed: u64,
    model: Option<LogRegModel>,
}

impl LogRegLabeler {
    pub fn new(params: LogRegParams, seed: u64) -> Self {
        Self {
            params,
            seed,
            model: None,
        }
    }

    pub fn model(&self) -> Option<&LogRegModel> {
        self.model.as_ref()
    }

    pub fn from_model(model: LogRegModel) -> Self {
        Self {
            params: model.params,
            seed: model.seed,
            model: Some(model),
        }
    }
}

impl Labeler for LogRegLabeler {
    fn train(&mut self, vectors: &[FeatureVector], labels: &[u8]) -> Result<(), ClassifierError> {
        self.model = Some(train(vectors, labels, self.params, self.seed)?);
        Ok(())
    }

    fn predict(&self, vector: &FeatureVector) -> Result<(u8, f64), ClassifierError> {
        let model = self.model.as_ref().ok_or(ClassifierError::NotTrained)?;
        let (label, p) = model.predict(vector)?;
        // Confidence is the probability of the predicted class.
        let confidence = if label == 1 { p } else { 1.0 - p };
        Ok((label, confidence))
    }

    fn is_trained(&self) -> bool {
        self.model.is_some()
    }
}

/// A labeler that always answers the same label with full confidence. Used
/// to stub the acquire stage in tests.
pub struct ConstantLabeler {
    pub label: u8,
}

impl Labeler for ConstantLabeler {
    fn train(&mut self, _vectors: &[FeatureVector], _labels: &[u8]) -> Result<(), ClassifierError> {
        Ok(())
    }

    fn predict(&self, _vector: &FeatureVector) -> Result<(u8, f64), ClassifierError> {
        Ok((self.label, 1.0))
    }

    fn is_trained(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn dense(dim: u32, values: &[f64]) -> FeatureVector {
        FeatureVector::from_entries(
            dim,
            values.iter().enumerate().map(|(i, &v)| (i as u32, v)).collect(),
        )
        .unwrap()
    }

    fn separable_fixture() -> (Vec<FeatureVector>, Vec<u8>) {
        let vectors = vec![
            dense(2, &[1.0, 0.0]),
            dense(2, &[0.9, 0.1]),
            dense(2, &[0.0, 1.0]),
            dense(2, &[0.1, 0.9]),
        ];
        (vectors, vec![0, 0, 1, 1])
    }

    #[test]
    fn separable_set_reaches_full_training_accuracy() {
        let (vectors, labels) = separable_fixture();
        let params = LogRegParams {
            epochs: 2000,
            learning_rate: 1.0,
            ..LogRegParams::default()
        };
        let model = train(&vectors, &labels, params, 0).unwrap();
        for (v, &y) in vectors.iter().zip(&labels) {
            let (label, p) = model.predict(v).unwrap();
            assert_eq!(label, y);
            if y == 1 {
                assert!(p > 0.5);
            }
        }
    }

    #[test]
    fn single_class_rejected() {
        let (vectors, _) = separable_fixture();
        assert!(matches!(
            train(&vectors, &[1, 1, 1, 1], LogRegParams::default(), 0),
            Err(ClassifierError::SingleClass)
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let (vectors, labels) = separable_fixture();
        let a = train(&vectors, &labels, LogRegParams::default(), 3).unwrap();
        let b = train(&vectors, &labels, LogRegParams::default(), 3).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.bias, b.bias);
    }

    #[test]
    fn zero_model_predicts_half_and_saturates() {
        let model = LogRegModel {
            weights: vec![0.0, 0.0],
            bias: 0.0,
            params: LogRegParams::default(),
            seed: 0,
            final_loss: 0.0,
            loss_history: vec![],
        };
        let (label, p) = model.predict(&dense(2, &[0.3, 0.4])).unwrap();
        assert_eq!(p, 0.5);
        assert_eq!(label, 1); // threshold boundary: p >= 0.5 -> 1
        let saturated = LogRegModel { bias: 50.0, ..model };
        let (_, p) = saturated.predict(&dense(2, &[0.0, 0.0])).unwrap();
        assert!(p > 0.999);
    }

    #[test]
    fn loss_at_zero_is_ln2_and_empty_set_is_l2_only() {
        let (vectors, labels) = separable_fixture();
        let model = LogRegModel {
            weights: vec![0.0, 0.0],
            bias: 0.0,
            params: LogRegParams::default(),
            seed: 0,
            final_loss: 0.0,
            loss_history: vec![],
        };
        let (loss, _, _) = loss_and_gradient(&model, &vectors, &labels).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);

        let weighted = LogRegModel {
            weights: vec![2.0, -1.0],
            ..model
        };
        let (loss, grad_w, grad_b) = loss_and_gradient(&weighted, &[], &[]).unwrap();
        assert!((loss - 0.5 * 1e-4 * 5.0).abs() < 1e-15);
        assert_eq!(grad_b, 0.0);
        assert!((grad_w[0] - 1e-4 * 2.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = crate::rng::derive_rng(123, "classifier/gradcheck");
        for trial in 0..20 {
            let dim = 6u32;
            let n = 8;
            let vectors: Vec<FeatureVector> = (0..n)
                .map(|_| {
                    let values: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                    dense(dim, &values)
                })
                .collect();
            let labels: Vec<u8> = (0..n).map(|i| u8::from(i % 2 == 0 || rng.random_bool(0.3))).collect();
            let weights: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect();
            let model = LogRegModel {
                weights,
                bias: rng.random_range(-0.5..0.5),
                params: LogRegParams {
                    class_weighting: trial % 2 == 0,
                    ..LogRegParams::default()
                },
                seed: 0,
                final_loss: 0.0,
                loss_history: vec![],
            };
            let (_, grad_w, grad_b) = loss_and_gradient(&model, &vectors, &labels).unwrap();
            let h = 1e-5;
            let mut check = |analytic: f64, loss_at: &dyn Fn(f64) -> f64| {
                let numeric = (loss_at(h) - loss_at(-h)) / (2.0 * h);
                let denom = analytic.abs().max(numeric.abs()).max(1e-8);
                let rel = (analytic - numeric).abs() / denom;
                assert!(rel < 1e-4, "rel error {rel} (analytic {analytic}, numeric {numeric})");
            };
            for d in 0..dim as usize {
                let base = model.clone();
                check(grad_w[d], &|eps: f64| {
                    let mut m = base.clone();
                    m.weights[d] += eps;
                    loss_and_gradient(&m, &vectors, &labels).unwrap().0
                });
            }
            let base = model.clone();
            check(grad_b, &|eps: f64| {
                let mut m = base.clone();
                m.bias += eps;
                loss_and_gradient(&m, &vectors, &labels).unwrap().0
            });
        }
    }

    #[test]
    fn training_loss_is_monotone_at_default_rate() {
        let mut rng = crate::rng::derive_rng(9, "classifier/monotone");
        for _ in 0..5 {
            let n = 30;
            let vectors: Vec<FeatureVector> = (0..n)
                .map(|_| {
                    let values: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
                    let values: Vec<f64> = values.iter().map(|v| v / norm).collect();
                    dense(5, &values)
                })
                .collect();
            let labels: Vec<u8> = (0..n).map(|i| u8::from(i % 3 == 0)).collect();
            let model = train(&vectors, &labels, LogRegParams::default(), 0).unwrap();
            for pair in model.loss_history.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-12, "loss increased: {} -> {}", pair[0], pair[1]);
            }
        }
    }

    #[test]
    fn labeler_contract_not_trained_and_confidence() {
        let mut labeler = LogRegLabeler::new(LogRegParams::default(), 0);
        assert!(!labeler.is_trained());
        assert!(matches!(
            labeler.predict(&dense(2, &[1.0, 0.0])),
            Err(ClassifierError::NotTrained)
        ));
        let (vectors, labels) = separable_fixture();
        labeler.train(&vectors, &labels).unwrap();
        assert!(labeler.is_trained());
        let (label, confidence) = labeler.predict(&vectors[0]).unwrap();
        assert_eq!(label, 0);
        assert!(confidence > 0.5); // confidence of the predicted class
        let stub = ConstantLabeler { label: 1 };
        assert_eq!(stub.predict(&vectors[0]).unwrap(), (1, 1.0));
    }

    #[test]
    fn model_record_round_trip() {
        let (vectors, labels) = separable_fixture();
        let model = train(&vectors, &labels, LogRegParams::default(), 42).unwrap();
        let record = model.to_record("vocabhash");
        let (loaded, fp) = LogRegModel::from_record(&record).unwrap();
        assert_eq!(fp, "vocabhash");
        assert_eq!(loaded.weights, model.weights);
        assert_eq!(loaded.bias, model.bias);
        assert_eq!(loaded.seed, 42);
        let (l1, _) = model.predict(&vectors[2]).unwrap();
        let (l2, _) = loaded.predict(&vectors[2]).unwrap();
        assert_eq!(l1, l2);
    }

    #[test]
    fn predict_dimension_mismatch() {
        let (vectors, labels) = separable_fixture();
        let model = train(&vectors, &labels, LogRegParams::default(), 0).unwrap();
        assert!(matches!(
            model.predict(&dense(3, &[0.0, 0.0, 1.0])),
            Err(ClassifierError::DimensionMismatch { .. })
        ));
    }
}

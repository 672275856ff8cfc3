//! Softmax-linear term classifier trained by seeded minibatch SGD on mean
//! cross-entropy. Stands in for the answer head of a VQA model.
//!
//! Checkpoints are JSON: `{"num_terms", "feature_dim", "weights", "bias"}`
//! with `weights` row-major (`num_terms` rows of `feature_dim`).

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TermId;
use crate::error::{Error, Result};
use crate::rng;
use crate::uncertainty::PredictiveDistribution;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerParams {
    num_terms: usize,
    feature_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepsPerEpoch {
    FullPass,
    Steps(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps_per_epoch: StepsPerEpoch,
    pub l2: f64,
    pub seed: u64,
    /// Bootstrap heads kept for the BALD strategy; 0 disables them.
    pub ensemble_heads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            batch_size: 16,
            steps_per_epoch: StepsPerEpoch::FullPass,
            l2: 0.0,
            seed: 0,
            ensemble_heads: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning_rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be >= 1".into()));
        }
        if self.steps_per_epoch == StepsPerEpoch::Steps(0) {
            return Err(Error::InvalidParameter("steps_per_epoch must be >= 1".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::InvalidParameter(format!("l2 must be >= 0, got {}", self.l2)));
        }
        Ok(())
    }
}

/// A labeled training example borrowed from the pool.
#[derive(Clone, Copy, Debug)]
pub struct Example<'a> {
    pub features: &'a [f64],
    pub label: TermId,
}

/// Zero-initialized parameters: every input predicts the uniform distribution.
pub fn init_learner(feature_dim: usize, num_terms: usize) -> Result<LearnerParams> {
    if feature_dim == 0 || num_terms < 2 {
        return Err(Error::InvalidParameter(format!(
            "learner needs d >= 1 and at least 2 terms (got d={feature_dim}, |C|={num_terms})"
        )));
    }
    Ok(LearnerParams {
        num_terms,
        feature_dim,
        weights: vec![0.0; num_terms * feature_dim],
        bias: vec![0.0; num_terms],
    })
}

impl LearnerParams {
    pub fn num_terms(&self) -> usize {
        self.num_terms
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    fn check_features(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        Ok(())
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.feature_dim)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    fn softmax(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.logits(x);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in z.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in z.iter_mut() {
            *v /= total;
        }
        z
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let params: LearnerParams = serde_json::from_str(&text)?;
        if params.weights.len() != params.num_terms * params.feature_dim || params.bias.len() != params.num_terms {
            return Err(Error::InvalidParameter("checkpoint shape does not match its dims".into()));
        }
        if params.weights.iter().chain(&params.bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("checkpoint"));
        }
        Ok(params)
    }
}

pub fn predict(params: &LearnerParams, x: &[f64]) -> Result<PredictiveDistribution> {
    params.check_features(x)?;
    Ok(PredictiveDistribution::from_softmax(params.softmax(x)))
}

/// −log p_label
pub fn instance_loss(params: &LearnerParams, x: &[f64], label: TermId) -> Result<f64> {
    if label.0 >= params.num_terms {
        return Err(Error::InvalidTermId(label));
    }
    params.check_features(x)?;
    Ok(cross_entropy(&params.logits(x), label))
}

// log-sum-exp form keeps the loss finite when p_label underflows
fn cross_entropy(logits: &[f64], label: TermId) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label.0]
}

/// Mean cross-entropy plus (l2/2)·‖W‖².
pub fn mean_loss(params: &LearnerParams, batch: &[Example<'_>], l2: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyLabeledSet);
    }
    let mut total = 0.0;
    for ex in batch {
        total += instance_loss(params, ex.features, ex.label)?;
    }
    let penalty = 0.5 * l2 * params.weights.iter().map(|w| w * w).sum::<f64>();
    Ok(total / batch.len() as f64 + penalty)
}

/// Analytic gradient of [`mean_loss`], returned as a parameter-shaped value.
pub fn loss_gradient(params: &LearnerParams, batch: &[Example<'_>], l2: f64) -> Result<LearnerParams> {
    if batch.is_empty() {
        return Err(Error::EmptyLabeledSet);
    }
    let d = params.feature_dim;
    let mut grad = LearnerParams {
        num_terms: params.num_terms,
        feature_dim: d,
        weights: vec![0.0; params.weights.len()],
        bias: vec![0.0; params.bias.len()],
    };
    let scale = 1.0 / batch.len() as f64;
    for ex in batch {
        if ex.label.0 >= params.num_terms {
            return Err(Error::InvalidTermId(ex.label));
        }
        params.check_features(ex.features)?;
        let mut residual = params.softmax(ex.features);
        residual[ex.label.0] -= 1.0;
        for (c, r) in residual.iter().enumerate() {
            let r = r * scale;
            grad.bias[c] += r;
            for (g, x) in grad.weights[c * d..(c + 1) * d].iter_mut().zip(ex.features) {
                *g += r * x;
            }
        }
    }
    if l2 > 0.0 {
        for (g, w) in grad.weights.iter_mut().zip(&params.weights) {
            *g += l2 * w;
        }
    }
    Ok(grad)
}

fn sgd_step(params: &mut LearnerParams, grad: &LearnerParams, lr: f64) {
    for (w, g) in params.weights.iter_mut().zip(&grad.weights) {
        *w -= lr * g;
    }
    for (b, g) in params.bias.iter_mut().zip(&grad.bias) {
        *b -= lr * g;
    }
}

/// One epoch of seeded-shuffle minibatch SGD. Returns the updated parameters
/// and the mean loss measured before any update. The shuffle depends only on
/// `(config.seed, epoch)`.
pub fn train_epoch(
    params: &LearnerParams,
    labeled: &[Example<'_>],
    config: &TrainConfig,
    epoch: u64,
) -> Result<(LearnerParams, f64)> {
    config.validate()?;
    let loss = mean_loss(params, labeled, config.l2)?;
    let mut next = params.clone();
    if config.learning_rate == 0.0 {
        return Ok((next, loss));
    }
    let mut rng = rng::stream(config.seed, &[rng::label::TRAIN, epoch]);
    let n = labeled.len();
    let steps = match config.steps_per_epoch {
        StepsPerEpoch::FullPass => n.div_ceil(config.batch_size),
        StepsPerEpoch::Steps(s) => s,
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let mut batch = Vec::with_capacity(config.batch_size);
    for _ in 0..steps {
        if cursor >= n {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let end = (cursor + config.batch_size).min(n);
        batch.clear();
        batch.extend(order[cursor..end].iter().map(|&i| labeled[i]));
        cursor = end;
        let grad = loss_gradient(&next, &batch, config.l2)?;
        sgd_step(&mut next, &grad, config.learning_rate);
    }
    Ok((next, loss))
}

/// Trains each head for one epoch on its own bootstrap resample of
/// `labeled`. Head `h` depends only on `(config.seed, epoch, h)`.
pub fn train_bootstrap_heads(
    heads: &[LearnerParams],
    labeled: &[Example<'_>],
    config: &TrainConfig,
    epoch: u64,
) -> Result<Vec<LearnerParams>> {
    if heads.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "bootstrap ensemble needs at least 2 heads, got {}",
            heads.len()
        )));
    }
    if labeled.is_empty() {
        return Err(Error::EmptyLabeledSet);
    }
    heads
        .iter()
        .enumerate()
        .map(|(h, head)| {
            let mut rng = rng::stream(config.seed, &[rng::label::BOOTSTRAP, epoch, h as u64]);
            let sample: Vec<Example<'_>> = (0..labeled.len())
                .map(|_| labeled[rng.random_range(0..labeled.len())])
                .collect();
            let head_config = TrainConfig {
                seed: rng::derive(config.seed, &[rng::label::BOOTSTRAP, h as u64]),
                ..config.clone()
            };
            train_epoch(head, &sample, &head_config, epoch).map(|(p, _)| p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_init_is_uniform() {
        let p = init_learner(4, 10).unwrap();
        let d = predict(&p, &[1.0, -2.0, 3.0, 0.5]).unwrap();
        assert!(d.probs().iter().all(|&v| v == 0.1));
        assert_eq!(p, init_learner(4, 10).unwrap());
        let loss = instance_loss(&p, &[0.0; 4], TermId(3)).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn invalid_dims() {
        assert!(init_learner(0, 3).is_err());
        assert!(init_learner(3, 1).is_err());
        let p = init_learner(2, 3).unwrap();
        assert!(matches!(predict(&p, &[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(predict(&p, &[1.0, f64::NAN]), Err(Error::NonFinite(_))));
        assert!(matches!(instance_loss(&p, &[1.0, 1.0], TermId(3)), Err(Error::InvalidTermId(_))));
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let mut p = init_learner(1, 2).unwrap();
        p.bias_mut()[0] = 1000.0;
        let d = predict(&p, &[0.0]).unwrap();
        assert!((d.probs()[0] - 1.0).abs() < 1e-12);
        assert!(d.probs()[1] >= 0.0);
        let loss = instance_loss(&p, &[0.0], TermId(1)).unwrap();
        assert!((loss - 1000.0).abs() < 1e-9);
        assert!(instance_loss(&p, &[0.0], TermId(0)).unwrap() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let p = init_learner(2, 3).unwrap();
        let x = [1.0, 0.0];
        let data = [Example { features: &x, label: TermId(1) }];
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let (next, loss) = train_epoch(&p, &data, &cfg, 0).unwrap();
        assert_eq!(next, p);
        assert!((loss - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_instance_loss_is_non_increasing() {
        let mut p = init_learner(3, 4).unwrap();
        let x = [0.6, 0.0, 0.8];
        let data = [Example { features: &x, label: TermId(2) }];
        let cfg = TrainConfig::default();
        let mut prev = f64::INFINITY;
        for epoch in 0..50 {
            let (next, loss) = train_epoch(&p, &data, &cfg, epoch).unwrap();
            assert!(loss <= prev + 1e-15, "epoch {epoch}: {loss} > {prev}");
            prev = loss;
            p = next;
        }
        assert!(prev < 4f64.ln());
    }

    #[test]
    fn training_is_deterministic() {
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64).sin(), (i as f64).cos()]).collect();
        let data: Vec<Example<'_>> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| Example {
                features: x,
                label: TermId(i % 3),
            })
            .collect();
        let cfg = TrainConfig {
            batch_size: 3,
            seed: 42,
            ..TrainConfig::default()
        };
        let p = init_learner(2, 3).unwrap();
        let a = train_epoch(&p, &data, &cfg, 5).unwrap();
        let b = train_epoch(&p, &data, &cfg, 5).unwrap();
        assert_eq!(a, b);
        let c = train_epoch(&p, &data, &TrainConfig { seed: 43, ..cfg }, 5).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn empty_labeled_set_is_an_error() {
        let p = init_learner(2, 3).unwrap();
        assert!(matches!(
            train_epoch(&p, &[], &TrainConfig::default(), 0),
            Err(Error::EmptyLabeledSet)
        ));
    }

    #[test]
    fn bootstrap_heads_are_reproducible() {
        let xs: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 / 12.0, 1.0]).collect();
        let data: Vec<Example<'_>> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| Example {
                features: x,
                label: TermId(i % 2),
            })
            .collect();
        let cfg = TrainConfig::default();
        let heads = vec![init_learner(2, 2).unwrap(); 2];
        let a = train_bootstrap_heads(&heads, &data, &cfg, 0).unwrap();
        let b = train_bootstrap_heads(&heads, &data, &cfg, 0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);

        let single = [data[0]];
        let same = train_bootstrap_heads(&heads, &single, &cfg, 0).unwrap();
        // a one-point resample is the same point for every head, and a full
        // pass over one example consumes no randomness
        assert_eq!(same[0], same[1]);
        assert!(train_bootstrap_heads(&heads[..1], &data, &cfg, 0).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = init_learner(3, 2).unwrap();
        p.weights_mut()[4] = 0.1 + 0.2;
        p.bias_mut()[1] = -1e-300;
        let path = dir.path().join("ckpt.json");
        p.save(&path).unwrap();
        assert_eq!(LearnerParams::load(&path).unwrap(), p);
    }
}

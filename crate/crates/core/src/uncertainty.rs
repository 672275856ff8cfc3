//! Per-instance uncertainty quantities over a predictive distribution and the
//! term embeddings: weighted mean, variance and covariance, the regularized
//! log-determinant used for ranking, the Δ metric in two forms, entropy and
//! the BALD disagreement score.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::corpus::{EmbeddingTable, TermId};
use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-8;
const SYMMETRY_TOLERANCE: f64 = 1e-8;
const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// A probability vector over corpus terms.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveDistribution {
    probs: Vec<f64>,
}

impl PredictiveDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!("entry {p} is not a probability")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("sums to {total}")));
        }
        Ok(PredictiveDistribution { probs })
    }

    /// Trusted constructor for values produced by a softmax.
    pub(crate) fn from_softmax(probs: Vec<f64>) -> Self {
        PredictiveDistribution { probs }
    }

    pub fn uniform(n: usize) -> Self {
        PredictiveDistribution {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn one_hot(n: usize, at: TermId) -> Self {
        let mut probs = vec![0.0; n];
        probs[at.0] = 1.0;
        PredictiveDistribution { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, id: TermId) -> f64 {
        self.probs[id.0]
    }

    pub fn argmax(&self) -> TermId {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        TermId(best)
    }

    /// The `k` most probable terms, probability descending then id ascending.
    pub fn top_k(&self, k: usize) -> Vec<(TermId, f64)> {
        let mut ranked: Vec<(TermId, f64)> = self.probs.iter().enumerate().map(|(i, &p)| (TermId(i), p)).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(k);
        ranked
    }
}

fn check_dims(dist: &PredictiveDistribution, emb: &EmbeddingTable) -> Result<()> {
    if dist.len() != emb.len() {
        return Err(Error::DimensionMismatch {
            expected: emb.len(),
            got: dist.len(),
        });
    }
    Ok(())
}

fn check_precision(k: f64) -> Result<()> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidParameter(format!("precision k must be > 0, got {k}")));
    }
    Ok(())
}

/// φ̄ = Σ p_c φ_c
pub fn weighted_mean(dist: &PredictiveDistribution, emb: &EmbeddingTable) -> Result<Vec<f64>> {
    check_dims(dist, emb)?;
    let mut mean = vec![0.0; emb.dim()];
    for (&p, row) in dist.probs().iter().zip(emb.rows()) {
        if p == 0.0 {
            continue;
        }
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += p * v;
        }
    }
    Ok(mean)
}

/// Σ p_c ‖φ_c − φ̄‖²
pub fn weighted_variance(dist: &PredictiveDistribution, emb: &EmbeddingTable) -> Result<f64> {
    let mean = weighted_mean(dist, emb)?;
    Ok(dist
        .probs()
        .iter()
        .zip(emb.rows())
        .map(|(&p, row)| p * row.iter().zip(&mean).map(|(v, m)| (v - m) * (v - m)).sum::<f64>())
        .sum())
}

/// Σ p_c (φ_c − φ̄)(φ_c − φ̄)ᵀ, symmetric positive semidefinite.
pub fn weighted_covariance(dist: &PredictiveDistribution, emb: &EmbeddingTable) -> Result<DMatrix<f64>> {
    let mean = weighted_mean(dist, emb)?;
    let m = emb.dim();
    let mut cov = DMatrix::zeros(m, m);
    let mut centered = vec![0.0; m];
    for (&p, row) in dist.probs().iter().zip(emb.rows()) {
        if p == 0.0 {
            continue;
        }
        for ((c, v), mu) in centered.iter_mut().zip(row).zip(&mean) {
            *c = v - mu;
        }
        for i in 0..m {
            let pi = p * centered[i];
            for j in i..m {
                cov[(i, j)] += pi * centered[j];
            }
        }
    }
    for i in 0..m {
        for j in 0..i {
            cov[(i, j)] = cov[(j, i)];
        }
    }
    Ok(cov)
}

/// log det(cov + ε·I) from the symmetric eigenvalues. A non-positive or
/// non-finite ε is replaced by [`DEFAULT_EPSILON`].
pub fn logdet_cov(cov: &DMatrix<f64>, epsilon: f64) -> Result<f64> {
    if !cov.is_square() {
        return Err(Error::DimensionMismatch {
            expected: cov.nrows(),
            got: cov.ncols(),
        });
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariance"));
    }
    let asym = (cov - cov.transpose()).amax();
    if asym > SYMMETRY_TOLERANCE {
        return Err(Error::NotSymmetric(asym));
    }
    let epsilon = if epsilon > 0.0 && epsilon.is_finite() {
        epsilon
    } else {
        DEFAULT_EPSILON
    };
    let eig = SymmetricEigen::new(cov.clone());
    // round-off can leave tiny negative eigenvalues on PSD input
    Ok(eig.eigenvalues.iter().map(|&l| (l.max(0.0) + epsilon).ln()).sum())
}

/// Δ via its closed form: (k/2)·var − (m/2)·log(k/2π) − log|C|.
pub fn delta_closed_form(dist: &PredictiveDistribution, emb: &EmbeddingTable, k: f64) -> Result<f64> {
    check_precision(k)?;
    let var = weighted_variance(dist, emb)?;
    let m = emb.dim() as f64;
    Ok(0.5 * k * var - 0.5 * m * (k / (2.0 * PI)).ln() - (dist.len() as f64).ln())
}

/// Δ evaluated from its definition as a difference of two KL sums: against
/// the isotropic Gaussian N(φ̄, k⁻¹I) density at each φ_c, and against the
/// uniform distribution. Terms with p_c = 0 contribute nothing.
pub fn delta_definition(dist: &PredictiveDistribution, emb: &EmbeddingTable, k: f64) -> Result<f64> {
    check_precision(k)?;
    let mean = weighted_mean(dist, emb)?;
    let m = emb.dim() as f64;
    let n = dist.len() as f64;
    let log_norm = 0.5 * m * (k / (2.0 * PI)).ln();
    let mut semantic = 0.0;
    let mut confidence = 0.0;
    for (&p, row) in dist.probs().iter().zip(emb.rows()) {
        if p == 0.0 {
            continue;
        }
        let sq: f64 = row.iter().zip(&mean).map(|(v, mu)| (v - mu) * (v - mu)).sum();
        let log_density = log_norm - 0.5 * k * sq;
        semantic += p * (p.ln() - log_density);
        confidence += p * (p * n).ln();
    }
    Ok(semantic - confidence)
}

/// Shannon entropy in nats.
pub fn entropy(dist: &PredictiveDistribution) -> f64 {
    dist.probs().iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
}

/// H(mean of members) − mean of H(members).
pub fn bald_score(ensemble: &[PredictiveDistribution]) -> Result<f64> {
    let first = ensemble.first().ok_or(Error::EmptyEnsemble)?;
    let n = first.len();
    if let Some(d) = ensemble.iter().find(|d| d.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, got: d.len() });
    }
    let count = ensemble.len() as f64;
    let mut mean = vec![0.0; n];
    for d in ensemble {
        for (m, &p) in mean.iter_mut().zip(d.probs()) {
            *m += p / count;
        }
    }
    let expected_entropy = ensemble.iter().map(entropy).sum::<f64>() / count;
    Ok(entropy(&PredictiveDistribution::from_softmax(mean)) - expected_entropy)
}

/// All uncertainty quantities for one instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub weighted_variance: f64,
    pub logdet_cov: f64,
    pub entropy: f64,
    pub delta: f64,
    pub loss: f64,
}

impl UncertaintyReport {
    /// `loss` is the cross-entropy against the instance's current annotation,
    /// supplied by the caller.
    pub fn compute(
        dist: &PredictiveDistribution,
        emb: &EmbeddingTable,
        precision: f64,
        epsilon: f64,
        loss: f64,
    ) -> Result<Self> {
        let cov = weighted_covariance(dist, emb)?;
        Ok(UncertaintyReport {
            weighted_variance: cov.trace(),
            logdet_cov: logdet_cov(&cov, epsilon)?,
            entropy: entropy(dist),
            delta: delta_closed_form(dist, emb, precision)?,
            loss,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    fn table(rows: &[&[f64]]) -> EmbeddingTable {
        EmbeddingTable::new(rows[0].len(), rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn distribution_validation() {
        assert!(PredictiveDistribution::new(vec![0.5, 0.5]).is_ok());
        assert!(PredictiveDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(PredictiveDistribution::new(vec![-0.1, 1.1]).is_err());
        assert!(PredictiveDistribution::new(vec![]).is_err());
    }

    #[test]
    fn two_point_midpoint() {
        let emb = table(&[&[0.0, 0.0], &[2.0, 0.0]]);
        let d = PredictiveDistribution::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(weighted_mean(&d, &emb).unwrap(), vec![1.0, 0.0]);
        assert_eq!(weighted_variance(&d, &emb).unwrap(), 1.0);
        let cov = weighted_covariance(&d, &emb).unwrap();
        assert_eq!(cov, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn one_hot_collapses() {
        let emb = table(&[&[1.0, 2.0], &[3.0, -1.0], &[0.5, 0.5]]);
        let d = PredictiveDistribution::one_hot(3, TermId(1));
        assert_eq!(weighted_mean(&d, &emb).unwrap(), vec![3.0, -1.0]);
        assert_eq!(weighted_variance(&d, &emb).unwrap(), 0.0);
        assert_eq!(weighted_covariance(&d, &emb).unwrap(), DMatrix::zeros(2, 2));
        let k = 3.0;
        let expected = -(2.0 / 2.0) * (k / (2.0 * PI)).ln() - 3f64.ln();
        assert!(close(delta_closed_form(&d, &emb, k).unwrap(), expected, 1e-12));
        assert!(close(delta_definition(&d, &emb, k).unwrap(), expected, 1e-12));
    }

    #[test]
    fn closed_form_middle_term_vanishes_at_two_pi() {
        let emb = table(&[&[0.0], &[2.0], &[5.0]]);
        let d = PredictiveDistribution::new(vec![0.2, 0.3, 0.5]).unwrap();
        let var = weighted_variance(&d, &emb).unwrap();
        let delta = delta_closed_form(&d, &emb, 2.0 * PI).unwrap();
        assert!(close(delta, var * PI - 3f64.ln(), 1e-12));
    }

    #[test]
    fn uniform_delta_is_first_sum_only() {
        let emb = table(&[&[0.0], &[1.0], &[3.0], &[4.0]]);
        let d = PredictiveDistribution::uniform(4);
        let mean = weighted_mean(&d, &emb).unwrap()[0];
        let k = 0.7;
        let first: f64 = emb
            .rows()
            .map(|r| {
                let g = (k / (2.0 * PI)).sqrt() * (-0.5 * k * (r[0] - mean).powi(2)).exp();
                0.25 * (0.25 / g).ln()
            })
            .sum();
        assert!(close(delta_definition(&d, &emb, k).unwrap(), first, 1e-12));
    }

    #[test]
    fn precision_must_be_positive() {
        let emb = table(&[&[0.0], &[1.0]]);
        let d = PredictiveDistribution::uniform(2);
        assert!(delta_closed_form(&d, &emb, 0.0).is_err());
        assert!(delta_definition(&d, &emb, -1.0).is_err());
    }

    #[test]
    fn logdet_edge_cases() {
        let zero = DMatrix::zeros(2, 2);
        assert!(close(logdet_cov(&zero, 1e-8).unwrap(), 2.0 * 1e-8f64.ln(), 1e-12));
        let eye = DMatrix::<f64>::identity(2, 2);
        let v = logdet_cov(&eye, 0.0).unwrap();
        assert!((v - 2.0 * (1.0 + 1e-8f64).ln()).abs() < 1e-15);
        assert!((v - 2e-8).abs() < 1e-14);
        let skew = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(logdet_cov(&skew, 1e-8), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn entropy_cases() {
        assert_eq!(entropy(&PredictiveDistribution::one_hot(4, TermId(2))), 0.0);
        assert!(close(entropy(&PredictiveDistribution::uniform(7)), 7f64.ln(), 1e-12));
        assert!(close(entropy(&PredictiveDistribution::uniform(2)), 2f64.ln(), 1e-12));
    }

    #[test]
    fn bald_cases() {
        let a = PredictiveDistribution::one_hot(2, TermId(0));
        let b = PredictiveDistribution::one_hot(2, TermId(1));
        assert!(close(bald_score(&[a.clone(), b]).unwrap(), 2f64.ln(), 1e-12));
        assert_eq!(bald_score(&[a.clone(), a]).unwrap(), 0.0);
        let h = PredictiveDistribution::uniform(2);
        assert!(bald_score(&[h.clone(), h]).unwrap().abs() < 1e-15);
        assert!(matches!(bald_score(&[]), Err(Error::EmptyEnsemble)));
    }

    #[test]
    fn dimension_mismatch() {
        let emb = table(&[&[0.0], &[1.0]]);
        let d = PredictiveDistribution::uniform(3);
        assert!(matches!(weighted_mean(&d, &emb), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn top_k_orders_by_probability_then_id() {
        let d = PredictiveDistribution::new(vec![0.2, 0.4, 0.2, 0.2]).unwrap();
        let top = d.top_k(3);
        assert_eq!(top.iter().map(|t| t.0 .0).collect::<Vec<_>>(), vec![1, 0, 2]);
        assert_eq!(d.argmax(), TermId(1));
    }
}

//! Selection strategies, budget schedules and the Z-score filtration rule.

use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingTable;
use crate::error::{Error, Result};
use crate::learner::{predict, LearnerParams};
use crate::pools::InstanceId;
use crate::rng;
use crate::uncertainty::{bald_score, entropy, logdet_cov, weighted_covariance, UncertaintyReport};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Random,
    Entropy,
    InfogainBald,
    /// Ranks by the log-determinant of the weighted covariance.
    WeightedVariance,
}

impl StrategyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::Entropy => "entropy",
            StrategyKind::InfogainBald => "infogain_bald",
            StrategyKind::WeightedVariance => "weighted_variance",
        }
    }
}

/// Immutable view of the model used to score a batch.
#[derive(Clone, Copy, Debug)]
pub struct ScoringContext<'a> {
    pub params: &'a LearnerParams,
    /// Bootstrap heads, required by [`StrategyKind::InfogainBald`].
    pub heads: &'a [LearnerParams],
    pub embeddings: &'a EmbeddingTable,
    pub epsilon: f64,
    pub seed: u64,
    pub round: u64,
}

/// One finite score per instance; higher is more worth annotating.
pub fn score(
    strategy: StrategyKind,
    ctx: &ScoringContext<'_>,
    instances: &[(InstanceId, &[f64])],
) -> Result<Vec<(InstanceId, f64)>> {
    if strategy == StrategyKind::InfogainBald && ctx.heads.len() < 2 {
        return Err(Error::InvalidParameter("infogain_bald needs at least 2 bootstrap heads".into()));
    }
    instances
        .iter()
        .map(|&(id, x)| {
            let s = match strategy {
                StrategyKind::Random => rng::unit(ctx.seed, &[rng::label::SELECTION, ctx.round, id.0]),
                StrategyKind::Entropy => entropy(&predict(ctx.params, x)?),
                StrategyKind::InfogainBald => {
                    let members = ctx.heads.iter().map(|h| predict(h, x)).collect::<Result<Vec<_>>>()?;
                    bald_score(&members)?
                }
                StrategyKind::WeightedVariance => {
                    let dist = predict(ctx.params, x)?;
                    logdet_cov(&weighted_covariance(&dist, ctx.embeddings)?, ctx.epsilon)?
                }
            };
            Ok((id, s))
        })
        .collect()
}

/// The `k` highest scores, ties broken by ascending id.
pub fn select_top_k(scores: &[(InstanceId, f64)], k: usize) -> Vec<InstanceId> {
    let mut ranked = scores.to_vec();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.into_iter().take(k).map(|(id, _)| id).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BudgetSchedule {
    Fixed {
        initial_batch: usize,
        per_round: usize,
    },
    /// Fixed rounds until fewer than `stop_below` instances remain.
    Scanqa {
        #[serde(default = "scanqa_initial")]
        initial_batch: usize,
        #[serde(default = "scanqa_round")]
        per_round: usize,
        #[serde(default = "scanqa_stop")]
        stop_below: usize,
    },
    /// `cap` above `upper`, `fraction`·|D_U| down to `lower`, then nothing.
    Vista {
        #[serde(default = "vista_initial")]
        initial_batch: usize,
        #[serde(default = "vista_cap")]
        cap: usize,
        #[serde(default = "vista_upper")]
        upper: usize,
        #[serde(default = "vista_lower")]
        lower: usize,
        #[serde(default = "vista_fraction")]
        fraction: f64,
    },
}

fn scanqa_initial() -> usize {
    2000
}
fn scanqa_round() -> usize {
    1000
}
fn scanqa_stop() -> usize {
    100
}
fn vista_initial() -> usize {
    3000
}
fn vista_cap() -> usize {
    1500
}
fn vista_upper() -> usize {
    2250
}
fn vista_lower() -> usize {
    750
}
fn vista_fraction() -> f64 {
    0.5
}

impl BudgetSchedule {
    pub fn scanqa() -> Self {
        BudgetSchedule::Scanqa {
            initial_batch: scanqa_initial(),
            per_round: scanqa_round(),
            stop_below: scanqa_stop(),
        }
    }

    pub fn vista() -> Self {
        BudgetSchedule::Vista {
            initial_batch: vista_initial(),
            cap: vista_cap(),
            upper: vista_upper(),
            lower: vista_lower(),
            fraction: vista_fraction(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let BudgetSchedule::Vista {
            upper, lower, fraction, ..
        } = self
        {
            if lower > upper || !(0.0..=1.0).contains(fraction) {
                return Err(Error::Config(format!(
                    "vista schedule needs lower <= upper and fraction in [0, 1] (got {lower}, {upper}, {fraction})"
                )));
            }
        }
        Ok(())
    }
}

/// Selection budget k for the current round.
pub fn budget(schedule: &BudgetSchedule, du_size: usize, is_initial: bool) -> usize {
    match *schedule {
        BudgetSchedule::Fixed {
            initial_batch,
            per_round,
        } => {
            if is_initial {
                initial_batch
            } else {
                per_round
            }
        }
        BudgetSchedule::Scanqa {
            initial_batch,
            per_round,
            stop_below,
        } => {
            if is_initial {
                initial_batch
            } else if du_size >= stop_below {
                per_round
            } else {
                0
            }
        }
        BudgetSchedule::Vista {
            initial_batch,
            cap,
            upper,
            lower,
            fraction,
        } => {
            if is_initial {
                initial_batch
            } else if du_size > upper {
                cap
            } else if du_size > lower {
                (fraction * du_size as f64).floor() as usize
            } else {
                0
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FiltrationThresholds {
    pub z_cov: f64,
    pub z_loss: f64,
}

impl Default for FiltrationThresholds {
    fn default() -> Self {
        FiltrationThresholds {
            z_cov: -1.0,
            z_loss: 3.0,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseLabel {
    /// Confident and consistent with its label.
    Learned,
    /// Semantically uncertain; kept for training.
    Uncertain,
    /// Confident and contradicting its label; sent for reannotation.
    Incompatible,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiltrationStats {
    pub mean_cov: f64,
    pub std_cov: f64,
    pub mean_loss: f64,
    pub std_loss: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and population standard deviation of log-det and loss; `None` for
/// fewer than two reports, which disables filtration.
pub fn filtration_stats(reports: &[UncertaintyReport]) -> Option<FiltrationStats> {
    if reports.len() < 2 {
        return None;
    }
    let (mean_cov, std_cov) = mean_std(reports.iter().map(|r| r.logdet_cov));
    let (mean_loss, std_loss) = mean_std(reports.iter().map(|r| r.loss));
    Some(FiltrationStats {
        mean_cov,
        std_cov,
        mean_loss,
        std_loss,
    })
}

pub fn categorize(report: &UncertaintyReport, stats: &FiltrationStats, thresholds: &FiltrationThresholds) -> CaseLabel {
    let cov_cut = stats.mean_cov + thresholds.z_cov * stats.std_cov;
    let loss_cut = stats.mean_loss + thresholds.z_loss * stats.std_loss;
    if report.logdet_cov < cov_cut && report.loss > loss_cut {
        CaseLabel::Incompatible
    } else if report.logdet_cov >= cov_cut {
        CaseLabel::Uncertain
    } else {
        CaseLabel::Learned
    }
}

/// Ids categorized [`CaseLabel::Incompatible`], ascending.
pub fn filter_for_reannotation(
    reports: &[(InstanceId, UncertaintyReport)],
    stats: &FiltrationStats,
    thresholds: &FiltrationThresholds,
) -> Vec<InstanceId> {
    let mut ids: Vec<InstanceId> = reports
        .iter()
        .filter(|(_, r)| categorize(r, stats, thresholds) == CaseLabel::Incompatible)
        .map(|(id, _)| *id)
        .collect();
    ids.sort_unstable();
    ids
}

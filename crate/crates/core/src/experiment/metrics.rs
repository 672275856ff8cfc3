//! Learning-curve and reannotation metrics over epoch logs.

use serde::{Deserialize, Serialize};

use super::{EpochLog, OutcomeCounts};

/// Running maximum.
pub fn cumulative_best(series: &[f64]) -> Vec<f64> {
    let mut best = f64::NEG_INFINITY;
    series
        .iter()
        .map(|&s| {
            best = best.max(s);
            best
        })
        .collect()
}

/// Σ max(s_i − baseline, 0), in percentage points.
pub fn auc_above_baseline(best: &[f64], baseline: f64) -> f64 {
    best.iter().map(|&s| (s - baseline).max(0.0)).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCost {
    pub threshold: f64,
    /// First epoch whose best-cumulative score reaches the threshold.
    pub epoch: Option<usize>,
}

pub fn cost_to_threshold(best: &[f64], thresholds: &[f64]) -> Vec<ThresholdCost> {
    thresholds
        .iter()
        .map(|&t| ThresholdCost {
            threshold: t,
            epoch: best.iter().position(|&s| s >= t),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiltrationRow {
    pub epoch: u64,
    pub flagged: usize,
    /// Flagged instances whose annotation differed from the clean label.
    pub correct_rate: f64,
    /// Flagged instances whose annotation was already clean.
    pub false_rate: f64,
}

/// One row per reannotation epoch; `None` when any of them lacks ground truth.
pub fn filtration_confusion(logs: &[EpochLog]) -> Option<Vec<FiltrationRow>> {
    logs.iter()
        .filter(|l| l.reannotated)
        .map(|l| {
            let noisy = l.flagged_noisy_count?;
            let (correct_rate, false_rate) = if l.flagged_count == 0 {
                (0.0, 0.0)
            } else {
                let n = l.flagged_count as f64;
                (noisy as f64 / n, (l.flagged_count - noisy) as f64 / n)
            };
            Some(FiltrationRow {
                epoch: l.epoch,
                flagged: l.flagged_count,
                correct_rate,
                false_rate,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRatios {
    pub processed: usize,
    pub hit: f64,
    pub resolved: f64,
    pub manual_replaced: f64,
    pub unchanged: f64,
    /// Set when nothing was processed and every ratio is zero.
    pub empty: bool,
}

pub fn outcome_ratios(logs: &[EpochLog]) -> OutcomeRatios {
    let total = logs.iter().fold(OutcomeCounts::default(), |acc, l| acc.add(&l.outcome_counts));
    let n = total.total();
    if n == 0 {
        return OutcomeRatios {
            empty: true,
            ..OutcomeRatios::default()
        };
    }
    let f = |c: usize| c as f64 / n as f64;
    OutcomeRatios {
        processed: n,
        hit: f(total.hit),
        resolved: f(total.resolved),
        manual_replaced: f(total.manual_replaced),
        unchanged: f(total.unchanged),
        empty: false,
    }
}

//! The multi-turn loop: per epoch, selection, then reannotation, then
//! training on D_L, then evaluation on a held-out split.

pub mod metrics;
pub mod output;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusBundle, TermId};
use crate::error::{Error, Result};
use crate::learner::{init_learner, instance_loss, predict, train_bootstrap_heads, train_epoch, Example, LearnerParams, TrainConfig};
use crate::oracle::{
    annotate_initial, classify_annotation, Evidence, NoiseModel, Oracle, OracleKind, ReannotationOutcome,
    ReannotationRequest,
};
use crate::policy::{
    budget, filter_for_reannotation, filtration_stats, score, select_top_k, BudgetSchedule, CaseLabel,
    FiltrationThresholds, ScoringContext, StrategyKind,
};
use crate::pools::{InstanceId, InstanceRecord, NoiseKind, PoolSizes, Pools};
use crate::rng;
use crate::uncertainty::{UncertaintyReport, DEFAULT_EPSILON};

pub use metrics::{
    auc_above_baseline, cost_to_threshold, cumulative_best, filtration_confusion, outcome_ratios, FiltrationRow,
    OutcomeRatios, ThresholdCost,
};

/// Number of predictions attached to each reannotation request.
pub const EVIDENCE_TOP_K: usize = 5;

/// Epochs at which a selection round runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionEpochs {
    EveryEpoch,
    Epochs(Vec<u64>),
}

impl SelectionEpochs {
    pub fn contains(&self, epoch: u64) -> bool {
        match self {
            SelectionEpochs::EveryEpoch => true,
            SelectionEpochs::Epochs(list) => list.contains(&epoch),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSpec {
    pub kind: OracleKind,
    /// Remote human only: how long a reannotation phase may wait.
    pub timeout_secs: u64,
    /// Remote human only: how often the loop checks for submitted decisions.
    pub poll_interval_ms: u64,
    /// Used for instances that carry a clean label but no pre-drawn answer.
    pub noise: NoiseModel,
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec {
            kind: OracleKind::Hierarchical,
            timeout_secs: 600,
            poll_interval_ms: 200,
            noise: NoiseModel::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopConfig {
    pub num_epochs: u64,
    pub selection: SelectionEpochs,
    pub reannotation_epochs: Vec<u64>,
    pub strategy: StrategyKind,
    pub schedule: BudgetSchedule,
    pub thresholds: FiltrationThresholds,
    pub oracle: OracleSpec,
    /// `train.seed` is ignored; training seeds derive from `master_seed`.
    pub train: TrainConfig,
    pub eval_split_fraction: f64,
    /// Percentage points below which the best-score curve does not count.
    pub auc_baseline: f64,
    /// Ascending EM@1 percentages for the cost table.
    pub score_thresholds: Vec<f64>,
    /// Precision k of the Gaussian in the Δ metric.
    pub gaussian_precision: f64,
    pub logdet_epsilon: f64,
    #[serde(skip)]
    pub master_seed: u64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            num_epochs: 30,
            selection: SelectionEpochs::EveryEpoch,
            reannotation_epochs: vec![5, 10, 15, 20],
            strategy: StrategyKind::WeightedVariance,
            schedule: BudgetSchedule::Fixed {
                initial_batch: 100,
                per_round: 50,
            },
            thresholds: FiltrationThresholds::default(),
            oracle: OracleSpec::default(),
            train: TrainConfig::default(),
            eval_split_fraction: 0.2,
            auc_baseline: 20.0,
            score_thresholds: Vec::new(),
            gaussian_precision: 1.0,
            logdet_epsilon: DEFAULT_EPSILON,
            master_seed: 0,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if let Some(e) = self.reannotation_epochs.iter().find(|&&e| e >= self.num_epochs) {
            return bad(format!("reannotation epoch {e} outside [0, {})", self.num_epochs));
        }
        if !(self.eval_split_fraction > 0.0 && self.eval_split_fraction < 1.0) {
            return bad(format!("eval_split_fraction must lie in (0, 1), got {}", self.eval_split_fraction));
        }
        if !(0.0..=100.0).contains(&self.auc_baseline) {
            return bad(format!("auc_baseline must lie in [0, 100], got {}", self.auc_baseline));
        }
        if self.score_thresholds.iter().any(|t| !t.is_finite()) || !self.score_thresholds.is_sorted() {
            return bad("score_thresholds must be finite and ascending".into());
        }
        if !(self.gaussian_precision > 0.0 && self.gaussian_precision.is_finite()) {
            return bad(format!("gaussian_precision must be positive, got {}", self.gaussian_precision));
        }
        if !self.logdet_epsilon.is_finite() {
            return bad("logdet_epsilon must be finite".into());
        }
        if self.thresholds.z_cov.is_nan() || self.thresholds.z_loss.is_nan() {
            return bad("filtration thresholds must not be NaN".into());
        }
        if self.strategy == StrategyKind::InfogainBald && self.train.ensemble_heads < 2 {
            return bad("infogain_bald needs train.ensemble_heads >= 2".into());
        }
        if self.oracle.poll_interval_ms == 0 {
            return bad("oracle.poll_interval_ms must be positive".into());
        }
        self.train.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.schedule.validate()?;
        self.oracle.noise.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: rng::derive(self.master_seed, &[rng::label::TRAIN]),
            ..self.train.clone()
        }
    }

    fn noise_seed(&self) -> u64 {
        self.oracle
            .noise
            .seed
            .unwrap_or_else(|| rng::derive(self.master_seed, &[rng::label::NOISE]))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub hit: usize,
    pub resolved: usize,
    pub manual_replaced: usize,
    pub unchanged: usize,
}

impl OutcomeCounts {
    pub fn record(&mut self, outcome: ReannotationOutcome) {
        match outcome {
            ReannotationOutcome::Hit => self.hit += 1,
            ReannotationOutcome::Resolved => self.resolved += 1,
            ReannotationOutcome::ManualReplaced => self.manual_replaced += 1,
            ReannotationOutcome::Unchanged => self.unchanged += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.hit + self.resolved + self.manual_replaced + self.unchanged
    }

    pub fn add(&self, other: &OutcomeCounts) -> OutcomeCounts {
        OutcomeCounts {
            hit: self.hit + other.hit,
            resolved: self.resolved + other.resolved,
            manual_replaced: self.manual_replaced + other.manual_replaced,
            unchanged: self.unchanged + other.unchanged,
        }
    }
}

/// Categories of the flagged annotations at the time they were flagged.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseKindCounts {
    pub canonical_correct: usize,
    pub alt_valid: usize,
    pub non_canonical: usize,
    pub irrelevant: usize,
}

impl NoiseKindCounts {
    fn record(&mut self, kind: NoiseKind) {
        match kind {
            NoiseKind::CanonicalCorrect => self.canonical_correct += 1,
            NoiseKind::AltValid => self.alt_valid += 1,
            NoiseKind::NonCanonical => self.non_canonical += 1,
            NoiseKind::Irrelevant => self.irrelevant += 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: u64,
    /// EM@1 (percent) on the eval split against clean labels, or against
    /// annotations when the data carries no ground truth.
    pub em1: f64,
    /// EM@1 (percent) against the eval split's annotations.
    pub em1_annotation: f64,
    /// Mean loss over D_L before this epoch's updates; absent when D_L was empty.
    pub mean_train_loss: Option<f64>,
    pub selected_count: usize,
    pub reannotated: bool,
    pub flagged_count: usize,
    /// Flagged instances whose annotation differed from the clean label.
    pub flagged_noisy_count: Option<usize>,
    pub flagged_kinds: Option<NoiseKindCounts>,
    pub outcome_counts: OutcomeCounts,
    pub pool_sizes: PoolSizes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub em1: f64,
    pub em1_annotation: f64,
    pub best_em1: f64,
    pub pool_sizes: PoolSizes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub strategy: StrategyKind,
    pub oracle: OracleKind,
    pub master_seed: u64,
    pub pool_size: usize,
    pub eval_size: usize,
    pub logs: Vec<EpochLog>,
    pub best_cumulative: Vec<f64>,
    pub auc_baseline: f64,
    pub auc: f64,
    pub cost_to_threshold: Vec<ThresholdCost>,
    /// Absent when the data carries no ground truth.
    pub filtration: Option<Vec<FiltrationRow>>,
    pub outcome_ratios: OutcomeRatios,
    pub final_metrics: Option<FinalMetrics>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Selection,
    Reannotation,
    Training,
    Evaluation,
}

/// Hooks called by [`run`]. Every method has an empty default.
pub trait Observer {
    fn phase_started(&mut self, _epoch: u64, _phase: Phase) {}

    /// Called after the pool audit of the phase has passed.
    fn phase_finished(&mut self, _epoch: u64, _phase: Phase, _pools: &Pools) {}

    fn epoch_finished(&mut self, _log: &EpochLog) {}
}

/// Observer that ignores everything.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoObserver;

impl Observer for NoObserver {}

/// Splits records into (pool, eval) deterministically. The eval set has
/// `round(fraction · N)` records; both halves are sorted by id.
pub fn split_eval(
    mut records: Vec<InstanceRecord>,
    fraction: f64,
    seed: u64,
) -> (Vec<InstanceRecord>, Vec<InstanceRecord>) {
    records.sort_by_key(|r| r.id);
    let n_eval = (fraction * records.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut rng::stream(seed, &[rng::label::SPLIT]));
    let eval_idx: BTreeSet<usize> = order.into_iter().take(n_eval).collect();
    let (mut pool, mut eval) = (Vec::new(), Vec::new());
    for (i, r) in records.into_iter().enumerate() {
        if eval_idx.contains(&i) {
            eval.push(r);
        } else {
            pool.push(r);
        }
    }
    (pool, eval)
}

struct EvalItem {
    features: Vec<f64>,
    reference: TermId,
    annotation: TermId,
}

fn surface_label(bundle: &CorpusBundle, r: &InstanceRecord) -> Result<Option<TermId>> {
    match &r.surface_answer {
        Some(s) => bundle
            .corpus
            .id_of(s)
            .map(Some)
            .ok_or_else(|| Error::UnknownTerm(s.clone())),
        None => Ok(None),
    }
}

fn eval_items(bundle: &CorpusBundle, eval: &[InstanceRecord]) -> Result<Vec<EvalItem>> {
    eval.iter()
        .map(|r| {
            let annotated = surface_label(bundle, r)?;
            let clean = r.truth.map(|t| t.clean_label);
            let reference = clean
                .or(annotated)
                .ok_or_else(|| Error::Config(format!("eval instance {} has neither answer nor clean label", r.id)))?;
            Ok(EvalItem {
                features: r.features.clone(),
                reference,
                annotation: annotated.unwrap_or(reference),
            })
        })
        .collect()
}

fn exact_match(params: &LearnerParams, items: &[EvalItem]) -> Result<(f64, f64)> {
    if items.is_empty() {
        return Ok((0.0, 0.0));
    }
    let (mut clean, mut annotated) = (0usize, 0usize);
    for item in items {
        let top = predict(params, &item.features)?.argmax();
        clean += usize::from(top == item.reference);
        annotated += usize::from(top == item.annotation);
    }
    let n = items.len() as f64;
    Ok((100.0 * clean as f64 / n, 100.0 * annotated as f64 / n))
}

fn check_data(bundle: &CorpusBundle, records: &[InstanceRecord]) -> Result<usize> {
    let dim = records.first().map_or(1, |r| r.features.len());
    for r in records {
        if r.features.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.features.len(),
            });
        }
        if let Some(t) = r.truth {
            bundle.corpus.check_id(t.clean_label)?;
        }
        surface_label(bundle, r)?;
    }
    Ok(dim)
}

/// Builds the simulated reannotation oracle for `kind`. The remote human
/// oracle needs a running service and is built by [`crate::service`].
pub fn simulated_oracle(kind: OracleKind) -> Result<Box<dyn Oracle>> {
    use crate::oracle::{DiligentOracle, HierarchicalOracle, LazyOracle};
    match kind {
        OracleKind::Lazy => Ok(Box::new(LazyOracle)),
        OracleKind::SimulatedDiligent => Ok(Box::new(DiligentOracle)),
        OracleKind::Hierarchical => Ok(Box::new(HierarchicalOracle)),
        OracleKind::RemoteHuman => Err(Error::Config("the remote_human oracle requires the serve command".into())),
    }
}

struct Runner<'a> {
    config: &'a LoopConfig,
    bundle: &'a CorpusBundle,
    train: TrainConfig,
    pools: Pools,
    params: LearnerParams,
    heads: Vec<LearnerParams>,
    simulated: bool,
    initial_done: bool,
}

impl Runner<'_> {
    fn annotate(&self, id: InstanceId) -> Result<(TermId, String, Option<NoiseKind>)> {
        let r = self.pools.record(id).expect("selected ids exist");
        if let Some(label) = surface_label(self.bundle, r)? {
            return Ok((label, r.surface_answer.clone().unwrap_or_default(), None));
        }
        let truth = r.truth.ok_or(Error::MissingLabel(id))?;
        let a = annotate_initial(
            self.bundle,
            id,
            r.qtype,
            truth.clean_label,
            &self.config.oracle.noise,
            self.config.noise_seed(),
        )?;
        Ok((a.label, a.surface, Some(a.noise_kind)))
    }

    fn select(&mut self, epoch: u64) -> Result<usize> {
        if !self.config.selection.contains(epoch) {
            return Ok(0);
        }
        let is_initial = !self.initial_done;
        self.initial_done = true;
        let k = budget(&self.config.schedule, self.pools.unlabeled().len(), is_initial).min(self.pools.unlabeled().len());
        if k == 0 {
            return Ok(0);
        }
        let instances: Vec<(InstanceId, &[f64])> = self
            .pools
            .unlabeled()
            .iter()
            .map(|&id| (id, self.pools.record(id).expect("pool ids index records").features.as_slice()))
            .collect();
        let ctx = ScoringContext {
            params: &self.params,
            heads: &self.heads,
            embeddings: &self.bundle.embeddings,
            epsilon: self.config.logdet_epsilon,
            seed: rng::derive(self.config.master_seed, &[rng::label::SELECTION]),
            round: epoch,
        };
        let scores = score(self.config.strategy, &ctx, &instances)?;
        let chosen = select_top_k(&scores, k);
        let mut labels = Vec::with_capacity(chosen.len());
        let mut drawn = Vec::new();
        for &id in &chosen {
            let (label, surface, kind) = self.annotate(id)?;
            labels.push((label, surface));
            if let Some(kind) = kind {
                drawn.push((id, kind));
            }
        }
        self.pools.commit_selection(&chosen, &labels)?;
        for (id, kind) in drawn {
            self.pools.set_noise_kind(id, kind);
        }
        Ok(chosen.len())
    }

    fn reannotate(&mut self, oracle: &mut dyn Oracle, log: &mut EpochLog) -> Result<()> {
        let mut reports = Vec::with_capacity(self.pools.labeled().len());
        let mut evidence = Vec::with_capacity(self.pools.labeled().len());
        for &id in self.pools.labeled() {
            let r = self.pools.record(id).expect("pool ids index records");
            let label = r.annotated_label.ok_or(Error::MissingLabel(id))?;
            let dist = predict(&self.params, &r.features)?;
            let loss = instance_loss(&self.params, &r.features, label)?;
            let report = UncertaintyReport::compute(
                &dist,
                &self.bundle.embeddings,
                self.config.gaussian_precision,
                self.config.logdet_epsilon,
                loss,
            )?;
            reports.push((id, report));
            evidence.push(dist.top_k(EVIDENCE_TOP_K));
        }
        let Some(stats) = filtration_stats(&reports.iter().map(|(_, r)| *r).collect::<Vec<_>>()) else {
            log.flagged_noisy_count = self.simulated.then_some(0);
            log.flagged_kinds = self.simulated.then(NoiseKindCounts::default);
            return Ok(());
        };
        let flagged = filter_for_reannotation(&reports, &stats, &self.config.thresholds);

        let mut requests = Vec::with_capacity(flagged.len());
        let mut kinds = NoiseKindCounts::default();
        let mut noisy = 0;
        for (i, (id, report)) in reports.iter().enumerate() {
            if flagged.binary_search(id).is_err() {
                continue;
            }
            let r = self.pools.record(*id).expect("pool ids index records");
            if let Some(t) = r.truth {
                kinds.record(t.noise_kind);
            }
            noisy += usize::from(r.is_improper() == Some(true));
            requests.push(ReannotationRequest {
                id: *id,
                qtype: r.qtype,
                label: r.annotated_label.expect("labeled records carry a label"),
                surface: r.surface_answer.clone().unwrap_or_default(),
                truth: r.truth,
                evidence: Evidence {
                    top_predictions: evidence[i].clone(),
                    logdet_cov: report.logdet_cov,
                    loss: report.loss,
                    case: CaseLabel::Incompatible,
                },
            });
        }
        self.pools.flag(&flagged)?;
        self.pools.audit()?;
        log.flagged_count = flagged.len();
        log.flagged_noisy_count = self.simulated.then_some(noisy);
        log.flagged_kinds = self.simulated.then_some(kinds);
        if requests.is_empty() {
            return Ok(());
        }

        let mut decisions = oracle.reannotate(self.bundle, &requests)?;
        decisions.sort_by_key(|d| d.id);
        let answered: Vec<InstanceId> = decisions.iter().map(|d| d.id).collect();
        if answered != flagged {
            return Err(Error::Oracle(format!(
                "oracle answered {} requests for {} flagged instances",
                answered.len(),
                flagged.len()
            )));
        }
        for (d, req) in decisions.iter().zip(&requests) {
            self.bundle.corpus.check_id(d.label)?;
            self.pools.resolve(d.id, d.label, &d.surface, d.outcome)?;
            if let (true, Some(t)) = (d.label != req.label, req.truth) {
                self.pools
                    .set_noise_kind(d.id, classify_annotation(self.bundle, d.label, t.clean_label));
            }
            log.outcome_counts.record(d.outcome);
        }
        Ok(())
    }

    fn train(&mut self, epoch: u64) -> Result<Option<f64>> {
        let examples: Vec<Example<'_>> = self
            .pools
            .labeled()
            .iter()
            .map(|&id| {
                let r = self.pools.record(id).expect("pool ids index records");
                Example {
                    features: &r.features,
                    label: r.annotated_label.expect("labeled records carry a label"),
                }
            })
            .collect();
        if examples.is_empty() {
            return Ok(None);
        }
        let (params, loss) = train_epoch(&self.params, &examples, &self.train, epoch)?;
        if self.config.strategy == StrategyKind::InfogainBald {
            self.heads = train_bootstrap_heads(&self.heads, &examples, &self.train, epoch)?;
        }
        self.params = params;
        Ok(Some(loss))
    }
}

/// Runs the loop over `records` (pool and eval split are carved from them).
pub fn run(
    config: &LoopConfig,
    records: Vec<InstanceRecord>,
    bundle: &CorpusBundle,
    oracle: &mut dyn Oracle,
    observer: &mut dyn Observer,
) -> Result<ExperimentResult> {
    config.validate()?;
    let feature_dim = check_data(bundle, &records)?;
    let (pool, eval) = split_eval(records, config.eval_split_fraction, config.master_seed);
    let eval = eval_items(bundle, &eval)?;
    let simulated = !pool.is_empty() && pool.iter().all(|r| r.truth.is_some());
    let pool_size = pool.len();
    let params = init_learner(feature_dim, bundle.corpus.len())?;
    let heads = if config.strategy == StrategyKind::InfogainBald {
        vec![params.clone(); config.train.ensemble_heads]
    } else {
        Vec::new()
    };
    let mut runner = Runner {
        config,
        bundle,
        train: config.train_config(),
        pools: Pools::ingest(pool)?,
        params,
        heads,
        simulated,
        initial_done: false,
    };
    let reannotation_epochs: BTreeSet<u64> = config.reannotation_epochs.iter().copied().collect();

    let mut logs = Vec::with_capacity(config.num_epochs as usize);
    for epoch in 0..config.num_epochs {
        observer.phase_started(epoch, Phase::Selection);
        let selected_count = runner.select(epoch)?;
        runner.pools.audit()?;
        observer.phase_finished(epoch, Phase::Selection, &runner.pools);

        let mut log = EpochLog {
            epoch,
            em1: 0.0,
            em1_annotation: 0.0,
            mean_train_loss: None,
            selected_count,
            reannotated: false,
            flagged_count: 0,
            flagged_noisy_count: None,
            flagged_kinds: None,
            outcome_counts: OutcomeCounts::default(),
            pool_sizes: PoolSizes::default(),
        };
        if reannotation_epochs.contains(&epoch) {
            observer.phase_started(epoch, Phase::Reannotation);
            log.reannotated = true;
            runner.reannotate(oracle, &mut log)?;
            runner.pools.audit()?;
            observer.phase_finished(epoch, Phase::Reannotation, &runner.pools);
        }

        observer.phase_started(epoch, Phase::Training);
        log.mean_train_loss = runner.train(epoch)?;
        runner.pools.audit()?;
        observer.phase_finished(epoch, Phase::Training, &runner.pools);

        observer.phase_started(epoch, Phase::Evaluation);
        (log.em1, log.em1_annotation) = exact_match(&runner.params, &eval)?;
        log.pool_sizes = runner.pools.sizes();
        observer.phase_finished(epoch, Phase::Evaluation, &runner.pools);
        log::debug!(
            "epoch {epoch}: em1 {:.2} selected {} flagged {}",
            log.em1,
            log.selected_count,
            log.flagged_count
        );
        observer.epoch_finished(&log);
        logs.push(log);
    }

    let em: Vec<f64> = logs.iter().map(|l| l.em1).collect();
    let best_cumulative = cumulative_best(&em);
    let final_metrics = logs.last().map(|l| FinalMetrics {
        em1: l.em1,
        em1_annotation: l.em1_annotation,
        best_em1: *best_cumulative.last().expect("one value per log"),
        pool_sizes: l.pool_sizes.clone(),
    });
    Ok(ExperimentResult {
        strategy: config.strategy,
        oracle: config.oracle.kind,
        master_seed: config.master_seed,
        pool_size,
        eval_size: eval.len(),
        auc: auc_above_baseline(&best_cumulative, config.auc_baseline),
        auc_baseline: config.auc_baseline,
        cost_to_threshold: cost_to_threshold(&best_cumulative, &config.score_thresholds),
        filtration: if simulated { filtration_confusion(&logs) } else { None },
        outcome_ratios: outcome_ratios(&logs),
        final_metrics,
        best_cumulative,
        logs,
    })
}

/// Runs with one of the simulated oracles and no observer.
pub fn run_simulated(config: &LoopConfig, records: Vec<InstanceRecord>, bundle: &CorpusBundle) -> Result<ExperimentResult> {
    let mut oracle = simulated_oracle(config.oracle.kind)?;
    run(config, records, bundle, oracle.as_mut(), &mut NoObserver)
}

/// Best eval EM@1 reached by training on the whole pool with clean labels for
/// `config.num_epochs` epochs, using the same split and optimizer settings.
pub fn noiseless_ceiling(config: &LoopConfig, records: Vec<InstanceRecord>, bundle: &CorpusBundle) -> Result<f64> {
    config.validate()?;
    let feature_dim = check_data(bundle, &records)?;
    let (pool, eval) = split_eval(records, config.eval_split_fraction, config.master_seed);
    let eval = eval_items(bundle, &eval)?;
    let examples: Vec<Example<'_>> = pool
        .iter()
        .map(|r| {
            r.truth
                .map(|t| Example {
                    features: &r.features,
                    label: t.clean_label,
                })
                .ok_or_else(|| Error::Config(format!("instance {} has no clean label", r.id)))
        })
        .collect::<Result<_>>()?;
    let train = config.train_config();
    let mut params = init_learner(feature_dim, bundle.corpus.len())?;
    let mut best = 0.0f64;
    for epoch in 0..config.num_epochs {
        if !examples.is_empty() {
            params = train_epoch(&params, &examples, &train, epoch)?.0;
        }
        best = best.max(exact_match(&params, &eval)?.0);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic, GenConfig};

    fn small() -> (LoopConfig, crate::synth::SyntheticData) {
        let data = generate_synthetic(&GenConfig {
            num_instances: 300,
            seed: Some(3),
            ..GenConfig::default()
        })
        .unwrap();
        let config = LoopConfig {
            num_epochs: 8,
            reannotation_epochs: vec![2, 4, 6],
            schedule: BudgetSchedule::Fixed {
                initial_batch: 40,
                per_round: 20,
            },
            score_thresholds: vec![10.0, 30.0],
            master_seed: 9,
            ..LoopConfig::default()
        };
        (config, data)
    }

    #[test]
    fn zero_epochs_is_empty() {
        let (mut config, data) = small();
        config.num_epochs = 0;
        config.reannotation_epochs.clear();
        let r = run_simulated(&config, data.records, &data.bundle).unwrap();
        assert!(r.logs.is_empty());
        assert_eq!(r.auc, 0.0);
        assert!(r.final_metrics.is_none());
    }

    #[test]
    fn pool_sizes_are_conserved() {
        let (config, data) = small();
        let r = run_simulated(&config, data.records, &data.bundle).unwrap();
        assert_eq!(r.pool_size + r.eval_size, 300);
        assert_eq!(r.eval_size, 60);
        for l in &r.logs {
            let s = &l.pool_sizes;
            assert_eq!(s.unlabeled + s.labeled + s.queue, r.pool_size);
            assert_eq!(s.queue, 0);
        }
        assert_eq!(r.logs[0].selected_count, 40);
        assert_eq!(r.logs[1].selected_count, 20);
        assert!(r.best_cumulative.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn same_seed_same_result() {
        let (config, data) = small();
        let a = run_simulated(&config, data.records.clone(), &data.bundle).unwrap();
        let b = run_simulated(&config, data.records, &data.bundle).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn bald_runs_with_heads() {
        let (mut config, data) = small();
        config.strategy = StrategyKind::InfogainBald;
        config.train.ensemble_heads = 3;
        let r = run_simulated(&config, data.records, &data.bundle).unwrap();
        assert_eq!(r.logs.len(), 8);
    }

    #[test]
    fn invalid_configs() {
        let (config, _) = small();
        let bad = [
            LoopConfig {
                reannotation_epochs: vec![8],
                ..config.clone()
            },
            LoopConfig {
                eval_split_fraction: 1.0,
                ..config.clone()
            },
            LoopConfig {
                score_thresholds: vec![30.0, 10.0],
                ..config.clone()
            },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
        }
        assert!(simulated_oracle(OracleKind::RemoteHuman).is_err());
    }

    #[test]
    fn split_is_deterministic_and_sized() {
        let (_, data) = small();
        let (p1, e1) = split_eval(data.records.clone(), 0.25, 4);
        let (p2, e2) = split_eval(data.records, 0.25, 4);
        assert_eq!((p1.len(), e1.len()), (225, 75));
        assert_eq!(e1, e2);
        assert_eq!(p1, p2);
    }
}

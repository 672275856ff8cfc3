use aqua::config::preset;
use aqua::corpus::CorpusBundle;
use aqua::experiment::output::{filtration_rows, read_result, write_outputs};
use aqua::experiment::{
    run, run_simulated, simulated_oracle, EpochLog, LoopConfig, Observer, OracleSpec, Phase, SelectionEpochs,
};
use aqua::oracle::OracleKind;
use aqua::policy::{BudgetSchedule, StrategyKind};
use aqua::pools::{InstanceRecord, PoolSizes, Pools};

fn standard(epochs: u64) -> (LoopConfig, Vec<InstanceRecord>, CorpusBundle) {
    let doc = preset("standard").unwrap().with_seed(Some(2));
    let mut cfg = doc.loop_config();
    cfg.num_epochs = epochs;
    cfg.reannotation_epochs.retain(|&e| e < epochs);
    let data = doc.load_data().unwrap();
    (cfg, data.records, data.bundle)
}

#[derive(Default)]
struct Trace {
    events: Vec<(u64, Phase, bool)>,
    queue_at_training: Vec<usize>,
    epochs: Vec<u64>,
}

impl Observer for Trace {
    fn phase_started(&mut self, epoch: u64, phase: Phase) {
        self.events.push((epoch, phase, true));
    }

    fn phase_finished(&mut self, epoch: u64, phase: Phase, pools: &Pools) {
        self.events.push((epoch, phase, false));
        if phase == Phase::Training {
            self.queue_at_training.push(pools.sizes().queue);
        }
    }

    fn epoch_finished(&mut self, log: &EpochLog) {
        self.epochs.push(log.epoch);
    }
}

#[test]
fn phases_run_in_order_and_queue_drains_before_training() {
    let (cfg, records, bundle) = standard(12);
    let mut oracle = simulated_oracle(OracleKind::Hierarchical).unwrap();
    let mut trace = Trace::default();
    let result = run(&cfg, records, &bundle, oracle.as_mut(), &mut trace).unwrap();
    let mut expected = Vec::new();
    for e in 0..12 {
        let mut phases = vec![Phase::Selection];
        if cfg.reannotation_epochs.contains(&e) {
            phases.push(Phase::Reannotation);
        }
        phases.extend([Phase::Training, Phase::Evaluation]);
        for p in phases {
            expected.push((e, p, true));
            expected.push((e, p, false));
        }
    }
    assert_eq!(trace.events, expected);
    assert_eq!(trace.epochs, (0..12).collect::<Vec<_>>());
    assert!(trace.queue_at_training.iter().all(|&q| q == 0));
    assert_eq!(result.logs.len(), 12);
    assert_eq!(result.pool_size + result.eval_size, 2000);
    assert_eq!(result.eval_size, 400);
}

#[test]
fn scanqa_schedule_trains_on_after_exhaustion() {
    let doc = preset("scanqa-sim").unwrap();
    let cfg = doc.loop_config();
    let data = doc.load_data().unwrap();
    let result = run_simulated(&cfg, data.records, &data.bundle).unwrap();
    let selected: Vec<usize> = result.logs.iter().map(|l| l.selected_count).collect();
    let pool = result.pool_size;
    assert_eq!(selected[0], 128);
    assert!(selected[1..].iter().all(|&s| s <= 64));
    // Selection stops once fewer than 100 remain; later epochs only train.
    let last = result.logs.iter().rposition(|l| l.selected_count > 0).unwrap();
    let before_stop = &result.logs[last].pool_sizes;
    assert!(before_stop.unlabeled < 100 + 64);
    assert!(result.logs[last + 1..].iter().all(|l| l.pool_sizes.unlabeled == before_stop.unlabeled));
    assert_eq!(result.logs.len() as u64, cfg.num_epochs);
    let final_sizes = &result.final_metrics.unwrap().pool_sizes;
    assert_eq!(final_sizes.unlabeled + final_sizes.labeled + final_sizes.queue, pool);
}

#[test]
fn outputs_round_trip() {
    let (cfg, records, bundle) = standard(11);
    let result = run_simulated(&cfg, records, &bundle).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = write_outputs(dir.path(), &result).unwrap();
    assert_eq!(files.len(), 3);
    assert_eq!(read_result(&files[0]).unwrap(), result);
    let filtration = std::fs::read_to_string(&files[2]).unwrap();
    let rows = filtration_rows(&result);
    assert_eq!(rows.len(), cfg.reannotation_epochs.len());
    assert_eq!(filtration.lines().count(), 1 + rows.len());
    assert!(filtration.starts_with("epoch,flagged,correct_rate,false_rate,hit,resolved,manual_replaced,unchanged"));
    for r in rows {
        assert_eq!(r.hit + r.resolved + r.manual_replaced + r.unchanged, r.flagged);
    }
}

#[test]
fn runs_without_ground_truth() {
    let (mut cfg, records, bundle) = standard(11);
    let stripped: Vec<InstanceRecord> = records
        .into_iter()
        .map(|mut r| {
            r.truth = None;
            r
        })
        .collect();
    cfg.oracle = OracleSpec {
        kind: OracleKind::Hierarchical,
        ..cfg.oracle
    };
    let result = run_simulated(&cfg, stripped, &bundle).unwrap();
    assert!(result.filtration.is_none());
    assert!(result.logs.iter().all(|l| l.flagged_noisy_count.is_none()));
    // Without a manual answer the hierarchical oracle can only keep or canonicalize.
    let manual: usize = result.logs.iter().map(|l| l.outcome_counts.manual_replaced).sum();
    assert_eq!(manual, 0);
    // The reference is then the annotation itself.
    for l in &result.logs {
        assert_eq!(l.em1, l.em1_annotation);
    }
}

#[test]
fn every_strategy_and_simulated_oracle_runs() {
    let (cfg, records, bundle) = standard(6);
    let cfg = LoopConfig {
        reannotation_epochs: vec![3, 5],
        ..cfg
    };
    for strategy in [
        StrategyKind::Random,
        StrategyKind::Entropy,
        StrategyKind::InfogainBald,
        StrategyKind::WeightedVariance,
    ] {
        for kind in [OracleKind::Lazy, OracleKind::SimulatedDiligent, OracleKind::Hierarchical] {
            let c = LoopConfig {
                strategy,
                oracle: OracleSpec {
                    kind,
                    ..cfg.oracle.clone()
                },
                ..cfg.clone()
            };
            let r = run_simulated(&c, records.clone(), &bundle).unwrap();
            assert_eq!((r.strategy, r.oracle), (strategy, kind));
            let ratios = &r.outcome_ratios;
            if !ratios.empty {
                let sum = ratios.hit + ratios.resolved + ratios.manual_replaced + ratios.unchanged;
                assert!((sum - 1.0).abs() < 1e-12);
            }
            if kind == OracleKind::Lazy {
                assert!(ratios.empty || ratios.unchanged == 1.0);
            }
            if kind == OracleKind::SimulatedDiligent {
                assert_eq!(ratios.resolved, 0.0);
            }
        }
    }
    assert!(simulated_oracle(OracleKind::RemoteHuman).is_err());
}

#[test]
fn selection_epochs_limit_rounds() {
    let (cfg, records, bundle) = standard(6);
    let cfg = LoopConfig {
        selection: SelectionEpochs::Epochs(vec![0, 2]),
        schedule: BudgetSchedule::Fixed {
            initial_batch: 30,
            per_round: 10,
        },
        reannotation_epochs: vec![],
        ..cfg
    };
    let r = run_simulated(&cfg, records, &bundle).unwrap();
    let selected: Vec<usize> = r.logs.iter().map(|l| l.selected_count).collect();
    assert_eq!(selected, vec![30, 0, 10, 0, 0, 0]);
    assert_eq!(
        r.final_metrics.unwrap().pool_sizes,
        PoolSizes {
            unlabeled: r.pool_size - 40,
            labeled: 40,
            queue: 0
        }
    );
}

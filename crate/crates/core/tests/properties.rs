use aqua::corpus::{CorpusBundle, EmbeddingTable, MatchOutcome, QuestionType, TermId};
use aqua::learner::{init_learner, predict};
use aqua::oracle::ReannotationOutcome;
use aqua::policy::{
    budget, categorize, filter_for_reannotation, filtration_stats, select_top_k, BudgetSchedule, CaseLabel,
    FiltrationThresholds,
};
use aqua::pools::{InstanceId, InstanceRecord, Pools};
use aqua::synth::{generate_synthetic, GenConfig};
use aqua::uncertainty::{
    delta_closed_form, delta_definition, logdet_cov, weighted_covariance, weighted_variance, PredictiveDistribution,
    UncertaintyReport, DEFAULT_EPSILON,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn softmax(logits: &[f64]) -> PredictiveDistribution {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    PredictiveDistribution::new(exp.iter().map(|e| e / z).collect()).unwrap()
}

/// (distribution, embeddings) with |C| in [3, 30] and m in [1, 8].
fn dist_and_table() -> impl Strategy<Value = (PredictiveDistribution, EmbeddingTable)> {
    (3usize..=30, 1usize..=8).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(-6.0f64..6.0, n),
            prop::collection::vec(prop::collection::vec(-4.0f64..4.0, m), n),
        )
            .prop_map(move |(logits, rows)| (softmax(&logits), EmbeddingTable::new(m, rows).unwrap()))
    })
}

fn orthogonal(seed: &[f64], m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |i, j| seed[(i * m + j) % seed.len()] + if i == j { 0.5 } else { 0.0 })
        .qr()
        .q()
}

proptest! {
    #[test]
    fn delta_forms_agree((dist, emb) in dist_and_table(), k in 0.1f64..10.0) {
        let closed = delta_closed_form(&dist, &emb, k).unwrap();
        let def = delta_definition(&dist, &emb, k).unwrap();
        prop_assert!((closed - def).abs() <= 1e-8 * (1.0 + closed.abs()));
    }

    #[test]
    fn covariance_trace_and_psd((dist, emb) in dist_and_table()) {
        let cov = weighted_covariance(&dist, &emb).unwrap();
        let var = weighted_variance(&dist, &emb).unwrap();
        prop_assert!((cov.trace() - var).abs() <= 1e-9 * var.max(1e-12));
        prop_assert!((&cov - cov.transpose()).abs().max() == 0.0);
        let min = cov.symmetric_eigenvalues().min();
        prop_assert!(min >= -1e-10);
        prop_assert!(var >= 0.0);
    }

    #[test]
    fn logdet_survives_isometry(
        (dist, emb) in dist_and_table(),
        rot in prop::collection::vec(-1.0f64..1.0, 64),
        shift in prop::collection::vec(-10.0f64..10.0, 8),
    ) {
        let m = emb.dim();
        let q = orthogonal(&rot, m);
        let t = DVector::from_column_slice(&shift[..m]);
        let moved = EmbeddingTable::new(
            m,
            emb.rows().map(|r| (&q * DVector::from_column_slice(r) + &t).iter().copied().collect()).collect(),
        ).unwrap();
        let a = logdet_cov(&weighted_covariance(&dist, &emb).unwrap(), DEFAULT_EPSILON).unwrap();
        let b = logdet_cov(&weighted_covariance(&dist, &moved).unwrap(), DEFAULT_EPSILON).unwrap();
        prop_assert!((a - b).abs() <= 1e-6 * (1.0 + a.abs()), "{a} vs {b}");
    }

    #[test]
    fn top_k_is_order_free_and_maximal(
        scores in prop::collection::vec(prop_oneof![Just(0.5f64), -5.0f64..5.0], 0..60),
        k in 0usize..70,
        rotate in 0usize..60,
    ) {
        let items: Vec<(InstanceId, f64)> =
            scores.iter().enumerate().map(|(i, &s)| (InstanceId(i as u64 * 3), s)).collect();
        let picked = select_top_k(&items, k);
        let mut shuffled = items.clone();
        if !shuffled.is_empty() {
            let r = rotate % shuffled.len();
            shuffled.rotate_left(r);
            shuffled.reverse();
        }
        prop_assert_eq!(&picked, &select_top_k(&shuffled, k));
        prop_assert_eq!(picked.len(), k.min(items.len()));
        let score_of = |id: InstanceId| items.iter().find(|(i, _)| *i == id).unwrap().1;
        let worst_kept = picked.iter().map(|&id| score_of(id)).fold(f64::INFINITY, f64::min);
        for (id, s) in &items {
            if !picked.contains(id) {
                prop_assert!(*s <= worst_kept);
            }
        }
    }

    #[test]
    fn vista_budget_bounds(du in 0usize..10_000) {
        let b = budget(&BudgetSchedule::vista(), du, false);
        prop_assert!(b <= 1500);
        prop_assert!(b <= du);
        if du <= 750 { prop_assert_eq!(b, 0); }
        if du > 2250 { prop_assert_eq!(b, 1500); }
    }

    #[test]
    fn filtration_is_monotone_in_thresholds(
        values in prop::collection::vec((-20.0f64..5.0, 0.0f64..15.0), 2..80),
        z_cov in -2.0f64..0.5,
        z_loss in 0.0f64..4.0,
        relax in 0.0f64..1.0,
    ) {
        let batch: Vec<(InstanceId, UncertaintyReport)> = values
            .iter()
            .enumerate()
            .map(|(i, &(logdet, loss))| (InstanceId(i as u64), UncertaintyReport {
                weighted_variance: 0.0, logdet_cov: logdet, entropy: 0.0, delta: 0.0, loss,
            }))
            .collect();
        let reports: Vec<UncertaintyReport> = batch.iter().map(|(_, r)| r.clone()).collect();
        let Some(stats) = filtration_stats(&reports) else { return Ok(()); };
        let strict = FiltrationThresholds { z_cov, z_loss };
        let loose = FiltrationThresholds { z_cov: z_cov + relax, z_loss: z_loss - relax };
        let a = filter_for_reannotation(&batch, &stats, &strict);
        let b = filter_for_reannotation(&batch, &stats, &loose);
        prop_assert!(a.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(a.iter().all(|id| b.contains(id)));
        for (id, r) in &batch {
            let flagged = categorize(r, &stats, &strict) == CaseLabel::Incompatible;
            prop_assert_eq!(flagged, a.contains(id));
        }
    }

    #[test]
    fn predictions_are_distributions(
        weights in prop::collection::vec(-3.0f64..3.0, 24),
        x in prop::collection::vec(-3.0f64..3.0, 4),
    ) {
        let mut p = init_learner(4, 6).unwrap();
        p.weights_mut().copy_from_slice(&weights);
        let d = predict(&p, &x).unwrap();
        prop_assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(d.probs().iter().all(|&q| (0.0..=1.0).contains(&q)));
    }
}

fn bundle() -> CorpusBundle {
    generate_synthetic(&GenConfig {
        num_instances: 4,
        num_terms: 40,
        ..GenConfig::default()
    })
    .unwrap()
    .bundle
}

fn qtype() -> impl Strategy<Value = QuestionType> {
    prop::sample::select(QuestionType::ALL.to_vec())
}

proptest! {
    #[test]
    fn canonicalize_is_idempotent(
        picks in prop::collection::vec(0usize..40, 1..3),
        suffix in prop::sample::select(vec!["", "s", "ish", "ular", "le"]),
        upper in any::<bool>(),
        pad in any::<bool>(),
        q in qtype(),
    ) {
        let b = bundle();
        let words: Vec<String> = picks.iter().map(|&i| b.corpus.surface(TermId(i % b.corpus.len())).to_string()).collect();
        let mut answer = words.join(" ") + suffix;
        if upper { answer = answer.to_uppercase(); }
        if pad { answer = format!("  {answer} "); }
        match b.canonicalize(&answer, q) {
            MatchOutcome::Hit(t) | MatchOutcome::Resolved(t) => {
                prop_assert!(b.refined.is_canonical(t));
                prop_assert!(b.corpus.term(t).answers(q));
                prop_assert_eq!(b.canonicalize(b.corpus.surface(t), q), MatchOutcome::Hit(t));
            }
            MatchOutcome::Unresolved => {}
        }
    }

    #[test]
    fn pools_conserve_instances(ops in prop::collection::vec((0u8..3, 0usize..20, 1usize..6), 1..40)) {
        let n = 30u64;
        let records = (0..n).map(|i| InstanceRecord::unlabeled(InstanceId(i), vec![0.0], QuestionType::Other));
        let mut pools = Pools::ingest(records).unwrap();
        for (op, start, count) in ops {
            match op {
                0 => {
                    let ids: Vec<InstanceId> = pools.unlabeled().iter().skip(start).take(count).copied().collect();
                    let labels: Vec<(TermId, String)> = ids.iter().map(|_| (TermId(0), "yes".to_string())).collect();
                    pools.commit_selection(&ids, &labels).unwrap();
                }
                1 => {
                    let ids: Vec<InstanceId> = pools.labeled().iter().skip(start).take(count).copied().collect();
                    pools.flag(&ids).unwrap();
                }
                _ => {
                    let ids: Vec<InstanceId> = pools.queue().iter().skip(start % 3).take(count).copied().collect();
                    for id in ids {
                        pools.resolve(id, TermId(1), "no", ReannotationOutcome::ManualReplaced).unwrap();
                    }
                }
            }
            pools.audit().unwrap();
            let s = pools.sizes();
            prop_assert_eq!(s.unlabeled + s.labeled + s.queue, n as usize);
        }
        // Moves between the wrong pools are refused without side effects.
        let before = pools.sizes();
        if let Some(&id) = pools.unlabeled().iter().next() {
            prop_assert!(pools.flag(&[id]).is_err());
            prop_assert!(pools.resolve(id, TermId(0), "yes", ReannotationOutcome::Hit).is_err());
        }
        prop_assert_eq!(pools.sizes(), before);
    }
}

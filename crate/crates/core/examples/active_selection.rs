//! Trains a learner on a small labeled seed set, then ranks the unlabeled
//! pool with each selection strategy.

use aqua::learner::{init_learner, train_bootstrap_heads, train_epoch, Example, TrainConfig};
use aqua::policy::{score, select_top_k, ScoringContext, StrategyKind};
use aqua::synth::{generate_synthetic, GenConfig};
use aqua::uncertainty::DEFAULT_EPSILON;

fn main() -> aqua::Result<()> {
    let data = generate_synthetic(&GenConfig {
        num_instances: 600,
        seed: Some(1),
        ..GenConfig::default()
    })?;
    let (seed_set, pool) = data.records.split_at(60);
    let examples: Vec<Example<'_>> = seed_set
        .iter()
        .map(|r| Example {
            features: &r.features,
            label: r.truth.expect("synthetic records carry truth").clean_label,
        })
        .collect();
    let cfg = TrainConfig::default();
    let mut params = init_learner(seed_set[0].features.len(), data.bundle.corpus.len())?;
    let mut heads = vec![params.clone(); cfg.ensemble_heads];
    for epoch in 0..10 {
        params = train_epoch(&params, &examples, &cfg, epoch)?.0;
        heads = train_bootstrap_heads(&heads, &examples, &cfg, epoch)?;
    }
    let candidates: Vec<_> = pool.iter().map(|r| (r.id, r.features.as_slice())).collect();
    for strategy in [
        StrategyKind::Random,
        StrategyKind::Entropy,
        StrategyKind::InfogainBald,
        StrategyKind::WeightedVariance,
    ] {
        let ctx = ScoringContext {
            params: &params,
            heads: &heads,
            embeddings: &data.bundle.embeddings,
            epsilon: DEFAULT_EPSILON,
            seed: 3,
            round: 1,
        };
        let scores = score(strategy, &ctx, &candidates)?;
        let top = select_top_k(&scores, 8);
        let ids: Vec<String> = top.iter().map(|id| id.to_string()).collect();
        println!("{:<18} {}", strategy.as_str(), ids.join(" "));
    }
    Ok(())
}

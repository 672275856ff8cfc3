//! Compares the four selection strategies on the standard preset: AUC over
//! the baseline, epochs to each score threshold, and the reduction against
//! random selection.

use aqua::cli::reduction;
use aqua::config::preset;
use aqua::experiment::run_simulated;
use aqua::policy::StrategyKind;

fn main() -> aqua::Result<()> {
    let doc = preset("standard").expect("built-in preset");
    let data = doc.load_data()?;
    let mut runs = Vec::new();
    for strategy in [
        StrategyKind::Random,
        StrategyKind::Entropy,
        StrategyKind::InfogainBald,
        StrategyKind::WeightedVariance,
    ] {
        let mut cfg = doc.loop_config();
        cfg.strategy = strategy;
        runs.push(run_simulated(&cfg, data.records.clone(), &data.bundle)?);
    }
    let random = &runs[0];
    for r in &runs {
        let costs: Vec<String> = r
            .cost_to_threshold
            .iter()
            .zip(&random.cost_to_threshold)
            .map(|(c, base)| {
                let cost = c.epoch.map_or("N/A".into(), |e| e.to_string());
                let red = reduction(c.epoch, base.epoch).map_or("N/A".into(), |x| format!("{:+.0}%", 100.0 * x));
                format!("{}:{cost}({red})", c.threshold)
            })
            .collect();
        println!("{:<18} AUC {:>7.1}  {}", r.strategy.as_str(), r.auc, costs.join(" "));
    }
    Ok(())
}

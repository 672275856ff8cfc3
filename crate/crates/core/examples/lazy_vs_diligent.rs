//! The same selection run under the three simulated reannotation oracles.

use aqua::config::preset;
use aqua::experiment::run_simulated;
use aqua::oracle::OracleKind;

fn main() -> aqua::Result<()> {
    for seed in 0..3 {
        let doc = preset("standard").expect("built-in preset").with_seed(Some(seed));
        let data = doc.load_data()?;
        let mut line = format!("seed {seed}:");
        for kind in [OracleKind::Lazy, OracleKind::SimulatedDiligent, OracleKind::Hierarchical] {
            let mut cfg = doc.loop_config();
            cfg.oracle.kind = kind;
            let r = run_simulated(&cfg, data.records.clone(), &data.bundle)?;
            let m = r.final_metrics.expect("non-empty run");
            line += &format!("  {} {:.2} (best {:.2})", kind.as_str(), m.em1, m.best_em1);
        }
        println!("{line}");
    }
    Ok(())
}

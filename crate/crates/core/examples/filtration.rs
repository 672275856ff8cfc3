//! Runs the standard preset and reports, for each reannotation epoch, how many
//! labeled instances the Z-score rule flagged and how many of those carried an
//! improper annotation.

use aqua::config::preset;
use aqua::experiment::run_simulated;

fn main() -> aqua::Result<()> {
    let doc = preset("standard").expect("built-in preset");
    let data = doc.load_data()?;
    let result = run_simulated(&doc.loop_config(), data.records, &data.bundle)?;
    println!("{:>5} {:>8} {:>8} {:>9} {:>8}", "epoch", "labeled", "flagged", "improper", "precision");
    for log in result.logs.iter().filter(|l| l.reannotated) {
        let noisy = log.flagged_noisy_count.unwrap_or(0);
        let precision = if log.flagged_count == 0 {
            "-".to_string()
        } else {
            format!("{:.2}", noisy as f64 / log.flagged_count as f64)
        };
        println!(
            "{:>5} {:>8} {:>8} {:>9} {:>8}",
            log.epoch, log.pool_sizes.labeled, log.flagged_count, noisy, precision
        );
    }
    Ok(())
}

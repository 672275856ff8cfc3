//! Generates a synthetic corpus and dataset, writes the three files and loads
//! them back.
//!
//! Usage: `cargo run --example generate_dataset [DIR]`

use aqua::corpus::CorpusBundle;
use aqua::pools::{read_dataset, NoiseKind};
use aqua::synth::{generate_synthetic, GenConfig, CORPUS_FILE, DATASET_FILE, RULES_FILE};

fn main() -> aqua::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("aqua-dataset"));
    let data = generate_synthetic(&GenConfig {
        num_instances: 500,
        seed: Some(11),
        ..GenConfig::default()
    })?;
    data.write(&dir)?;
    let bundle = CorpusBundle::load(dir.join(CORPUS_FILE), dir.join(RULES_FILE))?;
    let records = read_dataset(dir.join(DATASET_FILE))?;
    // Annotations are drawn ahead of time and revealed on selection.
    let improper = records
        .iter()
        .filter(|r| r.truth.is_some_and(|t| t.noise_kind != NoiseKind::CanonicalCorrect))
        .count();
    println!(
        "{}: {} terms ({} canonical), {} instances, {} with noisy answers waiting",
        dir.display(),
        bundle.corpus.len(),
        bundle.refined.canonical_ids().len(),
        records.len(),
        improper
    );
    assert_eq!(records, data.records);
    Ok(())
}

//! Checks the Δ metric's two forms against each other on random inputs and
//! prints the covariance quantities that drive selection.

use aqua::corpus::EmbeddingTable;
use aqua::uncertainty::{
    delta_closed_form, delta_definition, entropy, logdet_cov, weighted_covariance, weighted_variance,
    PredictiveDistribution, DEFAULT_EPSILON,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> aqua::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    println!("{:>4} {:>3} {:>6} {:>14} {:>14} {:>10} {:>10} {:>8}", "|C|", "m", "k", "definition", "closed form", "var", "logdet", "entropy");
    for _ in 0..8 {
        let n = rng.random_range(3..20);
        let m = rng.random_range(1..9);
        let k = rng.random_range(0.1..10.0);
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(3)).collect();
        let z: f64 = raw.iter().sum();
        let dist = PredictiveDistribution::new(raw.iter().map(|r| r / z).collect())?;
        let rows = (0..n).map(|_| (0..m).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let emb = EmbeddingTable::new(m, rows)?;
        let var = weighted_variance(&dist, &emb)?;
        let logdet = logdet_cov(&weighted_covariance(&dist, &emb)?, DEFAULT_EPSILON)?;
        println!(
            "{n:>4} {m:>3} {k:>6.2} {:>14.9} {:>14.9} {var:>10.4} {logdet:>10.3} {:>8.4}",
            delta_definition(&dist, &emb, k)?,
            delta_closed_form(&dist, &emb, k)?,
            entropy(&dist)
        );
    }
    Ok(())
}

//! Semi-supervised and transductive training with most labels hidden,
//! compared against training on the labeled rows alone.
//!
//! ```text
//! cargo run --release --example semi_supervised
//! ```

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use shl::evalkit::accuracy;
use shl::{trainer, LabeledDataset, TrainConfig};

fn two_moons(n: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let mut x = Array2::zeros((n, 2));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 2;
        let t = rng.random_range(0.0..std::f64::consts::PI);
        let (px, py) = if c == 0 { (t.cos(), t.sin()) } else { (1.0 - t.cos(), 0.5 - t.sin()) };
        x[[i, 0]] = px + noise.sample(&mut rng);
        x[[i, 1]] = py + noise.sample(&mut rng);
        y.push(c);
    }
    (x, y)
}

fn main() -> shl::Result<()> {
    let (x, truth) = two_moons(200, 3);
    let labels: Vec<Option<usize>> = truth.iter().enumerate().map(|(i, &c)| (i < 10).then_some(c)).collect();
    let data = LabeledDataset::new(x.clone(), labels)?;
    let mut config = TrainConfig::new(8, 2);
    config.seed = 1;

    let labeled_only = data.select(&data.labeled_indices());
    let base = trainer::train(&config, &labeled_only)?;
    let semi = trainer::train(&config, &data)?;
    println!("labeled rows        {}", labeled_only.len());
    println!("labeled only        {:.4}", accuracy(&base.classify_batch(x.view())?, &truth)?);
    println!("semi-supervised     {:.4}", accuracy(&semi.classify_batch(x.view())?, &truth)?);

    let (test, test_truth) = two_moons(200, 4);
    let trans = trainer::transductive_train(&config, &data, test.view())?;
    println!("transductive (test) {:.4}", accuracy(&trans.classify_batch(test.view())?, &test_truth)?);
    println!("inductive (test)    {:.4}", accuracy(&semi.classify_batch(test.view())?, &test_truth)?);
    Ok(())
}

//! Supervised training on gaussian blobs, a model file round trip and
//! classification of new points by nearest codeword.
//!
//! ```text
//! cargo run --release --example train_and_save
//! ```

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use shl::dataio::{load_model, save_model};
use shl::evalkit::accuracy;
use shl::{trainer, LabeledDataset, TrainConfig};

fn blobs(per_class: usize, seed: u64) -> LabeledDataset {
    let centers = [[3.0, 0.0], [0.0, 3.0], [-3.0, -3.0]];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.8).unwrap();
    let n = centers.len() * per_class;
    let x = Array2::from_shape_fn((n, 2), |(i, j)| centers[i % 3][j] + noise.sample(&mut rng));
    LabeledDataset::new(x, (0..n).map(|i| Some(i % 3)).collect()).unwrap()
}

fn main() -> shl::Result<()> {
    let train = blobs(40, 1);
    let test = blobs(100, 2);
    let mut config = TrainConfig::new(8, 3);
    config.seed = 4;
    let out = trainer::train_detailed(&config, &train)?;
    println!("iterations {}  loss trace {:.2?}", out.iterations, out.model.loss_trace);
    for c in 0..3 {
        println!("class {c} codeword {:?}", out.model.codebook.quantized_codeword(c, 0));
    }

    let path = std::env::temp_dir().join("shl-blobs-model.json");
    save_model(&out.model, &path)?;
    let model = load_model(&path)?;
    assert_eq!(model, out.model);
    println!("model written to {}", path.display());

    let truth: Vec<usize> = test.labels.iter().map(|l| l.unwrap()).collect();
    let predicted = model.classify_batch(test.features.view())?;
    println!("test accuracy {:.4}", accuracy(&predicted, &truth)?);
    Ok(())
}

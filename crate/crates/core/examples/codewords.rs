//! Codeword learning on a fixed matrix of bit decisions: assignment, the
//! exact single-codeword update, and proximal subgradient descent with
//! several codewords per class.
//!
//! ```text
//! cargo run --example codewords
//! ```

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use shl::codebook::{self, DEFAULT_PSD_ITERS, DEFAULT_PSD_STEP};
use shl::{Codebook, DecisionMatrix};

fn main() -> shl::Result<()> {
    let (classes, bits, per_class) = (2, 6, 20);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noise = Normal::new(0.0, 0.6).unwrap();
    let prototypes = [[1.0, 1.0, -1.0, 1.0, -1.0, -1.0], [-1.0, 1.0, 1.0, -1.0, 1.0, -1.0]];
    let n = classes * per_class;
    let values = Array2::from_shape_fn((n, bits), |(i, b)| prototypes[i % classes][b] + noise.sample(&mut rng));
    let f = DecisionMatrix::new(values)?;
    let labels: Vec<Option<usize>> = (0..n).map(|i| Some(i % classes)).collect();

    let start = Codebook::random(classes, 1, bits, 1)?;
    let assignment = codebook::assign(&f, &start, &labels)?;
    let (single, empty) = codebook::optimize_codewords_single(&f, &assignment, classes, bits)?;
    println!("one codeword per class (empty classes {empty:?})");
    for c in 0..classes {
        println!("  class {c}: {:?}", single.quantized_codeword(c, 0));
    }
    println!(
        "  surrogate {:.3} -> {:.3}",
        codebook::surrogate_loss(&f, &start, &assignment)?,
        codebook::surrogate_loss(&f, &single, &assignment)?
    );

    let slots = 3;
    let mut book = Codebook::random(classes, slots, bits, 2)?;
    for lambda2 in [0.0, 2.0, 20.0] {
        let assignment = codebook::assign(&f, &book, &labels)?;
        let out = codebook::optimize_codewords(&f, &assignment, &book, lambda2, DEFAULT_PSD_STEP, DEFAULT_PSD_ITERS)?;
        println!(
            "lambda2 {lambda2:>4}: objective {:.3} -> {:.3}, {} steps",
            out.objective_before, out.objective_after, out.accepted_steps
        );
        for (c, s, t, d) in out.codebook.within_class_distances() {
            println!("  class {c} slots {s},{t}: distance {d:.4}");
        }
        book = out.codebook;
    }
    Ok(())
}

//! Random-projection LSH codes on clustered data, with top-k precision and
//! the Hamming-radius precision/recall curve.
//!
//! ```text
//! cargo run --example lsh_pr_curve
//! ```

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use shl::evalkit::{pr_curve, topk_precision};
use shl::{CodeDatabase, LshModel};

fn main() -> shl::Result<()> {
    let (classes, n, dim) = (4, 400, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let x = Array2::from_shape_fn((n, dim), |(i, j)| if j == i % classes { 4.0 } else { 0.0 } + noise.sample(&mut rng));
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();

    let lsh = LshModel::fit(x.view(), 16, 7)?;
    let codes = lsh.encode_batch(x.view())?;
    let db = CodeDatabase::new(codes, labels)?.with_row_ids();

    for k in [1, 10, 50] {
        println!("top-{k:<3} precision {:.4}", topk_precision(&db, &db, k, true)?);
    }
    println!("radius  precision  recall");
    for point in pr_curve(&db, &db, true)? {
        let precision = point.precision.map_or("-".to_string(), |p| format!("{p:.4}"));
        println!("{:>6}  {precision:>9}  {:.4}", point.radius, point.recall);
    }
    Ok(())
}

//! Trains 12-bit codes on the bundled 16x16 digit images and compares top-10
//! Hamming retrieval precision with the LSH baseline.
//!
//! ```text
//! cargo run --release --example digits_retrieval
//! ```

use std::path::Path;
use std::time::Instant;

use shl::dataio::{load_idx, LabeledDataset};
use shl::evalkit::topk_precision;
use shl::trainer::train_detailed;
use shl::{CodeDatabase, LshModel, TrainConfig};

fn labels(d: &LabeledDataset) -> Vec<usize> {
    d.labels.iter().map(|l| l.expect("labeled")).collect()
}

fn main() -> shl::Result<()> {
    let data_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let all = load_idx(
        data_dir.join("digits16-images.idx3-ubyte"),
        Some(&data_dir.join("digits16-labels.idx1-ubyte")),
    )?;
    let train = all.select(&(0..1000).collect::<Vec<_>>());
    let test = all.select(&(1000..2000).collect::<Vec<_>>());

    let bits = 12;
    let config = TrainConfig::new(bits, 10);
    let start = Instant::now();
    let out = train_detailed(&config, &train)?;
    let elapsed = start.elapsed();
    let model = &out.model;

    let db = CodeDatabase::new(out.decisions.codes(), labels(&train))?;
    let queries = CodeDatabase::new(model.encode_batch(test.features.view())?, labels(&test))?;
    let shl_p10 = topk_precision(&queries, &db, 10, false)?;

    let mut lsh_sum = 0.0;
    for seed in 0..5 {
        let lsh = LshModel::fit(train.features.view(), bits, seed)?;
        let db = CodeDatabase::new(lsh.encode_batch(train.features.view())?, labels(&train))?;
        let q = CodeDatabase::new(lsh.encode_batch(test.features.view())?, labels(&test))?;
        lsh_sum += topk_precision(&q, &db, 10, false)?;
    }

    println!("training time      {:.1} s", elapsed.as_secs_f64());
    println!("outer iterations   {}", out.iterations);
    println!("accepted bits      {:?}", out.accepted_bits);
    println!("loss trace         {:?}", model.loss_trace);
    println!("support vectors    {}", model.support_features.nrows());
    println!("top-10 precision   {shl_p10:.4}");
    println!("LSH (5-seed mean)  {:.4}", lsh_sum / 5.0);
    let theta0 = &model.bits[0].theta;
    println!("bit 0 kernel weights {:?}", theta0);
    Ok(())
}

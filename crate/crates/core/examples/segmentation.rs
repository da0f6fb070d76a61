//! Scribble-driven foreground/background segmentation of a synthetic image,
//! run through the `segment` subcommand.
//!
//! ```text
//! cargo run --release --example segmentation
//! ```

use shl::dataio::{load_mask_pgm, save_pgm, save_ppm, GrayImage, RgbImage, FOREGROUND};

fn main() -> shl::Result<()> {
    let (w, h) = (48usize, 32usize);
    // an orange disc on a noisy teal background
    let mut pixels = Vec::with_capacity(w * h);
    let mut scribbles = vec![0u8; w * h];
    for i in 0..w * h {
        let (x, y) = ((i % w) as f64, (i / w) as f64);
        let inside = (x - 24.0).powi(2) + (y - 16.0).powi(2) < 100.0;
        let jitter = ((i * 7919) % 31) as u8;
        pixels.push(if inside { [230, 120 + jitter, 40] } else { [30 + jitter, 140, 150] });
    }
    for x in 20..28 {
        scribbles[16 * w + x] = 255;
    }
    for y in 4..28 {
        scribbles[y * w + 3] = 128;
        scribbles[y * w + 44] = 128;
    }

    let dir = std::env::temp_dir().join("shl-segmentation");
    std::fs::create_dir_all(&dir).expect("temporary directory");
    let (image, scribble, mask) = (dir.join("scene.ppm"), dir.join("scribbles.pgm"), dir.join("mask.pgm"));
    save_ppm(&RgbImage { width: w, height: h, pixels }, &image)?;
    save_pgm(&GrayImage { width: w, height: h, pixels: scribbles }, &scribble)?;

    let code = shl::cli::run([
        "shl",
        "segment",
        "--image",
        image.to_str().unwrap(),
        "--scribbles",
        scribble.to_str().unwrap(),
        "--out",
        mask.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);

    let (labels, _, _) = load_mask_pgm(&mask)?;
    for row in labels.chunks(w).step_by(2) {
        let line: String = row.iter().map(|&c| if c == FOREGROUND { '#' } else { '.' }).collect();
        println!("{line}");
    }
    println!("mask written to {}", mask.display());
    Ok(())
}

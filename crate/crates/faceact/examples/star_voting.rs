//! Train a star model on synthetic patterns and localize the pattern in
//! translated copies by nearest-neighbor offset voting.
//!
//! ```bash
//! cargo run --release --example star_voting
//! ```

use faceact::imaging::GrayImage;
use faceact::star_vote::{train_star, StarModel, StarParams};

fn pattern(cx: f64, cy: f64) -> GrayImage {
    GrayImage::from_fn(72, 72, |x, y| {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        let arm = (dx.abs() < 2.5 && dy.abs() < 11.0) || (dy.abs() < 2.5 && dx.abs() < 11.0);
        if dx * dx + dy * dy < 20.0 || arm {
            0.9
        } else {
            0.12
        }
    })
}

fn main() -> faceact::Result<()> {
    let params = StarParams { stride: 2, ..StarParams::default() };

    // the training targets are the pattern centers
    let train: Vec<(GrayImage, (usize, usize))> = (0..15)
        .map(|i| {
            let cx = 24 + (i * 5) % 24;
            let cy = 24 + (i * 7) % 24;
            (pattern(cx as f64, cy as f64), (cx, cy))
        })
        .collect();
    let model = train_star(&train, &params, 7)?;
    println!(
        "trained star model: {} exemplars from {} images (sigma1={}, sigma2={}, k_f={})",
        model.len(),
        train.len(),
        model.sigma1,
        model.sigma2,
        model.k_f
    );

    for (cx, cy) in [(30usize, 41usize), (40, 27), (26, 36)] {
        let test = pattern(cx as f64, cy as f64);
        let map = model.vote(&test, &params)?;
        let (px, py) = map.argmax();
        println!(
            "target ({cx:2}, {cy:2})  ->  vote peak ({px:2}, {py:2})  mass sum {:.6}",
            map.total()
        );
    }

    // models serialize to versioned JSON with packed descriptors
    let json = model.to_json();
    let restored = StarModel::from_json(&json)?;
    println!(
        "serialized to {} bytes of JSON, restored {} exemplars",
        json.to_string().len(),
        restored.len()
    );
    Ok(())
}

//! Full pipeline on synthetic data through the library API: generate a
//! train and a test split, train all models, classify the test set and
//! report per-class average precision.
//!
//! ```bash
//! cargo run --release --example train_and_evaluate [per_class]
//! ```

use faceact::cli_io::{average_precision, class_name, generate_scene, SynthSpec};
use faceact::interaction::BaselineSaliency;
use faceact::learning::{train_bundle, TrainingConfig, TrainingSample};
use faceact::pipeline::{classify, FaceDetection, PipelineBundle};
use faceact::regions::{BaselineAppearance, BaselineSegmenter};
use std::time::Instant;

fn main() -> faceact::Result<()> {
    let per_class: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let classes = 4usize;
    let train_spec = SynthSpec { classes, per_class, seed: 100, image_size: 160 };
    let test_spec = SynthSpec { classes, per_class, seed: 200, image_size: 160 };

    let train_scenes: Vec<_> = (0..classes)
        .flat_map(|c| (0..per_class).map(move |i| (c, i)))
        .map(|(c, i)| generate_scene(&train_spec, c, i))
        .collect();
    let test_scenes: Vec<_> = (0..classes)
        .flat_map(|c| (0..per_class).map(move |i| (c, i)))
        .map(|(c, i)| generate_scene(&test_spec, c, i))
        .collect();
    println!("{} training / {} test images", train_scenes.len(), test_scenes.len());

    let t = Instant::now();
    let samples: Vec<TrainingSample<'_>> = train_scenes
        .iter()
        .map(|s| TrainingSample {
            image: &s.image,
            face_box: s.face_box,
            face_score: s.face_score,
            landmarks: s.landmarks.clone(),
            class_id: s.class_id,
            object_polygon: Some(s.object_polygon.clone()),
        })
        .collect();
    let config = TrainingConfig::default();
    let bundle = train_bundle(
        &samples,
        (0..classes).map(class_name).collect(),
        &BaselineSegmenter::default(),
        &BaselineSaliency,
        &BaselineAppearance,
        &config,
    )?;
    println!(
        "trained in {:.1} s: star model {} exemplars, corpus {} faces, region features {} dims",
        t.elapsed().as_secs_f64(),
        bundle.star_model.len(),
        bundle.corpus.len(),
        bundle.region_model.feature_len()
    );

    let pipeline = PipelineBundle::with_defaults(bundle);
    let t = Instant::now();
    let mut totals: Vec<Vec<f64>> = Vec::new();
    for scene in &test_scenes {
        let over = FaceDetection { box_: scene.face_box, score: scene.face_score };
        let result = classify(&pipeline, &scene.image, &scene.person_box, Some(over), config.seed)?;
        totals.push(result.scores.iter().map(|s| s.total).collect());
    }
    println!(
        "classified {} images in {:.1} s",
        test_scenes.len(),
        t.elapsed().as_secs_f64()
    );

    let mut mean_ap = 0.0;
    for c in 0..classes {
        let scored: Vec<(f64, bool)> = test_scenes
            .iter()
            .zip(&totals)
            .map(|(s, t)| (t[c], s.class_id == c))
            .collect();
        let ap = average_precision(&scored)?;
        println!("AP[{}] = {ap:.4}", class_name(c));
        mean_ap += ap / classes as f64;
    }
    println!("mean AP = {mean_ap:.4}");
    Ok(())
}

//! Classify one synthetic image and render the explanation: the
//! best-scoring candidate region outlined in red, landmarks in blue, the
//! face box in green, plus the location-prior heat map.
//!
//! ```bash
//! cargo run --release --example explain_overlay
//! ```

use faceact::cli_io::{class_name, emit_heatmap, emit_overlay, generate_scene, SynthSpec};
use faceact::interaction::BaselineSaliency;
use faceact::landmarks::normalize_face_crop;
use faceact::learning::{train_bundle, TrainingConfig, TrainingSample};
use faceact::pipeline::{classify, explain, FaceDetection, PipelineBundle};
use faceact::regions::{BaselineAppearance, BaselineSegmenter};

fn main() -> faceact::Result<()> {
    let classes = 4usize;
    let spec = SynthSpec { classes, per_class: 8, seed: 300, image_size: 160 };
    let scenes: Vec<_> = (0..classes)
        .flat_map(|c| (0..8).map(move |i| (c, i)))
        .map(|(c, i)| generate_scene(&spec, c, i))
        .collect();
    let samples: Vec<TrainingSample<'_>> = scenes
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
    let pipeline = PipelineBundle::with_defaults(bundle);

    let test = generate_scene(&SynthSpec { seed: 301, ..spec }, 2, 0);
    let over = FaceDetection { box_: test.face_box, score: test.face_score };
    let result = classify(&pipeline, &test.image, &test.person_box, Some(over), config.seed)?;
    for s in &result.scores {
        println!(
            "S[{}] = {:+.4}  (face {:+.3}, mouth {:+.3}, region {:+.3})",
            s.class,
            s.total,
            s.eta_face,
            s.eta_mouth,
            s.eta_int + s.eta_obj
        );
    }
    let best = result
        .scores
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total.partial_cmp(&b.1.total).unwrap())
        .unwrap()
        .0;
    println!("predicted {} (truth {})", result.scores[best].class, class_name(test.class_id));

    let overlay = explain(&result, best);
    let out = std::env::temp_dir().join("faceact_explain.png");
    emit_overlay(&test.image, &overlay, &out)?;
    println!("overlay written to {}", out.display());

    let (crop, _) = normalize_face_crop(&test.image, &test.face_box)?;
    let map = pipeline.trained.star_model.vote(&crop, &config.star)?;
    let heat = std::env::temp_dir().join("faceact_location_prior.png");
    emit_heatmap(&map, &heat)?;
    println!("location prior written to {}", heat.display());
    Ok(())
}

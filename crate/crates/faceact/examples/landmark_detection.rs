//! Detect the seven facial landmarks on synthetic faces: nearest-neighbor
//! corpus faces provide a coarse density-mode hypothesis, per-test-image
//! star models refine it, and the fusion rule arbitrates per landmark.
//!
//! ```bash
//! cargo run --release --example landmark_detection
//! ```

use faceact::cli_io::{emit_overlay, generate_scene, SynthSpec};
use faceact::landmarks::{
    build_corpus, detect_landmarks, normalize_face_crop, AnnotatedFace, LANDMARK_NAMES,
};
use faceact::pipeline::OverlaySpec;
use faceact::star_vote::StarParams;

fn main() -> faceact::Result<()> {
    let spec = SynthSpec { classes: 2, per_class: 12, seed: 77, image_size: 160 };
    let scenes: Vec<_> = (0..2)
        .flat_map(|c| (0..12).map(move |i| (c, i)))
        .map(|(c, i)| generate_scene(&spec, c, i))
        .collect();

    // corpus from all but the last face; low-score faces and faces whose
    // box misses landmarks are filtered out
    let annotated: Vec<AnnotatedFace<'_>> = scenes[..scenes.len() - 1]
        .iter()
        .map(|s| AnnotatedFace {
            image: &s.image,
            box_: s.face_box,
            score: s.face_score,
            landmarks: s.landmarks.clone(),
        })
        .collect();
    let corpus = build_corpus(&annotated, 2.45, 0.8, &StarParams::default())?;
    println!("corpus: {} faces", corpus.len());

    // detect on the held-out face
    let held_out = scenes.last().unwrap();
    let (crop, to_source) = normalize_face_crop(&held_out.image, &held_out.face_box)?;
    let detected = detect_landmarks(&corpus, &crop, 8, 1)?;
    let gt = held_out.landmarks.transform(&to_source.inverse()).rounded();
    println!("landmark          detected      truth       error");
    for (i, name) in LANDMARK_NAMES.iter().enumerate() {
        let (dx, dy) = detected.points[i];
        let (gx, gy) = gt.points[i];
        let err = ((dx - gx).powi(2) + (dy - gy).powi(2)).sqrt();
        println!("{name:18} ({dx:4.0},{dy:4.0})  ({gx:4.0},{gy:4.0})  {err:5.2} px");
    }

    // overlay on the source image
    let overlay = OverlaySpec {
        landmarks: detected.points.iter().map(|(x, y)| to_source.apply(*x, *y)).collect(),
        face_box: Some(held_out.face_box),
        ..Default::default()
    };
    let out = std::env::temp_dir().join("faceact_landmarks.png");
    emit_overlay(&held_out.image, &overlay, &out)?;
    println!("overlay written to {}", out.display());
    Ok(())
}

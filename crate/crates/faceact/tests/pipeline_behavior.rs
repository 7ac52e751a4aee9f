//! Behavioral tests of the classification pipeline on a small synthetic
//! bundle shared across tests.

use faceact::cli_io::{class_name, generate_scene, SynthScene, SynthSpec};
use faceact::imaging::Rect;
use faceact::interaction::BaselineSaliency;
use faceact::learning::{train_bundle, TrainedBundle, TrainingConfig, TrainingSample};
use faceact::pipeline::{
    classify, classify_batch, explain, BatchItem, FaceDetection, FaceDetector, PipelineBundle,
};
use faceact::regions::{BaselineAppearance, BaselineSegmenter};
use std::sync::OnceLock;

struct Fixture {
    scenes: Vec<SynthScene>,
    test_scene: SynthScene,
    pipeline: PipelineBundle,
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let classes = 4usize;
        let per_class = 4usize;
        let spec = SynthSpec { classes, per_class, seed: 500, image_size: 160 };
        let scenes: Vec<SynthScene> = (0..classes)
            .flat_map(|c| (0..per_class).map(move |i| (c, i)))
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
        let names: Vec<String> = (0..classes).map(class_name).collect();
        let config = TrainingConfig::default();
        let trained = train_bundle(
            &samples,
            names,
            &BaselineSegmenter::default(),
            &BaselineSaliency,
            &BaselineAppearance,
            &config,
        )
        .unwrap();
        let test_spec = SynthSpec { classes, per_class: 1, seed: 501, image_size: 160 };
        Fixture {
            scenes,
            test_scene: generate_scene(&test_spec, 2, 0),
            pipeline: PipelineBundle::with_defaults(trained),
        }
    })
}

fn retrain_with_gamma(gamma: f64) -> TrainedBundle {
    let f = fixture();
    let samples: Vec<TrainingSample<'_>> = f
        .scenes
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
    let names: Vec<String> = (0..4).map(class_name).collect();
    let config = TrainingConfig { gamma, ..TrainingConfig::default() };
    train_bundle(
        &samples,
        names,
        &BaselineSegmenter::default(),
        &BaselineSaliency,
        &BaselineAppearance,
        &config,
    )
    .unwrap()
}

#[test]
fn below_threshold_face_is_non_class() {
    let f = fixture();
    let s = &f.test_scene;
    let over = FaceDetection { box_: s.face_box, score: -0.1 };
    let result = classify(&f.pipeline, &s.image, &s.person_box, Some(over), 0).unwrap();
    assert!(result.non_class);
    for cs in &result.scores {
        assert_eq!(cs.total, f64::NEG_INFINITY);
    }
    // and the explanation is empty
    let overlay = explain(&result, 0);
    assert!(overlay.is_empty());
}

#[test]
fn missing_face_source_is_an_error() {
    let f = fixture();
    let s = &f.test_scene;
    assert!(classify(&f.pipeline, &s.image, &s.person_box, None, 0).is_err());
}

#[test]
fn override_and_detector_agree_when_they_see_the_same_face() {
    struct FixedDetector {
        box_: Rect,
        score: f64,
    }
    impl FaceDetector for FixedDetector {
        fn name(&self) -> &str {
            "fixed"
        }
        fn detect(
            &self,
            _img: &faceact::imaging::GrayImage,
            _person: &Rect,
        ) -> faceact::Result<Vec<FaceDetection>> {
            Ok(vec![FaceDetection { box_: self.box_, score: self.score }])
        }
    }
    let f = fixture();
    let s = &f.test_scene;
    let with_override = classify(
        &f.pipeline,
        &s.image,
        &s.person_box,
        Some(FaceDetection { box_: s.face_box, score: s.face_score }),
        3,
    )
    .unwrap();

    let mut detector_pipeline = PipelineBundle::with_defaults(f.pipeline.trained.clone());
    detector_pipeline.face_detector =
        Some(Box::new(FixedDetector { box_: s.face_box, score: s.face_score }));
    let a = classify(&detector_pipeline, &s.image, &s.person_box, None, 3).unwrap();
    let b = classify(
        &detector_pipeline,
        &s.image,
        &s.person_box,
        Some(FaceDetection { box_: s.face_box, score: s.face_score }),
        3,
    )
    .unwrap();
    for (x, y) in a.scores.iter().zip(&b.scores) {
        assert_eq!(x.total, y.total);
        assert_eq!(x.best_region, y.best_region);
    }
    // the fixture-pipeline override result is deterministic too
    let again = classify(
        &f.pipeline,
        &s.image,
        &s.person_box,
        Some(FaceDetection { box_: s.face_box, score: s.face_score }),
        3,
    )
    .unwrap();
    for (x, y) in with_override.scores.iter().zip(&again.scores) {
        assert_eq!(x.total, y.total);
    }
}

#[test]
fn gamma_rescales_only_the_region_term() {
    let low = PipelineBundle::with_defaults(retrain_with_gamma(0.1));
    let high = PipelineBundle::with_defaults(retrain_with_gamma(0.3));
    let f = fixture();
    let s = &f.test_scene;
    let over = FaceDetection { box_: s.face_box, score: s.face_score };
    let a = classify(&low, &s.image, &s.person_box, Some(over), 1).unwrap();
    let b = classify(&high, &s.image, &s.person_box, Some(over), 1).unwrap();
    for (x, y) in a.scores.iter().zip(&b.scores) {
        assert!((x.eta_face - y.eta_face).abs() < 1e-9);
        assert!((x.eta_mouth - y.eta_mouth).abs() < 1e-9);
        let region_a = x.eta_int + x.eta_obj;
        let region_b = y.eta_int + y.eta_obj;
        assert!((region_a - region_b).abs() < 1e-9);
        assert!((x.total - (x.eta_face + x.eta_mouth + 0.1 * region_a)).abs() < 1e-9);
        assert!((y.total - (y.eta_face + y.eta_mouth + 0.3 * region_b)).abs() < 1e-9);
    }
}

#[test]
fn batches_are_deterministic_and_error_isolating() {
    let f = fixture();
    let s = &f.test_scene;
    let items = vec![
        BatchItem {
            image: &s.image,
            person_box: s.person_box,
            face_override: Some(FaceDetection { box_: s.face_box, score: s.face_score }),
        },
        // no face source: this item fails without sinking the batch
        BatchItem { image: &s.image, person_box: s.person_box, face_override: None },
    ];
    let results1 = classify_batch(&f.pipeline, &items, 9);
    let results2 = classify_batch(&f.pipeline, &items, 9);
    assert_eq!(results1.len(), 2);
    assert!(results1[0].is_ok() && results1[1].is_err());
    let (a, b) = (results1[0].as_ref().unwrap(), results2[0].as_ref().unwrap());
    for (x, y) in a.scores.iter().zip(&b.scores) {
        assert_eq!(x.total, y.total);
    }
    assert!(classify_batch(&f.pipeline, &[], 9).is_empty());
}

#[test]
fn explanation_coordinates_round_trip_through_the_crop_transform() {
    let f = fixture();
    let s = &f.test_scene;
    let over = FaceDetection { box_: s.face_box, score: s.face_score };
    let result = classify(&f.pipeline, &s.image, &s.person_box, Some(over), 2).unwrap();
    let overlay = explain(&result, s.class_id);
    let map = overlay.crop_transform.unwrap();
    let inv = map.inverse();
    let mask = overlay.region_mask_crop.as_ref().unwrap();
    assert!(!overlay.region_outline.is_empty());
    for (sx, sy) in &overlay.region_outline {
        let (cx, cy) = inv.apply(*sx, *sy);
        // back in crop coordinates the point sits on a mask boundary pixel
        let (rx, ry) = (cx.round(), cy.round());
        assert!((cx - rx).abs() < 0.5 && (cy - ry).abs() < 0.5);
        assert!(mask.contains(rx as usize, ry as usize));
    }
}

#[test]
fn best_region_matches_the_planted_object() {
    let f = fixture();
    let s = &f.test_scene;
    let over = FaceDetection { box_: s.face_box, score: s.face_score };
    let result = classify(&f.pipeline, &s.image, &s.person_box, Some(over), 2).unwrap();
    // the true class should be the top prediction on this easy scene
    let best = result
        .scores
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total.partial_cmp(&b.1.total).unwrap())
        .unwrap()
        .0;
    assert_eq!(best, s.class_id);
    let overlay = explain(&result, s.class_id);
    let to_crop = overlay.crop_transform.unwrap().inverse();
    let verts: Vec<(f64, f64)> =
        s.object_polygon.iter().map(|(x, y)| to_crop.apply(*x, *y)).collect();
    let gt = faceact::imaging::rasterize_polygon(96, 96, &verts).unwrap();
    let iou =
        faceact::regions::overlap_score(overlay.region_mask_crop.as_ref().unwrap(), &gt).unwrap();
    assert!(iou >= 0.5, "best region IoU {iou}");
}

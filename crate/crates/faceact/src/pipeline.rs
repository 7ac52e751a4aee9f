//! End-to-end classification of one face: detect or accept a face, crop and
//! normalize it, detect landmarks, score face and mouth appearance, build
//! the candidate region pool, score every region, and combine everything
//! into one score per class with the best region kept for explanation.

use crate::error::{Error, Result};
use crate::imaging::{dense_descriptor_grid, AffineMap, GrayImage, Rect, RegionMask};
use crate::interaction::{saliency_prior, Saliency};
use crate::landmarks::{
    coarse_landmarks, fuse_landmarks, knn_faces, mouth_crop, normalize_face_crop,
    refine_landmarks, FaceRecord, LandmarkSet, FUSE_THRESHOLD, KDE_SIGMA, NUM_LANDMARKS,
};
use crate::learning::{region_feature_vector, TrainedBundle};
use crate::regions::{
    build_region_pool, AppearanceExtractor, BaselineAppearance, BaselineSegmenter, Segmenter,
};
use crate::interaction::BaselineSaliency;

/// A face candidate from a detector or an annotation override.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceDetection {
    pub box_: Rect,
    pub score: f64,
}

/// Finds faces inside a person bounding box.
pub trait FaceDetector {
    fn name(&self) -> &str;
    fn detect(&self, img: &GrayImage, person_box: &Rect) -> Result<Vec<FaceDetection>>;
}

/// Trained models plus the plugins used at test time. The face detector is
/// optional; without one, every call must provide a face override.
pub struct PipelineBundle {
    pub trained: TrainedBundle,
    pub face_detector: Option<Box<dyn FaceDetector>>,
    pub segmenter: Box<dyn Segmenter>,
    pub saliency: Box<dyn Saliency>,
    pub appearance: Box<dyn AppearanceExtractor>,
}

impl PipelineBundle {
    /// Wraps a trained bundle with the built-in baseline plugins and no
    /// face detector (annotation-driven mode).
    pub fn with_defaults(trained: TrainedBundle) -> Self {
        PipelineBundle {
            trained,
            face_detector: None,
            segmenter: Box::new(BaselineSegmenter::default()),
            saliency: Box::new(BaselineSaliency),
            appearance: Box::new(BaselineAppearance),
        }
    }

    pub fn classes(&self) -> &[String] {
        &self.trained.classes
    }
}

/// Per-class outcome of one classification.
#[derive(Debug, Clone)]
pub struct ClassScore {
    pub class: String,
    /// The combined score `eta_F + eta_M + gamma * (eta_Int + eta_Obj)`.
    pub total: f64,
    pub eta_face: f64,
    pub eta_mouth: f64,
    /// Index of the best region in the pool, absent when the pool is empty.
    pub best_region: Option<usize>,
    pub eta_int: f64,
    pub eta_obj: f64,
}

/// Result of classifying one image.
#[derive(Debug, Clone)]
pub struct ClassificationResult {
    pub scores: Vec<ClassScore>,
    pub face: Option<FaceRecord>,
    /// Set when the best face score fell below the threshold; all totals
    /// are negative infinity.
    pub non_class: bool,
    /// Set when the candidate pool was empty and the region term was 0.
    pub empty_pool: bool,
    pub pool_size: usize,
    pub landmarks: Option<LandmarkSet>,
    /// Best region mask per class, kept for explanation overlays.
    pub best_region_masks: Vec<Option<RegionMask>>,
    /// Peak of the predicted-location map, in crop coordinates.
    pub location_peak: Option<(usize, usize)>,
}

/// Combines the components of the per-class score.
#[inline]
pub fn combine_score(eta_face: f64, eta_mouth: f64, region_term: f64, gamma: f64) -> f64 {
    eta_face + eta_mouth + gamma * region_term
}

/// Classifies one image given a person box. The face comes from the
/// override when provided, otherwise from the detector plugin; one of the
/// two must be available.
pub fn classify(
    bundle: &PipelineBundle,
    image: &GrayImage,
    person_box: &Rect,
    face_override: Option<FaceDetection>,
    seed: u64,
) -> Result<ClassificationResult> {
    let trained = &bundle.trained;
    let config = &trained.config;
    let classes = &trained.classes;

    let face = match face_override {
        Some(f) => f,
        None => {
            let detector = bundle.face_detector.as_deref().ok_or_else(|| {
                Error::invalid("no face detector plugin and no face override provided")
            })?;
            let mut detections = detector.detect(image, person_box).map_err(|e| Error::Plugin {
                plugin: detector.name().to_string(),
                message: e.to_string(),
            })?;
            if detections.is_empty() {
                return Err(Error::invalid("face detector found no face in the person box"));
            }
            detections.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
            detections[0]
        }
    };

    if face.score < config.s_min {
        let scores = classes
            .iter()
            .map(|c| ClassScore {
                class: c.clone(),
                total: f64::NEG_INFINITY,
                eta_face: 0.0,
                eta_mouth: 0.0,
                best_region: None,
                eta_int: 0.0,
                eta_obj: 0.0,
            })
            .collect();
        return Ok(ClassificationResult {
            scores,
            face: Some(FaceRecord {
                box_: face.box_,
                score: face.score,
                landmarks: LandmarkSet {
                    points: [(0.0, 0.0); NUM_LANDMARKS],
                    dont_care: [true; NUM_LANDMARKS],
                },
                crop_transform: AffineMap::identity(),
            }),
            non_class: true,
            empty_pool: true,
            pool_size: 0,
            landmarks: None,
            best_region_masks: vec![None; classes.len()],
            location_peak: None,
        });
    }

    let (crop, crop_transform) = normalize_face_crop(image, &face.box_)?;
    let to_crop = crop_transform.inverse();
    let face_box_in_crop = to_crop.apply_rect(&face.box_);

    // landmarks, sharing the dense descriptor grid with the star votes
    let grid = dense_descriptor_grid(&crop, config.star.stride, config.star.patch)?;
    let neighbors = knn_faces(&trained.corpus, &crop, config.knn_k)?;
    let coarse = coarse_landmarks(&trained.corpus, &neighbors, KDE_SIGMA)?;
    let refined = refine_landmarks(&trained.corpus, &neighbors, &grid, &coarse, seed)?;
    let landmarks = fuse_landmarks(&coarse, &refined, FUSE_THRESHOLD);

    // appearance scores from the face and mouth crops
    let mouth = mouth_crop(&crop, &landmarks)?;
    let mut app_raw = bundle.appearance.extract(&crop)?;
    app_raw.extend(bundle.appearance.extract(&mouth)?);
    let app_fv = trained.appearance_model.standardize(app_raw)?;

    // candidate regions and their scores
    let pool = build_region_pool(&crop, bundle.segmenter.as_ref())?;
    let loc = trained.star_model.vote_grid(&grid, &config.star, None)?;
    let sal = saliency_prior(&crop, bundle.saliency.as_ref())?;
    let mut region_splits: Vec<Vec<(f64, f64)>> = Vec::with_capacity(pool.len());
    for region in &pool.regions {
        let raw = region_feature_vector(
            region,
            &crop,
            &landmarks,
            &face_box_in_crop,
            &loc,
            &sal,
            bundle.appearance.as_ref(),
            &config.interaction,
        )?;
        let fv = trained.region_model.standardize(raw)?;
        let per_class: Vec<(f64, f64)> = (0..classes.len())
            .map(|c| {
                let (parts, _) = trained.region_model.split_scores(c, &fv)?;
                Ok((parts[0], parts[1]))
            })
            .collect::<Result<_>>()?;
        region_splits.push(per_class);
    }

    let mut scores = Vec::with_capacity(classes.len());
    let mut best_masks = Vec::with_capacity(classes.len());
    for (c, class) in classes.iter().enumerate() {
        let (app_parts, _) = trained.appearance_model.split_scores(c, &app_fv)?;
        let (eta_face, eta_mouth) = (app_parts[0], app_parts[1]);
        // max over regions; strict comparison keeps the lowest region id on
        // ties
        let mut best: Option<(usize, f64, f64)> = None;
        for (i, splits) in region_splits.iter().enumerate() {
            let (eta_int, eta_obj) = splits[c];
            let term = eta_int + eta_obj;
            if best.map_or(true, |(_, bi, bo)| term > bi + bo) {
                best = Some((i, eta_int, eta_obj));
            }
        }
        let (best_region, eta_int, eta_obj) = match best {
            Some((i, bi, bo)) => (Some(i), bi, bo),
            None => (None, 0.0, 0.0),
        };
        let total = combine_score(eta_face, eta_mouth, eta_int + eta_obj, config.gamma);
        best_masks.push(best_region.map(|i| pool.regions[i].clone()));
        scores.push(ClassScore {
            class: class.clone(),
            total,
            eta_face,
            eta_mouth,
            best_region,
            eta_int,
            eta_obj,
        });
    }

    Ok(ClassificationResult {
        scores,
        face: Some(FaceRecord {
            box_: face.box_,
            score: face.score,
            landmarks: landmarks.clone(),
            crop_transform,
        }),
        non_class: false,
        empty_pool: pool.is_empty(),
        pool_size: pool.len(),
        landmarks: Some(landmarks),
        best_region_masks: best_masks,
        location_peak: Some(loc.argmax()),
    })
}

/// One batch item: an image with its person box and optional face override.
pub struct BatchItem<'a> {
    pub image: &'a GrayImage,
    pub person_box: Rect,
    pub face_override: Option<FaceDetection>,
}

/// Classifies every item; per-item failures are recorded without aborting
/// the batch.
pub fn classify_batch(
    bundle: &PipelineBundle,
    items: &[BatchItem<'_>],
    seed: u64,
) -> Vec<Result<ClassificationResult>> {
    items
        .iter()
        .map(|item| classify(bundle, item.image, &item.person_box, item.face_override, seed))
        .collect()
}

/// Overlay geometry in source-image coordinates.
#[derive(Debug, Clone, Default)]
pub struct OverlaySpec {
    /// Boundary points of the best region.
    pub region_outline: Vec<(f64, f64)>,
    pub landmarks: Vec<(f64, f64)>,
    pub face_box: Option<Rect>,
    /// Peak of the predicted-location map.
    pub location_peak: Option<(f64, f64)>,
    /// The best region mask, still in crop coordinates.
    pub region_mask_crop: Option<RegionMask>,
    pub crop_transform: Option<AffineMap>,
}

impl OverlaySpec {
    pub fn is_empty(&self) -> bool {
        self.region_outline.is_empty() && self.landmarks.is_empty() && self.face_box.is_none()
    }
}

/// Boundary pixels of a mask: foreground pixels with at least one
/// 4-neighbor outside the mask.
pub fn mask_outline(mask: &RegionMask) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (x, y) in mask.pixels() {
        let inside = |xx: i64, yy: i64| {
            xx >= 0
                && yy >= 0
                && (xx as usize) < mask.width()
                && (yy as usize) < mask.height()
                && mask.contains(xx as usize, yy as usize)
        };
        let (xi, yi) = (x as i64, y as i64);
        if !inside(xi - 1, yi) || !inside(xi + 1, yi) || !inside(xi, yi - 1) || !inside(xi, yi + 1) {
            out.push((x, y));
        }
    }
    out
}

/// Builds the explanation overlay for one class: the best region's outline,
/// the landmarks, and the face box, all mapped to source coordinates. A
/// non-class result yields an empty overlay.
pub fn explain(result: &ClassificationResult, class_idx: usize) -> OverlaySpec {
    if result.non_class {
        return OverlaySpec::default();
    }
    let Some(face) = &result.face else {
        return OverlaySpec::default();
    };
    let map = &face.crop_transform;
    let mut overlay = OverlaySpec {
        region_outline: Vec::new(),
        landmarks: Vec::new(),
        face_box: Some(face.box_),
        location_peak: result.location_peak.map(|(x, y)| map.apply(x as f64, y as f64)),
        region_mask_crop: result.best_region_masks[class_idx].clone(),
        crop_transform: Some(*map),
    };
    if let Some(lm) = &result.landmarks {
        overlay.landmarks = lm.points.iter().map(|(x, y)| map.apply(*x, *y)).collect();
    }
    if let Some(mask) = &result.best_region_masks[class_idx] {
        overlay.region_outline = mask_outline(mask)
            .into_iter()
            .map(|(x, y)| map.apply(x as f64, y as f64))
            .collect();
    }
    overlay
}

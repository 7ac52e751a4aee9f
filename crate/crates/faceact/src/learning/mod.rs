//! Training: region label assembly from ground-truth overlap, feature
//! standardization, one-vs-all linear SVMs for region scoring and for
//! face+mouth appearance, and the action-object-center star model with
//! leave-one-image-out location priors.

mod svm;

pub use svm::{solve_weighted, train_linear_svm, SvmOptions, SvmSolution};

use crate::error::{Error, Result};
use crate::imaging::{dense_descriptor_grid, rasterize_polygon, DescriptorGrid, GrayImage, Rect, RegionMask};
use crate::interaction::{
    interaction_features, saliency_prior, InteractionParams, Saliency,
};
use crate::landmarks::{
    build_corpus, mouth_crop, normalize_face_crop, AnnotatedFace, FaceCorpus, LandmarkSet,
    CORPUS_MIN_CONTAINED, CORPUS_MIN_SCORE, FACE_CROP_SIZE,
};
use crate::regions::{
    build_region_pool, object_features, overlap_score, span, AppearanceExtractor, FeatureSpan,
    RegionPool, Segmenter,
};
use crate::star_vote::{train_star_from_grids, HeatMap, StarModel, StarParams};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Thresholds and knobs for the whole training procedure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingConfig {
    /// Regions with ground-truth overlap at least this are positives.
    pub t_plus: f64,
    /// Regions with overlap at most this are negatives.
    pub t_minus: f64,
    pub svm_c: f64,
    pub seed: u64,
    /// Weight of the region term in the final score.
    pub gamma: f64,
    /// Faces scoring below this are classified as non-class.
    pub s_min: f64,
    /// Neighbor count for landmark detection.
    pub knn_k: usize,
    pub star: StarParams,
    pub interaction: InteractionParams,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            t_plus: 0.55,
            t_minus: 0.3,
            svm_c: 1.0,
            seed: 0,
            gamma: 0.1,
            s_min: 0.0,
            knn_k: 20,
            star: StarParams::default(),
            interaction: InteractionParams::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.t_minus && self.t_minus < self.t_plus && self.t_plus <= 1.0) {
            return Err(Error::invalid("thresholds must satisfy 0 <= t_minus < t_plus <= 1"));
        }
        if self.svm_c <= 0.0 {
            return Err(Error::invalid("svm_c must be positive"));
        }
        Ok(())
    }
}

/// Label of one candidate region for the image's own class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionLabel {
    Positive,
    Negative,
    Discarded,
}

/// Labels for a pool plus the label of the ground-truth mask itself, which
/// joins the sample set as an extra region.
#[derive(Debug, Clone)]
pub struct LabeledPool {
    pub labels: Vec<RegionLabel>,
    pub gt_label: Option<RegionLabel>,
}

/// Assigns training labels to a pool of regions.
///
/// On a positive image, regions overlapping the ground truth at least
/// `t_plus` are positives (the ground-truth mask itself included), regions
/// at or below `t_minus` negatives, and the band in between is discarded.
/// On a negative image every region is a negative. A positive image without
/// a ground-truth mask must be flagged occluded; its whole pool becomes
/// negatives.
pub fn assign_region_labels(
    pool: &RegionPool,
    r_gt: Option<&RegionMask>,
    image_is_positive: bool,
    object_occluded: bool,
    cfg: &TrainingConfig,
) -> Result<LabeledPool> {
    cfg.validate()?;
    if !image_is_positive {
        return Ok(LabeledPool {
            labels: vec![RegionLabel::Negative; pool.len()],
            gt_label: r_gt.map(|_| RegionLabel::Negative),
        });
    }
    let Some(gt) = r_gt else {
        if object_occluded {
            return Ok(LabeledPool {
                labels: vec![RegionLabel::Negative; pool.len()],
                gt_label: None,
            });
        }
        return Err(Error::invalid(
            "positive image without a ground-truth region and no occlusion flag",
        ));
    };
    let mut labels = Vec::with_capacity(pool.len());
    for region in &pool.regions {
        let ovp = overlap_score(region, gt)?;
        labels.push(if ovp >= cfg.t_plus {
            RegionLabel::Positive
        } else if ovp <= cfg.t_minus {
            RegionLabel::Negative
        } else {
            RegionLabel::Discarded
        });
    }
    Ok(LabeledPool { labels, gt_label: Some(RegionLabel::Positive) })
}

/// A feature vector that knows whether standardization was applied.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
    standardized: bool,
}

impl FeatureVector {
    pub fn raw(values: Vec<f64>) -> Self {
        FeatureVector { values, standardized: false }
    }

    /// Wraps values that are already in the model's standardized frame.
    pub fn pre_standardized(values: Vec<f64>) -> Self {
        FeatureVector { values, standardized: true }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }
}

/// Per-coordinate z-scoring fit on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Standardizer { mean: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    pub fn fit(data: &[Vec<f64>]) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("cannot fit a standardizer on no data"));
        }
        let dim = data[0].len();
        let n = data.len() as f64;
        let mut mean = vec![0.0; dim];
        for row in data {
            if row.len() != dim {
                return Err(Error::invalid("inconsistent feature dimensions"));
            }
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for row in data {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, scale })
    }

    /// Standardizes a raw vector; a vector that was already standardized is
    /// rejected rather than scaled twice.
    pub fn transform(&self, fv: &FeatureVector) -> Result<FeatureVector> {
        if fv.standardized {
            return Err(Error::invalid("feature vector is already standardized"));
        }
        if fv.values.len() != self.mean.len() {
            return Err(Error::invalid(format!(
                "feature length {} does not match standardizer dimension {}",
                fv.values.len(),
                self.mean.len()
            )));
        }
        let values = fv
            .values
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect();
        Ok(FeatureVector { values, standardized: true })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// One-vs-all linear model: per-class weight vectors and biases over a
/// standardized feature space partitioned into named spans.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub classes: Vec<String>,
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
    pub spans: Vec<FeatureSpan>,
    pub standardizer: Standardizer,
}

impl LinearModel {
    pub fn new(
        classes: Vec<String>,
        weights: Vec<Vec<f64>>,
        biases: Vec<f64>,
        spans: Vec<FeatureSpan>,
        standardizer: Standardizer,
    ) -> Result<Self> {
        let dim = standardizer.dim();
        if weights.len() != classes.len() || biases.len() != classes.len() {
            return Err(Error::invalid("per-class weight/bias counts must match classes"));
        }
        if weights.iter().any(|w| w.len() != dim) {
            return Err(Error::invalid("weight length must match feature length"));
        }
        let mut expect = 0;
        for s in &spans {
            if s.start != expect {
                return Err(Error::invalid("spans must partition the coordinates exactly"));
            }
            expect += s.len;
        }
        if expect != dim {
            return Err(Error::invalid("spans must cover the whole feature vector"));
        }
        Ok(LinearModel { classes, weights, biases, spans, standardizer })
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn feature_len(&self) -> usize {
        self.standardizer.dim()
    }

    pub fn weight(&self, class_idx: usize) -> &[f64] {
        &self.weights[class_idx]
    }

    pub fn bias(&self, class_idx: usize) -> f64 {
        self.biases[class_idx]
    }

    pub fn standardize(&self, raw: Vec<f64>) -> Result<FeatureVector> {
        self.standardizer.transform(&FeatureVector::raw(raw))
    }

    /// Per-span partial scores and the combined score (their sum plus the
    /// bias). The vector must already be standardized.
    pub fn split_scores(&self, class_idx: usize, fv: &FeatureVector) -> Result<(Vec<f64>, f64)> {
        if !fv.standardized {
            return Err(Error::invalid("split_scores expects a standardized vector"));
        }
        if fv.len() != self.feature_len() {
            return Err(Error::invalid("feature length does not match the model"));
        }
        let w = &self.weights[class_idx];
        let mut parts = Vec::with_capacity(self.spans.len());
        for s in &self.spans {
            let part: f64 = fv.values[s.start..s.start + s.len]
                .iter()
                .zip(&w[s.start..s.start + s.len])
                .map(|(a, b)| a * b)
                .sum();
            parts.push(part);
        }
        let combined = parts.iter().sum::<f64>() + self.biases[class_idx];
        Ok((parts, combined))
    }
}

/// Interaction/object split of a region model's score, per the span map:
/// returns `(eta_int, eta_obj, combined)` with
/// `combined = eta_int + eta_obj + bias`.
pub fn split_scores(
    model: &LinearModel,
    class_idx: usize,
    v_int: &[f64],
    v_obj: &[f64],
) -> Result<(f64, f64, f64)> {
    if model.spans.len() != 2 || model.spans[0].len != v_int.len() || model.spans[1].len != v_obj.len()
    {
        return Err(Error::invalid("feature spans do not match the model span map"));
    }
    let mut values = Vec::with_capacity(v_int.len() + v_obj.len());
    values.extend_from_slice(v_int);
    values.extend_from_slice(v_obj);
    let fv = FeatureVector::pre_standardized(values);
    let (parts, combined) = model.split_scores(class_idx, &fv)?;
    Ok((parts[0], parts[1], combined))
}

/// Trains one binary SVM per class over shared features. `labels_per_class`
/// holds +1/-1/0 per sample (0 skips the sample for that class). Positives
/// are up-weighted by the negative/positive count ratio. Models are trained
/// without a bias so a class score decomposes exactly over the spans.
pub fn train_one_vs_all(
    features: &[FeatureVector],
    labels_per_class: &[Vec<i8>],
    classes: Vec<String>,
    spans: Vec<FeatureSpan>,
    standardizer: Standardizer,
    c: f64,
    seed: u64,
) -> Result<LinearModel> {
    if features.is_empty() {
        return Err(Error::Training("no training features".into()));
    }
    if features.iter().any(|f| !f.standardized) {
        return Err(Error::invalid("one-vs-all training expects standardized features"));
    }
    let mut weights = Vec::with_capacity(classes.len());
    let mut biases = Vec::with_capacity(classes.len());
    for (ci, labels) in labels_per_class.iter().enumerate() {
        if labels.len() != features.len() {
            return Err(Error::invalid("label list length does not match features"));
        }
        let used: Vec<usize> = (0..features.len()).filter(|i| labels[*i] != 0).collect();
        let pos = used.iter().filter(|i| labels[**i] > 0).count();
        let neg = used.len() - pos;
        if pos == 0 || neg == 0 {
            return Err(Error::Training(format!(
                "class '{}' needs both positive and negative samples",
                classes[ci]
            )));
        }
        let pos_weight = neg as f64 / pos as f64;
        let n = used.len() as f64;
        let feats: Vec<Vec<f64>> = used.iter().map(|i| features[*i].values.clone()).collect();
        let ys: Vec<f64> = used.iter().map(|i| labels[*i] as f64).collect();
        let costs: Vec<f64> = used
            .iter()
            .map(|i| c / n * if labels[*i] > 0 { pos_weight } else { 1.0 })
            .collect();
        let sol = solve_weighted(
            &feats,
            &ys,
            &costs,
            &SvmOptions { seed: seed.wrapping_add(ci as u64), with_bias: false, ..Default::default() },
        )?;
        weights.push(sol.weights);
        biases.push(sol.bias);
    }
    LinearModel::new(classes, weights, biases, spans, standardizer)
}

/// Span layout of the combined region feature vector `[v_int; v_obj]`.
pub fn region_spans(iparams: &InteractionParams, appearance_len: usize) -> Vec<FeatureSpan> {
    let int_len = iparams.feature_len();
    let obj_len = crate::regions::ObjectFeatures::total_len(appearance_len);
    vec![span("v_int", 0, int_len), span("v_obj", int_len, obj_len)]
}

/// Computes the raw `[v_int; v_obj]` vector for one region.
#[allow(clippy::too_many_arguments)]
pub fn region_feature_vector(
    r: &RegionMask,
    face_crop: &GrayImage,
    landmarks: &LandmarkSet,
    face_box_in_crop: &Rect,
    loc: &HeatMap,
    sal: &HeatMap,
    appearance: &dyn AppearanceExtractor,
    iparams: &InteractionParams,
) -> Result<Vec<f64>> {
    let v_int = interaction_features(r, landmarks, face_box_in_crop, loc, sal, iparams)?;
    let v_obj = object_features(r, face_crop, appearance)?;
    let mut out = v_int.to_vec();
    out.extend(v_obj.to_vec());
    Ok(out)
}

/// One appearance training sample: face and mouth crops with a class.
pub struct AppearanceSample {
    pub face_crop: GrayImage,
    pub mouth: GrayImage,
    pub class_id: usize,
}

/// Trains the face+mouth appearance model: per class, a linear SVM over the
/// concatenation of face-crop and mouth-crop appearance features.
pub fn train_appearance_model(
    samples: &[AppearanceSample],
    appearance: &dyn AppearanceExtractor,
    classes: Vec<String>,
    cfg: &TrainingConfig,
) -> Result<LinearModel> {
    if samples.is_empty() {
        return Err(Error::Training("no appearance samples".into()));
    }
    let app_len = appearance.len();
    let mut raw: Vec<Vec<f64>> = Vec::with_capacity(samples.len());
    for s in samples {
        let mut v = appearance.extract(&s.face_crop)?;
        v.extend(appearance.extract(&s.mouth)?);
        raw.push(v);
    }
    let standardizer = Standardizer::fit(&raw)?;
    let features: Vec<FeatureVector> = raw
        .into_iter()
        .map(|v| standardizer.transform(&FeatureVector::raw(v)))
        .collect::<Result<_>>()?;
    let labels_per_class: Vec<Vec<i8>> = (0..classes.len())
        .map(|c| samples.iter().map(|s| if s.class_id == c { 1 } else { -1 }).collect())
        .collect();
    let spans = vec![span("face", 0, app_len), span("mouth", app_len, app_len)];
    train_one_vs_all(
        &features,
        &labels_per_class,
        classes,
        spans,
        standardizer,
        cfg.svm_c,
        cfg.seed.wrapping_add(0x0A),
    )
}

/// Trains the action-object-center star model over all classes jointly and
/// produces, for every training image, the heat map voted with all training
/// features except its own (the leave-one-image-out prior used as that
/// image's location feature).
pub fn train_object_center_star(
    grids: &[(&DescriptorGrid, (usize, usize))],
    params: &StarParams,
    seed: u64,
) -> Result<(StarModel, Vec<HeatMap>)> {
    if grids.len() < 2 {
        return Err(Error::Training(
            "leave-one-image-out needs at least 2 training images".into(),
        ));
    }
    let model = train_star_from_grids(grids, params, seed)?;
    let mut loo = Vec::with_capacity(grids.len());
    for (j, (grid, _)) in grids.iter().enumerate() {
        loo.push(model.vote_grid(grid, params, Some(j as u32))?);
    }
    Ok((model, loo))
}

// ---------------------------------------------------------------------------
// full training pipeline
// ---------------------------------------------------------------------------

/// One annotated training image (all coordinates in source-image pixels).
pub struct TrainingSample<'a> {
    pub image: &'a GrayImage,
    pub face_box: Rect,
    pub face_score: f64,
    pub landmarks: LandmarkSet,
    pub class_id: usize,
    /// Absent when the action object is fully occluded.
    pub object_polygon: Option<Vec<(f64, f64)>>,
}

/// Everything `classify` needs, as produced by training.
#[derive(Clone)]
pub struct TrainedBundle {
    pub classes: Vec<String>,
    pub appearance_model: LinearModel,
    pub region_model: LinearModel,
    pub star_model: StarModel,
    pub corpus: FaceCorpus,
    pub config: TrainingConfig,
}

/// Trains all models from annotated images.
pub fn train_bundle(
    samples: &[TrainingSample<'_>],
    classes: Vec<String>,
    segmenter: &dyn Segmenter,
    saliency: &dyn Saliency,
    appearance: &dyn AppearanceExtractor,
    config: &TrainingConfig,
) -> Result<TrainedBundle> {
    config.validate()?;
    if classes.is_empty() {
        return Err(Error::invalid("class list is empty"));
    }
    if samples.iter().any(|s| s.class_id >= classes.len()) {
        return Err(Error::invalid("sample class id out of range"));
    }

    // landmark corpus from the annotated faces
    let annotated: Vec<AnnotatedFace<'_>> = samples
        .iter()
        .map(|s| AnnotatedFace {
            image: s.image,
            box_: s.face_box,
            score: s.face_score,
            landmarks: s.landmarks.clone(),
        })
        .collect();
    let corpus = build_corpus(&annotated, CORPUS_MIN_SCORE, CORPUS_MIN_CONTAINED, &config.star)?;

    // normalized crops, pools, ground-truth masks
    struct Prepared {
        crop: GrayImage,
        landmarks: LandmarkSet,
        face_box_in_crop: Rect,
        pool: RegionPool,
        gt_mask: Option<RegionMask>,
        grid: DescriptorGrid,
        sal: HeatMap,
        class_id: usize,
    }
    let mut prepared = Vec::with_capacity(samples.len());
    for s in samples {
        let (crop, to_source) = normalize_face_crop(s.image, &s.face_box)?;
        let to_crop = to_source.inverse();
        let landmarks = s.landmarks.transform(&to_crop).rounded();
        let face_box_in_crop = to_crop.apply_rect(&s.face_box);
        let pool = build_region_pool(&crop, segmenter)?;
        let gt_mask = match &s.object_polygon {
            Some(poly) => {
                let verts: Vec<(f64, f64)> =
                    poly.iter().map(|(x, y)| to_crop.apply(*x, *y)).collect();
                let mask = rasterize_polygon(FACE_CROP_SIZE, FACE_CROP_SIZE, &verts)?;
                (!mask.is_empty()).then_some(mask)
            }
            None => None,
        };
        let grid = dense_descriptor_grid(&crop, config.star.stride, config.star.patch)?;
        let sal = saliency_prior(&crop, saliency)?;
        prepared.push(Prepared {
            crop,
            landmarks,
            face_box_in_crop,
            pool,
            gt_mask,
            grid,
            sal,
            class_id: s.class_id,
        });
    }

    // object-center star over images with a visible object
    let star_members: Vec<usize> =
        (0..prepared.len()).filter(|i| prepared[*i].gt_mask.is_some()).collect();
    let star_inputs: Vec<(&DescriptorGrid, (usize, usize))> = star_members
        .iter()
        .map(|&i| {
            let mask = prepared[i].gt_mask.as_ref().expect("member has a mask");
            (&prepared[i].grid, mask_centroid(mask))
        })
        .collect();
    let (star_model, loo_maps) =
        train_object_center_star(&star_inputs, &config.star, config.seed.wrapping_add(0x51))?;

    // region features and per-class labels from the star members only;
    // occluded positives contribute to appearance training but have no
    // usable region labels
    let mut raw_features: Vec<Vec<f64>> = Vec::new();
    let mut own_class: Vec<usize> = Vec::new();
    let mut own_label: Vec<RegionLabel> = Vec::new();
    for (star_idx, &i) in star_members.iter().enumerate() {
        let p = &prepared[i];
        let gt = p.gt_mask.as_ref().expect("member has a mask");
        let loc = &loo_maps[star_idx];
        let labeled = assign_region_labels(&p.pool, Some(gt), true, false, config)?;
        for (region, label) in p.pool.regions.iter().zip(&labeled.labels) {
            raw_features.push(region_feature_vector(
                region,
                &p.crop,
                &p.landmarks,
                &p.face_box_in_crop,
                loc,
                &p.sal,
                appearance,
                &config.interaction,
            )?);
            own_class.push(p.class_id);
            own_label.push(*label);
        }
        raw_features.push(region_feature_vector(
            gt,
            &p.crop,
            &p.landmarks,
            &p.face_box_in_crop,
            loc,
            &p.sal,
            appearance,
            &config.interaction,
        )?);
        own_class.push(p.class_id);
        own_label.push(labeled.gt_label.unwrap_or(RegionLabel::Positive));
    }
    if raw_features.is_empty() {
        return Err(Error::Training("no region training samples".into()));
    }
    let standardizer = Standardizer::fit(&raw_features)?;
    let features: Vec<FeatureVector> = raw_features
        .into_iter()
        .map(|v| standardizer.transform(&FeatureVector::raw(v)))
        .collect::<Result<_>>()?;
    // a region discarded for its own class still serves as a negative for
    // every other class
    let labels_per_class: Vec<Vec<i8>> = (0..classes.len())
        .map(|c| {
            own_class
                .iter()
                .zip(&own_label)
                .map(|(oc, ol)| {
                    if *oc == c {
                        match ol {
                            RegionLabel::Positive => 1,
                            RegionLabel::Negative => -1,
                            RegionLabel::Discarded => 0,
                        }
                    } else {
                        -1
                    }
                })
                .collect()
        })
        .collect();
    let region_model = train_one_vs_all(
        &features,
        &labels_per_class,
        classes.clone(),
        region_spans(&config.interaction, appearance.len()),
        standardizer,
        config.svm_c,
        config.seed.wrapping_add(0x0B),
    )?;

    // appearance model over all samples, occluded positives included
    let app_samples: Vec<AppearanceSample> = prepared
        .iter()
        .map(|p| {
            Ok(AppearanceSample {
                face_crop: p.crop.clone(),
                mouth: mouth_crop(&p.crop, &p.landmarks)?,
                class_id: p.class_id,
            })
        })
        .collect::<Result<_>>()?;
    let appearance_model = train_appearance_model(&app_samples, appearance, classes.clone(), config)?;

    Ok(TrainedBundle {
        classes,
        appearance_model,
        region_model,
        star_model,
        corpus,
        config: config.clone(),
    })
}

/// Rounded centroid of a mask's foreground pixels.
pub fn mask_centroid(mask: &RegionMask) -> (usize, usize) {
    let n = mask.area() as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    for (x, y) in mask.pixels() {
        sx += x as f64;
        sy += y as f64;
    }
    (
        (sx / n).round().max(0.0) as usize,
        (sy / n).round().max(0.0) as usize,
    )
}

// ---------------------------------------------------------------------------
// bundle serialization
// ---------------------------------------------------------------------------

pub const BUNDLE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LinearModelWire {
    classes: Vec<String>,
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
    spans: Vec<FeatureSpan>,
}

#[derive(Serialize, Deserialize)]
struct StandardizationWire {
    appearance: Standardizer,
    region: Standardizer,
}

#[derive(Serialize, Deserialize)]
struct BundleWire {
    version: u32,
    classes: Vec<String>,
    appearance_model: LinearModelWire,
    region_model: LinearModelWire,
    star_model: serde_json::Value,
    standardization: StandardizationWire,
    corpus: serde_json::Value,
    config: TrainingConfig,
}

fn model_to_wire(m: &LinearModel) -> LinearModelWire {
    LinearModelWire {
        classes: m.classes.clone(),
        weights: m.weights.clone(),
        biases: m.biases.clone(),
        spans: m.spans.clone(),
    }
}

fn model_from_wire(w: LinearModelWire, standardizer: Standardizer) -> Result<LinearModel> {
    LinearModel::new(w.classes, w.weights, w.biases, w.spans, standardizer)
}

impl TrainedBundle {
    pub fn to_json(&self) -> serde_json::Value {
        let wire = BundleWire {
            version: BUNDLE_VERSION,
            classes: self.classes.clone(),
            appearance_model: model_to_wire(&self.appearance_model),
            region_model: model_to_wire(&self.region_model),
            star_model: self.star_model.to_json(),
            standardization: StandardizationWire {
                appearance: self.appearance_model.standardizer.clone(),
                region: self.region_model.standardizer.clone(),
            },
            corpus: self.corpus.to_json(),
            config: self.config.clone(),
        };
        serde_json::to_value(wire).expect("bundle serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let wire: BundleWire = serde_json::from_value(value.clone())?;
        if wire.version != BUNDLE_VERSION {
            return Err(Error::data(format!("unsupported bundle version {}", wire.version)));
        }
        let appearance_model = model_from_wire(wire.appearance_model, wire.standardization.appearance)?;
        let region_model = model_from_wire(wire.region_model, wire.standardization.region)?;
        if appearance_model.classes != wire.classes || region_model.classes != wire.classes {
            return Err(Error::data("model class lists do not match the bundle"));
        }
        Ok(TrainedBundle {
            classes: wire.classes,
            appearance_model,
            region_model,
            star_model: StarModel::from_json(&wire.star_model)?,
            corpus: FaceCorpus::from_json(&wire.corpus)?,
            config: wire.config,
        })
    }

    /// Whole-file atomic save: write a sibling temp file, then rename.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_string(&self.to_json())?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        TrainedBundle::from_json(&value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regions::Provenance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pool_of(masks: Vec<RegionMask>) -> RegionPool {
        let provenance = vec![Provenance::Segmentation; masks.len()];
        RegionPool { regions: masks, provenance }
    }

    fn stripe(w: usize, from: usize, len: usize) -> RegionMask {
        RegionMask::from_fn(w, w, |x, y| y == 10 && (from..from + len).contains(&x))
    }

    #[test]
    fn label_boundaries_match_the_overlap_thresholds() {
        let cfg = TrainingConfig::default();
        let gt = stripe(96, 0, 20);
        // overlaps: 11/29 = 0.379 (discard), exactly 0.55, exactly 0.3, 0.0
        let exact_55 = RegionMask::from_fn(96, 96, |x, y| y == 10 && (0..11).contains(&x));
        // |inter|=11, |union|=20 -> 0.55
        let exact_30 = RegionMask::from_fn(96, 96, |x, y| y == 10 && (14..20).contains(&x));
        // |inter|=6, |union|=20 -> 0.3
        let between = RegionMask::from_fn(96, 96, |x, y| y == 10 && (0..10).contains(&x));
        // |inter|=10, |union|=20 -> 0.5 (discarded)
        assert_eq!(overlap_score(&exact_55, &gt).unwrap(), 0.55);
        assert_eq!(overlap_score(&exact_30, &gt).unwrap(), 0.3);
        let pool = pool_of(vec![exact_55, exact_30, between]);
        let labeled = assign_region_labels(&pool, Some(&gt), true, false, &cfg).unwrap();
        assert_eq!(labeled.labels[0], RegionLabel::Positive);
        assert_eq!(labeled.labels[1], RegionLabel::Negative);
        assert_eq!(labeled.labels[2], RegionLabel::Discarded);
        assert_eq!(labeled.gt_label, Some(RegionLabel::Positive));
    }

    #[test]
    fn negative_images_label_everything_negative() {
        let cfg = TrainingConfig::default();
        let gt = stripe(96, 0, 20);
        let pool = pool_of(vec![gt.clone(), stripe(96, 40, 10)]);
        let labeled = assign_region_labels(&pool, Some(&gt), false, false, &cfg).unwrap();
        assert!(labeled.labels.iter().all(|l| *l == RegionLabel::Negative));
        assert_eq!(labeled.gt_label, Some(RegionLabel::Negative));
    }

    #[test]
    fn occluded_positive_is_all_negative_and_unflagged_errors() {
        let cfg = TrainingConfig::default();
        let pool = pool_of(vec![stripe(96, 0, 20)]);
        let labeled = assign_region_labels(&pool, None, true, true, &cfg).unwrap();
        assert!(labeled.labels.iter().all(|l| *l == RegionLabel::Negative));
        assert!(labeled.gt_label.is_none());
        assert!(assign_region_labels(&pool, None, true, false, &cfg).is_err());
    }

    #[test]
    fn labels_depend_only_on_overlap_not_pool_order() {
        let cfg = TrainingConfig::default();
        let gt = stripe(96, 0, 30);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let masks: Vec<RegionMask> = (0..30)
            .map(|_| stripe(96, rng.gen_range(0..60), rng.gen_range(5..35)))
            .collect();
        let pool = pool_of(masks.clone());
        let labeled = assign_region_labels(&pool, Some(&gt), true, false, &cfg).unwrap();
        let mut rev = masks.clone();
        rev.reverse();
        let labeled_rev = assign_region_labels(&pool_of(rev), Some(&gt), true, false, &cfg).unwrap();
        for (i, l) in labeled.labels.iter().enumerate() {
            assert_eq!(*l, labeled_rev.labels[masks.len() - 1 - i]);
        }
    }

    #[test]
    fn standardizer_round_trip_and_double_apply_rejection() {
        let data = vec![vec![1.0, 10.0, 5.0], vec![3.0, 10.0, 7.0], vec![2.0, 10.0, 6.0]];
        let s = Standardizer::fit(&data).unwrap();
        let fv = FeatureVector::raw(vec![2.0, 10.0, 6.0]);
        let t = s.transform(&fv).unwrap();
        // the mean row maps to zero; constant coordinates map to zero
        assert!(t.values().iter().all(|v| v.abs() < 1e-12));
        assert!(s.transform(&t).is_err(), "double standardization must be rejected");
    }

    #[test]
    fn split_scores_identities() {
        let spans = vec![span("v_int", 0, 3), span("v_obj", 3, 2)];
        let zero = LinearModel::new(
            vec!["a".into()],
            vec![vec![0.0; 5]],
            vec![2.5],
            spans.clone(),
            Standardizer::identity(5),
        )
        .unwrap();
        let (i, o, c) = split_scores(&zero, 0, &[1.0, 2.0, 3.0], &[4.0, 5.0]).unwrap();
        assert_eq!((i, o, c), (0.0, 0.0, 2.5));

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let w: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b = rng.gen_range(-1.0..1.0);
            let model = LinearModel::new(
                vec!["a".into()],
                vec![w.clone()],
                vec![b],
                spans.clone(),
                Standardizer::identity(5),
            )
            .unwrap();
            let vi: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let vo: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let (i, o, c) = split_scores(&model, 0, &vi, &vo).unwrap();
            let full: f64 = vi.iter().chain(&vo).zip(&w).map(|(a, b)| a * b).sum::<f64>() + b;
            assert!((c - full).abs() < 1e-9);
            assert!((i + o + b - c).abs() < 1e-9);
        }
        // span mismatch
        assert!(split_scores(&zero, 0, &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn ranking_by_combined_score_ignores_constant_shifts() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let scores: Vec<(f64, f64)> =
            (0..50).map(|_| (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))).collect();
        let rank = |vals: Vec<f64>| -> Vec<usize> {
            let mut idx: Vec<usize> = (0..vals.len()).collect();
            idx.sort_by(|a, b| vals[*b].partial_cmp(&vals[*a]).unwrap().then(a.cmp(b)));
            idx
        };
        let base = rank(scores.iter().map(|(i, o)| i + o).collect());
        let shifted = rank(scores.iter().map(|(i, o)| (i + 0.7) + (o + 0.7)).collect());
        assert_eq!(base, shifted);
    }

    #[test]
    fn appearance_model_separates_mouth_texture() {
        use crate::landmarks::NUM_LANDMARKS;
        let make_face = |class: usize, variant: u64| -> (GrayImage, LandmarkSet) {
            let crop = GrayImage::from_fn(96, 96, |x, y| {
                let base = 0.45
                    + 0.02 * (((x as u64 + 3 * y as u64 + variant * 7) % 5) as f32 - 2.0) / 2.0;
                // mouth region carries the class signal
                if (36..60).contains(&x) && (58..74).contains(&y) {
                    if class == 0 {
                        if y % 4 < 2 {
                            0.85
                        } else {
                            0.15
                        }
                    } else if x % 4 < 2 {
                        0.85
                    } else {
                        0.15
                    }
                } else {
                    base
                }
            });
            let mut points = [(48.0, 66.0); NUM_LANDMARKS];
            points[0] = (30.0, 35.0);
            points[1] = (66.0, 35.0);
            let lm = LandmarkSet::new(points);
            (crop, lm)
        };
        let mut samples = Vec::new();
        for v in 0..16u64 {
            for class in 0..2usize {
                let (crop, lm) = make_face(class, v);
                let mouth = mouth_crop(&crop, &lm).unwrap();
                samples.push(AppearanceSample { face_crop: crop, mouth, class_id: class });
            }
        }
        let app = crate::regions::BaselineAppearance;
        let cfg = TrainingConfig::default();
        let model =
            train_appearance_model(&samples, &app, vec!["h".into(), "v".into()], &cfg).unwrap();
        let mut correct = 0;
        for s in &samples {
            let mut v = app.extract(&s.face_crop).unwrap();
            v.extend(app.extract(&s.mouth).unwrap());
            let fv = model.standardize(v).unwrap();
            let s0 = model.split_scores(0, &fv).unwrap().1;
            let s1 = model.split_scores(1, &fv).unwrap().1;
            let pred = if s0 >= s1 { 0 } else { 1 };
            if pred == s.class_id {
                correct += 1;
            }
        }
        let acc = correct as f64 / samples.len() as f64;
        assert!(acc >= 0.95, "training accuracy {acc}");
        // span split sums to the full score
        let mut v = app.extract(&samples[0].face_crop).unwrap();
        v.extend(app.extract(&samples[0].mouth).unwrap());
        let fv = model.standardize(v).unwrap();
        let (parts, combined) = model.split_scores(0, &fv).unwrap();
        assert!((parts.iter().sum::<f64>() + model.bias(0) - combined).abs() < 1e-9);
        // deterministic under fixed seed
        let model2 =
            train_appearance_model(&samples, &app, vec!["h".into(), "v".into()], &cfg).unwrap();
        assert_eq!(model.weight(0), model2.weight(0));
    }

    #[test]
    fn object_center_star_leave_one_out() {
        let img = GrayImage::from_fn(96, 96, |x, y| {
            let dx = x as f32 - 40.0;
            let dy = y as f32 - 50.0;
            if (dx.abs() < 3.0 && dy.abs() < 12.0) || (dy.abs() < 3.0 && dx.abs() < 12.0) {
                0.9
            } else {
                0.15
            }
        });
        let params = StarParams::default();
        let grid = dense_descriptor_grid(&img, params.stride, params.patch).unwrap();
        let grids: Vec<(&DescriptorGrid, (usize, usize))> =
            vec![(&grid, (40, 50)), (&grid, (40, 50))];
        let (model, loo) = train_object_center_star(&grids, &params, 3).unwrap();
        assert_eq!(loo.len(), 2);
        // each leave-one-out view drops exactly one image's exemplars
        let from_first = model.exemplars().iter().filter(|e| e.source == 0).count();
        assert!(from_first > 0);
        assert_eq!(model.len_excluding(0), model.len() - from_first);
        for map in &loo {
            let (ax, ay) = map.argmax();
            let err = ((ax as f64 - 40.0).powi(2) + (ay as f64 - 50.0).powi(2)).sqrt();
            assert!(err <= 2.0, "LOO peak off by {err}");
            assert!((map.total() - 1.0).abs() < 1e-6);
        }
        // with self-matches suppressed the map differs from the full vote
        let full = model.vote_grid(&grid, &params, None).unwrap();
        assert_ne!(full.mass(), loo[0].mass());
        // fewer than 2 images cannot do leave-one-out
        let single: Vec<(&DescriptorGrid, (usize, usize))> = vec![(&grid, (40, 50))];
        assert!(train_object_center_star(&single, &params, 3).is_err());
    }
}

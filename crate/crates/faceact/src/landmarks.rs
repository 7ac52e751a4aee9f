//! Facial landmark detection on normalized face crops.
//!
//! Seven landmarks are produced per face by fusing two hypotheses: a coarse
//! one from the landmark positions of the K nearest corpus faces (density
//! mode over the candidates) and a refined one from per-test-image star
//! models trained on those same neighbors. Each landmark independently keeps
//! the refined estimate only while it stays within `T_L` pixels of the
//! coarse one.

use crate::error::{Error, Result};
use crate::imaging::{
    block_gradient_histogram, crop_inflated, dense_descriptor_grid, resize_bilinear, AffineMap,
    DescriptorGrid, GrayImage, Rect,
};
use crate::star_vote::{
    decode_f32_base64, encode_f32_base64, train_star_from_grids, KdTree, StarParams,
};
use serde::{Deserialize, Serialize};

/// Side of the normalized face crop in pixels.
pub const FACE_CROP_SIZE: usize = 96;
/// Face boxes are inflated by this factor before cropping.
pub const CROP_INFLATION: f64 = 1.5;
/// Bandwidth of the density estimate over coarse landmark candidates.
pub const KDE_SIGMA: f64 = 20.0;
/// Refined estimates farther than this from the coarse one are rejected.
pub const FUSE_THRESHOLD: f64 = 30.0;
/// Minimum detector score for a face to enter the corpus.
pub const CORPUS_MIN_SCORE: f64 = 2.45;
/// A corpus face must contain more than this fraction of its landmarks.
pub const CORPUS_MIN_CONTAINED: f64 = 0.8;
/// Default neighbor count for landmark detection.
pub const DEFAULT_KNN: usize = 20;
/// Square crops fed to the appearance extractor are this size.
pub const APPEARANCE_INPUT_SIZE: usize = 64;

const CORPUS_CELLS: usize = 8;
const CORPUS_BINS: usize = 8;

/// Number of facial landmarks.
pub const NUM_LANDMARKS: usize = 7;

/// Fixed landmark order; part of every serialized format that carries
/// landmarks.
pub const LANDMARK_NAMES: [&str; NUM_LANDMARKS] = [
    "left_eye_center",
    "right_eye_center",
    "mouth_left_corner",
    "mouth_right_corner",
    "mouth_center",
    "nose_tip",
    "chin",
];

pub const MOUTH_CENTER_INDEX: usize = 4;

/// Seven named landmark points with per-point don't-care flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub points: [(f64, f64); NUM_LANDMARKS],
    pub dont_care: [bool; NUM_LANDMARKS],
}

impl LandmarkSet {
    pub fn new(points: [(f64, f64); NUM_LANDMARKS]) -> Self {
        LandmarkSet { points, dont_care: [false; NUM_LANDMARKS] }
    }

    pub fn mouth_center(&self) -> (f64, f64) {
        self.points[MOUTH_CENTER_INDEX]
    }

    /// Applies an affine map to every point.
    pub fn transform(&self, map: &AffineMap) -> LandmarkSet {
        let mut points = self.points;
        for p in &mut points {
            *p = map.apply(p.0, p.1);
        }
        LandmarkSet { points, dont_care: self.dont_care }
    }

    /// Rounds points to integer pixel coordinates.
    pub fn rounded(&self) -> LandmarkSet {
        let mut points = self.points;
        for p in &mut points {
            *p = (p.0.round(), p.1.round());
        }
        LandmarkSet { points, dont_care: self.dont_care }
    }
}

/// A face: detector box and score in source coordinates, landmarks in
/// normalized crop coordinates, and the map from crop to source.
#[derive(Debug, Clone)]
pub struct FaceRecord {
    pub box_: Rect,
    pub score: f64,
    pub landmarks: LandmarkSet,
    pub crop_transform: AffineMap,
}

/// Crops the inflated face box and resizes it to the normalized size.
/// Returns the crop and the affine map from crop to source coordinates.
pub fn normalize_face_crop(img: &GrayImage, box_: &Rect) -> Result<(GrayImage, AffineMap)> {
    let (crop, translate) = crop_inflated(img, box_, CROP_INFLATION)?;
    let (cw, ch) = (crop.width(), crop.height());
    let resized = resize_bilinear(&crop, FACE_CROP_SIZE, FACE_CROP_SIZE)?;
    let scale = AffineMap {
        sx: (cw as f64 - 1.0) / (FACE_CROP_SIZE as f64 - 1.0),
        sy: (ch as f64 - 1.0) / (FACE_CROP_SIZE as f64 - 1.0),
        tx: 0.0,
        ty: 0.0,
    };
    Ok((resized, translate.compose(&scale)))
}

/// One input face for corpus building: a source image with an annotated box,
/// detector score and landmark positions in source coordinates.
#[derive(Debug, Clone)]
pub struct AnnotatedFace<'a> {
    pub image: &'a GrayImage,
    pub box_: Rect,
    pub score: f64,
    pub landmarks: LandmarkSet,
}

/// A corpus face: its crop, landmark positions in crop coordinates, a global
/// face descriptor, and a cached dense descriptor grid for star training.
#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub descriptor: Vec<f64>,
    pub landmarks: LandmarkSet,
    pub crop: GrayImage,
    grid: DescriptorGrid,
}

/// Training faces indexed by their global descriptors.
#[derive(Debug, Clone)]
pub struct FaceCorpus {
    entries: Vec<CorpusEntry>,
    index: KdTree,
    star: StarParams,
}

impl FaceCorpus {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[CorpusEntry] {
        &self.entries
    }

    pub fn star_params(&self) -> &StarParams {
        &self.star
    }

    /// Global descriptor used for face k-NN.
    pub fn face_descriptor(crop: &GrayImage) -> Result<Vec<f64>> {
        block_gradient_histogram(crop, CORPUS_CELLS, CORPUS_CELLS, CORPUS_BINS)
    }
}

/// Filters annotated faces, normalizes their crops and indexes them.
///
/// A face is kept when its score is at least `min_score` and strictly more
/// than `min_contained` of its landmarks fall inside the face box. Landmarks
/// that land outside the padded crop are clamped and flagged don't-care.
pub fn build_corpus(
    faces: &[AnnotatedFace<'_>],
    min_score: f64,
    min_contained: f64,
    star: &StarParams,
) -> Result<FaceCorpus> {
    let mut entries = Vec::new();
    for face in faces {
        if face.score < min_score {
            continue;
        }
        let inside = face
            .landmarks
            .points
            .iter()
            .filter(|(x, y)| face.box_.contains(*x, *y))
            .count();
        if (inside as f64 / NUM_LANDMARKS as f64) <= min_contained {
            continue;
        }
        let (crop, to_source) = normalize_face_crop(face.image, &face.box_)?;
        let to_crop = to_source.inverse();
        let mut lm = face.landmarks.transform(&to_crop).rounded();
        for i in 0..NUM_LANDMARKS {
            let (x, y) = lm.points[i];
            if x < 0.0 || y < 0.0 || x >= FACE_CROP_SIZE as f64 || y >= FACE_CROP_SIZE as f64 {
                lm.points[i] =
                    (x.clamp(0.0, FACE_CROP_SIZE as f64 - 1.0), y.clamp(0.0, FACE_CROP_SIZE as f64 - 1.0));
                lm.dont_care[i] = true;
            }
        }
        let descriptor = FaceCorpus::face_descriptor(&crop)?;
        let grid = dense_descriptor_grid(&crop, star.stride, star.patch)?;
        entries.push(CorpusEntry { descriptor, landmarks: lm, crop, grid });
    }
    if entries.is_empty() {
        return Err(Error::Training("no faces survived corpus filtering".into()));
    }
    let dim = entries[0].descriptor.len();
    let mut points = Vec::with_capacity(entries.len() * dim);
    for e in &entries {
        points.extend_from_slice(&e.descriptor);
    }
    Ok(FaceCorpus { entries, index: KdTree::build(dim, points), star: *star })
}

/// Exact k nearest corpus entries by L2 over face descriptors, ascending
/// distance with ties on the lower corpus id. A corpus smaller than `k`
/// yields all entries.
pub fn knn_faces(corpus: &FaceCorpus, face_crop: &GrayImage, k: usize) -> Result<Vec<(u32, f64)>> {
    let q = FaceCorpus::face_descriptor(face_crop)?;
    Ok(corpus.index.knn(&q, k.min(corpus.len())))
}

/// Coarse hypothesis: per landmark, the neighbor candidate with the highest
/// kernel density over all candidates. Neighbors flagged don't-care for a
/// landmark contribute no candidate; when none remain, the nearest
/// neighbor's point is copied and the output flag is set.
pub fn coarse_landmarks(corpus: &FaceCorpus, neighbors: &[(u32, f64)], bandwidth: f64) -> Result<LandmarkSet> {
    if neighbors.is_empty() {
        return Err(Error::invalid("coarse landmarks need at least one neighbor"));
    }
    let mut points = [(0.0, 0.0); NUM_LANDMARKS];
    let mut flags = [false; NUM_LANDMARKS];
    for i in 0..NUM_LANDMARKS {
        let candidates: Vec<(f64, f64)> = neighbors
            .iter()
            .filter_map(|(id, _)| {
                let e = &corpus.entries[*id as usize];
                (!e.landmarks.dont_care[i]).then_some(e.landmarks.points[i])
            })
            .collect();
        if candidates.is_empty() {
            points[i] = corpus.entries[neighbors[0].0 as usize].landmarks.points[i];
            flags[i] = true;
            continue;
        }
        points[i] = kde_mode(&candidates, bandwidth);
    }
    Ok(LandmarkSet { points, dont_care: flags })
}

/// Density mode over the candidate points themselves; ties break toward the
/// lexicographically smallest point so the result is order-independent.
fn kde_mode(candidates: &[(f64, f64)], sigma: f64) -> (f64, f64) {
    let mut best = candidates[0];
    let mut best_density = f64::NEG_INFINITY;
    for &c in candidates {
        let density: f64 = candidates
            .iter()
            .map(|&o| {
                let dx = c.0 - o.0;
                let dy = c.1 - o.1;
                (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
            })
            .sum();
        if density > best_density + 1e-12 {
            best = c;
            best_density = density;
        } else if (density - best_density).abs() <= 1e-12 && (c.0, c.1) < (best.0, best.1) {
            best = c;
        }
    }
    best
}

/// Refined hypothesis: one star model per landmark, trained on the neighbor
/// crops with that landmark as the target, voted on the test crop. Landmarks
/// whose model cannot be trained fall back to the coarse value and are
/// flagged.
pub fn refine_landmarks(
    corpus: &FaceCorpus,
    neighbors: &[(u32, f64)],
    face_grid: &DescriptorGrid,
    coarse: &LandmarkSet,
    seed: u64,
) -> Result<LandmarkSet> {
    if neighbors.is_empty() {
        return Err(Error::invalid("refinement needs at least one neighbor"));
    }
    let params = corpus.star;
    let mut points = [(0.0, 0.0); NUM_LANDMARKS];
    let mut flags = [false; NUM_LANDMARKS];
    for i in 0..NUM_LANDMARKS {
        let training: Vec<(&DescriptorGrid, (usize, usize))> = neighbors
            .iter()
            .filter_map(|(id, _)| {
                let e = &corpus.entries[*id as usize];
                if e.landmarks.dont_care[i] {
                    return None;
                }
                let (x, y) = e.landmarks.points[i];
                if x < 0.0 || y < 0.0 || x >= FACE_CROP_SIZE as f64 || y >= FACE_CROP_SIZE as f64 {
                    return None;
                }
                Some((&e.grid, (x as usize, y as usize)))
            })
            .collect();
        let refined = if training.is_empty() {
            None
        } else {
            match train_star_from_grids(&training, &params, seed.wrapping_add(i as u64)) {
                Ok(model) => {
                    let map = model.vote_grid(face_grid, &params, None)?;
                    if map.uniform_fallback {
                        None
                    } else {
                        let (x, y) = map.argmax();
                        Some((x as f64, y as f64))
                    }
                }
                Err(Error::Training(_)) | Err(Error::EmptySample) => None,
                Err(e) => return Err(e),
            }
        };
        match refined {
            Some(p) => points[i] = p,
            None => {
                points[i] = coarse.points[i];
                flags[i] = true;
            }
        }
    }
    Ok(LandmarkSet { points, dont_care: flags })
}

/// Per-landmark choice between the two hypotheses: the refined point wins
/// exactly when its distance to the coarse point is at most `t_l`.
pub fn fuse_landmarks(coarse: &LandmarkSet, refined: &LandmarkSet, t_l: f64) -> LandmarkSet {
    let mut points = [(0.0, 0.0); NUM_LANDMARKS];
    let mut flags = [false; NUM_LANDMARKS];
    for i in 0..NUM_LANDMARKS {
        let (cx, cy) = coarse.points[i];
        let (rx, ry) = refined.points[i];
        let d = ((rx - cx).powi(2) + (ry - cy).powi(2)).sqrt();
        points[i] = if d <= t_l { refined.points[i] } else { coarse.points[i] };
        flags[i] = coarse.dont_care[i] || refined.dont_care[i];
    }
    LandmarkSet { points, dont_care: flags }
}

/// Full detector: k-NN, coarse hypothesis, star refinement, fusion.
pub fn detect_landmarks(
    corpus: &FaceCorpus,
    face_crop: &GrayImage,
    k: usize,
    seed: u64,
) -> Result<LandmarkSet> {
    let neighbors = knn_faces(corpus, face_crop, k)?;
    let coarse = coarse_landmarks(corpus, &neighbors, KDE_SIGMA)?;
    let grid = dense_descriptor_grid(face_crop, corpus.star.stride, corpus.star.patch)?;
    let refined = refine_landmarks(corpus, &neighbors, &grid, &coarse, seed)?;
    Ok(fuse_landmarks(&coarse, &refined, FUSE_THRESHOLD))
}

/// Square crop around the mouth center with side one third of the face crop
/// height, zero-padded at borders and resized to the appearance input size.
pub fn mouth_crop(face_crop: &GrayImage, landmarks: &LandmarkSet) -> Result<GrayImage> {
    let side = (face_crop.height() as f64 / 3.0).round();
    let (mx, my) = landmarks.mouth_center();
    let mx = mx.clamp(0.0, face_crop.width() as f64 - 1.0);
    let my = my.clamp(0.0, face_crop.height() as f64 - 1.0);
    let window = Rect::new(mx - side / 2.0, my - side / 2.0, side, side);
    let (crop, _) = crop_inflated(face_crop, &window, 1.0)?;
    resize_bilinear(&crop, APPEARANCE_INPUT_SIZE, APPEARANCE_INPUT_SIZE)
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

pub const CORPUS_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CorpusEntryWire {
    descriptor: String,
    landmarks: Vec<(f64, f64)>,
    dont_care: Vec<bool>,
    crop: String,
}

#[derive(Serialize, Deserialize)]
struct CorpusWire {
    version: u32,
    landmark_names: Vec<String>,
    crop_size: usize,
    star: StarParams,
    entries: Vec<CorpusEntryWire>,
}

impl FaceCorpus {
    pub fn to_json(&self) -> serde_json::Value {
        let wire = CorpusWire {
            version: CORPUS_VERSION,
            landmark_names: LANDMARK_NAMES.iter().map(|s| s.to_string()).collect(),
            crop_size: FACE_CROP_SIZE,
            star: self.star,
            entries: self
                .entries
                .iter()
                .map(|e| CorpusEntryWire {
                    descriptor: encode_f32_base64(&e.descriptor),
                    landmarks: e.landmarks.points.to_vec(),
                    dont_care: e.landmarks.dont_care.to_vec(),
                    crop: encode_f32_base64(
                        &e.crop.data().iter().map(|v| *v as f64).collect::<Vec<f64>>(),
                    ),
                })
                .collect(),
        };
        serde_json::to_value(wire).expect("corpus serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let wire: CorpusWire = serde_json::from_value(value.clone())?;
        if wire.version != CORPUS_VERSION {
            return Err(Error::data(format!("unsupported corpus version {}", wire.version)));
        }
        if wire.landmark_names != LANDMARK_NAMES {
            return Err(Error::data("landmark name order does not match the format contract"));
        }
        if wire.crop_size != FACE_CROP_SIZE {
            return Err(Error::data(format!("unsupported crop size {}", wire.crop_size)));
        }
        let mut entries = Vec::with_capacity(wire.entries.len());
        for (i, e) in wire.entries.iter().enumerate() {
            let descriptor = decode_f32_base64(&e.descriptor)?;
            let crop_values = decode_f32_base64(&e.crop)?;
            if crop_values.len() != FACE_CROP_SIZE * FACE_CROP_SIZE {
                return Err(Error::data(format!("entry {i}: bad crop payload length")));
            }
            if e.landmarks.len() != NUM_LANDMARKS || e.dont_care.len() != NUM_LANDMARKS {
                return Err(Error::data(format!("entry {i}: expected {NUM_LANDMARKS} landmarks")));
            }
            let crop = GrayImage::new(
                FACE_CROP_SIZE,
                FACE_CROP_SIZE,
                crop_values.iter().map(|v| (*v as f32).clamp(0.0, 1.0)).collect(),
            )?;
            let mut points = [(0.0, 0.0); NUM_LANDMARKS];
            points.copy_from_slice(&e.landmarks);
            let mut dont_care = [false; NUM_LANDMARKS];
            dont_care.copy_from_slice(&e.dont_care);
            let grid = dense_descriptor_grid(&crop, wire.star.stride, wire.star.patch)?;
            entries.push(CorpusEntry {
                descriptor,
                landmarks: LandmarkSet { points, dont_care },
                crop,
                grid,
            });
        }
        if entries.is_empty() {
            return Err(Error::data("corpus has no entries"));
        }
        let dim = entries[0].descriptor.len();
        let mut points = Vec::with_capacity(entries.len() * dim);
        for e in &entries {
            points.extend_from_slice(&e.descriptor);
        }
        Ok(FaceCorpus { entries, index: KdTree::build(dim, points), star: wire.star })
    }
}

//! Candidate action-object regions and their intrinsic features.
//!
//! The pool combines a pluggable over-segmentation with a parallel-contour
//! proposer, filtered by area. Each surviving region is described by a 7x7
//! occupancy grid in face coordinates, a block gradient histogram of its
//! rendered mask, moment-ellipse statistics, and an appearance vector from a
//! pluggable extractor.

mod quads;
mod segment;

pub use quads::{propose_parallel_quads as propose_parallel_quads_with, QuadParams};

use crate::error::{Error, Result};
use crate::imaging::{
    block_gradient_histogram, ellipse_stats, resize_bilinear, GrayImage, RegionMask,
};
use crate::landmarks::APPEARANCE_INPUT_SIZE;
use std::collections::HashSet;

/// Regions below this pixel area never enter the pool.
pub const MIN_REGION_AREA: usize = 30;
/// Regions covering strictly more than this fraction of the crop are dropped.
pub const MAX_REGION_FRACTION: f64 = 0.5;

const OCCUPANCY_CELLS: usize = 7;
const SHAPE_HOG_CELLS: usize = 8;
const SHAPE_HOG_BINS: usize = 8;
const SHAPE_RENDER_SIZE: usize = 64;

/// Where a candidate region came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Segmentation,
    ParallelContour,
    GroundTruth,
}

/// Filtered candidate regions in face-crop coordinates.
#[derive(Debug, Clone, Default)]
pub struct RegionPool {
    pub regions: Vec<RegionMask>,
    pub provenance: Vec<Provenance>,
}

impl RegionPool {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

/// Produces an over-segmentation of a face crop.
pub trait Segmenter {
    fn name(&self) -> &str;
    fn segment(&self, img: &GrayImage) -> Result<Vec<RegionMask>>;
}

/// Graph-based segmentation at three granularities; the union of all
/// segments (exact duplicates removed) forms the proposal set.
#[derive(Debug, Clone)]
pub struct BaselineSegmenter {
    pub scales: [f32; 3],
    pub min_size: usize,
}

impl Default for BaselineSegmenter {
    fn default() -> Self {
        BaselineSegmenter { scales: [0.02, 0.06, 0.18], min_size: 20 }
    }
}

impl Segmenter for BaselineSegmenter {
    fn name(&self) -> &str {
        "baseline-graph"
    }

    fn segment(&self, img: &GrayImage) -> Result<Vec<RegionMask>> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for &k in &self.scales {
            for mask in segment::segment_at_scale(img, k, self.min_size) {
                if seen.insert(mask.clone()) {
                    out.push(mask);
                }
            }
        }
        Ok(out)
    }
}

/// Runs the segmentation plugin, attributing failures to it by name.
pub fn propose_segments(face_crop: &GrayImage, segmenter: &dyn Segmenter) -> Result<Vec<RegionMask>> {
    segmenter.segment(face_crop).map_err(|e| Error::Plugin {
        plugin: segmenter.name().to_string(),
        message: e.to_string(),
    })
}

/// Parallel-contour proposals with default parameters.
pub fn propose_parallel_quads(face_crop: &GrayImage) -> Result<Vec<RegionMask>> {
    quads::propose_parallel_quads(face_crop, &QuadParams::default())
}

/// Keeps regions with `MIN_REGION_AREA <= area <= MAX_REGION_FRACTION *
/// crop_area`.
pub fn filter_pool(regions: Vec<(RegionMask, Provenance)>, crop_area: f64) -> RegionPool {
    let mut pool = RegionPool::default();
    for (mask, prov) in regions {
        let area = mask.area();
        if area >= MIN_REGION_AREA && (area as f64) <= MAX_REGION_FRACTION * crop_area {
            pool.regions.push(mask);
            pool.provenance.push(prov);
        }
    }
    pool
}

/// Full proposal pipeline for one crop: segments plus parallel quads,
/// filtered by area.
pub fn build_region_pool(face_crop: &GrayImage, segmenter: &dyn Segmenter) -> Result<RegionPool> {
    let mut candidates: Vec<(RegionMask, Provenance)> = propose_segments(face_crop, segmenter)?
        .into_iter()
        .map(|m| (m, Provenance::Segmentation))
        .collect();
    for quad in propose_parallel_quads(face_crop)? {
        candidates.push((quad, Provenance::ParallelContour));
    }
    let crop_area = (face_crop.width() * face_crop.height()) as f64;
    Ok(filter_pool(candidates, crop_area))
}

/// Intersection over union of two same-frame masks; 0 for two empty masks.
pub fn overlap_score(a: &RegionMask, b: &RegionMask) -> Result<f64> {
    if !a.same_frame(b) {
        return Err(Error::invalid("overlap of masks with different dimensions"));
    }
    let union = a.union_area(b);
    if union == 0 {
        return Ok(0.0);
    }
    Ok(a.intersection_area(b) as f64 / union as f64)
}

/// Maps a crop image to a fixed-length appearance vector.
pub trait AppearanceExtractor {
    fn name(&self) -> &str;
    fn len(&self) -> usize;
    fn extract(&self, crop: &GrayImage) -> Result<Vec<f64>>;
}

/// Built-in appearance descriptor: a three-level spatial pyramid of block
/// gradient histograms plus a 16-bin intensity histogram, computed on the
/// crop resized to a fixed square.
#[derive(Debug, Clone, Default)]
pub struct BaselineAppearance;

const PYRAMID_LEVELS: [usize; 3] = [1, 2, 4];
const INTENSITY_BINS: usize = 16;

impl AppearanceExtractor for BaselineAppearance {
    fn name(&self) -> &str {
        "baseline-pyramid"
    }

    fn len(&self) -> usize {
        let cells: usize = PYRAMID_LEVELS.iter().map(|c| c * c).sum();
        cells * SHAPE_HOG_BINS + INTENSITY_BINS
    }

    fn extract(&self, crop: &GrayImage) -> Result<Vec<f64>> {
        let img = resize_bilinear(crop, APPEARANCE_INPUT_SIZE, APPEARANCE_INPUT_SIZE)?;
        let mut out = Vec::with_capacity(self.len());
        for &cells in &PYRAMID_LEVELS {
            out.extend(block_gradient_histogram(&img, cells, cells, SHAPE_HOG_BINS)?);
        }
        let mut hist = vec![0.0f64; INTENSITY_BINS];
        for v in img.data() {
            let bin = ((*v as f64 * INTENSITY_BINS as f64) as usize).min(INTENSITY_BINS - 1);
            hist[bin] += 1.0;
        }
        let n = img.data().len() as f64;
        out.extend(hist.into_iter().map(|c| c / n));
        Ok(out)
    }
}

/// One named contiguous block of a feature vector.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FeatureSpan {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

pub fn span(name: &str, start: usize, len: usize) -> FeatureSpan {
    FeatureSpan { name: name.to_string(), start, len }
}

/// Region-intrinsic features in a fixed concatenation order.
#[derive(Debug, Clone)]
pub struct ObjectFeatures {
    pub occupancy: Vec<f64>,
    pub shape_hog: Vec<f64>,
    pub ellipse: [f64; 5],
    pub appearance: Vec<f64>,
}

impl ObjectFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v =
            Vec::with_capacity(self.occupancy.len() + self.shape_hog.len() + 5 + self.appearance.len());
        v.extend(&self.occupancy);
        v.extend(&self.shape_hog);
        v.extend(&self.ellipse);
        v.extend(&self.appearance);
        v
    }

    /// Span layout for a given appearance vector length.
    pub fn layout(appearance_len: usize) -> Vec<FeatureSpan> {
        let occ = OCCUPANCY_CELLS * OCCUPANCY_CELLS;
        let hog = SHAPE_HOG_CELLS * SHAPE_HOG_CELLS * SHAPE_HOG_BINS;
        vec![
            span("occupancy", 0, occ),
            span("shape_hog", occ, hog),
            span("ellipse", occ + hog, 5),
            span("appearance", occ + hog + 5, appearance_len),
        ]
    }

    pub fn total_len(appearance_len: usize) -> usize {
        OCCUPANCY_CELLS * OCCUPANCY_CELLS + SHAPE_HOG_CELLS * SHAPE_HOG_CELLS * SHAPE_HOG_BINS + 5 + appearance_len
    }
}

/// Area-averaged occupancy of the mask on a coarse grid over the full crop
/// frame. Each pixel's unit square is split exactly across the cells it
/// overlaps, so cell values times cell area always sum to the mask area.
pub fn occupancy_grid(mask: &RegionMask, cells: usize) -> Vec<f64> {
    let cw = mask.width() as f64 / cells as f64;
    let ch = mask.height() as f64 / cells as f64;
    let mut acc = vec![0.0f64; cells * cells];
    for (x, y) in mask.pixels() {
        // pixel square [x, x+1) x [y, y+1) split across up to 4 cells
        let split = |lo: f64, cell: f64| -> [(usize, f64); 2] {
            let i0 = (lo / cell) as usize;
            let hi = lo + 1.0;
            let boundary = (i0 as f64 + 1.0) * cell;
            if hi <= boundary + 1e-12 {
                [(i0, 1.0), (i0, 0.0)]
            } else {
                [(i0, boundary - lo), ((i0 + 1).min(cells - 1), hi - boundary)]
            }
        };
        for (ix, fx) in split(x as f64, cw) {
            if fx <= 0.0 {
                continue;
            }
            for (iy, fy) in split(y as f64, ch) {
                if fy <= 0.0 {
                    continue;
                }
                acc[iy.min(cells - 1) * cells + ix.min(cells - 1)] += fx * fy;
            }
        }
    }
    let cell_area = cw * ch;
    acc.iter().map(|a| a / cell_area).collect()
}

/// Computes all object features of one region.
pub fn object_features(
    r: &RegionMask,
    face_crop: &GrayImage,
    appearance: &dyn AppearanceExtractor,
) -> Result<ObjectFeatures> {
    if r.is_empty() {
        return Err(Error::invalid("object features of an empty region"));
    }
    if r.width() != face_crop.width() || r.height() != face_crop.height() {
        return Err(Error::invalid("region mask frame does not match the crop"));
    }
    let occupancy = occupancy_grid(r, OCCUPANCY_CELLS);

    let (x0, y0, x1, y1) = r.bounding_box().expect("nonempty mask");
    let (bw, bh) = (x1 - x0 + 1, y1 - y0 + 1);
    let rendered = GrayImage::from_fn(bw, bh, |x, y| {
        if r.contains(x0 + x, y0 + y) {
            1.0
        } else {
            0.0
        }
    });
    let rendered = resize_bilinear(&rendered, SHAPE_RENDER_SIZE, SHAPE_RENDER_SIZE)?;
    let shape_hog = block_gradient_histogram(&rendered, SHAPE_HOG_CELLS, SHAPE_HOG_CELLS, SHAPE_HOG_BINS)?;

    let e = ellipse_stats(r)?;
    let ellipse = [e.major_axis, e.minor_axis, e.area, e.eccentricity, e.orientation];

    let window = GrayImage::from_fn(bw, bh, |x, y| face_crop.get(x0 + x, y0 + y));
    let appearance_vec = appearance.extract(&window).map_err(|err| Error::Plugin {
        plugin: appearance.name().to_string(),
        message: err.to_string(),
    })?;
    if appearance_vec.len() != appearance.len() {
        return Err(Error::Plugin {
            plugin: appearance.name().to_string(),
            message: format!(
                "declared length {} but produced {}",
                appearance.len(),
                appearance_vec.len()
            ),
        });
    }
    Ok(ObjectFeatures { occupancy, shape_hog, ellipse, appearance: appearance_vec })
}

//! Interaction features between a candidate region and a face: mass of the
//! predicted-location and saliency maps inside the region, extremal
//! distances to each landmark, log-polar coverage around each landmark, and
//! overlap ratios with the face box.

use crate::error::{Error, Result};
use crate::imaging::{gaussian_blur_f64, GrayImage, Rect, RegionMask};
use crate::landmarks::{LandmarkSet, NUM_LANDMARKS};
use crate::regions::{span, FeatureSpan};
use crate::star_vote::{HeatMap, StarModel, StarParams};
use serde::{Deserialize, Serialize};

/// Log-polar binning parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InteractionParams {
    pub n_radial: usize,
    pub n_angular: usize,
    pub r_max: f64,
}

impl Default for InteractionParams {
    fn default() -> Self {
        InteractionParams { n_radial: 5, n_angular: 8, r_max: 96.0 }
    }
}

impl InteractionParams {
    pub fn feature_len(&self) -> usize {
        2 + 2 * NUM_LANDMARKS + NUM_LANDMARKS * self.n_radial * self.n_angular + 3
    }
}

/// The concatenated interaction features of one region.
#[derive(Debug, Clone)]
pub struct InteractionFeatures {
    pub loc_mass: f64,
    pub sal_mass: f64,
    /// Min and max distance to each landmark, interleaved per landmark.
    pub distances: [f64; 2 * NUM_LANDMARKS],
    /// Per landmark, `n_radial * n_angular` region-pixel counts.
    pub logpolar: Vec<f64>,
    /// `|r ∩ R_F|/|R_F|`, `|r ∩ R_F|/|r|`, `|r ∩ R_F|/|r ∪ R_F|`.
    pub overlaps: [f64; 3],
}

impl InteractionFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 + self.distances.len() + self.logpolar.len() + 3);
        v.push(self.loc_mass);
        v.push(self.sal_mass);
        v.extend(&self.distances);
        v.extend(&self.logpolar);
        v.extend(&self.overlaps);
        v
    }

    pub fn layout(params: &InteractionParams) -> Vec<FeatureSpan> {
        let lp = NUM_LANDMARKS * params.n_radial * params.n_angular;
        vec![
            span("loc_mass", 0, 1),
            span("sal_mass", 1, 1),
            span("landmark_distances", 2, 2 * NUM_LANDMARKS),
            span("logpolar", 2 + 2 * NUM_LANDMARKS, lp),
            span("face_overlaps", 2 + 2 * NUM_LANDMARKS + lp, 3),
        ]
    }
}

/// Predicted action-object location: the star model's vote map over the
/// face crop.
pub fn location_prior(star: &StarModel, face_crop: &GrayImage, params: &StarParams) -> Result<HeatMap> {
    star.vote(face_crop, params)
}

/// Produces a raw (not yet normalized) saliency map over a crop.
pub trait Saliency {
    fn name(&self) -> &str;
    fn saliency(&self, img: &GrayImage) -> Result<Vec<f64>>;
}

/// Built-in saliency: gradient magnitude blurred with sigma 4, weighted by a
/// centered Gaussian window with sigma half the crop size.
#[derive(Debug, Clone, Default)]
pub struct BaselineSaliency;

impl Saliency for BaselineSaliency {
    fn name(&self) -> &str {
        "baseline-center-gradient"
    }

    fn saliency(&self, img: &GrayImage) -> Result<Vec<f64>> {
        let mag: Vec<f64> = crate::imaging::gradient_magnitude(img)?
            .into_iter()
            .map(|v| v as f64)
            .collect();
        let blurred = gaussian_blur_f64(img.width(), img.height(), &mag, 4.0);
        let (cx, cy) = ((img.width() as f64 - 1.0) / 2.0, (img.height() as f64 - 1.0) / 2.0);
        let sigma = img.width().max(img.height()) as f64 / 2.0;
        let mut out = blurred;
        for y in 0..img.height() {
            for x in 0..img.width() {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                let w = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
                // a small floor keeps a usable prior on flat crops
                out[y * img.width() + x] = out[y * img.width() + x] * w + 1e-9 * w;
            }
        }
        Ok(out)
    }
}

/// Runs the saliency plugin and normalizes its output to total mass 1; an
/// all-zero plugin output falls back to a flagged uniform map.
pub fn saliency_prior(face_crop: &GrayImage, plugin: &dyn Saliency) -> Result<HeatMap> {
    let raw = plugin.saliency(face_crop).map_err(|e| Error::Plugin {
        plugin: plugin.name().to_string(),
        message: e.to_string(),
    })?;
    if raw.len() != face_crop.width() * face_crop.height() {
        return Err(Error::Plugin {
            plugin: plugin.name().to_string(),
            message: "saliency output size does not match the crop".into(),
        });
    }
    Ok(HeatMap::from_raw(face_crop.width(), face_crop.height(), raw))
}

/// Minimum and maximum Euclidean distance from any region pixel to each
/// landmark, interleaved `(min_0, max_0, min_1, max_1, ...)`.
pub fn landmark_distances(
    r: &RegionMask,
    landmarks: &LandmarkSet,
) -> Result<[f64; 2 * NUM_LANDMARKS]> {
    if r.is_empty() {
        return Err(Error::invalid("landmark distances of an empty region"));
    }
    let mut out = [0.0; 2 * NUM_LANDMARKS];
    for (i, (px, py)) in landmarks.points.iter().enumerate() {
        let mut dmin = f64::MAX;
        let mut dmax = f64::MIN;
        for (x, y) in r.pixels() {
            let d = ((x as f64 - px).powi(2) + (y as f64 - py).powi(2)).sqrt();
            dmin = dmin.min(d);
            dmax = dmax.max(d);
        }
        out[2 * i] = dmin;
        out[2 * i + 1] = dmax;
    }
    Ok(out)
}

/// Counts region pixels in a log-polar binning centered on `p`: radial edges
/// log-spaced from 1 to `r_max` (distances below 1 fall into the innermost
/// bin), angular bins uniform over `[0, 2*pi)`. Pixels at distance `r_max`
/// or beyond are discarded.
pub fn logpolar_coverage(
    r: &RegionMask,
    p: (f64, f64),
    n_radial: usize,
    n_angular: usize,
    r_max: f64,
) -> Result<Vec<f64>> {
    if n_radial == 0 || n_angular == 0 {
        return Err(Error::invalid("log-polar bin counts must be positive"));
    }
    if r_max <= 1.0 {
        return Err(Error::invalid("log-polar outer radius must exceed 1"));
    }
    let mut counts = vec![0.0f64; n_radial * n_angular];
    let log_rmax = r_max.ln();
    for (x, y) in r.pixels() {
        let dx = x as f64 - p.0;
        let dy = y as f64 - p.1;
        let d = (dx * dx + dy * dy).sqrt();
        if d >= r_max {
            continue;
        }
        let radial = if d < 1.0 {
            0
        } else {
            ((d.ln() / log_rmax * n_radial as f64) as usize).min(n_radial - 1)
        };
        let theta = dy.atan2(dx).rem_euclid(2.0 * std::f64::consts::PI);
        let angular =
            ((theta / (2.0 * std::f64::consts::PI) * n_angular as f64) as usize).min(n_angular - 1);
        counts[radial * n_angular + angular] += 1.0;
    }
    Ok(counts)
}

/// The three overlap ratios between a region and the original (not inflated)
/// face box expressed in crop coordinates.
pub fn face_overlaps(r: &RegionMask, face_box: &Rect) -> Result<[f64; 3]> {
    if r.is_empty() {
        return Err(Error::invalid("face overlaps of an empty region"));
    }
    let face_mask = RegionMask::from_fn(r.width(), r.height(), |x, y| {
        face_box.contains(x as f64, y as f64)
    });
    let inter = r.intersection_area(&face_mask) as f64;
    let union = r.union_area(&face_mask) as f64;
    let fa = face_mask.area() as f64;
    let ra = r.area() as f64;
    Ok([
        if fa > 0.0 { inter / fa } else { 0.0 },
        inter / ra,
        if union > 0.0 { inter / union } else { 0.0 },
    ])
}

/// Assembles the full interaction feature block for one region.
pub fn interaction_features(
    r: &RegionMask,
    landmarks: &LandmarkSet,
    face_box_in_crop: &Rect,
    loc: &HeatMap,
    sal: &HeatMap,
    params: &InteractionParams,
) -> Result<InteractionFeatures> {
    let loc_mass = loc.mean_over(r)?;
    let sal_mass = sal.mean_over(r)?;
    let distances = landmark_distances(r, landmarks)?;
    let mut logpolar = Vec::with_capacity(NUM_LANDMARKS * params.n_radial * params.n_angular);
    for p in &landmarks.points {
        logpolar.extend(logpolar_coverage(r, *p, params.n_radial, params.n_angular, params.r_max)?);
    }
    let overlaps = face_overlaps(r, face_box_in_crop)?;
    Ok(InteractionFeatures { loc_mass, sal_mass, distances, logpolar, overlaps })
}

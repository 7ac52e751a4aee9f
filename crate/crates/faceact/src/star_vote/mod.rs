//! Exemplar star model: weighted sampling of descriptor/offset pairs at
//! training time, nearest-neighbor offset voting at test time. The vote
//! output is a heat map over the image, normalized to total mass 1.

mod kdtree;

pub use kdtree::{linear_scan_nearest, KdTree, SearchMode};

use crate::error::{Error, Result};
use crate::imaging::{
    dense_descriptor_grid, gaussian_blur_f64, normalize_root_values, DescriptorGrid, GrayImage,
    RegionMask, DESCRIPTOR_LEN,
};
use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Default decay of the training sampling weight with distance to the target
/// center, in pixels.
pub const DEFAULT_SIGMA1: f64 = 10.0;
/// Default decay of the vote weight with descriptor distance.
pub const DEFAULT_SIGMA2: f64 = 0.1;
/// Default number of patches sampled per training image.
pub const DEFAULT_KF: usize = 100;

/// Parameters shared by training and voting.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StarParams {
    pub stride: usize,
    pub patch: usize,
    pub sigma1: f64,
    pub sigma2: f64,
    pub k_f: usize,
    /// Post-accumulation Gaussian blur of the vote map; 0 disables it.
    pub blur_sigma: f64,
    /// Epsilon for approximate search; exact when `None`.
    pub approx_eps: Option<f64>,
}

impl Default for StarParams {
    fn default() -> Self {
        StarParams {
            stride: 4,
            patch: 16,
            sigma1: DEFAULT_SIGMA1,
            sigma2: DEFAULT_SIGMA2,
            k_f: DEFAULT_KF,
            blur_sigma: 2.0,
            approx_eps: None,
        }
    }
}

impl StarParams {
    pub fn search_mode(&self) -> SearchMode {
        match self.approx_eps {
            Some(eps) => SearchMode::Approximate(eps),
            None => SearchMode::Exact,
        }
    }
}

/// One training exemplar: a root-normalized descriptor and the offset from
/// its patch center to the target center.
#[derive(Debug, Clone)]
pub struct StarExemplar {
    pub descriptor: Vec<f64>,
    pub offset: (i32, i32),
    /// Index of the training image the exemplar came from.
    pub source: u32,
}

/// Bag of exemplars with a kd-tree index over their descriptors.
#[derive(Debug, Clone)]
pub struct StarModel {
    exemplars: Vec<StarExemplar>,
    index: KdTree,
    pub sigma1: f64,
    pub sigma2: f64,
    pub k_f: usize,
    /// Training image indices skipped because no patch had positive weight.
    pub skipped_sources: Vec<u32>,
}

/// Nonnegative per-pixel map normalized to total mass 1.
#[derive(Debug, Clone)]
pub struct HeatMap {
    width: usize,
    height: usize,
    mass: Vec<f64>,
    /// Set when no vote landed in bounds and the map fell back to uniform.
    pub uniform_fallback: bool,
}

impl HeatMap {
    /// Normalizes raw nonnegative accumulation to sum 1; an all-zero input
    /// becomes a flagged uniform map.
    pub fn from_raw(width: usize, height: usize, raw: Vec<f64>) -> Self {
        assert_eq!(raw.len(), width * height);
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            let n = (width * height) as f64;
            return HeatMap {
                width,
                height,
                mass: vec![1.0 / n; width * height],
                uniform_fallback: true,
            };
        }
        let mass = raw.iter().map(|v| v / total).collect();
        HeatMap { width, height, mass, uniform_fallback: false }
    }

    pub fn uniform(width: usize, height: usize) -> Self {
        let n = (width * height) as f64;
        HeatMap { width, height, mass: vec![1.0 / n; width * height], uniform_fallback: true }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.mass[y * self.width + x]
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Row-major first maximum; deterministic under ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0usize;
        for (i, v) in self.mass.iter().enumerate() {
            if *v > self.mass[best] {
                best = i;
            }
        }
        (best % self.width, best / self.width)
    }

    /// Arithmetic mean of the mass over the mask's foreground pixels.
    pub fn mean_over(&self, mask: &RegionMask) -> Result<f64> {
        if mask.width() != self.width || mask.height() != self.height {
            return Err(Error::invalid("mask and heat map dimensions differ"));
        }
        if mask.is_empty() {
            return Err(Error::invalid("mean over an empty mask"));
        }
        let sum: f64 = mask.pixels().map(|(x, y)| self.at(x, y)).sum();
        Ok(sum / mask.area() as f64)
    }
}

/// Vote weight for a descriptor at distance `d` from its nearest exemplar.
#[inline]
pub fn vote_weight(distance: f64, sigma2: f64) -> f64 {
    (-distance / sigma2).exp()
}

/// Training sampling weight for a patch at `center` given the gradient
/// magnitude `grad_mag` at that point.
#[inline]
pub fn sampling_weight(
    center: (usize, usize),
    target: (usize, usize),
    grad_mag: f64,
    sigma1: f64,
) -> f64 {
    let dx = center.0 as f64 - target.0 as f64;
    let dy = center.1 as f64 - target.1 as f64;
    grad_mag * (-(dx * dx + dy * dy).sqrt() / sigma1).exp()
}

/// Draws `k_f` descriptors without replacement, proportionally to
/// `gradient * exp(-dist(center, target) / sigma1)`, pairing each with the
/// offset from its center to the target. Exponential-race keys keep the draw
/// reproducible under a fixed seed.
pub fn sample_training_patches(
    img: &GrayImage,
    target: (usize, usize),
    k_f: usize,
    sigma1: f64,
    rng_seed: u64,
) -> Result<Vec<StarExemplar>> {
    let params = StarParams { sigma1, k_f, ..StarParams::default() };
    let grid = dense_descriptor_grid(img, params.stride, params.patch)?;
    sample_patches_from_grid(&grid, target, &params, rng_seed, 0)
}

pub fn sample_patches_from_grid(
    grid: &DescriptorGrid,
    target: (usize, usize),
    params: &StarParams,
    rng_seed: u64,
    source: u32,
) -> Result<Vec<StarExemplar>> {
    if target.0 >= grid.width || target.1 >= grid.height {
        return Err(Error::invalid("target point lies outside the image"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut keyed: Vec<(f64, usize)> = Vec::new();
    for (i, d) in grid.descriptors.iter().enumerate() {
        let w = sampling_weight(d.center, target, grid.center_magnitudes[i], params.sigma1);
        // one uniform draw per descriptor keeps the stream position fixed
        let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        if w > 0.0 {
            keyed.push((-u.ln() / w, i));
        }
    }
    if keyed.is_empty() {
        return Err(Error::EmptySample);
    }
    keyed.sort_by(|a, b| a.partial_cmp(b).unwrap());
    keyed.truncate(params.k_f);
    Ok(keyed
        .into_iter()
        .map(|(_, i)| {
            let d = &grid.descriptors[i];
            StarExemplar {
                descriptor: normalize_root_values(&d.values),
                offset: (
                    target.0 as i32 - d.center.0 as i32,
                    target.1 as i32 - d.center.1 as i32,
                ),
                source,
            }
        })
        .collect())
}

/// Trains a star model from `(image, target)` pairs. Images in which no
/// patch has positive sampling weight are skipped and recorded; an entirely
/// empty result is an error.
pub fn train_star(
    images: &[(GrayImage, (usize, usize))],
    params: &StarParams,
    seed: u64,
) -> Result<StarModel> {
    if images.is_empty() {
        return Err(Error::Training("no training images".into()));
    }
    let mut grids = Vec::with_capacity(images.len());
    for (img, target) in images {
        grids.push((dense_descriptor_grid(img, params.stride, params.patch)?, *target));
    }
    let refs: Vec<(&DescriptorGrid, (usize, usize))> =
        grids.iter().map(|(g, t)| (g, *t)).collect();
    train_star_from_grids(&refs, params, seed)
}

pub fn train_star_from_grids(
    grids: &[(&DescriptorGrid, (usize, usize))],
    params: &StarParams,
    seed: u64,
) -> Result<StarModel> {
    if grids.is_empty() {
        return Err(Error::Training("no training images".into()));
    }
    let mut exemplars = Vec::new();
    let mut skipped = Vec::new();
    for (j, (grid, target)) in grids.iter().enumerate() {
        let img_seed = seed.wrapping_add(j as u64).wrapping_mul(0x9E3779B97F4A7C15);
        match sample_patches_from_grid(grid, *target, params, img_seed, j as u32) {
            Ok(mut samples) => exemplars.append(&mut samples),
            Err(Error::EmptySample) => skipped.push(j as u32),
            Err(e) => return Err(e),
        }
    }
    if exemplars.is_empty() {
        return Err(Error::Training("all training images produced empty samples".into()));
    }
    Ok(StarModel::from_exemplars(exemplars, params, skipped))
}

impl StarModel {
    pub fn from_exemplars(
        exemplars: Vec<StarExemplar>,
        params: &StarParams,
        skipped_sources: Vec<u32>,
    ) -> Self {
        let dim = exemplars.first().map_or(DESCRIPTOR_LEN, |e| e.descriptor.len());
        let mut points = Vec::with_capacity(exemplars.len() * dim);
        for e in &exemplars {
            points.extend_from_slice(&e.descriptor);
        }
        let index = KdTree::build(dim, points);
        StarModel {
            exemplars,
            index,
            sigma1: params.sigma1,
            sigma2: params.sigma2,
            k_f: params.k_f,
            skipped_sources,
        }
    }

    pub fn exemplars(&self) -> &[StarExemplar] {
        &self.exemplars
    }

    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }

    /// Number of exemplars that remain when one source image is excluded.
    pub fn len_excluding(&self, source: u32) -> usize {
        self.exemplars.iter().filter(|e| e.source != source).count()
    }

    /// Exact (or approximate, per `mode`) nearest exemplar to a descriptor.
    /// Ties break toward the lowest exemplar id.
    pub fn nn_query(&self, descriptor: &[f64], mode: SearchMode) -> Result<(u32, f64)> {
        self.index
            .nearest(descriptor, mode)
            .ok_or_else(|| Error::invalid("nearest-neighbor query on an empty index"))
    }

    /// Casts one vote per dense test descriptor: the nearest exemplar's
    /// offset is replayed from the descriptor center with weight
    /// `exp(-distance / sigma2)`. Votes outside bounds are discarded. The
    /// accumulated map is optionally blurred, then normalized to sum 1.
    pub fn vote(&self, img: &GrayImage, params: &StarParams) -> Result<HeatMap> {
        let grid = dense_descriptor_grid(img, params.stride, params.patch)?;
        self.vote_grid(&grid, params, None)
    }

    /// Vote with a precomputed descriptor grid, optionally excluding every
    /// exemplar from one source image (leave-one-image-out).
    pub fn vote_grid(
        &self,
        grid: &DescriptorGrid,
        params: &StarParams,
        exclude_source: Option<u32>,
    ) -> Result<HeatMap> {
        let raw = self.accumulate_votes(grid, params, exclude_source)?;
        let blurred = if params.blur_sigma > 0.0 {
            gaussian_blur_f64(grid.width, grid.height, &raw, params.blur_sigma)
        } else {
            raw
        };
        Ok(HeatMap::from_raw(grid.width, grid.height, blurred))
    }

    fn accumulate_votes(
        &self,
        grid: &DescriptorGrid,
        params: &StarParams,
        exclude_source: Option<u32>,
    ) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Err(Error::invalid("vote with an empty model"));
        }
        let mode = params.search_mode();
        let mut raw = vec![0.0f64; grid.width * grid.height];
        for d in &grid.descriptors {
            if d.values.iter().all(|v| *v == 0.0) {
                continue; // flat patch: its nearest neighbor is meaningless
            }
            let query = normalize_root_values(&d.values);
            let found = match exclude_source {
                None => self.index.nearest(&query, mode),
                Some(src) => self.index.nearest_filtered(&query, mode, |id| {
                    self.exemplars[id as usize].source != src
                }),
            };
            let Some((id, dist)) = found else { continue };
            let (dx, dy) = self.exemplars[id as usize].offset;
            let vx = d.center.0 as i64 + dx as i64;
            let vy = d.center.1 as i64 + dy as i64;
            if vx < 0 || vy < 0 || vx >= grid.width as i64 || vy >= grid.height as i64 {
                continue;
            }
            raw[vy as usize * grid.width + vx as usize] += vote_weight(dist, params.sigma2);
        }
        Ok(raw)
    }
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

pub const STAR_MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ExemplarWire {
    descriptor: String,
    dx: i32,
    dy: i32,
}

#[derive(Serialize, Deserialize)]
struct StarModelWire {
    version: u32,
    sigma1: f64,
    sigma2: f64,
    k_f: usize,
    exemplars: Vec<ExemplarWire>,
}

/// Packs an `f64` slice as base64 of little-endian `f32` values.
pub fn encode_f32_base64(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

pub fn decode_f32_base64(s: &str) -> Result<Vec<f64>> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(s)
        .map_err(|e| Error::data(format!("bad base64 payload: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::data("descriptor byte length is not a multiple of 4"));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

impl StarModel {
    pub fn to_json(&self) -> serde_json::Value {
        let wire = StarModelWire {
            version: STAR_MODEL_VERSION,
            sigma1: self.sigma1,
            sigma2: self.sigma2,
            k_f: self.k_f,
            exemplars: self
                .exemplars
                .iter()
                .map(|e| ExemplarWire {
                    descriptor: encode_f32_base64(&e.descriptor),
                    dx: e.offset.0,
                    dy: e.offset.1,
                })
                .collect(),
        };
        serde_json::to_value(wire).expect("star model serializes")
    }

    /// Restores a model from its JSON form. Descriptors cross the wire as
    /// 32-bit floats, so each one is re-normalized to restore the unit-norm
    /// invariant after quantization.
    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let wire: StarModelWire = serde_json::from_value(value.clone())?;
        if wire.version != STAR_MODEL_VERSION {
            return Err(Error::data(format!("unsupported star model version {}", wire.version)));
        }
        let mut exemplars = Vec::with_capacity(wire.exemplars.len());
        for (i, e) in wire.exemplars.iter().enumerate() {
            let mut descriptor = decode_f32_base64(&e.descriptor)?;
            if descriptor.len() != DESCRIPTOR_LEN {
                return Err(Error::data(format!(
                    "exemplar {i}: descriptor length {} != {DESCRIPTOR_LEN}",
                    descriptor.len()
                )));
            }
            let norm: f64 = descriptor.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for v in &mut descriptor {
                    *v /= norm;
                }
            }
            exemplars.push(StarExemplar { descriptor, offset: (e.dx, e.dy), source: 0 });
        }
        let params = StarParams {
            sigma1: wire.sigma1,
            sigma2: wire.sigma2,
            k_f: wire.k_f,
            ..StarParams::default()
        };
        Ok(StarModel::from_exemplars(exemplars, &params, Vec::new()))
    }
}

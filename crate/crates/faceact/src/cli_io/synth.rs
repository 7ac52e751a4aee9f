//! Synthetic dataset generator: stylized faces with pose jitter, plus a
//! bright action-object bar at a class-specific angle and distance from the
//! mouth, a far distractor bar at a random angle, and full annotations.

use super::dataset::{
    save_dataset, AnnotationRecord, Dataset, FaceAnnotation, LandmarkAnnotation,
};
use crate::error::Result;
use crate::imaging::{rasterize_polygon, GrayImage, Rect, RegionMask};
use crate::landmarks::{LandmarkSet, LANDMARK_NAMES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

#[derive(Debug, Clone, Copy)]
pub struct SynthSpec {
    pub classes: usize,
    pub per_class: usize,
    pub seed: u64,
    pub image_size: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec { classes: 4, per_class: 30, seed: 7, image_size: 160 }
    }
}

/// Declared placement band of a class's object centroid relative to the
/// mouth center: an angular sector crossed with a distance range.
#[derive(Debug, Clone, Copy)]
pub struct ClassBand {
    pub angle_center: f64,
    pub angle_halfwidth: f64,
    pub dist_range: (f64, f64),
}

pub fn class_band(spec: &SynthSpec, class_id: usize) -> ClassBand {
    ClassBand {
        angle_center: class_id as f64 * std::f64::consts::TAU / spec.classes as f64,
        angle_halfwidth: 0.13,
        dist_range: (19.0, 25.0),
    }
}

/// One generated scene with its full annotation.
#[derive(Debug, Clone)]
pub struct SynthScene {
    pub image: GrayImage,
    pub class_id: usize,
    pub person_box: Rect,
    pub face_box: Rect,
    pub face_score: f64,
    pub landmarks: LandmarkSet,
    pub object_polygon: Vec<(f64, f64)>,
}

impl SynthScene {
    /// Ground-truth object mask in source coordinates.
    pub fn object_mask(&self) -> Result<RegionMask> {
        rasterize_polygon(self.image.width(), self.image.height(), &self.object_polygon)
    }
}

fn rotated_bar(center: (f64, f64), dir: (f64, f64), from: f64, to: f64, halfwidth: f64) -> [(f64, f64); 4] {
    let n = (-dir.1, dir.0);
    let p = |t: f64, s: f64| {
        (center.0 + t * dir.0 + s * n.0, center.1 + t * dir.1 + s * n.1)
    };
    [p(from, -halfwidth), p(to, -halfwidth), p(to, halfwidth), p(from, halfwidth)]
}

fn point_in_quad(q: &[(f64, f64); 4], x: f64, y: f64) -> bool {
    // convex quad: consistent sign of cross products
    let mut sign = 0i8;
    for i in 0..4 {
        let (x1, y1) = q[i];
        let (x2, y2) = q[(i + 1) % 4];
        let cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1);
        if cross.abs() < 1e-12 {
            continue;
        }
        let s = if cross > 0.0 { 1 } else { -1 };
        if sign == 0 {
            sign = s;
        } else if s != sign {
            return false;
        }
    }
    true
}

/// Deterministically renders scene `index` of a class.
pub fn generate_scene(spec: &SynthSpec, class_id: usize, index: usize) -> SynthScene {
    let mut rng = ChaCha8Rng::seed_from_u64(
        spec.seed
            .wrapping_mul(0x9E3779B97F4A7C15)
            .wrapping_add((class_id as u64) << 32)
            .wrapping_add(index as u64),
    );
    let size = spec.image_size as f64;
    let cx = size / 2.0 + rng.gen_range(-5.0..5.0);
    let cy = size / 2.0 + rng.gen_range(-5.0..5.0);
    let r = size * 0.19 + rng.gen_range(-2.0..2.0);
    let rot: f64 = rng.gen_range(-0.12..0.12);
    let (sin, cos) = rot.sin_cos();
    let place = |ox: f64, oy: f64| -> (f64, f64) {
        (cx + ox * cos - oy * sin, cy + ox * sin + oy * cos)
    };

    let landmarks = LandmarkSet::new([
        place(-0.40 * r, -0.33 * r),
        place(0.40 * r, -0.33 * r),
        place(-0.30 * r, 0.45 * r),
        place(0.30 * r, 0.45 * r),
        place(0.0, 0.45 * r),
        place(0.0, 0.05 * r),
        place(0.0, 0.95 * r),
    ]);
    let mouth = landmarks.points[4];

    // class object: a bright bar leaving the mouth at the class angle
    let band = class_band(spec, class_id);
    let theta = band.angle_center + rng.gen_range(-0.11..0.11);
    let dir = (theta.cos(), theta.sin());
    let len = rng.gen_range(24.0..32.0);
    let halfwidth = rng.gen_range(3.0..4.0);
    let object = rotated_bar(mouth, dir, 8.0, 8.0 + len, halfwidth);

    // distractor: the same shape far from the mouth at a random angle
    let d_theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let d_dir = (d_theta.cos(), d_theta.sin());
    let d_from = rng.gen_range(52.0..62.0);
    let distractor = rotated_bar(mouth, d_dir, d_from, d_from + len, halfwidth);

    let eye_l = landmarks.points[0];
    let eye_r = landmarks.points[1];
    let nose = landmarks.points[5];
    let noise_seed: u64 = rng.gen();
    let image = GrayImage::from_fn(spec.image_size, spec.image_size, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let mut v: f64 = 0.12;
        let dx = xf - cx;
        let dy = yf - cy;
        if dx * dx + dy * dy <= r * r {
            v = 0.55;
        }
        for (ex, ey) in [eye_l, eye_r] {
            if (xf - ex).powi(2) + (yf - ey).powi(2) <= (0.11 * r).powi(2) {
                v = 0.15;
            }
        }
        if (xf - nose.0).powi(2) + (yf - nose.1).powi(2) <= (0.07 * r).powi(2) {
            v = 0.35;
        }
        // mouth: an ellipse in the rotated face frame
        let fx = (xf - mouth.0) * cos + (yf - mouth.1) * sin;
        let fy = -(xf - mouth.0) * sin + (yf - mouth.1) * cos;
        if (fx / (0.30 * r)).powi(2) + (fy / (0.10 * r)).powi(2) <= 1.0 {
            v = 0.2;
        }
        if point_in_quad(&object, xf, yf) || point_in_quad(&distractor, xf, yf) {
            v = 0.92;
        }
        // mild deterministic texture
        let h = noise_seed
            .wrapping_add((x as u64) << 20)
            .wrapping_add(y as u64)
            .wrapping_mul(0xBF58476D1CE4E5B9);
        let noise = ((h >> 40) as f64 / (1u64 << 24) as f64 - 0.5) * 0.02;
        (v + noise).clamp(0.0, 1.0) as f32
    });

    SynthScene {
        image,
        class_id,
        person_box: Rect::new(0.0, 0.0, size, size),
        face_box: Rect::new(cx - r, cy - r, 2.0 * r, 2.0 * r),
        face_score: 10.0,
        landmarks,
        object_polygon: object.to_vec(),
    }
}

pub fn class_name(class_id: usize) -> String {
    format!("class{class_id}")
}

fn scene_to_record(scene: &SynthScene, image_name: &str) -> AnnotationRecord {
    AnnotationRecord {
        image: image_name.to_string(),
        class_label: class_name(scene.class_id),
        person_box: [
            scene.person_box.x,
            scene.person_box.y,
            scene.person_box.w,
            scene.person_box.h,
        ],
        faces: vec![FaceAnnotation {
            box_: [scene.face_box.x, scene.face_box.y, scene.face_box.w, scene.face_box.h],
            score: Some(scene.face_score),
            landmarks: LANDMARK_NAMES
                .iter()
                .zip(scene.landmarks.points.iter())
                .map(|(name, (x, y))| LandmarkAnnotation {
                    name: name.to_string(),
                    x: *x,
                    y: *y,
                    dont_care: false,
                })
                .collect(),
            object_polygon: Some(scene.object_polygon.clone()),
            hand_boxes: None,
        }],
    }
}

/// Renders the whole dataset to `out_dir/images/*.png` with a
/// `manifest.jsonl`, and returns the loaded dataset.
pub fn synth_generate(spec: &SynthSpec, out_dir: impl AsRef<Path>) -> Result<Dataset> {
    let out_dir = out_dir.as_ref();
    let image_dir = out_dir.join("images");
    std::fs::create_dir_all(&image_dir)?;
    let mut records = Vec::with_capacity(spec.classes * spec.per_class);
    for class_id in 0..spec.classes {
        for index in 0..spec.per_class {
            let scene = generate_scene(spec, class_id, index);
            let name = format!("images/{}_{index:03}.png", class_name(class_id));
            scene.image.save_png(out_dir.join(&name))?;
            records.push(scene_to_record(&scene, &name));
        }
    }
    let manifest = out_dir.join("manifest.jsonl");
    save_dataset(&manifest, &records)?;
    super::dataset::load_dataset(&manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_reproducible_byte_for_byte() {
        let spec = SynthSpec { classes: 2, per_class: 2, seed: 11, image_size: 128 };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        synth_generate(&spec, d1.path()).unwrap();
        synth_generate(&spec, d2.path()).unwrap();
        for entry in walk(d1.path()) {
            let rel = entry.strip_prefix(d1.path()).unwrap();
            let a = std::fs::read(&entry).unwrap();
            let b = std::fs::read(d2.path().join(rel)).unwrap();
            assert_eq!(a, b, "file {} differs", rel.display());
        }
    }

    fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
        let mut files = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in std::fs::read_dir(d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    files.push(p);
                }
            }
        }
        files.sort();
        files
    }

    #[test]
    fn polygon_centroid_lies_in_the_declared_band() {
        let spec = SynthSpec::default();
        for class_id in 0..spec.classes {
            let band = class_band(&spec, class_id);
            for index in 0..10 {
                let scene = generate_scene(&spec, class_id, index);
                let n = scene.object_polygon.len() as f64;
                let cx = scene.object_polygon.iter().map(|p| p.0).sum::<f64>() / n;
                let cy = scene.object_polygon.iter().map(|p| p.1).sum::<f64>() / n;
                let (mx, my) = scene.landmarks.points[4];
                let dist = ((cx - mx).powi(2) + (cy - my).powi(2)).sqrt();
                assert!(
                    dist >= band.dist_range.0 && dist <= band.dist_range.1,
                    "class {class_id} scene {index}: centroid distance {dist}"
                );
                let angle = (cy - my).atan2(cx - mx);
                let delta = (angle - band.angle_center).rem_euclid(std::f64::consts::TAU);
                let delta = delta.min(std::f64::consts::TAU - delta);
                assert!(delta <= band.angle_halfwidth, "angle off by {delta}");
            }
        }
    }

    #[test]
    fn dataset_is_balanced_and_annotated() {
        let spec = SynthSpec { classes: 4, per_class: 3, seed: 3, image_size: 128 };
        let dir = tempfile::tempdir().unwrap();
        let ds = synth_generate(&spec, dir.path()).unwrap();
        assert_eq!(ds.records.len(), 12);
        for c in 0..4 {
            let n = ds.records.iter().filter(|r| r.class_label == class_name(c)).count();
            assert_eq!(n, 3);
        }
        for r in &ds.records {
            assert_eq!(r.faces.len(), 1);
            assert!(r.faces[0].object_polygon.is_some());
            assert!(ds.image_path(r).is_file());
        }
    }

    #[test]
    fn landmarks_sit_inside_the_face_box() {
        let spec = SynthSpec::default();
        for class_id in 0..spec.classes {
            for index in 0..5 {
                let scene = generate_scene(&spec, class_id, index);
                for (x, y) in scene.landmarks.points {
                    assert!(scene.face_box.contains(x, y), "landmark ({x},{y}) outside");
                }
            }
        }
    }
}

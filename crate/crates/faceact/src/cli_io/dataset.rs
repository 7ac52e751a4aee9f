//! Annotation dataset: a JSON-lines manifest with one record per image,
//! preceded by a version header line. Coordinates are source-image pixels,
//! origin top-left.

use crate::error::{Error, Result};
use crate::imaging::{GrayImage, Rect};
use crate::landmarks::{LandmarkSet, LANDMARK_NAMES, NUM_LANDMARKS};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkAnnotation {
    pub name: String,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub dont_care: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceAnnotation {
    /// `[x, y, w, h]` in source pixels.
    #[serde(rename = "box")]
    pub box_: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    /// Exactly the seven named landmarks, in the fixed order.
    pub landmarks: Vec<LandmarkAnnotation>,
    /// Absent when the action object is fully occluded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_polygon: Option<Vec<(f64, f64)>>,
    /// Stored but not consumed by the pipeline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hand_boxes: Option<Vec<[f64; 4]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image: String,
    #[serde(rename = "class")]
    pub class_label: String,
    pub person_box: [f64; 4],
    pub faces: Vec<FaceAnnotation>,
}

impl FaceAnnotation {
    pub fn rect(&self) -> Rect {
        Rect::new(self.box_[0], self.box_[1], self.box_[2], self.box_[3])
    }

    pub fn landmark_set(&self) -> LandmarkSet {
        let mut points = [(0.0, 0.0); NUM_LANDMARKS];
        let mut dont_care = [false; NUM_LANDMARKS];
        for (i, lm) in self.landmarks.iter().enumerate() {
            points[i] = (lm.x, lm.y);
            dont_care[i] = lm.dont_care;
        }
        LandmarkSet { points, dont_care }
    }
}

impl AnnotationRecord {
    pub fn person_rect(&self) -> Rect {
        Rect::new(self.person_box[0], self.person_box[1], self.person_box[2], self.person_box[3])
    }

    fn validate(&self, index: usize) -> Result<()> {
        for (fi, face) in self.faces.iter().enumerate() {
            if face.landmarks.len() != NUM_LANDMARKS {
                return Err(Error::data(format!(
                    "record {index} face {fi}: expected {NUM_LANDMARKS} landmarks, found {}",
                    face.landmarks.len()
                )));
            }
            for (li, lm) in face.landmarks.iter().enumerate() {
                if lm.name != LANDMARK_NAMES[li] {
                    return Err(Error::data(format!(
                        "record {index} face {fi}: landmark {li} named '{}', expected '{}'",
                        lm.name, LANDMARK_NAMES[li]
                    )));
                }
            }
            if let Some(poly) = &face.object_polygon {
                if poly.len() < 3 {
                    return Err(Error::data(format!(
                        "record {index} face {fi}: object polygon needs at least 3 vertices"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A loaded manifest: records plus the directory they resolve against.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub records: Vec<AnnotationRecord>,
}

impl Dataset {
    pub fn image_path(&self, record: &AnnotationRecord) -> PathBuf {
        self.root.join(&record.image)
    }

    pub fn load_image(&self, record: &AnnotationRecord) -> Result<GrayImage> {
        GrayImage::load(self.image_path(record))
    }

    /// Class labels in first-appearance order.
    pub fn class_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for r in &self.records {
            if !names.contains(&r.class_label) {
                names.push(r.class_label.clone());
            }
        }
        names
    }
}

/// Reads and validates a manifest. An empty file is an empty dataset;
/// otherwise the first line must be the version header. Image files must
/// exist next to the manifest.
pub fn load_dataset(manifest: impl AsRef<Path>) -> Result<Dataset> {
    let manifest = manifest.as_ref();
    let text = std::fs::read_to_string(manifest)
        .map_err(|e| Error::data(format!("cannot read manifest {}: {e}", manifest.display())))?;
    let root = manifest.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Ok(Dataset { root, records: Vec::new() });
    };
    let header_value: serde_json::Value = serde_json::from_str(header)
        .map_err(|e| Error::data(format!("malformed manifest header: {e}")))?;
    let version = header_value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::data("manifest header is missing a version field"))?;
    if version != MANIFEST_VERSION as u64 {
        return Err(Error::data(format!("unsupported manifest version {version}")));
    }
    let mut records = Vec::new();
    for (line_no, line) in lines {
        let record: AnnotationRecord = serde_json::from_str(line).map_err(|e| {
            Error::data(format!("record at line {}: malformed JSON: {e}", line_no + 1))
        })?;
        record.validate(records.len())?;
        let path = root.join(&record.image);
        if !path.is_file() {
            return Err(Error::data(format!(
                "record {}: image file missing: {}",
                records.len(),
                path.display()
            )));
        }
        records.push(record);
    }
    Ok(Dataset { root, records })
}

/// Writes a manifest atomically (temp file, then rename).
pub fn save_dataset(manifest: impl AsRef<Path>, records: &[AnnotationRecord]) -> Result<()> {
    let manifest = manifest.as_ref();
    let tmp = manifest.with_extension("jsonl.tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        writeln!(f, "{}", serde_json::json!({ "version": MANIFEST_VERSION }))?;
        for r in records {
            writeln!(f, "{}", serde_json::to_string(r)?)?;
        }
    }
    std::fs::rename(&tmp, manifest)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_record(image: &str) -> AnnotationRecord {
        AnnotationRecord {
            image: image.to_string(),
            class_label: "demo".into(),
            person_box: [0.0, 0.0, 160.0, 160.0],
            faces: vec![FaceAnnotation {
                box_: [50.0, 50.0, 60.0, 60.0],
                score: Some(10.0),
                landmarks: LANDMARK_NAMES
                    .iter()
                    .enumerate()
                    .map(|(i, n)| LandmarkAnnotation {
                        name: n.to_string(),
                        x: 60.0 + i as f64,
                        y: 70.0 + i as f64,
                        dont_care: i == 6,
                    })
                    .collect(),
                object_polygon: Some(vec![(80.0, 90.0), (100.0, 90.0), (100.0, 100.0)]),
                hand_boxes: None,
            }],
        }
    }

    #[test]
    fn empty_manifest_is_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        std::fs::write(&path, "").unwrap();
        let ds = load_dataset(&path).unwrap();
        assert!(ds.records.is_empty());
    }

    #[test]
    fn roundtrip_preserves_records() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::filled(160, 160, 0.5);
        img.save_png(dir.path().join("a.png")).unwrap();
        let path = dir.path().join("m.jsonl");
        let records = vec![sample_record("a.png")];
        save_dataset(&path, &records).unwrap();
        let ds = load_dataset(&path).unwrap();
        assert_eq!(ds.records, records);
    }

    #[test]
    fn six_landmarks_is_a_schema_error_naming_the_record() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::filled(8, 8, 0.5);
        img.save_png(dir.path().join("a.png")).unwrap();
        let mut rec = sample_record("a.png");
        rec.faces[0].landmarks.pop();
        let path = dir.path().join("m.jsonl");
        save_dataset(&path, &[rec]).unwrap();
        match load_dataset(&path) {
            Err(Error::Data(msg)) => assert!(msg.contains("record 0"), "{msg}"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn missing_image_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        save_dataset(&path, &[sample_record("nope.png")]).unwrap();
        match load_dataset(&path) {
            Err(Error::Data(msg)) => assert!(msg.contains("missing"), "{msg}"),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn bad_polygon_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::filled(8, 8, 0.5);
        img.save_png(dir.path().join("a.png")).unwrap();
        let mut rec = sample_record("a.png");
        rec.faces[0].object_polygon = Some(vec![(0.0, 0.0), (1.0, 1.0)]);
        let path = dir.path().join("m.jsonl");
        save_dataset(&path, &[rec]).unwrap();
        assert!(load_dataset(&path).is_err());
    }
}

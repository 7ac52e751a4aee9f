//! Command implementations behind the `faceact` binary. Each command is a
//! plain function over paths and options so it can be driven from tests as
//! well as from the CLI.

use super::dataset::{load_dataset, Dataset};
use super::eval::{build_report, EvalReport, RankedScore};
use super::overlay::{emit_heatmap, emit_overlay};
use super::synth::{synth_generate, SynthSpec};
use crate::error::Error;
use crate::imaging::{GrayImage, Rect};
use crate::landmarks::{normalize_face_crop, LandmarkSet, LANDMARK_NAMES};
use crate::learning::{train_bundle, TrainedBundle, TrainingConfig, TrainingSample};
use crate::pipeline::{classify, explain, FaceDetection, PipelineBundle};
use crate::regions::{BaselineAppearance, BaselineSegmenter};
use crate::interaction::BaselineSaliency;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

/// Failure classes mapped to process exit codes: usage 1, data 2,
/// internal 3.
#[derive(Debug)]
pub enum CommandError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Usage(_) => 1,
            CommandError::Data(_) => 2,
            CommandError::Internal(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CommandError::Usage(m) | CommandError::Data(m) | CommandError::Internal(m) => m,
        }
    }
}

impl From<Error> for CommandError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Json(_) | Error::Data(_) | Error::Image(_) | Error::InvalidInput(_) => {
                CommandError::Data(e.to_string())
            }
            Error::Training(_) | Error::Plugin { .. } | Error::EmptySample => {
                CommandError::Internal(e.to_string())
            }
        }
    }
}

pub type CmdResult<T = ()> = std::result::Result<T, CommandError>;

pub const SCORES_VERSION: u32 = 1;

/// Generates a synthetic dataset.
pub fn cmd_synth(classes: usize, per_class: usize, seed: u64, size: usize, out: &Path) -> CmdResult {
    if classes == 0 || per_class == 0 {
        return Err(CommandError::Usage("classes and per-class must be positive".into()));
    }
    let spec = SynthSpec { classes, per_class, seed, image_size: size };
    let ds = synth_generate(&spec, out)?;
    println!(
        "wrote {} images and {} to {}",
        ds.records.len(),
        "manifest.jsonl",
        out.display()
    );
    Ok(())
}

fn dataset_to_samples<'a>(
    ds: &Dataset,
    images: &'a [GrayImage],
    classes: &[String],
) -> CmdResult<Vec<TrainingSample<'a>>> {
    let mut samples = Vec::with_capacity(ds.records.len());
    for (i, r) in ds.records.iter().enumerate() {
        let face = r
            .faces
            .first()
            .ok_or_else(|| CommandError::Data(format!("record {i} has no face annotation")))?;
        let class_id = classes
            .iter()
            .position(|c| *c == r.class_label)
            .ok_or_else(|| CommandError::Data(format!("record {i}: unknown class")))?;
        samples.push(TrainingSample {
            image: &images[i],
            face_box: face.rect(),
            face_score: face.score.unwrap_or(f64::INFINITY),
            landmarks: face.landmark_set(),
            class_id,
            object_polygon: face.object_polygon.clone(),
        });
    }
    Ok(samples)
}

/// Trains a bundle from an annotated manifest.
pub fn cmd_train(manifest: &Path, out: &Path, config_path: Option<&Path>, seed: Option<u64>) -> CmdResult {
    let mut config = match config_path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CommandError::Data(format!("cannot read config: {e}")))?;
            serde_json::from_str::<TrainingConfig>(&text)
                .map_err(|e| CommandError::Data(format!("bad config: {e}")))?
        }
        None => TrainingConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    let ds = load_dataset(manifest)?;
    if ds.records.is_empty() {
        return Err(CommandError::Data("manifest has no records".into()));
    }
    let classes = ds.class_names();
    let images: Vec<GrayImage> = ds
        .records
        .iter()
        .map(|r| ds.load_image(r))
        .collect::<crate::error::Result<_>>()?;
    let samples = dataset_to_samples(&ds, &images, &classes)?;
    let bundle = train_bundle(
        &samples,
        classes,
        &BaselineSegmenter::default(),
        &BaselineSaliency,
        &BaselineAppearance,
        &config,
    )?;
    bundle.save(out)?;
    println!("trained {} classes -> {}", bundle.classes.len(), out.display());
    Ok(())
}

#[derive(Serialize, Deserialize)]
pub struct LandmarkDump {
    pub image_id: usize,
    pub face_box: [f64; 4],
    /// Detected landmark positions in source coordinates; absent for
    /// non-class images.
    pub landmarks: Option<Vec<(f64, f64)>>,
}

/// Scores every manifest image against every class, writing a CSV and an
/// optional sidecar of detected landmarks.
pub fn cmd_predict(
    bundle_path: &Path,
    manifest: &Path,
    out_scores: &Path,
    dump_landmarks: Option<&Path>,
) -> CmdResult {
    let trained = TrainedBundle::load(bundle_path)?;
    let pipeline = PipelineBundle::with_defaults(trained);
    let ds = load_dataset(manifest)?;
    let seed = pipeline.trained.config.seed;

    let mut csv = String::new();
    csv.push_str(&format!("version,{SCORES_VERSION}\n"));
    csv.push_str("image_id,class,score\n");
    let mut dumps: Vec<LandmarkDump> = Vec::new();
    for (i, record) in ds.records.iter().enumerate() {
        let image = ds.load_image(record)?;
        let face = record
            .faces
            .first()
            .ok_or_else(|| CommandError::Data(format!("record {i} has no face annotation")))?;
        let over = FaceDetection {
            box_: face.rect(),
            score: face.score.unwrap_or(f64::INFINITY),
        };
        let result = classify(&pipeline, &image, &record.person_rect(), Some(over), seed)?;
        for s in &result.scores {
            csv.push_str(&format!("{i},{},{}\n", s.class, s.total));
        }
        if dump_landmarks.is_some() {
            let landmarks = result.face.as_ref().filter(|_| !result.non_class).map(|f| {
                f.landmarks
                    .points
                    .iter()
                    .map(|(x, y)| f.crop_transform.apply(*x, *y))
                    .collect()
            });
            dumps.push(LandmarkDump { image_id: i, face_box: face.box_, landmarks });
        }
    }
    write_atomic(out_scores, csv.as_bytes())?;
    if let Some(path) = dump_landmarks {
        let mut text = format!("{}\n", serde_json::json!({ "version": 1 }));
        for d in &dumps {
            text.push_str(&serde_json::to_string(d).map_err(Error::from)?);
            text.push('\n');
        }
        write_atomic(path, text.as_bytes())?;
    }
    println!("scored {} images -> {}", ds.records.len(), out_scores.display());
    Ok(())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> CmdResult {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(Error::from)?;
    std::fs::rename(&tmp, path).map_err(Error::from)?;
    Ok(())
}

fn parse_scores(path: &Path) -> CmdResult<HashMap<(usize, String), f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CommandError::Data(format!("cannot read scores: {e}")))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(l) if l.trim() == format!("version,{SCORES_VERSION}") => {}
        other => {
            return Err(CommandError::Data(format!(
                "scores file must start with 'version,{SCORES_VERSION}', found {other:?}"
            )))
        }
    }
    match lines.next() {
        Some("image_id,class,score") => {}
        other => {
            return Err(CommandError::Data(format!("unexpected scores header {other:?}")))
        }
    }
    let mut out = HashMap::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.splitn(3, ',').collect();
        if parts.len() != 3 {
            return Err(CommandError::Data(format!("scores line {}: expected 3 fields", n + 3)));
        }
        let id: usize = parts[0]
            .parse()
            .map_err(|_| CommandError::Data(format!("scores line {}: bad image id", n + 3)))?;
        let score: f64 = parts[2]
            .parse()
            .map_err(|_| CommandError::Data(format!("scores line {}: bad score", n + 3)))?;
        out.insert((id, parts[1].to_string()), score);
    }
    Ok(out)
}

fn load_landmark_dumps(path: &Path) -> CmdResult<Vec<LandmarkDump>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CommandError::Data(format!("cannot read landmarks: {e}")))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || i == 0 {
            continue; // version header
        }
        out.push(
            serde_json::from_str(line)
                .map_err(|e| CommandError::Data(format!("landmarks line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

/// Evaluates a scores file against manifest labels; optionally also scores
/// predicted landmarks against the annotated ones.
pub fn cmd_eval(
    scores_path: &Path,
    manifest: &Path,
    landmarks_path: Option<&Path>,
    out: &Path,
) -> CmdResult<EvalReport> {
    let ds = load_dataset(manifest)?;
    if ds.records.is_empty() {
        return Err(CommandError::Data("manifest has no records".into()));
    }
    let scores = parse_scores(scores_path)?;
    let classes = ds.class_names();
    let mut per_class = Vec::new();
    for class in &classes {
        let mut ranked = Vec::with_capacity(ds.records.len());
        for (i, record) in ds.records.iter().enumerate() {
            let score = *scores.get(&(i, class.clone())).ok_or_else(|| {
                CommandError::Data(format!("missing score for image {i}, class {class}"))
            })?;
            ranked.push(RankedScore {
                image_id: i,
                score,
                positive: record.class_label == *class,
            });
        }
        per_class.push((class.clone(), ranked));
    }

    let landmark_errors: Option<Vec<f64>> = match landmarks_path {
        Some(path) => {
            let dumps = load_landmark_dumps(path)?;
            let mut errors = Vec::new();
            for d in dumps {
                let Some(pred) = d.landmarks else { continue };
                let record = ds.records.get(d.image_id).ok_or_else(|| {
                    CommandError::Data(format!("landmark dump references image {}", d.image_id))
                })?;
                let face = &record.faces[0];
                let gt = face.landmark_set();
                let size = (face.box_[2] * face.box_[3]).sqrt();
                errors.push(mean_landmark_error(&pred, &gt, size));
            }
            Some(errors)
        }
        None => None,
    };

    let report = build_report(per_class, landmark_errors.as_deref())?;
    write_atomic(out, serde_json::to_string_pretty(&report).map_err(Error::from)?.as_bytes())?;
    for c in &report.per_class {
        println!("AP[{}] = {:.4}", c.class, c.average_precision);
    }
    println!("mean AP = {:.4}", report.mean_ap);
    Ok(report)
}

/// Mean distance between predictions and non-don't-care ground-truth
/// landmarks, normalized by the face size.
pub fn mean_landmark_error(pred: &[(f64, f64)], gt: &LandmarkSet, face_size: f64) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, (gx, gy)) in gt.points.iter().enumerate() {
        if gt.dont_care[i] || i >= pred.len() {
            continue;
        }
        let (px, py) = pred[i];
        total += ((px - gx).powi(2) + (py - gy).powi(2)).sqrt();
        count += 1;
    }
    if count == 0 {
        return 0.0;
    }
    total / (count as f64 * face_size.max(1e-9))
}

/// Detects landmarks on one face and writes them as JSON, with an optional
/// overlay image.
pub fn cmd_landmarks(
    bundle_path: &Path,
    image_path: &Path,
    face_box: Rect,
    out_json: &Path,
    out_overlay: Option<&Path>,
) -> CmdResult {
    let trained = TrainedBundle::load(bundle_path)?;
    let image = GrayImage::load(image_path)?;
    let (crop, to_source) = normalize_face_crop(&image, &face_box)?;
    let detected = crate::landmarks::detect_landmarks(
        &trained.corpus,
        &crop,
        trained.config.knn_k,
        trained.config.seed,
    )?;
    let source_points: Vec<(f64, f64)> =
        detected.points.iter().map(|(x, y)| to_source.apply(*x, *y)).collect();
    let json = serde_json::json!({
        "version": 1,
        "face_box": [face_box.x, face_box.y, face_box.w, face_box.h],
        "landmarks": LANDMARK_NAMES
            .iter()
            .zip(&source_points)
            .map(|(name, (x, y))| serde_json::json!({ "name": name, "x": x, "y": y }))
            .collect::<Vec<_>>(),
    });
    write_atomic(out_json, serde_json::to_string_pretty(&json).map_err(Error::from)?.as_bytes())?;
    if let Some(path) = out_overlay {
        let overlay = crate::pipeline::OverlaySpec {
            landmarks: source_points,
            face_box: Some(face_box),
            ..Default::default()
        };
        emit_overlay(&image, &overlay, path)?;
    }
    println!("landmarks -> {}", out_json.display());
    Ok(())
}

/// Classifies one image and writes the explanation overlay for the chosen
/// (or best-scoring) class. Also emits the location prior as a heat map
/// when requested.
#[allow(clippy::too_many_arguments)]
pub fn cmd_explain(
    bundle_path: &Path,
    image_path: &Path,
    face_box: Rect,
    face_score: f64,
    class: Option<&str>,
    out: &Path,
    out_heatmap: Option<&Path>,
) -> CmdResult {
    let trained = TrainedBundle::load(bundle_path)?;
    let pipeline = PipelineBundle::with_defaults(trained);
    let image = GrayImage::load(image_path)?;
    let person = Rect::new(0.0, 0.0, image.width() as f64, image.height() as f64);
    let over = FaceDetection { box_: face_box, score: face_score };
    let seed = pipeline.trained.config.seed;
    let result = classify(&pipeline, &image, &person, Some(over), seed)?;
    let class_idx = match class {
        Some(name) => pipeline
            .classes()
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| CommandError::Usage(format!("unknown class '{name}'")))?,
        None => {
            let mut best = 0;
            for (i, s) in result.scores.iter().enumerate() {
                if s.total > result.scores[best].total {
                    best = i;
                }
            }
            best
        }
    };
    let overlay = explain(&result, class_idx);
    emit_overlay(&image, &overlay, out)?;
    if let Some(path) = out_heatmap {
        let (crop, _) = normalize_face_crop(&image, &face_box)?;
        let map = pipeline.trained.star_model.vote(&crop, &pipeline.trained.config.star)?;
        emit_heatmap(&map, path)?;
    }
    println!(
        "class {} (S = {:.4}) -> {}",
        result.scores[class_idx].class,
        result.scores[class_idx].total,
        out.display()
    );
    Ok(())
}

/// Parses `x,y,w,h` into a rectangle.
pub fn parse_rect(s: &str) -> std::result::Result<Rect, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 4 {
        return Err("expected x,y,w,h".into());
    }
    let vals: std::result::Result<Vec<f64>, _> = parts.iter().map(|p| p.trim().parse()).collect();
    let vals = vals.map_err(|e| format!("bad number: {e}"))?;
    Ok(Rect::new(vals[0], vals[1], vals[2], vals[3]))
}

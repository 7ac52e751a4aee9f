//! Dataset schema, evaluation, synthetic data generation, overlay rendering
//! and the CLI command layer.

pub mod commands;
mod dataset;
mod eval;
mod overlay;
mod synth;

pub use commands::{
    cmd_eval, cmd_explain, cmd_landmarks, cmd_predict, cmd_synth, cmd_train, mean_landmark_error,
    parse_rect, CmdResult, CommandError, LandmarkDump, SCORES_VERSION,
};
pub use dataset::{
    load_dataset, save_dataset, AnnotationRecord, Dataset, FaceAnnotation, LandmarkAnnotation,
    MANIFEST_VERSION,
};
pub use eval::{
    average_precision, build_report, curve_fraction, landmark_error_curve, ClassEval, EvalReport,
    RankedScore, REPORT_VERSION,
};
pub use overlay::{emit_heatmap, emit_overlay};
pub use synth::{class_band, class_name, generate_scene, synth_generate, ClassBand, SynthScene, SynthSpec};

//! End-to-end smoke tests of the `faceact` binary: the full
//! synth -> train -> predict -> eval path, the overlay commands, and the
//! exit-code contract.

use std::process::Command;

fn faceact() -> Command {
    Command::new(env!("CARGO_BIN_EXE_faceact"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawn faceact");
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).to_string()
}

#[test]
fn synth_train_predict_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let bundle = dir.path().join("bundle.json");
    let scores = dir.path().join("scores.csv");
    let report = dir.path().join("report.json");
    let dumps = dir.path().join("landmarks.jsonl");

    run_ok(faceact()
        .args(["synth", "--classes", "2", "--per-class", "3", "--seed", "9"])
        .arg("--out")
        .arg(&data));
    let manifest = data.join("manifest.jsonl");
    assert!(manifest.is_file());

    run_ok(faceact()
        .arg("train")
        .arg("--manifest")
        .arg(&manifest)
        .arg("--out")
        .arg(&bundle));
    assert!(bundle.is_file());

    run_ok(faceact()
        .arg("predict")
        .arg("--bundle")
        .arg(&bundle)
        .arg("--manifest")
        .arg(&manifest)
        .arg("--out")
        .arg(&scores)
        .arg("--dump-landmarks")
        .arg(&dumps));
    let csv = std::fs::read_to_string(&scores).unwrap();
    assert!(csv.starts_with("version,1\nimage_id,class,score\n"));
    // 6 images x 2 classes
    assert_eq!(csv.lines().count(), 2 + 12);

    let stdout = run_ok(faceact()
        .arg("eval")
        .arg("--scores")
        .arg(&scores)
        .arg("--manifest")
        .arg(&manifest)
        .arg("--landmarks")
        .arg(&dumps)
        .arg("--out")
        .arg(&report));
    assert!(stdout.contains("mean AP"), "missing mean AP in: {stdout}");
    let report_json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(report_json["version"], 1);
    assert!(report_json["mean_ap"].as_f64().unwrap() > 0.0);
    assert!(!report_json["landmark_curve"].as_array().unwrap().is_empty());

    // determinism: predicting twice yields identical scores
    let scores2 = dir.path().join("scores2.csv");
    run_ok(faceact()
        .arg("predict")
        .arg("--bundle")
        .arg(&bundle)
        .arg("--manifest")
        .arg(&manifest)
        .arg("--out")
        .arg(&scores2));
    assert_eq!(csv, std::fs::read_to_string(&scores2).unwrap());

    // landmarks + explain on one of the generated images
    let manifest_text = std::fs::read_to_string(&manifest).unwrap();
    let first_record: serde_json::Value =
        serde_json::from_str(manifest_text.lines().nth(1).unwrap()).unwrap();
    let image_rel = first_record["image"].as_str().unwrap();
    let fb = &first_record["faces"][0]["box"];
    let face_box = format!(
        "{},{},{},{}",
        fb[0].as_f64().unwrap(),
        fb[1].as_f64().unwrap(),
        fb[2].as_f64().unwrap(),
        fb[3].as_f64().unwrap()
    );
    let image_path = data.join(image_rel);
    let lm_json = dir.path().join("lm.json");
    let lm_png = dir.path().join("lm.png");
    run_ok(faceact()
        .arg("landmarks")
        .arg("--bundle")
        .arg(&bundle)
        .arg("--image")
        .arg(&image_path)
        .args(["--face-box", &face_box])
        .arg("--out-json")
        .arg(&lm_json)
        .arg("--out-overlay")
        .arg(&lm_png));
    assert!(lm_json.is_file() && lm_png.is_file());
    let lm: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&lm_json).unwrap()).unwrap();
    assert_eq!(lm["landmarks"].as_array().unwrap().len(), 7);

    let overlay = dir.path().join("explain.png");
    let heat = dir.path().join("heat.png");
    run_ok(faceact()
        .arg("explain")
        .arg("--bundle")
        .arg(&bundle)
        .arg("--image")
        .arg(&image_path)
        .args(["--face-box", &face_box])
        .arg("--out")
        .arg(&overlay)
        .arg("--out-heatmap")
        .arg(&heat));
    assert!(overlay.is_file() && heat.is_file());
}

#[test]
fn missing_bundle_exits_with_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    run_ok(faceact()
        .args(["synth", "--classes", "2", "--per-class", "1", "--seed", "1"])
        .arg("--out")
        .arg(&data));
    let out = faceact()
        .arg("predict")
        .arg("--bundle")
        .arg(dir.path().join("missing.json"))
        .arg("--manifest")
        .arg(data.join("manifest.jsonl"))
        .arg("--out")
        .arg(dir.path().join("s.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn usage_errors_exit_with_one() {
    let out = faceact().arg("predict").output().unwrap(); // missing required args
    assert_eq!(out.status.code(), Some(1));
    let out = faceact().arg("no-such-command").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn malformed_manifest_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("bad.jsonl");
    std::fs::write(&manifest, "{\"version\":1}\n{not json}\n").unwrap();
    let out = faceact()
        .arg("train")
        .arg("--manifest")
        .arg(&manifest)
        .arg("--out")
        .arg(dir.path().join("b.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_is_not_an_error() {
    let out = faceact().arg("--help").output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("synth"));
}

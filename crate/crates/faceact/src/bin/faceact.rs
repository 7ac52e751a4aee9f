use clap::{Parser, Subcommand};
use faceact::cli_io::{
    cmd_eval, cmd_explain, cmd_landmarks, cmd_predict, cmd_synth, cmd_train, parse_rect,
    CommandError,
};
use faceact::imaging::Rect;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "faceact", version, about = "Face-related action recognition in still images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic annotated dataset
    Synth {
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long = "per-class", default_value_t = 30)]
        per_class: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 160)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train all models from an annotated manifest
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score every manifest image against every class
    Predict {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write detected landmarks as JSON lines
        #[arg(long = "dump-landmarks")]
        dump_landmarks: Option<PathBuf>,
    },
    /// Detect facial landmarks on one face
    Landmarks {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Face box as x,y,w,h in image pixels
        #[arg(long = "face-box", value_parser = parse_rect)]
        face_box: Rect,
        #[arg(long = "out-json")]
        out_json: PathBuf,
        #[arg(long = "out-overlay")]
        out_overlay: Option<PathBuf>,
    },
    /// Compute average precision (and landmark errors) from scores
    Eval {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        landmarks: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify one image and render the best-region overlay
    Explain {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Face box as x,y,w,h in image pixels
        #[arg(long = "face-box", value_parser = parse_rect)]
        face_box: Rect,
        #[arg(long = "face-score", default_value_t = 10.0)]
        face_score: f64,
        #[arg(long)]
        class: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "out-heatmap")]
        out_heatmap: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CommandError> {
    match cli.command {
        Command::Synth { classes, per_class, seed, size, out } => {
            cmd_synth(classes, per_class, seed, size, &out)
        }
        Command::Train { manifest, out, config, seed } => {
            cmd_train(&manifest, &out, config.as_deref(), seed)
        }
        Command::Predict { bundle, manifest, out, dump_landmarks } => {
            cmd_predict(&bundle, &manifest, &out, dump_landmarks.as_deref())
        }
        Command::Landmarks { bundle, image, face_box, out_json, out_overlay } => {
            cmd_landmarks(&bundle, &image, face_box, &out_json, out_overlay.as_deref())
        }
        Command::Eval { scores, manifest, landmarks, out } => {
            cmd_eval(&scores, &manifest, landmarks.as_deref(), &out).map(|_| ())
        }
        Command::Explain { bundle, image, face_box, face_score, class, out, out_heatmap } => {
            cmd_explain(
                &bundle,
                &image,
                face_box,
                face_score,
                class.as_deref(),
                &out,
                out_heatmap.as_deref(),
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not usage errors
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! `symh`: synthesize datasets, train, infer, evaluate and export meshes.
//!
//! Exit codes: 0 success, 2 I/O or missing input, 3 validation failure,
//! 4 numeric failure.

mod commands;
mod settings;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use settings::Settings;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn io(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self { code: 4, message: message.into() }
    }
}

impl From<symh::Error> for Failure {
    fn from(e: symh::Error) -> Self {
        use symh::Error as E;
        let code = match &e {
            E::Io { .. } | E::Json { .. } => 2,
            E::NonFinite { .. } | E::Diverged { .. } => 4,
            _ => 3,
        };
        Self { code, message: e.to_string() }
    }
}

#[derive(Parser, Debug)]
#[command(name = "symh", version, about = "Recover symmetry hierarchies of aircraft from 2D keypoints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// `key = value` file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Worker threads for per-sample work (0: all cores).
    #[arg(long)]
    threads: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a procedural dataset with train/val/test splits.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        count: Option<String>,
    },
    /// Train the network on a dataset directory.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<String>,
        #[arg(long)]
        epochs: Option<String>,
        #[arg(long)]
        lr: Option<String>,
        #[arg(long)]
        batch_size: Option<String>,
        /// Keypoint jitter used as training augmentation.
        #[arg(long)]
        noise_sigma: Option<String>,
        /// Engine keypoint drop probability used as training augmentation.
        #[arg(long)]
        engine_drop: Option<String>,
        /// Voxel resolution of the per-epoch validation IoU.
        #[arg(long)]
        resolution: Option<String>,
        /// Continue from a saved training state.
        #[arg(long)]
        resume: Option<String>,
    },
    /// Decode trees from keypoints with a trained checkpoint.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<String>,
        /// A single keypoints.json file.
        #[arg(long, conflicts_with = "data")]
        keypoints: Option<String>,
        /// A dataset directory; predictions mirror its layout.
        #[arg(long)]
        data: Option<String>,
        /// train, val, test or all.
        #[arg(long)]
        split: Option<String>,
        /// Apply rule-based refinement and write report.json.
        #[arg(long)]
        refine: bool,
        /// Where to write the refinement report of a single-file run
        /// (default: report.json in the output directory).
        #[arg(long, requires = "refine")]
        report: Option<String>,
        #[arg(long)]
        noise_sigma: Option<String>,
        #[arg(long)]
        engine_drop: Option<String>,
    },
    /// Compare predicted trees against ground truth.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pred: Option<String>,
        #[arg(long)]
        gt: Option<String>,
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        resolution: Option<String>,
    },
    /// Write the flattened boxes of a tree file as an OBJ mesh.
    ExportObj {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tree: Option<String>,
    },
    /// Re-run a command from its config-echo file.
    Replay { echo: PathBuf },
}

fn put(map: &mut BTreeMap<String, String>, key: &str, value: Option<String>) {
    if let Some(v) = value {
        map.insert(key.to_string(), v);
    }
}

fn common_flags(c: Common) -> (Option<PathBuf>, BTreeMap<String, String>) {
    let mut m = BTreeMap::new();
    put(&mut m, "out", c.out);
    put(&mut m, "seed", c.seed);
    put(&mut m, "threads", c.threads);
    (c.config, m)
}

fn settings(command: Command) -> Result<Settings, Failure> {
    let (name, (config, mut m)) = match command {
        Command::Synth { common, count } => {
            let mut c = common_flags(common);
            put(&mut c.1, "count", count);
            ("synth", c)
        }
        Command::Train { common, data, epochs, lr, batch_size, noise_sigma, engine_drop, resolution, resume } => {
            let mut c = common_flags(common);
            for (k, v) in [
                ("data", data),
                ("epochs", epochs),
                ("lr", lr),
                ("batch-size", batch_size),
                ("noise-sigma", noise_sigma),
                ("engine-drop", engine_drop),
                ("resolution", resolution),
                ("resume", resume),
            ] {
                put(&mut c.1, k, v);
            }
            ("train", c)
        }
        Command::Infer { common, checkpoint, keypoints, data, split, refine, report, noise_sigma, engine_drop } => {
            let mut c = common_flags(common);
            for (k, v) in [
                ("checkpoint", checkpoint),
                ("keypoints", keypoints),
                ("data", data),
                ("split", split),
                ("report", report),
                ("noise-sigma", noise_sigma),
                ("engine-drop", engine_drop),
            ] {
                put(&mut c.1, k, v);
            }
            if refine {
                c.1.insert("refine".into(), "true".into());
            }
            ("infer", c)
        }
        Command::Eval { common, pred, gt, split, resolution } => {
            let mut c = common_flags(common);
            for (k, v) in [("pred", pred), ("gt", gt), ("split", split), ("resolution", resolution)] {
                put(&mut c.1, k, v);
            }
            ("eval", c)
        }
        Command::ExportObj { common, tree } => {
            let mut c = common_flags(common);
            put(&mut c.1, "tree", tree);
            ("export-obj", c)
        }
        Command::Replay { echo } => {
            let name = settings::recorded_command(&echo)?;
            let s = Settings::resolve(&name, Some(&echo), BTreeMap::new())?;
            return Ok(s);
        }
    };
    if name == "export-obj" {
        // Boxes are exported as stored; seed and threads play no role.
        m.remove("seed");
        m.remove("threads");
    }
    Settings::resolve(name, config.as_deref(), m)
}

fn run(command: Command) -> Result<(), Failure> {
    let s = settings(command)?;
    if s.get("threads").is_some() {
        let n: usize = s.parse("threads")?;
        // Only the first initialization in a process takes effect.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match s.command.as_str() {
        "synth" => commands::synth(&s),
        "train" => commands::train(&s),
        "infer" => commands::infer(&s),
        "eval" => commands::eval(&s),
        "export-obj" => commands::export_obj(&s),
        other => Err(Failure::validation(format!("unknown command {other}"))),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

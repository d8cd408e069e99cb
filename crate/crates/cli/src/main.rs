use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use pixels2pose::config::PipelineConfig;
use pixels2pose::networks::{save_model, Kind, StoredModel};
use pixels2pose::pipeline::{
    bench, evaluate, infer, load_network, predictions_to_jsonl, quantize_file, read_predictions,
    select, synth, train_depth, train_pose, write_text, Pipeline, Split, Stage,
};
use pixels2pose::scene::dataset::read_dataset;
use pixels2pose::{Error, Result};

#[derive(Parser)]
#[command(
    name = "p2p",
    version,
    about = "Multi-person 3D pose from 4x4 time-of-flight histograms"
)]
struct Cli {
    /// TOML configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 is the reproducibility reference.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        persons: Option<usize>,
    },
    /// Train Pixels2Depth (`depth`) or Depth2Pose (`pose`).
    Train {
        network: Stage,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Pose training only: learn on this depth model's predictions instead of labels.
        #[arg(long)]
        depth_model: Option<PathBuf>,
    },
    /// Run both networks and the decoder, writing one pose record per frame.
    Infer {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        depth_model: Option<PathBuf>,
        #[arg(long)]
        pose_model: Option<PathBuf>,
        #[arg(long, default_value = "validation")]
        split: Split,
    },
    /// Score pose records against the dataset's ground truth.
    Eval {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Convert a float model file to int8 weights.
    Quantize {
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Time the three pipeline stages.
    Bench {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        depth_model: Option<PathBuf>,
        #[arg(long)]
        pose_model: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// Print the reference configuration with every default.
    Config,
}

fn or_default(p: Option<PathBuf>, out: &Path, name: &str) -> PathBuf {
    p.unwrap_or_else(|| out.join(name))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let threads = cli.threads.unwrap_or(1);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let out = cli.out.as_path();
    if !matches!(cli.command, Command::Config) {
        std::fs::create_dir_all(out).map_err(|e| Error::file(out, e))?;
    }
    let paths = cfg.paths.clone();
    match cli.command {
        Command::Config => print!("{}", PipelineConfig::reference()),
        Command::Synth { frames, persons } => {
            let n = frames.unwrap_or(cfg.data.train_frames + cfg.data.validation_frames);
            let persons = persons.unwrap_or(cfg.data.persons);
            let path = out.join(&paths.dataset);
            let s = synth(&cfg, n, persons, &path)?;
            println!(
                "wrote {} frames to {} ({:.1} frames/s)",
                s.frames,
                path.display(),
                s.fps()
            );
        }
        Command::Train {
            network,
            dataset,
            depth_model,
        } => {
            let ds = read_dataset(&or_default(dataset, out, &paths.dataset))?;
            let start = Instant::now();
            let progress = |e: &pixels2pose::networks::EpochLog| {
                eprintln!("epoch {e}  ({:.0} s)", start.elapsed().as_secs_f64())
            };
            let (model, report, name) = match network {
                Stage::Depth => {
                    if depth_model.is_some() {
                        return Err(Error::Config(
                            "--depth-model applies to pose training".into(),
                        ));
                    }
                    let (m, r) = train_depth(&cfg, &ds, progress)?;
                    (m, r, &paths.depth_model)
                }
                Stage::Pose => {
                    let depth = depth_model
                        .map(|p| load_network(&p, Kind::Pixels2Depth))
                        .transpose()?;
                    let (m, r) = train_pose(&cfg, &ds, depth.as_ref(), progress)?;
                    (m, r, &paths.pose_model)
                }
            };
            let path = out.join(name);
            println!("{} parameters", model.parameter_count());
            save_model(&StoredModel::Float(model), &path)?;
            let log = path.with_extension("loss.txt");
            write_text(&log, &report.log_text())?;
            println!(
                "best epoch {}; wrote {} and {}",
                report.best_epoch,
                path.display(),
                log.display()
            );
        }
        Command::Infer {
            dataset,
            depth_model,
            pose_model,
            split,
        } => {
            let ds = read_dataset(&or_default(dataset, out, &paths.dataset))?;
            let pipeline = Pipeline::load(
                &cfg,
                &or_default(depth_model, out, &paths.depth_model),
                &or_default(pose_model, out, &paths.pose_model),
            )?;
            let frames = select(&ds, split);
            let (poses, times) = infer(&pipeline, &frames)?;
            let path = out.join(&paths.predictions);
            write_text(&path, &predictions_to_jsonl(&poses))?;
            println!(
                "{} frames in {:.2} s ({:.1} fps); wrote {}",
                poses.len(),
                times.total(),
                poses.len() as f64 / times.total().max(1e-9),
                path.display()
            );
        }
        Command::Eval {
            predictions,
            dataset,
        } => {
            let ds = read_dataset(&or_default(dataset, out, &paths.dataset))?;
            let pred = read_predictions(&or_default(predictions, out, &paths.predictions))?;
            let report = evaluate(&pred, &ds)?;
            let table = report.to_table();
            let path = out.join(&paths.report);
            write_text(&path, &table)?;
            write_text(&path.with_extension("jsonl"), &report.to_json_lines())?;
            print!("{table}");
        }
        Command::Quantize { input, output } => {
            let output = output.unwrap_or_else(|| {
                let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned());
                out.join(format!(
                    "{}.q8.p2pw",
                    stem.unwrap_or_else(|| "model".into())
                ))
            });
            let s = quantize_file(&input, &output)?;
            println!(
                "{} bytes -> {} bytes ({:.1}%); wrote {}",
                s.float_bytes,
                s.quantized_bytes,
                100.0 * s.ratio(),
                output.display()
            );
        }
        Command::Bench {
            dataset,
            depth_model,
            pose_model,
            frames,
            repeats,
        } => {
            let ds = read_dataset(&or_default(dataset, out, &paths.dataset))?;
            let pipeline = Pipeline::load(
                &cfg,
                &or_default(depth_model, out, &paths.depth_model),
                &or_default(pose_model, out, &paths.pose_model),
            )?;
            let all = select(&ds, Split::All);
            print!(
                "{}",
                bench(&pipeline, &all, frames, repeats, threads)?.to_text()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

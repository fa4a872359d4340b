use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use speedcam::dataset::EpisodeMeta;
use speedcam::evaluation::Grouping;
use speedcam::models::ModelKind;
use speedcam::pipeline::{
    latest_checkpoint, stage_evaluate, stage_generate, stage_preview, stage_report, stage_split, stage_train, RunConfig,
};

/// Synthetic vehicle speed estimation pipeline:
/// generate -> split -> train -> evaluate -> report.
///
/// Settings are resolved as built-in defaults, then the `--config` file,
/// then command-line flags.
#[derive(Parser, Debug)]
#[command(name = "speedcam", version)]
struct Cli {
    /// JSON run configuration; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for generation, splitting, initialization and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for splits, training runs and reports.
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    /// Dataset root directory.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a procedural dataset.
    Generate(GenerateArgs),
    /// Write the train/val/test split for the dataset.
    Split,
    /// Train a model on the split.
    Train(TrainArgs),
    /// Score a checkpoint on the test split and write its report.
    Evaluate(EvaluateArgs),
    /// Compare evaluated checkpoints side by side.
    Report(ReportArgs),
    /// Render one episode's frames for visual inspection.
    Preview(PreviewArgs),
}

#[derive(Args, Debug)]
struct RigArgs {
    /// Frame size as WIDTHxHEIGHT, e.g. 96x54.
    #[arg(long, value_parser = parse_resolution)]
    resolution: Option<(u32, u32)>,
    #[arg(long)]
    fps: Option<f64>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Number of episodes to render.
    #[arg(long)]
    episodes: Option<usize>,
    #[command(flatten)]
    rig: RigArgs,
    /// Length of the traversed road segment in meters.
    #[arg(long)]
    segment_length: Option<f64>,
    /// Keep rendering empty road until the sampling horizon.
    #[arg(long)]
    record_to_horizon: bool,
    /// Replace a non-empty dataset directory.
    #[arg(long)]
    overwrite: bool,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Architecture: r3d18 or cnn-gru.
    #[arg(long)]
    model: Option<ModelKind>,
    /// Clip length N.
    #[arg(long)]
    timesteps: Option<usize>,
    /// Network input size as WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_resolution)]
    input_size: Option<(u32, u32)>,
    /// Channel width multiplier of the 3D network, in (0, 1].
    #[arg(long)]
    width: Option<f64>,
    /// Raw little-endian f32 weights for the frozen backbone.
    #[arg(long)]
    backbone_weights: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Maximum number of epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Epochs without validation improvement before stopping.
    #[arg(long)]
    patience: Option<usize>,
    /// Train for all epochs without early stopping.
    #[arg(long)]
    no_early_stop: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Checkpoint to evaluate; defaults to the latest run of `--model`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Reject checkpoints of another architecture.
    #[arg(long)]
    model: Option<ModelKind>,
    /// Groupings to report; defaults to all.
    #[arg(long, value_delimiter = ',')]
    groupings: Vec<Grouping>,
    /// Number of equal-width speed bins.
    #[arg(long)]
    speed_bins: Option<usize>,
    /// Clip length to sample; defaults to the checkpoint's own.
    #[arg(long)]
    timesteps: Option<usize>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Checkpoints to compare (repeatable); defaults to the latest of each kind.
    #[arg(long)]
    checkpoint: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct PreviewArgs {
    /// Episode index within the configured dataset plan.
    #[arg(long, default_value_t = 0)]
    episode: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    max_frames: Option<usize>,
    #[command(flatten)]
    rig: RigArgs,
}

fn parse_resolution(s: &str) -> std::result::Result<(u32, u32), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let parse = |t: &str| t.trim().parse::<u32>().map_err(|e| format!("{t:?}: {e}"));
    Ok((parse(w)?, parse(h)?))
}

impl RigArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some((w, h)) = self.resolution {
            cfg.dataset.rig = cfg.dataset.rig.with_resolution(w, h);
        }
        if let Some(fps) = self.fps {
            cfg.dataset.rig.fps = fps;
        }
    }
}

impl ModelArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(kind) = self.model {
            cfg.model.kind = kind;
        }
        let hw = self.input_size.map(|(w, h)| (h as usize, w as usize));
        match cfg.model.kind {
            ModelKind::R3d18 => {
                let m = &mut cfg.model.r3d18;
                m.timesteps = self.timesteps.unwrap_or(m.timesteps);
                m.input_hw = hw.unwrap_or(m.input_hw);
                m.width_multiplier = self.width.unwrap_or(m.width_multiplier);
            }
            ModelKind::CnnGru => {
                let m = &mut cfg.model.cnn_gru;
                m.timesteps = self.timesteps.unwrap_or(m.timesteps);
                m.input_hw = hw.unwrap_or(m.input_hw);
                if self.backbone_weights.is_some() {
                    m.backbone_weights = self.backbone_weights.clone();
                }
            }
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(dir) = &cli.run_dir {
        cfg.paths.run_dir = dir.clone();
    }
    if let Some(dir) = &cli.dataset {
        cfg.paths.dataset_root = dir.clone();
    }
    match &cli.command {
        Command::Generate(a) => {
            a.rig.apply(&mut cfg);
            let d = &mut cfg.dataset;
            d.n_episodes = a.episodes.unwrap_or(d.n_episodes);
            d.segment_length_m = a.segment_length.unwrap_or(d.segment_length_m);
            d.record_to_horizon |= a.record_to_horizon;
            d.overwrite |= a.overwrite;
        }
        Command::Train(a) => {
            a.model.apply(&mut cfg);
            let t = &mut cfg.training;
            t.max_epochs = a.epochs.or(t.max_epochs);
            t.learning_rate = a.lr.or(t.learning_rate);
            t.batch_size = a.batch_size.or(t.batch_size);
            t.early_stop_patience = a.patience.or(t.early_stop_patience);
            if a.no_early_stop {
                t.early_stopping = Some(false);
            }
        }
        Command::Evaluate(a) => {
            if let Some(kind) = a.model {
                cfg.model.kind = kind;
            }
            if !a.groupings.is_empty() {
                cfg.evaluation.groupings = a.groupings.clone();
            }
            cfg.evaluation.speed_bins = a.speed_bins.unwrap_or(cfg.evaluation.speed_bins);
            cfg.evaluation.timesteps = a.timesteps.or(cfg.evaluation.timesteps);
        }
        Command::Preview(a) => a.rig.apply(&mut cfg),
        Command::Split | Command::Report(_) => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli)?;
    match &cli.command {
        Command::Generate(_) => {
            let total = cfg.dataset.n_episodes;
            let done = std::sync::atomic::AtomicUsize::new(0);
            let progress = |m: &EpisodeMeta| {
                let k = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
                eprintln!(
                    "[{k}/{total}] episode {:05} {} {} {:.2} m/s, {} frames",
                    m.episode_index, m.vehicle_name, m.environment_label, m.speed_mps, m.n_frames
                );
            };
            let path = stage_generate(&cfg, &progress)
                .with_context(|| format!("generating into {}", cfg.paths.dataset_root.display()))?;
            println!("{}", path.display());
        }
        Command::Split => println!("{}", stage_split(&cfg)?.display()),
        Command::Train(_) => {
            let run = stage_train(&cfg, cfg.model.kind)?;
            let best = run.history.best_epoch;
            println!(
                "{} (best epoch {best}, stopped at {})",
                run.checkpoint.display(),
                run.history.stopped_epoch
            );
        }
        Command::Evaluate(a) => {
            let (ckpt, expected) = match &a.checkpoint {
                Some(p) => (p.clone(), a.model),
                None => (latest_checkpoint(&cfg, cfg.model.kind)?, Some(cfg.model.kind)),
            };
            if !ckpt.is_file() {
                bail!("checkpoint {} does not exist", ckpt.display());
            }
            let (summary, out) = stage_evaluate(&cfg, &ckpt, expected)?;
            println!(
                "{}: MAE {:.4} m/s, RMSE {:.4} m/s over {} test episodes; report in {}",
                summary.model_kind,
                summary.overall_mae_mps,
                summary.rmse_mps,
                summary.n_test,
                out.display()
            );
        }
        Command::Report(a) => {
            let ckpts = if a.checkpoint.is_empty() {
                [ModelKind::R3d18, ModelKind::CnnGru]
                    .into_iter()
                    .filter_map(|k| latest_checkpoint(&cfg, k).ok())
                    .collect()
            } else {
                a.checkpoint.clone()
            };
            if ckpts.is_empty() {
                bail!("no checkpoints to report under {}", cfg.paths.run_dir.display());
            }
            let (path, table) = stage_report(&cfg, &ckpts)?;
            print!("{table}");
            eprintln!("written to {}", path.display());
        }
        Command::Preview(a) => {
            let n = stage_preview(&cfg, a.episode, &a.out, a.max_frames)?;
            println!("{n} frames written to {}", a.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

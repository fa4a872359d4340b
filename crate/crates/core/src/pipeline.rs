//! Declarative run configuration and the stage functions behind the CLI:
//! generate, split, train, evaluate, report and preview.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    ingest_external, read_json, sample_clips, split_dataset, write_json, DatasetManifest, EpisodeMeta,
    NormalizationSpec, SplitAssignment, SplitRatios, MANIFEST_FILE, SPLITS_FILE,
};
use crate::error::{Error, IoContext, Result};
use crate::evaluation::{emit_report, evaluate, group_report, Grouping, SpeedBins, Summary, SUMMARY_FILE};
use crate::models::{load_checkpoint, CnnGruConfig, ModelConfig, ModelKind, R3dConfig, Regressor};
use crate::scenesynth::{generate_dataset_with_progress, plan_episodes, GenerationConfig, SceneRenderer};
use crate::training::{
    clip_config_for, create_run_dir, train, RunArtifacts, TrainConfig, TrainHistory, CHECKPOINT_FILE, HISTORY_FILE,
};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub ratios: SplitRatios,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub r3d18: R3dConfig,
    pub cnn_gru: CnnGruConfig,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kind: ModelKind::R3d18,
            r3d18: R3dConfig::default(),
            cnn_gru: CnnGruConfig::default(),
        }
    }
}

impl ModelSection {
    pub fn config_for(&self, kind: ModelKind) -> ModelConfig {
        match kind {
            ModelKind::R3d18 => ModelConfig::R3d18(self.r3d18),
            ModelKind::CnnGru => ModelConfig::CnnGru(self.cnn_gru.clone()),
        }
    }
}

/// Overrides applied on top of the per-architecture reference recipe.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub early_stop_patience: Option<usize>,
    /// Overrides whether early stopping is used at all.
    pub early_stopping: Option<bool>,
    pub seed: u64,
}

impl TrainingSection {
    pub fn resolve(&self, kind: ModelKind) -> TrainConfig {
        let mut t = TrainConfig::for_kind(kind);
        if let Some(lr) = self.learning_rate {
            t.learning_rate = lr;
        }
        if let Some(b) = self.batch_size {
            t.batch_size = b;
        }
        if let Some(e) = self.max_epochs {
            t.max_epochs = e;
        }
        if let Some(p) = self.early_stop_patience {
            t.early_stop_patience = Some(p);
        }
        match self.early_stopping {
            Some(false) => t.early_stop_patience = None,
            Some(true) if t.early_stop_patience.is_none() => {
                t.early_stop_patience = TrainConfig::for_kind(ModelKind::R3d18).early_stop_patience
            }
            _ => {}
        }
        t.seed = self.seed;
        t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub groupings: Vec<Grouping>,
    pub speed_bins: usize,
    /// Clip length to sample for evaluation; defaults to the model's own.
    pub timesteps: Option<usize>,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            groupings: Grouping::ALL.to_vec(),
            speed_bins: crate::evaluation::DEFAULT_SPEED_BINS,
            timesteps: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub dataset_root: PathBuf,
    pub run_dir: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            dataset_root: PathBuf::from("data"),
            run_dir: PathBuf::from("runs"),
        }
    }
}

/// Complete pipeline configuration. Every section is optional in the JSON
/// file; unknown keys are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: GenerationConfig,
    pub splits: SplitSection,
    pub model: ModelSection,
    pub training: TrainingSection,
    pub evaluation: EvaluationSection,
    pub paths: PathsSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: RunConfig = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|source| Error::Json {
            path: PathBuf::from("<inline>"),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Uses one seed for generation, splitting, initialization and training.
    pub fn set_seed(&mut self, seed: u64) {
        self.dataset.master_seed = seed;
        self.splits.seed = seed;
        self.training.seed = seed;
        self.model.r3d18.seed = seed;
        self.model.cnn_gru.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.splits.ratios.validate()?;
        self.model.r3d18.validate()?;
        self.model.cnn_gru.validate()?;
        for kind in [ModelKind::R3d18, ModelKind::CnnGru] {
            self.training.resolve(kind).validate()?;
        }
        if self.evaluation.speed_bins < 1 {
            return Err(Error::Config("evaluation.speed_bins must be >= 1".into()));
        }
        Ok(())
    }

    pub fn speed_bins(&self) -> SpeedBins {
        SpeedBins {
            count: self.evaluation.speed_bins,
            ..SpeedBins::default()
        }
    }

    /// Saves the resolved configuration for a stage into the run directory.
    pub fn snapshot(&self, stage: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.paths.run_dir).at(&self.paths.run_dir)?;
        let path = self.paths.run_dir.join(format!("resolved_config_{stage}.json"));
        write_json(&path, self)?;
        Ok(path)
    }

    pub fn splits_path(&self) -> PathBuf {
        self.paths.run_dir.join(SPLITS_FILE)
    }
}

pub fn stage_generate(cfg: &RunConfig, progress: &(dyn Fn(&EpisodeMeta) + Sync)) -> Result<PathBuf> {
    cfg.snapshot("generate")?;
    let manifest = generate_dataset_with_progress(&cfg.dataset, &cfg.paths.dataset_root, progress)?;
    info!(
        "generated {} episodes ({} frames) in {}",
        manifest.len(),
        manifest.total_frames(),
        manifest.root.display()
    );
    Ok(manifest.root.join(MANIFEST_FILE))
}

/// Loads `manifest.json`, or ingests the episode tree when there is none.
pub fn load_dataset(root: &Path) -> Result<DatasetManifest> {
    if root.join(MANIFEST_FILE).is_file() {
        DatasetManifest::load(root)
    } else if root.join("episodes").is_dir() {
        ingest_external(root)
    } else {
        Err(Error::Config(format!(
            "no dataset at {} (run `generate` first)",
            root.display()
        )))
    }
}

pub fn stage_split(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.snapshot("split")?;
    let manifest = load_dataset(&cfg.paths.dataset_root)?;
    let split = split_dataset(&manifest, cfg.splits.ratios, cfg.splits.seed)?;
    let path = cfg.splits_path();
    split.write(&path)?;
    info!(
        "split {} episodes: train {} / val {} / test {}",
        manifest.len(),
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    Ok(path)
}

fn load_split(cfg: &RunConfig, manifest: &DatasetManifest) -> Result<SplitAssignment> {
    let path = cfg.splits_path();
    if !path.is_file() {
        return Err(Error::Config(format!("missing {} (run `split` first)", path.display())));
    }
    let split = SplitAssignment::load(&path)?;
    split.check_against(manifest)?;
    Ok(split)
}

#[derive(Clone, Debug)]
pub struct TrainRun {
    pub dir: PathBuf,
    pub checkpoint: PathBuf,
    pub checkpoint_id: Option<String>,
    pub history: TrainHistory,
}

/// Trains `kind` on the split in `run_dir`, writing artifacts to
/// `<run_dir>/<kind>/<timestamp>_seed<seed>/`.
pub fn stage_train(cfg: &RunConfig, kind: ModelKind) -> Result<TrainRun> {
    cfg.snapshot("train")?;
    let manifest = load_dataset(&cfg.paths.dataset_root)?;
    let split = load_split(cfg, &manifest)?;
    let model_cfg = cfg.model.config_for(kind);
    let train_cfg = cfg.training.resolve(kind);
    let norm = NormalizationSpec::default();
    let clip_cfg = clip_config_for(&model_cfg, &manifest);
    let train_clips = sample_clips(&manifest, &split.train, &clip_cfg, &norm)?;
    let val_clips = sample_clips(&manifest, &split.val, &clip_cfg, &norm)?;
    let mut model = Regressor::build(&model_cfg)?;
    let dir = create_run_dir(&cfg.paths.run_dir.join(kind.as_str()), train_cfg.seed)?;
    let artifacts = RunArtifacts { dir: dir.clone() };
    let outcome = train(
        &mut model,
        &train_clips,
        &val_clips,
        &train_cfg,
        &norm,
        Some(&artifacts),
    )?;
    Ok(TrainRun {
        checkpoint: artifacts.checkpoint(),
        dir,
        checkpoint_id: outcome.checkpoint_id,
        history: outcome.history,
    })
}

/// Most recent training run of `kind` under the run directory.
pub fn latest_checkpoint(cfg: &RunConfig, kind: ModelKind) -> Result<PathBuf> {
    let base = cfg.paths.run_dir.join(kind.as_str());
    let mut runs: Vec<PathBuf> = fs::read_dir(&base)
        .at(&base)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(CHECKPOINT_FILE).is_file())
        .collect();
    runs.sort();
    runs.pop().map(|p| p.join(CHECKPOINT_FILE)).ok_or_else(|| {
        Error::Config(format!(
            "no {kind} checkpoint under {} (run `train` first)",
            base.display()
        ))
    })
}

/// Scores a checkpoint on the test split and writes its report next to it,
/// in `<checkpoint dir>/report/`.
pub fn stage_evaluate(cfg: &RunConfig, checkpoint: &Path, expected: Option<ModelKind>) -> Result<(Summary, PathBuf)> {
    cfg.snapshot("evaluate")?;
    let manifest = load_dataset(&cfg.paths.dataset_root)?;
    let split = load_split(cfg, &manifest)?;
    let ckpt = load_checkpoint(checkpoint, expected)?;
    let mut model = ckpt.model;
    let mut clip_cfg = clip_config_for(&model.config(), &manifest);
    if let Some(n) = cfg.evaluation.timesteps {
        clip_cfg.timesteps = n;
    }
    let eval = evaluate(&mut model, &manifest, &split.test, &clip_cfg, &ckpt.meta.norm)?;
    let bins = cfg.speed_bins();
    let reports = cfg
        .evaluation
        .groupings
        .iter()
        .map(|&g| group_report(&eval.errors, &manifest, g, &bins))
        .collect::<Result<Vec<_>>>()?;
    let summary = Summary::new(model.kind(), &eval, &reports, Some(ckpt.checkpoint_id));
    let run_dir = checkpoint.parent().unwrap_or(Path::new("."));
    let history_path = run_dir.join(HISTORY_FILE);
    let history = if history_path.is_file() {
        Some(TrainHistory::read_csv(&history_path)?)
    } else {
        None
    };
    let out = run_dir.join("report");
    emit_report(&summary, &eval, &reports, history.as_deref(), &out)?;
    info!(
        "{}: test MAE {:.3} m/s over {} episodes",
        summary.model_kind, summary.overall_mae_mps, summary.n_test
    );
    Ok((summary, out))
}

/// Side-by-side table of evaluated checkpoints, written to
/// `<run_dir>/comparison.csv`.
pub fn stage_report(cfg: &RunConfig, checkpoints: &[PathBuf]) -> Result<(PathBuf, String)> {
    cfg.snapshot("report")?;
    let mut rows = Vec::new();
    for ckpt in checkpoints {
        let summary_path = ckpt
            .parent()
            .unwrap_or(Path::new("."))
            .join("report")
            .join(SUMMARY_FILE);
        let summary = if summary_path.is_file() {
            Summary::load(&summary_path)?
        } else {
            stage_evaluate(cfg, ckpt, None)?.0
        };
        rows.push((ckpt.display().to_string(), summary));
    }
    let table = crate::evaluation::comparison_table(&rows);
    let path = cfg.paths.run_dir.join("comparison.csv");
    fs::write(&path, &table).at(&path)?;
    Ok((path, table))
}

/// Renders episode `index` of the configured dataset plan into `out_dir`
/// as PNG frames, at most `max_frames` of them.
pub fn stage_preview(cfg: &RunConfig, index: usize, out_dir: &Path, max_frames: Option<usize>) -> Result<usize> {
    let mut plan_cfg = cfg.dataset.clone();
    plan_cfg.n_episodes = plan_cfg.n_episodes.max(index + 1);
    let specs = plan_episodes(&plan_cfg)?;
    let spec = &specs[index];
    let rig = &cfg.dataset.rig;
    fs::create_dir_all(out_dir).at(out_dir)?;
    let renderer = SceneRenderer::new(spec, rig)?;
    let n = spec.frame_count(rig.fps).min(max_frames.unwrap_or(usize::MAX));
    for k in 0..n {
        let frame = renderer.render(k as f64 / rig.fps)?;
        let path = out_dir.join(format!("{k:06}.png"));
        frame
            .pixels
            .save(&path)
            .map_err(|source| Error::Image { path, source })?;
    }
    write_json(&out_dir.join("episode.json"), spec)?;
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"dataset": {"n_episode": 3}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"extra": 1}"#).is_err());
    }

    #[test]
    fn training_overrides_apply_on_recipe() {
        let t = TrainingSection {
            max_epochs: Some(5),
            early_stopping: Some(false),
            ..Default::default()
        };
        let r = t.resolve(ModelKind::R3d18);
        assert_eq!(r.max_epochs, 5);
        assert_eq!(r.early_stop_patience, None);
        assert_eq!(r.learning_rate, 3e-4);
        assert_eq!(TrainingSection::default().resolve(ModelKind::CnnGru).batch_size, 3);
    }
}

//! Experiment configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{GeneratorConfig, Modality};
use crate::error::{Error, Result};
use crate::model::{AdamWConfig, LossKind, TrainConfig};
use crate::schedule::{GammaMode, GammaSchedule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden widths of the encoder; the input width comes from the data.
    pub hidden: Vec<usize>,
    /// Train the head only.
    pub freeze_encoder: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            freeze_encoder: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossChoice {
    Ce,
    Focal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub kind: LossChoice,
    /// Sum the focal term over every class instead of the true class only.
    pub all_classes: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kind: LossChoice::Focal,
            all_classes: false,
        }
    }
}

impl LossConfig {
    pub fn loss_kind(&self) -> LossKind {
        match (self.kind, self.all_classes) {
            (LossChoice::Ce, _) => LossKind::CrossEntropy,
            (LossChoice::Focal, false) => LossKind::Focal,
            (LossChoice::Focal, true) => LossKind::FocalAllClasses,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub mode: GammaMode,
    pub gamma_init: f64,
    pub gamma_fin: f64,
    pub total_epochs: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            mode: GammaMode::ExpDecay,
            gamma_init: 2.0,
            gamma_fin: 0.1,
            total_epochs: 20,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<GammaSchedule<f64>> {
        GammaSchedule::new(self.mode, self.gamma_init, self.gamma_fin, self.total_epochs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModalityChoice {
    Rgb,
    Depth,
    Both,
}

impl ModalityChoice {
    pub fn modalities(self) -> Vec<Modality> {
        match self {
            ModalityChoice::Rgb => vec![Modality::Rgb],
            ModalityChoice::Depth => vec![Modality::Depth],
            ModalityChoice::Both => Modality::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub modality: Modality,
    /// Run seeds; each seed trains all five cells.
    pub seeds: Vec<u64>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            modality: Modality::Rgb,
            seeds: vec![0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub batch_sizes: Vec<usize>,
    /// Directory holding the rgb and depth checkpoints written by `train`.
    pub checkpoint_dir: Option<PathBuf>,
    /// Batches timed per batch size.
    pub batches: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            batch_sizes: vec![1, 2, 4, 8, 16],
            checkpoint_dir: None,
            batches: 4,
        }
    }
}

/// Everything one command needs. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub generator: GeneratorConfig,
    /// Load this feature table instead of generating data.
    pub feature_table: Option<PathBuf>,
    pub model: ModelConfig,
    pub optimizer: AdamWConfig,
    pub loss: LossConfig,
    pub schedule: ScheduleConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub modalities: ModalityChoice,
    pub fusion: bool,
    /// Retrain from scratch on train ∪ val and report on test.
    pub merge_train_val: bool,
    pub seed: u64,
    pub ablation: AblationConfig,
    pub bench: BenchConfig,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorConfig::default(),
            feature_table: None,
            model: ModelConfig::default(),
            optimizer: AdamWConfig::default(),
            loss: LossConfig::default(),
            schedule: ScheduleConfig::default(),
            epochs: 20,
            batch_size: 32,
            modalities: ModalityChoice::Both,
            fusion: true,
            merge_train_val: false,
            seed: 0,
            ablation: AblationConfig::default(),
            bench: BenchConfig::default(),
            out_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Checks cross-field invariants. Paths are checked when they are opened.
    pub fn validate(&self) -> Result<()> {
        if self.feature_table.is_none() {
            self.generator.validate()?;
        }
        if self.epochs != self.schedule.total_epochs {
            return Err(Error::Config(format!(
                "epochs = {} but the gamma schedule spans {} epochs",
                self.epochs, self.schedule.total_epochs
            )));
        }
        self.schedule.build()?;
        self.optimizer.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.model.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if self.fusion && self.modalities != ModalityChoice::Both {
            return Err(Error::Config("fusion needs modalities = \"both\"".into()));
        }
        if self.ablation.seeds.is_empty() {
            return Err(Error::Config("ablation.seeds is empty".into()));
        }
        let sizes = &self.bench.batch_sizes;
        if sizes.is_empty() || sizes[0] == 0 || sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("bench.batch_sizes must be positive and strictly increasing".into()));
        }
        if self.bench.batches == 0 {
            return Err(Error::Config("bench.batches must be positive".into()));
        }
        Ok(())
    }

    /// Stable hash of everything that affects the emitted numbers; output
    /// locations are left out.
    pub fn fingerprint(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        canonical.bench.checkpoint_dir = None;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }

    pub fn train_config(&self, loss: LossKind, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: self.optimizer,
            loss,
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        let partial: ExperimentConfig = serde_json::from_str(r#"{"seed": 3, "loss": {"kind": "ce"}}"#).unwrap();
        assert_eq!(partial.seed, 3);
        assert_eq!(partial.loss.loss_kind(), LossKind::CrossEntropy);
        assert_eq!(partial.epochs, 20);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"sede": 3}"#).is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"model": {"widths": [3]}}"#).is_err());
    }

    #[test]
    fn cross_field_checks() {
        let mut cfg = ExperimentConfig {
            epochs: 10,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.epochs = 20;
        cfg.modalities = ModalityChoice::Rgb;
        assert!(cfg.validate().is_err());
        cfg.fusion = false;
        cfg.validate().unwrap();
        cfg.bench.batch_sizes = vec![1, 4, 2];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn fingerprint_ignores_output_location() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.out_dir = "/elsewhere".into();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.seed = 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 16);
    }

    #[test]
    fn all_classes_flag_selects_all_class_loss() {
        let l = LossConfig {
            kind: LossChoice::Focal,
            all_classes: true,
        };
        assert_eq!(l.loss_kind(), LossKind::FocalAllClasses);
    }
}

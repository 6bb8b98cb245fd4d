//! Run configuration: an optional TOML file, then command-line overrides.
//!
//! ```toml
//! seed = 42
//! threshold = 0.5
//! hyp_multiplier = 1.5
//!
//! [data]
//! mode = "synthetic"          # or "real"
//! out = "runs/demo"
//! # metadata = "ptbxl/metadata.csv"
//! # signal_dir = "ptbxl"
//!
//! [synthetic]
//! samples = 2000
//! class_mix = [0.225, 0.122, 0.252, 0.437, 0.241]
//!
//! [balance]
//! targets = { HYP = 4000, NORM = 4000 }
//!
//! [train]
//! learning_rate = 0.001
//! batch_size = 64
//! max_epochs = 50
//!
//! [model]
//! preset = "reduced"          # or "full"
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ecg_cvae_core::dataset::PTBXL_CLASS_MIX;
use ecg_cvae_core::nn::ModelConfig;
use ecg_cvae_core::preprocess::DEFAULT_HYP_MULTIPLIER;
use ecg_cvae_core::training::TrainConfig;
use ecg_cvae_core::DiagClass;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_OUT: &str = "ecg-cvae-out";
pub const DEFAULT_SYNTHETIC_SAMPLES: usize = 2000;
pub const DATA_DIR_ENV: &str = "ECG_CVAE_DATA_DIR";

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
    pub hyp_multiplier: Option<f64>,
    pub data: DataSection,
    pub synthetic: SyntheticSection,
    pub balance: BalanceSection,
    pub train: TrainSection,
    pub model: ModelSection,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub mode: Option<String>,
    pub out: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub metadata: Option<PathBuf>,
    pub signal_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub class_mix: Option<[f64; 5]>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalanceSection {
    /// Class name to target count. Absent means the default targets.
    pub targets: Option<BTreeMap<String, usize>>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub validation_fraction: Option<f64>,
    pub early_stop_patience: Option<usize>,
    pub plateau_patience: Option<usize>,
    pub plateau_factor: Option<f64>,
    pub min_lr: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub preset: Option<String>,
    pub filters: Option<[usize; 3]>,
    pub latent_dim: Option<usize>,
    pub dense_units: Option<[usize; 2]>,
    pub log_var_head: Option<bool>,
}

/// Values given on the command line; they win over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
    pub synthetic: bool,
    pub out: Option<PathBuf>,
    pub samples: Option<usize>,
    pub epochs: Option<usize>,
    pub preset: Option<String>,
    pub data_dir: Option<PathBuf>,
    pub metadata: Option<PathBuf>,
    pub signal_dir: Option<PathBuf>,
    pub quiet: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DataMode {
    Real { metadata: PathBuf, signal_dir: PathBuf },
    Synthetic { samples: usize, seed: u64, class_mix: [f64; 5] },
}

/// Fully resolved settings for one invocation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub mode: DataMode,
    pub out: PathBuf,
    pub seed: u64,
    pub threshold: f64,
    pub hyp_multiplier: f64,
    /// `None` selects the default targets (scaled to corpus size in synthetic mode).
    pub balance_targets: Option<Vec<(DiagClass, usize)>>,
    pub balance_seed: u64,
    pub split_seed: u64,
    pub model_seed: u64,
    pub train: TrainConfig,
    pub model: ModelConfig,
    /// Suppresses progress lines on stderr.
    pub quiet: bool,
}

/// Conv 8/16/32, latent 16, dense 32/16: the desk-scale network.
pub fn reduced_model() -> ModelConfig {
    ModelConfig::scaled([8, 16, 32], 16, [32, 16])
}

pub fn model_preset(name: &str) -> CliResult<ModelConfig> {
    match name {
        "full" => Ok(ModelConfig::full()),
        "reduced" => Ok(reduced_model()),
        other => Err(CliError::Config(format!("unknown model preset `{other}` (full, reduced)"))),
    }
}

pub fn read_file_config(path: &Path) -> CliResult<FileConfig> {
    let text = io::read_text(path)?;
    toml::from_str(&text).map_err(|e| CliError::malformed(path, e))
}

impl RunConfig {
    pub fn resolve(o: &Overrides) -> CliResult<Self> {
        let file = match &o.config {
            Some(path) => read_file_config(path)?,
            None => FileConfig::default(),
        };
        Self::from_parts(&file, o)
    }

    pub fn from_parts(file: &FileConfig, o: &Overrides) -> CliResult<Self> {
        let seed = o.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
        let synthetic = o.synthetic
            || match file.data.mode.as_deref() {
                None | Some("real") => false,
                Some("synthetic") => true,
                Some(other) => return Err(CliError::Config(format!("unknown data mode `{other}`"))),
            };

        let mode = if synthetic {
            DataMode::Synthetic {
                samples: o.samples.or(file.synthetic.samples).unwrap_or(DEFAULT_SYNTHETIC_SAMPLES),
                seed: file.synthetic.seed.unwrap_or(seed),
                class_mix: file.synthetic.class_mix.unwrap_or(PTBXL_CLASS_MIX),
            }
        } else {
            let data_dir = o.data_dir.clone().or_else(|| file.data.data_dir.clone());
            let metadata = o
                .metadata
                .clone()
                .or_else(|| file.data.metadata.clone())
                .or_else(|| data_dir.as_ref().map(|d| d.join(io::METADATA_FILE)))
                .ok_or_else(|| {
                    CliError::Config(format!(
                        "real mode needs a metadata path (--metadata, --data-dir, {DATA_DIR_ENV}) or --synthetic"
                    ))
                })?;
            let signal_dir = o
                .signal_dir
                .clone()
                .or_else(|| file.data.signal_dir.clone())
                .or(data_dir)
                .or_else(|| metadata.parent().map(Path::to_path_buf))
                .unwrap_or_default();
            DataMode::Real { metadata, signal_dir }
        };

        let threshold = o.threshold.or(file.threshold).unwrap_or(0.5);
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(CliError::Config(format!("threshold {threshold} outside (0, 1)")));
        }
        let hyp_multiplier = file.hyp_multiplier.unwrap_or(DEFAULT_HYP_MULTIPLIER);
        if !(hyp_multiplier > 0.0 && hyp_multiplier.is_finite()) {
            return Err(CliError::Config("hyp_multiplier must be positive".into()));
        }

        let balance_targets = match &file.balance.targets {
            None => None,
            Some(map) => Some(
                map.iter()
                    .map(|(name, &n)| {
                        DiagClass::from_name(name)
                            .map(|c| (c, n))
                            .ok_or_else(|| CliError::Config(format!("unknown class `{name}` in balance targets")))
                    })
                    .collect::<CliResult<Vec<_>>>()?,
            ),
        };

        let t = &file.train;
        let defaults = TrainConfig::default();
        let train = TrainConfig {
            learning_rate: t.learning_rate.unwrap_or(defaults.learning_rate),
            batch_size: t.batch_size.unwrap_or(defaults.batch_size),
            max_epochs: o.epochs.or(t.max_epochs).unwrap_or(defaults.max_epochs),
            validation_fraction: t.validation_fraction.unwrap_or(defaults.validation_fraction),
            early_stop_patience: t.early_stop_patience.unwrap_or(defaults.early_stop_patience),
            plateau_patience: t.plateau_patience.unwrap_or(defaults.plateau_patience),
            plateau_factor: t.plateau_factor.unwrap_or(defaults.plateau_factor),
            min_lr: t.min_lr.unwrap_or(defaults.min_lr),
            seed: t.seed.unwrap_or(seed.wrapping_add(3)),
        };
        train.validate()?;

        let m = &file.model;
        let preset = o
            .preset
            .clone()
            .or_else(|| m.preset.clone())
            .unwrap_or_else(|| if synthetic { "reduced" } else { "full" }.into());
        let base = model_preset(&preset)?;
        let filters = m.filters.unwrap_or_else(|| preset_filters(&base));
        let latent_dim = m.latent_dim.unwrap_or(base.latent_dim);
        let dense_units = m.dense_units.unwrap_or_else(|| preset_dense(&base));
        let mut model = ModelConfig::scaled(filters, latent_dim, dense_units);
        model.include_log_var_head = m.log_var_head.unwrap_or(false);
        model.validate()?;

        Ok(Self {
            mode,
            out: o.out.clone().or_else(|| file.data.out.clone()).unwrap_or_else(|| DEFAULT_OUT.into()),
            seed,
            threshold,
            hyp_multiplier,
            balance_targets,
            balance_seed: file.balance.seed.unwrap_or(seed),
            split_seed: seed.wrapping_add(1),
            model_seed: seed.wrapping_add(2),
            train,
            model,
            quiet: o.quiet,
        })
    }

    pub fn is_synthetic(&self) -> bool {
        matches!(self.mode, DataMode::Synthetic { .. })
    }
}

fn preset_filters(cfg: &ModelConfig) -> [usize; 3] {
    let mut out = [0; 3];
    let convs = cfg.encoder.iter().filter_map(|s| match s {
        ecg_cvae_core::nn::LayerSpec::Conv1d { filters, .. } => Some(*filters),
        _ => None,
    });
    for (slot, f) in out.iter_mut().zip(convs) {
        *slot = f;
    }
    out
}

fn preset_dense(cfg: &ModelConfig) -> [usize; 2] {
    let mut out = [0; 2];
    let dense = cfg.classifier.iter().filter_map(|s| match s {
        ecg_cvae_core::nn::LayerSpec::Dense { units } => Some(*units),
        _ => None,
    });
    for (slot, u) in out.iter_mut().zip(dense) {
        *slot = u;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_hyperparameters() {
        let cfg = RunConfig::from_parts(&FileConfig::default(), &Overrides { synthetic: true, ..Default::default() }).unwrap();
        assert_eq!(cfg.train.learning_rate, 0.001);
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(cfg.train.max_epochs, 50);
        assert_eq!(cfg.threshold, 0.5);
        assert_eq!(cfg.hyp_multiplier, 1.5);
        assert_eq!(cfg.model, reduced_model());
        assert_eq!(cfg.mode, DataMode::Synthetic { samples: 2000, seed: 42, class_mix: PTBXL_CLASS_MIX });
    }

    #[test]
    fn flags_override_file() {
        let file: FileConfig = toml::from_str(
            "seed = 1\nthreshold = 0.3\n[data]\nmode = \"synthetic\"\n[train]\nmax_epochs = 9\nlearning_rate = 0.01\n[model]\npreset = \"full\"\nlog_var_head = true\n[balance]\ntargets = { HYP = 10 }\n",
        )
        .unwrap();
        let o = Overrides { seed: Some(5), epochs: Some(3), ..Default::default() };
        let cfg = RunConfig::from_parts(&file, &o).unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.threshold, 0.3);
        assert_eq!(cfg.train.max_epochs, 3);
        assert_eq!(cfg.train.learning_rate, 0.01);
        assert!(cfg.model.include_log_var_head);
        assert_eq!(cfg.balance_targets, Some(vec![(DiagClass::Hyp, 10)]));
        assert!(cfg.is_synthetic());
    }

    #[test]
    fn real_mode_needs_metadata() {
        let err = RunConfig::from_parts(&FileConfig::default(), &Overrides::default()).unwrap_err();
        assert_eq!(err.kind(), "InvalidConfig");
        let o = Overrides { data_dir: Some("ptbxl".into()), ..Default::default() };
        let cfg = RunConfig::from_parts(&FileConfig::default(), &o).unwrap();
        assert_eq!(
            cfg.mode,
            DataMode::Real { metadata: "ptbxl/metadata.csv".into(), signal_dir: "ptbxl".into() }
        );
        assert_eq!(cfg.model, ModelConfig::full());
    }

    #[test]
    fn rejects_unknown_keys_and_values() {
        assert!(toml::from_str::<FileConfig>("[train]\nlr = 1\n").is_err());
        let bad = Overrides { synthetic: true, threshold: Some(1.0), ..Default::default() };
        assert!(RunConfig::from_parts(&FileConfig::default(), &bad).is_err());
        let file: FileConfig = toml::from_str("[balance]\ntargets = { XYZ = 3 }\n").unwrap();
        assert!(RunConfig::from_parts(&file, &Overrides { synthetic: true, ..Default::default() }).is_err());
    }
}

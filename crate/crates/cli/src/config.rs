use std::path::{Path, PathBuf};

use rcvae_core::embedviz::AnalyzeConfig;
use rcvae_core::evalab::{AblationMode, AblationTarget, ReportOptions};
use rcvae_core::hpo::HpoConfig;
use rcvae_core::trainer::{FinalFit, TrainConfig};
use rcvae_core::{Layout, RcvaeConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    /// Measurement CSV plus per-battery EOL metadata CSV.
    Csv { data: PathBuf, metadata: PathBuf },
    /// Built-in generator; EOLs uniform in `eol_min..=eol_max`.
    Synthetic {
        n_batteries: usize,
        eol_min: u32,
        eol_max: u32,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            n_batteries: 8,
            eol_min: 300,
            eol_max: 1200,
        }
    }
}

/// Model shape; the input width follows from the layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub embed_dim: usize,
    pub latent_dim: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub hidden: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            embed_dim: 473,
            latent_dim: 32,
            enc_layers: 16,
            dec_layers: 16,
            hidden: 256,
        }
    }
}

/// How `train` fits the final model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FitMode {
    /// Train on the training split, early-stop on the validation split.
    Split,
    /// Merge train and validation, early-stop on a random holdout.
    Holdout { fraction: f64 },
    /// Merge train and validation, run a fixed number of epochs.
    FixedEpochs { epochs: usize },
}

impl Default for FitMode {
    fn default() -> Self {
        let FinalFit::Holdout { fraction } = FinalFit::default() else {
            unreachable!("default final fit is a holdout")
        };
        FitMode::Holdout { fraction }
    }
}

impl FitMode {
    pub fn final_fit(self) -> Option<FinalFit> {
        match self {
            FitMode::Split => None,
            FitMode::Holdout { fraction } => Some(FinalFit::Holdout { fraction }),
            FitMode::FixedEpochs { epochs } => Some(FinalFit::FixedEpochs { epochs }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    /// Target names such as `Decoder_3` or `Embedding`; empty runs the full sweep.
    pub targets: Vec<String>,
    pub mode: AblationMode,
}

/// Everything a run needs. The top-level `seed` and `match_weight` are
/// authoritative and are copied into every section that has its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub output_dir: PathBuf,
    pub data: DataSource,
    /// Early cycles per battery turned into samples.
    pub n_cycles: usize,
    /// Points per resampled cycle; must equal `height · width`.
    pub series_len: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub split_seed: u64,
    pub match_weight: f64,
    /// Per-type weights (V, I, T, Qc) of the total metrics.
    pub type_weights: [f64; 4],
    pub model: ModelSection,
    pub train: TrainConfig,
    pub fit: FitMode,
    pub hpo: HpoConfig,
    pub ablation: AblationSection,
    pub analyze: AnalyzeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            output_dir: "run".into(),
            data: DataSource::default(),
            n_cycles: 20,
            series_len: 256,
            height: 16,
            width: 16,
            seed: 0,
            split_seed: 0,
            match_weight: 0.5,
            type_weights: [1.0; 4],
            model: ModelSection::default(),
            train: TrainConfig::default(),
            fit: FitMode::default(),
            hpo: HpoConfig::default(),
            ablation: AblationSection::default(),
            analyze: AnalyzeConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses a JSON config. Relative paths inside it are resolved against
    /// the config file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.output_dir = base.join(&cfg.output_dir);
        if let DataSource::Csv { data, metadata } = &mut cfg.data {
            *data = base.join(&*data);
            *metadata = base.join(&*metadata);
        }
        Ok(cfg)
    }

    /// Copies the shared seed and label weight into every section.
    pub fn propagate_shared(&mut self) {
        self.train.seed = self.seed;
        self.train.match_weight = self.match_weight;
        self.hpo.seed = self.seed;
        self.analyze.tsne.seed = self.seed;
        self.analyze.cluster_seed = self.seed;
        self.analyze.match_weight = self.match_weight;
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.height * self.width != self.series_len {
            return bad(format!(
                "height {} x width {} != series_len {}",
                self.height, self.width, self.series_len
            ));
        }
        if self.n_cycles == 0 {
            return bad("n_cycles must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.match_weight) {
            return bad(format!("match_weight {} outside [0, 1]", self.match_weight));
        }
        if self.type_weights.iter().any(|w| !w.is_finite() || *w < 0.0) || self.type_weights.iter().sum::<f64>() <= 0.0 {
            return bad("type_weights must be non-negative with a positive sum".into());
        }
        match &self.data {
            DataSource::Csv { data, metadata } => {
                for p in [data, metadata] {
                    if !p.is_file() {
                        return bad(format!("data file {} does not exist", p.display()));
                    }
                }
            }
            DataSource::Synthetic {
                n_batteries,
                eol_min,
                eol_max,
            } => {
                if *n_batteries == 0 || *eol_min == 0 || eol_min > eol_max {
                    return bad("synthetic data needs n_batteries >= 1 and 0 < eol_min <= eol_max".into());
                }
            }
        }
        if let FitMode::Holdout { fraction } = self.fit {
            if !(fraction > 0.0 && fraction < 1.0) {
                return bad(format!("holdout fraction {fraction} outside (0, 1)"));
            }
        }
        self.layout()?;
        self.model_config()?;
        self.train.validate()?;
        self.hpo.validate()?;
        self.ablation_targets()?;
        Ok(())
    }

    pub fn layout(&self) -> CliResult<Layout> {
        Ok(Layout::new(self.height, self.width)?)
    }

    pub fn model_config(&self) -> CliResult<RcvaeConfig> {
        let m = self.model;
        let cfg = RcvaeConfig {
            d_x: self.layout()?.feature_len(),
            embed_dim: m.embed_dim,
            latent_dim: m.latent_dim,
            enc_layers: m.enc_layers,
            dec_layers: m.dec_layers,
            hidden: m.hidden,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn report_options(&self) -> ReportOptions {
        ReportOptions {
            match_weight: self.match_weight,
            seed: self.seed,
            type_weights: self.type_weights,
        }
    }

    pub fn ablation_targets(&self) -> CliResult<Vec<AblationTarget>> {
        self.ablation
            .targets
            .iter()
            .map(|t| t.parse().map_err(|e: rcvae_core::Error| CliError::Config(e.to_string())))
            .collect()
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn layout_mismatch_rejected() {
        let cfg = RunConfig {
            series_len: 100,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn json_round_trip_and_unknown_fields() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
        assert!(serde_json::from_str::<RunConfig>(r#"{"nmae": "x"}"#).is_err());
        let partial: RunConfig = serde_json::from_str(r#"{"name": "x", "model": {"hidden": 64}}"#).unwrap();
        assert_eq!(partial.model.hidden, 64);
        assert_eq!(partial.model.enc_layers, 16);
    }

    #[test]
    fn missing_csv_is_a_config_error() {
        let cfg = RunConfig {
            data: DataSource::Csv {
                data: "/nonexistent/data.csv".into(),
                metadata: "/nonexistent/meta.csv".into(),
            },
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }
}

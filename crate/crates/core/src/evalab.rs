//! Error metrics, per-type reports in physical units, and ablations.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{unpack, DataType, QuasiVideoSample};
use crate::model::{Ablation, LayerSite, RcvaeConfig};
use crate::numcore::{streams, Matrix, Rng};
use crate::trainer::{feature_matrix, reconstruct, resolve_indices, train_ablated, Checkpoint, TrainConfig, TrainInputs};
use crate::{Error, Result};

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::Dimension(format!(
            "metric inputs of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

pub fn mae(x: &[f64], x_hat: &[f64]) -> Result<f64> {
    check_pair(x, x_hat)?;
    Ok(x.iter().zip(x_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / x.len() as f64)
}

pub fn rmse(x: &[f64], x_hat: &[f64]) -> Result<f64> {
    check_pair(x, x_hat)?;
    let ms = x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64;
    Ok(ms.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TypeMetrics {
    pub mae: f64,
    pub rmse: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    /// Physical-unit metrics indexed by [`DataType::index`].
    pub per_type: [TypeMetrics; 4],
    /// Weighted metrics over all scaled features.
    pub total_mae: f64,
    pub total_rmse: f64,
    pub samples: usize,
}

impl MetricsReport {
    pub fn get(&self, ty: DataType) -> TypeMetrics {
        self.per_type[ty.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportOptions {
    /// EOL weight of the label distance used for unseen labels.
    pub match_weight: f64,
    /// Seed of the reporting noise stream.
    pub seed: u64,
    /// Per-type weights of the total metrics, V, I, T, Qc.
    pub type_weights: [f64; 4],
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            match_weight: 0.5,
            seed: 0,
            type_weights: [1.0; 4],
        }
    }
}

/// Report of reconstructions `recon` against `x` (both `d_x × N`, scaled).
pub fn metrics(checkpoint: &Checkpoint, x: &Matrix, recon: &Matrix, type_weights: [f64; 4]) -> Result<MetricsReport> {
    if x.shape() != recon.shape() || x.cols() == 0 {
        return Err(Error::Dimension(format!(
            "targets {:?} vs reconstructions {:?}",
            x.shape(),
            recon.shape()
        )));
    }
    if type_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || type_weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Spec(format!("bad type weights {type_weights:?}")));
    }
    let layout = checkpoint.layout;
    let types = layout.feature_types();
    let (mut wsum, mut abs, mut sq) = (0.0, 0.0, 0.0);
    let mut phys: [(f64, f64, usize); 4] = [(0.0, 0.0, 0); 4];
    for c in 0..x.cols() {
        let (xc, rc) = (x.col(c), recon.col(c));
        for ((a, b), ty) in xc.iter().zip(&rc).zip(&types) {
            let w = type_weights[ty.index()];
            let d = a - b;
            wsum += w;
            abs += w * d.abs();
            sq += w * d * d;
        }
        let truth = checkpoint.scaler.invert_cycle(&unpack(&xc, layout)?);
        let pred = checkpoint.scaler.invert_cycle(&unpack(&rc, layout)?);
        for ty in DataType::ALL {
            let acc = &mut phys[ty.index()];
            for (a, b) in truth.get(ty).iter().zip(pred.get(ty)) {
                acc.0 += (a - b).abs();
                acc.1 += (a - b) * (a - b);
                acc.2 += 1;
            }
        }
    }
    let per_type = phys.map(|(a, s, n)| TypeMetrics {
        mae: a / n as f64,
        rmse: (s / n as f64).sqrt(),
        count: n,
    });
    Ok(MetricsReport {
        per_type,
        total_mae: abs / wsum,
        total_rmse: (sq / wsum).sqrt(),
        samples: x.cols(),
    })
}

/// Reconstructs `test` through the checkpoint (with `ablation`) and reports.
pub fn report_with(
    checkpoint: &Checkpoint,
    test: &[QuasiVideoSample],
    ablation: &Ablation,
    opts: &ReportOptions,
) -> Result<MetricsReport> {
    if test.is_empty() {
        return Err(Error::Data("empty test set".into()));
    }
    let x = feature_matrix(test)?;
    let idx = resolve_indices(&checkpoint.vocab, test.iter().map(|s| s.label), opts.match_weight)?;
    let mut rng = Rng::seed_from(opts.seed).substream(streams::REPORT);
    let recon = reconstruct(&checkpoint.params, &x, &idx, &mut rng, ablation)?;
    metrics(checkpoint, &x, &recon, opts.type_weights)
}

pub fn report(checkpoint: &Checkpoint, test: &[QuasiVideoSample], opts: &ReportOptions) -> Result<MetricsReport> {
    report_with(checkpoint, test, &Ablation::NONE, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AblationTarget {
    None,
    Embedding,
    Encoder(usize),
    Decoder(usize),
}

impl AblationTarget {
    /// Row name used in ablation tables.
    pub fn name(&self) -> String {
        match self {
            AblationTarget::None => "None".into(),
            AblationTarget::Embedding => "Embedding".into(),
            AblationTarget::Encoder(k) => LayerSite::Encoder(*k).name(),
            AblationTarget::Decoder(k) => LayerSite::Decoder(*k).name(),
        }
    }

    /// The model modification, after checking the layer can be removed.
    pub fn to_ablation(&self, config: &RcvaeConfig) -> Result<Ablation> {
        let site = match *self {
            AblationTarget::None => return Ok(Ablation::NONE),
            AblationTarget::Embedding => return Ok(Ablation::zero_condition()),
            AblationTarget::Encoder(k) => LayerSite::Encoder(k),
            AblationTarget::Decoder(k) => LayerSite::Decoder(k),
        };
        site.check_removable(config)?;
        Ok(Ablation::skip(site))
    }
}

impl std::str::FromStr for AblationTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let layer = |rest: &str| {
            rest.parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad layer index in {s:?}")))
        };
        match s {
            "None" => Ok(AblationTarget::None),
            "Embedding" => Ok(AblationTarget::Embedding),
            _ => match s.split_once('_') {
                Some(("Encoder", k)) => Ok(AblationTarget::Encoder(layer(k)?)),
                Some(("Decoder", k)) => Ok(AblationTarget::Decoder(layer(k)?)),
                _ => Err(Error::Parse(format!("unknown ablation target {s:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    #[default]
    SkipAtInference,
    Retrain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationSpec {
    pub target: AblationTarget,
    pub mode: AblationMode,
}

/// Inference-time ablation of a trained checkpoint.
pub fn ablate(
    checkpoint: &Checkpoint,
    target: AblationTarget,
    test: &[QuasiVideoSample],
    opts: &ReportOptions,
) -> Result<MetricsReport> {
    let ablation = target.to_ablation(checkpoint.config())?;
    report_with(checkpoint, test, &ablation, opts)
}

/// Trains a fresh model with the ablation applied throughout, then reports
/// with the same ablation.
pub fn ablate_retrain(
    inputs: &TrainInputs<'_>,
    model: RcvaeConfig,
    train_cfg: &TrainConfig,
    target: AblationTarget,
    test: &[QuasiVideoSample],
    opts: &ReportOptions,
) -> Result<MetricsReport> {
    let ablation = target.to_ablation(&model)?;
    let (checkpoint, _) = train_ablated(inputs, model, train_cfg, ablation)?;
    report_with(&checkpoint, test, &ablation, opts)
}

/// Runs one spec in either mode. Retrain mode needs the training inputs.
pub fn run_ablation(
    checkpoint: &Checkpoint,
    spec: AblationSpec,
    test: &[QuasiVideoSample],
    opts: &ReportOptions,
    retrain: Option<(&TrainInputs<'_>, &TrainConfig)>,
) -> Result<MetricsReport> {
    match spec.mode {
        AblationMode::SkipAtInference => ablate(checkpoint, spec.target, test, opts),
        AblationMode::Retrain => {
            let (inputs, cfg) = retrain
                .ok_or_else(|| Error::Spec("retrain ablation needs training data".into()))?;
            ablate_retrain(inputs, *checkpoint.config(), cfg, spec.target, test, opts)
        }
    }
}

/// Every valid target in table order: `Decoder_1`, then `Decoder_k, Encoder_k`
/// for increasing `k`, then `None` and `Embedding`.
pub fn sweep_targets(config: &RcvaeConfig) -> Vec<AblationTarget> {
    let mut out = vec![AblationTarget::Decoder(1)];
    for k in 2..=config.enc_layers.max(config.dec_layers - 1) {
        if k < config.dec_layers {
            out.push(AblationTarget::Decoder(k));
        }
        if k <= config.enc_layers {
            out.push(AblationTarget::Encoder(k));
        }
    }
    out.push(AblationTarget::None);
    out.push(AblationTarget::Embedding);
    out
}

/// Inference-time sweep over [`sweep_targets`], evaluated in parallel.
pub fn ablation_sweep(
    checkpoint: &Checkpoint,
    test: &[QuasiVideoSample],
    opts: &ReportOptions,
) -> Result<Vec<(AblationTarget, MetricsReport)>> {
    sweep_targets(checkpoint.config())
        .into_par_iter()
        .map(|t| ablate(checkpoint, t, test, opts).map(|r| (t, r)))
        .collect()
}

pub const REPORT_HEADER: [&str; 11] = [
    "detach", "mae_total", "rmse_total", "mae_V", "rmse_V", "mae_I", "rmse_I", "mae_T", "rmse_T",
    "mae_Qc", "rmse_Qc",
];

/// Writes report rows under [`REPORT_HEADER`].
pub fn write_report_csv<'a, W: Write>(
    out: W,
    rows: impl IntoIterator<Item = (String, &'a MetricsReport)>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for (name, r) in rows {
        let mut rec = vec![name, r.total_mae.to_string(), r.total_rmse.to_string()];
        for ty in DataType::ALL {
            let m = r.get(ty);
            rec.push(m.mae.to_string());
            rec.push(m.rmse.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    #[test]
    fn metric_examples() {
        assert_eq!(mae(&[0.3, 0.4], &[0.3, 0.4]).unwrap(), 0.0);
        assert_eq!(rmse(&[0.3, 0.4], &[0.3, 0.4]).unwrap(), 0.0);
        assert!((mae(&[0.0, 1.0], &[1.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!((rmse(&[0.0, 1.0], &[1.0, 1.0]).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn rmse_dominates_mae() {
        let mut rng = Rng::seed_from(8);
        for _ in 0..1000 {
            let n = 1 + rng.below(20);
            let a: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            assert!(rmse(&a, &b).unwrap() >= mae(&a, &b).unwrap() - 1e-15);
        }
    }

    fn cfg(enc: usize, dec: usize) -> RcvaeConfig {
        RcvaeConfig {
            d_x: 6,
            embed_dim: 2,
            latent_dim: 2,
            enc_layers: enc,
            dec_layers: dec,
            hidden: 4,
        }
    }

    #[test]
    fn sweep_has_table_rows_in_order() {
        let t = sweep_targets(&cfg(16, 16));
        assert_eq!(t.len(), 32);
        let names: Vec<String> = t.iter().map(AblationTarget::name).collect();
        assert_eq!(&names[..5], &["Decoder_1", "Decoder_2", "Encoder_2", "Decoder_3", "Encoder_3"]);
        assert_eq!(&names[29..], &["Encoder_16", "None", "Embedding"]);
        assert_eq!(sweep_targets(&cfg(2, 2)).len(), 4);
    }

    #[test]
    fn target_names_round_trip() {
        for t in sweep_targets(&cfg(4, 3)) {
            assert_eq!(t.name().parse::<AblationTarget>().unwrap(), t);
        }
        assert!("Middle_2".parse::<AblationTarget>().is_err());
    }

    #[test]
    fn first_encoder_and_last_decoder_rejected() {
        let c = cfg(4, 4);
        assert!(matches!(AblationTarget::Encoder(1).to_ablation(&c), Err(Error::Spec(_))));
        assert!(matches!(AblationTarget::Decoder(4).to_ablation(&c), Err(Error::Spec(_))));
        assert!(AblationTarget::Decoder(3).to_ablation(&c).is_ok());
    }
}

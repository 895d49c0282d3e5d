//! Mini-batch training with Adam, validation-based early stopping and
//! checkpoint persistence.

mod checkpoint;
pub mod gradcheck;
mod loss;
mod schedule;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, HistorySummary, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use loss::{kld, loss_grads, loss_total, LossGrads, LossParts};
pub use schedule::{drive, EarlyStopping, EpochRecord, EpochVerdict, TrainState};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{Layout, QuasiVideoSample, ScalerParams};
use crate::labels::{LabelKey, LabelVocab};
use crate::model::{Ablation, InitScheme, LayerSite, RcvaeConfig, RcvaeParams};
use crate::numcore::{streams, AdamConfig, AdamState, Matrix, Rng, RNG_ALGORITHM};
use crate::{Error, Result};

/// Columns per parallel chunk in inference passes.
const INFERENCE_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub init: InitScheme,
    /// EOL weight of the label distance used for unseen validation labels.
    pub match_weight: f64,
    /// Per-batch, per-layer probability of bypassing each removable layer
    /// during training (stochastic depth). Zero disables it.
    pub layer_drop: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 1000,
            patience: 100,
            batch_size: 128,
            learning_rate: 1e-3,
            seed: 0,
            init: InitScheme::default(),
            match_weight: 0.5,
            layer_drop: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.patience >= self.max_epochs {
            return Err(Error::Spec(format!(
                "need 0 <= patience < max_epochs, got {} and {}",
                self.patience, self.max_epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Spec("batch size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Spec(format!("bad learning rate {}", self.learning_rate)));
        }
        if !(0.0..=1.0).contains(&self.layer_drop) {
            return Err(Error::Spec(format!("layer drop {} outside [0, 1]", self.layer_drop)));
        }
        if !(0.0..=1.0).contains(&self.match_weight) {
            return Err(Error::Spec(format!("match weight {} outside [0, 1]", self.match_weight)));
        }
        Ok(())
    }
}

/// How the final model is fitted once validation is merged into training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FinalFit {
    /// Early-stop on a random holdout carved from the merged set.
    Holdout { fraction: f64 },
    /// Train for exactly `epochs` epochs and keep the last parameters.
    FixedEpochs { epochs: usize },
}

impl Default for FinalFit {
    fn default() -> Self {
        FinalFit::Holdout { fraction: 0.05 }
    }
}

/// Training and monitoring samples plus the preprocessing they came from.
#[derive(Debug, Clone, Copy)]
pub struct TrainInputs<'a> {
    pub train: &'a [QuasiVideoSample],
    pub val: &'a [QuasiVideoSample],
    pub scaler: ScalerParams,
    pub layout: Layout,
}

/// Features as a `d_x × N` matrix.
pub fn feature_matrix(samples: &[QuasiVideoSample]) -> Result<Matrix> {
    Matrix::from_columns(&samples.iter().map(|s| &s.features[..]).collect::<Vec<_>>())
}

/// Vocabulary indices for `labels`, matching unseen ones to their nearest entry.
pub fn resolve_indices(vocab: &LabelVocab, labels: impl IntoIterator<Item = LabelKey>, weight: f64) -> Result<Vec<usize>> {
    labels.into_iter().map(|k| vocab.resolve(&k, weight)).collect()
}

/// `J × n` standard-normal draws, filled column by column.
pub fn draw_noise(rng: &mut Rng, latent_dim: usize, n: usize) -> Matrix {
    let data = rng.normal_sample(latent_dim * n);
    Matrix::from_vec(n, latent_dim, data)
        .expect("finite normal draws")
        .transpose()
}

/// Reconstructions for every column of `x`, with noise drawn from `rng`.
/// Results do not depend on the thread count.
pub fn reconstruct(
    params: &RcvaeParams,
    x: &Matrix,
    indices: &[usize],
    rng: &mut Rng,
    ablation: &Ablation,
) -> Result<Matrix> {
    let n = x.cols();
    let eps = draw_noise(rng, params.config.latent_dim, n);
    let starts: Vec<usize> = (0..n).step_by(INFERENCE_CHUNK).collect();
    let chunks = starts
        .par_iter()
        .map(|&s| {
            let cols: Vec<usize> = (s..(s + INFERENCE_CHUNK).min(n)).collect();
            let out = params.forward_batch(
                &x.select_cols(&cols),
                &cols.iter().map(|&c| indices[c]).collect::<Vec<_>>(),
                &eps.select_cols(&cols),
                ablation,
            )?;
            Ok(out.recon)
        })
        .collect::<Result<Vec<Matrix>>>()?;
    let mut out = Matrix::zeros(x.rows(), n);
    for (s, chunk) in starts.iter().zip(chunks) {
        for c in 0..chunk.cols() {
            out.set_col(s + c, &chunk.col(c));
        }
    }
    Ok(out)
}

/// Mean absolute error over all elements.
pub fn mean_abs_error(a: &Matrix, b: &Matrix) -> Result<f64> {
    let d = a.zip_map(b, |p, q| (p - q).abs())?;
    Ok(d.sum() / (d.rows() * d.cols()) as f64)
}

/// Validation MAE on scaled features. Noise comes from a fixed stream, so
/// repeated calls with the same `seed` agree exactly.
pub fn validate(params: &RcvaeParams, x: &Matrix, indices: &[usize], seed: u64) -> Result<f64> {
    if x.cols() == 0 {
        return Err(Error::Data("empty validation set".into()));
    }
    let mut rng = Rng::seed_from(seed).substream(streams::VALIDATION);
    let recon = reconstruct(params, x, indices, &mut rng, &Ablation::NONE)?;
    mean_abs_error(&recon, x)
}

/// Loss and gradients for one batch; the building block of [`train`].
pub fn batch_gradients(
    params: &RcvaeParams,
    x: &Matrix,
    indices: &[usize],
    eps: &Matrix,
    ablation: &Ablation,
) -> Result<(LossParts, RcvaeParams)> {
    batch_gradients_dropping(params, x, indices, eps, ablation, &[])
}

fn batch_gradients_dropping(
    params: &RcvaeParams,
    x: &Matrix,
    indices: &[usize],
    eps: &Matrix,
    ablation: &Ablation,
    dropped: &[LayerSite],
) -> Result<(LossParts, RcvaeParams)> {
    let (out, mut tape) = params.forward_taped_dropping(x, indices, eps, ablation, dropped)?;
    let parts = loss_total(&out.recon, x, &out.stats)?;
    let g = loss_grads(&out.recon, x, &out.stats)?;
    let grads = params.backward(&mut tape, &g.recon, &g.mu, &g.logvar)?;
    Ok((parts, grads))
}

/// Encoder layers `2..=L_enc` then decoder layers `1..L_dec`.
pub fn removable_sites(model: &RcvaeConfig) -> Vec<LayerSite> {
    (2..=model.enc_layers)
        .map(LayerSite::Encoder)
        .chain((1..model.dec_layers).map(LayerSite::Decoder))
        .collect()
}

struct Monitor {
    x: Matrix,
    indices: Vec<usize>,
}

fn diverged(epoch: usize, e: Error) -> Error {
    match e {
        Error::Numeric(detail) => Error::Diverged { epoch, detail },
        other => other,
    }
}

fn fit(
    train_set: &[QuasiVideoSample],
    monitor_set: Option<&[QuasiVideoSample]>,
    scaler: ScalerParams,
    layout: Layout,
    model: RcvaeConfig,
    cfg: &TrainConfig,
    ablation: Ablation,
) -> Result<(Checkpoint, TrainState)> {
    cfg.validate()?;
    model.validate()?;
    if train_set.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    if model.d_x != layout.feature_len() {
        return Err(Error::Dimension(format!(
            "model d_x {} vs layout feature length {}",
            model.d_x,
            layout.feature_len()
        )));
    }
    let vocab = LabelVocab::build(train_set.iter().map(|s| &s.label))?;
    let x = feature_matrix(train_set)?;
    let indices = resolve_indices(&vocab, train_set.iter().map(|s| s.label), cfg.match_weight)?;
    let monitor = match monitor_set {
        Some([]) => return Err(Error::Data("empty validation set".into())),
        Some(m) => Some(Monitor {
            x: feature_matrix(m)?,
            indices: resolve_indices(&vocab, m.iter().map(|s| s.label), cfg.match_weight)?,
        }),
        None => None,
    };

    let base = Rng::seed_from(cfg.seed);
    let mut params = RcvaeParams::init(model, vocab.len(), cfg.init, &mut base.substream(streams::INIT))?;
    let mut adam = AdamState::new(AdamConfig::with_learning_rate(cfg.learning_rate), params.matrices());
    let names = params.names();
    let mut shuffle = base.substream(streams::SHUFFLE);
    let mut noise = base.substream(streams::TRAIN_NOISE);
    let mut dropper = base.substream(streams::LAYER_DROP);
    let droppable = if ablation.skip.is_none() && cfg.layer_drop > 0.0 {
        removable_sites(&model)
    } else {
        Vec::new()
    };
    let mut order: Vec<usize> = (0..x.cols()).collect();
    let mut best = params.clone();
    let patience = if monitor.is_some() { cfg.patience } else { usize::MAX };

    let epoch_fn = |epoch: usize, params: &mut RcvaeParams| -> Result<EpochRecord> {
        shuffle.shuffle(&mut order);
        let (mut total, mut mse, mut kl) = (0.0, 0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            let xb = x.select_cols(batch);
            let ib: Vec<usize> = batch.iter().map(|&i| indices[i]).collect();
            let eps = draw_noise(&mut noise, model.latent_dim, batch.len());
            let dropped: Vec<LayerSite> = droppable
                .iter()
                .copied()
                .filter(|_| dropper.uniform() < cfg.layer_drop)
                .collect();
            let (parts, grads) = batch_gradients_dropping(params, &xb, &ib, &eps, &ablation, &dropped)
                .map_err(|e| diverged(epoch, e))?;
            let w = batch.len() as f64;
            total += parts.total * w;
            mse += parts.mse * w;
            kl += parts.kld;
            adam.step(&mut params.matrices_mut(), &grads.matrices(), &names)
                .map_err(|e| diverged(epoch, e))?;
        }
        let n = x.cols() as f64;
        let val_mae = match &monitor {
            Some(m) => validate(params, &m.x, &m.indices, cfg.seed).map_err(|e| diverged(epoch, e))?,
            None => f64::NAN,
        };
        let record = EpochRecord {
            epoch,
            train_loss: total / n,
            train_mse: mse / n,
            train_kld: kl / n,
            val_mae,
        };
        log::debug!(
            "epoch {epoch}: loss {:.6} mse {:.6} kld {:.6} val_mae {:.6}",
            record.train_loss,
            record.train_mse,
            record.train_kld,
            record.val_mae
        );
        Ok(record)
    };

    // `drive` needs two closures touching `params`; route both through a cell.
    let params_cell = std::cell::RefCell::new(&mut params);
    let mut epoch_fn = epoch_fn;
    let state = drive(
        cfg.max_epochs,
        patience,
        |e| epoch_fn(e, &mut params_cell.borrow_mut()),
        |_| {
            best = (**params_cell.borrow()).clone();
            Ok(())
        },
    )?;
    let final_params = if monitor.is_some() { best } else { params };
    let summary = HistorySummary {
        epochs: state.epoch as u64,
        best_epoch: if monitor.is_some() { state.best_epoch } else { state.epoch } as u64,
        best_val: state.best_val,
    };
    let checkpoint = Checkpoint {
        params: final_params,
        vocab,
        scaler,
        layout,
        rng_algorithm: RNG_ALGORITHM.into(),
        seed: cfg.seed,
        history: summary,
    };
    Ok((checkpoint, state))
}

/// Trains on `inputs.train`, early-stopping on validation MAE over `inputs.val`,
/// and returns the best checkpoint seen.
pub fn train(inputs: &TrainInputs<'_>, model: RcvaeConfig, cfg: &TrainConfig) -> Result<(Checkpoint, TrainState)> {
    train_ablated(inputs, model, cfg, Ablation::NONE)
}

/// [`train`] with an ablation applied in every forward pass. Skipped layers
/// receive zero gradients and keep their initial values.
pub fn train_ablated(
    inputs: &TrainInputs<'_>,
    model: RcvaeConfig,
    cfg: &TrainConfig,
    ablation: Ablation,
) -> Result<(Checkpoint, TrainState)> {
    fit(inputs.train, Some(inputs.val), inputs.scaler, inputs.layout, model, cfg, ablation)
}

/// Final fit on `train ∪ val`.
pub fn fit_final(
    inputs: &TrainInputs<'_>,
    model: RcvaeConfig,
    cfg: &TrainConfig,
    mode: FinalFit,
) -> Result<(Checkpoint, TrainState)> {
    let merged: Vec<QuasiVideoSample> = inputs.train.iter().chain(inputs.val).cloned().collect();
    match mode {
        FinalFit::Holdout { fraction } => {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(Error::Spec(format!("holdout fraction {fraction} outside (0, 1)")));
            }
            if merged.len() < 2 {
                return Err(Error::Data("need at least two samples for a holdout".into()));
            }
            let mut order: Vec<usize> = (0..merged.len()).collect();
            Rng::seed_from(cfg.seed)
                .substream(streams::HOLDOUT)
                .shuffle(&mut order);
            let n_hold = ((merged.len() as f64 * fraction).round() as usize).clamp(1, merged.len() - 1);
            let hold: Vec<QuasiVideoSample> = order[..n_hold].iter().map(|&i| merged[i].clone()).collect();
            let rest: Vec<QuasiVideoSample> = order[n_hold..].iter().map(|&i| merged[i].clone()).collect();
            fit(&rest, Some(&hold), inputs.scaler, inputs.layout, model, cfg, Ablation::NONE)
        }
        FinalFit::FixedEpochs { epochs } => {
            let fixed = TrainConfig {
                max_epochs: epochs,
                patience: epochs.saturating_sub(1),
                ..cfg.clone()
            };
            fit(&merged, None, inputs.scaler, inputs.layout, model, &fixed, Ablation::NONE)
        }
    }
}

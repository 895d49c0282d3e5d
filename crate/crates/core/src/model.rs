//! The conditional VAE: an encoder over `concat(embedding, features)` producing
//! latent mean and log-variance, reparameterized sampling, and a decoder over
//! `concat(latent, embedding)` with a sigmoid output.
//!
//! Batched entry points take `d × B` matrices (one column per sample). The
//! single-sample functions are thin wrappers over them.

use serde::{Deserialize, Serialize};

use crate::labels::{match_similar, EmbeddingTable, LabelKey, LabelVocab};
use crate::numcore::{Activation, AffineLayer, GradTape, LayerStack, Matrix, Rng};
use crate::{Error, Result};

/// Encoder input is `concat(embedding, features)`.
pub const ENCODER_CONCAT_EMBEDDING_FIRST: u64 = 1;
/// Decoder input is `concat(latent, embedding)`.
pub const DECODER_CONCAT_LATENT_FIRST: u64 = 1;

pub const LOGVAR_MIN: f64 = -20.0;
pub const LOGVAR_MAX: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RcvaeConfig {
    pub d_x: usize,
    pub embed_dim: usize,
    pub latent_dim: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub hidden: usize,
}

impl RcvaeConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_x", self.d_x),
            ("embed_dim", self.embed_dim),
            ("latent_dim", self.latent_dim),
            ("hidden", self.hidden),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Spec(format!("{name} must be at least 1")));
        }
        if self.enc_layers < 2 || self.dec_layers < 2 {
            return Err(Error::Spec(format!(
                "need at least 2 encoder and decoder layers, got {}/{}",
                self.enc_layers, self.dec_layers
            )));
        }
        if self.hidden < self.latent_dim {
            return Err(Error::Spec(format!(
                "hidden width {} is smaller than latent dim {}",
                self.hidden, self.latent_dim
            )));
        }
        Ok(())
    }
}

/// How fresh parameters are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Glorot-uniform everywhere.
    Glorot,
    /// Layers that can be skipped start close to the identity map; the rest are Glorot.
    #[default]
    NearIdentity,
}

/// Noise multiplier on the Glorot draw for near-identity layers.
const NEAR_IDENTITY_NOISE: f64 = 0.1;

/// Posterior statistics, `J × B`. The log-variance is already clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentStats {
    pub mu: Matrix,
    pub logvar: Matrix,
}

impl LatentStats {
    pub fn batch_len(&self) -> usize {
        self.mu.cols()
    }
}

/// A layer in the 1-based numbering used by ablation tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerSite {
    Encoder(usize),
    Decoder(usize),
}

impl LayerSite {
    pub fn name(&self) -> String {
        match self {
            LayerSite::Encoder(k) => format!("Encoder_{k}"),
            LayerSite::Decoder(k) => format!("Decoder_{k}"),
        }
    }

    /// Encoder layers `2..=L_enc` and decoder layers `1..L_dec` can be skipped.
    pub fn check_removable(&self, config: &RcvaeConfig) -> Result<()> {
        let ok = match *self {
            LayerSite::Encoder(k) => (2..=config.enc_layers).contains(&k),
            LayerSite::Decoder(k) => (1..config.dec_layers).contains(&k),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Spec(format!(
                "{} is not removable in a {}/{} model",
                self.name(),
                config.enc_layers,
                config.dec_layers
            )))
        }
    }
}

/// Inference-time or training-time modification of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Ablation {
    pub skip: Option<LayerSite>,
    /// Replace the condition vector with zeros at both concatenation sites.
    pub zero_condition: bool,
}

impl Ablation {
    pub const NONE: Ablation = Ablation {
        skip: None,
        zero_condition: false,
    };

    pub fn skip(site: LayerSite) -> Self {
        Self {
            skip: Some(site),
            zero_condition: false,
        }
    }

    pub fn zero_condition() -> Self {
        Self {
            skip: None,
            zero_condition: true,
        }
    }

    fn validate(&self, config: &RcvaeConfig) -> Result<()> {
        match self.skip {
            Some(site) => site.check_removable(config),
            None => Ok(()),
        }
    }

    /// 0-based encoder and decoder indices bypassed by this ablation plus `extra`.
    fn skip_lists(&self, extra: &[LayerSite]) -> (Vec<usize>, Vec<usize>) {
        let (mut enc, mut dec) = (Vec::new(), Vec::new());
        for site in self.skip.iter().chain(extra) {
            match *site {
                LayerSite::Encoder(k) => enc.push(k - 1),
                LayerSite::Decoder(k) => dec.push(k - 1),
            }
        }
        (enc, dec)
    }
}

/// All trainable weights. Also used, zero-filled, as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct RcvaeParams {
    pub config: RcvaeConfig,
    pub encoder: LayerStack,
    pub mu_head: AffineLayer,
    pub logvar_head: AffineLayer,
    pub decoder: LayerStack,
    pub embedding: EmbeddingTable,
}

/// Output of a batched forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput {
    pub recon: Matrix,
    pub stats: LatentStats,
}

/// Everything [`RcvaeParams::backward`] needs from one taped forward pass.
#[derive(Debug)]
pub struct ForwardTape {
    encoder: GradTape,
    decoder: GradTape,
    head_input: Matrix,
    mu: Matrix,
    raw_logvar: Matrix,
    eps: Matrix,
    indices: Vec<usize>,
    zero_condition: bool,
}

fn check_rows(what: &str, m: &Matrix, rows: usize) -> Result<()> {
    if m.rows() != rows {
        return Err(Error::Dimension(format!(
            "{what} has {} rows, expected {rows}",
            m.rows()
        )));
    }
    Ok(())
}

fn clamp_logvar(raw: &Matrix) -> Matrix {
    raw.map(|v| v.clamp(LOGVAR_MIN, LOGVAR_MAX))
}

/// `z = μ + exp(logvar / 2) ⊙ ε`, batched.
pub fn reparameterize_batch(stats: &LatentStats, eps: &Matrix) -> Result<Matrix> {
    let sigma = stats
        .logvar
        .map(|lv| (lv.clamp(LOGVAR_MIN, LOGVAR_MAX) / 2.0).exp());
    let noise = sigma.zip_map(eps, |s, e| s * e)?;
    stats.mu.zip_map(&noise, |m, n| m + n)
}

/// Single-sample [`reparameterize_batch`].
pub fn reparameterize(mu: &[f64], logvar: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
    if mu.len() != logvar.len() || mu.len() != eps.len() {
        return Err(Error::Dimension(format!(
            "mu {}, logvar {}, eps {}",
            mu.len(),
            logvar.len(),
            eps.len()
        )));
    }
    Ok(mu
        .iter()
        .zip(logvar)
        .zip(eps)
        .map(|((m, lv), e)| m + (lv.clamp(LOGVAR_MIN, LOGVAR_MAX) / 2.0).exp() * e)
        .collect())
}

impl RcvaeParams {
    pub fn init(config: RcvaeConfig, n_labels: usize, scheme: InitScheme, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        if n_labels == 0 {
            return Err(Error::State("cannot build a model for an empty vocabulary".into()));
        }
        let h = config.hidden;
        let near = scheme == InitScheme::NearIdentity;
        let layer = |i: usize, o: usize, act, removable: bool, rng: &mut Rng| {
            if near && removable {
                AffineLayer::near_identity(i, o, act, NEAR_IDENTITY_NOISE, rng)
            } else {
                AffineLayer::glorot(i, o, act, rng)
            }
        };

        let mut enc = Vec::with_capacity(config.enc_layers);
        enc.push(layer(config.d_x + config.embed_dim, h, Activation::Relu, false, rng));
        for _ in 1..config.enc_layers {
            enc.push(layer(h, h, Activation::Relu, true, rng));
        }
        let mu_head = AffineLayer::glorot(h, config.latent_dim, Activation::Identity, rng);
        let logvar_head = AffineLayer::glorot(h, config.latent_dim, Activation::Identity, rng);

        let mut dec = Vec::with_capacity(config.dec_layers);
        dec.push(layer(config.latent_dim + config.embed_dim, h, Activation::Relu, true, rng));
        for _ in 1..config.dec_layers - 1 {
            dec.push(layer(h, h, Activation::Relu, true, rng));
        }
        dec.push(layer(h, config.d_x, Activation::Sigmoid, false, rng));

        Ok(Self {
            config,
            encoder: LayerStack::new(enc)?,
            mu_head,
            logvar_head,
            decoder: LayerStack::new(dec)?,
            embedding: EmbeddingTable::random(n_labels, config.embed_dim, rng),
        })
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let zero_stack = |s: &LayerStack| {
            LayerStack::new(
                s.layers()
                    .iter()
                    .map(|l| AffineLayer::zeros(l.in_dim(), l.out_dim(), l.activation()))
                    .collect(),
            )
            .expect("shapes copied from a valid stack")
        };
        let zero_layer = |l: &AffineLayer| AffineLayer::zeros(l.in_dim(), l.out_dim(), l.activation());
        Self {
            config: self.config,
            encoder: zero_stack(&self.encoder),
            mu_head: zero_layer(&self.mu_head),
            logvar_head: zero_layer(&self.logvar_head),
            decoder: zero_stack(&self.decoder),
            embedding: EmbeddingTable::new(Matrix::zeros(
                self.embedding.len(),
                self.embedding.dim(),
            )),
        }
    }

    /// Every parameter matrix in persistence order: encoder `(W, b)` pairs, μ
    /// head, log-variance head, decoder pairs, embedding table.
    pub fn matrices(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for l in self.encoder.layers() {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out.extend([
            &self.mu_head.weight,
            &self.mu_head.bias,
            &self.logvar_head.weight,
            &self.logvar_head.bias,
        ]);
        for l in self.decoder.layers() {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out.push(&self.embedding.weights);
        out
    }

    /// Mutable counterpart of [`matrices`](Self::matrices), same order.
    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for l in self.encoder.layers_mut() {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.push(&mut self.mu_head.weight);
        out.push(&mut self.mu_head.bias);
        out.push(&mut self.logvar_head.weight);
        out.push(&mut self.logvar_head.bias);
        for l in self.decoder.layers_mut() {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.push(&mut self.embedding.weights);
        out
    }

    /// Human-readable names, aligned with [`matrices`](Self::matrices).
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for k in 1..=self.encoder.len() {
            out.push(format!("encoder_{k}.weight"));
            out.push(format!("encoder_{k}.bias"));
        }
        out.extend(
            ["mu_head.weight", "mu_head.bias", "logvar_head.weight", "logvar_head.bias"]
                .map(String::from),
        );
        for k in 1..=self.decoder.len() {
            out.push(format!("decoder_{k}.weight"));
            out.push(format!("decoder_{k}.bias"));
        }
        out.push("embedding".into());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.matrices().iter().map(|m| m.rows() * m.cols()).sum()
    }

    fn condition(&self, indices: &[usize], zero: bool) -> Result<Matrix> {
        if zero {
            Ok(Matrix::zeros(self.config.embed_dim, indices.len()))
        } else {
            self.embedding.lookup(indices)
        }
    }

    fn heads(&self, a_last: &Matrix) -> Result<(Matrix, Matrix)> {
        let mu = self.mu_head.forward(a_last)?;
        let raw = self.logvar_head.forward(a_last)?;
        Ok((mu, raw))
    }

    /// Encodes a batch given explicit condition vectors (`D × B`).
    pub fn encode_batch(&self, x: &Matrix, cond: &Matrix, ablation: &Ablation) -> Result<LatentStats> {
        check_rows("features", x, self.config.d_x)?;
        check_rows("condition", cond, self.config.embed_dim)?;
        ablation.validate(&self.config)?;
        let input = Matrix::vstack(cond, x)?;
        let (enc_skip, _) = ablation.skip_lists(&[]);
        let a_last = self.encoder.forward(&input, &enc_skip)?;
        let (mu, raw) = self.heads(&a_last)?;
        Ok(LatentStats {
            mu,
            logvar: clamp_logvar(&raw),
        })
    }

    /// Decodes a batch of latents (`J × B`) with condition vectors (`D × B`).
    pub fn decode_batch(&self, z: &Matrix, cond: &Matrix, ablation: &Ablation) -> Result<Matrix> {
        check_rows("latent", z, self.config.latent_dim)?;
        check_rows("condition", cond, self.config.embed_dim)?;
        ablation.validate(&self.config)?;
        let input = Matrix::vstack(z, cond)?;
        let (_, dec_skip) = ablation.skip_lists(&[]);
        self.decoder.forward(&input, &dec_skip)
    }

    /// Full pass for vocabulary indices with injected noise `eps` (`J × B`).
    pub fn forward_batch(
        &self,
        x: &Matrix,
        indices: &[usize],
        eps: &Matrix,
        ablation: &Ablation,
    ) -> Result<BatchOutput> {
        let cond = self.condition(indices, ablation.zero_condition)?;
        let stats = self.encode_batch(x, &cond, ablation)?;
        let z = reparameterize_batch(&stats, eps)?;
        let recon = self.decode_batch(&z, &cond, ablation)?;
        Ok(BatchOutput { recon, stats })
    }

    /// [`forward_batch`](Self::forward_batch) that also records a tape for
    /// [`backward`](Self::backward).
    pub fn forward_taped(
        &self,
        x: &Matrix,
        indices: &[usize],
        eps: &Matrix,
        ablation: &Ablation,
    ) -> Result<(BatchOutput, ForwardTape)> {
        self.forward_taped_dropping(x, indices, eps, ablation, &[])
    }

    /// [`forward_taped`](Self::forward_taped) that additionally bypasses the
    /// removable layers in `dropped`, as done by stochastic layer dropping.
    pub fn forward_taped_dropping(
        &self,
        x: &Matrix,
        indices: &[usize],
        eps: &Matrix,
        ablation: &Ablation,
        dropped: &[LayerSite],
    ) -> Result<(BatchOutput, ForwardTape)> {
        check_rows("features", x, self.config.d_x)?;
        check_rows("noise", eps, self.config.latent_dim)?;
        if x.cols() != indices.len() || eps.cols() != indices.len() {
            return Err(Error::Dimension(format!(
                "batch of {} features, {} labels, {} noise columns",
                x.cols(),
                indices.len(),
                eps.cols()
            )));
        }
        ablation.validate(&self.config)?;
        for site in dropped {
            site.check_removable(&self.config)?;
        }
        let (enc_skip, dec_skip) = ablation.skip_lists(dropped);
        let cond = self.condition(indices, ablation.zero_condition)?;
        let mut enc_tape = GradTape::new();
        let a_last =
            self.encoder
                .forward_taped(&Matrix::vstack(&cond, x)?, &enc_skip, &mut enc_tape)?;
        let (mu, raw_logvar) = self.heads(&a_last)?;
        let stats = LatentStats {
            mu,
            logvar: clamp_logvar(&raw_logvar),
        };
        let z = reparameterize_batch(&stats, eps)?;
        let mut dec_tape = GradTape::new();
        let recon =
            self.decoder
                .forward_taped(&Matrix::vstack(&z, &cond)?, &dec_skip, &mut dec_tape)?;
        let tape = ForwardTape {
            encoder: enc_tape,
            decoder: dec_tape,
            head_input: a_last,
            mu: stats.mu.clone(),
            raw_logvar,
            eps: eps.clone(),
            indices: indices.to_vec(),
            zero_condition: ablation.zero_condition,
        };
        Ok((BatchOutput { recon, stats }, tape))
    }

    /// Reverse pass given `dL/d recon`, `dL/d μ` and `dL/d logvar` (the latter
    /// two for the loss's direct dependence; the path through `z` is added here).
    pub fn backward(
        &self,
        tape: &mut ForwardTape,
        grad_recon: &Matrix,
        grad_mu: &Matrix,
        grad_logvar: &Matrix,
    ) -> Result<RcvaeParams> {
        let j = self.config.latent_dim;
        let mut grads = self.zeros_like();

        let dec = self.decoder.backward(&mut tape.decoder, grad_recon)?;
        let (grad_z, grad_cond_dec) = dec.input.split_rows(j);
        for (g, lg) in grads.decoder.layers_mut().iter_mut().zip(dec.layers) {
            g.weight = lg.weight;
            g.bias = lg.bias;
        }

        let mut d_mu = grad_mu.clone();
        d_mu.add_assign(&grad_z)?;
        let mut d_lv = grad_logvar.clone();
        let cols = d_lv.cols();
        for r in 0..d_lv.rows() {
            for c in 0..cols {
                let raw = tape.raw_logvar.get(r, c);
                let lv = raw.clamp(LOGVAR_MIN, LOGVAR_MAX);
                let via_z = grad_z.get(r, c) * tape.eps.get(r, c) * 0.5 * (lv / 2.0).exp();
                let g = if (LOGVAR_MIN..=LOGVAR_MAX).contains(&raw) {
                    d_lv.get(r, c) + via_z
                } else {
                    0.0
                };
                d_lv.set(r, c, g);
            }
        }

        let (mu_grad, mut grad_a) = self.mu_head.backward(&tape.head_input, &tape.mu, &d_mu)?;
        grads.mu_head.weight = mu_grad.weight;
        grads.mu_head.bias = mu_grad.bias;
        let (lv_grad, grad_a_lv) =
            self.logvar_head
                .backward(&tape.head_input, &tape.raw_logvar, &d_lv)?;
        grads.logvar_head.weight = lv_grad.weight;
        grads.logvar_head.bias = lv_grad.bias;
        grad_a.add_assign(&grad_a_lv)?;

        let enc = self.encoder.backward(&mut tape.encoder, &grad_a)?;
        for (g, lg) in grads.encoder.layers_mut().iter_mut().zip(enc.layers) {
            g.weight = lg.weight;
            g.bias = lg.bias;
        }
        if !tape.zero_condition {
            let (grad_cond_enc, _) = enc.input.split_rows(self.config.embed_dim);
            let mut grad_cond = grad_cond_enc;
            grad_cond.add_assign(&grad_cond_dec)?;
            EmbeddingTable::accumulate_grad(&mut grads.embedding.weights, &tape.indices, &grad_cond);
        }
        Ok(grads)
    }

    /// Single-sample encode; `v` is the condition vector.
    pub fn encode(&self, x: &[f64], v: &[f64]) -> Result<LatentStats> {
        self.encode_batch(&Matrix::column(x), &Matrix::column(v), &Ablation::NONE)
    }

    /// Single-sample decode; output in `(0, 1)`.
    pub fn decode(&self, z: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .decode_batch(&Matrix::column(z), &Matrix::column(v), &Ablation::NONE)?
            .into_vec())
    }

    /// Single-sample pass with injected noise.
    pub fn forward_with_eps(&self, x: &[f64], index: usize, eps: &[f64]) -> Result<BatchOutput> {
        self.forward_batch(&Matrix::column(x), &[index], &Matrix::column(eps), &Ablation::NONE)
    }

    /// Single-sample pass; `label` must be in `vocab`, noise is drawn from `rng`.
    pub fn forward(&self, x: &[f64], vocab: &LabelVocab, label: &LabelKey, rng: &mut Rng) -> Result<BatchOutput> {
        let index = vocab
            .index_of(label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
        let eps = rng.normal_sample(self.config.latent_dim);
        self.forward_with_eps(x, index, &eps)
    }

    /// Draws `count` samples for `query` from the prior. Unseen queries are
    /// mapped to the closest vocabulary label; the label actually used is returned.
    pub fn generate(
        &self,
        vocab: &LabelVocab,
        query: &LabelKey,
        count: usize,
        rng: &mut Rng,
        weight: f64,
    ) -> Result<(LabelKey, Vec<Vec<f64>>)> {
        self.generate_with(vocab, query, count, rng, weight, &Ablation::NONE)
    }

    /// [`generate`](Self::generate) under an ablation.
    pub fn generate_with(
        &self,
        vocab: &LabelVocab,
        query: &LabelKey,
        count: usize,
        rng: &mut Rng,
        weight: f64,
        ablation: &Ablation,
    ) -> Result<(LabelKey, Vec<Vec<f64>>)> {
        if count == 0 {
            return Err(Error::Spec("generate count must be at least 1".into()));
        }
        let key = if vocab.contains(query) {
            *query
        } else {
            match_similar(vocab, query, weight)?
        };
        let index = vocab.index_of(&key).expect("key comes from the vocabulary");
        let eps = rng.normal_sample(self.config.latent_dim * count);
        let z = Matrix::from_vec(count, self.config.latent_dim, eps)?.transpose();
        let cond = self.condition(&vec![index; count], ablation.zero_condition)?;
        let out = self.decode_batch(&z, &cond, ablation)?;
        Ok((key, (0..count).map(|c| out.col(c)).collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> RcvaeConfig {
        RcvaeConfig {
            d_x: 8,
            embed_dim: 4,
            latent_dim: 2,
            enc_layers: 2,
            dec_layers: 2,
            hidden: 6,
        }
    }

    fn zero_params() -> RcvaeParams {
        let mut rng = Rng::seed_from(0);
        RcvaeParams::init(cfg(), 3, InitScheme::Glorot, &mut rng)
            .unwrap()
            .zeros_like()
    }

    #[test]
    fn encoder_input_length() {
        let p = zero_params();
        assert_eq!(p.encoder.in_dim(), 12);
        assert_eq!(p.decoder.in_dim(), 6);
    }

    #[test]
    fn zero_network_gives_standard_posterior_and_half_output() {
        let p = zero_params();
        let s = p.encode(&[0.3; 8], &[1.0; 4]).unwrap();
        assert_eq!(s.mu.into_vec(), vec![0.0; 2]);
        assert_eq!(s.logvar.into_vec(), vec![0.0; 2]);
        assert_eq!(p.decode(&[0.7, -0.1], &[1.0; 4]).unwrap(), vec![0.5; 8]);
    }

    #[test]
    fn reparameterize_examples() {
        assert_eq!(
            reparameterize(&[1.0, 2.0], &[0.0, 0.0], &[0.5, -0.5]).unwrap(),
            vec![1.5, 1.5]
        );
        assert_eq!(reparameterize(&[0.4], &[3.0], &[0.0]).unwrap(), vec![0.4]);
        let z = reparameterize(&[0.4], &[f64::NEG_INFINITY], &[5.0]).unwrap();
        assert!((z[0] - 0.4).abs() < 1e-3);
    }

    #[test]
    fn zero_eps_forward_equals_decode_of_mean() {
        let mut rng = Rng::seed_from(3);
        let p = RcvaeParams::init(cfg(), 3, InitScheme::Glorot, &mut rng).unwrap();
        let x: Vec<f64> = (0..8).map(|i| i as f64 / 8.0).collect();
        let out = p.forward_with_eps(&x, 1, &[0.0, 0.0]).unwrap();
        let v = p.embedding.row(1).unwrap().to_vec();
        let mu = p.encode(&x, &v).unwrap().mu.into_vec();
        assert_eq!(out.recon.into_vec(), p.decode(&mu, &v).unwrap());
    }

    #[test]
    fn different_labels_give_different_outputs() {
        let mut rng = Rng::seed_from(4);
        let mut p = RcvaeParams::init(cfg(), 2, InitScheme::Glorot, &mut rng).unwrap();
        p.embedding.weights = Matrix::from_rows(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0]]).unwrap();
        let x = [0.5; 8];
        let a = p.forward_with_eps(&x, 0, &[0.0, 0.0]).unwrap().recon;
        let b = p.forward_with_eps(&x, 1, &[0.0, 0.0]).unwrap().recon;
        assert_ne!(a, b);
    }

    #[test]
    fn generate_shape_range_and_determinism() {
        let mut rng = Rng::seed_from(5);
        let vocab = LabelVocab::from_strings(&["800_20", "600_20"]).unwrap();
        let p = RcvaeParams::init(cfg(), 2, InitScheme::Glorot, &mut rng).unwrap();
        let q = LabelKey::new(805, 22).unwrap();
        let (key, a) = p.generate(&vocab, &q, 3, &mut Rng::seed_from(9), 0.5).unwrap();
        assert_eq!(key, LabelKey::new(800, 20).unwrap());
        assert_eq!(a.len(), 3);
        assert!(a.iter().flatten().all(|v| *v > 0.0 && *v < 1.0));
        assert!(a.iter().all(|s| s.len() == 8));
        let (_, b) = p.generate(&vocab, &q, 3, &mut Rng::seed_from(9), 0.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_removable_sites_rejected() {
        let c = RcvaeConfig {
            enc_layers: 4,
            dec_layers: 4,
            ..cfg()
        };
        assert!(LayerSite::Encoder(1).check_removable(&c).is_err());
        assert!(LayerSite::Decoder(4).check_removable(&c).is_err());
        assert!(LayerSite::Encoder(4).check_removable(&c).is_ok());
        assert!(LayerSite::Decoder(1).check_removable(&c).is_ok());
    }

    #[test]
    fn invalid_configs() {
        assert!(RcvaeConfig { enc_layers: 1, ..cfg() }.validate().is_err());
        assert!(RcvaeConfig { hidden: 1, ..cfg() }.validate().is_err());
        assert!(RcvaeConfig { d_x: 0, ..cfg() }.validate().is_err());
    }
}

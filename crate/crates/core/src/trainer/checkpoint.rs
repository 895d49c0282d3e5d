//! Checkpoint binary format, little-endian throughout:
//!
//! | field | encoding |
//! |---|---|
//! | magic | `RCVA` |
//! | version | `u32` (1) |
//! | config | 12 × `u64`: d_x, embed_dim, latent_dim, enc_layers, dec_layers, hidden, vocab_size, height, width, depth convention, encoder concat order, decoder concat order |
//! | matrices | each `rows u64, cols u64, rows·cols f64`; encoder layers (weight, bias), μ head, log-variance head, decoder layers, embedding table |
//! | vocab | `count u64`, then each label as `u32` byte length + UTF-8 `EOL_ECL` |
//! | scaler | 4 × (`f64` min, `f64` max) for V, I, T, Qc |
//! | rng | algorithm id (`u32` length + UTF-8), seed `u64` |
//! | history | epochs `u64`, best epoch `u64`, best validation MAE `f64` |
//!
//! Anything after the history block is rejected.

use std::path::Path;

use crate::binio::{read_preamble, write_atomic, ByteReader, ByteWriter};
use crate::dataio::{Layout, ScalerParams, DEPTH_CONVENTION};
use crate::labels::{EmbeddingTable, LabelKey, LabelVocab};
use crate::model::{
    RcvaeConfig, RcvaeParams, DECODER_CONCAT_LATENT_FIRST, ENCODER_CONCAT_EMBEDDING_FIRST,
};
use crate::numcore::{Activation, AffineLayer, LayerStack, Matrix};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RCVA";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistorySummary {
    pub epochs: u64,
    pub best_epoch: u64,
    pub best_val: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: RcvaeParams,
    pub vocab: LabelVocab,
    pub scaler: ScalerParams,
    pub layout: Layout,
    pub rng_algorithm: String,
    pub seed: u64,
    pub history: HistorySummary,
}

fn read_layer(
    r: &mut ByteReader<'_>,
    in_dim: usize,
    out_dim: usize,
    act: Activation,
) -> Result<AffineLayer> {
    let at = r.pos();
    let weight = r.matrix()?;
    let bias = r.matrix()?;
    if weight.shape() != (out_dim, in_dim) || bias.shape() != (out_dim, 1) {
        return Err(Error::Format {
            offset: at,
            msg: format!(
                "layer {:?}/{:?}, expected {out_dim}x{in_dim}",
                weight.shape(),
                bias.shape()
            ),
        });
    }
    AffineLayer::new(weight, bias, act)
}

impl Checkpoint {
    pub fn config(&self) -> &RcvaeConfig {
        &self.params.config
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.params.config;
        let mut w = ByteWriter::new();
        w.bytes(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        for v in [
            c.d_x,
            c.embed_dim,
            c.latent_dim,
            c.enc_layers,
            c.dec_layers,
            c.hidden,
            self.vocab.len(),
            self.layout.height,
            self.layout.width,
        ] {
            w.usize(v);
        }
        w.u64(DEPTH_CONVENTION);
        w.u64(ENCODER_CONCAT_EMBEDDING_FIRST);
        w.u64(DECODER_CONCAT_LATENT_FIRST);
        for m in self.params.matrices() {
            w.matrix(m);
        }
        w.usize(self.vocab.len());
        for key in self.vocab.keys() {
            w.str(&key.to_string());
        }
        for (lo, hi) in self.scaler.ranges {
            w.f64(lo);
            w.f64(hi);
        }
        w.str(&self.rng_algorithm);
        w.u64(self.seed);
        w.u64(self.history.epochs);
        w.u64(self.history.best_epoch);
        w.f64(self.history.best_val);
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        read_preamble(&mut r, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
        let cfg_at = r.pos();
        let mut ints = [0usize; 9];
        for v in &mut ints {
            *v = r.usize()?;
        }
        let [d_x, embed_dim, latent_dim, enc_layers, dec_layers, hidden, vocab_size, height, width] =
            ints;
        for (what, expected) in [
            ("depth convention", DEPTH_CONVENTION),
            ("encoder concat order", ENCODER_CONCAT_EMBEDDING_FIRST),
            ("decoder concat order", DECODER_CONCAT_LATENT_FIRST),
        ] {
            let at = r.pos();
            let found = r.u64()?;
            if found != expected {
                return Err(Error::Format {
                    offset: at,
                    msg: format!("unknown {what} {found}"),
                });
            }
        }
        let config = RcvaeConfig {
            d_x,
            embed_dim,
            latent_dim,
            enc_layers,
            dec_layers,
            hidden,
        };
        let cfg_err = |e: Error| Error::Format {
            offset: cfg_at,
            msg: e.to_string(),
        };
        config.validate().map_err(cfg_err)?;
        let layout = Layout::new(height, width).map_err(cfg_err)?;
        if layout.feature_len() != d_x {
            return Err(Error::Format {
                offset: cfg_at,
                msg: format!("layout {height}x{width} does not match d_x {d_x}"),
            });
        }

        let h = hidden;
        let mut enc = Vec::with_capacity(enc_layers);
        for k in 0..enc_layers {
            let in_dim = if k == 0 { d_x + embed_dim } else { h };
            enc.push(read_layer(&mut r, in_dim, h, Activation::Relu)?);
        }
        let mu_head = read_layer(&mut r, h, latent_dim, Activation::Identity)?;
        let logvar_head = read_layer(&mut r, h, latent_dim, Activation::Identity)?;
        let mut dec = Vec::with_capacity(dec_layers);
        for k in 0..dec_layers {
            let in_dim = if k == 0 { latent_dim + embed_dim } else { h };
            let (out_dim, act) = if k + 1 == dec_layers {
                (d_x, Activation::Sigmoid)
            } else {
                (h, Activation::Relu)
            };
            dec.push(read_layer(&mut r, in_dim, out_dim, act)?);
        }
        let emb_at = r.pos();
        let table: Matrix = r.matrix()?;
        if table.shape() != (vocab_size, embed_dim) {
            return Err(Error::Format {
                offset: emb_at,
                msg: format!(
                    "embedding {:?}, expected {vocab_size}x{embed_dim}",
                    table.shape()
                ),
            });
        }

        let vocab_at = r.pos();
        let count = r.usize()?;
        if count != vocab_size {
            return Err(Error::Format {
                offset: vocab_at,
                msg: format!("vocab count {count} != {vocab_size}"),
            });
        }
        let mut keys = Vec::with_capacity(count);
        for _ in 0..count {
            let at = r.pos();
            let s = r.str()?;
            let key: LabelKey = s.parse().map_err(|e: Error| Error::Format {
                offset: at,
                msg: e.to_string(),
            })?;
            keys.push(key);
        }
        let vocab = LabelVocab::build(&keys).map_err(|e| Error::Format {
            offset: vocab_at,
            msg: e.to_string(),
        })?;
        if vocab.len() != count {
            return Err(Error::Format {
                offset: vocab_at,
                msg: "duplicate labels in vocab".into(),
            });
        }

        let scaler_at = r.pos();
        let mut ranges = [(0.0, 0.0); 4];
        for range in &mut ranges {
            *range = (r.f64()?, r.f64()?);
        }
        let scaler = ScalerParams::new(ranges).map_err(|e| Error::Format {
            offset: scaler_at,
            msg: e.to_string(),
        })?;
        let rng_algorithm = r.str()?;
        let seed = r.u64()?;
        let history = HistorySummary {
            epochs: r.u64()?,
            best_epoch: r.u64()?,
            best_val: r.f64()?,
        };
        r.expect_end()?;

        let params = RcvaeParams {
            config,
            encoder: LayerStack::new(enc)?,
            mu_head,
            logvar_head,
            decoder: LayerStack::new(dec)?,
            embedding: EmbeddingTable::new(table),
        };
        Ok(Self {
            params,
            vocab,
            scaler,
            layout,
            rng_algorithm,
            seed,
            history,
        })
    }

    /// Atomic write: temp file in the same directory, then rename.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path.as_ref())?)
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    checkpoint.save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::load(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InitScheme;
    use crate::numcore::{Rng, RNG_ALGORITHM};

    fn sample_checkpoint() -> Checkpoint {
        let layout = Layout::new(1, 2).unwrap();
        let config = RcvaeConfig {
            d_x: layout.feature_len(),
            embed_dim: 3,
            latent_dim: 2,
            enc_layers: 2,
            dec_layers: 3,
            hidden: 4,
        };
        let vocab = LabelVocab::from_strings(&["500_1", "500_2", "700_5"]).unwrap();
        let params =
            RcvaeParams::init(config, vocab.len(), InitScheme::Glorot, &mut Rng::seed_from(1))
                .unwrap();
        Checkpoint {
            params,
            vocab,
            scaler: ScalerParams::new([(2.0, 4.0), (0.0, 5.0), (20.0, 40.0), (0.0, 1.1)])
                .unwrap(),
            layout,
            rng_algorithm: RNG_ALGORITHM.into(),
            seed: 42,
            history: HistorySummary {
                epochs: 9,
                best_epoch: 4,
                best_val: 0.125,
            },
        }
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let c = sample_checkpoint();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn truncation_and_trailing_bytes() {
        let bytes = sample_checkpoint().to_bytes();
        for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(
                Checkpoint::from_bytes(&bytes[..cut]),
                Err(Error::Format { .. })
            ));
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(
            Checkpoint::from_bytes(&extra),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn future_version_rejected() {
        let mut bytes = sample_checkpoint().to_bytes();
        bytes[4..8].copy_from_slice(&(CHECKPOINT_VERSION + 1).to_le_bytes());
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::UnsupportedVersion { found: 2, supported: 1 })
        ));
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = sample_checkpoint().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::Format { offset: 0, .. })
        ));
    }
}

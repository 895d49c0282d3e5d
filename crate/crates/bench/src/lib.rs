//! Shared fixtures for the benchmarks.

use rcvae_core::dataio::{build_samples, pack, synth_generate, QuasiVideoSample, ScalerParams};
use rcvae_core::numcore::{streams, Rng};
use rcvae_core::{Layout, RcvaeConfig, Result};

/// A small packed dataset: `batteries × cycles` samples on an `side × side` layout.
pub fn desk_samples(batteries: usize, cycles: u32, side: usize, seed: u64) -> Result<(Vec<QuasiVideoSample>, Layout)> {
    let layout = Layout::new(side, side)?;
    let mut rng = Rng::seed_from(seed).substream(streams::SYNTH);
    let records = synth_generate(&mut rng, batteries, cycles, (300, 1200))?;
    let raw = build_samples(&records, cycles as usize, layout.series_len())?;
    let scaler = ScalerParams::fit(raw.iter().map(|r| &r.series))?;
    let mut report = Default::default();
    raw.iter()
        .map(|r| pack(&scaler.apply_cycle(&r.series, &mut report), r.label, &r.battery_id, layout))
        .collect::<Result<Vec<_>>>()
        .map(|s| (s, layout))
}

pub fn desk_model(layout: Layout, layers: usize) -> RcvaeConfig {
    RcvaeConfig {
        d_x: layout.feature_len(),
        embed_dim: 16,
        latent_dim: 8,
        enc_layers: layers,
        dec_layers: layers,
        hidden: 64,
    }
}

//! Central finite-difference check of the analytic loss gradients.

use super::{batch_gradients, loss_total};
use crate::model::{Ablation, InitScheme, RcvaeConfig, RcvaeParams};
use crate::numcore::{Matrix, Rng};
use crate::Result;

/// A tiny random model with one batch of inputs, labels and noise.
#[derive(Debug, Clone)]
pub struct ToyProblem {
    pub params: RcvaeParams,
    pub x: Matrix,
    pub indices: Vec<usize>,
    pub eps: Matrix,
}

/// Random toy model with `layers` encoder and decoder layers, input width
/// 2–8, embedding 1–8, latent 1–4, hidden 4–8, three labels and a batch of 3.
pub fn toy_problem(seed: u64, layers: usize) -> Result<ToyProblem> {
    let mut rng = Rng::seed_from(seed);
    let cfg = RcvaeConfig {
        d_x: 2 + rng.below(7),
        embed_dim: 1 + rng.below(8),
        latent_dim: 1 + rng.below(4),
        enc_layers: layers,
        dec_layers: layers,
        hidden: 4 + rng.below(5),
    };
    let mut params = RcvaeParams::init(cfg, 3, InitScheme::Glorot, &mut rng)?;
    // Non-zero biases keep pre-activations off the ReLU kink, where the
    // derivative (and so the finite-difference oracle) is undefined.
    for m in params.matrices_mut().into_iter().filter(|m| m.cols() == 1) {
        for b in m.as_mut_slice() {
            *b = 0.1 * rng.normal();
        }
    }
    let batch = 3;
    let x = Matrix::from_vec(cfg.d_x, batch, (0..cfg.d_x * batch).map(|_| rng.uniform()).collect())?;
    let eps = Matrix::from_vec(cfg.latent_dim, batch, rng.normal_sample(cfg.latent_dim * batch))?;
    Ok(ToyProblem {
        params,
        x,
        indices: vec![0, 2, 0],
        eps,
    })
}

/// Largest relative error between analytic and central-difference gradients
/// over every parameter. The denominator is `max(|analytic|, |numeric|,
/// denom_floor)`, so near-zero gradients are compared absolutely.
pub fn max_relative_error(problem: &ToyProblem, ablation: &Ablation, step: f64, denom_floor: f64) -> Result<f64> {
    let ToyProblem {
        params,
        x,
        indices,
        eps,
    } = problem;
    let loss = |p: &RcvaeParams| -> Result<f64> {
        let out = p.forward_batch(x, indices, eps, ablation)?;
        Ok(loss_total(&out.recon, x, &out.stats)?.total)
    };
    let (_, grads) = batch_gradients(params, x, indices, eps, ablation)?;
    let analytic: Vec<Vec<f64>> = grads.matrices().iter().map(|m| m.as_slice().to_vec()).collect();
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for (mi, a) in analytic.iter().enumerate() {
        for (k, &ak) in a.iter().enumerate() {
            let orig = probe.matrices()[mi].as_slice()[k];
            probe.matrices_mut()[mi].as_mut_slice()[k] = orig + step;
            let up = loss(&probe)?;
            probe.matrices_mut()[mi].as_mut_slice()[k] = orig - step;
            let down = loss(&probe)?;
            probe.matrices_mut()[mi].as_mut_slice()[k] = orig;
            let numeric = (up - down) / (2.0 * step);
            worst = worst.max((ak - numeric).abs() / ak.abs().max(numeric.abs()).max(denom_floor));
        }
    }
    Ok(worst)
}

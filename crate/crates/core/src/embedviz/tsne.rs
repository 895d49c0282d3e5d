use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numcore::{streams, Matrix, Rng};
use crate::{Error, Result};

/// Entropy tolerance of the per-point bandwidth search, in nats.
pub const ENTROPY_TOLERANCE: f64 = 1e-5;
const BANDWIDTH_STEPS: usize = 200;
/// Standard deviation of the initial layout.
const INIT_STD: f64 = 1e-4;
const MIN_GAIN: f64 = 0.01;
const P_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub exaggeration: f64,
    /// Iterations run with exaggerated affinities and momentum 0.5.
    pub exaggeration_iters: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            learning_rate: 200.0,
            seed: 0,
        }
    }
}

impl TsneConfig {
    /// Largest perplexity strictly allowed for `n` points is `(n - 1) / 3`.
    pub fn validate(&self, n: usize) -> Result<()> {
        if n < 4 {
            return Err(Error::Spec(format!("t-SNE needs at least 4 points, got {n}")));
        }
        let cap = (n as f64 - 1.0) / 3.0;
        if !(self.perplexity > 0.0 && self.perplexity < cap) {
            return Err(Error::Spec(format!(
                "perplexity {} must lie in (0, {cap}) for {n} points",
                self.perplexity
            )));
        }
        if !(self.learning_rate > 0.0 && self.exaggeration >= 1.0) {
            return Err(Error::Spec("t-SNE needs learning_rate > 0 and exaggeration >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneResult {
    /// `N × 2` layout.
    pub points: Matrix,
    /// KL(P‖Q) at the initial layout followed by one value per iteration.
    pub kl_history: Vec<f64>,
    /// True when the input rows were identical and the noise fallback was used.
    pub degenerate: bool,
}

/// Squared Euclidean distances between rows.
pub fn pairwise_sq_distances(x: &Matrix) -> Matrix {
    let n = x.rows();
    let mut d = Matrix::zeros(n, n);
    d.as_mut_slice()
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b).powi(2)).sum();
            }
        });
    d
}

/// Row-conditional affinities `p_{j|i}` with each row's bandwidth set by
/// bisection so its Shannon entropy (nats) matches `ln(perplexity)`. Returns
/// the row-stochastic matrix and the achieved entropies.
pub fn conditional_affinities(sq_dist: &Matrix, perplexity: f64) -> (Matrix, Vec<f64>) {
    let n = sq_dist.rows();
    let target = perplexity.ln();
    let mut p = Matrix::zeros(n, n);
    let entropies: Vec<f64> = p
        .as_mut_slice()
        .par_chunks_mut(n)
        .enumerate()
        .map(|(i, row)| calibrate_row(sq_dist.row(i), i, target, row))
        .collect();
    (p, entropies)
}

/// Fills `out` with the Gaussian neighbour distribution of point `i` and
/// returns its entropy.
fn calibrate_row(dist: &[f64], i: usize, target: f64, out: &mut [f64]) -> f64 {
    let d_min = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let mut beta = 1.0;
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    let mut entropy = row_entropy(dist, i, d_min, beta, out);
    for _ in 0..BANDWIDTH_STEPS {
        let gap = entropy - target;
        if gap.abs() < ENTROPY_TOLERANCE {
            break;
        }
        if gap > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = 0.5 * (beta + lo);
        }
        entropy = row_entropy(dist, i, d_min, beta, out);
    }
    entropy
}

fn row_entropy(dist: &[f64], i: usize, d_min: f64, beta: f64, out: &mut [f64]) -> f64 {
    let mut sum = 0.0;
    let mut weighted = 0.0;
    for (j, (o, &d)) in out.iter_mut().zip(dist).enumerate() {
        let shifted = d - d_min;
        *o = if j == i { 0.0 } else { (-beta * shifted).exp() };
        sum += *o;
        weighted += shifted * *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    sum.ln() + beta * weighted / sum
}

/// Exact t-SNE of the rows of `x` into two dimensions.
pub fn tsne_2d(x: &Matrix, cfg: &TsneConfig) -> Result<TsneResult> {
    let n = x.rows();
    cfg.validate(n)?;
    x.ensure_finite("t-SNE input")?;
    let mut rng = Rng::seed_from(cfg.seed).substream(streams::TSNE);
    let mut y = Matrix::from_vec(n, 2, rng.normal_sample(2 * n).into_iter().map(|v| v * INIT_STD).collect())?;

    let sq = pairwise_sq_distances(x);
    if sq.max_abs() == 0.0 {
        log::warn!("t-SNE input rows are identical; returning the seeded noise layout");
        return Ok(TsneResult {
            points: y,
            kl_history: Vec::new(),
            degenerate: true,
        });
    }
    let (cond, _) = conditional_affinities(&sq, cfg.perplexity);
    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let v = (cond.get(i, j) + cond.get(j, i)) / (2.0 * n as f64);
            p.set(i, j, if i == j { 0.0 } else { v.max(P_FLOOR) });
        }
    }

    let mut update = Matrix::zeros(n, 2);
    let mut gains = Matrix::filled(n, 2, 1.0);
    let mut kl_history = Vec::with_capacity(cfg.iterations + 1);
    let (_, kl0) = gradient(&y, &p, 1.0);
    kl_history.push(kl0);
    for it in 0..cfg.iterations {
        let early = it < cfg.exaggeration_iters;
        let (exaggeration, momentum) = if early { (cfg.exaggeration, 0.5) } else { (1.0, 0.8) };
        let (grad, _) = gradient(&y, &p, exaggeration);
        for ((g, u), gain) in grad
            .as_slice()
            .iter()
            .zip(update.as_mut_slice())
            .zip(gains.as_mut_slice())
        {
            *gain = if g.signum() != u.signum() { *gain + 0.2 } else { *gain * 0.8 };
            *gain = gain.max(MIN_GAIN);
            *u = momentum * *u - cfg.learning_rate * *gain * g;
        }
        y.add_assign(&update)?;
        center(&mut y);
        y.ensure_finite("t-SNE layout")?;
        kl_history.push(gradient(&y, &p, 1.0).1);
    }
    Ok(TsneResult {
        points: y,
        kl_history,
        degenerate: false,
    })
}

/// Gradient of KL(αP‖Q) with respect to the layout, and KL(P‖Q) itself.
fn gradient(y: &Matrix, p: &Matrix, exaggeration: f64) -> (Matrix, f64) {
    let n = y.rows();
    let mut num = Matrix::zeros(n, n);
    num.as_mut_slice()
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                if i != j {
                    let dx = y.get(i, 0) - y.get(j, 0);
                    let dy = y.get(i, 1) - y.get(j, 1);
                    *v = 1.0 / (1.0 + dx * dx + dy * dy);
                }
            }
        });
    let row_sums: Vec<f64> = (0..n).map(|i| num.row(i).iter().sum()).collect();
    let z: f64 = row_sums.iter().sum();

    let mut grad = Matrix::zeros(n, 2);
    let kl_rows: Vec<f64> = grad
        .as_mut_slice()
        .par_chunks_mut(2)
        .enumerate()
        .map(|(i, g)| {
            let mut kl = 0.0;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (pij, nij) = (p.get(i, j), num.get(i, j));
                let qij = (nij / z).max(P_FLOOR);
                let w = (exaggeration * pij - qij) * nij;
                g[0] += 4.0 * w * (y.get(i, 0) - y.get(j, 0));
                g[1] += 4.0 * w * (y.get(i, 1) - y.get(j, 1));
                kl += pij * (pij / qij).ln();
            }
            kl
        })
        .collect();
    (grad, kl_rows.iter().sum())
}

fn center(y: &mut Matrix) {
    let n = y.rows() as f64;
    for c in 0..2 {
        let mean = (0..y.rows()).map(|r| y.get(r, c)).sum::<f64>() / n;
        for r in 0..y.rows() {
            y.set(r, c, y.get(r, c) - mean);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_matrix(n: usize, d: usize, seed: u64) -> Matrix {
        Matrix::from_vec(n, d, Rng::seed_from(seed).normal_sample(n * d)).unwrap()
    }

    #[test]
    fn rows_sum_to_one_and_hit_target_entropy() {
        let x = random_matrix(40, 16, 1);
        let (p, h) = conditional_affinities(&pairwise_sq_distances(&x), 10.0);
        for (i, hi) in h.iter().enumerate() {
            assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert_eq!(p.get(i, i), 0.0);
            assert!((hi - 10f64.ln()).abs() < ENTROPY_TOLERANCE, "row {i}: {hi}");
        }
    }

    #[test]
    fn perplexity_bounds_enforced() {
        let cfg = TsneConfig {
            perplexity: 5.0,
            ..Default::default()
        };
        assert!(cfg.validate(17).is_ok());
        assert!(cfg.validate(16).is_err());
        assert!(cfg.validate(3).is_err());
    }

    #[test]
    fn kl_decreases() {
        let x = random_matrix(50, 16, 2);
        let cfg = TsneConfig {
            perplexity: 10.0,
            ..Default::default()
        };
        let r = tsne_2d(&x, &cfg).unwrap();
        assert_eq!(r.kl_history.len(), 1001);
        assert!(r.kl_history.last().unwrap() < &r.kl_history[0]);
        assert!(r.kl_history[1000] <= r.kl_history[cfg.exaggeration_iters + 1]);
    }

    #[test]
    fn identical_rows_fall_back_to_noise() {
        let x = Matrix::filled(10, 3, 0.5);
        let cfg = TsneConfig {
            perplexity: 2.0,
            ..Default::default()
        };
        let r = tsne_2d(&x, &cfg).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.points.shape(), (10, 2));
        assert!(r.points.max_abs() < 1e-2);
        assert_eq!(r, tsne_2d(&x, &cfg).unwrap());
    }
}

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::{Error, Result};

/// Candidate per-dimension RBF length scales (inputs live in the unit cube).
pub const LENGTH_SCALE_GRID: [f64; 6] = [0.05, 0.1, 0.2, 0.4, 0.8, 1.6];
/// Diagonal jitter tried in order when the kernel matrix is not numerically PD.
const JITTER_LADDER: [f64; 6] = [0.0, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2];
/// Coordinate-search passes over the length-scale grid.
const LENGTH_SCALE_PASSES: usize = 2;

/// Zero-mean GP with a unit-variance RBF kernel on standardized targets.
#[derive(Debug, Clone)]
pub struct GaussianProcess {
    xs: Vec<Vec<f64>>,
    length_scales: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
    lml: f64,
}

impl GaussianProcess {
    /// Fits with length scales chosen by coordinate search on the log marginal
    /// likelihood over [`LENGTH_SCALE_GRID`].
    pub fn fit(xs: &[Vec<f64>], ys: &[f64], noise: f64) -> Result<Self> {
        let dims = xs.first().map_or(0, Vec::len);
        let mut best = Self::fit_with(xs, ys, noise, &vec![LENGTH_SCALE_GRID[3]; dims])?;
        for _ in 0..LENGTH_SCALE_PASSES {
            for d in 0..dims {
                for &ell in &LENGTH_SCALE_GRID {
                    if ell == best.length_scales[d] {
                        continue;
                    }
                    let mut scales = best.length_scales.clone();
                    scales[d] = ell;
                    if let Ok(gp) = Self::fit_with(xs, ys, noise, &scales) {
                        if gp.lml > best.lml {
                            best = gp;
                        }
                    }
                }
            }
        }
        Ok(best)
    }

    pub fn fit_with(xs: &[Vec<f64>], ys: &[f64], noise: f64, length_scales: &[f64]) -> Result<Self> {
        let n = xs.len();
        if n == 0 || n != ys.len() {
            return Err(Error::Dimension(format!("{n} inputs for {} targets", ys.len())));
        }
        if xs.iter().any(|x| x.len() != length_scales.len()) {
            return Err(Error::Dimension("input width differs from length-scale count".into()));
        }
        if ys.iter().any(|y| !y.is_finite()) {
            return Err(Error::Numeric("GP targets".into()));
        }
        let y_mean = ys.iter().sum::<f64>() / n as f64;
        let var = ys.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        let y = DVector::from_iterator(n, ys.iter().map(|v| (v - y_mean) / y_scale));

        let k = DMatrix::from_fn(n, n, |i, j| rbf(&xs[i], &xs[j], length_scales));
        let (chol, jitter) = JITTER_LADDER
            .iter()
            .find_map(|&j| {
                let mut kn = k.clone();
                for i in 0..n {
                    kn[(i, i)] += noise + j;
                }
                kn.cholesky().map(|c| (c, j))
            })
            .ok_or_else(|| Error::Numeric("GP kernel matrix not positive definite after jitter".into()))?;
        let alpha = chol.solve(&y);
        let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
        let lml = -0.5 * y.dot(&alpha) - log_det - 0.5 * n as f64 * std::f64::consts::TAU.ln();
        Ok(Self {
            xs: xs.to_vec(),
            length_scales: length_scales.to_vec(),
            y_mean,
            y_scale,
            chol,
            alpha,
            jitter,
            lml,
        })
    }

    pub fn length_scales(&self) -> &[f64] {
        &self.length_scales
    }

    /// Diagonal jitter that made the kernel factorizable (0 when none was needed).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Log marginal likelihood of the standardized targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    /// Posterior mean and standard deviation of the latent function at `x`.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let k = DVector::from_iterator(self.xs.len(), self.xs.iter().map(|xi| rbf(xi, x, &self.length_scales)));
        let mean = k.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k)
            .expect("Cholesky factor has a positive diagonal");
        let var = (1.0 - v.dot(&v)).max(0.0);
        (self.y_mean + self.y_scale * mean, self.y_scale * var.sqrt())
    }
}

fn rbf(a: &[f64], b: &[f64], length_scales: &[f64]) -> f64 {
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(length_scales)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum();
    (-0.5 * r2).exp()
}

/// Expected improvement below `best` for a Gaussian prediction; never negative.
pub fn expected_improvement(mean: f64, std: f64, best: f64) -> f64 {
    let gain = best - mean;
    if std <= 1e-12 {
        return gain.max(0.0);
    }
    let unit = Normal::new(0.0, 1.0).expect("standard normal");
    let z = gain / std;
    (gain * unit.cdf(z) + std * unit.pdf(z)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ei_is_zero_without_variance_at_the_optimum() {
        assert_eq!(expected_improvement(1.0, 0.0, 1.0), 0.0);
        assert_eq!(expected_improvement(2.0, 0.0, 1.0), 0.0);
        assert!((expected_improvement(0.5, 0.0, 1.0) - 0.5).abs() < 1e-15);
        assert!(expected_improvement(3.0, 0.1, 1.0) >= 0.0);
    }

    #[test]
    fn posterior_interpolates_observations() {
        let xs: Vec<Vec<f64>> = [0.1, 0.35, 0.6, 0.9].iter().map(|&x| vec![x]).collect();
        let ys = [0.3, -0.2, 0.8, 0.1];
        let gp = GaussianProcess::fit(&xs, &ys, 1e-6).unwrap();
        for (x, y) in xs.iter().zip(ys) {
            let (m, s) = gp.predict(x);
            assert!((m - y).abs() < 1e-3, "mean {m} vs {y}");
            assert!(s < 1e-2, "std {s}");
        }
    }

    #[test]
    fn duplicate_points_use_the_jitter_path() {
        let xs = vec![vec![0.5, 0.5], vec![0.5, 0.5], vec![0.2, 0.9]];
        let ys = [1.0, 1.0, 2.0];
        let gp = GaussianProcess::fit_with(&xs, &ys, 0.0, &[0.4, 0.4]).unwrap();
        assert!(gp.jitter() > 0.0);
        assert!(GaussianProcess::fit(&xs, &ys, 1e-6).is_ok());
    }

    #[test]
    fn constant_targets_do_not_break_scaling() {
        let xs = vec![vec![0.0], vec![1.0]];
        let gp = GaussianProcess::fit(&xs, &[2.0, 2.0], 1e-6).unwrap();
        assert!((gp.predict(&[0.5]).0 - 2.0).abs() < 1e-9);
    }
}

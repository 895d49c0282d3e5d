use crate::model::LatentStats;
use crate::numcore::Matrix;
use crate::{Error, Result};

/// Loss components for one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub mse: f64,
    pub kld: f64,
}

/// Gradients of [`loss_total`] with respect to its direct inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrads {
    pub recon: Matrix,
    pub mu: Matrix,
    pub logvar: Matrix,
}

fn check(recon: &Matrix, x: &Matrix, stats: &LatentStats) -> Result<usize> {
    if recon.shape() != x.shape() {
        return Err(Error::Dimension(format!(
            "reconstruction {:?} vs target {:?}",
            recon.shape(),
            x.shape()
        )));
    }
    if stats.mu.shape() != stats.logvar.shape() || stats.mu.cols() != x.cols() {
        return Err(Error::Dimension(format!(
            "latent stats {:?}/{:?} for a batch of {}",
            stats.mu.shape(),
            stats.logvar.shape(),
            x.cols()
        )));
    }
    if x.cols() == 0 || x.rows() == 0 {
        return Err(Error::Dimension("empty batch".into()));
    }
    for (what, m) in [
        ("reconstruction", recon),
        ("target", x),
        ("mu", &stats.mu),
        ("logvar", &stats.logvar),
    ] {
        m.ensure_finite(what)?;
    }
    Ok(x.cols())
}

/// KL divergence to the standard normal, summed over batch and latent dims.
pub fn kld(stats: &LatentStats) -> f64 {
    let s: f64 = stats
        .mu
        .as_slice()
        .iter()
        .zip(stats.logvar.as_slice())
        .map(|(m, lv)| 1.0 + lv - m * m - lv.exp())
        .sum();
    -0.5 * s
}

/// `total = MSE + KLD / K`, with MSE the mean over every element of the `K`
/// columns and KLD summed over the batch.
pub fn loss_total(recon: &Matrix, x: &Matrix, stats: &LatentStats) -> Result<LossParts> {
    let k = check(recon, x, stats)?;
    let n = (x.rows() * x.cols()) as f64;
    let mse = recon
        .as_slice()
        .iter()
        .zip(x.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    let kld = kld(stats);
    let total = mse + kld / k as f64;
    if !total.is_finite() {
        return Err(Error::Numeric("loss".into()));
    }
    Ok(LossParts { total, mse, kld })
}

/// Analytic gradients of [`loss_total`]. `logvar` is treated as the clamped value.
pub fn loss_grads(recon: &Matrix, x: &Matrix, stats: &LatentStats) -> Result<LossGrads> {
    let k = check(recon, x, stats)? as f64;
    let n = (x.rows() * x.cols()) as f64;
    Ok(LossGrads {
        recon: recon.zip_map(x, |a, b| 2.0 * (a - b) / n)?,
        mu: stats.mu.map(|m| m / k),
        logvar: stats.logvar.map(|lv| 0.5 * (lv.exp() - 1.0) / k),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(mu: &[f64], lv: &[f64]) -> LatentStats {
        LatentStats {
            mu: Matrix::column(mu),
            logvar: Matrix::column(lv),
        }
    }

    #[test]
    fn perfect_reconstruction_standard_posterior() {
        let x = Matrix::column(&[0.2, 0.9]);
        let p = loss_total(&x, &x, &stats(&[0.0], &[0.0])).unwrap();
        assert_eq!((p.total, p.mse, p.kld), (0.0, 0.0, 0.0));
    }

    #[test]
    fn hand_computed_mse() {
        let p = loss_total(
            &Matrix::column(&[1.0, 1.0]),
            &Matrix::column(&[0.0, 1.0]),
            &stats(&[0.0], &[0.0]),
        )
        .unwrap();
        assert!((p.mse - 0.5).abs() < 1e-12);
        assert_eq!(p.kld, 0.0);
        assert!((p.total - 0.5).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_kld_divided_by_batch() {
        let x = Matrix::from_columns(&[vec![0.3], vec![0.6]]).unwrap();
        let s = LatentStats {
            mu: Matrix::from_columns(&[vec![1.0], vec![0.0]]).unwrap(),
            logvar: Matrix::zeros(1, 2),
        };
        let p = loss_total(&x, &x, &s).unwrap();
        assert!((p.kld - 0.5).abs() < 1e-12);
        assert!((p.total - 0.25).abs() < 1e-12);
    }

    #[test]
    fn non_finite_is_numeric_error() {
        let x = Matrix::column(&[0.2]);
        let mut bad = x.clone();
        bad.as_mut_slice()[0] = f64::NAN;
        assert!(matches!(
            loss_total(&bad, &x, &stats(&[0.0], &[0.0])),
            Err(Error::Numeric(_))
        ));
    }
}

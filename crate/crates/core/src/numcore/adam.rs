use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments are kept per parameter matrix, in the
/// order the parameters are passed to [`step`](AdamState::step).
#[derive(Debug, Clone)]
pub struct AdamState {
    config: AdamConfig,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl AdamState {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Matrix>) -> Self {
        let first: Vec<Matrix> = params
            .into_iter()
            .map(|p| Matrix::zeros(p.rows(), p.cols()))
            .collect();
        let second = first.clone();
        Self {
            config,
            step: 0,
            first,
            second,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update. Nothing is modified if any gradient is non-finite; the error
    /// names the offending parameter.
    pub fn step(
        &mut self,
        params: &mut [&mut Matrix],
        grads: &[&Matrix],
        names: &[String],
    ) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::Dimension(format!(
                "adam tracks {} parameters, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            let name = names.get(i).map_or("?", String::as_str);
            if p.shape() != g.shape() || p.shape() != self.first[i].shape() {
                return Err(Error::Dimension(format!(
                    "{name}: param {:?}, grad {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
            if !g.is_finite() {
                return Err(Error::Numeric(format!("gradient of {name}")));
            }
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            let p = p.as_mut_slice();
            let g = g.as_slice();
            let m = m.as_mut_slice();
            let v = v.as_mut_slice();
            for k in 0..p.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                let m_hat = m[k] / bias1;
                let v_hat = v[k] / bias2;
                p[k] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [&mut Matrix],
    grads: &[&Matrix],
    names: &[String],
) -> Result<()> {
    state.step(params, grads, names)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Matrix::from_rows(&[&[1.0, -2.0]]).unwrap();
        let g = Matrix::zeros(1, 2);
        let mut adam = AdamState::new(AdamConfig::default(), [&p]);
        adam.step(&mut [&mut p], &[&g], &names(1)).unwrap();
        assert_eq!(p.as_slice(), &[1.0, -2.0]);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = g and v̂ = g² at t = 1, so Δ = -η·g/(|g| + ε) ≈ -η.
        let mut p = Matrix::column(&[0.0]);
        let g = Matrix::column(&[1.0]);
        let mut adam = AdamState::new(AdamConfig::with_learning_rate(0.1), [&p]);
        adam.step(&mut [&mut p], &[&g], &names(1)).unwrap();
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((p.get(0, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn identical_inputs_identical_updates() {
        let mut a = Matrix::column(&[0.5]);
        let mut b = Matrix::column(&[0.5]);
        let g = Matrix::column(&[0.3]);
        let mut adam = AdamState::new(AdamConfig::default(), [&a, &b]);
        for _ in 0..5 {
            adam.step(&mut [&mut a, &mut b], &[&g, &g], &names(2)).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = Matrix::column(&[0.0]);
        let g = Matrix::column(&[f64::NAN]);
        let mut adam = AdamState::new(AdamConfig::default(), [&p]);
        let err = adam
            .step(&mut [&mut p], &[&g], &["decoder.2.weight".to_string()])
            .unwrap_err();
        assert!(err.to_string().contains("decoder.2.weight"));
        assert_eq!(p.get(0, 0), 0.0);
        assert_eq!(adam.steps(), 0);
    }
}

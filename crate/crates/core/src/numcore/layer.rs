//! Affine layers and sequential stacks with exact reverse-mode gradients.
//!
//! A layer computes `activation(W · input + b)` where `input` is `in × B`
//! (one column per batch item) and `b` is broadcast across columns.

use super::{Matrix, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output `y = f(x)`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineLayer {
    pub weight: Matrix,
    pub bias: Matrix,
    activation: Activation,
}

impl AffineLayer {
    pub fn new(weight: Matrix, bias: Matrix, activation: Activation) -> Result<Self> {
        if bias.shape() != (weight.rows(), 1) {
            return Err(Error::Dimension(format!(
                "bias {:?} does not match weight {:?}",
                bias.shape(),
                weight.shape()
            )));
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            weight: Matrix::zeros(out_dim, in_dim),
            bias: Matrix::zeros(out_dim, 1),
            activation,
        }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (in + out))`, zero bias.
    pub fn glorot(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut Rng) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut layer = Self::zeros(in_dim, out_dim, activation);
        for w in layer.weight.as_mut_slice() {
            *w = rng.uniform_range(-limit, limit);
        }
        layer
    }

    /// Identity weights (rectangular: ones on the leading diagonal) plus
    /// Glorot-uniform noise shrunk by `noise_scale`, zero bias.
    pub fn near_identity(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        noise_scale: f64,
        rng: &mut Rng,
    ) -> Self {
        let mut layer = Self::glorot(in_dim, out_dim, activation, rng);
        layer.weight.scale(noise_scale);
        for i in 0..in_dim.min(out_dim) {
            let w = layer.weight.get(i, i);
            layer.weight.set(i, i, w + 1.0);
        }
        layer
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    #[inline]
    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        if input.rows() != self.in_dim() {
            return Err(Error::Dimension(format!(
                "layer expects {} input rows, got {}",
                self.in_dim(),
                input.rows()
            )));
        }
        let mut out = self.weight.matmul(input)?;
        let cols = out.cols();
        let act = self.activation;
        for r in 0..out.rows() {
            let b = self.bias.get(r, 0);
            for v in &mut out.as_mut_slice()[r * cols..(r + 1) * cols] {
                *v = act.apply(*v + b);
            }
        }
        Ok(out)
    }

    /// Gradients given the recorded input/output and `dL/d output`.
    pub(crate) fn backward(
        &self,
        input: &Matrix,
        output: &Matrix,
        grad_out: &Matrix,
    ) -> Result<(LayerGrad, Matrix)> {
        let act = self.activation;
        let grad_pre = output.zip_map(grad_out, |y, g| g * act.derivative_from_output(y))?;
        let weight = grad_pre.matmul_t(input)?;
        let bias = grad_pre.row_sums();
        let grad_in = self.weight.t_matmul(&grad_pre)?;
        Ok((LayerGrad { weight, bias }, grad_in))
    }
}

/// Evaluates a single layer on a batch.
pub fn affine_forward(layer: &AffineLayer, input: &Matrix) -> Result<Matrix> {
    layer.forward(input)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl LayerGrad {
    pub fn zeros_like(layer: &AffineLayer) -> Self {
        Self {
            weight: Matrix::zeros(layer.out_dim(), layer.in_dim()),
            bias: Matrix::zeros(layer.out_dim(), 1),
        }
    }
}

/// Forward values recorded by [`LayerStack::forward_taped`], consumed by exactly
/// one call to [`LayerStack::backward`].
#[derive(Debug, Default)]
pub struct GradTape {
    records: Vec<TapeRecord>,
    armed: bool,
}

#[derive(Debug)]
struct TapeRecord {
    input: Matrix,
    output: Matrix,
    skipped: bool,
}

impl GradTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_armed(&self) -> bool {
        self.armed
    }
}

/// Gradients of a [`LayerStack`]: one entry per layer plus `dL/d input`.
#[derive(Debug, Clone)]
pub struct StackGrad {
    pub layers: Vec<LayerGrad>,
    pub input: Matrix,
}

/// Passes `input` through a skipped layer: identity on the shared leading rows,
/// truncated or zero-padded to the layer's output width.
fn passthrough(input: &Matrix, out_dim: usize) -> Matrix {
    input.resize_rows(out_dim)
}

/// A sequential stack of affine layers.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    layers: Vec<AffineLayer>,
}

impl LayerStack {
    pub fn new(layers: Vec<AffineLayer>) -> Result<Self> {
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Dimension(format!(
                    "layer {} outputs {} but layer {} expects {}",
                    i,
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[AffineLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [AffineLayer] {
        &mut self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, AffineLayer::in_dim)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, AffineLayer::out_dim)
    }

    fn check_skip(&self, skip: &[usize]) -> Result<()> {
        match skip.iter().find(|&&i| i >= self.layers.len()) {
            Some(i) => Err(Error::Spec(format!(
                "cannot skip layer {i} of a {}-layer stack",
                self.layers.len()
            ))),
            None => Ok(()),
        }
    }

    /// Forward pass; layers listed in `skip` (0-based) are bypassed.
    pub fn forward(&self, input: &Matrix, skip: &[usize]) -> Result<Matrix> {
        self.check_skip(skip)?;
        let mut a = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            a = if skip.contains(&i) {
                passthrough(&a, layer.out_dim())
            } else {
                layer.forward(&a)?
            };
        }
        Ok(a)
    }

    /// Forward pass that records what [`backward`](Self::backward) needs.
    pub fn forward_taped(
        &self,
        input: &Matrix,
        skip: &[usize],
        tape: &mut GradTape,
    ) -> Result<Matrix> {
        self.check_skip(skip)?;
        tape.records.clear();
        let mut a = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let skipped = skip.contains(&i);
            let out = if skipped {
                passthrough(&a, layer.out_dim())
            } else {
                layer.forward(&a)?
            };
            tape.records.push(TapeRecord {
                input: a,
                output: out.clone(),
                skipped,
            });
            a = out;
        }
        tape.armed = true;
        Ok(a)
    }

    /// Reverse pass over the recorded forward. Skipped layers get zero gradients.
    pub fn backward(&self, tape: &mut GradTape, grad_out: &Matrix) -> Result<StackGrad> {
        if !tape.armed || tape.records.len() != self.layers.len() {
            return Err(Error::State(
                "backward called without a matching forward pass".into(),
            ));
        }
        tape.armed = false;
        let records = std::mem::take(&mut tape.records);
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_out.clone();
        for (layer, rec) in self.layers.iter().zip(&records).rev() {
            if g.shape() != rec.output.shape() {
                return Err(Error::Dimension(format!(
                    "upstream gradient {:?} vs layer output {:?}",
                    g.shape(),
                    rec.output.shape()
                )));
            }
            if rec.skipped {
                grads.push(LayerGrad::zeros_like(layer));
                g = passthrough(&g, rec.input.rows());
            } else {
                let (lg, gi) = layer.backward(&rec.input, &rec.output, &g)?;
                grads.push(lg);
                g = gi;
            }
        }
        grads.reverse();
        Ok(StackGrad {
            layers: grads,
            input: g,
        })
    }
}

//! Numeric substrate: matrices, affine stacks with reverse-mode gradients,
//! Adam, and seeded random numbers. Everything is `f64`; batches are columns.

mod adam;
mod layer;
mod matrix;
mod rng;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use layer::{
    affine_forward, Activation, AffineLayer, GradTape, LayerGrad, LayerStack, StackGrad,
};
pub use matrix::Matrix;
pub use rng::{streams, Rng, RNG_ALGORITHM};

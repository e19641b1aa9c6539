//! Core library for a desk-scale multi-view token adaptation stack.
//!
//! The crate provides, bottom to top:
//!
//! - [`numerics`]: dense f64 matrices with the handful of kernels everything
//!   else needs (matmul, row softmax, RMS norm, cosine similarity, rotary
//!   position embedding), plus a splittable deterministic RNG.
//! - [`layout`]: per-token structural metadata (modality, view, frame,
//!   original position) for interleaved multi-view sequences.
//! - [`transformer`]: a small decoder-only transformer with causal rotary
//!   attention, a weight-materializing attention path that can also emit
//!   rotation-free mask-free scoring weights, and a pruning hook invoked at
//!   configured sparse layers.
//! - [`fusion`]: the temporal fusion frontend that compresses a stack of
//!   historical frames into a single feature map via learnable time
//!   embeddings, per-token temporal self-attention, and normalized time
//!   weights.
//! - [`pruning`]: text-anchor selection, text-guided importance scoring,
//!   global top-K pruning, and per-view diversity recycling.
//! - [`planner`]: a lightweight cross-attention trajectory decoder and the
//!   composite trajectory loss with its analytic gradient.
//! - [`flops`]: analytic FLOPs accounting for dense vs pruned forward passes,
//!   checked exactly against instrumented matmul counts.

pub mod error;
pub mod flopcount;
pub mod flops;
pub mod fusion;
pub mod layout;
pub mod numerics;
pub mod planner;
pub mod pruning;
pub mod rng;
pub mod transformer;

pub use error::{Error, Result};
pub use numerics::{Matrix2D, Matrix3D};
pub use rng::RngSeed;

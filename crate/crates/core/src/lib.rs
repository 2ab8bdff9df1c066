//! Wasserstein autoencoders with a hyperbolic latent space.
//!
//! The latent code lives on a product of Poincaré disks. Encoders emit a
//! hyperbolic mean per disk plus a positive scale, posterior samples are drawn
//! with the gyrovector reparametrization `z = μ ⊕ diag(σ)^⊗ z_prior`, and the
//! aggregate posterior is matched to a hyperbolic Gaussian prior through a
//! maximum mean discrepancy penalty with a geodesic Laplacian kernel.
//!
//! Module map:
//!
//! | module | contents |
//! |--------|----------|
//! | [`gyrovector`] | Möbius arithmetic, distances, exp/log maps, projection |
//! | [`hgauss`] | hyperbolic Gaussian density and the rejection prior sampler |
//! | [`mmd`] | geodesic Laplacian kernel, Gram matrices, MMD estimator |
//! | [`autodiff`] | reverse-mode tape over dense `f64` tensors |
//! | [`nn`] | dense, graph-convolution and hyperbolic layers |
//! | [`optim`] | Adam and Riemannian SGD |
//! | [`models`] | Poincaré WAE, hyperbolic VGAE, metrics, training loops |
//! | [`data`] | IDX images, graph loaders, synthetic trees, edge splits |
//! | [`checkpoint`] | versioned binary parameter files |
//! | [`viz`] | PGM sample grids and SVG latent plots |
//!
//! Data-parallel loops (Gram matrices, MMD sums, prior batches, edge scoring)
//! run on rayon when the `parallel` feature is enabled, and sequentially
//! otherwise. Results are bit-identical either way.

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod data;
mod error;
pub mod gyrovector;
pub mod hgauss;
pub mod mmd;
pub mod models;
pub mod nn;
pub mod optim;
pub mod par;
pub mod viz;

pub use error::{Error, Result};
pub use gyrovector::{BallConfig, BallPoint, TangentVec};
pub use hgauss::{HyperGaussian, LatentPoint, PriorSampler, PriorSamplerConfig};

//! Physics-inspired feature operators for faint plume imagery.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`], [`ops`] and [`tape`]: a small rank-4 tensor type, the
//!   convolution / pooling / reduction kernels, and a reverse-mode tape
//!   that records those kernels so every higher operator is differentiable.
//! - [`spectral`]: orthonormal 2D DCT, the cosine frequency grid and decay
//!   kernel, plus two independent convection–diffusion solvers (periodic
//!   spectral solution and an explicit finite-difference stepper).
//! - [`gas_block`]: the local/global diffusion–convection feature block.
//! - [`edge`]: directional gradients, phase congruency, their learnable
//!   fusion and the max-pooled edge pyramid.
//! - [`routing`]: importance estimation, path weights, fusion/self
//!   modulation and the three-cross-scale-plus-self pyramid neck.
//! - [`analysis`]: finite-difference gradient checking and gradient-based
//!   effective receptive field maps.
//! - [`io`], [`config`], [`rng`]: PGM / tensor file formats, run
//!   configuration and the deterministic generator used for all
//!   parameter initialisation.
//!
//! Tensors default to `f32` storage. Every kernel accumulates in `f64`,
//! and the whole stack is generic over [`Real`] so verification code can
//! run the same graphs in double precision.

// Negated comparisons are how domain checks reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod edge;
mod error;
pub mod gas_block;
pub mod io;
pub mod ops;
pub mod plume;
pub mod report;
pub mod rng;
pub mod routing;
pub mod spectral;
pub mod tape;
pub mod tensor;

#[cfg(feature = "cli")]
pub mod cli;

pub use error::{Axis, Error, Result};
pub use tape::{Tape, Var};
pub use tensor::{Real, Shape, Tensor};

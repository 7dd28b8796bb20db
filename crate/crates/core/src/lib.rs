//! Doubly robust estimation of average causal effects with machine-learned
//! nuisance models.
//!
//! The crate provides:
//!
//! - augmented inverse-probability-weighting (AIPW) point estimators for the
//!   average causal effect (ACE) and the average causal effect on the treated
//!   (ACET), with influence-function variance estimates and confidence
//!   intervals ([`estimators`]);
//! - from-scratch neural networks for fitting the outcome regressions and the
//!   propensity score: a structured single-channel convolutional architecture,
//!   a practical multi-channel convolutional architecture, and a two-hidden-
//!   layer MLP ([`nn`]);
//! - post-lasso nuisance estimation over a degree-three monomial expansion
//!   ([`postlasso`]);
//! - the simulation designs and Monte Carlo harness used to evaluate the
//!   estimators ([`sim`]);
//! - deterministic random number generation with independent substreams
//!   ([`rng`]).
//!
//! The crate is `no_std`-compatible (requires `alloc`); disable the default
//! `std` feature for embedded or wasm targets. All randomness flows through
//! [`rng::Rng`], so every result is reproducible from a 64-bit seed.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod estimators;
pub mod nn;
pub mod postlasso;
pub mod rng;
pub mod sim;

pub use data::{Dataset, Matrix, SeriesLayout};
pub use error::{Error, Result};
pub use rng::Rng;

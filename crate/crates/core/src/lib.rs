//! Algorithms for UWB indoor localization with unsupervised error mitigation.
//!
//! The crate covers the full processing chain: a synthetic channel simulator
//! producing channel impulse responses (CIRs) and receive timestamps, a small
//! convolutional autoencoder trained by explicit backpropagation, k-means /
//! Gaussian-mixture / deep-embedded clustering of CIR windows, cluster quality
//! scoring from first-path vs. peak-path separation, per-burst signal
//! selection, a damped Gauss-Newton TDoA position solver, and accuracy
//! metrics.
//!
//! Everything here is `no_std` + `alloc`; file formats, configuration, and
//! the command line live in the companion `decloc-cli` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod autoenc;
pub mod cluster;
pub mod data;
pub mod error;
pub mod eval;
pub mod geom;
pub mod mat;
pub mod pca;
pub mod score;
pub mod seed;
pub mod sim;
pub mod tdoa;

/// Speed of light in vacuum, metres per second.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

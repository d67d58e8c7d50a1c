//! Fusion of redundant sensor arrays into a single virtual signal by
//! minimizing a scale-weighted wavelet variance, with moving-block bootstrap
//! inference on the fusion coefficients.

pub mod baselines;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod models;
pub mod study;
pub mod svo;
pub mod wavelet;

pub use error::{Result, SvoError};
pub use inference::{
    estimate_v, gradient_g, infer, intervals, sandwich, BootstrapConfig, CoefficientFit,
    ConfidenceIntervals, CovarianceEstimates,
};
pub use svo::{
    adapt_preset, aggregate, fuse, make_weights, min_norm_coefficients, optimal_coefficients, virtual_wv,
    CoefficientVector, VirtualSignal, WeightPreset, WeightSpec, WeightVector,
};
pub use wavelet::{modwt, wccv_matrices, ScaleCovariances, SignalArray, WaveletPyramid};

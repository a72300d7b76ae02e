//! Nonlinear least squares and the curve models used to analyse measurements.

mod lm;
pub mod models;

pub use lm::{
    fit_least_squares, fit_least_squares_with, numeric_jacobian, Dataset, FitOptions, FitResult,
    ModelSpec,
};
pub use models::{
    fit_bimodal, fit_exponential, fit_gaussian_profile, fit_rabi, fit_sqrt_n, fit_vrs, BimodalFit,
    SqrtNFit,
};

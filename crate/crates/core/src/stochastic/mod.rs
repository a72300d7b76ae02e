//! Monte Carlo models of tweezer loading, fluorescence detection and atom survival.
//!
//! Every random draw comes from a [`rng::substream`] keyed by seed, stream and
//! index, so results do not depend on how trials are scheduled across threads.

pub mod detection;
pub mod light_shift;
pub mod loading;
pub mod rng;
pub mod survival;

pub use detection::{
    classify, misclassification_rate, optimal_threshold, simulate_counts, DetectionModel,
};
pub use light_shift::{array_shifts, fluorescence_spectrum_shift, LightShiftModel};
pub use loading::{simulate_loading, LoadingModel, LoadingRun};
pub use survival::{atom_number_error, survival, ErrorScaling, SurvivalModel};

//! Evaluation metrics: accuracy, NLL, calibration error over reliability
//! bins, temperature scaling, out-of-distribution AUROC, mean max confidence
//! and sparsification error.
//!
//! Confidence is always the max softmax entry. Sorting is stable and argmax
//! ties go to the lowest index, so every metric is a pure function of its
//! inputs.

mod calibration;
mod ood;
mod temperature;

pub use calibration::{
    accuracy, ace, ece, mmc, nll, reliability_bins, sparsification_error, Predictions,
    ReliabilityBin, ReliabilityBins,
};
pub use ood::auroc;
pub use temperature::{
    default_grid, fit_temperature, log_grid, sweep_temperature, temperature_scale, Criterion,
    SweepRow, TemperatureFit, TemperatureSweep, DEFAULT_GRID_MAX, DEFAULT_GRID_MIN,
    DEFAULT_GRID_POINTS,
};

/// Default number of calibration bins.
pub const DEFAULT_BINS: usize = 10;

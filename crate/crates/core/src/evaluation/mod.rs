//! Forecast metrics and evaluation reports.

mod metrics;
mod report;

pub use metrics::{
    band_spectrum, nrmse, nrmse_with_scale, spectral_distribution_error, state_kld, truth_scale, KLD_BINS, SDE_BAND, SDE_STEPS,
};
pub use report::{evaluate, EvalConfig, EvalReport, Forecaster, MeanVar};

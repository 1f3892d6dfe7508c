//! Rate fitting, experiment configuration and orchestration.

mod config;
mod fit;
mod runner;

pub use config::{
    ExperimentConfig, ExperimentKind, WceQuantity, DEFAULT_DRAWS, DEFAULT_MY, DEFAULT_MZ, DEFAULT_NS,
};
pub use fit::{
    besov_exponent, indicator_exponent, rate_fit, regime_classify, wce_exponent, RateFit, RatePoint, Regime,
    BOOTSTRAP_RESAMPLES, SLOPE_TOLERANCE,
};
pub use runner::{csv_bytes, output_paths, run_experiment, write_outputs, Check, ExperimentOutput, Row, Summary, Verdict};

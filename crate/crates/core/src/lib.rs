//! Line spectral estimation and detection from few-bit quantized samples.
//!
//! The observation model is a superposition of complex sinusoids in white
//! circular Gaussian noise, passed through a per-channel quantizer (uniform
//! few-bit, per-sample signed comparisons, or none at all). The crate
//! provides:
//!
//! - interval-censored Gaussian likelihoods and their derivatives,
//! - Fisher information and Cramer-Rao bounds under quantization,
//! - Rao detection statistics with constant-false-alarm thresholds and
//!   closed-form detection probability predictions,
//! - a greedy Newtonized estimator that extracts sinusoids one at a time
//!   with cyclic refinement and spurious-component suppression,
//! - a Monte Carlo experiment harness and FMCW radar I/Q ingestion.

pub mod error;
pub mod experiments;
pub mod fim;
pub mod gnomp;
pub mod ingest;
pub mod likelihood;
pub mod quantizer;
pub mod rao;
pub mod special;

pub use error::{Error, Result};
pub use experiments::{
    run_compressive_instance, run_demo, run_experiment, ExperimentOutput, ExperimentSpec,
    MeasurementMode,
};
pub use fim::{
    crb_amplitude, crb_general, fim_amplitude, fim_general, snr_loss, snr_loss_1bit_approx,
};
pub use ingest::{
    estimate_noise_variance, load_iq, omega_to_range, range_profile, range_to_omega, IqFormat,
    IqFrame, RadarParams,
};
pub use gnomp::{extract_spectrum, GnompConfig, GnompResult, SigmaMode, StoppingRule};
pub use likelihood::{atom, mean_signal, AtomBasis, Model, SinusoidComponent};
pub use quantizer::{
    design_full_scale, quantize_complex, signed_measure, BitDepth, Cell, MeasurementScheme,
    QuantizedObservation, QuantizerSpec,
};
pub use rao::{
    noncentrality, predict_detection, predict_pd, rao_at, rao_grid, rao_statistic,
    rao_statistic_simplified, stat_to_db, threshold_known_freq, threshold_unknown_freq,
    DetectionPrediction,
};

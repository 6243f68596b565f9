//! Software model of a hybrid biphoton spectrometer.
//!
//! A non-degenerate SPDC source is simulated as a joint spectral amplitude,
//! turned into the seven-channel time-tag stream a DLD + SNSPD instrument
//! would record, and reconstructed back into static and time-resolved joint
//! spectral intensities with Schmidt analysis and calibrated peak fits.

pub mod calibration;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod export;
pub mod fit;
pub mod histogram;
pub mod schmidt;
pub mod simgen;
pub mod spdc;
pub mod tagstream;
pub mod units;

pub use error::{Error, Result};

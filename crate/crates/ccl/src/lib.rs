//! Curriculum-based adaptation of time-series forecasters to building
//! energy data.
//!
//! The pipeline difficulty-scores real windows by a frozen forecaster's
//! error, transfers difficulty to simulated windows through a contrastively
//! trained convolutional encoder, and fine-tunes the forecaster on an
//! easy-to-difficult schedule.

pub mod contrastive;
pub mod curriculum;
pub mod diffmath;
pub mod forecaster;
pub mod harness;
pub mod error;
pub mod series;
pub mod tcn;

pub use error::{Error, Result};

//! Direction-of-arrival estimation toolkit.
//!
//! The crate covers the full pipeline: synthetic ULA/UCA snapshots with
//! parameterized hardware imperfections, a small reverse-mode autodiff engine,
//! the TransDOA transformer estimator trained with a permutation-invariant loss,
//! feature-alignment calibration of imperfect arrays, a MUSIC baseline and the
//! evaluation metrics (Hungarian matching, OSPA, RMSE/MAE, ECDF quantiles).

pub mod array_sim;
pub mod autodiff;
pub mod error;
pub mod metrics;
pub mod model;
pub mod music;
pub mod rng;
pub mod scenario;
pub mod transfer;

pub use error::{DoaError, Result};

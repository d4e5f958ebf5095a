//! Evaluation metrics: optimal assignment, matched and raw per-source
//! errors, OSPA, ECDF quantiles and the aggregated report.

mod assignment;
mod errors;
mod report;

pub use assignment::{hungarian, hungarian_padded, Assignment};
pub use errors::{ecdf_quantile, match_errors, ospa, raw_errors};
pub use report::{compute_report, EvalReport, MetricsReport};

/// Errors are clipped at this many degrees.
pub const ERROR_CAP_DEG: f64 = 30.0;
/// An estimate within this many degrees counts as a success.
pub const SUCCESS_TOLERANCE_DEG: f64 = 10.0;

//! Array signal model: geometries, steering vectors, imperfections,
//! snapshot simulation, sample covariance matrices and dataset files.

pub(crate) mod dataset;
mod geometry;
mod imperfection;
mod signal;
mod steering;

pub use dataset::{
    decode_dataset, encode_dataset, generate_dataset, generate_record, read_dataset,
    write_dataset, Dataset, DatasetHeader, Sample,
};
pub use geometry::{ArrayGeometry, ArrayKind};
pub use imperfection::{build_imperfections, ImperfectionFlags, ImperfectionSpec, DEFAULT_GAMMA};
pub use signal::{
    noise_variance, sample_covariance, sample_doas, simulate_for_label, simulate_snapshots, DoaLabel, DoaSpec, Fov,
    SignalScenario,
};
pub use steering::{perturbed_steering, steering, steering_uca, steering_ula};

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Dense complex matrix used for snapshots and covariances.
pub type CMatrix = DMatrix<Complex64>;

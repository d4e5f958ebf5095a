//! MUSIC subspace DOA estimation on 1D (ULA) and 2D (UCA) grids.

mod eig;
mod peaks;
mod spectrum;

pub use eig::hermitian_eig;
pub use peaks::{music_peaks, parabolic_vertex, Peaks};
pub use spectrum::{
    angle_grid, music_1d, music_2d, music_estimate, music_spectrum_1d, music_spectrum_2d, noise_subspace, MusicConfig,
    MusicEstimate, Spectrum2d,
};

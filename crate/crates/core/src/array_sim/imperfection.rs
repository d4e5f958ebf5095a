use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ArrayGeometry, CMatrix};
use crate::{DoaError, Result};

/// Adjacent-element mutual coupling coefficient, 0.3·e^{j60°}.
pub const DEFAULT_GAMMA: Complex64 = Complex64 {
    re: 0.15,
    im: 0.259_807_621_135_331_6,
};

/// Which imperfections are present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImperfectionFlags {
    pub position: bool,
    pub gain: bool,
    pub phase: bool,
    pub coupling: bool,
}

impl ImperfectionFlags {
    pub const ALL: Self = Self { position: true, gain: true, phase: true, coupling: true };
    pub const NONE: Self = Self { position: false, gain: false, phase: false, coupling: false };

    pub fn any(&self) -> bool {
        self.position || self.gain || self.phase || self.coupling
    }
}

impl Default for ImperfectionFlags {
    fn default() -> Self {
        Self::ALL
    }
}

/// ρ-scaled imperfection vectors and the coupling matrix for one array.
#[derive(Debug, Clone, PartialEq)]
pub struct ImperfectionSpec {
    pub rho: f64,
    pub flags: ImperfectionFlags,
    pub gamma: Complex64,
    pub mc_zero_diag: bool,
    /// Position bias along x, wavelengths.
    pub pos_x: Vec<f64>,
    /// Position bias along y, wavelengths (all zero for a ULA).
    pub pos_y: Vec<f64>,
    pub gain: Vec<f64>,
    /// Phase bias, radians.
    pub phase: Vec<f64>,
    pub coupling: CMatrix,
}

/// `[0, a, .., a, b, .., b]`: entry 0 is zero, entries `1..=ceil((M-1)/2)`
/// take `first`, the rest take `second`.
fn split_pattern(m: usize, first: f64, second: f64) -> Vec<f64> {
    let split = m / 2; // == ceil((m - 1) / 2)
    (0..m)
        .map(|i| match i {
            0 => 0.0,
            i if i <= split => first,
            _ => second,
        })
        .collect()
}

pub fn build_imperfections(
    rho: f64,
    flags: ImperfectionFlags,
    geometry: &ArrayGeometry,
    gamma: Complex64,
    mc_zero_diag: bool,
) -> Result<ImperfectionSpec> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(DoaError::Range(format!("rho must lie in [0, 1], got {rho}")));
    }
    geometry.validate()?;
    let m = geometry.elements();
    let unit = geometry.min_spacing();

    let pos: Vec<f64> = split_pattern(m, -0.2, 0.2).into_iter().map(|v| rho * v * unit).collect();
    let (pos_x, pos_y) = match geometry {
        ArrayGeometry::Ula { .. } => (pos, vec![0.0; m]),
        ArrayGeometry::Uca { .. } => (pos.clone(), pos),
    };
    let gain = split_pattern(m, 0.2, -0.2).into_iter().map(|v| rho * v).collect();
    let phase = split_pattern(m, -30.0, 30.0)
        .into_iter()
        .map(|v| (rho * v).to_radians())
        .collect();

    let scale = Complex64::new(rho, 0.0);
    let coupling = match geometry {
        ArrayGeometry::Ula { .. } => DMatrix::from_fn(m, m, |i, j| {
            if mc_zero_diag && i == j {
                Complex64::new(0.0, 0.0)
            } else {
                scale * gamma.powu(i.abs_diff(j) as u32)
            }
        }),
        ArrayGeometry::Uca { .. } => {
            let p = geometry.positions();
            DMatrix::from_fn(m, m, |i, j| {
                if mc_zero_diag && i == j {
                    return Complex64::new(0.0, 0.0);
                }
                let chord = ((p[i].0 - p[j].0).powi(2) + (p[i].1 - p[j].1).powi(2)).sqrt();
                let order = (chord / unit).round() as u32;
                scale * gamma.powu(order)
            })
        }
    };

    Ok(ImperfectionSpec { rho, flags, gamma, mc_zero_diag, pos_x, pos_y, gain, phase, coupling })
}

impl ImperfectionSpec {
    /// The ideal array: ρ = 0 and nothing enabled.
    pub fn ideal(geometry: &ArrayGeometry) -> Self {
        build_imperfections(0.0, ImperfectionFlags::NONE, geometry, DEFAULT_GAMMA, false)
            .expect("rho = 0 is always in range")
    }

    pub fn elements(&self) -> usize {
        self.gain.len()
    }

    pub fn phase_deg(&self) -> Vec<f64> {
        self.phase.iter().map(|p| p.to_degrees()).collect()
    }

    /// ρ as recorded in dataset headers: zero when no imperfection is active.
    pub fn effective_rho(&self) -> f64 {
        if self.flags.any() {
            self.rho
        } else {
            0.0
        }
    }
}

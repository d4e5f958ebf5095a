use nalgebra::DVector;
use num_complex::Complex64;
use std::f64::consts::PI;

use super::{ArrayGeometry, ImperfectionSpec};
use crate::{DoaError, Result};

/// Unit-modulus response for element coordinates `(x, y)` (wavelengths).
/// Propagation direction is azimuth θ and elevation φ; a ULA uses φ = 90°
/// with elements on x so the phase reduces to `-2π·x·sin θ`.
fn plane_wave(positions: &[(f64, f64)], geometry: &ArrayGeometry, theta: f64, phi: f64) -> DVector<Complex64> {
    let phases = positions.iter().map(|&(x, y)| match geometry {
        ArrayGeometry::Ula { .. } => -2.0 * PI * x * theta.sin(),
        ArrayGeometry::Uca { .. } => -2.0 * PI * (x * theta.cos() + y * theta.sin()) * phi.sin(),
    });
    DVector::from_iterator(positions.len(), phases.map(|p| Complex64::from_polar(1.0, p)))
}

pub fn steering_ula(geometry: &ArrayGeometry, theta_deg: f64) -> Result<DVector<Complex64>> {
    match *geometry {
        ArrayGeometry::Ula { elements, spacing } => {
            let s = theta_deg.to_radians().sin();
            Ok(DVector::from_fn(elements, |m, _| {
                Complex64::from_polar(1.0, -2.0 * PI * spacing * m as f64 * s)
            }))
        }
        ArrayGeometry::Uca { .. } => Err(DoaError::InvalidGeometry("steering_ula needs a ULA".into())),
    }
}

pub fn steering_uca(geometry: &ArrayGeometry, theta_deg: f64, phi_deg: f64) -> Result<DVector<Complex64>> {
    match *geometry {
        ArrayGeometry::Uca { elements, radius } => {
            let theta = theta_deg.to_radians();
            let sin_phi = phi_deg.to_radians().sin();
            Ok(DVector::from_fn(elements, |m, _| {
                let az = geometry.sensor_azimuth(m);
                Complex64::from_polar(1.0, -2.0 * PI * radius * (az - theta).cos() * sin_phi)
            }))
        }
        ArrayGeometry::Ula { .. } => Err(DoaError::InvalidGeometry("steering_uca needs a UCA".into())),
    }
}

/// Ideal steering vector for either geometry. `phi_deg` is ignored for a ULA
/// and required for a UCA.
pub fn steering(geometry: &ArrayGeometry, theta_deg: f64, phi_deg: Option<f64>) -> Result<DVector<Complex64>> {
    match geometry {
        ArrayGeometry::Ula { .. } => steering_ula(geometry, theta_deg),
        ArrayGeometry::Uca { .. } => {
            let phi = phi_deg.ok_or_else(|| DoaError::InvalidArgument("UCA steering needs an elevation".into()))?;
            steering_uca(geometry, theta_deg, phi)
        }
    }
}

/// Steering vector of the imperfect array:
/// `(I + δ_mc·E_mc)(I + Diag(δ_gain·e_gain))·Diag(exp(j·δ_phase·e_phase))·a(θ, p + δ_pos·e_pos)`.
pub fn perturbed_steering(
    geometry: &ArrayGeometry,
    imp: &ImperfectionSpec,
    theta_deg: f64,
    phi_deg: Option<f64>,
) -> Result<DVector<Complex64>> {
    let m = geometry.elements();
    if imp.elements() != m || imp.coupling.nrows() != m || imp.coupling.ncols() != m {
        return Err(DoaError::InvalidArgument(format!(
            "imperfection spec has {} elements, geometry has {m}",
            imp.elements()
        )));
    }
    if matches!(geometry, ArrayGeometry::Uca { .. }) && phi_deg.is_none() {
        return Err(DoaError::InvalidArgument("UCA steering needs an elevation".into()));
    }
    let flags = imp.flags;

    let mut positions = geometry.positions();
    if flags.position {
        for (p, (dx, dy)) in positions.iter_mut().zip(imp.pos_x.iter().zip(&imp.pos_y)) {
            p.0 += dx;
            p.1 += dy;
        }
    }
    let theta = theta_deg.to_radians();
    let phi = phi_deg.unwrap_or(90.0).to_radians();
    let mut v = plane_wave(&positions, geometry, theta, phi);

    if flags.phase {
        for (vi, &ph) in v.iter_mut().zip(&imp.phase) {
            *vi *= Complex64::from_polar(1.0, ph);
        }
    }
    if flags.gain {
        for (vi, &g) in v.iter_mut().zip(&imp.gain) {
            *vi *= 1.0 + g;
        }
    }
    if flags.coupling {
        let coupled = &imp.coupling * &v;
        v += coupled;
    }
    Ok(v)
}

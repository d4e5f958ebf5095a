use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::{DoaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrayKind {
    Ula,
    Uca,
}

impl ArrayKind {
    pub fn code(self) -> u8 {
        match self {
            ArrayKind::Ula => 0,
            ArrayKind::Uca => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(ArrayKind::Ula),
            1 => Ok(ArrayKind::Uca),
            other => Err(DoaError::Format(format!("unknown array kind {other}"))),
        }
    }
}

/// Element layout. Distances are in wavelengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ArrayGeometry {
    Ula { elements: usize, spacing: f64 },
    Uca { elements: usize, radius: f64 },
}

impl ArrayGeometry {
    pub fn ula(elements: usize, spacing: f64) -> Result<Self> {
        let g = ArrayGeometry::Ula { elements, spacing };
        g.validate()?;
        Ok(g)
    }

    pub fn uca(elements: usize, radius: f64) -> Result<Self> {
        let g = ArrayGeometry::Uca { elements, radius };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let (m, len) = match *self {
            ArrayGeometry::Ula { elements, spacing } => (elements, spacing),
            ArrayGeometry::Uca { elements, radius } => (elements, radius),
        };
        if m < 2 {
            return Err(DoaError::InvalidGeometry(format!("need at least 2 elements, got {m}")));
        }
        if !(len.is_finite() && len > 0.0) {
            return Err(DoaError::InvalidGeometry(format!("element spacing/radius must be positive, got {len}")));
        }
        Ok(())
    }

    pub fn kind(&self) -> ArrayKind {
        match self {
            ArrayGeometry::Ula { .. } => ArrayKind::Ula,
            ArrayGeometry::Uca { .. } => ArrayKind::Uca,
        }
    }

    pub fn elements(&self) -> usize {
        match *self {
            ArrayGeometry::Ula { elements, .. } | ArrayGeometry::Uca { elements, .. } => elements,
        }
    }

    /// Number of angles per source: 1 for ULA (θ), 2 for UCA (θ, φ).
    pub fn label_dims(&self) -> usize {
        match self.kind() {
            ArrayKind::Ula => 1,
            ArrayKind::Uca => 2,
        }
    }

    /// Azimuth of sensor `m` on the circle, radians.
    pub fn sensor_azimuth(&self, m: usize) -> f64 {
        2.0 * PI * m as f64 / self.elements() as f64
    }

    /// Nominal element coordinates `(x, y)` in wavelengths.
    pub fn positions(&self) -> Vec<(f64, f64)> {
        match *self {
            ArrayGeometry::Ula { elements, spacing } => {
                (0..elements).map(|m| (m as f64 * spacing, 0.0)).collect()
            }
            ArrayGeometry::Uca { elements, radius } => (0..elements)
                .map(|m| {
                    let az = self.sensor_azimuth(m);
                    (radius * az.cos(), radius * az.sin())
                })
                .collect(),
        }
    }

    /// Smallest distance between two elements: `d` for a ULA, the adjacent
    /// chord `2R·sin(π/M)` for a UCA.
    pub fn min_spacing(&self) -> f64 {
        match *self {
            ArrayGeometry::Ula { spacing, .. } => spacing,
            ArrayGeometry::Uca { elements, radius } => 2.0 * radius * (PI / elements as f64).sin(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_layouts() {
        assert!(ArrayGeometry::ula(1, 0.5).is_err());
        assert!(ArrayGeometry::ula(4, 0.0).is_err());
        assert!(ArrayGeometry::uca(8, -1.0).is_err());
        assert!(ArrayGeometry::uca(8, 1.0).is_ok());
    }

    #[test]
    fn uca_chord() {
        let g = ArrayGeometry::uca(4, 1.0).unwrap();
        assert!((g.min_spacing() - 2f64.sqrt()).abs() < 1e-12);
        let p = g.positions();
        let d = ((p[0].0 - p[1].0).powi(2) + (p[0].1 - p[1].1).powi(2)).sqrt();
        assert!((d - g.min_spacing()).abs() < 1e-12);
    }
}

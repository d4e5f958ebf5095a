use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{hermitian_eig, music_peaks, parabolic_vertex};
use crate::array_sim::{steering, ArrayGeometry, CMatrix, DoaLabel, Fov, SignalScenario};
use crate::{DoaError, Result};

/// Grid and model-order settings. `theta_step` is the 1D grid step and the
/// azimuth step of the 2D grid; `phi_step` is the 2D elevation step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MusicConfig {
    pub sources: usize,
    pub theta_step: f64,
    pub phi_step: f64,
    pub fov: Fov,
}

impl MusicConfig {
    /// 0.05° for linear arrays; 1° × 0.5° for circular arrays.
    pub fn for_scenario(scenario: &SignalScenario) -> Self {
        let theta_step = match scenario.geometry {
            ArrayGeometry::Ula { .. } => 0.05,
            ArrayGeometry::Uca { .. } => 1.0,
        };
        MusicConfig { sources: scenario.sources, theta_step, phi_step: 0.5, fov: scenario.fov }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MusicEstimate {
    pub label: DoaLabel,
    pub miss: bool,
}

/// Evenly spaced angles from `lo` to `hi` inclusive; a full 360° range
/// drops `hi` since it coincides with `lo`.
pub fn angle_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(hi >= lo) {
        return Err(DoaError::InvalidArgument(format!("bad grid [{lo}, {hi}] step {step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    let periodic = is_full_circle(lo, hi);
    let count = if periodic { n } else { n + 1 };
    Ok((0..count).map(|i| lo + i as f64 * step).collect())
}

fn is_full_circle(lo: f64, hi: f64) -> bool {
    (hi - lo - 360.0).abs() < 1e-9
}

/// Eigenvectors of the `M − K` smallest eigenvalues.
pub fn noise_subspace(scm: &CMatrix, sources: usize) -> Result<CMatrix> {
    let m = scm.nrows();
    if sources >= m {
        return Err(DoaError::DegreesOfFreedom(format!("MUSIC needs K < M, got K = {sources}, M = {m}")));
    }
    if sources == 0 {
        return Err(DoaError::InvalidArgument("MUSIC needs at least one source".into()));
    }
    let (_, v) = hermitian_eig(scm)?;
    Ok(v.columns(0, m - sources).into_owned())
}

fn pseudo_spectrum(en_h: &CMatrix, a: &DVector<Complex64>) -> f64 {
    let proj = en_h * a;
    1.0 / (proj.iter().map(|z| z.norm_sqr()).sum::<f64>() + f64::MIN_POSITIVE)
}

fn check_geometry(scm: &CMatrix, geometry: &ArrayGeometry) -> Result<()> {
    if scm.nrows() != geometry.elements() || scm.ncols() != geometry.elements() {
        return Err(DoaError::Dimension(format!(
            "SCM is {}×{} for a {}-element array",
            scm.nrows(),
            scm.ncols(),
            geometry.elements()
        )));
    }
    Ok(())
}

/// `P(θ) = 1 / ‖U_nᴴ a(θ)‖²` on `grid`.
pub fn music_spectrum_1d(scm: &CMatrix, geometry: &ArrayGeometry, sources: usize, grid: &[f64]) -> Result<Vec<f64>> {
    if !matches!(geometry, ArrayGeometry::Ula { .. }) {
        return Err(DoaError::InvalidGeometry("1D MUSIC needs a linear array".into()));
    }
    check_geometry(scm, geometry)?;
    let en_h = noise_subspace(scm, sources)?.adjoint();
    grid.par_iter().map(|&t| Ok(pseudo_spectrum(&en_h, &steering(geometry, t, None)?))).collect()
}

/// Pseudo-spectrum over an azimuth × elevation grid, azimuth-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum2d {
    pub thetas: Vec<f64>,
    pub phis: Vec<f64>,
    pub values: Vec<f64>,
}

impl Spectrum2d {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.phis.len() + j]
    }
}

pub fn music_spectrum_2d(
    scm: &CMatrix,
    geometry: &ArrayGeometry,
    sources: usize,
    thetas: &[f64],
    phis: &[f64],
) -> Result<Spectrum2d> {
    if !matches!(geometry, ArrayGeometry::Uca { .. }) {
        return Err(DoaError::InvalidGeometry("2D MUSIC needs a circular array".into()));
    }
    check_geometry(scm, geometry)?;
    let en_h = noise_subspace(scm, sources)?.adjoint();
    let nphi = phis.len();
    let values = (0..thetas.len() * nphi)
        .into_par_iter()
        .map(|idx| Ok(pseudo_spectrum(&en_h, &steering(geometry, thetas[idx / nphi], Some(phis[idx % nphi]))?)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(Spectrum2d { thetas: thetas.to_vec(), phis: phis.to_vec(), values })
}

pub fn music_1d(scm: &CMatrix, geometry: &ArrayGeometry, config: &MusicConfig) -> Result<MusicEstimate> {
    let grid = angle_grid(config.fov.theta.0, config.fov.theta.1, config.theta_step)?;
    let spec = music_spectrum_1d(scm, geometry, config.sources, &grid)?;
    let peaks = music_peaks(&spec, &grid, config.sources)?;
    Ok(MusicEstimate { label: DoaLabel::one_d(peaks.angles), miss: peaks.miss })
}

/// Joint azimuth/elevation MUSIC. A peak must beat all eight grid
/// neighbours; azimuth wraps around when the grid spans a full circle.
pub fn music_2d(scm: &CMatrix, geometry: &ArrayGeometry, config: &MusicConfig) -> Result<MusicEstimate> {
    let (tlo, thi) = config.fov.theta;
    let (plo, phi_hi) =
        config.fov.phi.ok_or_else(|| DoaError::InvalidArgument("2D MUSIC needs an elevation range".into()))?;
    let thetas = angle_grid(tlo, thi, config.theta_step)?;
    let phis = angle_grid(plo, phi_hi, config.phi_step)?;
    let spec = music_spectrum_2d(scm, geometry, config.sources, &thetas, &phis)?;
    let periodic = is_full_circle(tlo, thi);
    let (nt, np) = (thetas.len() as isize, phis.len() as isize);
    let theta_index = |i: isize| -> Option<usize> {
        if periodic {
            Some(i.rem_euclid(nt) as usize)
        } else {
            (0..nt).contains(&i).then_some(i as usize)
        }
    };
    let phi_index = |j: isize| (0..np).contains(&j).then_some(j as usize);

    let mut maxima = Vec::new();
    for i in 0..nt {
        for j in 0..np {
            let v = spec.at(i as usize, j as usize);
            let is_peak = (-1..=1).all(|di| {
                (-1..=1).all(|dj| {
                    if di == 0 && dj == 0 {
                        return true;
                    }
                    match (theta_index(i + di), phi_index(j + dj)) {
                        (Some(a), Some(b)) => v > spec.at(a, b),
                        _ => true,
                    }
                })
            });
            if is_peak {
                maxima.push((i, j));
            }
        }
    }
    maxima.sort_by(|a, b| {
        spec.at(b.0 as usize, b.1 as usize).total_cmp(&spec.at(a.0 as usize, a.1 as usize)).then(a.cmp(b))
    });
    maxima.truncate(config.sources);

    let mut found: Vec<(f64, f64)> = maxima
        .iter()
        .map(|&(i, j)| {
            let mid = 1.0 / spec.at(i as usize, j as usize);
            let mut theta = thetas[i as usize];
            if let (Some(a), Some(b)) = (theta_index(i - 1), theta_index(i + 1)) {
                let off = parabolic_vertex(1.0 / spec.at(a, j as usize), mid, 1.0 / spec.at(b, j as usize));
                theta += off * config.theta_step;
                if periodic && theta < tlo {
                    theta += 360.0;
                } else if periodic && theta >= thi {
                    theta -= 360.0;
                }
            }
            let mut phi = phis[j as usize];
            if let (Some(a), Some(b)) = (phi_index(j - 1), phi_index(j + 1)) {
                phi += parabolic_vertex(1.0 / spec.at(i as usize, a), mid, 1.0 / spec.at(i as usize, b)) * config.phi_step;
            }
            (theta, phi)
        })
        .collect();
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    let miss = found.len() < config.sources;
    Ok(MusicEstimate {
        label: DoaLabel { thetas: found.iter().map(|f| f.0).collect(), phis: Some(found.iter().map(|f| f.1).collect()) },
        miss,
    })
}

/// 1D or 2D MUSIC depending on the array.
pub fn music_estimate(scm: &CMatrix, geometry: &ArrayGeometry, config: &MusicConfig) -> Result<MusicEstimate> {
    match geometry {
        ArrayGeometry::Ula { .. } => music_1d(scm, geometry, config),
        ArrayGeometry::Uca { .. } => music_2d(scm, geometry, config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_sim::noise_variance;

    /// `A·Aᴴ + σ²I` for the given directions.
    fn asymptotic(geometry: &ArrayGeometry, dirs: &[(f64, Option<f64>)], sigma2: f64) -> CMatrix {
        let m = geometry.elements();
        let mut r = CMatrix::identity(m, m) * Complex64::new(sigma2, 0.0);
        for &(t, p) in dirs {
            let a = steering(geometry, t, p).unwrap();
            r += &a * a.adjoint();
        }
        r
    }

    #[test]
    fn grid_construction() {
        assert_eq!(angle_grid(-60.0, 60.0, 0.05).unwrap().len(), 2401);
        let g = angle_grid(-180.0, 180.0, 1.0).unwrap();
        assert_eq!(g.len(), 360);
        assert_eq!(*g.last().unwrap(), 179.0);
        assert_eq!(angle_grid(0.0, 60.0, 0.5).unwrap().len(), 121);
        assert!(angle_grid(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn noiseless_single_source_peaks_at_truth() {
        let g = ArrayGeometry::ula(8, 0.5).unwrap();
        let r = asymptotic(&g, &[(17.5, None)], 0.0);
        let grid = angle_grid(-60.0, 60.0, 0.5).unwrap();
        let spec = music_spectrum_1d(&r, &g, 1, &grid).unwrap();
        assert!(spec.iter().all(|&p| p > 0.0 && p.is_finite()));
        let best = spec.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(grid[best], 17.5);
    }

    #[test]
    fn asymptotic_covariance_recovers_grid_angles() {
        let g = ArrayGeometry::ula(8, 0.5).unwrap();
        let truth = [-40.0, -10.3, 20.7];
        let dirs: Vec<_> = truth.iter().map(|&t| (t, None)).collect();
        let r = asymptotic(&g, &dirs, noise_variance(10.0));
        let cfg = MusicConfig { sources: 3, theta_step: 0.05, phi_step: 0.5, fov: Fov::ula() };
        let est = music_1d(&r, &g, &cfg).unwrap();
        assert!(!est.miss);
        for (e, t) in est.label.thetas.iter().zip(truth) {
            assert!((e - t).abs() < 1e-3, "{e} vs {t}");
        }
        let scaled = music_1d(&(r * Complex64::new(37.0, 0.0)), &g, &cfg).unwrap();
        for (a, b) in scaled.label.thetas.iter().zip(&est.label.thetas) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn degrees_of_freedom() {
        let g = ArrayGeometry::ula(4, 0.5).unwrap();
        let r = CMatrix::identity(4, 4);
        let cfg = MusicConfig { sources: 4, theta_step: 1.0, phi_step: 1.0, fov: Fov::ula() };
        assert!(matches!(music_1d(&r, &g, &cfg), Err(DoaError::DegreesOfFreedom(_))));
    }

    #[test]
    fn uca_recovers_grid_nodes() {
        let g = ArrayGeometry::uca(12, 0.25 / (std::f64::consts::PI / 12.0).sin()).unwrap();
        let truth = [(-120.0, 40.0), (35.0, 25.0)];
        let dirs: Vec<_> = truth.iter().map(|&(t, p)| (t, Some(p))).collect();
        let r = asymptotic(&g, &dirs, 1e-3);
        let cfg = MusicConfig { sources: 2, theta_step: 1.0, phi_step: 0.5, fov: Fov::uca() };
        let est = music_2d(&r, &g, &cfg).unwrap();
        assert!(!est.miss);
        let phis = est.label.phis.unwrap();
        for (k, &(t, p)) in truth.iter().enumerate() {
            assert!((est.label.thetas[k] - t).abs() < 0.05, "{:?}", est.label.thetas);
            assert!((phis[k] - p).abs() < 0.05, "{phis:?}");
        }
    }

    #[test]
    fn output_never_exceeds_k() {
        let g = ArrayGeometry::uca(8, 0.6).unwrap();
        let r = asymptotic(&g, &[(10.0, Some(30.0)), (11.0, Some(30.5))], 1.0);
        let cfg = MusicConfig { sources: 2, theta_step: 2.0, phi_step: 2.0, fov: Fov::uca() };
        let est = music_2d(&r, &g, &cfg).unwrap();
        assert!(est.label.thetas.len() <= 2);
        assert_eq!(est.miss, est.label.thetas.len() < 2);
    }
}

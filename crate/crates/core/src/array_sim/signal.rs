use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{perturbed_steering, ArrayGeometry, CMatrix, ImperfectionSpec};
use crate::rng::{self, DoaRng};
use crate::{DoaError, Result};

const MAX_DRAW_ATTEMPTS: usize = 10_000;
const DOA_STREAM: u64 = 0;
const SIGNAL_STREAM: u64 = 1;

/// Angular field of view in degrees. `phi` is present for 2D (UCA) arrays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fov {
    pub theta: (f64, f64),
    pub phi: Option<(f64, f64)>,
}

impl Fov {
    pub fn ula() -> Self {
        Fov { theta: (-60.0, 60.0), phi: None }
    }

    pub fn uca() -> Self {
        Fov { theta: (-180.0, 180.0), phi: Some((0.0, 60.0)) }
    }

    pub fn for_geometry(geometry: &ArrayGeometry) -> Self {
        match geometry {
            ArrayGeometry::Ula { .. } => Self::ula(),
            ArrayGeometry::Uca { .. } => Self::uca(),
        }
    }

    pub fn contains(&self, label: &DoaLabel) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        let thetas_ok = label.thetas.iter().all(|&t| inside(t, self.theta));
        let phis_ok = match (&label.phis, self.phi) {
            (None, None) => true,
            (Some(p), Some(range)) => p.iter().all(|&v| inside(v, range)),
            _ => false,
        };
        thetas_ok && phis_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum DoaSpec {
    Uniform { min_sep_deg: f64 },
    Equidistant,
    Deterministic { thetas: Vec<f64>, phis: Option<Vec<f64>> },
}

impl Default for DoaSpec {
    fn default() -> Self {
        DoaSpec::Uniform { min_sep_deg: 3.0 }
    }
}

/// True source directions in degrees. `phis` is present only for 2D labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoaLabel {
    pub thetas: Vec<f64>,
    pub phis: Option<Vec<f64>>,
}

impl DoaLabel {
    pub fn one_d(thetas: Vec<f64>) -> Self {
        DoaLabel { thetas, phis: None }
    }

    pub fn sources(&self) -> usize {
        self.thetas.len()
    }

    pub fn dims(&self) -> usize {
        if self.phis.is_some() {
            2
        } else {
            1
        }
    }

    /// θ values followed by φ values.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = self.thetas.clone();
        if let Some(p) = &self.phis {
            out.extend_from_slice(p);
        }
        out
    }

    fn sorted_by_theta(self) -> Self {
        let mut idx: Vec<usize> = (0..self.thetas.len()).collect();
        idx.sort_by(|&a, &b| self.thetas[a].total_cmp(&self.thetas[b]));
        DoaLabel {
            thetas: idx.iter().map(|&i| self.thetas[i]).collect(),
            phis: self.phis.map(|p| idx.iter().map(|&i| p[i]).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalScenario {
    pub geometry: ArrayGeometry,
    pub sources: usize,
    pub snr_db: f64,
    pub snapshots: usize,
    pub doa: DoaSpec,
    pub fov: Fov,
}

impl SignalScenario {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.sources == 0 {
            return Err(DoaError::InvalidArgument("need at least one source".into()));
        }
        if self.snapshots == 0 {
            return Err(DoaError::InvalidArgument("need at least one snapshot".into()));
        }
        if !self.snr_db.is_finite() {
            return Err(DoaError::InvalidArgument("SNR must be finite".into()));
        }
        if (self.fov.phi.is_some()) != (self.geometry.label_dims() == 2) {
            return Err(DoaError::InvalidArgument("field of view does not match array geometry".into()));
        }
        Ok(())
    }
}

/// Noise variance for a per-source SNR in dB with unit source power.
pub fn noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

fn circular_gaussian(rng: &mut DoaRng, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

fn equidistant(k: usize, (lo, hi): (f64, f64)) -> Vec<f64> {
    if k == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let step = (hi - lo) / (k - 1) as f64;
    (0..k).map(|i| if i == k - 1 { hi } else { lo + step * i as f64 }).collect()
}

/// Draws `sources` DOAs according to `spec`. Uniform labels come back sorted
/// by θ.
pub fn sample_doas(spec: &DoaSpec, fov: &Fov, sources: usize, rng: &mut DoaRng) -> Result<DoaLabel> {
    match spec {
        DoaSpec::Deterministic { thetas, phis } => {
            let label = DoaLabel { thetas: thetas.clone(), phis: phis.clone() };
            if label.sources() != sources || phis.as_ref().is_some_and(|p| p.len() != sources) {
                return Err(DoaError::InvalidLabel(format!(
                    "deterministic DOA list has {} angles, scenario has {sources} sources",
                    label.sources()
                )));
            }
            if !fov.contains(&label) {
                return Err(DoaError::InvalidLabel("deterministic DOAs outside the field of view".into()));
            }
            Ok(label)
        }
        DoaSpec::Equidistant => Ok(DoaLabel {
            thetas: equidistant(sources, fov.theta),
            phis: fov.phi.map(|(lo, hi)| vec![0.5 * (lo + hi); sources]),
        }),
        DoaSpec::Uniform { min_sep_deg } => {
            let (lo, hi) = fov.theta;
            if sources > 1 && (sources - 1) as f64 * min_sep_deg > hi - lo {
                return Err(DoaError::InfeasibleSpec(format!(
                    "{sources} sources at {min_sep_deg}° separation do not fit in [{lo}, {hi}]"
                )));
            }
            for _ in 0..MAX_DRAW_ATTEMPTS {
                let thetas: Vec<f64> = (0..sources).map(|_| rng.random_range(lo..=hi)).collect();
                let phis = fov
                    .phi
                    .map(|(plo, phi)| (0..sources).map(|_| rng.random_range(plo..=phi)).collect());
                let separated = thetas
                    .iter()
                    .enumerate()
                    .all(|(i, a)| thetas[i + 1..].iter().all(|b| (a - b).abs() >= *min_sep_deg));
                if separated {
                    return Ok(DoaLabel { thetas, phis }.sorted_by_theta());
                }
            }
            Err(DoaError::InfeasibleSpec(format!(
                "no DOA draw met the {min_sep_deg}° separation in {MAX_DRAW_ATTEMPTS} attempts"
            )))
        }
    }
}

/// Snapshot matrix `Y = A(θ, e)·S + N` for the DOAs in `label`, drawing
/// signal and noise from the signal stream of `seed`.
pub fn simulate_for_label(
    scenario: &SignalScenario,
    imp: &ImperfectionSpec,
    label: &DoaLabel,
    seed: u64,
) -> Result<CMatrix> {
    let m = scenario.geometry.elements();
    let k = label.sources();
    let t = scenario.snapshots;
    let mut manifold = DMatrix::<Complex64>::zeros(m, k);
    for i in 0..k {
        let phi = label.phis.as_ref().map(|p| p[i]);
        manifold.set_column(i, &perturbed_steering(&scenario.geometry, imp, label.thetas[i], phi)?);
    }

    let mut rng = rng::stream(seed, SIGNAL_STREAM);
    let sig = DMatrix::from_fn(k, t, |_, _| circular_gaussian(&mut rng, 1.0));
    let sigma2 = noise_variance(scenario.snr_db);
    let noise = DMatrix::from_fn(m, t, |_, _| circular_gaussian(&mut rng, sigma2));
    Ok(manifold * sig + noise)
}

/// Draws DOAs and simulates `T` snapshots. Deterministic in `(scenario, imp, seed)`.
pub fn simulate_snapshots(scenario: &SignalScenario, imp: &ImperfectionSpec, seed: u64) -> Result<(CMatrix, DoaLabel)> {
    scenario.validate()?;
    let mut doa_rng = rng::stream(seed, DOA_STREAM);
    let label = sample_doas(&scenario.doa, &scenario.fov, scenario.sources, &mut doa_rng)?;
    let y = simulate_for_label(scenario, imp, &label, seed)?;
    Ok((y, label))
}

/// `(1/T)·Σ y(t)·y(t)ᴴ`, filled from the upper triangle so the result is
/// exactly Hermitian.
pub fn sample_covariance(y: &CMatrix) -> CMatrix {
    let (m, t) = y.shape();
    let inv_t = 1.0 / t.max(1) as f64;
    let mut r = DMatrix::<Complex64>::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let mut acc = Complex64::new(0.0, 0.0);
            for s in 0..t {
                acc += y[(i, s)] * y[(j, s)].conj();
            }
            acc *= inv_t;
            if i == j {
                acc.im = 0.0;
            }
            r[(i, j)] = acc;
            r[(j, i)] = acc.conj();
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_sim::steering_ula;
    use rand::SeedableRng;

    fn scen(snr_db: f64, k: usize, t: usize) -> SignalScenario {
        SignalScenario {
            geometry: ArrayGeometry::ula(8, 0.5).unwrap(),
            sources: k,
            snr_db,
            snapshots: t,
            doa: DoaSpec::default(),
            fov: Fov::ula(),
        }
    }

    #[test]
    fn noise_variance_at_zero_db() {
        assert_eq!(noise_variance(0.0), 1.0);
        assert!((noise_variance(10.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn equidistant_and_deterministic() {
        let mut rng = DoaRng::seed_from_u64(0);
        let l = sample_doas(&DoaSpec::Equidistant, &Fov::ula(), 3, &mut rng).unwrap();
        assert_eq!(l.thetas, vec![-60.0, 0.0, 60.0]);
        let det = DoaSpec::Deterministic { thetas: vec![10.0, 20.0], phis: None };
        assert_eq!(sample_doas(&det, &Fov::ula(), 2, &mut rng).unwrap().thetas, vec![10.0, 20.0]);
        let bad = DoaSpec::Deterministic { thetas: vec![10.0, 80.0], phis: None };
        assert!(matches!(sample_doas(&bad, &Fov::ula(), 2, &mut rng), Err(DoaError::InvalidLabel(_))));
    }

    #[test]
    fn uniform_respects_separation() {
        let spec = DoaSpec::Uniform { min_sep_deg: 3.0 };
        let mut rng = DoaRng::seed_from_u64(3);
        for _ in 0..2000 {
            let l = sample_doas(&spec, &Fov::ula(), 3, &mut rng).unwrap();
            for w in l.thetas.windows(2) {
                assert!(w[1] - w[0] >= 3.0);
            }
            assert!(Fov::ula().contains(&l));
        }
    }

    #[test]
    fn uniform_infeasible() {
        let spec = DoaSpec::Uniform { min_sep_deg: 50.0 };
        let mut rng = DoaRng::seed_from_u64(3);
        assert!(matches!(sample_doas(&spec, &Fov::ula(), 4, &mut rng), Err(DoaError::InfeasibleSpec(_))));
        // Feasible in principle but practically never drawn.
        let tight = DoaSpec::Uniform { min_sep_deg: 39.9 };
        assert!(matches!(sample_doas(&tight, &Fov::ula(), 4, &mut rng), Err(DoaError::InfeasibleSpec(_))));
    }

    #[test]
    fn uca_labels_are_2d() {
        let mut rng = DoaRng::seed_from_u64(9);
        let l = sample_doas(&DoaSpec::default(), &Fov::uca(), 5, &mut rng).unwrap();
        assert_eq!(l.dims(), 2);
        assert!(Fov::uca().contains(&l));
    }

    #[test]
    fn noiseless_single_source_is_rank_one() {
        let s = scen(300.0, 1, 1);
        let imp = ImperfectionSpec::ideal(&s.geometry);
        let (y, label) = simulate_snapshots(&s, &imp, 11).unwrap();
        let a = steering_ula(&s.geometry, label.thetas[0]).unwrap();
        let ratio = y[(0, 0)] / a[0];
        for m in 0..8 {
            assert!((y[(m, 0)] - ratio * a[m]).norm() < 1e-9 * ratio.norm());
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let s = scen(0.0, 3, 10);
        let imp = ImperfectionSpec::ideal(&s.geometry);
        let (a, la) = simulate_snapshots(&s, &imp, 5).unwrap();
        let (b, lb) = simulate_snapshots(&s, &imp, 5).unwrap();
        assert_eq!(la, lb);
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits()));
        let (c, _) = simulate_snapshots(&s, &imp, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn covariance_identities() {
        let y = DMatrix::from_fn(4, 1, |i, _| Complex64::new(i as f64, 1.0 - i as f64));
        let r = sample_covariance(&y);
        assert!((r.clone() - &y * y.adjoint()).camax() < 1e-15);

        let rep = DMatrix::from_fn(4, 5, |i, _| y[(i, 0)]);
        assert!((sample_covariance(&rep) - &r).camax() < 1e-12);

        let s = scen(0.0, 2, 7);
        let (yy, _) = simulate_snapshots(&s, &ImperfectionSpec::ideal(&s.geometry), 1).unwrap();
        let r = sample_covariance(&yy);
        let tr: f64 = (0..8).map(|i| r[(i, i)].re).sum();
        let energy: f64 = yy.iter().map(|v| v.norm_sqr()).sum::<f64>() / 7.0;
        assert!((tr - energy).abs() < 1e-12 * energy);
        assert_eq!(r, r.adjoint());
    }
}

use super::OutputMode;
use crate::array_sim::DoaLabel;
use crate::metrics::hungarian;
use crate::{DoaError, Result};

/// Optimal shared permutation: `perm[k]` is the estimate index paired with
/// true source `k`, minimizing the summed squared error over all axes.
/// Axes are given as `(truth, estimate)` slices of equal length K.
pub fn pit_assignment(axes: &[(&[f64], &[f64])]) -> Result<Vec<usize>> {
    let k = axes.first().map(|a| a.0.len()).ok_or_else(|| DoaError::Empty("PIT axes".into()))?;
    if k == 0 {
        return Err(DoaError::Empty("PIT needs at least one source".into()));
    }
    for (t, e) in axes {
        if t.len() != k || e.len() != k {
            return Err(DoaError::Dimension(format!("PIT lengths {} and {} for K = {k}", t.len(), e.len())));
        }
    }
    let cost: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| axes.iter().map(|(t, e)| (t[i] - e[j]).powi(2)).sum()).collect())
        .collect();
    Ok(hungarian(&cost)?.cols)
}

fn loss_for(axes: &[(&[f64], &[f64])], perm: &[usize]) -> f64 {
    let k = perm.len();
    let sq: f64 = axes
        .iter()
        .map(|(t, e)| perm.iter().enumerate().map(|(i, &j)| (t[i] - e[j]).powi(2)).sum::<f64>())
        .sum();
    (sq / (axes.len() * k) as f64).sqrt()
}

/// `min_P sqrt(‖θ − Pθ̂‖² / K)`.
pub fn pit_loss_1d(theta: &[f64], theta_hat: &[f64]) -> Result<f64> {
    let axes = [(theta, theta_hat)];
    let perm = pit_assignment(&axes)?;
    Ok(loss_for(&axes, &perm))
}

/// `min_P sqrt((‖θ − Pθ̂‖² + ‖φ − Pφ̂‖²) / 2K)` with one shared P.
pub fn pit_loss_2d(theta: &[f64], phi: &[f64], theta_hat: &[f64], phi_hat: &[f64]) -> Result<f64> {
    let axes = [(theta, theta_hat), (phi, phi_hat)];
    let perm = pit_assignment(&axes)?;
    Ok(loss_for(&axes, &perm))
}

/// Reorders a label to line up with a head output row, so that a plain
/// row RMSE against the returned vector equals the PIT loss.
pub fn pit_targets(label: &DoaLabel, pred: &[f64], mode: OutputMode) -> Result<Vec<f64>> {
    let k = label.sources();
    let mut out = vec![0.0; pred.len()];
    match (mode, &label.phis) {
        (OutputMode::OneD, _) => {
            if pred.len() != k {
                return Err(DoaError::Dimension(format!("head has {} outputs for K = {k}", pred.len())));
            }
            let perm = pit_assignment(&[(&label.thetas, pred)])?;
            for (i, &j) in perm.iter().enumerate() {
                out[j] = label.thetas[i];
            }
        }
        (OutputMode::TwoD, Some(phis)) => {
            if pred.len() != 2 * k {
                return Err(DoaError::Dimension(format!("head has {} outputs for 2K = {}", pred.len(), 2 * k)));
            }
            let perm = pit_assignment(&[(&label.thetas, &pred[..k]), (phis, &pred[k..])])?;
            for (i, &j) in perm.iter().enumerate() {
                out[j] = label.thetas[i];
                out[k + j] = phis[i];
            }
        }
        (OutputMode::TwoD, None) => {
            return Err(DoaError::InvalidLabel("2D model needs elevation labels".into()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_examples() {
        assert_eq!(pit_loss_1d(&[10.0, 20.0], &[10.0, 20.0]).unwrap(), 0.0);
        assert_eq!(pit_loss_1d(&[10.0, 20.0], &[20.0, 10.0]).unwrap(), 0.0);
        let l = pit_loss_1d(&[0.0, 10.0], &[2.0, 13.0]).unwrap();
        assert!((l - (13.0f64 / 2.0).sqrt()).abs() < 1e-15);
        assert_eq!(pit_loss_2d(&[0.0, 10.0], &[5.0, 15.0], &[10.0, 0.0], &[15.0, 5.0]).unwrap(), 0.0);
    }

    #[test]
    fn shared_permutation_trades_off_axes() {
        // identity: θ errors 10,10 → 200; swap: φ errors 10,10 → 200.
        let l = pit_loss_2d(&[0.0, 10.0], &[5.0, 15.0], &[10.0, 0.0], &[5.0, 15.0]).unwrap();
        let id = ((100.0 + 100.0 + 0.0 + 0.0) / 4.0f64).sqrt();
        let sw = ((0.0 + 0.0 + 100.0 + 100.0) / 4.0f64).sqrt();
        assert_eq!(l, id.min(sw));
        assert!((l - 50f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn targets_reproduce_loss() {
        let label = DoaLabel { thetas: vec![-30.0, 5.0, 40.0], phis: Some(vec![10.0, 20.0, 30.0]) };
        let pred = [41.0, -29.0, 4.0, 31.0, 9.0, 22.0];
        let t = pit_targets(&label, &pred, OutputMode::TwoD).unwrap();
        let rmse = (t.iter().zip(&pred).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 6.0).sqrt();
        let l = pit_loss_2d(&label.thetas, label.phis.as_ref().unwrap(), &pred[..3], &pred[3..]).unwrap();
        assert!((rmse - l).abs() < 1e-14);
        assert_eq!(t, vec![40.0, -30.0, 5.0, 30.0, 10.0, 20.0]);
    }

    #[test]
    fn mismatched_lengths() {
        assert!(pit_loss_1d(&[1.0, 2.0], &[1.0]).is_err());
        assert!(pit_loss_1d(&[], &[]).is_err());
        assert!(pit_targets(&DoaLabel::one_d(vec![1.0]), &[1.0, 2.0], OutputMode::OneD).is_err());
    }
}

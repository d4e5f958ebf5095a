use crate::autodiff::tape::cosine_row;
use crate::{DoaError, Result};

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(DoaError::Dimension(format!("feature lengths {} and {}", a.len(), b.len())));
    }
    Ok(())
}

/// Squared Euclidean distance `‖z_s − z_t‖²`.
pub fn loss_mse(zs: &[f64], zt: &[f64]) -> Result<f64> {
    same_len(zs, zt)?;
    Ok(zs.iter().zip(zt).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// `1 − cos(z_s, z_t)`. A zero vector gives 1 and sets the returned flag.
pub fn loss_cos(zs: &[f64], zt: &[f64]) -> Result<(f64, bool)> {
    same_len(zs, zt)?;
    let degenerate = zs.iter().all(|&v| v == 0.0) || zt.iter().all(|&v| v == 0.0);
    Ok((cosine_row(zs, zt).0, degenerate))
}

/// `α·mean(loss_cos) + β·mean(loss_mse)` over aligned batches.
pub fn loss_total(zs: &[Vec<f64>], zt: &[Vec<f64>], alpha: f64, beta: f64) -> Result<f64> {
    if zs.len() != zt.len() {
        return Err(DoaError::Dimension(format!("batches of {} and {} features", zs.len(), zt.len())));
    }
    if zs.is_empty() {
        return Err(DoaError::Empty("feature batch".into()));
    }
    let (mut cos, mut mse) = (0.0, 0.0);
    for (a, b) in zs.iter().zip(zt) {
        cos += loss_cos(a, b)?.0;
        mse += loss_mse(a, b)?;
    }
    let n = zs.len() as f64;
    Ok(alpha * cos / n + beta * mse / n)
}

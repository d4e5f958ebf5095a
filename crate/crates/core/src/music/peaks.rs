use crate::{DoaError, Result};

/// Up to K peak locations (ascending) and whether fewer than K were found.
#[derive(Debug, Clone, PartialEq)]
pub struct Peaks {
    pub angles: Vec<f64>,
    pub miss: bool,
}

/// Offset in grid steps of the vertex of the parabola through
/// `(-1, left)`, `(0, mid)`, `(1, right)`; 0 when the points are collinear.
pub fn parabolic_vertex(left: f64, mid: f64, right: f64) -> f64 {
    let curv = left - 2.0 * mid + right;
    if curv == 0.0 || !curv.is_finite() {
        return 0.0;
    }
    (0.5 * (left - right) / curv).clamp(-0.5, 0.5)
}

/// Strict interior local maxima of `spectrum` over `grid` (uniform, same
/// length), tallest first; the top `k` are refined by fitting a parabola
/// to the reciprocal spectrum.
pub fn music_peaks(spectrum: &[f64], grid: &[f64], k: usize) -> Result<Peaks> {
    if spectrum.is_empty() {
        return Err(DoaError::Empty("spectrum".into()));
    }
    if grid.len() != spectrum.len() {
        return Err(DoaError::Dimension(format!("{} grid points for {} spectrum samples", grid.len(), spectrum.len())));
    }
    let mut maxima: Vec<usize> = (1..spectrum.len().saturating_sub(1))
        .filter(|&i| spectrum[i] > spectrum[i - 1] && spectrum[i] > spectrum[i + 1])
        .collect();
    maxima.sort_by(|&a, &b| spectrum[b].total_cmp(&spectrum[a]).then(a.cmp(&b)));
    maxima.truncate(k);
    let step = if grid.len() > 1 { grid[1] - grid[0] } else { 0.0 };
    let mut angles: Vec<f64> = maxima
        .iter()
        .map(|&i| {
            let off = parabolic_vertex(1.0 / spectrum[i - 1], 1.0 / spectrum[i], 1.0 / spectrum[i + 1]);
            grid[i] + off * step
        })
        .collect();
    angles.sort_by(f64::total_cmp);
    Ok(Peaks { miss: angles.len() < k, angles })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reciprocal_quadratic_vertex_is_exact() {
        let x0 = 0.3137;
        let grid: Vec<f64> = (0..11).map(|i| i as f64 * 0.1 - 0.5).collect();
        let spec: Vec<f64> = grid.iter().map(|x| 1.0 / (2.0 + 5.0 * (x - x0).powi(2))).collect();
        let p = music_peaks(&spec, &grid, 1).unwrap();
        assert!(!p.miss);
        assert!((p.angles[0] - x0).abs() < 1e-10, "{}", p.angles[0]);
    }

    #[test]
    fn vertex_formula() {
        // y = −(x − 0.25)² sampled at −1, 0, 1
        let f = |x: f64| -(x - 0.25f64).powi(2);
        assert!((parabolic_vertex(f(-1.0), f(0.0), f(1.0)) - 0.25).abs() < 1e-15);
        assert_eq!(parabolic_vertex(1.0, 2.0, 3.0), 0.0);
        assert_eq!(parabolic_vertex(1.0, 1.0, 1.0), 0.0);
    }

    #[test]
    fn monotone_and_single_peak() {
        let grid: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let up: Vec<f64> = (0..10).map(|i| i as f64 + 1.0).collect();
        let p = music_peaks(&up, &grid, 1).unwrap();
        assert!(p.miss && p.angles.is_empty());
        let mut one = vec![1.0; 10];
        one[4] = 5.0;
        let p = music_peaks(&one, &grid, 1).unwrap();
        assert_eq!(p.angles, vec![4.0]);
        let p = music_peaks(&one, &grid, 2).unwrap();
        assert!(p.miss);
        assert_eq!(p.angles.len(), 1);
    }

    #[test]
    fn keeps_tallest_sorted_by_angle() {
        let grid: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let s = [1.0, 3.0, 1.0, 9.0, 1.0, 5.0, 1.0, 2.0, 1.0];
        let p = music_peaks(&s, &grid, 2).unwrap();
        assert_eq!(p.angles.len(), 2);
        assert!((p.angles[0] - 3.0).abs() < 0.5 && (p.angles[1] - 5.0).abs() < 0.5);
        assert!(!p.miss);
    }
}

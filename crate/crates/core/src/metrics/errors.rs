use super::hungarian_padded;
use crate::array_sim::DoaLabel;
use crate::{DoaError, Result};

/// Pairing distance in degrees: `|Δθ|`, or the mean of `|Δθ|` and `|Δφ|`
/// when both labels carry elevations.
fn distance(a: &DoaLabel, i: usize, b: &DoaLabel, j: usize) -> f64 {
    let dt = (a.thetas[i] - b.thetas[j]).abs();
    match (&a.phis, &b.phis) {
        (Some(pa), Some(pb)) => 0.5 * (dt + (pa[i] - pb[j]).abs()),
        _ => dt,
    }
}

fn check(truth: &DoaLabel, est: &DoaLabel) -> Result<()> {
    if truth.sources() == 0 {
        return Err(DoaError::Empty("truth has no sources".into()));
    }
    if truth.dims() != est.dims() && est.sources() > 0 {
        return Err(DoaError::Dimension("truth and estimate differ in angle dimensions".into()));
    }
    Ok(())
}

/// One error per true source under the optimal (Hungarian) pairing of
/// capped distances. Unmatched true sources score `cap`.
pub fn match_errors(truth: &DoaLabel, est: &DoaLabel, cap: f64) -> Result<Vec<f64>> {
    check(truth, est)?;
    let (n, m) = (truth.sources(), est.sources());
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..m).map(|j| distance(truth, i, est, j).min(cap)).collect())
        .collect();
    let a = hungarian_padded(&cost, m, cap)?;
    Ok(a.cols.iter().enumerate().map(|(i, &j)| if j < m { cost[i][j] } else { cap }).collect())
}

fn order_by_theta(l: &DoaLabel) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..l.sources()).collect();
    idx.sort_by(|&a, &b| l.thetas[a].total_cmp(&l.thetas[b]));
    idx
}

/// One error per true source after sorting both sets by θ and pairing them
/// index-wise. Missing estimates score `cap`.
pub fn raw_errors(truth: &DoaLabel, est: &DoaLabel, cap: f64) -> Result<Vec<f64>> {
    check(truth, est)?;
    let ti = order_by_theta(truth);
    let ei = order_by_theta(est);
    Ok(ti
        .iter()
        .enumerate()
        .map(|(k, &i)| match ei.get(k) {
            Some(&j) => distance(truth, i, est, j).min(cap),
            None => cap,
        })
        .collect())
}

/// OSPA distance of order `p` with cutoff `c` between two angle sets.
pub fn ospa(truth: &DoaLabel, est: &DoaLabel, c: f64, p: u32) -> Result<f64> {
    let (a, b) = if truth.sources() >= est.sources() { (truth, est) } else { (est, truth) };
    let (n, m) = (a.sources(), b.sources());
    if n == 0 {
        return Ok(0.0);
    }
    if m > 0 && a.dims() != b.dims() {
        return Err(DoaError::Dimension("OSPA sets differ in angle dimensions".into()));
    }
    if m == 0 {
        return Ok(c);
    }
    let pow = |d: f64| d.min(c).powi(p as i32);
    // rows: the smaller set, so every row is matched; padding charges c^p
    let cost: Vec<Vec<f64>> = (0..m).map(|j| (0..n).map(|i| pow(distance(a, i, b, j))).collect()).collect();
    let assignment = hungarian_padded(&cost, n, c.powi(p as i32))?;
    Ok((assignment.cost / n as f64).powf(1.0 / p as f64))
}

/// Inverse-ECDF quantile: the `⌈q·n⌉`-th smallest value (1-based).
pub fn ecdf_quantile(errors: &[f64], q: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(DoaError::Empty("no errors to take a quantile of".into()));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(DoaError::Range(format!("quantile level must lie in (0, 1), got {q}")));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let idx = ((q * n as f64).ceil() as usize).clamp(1, n);
    Ok(sorted[idx - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(v: &[f64]) -> DoaLabel {
        DoaLabel::one_d(v.to_vec())
    }

    #[test]
    fn matched_hand_cases() {
        assert_eq!(match_errors(&l(&[0., 10.]), &l(&[0., 10.]), 30.).unwrap(), vec![0., 0.]);
        assert_eq!(match_errors(&l(&[0., 10.]), &l(&[11., -1.]), 30.).unwrap(), vec![1., 1.]);
        assert_eq!(match_errors(&l(&[0., 10.]), &l(&[0.]), 30.).unwrap(), vec![0., 30.]);
        assert_eq!(match_errors(&l(&[5.]), &l(&[]), 30.).unwrap(), vec![30.]);
        assert!(matches!(match_errors(&l(&[]), &l(&[1.]), 30.), Err(DoaError::Empty(_))));
    }

    #[test]
    fn raw_hand_cases() {
        assert_eq!(raw_errors(&l(&[0., 10.]), &l(&[0., 10.]), 30.).unwrap(), vec![0., 0.]);
        assert_eq!(raw_errors(&l(&[0., 10.]), &l(&[11., -1.]), 30.).unwrap(), vec![1., 1.]);
        assert_eq!(raw_errors(&l(&[0., 10.]), &l(&[50., 60.]), 30.).unwrap(), vec![30., 30.]);
        assert_eq!(raw_errors(&l(&[0., 10.]), &l(&[9.]), 30.).unwrap(), vec![9., 30.]);
    }

    #[test]
    fn ospa_hand_cases() {
        assert_eq!(ospa(&l(&[1., 2.]), &l(&[2., 1.]), 30., 1).unwrap(), 0.0);
        assert_eq!(ospa(&l(&[0.]), &l(&[40.]), 30., 1).unwrap(), 30.0);
        assert_eq!(ospa(&l(&[0., 10.]), &l(&[0.]), 30., 1).unwrap(), 15.0);
        assert_eq!(ospa(&l(&[0.]), &l(&[0., 10.]), 30., 1).unwrap(), 15.0);
        assert!((ospa(&l(&[0., 10.]), &l(&[0.]), 30., 2).unwrap() - 450f64.sqrt()).abs() < 1e-12);
        assert_eq!(ospa(&l(&[]), &l(&[]), 30., 1).unwrap(), 0.0);
        assert_eq!(ospa(&l(&[]), &l(&[3.]), 30., 2).unwrap(), 30.0);
    }

    #[test]
    fn two_d_cost_is_mean_of_axes() {
        let t = DoaLabel { thetas: vec![0., 100.], phis: Some(vec![10., 20.]) };
        let e = DoaLabel { thetas: vec![102., 2.], phis: Some(vec![20., 14.]) };
        assert_eq!(match_errors(&t, &e, 30.).unwrap(), vec![3., 1.]);
    }

    #[test]
    fn quantiles() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(ecdf_quantile(&v, 0.9).unwrap(), 9.0);
        assert_eq!(ecdf_quantile(&v, 0.1).unwrap(), 1.0);
        assert_eq!(ecdf_quantile(&v, 0.999_999).unwrap(), 10.0);
        assert_eq!(ecdf_quantile(&[4.2; 7], 0.37).unwrap(), 4.2);
        assert!(ecdf_quantile(&[], 0.5).is_err());
        assert!(ecdf_quantile(&v, 1.0).is_err());
    }
}

use serde::{Deserialize, Serialize};

use super::{ecdf_quantile, match_errors, ospa, raw_errors};
use crate::array_sim::DoaLabel;
use crate::{DoaError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub miss_prob: f64,
    pub ospa_linear: f64,
    pub ospa_square: f64,
    pub rmse_raw: f64,
    pub rmse_matched: f64,
    pub mae_raw: f64,
    pub mae_matched: f64,
    pub acc_raw: f64,
    pub acc_matched: f64,
    pub ecdf_q10_raw: f64,
    pub ecdf_q90_raw: f64,
    pub ecdf_q10_matched: f64,
    pub ecdf_q90_matched: f64,
    pub trial_count: usize,
}

/// Report file contents: the metrics plus run identification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub scenario: String,
    pub seed: u64,
    pub config_hash: String,
    #[serde(flatten)]
    pub metrics: MetricsReport,
}

fn rmse(e: &[f64]) -> f64 {
    (e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64).sqrt()
}

fn mae(e: &[f64]) -> f64 {
    e.iter().sum::<f64>() / e.len() as f64
}

fn accuracy(e: &[f64], tol: f64) -> f64 {
    e.iter().filter(|&&v| v <= tol).count() as f64 / e.len() as f64
}

/// Pools per-source errors over all trials and aggregates them.
pub fn compute_report(
    truths: &[DoaLabel],
    estimates: &[DoaLabel],
    miss_flags: &[bool],
    cap: f64,
    tolerance: f64,
) -> Result<MetricsReport> {
    if truths.is_empty() {
        return Err(DoaError::Empty("no trials".into()));
    }
    if truths.len() != estimates.len() || truths.len() != miss_flags.len() {
        return Err(DoaError::Dimension(format!(
            "{} truths, {} estimates, {} miss flags",
            truths.len(),
            estimates.len(),
            miss_flags.len()
        )));
    }
    let mut raw = Vec::new();
    let mut matched = Vec::new();
    let (mut o1, mut o2) = (0.0, 0.0);
    for (t, e) in truths.iter().zip(estimates) {
        raw.extend(raw_errors(t, e, cap)?);
        matched.extend(match_errors(t, e, cap)?);
        o1 += ospa(t, e, cap, 1)?;
        o2 += ospa(t, e, cap, 2)?;
    }
    let n = truths.len() as f64;
    Ok(MetricsReport {
        miss_prob: miss_flags.iter().filter(|&&m| m).count() as f64 / n,
        ospa_linear: o1 / n,
        ospa_square: o2 / n,
        rmse_raw: rmse(&raw),
        rmse_matched: rmse(&matched),
        mae_raw: mae(&raw),
        mae_matched: mae(&matched),
        acc_raw: accuracy(&raw, tolerance),
        acc_matched: accuracy(&matched, tolerance),
        ecdf_q10_raw: ecdf_quantile(&raw, 0.1)?,
        ecdf_q90_raw: ecdf_quantile(&raw, 0.9)?,
        ecdf_q10_matched: ecdf_quantile(&matched, 0.1)?,
        ecdf_q90_matched: ecdf_quantile(&matched, 0.9)?,
        trial_count: truths.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_estimator() {
        let t = vec![DoaLabel::one_d(vec![-20.0, 5.0, 40.0]); 4];
        let r = compute_report(&t, &t, &[false; 4], 30.0, 10.0).unwrap();
        assert_eq!(r.rmse_raw + r.rmse_matched + r.mae_raw + r.mae_matched, 0.0);
        assert_eq!(r.ospa_linear + r.ospa_square, 0.0);
        assert_eq!((r.acc_raw, r.acc_matched, r.miss_prob), (1.0, 1.0, 0.0));
        assert_eq!(r.trial_count, 4);
    }

    #[test]
    fn swapped_single_trial() {
        let t = [DoaLabel::one_d(vec![0.0, 10.0])];
        let e = [DoaLabel::one_d(vec![11.0, -1.0])];
        let r = compute_report(&t, &e, &[false], 30.0, 10.0).unwrap();
        assert_eq!((r.rmse_matched, r.mae_matched, r.acc_matched), (1.0, 1.0, 1.0));
    }

    #[test]
    fn misses_and_mismatch() {
        let t = [DoaLabel::one_d(vec![0.0, 10.0]), DoaLabel::one_d(vec![0.0, 10.0])];
        let e = [DoaLabel::one_d(vec![0.0]), DoaLabel::one_d(vec![0.0, 10.0])];
        let r = compute_report(&t, &e, &[true, false], 30.0, 10.0).unwrap();
        assert_eq!(r.miss_prob, 0.5);
        assert_eq!(r.ecdf_q90_matched, 30.0);
        assert!(compute_report(&t, &e[..1], &[true], 30.0, 10.0).is_err());
        assert!(compute_report(&[], &[], &[], 30.0, 10.0).is_err());
    }

    #[test]
    fn json_field_names() {
        let t = [DoaLabel::one_d(vec![1.0])];
        let metrics = compute_report(&t, &t, &[false], 30.0, 10.0).unwrap();
        let rep = EvalReport { method: "music".into(), scenario: "scen1".into(), seed: 3, config_hash: "ab".into(), metrics };
        let v: serde_json::Value = serde_json::to_value(&rep).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(|s| s.as_str()).collect();
        for k in [
            "miss_prob", "ospa_linear", "ospa_square", "rmse_raw", "rmse_matched", "mae_raw", "mae_matched",
            "acc_raw", "acc_matched", "ecdf_q10_raw", "ecdf_q90_raw", "ecdf_q10_matched", "ecdf_q90_matched",
            "trial_count", "method", "scenario", "seed", "config_hash",
        ] {
            assert!(keys.contains(&k), "{k}");
        }
        assert_eq!(keys.len(), 18);
        let back: EvalReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, rep);
    }
}

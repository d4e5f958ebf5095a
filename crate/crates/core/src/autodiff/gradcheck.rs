use super::{Tape, Tensor, Var};
use crate::{DoaError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub checked: usize,
    pub passed: bool,
}

/// Compares the reverse-mode gradient of a scalar function against central
/// differences with step `1e-6·(1 + |x|)` for every entry of every input.
///
/// The relative error of an entry is `|analytic − numeric|` divided by
/// `max(|analytic|, |numeric|, 1e-4·max(1, |f|))`; the floor keeps entries
/// that are tiny relative to the function value from being judged on
/// round-off alone.
pub fn grad_check<F>(f: F, inputs: &[Tensor], tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let f0 = tape.value(out).item();
    let grads = tape.backward(out)?;
    let floor = 1e-4 * f0.abs().max(1.0);

    let mut work: Vec<Tensor> = inputs.to_vec();
    let (mut max_rel, mut max_abs, mut checked) = (0.0f64, 0.0f64, 0);
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v);
        for j in 0..inputs[k].len() {
            let x = inputs[k].data()[j];
            let h = 1e-6 * (1.0 + x.abs());
            let (xp, xm) = (x + h, x - h);
            work[k].data_mut()[j] = xp;
            let fp = eval(&work)?;
            work[k].data_mut()[j] = xm;
            let fm = eval(&work)?;
            work[k].data_mut()[j] = x;
            // divide by the step actually taken, not the nominal 2h
            let numeric = (fp - fm) / (xp - xm);
            let a = analytic.data()[j];
            if !numeric.is_finite() || !a.is_finite() {
                return Err(DoaError::Numeric("non-finite value during gradient check".into()));
            }
            let abs = (a - numeric).abs();
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(abs / a.abs().max(numeric.abs()).max(floor));
            checked += 1;
        }
    }
    Ok(GradCheckReport { max_rel_err: max_rel, max_abs_err: max_abs, checked, passed: max_rel < tolerance })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_is_exact() {
        let x = Tensor::row(vec![0.3, -0.12, 0.25, 0.0]);
        let r = grad_check(
            |t, v| {
                let sq = t.mul(v[0], v[0])?;
                t.sum(sq)
            },
            &[x],
            1e-10,
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.checked, 4);
    }

    #[test]
    fn dead_branch_gives_zero() {
        let x = Tensor::row(vec![1.0, 2.0]);
        let dead = Tensor::row(vec![5.0]);
        let r = grad_check(|t, v| t.sum(v[0]), &[x, dead], 1e-10).unwrap();
        assert!(r.passed, "{r:?}");
    }
}

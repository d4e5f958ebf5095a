use crate::{DoaError, Result};

/// Optimal assignment: `cols[i]` is the column given to row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub cols: Vec<usize>,
    pub cost: f64,
}

/// Minimum-cost perfect matching on a square cost matrix
/// (shortest augmenting paths with potentials, O(n³)).
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Assignment> {
    let n = cost.len();
    for row in cost {
        if row.len() != n {
            return Err(DoaError::Dimension(format!("cost matrix must be square, got a row of {} for n = {n}", row.len())));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(DoaError::Numeric("cost matrix has non-finite entries".into()));
        }
    }
    if n == 0 {
        return Ok(Assignment { cols: vec![], cost: 0.0 });
    }

    // 1-based potentials; column 0 is the virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut cols = vec![0; n];
    for j in 1..=n {
        cols[owner[j] - 1] = j - 1;
    }
    let total = cols.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    Ok(Assignment { cols, cost: total })
}

/// Rectangular assignment: the `rows × cols` matrix is padded to square with
/// `pad`. Entries of `cols` pointing past the real columns mean "unassigned".
pub fn hungarian_padded(cost: &[Vec<f64>], ncols: usize, pad: f64) -> Result<Assignment> {
    let n = cost.len().max(ncols);
    let square: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| cost.get(i).and_then(|r| r.get(j)).copied().unwrap_or(pad)).collect())
        .collect();
    for r in cost {
        if r.len() != ncols {
            return Err(DoaError::Dimension("ragged cost matrix".into()));
        }
    }
    let mut a = hungarian(&square)?;
    a.cols.truncate(cost.len());
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_cases() {
        let a = hungarian(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(a.cols, vec![0, 1]);
        assert_eq!(a.cost, 2.0);
        let b = hungarian(&[vec![4.0, 1.0], vec![2.0, 3.0]]).unwrap();
        assert_eq!(b.cols, vec![1, 0]);
        assert_eq!(b.cost, 3.0);
        let big = 1e6;
        let c = hungarian(&[vec![0.0, big, big], vec![big, 0.0, big], vec![big, big, 0.0]]).unwrap();
        assert_eq!(c.cols, vec![0, 1, 2]);
        assert_eq!(c.cost, 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(hungarian(&[vec![1.0, f64::NAN], vec![0.0, 0.0]]).is_err());
        assert!(hungarian(&[vec![1.0, 2.0]]).is_err());
        assert_eq!(hungarian(&[]).unwrap().cost, 0.0);
    }

    #[test]
    fn padded_leaves_rows_unassigned() {
        let a = hungarian_padded(&[vec![5.0], vec![1.0]], 1, 30.0).unwrap();
        assert_eq!(a.cols[1], 0);
        assert!(a.cols[0] >= 1);
        assert_eq!(a.cost, 31.0);
    }
}

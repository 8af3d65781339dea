use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{permutation_cost, CostMatrix, TransportPlan};

/// Minimum-cost perfect matching by shortest augmenting paths with dual
/// potentials (Hungarian / Jonker–Volgenant family), `O(N³)`.
///
/// Works for any finite square cost matrix; columns are scanned in increasing
/// index order and only strict improvements are taken, which keeps the output
/// deterministic.
pub fn solve_assignment<T: Scalar>(c: &CostMatrix<T>) -> Result<TransportPlan<T>> {
    c.check_finite()?;
    let n = c.n();
    if n == 0 {
        return Err(Error::InvalidArgument("empty cost matrix".into()));
    }
    let inf = T::infinity();
    // 1-based rows/columns; index 0 is the virtual start column.
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        minv.fill(inf);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let costs = c.row(i0 - 1);
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = costs[j - 1] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            debug_assert!(j1 != 0, "augmenting path search stalled");
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[row_of[j] - 1] = j - 1;
    }
    let cost = permutation_cost(c, &perm);
    Ok(TransportPlan::permutation(perm, cost))
}

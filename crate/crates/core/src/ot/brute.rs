use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{permutation_cost, CostMatrix, TransportPlan};

pub const BRUTE_FORCE_MAX_N: usize = 8;

/// Rearranges `p` into its lexicographic successor; false at the last one.
fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = p.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = p.iter().rposition(|&v| v > p[i]).expect("successor exists");
    p.swap(i, j);
    p[i + 1..].reverse();
    true
}

/// Exhaustive minimum over all `N!` permutations (`N ≤ 8`). Permutations are
/// visited in lexicographic order and only a strictly smaller cost replaces
/// the incumbent, so ties resolve to the lexicographically smallest.
pub fn brute_force_plan<T: Scalar>(c: &CostMatrix<T>) -> Result<TransportPlan<T>> {
    let n = c.n();
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::TooLarge { n, max: BRUTE_FORCE_MAX_N });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("empty cost matrix".into()));
    }
    c.check_finite()?;
    let mut p: Vec<usize> = (0..n).collect();
    let mut best = p.clone();
    let mut best_cost = permutation_cost(c, &p);
    while next_permutation(&mut p) {
        let cost = permutation_cost(c, &p);
        if cost < best_cost {
            best_cost = cost;
            best.copy_from_slice(&p);
        }
    }
    Ok(TransportPlan::permutation(best, best_cost))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ot::{cost_matrix, DiscreteDistribution};

    #[test]
    fn enumerates_all_permutations_in_order() {
        let mut p = vec![0, 1, 2];
        let mut seen = vec![p.clone()];
        while next_permutation(&mut p) {
            seen.push(p.clone());
        }
        assert_eq!(seen.len(), 6);
        assert!(seen.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn single_point() {
        let c = CostMatrix::from_entries(1, vec![3.5f64]).unwrap();
        let plan = brute_force_plan(&c).unwrap();
        assert_eq!(plan.as_permutation().unwrap(), &[0]);
        assert_eq!(plan.total_cost(), Some(3.5));
    }

    #[test]
    fn two_point_instance() {
        let x = DiscreteDistribution::uniform(vec![0.0f64, 2.0]).unwrap();
        let y = DiscreteDistribution::uniform(vec![1.0f64, 3.0]).unwrap();
        let plan = brute_force_plan(&cost_matrix(&x, &y).unwrap()).unwrap();
        assert_eq!(plan.total_cost(), Some(1.0));
        assert_eq!(plan.as_permutation().unwrap(), &[0, 1]);
    }

    #[test]
    fn ties_pick_the_identity() {
        let c = CostMatrix::from_entries(4, vec![2.0f64; 16]).unwrap();
        assert!(brute_force_plan(&c).unwrap().is_identity());
    }

    #[test]
    fn refuses_large_problems() {
        let c = CostMatrix::from_entries(9, vec![0.0f64; 81]).unwrap();
        assert!(matches!(brute_force_plan(&c), Err(Error::TooLarge { n: 9, max: 8 })));
    }
}

//! Discrete optimal transport between two equally sized point clouds on the
//! real line, uniform marginals, squared-difference cost.
//!
//! Under these conditions the transport LP is an assignment problem, so exact
//! optima are permutations. [`solve_exact`] uses the monotone (sorted) matching
//! when the cost matrix still knows its supports and falls back to the
//! assignment solver otherwise; [`brute_force_plan`] enumerates permutations
//! for small `N` and serves as the test oracle. [`solve_entropic`] is the
//! log-domain iterative-scaling alternative with dense plans.

mod assignment;
mod brute;
mod cost;
mod entropic;
pub mod key;
pub(crate) mod plan;

pub use assignment::solve_assignment;
pub use brute::{brute_force_plan, BRUTE_FORCE_MAX_N};
pub use cost::{cost_matrix, CostMatrix, DiscreteDistribution};
pub use entropic::{solve_entropic, EntropicConfig};
pub use plan::{apply_plan, invert_permutation_plan, permutation_cost, Coupling, PlanKind, TransportPlan};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Minimum-cost coupling with uniform marginals.
///
/// With supports available this is the sorted matching (optimal for convex
/// costs on the line); a bare cost matrix goes through [`solve_assignment`].
pub fn solve_exact<T: Scalar>(c: &CostMatrix<T>) -> Result<TransportPlan<T>> {
    c.check_finite()?;
    if c.n() == 0 {
        return Err(Error::InvalidArgument("empty cost matrix".into()));
    }
    match c.supports() {
        Some((x, y)) => {
            let perm = sorted_matching(x, y);
            let cost = permutation_cost(c, &perm);
            Ok(TransportPlan::permutation(perm, cost))
        }
        None => solve_assignment(c),
    }
}

/// Exact plan straight from the supports without materialising the `N×N`
/// cost matrix. Cost is summed in the same order as [`permutation_cost`].
pub fn solve_exact_points<T: Scalar>(x: &[T], y: &[T]) -> Result<TransportPlan<T>> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!("{} source vs {} target points", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(Error::InvalidArgument("empty point set".into()));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteCost { row: i, col: 0 });
    }
    if let Some(j) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteCost { row: 0, col: j });
    }
    let perm = sorted_matching(x, y);
    let mut sum = T::zero();
    for (i, &j) in perm.iter().enumerate() {
        let d = x[i] - y[j];
        sum += d * d;
    }
    Ok(TransportPlan::permutation(perm, sum / T::of_usize(x.len())))
}

/// Ranks of `values`, ties resolved by index.
fn argsort<T: Scalar>(values: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[a]
            .partial_cmp(&values[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

/// Monotone matching: the `k`-th smallest source goes to the `k`-th smallest
/// target. Returns `perm` with source `i` matched to target `perm[i]`.
pub fn sorted_matching<T: Scalar>(x: &[T], y: &[T]) -> Vec<usize> {
    let (sx, sy) = (argsort(x), argsort(y));
    let mut perm = vec![0; x.len()];
    for (&i, &j) in sx.iter().zip(&sy) {
        perm[i] = j;
    }
    perm
}

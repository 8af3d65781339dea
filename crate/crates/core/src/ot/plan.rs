use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{CostMatrix, DiscreteDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanKind {
    ExactPermutation,
    RegularizedDense,
}

/// Coupling storage. A permutation coupling puts mass `1/N` on `(i, perm[i])`.
#[derive(Debug, Clone, PartialEq)]
pub enum Coupling<T> {
    Permutation(Vec<usize>),
    Dense(Vec<T>),
}

/// An `N×N` coupling with uniform marginals `1/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan<T> {
    n: usize,
    coupling: Coupling<T>,
    total_cost: Option<T>,
}

impl<T: Scalar> TransportPlan<T> {
    pub(crate) fn permutation(perm: Vec<usize>, cost: T) -> Self {
        Self { n: perm.len(), coupling: Coupling::Permutation(perm), total_cost: Some(cost) }
    }

    pub(crate) fn dense(n: usize, coupling: Vec<T>, cost: T) -> Self {
        debug_assert_eq!(coupling.len(), n * n);
        Self { n, coupling: Coupling::Dense(coupling), total_cost: Some(cost) }
    }

    /// Permutation plan with no associated cost, e.g. one read from a key file.
    pub fn from_permutation(perm: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &j in &perm {
            if j >= perm.len() || std::mem::replace(&mut seen[j], true) {
                return Err(Error::InvalidArgument(format!("{perm:?} is not a permutation")));
            }
        }
        Ok(Self { n: perm.len(), coupling: Coupling::Permutation(perm), total_cost: None })
    }

    pub fn identity(n: usize) -> Self {
        Self { n, coupling: Coupling::Permutation((0..n).collect()), total_cost: None }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> PlanKind {
        match self.coupling {
            Coupling::Permutation(_) => PlanKind::ExactPermutation,
            Coupling::Dense(_) => PlanKind::RegularizedDense,
        }
    }

    pub fn coupling(&self) -> &Coupling<T> {
        &self.coupling
    }

    /// `Σ c_ij T_ij`; `None` when the plan was not produced by a solver.
    pub fn total_cost(&self) -> Option<T> {
        self.total_cost
    }

    pub fn as_permutation(&self) -> Option<&[usize]> {
        match &self.coupling {
            Coupling::Permutation(p) => Some(p),
            Coupling::Dense(_) => None,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.as_permutation().is_some_and(|p| p.iter().enumerate().all(|(i, &j)| i == j))
    }

    /// Mass on `(i, j)`.
    pub fn mass(&self, i: usize, j: usize) -> T {
        match &self.coupling {
            Coupling::Permutation(p) if p[i] == j => T::one() / T::of_usize(self.n),
            Coupling::Permutation(_) => T::zero(),
            Coupling::Dense(m) => m[i * self.n + j],
        }
    }

    pub fn to_dense(&self) -> Vec<T> {
        match &self.coupling {
            Coupling::Dense(m) => m.clone(),
            Coupling::Permutation(p) => {
                let mut m = vec![T::zero(); self.n * self.n];
                let w = T::one() / T::of_usize(self.n);
                for (i, &j) in p.iter().enumerate() {
                    m[i * self.n + j] = w;
                }
                m
            }
        }
    }

    pub fn row_sums(&self) -> Vec<T> {
        let n = self.n;
        match &self.coupling {
            Coupling::Permutation(_) => vec![T::one() / T::of_usize(n); n],
            Coupling::Dense(m) => m.chunks(n).map(|r| r.iter().copied().sum()).collect(),
        }
    }

    pub fn col_sums(&self) -> Vec<T> {
        let n = self.n;
        match &self.coupling {
            Coupling::Permutation(p) => {
                let mut s = vec![T::zero(); n];
                let w = T::one() / T::of_usize(n);
                for &j in p {
                    s[j] += w;
                }
                s
            }
            Coupling::Dense(m) => {
                let mut s = vec![T::zero(); n];
                for row in m.chunks(n) {
                    for (acc, &v) in s.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                s
            }
        }
    }

    /// Largest deviation of any row or column sum from `1/N`.
    pub fn marginal_residual(&self) -> T {
        let target = T::one() / T::of_usize(self.n);
        self.row_sums()
            .into_iter()
            .chain(self.col_sums())
            .map(|s| (s - target).abs())
            .fold(T::zero(), T::max)
    }
}

/// `Σ_i c(i, perm[i]) / N`, summed in index order.
pub fn permutation_cost<T: Scalar>(c: &CostMatrix<T>, perm: &[usize]) -> T {
    let mut sum = T::zero();
    for (i, &j) in perm.iter().enumerate() {
        sum += c.get(i, j);
    }
    sum / T::of_usize(perm.len())
}

/// Image of every source point under the plan: the matched target for
/// permutation plans, the barycentric projection `N·Σ_j T_ij Y_j` otherwise.
pub fn apply_plan<T: Scalar>(
    plan: &TransportPlan<T>,
    x: &DiscreteDistribution<T>,
    y: &DiscreteDistribution<T>,
) -> Result<Vec<T>> {
    if x.len() != plan.n() || y.len() != plan.n() {
        return Err(Error::ShapeMismatch(format!(
            "plan of size {} applied to {} source and {} target points",
            plan.n(),
            x.len(),
            y.len()
        )));
    }
    Ok(apply_to_targets(plan, y.points()))
}

pub(crate) fn apply_to_targets<T: Scalar>(plan: &TransportPlan<T>, y: &[T]) -> Vec<T> {
    let n = plan.n();
    match plan.coupling() {
        Coupling::Permutation(p) => p.iter().map(|&j| y[j]).collect(),
        Coupling::Dense(m) => {
            let scale = T::of_usize(n);
            m.chunks(n)
                .map(|row| scale * row.iter().zip(y).map(|(&t, &yj)| t * yj).sum::<T>())
                .collect()
        }
    }
}

/// Transposed coupling of a permutation plan (the reverse map).
pub fn invert_permutation_plan<T: Scalar>(plan: &TransportPlan<T>) -> Result<TransportPlan<T>> {
    let perm = plan
        .as_permutation()
        .ok_or_else(|| Error::PlanKind("only exact permutation plans can be inverted".into()))?;
    let mut inv = vec![0; perm.len()];
    for (i, &j) in perm.iter().enumerate() {
        inv[j] = i;
    }
    Ok(TransportPlan { n: plan.n, coupling: Coupling::Permutation(inv), total_cost: plan.total_cost })
}

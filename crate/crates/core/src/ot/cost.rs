use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Points with a probability vector over them. Weights in this crate are
/// always uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution<T> {
    points: Vec<T>,
    weights: Vec<T>,
}

impl<T: Scalar> DiscreteDistribution<T> {
    pub fn uniform(points: Vec<T>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("distribution needs at least one point".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("distribution support must be finite".into()));
        }
        let w = T::one() / T::of_usize(points.len());
        let weights = vec![w; points.len()];
        Ok(Self { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }
}

/// Dense `N×N` cost matrix, optionally remembering the 1-D supports it was
/// built from (which enables the sorted-matching fast path).
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix<T> {
    n: usize,
    entries: Vec<T>,
    supports: Option<(Vec<T>, Vec<T>)>,
}

impl<T: Scalar> CostMatrix<T> {
    /// Arbitrary cost matrix in row-major order; exact solves use the
    /// assignment solver.
    pub fn from_entries(n: usize, entries: Vec<T>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::ShapeMismatch(format!(
                "{n}x{n} cost matrix needs {} entries, got {}",
                n * n,
                entries.len()
            )));
        }
        Ok(Self { n, entries, supports: None })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    pub fn supports(&self) -> Option<(&[T], &[T])> {
        self.supports.as_ref().map(|(x, y)| (x.as_slice(), y.as_slice()))
    }

    /// Same matrix with the supports forgotten.
    pub fn without_supports(&self) -> Self {
        Self { n: self.n, entries: self.entries.clone(), supports: None }
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.entries.iter().position(|v| !v.is_finite()) {
            Some(k) => Err(Error::NonFiniteCost { row: k / self.n, col: k % self.n }),
            None => Ok(()),
        }
    }

    /// Median entry (mean of the two middle values for even counts).
    pub fn median(&self) -> T {
        let mut v = self.entries.clone();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let m = v.len();
        if m == 0 {
            return T::zero();
        }
        if m % 2 == 1 {
            v[m / 2]
        } else {
            (v[m / 2 - 1] + v[m / 2]) / T::of(2.0)
        }
    }
}

/// `c(i, j) = (X_i − Y_j)²`.
pub fn cost_matrix<T: Scalar>(
    x: &DiscreteDistribution<T>,
    y: &DiscreteDistribution<T>,
) -> Result<CostMatrix<T>> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!("{} source vs {} target points", x.len(), y.len())));
    }
    let n = x.len();
    let mut entries = Vec::with_capacity(n * n);
    for &xi in x.points() {
        for &yj in y.points() {
            let d = xi - yj;
            entries.push(d * d);
        }
    }
    Ok(CostMatrix { n, entries, supports: Some((x.points().to_vec(), y.points().to_vec())) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(v: &[f64]) -> DiscreteDistribution<f64> {
        DiscreteDistribution::uniform(v.to_vec()).unwrap()
    }

    #[test]
    fn squared_differences() {
        let c = cost_matrix(&dist(&[0.0, 2.0]), &dist(&[1.0, 3.0])).unwrap();
        assert_eq!(c.entries(), &[1.0, 9.0, 1.0, 1.0]);
        let c = cost_matrix(&dist(&[0.0]), &dist(&[5.0])).unwrap();
        assert_eq!(c.entries(), &[25.0]);
    }

    #[test]
    fn equal_supports_have_zero_diagonal() {
        let p = [0.3, -1.0, 4.0];
        let c = cost_matrix(&dist(&p), &dist(&p)).unwrap();
        for i in 0..3 {
            assert_eq!(c.get(i, i), 0.0);
            for j in 0..3 {
                assert!(c.get(i, j) >= 0.0);
                assert_eq!(c.get(i, j), c.get(j, i));
            }
        }
    }

    #[test]
    fn size_mismatch() {
        assert!(matches!(
            cost_matrix(&dist(&[0.0]), &dist(&[1.0, 2.0])),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn uniform_weights_sum_to_one() {
        let d = dist(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        let s: f64 = d.weights().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn median_of_entries() {
        let c = CostMatrix::from_entries(2, vec![4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(c.median(), 2.5);
    }
}

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{CostMatrix, TransportPlan};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropicConfig<T> {
    /// Regularization strength, in cost units.
    pub epsilon: T,
    pub max_iter: usize,
    /// Exit once every row and column sum is within `tol` of `1/N`.
    pub tol: T,
}

impl<T: Scalar> EntropicConfig<T> {
    pub fn with_epsilon(epsilon: T) -> Self {
        Self { epsilon, max_iter: 100_000, tol: T::of(1e-9) }
    }
}

/// `log Σ exp(v)` without overflow; `-inf` for an all `-inf` input.
fn log_sum_exp<T: Scalar>(values: impl Iterator<Item = T> + Clone) -> T {
    let max = values.clone().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<T>().ln()
}

/// Entropic OT by alternating row/column scaling in the log domain.
///
/// Keeps dual potentials `f`, `g` so that `T_ij = exp((f_i + g_j − c_ij)/ε)`.
/// Each sweep makes the columns exact; the loop exits when the rows are also
/// within `tol`. Small `ε` is reached by ε-scaling: the potentials are warm
/// started from a geometric ladder of larger regularizations, all sweeps
/// counting against `max_iter`. The returned cost is `Σ c_ij T_ij`.
pub fn solve_entropic<T: Scalar>(c: &CostMatrix<T>, cfg: &EntropicConfig<T>) -> Result<TransportPlan<T>> {
    let eps = cfg.epsilon;
    if !(eps > T::zero()) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("epsilon must be positive and finite, got {eps}")));
    }
    c.check_finite()?;
    let n = c.n();
    if n == 0 {
        return Err(Error::InvalidArgument("empty cost matrix".into()));
    }
    let max_cost = c.entries().iter().copied().fold(T::zero(), T::max);
    if !(max_cost / eps).is_finite() {
        return Err(Error::KernelUnderflow { epsilon: eps.as_f64() });
    }

    let mut state = Sweeper::new(c);
    let mut budget = cfg.max_iter;
    let half = T::of(0.5);
    let mut stage = max_cost;
    while stage * half > eps {
        stage = stage * half;
        // coarse stages only need to land near their fixed point
        let used = state.run(stage, budget.min(50 + n), cfg.tol.max(T::of(1e-3) / T::of_usize(n)))?.0;
        budget -= used;
    }
    // Plain sweeps converge linearly and crawl when matchings are nearly tied;
    // alternate them with Newton steps on the dual, which finish quadratically.
    let mut residual = T::infinity();
    while budget > 0 {
        let (used, r) = state.run(eps, budget.min(SWEEP_CHUNK), cfg.tol)?;
        budget -= used;
        residual = r;
        if residual < cfg.tol {
            return Ok(build_plan(c, &state.f, &state.g, eps));
        }
        if budget == 0 {
            break;
        }
        let (used, r) = state.newton(eps, budget.min(NEWTON_CHUNK), cfg.tol);
        budget -= used;
        residual = r;
        if residual < cfg.tol {
            return Ok(build_plan(c, &state.f, &state.g, eps));
        }
    }
    Err(Error::NonConvergence { iterations: cfg.max_iter, residual: residual.as_f64() })
}

const SWEEP_CHUNK: usize = 500;
const NEWTON_CHUNK: usize = 20;

struct Sweeper<'a, T> {
    c: &'a CostMatrix<T>,
    transposed: Vec<T>,
    f: Vec<T>,
    g: Vec<T>,
    lse: Vec<T>,
}

impl<'a, T: Scalar> Sweeper<'a, T> {
    fn new(c: &'a CostMatrix<T>) -> Self {
        let n = c.n();
        let mut transposed = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                transposed[j * n + i] = c.get(i, j);
            }
        }
        Self { c, transposed, f: vec![T::zero(); n], g: vec![T::zero(); n], lse: vec![T::zero(); n] }
    }

    /// Up to `max_sweeps` sweeps at `eps`; returns (sweeps used, row residual).
    fn run(&mut self, eps: T, max_sweeps: usize, tol: T) -> Result<(usize, T)> {
        let n = self.c.n();
        let target = T::one() / T::of_usize(n);
        let log_marginal = target.ln();
        let mut residual = T::infinity();
        for sweep in 0..=max_sweeps {
            // row log-sums under the current g; they double as the row marginals
            for (i, out) in self.lse.iter_mut().enumerate() {
                let row = self.c.row(i);
                *out = log_sum_exp(self.g.iter().zip(row).map(|(&gj, &cij)| (gj - cij) / eps));
            }
            if sweep > 0 {
                residual = self
                    .f
                    .iter()
                    .zip(&self.lse)
                    .map(|(&fi, &l)| ((fi / eps + l).exp() - target).abs())
                    .fold(T::zero(), T::max);
                if !residual.is_finite() {
                    return Err(Error::KernelUnderflow { epsilon: eps.as_f64() });
                }
                if residual < tol {
                    return Ok((sweep, residual));
                }
            }
            if sweep == max_sweeps {
                return Ok((sweep, residual));
            }
            for (fi, &l) in self.f.iter_mut().zip(&self.lse) {
                *fi = eps * (log_marginal - l);
            }
            for (j, gj) in self.g.iter_mut().enumerate() {
                let col = &self.transposed[j * n..(j + 1) * n];
                let l = log_sum_exp(self.f.iter().zip(col).map(|(&fi, &cij)| (fi - cij) / eps));
                *gj = eps * (log_marginal - l);
            }
            if self.f.iter().chain(&self.g).any(|v| !v.is_finite()) {
                return Err(Error::KernelUnderflow { epsilon: eps.as_f64() });
            }
        }
        unreachable!("loop returns on its last sweep")
    }

    /// Coupling under the current potentials with its row and column sums.
    fn coupling(&self, f: &[T], g: &[T], eps: T) -> (Vec<T>, Vec<T>, Vec<T>) {
        let n = self.c.n();
        let mut p = Vec::with_capacity(n * n);
        let mut rows = vec![T::zero(); n];
        let mut cols = vec![T::zero(); n];
        for (i, &fi) in f.iter().enumerate() {
            for (j, (&gj, &cij)) in g.iter().zip(self.c.row(i)).enumerate() {
                let t = ((fi + gj - cij) / eps).exp();
                rows[i] += t;
                cols[j] += t;
                p.push(t);
            }
        }
        (p, rows, cols)
    }

    /// Up to `max_steps` damped Newton steps on the dual. The Hessian
    /// `[[diag r, P], [Pᵀ, diag c]]/ε` is applied matrix-free inside conjugate
    /// gradients. Returns (steps used, max row/column residual).
    fn newton(&mut self, eps: T, max_steps: usize, tol: T) -> (usize, T) {
        let n = self.c.n();
        let target = T::one() / T::of_usize(n);
        let residual_of = |rows: &[T], cols: &[T]| {
            rows.iter().chain(cols).map(|&s| (s - target).abs()).fold(T::zero(), T::max)
        };
        let (mut p, mut rows, mut cols) = self.coupling(&self.f, &self.g, eps);
        let mut residual = residual_of(&rows, &cols);
        for step in 0..max_steps {
            if residual < tol || !residual.is_finite() {
                return (step, residual);
            }
            let rhs: Vec<T> = rows.iter().chain(&cols).map(|&s| target - s).collect();
            let delta = conjugate_gradient(&p, &rows, &cols, &rhs, 4 * n);
            let mut t = T::one();
            let mut accepted = false;
            for _ in 0..30 {
                let f: Vec<T> = self.f.iter().zip(&delta[..n]).map(|(&v, &d)| v + t * eps * d).collect();
                let g: Vec<T> = self.g.iter().zip(&delta[n..]).map(|(&v, &d)| v + t * eps * d).collect();
                let (p2, r2, c2) = self.coupling(&f, &g, eps);
                let res2 = residual_of(&r2, &c2);
                if res2.is_finite() && res2 < residual {
                    (self.f, self.g, p, rows, cols, residual) = (f, g, p2, r2, c2, res2);
                    accepted = true;
                    break;
                }
                t = t * T::of(0.5);
            }
            if !accepted {
                return (step + 1, residual);
            }
        }
        (max_steps, residual)
    }
}

/// Solves `[[diag r, P], [Pᵀ, diag c]] x = b` by conjugate gradients. The
/// system is singular along `(1, −1)`, but `b` is orthogonal to that direction.
fn conjugate_gradient<T: Scalar>(p: &[T], rows: &[T], cols: &[T], b: &[T], max_iter: usize) -> Vec<T> {
    let n = rows.len();
    let apply = |v: &[T], out: &mut [T]| {
        let (vf, vg) = v.split_at(n);
        let (of, og) = out.split_at_mut(n);
        for i in 0..n {
            of[i] = rows[i] * vf[i];
        }
        for j in 0..n {
            og[j] = cols[j] * vg[j];
        }
        for (i, prow) in p.chunks(n).enumerate() {
            let mut acc = T::zero();
            for (j, &pij) in prow.iter().enumerate() {
                acc += pij * vg[j];
                og[j] += pij * vf[i];
            }
            of[i] += acc;
        }
    };
    let dot = |a: &[T], b: &[T]| a.iter().zip(b).map(|(&x, &y)| x * y).sum::<T>();
    let mut x = vec![T::zero(); 2 * n];
    let mut r = b.to_vec();
    let mut d = r.clone();
    let mut hd = vec![T::zero(); 2 * n];
    let mut rr = dot(&r, &r);
    let stop = rr * T::of(1e-24);
    for _ in 0..max_iter {
        if rr <= stop || rr == T::zero() {
            break;
        }
        apply(&d, &mut hd);
        let dhd = dot(&d, &hd);
        if !(dhd > T::zero()) {
            break;
        }
        let alpha = rr / dhd;
        for k in 0..2 * n {
            x[k] += alpha * d[k];
            r[k] -= alpha * hd[k];
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        rr = rr_next;
        for k in 0..2 * n {
            d[k] = r[k] + beta * d[k];
        }
    }
    x
}

fn build_plan<T: Scalar>(c: &CostMatrix<T>, f: &[T], g: &[T], eps: T) -> TransportPlan<T> {
    let n = c.n();
    let mut coupling = Vec::with_capacity(n * n);
    let mut cost = T::zero();
    for (i, &fi) in f.iter().enumerate() {
        for (j, &gj) in g.iter().enumerate() {
            let cij = c.get(i, j);
            let t = ((fi + gj - cij) / eps).exp();
            cost += cij * t;
            coupling.push(t);
        }
    }
    TransportPlan::dense(n, coupling, cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ot::{brute_force_plan, cost_matrix, solve_exact, DiscreteDistribution};
    use crate::rng::SeededRng;

    fn instance(seed: u64, n: usize) -> CostMatrix<f64> {
        let mut rng = SeededRng::new(seed);
        let x = DiscreteDistribution::uniform(rng.gaussian_vec(n)).unwrap();
        let y = DiscreteDistribution::uniform(rng.gaussian_vec(n)).unwrap();
        cost_matrix(&x, &y).unwrap()
    }

    #[test]
    fn marginals_within_tolerance() {
        let c = instance(1, 20);
        let cfg = EntropicConfig { epsilon: 0.5, max_iter: 10_000, tol: 1e-10 };
        let plan = solve_entropic(&c, &cfg).unwrap();
        assert!(plan.marginal_residual() < 1e-10);
    }

    #[test]
    fn large_epsilon_is_strictly_suboptimal() {
        let x = DiscreteDistribution::uniform(vec![0.0, 2.0]).unwrap();
        let y = DiscreteDistribution::uniform(vec![1.0, 3.0]).unwrap();
        let c = cost_matrix(&x, &y).unwrap();
        let plan = solve_entropic(&c, &EntropicConfig::with_epsilon(10.0)).unwrap();
        assert!(plan.total_cost().unwrap() > 1.0);
    }

    #[test]
    fn epsilon_sweep_approaches_brute_force() {
        let c = instance(2024, 6);
        let exact = brute_force_plan(&c).unwrap().total_cost().unwrap();
        let mut prev = f64::INFINITY;
        for eps in [1.0, 0.1, 0.01] {
            let cost = solve_entropic(&c, &EntropicConfig::with_epsilon(eps))
                .unwrap()
                .total_cost()
                .unwrap();
            assert!(cost >= exact - 1e-12);
            assert!(cost <= prev + 1e-9, "eps {eps}: {cost} > {prev}");
            prev = cost;
        }
        assert!((prev - exact) / exact <= 0.01, "gap {}", (prev - exact) / exact);
    }

    #[test]
    fn never_below_exact() {
        for seed in 0..20 {
            let c = instance(seed, 10);
            let exact = solve_exact(&c).unwrap().total_cost().unwrap();
            let ent = solve_entropic(&c, &EntropicConfig::with_epsilon(0.05)).unwrap();
            assert!(ent.total_cost().unwrap() >= exact - 1e-9);
        }
    }

    #[test]
    fn reports_non_convergence_with_residual() {
        let c = instance(3, 30);
        let cfg = EntropicConfig { epsilon: 1e-3, max_iter: 2, tol: 1e-12 };
        match solve_entropic(&c, &cfg) {
            Err(Error::NonConvergence { iterations: 2, residual }) => assert!(residual > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tiny_epsilon_underflows() {
        let c = instance(4, 5);
        let cfg = EntropicConfig::with_epsilon(1e-320);
        assert!(matches!(solve_entropic(&c, &cfg), Err(Error::KernelUnderflow { .. })));
        assert!(solve_entropic(&c, &EntropicConfig::with_epsilon(0.0)).is_err());
    }
}

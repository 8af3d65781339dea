//! Central finite-difference check of the manual backward pass.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::model::{LossOptions, StegoModel};

/// Gradients below this magnitude are compared absolutely rather than
/// relatively.
pub const RELATIVE_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct GradCheckConfig<T> {
    pub step: T,
    pub samples: usize,
    pub seed: u64,
    pub opts: LossOptions<T>,
    /// Parameter range to sample from; the whole model when `None`.
    pub subset: Option<Range<usize>>,
    /// Self-test of the checker: this parameter's analytic gradient is
    /// falsified and it is checked first.
    pub corrupt: Option<usize>,
}

impl<T: Scalar> Default for GradCheckConfig<T> {
    fn default() -> Self {
        Self { step: T::of(1e-5), samples: 32, seed: 0, opts: LossOptions::default(), subset: None, corrupt: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(index, analytic, numeric)` of every checked parameter.
    pub entries: Vec<(usize, f64, f64)>,
    /// Draws replaced because a probe crossed a kink.
    pub skipped: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares `analytic[i]` with `(f(p + h eᵢ) − f(p − h eᵢ)) / 2h` for every
/// `i` in `indices`.
pub fn finite_difference_check<T: Scalar>(
    mut f: impl FnMut(&[T]) -> Result<T>,
    params: &[T],
    analytic: &[T],
    indices: &[usize],
    step: T,
) -> Result<GradCheckReport> {
    let mut p = params.to_vec();
    let mut entries = Vec::with_capacity(indices.len());
    let mut worst: f64 = 0.0;
    for &i in indices {
        let orig = p[i];
        p[i] = orig + step;
        let up = f(&p)?;
        p[i] = orig - step;
        let down = f(&p)?;
        p[i] = orig;
        let numeric = ((up - down) / (step + step)).as_f64();
        let a = analytic[i].as_f64();
        worst = worst.max(relative_error(a, numeric));
        entries.push((i, a, numeric));
    }
    Ok(GradCheckReport { max_rel_error: worst, entries, skipped: 0 })
}

/// `count` distinct indices drawn uniformly from `range`.
pub fn sample_indices(range: Range<usize>, count: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut pool: Vec<usize> = range.collect();
    let count = count.min(pool.len());
    for k in 0..count {
        let j = k + rng.below(pool.len() - k);
        pool.swap(k, j);
    }
    pool.truncate(count);
    pool
}

/// Finite-difference check of the model's weighted loss on one sample. The
/// bridge matching and noise are drawn once and then held fixed.
///
/// Parameters are drawn at random from the subset. A draw whose `±step`
/// probes move any activation across a rectifier or clamp kink is replaced
/// by the next one, since a central difference across a kink does not
/// estimate the derivative; such draws are counted in `skipped`.
pub fn grad_check<T: Scalar>(
    model: &StegoModel<T>,
    cover: &Tensor<T>,
    secret: &Tensor<T>,
    cfg: &GradCheckConfig<T>,
) -> Result<GradCheckReport> {
    let n = model.param_count();
    let subset = cfg.subset.clone().unwrap_or(0..n);
    if subset.end > n || subset.is_empty() {
        return Err(Error::InvalidArgument(format!("parameter range {subset:?} outside 0..{n}")));
    }
    let mut rng = SeededRng::new(cfg.seed);
    let bridge_rng = rng.derive(1);
    let mut grad = vec![T::zero(); n];
    let (_, bridge) = model.loss_and_grad(cover, secret, &bridge_rng, None, &cfg.opts, Some(&mut grad))?;
    let base_sig = model.kink_signature(cover, secret, &bridge)?;
    let mut order = sample_indices(subset.clone(), subset.len(), &mut rng);
    if let Some(i) = cfg.corrupt.filter(|i| subset.contains(i)) {
        grad[i] = grad[i] * T::of(2.0) + T::of(1e-3);
        order.retain(|&j| j != i);
        order.insert(0, i);
    }
    let mut probe = model.clone();
    let mut entries = Vec::with_capacity(cfg.samples);
    let mut skipped = 0;
    let mut worst: f64 = 0.0;
    for i in order {
        if entries.len() == cfg.samples {
            break;
        }
        let orig = model.params()[i];
        let mut eval = |v: T| -> Result<(T, bool)> {
            probe.params_mut()[i] = v;
            let l = probe.loss_and_grad(cover, secret, &bridge_rng, Some(&bridge), &cfg.opts, None)?.0.total;
            let same = probe.kink_signature(cover, secret, &bridge)? == base_sig;
            Ok((l, same))
        };
        let (up, same_up) = eval(orig + cfg.step)?;
        let (down, same_down) = eval(orig - cfg.step)?;
        probe.params_mut()[i] = orig;
        if !(same_up && same_down) {
            skipped += 1;
            continue;
        }
        let numeric = ((up - down) / (cfg.step + cfg.step)).as_f64();
        let a = grad[i].as_f64();
        worst = worst.max(relative_error(a, numeric));
        entries.push((i, a, numeric));
    }
    Ok(GradCheckReport { max_rel_error: worst, entries, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let params = vec![0.3, -1.2, 2.0];
        let f = |p: &[f64]| Ok(p.iter().map(|v| v * v).sum::<f64>());
        let analytic: Vec<f64> = params.iter().map(|v| 2.0 * v).collect();
        let r = finite_difference_check(f, &params, &analytic, &[0, 1, 2], 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-9);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let params = vec![0.3, -1.2, 2.0];
        let f = |p: &[f64]| Ok(p.iter().map(|v| v * v).sum::<f64>());
        let mut analytic: Vec<f64> = params.iter().map(|v| 2.0 * v).collect();
        analytic[1] *= 1.1;
        let r = finite_difference_check(f, &params, &analytic, &[0, 1, 2], 1e-5).unwrap();
        assert!(r.max_rel_error > 1e-2);
    }

    #[test]
    fn indices_are_distinct() {
        let mut rng = SeededRng::new(1);
        let mut v = sample_indices(10..50, 32, &mut rng);
        assert!(v.iter().all(|i| (10..50).contains(i)));
        v.sort();
        v.dedup();
        assert_eq!(v.len(), 32);
        assert_eq!(sample_indices(0..5, 32, &mut rng).len(), 5);
    }
}

//! Stego perturbations and the key and robustness probes.

use crate::error::{Error, Result};
use crate::metrics::psnr_y;
use crate::ot::TransportPlan;
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::model::{BridgeSource, StegoModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    /// Quarter turn counter-clockwise.
    Rotate90,
    /// Additive Gaussian noise, clamped back to `[0,1]`.
    Gaussian { sigma: f64, seed: u64 },
}

pub fn rotate90<T: Scalar>(t: &Tensor<T>) -> Result<Tensor<T>> {
    if t.height() != t.width() {
        return Err(Error::ShapeMismatch(format!("cannot rotate a {}x{} image in place", t.height(), t.width())));
    }
    let n = t.width();
    Ok(Tensor::from_fn(t.channels(), n, n, |c, y, x| t.get(c, x, n - 1 - y)))
}

pub fn perturb_stego<T: Scalar>(stego: &Tensor<T>, kind: Perturbation) -> Result<Tensor<T>> {
    match kind {
        Perturbation::Rotate90 => rotate90(stego),
        Perturbation::Gaussian { sigma, seed } => {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::InvalidArgument(format!("noise level {sigma} must be finite and ≥ 0")));
            }
            if sigma == 0.0 {
                return Ok(stego.clone());
            }
            let mut rng = SeededRng::new(seed);
            Ok(stego.map(|v| T::of((v.as_f64() + sigma * rng.next_gaussian()).clamp(0.0, 1.0))))
        }
    }
}

/// Secret/recovery PSNR with the true key and with a wrong one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyProbe {
    pub psnr_correct: f64,
    pub psnr_wrong: f64,
}

/// Per-channel random permutations, each different from the matching plan
/// of `key` (for `N ≥ 2`).
pub fn wrong_key<T: Scalar>(key: &[TransportPlan<T>], rng: &mut SeededRng) -> Result<Vec<TransportPlan<T>>> {
    key.iter()
        .map(|plan| {
            let n = plan.n();
            loop {
                let mut perm: Vec<usize> = (0..n).collect();
                for k in (1..n).rev() {
                    perm.swap(k, rng.below(k + 1));
                }
                if n < 2 || Some(perm.as_slice()) != plan.as_permutation() {
                    return TransportPlan::from_permutation(perm);
                }
            }
        })
        .collect()
}

pub fn key_probe<T: Scalar>(
    model: &StegoModel<T>,
    cover: &Tensor<T>,
    secret: &Tensor<T>,
    bridge_rng: &SeededRng,
    wrong_rng: &mut SeededRng,
) -> Result<KeyProbe> {
    let out = model.hide(cover, secret, bridge_rng, BridgeSource::Exact)?;
    let right = model.reveal(&out.stego, Some(&out.bridge.plans))?;
    let wrong = wrong_key(&out.bridge.plans, wrong_rng)?;
    let bad = model.reveal(&out.stego, Some(&wrong))?;
    Ok(KeyProbe { psnr_correct: psnr_y(secret, &right)?, psnr_wrong: psnr_y(secret, &bad)? })
}

/// Secret/recovery PSNR before and after perturbing the stego image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustnessProbe {
    pub psnr_clean: f64,
    pub psnr_perturbed: f64,
}

impl RobustnessProbe {
    pub fn degradation(&self) -> f64 {
        self.psnr_clean - self.psnr_perturbed
    }
}

pub fn robustness_probe<T: Scalar>(
    model: &StegoModel<T>,
    cover: &Tensor<T>,
    secret: &Tensor<T>,
    bridge_rng: &SeededRng,
    kind: Perturbation,
) -> Result<RobustnessProbe> {
    let out = model.hide(cover, secret, bridge_rng, BridgeSource::Exact)?;
    let key = Some(out.bridge.plans.as_slice());
    let clean = model.reveal(&out.stego, key)?;
    let moved = model.reveal(&perturb_stego(&out.stego, kind)?, key)?;
    Ok(RobustnessProbe { psnr_clean: psnr_y(secret, &clean)?, psnr_perturbed: psnr_y(secret, &moved)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::gaussian_noise;

    #[test]
    fn four_quarter_turns_are_identity() {
        let mut rng = SeededRng::new(1);
        let t: Tensor<f64> = gaussian_noise(&mut rng, 3, 5, 5);
        let mut r = t.clone();
        for _ in 0..4 {
            r = perturb_stego(&r, Perturbation::Rotate90).unwrap();
        }
        assert_eq!(r, t);
        let once = rotate90(&t).unwrap();
        let (mut a, mut b) = (t.data().to_vec(), once.data().to_vec());
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
        // top-right corner moves to top-left
        assert_eq!(once.get(0, 0, 0), t.get(0, 0, 4));
        assert!(rotate90(&Tensor::<f64>::zeros(1, 2, 3)).is_err());
    }

    #[test]
    fn zero_noise_is_identity() {
        let t = Tensor::<f64>::filled(3, 4, 4, 0.3);
        assert_eq!(perturb_stego(&t, Perturbation::Gaussian { sigma: 0.0, seed: 1 }).unwrap(), t);
        let n = perturb_stego(&t, Perturbation::Gaussian { sigma: 0.1, seed: 1 }).unwrap();
        assert_ne!(n, t);
        assert_eq!(n, perturb_stego(&t, Perturbation::Gaussian { sigma: 0.1, seed: 1 }).unwrap());
    }

    #[test]
    fn wrong_keys_differ_everywhere() {
        let mut rng = SeededRng::new(2);
        let key: Vec<TransportPlan<f64>> = (0..10).map(|_| TransportPlan::identity(4)).collect();
        let bad = wrong_key(&key, &mut rng).unwrap();
        assert!(bad.iter().all(|p| !p.is_identity()));
    }
}

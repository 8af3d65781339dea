//! Smooth random RGB images for toy training sets.

use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One image: a colour gradient, a soft disc and a sinusoidal texture,
/// blended and kept inside `[0, 1]`.
pub fn toy_image<T: Scalar>(rng: &mut SeededRng, size: usize) -> Tensor<T> {
    let base: [f64; 3] = std::array::from_fn(|_| 0.2 + 0.6 * rng.next_uniform());
    let grad: [(f64, f64); 3] =
        std::array::from_fn(|_| (rng.next_uniform() - 0.5, rng.next_uniform() - 0.5));
    let disc_color: [f64; 3] = std::array::from_fn(|_| rng.next_uniform());
    let (cx, cy) = (rng.next_uniform(), rng.next_uniform());
    let radius = 0.15 + 0.3 * rng.next_uniform();
    let freq = 1.0 + 4.0 * rng.next_uniform();
    let angle = std::f64::consts::PI * rng.next_uniform();
    let amp = 0.05 + 0.1 * rng.next_uniform();
    let s = size as f64;
    Tensor::from_fn(3, size, size, |c, y, x| {
        let (u, v) = ((x as f64 + 0.5) / s, (y as f64 + 0.5) / s);
        let mut val = base[c] + grad[c].0 * (u - 0.5) + grad[c].1 * (v - 0.5);
        let d = ((u - cx).powi(2) + (v - cy).powi(2)).sqrt();
        let inside = 1.0 / (1.0 + libm::exp((d - radius) * 40.0));
        val = val * (1.0 - inside) + disc_color[c] * inside;
        let phase = 2.0 * std::f64::consts::PI * freq * (u * libm::cos(angle) + v * libm::sin(angle));
        val += amp * libm::sin(phase + c as f64);
        T::of(val.clamp(0.0, 1.0))
    })
}

pub fn toy_dataset<T: Scalar>(seed: u64, count: usize, size: usize) -> Vec<Tensor<T>> {
    let mut rng = SeededRng::new(seed);
    (0..count).map(|_| toy_image(&mut rng, size)).collect()
}

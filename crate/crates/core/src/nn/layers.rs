//! Forward and backward passes of the few layer types the U-Net needs.
//!
//! Convolutions are cross-correlations with zero padding `k/2`. Weights are
//! laid out `[out][in][ky][kx]`, followed by one bias per output channel.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv {
    pub fn weight_count(&self) -> usize {
        self.cout * self.cin * self.kernel * self.kernel
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.cout
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        (h.div_ceil(self.stride), w.div_ceil(self.stride))
    }

    pub fn forward<T: Scalar>(&self, params: &[T], x: &Tensor<T>) -> Tensor<T> {
        debug_assert_eq!(x.channels(), self.cin);
        let (h, w) = (x.height(), x.width());
        let (oh, ow) = self.out_size(h, w);
        let k = self.kernel;
        let pad = k / 2;
        let (weights, bias) = params[..self.param_count()].split_at(self.weight_count());
        let mut out = Tensor::zeros(self.cout, oh, ow);
        let xd = x.data();
        let od = out.data_mut();
        for o in 0..self.cout {
            let oplane = &mut od[o * oh * ow..(o + 1) * oh * ow];
            oplane.iter_mut().for_each(|v| *v = bias[o]);
            for i in 0..self.cin {
                let iplane = &xd[i * h * w..(i + 1) * h * w];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = weights[((o * self.cin + i) * k + ky) * k + kx];
                        for oy in 0..oh {
                            let Some(iy) = (oy * self.stride + ky).checked_sub(pad).filter(|&v| v < h) else {
                                continue;
                            };
                            let irow = &iplane[iy * w..(iy + 1) * w];
                            let orow = &mut oplane[oy * ow..(oy + 1) * ow];
                            for (ox, ov) in orow.iter_mut().enumerate() {
                                if let Some(ix) = (ox * self.stride + kx).checked_sub(pad).filter(|&v| v < w) {
                                    *ov += wv * irow[ix];
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients into `grad_params` and returns the
    /// gradient w.r.t. the input.
    pub fn backward<T: Scalar>(
        &self,
        params: &[T],
        x: &Tensor<T>,
        grad_out: &Tensor<T>,
        grad_params: &mut [T],
    ) -> Tensor<T> {
        let (h, w) = (x.height(), x.width());
        let (oh, ow) = (grad_out.height(), grad_out.width());
        let k = self.kernel;
        let pad = k / 2;
        let weights = &params[..self.weight_count()];
        let (gw, gb) = grad_params[..self.param_count()].split_at_mut(self.weight_count());
        let mut gx = Tensor::zeros(self.cin, h, w);
        let xd = x.data();
        let gd = grad_out.data();
        let gxd = gx.data_mut();
        for o in 0..self.cout {
            let gplane = &gd[o * oh * ow..(o + 1) * oh * ow];
            gb[o] += gplane.iter().copied().sum::<T>();
            for i in 0..self.cin {
                let iplane = &xd[i * h * w..(i + 1) * h * w];
                let giplane = &mut gxd[i * h * w..(i + 1) * h * w];
                for ky in 0..k {
                    for kx in 0..k {
                        let widx = ((o * self.cin + i) * k + ky) * k + kx;
                        let wv = weights[widx];
                        let mut acc = T::zero();
                        for oy in 0..oh {
                            let Some(iy) = (oy * self.stride + ky).checked_sub(pad).filter(|&v| v < h) else {
                                continue;
                            };
                            let grow = &gplane[oy * ow..(oy + 1) * ow];
                            for (ox, &g) in grow.iter().enumerate() {
                                if let Some(ix) = (ox * self.stride + kx).checked_sub(pad).filter(|&v| v < w) {
                                    acc += g * iplane[iy * w + ix];
                                    giplane[iy * w + ix] += g * wv;
                                }
                            }
                        }
                        gw[widx] += acc;
                    }
                }
            }
        }
        gx
    }
}

pub fn leaky_relu<T: Scalar>(z: &Tensor<T>) -> Tensor<T> {
    let a = T::of(LEAKY_SLOPE);
    z.map(|v| if v > T::zero() { v } else { a * v })
}

/// Gradient through the leaky rectifier given its pre-activation `z`.
pub fn leaky_relu_backward<T: Scalar>(z: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
    let a = T::of(LEAKY_SLOPE);
    let data = z.data().iter().zip(grad.data()).map(|(&v, &g)| if v > T::zero() { g } else { a * g }).collect();
    Tensor::new(z.channels(), z.height(), z.width(), data).expect("same shape")
}

pub fn upsample2<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    Tensor::from_fn(x.channels(), 2 * x.height(), 2 * x.width(), |c, y, xx| x.get(c, y / 2, xx / 2))
}

pub fn upsample2_backward<T: Scalar>(grad: &Tensor<T>) -> Tensor<T> {
    let (c, h, w) = (grad.channels(), grad.height() / 2, grad.width() / 2);
    let mut out = Tensor::zeros(c, h, w);
    for ch in 0..c {
        for y in 0..2 * h {
            for x in 0..2 * w {
                let i = out.index(ch, y / 2, x / 2);
                out.data_mut()[i] += grad.get(ch, y, x);
            }
        }
    }
    out
}

/// Clamp to `[0,1]`; the gradient passes where the input was inside.
pub fn clamp01_backward<T: Scalar>(y: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
    let data = y
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&v, &g)| if v >= T::zero() && v <= T::one() { g } else { T::zero() })
        .collect();
    Tensor::new(y.channels(), y.height(), y.width(), data).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_noise, SeededRng};

    /// Direct definition of a padded strided correlation.
    fn conv_oracle(conv: &Conv, p: &[f64], x: &Tensor<f64>) -> Tensor<f64> {
        let (oh, ow) = conv.out_size(x.height(), x.width());
        let k = conv.kernel as isize;
        Tensor::from_fn(conv.cout, oh, ow, |o, oy, ox| {
            let mut s = p[conv.weight_count() + o];
            for i in 0..conv.cin {
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = (oy * conv.stride) as isize + ky - k / 2;
                        let ix = (ox * conv.stride) as isize + kx - k / 2;
                        if iy >= 0 && ix >= 0 && (iy as usize) < x.height() && (ix as usize) < x.width() {
                            let wi = ((o * conv.cin + i) * conv.kernel + ky as usize) * conv.kernel + kx as usize;
                            s += p[wi] * x.get(i, iy as usize, ix as usize);
                        }
                    }
                }
            }
            s
        })
    }

    #[test]
    fn conv_matches_definition() {
        let mut rng = SeededRng::new(1);
        for (stride, kernel) in [(1, 3), (2, 3), (1, 1)] {
            let conv = Conv { cin: 3, cout: 4, kernel, stride };
            let p: Vec<f64> = rng.gaussian_vec(conv.param_count());
            let x = gaussian_noise(&mut rng, 3, 8, 6);
            let got = conv.forward(&p, &x);
            let want = conv_oracle(&conv, &p, &x);
            assert_eq!(got.shape(), want.shape());
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_backward_is_the_adjoint() {
        // <conv(x) - bias, g> = <x, back_x(g)> and = <w, back_w(g)>
        let mut rng = SeededRng::new(2);
        let conv = Conv { cin: 2, cout: 3, kernel: 3, stride: 2 };
        let mut p: Vec<f64> = rng.gaussian_vec(conv.param_count());
        for b in &mut p[conv.weight_count()..] {
            *b = 0.0;
        }
        let x = gaussian_noise(&mut rng, 2, 6, 6);
        let g = gaussian_noise(&mut rng, 3, 3, 3);
        let y = conv.forward(&p, &x);
        let mut gp = vec![0.0; conv.param_count()];
        let gx = conv.backward(&p, &x, &g, &mut gp);
        let lhs: f64 = y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let rx: f64 = x.data().iter().zip(gx.data()).map(|(a, b)| a * b).sum();
        let rw: f64 = p.iter().zip(&gp).map(|(a, b)| a * b).sum();
        assert!((lhs - rx).abs() < 1e-10);
        assert!((lhs - rw).abs() < 1e-10);
        let gsum: f64 = g.plane(1).iter().sum();
        assert!((gp[conv.weight_count() + 1] - gsum).abs() < 1e-12);
    }

    #[test]
    fn upsample_adjoint() {
        let mut rng = SeededRng::new(3);
        let x = gaussian_noise::<f64>(&mut rng, 2, 3, 4);
        let g = gaussian_noise::<f64>(&mut rng, 2, 6, 8);
        let lhs: f64 = upsample2(&x).data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(upsample2_backward(&g).data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}

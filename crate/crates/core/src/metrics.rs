//! Image-quality metrics on `[0,1]` tensors.
//!
//! PSNR and SSIM are taken on the luma plane, MAE and RMSE over all channels.
//! Errors are reported in 8-bit units (0–255).

use std::fmt::Write as _;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const PIXEL_MAX: f64 = 255.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn luma_f64<T: Scalar>(t: &Tensor<T>) -> Result<Vec<f64>> {
    Ok(t.luma()?.data().iter().map(|v| v.as_f64()).collect())
}

/// `10·log₁₀(255² / MSE)` between the luma planes; `+∞` when they coincide.
pub fn psnr_y<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let (ya, yb) = (luma_f64(a)?, luma_f64(b)?);
    let mse = ya.iter().zip(&yb).map(|(p, q)| ((p - q) * PIXEL_MAX).powi(2)).sum::<f64>() / ya.len() as f64;
    Ok(psnr_from_mse(mse))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PIXEL_MAX * PIXEL_MAX / mse).log10()
    }
}

/// Normalised 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let mid = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size).map(|i| (-((i as f64 - mid).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Mean SSIM over every valid (fully inside) Gaussian window of the luma
/// planes, dynamic range 1.
pub fn ssim<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    ssim_with(a, b, SSIM_WINDOW, SSIM_K1, SSIM_K2)
}

pub fn ssim_with<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, window: usize, k1: f64, k2: f64) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let (h, w) = (a.height(), a.width());
    if window == 0 || h < window || w < window {
        return Err(Error::InvalidArgument(format!("{h}x{w} image is smaller than the {window}x{window} window")));
    }
    let (x, y) = (luma_f64(a)?, luma_f64(b)?);
    let taps = gaussian_taps(window, SSIM_SIGMA);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let blur = |f: &[f64]| valid_filter(f, h, w, &taps);
    let (mx, my, sxx, syy, sxy) = (blur(&x), blur(&y), blur(&xx), blur(&yy), blur(&xy));
    let c1 = k1 * k1;
    let c2 = k2 * k2;
    let total: f64 = (0..mx.len())
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / mx.len() as f64)
}

/// Separable correlation keeping only positions where the window fits.
fn valid_filter(f: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = taps.iter().enumerate().map(|(t, &g)| g * f[r * w + c + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = taps.iter().enumerate().map(|(t, &g)| g * rows[(r + t) * ow + c]).sum();
        }
    }
    out
}

/// Mean absolute difference over all channels, 8-bit units.
pub fn mae<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let s: f64 = a.data().iter().zip(b.data()).map(|(p, q)| ((p.as_f64() - q.as_f64()) * PIXEL_MAX).abs()).sum();
    Ok(s / a.len().max(1) as f64)
}

/// Root-mean-square difference over all channels, 8-bit units.
pub fn rmse<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let s: f64 = a.data().iter().zip(b.data()).map(|(p, q)| ((p.as_f64() - q.as_f64()) * PIXEL_MAX).powi(2)).sum();
    Ok((s / a.len().max(1) as f64).sqrt())
}

/// 256-bin histogram of `round(y·255)` over the luma plane (values clamped to `[0,1]`).
pub fn gray_histogram<T: Scalar>(t: &Tensor<T>) -> Result<[u64; 256]> {
    let mut hist = [0u64; 256];
    for v in luma_f64(t)? {
        let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        hist[(v * PIXEL_MAX + 0.5).floor() as usize] += 1;
    }
    Ok(hist)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub psnr_y: f64,
    pub ssim: f64,
    pub mae: f64,
    pub rmse: f64,
    /// Histograms of the reference and the compared image.
    pub histograms: [[u64; 256]; 2],
}

impl MetricsReport {
    pub fn compute<T: Scalar>(reference: &Tensor<T>, other: &Tensor<T>) -> Result<Self> {
        let report = Self {
            psnr_y: psnr_y(reference, other)?,
            ssim: ssim(reference, other)?,
            mae: mae(reference, other)?,
            rmse: rmse(reference, other)?,
            histograms: [gray_histogram(reference)?, gray_histogram(other)?],
        };
        debug_assert!(report.rmse + 1e-9 >= report.mae);
        Ok(report)
    }

    /// Flat JSON object; an infinite PSNR is written as the string `"inf"`.
    pub fn to_json_value(&self) -> Value {
        let mut m = Map::new();
        m.insert("psnr_y".into(), number_or_inf(self.psnr_y));
        m.insert("ssim".into(), json!(self.ssim));
        m.insert("mae".into(), json!(self.mae));
        m.insert("rmse".into(), json!(self.rmse));
        Value::Object(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("plain values")
    }

    /// `bin,reference,other` rows for the two histograms.
    pub fn histogram_csv(&self) -> String {
        let mut s = String::from("bin,reference,other\n");
        for k in 0..256 {
            let _ = writeln!(s, "{k},{},{}", self.histograms[0][k], self.histograms[1][k]);
        }
        s
    }
}

pub fn number_or_inf(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v > 0.0 {
        json!("inf")
    } else if v < 0.0 {
        json!("-inf")
    } else {
        json!("nan")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use crate::synthetic::toy_image;

    fn noisy(rng: &mut SeededRng, c: usize, h: usize, w: usize) -> Tensor<f64> {
        Tensor::from_fn(c, h, w, |_, _, _| rng.next_uniform())
    }

    /// Straight from the definition: every window position, full 2-D weights,
    /// weighted moments computed from scratch.
    fn ssim_oracle(x: &[f64], y: &[f64], h: usize, w: usize) -> f64 {
        let k = 11;
        let sigma: f64 = 1.5;
        let mut win = vec![vec![0.0; k]; k];
        let mut norm = 0.0;
        for (i, row) in win.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
                *v = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
                norm += *v;
            }
        }
        let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
        let mut acc = 0.0;
        let mut count = 0;
        for r in 0..=h - k {
            for c in 0..=w - k {
                let (mut mx, mut my) = (0.0, 0.0);
                for i in 0..k {
                    for j in 0..k {
                        let wgt = win[i][j] / norm;
                        mx += wgt * x[(r + i) * w + c + j];
                        my += wgt * y[(r + i) * w + c + j];
                    }
                }
                let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
                for i in 0..k {
                    for j in 0..k {
                        let wgt = win[i][j] / norm;
                        let dx = x[(r + i) * w + c + j] - mx;
                        let dy = y[(r + i) * w + c + j] - my;
                        vx += wgt * dx * dx;
                        vy += wgt * dy * dy;
                        cov += wgt * dx * dy;
                    }
                }
                acc += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
        acc / count as f64
    }

    #[test]
    fn psnr_constant_offsets() {
        let a = Tensor::<f64>::filled(3, 4, 4, 0.25);
        let b = a.map(|v| v + 1.0 / 255.0);
        assert!((psnr_y(&a, &b).unwrap() - 48.1308).abs() < 1e-4);
        let b = a.map(|v| v + 10.0 / 255.0);
        assert!((psnr_y(&a, &b).unwrap() - 28.1308).abs() < 1e-4);
        assert_eq!(psnr_y(&a, &a).unwrap(), f64::INFINITY);
        assert!(psnr_y(&a, &Tensor::zeros(3, 4, 5)).is_err());
    }

    #[test]
    fn psnr_falls_as_error_grows() {
        let a = Tensor::<f64>::filled(1, 4, 4, 0.1);
        let mut last = f64::INFINITY;
        for k in 1..20 {
            let p = psnr_y(&a, &a.map(|v| v + k as f64 / 255.0)).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn ssim_matches_direct_evaluation() {
        let mut rng = SeededRng::new(1);
        for _ in 0..3 {
            let a = noisy(&mut rng, 3, 20, 17);
            let b = noisy(&mut rng, 3, 20, 17);
            let (ya, yb) = (luma_f64(&a).unwrap(), luma_f64(&b).unwrap());
            let want = ssim_oracle(&ya, &yb, 20, 17);
            assert!((ssim(&a, &b).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn ssim_examples() {
        let mut rng = SeededRng::new(2);
        let a: Tensor<f64> = toy_image(&mut rng, 32);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let inv = a.map(|v| 1.0 - v);
        assert!(ssim(&a, &inv).unwrap() < 1.0);

        let flat = Tensor::<f64>::filled(1, 32, 32, 0.5);
        let jitter = flat.map(|v| v + 0.001 * rng.next_gaussian());
        let s = ssim(&flat, &jitter).unwrap();
        let (yf, yj) = (luma_f64(&flat).unwrap(), luma_f64(&jitter).unwrap());
        assert!((s - ssim_oracle(&yf, &yj, 32, 32)).abs() < 1e-12);
        assert!(s > 0.99);

        let b = noisy(&mut rng, 3, 32, 32);
        assert!((ssim(&a.luma().unwrap(), &b.luma().unwrap()).unwrap() - ssim(&b.luma().unwrap(), &a.luma().unwrap()).unwrap()).abs() < 1e-12);
        assert!(ssim(&Tensor::<f64>::zeros(1, 10, 10), &Tensor::zeros(1, 10, 10)).is_err());
    }

    #[test]
    fn mae_rmse_examples() {
        let a = Tensor::<f64>::filled(3, 2, 2, 0.5);
        assert_eq!((mae(&a, &a).unwrap(), rmse(&a, &a).unwrap()), (0.0, 0.0));
        let b = a.map(|v| v + 2.0 / 255.0);
        assert!((mae(&a, &b).unwrap() - 2.0).abs() < 1e-9);
        assert!((rmse(&a, &b).unwrap() - 2.0).abs() < 1e-9);
        let z = Tensor::<f64>::zeros(1, 1, 2);
        let d = Tensor::new(1, 1, 2, vec![0.0, 2.0 / 255.0]).unwrap();
        assert!((mae(&z, &d).unwrap() - 1.0).abs() < 1e-12);
        assert!((rmse(&z, &d).unwrap() - 2f64.sqrt()).abs() < 1e-12);

        let mut rng = SeededRng::new(3);
        for _ in 0..50 {
            let p = noisy(&mut rng, 3, 5, 5);
            let q = noisy(&mut rng, 3, 5, 5);
            assert!(rmse(&p, &q).unwrap() >= mae(&p, &q).unwrap());
        }
    }

    #[test]
    fn histogram_examples() {
        let black = Tensor::<f64>::zeros(3, 4, 6);
        assert_eq!(gray_histogram(&black).unwrap()[0], 24);
        let two = Tensor::from_fn(1, 4, 4, |_, y, _| if y < 2 { 0.0 } else { 1.0 });
        let h = gray_histogram(&two).unwrap();
        assert_eq!((h[0], h[255]), (8, 8));

        let mut rng = SeededRng::new(4);
        let img = noisy(&mut rng, 3, 7, 9);
        let h = gray_histogram(&img).unwrap();
        assert_eq!(h.iter().sum::<u64>(), 63);
        // reversing pixel order is a spatial permutation
        let mut rev = img.clone();
        for c in 0..3 {
            rev.plane_mut(c).reverse();
        }
        assert_eq!(gray_histogram(&rev).unwrap(), h);
    }

    #[test]
    fn report_json_and_csv() {
        let a = Tensor::<f64>::filled(3, 16, 16, 0.5);
        let r = MetricsReport::compute(&a, &a).unwrap();
        let v: Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["psnr_y"], "inf");
        assert_eq!(v["ssim"], 1.0);
        assert_eq!(r.histogram_csv().lines().count(), 257);
    }
}

//! Multiple-channel optimal transport of a latent matrix onto Gaussian noise.
//!
//! Every row of a `C×N` latent matrix is transported independently onto a row
//! of freshly drawn standard normal noise. With exact plans the transported
//! row is a rearrangement of the noise row: the values are Gaussian samples,
//! and the only thing carried over from the latent is its rank order. The
//! plans are the key the reveal side needs.
//!
//! A per-channel two-layer ReLU network ([`MlpTransport`]) fits the reverse
//! direction, noise value to latent value, and is scored by
//! [`transport_loss`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::ot::{self, key, EntropicConfig, TransportPlan};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::LatentMatrix;

/// Smoothing constant of the absolute deviation in the transport loss.
pub const TRANSPORT_SMOOTHING: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransportMode<T> {
    Exact,
    Entropic(EntropicConfig<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct McotResult<T> {
    /// Bridged latent: row `i` is the image of latent row `i` under `plans[i]`.
    pub transported: LatentMatrix<T>,
    /// The noise rows the latent was transported onto.
    pub noise: LatentMatrix<T>,
    pub plans: Vec<TransportPlan<T>>,
    pub key_path: Option<PathBuf>,
}

impl<T: Scalar> McotResult<T> {
    /// Identity bridge: no transport, identity plans.
    pub fn identity(latent: &LatentMatrix<T>) -> Self {
        Self {
            transported: latent.clone(),
            noise: latent.clone(),
            plans: (0..latent.channels()).map(|_| TransportPlan::identity(latent.points())).collect(),
            key_path: None,
        }
    }
}

/// `channels × points` standard normal matrix; row `i` comes from the
/// substream `seed ⊕ i`.
pub fn draw_noise<T: Scalar>(rng: &SeededRng, channels: usize, points: usize) -> LatentMatrix<T> {
    let data = (0..channels)
        .flat_map(|i| rng.substream(i as u64).gaussian_vec::<T>(points))
        .collect();
    LatentMatrix::new(channels, points, data).expect("shape by construction")
}

/// Draws the noise and transports every latent row onto its noise row.
pub fn mcot_forward<T: Scalar>(
    latent: &LatentMatrix<T>,
    rng: &SeededRng,
    mode: TransportMode<T>,
) -> Result<McotResult<T>> {
    let noise = draw_noise(rng, latent.channels(), latent.points());
    transport_onto(latent, noise, mode)
}

/// Per-channel transport onto a given noise matrix of the same shape.
pub fn transport_onto<T: Scalar>(
    latent: &LatentMatrix<T>,
    noise: LatentMatrix<T>,
    mode: TransportMode<T>,
) -> Result<McotResult<T>> {
    if (latent.channels(), latent.points()) != (noise.channels(), noise.points()) {
        return Err(Error::ShapeMismatch(format!(
            "latent {}x{} vs noise {}x{}",
            latent.channels(),
            latent.points(),
            noise.channels(),
            noise.points()
        )));
    }
    if !latent.is_finite() {
        return Err(Error::InvalidArgument("latent contains non-finite values".into()));
    }
    let mut plans = Vec::with_capacity(latent.channels());
    let mut data = Vec::with_capacity(latent.data().len());
    for (x, y) in latent.rows().zip(noise.rows()) {
        let plan = match mode {
            TransportMode::Exact => ot::solve_exact_points(x, y)?,
            TransportMode::Entropic(cfg) => {
                let xd = ot::DiscreteDistribution::uniform(x.to_vec())?;
                let yd = ot::DiscreteDistribution::uniform(y.to_vec())?;
                ot::solve_entropic(&ot::cost_matrix(&xd, &yd)?, &cfg)?
            }
        };
        data.extend(ot::plan::apply_to_targets(&plan, y));
        plans.push(plan);
    }
    let transported = LatentMatrix::new(latent.channels(), latent.points(), data)?;
    Ok(McotResult { transported, noise, plans, key_path: None })
}

/// Writes the plans as an MCOT key and remembers where.
pub fn export_key<T: Scalar>(result: &mut McotResult<T>, path: impl AsRef<Path>) -> Result<()> {
    key::write_key(&result.plans, path.as_ref())?;
    result.key_path = Some(path.as_ref().to_path_buf());
    Ok(())
}

pub fn import_key<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<TransportPlan<T>>> {
    key::read_key(path)
}

/// Moves row `i`'s value at noise slot `plan[j]` back to latent slot `j`:
/// `out[j] = row[perm[j]]`. This is the reverse map the reveal bridge applies.
pub fn gather_through_key<T: Scalar>(
    latent: &LatentMatrix<T>,
    key: &[TransportPlan<T>],
) -> Result<LatentMatrix<T>> {
    check_key_shape(key, latent.channels(), latent.points())?;
    let mut data = Vec::with_capacity(latent.data().len());
    for (row, plan) in latent.rows().zip(key) {
        let perm = plan.as_permutation().expect("checked");
        data.extend(perm.iter().map(|&j| row[j]));
    }
    LatentMatrix::new(latent.channels(), latent.points(), data)
}

pub fn check_key_shape<T: Scalar>(key: &[TransportPlan<T>], channels: usize, points: usize) -> Result<()> {
    if key.len() != channels {
        return Err(Error::KeyMismatch(format!("key has {} channels, bridge has {channels}", key.len())));
    }
    if let Some(p) = key.iter().find(|p| p.n() != points) {
        return Err(Error::KeyMismatch(format!("key has {} points, bridge has {points}", p.n())));
    }
    if key.iter().any(|p| p.as_permutation().is_none()) {
        return Err(Error::PlanKind("keys hold exact permutation plans only".into()));
    }
    Ok(())
}

/// `√(d² + s²)`, the smoothed absolute value.
#[inline]
pub fn smoothed_abs<T: Scalar>(d: T, smoothing: T) -> T {
    (d * d + smoothing * smoothing).sqrt()
}

/// Two-layer ReLU network `z ↦ w2·relu(w1 z + b1) + b2` on scalars.
///
/// Parameters live in one flat vector laid out as `w1[h] | b1[h] | w2[h] | b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpTransport<T> {
    hidden: usize,
    params: Vec<T>,
}

impl<T: Scalar> MlpTransport<T> {
    pub fn param_count(hidden: usize) -> usize {
        3 * hidden + 1
    }

    pub fn from_params(hidden: usize, params: Vec<T>) -> Result<Self> {
        if hidden == 0 || params.len() != Self::param_count(hidden) {
            return Err(Error::ShapeMismatch(format!(
                "MLP with {hidden} hidden units needs {} parameters, got {}",
                Self::param_count(hidden),
                params.len()
            )));
        }
        Ok(Self { hidden, params })
    }

    /// He-style initialisation: `w1 ~ N(0, 2)`, `b1 ~ N(0, ½)`, `w2 ~ N(0, 1/h)`, `b2 = 0`.
    pub fn random(hidden: usize, rng: &mut SeededRng) -> Self {
        Self { hidden, params: init_params(hidden, rng) }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn w1(&self) -> &[T] {
        &self.params[..self.hidden]
    }

    pub fn b1(&self) -> &[T] {
        &self.params[self.hidden..2 * self.hidden]
    }

    pub fn w2(&self) -> &[T] {
        &self.params[2 * self.hidden..3 * self.hidden]
    }

    pub fn b2(&self) -> T {
        self.params[3 * self.hidden]
    }

    pub fn forward(&self, z: T) -> T {
        mlp_forward(&self.params, self.hidden, z)
    }

    pub fn forward_row(&self, zs: &[T]) -> Vec<T> {
        zs.iter().map(|&z| self.forward(z)).collect()
    }

    /// Mean smoothed absolute deviation between `targets` and the network's
    /// image of `zs`, with its gradient w.r.t. the parameters.
    pub fn loss_and_grad(&self, zs: &[T], targets: &[T], smoothing: T) -> (T, Vec<T>) {
        let mut grad = vec![T::zero(); self.params.len()];
        let mut unused = vec![T::zero(); targets.len()];
        let loss = channel_loss_grad(&self.params, self.hidden, zs, targets, smoothing, T::one(), &mut grad, &mut unused);
        (loss, grad)
    }
}

pub(crate) fn init_params<T: Scalar>(hidden: usize, rng: &mut SeededRng) -> Vec<T> {
    let mut p = Vec::with_capacity(3 * hidden + 1);
    p.extend((0..hidden).map(|_| T::of(rng.next_gaussian() * std::f64::consts::SQRT_2)));
    p.extend((0..hidden).map(|_| T::of(rng.next_gaussian() * std::f64::consts::FRAC_1_SQRT_2)));
    let scale = 1.0 / (hidden as f64).sqrt();
    p.extend((0..hidden).map(|_| T::of(rng.next_gaussian() * scale)));
    p.push(T::zero());
    p
}

#[inline]
pub(crate) fn mlp_forward<T: Scalar>(params: &[T], hidden: usize, z: T) -> T {
    let (w1, rest) = params.split_at(hidden);
    let (b1, rest) = rest.split_at(hidden);
    let (w2, b2) = rest.split_at(hidden);
    let mut out = b2[0];
    for k in 0..hidden {
        let a = w1[k] * z + b1[k];
        if a > T::zero() {
            out += w2[k] * a;
        }
    }
    out
}

/// Mean over points of `√((t − mlp(z))² + s²)`. Adds `scale ×` its gradient
/// to `grad_params` (parameter layout as in [`MlpTransport`]) and to
/// `grad_targets`. Returns the unscaled mean.
#[allow(clippy::too_many_arguments)]
pub(crate) fn channel_loss_grad<T: Scalar>(
    params: &[T],
    hidden: usize,
    zs: &[T],
    targets: &[T],
    smoothing: T,
    scale: T,
    grad_params: &mut [T],
    grad_targets: &mut [T],
) -> T {
    let n = T::of_usize(zs.len());
    let (w1, rest) = params.split_at(hidden);
    let (b1, rest) = rest.split_at(hidden);
    let w2 = &rest[..hidden];
    let mut total = T::zero();
    for (k, (&z, &t)) in zs.iter().zip(targets).enumerate() {
        let y = mlp_forward(params, hidden, z);
        let d = t - y;
        let l = smoothed_abs(d, smoothing);
        total += l;
        // ∂l/∂d = d / l
        let dl_dd = scale * d / l / n;
        grad_targets[k] += dl_dd;
        let dy = -dl_dd;
        for h in 0..hidden {
            let a = w1[h] * z + b1[h];
            if a > T::zero() {
                grad_params[2 * hidden + h] += dy * a;
                let da = dy * w2[h];
                grad_params[h] += da * z;
                grad_params[hidden + h] += da;
            }
        }
        grad_params[3 * hidden] += dy;
    }
    total / n
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig<T> {
    pub hidden: usize,
    pub lr: T,
    pub epochs: usize,
    pub smoothing: T,
    /// Epochs without a relative improvement of `1e-4` before the step halves.
    pub patience: usize,
}

impl<T: Scalar> Default for FitConfig<T> {
    fn default() -> Self {
        Self { hidden: 64, lr: T::of(1e-2), epochs: 2000, smoothing: T::of(TRANSPORT_SMOOTHING), patience: 20 }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome<T> {
    pub mlp: MlpTransport<T>,
    /// Loss before each update, one entry per epoch.
    pub losses: Vec<T>,
}

/// Full-batch gradient descent of an MLP from `noise_row` to `latent_row`
/// under the smoothed absolute deviation, halving the step on plateaus.
/// Returns the parameters with the lowest loss seen.
pub fn fit_mlp<T: Scalar>(
    noise_row: &[T],
    latent_row: &[T],
    cfg: &FitConfig<T>,
    rng: &mut SeededRng,
) -> Result<FitOutcome<T>> {
    if noise_row.len() != latent_row.len() {
        return Err(Error::ShapeMismatch(format!(
            "noise row has {} points, latent row {}",
            noise_row.len(),
            latent_row.len()
        )));
    }
    if cfg.hidden == 0 || noise_row.is_empty() {
        return Err(Error::InvalidArgument("fit_mlp needs hidden ≥ 1 and at least one point".into()));
    }
    let mut mlp = MlpTransport::random(cfg.hidden, rng);
    let mut best = mlp.clone();
    let mut best_loss = T::infinity();
    let mut plateau_ref = T::infinity();
    let mut stale = 0;
    let mut lr = cfg.lr;
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (loss, grad) = mlp.loss_and_grad(noise_row, latent_row, cfg.smoothing);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        losses.push(loss);
        if loss < best_loss {
            best_loss = loss;
            best = mlp.clone();
        }
        if loss < plateau_ref * (T::one() - T::of(1e-4)) {
            plateau_ref = loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                lr = lr * T::of(0.5);
                plateau_ref = loss;
                stale = 0;
            }
        }
        for (p, g) in mlp.params.iter_mut().zip(&grad) {
            *p -= lr * *g;
        }
    }
    let (final_loss, _) = mlp.loss_and_grad(noise_row, latent_row, cfg.smoothing);
    if !final_loss.is_finite() {
        return Err(Error::Divergence { epoch: cfg.epochs });
    }
    if final_loss < best_loss {
        best = mlp;
    }
    Ok(FitOutcome { mlp: best, losses })
}

/// `(1/C) Σ_c mean_k √((latent[c,k] − mlp_c(noise[c,k]))² + s²)`, where
/// `noise[c,k]` is the noise value paired with latent point `k`.
pub fn transport_loss<T: Scalar>(
    latents: &LatentMatrix<T>,
    mlps: &[MlpTransport<T>],
    noise: &LatentMatrix<T>,
    smoothing: T,
) -> Result<T> {
    if (latents.channels(), latents.points()) != (noise.channels(), noise.points()) || mlps.len() != latents.channels() {
        return Err(Error::ShapeMismatch(format!(
            "latent {}x{}, noise {}x{}, {} MLPs",
            latents.channels(),
            latents.points(),
            noise.channels(),
            noise.points(),
            mlps.len()
        )));
    }
    if latents.channels() == 0 || latents.points() == 0 {
        return Err(Error::InvalidArgument("empty latent matrix".into()));
    }
    let per_channel = latents.rows().zip(noise.rows()).zip(mlps).map(|((lat, z), mlp)| {
        let s: T = lat.iter().zip(z).map(|(&l, &zk)| smoothed_abs(l - mlp.forward(zk), smoothing)).sum();
        s / T::of_usize(lat.len())
    });
    Ok(per_channel.sum::<T>() / T::of_usize(latents.channels()))
}

/// Histogram of one row with a peak count of its 3-bin smoothed version.
#[derive(Debug, Clone, PartialEq)]
pub struct UnimodalityReport {
    /// `(left, right)` edge of every bin.
    pub edges: Vec<(f64, f64)>,
    pub counts: Vec<usize>,
    /// Centred 3-bin moving average, zero outside the range.
    pub smoothed: Vec<f64>,
    pub peaks: usize,
}

impl UnimodalityReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_left,bin_right,count\n");
        for ((l, r), c) in self.edges.iter().zip(&self.counts) {
            let _ = writeln!(s, "{l},{r},{c}");
        }
        s
    }
}

/// Sturges' bin count, `⌈log₂ n⌉ + 1`.
pub fn sturges_bins(n: usize) -> usize {
    n.max(1).next_power_of_two().trailing_zeros() as usize + 1
}

/// Bins below this fraction of the tallest smoothed bin never count as peaks.
pub const MIN_PEAK_FRACTION: f64 = 0.05;

/// Equal-width histogram over `[min, max]` plus the number of peaks of the
/// 3-bin smoothed histogram.
///
/// A peak is a maximal run of equal smoothed values that is strictly higher
/// than its neighbours on both sides (the ends of the range count as lower),
/// and at least [`MIN_PEAK_FRACTION`] of the tallest bin, which discards lone
/// outliers in sparse tails.
pub fn unimodality_report<T: Scalar>(row: &[T], bins: usize) -> Result<UnimodalityReport> {
    if row.len() < 8 {
        return Err(Error::InvalidArgument(format!("need at least 8 points, got {}", row.len())));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("need at least one bin".into()));
    }
    let values: Vec<f64> = row.iter().map(|v| v.as_f64()).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("row contains non-finite values".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for v in &values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let edges = (0..bins).map(|k| (lo + k as f64 * width, lo + (k + 1) as f64 * width)).collect();
    let at = |k: isize| -> f64 {
        if k < 0 || k as usize >= bins {
            0.0
        } else {
            counts[k as usize] as f64
        }
    };
    let smoothed: Vec<f64> = (0..bins as isize).map(|k| (at(k - 1) + at(k) + at(k + 1)) / 3.0).collect();
    let peaks = count_peaks(&smoothed, MIN_PEAK_FRACTION);
    Ok(UnimodalityReport { edges, counts, smoothed, peaks })
}

fn count_peaks(s: &[f64], min_fraction: f64) -> usize {
    let floor = s.iter().copied().fold(0.0, f64::max) * min_fraction;
    let mut peaks = 0;
    let mut k = 0;
    while k < s.len() {
        let mut end = k;
        while end + 1 < s.len() && s[end + 1] == s[k] {
            end += 1;
        }
        let left_lower = k == 0 || s[k - 1] < s[k];
        let right_lower = end + 1 == s.len() || s[end + 1] < s[k];
        if left_lower && right_lower && s[k] >= floor && s[k] > 0.0 {
            peaks += 1;
        }
        k = end + 1;
    }
    peaks
}

//! Joint training of the hide and reveal networks, plus the transport
//! ablation.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{psnr_y, ssim};
use crate::pnm;
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::checkpoint::Checkpoint;
use super::model::{BridgeGrad, LossForm, LossOptions, LossWeights, NetConfig, StegoModel, DEFAULT_BASE, DEFAULT_MLP_HIDDEN};
use super::optim::{cosine_lr, AdamW};
use super::unet::check_size;

pub const METRICS_HEADER: &str =
    "epoch,lr,L_h,L_r,L_T,L_total,psnr_cover_stego,psnr_secret_recovery,ssim_cover_stego,ssim_secret_recovery";

// RNG stream labels
const INIT_STREAM: u64 = 1;
const EPOCH_STREAM: u64 = 2;
const EVAL_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr_init: f64,
    pub lr_final: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epochs: usize,
    /// Pairs per optimiser step.
    pub batch: usize,
    /// Optimiser steps per epoch; defaults to `⌈images / batch⌉`.
    pub steps_per_epoch: Option<usize>,
    pub seed: u64,
    pub patch_size: usize,
    pub use_mcot: bool,
    pub charbonnier_eps: f64,
    pub loss_form: LossForm,
    pub base: usize,
    pub mlp_hidden: usize,
    pub bridge_grad: BridgeGrad,
    pub noise: NoiseMode,
}

/// Where the bridge noise of a training or evaluation pass comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseMode {
    /// The model's own noise, drawn once from its noise seed.
    #[default]
    Fixed,
    /// A fresh draw for every pass.
    PerSample,
}

impl NoiseMode {
    pub fn name(self) -> &'static str {
        match self {
            NoiseMode::Fixed => "fixed",
            NoiseMode::PerSample => "per-sample",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fixed" => Some(NoiseMode::Fixed),
            "per-sample" => Some(NoiseMode::PerSample),
            _ => None,
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_init: 1e-3,
            lr_final: 1e-6,
            weight_decay: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epochs: 30,
            batch: 4,
            steps_per_epoch: None,
            seed: 0,
            patch_size: 32,
            use_mcot: true,
            charbonnier_eps: 1e-6,
            loss_form: LossForm::Charbonnier,
            base: DEFAULT_BASE,
            mlp_hidden: DEFAULT_MLP_HIDDEN,
            bridge_grad: BridgeGrad::StraightThrough,
            noise: NoiseMode::Fixed,
        }
    }
}

impl TrainConfig {
    pub fn net_config(&self) -> NetConfig {
        NetConfig { base: self.base, use_mcot: self.use_mcot, mlp_hidden: self.mlp_hidden }
    }

    pub fn validate(&self) -> Result<()> {
        check_size(self.patch_size, self.patch_size)?;
        if self.epochs == 0 || self.batch == 0 || self.steps_per_epoch == Some(0) {
            return Err(Error::InvalidArgument("epochs, batch and steps per epoch must be positive".into()));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.lr_init) || !positive(self.lr_final) || self.lr_final > self.lr_init {
            return Err(Error::InvalidArgument("need 0 < lr_final ≤ lr_init".into()));
        }
        if !positive(self.charbonnier_eps) {
            return Err(Error::InvalidArgument("charbonnier_eps must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument("optimiser constants out of range".into()));
        }
        Ok(())
    }

    fn loss_options<T: Scalar>(&self) -> LossOptions<T> {
        LossOptions {
            eps: T::of(self.charbonnier_eps),
            form: self.loss_form,
            weights: LossWeights::total(),
            bridge_grad: self.bridge_grad,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    pub l_h: f64,
    pub l_r: f64,
    pub l_t: f64,
    pub l_total: f64,
    pub psnr_cover_stego: f64,
    pub psnr_secret_recovery: f64,
    pub ssim_cover_stego: f64,
    pub ssim_secret_recovery: f64,
}

fn fmt_value(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".into()
    } else {
        format!("{v}")
    }
}

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        let vals = [
            self.lr,
            self.l_h,
            self.l_r,
            self.l_t,
            self.l_total,
            self.psnr_cover_stego,
            self.psnr_secret_recovery,
            self.ssim_cover_stego,
            self.ssim_secret_recovery,
        ];
        let mut s = self.epoch.to_string();
        for v in vals {
            s.push(',');
            s.push_str(&fmt_value(v));
        }
        s
    }
}

pub fn metrics_csv(history: &[EpochMetrics]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for m in history {
        let _ = writeln!(s, "{}", m.csv_row());
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: StegoModel<T>,
    pub history: Vec<EpochMetrics>,
}

/// Checks the dataset size and that every image is RGB and covers the patch.
pub fn validate_dataset<T: Scalar>(images: &[Tensor<T>], patch: usize) -> Result<()> {
    if images.len() < 2 {
        return Err(Error::Dataset(format!("need at least 2 images, found {}", images.len())));
    }
    for (i, img) in images.iter().enumerate() {
        if img.channels() != 3 {
            return Err(Error::Dataset(format!("image {i} has {} channels, expected 3", img.channels())));
        }
        if img.height() < patch || img.width() < patch {
            return Err(Error::Dataset(format!(
                "image {i} is {}x{}, smaller than the {patch}x{patch} crop",
                img.height(),
                img.width()
            )));
        }
    }
    Ok(())
}

/// Loads every `.pgm`, `.ppm` or `.pnm` file of `dir` in file-name order as RGB.
pub fn load_dataset_dir<T: Scalar>(dir: impl AsRef<Path>, patch: usize) -> Result<Vec<Tensor<T>>> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("pgm" | "ppm" | "pnm")) {
            paths.push(path);
        }
    }
    paths.sort();
    let images = paths.iter().map(pnm::load_rgb).collect::<Result<Vec<_>>>()?;
    validate_dataset(&images, patch)?;
    Ok(images)
}

/// Random `patch`-sized crop, horizontal flip with probability ½, and a
/// rotation angle drawn from `[0°, 90°]` snapped to the nearer of 0° and 90°.
pub fn augment<T: Scalar>(img: &Tensor<T>, patch: usize, rng: &mut SeededRng) -> Tensor<T> {
    let oy = rng.below(img.height() - patch + 1);
    let ox = rng.below(img.width() - patch + 1);
    let flip = rng.bernoulli(0.5);
    let angle = 90.0 * rng.next_uniform();
    let rotate = angle >= 45.0;
    Tensor::from_fn(img.channels(), patch, patch, |c, y, x| {
        let (y, x) = if rotate { (x, patch - 1 - y) } else { (y, x) };
        let x = if flip { patch - 1 - x } else { x };
        img.get(c, oy + y, ox + x)
    })
}

pub fn center_crop<T: Scalar>(img: &Tensor<T>, patch: usize) -> Tensor<T> {
    let oy = (img.height() - patch) / 2;
    let ox = (img.width() - patch) / 2;
    Tensor::from_fn(img.channels(), patch, patch, |c, y, x| img.get(c, oy + y, ox + x))
}

/// Mean metrics over the evaluation pairs `(i, i+1 mod n)`, centre-cropped.
/// Per-sample noise is drawn from a stream fixed by `seed`.
pub fn evaluate<T: Scalar>(
    model: &StegoModel<T>,
    images: &[Tensor<T>],
    patch: usize,
    seed: u64,
    noise: NoiseMode,
) -> Result<[f64; 4]> {
    let eval_rng = SeededRng::new(seed).derive(EVAL_STREAM);
    let n = images.len();
    let mut acc = [0.0; 4];
    for i in 0..n {
        let cover = center_crop(&images[i], patch);
        let secret = center_crop(&images[(i + 1) % n], patch);
        let bridge_rng = match noise {
            NoiseMode::Fixed => model.noise_rng(),
            NoiseMode::PerSample => eval_rng.substream(i as u64),
        };
        let (stego, recovery) = model.round_trip(&cover, &secret, &bridge_rng)?;
        acc[0] += psnr_y(&cover, &stego)?;
        acc[1] += psnr_y(&secret, &recovery)?;
        acc[2] += ssim(&cover, &stego)?;
        acc[3] += ssim(&secret, &recovery)?;
    }
    Ok(acc.map(|v| v / n as f64))
}

/// Trains from scratch, or from `resume` continuing its epoch count, up to
/// `cfg.epochs` completed epochs. `on_epoch` sees every finished epoch.
pub fn train<T: Scalar>(
    images: &[Tensor<T>],
    cfg: &TrainConfig,
    resume: Option<Checkpoint<T>>,
    mut on_epoch: impl FnMut(&EpochMetrics, &StegoModel<T>) -> Result<()>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    validate_dataset(images, cfg.patch_size)?;
    let root = SeededRng::new(cfg.seed);
    let (mut model, start) = match resume {
        Some(ck) => {
            if ck.model.config() != cfg.net_config() {
                return Err(Error::ModelMismatch(format!(
                    "checkpoint has {:?}, config asks for {:?}",
                    ck.model.config(),
                    cfg.net_config()
                )));
            }
            (ck.model, ck.epoch)
        }
        None => (StegoModel::new(cfg.net_config(), &mut root.derive(INIT_STREAM))?, 0),
    };
    let mut opt = AdamW::<T>::new(model.param_count());
    opt.beta1 = T::of(cfg.beta1);
    opt.beta2 = T::of(cfg.beta2);
    opt.weight_decay = T::of(cfg.weight_decay);
    let opts = cfg.loss_options::<T>();
    let n = images.len();
    let steps = cfg.steps_per_epoch.unwrap_or(n.div_ceil(cfg.batch));
    let mut grad = vec![T::zero(); model.param_count()];
    let mut history = Vec::new();

    for epoch in start..cfg.epochs {
        let lr = cosine_lr(epoch, cfg.epochs, cfg.lr_init, cfg.lr_final);
        let mut rng = root.derive(EPOCH_STREAM).derive(epoch as u64);
        let mut sums = [0.0; 4];
        for _ in 0..steps {
            grad.iter_mut().for_each(|g| *g = T::zero());
            for _ in 0..cfg.batch {
                let ci = rng.below(n);
                let mut si = rng.below(n - 1);
                if si >= ci {
                    si += 1;
                }
                let cover = augment(&images[ci], cfg.patch_size, &mut rng);
                let secret = augment(&images[si], cfg.patch_size, &mut rng);
                let bridge_rng = match cfg.noise {
                    NoiseMode::Fixed => model.noise_rng(),
                    NoiseMode::PerSample => SeededRng::new(rng.next_u64()),
                };
                let (l, _) = model.loss_and_grad(&cover, &secret, &bridge_rng, None, &opts, Some(&mut grad))?;
                for (s, v) in sums.iter_mut().zip([l.hiding, l.reveal, l.transport, l.total]) {
                    *s += v.as_f64();
                }
            }
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch: epoch + 1 });
            }
            let scale = T::one() / T::of_usize(cfg.batch);
            grad.iter_mut().for_each(|g| *g *= scale);
            opt.step(model.params_mut(), &grad, T::of(lr));
        }
        let count = (steps * cfg.batch) as f64;
        let [l_h, l_r, l_t, l_total] = sums.map(|s| s / count);
        if !l_total.is_finite() || model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { epoch: epoch + 1 });
        }
        let [pcs, psr, scs, ssr] = evaluate(&model, images, cfg.patch_size, cfg.seed, cfg.noise)?;
        let m = EpochMetrics {
            epoch: epoch + 1,
            lr,
            l_h,
            l_r,
            l_t,
            l_total,
            psnr_cover_stego: pcs,
            psnr_secret_recovery: psr,
            ssim_cover_stego: scs,
            ssim_secret_recovery: ssr,
        };
        on_epoch(&m, &model)?;
        history.push(m);
    }
    Ok(TrainOutcome { model, history })
}

#[derive(Debug, Clone)]
pub struct AblationRun<T> {
    pub seed: u64,
    pub use_mcot: bool,
    pub psnr_cover_stego: f64,
    pub psnr_secret_recovery: f64,
    pub model: StegoModel<T>,
}

impl<T> AblationRun<T> {
    pub fn score(&self) -> f64 {
        self.psnr_cover_stego + self.psnr_secret_recovery
    }
}

#[derive(Debug, Clone)]
pub struct AblationReport<T> {
    pub runs: Vec<AblationRun<T>>,
    pub median_with: f64,
    pub median_without: f64,
}

impl<T> AblationReport<T> {
    /// Transport arm's median score is at least the plain arm's.
    pub fn passed(&self) -> bool {
        self.median_with >= self.median_without
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("seed,use_mcot,psnr_cover_stego,psnr_secret_recovery,score\n");
        for r in &self.runs {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.seed,
                r.use_mcot,
                fmt_value(r.psnr_cover_stego),
                fmt_value(r.psnr_secret_recovery),
                fmt_value(r.score())
            );
        }
        let _ = writeln!(s, "median,true,,,{}", fmt_value(self.median_with));
        let _ = writeln!(s, "median,false,,,{}", fmt_value(self.median_without));
        s
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.is_empty() {
        f64::NAN
    } else if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Paired trainings with and without transport for each seed; only
/// `use_mcot` and `seed` differ from `base`.
pub fn run_ablation<T: Scalar>(images: &[Tensor<T>], base: &TrainConfig, seeds: &[u64]) -> Result<AblationReport<T>> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("ablation needs at least one seed".into()));
    }
    let mut runs = Vec::with_capacity(2 * seeds.len());
    for &seed in seeds {
        for use_mcot in [true, false] {
            let cfg = TrainConfig { seed, use_mcot, ..base.clone() };
            let out = train(images, &cfg, None, |_, _| Ok(()))?;
            let last = out.history.last().expect("at least one epoch");
            runs.push(AblationRun {
                seed,
                use_mcot,
                psnr_cover_stego: last.psnr_cover_stego,
                psnr_secret_recovery: last.psnr_secret_recovery,
                model: out.model,
            });
        }
    }
    let arm = |flag: bool| median(&runs.iter().filter(|r| r.use_mcot == flag).map(AblationRun::score).collect::<Vec<_>>());
    let (median_with, median_without) = (arm(true), arm(false));
    Ok(AblationReport { runs, median_with, median_without })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::toy_dataset;

    fn small_cfg() -> TrainConfig {
        TrainConfig { epochs: 2, batch: 2, base: 4, mlp_hidden: 4, patch_size: 16, ..TrainConfig::default() }
    }

    #[test]
    fn augment_keeps_crop_size() {
        let mut rng = SeededRng::new(1);
        let img: Tensor<f64> = crate::synthetic::toy_image(&mut rng, 40);
        for _ in 0..20 {
            assert_eq!(augment(&img, 32, &mut rng).shape(), (3, 32, 32));
        }
    }

    #[test]
    fn two_epochs_give_two_rows() {
        let data: Vec<Tensor<f64>> = toy_dataset(1, 4, 16);
        let out = train(&data, &small_cfg(), None, |_, _| Ok(())).unwrap();
        let csv = metrics_csv(&out.history);
        assert_eq!(csv.lines().count(), 3);
        assert!(out.history[1].lr <= out.history[0].lr);
        let again = train(&data, &small_cfg(), None, |_, _| Ok(())).unwrap();
        assert_eq!(metrics_csv(&again.history), csv);
    }

    #[test]
    fn resume_continues_numbering() {
        let data: Vec<Tensor<f64>> = toy_dataset(2, 3, 16);
        let cfg = TrainConfig { epochs: 3, ..small_cfg() };
        let first = train(&data, &TrainConfig { epochs: 3, ..cfg.clone() }, None, |_, _| Ok(())).unwrap();
        let partial = train(&data, &cfg, None, |m, _| if m.epoch == 2 { Err(Error::Dataset("stop".into())) } else { Ok(()) });
        assert!(partial.is_err());
        let ck = Checkpoint { model: first.model.clone(), epoch: 2 };
        let resumed = train(&data, &cfg, Some(ck), |_, _| Ok(())).unwrap();
        assert_eq!(resumed.history.len(), 1);
        assert_eq!(resumed.history[0].epoch, 3);
    }

    #[test]
    fn dataset_errors() {
        let one: Vec<Tensor<f64>> = toy_dataset(1, 1, 16);
        assert!(matches!(validate_dataset(&one, 16), Err(Error::Dataset(_))));
        let two: Vec<Tensor<f64>> = toy_dataset(1, 2, 16);
        assert!(matches!(validate_dataset(&two, 32), Err(Error::Dataset(_))));
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset_dir::<f64>(dir.path(), 16), Err(Error::Dataset(_))));
        assert!(train(&two, &TrainConfig { patch_size: 24, ..small_cfg() }, None, |_, _| Ok(())).is_err());
    }

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}

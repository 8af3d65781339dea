//! Hide and reveal networks joined by the transport bridge.

use crate::error::{Error, Result};
use crate::mcot::{self, McotResult, TransportMode};
use crate::ot::TransportPlan;
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::{LatentMatrix, Tensor};

use super::unet::{check_size, DecoderCache, EncoderCache, UNet};

pub const IMAGE_CHANNELS: usize = 3;
pub const DEFAULT_BASE: usize = 8;
pub const DEFAULT_MLP_HIDDEN: usize = 64;
pub const DEFAULT_CHARBONNIER_EPS: f64 = 1e-6;

/// How image residuals are turned into a loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossForm {
    /// `√(mean d² + ε²)`.
    #[default]
    Charbonnier,
    /// `√(mean d²) + ε²`, the square root closed before the `ε²`.
    Literal,
    /// `mean d²`; only for gradient checks.
    Squared,
}

impl LossForm {
    pub fn name(self) -> &'static str {
        match self {
            LossForm::Charbonnier => "charbonnier",
            LossForm::Literal => "literal",
            LossForm::Squared => "squared",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "charbonnier" => Some(LossForm::Charbonnier),
            "literal" => Some(LossForm::Literal),
            "squared" => Some(LossForm::Squared),
            _ => None,
        }
    }
}

/// Image loss between a target and a prediction, with its gradient w.r.t.
/// the prediction.
pub fn image_loss<T: Scalar>(target: &Tensor<T>, pred: &Tensor<T>, eps: T, form: LossForm) -> Result<(T, Tensor<T>)> {
    target.ensure_same_shape(pred)?;
    let n = T::of_usize(target.len().max(1));
    let ms = target.data().iter().zip(pred.data()).map(|(&t, &p)| (p - t) * (p - t)).sum::<T>() / n;
    let two = T::of(2.0);
    let (loss, dms) = match form {
        LossForm::Charbonnier => {
            let l = (ms + eps * eps).sqrt();
            (l, T::one() / (two * l))
        }
        LossForm::Literal => {
            let r = ms.sqrt();
            let d = if r > T::zero() { T::one() / (two * r) } else { T::zero() };
            (r + eps * eps, d)
        }
        LossForm::Squared => (ms, T::one()),
    };
    let grad = target.data().iter().zip(pred.data()).map(|(&t, &p)| dms * two * (p - t) / n).collect();
    Ok((loss, Tensor::new(pred.channels(), pred.height(), pred.width(), grad)?))
}

/// Hiding loss between cover and stego.
pub fn loss_hiding<T: Scalar>(cover: &Tensor<T>, stego: &Tensor<T>, eps: T) -> Result<T> {
    Ok(image_loss(cover, stego, eps, LossForm::Charbonnier)?.0)
}

/// Reveal loss between secret and recovery.
pub fn loss_reveal<T: Scalar>(secret: &Tensor<T>, recovery: &Tensor<T>, eps: T) -> Result<T> {
    Ok(image_loss(secret, recovery, eps, LossForm::Charbonnier)?.0)
}

pub fn loss_total<T: Scalar>(lh: T, lr: T, lt: T) -> T {
    lh + lr + lt
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetConfig {
    pub base: usize,
    pub use_mcot: bool,
    /// Hidden units of each channel's transport MLP; unused without transport.
    pub mlp_hidden: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self { base: DEFAULT_BASE, use_mcot: true, mlp_hidden: DEFAULT_MLP_HIDDEN }
    }
}

/// Which values the hiding decoder receives at the bridge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BridgeSource {
    /// The transported noise values.
    #[default]
    Exact,
    /// Each channel's MLP applied to its transported noise values.
    Mlp,
}

/// Gradient convention at the hiding bridge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BridgeGrad {
    /// The bridge passes the decoder's gradient to the latent unchanged.
    #[default]
    StraightThrough,
    /// True local derivative: the transported values are noise, so nothing
    /// flows back through the bridge.
    Exact,
}

/// Multipliers on the three loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights<T> {
    pub hiding: T,
    pub reveal: T,
    pub transport: T,
}

impl<T: Scalar> LossWeights<T> {
    pub fn total() -> Self {
        Self { hiding: T::one(), reveal: T::one(), transport: T::one() }
    }

    pub fn only_hiding() -> Self {
        Self { hiding: T::one(), reveal: T::zero(), transport: T::zero() }
    }

    pub fn only_reveal() -> Self {
        Self { hiding: T::zero(), reveal: T::one(), transport: T::zero() }
    }

    pub fn only_transport() -> Self {
        Self { hiding: T::zero(), reveal: T::zero(), transport: T::one() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossOptions<T> {
    pub eps: T,
    pub form: LossForm,
    pub weights: LossWeights<T>,
    pub bridge_grad: BridgeGrad,
}

impl<T: Scalar> Default for LossOptions<T> {
    fn default() -> Self {
        Self {
            eps: T::of(DEFAULT_CHARBONNIER_EPS),
            form: LossForm::Charbonnier,
            weights: LossWeights::total(),
            bridge_grad: BridgeGrad::StraightThrough,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown<T> {
    pub hiding: T,
    pub reveal: T,
    pub transport: T,
    /// Weighted sum of the three terms.
    pub total: T,
}

#[derive(Debug, Clone)]
pub struct HideOutput<T> {
    pub stego: Tensor<T>,
    pub bridge: McotResult<T>,
}

/// Everything one forward pass keeps for the backward pass.
struct Pass<T> {
    latent: Tensor<T>,
    lat_m: LatentMatrix<T>,
    h_enc: EncoderCache<T>,
    bridge: McotResult<T>,
    stego: Tensor<T>,
    h_dec: DecoderCache<T>,
    r_enc: EncoderCache<T>,
    recovery: Tensor<T>,
    r_dec: DecoderCache<T>,
}

/// Hiding U-Net (6 → 3), reveal U-Net (3 → 3) and, with transport, one MLP
/// per bridge channel, all in one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StegoModel<T> {
    config: NetConfig,
    hide_net: UNet,
    reveal_net: UNet,
    /// Seed of the bridge noise the model draws once and keeps.
    noise_seed: u64,
    params: Vec<T>,
}

impl<T: Scalar> StegoModel<T> {
    pub fn new(config: NetConfig, rng: &mut SeededRng) -> Result<Self> {
        let (hide_net, reveal_net) = Self::nets(&config)?;
        let mut params = hide_net.init_params(&mut rng.derive(1));
        params.extend(reveal_net.init_params::<T>(&mut rng.derive(2)));
        if config.use_mcot {
            let mut mrng = rng.derive(3);
            for _ in 0..hide_net.latent_channels() {
                params.extend(mcot::init_params::<T>(config.mlp_hidden, &mut mrng));
            }
        }
        let noise_seed = rng.derive(4).next_u64();
        Ok(Self { config, hide_net, reveal_net, noise_seed, params })
    }

    fn nets(config: &NetConfig) -> Result<(UNet, UNet)> {
        if config.use_mcot && config.mlp_hidden == 0 {
            return Err(Error::InvalidArgument("transport MLPs need at least one hidden unit".into()));
        }
        Ok((
            UNet::new(2 * IMAGE_CHANNELS, IMAGE_CHANNELS, config.base)?,
            UNet::new(IMAGE_CHANNELS, IMAGE_CHANNELS, config.base)?,
        ))
    }

    /// Rebuilds a model from stored pieces, checking they agree.
    pub fn from_parts(
        config: NetConfig,
        hide_net: UNet,
        reveal_net: UNet,
        noise_seed: u64,
        params: Vec<T>,
    ) -> Result<Self> {
        let (h, r) = Self::nets(&config)?;
        if h != hide_net || r != reveal_net {
            return Err(Error::ModelMismatch("stage specs disagree with the network config".into()));
        }
        let model = Self { config, hide_net, reveal_net, noise_seed, params: Vec::new() };
        if params.len() != model.param_count() {
            return Err(Error::ModelMismatch(format!(
                "expected {} parameters, got {}",
                model.param_count(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::ModelMismatch("non-finite parameter".into()));
        }
        Ok(Self { params, ..model })
    }

    pub fn config(&self) -> NetConfig {
        self.config
    }

    pub fn noise_seed(&self) -> u64 {
        self.noise_seed
    }

    /// Generator of the model's own bridge noise.
    pub fn noise_rng(&self) -> SeededRng {
        SeededRng::new(self.noise_seed)
    }

    pub fn hide_net(&self) -> &UNet {
        &self.hide_net
    }

    pub fn reveal_net(&self) -> &UNet {
        &self.reveal_net
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn latent_channels(&self) -> usize {
        self.hide_net.latent_channels()
    }

    fn mlp_len(&self) -> usize {
        3 * self.config.mlp_hidden + 1
    }

    pub fn param_count(&self) -> usize {
        let mlps = if self.config.use_mcot { self.latent_channels() * self.mlp_len() } else { 0 };
        self.hide_net.param_count() + self.reveal_net.param_count() + mlps
    }

    pub fn hide_range(&self) -> std::ops::Range<usize> {
        0..self.hide_net.param_count()
    }

    pub fn reveal_range(&self) -> std::ops::Range<usize> {
        let s = self.hide_net.param_count();
        s..s + self.reveal_net.param_count()
    }

    pub fn mlp_range(&self) -> std::ops::Range<usize> {
        self.reveal_range().end..self.params.len()
    }

    fn mlp_params(&self, c: usize) -> &[T] {
        let s = self.mlp_range().start + c * self.mlp_len();
        &self.params[s..s + self.mlp_len()]
    }

    pub fn mlp(&self, c: usize) -> Option<mcot::MlpTransport<T>> {
        if !self.config.use_mcot {
            return None;
        }
        mcot::MlpTransport::from_params(self.config.mlp_hidden, self.mlp_params(c).to_vec()).ok()
    }

    fn check_pair(&self, cover: &Tensor<T>, secret: &Tensor<T>) -> Result<()> {
        if cover.channels() != IMAGE_CHANNELS {
            return Err(Error::ChannelCount { expected: IMAGE_CHANNELS, found: cover.channels() });
        }
        cover.ensure_same_shape(secret)?;
        check_size(cover.height(), cover.width())?;
        Ok(())
    }

    /// Runs the hiding network. With transport the bridge noise comes from
    /// `rng`; without it the bridge is the identity.
    pub fn hide(&self, cover: &Tensor<T>, secret: &Tensor<T>, rng: &SeededRng, source: BridgeSource) -> Result<HideOutput<T>> {
        self.hide_with(cover, secret, rng, source, TransportMode::Exact)
    }

    /// [`StegoModel::hide`] with a choice of solver. Entropic plans are dense,
    /// so the bridge gets barycentric images and there is no key to export.
    pub fn hide_with(
        &self,
        cover: &Tensor<T>,
        secret: &Tensor<T>,
        rng: &SeededRng,
        source: BridgeSource,
        mode: TransportMode<T>,
    ) -> Result<HideOutput<T>> {
        self.check_pair(cover, secret)?;
        let x = Tensor::concat_channels(cover, secret)?;
        let hp = &self.params[self.hide_range()];
        let (latent, enc) = self.hide_net.encode(hp, &x)?;
        let bridge = self.bridge(&latent.to_matrix(), rng, mode)?;
        let bridged = self.bridged_values(&bridge, source)?.to_tensor(latent.height(), latent.width())?;
        let (stego, _) = self.hide_net.decode(hp, &bridged, &enc)?;
        Ok(HideOutput { stego, bridge })
    }

    fn bridge(&self, latent: &LatentMatrix<T>, rng: &SeededRng, mode: TransportMode<T>) -> Result<McotResult<T>> {
        if self.config.use_mcot {
            mcot::mcot_forward(latent, rng, mode)
        } else {
            Ok(McotResult::identity(latent))
        }
    }

    fn bridged_values(&self, bridge: &McotResult<T>, source: BridgeSource) -> Result<LatentMatrix<T>> {
        match (source, self.config.use_mcot) {
            (BridgeSource::Mlp, true) => {
                let t = &bridge.transported;
                let mut data = Vec::with_capacity(t.data().len());
                for (c, row) in t.rows().enumerate() {
                    let p = self.mlp_params(c);
                    data.extend(row.iter().map(|&z| mcot::mlp_forward(p, self.config.mlp_hidden, z)));
                }
                LatentMatrix::new(t.channels(), t.points(), data)
            }
            _ => Ok(bridge.transported.clone()),
        }
    }

    /// Runs the reveal network. A model trained with transport needs the key
    /// of the hiding pass; its bridge reorders the reveal latent through it.
    pub fn reveal(&self, stego: &Tensor<T>, key: Option<&[TransportPlan<T>]>) -> Result<Tensor<T>> {
        if stego.channels() != IMAGE_CHANNELS {
            return Err(Error::ChannelCount { expected: IMAGE_CHANNELS, found: stego.channels() });
        }
        let rp = &self.params[self.reveal_range()];
        let (latent, enc) = self.reveal_net.encode(rp, stego)?;
        let bridged = self.reveal_bridge(&latent, key)?;
        Ok(self.reveal_net.decode(rp, &bridged, &enc)?.0)
    }

    fn reveal_bridge(&self, latent: &Tensor<T>, key: Option<&[TransportPlan<T>]>) -> Result<Tensor<T>> {
        if !self.config.use_mcot {
            return Ok(latent.clone());
        }
        let key = key.ok_or_else(|| Error::KeyMismatch("this model was trained with transport and needs a key".into()))?;
        let m = mcot::gather_through_key(&latent.to_matrix(), key)?;
        m.to_tensor(latent.height(), latent.width())
    }

    fn forward(&self, cover: &Tensor<T>, secret: &Tensor<T>, rng: &SeededRng, fixed: Option<&McotResult<T>>) -> Result<Pass<T>> {
        self.check_pair(cover, secret)?;
        let hp = &self.params[self.hide_range()];
        let rp = &self.params[self.reveal_range()];
        let x = Tensor::concat_channels(cover, secret)?;
        let (latent, h_enc) = self.hide_net.encode(hp, &x)?;
        let lat_m = latent.to_matrix();
        let bridge = match fixed {
            Some(b) if self.config.use_mcot => {
                mcot::check_key_shape(&b.plans, lat_m.channels(), lat_m.points())?;
                McotResult { key_path: None, ..b.clone() }
            }
            _ => self.bridge(&lat_m, rng, TransportMode::Exact)?,
        };
        let bridged = bridge.transported.to_tensor(latent.height(), latent.width())?;
        let (stego, h_dec) = self.hide_net.decode(hp, &bridged, &h_enc)?;
        let (r_latent, r_enc) = self.reveal_net.encode(rp, &stego)?;
        let r_bridged = self.reveal_bridge(&r_latent, Some(&bridge.plans))?;
        let (recovery, r_dec) = self.reveal_net.decode(rp, &r_bridged, &r_enc)?;
        Ok(Pass { latent, lat_m, h_enc, bridge, stego, h_dec, r_enc, recovery, r_dec })
    }

    /// Side of every rectifier and clamp kink for one pass with the bridge
    /// held at `bridge`. Finite differences are only meaningful between
    /// parameter points with equal signatures.
    pub fn kink_signature(&self, cover: &Tensor<T>, secret: &Tensor<T>, bridge: &McotResult<T>) -> Result<Vec<bool>> {
        let pass = self.forward(cover, secret, &SeededRng::new(0), Some(bridge))?;
        let mut sig = Vec::new();
        UNet::kink_signature(&pass.h_enc, &pass.h_dec, &mut sig);
        UNet::kink_signature(&pass.r_enc, &pass.r_dec, &mut sig);
        if self.config.use_mcot {
            let h = self.config.mlp_hidden;
            for (c, row) in pass.bridge.transported.rows().enumerate() {
                let p = self.mlp_params(c);
                for &z in row {
                    sig.extend((0..h).map(|k| p[k] * z + p[h + k] > T::zero()));
                }
            }
        }
        Ok(sig)
    }

    /// Losses of one (cover, secret) pair and, if `grad` is given, their
    /// weighted gradient added into it. Bridge noise comes from `rng`, or the
    /// matching is held at `fixed` when provided.
    pub fn loss_and_grad(
        &self,
        cover: &Tensor<T>,
        secret: &Tensor<T>,
        rng: &SeededRng,
        fixed: Option<&McotResult<T>>,
        opts: &LossOptions<T>,
        grad: Option<&mut [T]>,
    ) -> Result<(LossBreakdown<T>, McotResult<T>)> {
        let w = opts.weights;
        let hp = &self.params[self.hide_range()];
        let rp = &self.params[self.reveal_range()];
        let Pass { latent, lat_m, h_enc, bridge, stego, h_dec, r_enc, recovery, r_dec } =
            self.forward(cover, secret, rng, fixed)?;

        let (lh, gh) = image_loss(cover, &stego, opts.eps, opts.form)?;
        let (lr, gr) = image_loss(secret, &recovery, opts.eps, opts.form)?;
        let c = lat_m.channels();
        let mut lt = T::zero();
        let mut g_lat_t = vec![T::zero(); lat_m.data().len()];
        let mut g_mlp = vec![T::zero(); self.mlp_range().len()];
        if self.config.use_mcot {
            let scale = w.transport / T::of_usize(c);
            let n = lat_m.points();
            for ch in 0..c {
                let ml = self.mlp_len();
                lt += mcot::channel_loss_grad(
                    self.mlp_params(ch),
                    self.config.mlp_hidden,
                    bridge.transported.row(ch),
                    lat_m.row(ch),
                    T::of(mcot::TRANSPORT_SMOOTHING),
                    scale,
                    &mut g_mlp[ch * ml..(ch + 1) * ml],
                    &mut g_lat_t[ch * n..(ch + 1) * n],
                );
            }
            lt /= T::of_usize(c);
        }
        let losses = LossBreakdown {
            hiding: lh,
            reveal: lr,
            transport: lt,
            total: w.hiding * lh + w.reveal * lr + w.transport * lt,
        };

        if let Some(grad) = grad {
            let (gh_all, rest) = grad.split_at_mut(self.hide_net.param_count());
            let (gr_all, gm_all) = rest.split_at_mut(self.reveal_net.param_count());
            for (a, b) in gm_all.iter_mut().zip(&g_mlp) {
                *a += *b;
            }

            let g_recovery = gr.map(|v| v * w.reveal);
            let (g_rb, r_skips) = self.reveal_net.decode_backward(rp, &r_dec, &g_recovery, gr_all);
            let g_rl = if self.config.use_mcot {
                scatter_through_key(&g_rb, &bridge.plans)?
            } else {
                g_rb
            };
            let g_stego_r = self.reveal_net.encode_backward(rp, &r_enc, &g_rl, &r_skips, gr_all);

            let mut g_stego = gh.map(|v| v * w.hiding);
            for (a, b) in g_stego.data_mut().iter_mut().zip(g_stego_r.data()) {
                *a += *b;
            }
            let (g_bridged, h_skips) = self.hide_net.decode_backward(hp, &h_dec, &g_stego, gh_all);
            let mut g_latent = if self.config.use_mcot && opts.bridge_grad == BridgeGrad::Exact {
                Tensor::zeros(latent.channels(), latent.height(), latent.width())
            } else {
                g_bridged
            };
            for (a, b) in g_latent.data_mut().iter_mut().zip(&g_lat_t) {
                *a += *b;
            }
            self.hide_net.encode_backward(hp, &h_enc, &g_latent, &h_skips, gh_all);
        }
        Ok((losses, bridge))
    }

    /// Hide then reveal with the matching key; bridge noise from `rng`.
    pub fn round_trip(&self, cover: &Tensor<T>, secret: &Tensor<T>, rng: &SeededRng) -> Result<(Tensor<T>, Tensor<T>)> {
        let out = self.hide(cover, secret, rng, BridgeSource::Exact)?;
        let recovery = self.reveal(&out.stego, Some(&out.bridge.plans))?;
        Ok((out.stego, recovery))
    }
}

/// Adjoint of [`mcot::gather_through_key`]: `out[perm[j]] += g[j]`.
fn scatter_through_key<T: Scalar>(g: &Tensor<T>, key: &[TransportPlan<T>]) -> Result<Tensor<T>> {
    let m = g.to_matrix();
    mcot::check_key_shape(key, m.channels(), m.points())?;
    let mut out = vec![T::zero(); m.data().len()];
    let n = m.points();
    for (c, (row, plan)) in m.rows().zip(key).enumerate() {
        for (j, &p) in plan.as_permutation().expect("checked").iter().enumerate() {
            out[c * n + p] += row[j];
        }
    }
    Tensor::new(g.channels(), g.height(), g.width(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::toy_image;

    fn pair(seed: u64, size: usize) -> (Tensor<f64>, Tensor<f64>) {
        let mut rng = SeededRng::new(seed);
        (toy_image(&mut rng, size), toy_image(&mut rng, size))
    }

    #[test]
    fn loss_examples() {
        let x = Tensor::<f64>::filled(1, 2, 2, 0.3);
        assert_eq!(loss_hiding(&x, &x, 1e-6).unwrap(), 1e-6);
        let y = x.map(|v| v + 0.1);
        assert!((loss_hiding(&x, &y, 1e-12).unwrap() - 0.1).abs() < 1e-12);
        let mut last = f64::INFINITY;
        for k in (0..=10).rev() {
            let t = k as f64 / 10.0;
            let z = Tensor::from_fn(1, 2, 2, |_, r, c| 0.3 + t * (r + 2 * c) as f64 * 0.1);
            let l = loss_hiding(&x, &z, 1e-6).unwrap();
            assert!(l <= last);
            last = l;
        }
        assert_eq!(loss_total(1.0, 2.0, 3.0), 6.0);
        assert_eq!(loss_total(1.0, 0.0, 3.0), 4.0);
        assert!(loss_reveal(&x, &Tensor::zeros(1, 2, 3), 1e-6).is_err());
        assert_eq!(image_loss(&x, &x, 1e-3, LossForm::Literal).unwrap().0, 1e-6);
    }

    #[test]
    fn hide_and_reveal_shapes() {
        let mut rng = SeededRng::new(1);
        let model = StegoModel::<f64>::new(NetConfig::default(), &mut rng).unwrap();
        let (cover, secret) = pair(2, 32);
        let bridge_rng = SeededRng::new(3);
        let out = model.hide(&cover, &secret, &bridge_rng, BridgeSource::Exact).unwrap();
        assert_eq!(out.stego.shape(), (3, 32, 32));
        assert_eq!((out.bridge.plans.len(), out.bridge.plans[0].n()), (64, 4));
        let again = model.hide(&cover, &secret, &bridge_rng, BridgeSource::Exact).unwrap();
        assert_eq!(again.stego, out.stego);

        let rec = model.reveal(&out.stego, Some(&out.bridge.plans)).unwrap();
        assert!(rec.is_finite());
        assert!(rec.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let ident: Vec<TransportPlan<f64>> = (0..64).map(|_| TransportPlan::identity(4)).collect();
        assert!(model.reveal(&out.stego, Some(&ident)).unwrap().is_finite());
        let wrong_n: Vec<TransportPlan<f64>> = (0..64).map(|_| TransportPlan::identity(9)).collect();
        assert!(matches!(model.reveal(&out.stego, Some(&wrong_n)), Err(Error::KeyMismatch(_))));
        assert!(matches!(model.reveal(&out.stego, None), Err(Error::KeyMismatch(_))));
        assert!(model.hide(&cover, &Tensor::zeros(3, 16, 16), &bridge_rng, BridgeSource::Exact).is_err());
        assert!(model.hide(&cover, &secret, &bridge_rng, BridgeSource::Mlp).unwrap().stego.is_finite());
    }

    #[test]
    fn without_transport_the_bridge_is_identity() {
        let mut rng = SeededRng::new(1);
        let cfg = NetConfig { use_mcot: false, ..NetConfig::default() };
        let model = StegoModel::<f64>::new(cfg, &mut rng).unwrap();
        let (cover, secret) = pair(4, 32);
        let out = model.hide(&cover, &secret, &SeededRng::new(0), BridgeSource::Exact).unwrap();
        assert!(out.bridge.plans.iter().all(TransportPlan::is_identity));
        assert!(model.reveal(&out.stego, None).is_ok());
        assert_eq!(model.mlp_range().len(), 0);
    }

    #[test]
    fn scatter_is_adjoint_of_gather() {
        let mut rng = SeededRng::new(5);
        let a: Tensor<f64> = crate::rng::gaussian_noise(&mut rng, 2, 2, 2);
        let b: Tensor<f64> = crate::rng::gaussian_noise(&mut rng, 2, 2, 2);
        let key = vec![
            TransportPlan::from_permutation(vec![2, 0, 3, 1]).unwrap(),
            TransportPlan::from_permutation(vec![1, 0, 2, 3]).unwrap(),
        ];
        let ga = mcot::gather_through_key(&a.to_matrix(), &key).unwrap();
        let sb = scatter_through_key(&b, &key).unwrap();
        let lhs: f64 = ga.data().iter().zip(b.data()).map(|(x, y)| x * y).sum();
        let rhs: f64 = a.data().iter().zip(sb.data()).map(|(x, y)| x * y).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}

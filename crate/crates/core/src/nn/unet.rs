//! Four-level convolutional U-Net split at its bottleneck.
//!
//! With base width `b` the encoder is a 3×3 stem to `b/2` channels at full
//! resolution followed by four stride-2 3×3 stages `b/2 → b → 2b → 4b → 8b`.
//! The decoder mirrors it: each stage upsamples ×2 (nearest), concatenates the
//! encoder feature of the same resolution and applies a 3×3 convolution back
//! to that feature's width. A linear 1×1 head maps `b/2` channels to the
//! output, clamped to `[0,1]`. Every hidden layer uses a leaky rectifier.
//!
//! [`UNet::encode`] stops at the `8b × H/16 × W/16` bottleneck so the caller
//! can transform it before [`UNet::decode`].

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::layers::{self, Conv};

/// Total downsampling between input and bottleneck.
pub const DOWNSAMPLE: usize = 16;
pub const LEVELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resample {
    /// Stride 1, same resolution.
    Same,
    /// Stride 2, half resolution.
    Down,
    /// Nearest ×2 upsampling before the convolution.
    Up,
}

impl Resample {
    pub fn code(self) -> u8 {
        match self {
            Resample::Same => 0,
            Resample::Down => 1,
            Resample::Up => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => Resample::Same,
            1 => Resample::Down,
            2 => Resample::Up,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSpec {
    /// For decoder stages this counts the concatenated skip channels too.
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub resample: Resample,
}

impl StageSpec {
    fn conv(&self) -> Conv {
        let stride = if self.resample == Resample::Down { 2 } else { 1 };
        Conv { cin: self.in_channels, cout: self.out_channels, kernel: self.kernel, stride }
    }

    pub fn param_count(&self) -> usize {
        self.conv().param_count()
    }
}

/// Stage list of a U-Net: stem, 4 encoder, 4 decoder, head.
pub fn unet_stages(in_channels: usize, out_channels: usize, base: usize) -> Result<Vec<StageSpec>> {
    if base < 2 || base % 2 != 0 {
        return Err(Error::InvalidArgument(format!("base width must be even and ≥ 2, got {base}")));
    }
    let widths = [base / 2, base, 2 * base, 4 * base, 8 * base];
    let mut s = vec![StageSpec { in_channels, out_channels: widths[0], kernel: 3, resample: Resample::Same }];
    for k in 0..LEVELS {
        s.push(StageSpec { in_channels: widths[k], out_channels: widths[k + 1], kernel: 3, resample: Resample::Down });
    }
    for k in (0..LEVELS).rev() {
        s.push(StageSpec {
            in_channels: widths[k + 1] + widths[k],
            out_channels: widths[k],
            kernel: 3,
            resample: Resample::Up,
        });
    }
    s.push(StageSpec { in_channels: widths[0], out_channels, kernel: 1, resample: Resample::Same });
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UNet {
    stages: Vec<StageSpec>,
    offsets: Vec<usize>,
    param_count: usize,
}

/// Activations kept for the encoder's backward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache<T> {
    /// Input of every encoder convolution (stem first).
    inputs: Vec<Tensor<T>>,
    /// Pre-activations of every encoder convolution.
    pre: Vec<Tensor<T>>,
}

impl<T: Scalar> EncoderCache<T> {
    /// Post-activation of encoder layer `k` (0 is the stem).
    fn feature(&self, k: usize) -> &Tensor<T> {
        &self.inputs[k + 1]
    }
}

#[derive(Debug, Clone)]
pub struct DecoderCache<T> {
    inputs: Vec<Tensor<T>>,
    pre: Vec<Tensor<T>>,
    /// Head output before clamping.
    head: Tensor<T>,
}

impl UNet {
    pub fn new(in_channels: usize, out_channels: usize, base: usize) -> Result<Self> {
        Self::from_stages(unet_stages(in_channels, out_channels, base)?)
    }

    pub fn from_stages(stages: Vec<StageSpec>) -> Result<Self> {
        if stages.len() != 2 * LEVELS + 2 {
            return Err(Error::ModelMismatch(format!("expected {} stages, got {}", 2 * LEVELS + 2, stages.len())));
        }
        let expected = unet_stages(stages[0].in_channels, stages[2 * LEVELS + 1].out_channels, stages[1].in_channels * 2)?;
        if stages != expected {
            return Err(Error::ModelMismatch("stage list does not describe a U-Net".into()));
        }
        let mut offsets = Vec::with_capacity(stages.len());
        let mut total = 0;
        for s in &stages {
            offsets.push(total);
            total += s.param_count();
        }
        Ok(Self { stages, offsets, param_count: total })
    }

    pub fn stages(&self) -> &[StageSpec] {
        &self.stages
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    pub fn in_channels(&self) -> usize {
        self.stages[0].in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.stages[2 * LEVELS + 1].out_channels
    }

    pub fn latent_channels(&self) -> usize {
        self.stages[LEVELS].out_channels
    }

    /// Offset range of the head layer inside this net's parameters.
    pub fn head_range(&self) -> std::ops::Range<usize> {
        let k = 2 * LEVELS + 1;
        self.offsets[k]..self.offsets[k] + self.stages[k].param_count()
    }

    fn layer<'a, T>(&self, k: usize, params: &'a [T]) -> (Conv, &'a [T]) {
        (self.stages[k].conv(), &params[self.offsets[k]..self.offsets[k] + self.stages[k].param_count()])
    }

    /// He-normal weights, zero biases; the head bias starts at ½ so outputs
    /// begin mid-range.
    pub fn init_params<T: Scalar>(&self, rng: &mut crate::rng::SeededRng) -> Vec<T> {
        let mut p = Vec::with_capacity(self.param_count);
        for (k, s) in self.stages.iter().enumerate() {
            let conv = s.conv();
            let fan_in = (conv.cin * conv.kernel * conv.kernel) as f64;
            let head = k == 2 * LEVELS + 1;
            let gain = if head { 1.0 } else { 2.0 / (1.0 + layers::LEAKY_SLOPE * layers::LEAKY_SLOPE) };
            let std = (gain / fan_in).sqrt();
            p.extend((0..conv.weight_count()).map(|_| T::of(rng.next_gaussian() * std)));
            let bias = if head { 0.5 } else { 0.0 };
            p.extend((0..conv.cout).map(|_| T::of(bias)));
        }
        p
    }

    pub fn check_input<T: Scalar>(&self, x: &Tensor<T>) -> Result<()> {
        if x.channels() != self.in_channels() {
            return Err(Error::ChannelCount { expected: self.in_channels(), found: x.channels() });
        }
        check_size(x.height(), x.width()).map(|_| ())
    }

    pub fn encode<T: Scalar>(&self, params: &[T], x: &Tensor<T>) -> Result<(Tensor<T>, EncoderCache<T>)> {
        self.check_input(x)?;
        let mut inputs = vec![x.clone()];
        let mut pre = Vec::with_capacity(LEVELS + 1);
        for k in 0..=LEVELS {
            let (conv, p) = self.layer(k, params);
            let z = conv.forward(p, inputs.last().expect("non-empty"));
            inputs.push(layers::leaky_relu(&z));
            pre.push(z);
        }
        let latent = inputs.pop().expect("bottleneck");
        let cache = EncoderCache { inputs, pre };
        Ok((latent, cache))
    }

    /// Decodes a (possibly transformed) bottleneck using the encoder's skips.
    pub fn decode<T: Scalar>(
        &self,
        params: &[T],
        bottleneck: &Tensor<T>,
        enc: &EncoderCache<T>,
    ) -> Result<(Tensor<T>, DecoderCache<T>)> {
        let expected = enc.pre[LEVELS].shape();
        if bottleneck.shape() != expected {
            return Err(Error::ShapeMismatch(format!("bottleneck {:?}, encoder produced {expected:?}", bottleneck.shape())));
        }
        let mut inputs = Vec::with_capacity(LEVELS + 1);
        let mut pre = Vec::with_capacity(LEVELS);
        let mut d = bottleneck.clone();
        for j in 0..LEVELS {
            let skip = enc.feature(LEVELS - 1 - j);
            let cat = Tensor::concat_channels(&layers::upsample2(&d), skip)?;
            let (conv, p) = self.layer(LEVELS + 1 + j, params);
            let z = conv.forward(p, &cat);
            d = layers::leaky_relu(&z);
            inputs.push(cat);
            pre.push(z);
        }
        let (conv, p) = self.layer(2 * LEVELS + 1, params);
        let head = conv.forward(p, &d);
        inputs.push(d);
        let out = head.clamp01();
        Ok((out, DecoderCache { inputs, pre, head }))
    }

    /// Returns the gradient w.r.t. the bottleneck fed to `decode` and the
    /// gradients w.r.t. the skip features (indexed like encoder layers).
    pub fn decode_backward<T: Scalar>(
        &self,
        params: &[T],
        dec: &DecoderCache<T>,
        grad_out: &Tensor<T>,
        grad_params: &mut [T],
    ) -> (Tensor<T>, Vec<Tensor<T>>) {
        let k = 2 * LEVELS + 1;
        let g = layers::clamp01_backward(&dec.head, grad_out);
        let (conv, p) = self.layer(k, params);
        let mut g = conv.backward(p, &dec.inputs[LEVELS], &g, &mut grad_params[self.offsets[k]..]);
        let mut skip_grads = vec![None; LEVELS];
        for j in (0..LEVELS).rev() {
            let k = LEVELS + 1 + j;
            let gz = layers::leaky_relu_backward(&dec.pre[j], &g);
            let (conv, p) = self.layer(k, params);
            let gcat = conv.backward(p, &dec.inputs[j], &gz, &mut grad_params[self.offsets[k]..]);
            let up_c = gcat.channels() - self.stages[LEVELS - 1 - j].out_channels;
            let gup = gcat.slice_channels(0..up_c).expect("in range");
            skip_grads[LEVELS - 1 - j] = Some(gcat.slice_channels(up_c..gcat.channels()).expect("in range"));
            g = layers::upsample2_backward(&gup);
        }
        (g, skip_grads.into_iter().map(|s| s.expect("filled")).collect())
    }

    /// Backward through the encoder; `skip_grads[k]` is added to the gradient
    /// of encoder layer `k`'s output. Returns the gradient w.r.t. the input.
    pub fn encode_backward<T: Scalar>(
        &self,
        params: &[T],
        enc: &EncoderCache<T>,
        grad_latent: &Tensor<T>,
        skip_grads: &[Tensor<T>],
        grad_params: &mut [T],
    ) -> Tensor<T> {
        let mut g = grad_latent.clone();
        for k in (0..=LEVELS).rev() {
            if k < LEVELS {
                for (a, b) in g.data_mut().iter_mut().zip(skip_grads[k].data()) {
                    *a += *b;
                }
            }
            let gz = layers::leaky_relu_backward(&enc.pre[k], &g);
            let (conv, p) = self.layer(k, params);
            g = conv.backward(p, &enc.inputs[k], &gz, &mut grad_params[self.offsets[k]..]);
        }
        g
    }
}

impl UNet {
    /// Appends the sign of every pre-activation and whether each head output
    /// lies inside the clamp range.
    pub fn kink_signature<T: Scalar>(enc: &EncoderCache<T>, dec: &DecoderCache<T>, out: &mut Vec<bool>) {
        for z in enc.pre.iter().chain(&dec.pre) {
            out.extend(z.data().iter().map(|&v| v > T::zero()));
        }
        out.extend(dec.head.data().iter().map(|&v| v >= T::zero() && v <= T::one()));
    }
}

/// Bottleneck shape `(H/16, W/16)`; sizes must be positive multiples of 16.
pub fn check_size(h: usize, w: usize) -> Result<(usize, usize)> {
    if h == 0 || w == 0 || h % DOWNSAMPLE != 0 || w % DOWNSAMPLE != 0 {
        return Err(Error::ShapeMismatch(format!("{h}x{w} is not a positive multiple of {DOWNSAMPLE}")));
    }
    Ok((h / DOWNSAMPLE, w / DOWNSAMPLE))
}

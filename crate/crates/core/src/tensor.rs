//! Dense `C×H×W` tensors and the `C×N` latent matrix view.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Full-range BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Row-major `channels × height × width` grid of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{channels}x{height}x{width} tensor needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, T::zero())
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: T) -> Self {
        Self { channels, height, width, data: vec![value; channels * height * width] }
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self { channels, height, width, data }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[self.index(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: T) {
        let i = self.index(c, y, x);
        self.data[i] = v;
    }

    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    pub fn ensure_same_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Self {
        Self {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamp01(&self) -> Self {
        self.map(|v| v.max(T::zero()).min(T::one()))
    }

    /// Planes `range` of this tensor as a new tensor.
    pub fn slice_channels(&self, range: Range<usize>) -> Result<Self> {
        if range.start > range.end || range.end > self.channels {
            return Err(Error::ShapeMismatch(format!(
                "channel range {range:?} outside 0..{}",
                self.channels
            )));
        }
        let n = self.plane_len();
        Ok(Self {
            channels: range.len(),
            height: self.height,
            width: self.width,
            data: self.data[range.start * n..range.end * n].to_vec(),
        })
    }

    /// Stacks `a`'s planes followed by `b`'s planes.
    pub fn concat_channels(a: &Self, b: &Self) -> Result<Self> {
        if a.height != b.height || a.width != b.width {
            return Err(Error::ShapeMismatch(format!(
                "cannot concatenate {}x{} with {}x{}",
                a.height, a.width, b.height, b.width
            )));
        }
        let mut data = Vec::with_capacity(a.len() + b.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Ok(Self { channels: a.channels + b.channels, height: a.height, width: a.width, data })
    }

    /// Row `i` of the result is channel `i` flattened in scanline order.
    pub fn to_matrix(&self) -> LatentMatrix<T> {
        LatentMatrix { channels: self.channels, points: self.plane_len(), data: self.data.clone() }
    }

    /// Single-channel luma `0.299 R + 0.587 G + 0.114 B`.
    pub fn rgb_to_y(&self) -> Result<Self> {
        if self.channels != 3 {
            return Err(Error::ChannelCount { expected: 3, found: self.channels });
        }
        let [wr, wg, wb] = LUMA_WEIGHTS.map(T::of);
        let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
        let data = r
            .iter()
            .zip(g)
            .zip(b)
            .map(|((&r, &g), &b)| wr * r + wg * g + wb * b)
            .collect();
        Ok(Self { channels: 1, height: self.height, width: self.width, data })
    }

    /// The luma plane for 3-channel input; 1-channel input is returned as is.
    pub fn luma(&self) -> Result<Self> {
        match self.channels {
            1 => Ok(self.clone()),
            3 => self.rgb_to_y(),
            found => Err(Error::ChannelCount { expected: 3, found }),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}

/// `C×N` matrix: one row of `N = H′·W′` points per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMatrix<T> {
    channels: usize,
    points: usize,
    data: Vec<T>,
}

impl<T: Scalar> LatentMatrix<T> {
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let channels = rows.len();
        let points = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != points) {
            return Err(Error::ShapeMismatch("ragged latent rows".into()));
        }
        Ok(Self { channels, points, data: rows.concat() })
    }

    pub fn new(channels: usize, points: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * points {
            return Err(Error::ShapeMismatch(format!(
                "{channels}x{points} matrix needs {} values, got {}",
                channels * points,
                data.len()
            )));
        }
        Ok(Self { channels, points, data })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.points..(i + 1) * self.points]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.points..(i + 1) * self.points]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks(self.points.max(1)).take(self.channels)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Inverse of [`Tensor::to_matrix`]; requires `h·w = N`.
    pub fn to_tensor(&self, h: usize, w: usize) -> Result<Tensor<T>> {
        if h * w != self.points {
            return Err(Error::ShapeMismatch(format!(
                "{} points cannot be laid out as {h}x{w}",
                self.points
            )));
        }
        Tensor::new(self.channels, h, w, self.data.clone())
    }
}

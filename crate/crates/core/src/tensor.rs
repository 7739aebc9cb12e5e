//! Dense image and tensor containers shared by every module.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Scalar type the network kernels are generic over.
///
/// `f64` is the only implementation shipped with the crate; the trait exists
/// so that forward-mode derivative checks can push dual numbers through the
/// exact same code path.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + std::fmt::Debug
{
    fn from_f64(v: f64) -> Self;
    /// Primal value, used for branching and finiteness checks.
    fn value(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    /// True when the value carries no information at all; kernels use it to
    /// skip work. Types with tangent parts must check those too.
    fn is_exact_zero(self) -> bool {
        self.value() == 0.0
    }

    fn scale(self, k: f64) -> Self {
        self * Self::from_f64(k)
    }

    fn sigmoid(self) -> Self {
        Self::from_f64(1.0) / (Self::from_f64(1.0) + (-self).exp())
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        self * k
    }
}

/// Single-channel H×W image stored row-major.
///
/// Intensity frames use the [0, 1] range; signed event images and error maps
/// share the same container without that restriction.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

/// Intensity frame with values in [0, 1].
pub type Frame = Image;

impl Image {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} values for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_shape(&self, other: &Image, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{what}: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamp01(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Affinely rescales the image so that it spans [0, 1].
    ///
    /// A constant image is returned unchanged.
    pub fn normalize_range(&self) -> Image {
        let (lo, hi) = self
            .data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if !(hi > lo) {
            return self.clone();
        }
        let span = hi - lo;
        self.map(|v| (v - lo) / span)
    }

    /// 2× box downsample (the bilinear sample at coarse cell centres).
    /// Odd sizes are padded by edge replication.
    pub fn downsample2(&self) -> Image {
        let w = self.width.div_ceil(2);
        let h = self.height.div_ceil(2);
        Image::from_fn(w, h, |x, y| {
            let x0 = 2 * x;
            let y0 = 2 * y;
            let x1 = (x0 + 1).min(self.width - 1);
            let y1 = (y0 + 1).min(self.height - 1);
            0.25 * (self.get(x0, y0) + self.get(x1, y0) + self.get(x0, y1) + self.get(x1, y1))
        })
    }
}

/// Channel-major C×H×W tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f64> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Dimension(format!(
                "{} values for a {channels}x{height}x{width} tensor",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// Stacks single-channel planes along the channel axis.
    pub fn stack(planes: &[&[T]], height: usize, width: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(planes.len() * height * width);
        for p in planes {
            if p.len() != height * width {
                return Err(Error::Dimension(format!(
                    "plane of {} values in a {height}x{width} stack",
                    p.len()
                )));
            }
            data.extend_from_slice(p);
        }
        Self::from_vec(planes.len(), height, width, data)
    }

    /// Concatenates tensors along the channel axis.
    pub fn concat(parts: &[&Tensor<T>]) -> Result<Self> {
        let (h, w) = match parts.first() {
            Some(p) => (p.height, p.width),
            None => return Err(Error::Dimension("empty concatenation".into())),
        };
        let mut data = Vec::new();
        let mut channels = 0;
        for p in parts {
            if p.height != h || p.width != w {
                return Err(Error::Dimension(format!(
                    "concat of {}x{} with {h}x{w}",
                    p.height, p.width
                )));
            }
            channels += p.channels;
            data.extend_from_slice(&p.data);
        }
        Self::from_vec(channels, h, w, data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert_eq!(self.shape(), other.shape());
        Self {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.value().is_finite())
    }
}

impl<T> Tensor<T> {
    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn plane_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> &T {
        &self.data[(c * self.height + y) * self.width + x]
    }
}

impl Tensor<f64> {
    pub fn from_image(image: &Image) -> Self {
        Self {
            channels: 1,
            height: image.height(),
            width: image.width(),
            data: image.as_slice().to_vec(),
        }
    }

    pub fn channel_image(&self, c: usize) -> Image {
        Image::from_vec(self.width, self.height, self.plane(c).to_vec()).expect("plane length matches")
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Channel-major mapping from scalar tensors to dual-capable ones.
pub(crate) fn lift<T: Real>(t: &Tensor<f64>) -> Tensor<T> {
    Tensor {
        channels: t.channels,
        height: t.height,
        width: t.width,
        data: t.data.iter().map(|&v| T::from_f64(v)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_range_spans_unit_interval() {
        let img = Image::from_vec(2, 2, vec![0.2, 0.4, 0.6, 0.3]).unwrap();
        let n = img.normalize_range();
        let (lo, hi) = n
            .as_slice()
            .iter()
            .fold((1.0f64, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
        assert!((lo - 0.0).abs() < 1e-15);
        assert!((hi - 1.0).abs() < 1e-15);
        assert!((n.get(1, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn normalize_range_constant_is_unchanged() {
        let img = Image::filled(3, 2, 0.37);
        assert_eq!(img.normalize_range(), img);
    }

    #[test]
    fn concat_checks_spatial_dims() {
        let a = Tensor::<f64>::zeros(1, 2, 2);
        let b = Tensor::<f64>::zeros(2, 2, 3);
        assert!(Tensor::concat(&[&a, &b]).is_err());
        let c = Tensor::<f64>::zeros(2, 2, 2);
        assert_eq!(Tensor::concat(&[&a, &c]).unwrap().shape(), (3, 2, 2));
    }
}

//! Dense rank-4 tensors in (batch, channel, height, width) layout.

use std::fmt;

use crate::error::{Axis, Error, Result};

/// Storage scalar. Kernels compute in `f64` and round once on store.
pub trait Real: Copy + Default + PartialEq + PartialOrd + fmt::Debug + Send + Sync + 'static {
    /// Largest representable value below 1.
    const BELOW_ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    const BELOW_ONE: Self = 1.0 - f32::EPSILON / 2.0;
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const BELOW_ONE: Self = 1.0 - f64::EPSILON / 2.0;
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(batch: usize, channels: usize, height: usize, width: usize) -> Result<Self> {
        let shape = Shape {
            batch,
            channels,
            height,
            width,
        };
        if shape.dims().contains(&0) {
            return Err(Error::InvalidShape(format!("{shape} has a zero-sized axis")));
        }
        Ok(shape)
    }

    pub const fn dims(&self) -> [usize; 4] {
        [self.batch, self.channels, self.height, self.width]
    }

    pub const fn numel(&self) -> usize {
        self.batch * self.channels * self.height * self.width
    }

    pub const fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn dim(&self, axis: Axis) -> usize {
        match axis {
            Axis::Batch => self.batch,
            Axis::Channel => self.channels,
            Axis::Height => self.height,
            Axis::Width => self.width,
        }
    }

    pub fn with_channels(self, channels: usize) -> Self {
        Shape { channels, ..self }
    }

    pub fn with_spatial(self, height: usize, width: usize) -> Self {
        Shape {
            height,
            width,
            ..self
        }
    }

    #[inline]
    pub const fn offset(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        ((b * self.channels + c) * self.height + y) * self.width + x
    }

    /// Fails with an axis-naming diagnostic unless `self == other`.
    pub fn expect_eq(&self, other: &Shape, op: &'static str) -> Result<()> {
        for axis in [Axis::Batch, Axis::Channel, Axis::Height, Axis::Width] {
            if self.dim(axis) != other.dim(axis) {
                return Err(Error::Axis {
                    op,
                    axis,
                    expected: self.dim(axis),
                    found: other.dim(axis),
                });
            }
        }
        Ok(())
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{}x{}x{}",
            self.batch, self.channels, self.height, self.width
        )
    }
}

/// Contiguous row-major storage, width fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::InvalidShape(format!(
                "{shape} needs {} values, got {}",
                shape.numel(),
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: Shape, value: f64) -> Self {
        Tensor {
            shape,
            data: vec![T::from_f64(value); shape.numel()],
        }
    }

    /// Scalar stored as a 1×1×1×1 tensor.
    pub fn scalar(value: f64) -> Self {
        Self::full(
            Shape {
                batch: 1,
                channels: 1,
                height: 1,
                width: 1,
            },
            value,
        )
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(shape.numel());
        for b in 0..shape.batch {
            for c in 0..shape.channels {
                for y in 0..shape.height {
                    for x in 0..shape.width {
                        data.push(T::from_f64(f(b, c, y, x)));
                    }
                }
            }
        }
        Tensor { shape, data }
    }

    pub fn from_f64_vec(shape: Shape, values: Vec<f64>) -> Result<Self> {
        Self::new(shape, values.into_iter().map(T::from_f64).collect())
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.shape.offset(b, c, y, x)]
    }

    /// One (batch, channel) plane.
    pub fn plane(&self, b: usize, c: usize) -> &[T] {
        let n = self.shape.plane();
        let start = (b * self.shape.channels + c) * n;
        &self.data[start..start + n]
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64()).collect()
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|v| T::from_f64(f(v.to_f64())))
                .collect(),
        }
    }

    pub fn reshape(self, shape: Shape) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.to_f64().is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.to_f64() - b.to_f64()).abs())
            .fold(0.0, f64::max)
    }

    /// ‖self − other‖₂ / ‖other‖₂, accumulated in f64.
    pub fn rel_l2(&self, reference: &Tensor<T>) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (a, b) in self.data.iter().zip(&reference.data) {
            let (a, b) = (a.to_f64(), b.to_f64());
            num += (a - b) * (a - b);
            den += b * b;
        }
        (num / den.max(f64::MIN_POSITIVE)).sqrt()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|v| v.to_f64()).sum()
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v.to_f64() * v.to_f64()).sum()
    }

    #[cfg(test)]
    pub(crate) fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
}

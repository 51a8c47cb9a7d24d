//! NCHW tensors and the primitive operations every block is composed of.
//!
//! Tensors are immutable values: every operation returns a fresh tensor and
//! never mutates its inputs. Reductions run in a single fixed index order per
//! output element, so results do not depend on how work is partitioned across
//! threads.

mod conv;
pub(crate) mod io;
mod ops;
mod pool;

use std::fmt;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use conv::{conv2d_im2col, conv2d_naive, conv2d_naive_counted, ConvParams};
pub use io::{read_tensor, read_tensor_file, write_tensor, write_tensor_file, TENSOR_MAGIC};
pub use ops::{
    add, batch_norm_inference, broadcast_scale, channel_shuffle, concat_channels, concat_width, elementwise, mul,
    sigmoid, split_channels, split_width, upsample_nearest2x, BatchNorm, Elementwise,
};
pub use pool::{
    channel_pixel_stats, directional_pool, global_avg_pool, global_max_pool, maxpool2d, maxpool2d_counted, Axis,
    PoolMode,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f32>) -> Result<Self> {
        if shape.n == 0 || shape.c == 0 || shape.h == 0 || shape.w == 0 {
            return Err(Error::Degenerate(format!("tensor shape {shape} has a zero dimension")));
        }
        if data.len() != shape.len() {
            return Err(Error::shape("tensor buffer", shape.len(), data.len()));
        }
        Ok(Self { shape, data })
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(Shape::new(n, c, h, w), data)
    }

    pub fn full(shape: Shape, value: f32) -> Self {
        assert!(!shape.is_empty(), "tensor shape {shape} has a zero dimension");
        Self {
            data: vec![value; shape.len()],
            shape,
        }
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Self {
        assert!(!shape.is_empty(), "tensor shape {shape} has a zero dimension");
        let mut data = Vec::with_capacity(shape.len());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for y in 0..shape.h {
                    for x in 0..shape.w {
                        data.push(f(n, c, y, x));
                    }
                }
            }
        }
        Self { shape, data }
    }

    /// Uniform samples in `[lo, hi)`.
    pub fn random_uniform<R: Rng + ?Sized>(shape: Shape, lo: f32, hi: f32, rng: &mut R) -> Self {
        assert!(!shape.is_empty(), "tensor shape {shape} has a zero dimension");
        let data = (0..shape.len()).map(|_| rng.gen_range(lo..hi)).collect();
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape.c + c) * self.shape.h + y) * self.shape.w + x
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.offset(n, c, y, x)]
    }

    /// Contiguous `h*w` slice for one channel of one sample.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let start = self.offset(n, c, 0, 0);
        &self.data[start..start + self.shape.plane()]
    }

    /// Same buffer viewed under another shape of equal length.
    pub fn reshape(self, shape: Shape) -> Result<Self> {
        if shape.len() != self.shape.len() {
            return Err(Error::shape("reshape", self.shape.len(), shape.len()));
        }
        Tensor::new(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Little-endian bytes of the data buffer.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    /// Hex SHA-256 of the shape and little-endian data buffer.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for d in self.shape.dims() {
            hasher.update((d as u32).to_le_bytes());
        }
        hasher.update(self.to_le_bytes());
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// True when both tensors have the same shape and identical bit patterns.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_buffer_length() {
        let err = Tensor::from_vec(1, 2, 2, 2, vec![0.0; 7]).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
        assert!(Tensor::from_vec(1, 0, 2, 2, vec![]).is_err());
    }

    #[test]
    fn offsets_are_row_major_nchw() {
        let t = Tensor::from_fn(Shape::new(2, 3, 4, 5), |n, c, y, x| {
            (n * 1000 + c * 100 + y * 10 + x) as f32
        });
        assert_eq!(t.get(1, 2, 3, 4), 1234.0);
        assert_eq!(t.data()[t.offset(1, 0, 0, 0)], 1000.0);
        assert_eq!(t.plane(0, 1)[5], 110.0);
    }

    #[test]
    fn checksum_tracks_shape_and_bits() {
        let a = Tensor::full(Shape::new(1, 1, 2, 2), 1.0);
        let b = a.clone().reshape(Shape::new(1, 4, 1, 1)).unwrap();
        assert_ne!(a.checksum(), b.checksum());
        assert_eq!(a.checksum(), a.clone().checksum());
        assert_eq!(a.checksum().len(), 64);
    }
}

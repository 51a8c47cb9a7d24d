use std::cmp::Ordering;

use super::{Shape, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolMode {
    Avg,
    Max,
}

/// The spatial axis a directional pool collapses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Height,
    Width,
}

// Max under IEEE total order, so -0.0 < +0.0 and chained windows agree with
// one large window bit for bit.
#[inline]
fn tmax(a: f32, b: f32) -> f32 {
    if b.total_cmp(&a) == Ordering::Greater {
        b
    } else {
        a
    }
}

/// Max pooling with "same" padding `k/2`. Padding cells never win.
pub fn maxpool2d(x: &Tensor, k: usize, stride: usize) -> Result<Tensor> {
    maxpool2d_impl(x, k, stride, None)
}

/// [`maxpool2d`] that also records, per output pixel, the number of
/// comparisons performed (real cells in the window minus one). The counts are
/// laid out like the output tensor.
pub fn maxpool2d_counted(x: &Tensor, k: usize, stride: usize) -> Result<(Tensor, Vec<u32>)> {
    let mut counts = Vec::new();
    let y = maxpool2d_impl(x, k, stride, Some(&mut counts))?;
    Ok((y, counts))
}

fn maxpool2d_impl(x: &Tensor, k: usize, stride: usize, mut counts: Option<&mut Vec<u32>>) -> Result<Tensor> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(Error::Invalid(format!("pool kernel must be odd, got {k}")));
    }
    if stride == 0 {
        return Err(Error::Invalid("pool stride must be at least 1".into()));
    }
    let xs = x.shape();
    let pad = k / 2;
    // h + 2*pad >= k always holds for odd k and h >= 1.
    let oh = (xs.h + 2 * pad - k) / stride + 1;
    let ow = (xs.w + 2 * pad - k) / stride + 1;
    let out_shape = Shape::new(xs.n, xs.c, oh, ow);
    let mut out = Vec::with_capacity(out_shape.len());
    for n in 0..xs.n {
        for c in 0..xs.c {
            let src = x.plane(n, c);
            for oy in 0..oh {
                let y0 = (oy * stride).saturating_sub(pad);
                let y1 = (oy * stride + k - pad).min(xs.h);
                for ox in 0..ow {
                    let x0 = (ox * stride).saturating_sub(pad);
                    let x1 = (ox * stride + k - pad).min(xs.w);
                    let mut m = f32::NEG_INFINITY;
                    let mut cells = 0u32;
                    for iy in y0..y1 {
                        for &v in &src[iy * xs.w + x0..iy * xs.w + x1] {
                            m = if cells == 0 { v } else { tmax(m, v) };
                            cells += 1;
                        }
                    }
                    if cells == 0 {
                        return Err(Error::Degenerate("pool window covers only padding".into()));
                    }
                    if let Some(counts) = counts.as_deref_mut() {
                        counts.push(cells - 1);
                    }
                    out.push(m);
                }
            }
        }
    }
    Tensor::new(out_shape, out)
}

pub fn global_avg_pool(x: &Tensor) -> Tensor {
    reduce_planes(x, PoolMode::Avg)
}

pub fn global_max_pool(x: &Tensor) -> Tensor {
    reduce_planes(x, PoolMode::Max)
}

fn reduce_planes(x: &Tensor, mode: PoolMode) -> Tensor {
    let xs = x.shape();
    let mut out = Vec::with_capacity(xs.n * xs.c);
    for n in 0..xs.n {
        for c in 0..xs.c {
            out.push(reduce(x.plane(n, c).iter().copied(), mode));
        }
    }
    Tensor::new(Shape::new(xs.n, xs.c, 1, 1), out).expect("shape derived from input")
}

fn reduce(values: impl Iterator<Item = f32>, mode: PoolMode) -> f32 {
    match mode {
        PoolMode::Avg => {
            let (sum, count) = values.fold((0.0f64, 0usize), |(s, n), v| (s + v as f64, n + 1));
            (sum / count as f64) as f32
        }
        PoolMode::Max => values.fold(f32::NEG_INFINITY, tmax),
    }
}

/// Collapses one spatial axis to length 1: `Width` gives (n,c,h,1),
/// `Height` gives (n,c,1,w).
pub fn directional_pool(x: &Tensor, axis: Axis, mode: PoolMode) -> Tensor {
    let xs = x.shape();
    match axis {
        Axis::Width => Tensor::from_fn(Shape::new(xs.n, xs.c, xs.h, 1), |n, c, y, _| {
            let row = &x.plane(n, c)[y * xs.w..(y + 1) * xs.w];
            reduce(row.iter().copied(), mode)
        }),
        Axis::Height => Tensor::from_fn(Shape::new(xs.n, xs.c, 1, xs.w), |n, c, _, col| {
            reduce((0..xs.h).map(|y| x.get(n, c, y, col)), mode)
        }),
    }
}

/// Per-pixel max or mean across channels, shape (n,1,h,w).
pub fn channel_pixel_stats(x: &Tensor, mode: PoolMode) -> Tensor {
    let xs = x.shape();
    Tensor::from_fn(Shape::new(xs.n, 1, xs.h, xs.w), |n, _, y, col| {
        reduce((0..xs.c).map(|c| x.get(n, c, y, col)), mode)
    })
}

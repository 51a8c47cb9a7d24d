use rayon::prelude::*;

use super::{Shape, Tensor};
use crate::error::{Error, Result};

/// Geometry of a square-kernel grouped convolution with "same" padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvParams {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub groups: usize,
    pub has_bias: bool,
}

impl ConvParams {
    pub fn new(in_c: usize, out_c: usize, k: usize, stride: usize) -> Self {
        Self {
            in_c,
            out_c,
            k,
            stride,
            groups: 1,
            has_bias: false,
        }
    }

    /// Depthwise stage: one `k`×`k` filter per channel.
    pub fn depthwise(c: usize, k: usize, stride: usize) -> Self {
        Self {
            groups: c,
            ..Self::new(c, c, k, stride)
        }
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn with_bias(mut self, has_bias: bool) -> Self {
        self.has_bias = has_bias;
        self
    }

    pub fn pad(&self) -> usize {
        self.k / 2
    }

    pub fn in_per_group(&self) -> usize {
        self.in_c / self.groups
    }

    pub fn out_per_group(&self) -> usize {
        self.out_c / self.groups
    }

    pub fn weight_shape(&self) -> Shape {
        Shape::new(self.out_c, self.in_per_group(), self.k, self.k)
    }

    /// Multiply-accumulates per output pixel.
    pub fn macs_per_pixel(&self) -> u64 {
        (self.out_c * self.in_per_group() * self.k * self.k) as u64
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_c == 0 || self.out_c == 0 {
            return Err(Error::Invalid("convolution channel counts must be positive".into()));
        }
        if self.k == 0 || self.k.is_multiple_of(2) {
            return Err(Error::Invalid(format!(
                "kernel size must be odd and positive, got {}",
                self.k
            )));
        }
        if self.stride == 0 {
            return Err(Error::Invalid("stride must be at least 1".into()));
        }
        if self.groups == 0 || !self.in_c.is_multiple_of(self.groups) || !self.out_c.is_multiple_of(self.groups) {
            return Err(Error::Invalid(format!(
                "groups {} must divide in_c {} and out_c {}",
                self.groups, self.in_c, self.out_c
            )));
        }
        Ok(())
    }

    /// Output spatial size for an `h`×`w` input.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let out = |len: usize| -> Result<usize> {
            let padded = len + 2 * self.pad();
            if padded < self.k {
                return Err(Error::Degenerate(format!(
                    "kernel {} does not fit padded extent {padded}",
                    self.k
                )));
            }
            Ok((padded - self.k) / self.stride + 1)
        };
        Ok((out(h)?, out(w)?))
    }

    fn check(&self, x: &Tensor, w: &Tensor, b: Option<&[f32]>) -> Result<Shape> {
        self.validate()?;
        let xs = x.shape();
        if xs.c != self.in_c {
            return Err(Error::shape("conv input channels", self.in_c, xs.c));
        }
        if w.shape() != self.weight_shape() {
            return Err(Error::shape("conv weight", self.weight_shape(), w.shape()));
        }
        match (self.has_bias, b) {
            (true, Some(b)) if b.len() != self.out_c => {
                return Err(Error::shape("conv bias", self.out_c, b.len()));
            }
            (true, None) => return Err(Error::Invalid("conv declares a bias but none was given".into())),
            (false, Some(_)) => return Err(Error::Invalid("conv has no bias but one was given".into())),
            _ => {}
        }
        let (oh, ow) = self.output_hw(xs.h, xs.w)?;
        Ok(Shape::new(xs.n, self.out_c, oh, ow))
    }
}

/// Direct grouped cross-correlation. Each output element is one sequential sum
/// over (input channel, kernel row, kernel col), with the bias added last.
pub fn conv2d_naive(x: &Tensor, w: &Tensor, b: Option<&[f32]>, p: &ConvParams) -> Result<Tensor> {
    let mut macs = 0;
    conv2d_naive_counted(x, w, b, p, &mut macs)
}

/// [`conv2d_naive`] that also counts every multiply-accumulate visited,
/// padding taps included.
pub fn conv2d_naive_counted(
    x: &Tensor,
    w: &Tensor,
    b: Option<&[f32]>,
    p: &ConvParams,
    macs: &mut u64,
) -> Result<Tensor> {
    let out_shape = p.check(x, w, b)?;
    let xs = x.shape();
    let (cin_g, cout_g, k, pad) = (p.in_per_group(), p.out_per_group(), p.k, p.pad() as isize);
    let wd = w.data();
    let mut out = Vec::with_capacity(out_shape.len());
    for n in 0..xs.n {
        for o in 0..p.out_c {
            let g = o / cout_g;
            for oy in 0..out_shape.h {
                for ox in 0..out_shape.w {
                    let mut acc = 0.0f32;
                    for ci in 0..cin_g {
                        let ic = g * cin_g + ci;
                        for ky in 0..k {
                            let iy = (oy * p.stride + ky) as isize - pad;
                            for kx in 0..k {
                                let ix = (ox * p.stride + kx) as isize - pad;
                                *macs += 1;
                                if iy < 0 || ix < 0 || iy >= xs.h as isize || ix >= xs.w as isize {
                                    continue;
                                }
                                let wv = wd[((o * cin_g + ci) * k + ky) * k + kx];
                                acc += wv * x.get(n, ic, iy as usize, ix as usize);
                            }
                        }
                    }
                    out.push(match b {
                        Some(b) => acc + b[o],
                        None => acc,
                    });
                }
            }
        }
    }
    Tensor::new(out_shape, out)
}

/// Lowers each sample to a column matrix and runs a row-broadcast GEMM.
///
/// The reduction index `r = (ci*k + ky)*k + kx` is walked in ascending order
/// for every output element, matching [`conv2d_naive`] bit for bit. Padding
/// taps contribute `w*0.0`, which leaves a finite accumulator unchanged.
pub fn conv2d_im2col(x: &Tensor, w: &Tensor, b: Option<&[f32]>, p: &ConvParams) -> Result<Tensor> {
    let out_shape = p.check(x, w, b)?;
    let xs = x.shape();
    let (cin_g, cout_g, k) = (p.in_per_group(), p.out_per_group(), p.k);
    let rows = cin_g * k * k;
    let plane = out_shape.plane();
    let wd = w.data();
    let mut out = vec![0.0f32; out_shape.len()];

    for n in 0..xs.n {
        // One column matrix per group, laid out [group][r][pixel].
        let mut cols = vec![0.0f32; p.groups * rows * plane];
        cols.par_chunks_mut(plane).enumerate().for_each(|(row, dst)| {
            let (g, r) = (row / rows, row % rows);
            let (ci, ky, kx) = (r / (k * k), (r / k) % k, r % k);
            im2col_row(x, n, g * cin_g + ci, ky, kx, p, out_shape, dst);
        });

        let sample = &mut out[n * p.out_c * plane..(n + 1) * p.out_c * plane];
        sample.par_chunks_mut(plane).enumerate().for_each(|(o, dst)| {
            let g = o / cout_g;
            let col = &cols[g * rows * plane..(g + 1) * rows * plane];
            let wrow = &wd[o * rows..(o + 1) * rows];
            for (r, &wv) in wrow.iter().enumerate() {
                let src = &col[r * plane..(r + 1) * plane];
                for (acc, &v) in dst.iter_mut().zip(src) {
                    *acc += wv * v;
                }
            }
            if let Some(b) = b {
                for acc in dst.iter_mut() {
                    *acc += b[o];
                }
            }
        });
    }
    Tensor::new(out_shape, out)
}

#[allow(clippy::too_many_arguments)]
fn im2col_row(x: &Tensor, n: usize, ic: usize, ky: usize, kx: usize, p: &ConvParams, out: Shape, dst: &mut [f32]) {
    let xs = x.shape();
    let pad = p.pad() as isize;
    let src = x.plane(n, ic);
    for oy in 0..out.h {
        let iy = (oy * p.stride + ky) as isize - pad;
        if iy < 0 || iy >= xs.h as isize {
            continue;
        }
        let src_row = &src[iy as usize * xs.w..(iy as usize + 1) * xs.w];
        let dst_row = &mut dst[oy * out.w..(oy + 1) * out.w];
        for (ox, d) in dst_row.iter_mut().enumerate() {
            let ix = (ox * p.stride + kx) as isize - pad;
            if ix >= 0 && ix < xs.w as isize {
                *d = src_row[ix as usize];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn identity_kernel() {
        let x = Tensor::full(Shape::new(1, 1, 3, 3), 2.0);
        let w = Tensor::full(Shape::new(1, 1, 1, 1), 1.0);
        let p = ConvParams::new(1, 1, 1, 1);
        assert_eq!(conv2d_naive(&x, &w, None, &p).unwrap(), x);
        assert_eq!(conv2d_im2col(&x, &w, None, &p).unwrap(), x);
    }

    #[test]
    fn same_padding_box_filter() {
        let x = Tensor::from_vec(1, 1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = Tensor::full(Shape::new(1, 1, 3, 3), 1.0);
        let p = ConvParams::new(1, 1, 3, 1);
        let y = conv2d_naive(&x, &w, None, &p).unwrap();
        assert_eq!(y.data(), &[10.0, 10.0, 10.0, 10.0]);
    }

    #[test]
    fn depthwise_scales_each_channel() {
        let x = Tensor::from_vec(1, 2, 1, 1, vec![5.0, 7.0]).unwrap();
        let w = Tensor::from_vec(2, 1, 1, 1, vec![2.0, 3.0]).unwrap();
        let p = ConvParams::depthwise(2, 1, 1);
        assert_eq!(conv2d_naive(&x, &w, None, &p).unwrap().data(), &[10.0, 21.0]);
        assert_eq!(conv2d_im2col(&x, &w, None, &p).unwrap().data(), &[10.0, 21.0]);
    }

    #[test]
    fn bias_is_added() {
        let x = Tensor::full(Shape::new(1, 1, 2, 2), 1.0);
        let w = Tensor::full(Shape::new(2, 1, 1, 1), 3.0);
        let p = ConvParams::new(1, 2, 1, 1).with_bias(true);
        let y = conv2d_im2col(&x, &w, Some(&[0.5, -1.0]), &p).unwrap();
        assert_eq!(y.data(), &[3.5, 3.5, 3.5, 3.5, 2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn strided_output_geometry() {
        let p = ConvParams::new(3, 4, 3, 2);
        assert_eq!(p.output_hw(64, 64).unwrap(), (32, 32));
        assert_eq!(p.output_hw(5, 1).unwrap(), (3, 1));
    }

    #[test]
    fn rejects_bad_shapes() {
        let x = Tensor::full(Shape::new(1, 3, 4, 4), 1.0);
        let w = Tensor::full(Shape::new(2, 3, 3, 3), 1.0);
        let err = conv2d_naive(&x, &w, None, &ConvParams::new(2, 2, 3, 1)).unwrap_err();
        assert!(err.to_string().contains("input channels"), "{err}");
        let err = conv2d_naive(&x, &w, None, &ConvParams::new(3, 2, 1, 1)).unwrap_err();
        assert!(err.to_string().contains("weight"), "{err}");
        assert!(ConvParams::new(3, 2, 2, 1).validate().is_err());
        assert!(ConvParams::new(3, 2, 3, 1).with_groups(2).validate().is_err());
        assert!(ConvParams::new(3, 2, 3, 0).validate().is_err());
    }

    #[test]
    fn im2col_matches_naive_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x = Tensor::random_uniform(Shape::new(1, 8, 16, 16), -1.0, 1.0, &mut rng);
        let w = Tensor::random_uniform(Shape::new(8, 8, 3, 3), -1.0, 1.0, &mut rng);
        let p = ConvParams::new(8, 8, 3, 1);
        let a = conv2d_naive(&x, &w, None, &p).unwrap();
        let b = conv2d_im2col(&x, &w, None, &p).unwrap();
        assert_eq!(a.to_le_bytes(), b.to_le_bytes());
    }

    #[test]
    fn mac_counter_matches_formula() {
        let x = Tensor::full(Shape::new(1, 4, 7, 5), 1.0);
        let p = ConvParams::new(4, 6, 3, 2).with_groups(2);
        let w = Tensor::full(p.weight_shape(), 1.0);
        let mut macs = 0;
        let y = conv2d_naive_counted(&x, &w, None, &p, &mut macs).unwrap();
        assert_eq!(macs, p.macs_per_pixel() * y.shape().plane() as u64);
    }
}

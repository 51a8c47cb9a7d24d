use super::{Shape, Tensor};
use crate::error::{Error, Result};

/// Inference-mode batch norm parameters, one entry per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub eps: f32,
}

impl BatchNorm {
    pub const EPS: f32 = 1e-5;

    pub fn identity(c: usize) -> Self {
        Self {
            mean: vec![0.0; c],
            var: vec![1.0; c],
            gamma: vec![1.0; c],
            beta: vec![0.0; c],
            eps: Self::EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

pub fn batch_norm_inference(x: &Tensor, bn: &BatchNorm) -> Result<Tensor> {
    let xs = x.shape();
    for (what, v) in [
        ("mean", &bn.mean),
        ("var", &bn.var),
        ("gamma", &bn.gamma),
        ("beta", &bn.beta),
    ] {
        if v.len() != xs.c {
            return Err(Error::shape(format!("batch norm {what}"), xs.c, v.len()));
        }
    }
    if bn.var.iter().any(|&v| v < 0.0) {
        return Err(Error::Invalid("batch norm variance must be non-negative".into()));
    }
    let plane = xs.plane();
    let mut data = x.data().to_vec();
    for (i, chunk) in data.chunks_mut(plane).enumerate() {
        let c = i % xs.c;
        let denom = (bn.var[c] + bn.eps).sqrt();
        for v in chunk {
            *v = bn.gamma[c] * (*v - bn.mean[c]) / denom + bn.beta[c];
        }
    }
    Tensor::new(xs, data)
}

/// Stacks tensors along the channel axis in argument order.
pub fn concat_channels(xs: &[&Tensor]) -> Result<Tensor> {
    let first = xs
        .first()
        .ok_or_else(|| Error::Invalid("concat of zero tensors".into()))?
        .shape();
    for t in xs {
        let s = t.shape();
        if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
            return Err(Error::shape("concat spatial dims", first, s));
        }
    }
    let c: usize = xs.iter().map(|t| t.shape().c).sum();
    let out_shape = Shape::new(first.n, c, first.h, first.w);
    let mut data = Vec::with_capacity(out_shape.len());
    for n in 0..first.n {
        for t in xs {
            let per = t.shape().c * first.plane();
            data.extend_from_slice(&t.data()[n * per..(n + 1) * per]);
        }
    }
    Tensor::new(out_shape, data)
}

/// Inverse of [`concat_channels`]: splits at the given channel counts.
pub fn split_channels(x: &Tensor, sizes: &[usize]) -> Result<Vec<Tensor>> {
    let xs = x.shape();
    if sizes.iter().sum::<usize>() != xs.c || sizes.contains(&0) {
        return Err(Error::shape("channel split", xs.c, format!("{sizes:?}")));
    }
    let plane = xs.plane();
    let mut offset = 0;
    sizes
        .iter()
        .map(|&c| {
            let mut data = Vec::with_capacity(xs.n * c * plane);
            for n in 0..xs.n {
                let start = (n * xs.c + offset) * plane;
                data.extend_from_slice(&x.data()[start..start + c * plane]);
            }
            offset += c;
            Tensor::new(Shape::new(xs.n, c, xs.h, xs.w), data)
        })
        .collect()
}

/// Concatenates along the width axis; all inputs share n, c and h.
pub fn concat_width(xs: &[&Tensor]) -> Result<Tensor> {
    let first = xs
        .first()
        .ok_or_else(|| Error::Invalid("concat of zero tensors".into()))?
        .shape();
    for t in xs {
        let s = t.shape();
        if (s.n, s.c, s.h) != (first.n, first.c, first.h) {
            return Err(Error::shape("width concat", first, s));
        }
    }
    let w: usize = xs.iter().map(|t| t.shape().w).sum();
    let out_shape = Shape::new(first.n, first.c, first.h, w);
    let mut data = Vec::with_capacity(out_shape.len());
    for row in 0..first.n * first.c * first.h {
        for t in xs {
            let tw = t.shape().w;
            data.extend_from_slice(&t.data()[row * tw..(row + 1) * tw]);
        }
    }
    Tensor::new(out_shape, data)
}

pub fn split_width(x: &Tensor, sizes: &[usize]) -> Result<Vec<Tensor>> {
    let xs = x.shape();
    if sizes.iter().sum::<usize>() != xs.w || sizes.contains(&0) {
        return Err(Error::shape("width split", xs.w, format!("{sizes:?}")));
    }
    let mut offset = 0;
    sizes
        .iter()
        .map(|&w| {
            let mut data = Vec::with_capacity(xs.n * xs.c * xs.h * w);
            for row in 0..xs.n * xs.c * xs.h {
                let start = row * xs.w + offset;
                data.extend_from_slice(&x.data()[start..start + w]);
            }
            offset += w;
            Tensor::new(Shape::new(xs.n, xs.c, xs.h, w), data)
        })
        .collect()
}

/// Transpose-based channel permutation: input channel `a*(c/g) + b` moves to
/// output position `b*g + a`.
pub fn channel_shuffle(x: &Tensor, groups: usize) -> Result<Tensor> {
    let xs = x.shape();
    if groups == 0 || !xs.c.is_multiple_of(groups) {
        return Err(Error::Invalid(format!(
            "shuffle groups {groups} must divide {} channels",
            xs.c
        )));
    }
    let per = xs.c / groups;
    let plane = xs.plane();
    let mut data = vec![0.0f32; xs.len()];
    for n in 0..xs.n {
        for a in 0..groups {
            for b in 0..per {
                let src = (n * xs.c + a * per + b) * plane;
                let dst = (n * xs.c + b * groups + a) * plane;
                data[dst..dst + plane].copy_from_slice(&x.data()[src..src + plane]);
            }
        }
    }
    Tensor::new(xs, data)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Mul,
}

pub fn elementwise(x: &Tensor, y: &Tensor, mode: Elementwise) -> Result<Tensor> {
    if x.shape() != y.shape() {
        return Err(Error::shape("elementwise operand", x.shape(), y.shape()));
    }
    let f = match mode {
        Elementwise::Add => |a: f32, b: f32| a + b,
        Elementwise::Mul => |a: f32, b: f32| a * b,
    };
    let data = x.data().iter().zip(y.data()).map(|(&a, &b)| f(a, b)).collect();
    Tensor::new(x.shape(), data)
}

pub fn add(x: &Tensor, y: &Tensor) -> Result<Tensor> {
    elementwise(x, y, Elementwise::Add)
}

pub fn mul(x: &Tensor, y: &Tensor) -> Result<Tensor> {
    elementwise(x, y, Elementwise::Mul)
}

/// Multiplies `x` by `s`, where `s` is (n,c,1,1), (n,c,h,1), (n,c,1,w) or a
/// per-pixel map (n,1,h,w), broadcast over the missing axes.
pub fn broadcast_scale(x: &Tensor, s: &Tensor) -> Result<Tensor> {
    let (xs, ss) = (x.shape(), s.shape());
    let per_channel =
        ss.c == xs.c && ((ss.h == 1 && ss.w == 1) || (ss.h == xs.h && ss.w == 1) || (ss.h == 1 && ss.w == xs.w));
    let per_pixel = ss.c == 1 && ss.h == xs.h && ss.w == xs.w;
    if ss.n != xs.n || !(per_channel || per_pixel) {
        return Err(Error::shape("broadcast scale", xs, ss));
    }
    Ok(Tensor::from_fn(xs, |n, c, y, col| {
        let sc = if ss.c == 1 { 0 } else { c };
        let sy = if ss.h == 1 { 0 } else { y };
        let sx = if ss.w == 1 { 0 } else { col };
        x.get(n, c, y, col) * s.get(n, sc, sy, sx)
    }))
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(|v| (1.0 / (1.0 + (-(v as f64)).exp())) as f32)
}

pub fn upsample_nearest2x(x: &Tensor) -> Tensor {
    let xs = x.shape();
    Tensor::from_fn(Shape::new(xs.n, xs.c, xs.h * 2, xs.w * 2), |n, c, y, col| {
        x.get(n, c, y / 2, col / 2)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(c: usize) -> Tensor {
        Tensor::from_fn(Shape::new(1, c, 1, 1), |_, c, _, _| c as f32)
    }

    #[test]
    fn batch_norm_cases() {
        let x = Tensor::from_vec(1, 1, 1, 3, vec![-1.0, 0.5, 2.0]).unwrap();
        let mut bn = BatchNorm::identity(1);
        bn.eps = 0.0;
        assert_eq!(batch_norm_inference(&x, &bn).unwrap(), x);
        let bn = BatchNorm {
            mean: vec![2.0],
            var: vec![4.0],
            gamma: vec![3.0],
            beta: vec![1.0],
            eps: 0.0,
        };
        let x = Tensor::from_vec(1, 1, 1, 2, vec![2.0, 4.0]).unwrap();
        assert_eq!(batch_norm_inference(&x, &bn).unwrap().data(), &[1.0, 4.0]);
        let x = Tensor::full(Shape::new(1, 2, 1, 1), 1.0);
        assert!(batch_norm_inference(&x, &bn).is_err());
    }

    #[test]
    fn concat_order_and_split() {
        let a = Tensor::full(Shape::new(2, 1, 2, 2), 1.0);
        let b = Tensor::full(Shape::new(2, 2, 2, 2), 2.0);
        assert_eq!(concat_channels(&[&a]).unwrap(), a);
        let ab = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(ab.shape(), Shape::new(2, 3, 2, 2));
        assert_eq!(ab.get(1, 0, 0, 0), 1.0);
        assert_eq!(ab.get(1, 2, 1, 1), 2.0);
        let ba = concat_channels(&[&b, &a]).unwrap();
        assert_eq!(ba.get(0, 2, 0, 0), 1.0);
        let parts = split_channels(&ab, &[1, 2]).unwrap();
        assert_eq!(parts, vec![a.clone(), b]);
        let c = Tensor::full(Shape::new(2, 1, 3, 2), 0.0);
        assert!(concat_channels(&[&a, &c]).is_err());
    }

    #[test]
    fn width_concat_split() {
        let a = Tensor::from_fn(Shape::new(1, 2, 1, 3), |_, c, _, x| (c * 10 + x) as f32);
        let b = Tensor::from_fn(Shape::new(1, 2, 1, 2), |_, c, _, x| (100 + c * 10 + x) as f32);
        let ab = concat_width(&[&a, &b]).unwrap();
        assert_eq!(
            ab.data(),
            &[0.0, 1.0, 2.0, 100.0, 101.0, 10.0, 11.0, 12.0, 110.0, 111.0]
        );
        assert_eq!(split_width(&ab, &[3, 2]).unwrap(), vec![a, b]);
    }

    #[test]
    fn shuffle_interleaves() {
        let y = channel_shuffle(&labeled(4), 2).unwrap();
        assert_eq!(y.data(), &[0.0, 2.0, 1.0, 3.0]);
        assert_eq!(channel_shuffle(&labeled(6), 1).unwrap(), labeled(6));
        let y = channel_shuffle(&labeled(6), 2).unwrap();
        assert_eq!(y.data(), &[0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
        assert_eq!(channel_shuffle(&y, 3).unwrap(), labeled(6));
        assert!(channel_shuffle(&labeled(5), 2).is_err());
    }

    #[test]
    fn elementwise_and_broadcast() {
        let x = Tensor::from_fn(Shape::new(1, 2, 2, 3), |_, c, y, x| (c + y * x) as f32);
        let z = Tensor::zeros(x.shape());
        let o = Tensor::full(x.shape(), 1.0);
        assert_eq!(add(&x, &z).unwrap(), x);
        assert_eq!(mul(&x, &o).unwrap(), x);
        assert!(add(&x, &Tensor::zeros(Shape::new(1, 2, 3, 2))).is_err());

        let c = Tensor::full(x.shape(), 2.0);
        let s = Tensor::from_vec(1, 2, 1, 1, vec![0.5, 3.0]).unwrap();
        let y = broadcast_scale(&c, &s).unwrap();
        assert!(y.plane(0, 0).iter().all(|&v| v == 1.0));
        assert!(y.plane(0, 1).iter().all(|&v| v == 6.0));

        let sh = Tensor::from_vec(1, 2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(broadcast_scale(&c, &sh).unwrap().get(0, 1, 1, 2), 8.0);
        let sw = Tensor::from_vec(1, 2, 1, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(broadcast_scale(&c, &sw).unwrap().get(0, 1, 0, 2), 12.0);
        assert!(broadcast_scale(&c, &Tensor::zeros(Shape::new(1, 2, 2, 2))).is_err());
        let px = Tensor::from_fn(Shape::new(1, 1, 2, 3), |_, _, y, x| (y * 3 + x) as f32);
        let y = broadcast_scale(&c, &px).unwrap();
        assert_eq!(y.get(0, 0, 1, 2), 10.0);
        assert_eq!(y.get(0, 1, 1, 2), 10.0);
    }

    #[test]
    fn upsample() {
        let x = Tensor::from_vec(1, 1, 1, 2, vec![1.0, 2.0]).unwrap();
        let y = upsample_nearest2x(&x);
        assert_eq!(y.shape(), Shape::new(1, 1, 2, 4));
        assert_eq!(y.data(), &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]);
    }
}

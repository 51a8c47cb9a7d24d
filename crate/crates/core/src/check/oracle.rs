//! Reference forward passes assembled directly from tensor primitives.
//!
//! Weights are looked up by name in a plain map (normally filled by a
//! [`Recorder`](crate::blocks::Recorder) while building the block under test),
//! so the topology here is written out independently of the block structs.
//! Convolutions go through `conv2d_naive`.

use std::collections::HashMap;

use crate::activation::{activate, ActivationKind};
use crate::blocks::BlockConfig;
use crate::error::{Error, Result};
use crate::tensor::{
    add, batch_norm_inference, broadcast_scale, channel_pixel_stats, channel_shuffle, concat_channels, concat_width,
    conv2d_naive, directional_pool, global_avg_pool, global_max_pool, maxpool2d, sigmoid, split_width, Axis, BatchNorm,
    ConvParams, PoolMode, Shape, Tensor,
};

pub struct Oracle {
    weights: HashMap<String, Tensor>,
}

impl Oracle {
    pub fn new(records: impl IntoIterator<Item = (String, Tensor)>) -> Self {
        Self {
            weights: records.into_iter().collect(),
        }
    }

    fn w(&self, name: &str) -> Result<&Tensor> {
        self.weights
            .get(name)
            .ok_or_else(|| Error::MissingWeight(name.to_string()))
    }

    fn vec(&self, name: &str) -> Result<Vec<f32>> {
        Ok(self.w(name)?.data().to_vec())
    }

    fn conv(&self, x: &Tensor, name: &str, p: ConvParams) -> Result<Tensor> {
        let bias = if p.has_bias {
            Some(self.vec(&format!("{name}.bias"))?)
        } else {
            None
        };
        conv2d_naive(x, self.w(&format!("{name}.weight"))?, bias.as_deref(), &p)
    }

    #[allow(clippy::too_many_arguments)]
    fn cba(
        &self,
        x: &Tensor,
        name: &str,
        out_c: usize,
        k: usize,
        stride: usize,
        groups: usize,
        act: Option<ActivationKind>,
    ) -> Result<Tensor> {
        let p = ConvParams::new(x.shape().c, out_c, k, stride).with_groups(groups);
        let y = self.conv(x, name, p)?;
        let bn = BatchNorm {
            mean: self.vec(&format!("{name}.bn.mean"))?,
            var: self.vec(&format!("{name}.bn.var"))?,
            gamma: self.vec(&format!("{name}.bn.gamma"))?,
            beta: self.vec(&format!("{name}.bn.beta"))?,
            eps: BatchNorm::EPS,
        };
        let y = batch_norm_inference(&y, &bn)?;
        Ok(match act {
            Some(a) => activate(a, &y),
            None => y,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn gsconv(
        &self,
        x: &Tensor,
        name: &str,
        out_c: usize,
        k: usize,
        stride: usize,
        k_dw: usize,
        act: Option<ActivationKind>,
    ) -> Result<Tensor> {
        let half = out_c / 2;
        let a = self.cba(x, &format!("{name}.sc"), half, k, stride, 1, act)?;
        let b = self.cba(&a, &format!("{name}.dw"), half, k_dw, 1, half, act)?;
        channel_shuffle(&concat_channels(&[&a, &b])?, 2)
    }

    fn gs_bottleneck(
        &self,
        x: &Tensor,
        name: &str,
        out_c: usize,
        k_dw: usize,
        act: Option<ActivationKind>,
        second_act: bool,
    ) -> Result<Tensor> {
        let hidden = out_c / 2;
        let g1 = self.gsconv(x, &format!("{name}.g1"), hidden, 1, 1, k_dw, act)?;
        let g2 = self.gsconv(
            &g1,
            &format!("{name}.g2"),
            out_c,
            3,
            1,
            k_dw,
            if second_act { act } else { None },
        )?;
        let sc = self.cba(x, &format!("{name}.shortcut"), out_c, 1, 1, 1, None)?;
        add(&g2, &sc)
    }

    fn fc(&self, x: &Tensor, name: &str, out_c: usize) -> Result<Tensor> {
        self.conv(x, name, ConvParams::new(x.shape().c, out_c, 1, 1).with_bias(true))
    }

    /// Evaluates `block` named `name` on `x`.
    pub fn forward(&self, block: &BlockConfig, name: &str, x: &Tensor) -> Result<Tensor> {
        let n = |s: &str| format!("{name}.{s}");
        match block {
            BlockConfig::ConvBnAct(c) => self.cba(x, name, c.out_c, c.k, c.stride, c.groups, c.act),
            BlockConfig::Dsc(c) => {
                let d = self.cba(x, &n("dw"), c.in_c, c.k_dw, c.stride, c.in_c, c.act)?;
                self.cba(&d, &n("pw"), c.out_c, 1, 1, 1, c.act)
            }
            BlockConfig::GsConv(c) => self.gsconv(x, name, c.out_c, c.k, c.stride, c.k_dw, c.act),
            BlockConfig::GsBottleneck(c) => self.gs_bottleneck(x, name, c.out_c, c.k_dw, c.act, c.second_act),
            BlockConfig::VovGscsp(c) => {
                let h = c.out_c / 2;
                let mut a = self.cba(x, &n("cv1"), h, 1, 1, 1, c.act)?;
                for i in 0..c.n {
                    a = self.gs_bottleneck(&a, &n(&format!("m{i}")), h, c.k_dw, c.act, true)?;
                }
                let b = self.cba(x, &n("cv2"), h, 1, 1, 1, c.act)?;
                self.cba(&concat_channels(&[&a, &b])?, &n("cv3"), c.out_c, 1, 1, 1, c.act)
            }
            BlockConfig::Csp(c) => {
                let h = c.out_c / 2;
                let mut a = self.cba(x, &n("cv1"), h, 1, 1, 1, c.act)?;
                for i in 0..c.n {
                    let m = n(&format!("m{i}"));
                    let t = self.cba(&a, &format!("{m}.cv1"), h, 1, 1, 1, c.act)?;
                    let t = self.cba(&t, &format!("{m}.cv2"), h, 3, 1, 1, c.act)?;
                    a = add(&a, &t)?;
                }
                let b = self.cba(x, &n("cv2"), h, 1, 1, 1, c.act)?;
                self.cba(&concat_channels(&[&a, &b])?, &n("cv3"), c.out_c, 1, 1, 1, c.act)
            }
            BlockConfig::Spp(c) => {
                let pools = c
                    .kernels
                    .iter()
                    .map(|&k| maxpool2d(x, k, 1))
                    .collect::<Result<Vec<_>>>()?;
                let mut parts = vec![x];
                parts.extend(&pools);
                concat_channels(&parts)
            }
            BlockConfig::Sppf(c) => {
                let mut pools: Vec<Tensor> = Vec::new();
                for _ in 0..c.chain {
                    let next = maxpool2d(pools.last().unwrap_or(x), c.k, 1)?;
                    pools.push(next);
                }
                let mut parts = vec![x];
                parts.extend(&pools);
                concat_channels(&parts)
            }
            BlockConfig::Se(c) => {
                let s = global_avg_pool(x);
                let s = activate(ActivationKind::Relu, &self.fc(&s, &n("fc1"), c.c / c.r)?);
                let s = sigmoid(&self.fc(&s, &n("fc2"), c.c)?);
                broadcast_scale(x, &s)
            }
            BlockConfig::Cbam(c) => {
                let mlp = |v: &Tensor| -> Result<Tensor> {
                    let hdn = activate(ActivationKind::Relu, &self.fc(v, &n("fc1"), c.c / c.r)?);
                    self.fc(&hdn, &n("fc2"), c.c)
                };
                let ch = sigmoid(&add(&mlp(&global_avg_pool(x))?, &mlp(&global_max_pool(x))?)?);
                let y = broadcast_scale(x, &ch)?;
                let stats = concat_channels(&[
                    &channel_pixel_stats(&y, PoolMode::Max),
                    &channel_pixel_stats(&y, PoolMode::Avg),
                ])?;
                let sp = sigmoid(&self.conv(&stats, &n("spatial"), ConvParams::new(2, 1, c.spatial_k, 1))?);
                broadcast_scale(&y, &sp)
            }
            BlockConfig::Ca(c) => {
                let s = x.shape();
                let rows = directional_pool(x, Axis::Width, PoolMode::Avg).reshape(Shape::new(s.n, s.c, 1, s.h))?;
                let cols = directional_pool(x, Axis::Height, PoolMode::Avg);
                let hidden = c.c / c.r;
                let mixed = self.cba(
                    &concat_width(&[&rows, &cols])?,
                    &n("squeeze"),
                    hidden,
                    1,
                    1,
                    1,
                    Some(ActivationKind::HardSwish),
                )?;
                let parts = split_width(&mixed, &[s.h, s.w])?;
                let a_h = sigmoid(&self.fc(&parts[0], &n("conv_h"), c.c)?).reshape(Shape::new(s.n, s.c, s.h, 1))?;
                let a_w = sigmoid(&self.fc(&parts[1], &n("conv_w"), c.c)?);
                broadcast_scale(&broadcast_scale(x, &a_h)?, &a_w)
            }
        }
    }
}

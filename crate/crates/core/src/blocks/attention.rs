//! Channel (SE), channel+spatial (CBAM) and coordinate (CA) attention.
//!
//! Fully connected layers are 1×1 convolutions on (n,c,1,1) tensors.

use super::{check_channels, join, Conv, ConvBnAct, ConvBnActConfig, ConvSite, ParamSource};
use crate::activation::{activate, ActivationKind};
use crate::error::{Error, Result};
use crate::tensor::{
    add, broadcast_scale, channel_pixel_stats, concat_channels, concat_width, directional_pool, global_avg_pool,
    global_max_pool, sigmoid, split_width, Axis, ConvParams, PoolMode, Shape, Tensor,
};

fn reduced(block: &str, c: usize, r: usize) -> Result<usize> {
    if r == 0 || !c.is_multiple_of(r) || c / r == 0 {
        return Err(Error::Invalid(format!(
            "{block}: reduction {r} must divide {c} channels"
        )));
    }
    Ok(c / r)
}

fn fc(in_c: usize, out_c: usize) -> ConvParams {
    ConvParams::new(in_c, out_c, 1, 1).with_bias(true)
}

fn fc_sites(prefix: &str, c: usize, hidden: usize, calls: u64) -> Vec<ConvSite> {
    let mut sites = vec![
        ConvSite::new(join(prefix, "fc1"), fc(c, hidden), 1, 1),
        ConvSite::new(join(prefix, "fc2"), fc(hidden, c), 1, 1),
    ];
    for s in &mut sites {
        s.calls = calls;
    }
    sites
}

/// Squeeze (global average) and excitation (c → c/r → c, ReLU then sigmoid).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeConfig {
    pub c: usize,
    pub r: usize,
}

impl SeConfig {
    pub const DEFAULT_R: usize = 16;

    pub fn new(c: usize) -> Self {
        Self { c, r: Self::DEFAULT_R }
    }

    pub fn hidden(&self) -> usize {
        self.c / self.r.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        reduced("se", self.c, self.r).map(drop)
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        check_channels("se", self.c, input)?;
        Ok(input)
    }

    pub fn conv_sites(&self, prefix: &str) -> Vec<ConvSite> {
        fc_sites(prefix, self.c, self.hidden(), 1)
    }

    pub fn build(&self, prefix: &str, src: &mut dyn ParamSource) -> Result<Se> {
        self.validate()?;
        Ok(Se {
            config: *self,
            fc1: Conv::build(fc(self.c, self.hidden()), &join(prefix, "fc1"), src)?,
            fc2: Conv::build(fc(self.hidden(), self.c), &join(prefix, "fc2"), src)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Se {
    pub config: SeConfig,
    pub fc1: Conv,
    pub fc2: Conv,
}

impl Se {
    /// Per-channel weights in (0, 1), shape (n,c,1,1).
    pub fn attention(&self, x: &Tensor) -> Result<Tensor> {
        check_channels("se", self.config.c, x.shape())?;
        let squeezed = global_avg_pool(x);
        let hidden = activate(ActivationKind::Relu, &self.fc1.forward(&squeezed)?);
        Ok(sigmoid(&self.fc2.forward(&hidden)?))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        broadcast_scale(x, &self.attention(x)?)
    }
}

/// Channel attention from avg- and max-pooled descriptors through a shared
/// MLP, then spatial attention from per-pixel channel max and mean.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CbamConfig {
    pub c: usize,
    pub r: usize,
    pub spatial_k: usize,
}

impl CbamConfig {
    pub const DEFAULT_R: usize = 16;
    pub const DEFAULT_SPATIAL_K: usize = 7;

    pub fn new(c: usize) -> Self {
        Self {
            c,
            r: Self::DEFAULT_R,
            spatial_k: Self::DEFAULT_SPATIAL_K,
        }
    }

    pub fn hidden(&self) -> usize {
        self.c / self.r.max(1)
    }

    fn spatial(&self) -> ConvParams {
        ConvParams::new(2, 1, self.spatial_k, 1)
    }

    pub fn validate(&self) -> Result<()> {
        reduced("cbam", self.c, self.r)?;
        self.spatial().validate()
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        check_channels("cbam", self.c, input)?;
        Ok(input)
    }

    pub fn conv_sites(&self, prefix: &str, h: usize, w: usize) -> Vec<ConvSite> {
        let mut sites = fc_sites(prefix, self.c, self.hidden(), 2);
        sites.push(ConvSite::new(join(prefix, "spatial"), self.spatial(), h, w));
        sites
    }

    pub fn build(&self, prefix: &str, src: &mut dyn ParamSource) -> Result<Cbam> {
        self.validate()?;
        Ok(Cbam {
            config: *self,
            fc1: Conv::build(fc(self.c, self.hidden()), &join(prefix, "fc1"), src)?,
            fc2: Conv::build(fc(self.hidden(), self.c), &join(prefix, "fc2"), src)?,
            spatial: Conv::build(self.spatial(), &join(prefix, "spatial"), src)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Cbam {
    pub config: CbamConfig,
    pub fc1: Conv,
    pub fc2: Conv,
    pub spatial: Conv,
}

impl Cbam {
    fn mlp(&self, v: &Tensor) -> Result<Tensor> {
        let hidden = activate(ActivationKind::Relu, &self.fc1.forward(v)?);
        self.fc2.forward(&hidden)
    }

    pub fn channel_attention(&self, x: &Tensor) -> Result<Tensor> {
        check_channels("cbam", self.config.c, x.shape())?;
        let a = self.mlp(&global_avg_pool(x))?;
        let m = self.mlp(&global_max_pool(x))?;
        Ok(sigmoid(&add(&a, &m)?))
    }

    pub fn spatial_attention(&self, x: &Tensor) -> Result<Tensor> {
        let stats = concat_channels(&[
            &channel_pixel_stats(x, PoolMode::Max),
            &channel_pixel_stats(x, PoolMode::Avg),
        ])?;
        Ok(sigmoid(&self.spatial.forward(&stats)?))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let refined = broadcast_scale(x, &self.channel_attention(x)?)?;
        broadcast_scale(&refined, &self.spatial_attention(&refined)?)
    }
}

/// Coordinate attention: per-row and per-column descriptors share a 1×1
/// conv + BN + hard-swish, then split into separate height and width gates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CaConfig {
    pub c: usize,
    pub r: usize,
}

impl CaConfig {
    pub const DEFAULT_R: usize = 32;

    pub fn new(c: usize) -> Self {
        Self { c, r: Self::DEFAULT_R }
    }

    pub fn hidden(&self) -> usize {
        self.c / self.r.max(1)
    }

    fn squeeze(&self) -> ConvBnActConfig {
        ConvBnActConfig::new(self.c, self.hidden(), 1, 1).act(Some(ActivationKind::HardSwish))
    }

    pub fn validate(&self) -> Result<()> {
        reduced("ca", self.c, self.r).map(drop)
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        check_channels("ca", self.c, input)?;
        Ok(input)
    }

    pub fn conv_sites(&self, prefix: &str, h: usize, w: usize) -> Vec<ConvSite> {
        let mut sites = self.squeeze().conv_sites(&join(prefix, "squeeze"), 1, h + w);
        sites.push(ConvSite::new(join(prefix, "conv_h"), fc(self.hidden(), self.c), 1, h));
        sites.push(ConvSite::new(join(prefix, "conv_w"), fc(self.hidden(), self.c), 1, w));
        sites
    }

    pub fn build(&self, prefix: &str, src: &mut dyn ParamSource) -> Result<Ca> {
        self.validate()?;
        Ok(Ca {
            config: *self,
            squeeze: self.squeeze().build(&join(prefix, "squeeze"), src)?,
            conv_h: Conv::build(fc(self.hidden(), self.c), &join(prefix, "conv_h"), src)?,
            conv_w: Conv::build(fc(self.hidden(), self.c), &join(prefix, "conv_w"), src)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Ca {
    pub config: CaConfig,
    pub squeeze: ConvBnAct,
    pub conv_h: Conv,
    pub conv_w: Conv,
}

impl Ca {
    /// Height gate (n,c,h,1) and width gate (n,c,1,w).
    pub fn attention(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let xs = x.shape();
        check_channels("ca", self.config.c, xs)?;
        // (n,c,h,1) and (n,c,1,h) share a buffer layout
        let rows = directional_pool(x, Axis::Width, PoolMode::Avg).reshape(Shape::new(xs.n, xs.c, 1, xs.h))?;
        let cols = directional_pool(x, Axis::Height, PoolMode::Avg);
        let mixed = self.squeeze.forward(&concat_width(&[&rows, &cols])?)?;
        let parts = split_width(&mixed, &[xs.h, xs.w])?;
        let a_h = sigmoid(&self.conv_h.forward(&parts[0])?).reshape(Shape::new(xs.n, xs.c, xs.h, 1))?;
        let a_w = sigmoid(&self.conv_w.forward(&parts[1])?);
        Ok((a_h, a_w))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (a_h, a_w) = self.attention(x)?;
        broadcast_scale(&broadcast_scale(x, &a_h)?, &a_w)
    }
}

//! Composite blocks built from tensor primitives.
//!
//! Each block comes in two halves: a `*Config` describing its geometry
//! (enough for shape propagation and cost accounting) and a built block that
//! owns its weights and evaluates `forward`. Weights are pulled by name from a
//! [`ParamSource`], so the same code path serves random initialization,
//! loading from a weight file and hand-set test weights.

mod attention;
mod gs;
mod spp;

use rand::Rng;

pub use attention::{Ca, CaConfig, Cbam, CbamConfig, Se, SeConfig};
pub use gs::{
    Bottleneck, Csp, CspConfig, GsBottleneck, GsBottleneckConfig, GsConv, GsConvConfig, VovGscsp, VovGscspConfig,
};
pub use spp::{Spp, SppConfig, Sppf, SppfConfig};

use crate::activation::{activate, ActivationKind};
use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::tensor::{batch_norm_inference, conv2d_im2col, BatchNorm, ConvParams, Shape, Tensor};

/// Supplies named parameter tensors of a requested shape.
pub trait ParamSource {
    fn tensor(&mut self, name: &str, shape: Shape) -> Result<Tensor>;
}

impl<F> ParamSource for F
where
    F: FnMut(&str, Shape) -> Result<Tensor>,
{
    fn tensor(&mut self, name: &str, shape: Shape) -> Result<Tensor> {
        self(name, shape)
    }
}

/// What a parameter tensor is for, derived from its name suffix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamRole {
    Weight,
    Bias,
    BnGamma,
    BnBeta,
    BnMean,
    BnVar,
}

impl ParamRole {
    pub fn of(name: &str) -> Option<ParamRole> {
        let role = match name.rsplit_once('.').map(|(_, s)| s)? {
            "weight" => ParamRole::Weight,
            "bias" => ParamRole::Bias,
            "gamma" => ParamRole::BnGamma,
            "beta" => ParamRole::BnBeta,
            "mean" => ParamRole::BnMean,
            "var" => ParamRole::BnVar,
            _ => return None,
        };
        Some(role)
    }
}

/// Default initialization: conv weights uniform in `±sqrt(6 / fan_in)` with
/// `fan_in = (in_c/groups)*k*k`, biases zero, batch norm at identity.
pub struct InitSource {
    seeds: SeedStream,
}

impl InitSource {
    pub fn new(seed: u64) -> Self {
        Self {
            seeds: SeedStream::new(seed),
        }
    }

    pub fn weight_bound(shape: Shape) -> f32 {
        let fan_in = shape.c * shape.h * shape.w;
        (6.0 / fan_in as f64).sqrt() as f32
    }
}

impl ParamSource for InitSource {
    fn tensor(&mut self, name: &str, shape: Shape) -> Result<Tensor> {
        let role = ParamRole::of(name).ok_or_else(|| Error::Invalid(format!("unknown parameter role in `{name}`")))?;
        Ok(match role {
            ParamRole::Weight => {
                let bound = Self::weight_bound(shape);
                let mut rng = self.seeds.rng(name);
                let data = (0..shape.len()).map(|_| rng.gen_range(-bound..=bound)).collect();
                Tensor::new(shape, data)?
            }
            ParamRole::Bias | ParamRole::BnBeta | ParamRole::BnMean => Tensor::zeros(shape),
            ParamRole::BnGamma | ParamRole::BnVar => Tensor::full(shape, 1.0),
        })
    }
}

/// Like [`InitSource`] but with random biases and batch-norm statistics, so
/// every parameter influences the output.
pub struct RandomSource {
    seeds: SeedStream,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self {
            seeds: SeedStream::new(seed),
        }
    }
}

impl ParamSource for RandomSource {
    fn tensor(&mut self, name: &str, shape: Shape) -> Result<Tensor> {
        let role = ParamRole::of(name).ok_or_else(|| Error::Invalid(format!("unknown parameter role in `{name}`")))?;
        let mut rng = self.seeds.rng(name);
        let (lo, hi) = match role {
            ParamRole::Weight => {
                let b = InitSource::weight_bound(shape);
                (-b, b)
            }
            ParamRole::Bias | ParamRole::BnBeta | ParamRole::BnMean => (-0.5, 0.5),
            ParamRole::BnGamma | ParamRole::BnVar => (0.5, 1.5),
        };
        Ok(Tensor::random_uniform(shape, lo, hi, &mut rng))
    }
}

/// Wraps a source and keeps a copy of every tensor handed out, in request
/// order.
pub struct Recorder<S> {
    inner: S,
    pub records: Vec<(String, Tensor)>,
}

impl<S: ParamSource> Recorder<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            records: Vec::new(),
        }
    }
}

impl<S: ParamSource> ParamSource for Recorder<S> {
    fn tensor(&mut self, name: &str, shape: Shape) -> Result<Tensor> {
        let t = self.inner.tensor(name, shape)?;
        self.records.push((name.to_string(), t.clone()));
        Ok(t)
    }
}

fn vector(src: &mut dyn ParamSource, name: &str, c: usize) -> Result<Vec<f32>> {
    Ok(src.tensor(name, Shape::new(c, 1, 1, 1))?.into_data())
}

pub(crate) fn join(prefix: &str, part: &str) -> String {
    if prefix.is_empty() {
        part.to_string()
    } else {
        format!("{prefix}.{part}")
    }
}

/// One convolution inside a block, for cost accounting.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvSite {
    pub name: String,
    pub params: ConvParams,
    pub in_h: usize,
    pub in_w: usize,
    /// Forward evaluations per block forward (shared MLPs run more than once).
    pub calls: u64,
}

impl ConvSite {
    pub fn new(name: impl Into<String>, params: ConvParams, in_h: usize, in_w: usize) -> Self {
        Self {
            name: name.into(),
            params,
            in_h,
            in_w,
            calls: 1,
        }
    }

    pub fn out_hw(&self) -> (usize, usize) {
        self.params
            .output_hw(self.in_h, self.in_w)
            .expect("conv sites are produced from validated configs")
    }

    pub fn weight_count(&self) -> u64 {
        self.params.weight_shape().len() as u64
    }

    pub fn macs(&self) -> u64 {
        let (oh, ow) = self.out_hw();
        self.params.macs_per_pixel() * (oh * ow) as u64 * self.calls
    }
}

/// Bare convolution with optional bias.
#[derive(Clone, Debug)]
pub struct Conv {
    pub params: ConvParams,
    pub weight: Tensor,
    pub bias: Option<Vec<f32>>,
}

impl Conv {
    pub fn build(params: ConvParams, prefix: &str, src: &mut dyn ParamSource) -> Result<Self> {
        params.validate()?;
        let weight = src.tensor(&join(prefix, "weight"), params.weight_shape())?;
        let bias = if params.has_bias {
            Some(vector(src, &join(prefix, "bias"), params.out_c)?)
        } else {
            None
        };
        Ok(Self { params, weight, bias })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        conv2d_im2col(x, &self.weight, self.bias.as_deref(), &self.params)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvBnActConfig {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub groups: usize,
    pub act: Option<ActivationKind>,
}

impl ConvBnActConfig {
    pub fn new(in_c: usize, out_c: usize, k: usize, stride: usize) -> Self {
        Self {
            in_c,
            out_c,
            k,
            stride,
            groups: 1,
            act: Some(ActivationKind::default()),
        }
    }

    pub fn depthwise(c: usize, k: usize, stride: usize) -> Self {
        Self {
            groups: c,
            ..Self::new(c, c, k, stride)
        }
    }

    pub fn act(mut self, act: Option<ActivationKind>) -> Self {
        self.act = act;
        self
    }

    pub fn conv_params(&self) -> ConvParams {
        ConvParams::new(self.in_c, self.out_c, self.k, self.stride).with_groups(self.groups)
    }

    pub fn validate(&self) -> Result<()> {
        self.conv_params().validate()
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        check_channels("conv", self.in_c, input)?;
        let (h, w) = self.conv_params().output_hw(input.h, input.w)?;
        Ok(Shape::new(input.n, self.out_c, h, w))
    }

    pub fn conv_sites(&self, prefix: &str, h: usize, w: usize) -> Vec<ConvSite> {
        vec![ConvSite::new(prefix, self.conv_params(), h, w)]
    }

    pub fn build(&self, prefix: &str, src: &mut dyn ParamSource) -> Result<ConvBnAct> {
        let conv = Conv::build(self.conv_params(), prefix, src)?;
        let c = self.out_c;
        let bn = BatchNorm {
            mean: vector(src, &join(prefix, "bn.mean"), c)?,
            var: vector(src, &join(prefix, "bn.var"), c)?,
            gamma: vector(src, &join(prefix, "bn.gamma"), c)?,
            beta: vector(src, &join(prefix, "bn.beta"), c)?,
            eps: BatchNorm::EPS,
        };
        Ok(ConvBnAct {
            conv,
            bn,
            act: self.act,
        })
    }
}

/// Convolution (no bias), inference batch norm, optional activation.
#[derive(Clone, Debug)]
pub struct ConvBnAct {
    pub conv: Conv,
    pub bn: BatchNorm,
    pub act: Option<ActivationKind>,
}

impl ConvBnAct {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = batch_norm_inference(&self.conv.forward(x)?, &self.bn)?;
        Ok(match self.act {
            Some(kind) => activate(kind, &y),
            None => y,
        })
    }
}

/// Depthwise `k_dw`×`k_dw` stage followed by a 1×1 pointwise stage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DscConfig {
    pub in_c: usize,
    pub out_c: usize,
    pub k_dw: usize,
    pub stride: usize,
    pub act: Option<ActivationKind>,
}

impl DscConfig {
    pub fn new(in_c: usize, out_c: usize, k_dw: usize, stride: usize) -> Self {
        Self {
            in_c,
            out_c,
            k_dw,
            stride,
            act: Some(ActivationKind::default()),
        }
    }

    fn depthwise(&self) -> ConvBnActConfig {
        ConvBnActConfig::depthwise(self.in_c, self.k_dw, self.stride).act(self.act)
    }

    fn pointwise(&self) -> ConvBnActConfig {
        ConvBnActConfig::new(self.in_c, self.out_c, 1, 1).act(self.act)
    }

    pub fn validate(&self) -> Result<()> {
        self.depthwise().validate()?;
        self.pointwise().validate()
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        self.pointwise().output_shape(self.depthwise().output_shape(input)?)
    }

    pub fn conv_sites(&self, prefix: &str, h: usize, w: usize) -> Vec<ConvSite> {
        let (dh, dw) = self.depthwise().conv_params().output_hw(h, w).unwrap_or((h, w));
        let mut sites = self.depthwise().conv_sites(&join(prefix, "dw"), h, w);
        sites.extend(self.pointwise().conv_sites(&join(prefix, "pw"), dh, dw));
        sites
    }

    pub fn build(&self, prefix: &str, src: &mut dyn ParamSource) -> Result<Dsc> {
        self.validate()?;
        Ok(Dsc {
            depthwise: self.depthwise().build(&join(prefix, "dw"), src)?,
            pointwise: self.pointwise().build(&join(prefix, "pw"), src)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Dsc {
    pub depthwise: ConvBnAct,
    pub pointwise: ConvBnAct,
}

impl Dsc {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.pointwise.forward(&self.depthwise.forward(x)?)
    }
}

pub(crate) fn check_channels(block: &str, expected: usize, input: Shape) -> Result<()> {
    if input.c != expected {
        return Err(Error::shape(format!("{block} input channels"), expected, input.c));
    }
    Ok(())
}

/// Any block, by configuration.
#[derive(Clone, Debug, PartialEq)]
pub enum BlockConfig {
    ConvBnAct(ConvBnActConfig),
    Dsc(DscConfig),
    GsConv(GsConvConfig),
    GsBottleneck(GsBottleneckConfig),
    VovGscsp(VovGscspConfig),
    Csp(CspConfig),
    Spp(SppConfig),
    Sppf(SppfConfig),
    Se(SeConfig),
    Cbam(CbamConfig),
    Ca(CaConfig),
}

/// Any block, built with weights.
#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Block {
    ConvBnAct(ConvBnAct),
    Dsc(Dsc),
    GsConv(GsConv),
    GsBottleneck(GsBottleneck),
    VovGscsp(VovGscsp),
    Csp(Csp),
    Spp(Spp),
    Sppf(Sppf),
    Se(Se),
    Cbam(Cbam),
    Ca(Ca),
}

impl BlockConfig {
    pub fn kind_name(&self) -> &'static str {
        match self {
            BlockConfig::ConvBnAct(_) => "conv",
            BlockConfig::Dsc(_) => "dsc",
            BlockConfig::GsConv(_) => "gsconv",
            BlockConfig::GsBottleneck(_) => "gs_bottleneck",
            BlockConfig::VovGscsp(_) => "vov_gscsp",
            BlockConfig::Csp(_) => "csp",
            BlockConfig::Spp(_) => "spp",
            BlockConfig::Sppf(_) => "sppf",
            BlockConfig::Se(_) => "se",
            BlockConfig::Cbam(_) => "cbam",
            BlockConfig::Ca(_) => "ca",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BlockConfig::ConvBnAct(c) => c.validate(),
            BlockConfig::Dsc(c) => c.validate(),
            BlockConfig::GsConv(c) => c.validate(),
            BlockConfig::GsBottleneck(c) => c.validate(),
            BlockConfig::VovGscsp(c) => c.validate(),
            BlockConfig::Csp(c) => c.validate(),
            BlockConfig::Spp(c) => c.validate(),
            BlockConfig::Sppf(c) => c.validate(),
            BlockConfig::Se(c) => c.validate(),
            BlockConfig::Cbam(c) => c.validate(),
            BlockConfig::Ca(c) => c.validate(),
        }
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        self.validate()?;
        match self {
            BlockConfig::ConvBnAct(c) => c.output_shape(input),
            BlockConfig::Dsc(c) => c.output_shape(input),
            BlockConfig::GsConv(c) => c.output_shape(input),
            BlockConfig::GsBottleneck(c) => c.output_shape(input),
            BlockConfig::VovGscsp(c) => c.output_shape(input),
            BlockConfig::Csp(c) => c.output_shape(input),
            BlockConfig::Spp(c) => c.output_shape(input),
            BlockConfig::Sppf(c) => c.output_shape(input),
            BlockConfig::Se(c) => c.output_shape(input),
            BlockConfig::Cbam(c) => c.output_shape(input),
            BlockConfig::Ca(c) => c.output_shape(input),
        }
    }

    /// Every convolution evaluated by one forward pass at input size `h`×`w`.
    pub fn conv_sites(&self, prefix: &str, h: usize, w: usize) -> Vec<ConvSite> {
        match self {
            BlockConfig::ConvBnAct(c) => c.conv_sites(prefix, h, w),
            BlockConfig::Dsc(c) => c.conv_sites(prefix, h, w),
            BlockConfig::GsConv(c) => c.conv_sites(prefix, h, w),
            BlockConfig::GsBottleneck(c) => c.conv_sites(prefix, h, w),
            BlockConfig::VovGscsp(c) => c.conv_sites(prefix, h, w),
            BlockConfig::Csp(c) => c.conv_sites(prefix, h, w),
            BlockConfig::Spp(_) | BlockConfig::Sppf(_) => Vec::new(),
            BlockConfig::Se(c) => c.conv_sites(prefix),
            BlockConfig::Cbam(c) => c.conv_sites(prefix, h, w),
            BlockConfig::Ca(c) => c.conv_sites(prefix, h, w),
        }
    }

    pub fn build(&self, prefix: &str, src: &mut dyn ParamSource) -> Result<Block> {
        self.validate()?;
        Ok(match self {
            BlockConfig::ConvBnAct(c) => Block::ConvBnAct(c.build(prefix, src)?),
            BlockConfig::Dsc(c) => Block::Dsc(c.build(prefix, src)?),
            BlockConfig::GsConv(c) => Block::GsConv(c.build(prefix, src)?),
            BlockConfig::GsBottleneck(c) => Block::GsBottleneck(c.build(prefix, src)?),
            BlockConfig::VovGscsp(c) => Block::VovGscsp(c.build(prefix, src)?),
            BlockConfig::Csp(c) => Block::Csp(c.build(prefix, src)?),
            BlockConfig::Spp(c) => Block::Spp(c.build()),
            BlockConfig::Sppf(c) => Block::Sppf(c.build()),
            BlockConfig::Se(c) => Block::Se(c.build(prefix, src)?),
            BlockConfig::Cbam(c) => Block::Cbam(c.build(prefix, src)?),
            BlockConfig::Ca(c) => Block::Ca(c.build(prefix, src)?),
        })
    }
}

impl Block {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Block::ConvBnAct(b) => b.forward(x),
            Block::Dsc(b) => b.forward(x),
            Block::GsConv(b) => b.forward(x),
            Block::GsBottleneck(b) => b.forward(x),
            Block::VovGscsp(b) => b.forward(x),
            Block::Csp(b) => b.forward(x),
            Block::Spp(b) => b.forward(x),
            Block::Sppf(b) => b.forward(x),
            Block::Se(b) => b.forward(x),
            Block::Cbam(b) => b.forward(x),
            Block::Ca(b) => b.forward(x),
        }
    }
}

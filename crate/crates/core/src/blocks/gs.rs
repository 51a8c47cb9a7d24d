//! GSConv and the blocks built on it, plus the standard-convolution CSP block
//! used as a cost baseline.

use super::{check_channels, join, ConvBnAct, ConvBnActConfig, ConvSite, ParamSource};
use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::tensor::{add, channel_shuffle, concat_channels, Shape, Tensor};

/// Half the output channels from a dense conv, the other half from a
/// depthwise conv over that result; concatenated and shuffled with 2 groups.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GsConvConfig {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub k_dw: usize,
    pub act: Option<ActivationKind>,
}

impl GsConvConfig {
    pub const DEFAULT_K_DW: usize = 5;

    pub fn new(in_c: usize, out_c: usize, k: usize, stride: usize) -> Self {
        Self {
            in_c,
            out_c,
            k,
            stride,
            k_dw: Self::DEFAULT_K_DW,
            act: Some(ActivationKind::default()),
        }
    }

    pub fn k_dw(mut self, k_dw: usize) -> Self {
        self.k_dw = k_dw;
        self
    }

    pub fn act(mut self, act: Option<ActivationKind>) -> Self {
        self.act = act;
        self
    }

    pub fn half(&self) -> usize {
        self.out_c / 2
    }

    fn sc(&self) -> ConvBnActConfig {
        ConvBnActConfig::new(self.in_c, self.half(), self.k, self.stride).act(self.act)
    }

    fn dw(&self) -> ConvBnActConfig {
        ConvBnActConfig::depthwise(self.half(), self.k_dw, 1).act(self.act)
    }

    pub fn validate(&self) -> Result<()> {
        if self.out_c == 0 || !self.out_c.is_multiple_of(2) {
            return Err(Error::Invalid(format!("gsconv out_c must be even, got {}", self.out_c)));
        }
        self.sc().validate()?;
        self.dw().validate()
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let s = self.sc().output_shape(input)?;
        Ok(Shape::new(s.n, self.out_c, s.h, s.w))
    }

    pub fn conv_sites(&self, prefix: &str, h: usize, w: usize) -> Vec<ConvSite> {
        let (oh, ow) = self.sc().conv_params().output_hw(h, w).unwrap_or((h, w));
        let mut sites = self.sc().conv_sites(&join(prefix, "sc"), h, w);
        sites.extend(self.dw().conv_sites(&join(prefix, "dw"), oh, ow));
        sites
    }

    pub fn build(&self, prefix: &str, src: &mut dyn ParamSource) -> Result<GsConv> {
        self.validate()?;
        Ok(GsConv {
            config: *self,
            sc: self.sc().build(&join(prefix, "sc"), src)?,
            dw: self.dw().build(&join(prefix, "dw"), src)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct GsConv {
    pub config: GsConvConfig,
    pub sc: ConvBnAct,
    pub dw: ConvBnAct,
}

impl GsConv {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        check_channels("gsconv", self.config.in_c, x.shape())?;
        let dense = self.sc.forward(x)?;
        let depthwise = self.dw.forward(&dense)?;
        channel_shuffle(&concat_channels(&[&dense, &depthwise])?, 2)
    }
}

/// Two stacked GSConvs (1×1 then 3×3) plus a non-activated 1×1 conv shortcut.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GsBottleneckConfig {
    pub in_c: usize,
    pub out_c: usize,
    pub k_dw: usize,
    pub act: Option<ActivationKind>,
    /// Whether the second GSConv applies the activation.
    pub second_act: bool,
}

impl GsBottleneckConfig {
    pub fn new(in_c: usize, out_c: usize) -> Self {
        Self {
            in_c,
            out_c,
            k_dw: GsConvConfig::DEFAULT_K_DW,
            act: Some(ActivationKind::default()),
            second_act: true,
        }
    }

    pub fn act(mut self, act: Option<ActivationKind>) -> Self {
        self.act = act;
        self
    }

    pub fn hidden(&self) -> usize {
        self.out_c / 2
    }

    fn first(&self) -> GsConvConfig {
        GsConvConfig::new(self.in_c, self.hidden(), 1, 1)
            .k_dw(self.k_dw)
            .act(self.act)
    }

    fn second(&self) -> GsConvConfig {
        let act = if self.second_act { self.act } else { None };
        GsConvConfig::new(self.hidden(), self.out_c, 3, 1)
            .k_dw(self.k_dw)
            .act(act)
    }

    fn shortcut(&self) -> ConvBnActConfig {
        ConvBnActConfig::new(self.in_c, self.out_c, 1, 1).act(None)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.out_c.is_multiple_of(4) {
            return Err(Error::Invalid(format!(
                "gs_bottleneck out_c must be a multiple of 4, got {}",
                self.out_c
            )));
        }
        self.first().validate()?;
        self.second().validate()?;
        self.shortcut().validate()
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        check_channels("gs_bottleneck", self.in_c, input)?;
        Ok(Shape::new(input.n, self.out_c, input.h, input.w))
    }

    pub fn conv_sites(&self, prefix: &str, h: usize, w: usize) -> Vec<ConvSite> {
        let mut sites = self.first().conv_sites(&join(prefix, "g1"), h, w);
        sites.extend(self.second().conv_sites(&join(prefix, "g2"), h, w));
        sites.extend(self.shortcut().conv_sites(&join(prefix, "shortcut"), h, w));
        sites
    }

    pub fn build(&self, prefix: &str, src: &mut dyn ParamSource) -> Result<GsBottleneck> {
        self.validate()?;
        Ok(GsBottleneck {
            config: *self,
            first: self.first().build(&join(prefix, "g1"), src)?,
            second: self.second().build(&join(prefix, "g2"), src)?,
            shortcut: self.shortcut().build(&join(prefix, "shortcut"), src)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct GsBottleneck {
    pub config: GsBottleneckConfig,
    pub first: GsConv,
    pub second: GsConv,
    pub shortcut: ConvBnAct,
}

impl GsBottleneck {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let main = self.second.forward(&self.first.forward(x)?)?;
        add(&main, &self.shortcut.forward(x)?)
    }
}

/// Standard residual bottleneck: 1×1 conv, 3×3 conv, identity add.
#[derive(Clone, Debug)]
pub struct Bottleneck {
    pub cv1: ConvBnAct,
    pub cv2: ConvBnAct,
}

impl Bottleneck {
    fn configs(c: usize, act: Option<ActivationKind>) -> (ConvBnActConfig, ConvBnActConfig) {
        (
            ConvBnActConfig::new(c, c, 1, 1).act(act),
            ConvBnActConfig::new(c, c, 3, 1).act(act),
        )
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        add(x, &self.cv2.forward(&self.cv1.forward(x)?)?)
    }
}

/// Shared split/fuse skeleton of the two cross-stage-partial blocks.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Partial {
    in_c: usize,
    out_c: usize,
    act: Option<ActivationKind>,
}

impl Partial {
    fn hidden(&self) -> usize {
        self.out_c / 2
    }

    fn branch_a(&self) -> ConvBnActConfig {
        ConvBnActConfig::new(self.in_c, self.hidden(), 1, 1).act(self.act)
    }

    fn branch_b(&self) -> ConvBnActConfig {
        ConvBnActConfig::new(self.in_c, self.hidden(), 1, 1).act(self.act)
    }

    fn fuse(&self) -> ConvBnActConfig {
        ConvBnActConfig::new(2 * self.hidden(), self.out_c, 1, 1).act(self.act)
    }

    fn validate(&self, name: &str, multiple: usize) -> Result<()> {
        if self.out_c == 0 || !self.out_c.is_multiple_of(multiple) {
            return Err(Error::Invalid(format!(
                "{name} out_c must be a positive multiple of {multiple}, got {}",
                self.out_c
            )));
        }
        self.branch_a().validate()?;
        self.fuse().validate()
    }

    fn output_shape(&self, name: &str, input: Shape) -> Result<Shape> {
        check_channels(name, self.in_c, input)?;
        Ok(Shape::new(input.n, self.out_c, input.h, input.w))
    }

    fn sites(&self, prefix: &str, h: usize, w: usize, chain: Vec<ConvSite>) -> Vec<ConvSite> {
        let mut sites = self.branch_a().conv_sites(&join(prefix, "cv1"), h, w);
        sites.extend(chain);
        sites.extend(self.branch_b().conv_sites(&join(prefix, "cv2"), h, w));
        sites.extend(self.fuse().conv_sites(&join(prefix, "cv3"), h, w));
        sites
    }

    fn forward<F>(&self, cv1: &ConvBnAct, cv2: &ConvBnAct, cv3: &ConvBnAct, x: &Tensor, chain: F) -> Result<Tensor>
    where
        F: FnOnce(Tensor) -> Result<Tensor>,
    {
        let a = chain(cv1.forward(x)?)?;
        let b = cv2.forward(x)?;
        cv3.forward(&concat_channels(&[&a, &b])?)
    }
}

/// Cross-stage-partial block whose transform branch is a chain of GS
/// bottlenecks, fused with a single concatenation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VovGscspConfig {
    pub in_c: usize,
    pub out_c: usize,
    pub n: usize,
    pub k_dw: usize,
    pub act: Option<ActivationKind>,
}

impl VovGscspConfig {
    pub fn new(in_c: usize, out_c: usize, n: usize) -> Self {
        Self {
            in_c,
            out_c,
            n,
            k_dw: GsConvConfig::DEFAULT_K_DW,
            act: Some(ActivationKind::default()),
        }
    }

    fn partial(&self) -> Partial {
        Partial {
            in_c: self.in_c,
            out_c: self.out_c,
            act: self.act,
        }
    }

    fn bottleneck(&self) -> GsBottleneckConfig {
        let h = self.partial().hidden();
        GsBottleneckConfig {
            k_dw: self.k_dw,
            ..GsBottleneckConfig::new(h, h).act(self.act)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.partial().validate("vov_gscsp", 8)?;
        self.bottleneck().validate()
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        self.partial().output_shape("vov_gscsp", input)
    }

    pub fn conv_sites(&self, prefix: &str, h: usize, w: usize) -> Vec<ConvSite> {
        let chain = (0..self.n)
            .flat_map(|i| self.bottleneck().conv_sites(&join(prefix, &format!("m{i}")), h, w))
            .collect();
        self.partial().sites(prefix, h, w, chain)
    }

    pub fn build(&self, prefix: &str, src: &mut dyn ParamSource) -> Result<VovGscsp> {
        self.validate()?;
        let p = self.partial();
        let cv1 = p.branch_a().build(&join(prefix, "cv1"), src)?;
        let chain = (0..self.n)
            .map(|i| self.bottleneck().build(&join(prefix, &format!("m{i}")), src))
            .collect::<Result<_>>()?;
        Ok(VovGscsp {
            config: *self,
            cv1,
            chain,
            cv2: p.branch_b().build(&join(prefix, "cv2"), src)?,
            cv3: p.fuse().build(&join(prefix, "cv3"), src)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct VovGscsp {
    pub config: VovGscspConfig,
    pub cv1: ConvBnAct,
    pub chain: Vec<GsBottleneck>,
    pub cv2: ConvBnAct,
    pub cv3: ConvBnAct,
}

impl VovGscsp {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        check_channels("vov_gscsp", self.config.in_c, x.shape())?;
        self.config
            .partial()
            .forward(&self.cv1, &self.cv2, &self.cv3, x, |mut t| {
                for b in &self.chain {
                    t = b.forward(&t)?;
                }
                Ok(t)
            })
    }
}

/// Standard-convolution cross-stage-partial block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CspConfig {
    pub in_c: usize,
    pub out_c: usize,
    pub n: usize,
    pub act: Option<ActivationKind>,
}

impl CspConfig {
    pub fn new(in_c: usize, out_c: usize, n: usize) -> Self {
        Self {
            in_c,
            out_c,
            n,
            act: Some(ActivationKind::default()),
        }
    }

    fn partial(&self) -> Partial {
        Partial {
            in_c: self.in_c,
            out_c: self.out_c,
            act: self.act,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.partial().validate("csp", 2)
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        self.partial().output_shape("csp", input)
    }

    pub fn conv_sites(&self, prefix: &str, h: usize, w: usize) -> Vec<ConvSite> {
        let (c1, c2) = Bottleneck::configs(self.partial().hidden(), self.act);
        let chain = (0..self.n)
            .flat_map(|i| {
                let p = join(prefix, &format!("m{i}"));
                let mut s = c1.conv_sites(&join(&p, "cv1"), h, w);
                s.extend(c2.conv_sites(&join(&p, "cv2"), h, w));
                s
            })
            .collect();
        self.partial().sites(prefix, h, w, chain)
    }

    pub fn build(&self, prefix: &str, src: &mut dyn ParamSource) -> Result<Csp> {
        self.validate()?;
        let p = self.partial();
        let (c1, c2) = Bottleneck::configs(p.hidden(), self.act);
        let cv1 = p.branch_a().build(&join(prefix, "cv1"), src)?;
        let chain = (0..self.n)
            .map(|i| {
                let m = join(prefix, &format!("m{i}"));
                Ok(Bottleneck {
                    cv1: c1.build(&join(&m, "cv1"), src)?,
                    cv2: c2.build(&join(&m, "cv2"), src)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Csp {
            config: *self,
            cv1,
            chain,
            cv2: p.branch_b().build(&join(prefix, "cv2"), src)?,
            cv3: p.fuse().build(&join(prefix, "cv3"), src)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Csp {
    pub config: CspConfig,
    pub cv1: ConvBnAct,
    pub chain: Vec<Bottleneck>,
    pub cv2: ConvBnAct,
    pub cv3: ConvBnAct,
}

impl Csp {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        check_channels("csp", self.config.in_c, x.shape())?;
        self.config
            .partial()
            .forward(&self.cv1, &self.cv2, &self.cv3, x, |mut t| {
                for b in &self.chain {
                    t = b.forward(&t)?;
                }
                Ok(t)
            })
    }
}

//! Declarative networks assembled from blocks.
//!
//! A `.spec` file is line oriented:
//!
//! ```text
//! # comment
//! input 1 3 64 64
//! layer conv name=c1 in=input out_c=8 k=3 s=2
//! layer gsconv name=g1 in=c1 out_c=16 k=3 k_dw=5 act=mish
//! layer concat name=cat in=c1,g1
//! output cat
//! ```
//!
//! Layers may only reference `input` or layers declared above them, so every
//! graph is acyclic by construction.

mod dump;
mod exec;
mod parse;
mod weights;

use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

pub use dump::{dump_feature_maps, write_pgm};
pub use exec::{forward, random_input, ForwardResult, Network};
pub use parse::parse_spec;
pub use weights::{init_weights, load_weights, read_weights, save_weights, write_weights, WeightStore, WEIGHTS_MAGIC};

use crate::activation::ActivationKind;
use crate::blocks::{
    BlockConfig, CaConfig, CbamConfig, ConvBnActConfig, CspConfig, GsBottleneckConfig, GsConvConfig, SeConfig,
    SppConfig, SppfConfig, VovGscspConfig,
};
use crate::error::{Error, Result};
use crate::tensor::Shape;

pub const INPUT_NAME: &str = "input";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv,
    GsConv,
    GsBottleneck,
    VovGscsp,
    Csp,
    Spp,
    Sppf,
    Se,
    Cbam,
    Ca,
    Concat,
    Add,
    UpsampleNearest2x,
}

impl LayerKind {
    pub const ALL: [LayerKind; 13] = [
        LayerKind::Conv,
        LayerKind::GsConv,
        LayerKind::GsBottleneck,
        LayerKind::VovGscsp,
        LayerKind::Csp,
        LayerKind::Spp,
        LayerKind::Sppf,
        LayerKind::Se,
        LayerKind::Cbam,
        LayerKind::Ca,
        LayerKind::Concat,
        LayerKind::Add,
        LayerKind::UpsampleNearest2x,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::GsConv => "gsconv",
            LayerKind::GsBottleneck => "gs_bottleneck",
            LayerKind::VovGscsp => "vov_gscsp",
            LayerKind::Csp => "csp",
            LayerKind::Spp => "spp",
            LayerKind::Sppf => "sppf",
            LayerKind::Se => "se",
            LayerKind::Cbam => "cbam",
            LayerKind::Ca => "ca",
            LayerKind::Concat => "concat",
            LayerKind::Add => "add",
            LayerKind::UpsampleNearest2x => "upsample_nearest2x",
        }
    }

    /// Attribute keys the kind accepts.
    pub fn allowed_attrs(&self) -> &'static [&'static str] {
        match self {
            LayerKind::Conv => &["out_c", "k", "s", "act"],
            LayerKind::GsConv => &["out_c", "k", "s", "k_dw", "act"],
            LayerKind::GsBottleneck => &["out_c", "k_dw", "act"],
            LayerKind::VovGscsp => &["out_c", "n", "k_dw", "act"],
            LayerKind::Csp => &["out_c", "n", "act"],
            LayerKind::Se | LayerKind::Cbam | LayerKind::Ca => &["r"],
            LayerKind::Spp | LayerKind::Sppf | LayerKind::Concat | LayerKind::Add | LayerKind::UpsampleNearest2x => &[],
        }
    }

    /// Accepted input counts (min, max).
    fn arity(&self) -> (usize, usize) {
        match self {
            LayerKind::Concat => (1, usize::MAX),
            LayerKind::Add => (2, 2),
            _ => (1, 1),
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LayerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LayerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown layer kind `{s}`")))
    }
}

/// Typed layer attributes; `None` means "use the kind's default".
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Attrs {
    pub out_c: Option<usize>,
    pub k: Option<usize>,
    pub s: Option<usize>,
    pub k_dw: Option<usize>,
    pub n: Option<usize>,
    pub r: Option<usize>,
    /// `Some(None)` is an explicit `act=none`.
    pub act: Option<Option<ActivationKind>>,
}

impl Attrs {
    pub const KEYS: [&'static str; 7] = ["out_c", "k", "s", "k_dw", "n", "r", "act"];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let int = || -> Result<usize> {
            value.parse::<usize>().map_err(|_| {
                Error::Invalid(format!(
                    "attribute `{key}` expects a non-negative integer, got `{value}`"
                ))
            })
        };
        match key {
            "out_c" => self.out_c = Some(int()?),
            "k" => self.k = Some(int()?),
            "s" => self.s = Some(int()?),
            "k_dw" => self.k_dw = Some(int()?),
            "n" => self.n = Some(int()?),
            "r" => self.r = Some(int()?),
            "act" => {
                self.act = Some(if value == "none" {
                    None
                } else {
                    Some(value.parse::<ActivationKind>()?)
                })
            }
            _ => return Err(Error::Invalid(format!("unknown attribute `{key}`"))),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Option<String> {
        let int = |v: Option<usize>| v.map(|v| v.to_string());
        match key {
            "out_c" => int(self.out_c),
            "k" => int(self.k),
            "s" => int(self.s),
            "k_dw" => int(self.k_dw),
            "n" => int(self.n),
            "r" => int(self.r),
            "act" => self
                .act
                .map(|a| a.map_or_else(|| "none".to_string(), |a| a.to_string())),
            _ => None,
        }
    }

    fn present(&self) -> impl Iterator<Item = (&'static str, String)> + '_ {
        Self::KEYS.into_iter().filter_map(|k| self.get(k).map(|v| (k, v)))
    }

    fn act_or_default(&self) -> Option<ActivationKind> {
        self.act.unwrap_or(Some(ActivationKind::default()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub inputs: Vec<String>,
    pub attrs: Attrs,
}

/// What a layer computes once input shapes are known.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Block(BlockConfig),
    Concat,
    Add,
    UpsampleNearest2x,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedLayer {
    pub op: Op,
    pub in_shapes: Vec<Shape>,
    pub out_shape: Shape,
}

/// A validated graph: names unique, references backward only, shapes
/// propagated end to end, declared outputs present.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphSpec {
    input: Shape,
    layers: Vec<LayerSpec>,
    outputs: Vec<String>,
    resolved: Vec<ResolvedLayer>,
}

fn resolve_op(spec: &LayerSpec, in_shapes: &[Shape]) -> Result<Op> {
    let a = &spec.attrs;
    let in_c = in_shapes[0].c;
    let need_out = || {
        a.out_c
            .ok_or_else(|| Error::Invalid(format!("`{}` requires out_c", spec.kind)))
    };
    let out_or_in = a.out_c.unwrap_or(in_c);
    let act = a.act_or_default();
    let block = match spec.kind {
        LayerKind::Conv => {
            BlockConfig::ConvBnAct(ConvBnActConfig::new(in_c, need_out()?, a.k.unwrap_or(1), a.s.unwrap_or(1)).act(act))
        }
        LayerKind::GsConv => BlockConfig::GsConv(
            GsConvConfig::new(in_c, need_out()?, a.k.unwrap_or(1), a.s.unwrap_or(1))
                .k_dw(a.k_dw.unwrap_or(GsConvConfig::DEFAULT_K_DW))
                .act(act),
        ),
        LayerKind::GsBottleneck => BlockConfig::GsBottleneck(GsBottleneckConfig {
            k_dw: a.k_dw.unwrap_or(GsConvConfig::DEFAULT_K_DW),
            ..GsBottleneckConfig::new(in_c, out_or_in).act(act)
        }),
        LayerKind::VovGscsp => BlockConfig::VovGscsp(VovGscspConfig {
            k_dw: a.k_dw.unwrap_or(GsConvConfig::DEFAULT_K_DW),
            act,
            ..VovGscspConfig::new(in_c, out_or_in, a.n.unwrap_or(1))
        }),
        LayerKind::Csp => BlockConfig::Csp(CspConfig {
            act,
            ..CspConfig::new(in_c, out_or_in, a.n.unwrap_or(1))
        }),
        LayerKind::Spp => BlockConfig::Spp(SppConfig::default()),
        LayerKind::Sppf => BlockConfig::Sppf(SppfConfig::default()),
        LayerKind::Se => BlockConfig::Se(SeConfig {
            c: in_c,
            r: a.r.unwrap_or(SeConfig::DEFAULT_R),
        }),
        LayerKind::Cbam => BlockConfig::Cbam(CbamConfig {
            r: a.r.unwrap_or(CbamConfig::DEFAULT_R),
            ..CbamConfig::new(in_c)
        }),
        LayerKind::Ca => BlockConfig::Ca(CaConfig {
            c: in_c,
            r: a.r.unwrap_or(CaConfig::DEFAULT_R),
        }),
        LayerKind::Concat => return Ok(Op::Concat),
        LayerKind::Add => return Ok(Op::Add),
        LayerKind::UpsampleNearest2x => return Ok(Op::UpsampleNearest2x),
    };
    Ok(Op::Block(block))
}

fn output_shape(op: &Op, in_shapes: &[Shape]) -> Result<Shape> {
    match op {
        Op::Block(b) => b.output_shape(in_shapes[0]),
        Op::Concat => {
            let first = in_shapes[0];
            if in_shapes.iter().any(|s| (s.n, s.h, s.w) != (first.n, first.h, first.w)) {
                return Err(Error::Invalid(format!(
                    "concat inputs disagree on spatial size: {in_shapes:?}"
                )));
            }
            Ok(Shape::new(
                first.n,
                in_shapes.iter().map(|s| s.c).sum(),
                first.h,
                first.w,
            ))
        }
        Op::Add => {
            if in_shapes[0] != in_shapes[1] {
                return Err(Error::Invalid(format!(
                    "add inputs differ: {} vs {}",
                    in_shapes[0], in_shapes[1]
                )));
            }
            Ok(in_shapes[0])
        }
        Op::UpsampleNearest2x => {
            let s = in_shapes[0];
            Ok(Shape::new(s.n, s.c, s.h * 2, s.w * 2))
        }
    }
}

impl GraphSpec {
    /// Validates the layer list and propagates shapes.
    pub fn new(input: Shape, layers: Vec<LayerSpec>, outputs: Vec<String>) -> Result<Self> {
        if input.is_empty() {
            return Err(Error::Validation {
                layer: INPUT_NAME.into(),
                reason: format!("input shape {input} has a zero dimension"),
            });
        }
        let mut shapes: HashMap<&str, Shape> = HashMap::from([(INPUT_NAME, input)]);
        let mut resolved = Vec::with_capacity(layers.len());
        for spec in &layers {
            let fail = |reason: String| Error::Validation {
                layer: spec.name.clone(),
                reason,
            };
            if shapes.contains_key(spec.name.as_str()) {
                return Err(fail("duplicate layer name".into()));
            }
            let (lo, hi) = spec.kind.arity();
            if spec.inputs.len() < lo || spec.inputs.len() > hi {
                return Err(fail(format!(
                    "`{}` takes {lo}..={hi} inputs, got {}",
                    spec.kind,
                    spec.inputs.len()
                )));
            }
            for key in Attrs::KEYS {
                if spec.attrs.get(key).is_some() && !spec.kind.allowed_attrs().contains(&key) {
                    return Err(fail(format!("`{}` does not accept attribute `{key}`", spec.kind)));
                }
            }
            let in_shapes = spec
                .inputs
                .iter()
                .map(|i| {
                    shapes
                        .get(i.as_str())
                        .copied()
                        .ok_or_else(|| fail(format!("references undeclared layer `{i}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            let op = resolve_op(spec, &in_shapes).map_err(|e| fail(e.to_string()))?;
            let out_shape = output_shape(&op, &in_shapes).map_err(|e| fail(e.to_string()))?;
            shapes.insert(&spec.name, out_shape);
            resolved.push(ResolvedLayer {
                op,
                in_shapes,
                out_shape,
            });
        }
        if outputs.is_empty() {
            return Err(Error::Validation {
                layer: INPUT_NAME.into(),
                reason: "graph declares no outputs".into(),
            });
        }
        for o in &outputs {
            if !shapes.contains_key(o.as_str()) {
                return Err(Error::Validation {
                    layer: o.clone(),
                    reason: "declared output does not exist".into(),
                });
            }
        }
        Ok(Self {
            input,
            layers,
            outputs,
            resolved,
        })
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn resolved(&self) -> &[ResolvedLayer] {
        &self.resolved
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    /// Output shape of `input` or any layer.
    pub fn shape_of(&self, name: &str) -> Option<Shape> {
        if name == INPUT_NAME {
            return Some(self.input);
        }
        self.layer_index(name).map(|i| self.resolved[i].out_shape)
    }

    /// Same graph with a different batch size.
    pub fn with_batch(&self, n: usize) -> Result<Self> {
        let s = self.input;
        Self::new(Shape::new(n, s.c, s.h, s.w), self.layers.clone(), self.outputs.clone())
    }

    /// Same graph with a different input shape.
    pub fn with_input(&self, input: Shape) -> Result<Self> {
        Self::new(input, self.layers.clone(), self.outputs.clone())
    }

    /// Canonical text form; parsing it yields an equal graph.
    pub fn serialize(&self) -> String {
        let s = self.input;
        let mut out = format!("input {} {} {} {}\n", s.n, s.c, s.h, s.w);
        for l in &self.layers {
            let _ = write!(out, "layer {} name={} in={}", l.kind, l.name, l.inputs.join(","));
            for (k, v) in l.attrs.present() {
                let _ = write!(out, " {k}={v}");
            }
            out.push('\n');
        }
        let _ = writeln!(out, "output {}", self.outputs.join(" "));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolves_defaults() {
        let g = parse_spec(
            "input 1 16 8 8\n\
             layer vov_gscsp name=v in=input\n\
             layer ca name=a in=v r=4\n\
             output a\n",
        )
        .unwrap();
        match &g.resolved()[0].op {
            Op::Block(BlockConfig::VovGscsp(c)) => {
                assert_eq!((c.in_c, c.out_c, c.n, c.k_dw), (16, 16, 1, 5));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(g.shape_of("a"), Some(Shape::new(1, 16, 8, 8)));
        assert_eq!(g.shape_of("input"), Some(Shape::new(1, 16, 8, 8)));
        assert_eq!(g.shape_of("zz"), None);
    }

    #[test]
    fn rejects_disallowed_attribute() {
        let err = parse_spec("input 1 4 4 4\nlayer spp name=p in=input k=3\noutput p\n").unwrap_err();
        assert!(err.to_string().contains("does not accept"), "{err}");
    }

    #[test]
    fn rejects_bad_graph_shapes() {
        let err = parse_spec("input 1 4 4 4\nlayer add name=a in=input\noutput a\n").unwrap_err();
        assert!(matches!(err, Error::Validation { .. }), "{err}");
        let err = parse_spec(
            "input 1 4 4 4\nlayer conv name=c in=input out_c=4 s=2\nlayer add name=a in=c,input\noutput a\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("`a`"), "{err}");
        let err = parse_spec("input 1 4 4 4\nlayer conv name=c in=input\noutput c\n").unwrap_err();
        assert!(err.to_string().contains("out_c"), "{err}");
    }

    #[test]
    fn with_batch_keeps_layers() {
        let g = parse_spec("input 1 3 8 8\nlayer conv name=c in=input out_c=4 k=3\noutput c\n").unwrap();
        let g4 = g.with_batch(4).unwrap();
        assert_eq!(g4.shape_of("c"), Some(Shape::new(4, 4, 8, 8)));
        assert_eq!(g4.layers(), g.layers());
    }
}

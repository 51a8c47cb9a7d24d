//! Analytic parameter and FLOP accounting.
//!
//! FLOPs are multiply-accumulates (one MAC = 1). Only convolution arithmetic
//! is counted: bias, batch norm, activations, pooling comparisons, concat and
//! shuffle are free. Parameter counts are convolution kernel weights. All
//! counts are per sample.

use std::fmt::Write as _;

use crate::blocks::{BlockConfig, ConvSite};
use crate::error::{Error, Result};
use crate::graph::{GraphSpec, Op};
use crate::tensor::{ConvParams, Shape};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerCost {
    pub name: String,
    pub kind: String,
    /// (c, h, w) of each input.
    pub in_shapes: Vec<(usize, usize, usize)>,
    pub out_shape: (usize, usize, usize),
    pub params: u64,
    pub flops: u64,
}

fn chw(s: Shape) -> (usize, usize, usize) {
    (s.c, s.h, s.w)
}

fn fmt_chw((c, h, w): (usize, usize, usize)) -> String {
    format!("{c}x{h}x{w}")
}

impl LayerCost {
    fn from_sites(name: &str, kind: &str, input: Shape, output: Shape, sites: &[ConvSite]) -> Self {
        Self {
            name: name.to_string(),
            kind: kind.to_string(),
            in_shapes: vec![chw(input)],
            out_shape: chw(output),
            params: sites.iter().map(ConvSite::weight_count).sum(),
            flops: sites.iter().map(ConvSite::macs).sum(),
        }
    }

    pub fn in_shape_label(&self) -> String {
        self.in_shapes
            .iter()
            .copied()
            .map(fmt_chw)
            .collect::<Vec<_>>()
            .join("+")
    }

    pub fn out_shape_label(&self) -> String {
        fmt_chw(self.out_shape)
    }
}

/// Dense convolution producing an `out_h`×`out_w` map.
pub fn cost_sc(in_c: usize, out_c: usize, k: usize, out_h: usize, out_w: usize) -> LayerCost {
    let params = (in_c * k * k * out_c) as u64;
    LayerCost {
        name: "sc".into(),
        kind: "sc".into(),
        in_shapes: vec![(in_c, out_h, out_w)],
        out_shape: (out_c, out_h, out_w),
        params,
        flops: params * (out_h * out_w) as u64,
    }
}

/// Depthwise `k`×`k` stage plus 1×1 pointwise stage.
pub fn cost_dsc(in_c: usize, out_c: usize, k: usize, out_h: usize, out_w: usize) -> LayerCost {
    let params = (in_c * k * k + in_c * out_c) as u64;
    LayerCost {
        name: "dsc".into(),
        kind: "dsc".into(),
        in_shapes: vec![(in_c, out_h, out_w)],
        out_shape: (out_c, out_h, out_w),
        params,
        flops: params * (out_h * out_w) as u64,
    }
}

/// Cost of one block at the given input shape.
pub fn cost_block(name: &str, block: &BlockConfig, input: Shape) -> Result<LayerCost> {
    let output = block.output_shape(input)?;
    let sites = block.conv_sites(name, input.h, input.w);
    Ok(LayerCost::from_sites(name, block.kind_name(), input, output, &sites))
}

/// Cost of a single bare convolution.
pub fn cost_conv(name: &str, p: &ConvParams, input: Shape) -> Result<LayerCost> {
    p.validate()?;
    let (h, w) = p.output_hw(input.h, input.w)?;
    let site = ConvSite {
        name: name.into(),
        params: *p,
        in_h: input.h,
        in_w: input.w,
        calls: 1,
    };
    Ok(LayerCost::from_sites(
        name,
        "conv",
        input,
        Shape::new(input.n, p.out_c, h, w),
        &[site],
    ))
}

/// An exact non-negative rational.
#[derive(Clone, Copy, Debug)]
pub struct Ratio {
    pub num: u128,
    pub den: u128,
}

impl Ratio {
    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl PartialEq for Ratio {
    fn eq(&self, o: &Ratio) -> bool {
        self.num * o.den == o.num * self.den
    }
}

/// DSC-to-SC parameter ratio.
pub fn ratio_p(in_c: usize, out_c: usize, k: usize) -> Ratio {
    let dsc = cost_dsc(in_c, out_c, k, 1, 1);
    let sc = cost_sc(in_c, out_c, k, 1, 1);
    Ratio {
        num: dsc.params as u128,
        den: sc.params as u128,
    }
}

/// DSC-to-SC computation ratio at an `h`×`w` output.
pub fn ratio_c(in_c: usize, out_c: usize, k: usize, h: usize, w: usize) -> Ratio {
    Ratio {
        num: cost_dsc(in_c, out_c, k, h, w).flops as u128,
        den: cost_sc(in_c, out_c, k, h, w).flops as u128,
    }
}

/// Closed form `1/C2 + 1/K^2` shared by both ratios.
pub fn ratio_closed_form(out_c: usize, k: usize) -> Ratio {
    let k2 = (k * k) as u128;
    Ratio {
        num: k2 + out_c as u128,
        den: out_c as u128 * k2,
    }
}

/// Per-pixel max-comparison counts `(spp, sppf)` for parallel pools of the
/// given kernels versus `chain` chained pools of size `k`.
pub fn pool_comparisons(kernels: &[usize], k: usize, chain: usize) -> Result<(u64, u64)> {
    if k == 0 || k.is_multiple_of(2) || chain == 0 {
        return Err(Error::Invalid(format!(
            "chained kernel {k} x {chain} is not a valid sppf"
        )));
    }
    let mut sorted = kernels.to_vec();
    sorted.sort_unstable();
    let realizable = sorted.len() == chain && sorted.iter().enumerate().all(|(m, &kj)| kj == (m + 1) * (k - 1) + 1);
    if !realizable {
        return Err(Error::Invalid(format!(
            "kernels {kernels:?} are not realizable by chaining {chain} pools of size {k}"
        )));
    }
    let spp = sorted.iter().map(|&kj| (kj * kj - 1) as u64).sum();
    let sppf = (chain * (k * k - 1)) as u64;
    Ok((spp, sppf))
}

/// Relative reduction of per-pixel comparisons, `(SPP - SPPF) / SPPF * 100`.
pub fn sppf_efficiency(kernels: &[usize], k: usize, chain: usize) -> Result<f64> {
    let (spp, sppf) = pool_comparisons(kernels, k, chain)?;
    Ok((spp as f64 - sppf as f64) / sppf as f64 * 100.0)
}

/// The difference form `(sum k_j^2 - i) - (k_1^2 - 1) * i`, in percent units
/// as printed. For kernels {5, 9, 13} it gives 200, not the ~277.8 the ratio
/// form gives; exposed for comparison only.
pub fn sppf_eta_difference_form(kernels: &[usize]) -> i64 {
    let i = kernels.len() as i64;
    let sum: i64 = kernels.iter().map(|&k| (k * k) as i64).sum();
    let k1 = kernels.first().copied().unwrap_or(0) as i64;
    (sum - i) - (k1 * k1 - 1) * i
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub baseline_params: u64,
    pub baseline_flops: u64,
    pub variant_params: u64,
    pub variant_flops: u64,
}

fn pct(delta: i128, base: u64) -> f64 {
    if base == 0 {
        0.0
    } else {
        delta as f64 / base as f64 * 100.0
    }
}

impl Comparison {
    pub fn params_delta(&self) -> i128 {
        self.variant_params as i128 - self.baseline_params as i128
    }

    pub fn flops_delta(&self) -> i128 {
        self.variant_flops as i128 - self.baseline_flops as i128
    }

    pub fn params_pct(&self) -> f64 {
        pct(self.params_delta(), self.baseline_params)
    }

    pub fn flops_pct(&self) -> f64 {
        pct(self.flops_delta(), self.baseline_flops)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CostReport {
    pub layers: Vec<LayerCost>,
    pub comparison: Option<Comparison>,
    /// Multiplier applied to FLOPs when rendering (2 for multiply+add counting).
    pub flop_factor: u64,
}

pub const CSV_HEADER: &str = "name,type,in_shape,out_shape,params,flops,pct_of_total";

const FOOTER: &str = "FLOPs count convolution multiply-accumulates per sample; bias, batch norm, \
activation, pooling, concat and shuffle are not counted. Params count convolution weights.";

impl CostReport {
    pub fn new(layers: Vec<LayerCost>) -> Self {
        Self {
            layers,
            comparison: None,
            flop_factor: 1,
        }
    }

    pub fn total_params(&self) -> u64 {
        self.layers.iter().map(|l| l.params).sum()
    }

    pub fn total_flops(&self) -> u64 {
        self.layers.iter().map(|l| l.flops).sum()
    }

    pub fn compare_against(&mut self, baseline: &CostReport) {
        self.comparison = Some(Comparison {
            baseline_params: baseline.total_params(),
            baseline_flops: baseline.total_flops(),
            variant_params: self.total_params(),
            variant_flops: self.total_flops(),
        });
    }

    fn factor(&self) -> u64 {
        self.flop_factor.max(1)
    }

    fn share(&self, flops: u64) -> f64 {
        pct(flops as i128, self.total_flops())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for l in &self.layers {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.2}",
                l.name,
                l.kind,
                l.in_shape_label(),
                l.out_shape_label(),
                l.params,
                l.flops * self.factor(),
                self.share(l.flops)
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let header = ["name", "type", "in_shape", "out_shape", "params", "flops", "%"];
        let mut rows: Vec<[String; 7]> = self
            .layers
            .iter()
            .map(|l| {
                [
                    l.name.clone(),
                    l.kind.clone(),
                    l.in_shape_label(),
                    l.out_shape_label(),
                    l.params.to_string(),
                    (l.flops * self.factor()).to_string(),
                    format!("{:.2}", self.share(l.flops)),
                ]
            })
            .collect();
        rows.push([
            "TOTAL".into(),
            String::new(),
            String::new(),
            String::new(),
            self.total_params().to_string(),
            (self.total_flops() * self.factor()).to_string(),
            if self.layers.is_empty() { "0.00" } else { "100.00" }.into(),
        ]);
        let widths: Vec<usize> = (0..7)
            .map(|i| {
                rows.iter()
                    .map(|r| r[i].len())
                    .chain([header[i].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[&str]| -> String {
            cells
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    if i >= 4 {
                        format!("{c:>w$}", w = widths[i])
                    } else {
                        format!("{c:<w$}", w = widths[i])
                    }
                })
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = line(&header);
        out.push('\n');
        out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 12));
        out.push('\n');
        for r in &rows {
            out.push_str(&line(&r.iter().map(String::as_str).collect::<Vec<_>>()));
            out.push('\n');
        }
        if let Some(c) = &self.comparison {
            let f = self.factor() as i128;
            let _ = writeln!(out, "\ncomparison (variant vs baseline)");
            let _ = writeln!(
                out,
                "  params: {} -> {}  delta {:+} ({:+.2}%)",
                c.baseline_params,
                c.variant_params,
                c.params_delta(),
                c.params_pct()
            );
            let _ = writeln!(
                out,
                "  flops:  {} -> {}  delta {:+} ({:+.2}%)",
                c.baseline_flops as i128 * f,
                c.variant_flops as i128 * f,
                c.flops_delta() * f,
                c.flops_pct()
            );
        }
        let _ = writeln!(out, "\n{FOOTER}");
        if self.factor() != 1 {
            let _ = writeln!(out, "FLOPs shown as multiplies + adds (2 x MACs).");
        }
        out
    }
}

/// Per-layer costs of a graph in declaration order, with propagated shapes.
pub fn graph_cost(graph: &GraphSpec) -> Result<CostReport> {
    let mut layers = Vec::with_capacity(graph.layers().len());
    for (spec, resolved) in graph.layers().iter().zip(graph.resolved()) {
        let cost = match &resolved.op {
            Op::Block(block) => {
                let mut c = cost_block(&spec.name, block, resolved.in_shapes[0])?;
                c.kind = spec.kind.to_string();
                c
            }
            _ => LayerCost {
                name: spec.name.clone(),
                kind: spec.kind.to_string(),
                in_shapes: resolved.in_shapes.iter().copied().map(chw).collect(),
                out_shape: chw(resolved.out_shape),
                params: 0,
                flops: 0,
            },
        };
        layers.push(cost);
    }
    Ok(CostReport::new(layers))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::{CspConfig, GsConvConfig, VovGscspConfig};

    #[test]
    fn sc_examples() {
        let c = cost_sc(3, 16, 3, 320, 320);
        assert_eq!(c.params, 432);
        assert_eq!(c.flops, 44_236_800);
        let one = cost_sc(1, 1, 1, 1, 1);
        assert_eq!((one.params, one.flops), (1, 1));
    }

    #[test]
    fn dsc_ratio_matches_closed_form() {
        let rp = ratio_p(3, 16, 3);
        let rc = ratio_c(3, 16, 3, 320, 320);
        assert_eq!(rp, rc);
        assert_eq!(rp, ratio_closed_form(16, 3));
        assert!((rp.value() - (1.0 / 16.0 + 1.0 / 9.0)).abs() < 1e-15);
        assert!((rp.value() - 0.174).abs() < 5e-4);
    }

    #[test]
    fn dsc_is_costlier_in_the_trivial_corner() {
        assert_eq!(cost_dsc(8, 1, 1, 1, 1).params, 16);
        assert_eq!(cost_sc(8, 1, 1, 1, 1).params, 8);
    }

    #[test]
    fn gsconv_ratio_examples() {
        let at = |c: usize| {
            let gs = cost_block(
                "g",
                &BlockConfig::GsConv(GsConvConfig::new(c, c, 1, 1)),
                Shape::new(1, c, 1, 1),
            )
            .unwrap();
            gs.flops as f64 / cost_sc(c, c, 1, 1, 1).flops as f64
        };
        assert_eq!(
            cost_block(
                "g",
                &BlockConfig::GsConv(GsConvConfig::new(64, 64, 1, 1)),
                Shape::new(1, 64, 1, 1)
            )
            .unwrap()
            .flops,
            2848
        );
        assert!((at(64) - 2848.0 / 4096.0).abs() < 1e-15);
        assert!((at(128) - 0.59765625).abs() < 1e-15);
    }

    #[test]
    fn vov_cheaper_than_csp() {
        let s = Shape::new(1, 128, 20, 20);
        let vov = cost_block("v", &BlockConfig::VovGscsp(VovGscspConfig::new(128, 128, 1)), s).unwrap();
        let csp = cost_block("c", &BlockConfig::Csp(CspConfig::new(128, 128, 1)), s).unwrap();
        assert!(vov.flops < csp.flops);
    }

    #[test]
    fn sppf_metric() {
        let e = sppf_efficiency(&[5, 9, 13], 5, 3).unwrap();
        assert!((e - 277.777_777_777_777_8).abs() < 1e-9);
        assert_eq!(pool_comparisons(&[5, 9, 13], 5, 3).unwrap(), (272, 72));
        assert_eq!(sppf_efficiency(&[5], 5, 1).unwrap(), 0.0);
        assert_eq!(sppf_eta_difference_form(&[5, 9, 13]), 200);
        assert!(sppf_efficiency(&[5, 7, 13], 5, 3).is_err());
        assert!(sppf_efficiency(&[5, 9], 5, 3).is_err());
    }

    #[test]
    fn report_rendering() {
        let mut r = CostReport::new(vec![cost_sc(3, 16, 3, 4, 4), cost_dsc(3, 16, 3, 4, 4)]);
        assert_eq!(r.total_params(), 432 + 75);
        let csv = r.to_csv();
        assert!(csv.starts_with(CSV_HEADER));
        assert_eq!(csv.lines().count(), 3);
        let base = CostReport::new(vec![cost_sc(3, 16, 3, 4, 4)]);
        r.compare_against(&base);
        assert!(r.to_table().contains("comparison"));
        assert_eq!(CostReport::new(vec![]).total_flops(), 0);
    }
}

//! Exact-arithmetic suites: conv paths, shuffle, SPP/SPPF, block structure.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{CheckOptions, Oracle, Recorder};
use crate::activation::ActivationKind;
use crate::bench::{run_bench, BenchConfig, BenchOp};
use crate::blocks::{
    BlockConfig, CaConfig, CbamConfig, ConvBnActConfig, CspConfig, DscConfig, GsBottleneckConfig, GsConvConfig,
    RandomSource, Recorder as ParamRecorder, SeConfig, SppConfig, SppfConfig, VovGscspConfig,
};
use crate::rng::{SeedStream, StreamRng};
use crate::tensor::{channel_shuffle, conv2d_im2col, conv2d_naive, ConvParams, Shape, Tensor};

fn random_input(rng: &mut StreamRng, shape: Shape) -> Tensor {
    Tensor::random_uniform(shape, -2.0, 2.0, rng)
}

/// Random conv geometry; `mode` 0 dense, 1 grouped, 2 depthwise.
fn random_conv(rng: &mut StreamRng, mode: usize) -> (ConvParams, Shape) {
    let k = *[1, 3, 5, 7].choose(rng).unwrap();
    let stride = rng.gen_range(1..=3);
    let p = match mode {
        0 => ConvParams::new(rng.gen_range(1..=8), rng.gen_range(1..=8), k, stride),
        1 => {
            let g = rng.gen_range(2..=4);
            ConvParams::new(g * rng.gen_range(1..=3), g * rng.gen_range(1..=3), k, stride).with_groups(g)
        }
        _ => ConvParams::depthwise(rng.gen_range(1..=8), k, stride),
    }
    .with_bias(rng.gen_bool(0.5));
    let shape = Shape::new(
        rng.gen_range(1..=2),
        p.in_c,
        rng.gen_range(1..=20),
        rng.gen_range(1..=20),
    );
    (p, shape)
}

pub(super) fn conv(r: &mut Recorder, opts: &CheckOptions) {
    let seeds = SeedStream::new(opts.seed).split("check.conv");
    r.prop("im2col_bit_identical", || {
        let mut rng = seeds.rng("configs");
        let (mut mismatches, mut counts) = (0, [0usize; 3]);
        for i in 0..200 {
            let mode = i % 3;
            let (p, shape) = random_conv(&mut rng, mode);
            let x = random_input(&mut rng, shape);
            let w = Tensor::random_uniform(p.weight_shape(), -1.0, 1.0, &mut rng);
            let b: Option<Vec<f32>> = p
                .has_bias
                .then(|| (0..p.out_c).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let naive = conv2d_naive(&x, &w, b.as_deref(), &p)?;
            let fast = conv2d_im2col(&x, &w, b.as_deref(), &p)?;
            mismatches += usize::from(!naive.bit_eq(&fast));
            counts[mode] += 1;
        }
        Ok((
            format!(
                "{mismatches} mismatching of 200 ({} dense, {} grouped, {} depthwise)",
                counts[0], counts[1], counts[2]
            ),
            "0 mismatches".into(),
            mismatches == 0,
        ))
    });
    r.prop("im2col_faster_than_naive", || {
        let cfg = |op| BenchConfig {
            op,
            shape: Shape::new(1, 64, 64, 64),
            out_c: 64,
            k: 3,
            repeat: 5,
            seed: opts.seed,
        };
        let naive = run_bench(cfg(BenchOp::ConvNaive))?.median();
        let fast = run_bench(cfg(BenchOp::ConvIm2col))?.median();
        Ok((
            format!(
                "median im2col {:.2} ms vs naive {:.2} ms",
                fast.as_secs_f64() * 1e3,
                naive.as_secs_f64() * 1e3
            ),
            "im2col < naive at 1x64x64x64, k=3, out_c=64".into(),
            fast < naive,
        ))
    });
}

pub(super) fn shuffle(r: &mut Recorder, opts: &CheckOptions) {
    let seeds = SeedStream::new(opts.seed).split("check.shuffle");
    let cases = |rng: &mut StreamRng| -> Vec<(Tensor, usize)> {
        (0..100)
            .map(|_| {
                let g = rng.gen_range(1..=6);
                let c = g * rng.gen_range(1..=6);
                let shape = Shape::new(rng.gen_range(1..=2), c, rng.gen_range(1..=5), rng.gen_range(1..=5));
                (random_input(rng, shape), g)
            })
            .collect()
    };
    r.prop("index_formula", || {
        let mut bad = 0;
        for (x, g) in cases(&mut seeds.rng("formula")) {
            let s = x.shape();
            let per = s.c / g;
            let y = channel_shuffle(&x, g)?;
            for n in 0..s.n {
                for a in 0..g {
                    for b in 0..per {
                        bad += usize::from(y.plane(n, b * g + a) != x.plane(n, a * per + b));
                    }
                }
            }
        }
        Ok((
            format!("{bad} misplaced channels over 100 tensors"),
            "0".into(),
            bad == 0,
        ))
    });
    r.prop("inverse_and_identity", || {
        let mut bad = 0;
        for (x, g) in cases(&mut seeds.rng("inverse")) {
            let c = x.shape().c;
            let back = channel_shuffle(&channel_shuffle(&x, g)?, c / g)?;
            bad += usize::from(!back.bit_eq(&x));
            bad += usize::from(!channel_shuffle(&x, 1)?.bit_eq(&x));
            bad += usize::from(!channel_shuffle(&x, c)?.bit_eq(&x));
        }
        Ok((format!("{bad} failures over 100 tensors"), "0".into(), bad == 0))
    });
    r.prop("values_preserved", || {
        let mut bad = 0;
        for (x, g) in cases(&mut seeds.rng("multiset")) {
            let mut a: Vec<u32> = x.data().iter().map(|v| v.to_bits()).collect();
            let mut b: Vec<u32> = channel_shuffle(&x, g)?.data().iter().map(|v| v.to_bits()).collect();
            a.sort_unstable();
            b.sort_unstable();
            bad += usize::from(a != b);
        }
        Ok((format!("{bad} multiset changes over 100 tensors"), "0".into(), bad == 0))
    });
}

pub(super) fn sppf(r: &mut Recorder, opts: &CheckOptions) {
    let seeds = SeedStream::new(opts.seed).split("check.sppf");
    r.prop("spp_equals_sppf", || {
        let mut rng = seeds.rng("tensors");
        let spp = SppConfig::default().build();
        let sppf = SppfConfig::default().build();
        let mut bad = 0;
        for i in 0..100 {
            let shape = Shape::new(1, rng.gen_range(1..=8), rng.gen_range(5..=33), rng.gen_range(5..=33));
            let mut x = random_input(&mut rng, shape);
            if i % 2 == 1 {
                // coarse values force ties, and signed zeros
                x = x.map(|v| {
                    let q = (v * 2.0).round() / 2.0;
                    if q == 0.0 && v < 0.0 {
                        -0.0
                    } else {
                        q
                    }
                });
            }
            bad += usize::from(!spp.forward(&x)?.bit_eq(&sppf.forward(&x)?));
        }
        Ok((
            format!("{bad} of 100 tensors differ"),
            "bit-exact on all 100".into(),
            bad == 0,
        ))
    });
    r.prop("chain_reproduces_kernels", || {
        let got = SppfConfig::default().equivalent_spp().kernels;
        Ok((format!("{got:?}"), "[5, 9, 13]".into(), got == [5, 9, 13]))
    });
}

fn random_act(rng: &mut StreamRng) -> Option<ActivationKind> {
    let all = ActivationKind::all();
    let i = rng.gen_range(0..=all.len());
    all.get(i).copied()
}

/// One random configuration of each block type, keyed by type name.
fn random_block(kind: &str, rng: &mut StreamRng) -> BlockConfig {
    let act = random_act(rng);
    let c = |rng: &mut StreamRng| rng.gen_range(1..=6);
    let odd = |rng: &mut StreamRng, ks: &[usize]| *ks.choose(rng).unwrap();
    match kind {
        "conv" => {
            let cfg = if rng.gen_bool(0.3) {
                ConvBnActConfig::depthwise(c(rng), odd(rng, &[1, 3, 5]), rng.gen_range(1..=2))
            } else {
                ConvBnActConfig::new(c(rng), c(rng), odd(rng, &[1, 3, 5]), rng.gen_range(1..=2))
            };
            BlockConfig::ConvBnAct(cfg.act(act))
        }
        "dsc" => BlockConfig::Dsc(DscConfig {
            act,
            ..DscConfig::new(c(rng), c(rng), odd(rng, &[3, 5]), rng.gen_range(1..=2))
        }),
        "gsconv" => BlockConfig::GsConv(
            GsConvConfig::new(c(rng), 2 * c(rng), odd(rng, &[1, 3]), rng.gen_range(1..=2))
                .k_dw(odd(rng, &[3, 5]))
                .act(act),
        ),
        "gs_bottleneck" => BlockConfig::GsBottleneck(GsBottleneckConfig {
            k_dw: odd(rng, &[3, 5]),
            second_act: rng.gen_bool(0.5),
            ..GsBottleneckConfig::new(c(rng), 4 * rng.gen_range(1..=2)).act(act)
        }),
        "vov_gscsp" => BlockConfig::VovGscsp(VovGscspConfig {
            k_dw: odd(rng, &[3, 5]),
            act,
            ..VovGscspConfig::new(c(rng), 8 * rng.gen_range(1..=2), rng.gen_range(1..=2))
        }),
        "csp" => BlockConfig::Csp(CspConfig {
            act,
            ..CspConfig::new(c(rng), 2 * c(rng), rng.gen_range(1..=2))
        }),
        "spp" => {
            let mut kernels: Vec<usize> = [3, 5, 7, 9].into_iter().filter(|_| rng.gen_bool(0.6)).collect();
            if kernels.is_empty() {
                kernels.push(5);
            }
            BlockConfig::Spp(SppConfig { kernels })
        }
        "sppf" => BlockConfig::Sppf(SppfConfig {
            k: odd(rng, &[3, 5]),
            chain: rng.gen_range(1..=3),
        }),
        "se" | "cbam" | "ca" => {
            let r = *[1, 2, 4].choose(rng).unwrap();
            let ch = r * rng.gen_range(1..=3);
            match kind {
                "se" => BlockConfig::Se(SeConfig { c: ch, r }),
                "cbam" => BlockConfig::Cbam(CbamConfig {
                    c: ch,
                    r,
                    spatial_k: odd(rng, &[3, 5, 7]),
                }),
                _ => BlockConfig::Ca(CaConfig { c: ch, r }),
            }
        }
        other => unreachable!("no generator for {other}"),
    }
}

fn in_channels(cfg: &BlockConfig, rng: &mut StreamRng) -> usize {
    match cfg {
        BlockConfig::ConvBnAct(c) => c.in_c,
        BlockConfig::Dsc(c) => c.in_c,
        BlockConfig::GsConv(c) => c.in_c,
        BlockConfig::GsBottleneck(c) => c.in_c,
        BlockConfig::VovGscsp(c) => c.in_c,
        BlockConfig::Csp(c) => c.in_c,
        BlockConfig::Spp(_) | BlockConfig::Sppf(_) => rng.gen_range(1..=4),
        BlockConfig::Se(c) => c.c,
        BlockConfig::Cbam(c) => c.c,
        BlockConfig::Ca(c) => c.c,
    }
}

pub const BLOCK_KINDS: [&str; 11] = [
    "conv",
    "dsc",
    "gsconv",
    "gs_bottleneck",
    "vov_gscsp",
    "csp",
    "spp",
    "sppf",
    "se",
    "cbam",
    "ca",
];

pub(super) fn blocks(r: &mut Recorder, opts: &CheckOptions) {
    let seeds = SeedStream::new(opts.seed).split("check.blocks");
    for kind in BLOCK_KINDS {
        r.prop(&format!("composition_oracle.{kind}"), || {
            let mut bad = 0;
            for i in 0..20u64 {
                let mut rng = seeds.rng(&format!("{kind}.{i}"));
                let cfg = random_block(kind, &mut rng);
                let shape = Shape::new(
                    rng.gen_range(1..=2),
                    in_channels(&cfg, &mut rng),
                    rng.gen_range(3..=10),
                    rng.gen_range(3..=10),
                );
                let x = random_input(&mut rng, shape);
                let mut src = ParamRecorder::new(RandomSource::new(seeds.split(kind).seed() ^ i));
                let block = cfg.build("blk", &mut src)?;
                let expect = Oracle::new(src.records).forward(&cfg, "blk", &x)?;
                bad += usize::from(!block.forward(&x)?.bit_eq(&expect));
            }
            Ok((
                format!("{bad} of 20 weight seeds differ"),
                "bit-exact on all 20".into(),
                bad == 0,
            ))
        });
    }
    r.prop("attention_magnitude_bound", || {
        let mut worst = 0.0f32;
        let mut bad = 0;
        for kind in ["se", "cbam", "ca"] {
            for i in 0..20u64 {
                let mut rng = seeds.rng(&format!("bound.{kind}.{i}"));
                let cfg = random_block(kind, &mut rng);
                let c = in_channels(&cfg, &mut rng);
                let shape = Shape::new(1, c, rng.gen_range(3..=10), rng.gen_range(3..=10));
                let x = random_input(&mut rng, shape);
                let y = cfg.build("a", &mut RandomSource::new(i))?.forward(&x)?;
                for (a, b) in y.data().iter().zip(x.data()) {
                    worst = worst.max(a.abs() / b.abs().max(f32::MIN_POSITIVE));
                    bad += usize::from(a.abs() > b.abs());
                }
            }
        }
        Ok((
            format!("{bad} violations, max |out|/|x| = {worst:.6}"),
            "|out| <= |x| elementwise".into(),
            bad == 0,
        ))
    });
}

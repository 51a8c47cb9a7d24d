//! Wall-clock timing of convolution paths and GSConv versus a dense conv.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::blocks::{BlockConfig, InitSource, ParamSource};
use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::tensor::{conv2d_im2col, conv2d_naive, ConvParams, Shape, Tensor};

pub const WARMUP_RUNS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchOp {
    ConvNaive,
    ConvIm2col,
    GsConv,
    Sc,
}

impl BenchOp {
    pub const ALL: [BenchOp; 4] = [BenchOp::ConvNaive, BenchOp::ConvIm2col, BenchOp::GsConv, BenchOp::Sc];

    pub fn as_str(&self) -> &'static str {
        match self {
            BenchOp::ConvNaive => "conv_naive",
            BenchOp::ConvIm2col => "conv_im2col",
            BenchOp::GsConv => "gsconv",
            BenchOp::Sc => "sc",
        }
    }
}

impl fmt::Display for BenchOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchOp::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown bench op `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BenchConfig {
    pub op: BenchOp,
    pub shape: Shape,
    pub out_c: usize,
    pub k: usize,
    pub repeat: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub config: BenchConfig,
    /// Timed runs in execution order, warm-ups excluded.
    pub samples: Vec<Duration>,
}

/// Nearest-rank percentile of an ascending slice.
fn percentile(sorted: &[Duration], p: f64) -> Duration {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl BenchReport {
    fn sorted(&self) -> Vec<Duration> {
        let mut s = self.samples.clone();
        s.sort_unstable();
        s
    }

    pub fn median(&self) -> Duration {
        let s = self.sorted();
        let n = s.len();
        if n % 2 == 1 {
            s[n / 2]
        } else {
            (s[n / 2 - 1] + s[n / 2]) / 2
        }
    }

    pub fn p10(&self) -> Duration {
        percentile(&self.sorted(), 10.0)
    }

    pub fn p90(&self) -> Duration {
        percentile(&self.sorted(), 90.0)
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.config;
        writeln!(
            f,
            "op={} shape={} out_c={} k={} repeat={} warmup={WARMUP_RUNS}",
            c.op, c.shape, c.out_c, c.k, c.repeat
        )?;
        if self.samples.len() == 1 {
            return writeln!(f, "sample_ms={:.3}", ms(self.samples[0]));
        }
        writeln!(
            f,
            "median_ms={:.3} p10_ms={:.3} p90_ms={:.3}",
            ms(self.median()),
            ms(self.p10()),
            ms(self.p90())
        )
    }
}

/// Runs `WARMUP_RUNS` discarded iterations, then `repeat` timed ones.
pub fn run_bench(config: BenchConfig) -> Result<BenchReport> {
    if config.repeat == 0 {
        return Err(Error::Invalid("repeat must be at least 1".into()));
    }
    let seeds = SeedStream::new(config.seed);
    let s = config.shape;
    let x = Tensor::random_uniform(s, -1.0, 1.0, &mut seeds.rng("bench.input"));
    let mut src = InitSource::new(config.seed);
    let job: Box<dyn Fn() -> Result<Tensor>> = match config.op {
        BenchOp::ConvNaive | BenchOp::ConvIm2col => {
            let p = ConvParams::new(s.c, config.out_c, config.k, 1);
            p.validate()?;
            let w = src.tensor("bench.weight", p.weight_shape())?;
            if config.op == BenchOp::ConvNaive {
                Box::new(move || conv2d_naive(&x, &w, None, &p))
            } else {
                Box::new(move || conv2d_im2col(&x, &w, None, &p))
            }
        }
        BenchOp::GsConv | BenchOp::Sc => {
            let cfg = if config.op == BenchOp::GsConv {
                BlockConfig::GsConv(crate::blocks::GsConvConfig::new(s.c, config.out_c, config.k, 1))
            } else {
                BlockConfig::ConvBnAct(crate::blocks::ConvBnActConfig::new(s.c, config.out_c, config.k, 1))
            };
            let block = cfg.build("bench", &mut src)?;
            Box::new(move || block.forward(&x))
        }
    };
    for _ in 0..WARMUP_RUNS {
        job()?;
    }
    let samples = (0..config.repeat)
        .map(|_| {
            let t = Instant::now();
            let out = job()?;
            let d = t.elapsed();
            std::hint::black_box(out);
            Ok(d)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchReport { config, samples })
}

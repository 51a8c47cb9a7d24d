use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use slimneck::bench::{run_bench, BenchConfig, BenchOp};
use slimneck::check::{self, CheckOptions, Selection, FD_REL_TOL};
use slimneck::cost::graph_cost;
use slimneck::graph::{
    dump_feature_maps, forward, init_weights, load_weights, parse_spec, random_input, GraphSpec, WeightStore,
};
use slimneck::tensor::{read_tensor_file, write_tensor_file};
use slimneck::{Error, Result, Shape, Tensor};

#[derive(Parser)]
#[command(
    name = "slimneck",
    version,
    about = "Slim-neck blocks: cost analysis, execution, checks and benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the per-layer parameter and FLOP report of a spec.
    Analyze {
        spec: PathBuf,
        /// Override the declared input shape.
        #[arg(long, value_name = "N,C,H,W", value_parser = parse_shape)]
        input_shape: Option<Shape>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        /// Baseline spec to compare totals against.
        #[arg(long, value_name = "BASELINE_SPEC")]
        compare: Option<PathBuf>,
        /// Report multiplies and adds separately (2 x MACs).
        #[arg(long)]
        mul_add: bool,
    },
    /// Run a forward pass and write one output tensor.
    Run {
        spec: PathBuf,
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, value_name = "PATH")]
        output: PathBuf,
        /// Layer to write instead of the first declared output.
        #[arg(long)]
        layer: Option<String>,
    },
    /// Run self-verification suites.
    Check {
        #[arg(long, default_value = "all", value_parser = parse_selection)]
        suite: Selection,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Relative tolerance for finite-difference comparisons.
        #[arg(long, default_value_t = FD_REL_TOL)]
        tol: f64,
    },
    /// Time a convolution path or GSConv against a dense conv.
    Bench {
        #[arg(long, value_parser = parse_op)]
        op: BenchOp,
        #[arg(long, value_name = "N,C,H,W", default_value = "1,64,64,64", value_parser = parse_shape)]
        shape: Shape,
        #[arg(long, default_value_t = 64)]
        out_c: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        repeat: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write one PGM image per channel of a layer's output.
    DumpMaps {
        spec: PathBuf,
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long)]
        layer: String,
        #[arg(long, value_name = "DIR")]
        outdir: PathBuf,
    },
}

#[derive(Args)]
struct SourceArgs {
    /// Weight file; otherwise weights are initialized from --seed.
    #[arg(long, value_name = "PATH", conflicts_with = "seed")]
    weights: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Input tensor file (.ntsr).
    #[arg(
        long,
        value_name = "PATH",
        required_unless_present = "random",
        conflicts_with = "random"
    )]
    input: Option<PathBuf>,
    /// Draw the input uniformly from [-1, 1).
    #[arg(long)]
    random: bool,
    /// Seed for --random.
    #[arg(long, default_value_t = 0, requires = "random")]
    input_seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
}

fn parse_shape(s: &str) -> std::result::Result<Shape, String> {
    let dims: Vec<usize> = s
        .split(',')
        .map(|d| d.trim().parse::<usize>().map_err(|e| format!("`{d}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match dims[..] {
        [n, c, h, w] if dims.iter().all(|&d| d > 0) => Ok(Shape::new(n, c, h, w)),
        _ => Err("expected four positive integers n,c,h,w".into()),
    }
}

fn parse_selection(s: &str) -> std::result::Result<Selection, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_op(s: &str) -> std::result::Result<BenchOp, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_spec(path: &Path) -> Result<GraphSpec> {
    parse_spec(&fs::read_to_string(path)?)
}

/// Graph, weights and input for `run` and `dump-maps`. An input file whose
/// shape differs from the declared one re-propagates shapes.
fn prepare(spec: &Path, src: &SourceArgs) -> Result<(GraphSpec, WeightStore, Tensor)> {
    let mut graph = load_spec(spec)?;
    let x = match &src.input {
        Some(path) => read_tensor_file(path)?,
        None => random_input(graph.input_shape(), src.input_seed),
    };
    if x.shape() != graph.input_shape() {
        graph = graph.with_input(x.shape())?;
    }
    let weights = match &src.weights {
        Some(path) => {
            let w = load_weights(path)?;
            w.validate(&graph)?;
            w
        }
        None => init_weights(&graph, src.seed.unwrap_or(0)),
    };
    Ok((graph, weights, x))
}

fn analyze(
    spec: &Path,
    input_shape: Option<Shape>,
    format: Format,
    compare: Option<&Path>,
    mul_add: bool,
) -> Result<()> {
    let with_shape = |g: GraphSpec| match input_shape {
        Some(s) => g.with_input(s),
        None => Ok(g),
    };
    let mut report = graph_cost(&with_shape(load_spec(spec)?)?)?;
    if let Some(base) = compare {
        report.compare_against(&graph_cost(&with_shape(load_spec(base)?)?)?);
    }
    report.flop_factor = if mul_add { 2 } else { 1 };
    match format {
        Format::Table => print!("{}", report.to_table()),
        Format::Csv => print!("{}", report.to_csv()),
    }
    Ok(())
}

fn run(spec: &Path, src: &SourceArgs, output: &Path, layer: Option<&str>) -> Result<()> {
    let (graph, weights, x) = prepare(spec, src)?;
    let result = forward(&graph, &weights, &x)?;
    for (name, t) in result.outputs() {
        println!("{name} {} sha256={}", t.shape(), t.checksum());
    }
    let (name, t) = match layer {
        Some(l) => (
            l,
            result
                .get(l)
                .ok_or_else(|| Error::Invalid(format!("unknown layer `{l}`")))?,
        ),
        None => result.outputs()[0],
    };
    write_tensor_file(output, t)?;
    println!("wrote {name} to {}", output.display());
    Ok(())
}

fn dump(spec: &Path, src: &SourceArgs, layer: &str, outdir: &Path) -> Result<()> {
    let (graph, weights, x) = prepare(spec, src)?;
    fs::create_dir_all(outdir)?;
    for path in dump_feature_maps(&graph, &weights, &x, layer, outdir)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Analyze {
            spec,
            input_shape,
            format,
            compare,
            mul_add,
        } => analyze(spec, *input_shape, *format, compare.as_deref(), *mul_add),
        Command::Run {
            spec,
            source,
            output,
            layer,
        } => run(spec, source, output, layer.as_deref()),
        Command::DumpMaps {
            spec,
            source,
            layer,
            outdir,
        } => dump(spec, source, layer, outdir),
        Command::Bench {
            op,
            shape,
            out_c,
            k,
            repeat,
            seed,
        } => run_bench(BenchConfig {
            op: *op,
            shape: *shape,
            out_c: *out_c,
            k: *k,
            repeat: *repeat,
            seed: *seed,
        })
        .map(|r| print!("{r}")),
        Command::Check { suite, seed, tol } => {
            let props = check::run(*suite, &CheckOptions { seed: *seed, tol: *tol });
            let failed = props.iter().filter(|p| !p.passed).count();
            for p in &props {
                println!("{p}");
            }
            println!("{} passed, {failed} failed", props.len() - failed);
            return if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tablemult_core::experiment::{
    compare_methods, run_experiment, write_csv, CompareSpec, ExperimentSpec, Method, PartitionCount,
    DEFAULT_MONITOR_EVERY,
};
use tablemult_core::graphgen::{self, GenSpec, DEFAULT_EDGES_PER_VERTEX};
use tablemult_core::Store;

/// Outer-product sparse matrix multiplication benchmarks over a sorted
/// tablet store.
#[derive(Parser, Debug)]
#[command(name = "bench", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Multiply two generated graphs per scale and report one CSV row each.
    Run(RunArgs),
    /// Run outer, inner and hybrid multiplies on one input and check them
    /// against the in-memory reference.
    Compare(CompareArgs),
    /// Generate a graph and print its adjacency table as a dump.
    Gen(GenArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum MethodArg {
    Outer,
    Inner,
    Hybrid,
}

#[derive(Args, Debug)]
struct GraphArgs {
    #[arg(long, default_value_t = 1)]
    seed_a: u64,
    #[arg(long, default_value_t = 2)]
    seed_b: u64,
    #[arg(long, default_value_t = DEFAULT_EDGES_PER_VERTEX)]
    edges_per_vertex: u64,
    /// Split inputs (and the result) over this many tablets.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    tablets: u8,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Inclusive range `LO..HI`, a list `A,B,C`, or a single scale.
    #[arg(long, default_value = "10..14", value_parser = parse_scales)]
    scales: Scales,
    #[arg(long, value_enum, default_value_t = MethodArg::Outer)]
    method: MethodArg,
    /// Partition count for the hybrid method.
    #[arg(long)]
    p: Option<usize>,
    /// Emit progress entries every N source entries (outer product only).
    #[arg(long, default_value_t = DEFAULT_MONITOR_EVERY, conflicts_with = "no_monitor")]
    monitor_every: u64,
    #[arg(long)]
    no_monitor: bool,
    /// Also time the in-memory reference and verify the result against it.
    #[arg(long)]
    oracle: bool,
    /// Run every scale twice and report whether the counts match.
    #[arg(long)]
    repeat: bool,
    #[command(flatten)]
    graph: GraphArgs,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(long, default_value_t = 10)]
    scale: u32,
    /// Hybrid partition counts; `N` stands for the number of rows of A.
    #[arg(long, default_value = "1,2,4,N", value_delimiter = ',')]
    p_list: Vec<PartitionCount>,
    #[command(flatten)]
    graph: GraphArgs,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value_t = 10)]
    scale: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_EDGES_PER_VERTEX)]
    edges_per_vertex: u64,
    /// Dump the transposed graph instead.
    #[arg(long)]
    transpose: bool,
    /// Dump destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A parsed `--scales` value.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Scales(Vec<u32>);

fn parse_scales(s: &str) -> Result<Scales, String> {
    scale_list(s).map(Scales)
}

fn scale_list(s: &str) -> Result<Vec<u32>, String> {
    let bad = |e: std::num::ParseIntError| format!("{s:?}: {e}");
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: u32 = lo.trim().parse().map_err(bad)?;
        let hi: u32 = hi.trim().trim_start_matches('=').parse().map_err(bad)?;
        if lo > hi {
            return Err(format!("empty scale range {s:?}"));
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse().map_err(bad))
        .collect()
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(args: RunArgs) -> Result<()> {
    let method = match (args.method, args.p) {
        (MethodArg::Outer, None) => Method::Outer,
        (MethodArg::Inner, None) => Method::Inner,
        (MethodArg::Hybrid, Some(p)) => Method::Hybrid(p),
        (MethodArg::Hybrid, None) => bail!("--method hybrid needs --p"),
        (_, Some(_)) => bail!("--p only applies to --method hybrid"),
    };
    let mut spec = ExperimentSpec::new(args.scales.0, method);
    spec.tablets = args.graph.tablets.into();
    spec.seed_a = args.graph.seed_a;
    spec.seed_b = args.graph.seed_b;
    spec.edges_per_vertex = args.graph.edges_per_vertex;
    spec.monitor_every = (!args.no_monitor).then_some(args.monitor_every);
    spec.with_oracle = args.oracle;
    spec.check_repeat = args.repeat;
    let rows = run_experiment(&spec)?;
    let mut out = output(args.graph.out.as_ref())?;
    write_csv(&rows, &mut out)?;
    out.flush()?;
    if rows.iter().any(|r| r.reproducible == Some(false)) {
        bail!("counts differed between repeated runs");
    }
    Ok(())
}

fn compare(args: CompareArgs) -> Result<()> {
    let mut spec = CompareSpec::new(args.scale, args.p_list);
    spec.tablets = args.graph.tablets.into();
    spec.seed_a = args.graph.seed_a;
    spec.seed_b = args.graph.seed_b;
    spec.edges_per_vertex = args.graph.edges_per_vertex;
    let rows = compare_methods(&spec)?;
    let mut out = output(args.graph.out.as_ref())?;
    write_csv(&rows, &mut out)?;
    out.flush()?;
    Ok(())
}

fn generate(args: GenArgs) -> Result<()> {
    let spec = GenSpec::new(args.scale, args.seed).with_edges_per_vertex(args.edges_per_vertex);
    let store = Store::new();
    let table = graphgen::create_adjacency_table(&store, "G")?;
    let edges = graphgen::generate(&spec)?;
    if args.transpose {
        graphgen::ingest_adjacency(&spec, edges.map(|(u, v)| (v, u)), &table, None)?;
    } else {
        graphgen::ingest_adjacency(&spec, edges, &table, None)?;
    }
    let mut out = output(args.out.as_ref())?;
    let n = store.dump_table(&table, &mut out)?;
    out.flush()?;
    log::info!("wrote {n} entries");
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Compare(args) => compare(args),
        Command::Gen(args) => generate(args),
    }
}

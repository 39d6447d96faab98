//! The benchmark protocol: generate two graphs, optionally split them over
//! two tablets, multiply, and report counts and rates as CSV rows.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use bytes::Bytes;

use crate::error::{Error, Result};
use crate::graphgen::{self, GenSpec, DEFAULT_EDGES_PER_VERTEX};
use crate::iterstack::{opts, MultiplyStats, Options};
use crate::kvstore::{Entry, RangeSet, Store, TableConfig, TableHandle};
use crate::semiring::PLUS_TIMES;
use crate::spgemm::{self, HybridOptions, MatrixTablePair};

pub const CSV_HEADER: [&str; 10] = [
    "scale",
    "tablets",
    "method",
    "p",
    "partial_products",
    "after_sum",
    "elapsed_s",
    "rate_pps",
    "passes_over_b",
    "entries_written_c",
];

pub const DEFAULT_MONITOR_EVERY: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Outer,
    Inner,
    Hybrid(usize),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Outer => "outer",
            Method::Inner => "inner",
            Method::Hybrid(_) => "hybrid",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Hybrid(p) => write!(f, "hybrid({p})"),
            m => f.write_str(m.name()),
        }
    }
}

/// A partition count, possibly "every row" (`N`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionCount {
    Fixed(usize),
    AllRows,
}

impl FromStr for PartitionCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "N" | "n" => Ok(PartitionCount::AllRows),
            v => v
                .parse()
                .map(PartitionCount::Fixed)
                .map_err(|_| Error::InvalidSpec(format!("partition count {v:?} is neither a number nor N"))),
        }
    }
}

impl PartitionCount {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            PartitionCount::Fixed(p) => p,
            PartitionCount::AllRows => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentSpec {
    pub scales: Vec<u32>,
    /// 1 or 2.
    pub tablets: usize,
    pub method: Method,
    pub seed_a: u64,
    pub seed_b: u64,
    pub edges_per_vertex: u64,
    /// `monitor.everyN` for the outer product; `None` disables monitoring.
    pub monitor_every: Option<u64>,
    /// Also time the in-memory reference product and check the result.
    pub with_oracle: bool,
    /// Run each scale twice and flag counters that differ.
    pub check_repeat: bool,
}

impl ExperimentSpec {
    pub fn new(scales: Vec<u32>, method: Method) -> Self {
        ExperimentSpec {
            scales,
            tablets: 1,
            method,
            seed_a: 1,
            seed_b: 2,
            edges_per_vertex: DEFAULT_EDGES_PER_VERTEX,
            monitor_every: Some(DEFAULT_MONITOR_EVERY),
            with_oracle: false,
            check_repeat: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed_a == self.seed_b {
            return Err(Error::InvalidSpec("the two graphs need different seeds".into()));
        }
        if !(1..=2).contains(&self.tablets) {
            return Err(Error::InvalidSpec(format!("tablets must be 1 or 2, got {}", self.tablets)));
        }
        if self.scales.is_empty() {
            return Err(Error::InvalidSpec("no scales given".into()));
        }
        Ok(())
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub scale: u32,
    pub tablets: usize,
    pub method: Method,
    /// Effective partition count: 1 for outer, the row count of `A` for inner.
    pub p: usize,
    pub partial_products: u64,
    pub after_sum: u64,
    pub elapsed_s: f64,
    pub rate_pps: f64,
    pub passes_over_b: u64,
    pub entries_written_c: u64,
    pub oracle_elapsed_s: Option<f64>,
    pub reproducible: Option<bool>,
    pub stats: MultiplyStats,
}

impl ExperimentRow {
    /// The columns that must not change between runs with equal seeds.
    pub fn counts(&self) -> (u64, u64, u64, u64) {
        (self.partial_products, self.after_sum, self.passes_over_b, self.entries_written_c)
    }
}

/// Generated inputs of one scale: `G1` serves as `Aᵀ`, its transpose `G1T`
/// as row-major `A`, and `G2` as `B`.
pub struct Inputs {
    pub store: Store,
    pub scale: u32,
    pub g1: TableHandle,
    pub g1t: TableHandle,
    pub g2: TableHandle,
    /// Split row of `G1` when the inputs were split, reused for `C`.
    pub split: Option<Bytes>,
}

impl Inputs {
    pub fn generate(scale: u32, epv: u64, seed_a: u64, seed_b: u64, tablets: usize) -> Result<Inputs> {
        let store = Store::new();
        let spec_a = GenSpec::new(scale, seed_a).with_edges_per_vertex(epv);
        let spec_b = GenSpec::new(scale, seed_b).with_edges_per_vertex(epv);
        let g1 = graphgen::create_adjacency_table(&store, "G1")?;
        let g1t = graphgen::create_adjacency_table(&store, "G1T")?;
        let g2 = graphgen::create_adjacency_table(&store, "G2")?;
        graphgen::ingest_adjacency(&spec_a, graphgen::generate(&spec_a)?, &g1, Some(&g1t))?;
        graphgen::ingest_adjacency(&spec_b, graphgen::generate(&spec_b)?, &g2, None)?;
        let mut split = None;
        for (i, t) in [&g1, &g2].into_iter().enumerate() {
            if tablets == 2 {
                let row = graphgen::find_even_split(&store, t)?;
                t.add_split(row.clone())?;
                if i == 0 {
                    split = Some(row);
                }
            }
            t.flush()?;
            t.compact()?;
        }
        g1t.flush()?;
        g1t.compact()?;
        Ok(Inputs {
            store,
            scale,
            g1,
            g1t,
            g2,
            split,
        })
    }

    /// Distinct rows of `A`.
    pub fn a_rows(&self) -> Result<usize> {
        Ok(graphgen::row_counts(&self.store, &self.g1t)?.len())
    }

    /// A fresh result table that sums at every scope, pre-split like `G1`.
    pub fn result_table(&self, name: &str) -> Result<TableHandle> {
        let config = TableConfig::new(name)
            .with_sum_combiner()
            .with_splits(self.split.iter().cloned());
        self.store.create_table(config)
    }

    /// Runs `method` into a new table `name`. Returns the stats and table.
    pub fn multiply(&self, method: Method, name: &str, monitor_every: Option<u64>) -> Result<(MultiplyStats, TableHandle)> {
        let c = self.result_table(name)?;
        let stats = match method {
            Method::Outer => {
                let mut extra = Options::new();
                if let Some(n) = monitor_every {
                    extra.insert(opts::MONITOR_EVERY_N.into(), n.to_string());
                }
                let pair = MatrixTablePair {
                    at: self.g1.clone(),
                    b: self.g2.clone(),
                };
                spgemm::table_mult(&self.store, &pair, &c, PLUS_TIMES, &extra)?
            }
            Method::Inner => spgemm::inner_product_mult(&self.store, &self.g1t, &self.g2, &c, PLUS_TIMES)?,
            Method::Hybrid(p) => {
                spgemm::hybrid_mult(&self.store, &self.g1t, &self.g2, &c, PLUS_TIMES, p, HybridOptions::default())?
            }
        };
        Ok((stats, c))
    }

    /// Reference product and the time it took.
    pub fn oracle(&self) -> Result<(Vec<Entry>, f64)> {
        let a = self.store.scan_all(&self.g1t)?;
        let b = self.store.scan_all(&self.g2)?;
        let semiring = self.store.semirings().get(PLUS_TIMES)?;
        let start = Instant::now();
        let c = spgemm::dense_oracle(&a, &b, &*semiring)?;
        Ok((c, start.elapsed().as_secs_f64()))
    }
}

/// Entries left in `c` after a full compaction.
pub fn after_sum(store: &Store, c: &TableHandle) -> Result<u64> {
    c.flush()?;
    c.compact()?;
    let mut n = 0;
    for e in store.scan(c, &RangeSet::all(), &[])? {
        e?;
        n += 1;
    }
    Ok(n)
}

fn check_against(store: &Store, c: &TableHandle, expected: &[Entry], what: &str) -> Result<()> {
    let actual = store.scan_all(c)?;
    if actual.len() != expected.len() {
        return Err(Error::Divergence(format!(
            "{what}: {} entries, reference has {}",
            actual.len(),
            expected.len()
        )));
    }
    if let Some((got, want)) = actual.iter().zip(expected).find(|(a, b)| a != b) {
        return Err(Error::Divergence(format!("{what}: found {got:?}, reference has {want:?}")));
    }
    Ok(())
}

fn effective_p(method: Method, n: usize) -> usize {
    match method {
        Method::Outer => 1,
        Method::Inner => n,
        Method::Hybrid(p) => p,
    }
}

fn measure(spec: &ExperimentSpec, scale: u32) -> Result<(ExperimentRow, Option<f64>)> {
    let inputs = Inputs::generate(scale, spec.edges_per_vertex, spec.seed_a, spec.seed_b, spec.tablets)?;
    let (stats, c) = inputs.multiply(spec.method, "C", spec.monitor_every)?;
    let after = after_sum(&inputs.store, &c)?;
    let oracle_elapsed = if spec.with_oracle {
        let (expected, secs) = inputs.oracle()?;
        check_against(&inputs.store, &c, &expected, spec.method.name())?;
        Some(secs)
    } else {
        None
    };
    let row = ExperimentRow {
        scale,
        tablets: spec.tablets,
        method: spec.method,
        p: effective_p(spec.method, inputs.a_rows()?),
        partial_products: stats.partial_products,
        after_sum: after,
        elapsed_s: stats.elapsed.as_secs_f64(),
        rate_pps: stats.rate_pps(),
        passes_over_b: stats.passes_over_b,
        entries_written_c: stats.entries_written_c,
        oracle_elapsed_s: None,
        reproducible: None,
        stats,
    };
    Ok((row, oracle_elapsed))
}

/// Runs the protocol once per scale.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ExperimentRow>> {
    spec.validate()?;
    let mut rows = Vec::new();
    for &scale in &spec.scales {
        let (mut row, oracle) = measure(spec, scale)?;
        row.oracle_elapsed_s = oracle;
        if spec.check_repeat {
            let (again, _) = measure(spec, scale)?;
            row.reproducible = Some(again.counts() == row.counts());
        }
        log::info!(
            "scale {scale}: {} partial products, {} after sum, {:.0} pp/s",
            row.partial_products,
            row.after_sum,
            row.rate_pps
        );
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompareSpec {
    pub scale: u32,
    pub p_values: Vec<PartitionCount>,
    pub seed_a: u64,
    pub seed_b: u64,
    pub edges_per_vertex: u64,
    pub tablets: usize,
}

impl CompareSpec {
    pub fn new(scale: u32, p_values: Vec<PartitionCount>) -> Self {
        CompareSpec {
            scale,
            p_values,
            seed_a: 1,
            seed_b: 2,
            edges_per_vertex: DEFAULT_EDGES_PER_VERTEX,
            tablets: 1,
        }
    }
}

/// Runs outer, inner and every hybrid `P` on the same inputs. Fails if any
/// result differs from the reference product or any method makes the wrong
/// number of passes over `B`.
pub fn compare_methods(spec: &CompareSpec) -> Result<Vec<ExperimentRow>> {
    if spec.seed_a == spec.seed_b {
        return Err(Error::InvalidSpec("the two graphs need different seeds".into()));
    }
    let inputs = Inputs::generate(spec.scale, spec.edges_per_vertex, spec.seed_a, spec.seed_b, spec.tablets)?;
    let n = inputs.a_rows()?;
    let (expected, oracle_secs) = inputs.oracle()?;

    let mut methods = vec![Method::Outer, Method::Inner];
    methods.extend(spec.p_values.iter().map(|p| Method::Hybrid(p.resolve(n))));

    let mut rows = Vec::new();
    for (idx, method) in methods.into_iter().enumerate() {
        let (stats, c) = inputs.multiply(method, &format!("C{idx}"), None)?;
        let p = effective_p(method, n);
        let want_passes = match method {
            Method::Outer => 1,
            _ => p as u64,
        };
        if stats.passes_over_b != want_passes {
            return Err(Error::Divergence(format!(
                "{method}: {} passes over B, expected {want_passes}",
                stats.passes_over_b
            )));
        }
        check_against(&inputs.store, &c, &expected, &method.to_string())?;
        rows.push(ExperimentRow {
            scale: spec.scale,
            tablets: spec.tablets,
            method,
            p,
            partial_products: stats.partial_products,
            after_sum: after_sum(&inputs.store, &c)?,
            elapsed_s: stats.elapsed.as_secs_f64(),
            rate_pps: stats.rate_pps(),
            passes_over_b: stats.passes_over_b,
            entries_written_c: stats.entries_written_c,
            oracle_elapsed_s: Some(oracle_secs),
            reproducible: None,
            stats,
        });
    }
    Ok(rows)
}

/// Writes rows as CSV. Optional columns appear only when some row has them.
pub fn write_csv<W: Write>(rows: &[ExperimentRow], out: W) -> Result<()> {
    let with_oracle = rows.iter().any(|r| r.oracle_elapsed_s.is_some());
    let with_repeat = rows.iter().any(|r| r.reproducible.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = CSV_HEADER.to_vec();
    if with_oracle {
        header.push("oracle_elapsed_s");
    }
    if with_repeat {
        header.push("reproducible");
    }
    w.write_record(&header)?;
    for r in rows {
        let mut record = vec![
            r.scale.to_string(),
            r.tablets.to_string(),
            r.method.name().to_string(),
            r.p.to_string(),
            r.partial_products.to_string(),
            r.after_sum.to_string(),
            format!("{:.6}", r.elapsed_s),
            format!("{:.1}", r.rate_pps),
            r.passes_over_b.to_string(),
            r.entries_written_c.to_string(),
        ];
        if with_oracle {
            record.push(r.oracle_elapsed_s.map_or(String::new(), |s| format!("{s:.6}")));
        }
        if with_repeat {
            record.push(r.reproducible.map_or(String::new(), |b| b.to_string()));
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

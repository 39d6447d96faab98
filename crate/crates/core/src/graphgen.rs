//! Unpermuted Kronecker power-law graphs.
//!
//! Each edge picks one quadrant of the adjacency matrix per bit of the
//! vertex index with the Graph500 probabilities. Vertices are not
//! relabelled afterwards, so degree falls off steeply with vertex number.

use std::collections::BTreeMap;

use bytes::Bytes;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kvstore::{Entry, RangeSet, Store, TableConfig, TableHandle, WriteStats};
use crate::semiring::PLUS_TIMES;
use crate::spgemm;

pub const DEFAULT_EDGES_PER_VERTEX: u64 = 16;

/// Quadrant probabilities `(A, B, C)`; `D = 1 − A − B − C`.
const QUADRANTS: (f64, f64, f64) = (0.57, 0.19, 0.19);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenSpec {
    /// The graph has `2^scale` vertices.
    pub scale: u32,
    pub edges_per_vertex: u64,
    pub seed: u64,
}

impl GenSpec {
    pub fn new(scale: u32, seed: u64) -> Self {
        GenSpec {
            scale,
            edges_per_vertex: DEFAULT_EDGES_PER_VERTEX,
            seed,
        }
    }

    pub fn with_edges_per_vertex(mut self, epv: u64) -> Self {
        self.edges_per_vertex = epv;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=40).contains(&self.scale) {
            return Err(Error::InvalidSpec(format!("scale {} outside 1..=40", self.scale)));
        }
        if self.edges_per_vertex == 0 {
            return Err(Error::InvalidSpec("edges per vertex must be positive".into()));
        }
        Ok(())
    }

    pub fn vertices(&self) -> u64 {
        1 << self.scale
    }

    pub fn edge_count(&self) -> u64 {
        self.edges_per_vertex << self.scale
    }

    /// Width of a rendered vertex key: `⌈scale·log₁₀2⌉ + 1` digits.
    pub fn key_width(&self) -> usize {
        (f64::from(self.scale) * std::f64::consts::LOG10_2).ceil() as usize + 1
    }

    /// Zero-padded decimal key, so key order is numeric order.
    pub fn vertex_key(&self, v: u64) -> Bytes {
        Bytes::from(format!("{v:0width$}", width = self.key_width()))
    }
}

/// Deterministic edge stream of a [`GenSpec`].
pub struct Edges {
    rng: ChaCha8Rng,
    scale: u32,
    remaining: u64,
}

impl Iterator for Edges {
    type Item = (u64, u64);

    fn next(&mut self) -> Option<(u64, u64)> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let (a, b, c) = QUADRANTS;
        let ab = a + b;
        let c_norm = c / (1.0 - ab);
        let a_norm = a / ab;
        let (mut row, mut col) = (0u64, 0u64);
        for bit in 0..self.scale {
            let row_bit = self.rng.gen::<f64>() > ab;
            let col_bit = self.rng.gen::<f64>() > if row_bit { c_norm } else { a_norm };
            row |= u64::from(row_bit) << bit;
            col |= u64::from(col_bit) << bit;
        }
        Some((row, col))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = usize::try_from(self.remaining).unwrap_or(usize::MAX);
        (n, Some(n))
    }
}

pub fn generate(spec: &GenSpec) -> Result<Edges> {
    spec.validate()?;
    Ok(Edges {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        scale: spec.scale,
        remaining: spec.edge_count(),
    })
}

/// Creates an adjacency table that sums duplicate edges.
pub fn create_adjacency_table(store: &Store, name: &str) -> Result<TableHandle> {
    store.create_table(TableConfig::new(name).with_sum_combiner())
}

/// Writes each edge `(u, v)` as `(key(u), key(v), 1)` into `table`, and
/// mirrored into `transpose` when given. Both tables must sum duplicates.
pub fn ingest_adjacency<I>(
    spec: &GenSpec,
    edges: I,
    table: &TableHandle,
    transpose: Option<&TableHandle>,
) -> Result<WriteStats>
where
    I: IntoIterator<Item = (u64, u64)>,
{
    for t in std::iter::once(table).chain(transpose) {
        spgemm::require_combiner(t, PLUS_TIMES)?;
    }
    let one = Bytes::from_static(b"1");
    let mut writer = table.writer();
    let mut t_writer = transpose.map(|t| t.writer());
    for (u, v) in edges {
        let (ku, kv) = (spec.vertex_key(u), spec.vertex_key(v));
        if let Some(w) = t_writer.as_mut() {
            w.add(Entry::new(kv.clone(), ku.clone(), one.clone()))?;
        }
        writer.add(Entry::new(ku, kv, one.clone()))?;
    }
    if let Some(w) = t_writer {
        w.close()?;
    }
    writer.close()
}

/// Entries per row, in row order.
pub fn row_counts(store: &Store, table: &TableHandle) -> Result<BTreeMap<Bytes, u64>> {
    let mut counts = BTreeMap::new();
    for e in store.scan(table, &RangeSet::all(), &[])? {
        *counts.entry(e?.key.row).or_insert(0u64) += 1;
    }
    Ok(counts)
}

/// The row after which splitting leaves the two halves' entry counts
/// closest, earliest row on ties.
pub fn find_even_split(store: &Store, table: &TableHandle) -> Result<Bytes> {
    let counts: Vec<(Bytes, u64)> = row_counts(store, table)?.into_iter().collect();
    match counts.len() {
        0 => return Err(Error::EmptyTable(table.name().to_string())),
        1 => return Err(Error::NoEvenSplit(table.name().to_string())),
        _ => {}
    }
    let total: u64 = counts.iter().map(|(_, n)| n).sum();
    let mut lower = 0u64;
    let mut best: Option<(u64, &Bytes)> = None;
    for (row, n) in &counts[..counts.len() - 1] {
        lower += n;
        let diff = lower.abs_diff(total - lower);
        if best.is_none_or(|(d, _)| diff < d) {
            best = Some((diff, row));
        }
    }
    Ok(best.expect("at least two rows").1.clone())
}

//! Shared fixtures for the benchmarks.

use tablemult_core::experiment::{Inputs, Method};
use tablemult_core::graphgen::DEFAULT_EDGES_PER_VERTEX;
use tablemult_core::{Entry, Result, Store, TableConfig, TableHandle};

/// Generated inputs at `scale` on one or two tablets, with a counter for
/// unique result table names across benchmark iterations.
pub struct GraphFixture {
    pub inputs: Inputs,
    runs: usize,
}

impl GraphFixture {
    pub fn new(scale: u32, tablets: usize) -> Result<Self> {
        Ok(GraphFixture {
            inputs: Inputs::generate(scale, DEFAULT_EDGES_PER_VERTEX, 1, 2, tablets)?,
            runs: 0,
        })
    }

    /// Multiplies into a fresh table and drops it afterwards.
    pub fn multiply(&mut self, method: Method) -> Result<u64> {
        self.runs += 1;
        let name = format!("C{}", self.runs);
        let (stats, _) = self.inputs.multiply(method, &name, None)?;
        self.inputs.store.drop_table(&name)?;
        Ok(stats.partial_products)
    }
}

/// `n` entries over `rows` rows in a scrambled but fixed order.
pub fn scrambled_entries(n: u64, rows: u64) -> Vec<Entry> {
    (0..n)
        .map(|i| {
            let x = i.wrapping_mul(0x9e37_79b9_7f4a_7c15) >> 16;
            Entry::new(format!("r{:08}", x % rows), format!("c{:06}", x % 997), "1")
        })
        .collect()
}

pub fn summing_table(store: &Store, name: &str, memmap_limit: usize) -> Result<TableHandle> {
    store.create_table(
        TableConfig::new(name)
            .with_sum_combiner()
            .with_memmap_limit(memmap_limit),
    )
}

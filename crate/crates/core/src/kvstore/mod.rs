//! Embedded sorted key-value store.
//!
//! Tables are split into tablets covering `(low, high]` row ranges. Writes
//! land in a tablet's in-memory map; flushes turn that map into an immutable
//! sorted run and compactions merge runs. Scans merge-sort all of it and
//! collapse duplicate keys with the table's combiner, or keep the newest
//! version where no combiner is installed.

mod dump;
mod key;
mod range;
mod run;
mod scan;
mod table;
mod writer;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use parking_lot::RwLock;

pub use dump::{read_dump, write_dump};
pub use key::{Entry, Key, KeyRange, Value};
pub use range::{Overlap, RangeSet, RowRange};
pub use run::{SortedRun, SortedRunBuilder};
pub use scan::{ScanStream, TableSource};
pub use table::{
    CombinerConfig, Scope, Scopes, Table, TableConfig, TableHandle, TabletInfo, DEFAULT_MAX_RUNS,
    DEFAULT_MEMMAP_ENTRIES,
};
pub use writer::{BatchWriter, WriteStats, DEFAULT_WRITER_BUFFER};

use crate::error::{Error, Result};
use crate::iterstack::{IteratorEnv, IteratorRegistry, IteratorSpec, MultiplyCounters};
use crate::semiring::{Semiring, SemiringRegistry};
use scan::ScanPart;

struct StoreInner {
    tables: RwLock<BTreeMap<String, TableHandle>>,
    semirings: SemiringRegistry,
    iterators: IteratorRegistry,
}

/// Handle to an in-process store; clones share the same tables.
#[derive(Clone)]
pub struct Store {
    inner: Arc<StoreInner>,
}

impl Default for Store {
    fn default() -> Self {
        Store::new()
    }
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("tables", &self.table_names()).finish()
    }
}

impl Store {
    pub fn new() -> Self {
        Store {
            inner: Arc::new(StoreInner {
                tables: RwLock::new(BTreeMap::new()),
                semirings: SemiringRegistry::with_builtins(),
                iterators: IteratorRegistry::with_builtins(),
            }),
        }
    }

    pub fn semirings(&self) -> &SemiringRegistry {
        &self.inner.semirings
    }

    pub fn register_semiring<S: Semiring>(&self, semiring: S) {
        self.inner.semirings.register(semiring);
    }

    pub fn iterators(&self) -> &IteratorRegistry {
        &self.inner.iterators
    }

    pub fn create_table(&self, config: TableConfig) -> Result<TableHandle> {
        let combiner = match &config.combiner {
            Some(c) => Some(self.inner.semirings.get(&c.semiring)?),
            None => None,
        };
        let mut tables = self.inner.tables.write();
        if tables.contains_key(&config.name) {
            return Err(Error::TableExists(config.name));
        }
        let table = Arc::new(Table::new(config, combiner)?);
        tables.insert(table.name().to_string(), table.clone());
        Ok(table)
    }

    pub fn table(&self, name: &str) -> Result<TableHandle> {
        self.inner
            .tables
            .read()
            .get(name)
            .cloned()
            .ok_or_else(|| Error::NoSuchTable(name.to_string()))
    }

    pub fn table_exists(&self, name: &str) -> bool {
        self.inner.tables.read().contains_key(name)
    }

    pub fn table_names(&self) -> Vec<String> {
        self.inner.tables.read().keys().cloned().collect()
    }

    /// Removes the table. Outstanding handles and writers start failing.
    pub fn drop_table(&self, name: &str) -> Result<()> {
        let table = self
            .inner
            .tables
            .write()
            .remove(name)
            .ok_or_else(|| Error::NoSuchTable(name.to_string()))?;
        table.mark_dropped();
        Ok(())
    }

    fn part(
        &self,
        table: &TableHandle,
        tablet: Arc<table::Tablet>,
        ranges: Vec<KeyRange>,
        iterators: &[IteratorSpec],
        counters: &Arc<MultiplyCounters>,
    ) -> Result<ScanPart> {
        let env = IteratorEnv {
            store: self.clone(),
            table: table.clone(),
            tablet: tablet.key_range().clone(),
            counters: counters.clone(),
        };
        let base = Box::new(TableSource::new(table, vec![tablet]));
        let stack = self.inner.iterators.build_stack(base, iterators, &env)?;
        Ok(ScanPart {
            stack,
            ranges: ranges.into(),
        })
    }

    fn parts(
        &self,
        table: &TableHandle,
        ranges: &RangeSet,
        iterators: &[IteratorSpec],
        counters: &Arc<MultiplyCounters>,
    ) -> Result<Vec<ScanPart>> {
        table.check_live()?;
        let mut parts = Vec::new();
        for tablet in table.tablets() {
            let clipped = ranges.clip(tablet.key_range());
            if !clipped.is_empty() {
                parts.push(self.part(table, tablet, clipped, iterators, counters)?);
            }
        }
        Ok(parts)
    }

    /// A stack over a single tablet serving exactly `ranges`.
    pub(crate) fn tablet_stream(
        &self,
        table: &TableHandle,
        tablet: usize,
        ranges: Vec<KeyRange>,
        iterators: &[IteratorSpec],
    ) -> Result<ScanStream> {
        table.check_live()?;
        let tablet = table.tablets().get(tablet).cloned().ok_or_else(|| Error::InvalidConfig {
            table: table.name().to_string(),
            reason: format!("no tablet {tablet}"),
        })?;
        let counters = Arc::new(MultiplyCounters::default());
        Ok(ScanStream::new(vec![self.part(table, tablet, ranges, iterators, &counters)?]))
    }

    /// Sequential scan, tablet by tablet.
    pub fn scan(&self, table: &TableHandle, ranges: &RangeSet, iterators: &[IteratorSpec]) -> Result<ScanStream> {
        let counters = Arc::new(MultiplyCounters::default());
        Ok(ScanStream::new(self.parts(table, ranges, iterators, &counters)?))
    }

    /// Every entry of the table, collected.
    pub fn scan_all(&self, table: &TableHandle) -> Result<Vec<Entry>> {
        self.scan(table, &RangeSet::all(), &[])?.collect()
    }

    /// Scans all tablets concurrently, one thread per tablet, and returns
    /// the results concatenated in tablet order.
    pub fn batch_scan(&self, table: &TableHandle, ranges: &RangeSet, iterators: &[IteratorSpec]) -> Result<Vec<Entry>> {
        self.batch_scan_with(table, ranges, iterators, &Arc::new(MultiplyCounters::default()))
    }

    /// [`Store::batch_scan`] with caller-provided counters shared by every stack.
    pub fn batch_scan_with(
        &self,
        table: &TableHandle,
        ranges: &RangeSet,
        iterators: &[IteratorSpec],
        counters: &Arc<MultiplyCounters>,
    ) -> Result<Vec<Entry>> {
        let parts = self.parts(table, ranges, iterators, counters)?;
        if parts.len() <= 1 {
            let mut out = Vec::new();
            for part in parts {
                part.run(&mut out)?;
            }
            return Ok(out);
        }
        let results: Vec<Result<Vec<Entry>>> = std::thread::scope(|s| {
            let handles: Vec<_> = parts
                .into_iter()
                .map(|part| {
                    s.spawn(move || {
                        let mut out = Vec::new();
                        part.run(&mut out).map(|_| out)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("scan thread panicked"))
                .collect()
        });
        let mut out = Vec::new();
        for r in results {
            out.extend(r?);
        }
        Ok(out)
    }

    /// Writes the table in dump format.
    pub fn dump_table<W: Write>(&self, table: &TableHandle, out: W) -> Result<u64> {
        write_dump(self.scan(table, &RangeSet::all(), &[])?, out)
    }

    /// Loads a dump into the table through a batch writer.
    pub fn load_table<R: BufRead>(&self, table: &TableHandle, input: R) -> Result<WriteStats> {
        table.batch_write(read_dump(input)?)
    }
}

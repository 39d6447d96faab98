//! Server-side iterator stacks.
//!
//! A stack is a chain of [`SortedKeyValueIterator`]s over one tablet. Each
//! iterator is built by a named [`IteratorFactory`] from a flat option map, so
//! a stack can be destroyed and rebuilt from its specs at any time. The
//! TableMult stack is `two-table` (align and multiply against a second
//! table) topped by `remote-write` (write results elsewhere, emit progress).

mod filter;
mod remote_source;
mod remote_write;
mod stats;
mod subset;
mod two_table;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use bytes::Bytes;
use parking_lot::RwLock;

use crate::error::{Error, Result};
use crate::kvstore::{Key, KeyRange, Store, TableHandle, Value};

pub use filter::ColumnFilter;
pub use remote_source::{RemoteSource, SubsetSource};
pub use remote_write::{rebuild_and_resume, MonitorEntry, RemoteWrite, StackSpec, TransposeMode, MONITOR_CQ};
pub use stats::{MultiplyCounters, MultiplyStats};
pub use subset::parse_subset_expr;
pub use two_table::{Align, TwoTable, DEFAULT_ROW_MEMORY_CAP};

/// Recognized option keys. Every iterator of a stack receives the same map
/// and ignores keys it does not use.
pub mod opts {
    pub const AT_TABLE: &str = "AT.table";
    pub const AT_ROW_SUBSET: &str = "AT.rowSubset";
    pub const AT_COL_SUBSET: &str = "AT.colSubset";
    pub const B_ROW_SUBSET: &str = "B.rowSubset";
    pub const B_COL_SUBSET: &str = "B.colSubset";
    pub const C_TABLE: &str = "C.table";
    pub const CT_TABLE: &str = "CT.table";
    pub const C_TRANSPOSE: &str = "C.transpose";
    pub const MONITOR_EVERY_N: &str = "monitor.everyN";
    pub const SEMIRING: &str = "semiring";
    pub const ALIGN: &str = "align";
    pub const ROW_MEMORY_CAP: &str = "rowMemoryCap";
    pub const FILTER_CQ: &str = "filter.cq";
    /// Set by [`super::rebuild_and_resume`]: progress count carried over
    /// from the monitor entry being resumed from.
    pub const RESUME_COUNT: &str = "monitor.resumeCount";
}

pub const TWO_TABLE: &str = "two-table";
pub const REMOTE_WRITE: &str = "remote-write";
pub const COLUMN_FILTER: &str = "column-filter";

/// Where a checkpointing iterator currently stands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Checkpoint {
    /// Between the entries of one unit of work; stopping here is unsafe.
    Inside,
    /// Everything through `last_row` has been emitted, and the top (if any)
    /// starts new work. `consumed` counts the source entries behind it.
    Boundary { last_row: Option<Bytes>, consumed: u64 },
}

/// The sorted, seekable iterator contract. `has_top` is false until the
/// first `seek`.
pub trait SortedKeyValueIterator: Send {
    /// Positions the iterator at the first entry in `range`.
    fn seek(&mut self, range: &KeyRange) -> Result<()>;
    fn has_top(&self) -> bool;
    fn top_key(&self) -> &Key;
    fn top_value(&self) -> &Value;
    fn next(&mut self) -> Result<()>;

    /// Safe-point reporting, for iterators whose output comes in blocks.
    fn checkpoint(&self) -> Option<Checkpoint> {
        None
    }
}

pub type BoxedIterator = Box<dyn SortedKeyValueIterator>;

impl SortedKeyValueIterator for BoxedIterator {
    fn seek(&mut self, range: &KeyRange) -> Result<()> {
        (**self).seek(range)
    }
    fn has_top(&self) -> bool {
        (**self).has_top()
    }
    fn top_key(&self) -> &Key {
        (**self).top_key()
    }
    fn top_value(&self) -> &Value {
        (**self).top_value()
    }
    fn next(&mut self) -> Result<()> {
        (**self).next()
    }
    fn checkpoint(&self) -> Option<Checkpoint> {
        (**self).checkpoint()
    }
}

pub type Options = BTreeMap<String, String>;

/// A named iterator plus its options.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IteratorSpec {
    pub name: String,
    pub options: Options,
}

impl IteratorSpec {
    pub fn new(name: impl Into<String>) -> Self {
        IteratorSpec {
            name: name.into(),
            options: Options::new(),
        }
    }

    pub fn with_options(name: impl Into<String>, options: Options) -> Self {
        IteratorSpec {
            name: name.into(),
            options,
        }
    }

    pub fn option(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.options.insert(key.into(), value.into());
        self
    }
}

/// What a stack knows about where it runs.
#[derive(Clone)]
pub struct IteratorEnv {
    pub store: Store,
    /// The scanned table.
    pub table: TableHandle,
    /// Key range of the tablet the stack serves.
    pub tablet: KeyRange,
    pub counters: Arc<MultiplyCounters>,
}

pub trait IteratorFactory: Send + Sync {
    /// Validates `options` and wraps `source`. Must fail here, not on first
    /// use, when options are malformed.
    fn build(&self, source: BoxedIterator, options: &Options, env: &IteratorEnv) -> Result<BoxedIterator>;
}

impl<F> IteratorFactory for F
where
    F: Fn(BoxedIterator, &Options, &IteratorEnv) -> Result<BoxedIterator> + Send + Sync,
{
    fn build(&self, source: BoxedIterator, options: &Options, env: &IteratorEnv) -> Result<BoxedIterator> {
        self(source, options, env)
    }
}

pub struct IteratorRegistry {
    factories: RwLock<HashMap<String, Arc<dyn IteratorFactory>>>,
}

impl IteratorRegistry {
    pub fn with_builtins() -> Self {
        let registry = IteratorRegistry {
            factories: RwLock::new(HashMap::new()),
        };
        registry.register(TWO_TABLE, two_table::build);
        registry.register(REMOTE_WRITE, remote_write::build);
        registry.register(COLUMN_FILTER, filter::build);
        registry
    }

    pub fn register(&self, name: impl Into<String>, factory: impl IteratorFactory + 'static) {
        self.factories.write().insert(name.into(), Arc::new(factory));
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<_> = self.factories.read().keys().cloned().collect();
        names.sort();
        names
    }

    /// Wraps `base` in each spec, first spec innermost.
    pub fn build_stack(&self, base: BoxedIterator, specs: &[IteratorSpec], env: &IteratorEnv) -> Result<BoxedIterator> {
        specs.iter().try_fold(base, |source, spec| {
            let factory = self
                .factories
                .read()
                .get(&spec.name)
                .cloned()
                .ok_or_else(|| Error::UnknownIterator(spec.name.clone()))?;
            factory.build(source, &spec.options, env)
        })
    }
}

impl Default for IteratorRegistry {
    fn default() -> Self {
        IteratorRegistry::with_builtins()
    }
}

impl fmt::Debug for IteratorRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IteratorRegistry").field("names", &self.names()).finish()
    }
}

pub(crate) fn parse_count(options: &Options, key: &str) -> Result<Option<u64>> {
    match options.get(key) {
        None => Ok(None),
        Some(v) => match v.parse::<u64>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::option(key, format!("expected a positive integer, got {v:?}"))),
        },
    }
}

/// A subset expression option: `None` when absent or empty.
pub(crate) fn parse_subset_option(options: &Options, key: &str) -> Result<Option<crate::kvstore::RangeSet>> {
    match options.get(key) {
        None => Ok(None),
        Some(v) if v.is_empty() => Ok(None),
        Some(v) => parse_subset_expr(v)
            .map(Some)
            .map_err(|e| Error::option(key, e.to_string())),
    }
}

#[cfg(test)]
mod tests;

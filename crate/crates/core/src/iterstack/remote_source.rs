use std::collections::VecDeque;
use std::sync::atomic::AtomicU64;
use std::sync::Arc;

use super::stats::{bump, MultiplyCounters};
use super::{BoxedIterator, SortedKeyValueIterator};
use crate::error::Result;
use crate::kvstore::{Key, KeyRange, RangeSet, Store, TableSource, Value};

type CounterField = fn(&MultiplyCounters) -> &AtomicU64;

/// Restricts a source to row and column subsets and counts every entry it
/// reads, whether or not the entry passes the column filter.
///
/// Row subsets become seeks on the inner source; column subsets are a
/// post-filter on the column qualifier.
pub struct SubsetSource {
    inner: BoxedIterator,
    rows: Option<RangeSet>,
    cols: Option<RangeSet>,
    pending: VecDeque<KeyRange>,
    active: bool,
    read: u64,
    shared: Option<(Arc<MultiplyCounters>, CounterField)>,
}

/// A source over a different table than the one being scanned.
pub type RemoteSource = SubsetSource;

impl SubsetSource {
    pub fn new(inner: BoxedIterator, rows: Option<RangeSet>, cols: Option<RangeSet>) -> Self {
        SubsetSource {
            inner,
            rows: rows.filter(|r| !r.is_all()),
            cols,
            pending: VecDeque::new(),
            active: false,
            read: 0,
            shared: None,
        }
    }

    /// Scans the named table of `store`. Fails now if the table is unknown.
    pub fn remote(store: &Store, table: &str, rows: Option<RangeSet>, cols: Option<RangeSet>) -> Result<Self> {
        let table = store.table(table)?;
        Ok(SubsetSource::new(Box::new(TableSource::whole(&table)), rows, cols))
    }

    /// Also adds reads to one field of shared counters.
    pub fn counting(mut self, counters: Arc<MultiplyCounters>, field: CounterField) -> Self {
        self.shared = Some((counters, field));
        self
    }

    /// Entries read from the inner source so far, across seeks.
    pub fn read(&self) -> u64 {
        self.read
    }

    fn consume(&mut self) -> Result<()> {
        self.read += 1;
        if let Some((c, field)) = &self.shared {
            bump(field(c), 1);
        }
        self.inner.next()
    }

    fn settle(&mut self) -> Result<()> {
        loop {
            while self.inner.has_top()
                && self
                    .cols
                    .as_ref()
                    .is_some_and(|cols| !cols.contains_row(&self.inner.top_key().cq))
            {
                self.consume()?;
            }
            if self.inner.has_top() {
                return Ok(());
            }
            match self.pending.pop_front() {
                Some(range) => self.inner.seek(&range)?,
                None => {
                    self.active = false;
                    return Ok(());
                }
            }
        }
    }
}

impl SortedKeyValueIterator for SubsetSource {
    fn seek(&mut self, range: &KeyRange) -> Result<()> {
        self.pending = match &self.rows {
            Some(rows) => rows.clip(range).into(),
            None => VecDeque::from([range.clone()]),
        };
        self.active = true;
        match self.pending.pop_front() {
            Some(first) => self.inner.seek(&first)?,
            None => {
                self.active = false;
                return Ok(());
            }
        }
        self.settle()
    }

    fn has_top(&self) -> bool {
        self.active && self.inner.has_top()
    }

    fn top_key(&self) -> &Key {
        self.inner.top_key()
    }

    fn top_value(&self) -> &Value {
        self.inner.top_value()
    }

    fn next(&mut self) -> Result<()> {
        self.consume()?;
        self.settle()
    }
}

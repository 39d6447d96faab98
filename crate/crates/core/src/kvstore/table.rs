use std::collections::btree_map;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{BitOr, Bound};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use bytes::Bytes;
use parking_lot::{Mutex, RwLock};
use smallvec::{smallvec, SmallVec};

use super::key::{Entry, Key, KeyRange};
use super::run::{SortedRun, SortedRunBuilder};
use super::writer::BatchWriter;
use crate::error::{Error, Result};
use crate::semiring::{ValueSemiring, PLUS_TIMES};

pub const DEFAULT_MEMMAP_ENTRIES: usize = 1 << 20;
pub const DEFAULT_MAX_RUNS: usize = 8;

/// The points in an entry's life where a combiner may collapse duplicates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    Scan,
    Flush,
    Compact,
}

#[derive(Clone, Copy, PartialEq, Eq, Default)]
pub struct Scopes(u8);

impl Scopes {
    pub const NONE: Scopes = Scopes(0);
    pub const SCAN: Scopes = Scopes(1);
    pub const FLUSH: Scopes = Scopes(2);
    pub const COMPACT: Scopes = Scopes(4);
    pub const ALL: Scopes = Scopes(7);

    pub fn contains(self, scope: Scope) -> bool {
        let bit = match scope {
            Scope::Scan => Scopes::SCAN,
            Scope::Flush => Scopes::FLUSH,
            Scope::Compact => Scopes::COMPACT,
        };
        self.0 & bit.0 != 0
    }
}

impl BitOr for Scopes {
    type Output = Scopes;

    fn bitor(self, rhs: Scopes) -> Scopes {
        Scopes(self.0 | rhs.0)
    }
}

impl fmt::Debug for Scopes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = [(Scope::Scan, "scan"), (Scope::Flush, "flush"), (Scope::Compact, "compact")]
            .into_iter()
            .filter(|(s, _)| self.contains(*s))
            .map(|(_, n)| n)
            .collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CombinerConfig {
    /// Registered semiring whose ⊕ collapses duplicate keys.
    pub semiring: String,
    pub scopes: Scopes,
}

#[derive(Clone, Debug)]
pub struct TableConfig {
    pub name: String,
    pub splits: Vec<Bytes>,
    pub combiner: Option<CombinerConfig>,
    /// Buffered key versions per tablet before an automatic flush.
    pub memmap_max_entries: usize,
    /// Sorted runs per tablet before an automatic compaction.
    pub max_runs: usize,
    /// Keep every ingested entry, in arrival order, for inspection.
    pub record_ingest: bool,
}

impl TableConfig {
    pub fn new(name: impl Into<String>) -> Self {
        TableConfig {
            name: name.into(),
            splits: Vec::new(),
            combiner: None,
            memmap_max_entries: DEFAULT_MEMMAP_ENTRIES,
            max_runs: DEFAULT_MAX_RUNS,
            record_ingest: false,
        }
    }

    pub fn with_splits<I, S>(mut self, splits: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<Bytes>,
    {
        self.splits = splits.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_combiner(mut self, semiring: impl Into<String>, scopes: Scopes) -> Self {
        self.combiner = Some(CombinerConfig {
            semiring: semiring.into(),
            scopes,
        });
        self
    }

    /// Decimal sum combiner at every scope.
    pub fn with_sum_combiner(self) -> Self {
        self.with_combiner(PLUS_TIMES, Scopes::ALL)
    }

    pub fn with_memmap_limit(mut self, entries: usize) -> Self {
        self.memmap_max_entries = entries;
        self
    }

    pub fn with_max_runs(mut self, runs: usize) -> Self {
        self.max_runs = runs;
        self
    }

    pub fn recording_ingest(mut self) -> Self {
        self.record_ingest = true;
        self
    }
}

/// Duplicate-key policy at one scope: the combiner's ⊕ when it is
/// installed there, otherwise the newest version wins.
#[derive(Clone)]
pub(crate) enum Reducer {
    Latest,
    Combine(Arc<dyn ValueSemiring>),
}

fn bad_value(key: &Key, value: &[u8]) -> Error {
    Error::BadValue {
        key: key.clone(),
        value: String::from_utf8_lossy(value).into_owned(),
    }
}

impl Reducer {
    /// Collapses the versions of one key, oldest first. Combined results
    /// equal to the semiring zero are dropped.
    pub(crate) fn reduce(&self, key: &Key, values: &[Bytes]) -> Result<Option<Bytes>> {
        match self {
            Reducer::Latest => Ok(values.last().cloned()),
            Reducer::Combine(s) => {
                if let [only] = values {
                    return match s.is_zero_value(only) {
                        Some(true) => Ok(None),
                        Some(false) => Ok(Some(only.clone())),
                        None => Err(bad_value(key, only)),
                    };
                }
                let slices: SmallVec<[&[u8]; 8]> = values.iter().map(|v| v.as_ref()).collect();
                s.sum_values(&slices).map_err(|i| bad_value(key, &values[i]))
            }
        }
    }

    fn same_policy(&self, other: &Reducer) -> bool {
        matches!(
            (self, other),
            (Reducer::Latest, Reducer::Latest) | (Reducer::Combine(_), Reducer::Combine(_))
        )
    }
}

type MemValue = SmallVec<[Bytes; 1]>;

#[derive(Default)]
struct TabletState {
    runs: Vec<Arc<SortedRun>>,
    mem: BTreeMap<Key, MemValue>,
    mem_versions: usize,
}

/// Merge-sorts runs (oldest first) and an optional in-memory map over a
/// key range, reduces each key's versions and hands results to `sink` until
/// `limit` entries were produced. Returns whether the sources are exhausted.
fn merge_sources(
    runs: &[Arc<SortedRun>],
    mem: Option<&BTreeMap<Key, MemValue>>,
    range: &KeyRange,
    reducer: &Reducer,
    limit: usize,
    mut sink: impl FnMut(Key, Bytes),
) -> Result<bool> {
    if range.is_empty() {
        return Ok(true);
    }
    let mut cursors: SmallVec<[(usize, usize); 8]> = runs
        .iter()
        .map(|r| (r.lower_bound(&range.start), r.upper_bound(&range.end)))
        .collect();
    let mut mem_iter = mem.map(|m| m.range((range.start.clone(), range.end.clone())).peekable());
    let mut values: SmallVec<[Bytes; 8]> = SmallVec::new();
    let mut produced = 0;

    loop {
        if produced >= limit {
            return Ok(false);
        }
        let mut min: Option<(&[u8], &[u8])> = None;
        for (run, &(pos, end)) in runs.iter().zip(&cursors) {
            if pos < end {
                let parts = run.key_parts(pos);
                if min.is_none_or(|m| parts < m) {
                    min = Some(parts);
                }
            }
        }
        let mem_head = mem_iter.as_mut().and_then(|it| it.peek().map(|(k, _)| *k));
        let mem_is_min = match (mem_head, min) {
            (Some(k), Some(m)) => (k.row.as_ref(), k.cq.as_ref()) <= m,
            (Some(_), None) => true,
            (None, _) => false,
        };
        let key = match (mem_is_min, mem_head, min) {
            (true, Some(k), _) => k.clone(),
            (false, _, Some(_)) => {
                let idx = runs
                    .iter()
                    .zip(&cursors)
                    .position(|(r, &(pos, end))| pos < end && Some(r.key_parts(pos)) == min)
                    .expect("minimum came from a run");
                runs[idx].key(cursors[idx].0)
            }
            _ => return Ok(true),
        };

        values.clear();
        for (run, cursor) in runs.iter().zip(cursors.iter_mut()) {
            if cursor.0 < cursor.1 && key.cmp_parts(run.key_parts(cursor.0).0, run.key_parts(cursor.0).1).is_eq() {
                values.push(run.value(cursor.0));
                cursor.0 += 1;
            }
        }
        if mem_is_min {
            let (_, versions) = mem_iter
                .as_mut()
                .and_then(|it| it.next())
                .expect("peeked memory entry");
            values.extend(versions.iter().cloned());
        }
        if let Some(v) = reducer.reduce(&key, &values)? {
            sink(key, v);
            produced += 1;
        }
    }
}

pub(crate) struct Tablet {
    pub(crate) low: Option<Bytes>,
    pub(crate) high: Option<Bytes>,
    range: KeyRange,
    state: RwLock<TabletState>,
}

impl Tablet {
    fn new(low: Option<Bytes>, high: Option<Bytes>, state: TabletState) -> Self {
        let start = low
            .as_ref()
            .map_or(Bound::Unbounded, |l| Bound::Included(Key::following_row(l)));
        let end = high
            .as_ref()
            .map_or(Bound::Unbounded, |h| Bound::Excluded(Key::following_row(h)));
        Tablet {
            low,
            high,
            range: KeyRange::new(start, end),
            state: RwLock::new(state),
        }
    }

    pub(crate) fn key_range(&self) -> &KeyRange {
        &self.range
    }

    pub(crate) fn contains_row(&self, row: &[u8]) -> bool {
        self.low.as_ref().is_none_or(|l| row > l.as_ref())
            && self.high.as_ref().is_none_or(|h| row <= h.as_ref())
    }

    /// Reads up to `limit` reduced entries in `range` under one read lock.
    pub(crate) fn read_window(
        &self,
        range: &KeyRange,
        reducer: &Reducer,
        limit: usize,
    ) -> Result<(Vec<Entry>, bool)> {
        let state = self.state.read();
        let mut out = Vec::with_capacity(limit.min(1024));
        let exhausted = merge_sources(&state.runs, Some(&state.mem), range, reducer, limit, |key, value| {
            out.push(Entry { key, value })
        })?;
        Ok((out, exhausted))
    }

    fn flush_locked(state: &mut TabletState, reducer: &Reducer) -> Result<bool> {
        if state.mem.is_empty() {
            return Ok(false);
        }
        let mut builder = SortedRunBuilder::new();
        for (key, versions) in &state.mem {
            if let Some(v) = reducer.reduce(key, versions)? {
                builder.push(&key.row, &key.cq, &v);
            }
        }
        state.mem.clear();
        state.mem_versions = 0;
        if !builder.is_empty() {
            state.runs.push(Arc::new(builder.finish()));
        }
        Ok(true)
    }

    fn compact_locked(state: &mut TabletState, range: &KeyRange, reducer: &Reducer) -> Result<()> {
        let mut builder = SortedRunBuilder::new();
        merge_sources(&state.runs, None, range, reducer, usize::MAX, |key, value| {
            builder.push(&key.row, &key.cq, &value)
        })?;
        state.runs.clear();
        if !builder.is_empty() {
            state.runs.push(Arc::new(builder.finish()));
        }
        Ok(())
    }

    /// Merges a suffix of the newest runs so at most `max_runs` remain. The
    /// suffix grows while the next older run is no larger than the suffix,
    /// so big old runs are only rewritten once the small ones catch up.
    fn compact_tail_locked(state: &mut TabletState, max_runs: usize, range: &KeyRange, reducer: &Reducer) -> Result<()> {
        let n = state.runs.len();
        let mut start = n.saturating_sub(max_runs.max(1)).min(n.saturating_sub(2));
        let mut tail: usize = state.runs[start..].iter().map(|r| r.len()).sum();
        while start > 0 && state.runs[start - 1].len() <= tail {
            start -= 1;
            tail += state.runs[start].len();
        }
        let mut builder = SortedRunBuilder::new();
        merge_sources(&state.runs[start..], None, range, reducer, usize::MAX, |key, value| {
            builder.push(&key.row, &key.cq, &value)
        })?;
        state.runs.truncate(start);
        if !builder.is_empty() {
            state.runs.push(Arc::new(builder.finish()));
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
struct TableCounters {
    ingested: AtomicU64,
    flushes: AtomicU64,
    compactions: AtomicU64,
}

/// Per-tablet storage summary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TabletInfo {
    pub low: Option<Bytes>,
    pub high: Option<Bytes>,
    pub runs: usize,
    pub run_entries: usize,
    pub mem_entries: usize,
}

/// A named, sorted table partitioned into tablets at its split rows.
pub struct Table {
    name: String,
    config: TableConfig,
    pub(crate) scan_reducer: Reducer,
    flush_reducer: Reducer,
    compact_reducer: Reducer,
    /// Set when flush and scan reduce alike, so versions can collapse on insert.
    eager: Option<Reducer>,
    tablets: RwLock<Vec<Arc<Tablet>>>,
    dropped: AtomicBool,
    ingest_log: Option<Mutex<Vec<Entry>>>,
    counters: TableCounters,
}

pub type TableHandle = Arc<Table>;

impl Table {
    pub(crate) fn new(config: TableConfig, combiner: Option<Arc<dyn ValueSemiring>>) -> Result<Self> {
        let invalid = |reason: &str| Error::InvalidConfig {
            table: config.name.clone(),
            reason: reason.to_string(),
        };
        if config.splits.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("split rows must be strictly increasing"));
        }
        if config.memmap_max_entries == 0 || config.max_runs == 0 {
            return Err(invalid("memmap and run limits must be positive"));
        }
        let reducer_for = |scope| match (&config.combiner, &combiner) {
            (Some(c), Some(s)) if c.scopes.contains(scope) => Reducer::Combine(s.clone()),
            _ => Reducer::Latest,
        };
        let scan_reducer = reducer_for(Scope::Scan);
        let flush_reducer = reducer_for(Scope::Flush);
        let compact_reducer = reducer_for(Scope::Compact);
        let eager = scan_reducer
            .same_policy(&flush_reducer)
            .then(|| flush_reducer.clone());

        let mut bounds: Vec<Option<Bytes>> = vec![None];
        bounds.extend(config.splits.iter().cloned().map(Some));
        bounds.push(None);
        let tablets = bounds
            .windows(2)
            .map(|w| Arc::new(Tablet::new(w[0].clone(), w[1].clone(), TabletState::default())))
            .collect();

        Ok(Table {
            name: config.name.clone(),
            ingest_log: config.record_ingest.then(|| Mutex::new(Vec::new())),
            config,
            scan_reducer,
            flush_reducer,
            compact_reducer,
            eager,
            tablets: RwLock::new(tablets),
            dropped: AtomicBool::new(false),
            counters: TableCounters::default(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn config(&self) -> &TableConfig {
        &self.config
    }

    pub fn combiner(&self) -> Option<&CombinerConfig> {
        self.config.combiner.as_ref()
    }

    pub fn is_dropped(&self) -> bool {
        self.dropped.load(Ordering::Acquire)
    }

    pub(crate) fn mark_dropped(&self) {
        self.dropped.store(true, Ordering::Release);
    }

    pub(crate) fn check_live(&self) -> Result<()> {
        if self.is_dropped() {
            Err(Error::TableDropped(self.name.clone()))
        } else {
            Ok(())
        }
    }

    pub fn tablet_count(&self) -> usize {
        self.tablets.read().len()
    }

    pub fn splits(&self) -> Vec<Bytes> {
        self.tablets
            .read()
            .iter()
            .filter_map(|t| t.high.clone())
            .collect()
    }

    pub(crate) fn tablets(&self) -> Vec<Arc<Tablet>> {
        self.tablets.read().clone()
    }

    /// Key ranges of the tablets, in row order.
    pub fn tablet_ranges(&self) -> Vec<KeyRange> {
        self.tablets.read().iter().map(|t| t.range.clone()).collect()
    }

    pub fn tablet_info(&self) -> Vec<TabletInfo> {
        self.tablets
            .read()
            .iter()
            .map(|t| {
                let s = t.state.read();
                TabletInfo {
                    low: t.low.clone(),
                    high: t.high.clone(),
                    runs: s.runs.len(),
                    run_entries: s.runs.iter().map(|r| r.len()).sum(),
                    mem_entries: s.mem_versions,
                }
            })
            .collect()
    }

    /// Raw contents of one tablet's runs, oldest first, without reduction
    /// or range clipping.
    pub fn stored_runs(&self, tablet: usize) -> Vec<Vec<Entry>> {
        let tablets = self.tablets.read();
        let state = tablets[tablet].state.read();
        state.runs.iter().map(|r| r.iter().collect()).collect()
    }

    /// Entries in arrival order, when the table records ingest.
    pub fn ingest_log(&self) -> Option<Vec<Entry>> {
        self.ingest_log.as_ref().map(|l| l.lock().clone())
    }

    pub fn entries_ingested(&self) -> u64 {
        self.counters.ingested.load(Ordering::Relaxed)
    }

    /// Automatic plus explicit flushes that produced a run.
    pub fn flush_count(&self) -> u64 {
        self.counters.flushes.load(Ordering::Relaxed)
    }

    pub fn compaction_count(&self) -> u64 {
        self.counters.compactions.load(Ordering::Relaxed)
    }

    pub fn writer(self: &Arc<Self>) -> BatchWriter {
        BatchWriter::new(self.clone())
    }

    /// Writes all entries through a fresh writer and flushes it.
    pub fn batch_write<I>(self: &Arc<Self>, entries: I) -> Result<super::writer::WriteStats>
    where
        I: IntoIterator<Item = Entry>,
    {
        let mut writer = self.writer();
        for e in entries {
            writer.add(e)?;
        }
        writer.close()
    }

    /// Routes a batch to its tablets. Holds the tablet list for the whole
    /// batch so a concurrent split cannot strand entries in a retired tablet.
    pub(crate) fn ingest(&self, batch: Vec<Entry>) -> Result<()> {
        self.check_live()?;
        if let Some(log) = &self.ingest_log {
            log.lock().extend(batch.iter().cloned());
        }
        let n = batch.len() as u64;
        let tablets = self.tablets.read();
        if tablets.len() == 1 {
            self.insert_into(&tablets[0], batch)?;
        } else {
            let mut per_tablet: Vec<Vec<Entry>> = vec![Vec::new(); tablets.len()];
            for e in batch {
                let idx = tablets.partition_point(|t| matches!(&t.high, Some(h) if h.as_ref() < e.key.row.as_ref()));
                per_tablet[idx].push(e);
            }
            for (tablet, entries) in tablets.iter().zip(per_tablet) {
                if !entries.is_empty() {
                    self.insert_into(tablet, entries)?;
                }
            }
        }
        self.counters.ingested.fetch_add(n, Ordering::Relaxed);
        Ok(())
    }

    fn insert_into(&self, tablet: &Tablet, entries: Vec<Entry>) -> Result<()> {
        let mut state = tablet.state.write();
        for Entry { key, value } in entries {
            match state.mem.entry(key) {
                btree_map::Entry::Vacant(slot) => {
                    slot.insert(smallvec![value]);
                    state.mem_versions += 1;
                }
                btree_map::Entry::Occupied(mut slot) => match &self.eager {
                    Some(Reducer::Latest) => slot.get_mut()[0] = value,
                    Some(Reducer::Combine(s)) => {
                        match s.sum_values(&[&slot.get()[0], &value]) {
                            Ok(Some(sum)) => slot.get_mut()[0] = sum,
                            Ok(None) => {
                                slot.remove();
                                state.mem_versions -= 1;
                            }
                            Err(i) => {
                                let bad = if i == 0 { slot.get()[0].clone() } else { value };
                                return Err(bad_value(slot.key(), &bad));
                            }
                        }
                    }
                    None => {
                        slot.get_mut().push(value);
                        state.mem_versions += 1;
                    }
                },
            }
            if state.mem_versions >= self.config.memmap_max_entries {
                self.flush_and_maybe_compact(tablet, &mut state)?;
            }
        }
        Ok(())
    }

    fn flush_and_maybe_compact(&self, tablet: &Tablet, state: &mut TabletState) -> Result<()> {
        if Tablet::flush_locked(state, &self.flush_reducer)? {
            self.counters.flushes.fetch_add(1, Ordering::Relaxed);
        }
        if state.runs.len() > self.config.max_runs {
            log::debug!("{}: compacting {} runs", self.name, state.runs.len());
            Tablet::compact_tail_locked(state, self.config.max_runs, &tablet.range, &self.compact_reducer)?;
            self.counters.compactions.fetch_add(1, Ordering::Relaxed);
        }
        Ok(())
    }

    /// Moves every tablet's in-memory map into a new sorted run.
    pub fn flush(&self) -> Result<()> {
        self.check_live()?;
        for tablet in self.tablets() {
            let mut state = tablet.state.write();
            if Tablet::flush_locked(&mut state, &self.flush_reducer)? {
                self.counters.flushes.fetch_add(1, Ordering::Relaxed);
            }
        }
        Ok(())
    }

    /// Merges each tablet's runs into one, dropping entries outside the
    /// tablet's range. The in-memory map is left alone.
    pub fn compact(&self) -> Result<()> {
        self.check_live()?;
        for tablet in self.tablets() {
            let mut state = tablet.state.write();
            if state.runs.is_empty() {
                continue;
            }
            Tablet::compact_locked(&mut state, &tablet.range, &self.compact_reducer)?;
            self.counters.compactions.fetch_add(1, Ordering::Relaxed);
        }
        Ok(())
    }

    /// Divides the tablet holding `row` at `row`. Both halves share the
    /// parent's runs until compaction rewrites them.
    pub fn add_split(&self, row: impl Into<Bytes>) -> Result<()> {
        self.check_live()?;
        let row = row.into();
        let mut tablets = self.tablets.write();
        if tablets.iter().any(|t| t.high.as_ref() == Some(&row)) {
            return Err(Error::DuplicateSplit(String::from_utf8_lossy(&row).into_owned()));
        }
        let idx = tablets
            .iter()
            .position(|t| t.contains_row(&row))
            .expect("tablets cover every row");
        let parent = tablets[idx].clone();
        let mut state = parent.state.write();
        let right_mem = state.mem.split_off(&Key::following_row(&row));
        let right_versions: usize = right_mem.values().map(|v| v.len()).sum();
        let left = TabletState {
            runs: state.runs.clone(),
            mem_versions: state.mem_versions - right_versions,
            mem: std::mem::take(&mut state.mem),
        };
        let right = TabletState {
            runs: state.runs.clone(),
            mem: right_mem,
            mem_versions: right_versions,
        };
        let new_left = Arc::new(Tablet::new(parent.low.clone(), Some(row.clone()), left));
        let new_right = Arc::new(Tablet::new(Some(row), parent.high.clone(), right));
        drop(state);
        tablets.splice(idx..=idx, [new_left, new_right]);
        Ok(())
    }
}

impl fmt::Debug for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Table")
            .field("name", &self.name)
            .field("tablets", &self.tablet_count())
            .field("combiner", &self.config.combiner)
            .finish()
    }
}

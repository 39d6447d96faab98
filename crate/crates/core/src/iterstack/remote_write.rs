use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use bytes::Bytes;

use super::stats::{bump, MultiplyCounters};
use super::{opts, parse_count, parse_subset_option, BoxedIterator, Checkpoint, IteratorEnv, IteratorSpec, Options, SortedKeyValueIterator};
use crate::error::{Error, Result};
use crate::kvstore::{BatchWriter, Entry, Key, KeyRange, RangeSet, ScanStream, Store, Value};

/// Column qualifier marking monitor entries in a scan's output.
pub const MONITOR_CQ: &str = "~monitor";

/// Progress report: every source entry through `row` has been processed
/// and its results flushed, `count` source entries in total.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonitorEntry {
    pub row: Bytes,
    pub count: u64,
}

impl MonitorEntry {
    pub fn to_entry(&self) -> Entry {
        Entry::new(self.row.clone(), MONITOR_CQ, self.count.to_string())
    }

    /// Parses a monitor entry, rejecting anything else.
    pub fn from_entry(entry: &Entry) -> Result<MonitorEntry> {
        if entry.key.cq.as_ref() != MONITOR_CQ.as_bytes() {
            return Err(Error::BadResumeToken(format!("{} is not a monitor entry", entry.key)));
        }
        let count = std::str::from_utf8(&entry.value)
            .ok()
            .and_then(|v| v.parse::<u64>().ok())
            .ok_or_else(|| {
                Error::BadResumeToken(format!("monitor count {:?} is not a count", String::from_utf8_lossy(&entry.value)))
            })?;
        Ok(MonitorEntry {
            row: entry.key.row.clone(),
            count,
        })
    }

    pub fn is_monitor(entry: &Entry) -> bool {
        entry.key.cq.as_ref() == MONITOR_CQ.as_bytes()
    }
}

/// Which orientation(s) of each entry `remote-write` stores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum TransposeMode {
    /// `(r, c, v)` into `C.table`.
    #[default]
    C,
    /// `(c, r, v)` into `C.table`.
    CT,
    /// `(r, c, v)` into `C.table` and `(c, r, v)` into `CT.table`.
    Both,
}

impl FromStr for TransposeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "c" => Ok(TransposeMode::C),
            "ct" => Ok(TransposeMode::CT),
            "both" => Ok(TransposeMode::Both),
            other => Err(Error::option(opts::C_TRANSPOSE, format!("expected c, ct or both, got {other:?}"))),
        }
    }
}

impl fmt::Display for TransposeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransposeMode::C => "c",
            TransposeMode::CT => "ct",
            TransposeMode::Both => "both",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    Running,
    Finished,
}

/// Drains its source into other tables and emits only monitor entries.
///
/// One seek covers every `B.rowSubset` range inside the seek range: the
/// iterator seeks its own source range by range, so the writers are flushed
/// once per invocation no matter how many ranges there are. With
/// `monitor.everyN` set it also pauses at the first safe point past each
/// multiple of N, flushes, and emits a [`MonitorEntry`].
pub struct RemoteWrite {
    source: BoxedIterator,
    rows: RangeSet,
    c: BatchWriter,
    ct: Option<BatchWriter>,
    mode: TransposeMode,
    every_n: Option<u64>,
    offset: u64,
    last_monitored: u64,
    next_threshold: u64,
    counters: Arc<MultiplyCounters>,
    pending: VecDeque<KeyRange>,
    phase: Phase,
    top: Option<Entry>,
    written: u64,
    /// Progress of sources without checkpoints: entries and the last row.
    own_count: u64,
    last_row: Option<Bytes>,
}

impl RemoteWrite {
    pub fn new(
        source: BoxedIterator,
        c: BatchWriter,
        ct: Option<BatchWriter>,
        mode: TransposeMode,
        counters: Arc<MultiplyCounters>,
    ) -> Self {
        RemoteWrite {
            source,
            rows: RangeSet::all(),
            c,
            ct,
            mode,
            every_n: None,
            offset: 0,
            last_monitored: 0,
            next_threshold: u64::MAX,
            counters,
            pending: VecDeque::new(),
            phase: Phase::Idle,
            top: None,
            written: 0,
            own_count: 0,
            last_row: None,
        }
    }

    pub fn with_rows(mut self, rows: RangeSet) -> Self {
        self.rows = rows;
        self
    }

    pub fn with_monitor(mut self, every_n: Option<u64>, resume_count: u64) -> Self {
        self.every_n = every_n;
        self.offset = resume_count;
        self.last_monitored = resume_count;
        self.next_threshold = every_n.map_or(u64::MAX, |n| (resume_count / n + 1) * n);
        self
    }

    fn aborted(&self, table: &str, source: Error) -> Error {
        match source {
            Error::ContractViolation(_) => source,
            source => Error::WriteAborted {
                table: table.to_string(),
                written: self.written,
                source: Box::new(source),
            },
        }
    }

    fn write(&mut self, entry: Entry) -> Result<()> {
        let (first, second) = match self.mode {
            TransposeMode::C => (entry, None),
            TransposeMode::CT => (entry.transposed(), None),
            TransposeMode::Both => {
                let t = entry.transposed();
                (entry, Some(t))
            }
        };
        if let Err(e) = self.c.add(first) {
            return Err(self.aborted(self.c.table().name(), e));
        }
        self.written += 1;
        if let (Some(t), Some(ct)) = (second, self.ct.as_mut()) {
            if let Err(e) = ct.add(t) {
                let name = ct.table().name().to_string();
                return Err(self.aborted(&name, e));
            }
            self.written += 1;
            bump(&self.counters.entries_written_c, 2);
        } else {
            bump(&self.counters.entries_written_c, 1);
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        if let Err(e) = self.c.flush() {
            return Err(self.aborted(self.c.table().name(), e));
        }
        if let Some(ct) = self.ct.as_mut() {
            if let Err(e) = ct.flush() {
                let name = ct.table().name().to_string();
                return Err(self.aborted(&name, e));
            }
        }
        bump(&self.counters.flush_count, 1);
        Ok(())
    }

    /// The resume point just before the source's top, if that is safe.
    fn safe_point(&self) -> Option<(Bytes, u64)> {
        match self.source.checkpoint() {
            Some(Checkpoint::Boundary {
                last_row: Some(row),
                consumed,
            }) => Some((row, self.offset + consumed)),
            Some(_) => None,
            None => {
                let last = self.last_row.as_ref()?;
                (self.source.top_key().row != *last).then(|| (last.clone(), self.offset + self.own_count))
            }
        }
    }

    fn final_point(&self) -> Option<(Bytes, u64)> {
        match self.source.checkpoint() {
            Some(Checkpoint::Boundary {
                last_row: Some(row),
                consumed,
            }) => Some((row, self.offset + consumed)),
            Some(_) => None,
            None => self.last_row.clone().map(|r| (r, self.offset + self.own_count)),
        }
    }

    fn emit_monitor(&mut self, row: Bytes, count: u64) {
        self.last_monitored = count;
        bump(&self.counters.monitor_entries, 1);
        self.top = Some(MonitorEntry { row, count }.to_entry());
    }

    /// Works until the next monitor entry or the end of the invocation.
    fn run(&mut self) -> Result<()> {
        loop {
            while self.source.has_top() {
                if let Some(n) = self.every_n {
                    if let Some((row, count)) = self.safe_point() {
                        if count >= self.next_threshold && count > self.last_monitored {
                            self.flush()?;
                            self.next_threshold = (count / n + 1) * n;
                            self.emit_monitor(row, count);
                            return Ok(());
                        }
                    }
                }
                let entry = Entry {
                    key: self.source.top_key().clone(),
                    value: self.source.top_value().clone(),
                };
                self.own_count += 1;
                self.last_row = Some(entry.key.row.clone());
                self.write(entry)?;
                self.source.next()?;
            }
            match self.pending.pop_front() {
                Some(range) => self.source.seek(&range)?,
                None => break,
            }
        }
        self.phase = Phase::Finished;
        self.flush()?;
        if let Some((row, count)) = self.final_point() {
            if count > self.last_monitored && count > 0 {
                self.emit_monitor(row, count);
            }
        }
        Ok(())
    }
}

impl SortedKeyValueIterator for RemoteWrite {
    fn seek(&mut self, range: &KeyRange) -> Result<()> {
        self.pending = self.rows.clip(range).into();
        self.top = None;
        self.phase = Phase::Running;
        match self.pending.pop_front() {
            Some(first) => self.source.seek(&first)?,
            None => {
                // Nothing to read, but the invocation still ends with a flush.
                self.phase = Phase::Finished;
                return self.flush();
            }
        }
        self.run()
    }

    fn has_top(&self) -> bool {
        self.top.is_some()
    }

    fn top_key(&self) -> &Key {
        &self.top.as_ref().expect("has_top").key
    }

    fn top_value(&self) -> &Value {
        &self.top.as_ref().expect("has_top").value
    }

    fn next(&mut self) -> Result<()> {
        self.top = None;
        match self.phase {
            Phase::Running => self.run(),
            Phase::Idle | Phase::Finished => Ok(()),
        }
    }
}

pub(super) fn build(source: BoxedIterator, options: &Options, env: &IteratorEnv) -> Result<BoxedIterator> {
    let c_name = options
        .get(opts::C_TABLE)
        .ok_or_else(|| Error::option(opts::C_TABLE, "required"))?;
    let mode = options
        .get(opts::C_TRANSPOSE)
        .map_or(Ok(TransposeMode::C), |m| m.parse())?;
    let ct_name = match mode {
        TransposeMode::Both => Some(
            options
                .get(opts::CT_TABLE)
                .ok_or_else(|| Error::option(opts::CT_TABLE, "required when C.transpose is both"))?,
        ),
        _ => None,
    };
    let inputs = [Some(env.table.name()), options.get(opts::AT_TABLE).map(String::as_str)];
    for target in std::iter::once(c_name).chain(ct_name) {
        if inputs.contains(&Some(target.as_str())) {
            return Err(Error::Unsupported(format!("writing results into input table `{target}`")));
        }
    }
    let every_n = parse_count(options, opts::MONITOR_EVERY_N)?;
    let resume_count = match options.get(opts::RESUME_COUNT) {
        None => 0,
        Some(v) => v
            .parse::<u64>()
            .map_err(|_| Error::option(opts::RESUME_COUNT, format!("expected a count, got {v:?}")))?,
    };
    let rows = parse_subset_option(options, opts::B_ROW_SUBSET)?.unwrap_or_default();
    let c = env.store.table(c_name)?.writer();
    let ct = match ct_name {
        Some(name) => Some(env.store.table(name)?.writer()),
        None => None,
    };
    Ok(Box::new(
        RemoteWrite::new(source, c, ct, mode, env.counters.clone())
            .with_rows(rows)
            .with_monitor(every_n, resume_count),
    ))
}

/// Enough to rebuild one tablet's stack from scratch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StackSpec {
    pub table: String,
    /// Index of the tablet, in row order.
    pub tablet: usize,
    pub iterators: Vec<IteratorSpec>,
}

/// Builds a fresh stack for `spec` that continues after `token`: the scan
/// starts past the monitor's row and monitor counts continue from its
/// count. Without a token the stack starts from the beginning.
pub fn rebuild_and_resume(store: &Store, spec: &StackSpec, token: Option<&Entry>) -> Result<ScanStream> {
    let table = store.table(&spec.table)?;
    let ranges = table.tablet_ranges();
    let tablet_range = ranges
        .get(spec.tablet)
        .ok_or_else(|| Error::BadResumeToken(format!("`{}` has no tablet {}", spec.table, spec.tablet)))?;
    let mut iterators = spec.iterators.clone();
    let range = match token {
        None => Some(tablet_range.clone()),
        Some(entry) => {
            let monitor = MonitorEntry::from_entry(entry)?;
            if !tablet_range.contains(&Key::row_start(monitor.row.clone())) {
                return Err(Error::BadResumeToken(format!(
                    "monitor row {:?} lies outside tablet {}",
                    String::from_utf8_lossy(&monitor.row),
                    spec.tablet
                )));
            }
            for it in &mut iterators {
                it.options
                    .insert(opts::RESUME_COUNT.to_string(), monitor.count.to_string());
            }
            tablet_range.after_row(&monitor.row)
        }
    };
    store.tablet_stream(&table, spec.tablet, range.into_iter().collect(), &iterators)
}

use std::collections::VecDeque;
use std::ops::Bound;
use std::sync::Arc;

use super::key::{Entry, Key, KeyRange, Value};
use super::table::{Reducer, Table, Tablet};
use crate::error::Result;
use crate::iterstack::{BoxedIterator, Checkpoint, SortedKeyValueIterator};

/// Entries materialized per read-lock acquisition.
const WINDOW: usize = 4096;

/// Merge-sorted, scan-scope-reduced view of a sequence of tablets, read in
/// bounded windows so writers are never blocked for a whole scan.
pub struct TableSource {
    tablets: Vec<Arc<Tablet>>,
    reducer: Reducer,
    /// Remaining pieces of the seek range, one per overlapping tablet.
    pending: VecDeque<(usize, KeyRange)>,
    window: VecDeque<Entry>,
    /// Resumption point inside the current tablet piece.
    cursor: Option<(usize, KeyRange)>,
}

impl TableSource {
    pub(crate) fn new(table: &Table, tablets: Vec<Arc<Tablet>>) -> Self {
        TableSource {
            tablets,
            reducer: table.scan_reducer.clone(),
            pending: VecDeque::new(),
            window: VecDeque::new(),
            cursor: None,
        }
    }

    /// Every tablet of the table.
    pub fn whole(table: &Table) -> Self {
        TableSource::new(table, table.tablets())
    }

    fn fill(&mut self) -> Result<()> {
        while self.window.is_empty() {
            let (idx, range) = match self.cursor.take().or_else(|| self.pending.pop_front()) {
                Some(piece) => piece,
                None => return Ok(()),
            };
            let (entries, exhausted) = self.tablets[idx].read_window(&range, &self.reducer, WINDOW)?;
            if !exhausted {
                let last = entries.last().expect("unexhausted window is non-empty").key.clone();
                self.cursor = Some((idx, KeyRange::new(Bound::Excluded(last), range.end)));
            }
            self.window.extend(entries);
        }
        Ok(())
    }
}

impl SortedKeyValueIterator for TableSource {
    fn seek(&mut self, range: &KeyRange) -> Result<()> {
        self.window.clear();
        self.cursor = None;
        self.pending = self
            .tablets
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.key_range().intersect(range).map(|r| (i, r)))
            .collect();
        self.fill()
    }

    fn has_top(&self) -> bool {
        !self.window.is_empty()
    }

    fn top_key(&self) -> &Key {
        &self.window.front().expect("has_top").key
    }

    fn top_value(&self) -> &Value {
        &self.window.front().expect("has_top").value
    }

    fn next(&mut self) -> Result<()> {
        self.window.pop_front();
        self.fill()
    }
}

/// One tablet's stack and the key ranges it still has to serve.
pub(crate) struct ScanPart {
    pub(crate) stack: BoxedIterator,
    pub(crate) ranges: VecDeque<KeyRange>,
}

impl ScanPart {
    /// Drains the part into `out`.
    pub(crate) fn run(mut self, out: &mut Vec<Entry>) -> Result<()> {
        while let Some(range) = self.ranges.pop_front() {
            self.stack.seek(&range)?;
            while self.stack.has_top() {
                out.push(Entry {
                    key: self.stack.top_key().clone(),
                    value: self.stack.top_value().clone(),
                });
                self.stack.next()?;
            }
        }
        Ok(())
    }
}

/// Sequential scan over tablets in row order. Every stack is built before
/// the first entry is produced, so option errors surface up front.
pub struct ScanStream {
    parts: VecDeque<ScanPart>,
    /// The part being drained and whether its top was already yielded.
    active: Option<(ScanPart, bool)>,
    failed: bool,
}

impl ScanStream {
    pub(crate) fn new(parts: Vec<ScanPart>) -> Self {
        ScanStream {
            parts: parts.into(),
            active: None,
            failed: false,
        }
    }

    /// Resume position of the stack currently being drained, if it has one.
    pub fn checkpoint(&self) -> Option<Checkpoint> {
        self.active.as_ref().and_then(|(p, _)| p.stack.checkpoint())
    }

    fn step(&mut self) -> Result<Option<Entry>> {
        loop {
            if let Some((part, yielded)) = &mut self.active {
                if *yielded {
                    part.stack.next()?;
                    *yielded = false;
                }
                if part.stack.has_top() {
                    *yielded = true;
                    return Ok(Some(Entry {
                        key: part.stack.top_key().clone(),
                        value: part.stack.top_value().clone(),
                    }));
                }
                match part.ranges.pop_front() {
                    Some(range) => part.stack.seek(&range)?,
                    None => self.active = None,
                }
                continue;
            }
            match self.parts.pop_front() {
                Some(part) => self.active = Some((part, false)),
                None => return Ok(None),
            }
        }
    }
}

impl Iterator for ScanStream {
    type Item = Result<Entry>;

    fn next(&mut self) -> Option<Result<Entry>> {
        if self.failed {
            return None;
        }
        match self.step() {
            Ok(e) => e.map(Ok),
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

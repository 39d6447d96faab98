use std::sync::Arc;

use super::key::Entry;
use super::table::Table;
use crate::error::Result;

pub const DEFAULT_WRITER_BUFFER: usize = 1 << 14;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WriteStats {
    /// Entries delivered to the table.
    pub entries_written: u64,
    /// Buffer hand-offs to the table, automatic or explicit.
    pub buffer_sends: u64,
    /// Explicit `flush` or `close` calls.
    pub flushes: u64,
}

/// Buffers entries in arrival order and routes them to tablets in batches.
/// Dropping a writer discards anything not yet flushed.
pub struct BatchWriter {
    table: Arc<Table>,
    buffer: Vec<Entry>,
    capacity: usize,
    stats: WriteStats,
}

impl BatchWriter {
    pub(crate) fn new(table: Arc<Table>) -> Self {
        BatchWriter {
            table,
            buffer: Vec::new(),
            capacity: DEFAULT_WRITER_BUFFER,
            stats: WriteStats::default(),
        }
    }

    pub fn with_buffer(mut self, entries: usize) -> Self {
        self.capacity = entries.max(1);
        self
    }

    pub fn table(&self) -> &Arc<Table> {
        &self.table
    }

    pub fn add(&mut self, entry: Entry) -> Result<()> {
        self.table.check_live()?;
        self.buffer.push(entry);
        if self.buffer.len() >= self.capacity {
            self.send()?;
        }
        Ok(())
    }

    pub fn add_all<I: IntoIterator<Item = Entry>>(&mut self, entries: I) -> Result<()> {
        entries.into_iter().try_for_each(|e| self.add(e))
    }

    fn send(&mut self) -> Result<()> {
        if self.buffer.is_empty() {
            return Ok(());
        }
        let batch = std::mem::take(&mut self.buffer);
        let n = batch.len() as u64;
        self.table.ingest(batch)?;
        self.stats.entries_written += n;
        self.stats.buffer_sends += 1;
        Ok(())
    }

    /// Delivers everything buffered so far.
    pub fn flush(&mut self) -> Result<()> {
        self.stats.flushes += 1;
        self.table.check_live()?;
        self.send()
    }

    pub fn stats(&self) -> WriteStats {
        self.stats
    }

    /// Buffered entries not yet delivered.
    pub fn pending(&self) -> usize {
        self.buffer.len()
    }

    pub fn close(mut self) -> Result<WriteStats> {
        self.flush()?;
        Ok(self.stats)
    }
}

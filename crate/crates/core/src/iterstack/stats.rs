use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

/// Live counters shared by every stack of one multiply.
#[derive(Debug, Default)]
pub struct MultiplyCounters {
    pub partial_products: AtomicU64,
    pub zero_products_dropped: AtomicU64,
    pub entries_read_a: AtomicU64,
    pub entries_read_b: AtomicU64,
    pub entries_written_c: AtomicU64,
    pub flush_count: AtomicU64,
    pub passes_over_b: AtomicU64,
    pub monitor_entries: AtomicU64,
}

pub(crate) fn bump(counter: &AtomicU64, n: u64) {
    counter.fetch_add(n, Ordering::Relaxed);
}

impl MultiplyCounters {
    pub fn snapshot(&self, elapsed: Duration) -> MultiplyStats {
        let get = |c: &AtomicU64| c.load(Ordering::Relaxed);
        MultiplyStats {
            partial_products: get(&self.partial_products),
            zero_products_dropped: get(&self.zero_products_dropped),
            entries_read_a: get(&self.entries_read_a),
            entries_read_b: get(&self.entries_read_b),
            entries_written_c: get(&self.entries_written_c),
            flush_count: get(&self.flush_count),
            passes_over_b: get(&self.passes_over_b),
            monitor_entries: get(&self.monitor_entries),
            elapsed,
        }
    }
}

/// Outcome of one multiply.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MultiplyStats {
    /// ⊗ evaluations, including those whose result was zero.
    pub partial_products: u64,
    /// Partial products equal to the semiring zero, never written.
    pub zero_products_dropped: u64,
    pub entries_read_a: u64,
    pub entries_read_b: u64,
    /// Entries handed to the result table, and to its transpose if any.
    pub entries_written_c: u64,
    pub flush_count: u64,
    pub passes_over_b: u64,
    pub monitor_entries: u64,
    pub elapsed: Duration,
}

impl MultiplyStats {
    /// Partial products per second of wall-clock time.
    pub fn rate_pps(&self) -> f64 {
        let secs = self.elapsed.as_secs_f64();
        if secs > 0.0 {
            self.partial_products as f64 / secs
        } else {
            0.0
        }
    }

    /// The same stats with the timing zeroed, for determinism comparisons.
    pub fn counts_only(&self) -> MultiplyStats {
        MultiplyStats {
            elapsed: Duration::ZERO,
            ..*self
        }
    }
}

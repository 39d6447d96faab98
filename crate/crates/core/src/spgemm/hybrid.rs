use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use bytes::Bytes;

use super::{accumulate, bad_value, read_rows, require_combiner, require_distinct, RowGroups};
use crate::error::{Error, Result};
use crate::iterstack::MultiplyStats;
use crate::kvstore::{BatchWriter, Entry, RangeSet, Store, TableHandle};
use crate::semiring::{Operand, ValueSemiring};

pub const DEFAULT_CACHE_CAP: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HybridOptions {
    /// Distinct `C` positions pre-summed per pass. Partial products for
    /// positions beyond the cap are written unsummed.
    pub cache_cap: usize,
}

impl Default for HybridOptions {
    fn default() -> Self {
        HybridOptions {
            cache_cap: DEFAULT_CACHE_CAP,
        }
    }
}

/// Row-rank bounds of every pass: pass `p` (1-based) covers ranks
/// `(⌊(p−1)N/P⌋, ⌊pN/P⌋]`, returned here as half-open 0-based index ranges.
pub fn partition_bounds(n: usize, p: usize) -> Result<Vec<std::ops::Range<usize>>> {
    if p == 0 || p > n {
        return Err(Error::PartitionOutOfRange { p, n });
    }
    Ok((1..=p).map(|q| (q - 1) * n / p..q * n / p).collect())
}

struct Pass<'a> {
    semiring: &'a dyn ValueSemiring,
    writer: &'a mut BatchWriter,
    cache: Option<BTreeMap<(Bytes, Bytes), Bytes>>,
    cap: usize,
    stats: &'a mut MultiplyStats,
}

impl Pass<'_> {
    fn emit(&mut self, i: &Bytes, j: &Bytes, p: Bytes) -> Result<()> {
        if let Some(cache) = &mut self.cache {
            let key = (i.clone(), j.clone());
            if cache.len() < self.cap || cache.contains_key(&key) {
                accumulate(self.semiring, cache, key, p);
                return Ok(());
            }
        }
        self.stats.entries_written_c += 1;
        self.writer.add(Entry::new(i.clone(), j.clone(), p))
    }

    fn finish(self) -> Result<()> {
        if let Some(cache) = self.cache {
            self.stats.entries_written_c += cache.len() as u64;
            self.writer
                .add_all(cache.into_iter().map(|((i, j), v)| Entry::new(i, j, v)))?;
        }
        Ok(())
    }
}

/// Hybrid multiply `C ⊕= A ⊕.⊗ B` with `A` stored row-major, in `p` passes
/// over `B`.
///
/// Pass `q` takes the rows of `A` whose rank in key order falls in the
/// `q`-th slice of [`partition_bounds`], and pairs every column `k` of that
/// slice with row `k` of `B`. With `p > 1`, partial products are pre-summed
/// per pass up to the cache cap and written in key order. With `p = 1`
/// nothing is cached, so every partial product is written in the same order
/// as the outer product writes it.
pub fn hybrid_mult(
    store: &Store,
    a: &TableHandle,
    b: &TableHandle,
    target: &TableHandle,
    semiring: &str,
    p: usize,
    options: HybridOptions,
) -> Result<MultiplyStats> {
    let s = store.semirings().get(semiring)?;
    require_distinct(target, &[a, b])?;
    require_combiner(target, semiring)?;

    let start = Instant::now();
    let rows = read_rows(store, a)?;
    let bounds = partition_bounds(rows.len(), p)?;
    let mut stats = MultiplyStats {
        entries_read_a: rows.iter().map(|(_, cols)| cols.len() as u64).sum(),
        ..Default::default()
    };

    let mut writer = target.writer();
    for slice in bounds {
        // Column k of this slice of A, as (i, A(i,k)) in row order.
        let mut columns: HashMap<&Bytes, Vec<(&Bytes, &Bytes)>> = HashMap::new();
        for (i, cols) in &rows[slice] {
            for (k, v) in cols {
                columns.entry(k).or_default().push((i, v));
            }
        }
        stats.passes_over_b += 1;
        let mut pass_stats = MultiplyStats::default();
        let mut pass = Pass {
            semiring: &*s,
            writer: &mut writer,
            cache: (p > 1).then(BTreeMap::new),
            cap: options.cache_cap,
            stats: &mut pass_stats,
        };
        for group in RowGroups::new(store.scan(b, &RangeSet::all(), &[])?) {
            let (k, b_row) = group?;
            pass.stats.entries_read_b += b_row.len() as u64;
            let Some(column) = columns.get(&k) else { continue };
            for &(i, a_val) in column {
                for (j, b_val) in &b_row {
                    pass.stats.partial_products += 1;
                    match s.times_values(a_val, b_val) {
                        Ok(Some(prod)) => pass.emit(i, j, prod)?,
                        Ok(None) => pass.stats.zero_products_dropped += 1,
                        Err(Operand::Left(_)) => return Err(bad_value(i, &k, a_val)),
                        Err(Operand::Right(_)) => return Err(bad_value(&k, j, b_val)),
                    }
                }
            }
        }
        pass.finish()?;
        stats.entries_read_b += pass_stats.entries_read_b;
        stats.partial_products += pass_stats.partial_products;
        stats.zero_products_dropped += pass_stats.zero_products_dropped;
        stats.entries_written_c += pass_stats.entries_written_c;
    }
    writer.flush()?;
    stats.flush_count = 1;
    stats.elapsed = start.elapsed();
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_bounds() {
        assert_eq!(partition_bounds(8, 3).unwrap(), vec![0..2, 2..5, 5..8]);
        assert_eq!(partition_bounds(5, 5).unwrap(), vec![0..1, 1..2, 2..3, 3..4, 4..5]);
        assert_eq!(partition_bounds(7, 1).unwrap(), vec![0..7]);
        assert!(matches!(partition_bounds(3, 4), Err(Error::PartitionOutOfRange { p: 4, n: 3 })));
        assert!(matches!(partition_bounds(3, 0), Err(Error::PartitionOutOfRange { .. })));
    }
}

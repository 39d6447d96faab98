use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use bytes::Bytes;

use super::{accumulate, bad_value, read_rows, require_combiner, require_distinct, RowGroups};
use crate::error::Result;
use crate::iterstack::MultiplyStats;
use crate::kvstore::{Entry, RangeSet, Store, TableHandle};
use crate::semiring::Operand;

/// Inner-product multiply `C ⊕= A ⊕.⊗ B` with `A` stored row-major.
///
/// For each row `i` of `A` the whole of `B` is scanned once and row `i` of
/// `C` is summed in memory, then written in column order. Every entry
/// written is final, so `entries_written_c` equals `nnz(C)`.
pub fn inner_product_mult(
    store: &Store,
    a: &TableHandle,
    b: &TableHandle,
    target: &TableHandle,
    semiring: &str,
) -> Result<MultiplyStats> {
    let s = store.semirings().get(semiring)?;
    require_distinct(target, &[a, b])?;
    require_combiner(target, semiring)?;

    let start = Instant::now();
    let mut stats = MultiplyStats::default();
    let rows = read_rows(store, a)?;
    stats.entries_read_a = rows.iter().map(|(_, cols)| cols.len() as u64).sum();

    let mut writer = target.writer();
    for (i, a_row) in &rows {
        let a_row: HashMap<&Bytes, &Bytes> = a_row.iter().map(|(k, v)| (k, v)).collect();
        let mut c_row: BTreeMap<Bytes, Bytes> = BTreeMap::new();
        stats.passes_over_b += 1;
        for group in RowGroups::new(store.scan(b, &RangeSet::all(), &[])?) {
            let (k, b_row) = group?;
            stats.entries_read_b += b_row.len() as u64;
            let Some(&a_val) = a_row.get(&k) else { continue };
            for (j, b_val) in b_row {
                stats.partial_products += 1;
                match s.times_values(a_val, &b_val) {
                    Ok(Some(p)) => accumulate(&*s, &mut c_row, j, p),
                    Ok(None) => stats.zero_products_dropped += 1,
                    Err(Operand::Left(_)) => return Err(bad_value(i, &k, a_val)),
                    Err(Operand::Right(_)) => return Err(bad_value(&k, &j, &b_val)),
                }
            }
        }
        stats.entries_written_c += c_row.len() as u64;
        writer.add_all(c_row.into_iter().map(|(j, v)| Entry::new(i.clone(), j, v)))?;
    }
    writer.flush()?;
    stats.flush_count = 1;
    stats.elapsed = start.elapsed();
    Ok(stats)
}

use std::collections::{BTreeMap, HashMap};

use bytes::Bytes;

use super::{accumulate, bad_value};
use crate::error::Result;
use crate::kvstore::{Entry, RangeSet, Store, TableHandle};
use crate::semiring::{Operand, ValueSemiring};

/// Reference product of `A` (row-major entries) and `B`, computed entirely
/// in memory by looping over rows of `A`, their columns, and the matching
/// rows of `B`. Returns the nonzero entries of `C` in key order.
pub fn dense_oracle(a: &[Entry], b: &[Entry], semiring: &dyn ValueSemiring) -> Result<Vec<Entry>> {
    let mut b_rows: HashMap<&Bytes, Vec<(&Bytes, &Bytes)>> = HashMap::new();
    for e in b {
        b_rows.entry(&e.key.row).or_default().push((&e.key.cq, &e.value));
    }
    let mut c: BTreeMap<(Bytes, Bytes), Bytes> = BTreeMap::new();
    for e in a {
        let (i, k, a_val) = (&e.key.row, &e.key.cq, &e.value);
        let Some(row) = b_rows.get(k) else { continue };
        for &(j, b_val) in row {
            match semiring.times_values(a_val, b_val) {
                Ok(Some(p)) => accumulate(semiring, &mut c, (i.clone(), j.clone()), p),
                Ok(None) => {}
                Err(Operand::Left(_)) => return Err(bad_value(i, k, a_val)),
                Err(Operand::Right(_)) => return Err(bad_value(k, j, b_val)),
            }
        }
    }
    Ok(c.into_iter().map(|((i, j), v)| Entry::new(i, j, v)).collect())
}

fn row_counts(store: &Store, table: &TableHandle) -> Result<BTreeMap<Bytes, u64>> {
    let mut counts = BTreeMap::new();
    for e in store.scan(table, &RangeSet::all(), &[])? {
        *counts.entry(e?.key.row).or_insert(0) += 1;
    }
    Ok(counts)
}

/// `Σₖ |row k of Aᵀ| · |row k of B|`: the number of partial products an
/// outer-product multiply of the two tables evaluates.
pub fn count_partial_products(store: &Store, at: &TableHandle, b: &TableHandle) -> Result<u64> {
    let at_counts = row_counts(store, at)?;
    let b_counts = row_counts(store, b)?;
    Ok(at_counts
        .iter()
        .filter_map(|(k, n)| b_counts.get(k).map(|m| n * m))
        .sum())
}

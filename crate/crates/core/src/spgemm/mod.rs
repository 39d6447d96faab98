//! Sparse matrix multiplication over tables.
//!
//! A matrix is a table whose row and column qualifier are the two indices.
//! Three strategies compute `C = A ⊕.⊗ B`:
//!
//! * [`table_mult`]: outer product, the production path. It runs the
//!   `two-table` + `remote-write` stack on every tablet of `B`, reading `Aᵀ`
//!   and `B` once and writing every partial product to `C`, whose combiner
//!   does the summing.
//! * [`inner_product_mult`]: one pass over `B` per row of `A`, writing
//!   finished, sorted rows of `C`.
//! * [`hybrid_mult`]: `P` passes over `B`, each over a slice of `A`'s rows,
//!   pre-summing within the slice.
//!
//! [`dense_oracle`] is an in-memory reference for all three.

mod hybrid;
mod inner;
mod oracle;
mod tablemult;

use std::collections::BTreeMap;

use bytes::Bytes;

pub use hybrid::{hybrid_mult, partition_bounds, HybridOptions, DEFAULT_CACHE_CAP};
pub use inner::inner_product_mult;
pub use oracle::{count_partial_products, dense_oracle};
pub use tablemult::{table_mult, table_mult_specs, MatrixTablePair};

use crate::error::{Error, Result};
use crate::kvstore::{Entry, Scopes, Store, TableHandle};

/// Checks that `target` sums with `semiring` at every scope.
pub(crate) fn require_combiner(target: &TableHandle, semiring: &str) -> Result<()> {
    match target.combiner() {
        Some(c) if c.semiring == semiring && c.scopes == Scopes::ALL => Ok(()),
        _ => Err(Error::MissingCombiner {
            table: target.name().to_string(),
            semiring: semiring.to_string(),
        }),
    }
}

pub(crate) fn require_distinct(target: &TableHandle, inputs: &[&TableHandle]) -> Result<()> {
    if inputs.iter().any(|t| t.name() == target.name()) {
        return Err(Error::Unsupported(format!(
            "writing results into input table `{}`",
            target.name()
        )));
    }
    Ok(())
}

/// One row and its `(column, value)` pairs.
pub(crate) type RowEntries = (Bytes, Vec<(Bytes, Bytes)>);

/// A table's rows in key order.
pub(crate) fn read_rows(store: &Store, table: &TableHandle) -> Result<Vec<RowEntries>> {
    let mut rows: Vec<RowEntries> = Vec::new();
    for entry in store.scan(table, &Default::default(), &[])? {
        let Entry { key, value } = entry?;
        match rows.last_mut() {
            Some((row, cols)) if *row == key.row => cols.push((key.cq, value)),
            _ => rows.push((key.row, vec![(key.cq, value)])),
        }
    }
    Ok(rows)
}

/// Groups a sorted entry stream into rows, one row at a time.
pub(crate) struct RowGroups<I: Iterator> {
    inner: std::iter::Peekable<I>,
}

impl<I: Iterator<Item = Result<Entry>>> RowGroups<I> {
    pub(crate) fn new(inner: I) -> Self {
        RowGroups {
            inner: inner.peekable(),
        }
    }
}

impl<I: Iterator<Item = Result<Entry>>> Iterator for RowGroups<I> {
    type Item = Result<(Bytes, Vec<(Bytes, Bytes)>)>;

    fn next(&mut self) -> Option<Self::Item> {
        let first = match self.inner.next()? {
            Ok(e) => e,
            Err(e) => return Some(Err(e)),
        };
        let row = first.key.row.clone();
        let mut cols = vec![(first.key.cq, first.value)];
        while let Some(Ok(e)) = self.inner.peek() {
            if e.key.row != row {
                break;
            }
            let e = self.inner.next().expect("peeked").expect("peeked ok");
            cols.push((e.key.cq, e.value));
        }
        Some(Ok((row, cols)))
    }
}

pub(crate) fn bad_value(row: &Bytes, col: &Bytes, value: &Bytes) -> Error {
    Error::BadValue {
        key: crate::kvstore::Key::new(row.clone(), col.clone()),
        value: String::from_utf8_lossy(value).into_owned(),
    }
}

/// `acc[key] ⊕= value`, dropping keys whose sum becomes zero.
pub(crate) fn accumulate<K: Ord>(
    semiring: &dyn crate::semiring::ValueSemiring,
    acc: &mut BTreeMap<K, Bytes>,
    key: K,
    value: Bytes,
) {
    use std::collections::btree_map::Entry as Slot;
    match acc.entry(key) {
        Slot::Vacant(slot) => {
            slot.insert(value);
        }
        Slot::Occupied(mut slot) => match semiring.sum_values(&[slot.get(), &value]) {
            Ok(Some(sum)) => *slot.get_mut() = sum,
            Ok(None) => {
                slot.remove();
            }
            Err(_) => unreachable!("operands were produced by the semiring"),
        },
    }
}

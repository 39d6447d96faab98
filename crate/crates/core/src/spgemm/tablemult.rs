use std::sync::Arc;
use std::time::Instant;

use super::{require_combiner, require_distinct};
use crate::error::Result;
use crate::iterstack::{opts, IteratorSpec, MultiplyCounters, MultiplyStats, Options, REMOTE_WRITE, TWO_TABLE};
use crate::kvstore::{RangeSet, Store, TableHandle};
use crate::semiring::PLUS_TIMES;

/// The inputs of an outer-product multiply. `at` holds `Aᵀ`: its row `k`
/// is column `k` of `A`.
#[derive(Clone, Debug)]
pub struct MatrixTablePair {
    pub at: TableHandle,
    pub b: TableHandle,
}

/// The iterator stack [`table_mult`] places on `B`. `extra` may add or
/// override any option (subsets, transpose mode, monitoring).
pub fn table_mult_specs(pair: &MatrixTablePair, target: &TableHandle, semiring: &str, extra: &Options) -> Vec<IteratorSpec> {
    let mut options = Options::new();
    options.insert(opts::AT_TABLE.into(), pair.at.name().into());
    options.insert(opts::C_TABLE.into(), target.name().into());
    options.insert(opts::SEMIRING.into(), semiring.into());
    options.extend(extra.iter().map(|(k, v)| (k.clone(), v.clone())));
    vec![
        IteratorSpec::with_options(TWO_TABLE, options.clone()),
        IteratorSpec::with_options(REMOTE_WRITE, options),
    ]
}

/// Outer-product multiply `C ⊕= A ⊕.⊗ B`, one stack per tablet of `B`,
/// all running concurrently.
///
/// The target (and the `CT.table` target, when writing both orientations)
/// must sum with `semiring` at every combiner scope, since partial products
/// reach it unsummed.
pub fn table_mult(
    store: &Store,
    pair: &MatrixTablePair,
    target: &TableHandle,
    semiring: &str,
    extra: &Options,
) -> Result<MultiplyStats> {
    let semiring = if semiring.is_empty() { PLUS_TIMES } else { semiring };
    store.semirings().get(semiring)?;
    require_distinct(target, &[&pair.at, &pair.b])?;
    require_combiner(target, semiring)?;
    if extra.get(opts::C_TRANSPOSE).map(String::as_str) == Some("both") {
        if let Some(ct) = extra.get(opts::CT_TABLE) {
            let ct = store.table(ct)?;
            require_distinct(&ct, &[&pair.at, &pair.b])?;
            require_combiner(&ct, semiring)?;
        }
    }
    let specs = table_mult_specs(pair, target, semiring, extra);
    let counters = Arc::new(MultiplyCounters::default());
    let start = Instant::now();
    store.batch_scan_with(&pair.b, &RangeSet::all(), &specs, &counters)?;
    counters.passes_over_b.store(1, std::sync::atomic::Ordering::Relaxed);
    Ok(counters.snapshot(start.elapsed()))
}

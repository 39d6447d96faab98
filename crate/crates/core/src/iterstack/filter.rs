use super::{opts, parse_subset_option, BoxedIterator, IteratorEnv, Options, SubsetSource};
use crate::error::Result;

/// Keeps entries whose column qualifier lies in the `filter.cq` subset.
pub type ColumnFilter = SubsetSource;

pub(super) fn build(source: BoxedIterator, options: &Options, _env: &IteratorEnv) -> Result<BoxedIterator> {
    let cols = parse_subset_option(options, opts::FILTER_CQ)?;
    Ok(Box::new(SubsetSource::new(source, None, cols)))
}

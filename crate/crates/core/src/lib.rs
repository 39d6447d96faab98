//! Sorted tablet store with server-side iterator stacks, and semiring
//! sparse matrix multiplication built on it.
//!
//! * [`kvstore`]: tables of `(row, column, value)` entries split into
//!   tablets, with batched writes, merge-sorted scans and combiners.
//! * [`iterstack`]: the iterator framework and the multiply iterators.
//! * [`spgemm`]: outer, inner and hybrid multiplication plus a reference.
//! * [`graphgen`]: power-law input graphs.
//! * [`experiment`]: the benchmark protocol and its CSV output.

pub mod decimal;
pub mod error;
pub mod experiment;
pub mod graphgen;
pub mod iterstack;
pub mod kvstore;
pub mod semiring;
pub mod spgemm;

pub use decimal::Decimal;
pub use error::{Error, Result};
pub use iterstack::{IteratorSpec, MonitorEntry, MultiplyStats, TransposeMode};
pub use kvstore::{Entry, Key, KeyRange, RangeSet, RowRange, Scopes, Store, TableConfig, TableHandle};
pub use semiring::{MinPlus, PlusTimes, Semiring, ValueSemiring, MIN_PLUS, PLUS_TIMES};
pub use spgemm::MatrixTablePair;

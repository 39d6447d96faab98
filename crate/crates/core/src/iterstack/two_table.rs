use std::ops::Bound;
use std::sync::atomic::AtomicU64;
use std::sync::Arc;

use bytes::Bytes;

use super::stats::{bump, MultiplyCounters};
use super::{opts, parse_subset_option, BoxedIterator, Checkpoint, IteratorEnv, Options, SortedKeyValueIterator, SubsetSource};
use crate::error::{Error, Result};
use crate::kvstore::{Entry, Key, KeyRange, Value};
use crate::semiring::{Operand, RowProduct, ValueSemiring, PLUS_TIMES};

pub const DEFAULT_ROW_MEMORY_CAP: usize = 1 << 20;

/// How non-matching rows are passed over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Align {
    /// Read through them. Once either side runs out, the other is read to
    /// the end of the range too, so each input is read exactly once.
    #[default]
    Scan,
    /// Seek the lagging side to the leading side's row and stop as soon as
    /// either side runs out.
    Seek,
}

struct Block {
    row: Bytes,
    a_cols: Vec<Bytes>,
    b_cols: Vec<Bytes>,
    product: Box<dyn RowProduct>,
    i: usize,
    j: usize,
    consumed_at_load: u64,
    emitted: bool,
}

/// Joins the scanned table `B` with a remote table holding `Aᵀ` on row
/// keys, and for every shared row `k` emits `(i, j, Aᵀ(k,i) ⊗ B(k,j))` over
/// the Cartesian product of the two rows, `i`-major.
///
/// Output is sorted only within a row block, so this iterator belongs
/// under `remote-write`, not at the end of a client scan.
pub struct TwoTable {
    a: SubsetSource,
    b: SubsetSource,
    a_name: String,
    b_name: String,
    semiring: Arc<dyn ValueSemiring>,
    align: Align,
    row_cap: usize,
    counters: Arc<MultiplyCounters>,
    range: KeyRange,
    block: Option<Block>,
    top: Option<Entry>,
    at_block_start: bool,
    /// Last fully emitted block: its row and the B reads behind it.
    completed: Option<(Bytes, u64)>,
    last_b_row: Option<Bytes>,
}

fn read_a(c: &MultiplyCounters) -> &AtomicU64 {
    &c.entries_read_a
}

fn read_b(c: &MultiplyCounters) -> &AtomicU64 {
    &c.entries_read_b
}

/// Consumes the top of `side`, checking that the next key does not sort
/// before it. Returns the consumed key.
fn advance(side: &mut SubsetSource, name: &str) -> Result<Key> {
    let prev = side.top_key().clone();
    side.next()?;
    if side.has_top() && *side.top_key() < prev {
        return Err(Error::ContractViolation(format!(
            "source `{name}` emitted {} after {prev}",
            side.top_key()
        )));
    }
    Ok(prev)
}

impl TwoTable {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: SubsetSource,
        a_name: impl Into<String>,
        b: SubsetSource,
        b_name: impl Into<String>,
        semiring: Arc<dyn ValueSemiring>,
        align: Align,
        row_cap: usize,
        counters: Arc<MultiplyCounters>,
    ) -> Self {
        TwoTable {
            a,
            b,
            a_name: a_name.into(),
            b_name: b_name.into(),
            semiring,
            align,
            row_cap,
            counters,
            range: KeyRange::all(),
            block: None,
            top: None,
            at_block_start: false,
            completed: None,
            last_b_row: None,
        }
    }

    fn advance_b(&mut self) -> Result<()> {
        let key = advance(&mut self.b, &self.b_name)?;
        self.last_b_row = Some(key.row);
        Ok(())
    }

    fn read_row(&mut self, from_a: bool, row: &Bytes) -> Result<(Vec<Bytes>, Vec<Bytes>)> {
        let (mut cols, mut vals) = (Vec::new(), Vec::new());
        loop {
            let side = if from_a { &self.a } else { &self.b };
            if !side.has_top() || side.top_key().row != *row {
                return Ok((cols, vals));
            }
            if cols.len() == self.row_cap {
                return Err(Error::RowTooLarge {
                    table: if from_a { &self.a_name } else { &self.b_name }.clone(),
                    row: String::from_utf8_lossy(row).into_owned(),
                    cap: self.row_cap,
                });
            }
            cols.push(side.top_key().cq.clone());
            vals.push(side.top_value().clone());
            if from_a {
                advance(&mut self.a, &self.a_name)?;
            } else {
                self.advance_b()?;
            }
        }
    }

    fn skip_row(&mut self, from_a: bool, target: &Bytes) -> Result<()> {
        match self.align {
            Align::Scan => {
                let row = if from_a { &self.a } else { &self.b }.top_key().row.clone();
                loop {
                    let side = if from_a { &self.a } else { &self.b };
                    if !side.has_top() || side.top_key().row != row {
                        return Ok(());
                    }
                    if from_a {
                        advance(&mut self.a, &self.a_name)?;
                    } else {
                        self.advance_b()?;
                    }
                }
            }
            Align::Seek => {
                let to = KeyRange::new(Bound::Included(Key::row_start(target.clone())), Bound::Unbounded);
                let range = self.range.intersect(&to).expect("target row lies in the seek range");
                if from_a {
                    self.a.seek(&range)
                } else {
                    self.b.seek(&range)
                }
            }
        }
    }

    /// Aligns the sources on the next shared row and reads both rows.
    fn load_block(&mut self) -> Result<bool> {
        loop {
            if !self.a.has_top() || !self.b.has_top() {
                if self.align == Align::Scan {
                    while self.a.has_top() {
                        advance(&mut self.a, &self.a_name)?;
                    }
                    while self.b.has_top() {
                        self.advance_b()?;
                    }
                }
                return Ok(false);
            }
            let a_row = self.a.top_key().row.clone();
            let b_row = self.b.top_key().row.clone();
            match a_row.cmp(&b_row) {
                std::cmp::Ordering::Less => self.skip_row(true, &b_row)?,
                std::cmp::Ordering::Greater => self.skip_row(false, &a_row)?,
                std::cmp::Ordering::Equal => {
                    let (a_cols, a_vals) = self.read_row(true, &a_row)?;
                    let (b_cols, b_vals) = self.read_row(false, &b_row)?;
                    let product = self.semiring.row_product(&a_vals, &b_vals).map_err(|op| {
                        let (table, cols, vals, idx) = match op {
                            Operand::Left(i) => (&self.a_name, &a_cols, &a_vals, i),
                            Operand::Right(i) => (&self.b_name, &b_cols, &b_vals, i),
                        };
                        log::warn!("undecodable value in `{table}`");
                        Error::BadValue {
                            key: Key::new(a_row.clone(), cols[idx].clone()),
                            value: String::from_utf8_lossy(&vals[idx]).into_owned(),
                        }
                    })?;
                    self.block = Some(Block {
                        row: a_row,
                        a_cols,
                        b_cols,
                        product,
                        i: 0,
                        j: 0,
                        consumed_at_load: self.b.read(),
                        emitted: false,
                    });
                    return Ok(true);
                }
            }
        }
    }

    fn find_top(&mut self) -> Result<()> {
        loop {
            if let Some(block) = &mut self.block {
                let (mut evaluated, mut zeros) = (0, 0);
                let mut found = None;
                while block.i < block.a_cols.len() {
                    let (i, j) = (block.i, block.j);
                    block.j += 1;
                    if block.j == block.b_cols.len() {
                        block.j = 0;
                        block.i += 1;
                    }
                    evaluated += 1;
                    match block.product.product(i, j) {
                        Some(v) => {
                            found = Some(Entry {
                                key: Key {
                                    row: block.a_cols[i].clone(),
                                    cq: block.b_cols[j].clone(),
                                },
                                value: v,
                            });
                            break;
                        }
                        None => zeros += 1,
                    }
                }
                bump(&self.counters.partial_products, evaluated);
                if zeros > 0 {
                    bump(&self.counters.zero_products_dropped, zeros);
                }
                if let Some(entry) = found {
                    self.at_block_start = !block.emitted;
                    block.emitted = true;
                    self.top = Some(entry);
                    return Ok(());
                }
                let done = self.block.take().expect("block present");
                self.completed = Some((done.row, done.consumed_at_load));
            }
            self.top = None;
            self.at_block_start = false;
            if !self.load_block()? {
                return Ok(());
            }
        }
    }
}

impl SortedKeyValueIterator for TwoTable {
    fn seek(&mut self, range: &KeyRange) -> Result<()> {
        self.range = range.clone();
        self.block = None;
        self.top = None;
        self.a.seek(range)?;
        self.b.seek(range)?;
        self.find_top()
    }

    fn has_top(&self) -> bool {
        self.top.is_some()
    }

    fn top_key(&self) -> &Key {
        &self.top.as_ref().expect("has_top").key
    }

    fn top_value(&self) -> &Value {
        &self.top.as_ref().expect("has_top").value
    }

    fn next(&mut self) -> Result<()> {
        self.top = None;
        self.at_block_start = false;
        self.find_top()
    }

    fn checkpoint(&self) -> Option<Checkpoint> {
        if self.top.is_none() {
            return Some(Checkpoint::Boundary {
                last_row: self.last_b_row.clone(),
                consumed: self.b.read(),
            });
        }
        if !self.at_block_start {
            return Some(Checkpoint::Inside);
        }
        Some(match &self.completed {
            Some((row, consumed)) => Checkpoint::Boundary {
                last_row: Some(row.clone()),
                consumed: *consumed,
            },
            None => Checkpoint::Boundary {
                last_row: None,
                consumed: 0,
            },
        })
    }
}

pub(super) fn build(source: BoxedIterator, options: &Options, env: &IteratorEnv) -> Result<BoxedIterator> {
    let at_table = options
        .get(opts::AT_TABLE)
        .ok_or_else(|| Error::option(opts::AT_TABLE, "required"))?;
    let semiring = env
        .store
        .semirings()
        .get(options.get(opts::SEMIRING).map_or(PLUS_TIMES, String::as_str))?;
    let align = match options.get(opts::ALIGN).map(String::as_str) {
        None | Some("scan") => Align::Scan,
        Some("seek") => Align::Seek,
        Some(other) => return Err(Error::option(opts::ALIGN, format!("expected scan or seek, got {other:?}"))),
    };
    let row_cap = super::parse_count(options, opts::ROW_MEMORY_CAP)?.map_or(DEFAULT_ROW_MEMORY_CAP, |n| n as usize);
    let a = SubsetSource::remote(
        &env.store,
        at_table,
        parse_subset_option(options, opts::AT_ROW_SUBSET)?,
        parse_subset_option(options, opts::AT_COL_SUBSET)?,
    )?
    .counting(env.counters.clone(), read_a);
    let b = SubsetSource::new(source, None, parse_subset_option(options, opts::B_COL_SUBSET)?)
        .counting(env.counters.clone(), read_b);
    Ok(Box::new(TwoTable::new(
        a,
        at_table.clone(),
        b,
        env.table.name(),
        semiring,
        align,
        row_cap,
        env.counters.clone(),
    )))
}

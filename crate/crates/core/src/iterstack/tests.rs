use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::kvstore::{Entry, Key, KeyRange, RangeSet, Store, TableConfig, TableHandle, TableSource, Value};
use crate::semiring::PLUS_TIMES;
use crate::spgemm::{table_mult_specs, MatrixTablePair};

fn e(r: &str, c: &str, v: &str) -> Entry {
    Entry::new(r.to_string(), c.to_string(), v.to_string())
}

fn table(store: &Store, name: &str, entries: &[Entry]) -> TableHandle {
    let t = store.create_table(TableConfig::new(name).with_sum_combiner()).unwrap();
    t.batch_write(entries.iter().cloned()).unwrap();
    t
}

fn drain(mut it: impl SortedKeyValueIterator, range: &KeyRange) -> Vec<Entry> {
    it.seek(range).unwrap();
    let mut out = Vec::new();
    while it.has_top() {
        out.push(Entry {
            key: it.top_key().clone(),
            value: it.top_value().clone(),
        });
        it.next().unwrap();
    }
    out
}

/// Yields entries in the given order, sorted or not.
struct VecSource {
    entries: Vec<Entry>,
    pos: usize,
}

impl VecSource {
    fn boxed(entries: Vec<Entry>) -> BoxedIterator {
        Box::new(VecSource { entries, pos: usize::MAX })
    }
}

impl SortedKeyValueIterator for VecSource {
    fn seek(&mut self, range: &KeyRange) -> crate::Result<()> {
        self.pos = self.entries.iter().position(|e| range.contains(&e.key)).unwrap_or(self.entries.len());
        Ok(())
    }
    fn has_top(&self) -> bool {
        self.pos < self.entries.len()
    }
    fn top_key(&self) -> &Key {
        &self.entries[self.pos].key
    }
    fn top_value(&self) -> &Value {
        &self.entries[self.pos].value
    }
    fn next(&mut self) -> crate::Result<()> {
        self.pos += 1;
        Ok(())
    }
}

fn subset(expr: &str) -> Option<RangeSet> {
    Some(parse_subset_expr(expr).unwrap())
}

fn five_rows(store: &Store) -> TableHandle {
    table(store, "R", &["a", "b", "c", "d", "e"].map(|r| e(r, "x", "1")))
}

#[test]
fn remote_source_row_subset_seeks() {
    let store = Store::new();
    five_rows(&store);
    let all = SubsetSource::remote(&store, "R", subset(""), None).unwrap();
    assert_eq!(drain(all, &KeyRange::all()).len(), 5);

    let mut some = SubsetSource::remote(&store, "R", subset("b,:,c,"), None).unwrap();
    some.seek(&KeyRange::all()).unwrap();
    let mut rows = Vec::new();
    while some.has_top() {
        rows.push(some.top_key().row.clone());
        some.next().unwrap();
    }
    assert_eq!(rows, ["b", "c"]);
    assert_eq!(some.read(), 2);

    assert!(matches!(SubsetSource::remote(&store, "nope", None, None), Err(Error::NoSuchTable(_))));
}

#[test]
fn column_filter_counts_rejected_reads() {
    let store = Store::new();
    five_rows(&store);
    let mut none = SubsetSource::remote(&store, "R", None, subset("zz,")).unwrap();
    none.seek(&KeyRange::all()).unwrap();
    assert!(!none.has_top());
    assert_eq!(none.read(), 5);

    let store_scan = store.scan(
        &store.table("R").unwrap(),
        &RangeSet::all(),
        &[IteratorSpec::new(COLUMN_FILTER).option(opts::FILTER_CQ, "x,")],
    );
    assert_eq!(store_scan.unwrap().count(), 5);
}

fn multiply_counters() -> Arc<MultiplyCounters> {
    Arc::new(MultiplyCounters::default())
}

fn two_table(store: &Store, at: &str, b: BoxedIterator, align: Align, counters: &Arc<MultiplyCounters>) -> TwoTable {
    let a = SubsetSource::remote(store, at, None, None)
        .unwrap()
        .counting(counters.clone(), |c| &c.entries_read_a);
    TwoTable::new(
        a,
        at,
        SubsetSource::new(b, None, None).counting(counters.clone(), |c| &c.entries_read_b),
        "B",
        store.semirings().get(PLUS_TIMES).unwrap(),
        align,
        DEFAULT_ROW_MEMORY_CAP,
        counters.clone(),
    )
}

#[test]
fn align_keeps_shared_rows_only() {
    let store = Store::new();
    table(&store, "AT", &[e("1", "i", "1"), e("2", "i", "2")]);
    let b = table(&store, "B", &[e("2", "j", "3"), e("3", "j", "4")]);
    let counters = multiply_counters();
    let it = two_table(&store, "AT", Box::new(TableSource::whole(&b)), Align::Scan, &counters);
    assert_eq!(drain(it, &KeyRange::all()), vec![e("i", "j", "6")]);
    let stats = counters.snapshot(Default::default());
    assert_eq!((stats.entries_read_a, stats.entries_read_b, stats.partial_products), (2, 2, 1));

    table(&store, "D", &[e("9", "i", "1")]);
    let it = two_table(&store, "D", Box::new(TableSource::whole(&b)), Align::Scan, &multiply_counters());
    assert!(drain(it, &KeyRange::all()).is_empty());
}

#[test]
fn seek_align_skips_reads() {
    let store = Store::new();
    let rows: Vec<Entry> = (1..=100).map(|k| e(&format!("{k:03}"), "i", "1")).collect();
    table(&store, "AT", &rows);
    let b = table(&store, "B", &[e("050", "j", "2")]);

    let scan = multiply_counters();
    let out = drain(two_table(&store, "AT", Box::new(TableSource::whole(&b)), Align::Scan, &scan), &KeyRange::all());
    assert_eq!(out, vec![e("i", "j", "2")]);
    assert_eq!(scan.snapshot(Default::default()).entries_read_a, 100);

    let seek = multiply_counters();
    let out = drain(two_table(&store, "AT", Box::new(TableSource::whole(&b)), Align::Seek, &seek), &KeyRange::all());
    assert_eq!(out, vec![e("i", "j", "2")]);
    assert!(seek.snapshot(Default::default()).entries_read_a <= 2);
}

#[test]
fn unsorted_source_is_a_contract_violation() {
    let store = Store::new();
    table(&store, "AT", &[e("1", "i", "1"), e("2", "i", "1"), e("3", "i", "1")]);
    let b = VecSource::boxed(vec![e("1", "j", "1"), e("3", "j", "1"), e("2", "j", "1")]);
    let mut it = two_table(&store, "AT", b, Align::Scan, &multiply_counters());
    let mut result = it.seek(&KeyRange::all());
    while result.is_ok() && it.has_top() {
        result = it.next();
    }
    assert!(matches!(result, Err(Error::ContractViolation(_))), "{result:?}");
}

#[test]
fn outer_product_block() {
    let store = Store::new();
    table(&store, "AT", &[e("1", "1", "2"), e("1", "2", "3")]);
    let b = table(&store, "B", &[e("1", "1", "5")]);
    let out = drain(
        two_table(&store, "AT", Box::new(TableSource::whole(&b)), Align::Scan, &multiply_counters()),
        &KeyRange::all(),
    );
    assert_eq!(out, vec![e("1", "1", "10"), e("2", "1", "15")]);
}

#[test]
fn cartesian_count_and_order() {
    let store = Store::new();
    let a: Vec<Entry> = ["x", "y", "z"].iter().map(|i| e("k", i, "1")).collect();
    let bs: Vec<Entry> = ["p", "q", "r", "s"].iter().map(|j| e("k", j, "2")).collect();
    table(&store, "AT", &a);
    let b = table(&store, "B", &bs);
    let counters = multiply_counters();
    let out = drain(two_table(&store, "AT", Box::new(TableSource::whole(&b)), Align::Scan, &counters), &KeyRange::all());
    assert_eq!(out.len(), 12);
    assert_eq!(counters.snapshot(Default::default()).partial_products, 12);
    // i-major within the block, with B's row copied for every i.
    let keys: Vec<Key> = out.iter().take(5).map(|e| e.key.clone()).collect();
    let want = [("x", "p"), ("x", "q"), ("x", "r"), ("x", "s"), ("y", "p")].map(|(i, j)| Key::new(i, j));
    assert_eq!(keys, want);
    assert!(out.iter().all(|e| e.value.as_ref() == b"2"));
}

#[test]
fn bad_operand_names_the_key() {
    let store = Store::new();
    table(&store, "AT", &[e("1", "i", "1")]);
    let b = store.create_table(TableConfig::new("B")).unwrap();
    b.batch_write([e("1", "j", "oops")]).unwrap();
    let mut it = two_table(&store, "AT", Box::new(TableSource::whole(&b)), Align::Scan, &multiply_counters());
    match it.seek(&KeyRange::all()) {
        Err(Error::BadValue { key, value }) => {
            assert_eq!(key, Key::new("1", "j"));
            assert_eq!(value, "oops");
        }
        other => panic!("expected a bad value, got {:?}", other.err()),
    }
}

#[test]
fn row_memory_cap() {
    let store = Store::new();
    let a: Vec<Entry> = (0..10).map(|i| e("k", &i.to_string(), "1")).collect();
    table(&store, "AT", &a);
    let b = table(&store, "B", &[e("k", "j", "1")]);
    let c = table(&store, "C", &[]);
    let pair = MatrixTablePair {
        at: store.table("AT").unwrap(),
        b: b.clone(),
    };
    let mut extra = Options::new();
    extra.insert(opts::ROW_MEMORY_CAP.into(), "4".into());
    let specs = table_mult_specs(&pair, &c, PLUS_TIMES, &extra);
    let err = store.scan(&b, &RangeSet::all(), &specs).unwrap().collect::<crate::Result<Vec<_>>>().unwrap_err();
    assert!(matches!(err, Error::RowTooLarge { cap: 4, .. }), "{err}");
}

struct Fixture {
    store: Store,
    pair: MatrixTablePair,
}

fn fixture(at: &[Entry], b: &[Entry]) -> Fixture {
    let store = Store::new();
    let pair = MatrixTablePair {
        at: table(&store, "AT", at),
        b: table(&store, "B", b),
    };
    Fixture { store, pair }
}

impl Fixture {
    fn specs(&self, target: &str, extra: &[(&str, &str)]) -> Vec<IteratorSpec> {
        let c = self
            .store
            .table(target)
            .unwrap_or_else(|_| table(&self.store, target, &[]));
        let extra: Options = extra.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        table_mult_specs(&self.pair, &c, PLUS_TIMES, &extra)
    }

    fn run(&self, target: &str, extra: &[(&str, &str)]) -> (Vec<Entry>, MultiplyStats) {
        let specs = self.specs(target, extra);
        let counters = multiply_counters();
        let out = self
            .store
            .batch_scan_with(&self.pair.b, &RangeSet::all(), &specs, &counters)
            .unwrap();
        (out, counters.snapshot(Default::default()))
    }

    fn scan(&self, name: &str) -> Vec<Entry> {
        self.store.scan_all(&self.store.table(name).unwrap()).unwrap()
    }
}

fn diagonal(n: usize, value: &str) -> Vec<Entry> {
    (0..n).map(|k| e(&format!("{k:02}"), &format!("{k:02}"), value)).collect()
}

#[test]
fn stack_writes_product_and_transposes() {
    let at = [e("1", "1", "2"), e("1", "2", "3"), e("2", "1", "4")];
    let b = [e("1", "1", "5"), e("2", "2", "7")];
    let f = fixture(&at, &b);
    let (out, stats) = f.run("C", &[]);
    // Only the closing progress report comes back to the client.
    assert_eq!(out, vec![MonitorEntry { row: "2".into(), count: 2 }.to_entry()]);
    assert_eq!(f.scan("C"), vec![e("1", "1", "10"), e("1", "2", "28"), e("2", "1", "15")]);
    assert_eq!((stats.partial_products, stats.entries_written_c, stats.flush_count), (3, 3, 1));
    assert_eq!((stats.entries_read_a, stats.entries_read_b), (3, 2));

    f.run("T", &[(opts::C_TRANSPOSE, "ct")]);
    assert_eq!(f.scan("T"), vec![e("1", "1", "10"), e("1", "2", "15"), e("2", "1", "28")]);

    table(&f.store, "CT", &[]);
    let (_, stats) = f.run("C2", &[(opts::C_TRANSPOSE, "both"), (opts::CT_TABLE, "CT")]);
    assert_eq!(f.scan("C2"), f.scan("C"));
    assert_eq!(f.scan("CT"), f.scan("T"));
    assert_eq!(stats.entries_written_c, 2 * stats.partial_products);
}

#[test]
fn one_flush_for_many_ranges() {
    let entries = diagonal(90, "1");
    let f = fixture(&entries, &entries);
    let rows: String = (0..90).step_by(2).map(|k| format!("{k:02},")).collect();
    let (_, stats) = f.run("C", &[(opts::B_ROW_SUBSET, &rows)]);
    assert_eq!(stats.flush_count, 1);
    assert_eq!(stats.partial_products, 45);
    assert_eq!(f.scan("C").len(), 45);

    // A seek range holding no subset rows still ends with one flush.
    let (_, stats) = f.run("D", &[(opts::B_ROW_SUBSET, "zz,")]);
    assert_eq!((stats.flush_count, stats.partial_products), (1, 0));
}

#[test]
fn monitor_counts_at_block_boundaries() {
    let entries = diagonal(35, "1");
    let f = fixture(&entries, &entries);
    let (out, stats) = f.run("C", &[(opts::MONITOR_EVERY_N, "10")]);
    let monitors: Vec<MonitorEntry> = out.iter().map(|e| MonitorEntry::from_entry(e).unwrap()).collect();
    let counts: Vec<u64> = monitors.iter().map(|m| m.count).collect();
    assert_eq!(counts, [10, 20, 30, 35]);
    assert_eq!(monitors[0].row.as_ref(), b"09");
    assert_eq!(monitors[3].row.as_ref(), b"34");
    assert_eq!(stats.monitor_entries, 4);
    // One flush per monitor, and the last one is the end-of-invocation flush.
    assert_eq!(stats.flush_count, 4);

    // Two-entry blocks land thresholds between safe points.
    let wide: Vec<Entry> = (0..7).flat_map(|k| [e(&format!("{k}"), "a", "1"), e(&format!("{k}"), "b", "1")]).collect();
    let at: Vec<Entry> = (0..7).map(|k| e(&k.to_string(), "i", "1")).collect();
    let f = fixture(&at, &wide);
    let (out, _) = f.run("C", &[(opts::MONITOR_EVERY_N, "3")]);
    let counts: Vec<u64> = out.iter().map(|e| MonitorEntry::from_entry(e).unwrap().count).collect();
    assert_eq!(counts, [4, 6, 10, 12, 14]);
}

#[test]
fn monitor_without_matches() {
    let f = fixture(&[e("x", "i", "1")], &diagonal(5, "1"));
    let (out, stats) = f.run("C", &[(opts::MONITOR_EVERY_N, "2")]);
    let counts: Vec<u64> = out.iter().map(|e| MonitorEntry::from_entry(e).unwrap().count).collect();
    assert_eq!(counts, [5]);
    assert_eq!(stats.partial_products, 0);
}

#[test]
fn option_errors_surface_before_emission() {
    let f = fixture(&diagonal(3, "1"), &diagonal(3, "1"));
    table(&f.store, "C", &[]);
    let cases: &[(&str, &str)] = &[
        (opts::MONITOR_EVERY_N, "0"),
        (opts::MONITOR_EVERY_N, "ten"),
        (opts::ALIGN, "sideways"),
        (opts::C_TRANSPOSE, "t"),
        (opts::C_TRANSPOSE, "both"),
        (opts::B_ROW_SUBSET, "a,:,"),
        (opts::ROW_MEMORY_CAP, "-1"),
        (opts::SEMIRING, "max-max"),
        (opts::AT_TABLE, "missing"),
        (opts::C_TABLE, "missing"),
        (opts::C_TABLE, "B"),
        (opts::C_TABLE, "AT"),
    ];
    for (key, value) in cases {
        let specs = f.specs("C", &[(key, value)]);
        let result = f.store.scan(&f.pair.b, &RangeSet::all(), &specs);
        assert!(result.is_err(), "{key}={value} accepted");
    }
    let unknown = f.store.scan(&f.pair.b, &RangeSet::all(), &[IteratorSpec::new("nope")]);
    assert!(matches!(unknown, Err(Error::UnknownIterator(_))));
    assert_eq!(f.scan("C"), vec![]);
}

#[test]
fn dropped_target_aborts_with_report() {
    let f = fixture(&diagonal(5, "1"), &diagonal(5, "1"));
    let specs = f.specs("C", &[]);
    let stream = f.store.scan(&f.pair.b, &RangeSet::all(), &specs).unwrap();
    f.store.drop_table("C").unwrap();
    let err = stream.collect::<crate::Result<Vec<_>>>().unwrap_err();
    match err {
        Error::WriteAborted { table, written, source } => {
            assert_eq!(table, "C");
            assert_eq!(written, 0);
            assert!(matches!(*source, Error::TableDropped(_)));
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn custom_iterators_stack_in_order() {
    let store = Store::new();
    let t = five_rows(&store);
    store.iterators().register("upper", |source: BoxedIterator, _: &Options, _: &IteratorEnv| {
        Ok(Box::new(Upper { inner: source, value: Value::new() }) as BoxedIterator)
    });
    let specs = [IteratorSpec::new(COLUMN_FILTER).option(opts::FILTER_CQ, "x,"), IteratorSpec::new("upper")];
    let out: Vec<Entry> = store.scan(&t, &RangeSet::all(), &specs).unwrap().collect::<crate::Result<_>>().unwrap();
    assert_eq!(out.len(), 5);
    assert!(out.iter().all(|e| e.value.as_ref() == b"1!"));
}

/// Appends `!` to every value.
struct Upper {
    inner: BoxedIterator,
    value: Value,
}

impl Upper {
    fn settle(&mut self) {
        if self.inner.has_top() {
            self.value = Value::from([self.inner.top_value().as_ref(), b"!"].concat());
        }
    }
}

impl SortedKeyValueIterator for Upper {
    fn seek(&mut self, range: &KeyRange) -> crate::Result<()> {
        self.inner.seek(range)?;
        self.settle();
        Ok(())
    }
    fn has_top(&self) -> bool {
        self.inner.has_top()
    }
    fn top_key(&self) -> &Key {
        self.inner.top_key()
    }
    fn top_value(&self) -> &Value {
        &self.value
    }
    fn next(&mut self) -> crate::Result<()> {
        self.inner.next()?;
        self.settle();
        Ok(())
    }
}

fn stack_spec(f: &Fixture, target: &str, extra: &[(&str, &str)]) -> StackSpec {
    StackSpec {
        table: "B".into(),
        tablet: 0,
        iterators: f.specs(target, extra),
    }
}

/// Runs the stack up to its `stop`-th monitor entry, abandons it, and
/// resumes from that entry. Returns the monitors seen before and after.
fn teardown_and_resume(f: &Fixture, target: &str, extra: &[(&str, &str)], stop: Option<usize>) -> (Vec<u64>, Vec<u64>) {
    let spec = stack_spec(f, target, extra);
    let count = |e: &Entry| MonitorEntry::from_entry(e).unwrap().count;
    let (before, token) = match stop {
        None => (Vec::new(), None),
        Some(n) => {
            let prefix: Vec<Entry> = rebuild_and_resume(&f.store, &spec, None)
                .unwrap()
                .take(n + 1)
                .collect::<crate::Result<_>>()
                .unwrap();
            (prefix.iter().map(count).collect(), prefix.last().cloned())
        }
    };
    let rest: Vec<Entry> = rebuild_and_resume(&f.store, &spec, token.as_ref())
        .unwrap()
        .collect::<crate::Result<_>>()
        .unwrap();
    (before, rest.iter().map(count).collect())
}

fn block_instance() -> (Vec<Entry>, Vec<Entry>) {
    let mut at = Vec::new();
    let mut b = Vec::new();
    for k in 0..4 {
        for i in 0..=k {
            at.push(e(&format!("k{k}"), &format!("i{i}"), &(k + i + 1).to_string()));
        }
        for j in 0..(4 - k) {
            b.push(e(&format!("k{k}"), &format!("j{j}"), &(2 * j + 1).to_string()));
        }
    }
    (at, b)
}

#[test]
fn resume_sweep_over_four_blocks() {
    let (at, b) = block_instance();
    let f = fixture(&at, &b);
    let monitor = [(opts::MONITOR_EVERY_N, "1")];
    let (_, full) = teardown_and_resume(&f, "FULL", &monitor, None);
    assert_eq!(full, [4, 7, 9, 10]);
    let expected = f.scan("FULL");
    for stop in 0..full.len() {
        let target = format!("C{stop}");
        let (before, after) = teardown_and_resume(&f, &target, &monitor, Some(stop));
        assert_eq!(before, full[..=stop]);
        assert_eq!(after, full[stop + 1..], "resume at {stop}");
        assert_eq!(f.scan(&target), expected, "resume at {stop}");
    }
}

#[test]
fn resume_token_is_checked() {
    let (at, b) = block_instance();
    let f = fixture(&at, &b);
    let spec = stack_spec(&f, "C", &[(opts::MONITOR_EVERY_N, "1")]);
    let bad = [
        e("k1", "i0", "4"),
        e("k1", MONITOR_CQ, "four"),
        e("k1", MONITOR_CQ, "-1"),
    ];
    for token in &bad {
        let result = rebuild_and_resume(&f.store, &spec, Some(token));
        assert!(matches!(result, Err(Error::BadResumeToken(_))), "{token:?}");
    }
    f.pair.b.add_split("k1").unwrap();
    let low = stack_spec(&f, "C", &[(opts::MONITOR_EVERY_N, "1")]);
    let outside = e("k2", MONITOR_CQ, "9");
    assert!(matches!(rebuild_and_resume(&f.store, &low, Some(&outside)), Err(Error::BadResumeToken(_))));
    let missing = StackSpec { tablet: 5, ..low };
    assert!(rebuild_and_resume(&f.store, &missing, None).is_err());
}

fn matrix(cells: &[(u8, u8, i8)]) -> Vec<Entry> {
    let mut m: BTreeMap<(u8, u8), i64> = BTreeMap::new();
    for &(r, c, v) in cells {
        m.insert((r, c), i64::from(v));
    }
    m.into_iter()
        .map(|((r, c), v)| e(&format!("{r:02}"), &format!("{c:02}"), &v.to_string()))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_safe_point_resumes_exactly(
        at in prop::collection::vec((0u8..16, 0u8..16, -3i8..4), 0..60),
        b in prop::collection::vec((0u8..16, 0u8..16, -3i8..4), 0..60),
        every in 1u64..6,
        both in any::<bool>(),
    ) {
        let f = fixture(&matrix(&at), &matrix(&b));
        let run = |target: &str, stop: Option<usize>| {
            let ct = format!("{target}T");
            let mut extra = vec![(opts::MONITOR_EVERY_N, every.to_string())];
            if both {
                table(&f.store, &ct, &[]);
                extra.push((opts::C_TRANSPOSE, "both".to_string()));
                extra.push((opts::CT_TABLE, ct.clone()));
            }
            let refs: Vec<(&str, &str)> = extra.iter().map(|(k, v)| (*k, v.as_str())).collect();
            (teardown_and_resume(&f, target, &refs, stop), ct)
        };
        let ((_, full), full_ct) = run("FULL", None);
        prop_assert!(full.windows(2).all(|w| w[0] < w[1]));
        if let Some(&last) = full.last() {
            prop_assert_eq!(last, f.scan("B").len() as u64);
        }
        for stop in 0..full.len() {
            let target = format!("C{stop}");
            let ((before, after), ct) = run(&target, Some(stop));
            prop_assert_eq!(&before[..], &full[..=stop]);
            prop_assert_eq!(&after[..], &full[stop + 1..]);
            prop_assert_eq!(f.scan(&target), f.scan("FULL"));
            if both {
                prop_assert_eq!(f.scan(&ct), f.scan(&full_ct));
            }
        }
    }
}

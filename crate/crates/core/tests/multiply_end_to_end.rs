use tablemult_core::iterstack::{opts, parse_subset_expr, Options, MONITOR_CQ};
use tablemult_core::spgemm::{dense_oracle, table_mult};
use tablemult_core::{Entry, MatrixTablePair, RangeSet, Store, TableConfig, TableHandle, PLUS_TIMES};

fn e(r: &str, c: &str, v: &str) -> Entry {
    Entry::new(r.to_string(), c.to_string(), v.to_string())
}

fn grid(prefix_r: char, prefix_c: char, n: usize, f: impl Fn(usize, usize) -> Option<i64>) -> Vec<Entry> {
    let mut out = Vec::new();
    for r in 0..n {
        for c in 0..n {
            if let Some(v) = f(r, c) {
                out.push(e(&format!("{prefix_r}{r:02}"), &format!("{prefix_c}{c:02}"), &v.to_string()));
            }
        }
    }
    out
}

struct Setup {
    store: Store,
    a: Vec<Entry>,
    b: Vec<Entry>,
    pair: MatrixTablePair,
}

fn setup(splits: &[&str]) -> Setup {
    let store = Store::new();
    let a = grid('i', 'k', 20, |r, c| ((r * 3 + c) % 4 == 0).then_some((r + c) as i64 % 7 - 3));
    let b = grid('k', 'j', 20, |r, c| ((r + 2 * c) % 3 == 0).then_some(r as i64 - c as i64));
    let mut at: Vec<Entry> = a.iter().map(Entry::transposed).collect();
    at.sort_by(|x, y| x.key.cmp(&y.key));
    let at_table = store.create_table(TableConfig::new("AT")).unwrap();
    at_table.batch_write(at).unwrap();
    let config = TableConfig::new("B").with_splits(splits.iter().map(|s| s.to_string()));
    let b_table = store.create_table(config).unwrap();
    b_table.batch_write(b.clone()).unwrap();
    Setup {
        store,
        a,
        b,
        pair: MatrixTablePair { at: at_table, b: b_table },
    }
}

fn target(store: &Store, name: &str, splits: &[&str]) -> TableHandle {
    let config = TableConfig::new(name)
        .with_sum_combiner()
        .with_splits(splits.iter().map(|s| s.to_string()));
    store.create_table(config).unwrap()
}

fn oracle(store: &Store, a: &[Entry], b: &[Entry]) -> Vec<Entry> {
    dense_oracle(a, b, &*store.semirings().get(PLUS_TIMES).unwrap()).unwrap()
}

#[test]
fn multi_tablet_multiply_matches_reference() {
    let s = setup(&["k05", "k12"]);
    let c = target(&s.store, "C", &["i10"]);
    let stats = table_mult(&s.store, &s.pair, &c, PLUS_TIMES, &Options::new()).unwrap();
    let expected = oracle(&s.store, &s.a, &s.b);
    assert!(!expected.is_empty());
    assert_eq!(s.store.scan_all(&c).unwrap(), expected);
    assert_eq!(stats.flush_count, 3, "one flush per tablet of B");
    assert_eq!(stats.entries_read_a, s.a.len() as u64);
    assert_eq!(stats.entries_read_b, s.b.len() as u64);
}

#[test]
fn subsets_restrict_the_product() {
    let s = setup(&["k09"]);
    let mut extra = Options::new();
    extra.insert(opts::B_ROW_SUBSET.into(), "k02,:,k07,k15,".into());
    extra.insert(opts::AT_COL_SUBSET.into(), "i00,:,i09,".into());
    extra.insert(opts::B_COL_SUBSET.into(), "j03,j04,j10,".into());
    let c = target(&s.store, "C", &[]);
    let stats = table_mult(&s.store, &s.pair, &c, PLUS_TIMES, &extra).unwrap();

    let rows_k = parse_subset_expr("k02,:,k07,k15,").unwrap();
    let cols_i = parse_subset_expr("i00,:,i09,").unwrap();
    let cols_j = parse_subset_expr("j03,j04,j10,").unwrap();
    let a: Vec<Entry> = s
        .a
        .iter()
        .filter(|e| rows_k.contains_row(&e.key.cq) && cols_i.contains_row(&e.key.row))
        .cloned()
        .collect();
    let b: Vec<Entry> = s
        .b
        .iter()
        .filter(|e| rows_k.contains_row(&e.key.row) && cols_j.contains_row(&e.key.cq))
        .cloned()
        .collect();
    assert_eq!(s.store.scan_all(&c).unwrap(), oracle(&s.store, &a, &b));
    // B rows outside the subset are never read; filtered columns still are.
    let b_rows_read = s.b.iter().filter(|e| rows_k.contains_row(&e.key.row)).count() as u64;
    assert_eq!(stats.entries_read_b, b_rows_read);
    assert_eq!(stats.flush_count, 2);
}

#[test]
fn transposed_output_and_monitoring() {
    let s = setup(&[]);
    let mut extra = Options::new();
    extra.insert(opts::C_TRANSPOSE.into(), "ct".into());
    extra.insert(opts::MONITOR_EVERY_N.into(), "7".into());
    let ct = target(&s.store, "CT", &[]);
    let stats = table_mult(&s.store, &s.pair, &ct, PLUS_TIMES, &extra).unwrap();
    let mut expected: Vec<Entry> = oracle(&s.store, &s.a, &s.b).iter().map(Entry::transposed).collect();
    expected.sort_by(|x, y| x.key.cmp(&y.key));
    assert_eq!(s.store.scan_all(&ct).unwrap(), expected);
    assert!(stats.monitor_entries >= (s.b.len() as u64) / 7);
    assert_eq!(stats.flush_count, stats.monitor_entries);

    // The monitor stream is visible to a plain scan of B with the stack.
    let specs = tablemult_core::spgemm::table_mult_specs(&s.pair, &target(&s.store, "C2", &[]), PLUS_TIMES, &extra);
    let monitors: Vec<Entry> = s
        .store
        .scan(&s.pair.b, &RangeSet::all(), &specs)
        .unwrap()
        .collect::<Result<_, _>>()
        .unwrap();
    assert!(monitors.iter().all(|m| m.key.cq.as_ref() == MONITOR_CQ.as_bytes()));
    assert_eq!(
        monitors.last().map(|m| m.value.clone()),
        Some(s.b.len().to_string().into())
    );
}

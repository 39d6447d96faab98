use std::cmp::Ordering;
use std::fmt;
use std::ops::Bound;

use bytes::{BufMut, Bytes, BytesMut};

pub type Value = Bytes;

/// Two-part key ordered by row bytes, then column-qualifier bytes.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Key {
    pub row: Bytes,
    pub cq: Bytes,
}

impl Key {
    pub fn new(row: impl Into<Bytes>, cq: impl Into<Bytes>) -> Self {
        Key {
            row: row.into(),
            cq: cq.into(),
        }
    }

    /// Smallest key in `row`.
    pub fn row_start(row: impl Into<Bytes>) -> Self {
        Key::new(row, Bytes::new())
    }

    /// Smallest key whose row sorts after `row`: the row with a NUL byte
    /// appended is its immediate successor.
    pub fn following_row(row: &[u8]) -> Self {
        let mut next = BytesMut::with_capacity(row.len() + 1);
        next.put_slice(row);
        next.put_u8(0);
        Key::new(next.freeze(), Bytes::new())
    }

    /// Immediate successor of this key.
    pub fn following(&self) -> Self {
        let mut next = BytesMut::with_capacity(self.cq.len() + 1);
        next.put_slice(&self.cq);
        next.put_u8(0);
        Key::new(self.row.clone(), next.freeze())
    }

    pub fn transposed(&self) -> Self {
        Key::new(self.cq.clone(), self.row.clone())
    }

    pub(crate) fn cmp_parts(&self, row: &[u8], cq: &[u8]) -> Ordering {
        (self.row.as_ref(), self.cq.as_ref()).cmp(&(row, cq))
    }
}

impl fmt::Debug for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({:?}, {:?})",
            String::from_utf8_lossy(&self.row),
            String::from_utf8_lossy(&self.cq)
        )
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Entry {
    pub key: Key,
    pub value: Value,
}

impl Entry {
    pub fn new(row: impl Into<Bytes>, cq: impl Into<Bytes>, value: impl Into<Bytes>) -> Self {
        Entry {
            key: Key::new(row, cq),
            value: value.into(),
        }
    }

    pub fn transposed(&self) -> Self {
        Entry {
            key: self.key.transposed(),
            value: self.value.clone(),
        }
    }
}

impl fmt::Debug for Entry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {:?}", self.key, String::from_utf8_lossy(&self.value))
    }
}

/// A contiguous span of keys. Row ranges convert to key ranges by the
/// row-successor rule, so every key-level operation also serves rows.
#[derive(Clone, PartialEq, Eq)]
pub struct KeyRange {
    pub start: Bound<Key>,
    pub end: Bound<Key>,
}

fn start_rank(b: &Bound<Key>) -> Option<(&Key, u8)> {
    match b {
        Bound::Unbounded => None,
        Bound::Included(k) => Some((k, 0)),
        Bound::Excluded(k) => Some((k, 1)),
    }
}

fn end_rank(b: &Bound<Key>) -> Option<(&Key, u8)> {
    match b {
        Bound::Unbounded => None,
        Bound::Included(k) => Some((k, 1)),
        Bound::Excluded(k) => Some((k, 0)),
    }
}

impl KeyRange {
    pub fn all() -> Self {
        KeyRange {
            start: Bound::Unbounded,
            end: Bound::Unbounded,
        }
    }

    pub fn new(start: Bound<Key>, end: Bound<Key>) -> Self {
        KeyRange { start, end }
    }

    /// Every key of a single row.
    pub fn exact_row(row: impl Into<Bytes>) -> Self {
        let row = row.into();
        KeyRange {
            end: Bound::Excluded(Key::following_row(&row)),
            start: Bound::Included(Key::row_start(row)),
        }
    }

    /// Rows in `[low, high]`, either side optionally unbounded.
    pub fn rows(low: Option<&[u8]>, high: Option<&[u8]>) -> Self {
        KeyRange {
            start: low.map_or(Bound::Unbounded, |r| {
                Bound::Included(Key::row_start(Bytes::copy_from_slice(r)))
            }),
            end: high.map_or(Bound::Unbounded, |r| Bound::Excluded(Key::following_row(r))),
        }
    }

    pub fn is_before_start(&self, key: &Key) -> bool {
        match &self.start {
            Bound::Unbounded => false,
            Bound::Included(s) => key < s,
            Bound::Excluded(s) => key <= s,
        }
    }

    pub fn is_after_end(&self, key: &Key) -> bool {
        match &self.end {
            Bound::Unbounded => false,
            Bound::Included(e) => key > e,
            Bound::Excluded(e) => key >= e,
        }
    }

    pub fn contains(&self, key: &Key) -> bool {
        !self.is_before_start(key) && !self.is_after_end(key)
    }

    pub fn is_empty(&self) -> bool {
        match (&self.start, &self.end) {
            (Bound::Unbounded, _) | (_, Bound::Unbounded) => false,
            (Bound::Included(s), Bound::Included(e)) => s > e,
            (Bound::Included(s), Bound::Excluded(e)) | (Bound::Excluded(s), Bound::Included(e)) => {
                s >= e
            }
            (Bound::Excluded(s), Bound::Excluded(e)) => s.following() >= *e,
        }
    }

    /// Overlap of two ranges, `None` when empty.
    pub fn intersect(&self, other: &KeyRange) -> Option<KeyRange> {
        let start = match (start_rank(&self.start), start_rank(&other.start)) {
            (None, _) => other.start.clone(),
            (_, None) => self.start.clone(),
            (Some(a), Some(b)) => {
                if a >= b {
                    self.start.clone()
                } else {
                    other.start.clone()
                }
            }
        };
        let end = match (end_rank(&self.end), end_rank(&other.end)) {
            (None, _) => other.end.clone(),
            (_, None) => self.end.clone(),
            (Some(a), Some(b)) => {
                if a <= b {
                    self.end.clone()
                } else {
                    other.end.clone()
                }
            }
        };
        let r = KeyRange { start, end };
        (!r.is_empty()).then_some(r)
    }

    /// The part of this range strictly after every key of `row`.
    pub fn after_row(&self, row: &[u8]) -> Option<KeyRange> {
        self.intersect(&KeyRange {
            start: Bound::Included(Key::following_row(row)),
            end: Bound::Unbounded,
        })
    }
}

impl fmt::Debug for KeyRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.start {
            Bound::Unbounded => write!(f, "(-inf")?,
            Bound::Included(k) => write!(f, "[{k}")?,
            Bound::Excluded(k) => write!(f, "({k}")?,
        }
        write!(f, ", ")?;
        match &self.end {
            Bound::Unbounded => write!(f, "+inf)"),
            Bound::Included(k) => write!(f, "{k}]"),
            Bound::Excluded(k) => write!(f, "{k})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(r: &str, c: &str) -> Key {
        Key::new(r.to_string(), c.to_string())
    }

    #[test]
    fn key_order_is_row_then_qualifier() {
        let mut keys = vec![k("b", "a"), k("a", "z"), k("a", ""), k("", "q")];
        keys.sort();
        assert_eq!(keys, vec![k("", "q"), k("a", ""), k("a", "z"), k("b", "a")]);
    }

    #[test]
    fn row_ranges_cover_whole_rows() {
        let r = KeyRange::rows(Some(b"b"), Some(b"c"));
        assert!(!r.contains(&k("a", "zzz")));
        assert!(r.contains(&k("b", "")));
        assert!(r.contains(&k("c", "\u{7f}\u{7f}")));
        assert!(!r.contains(&k("c\0", "")));
        assert!(!r.contains(&k("ca", "")));
        let one = KeyRange::exact_row("m");
        assert!(one.contains(&k("m", "x")));
        assert!(!one.contains(&k("ma", "")));
    }

    #[test]
    fn intersection_and_emptiness() {
        let a = KeyRange::rows(Some(b"a"), Some(b"m"));
        let b = KeyRange::rows(Some(b"k"), None);
        let i = a.intersect(&b).unwrap();
        assert!(i.contains(&k("k", "")) && i.contains(&k("m", "z")));
        assert!(!i.contains(&k("j", "z")) && !i.contains(&k("n", "")));
        assert!(KeyRange::rows(Some(b"x"), None)
            .intersect(&KeyRange::rows(None, Some(b"c")))
            .is_none());
        // No key lies strictly between a key and its successor.
        let x = k("r", "c");
        let r = KeyRange::new(Bound::Excluded(x.clone()), Bound::Excluded(x.following()));
        assert!(r.is_empty());
        let r = KeyRange::new(Bound::Excluded(x.clone()), Bound::Included(x.following()));
        assert!(!r.is_empty());
        assert_eq!(a.after_row(b"m"), None);
        assert!(a.after_row(b"c").unwrap().contains(&k("c\0", "")));
    }
}

use std::cmp::Ordering;
use std::ops::Bound;

use bytes::Bytes;

use super::key::{Key, KeyRange};

/// A range of whole rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowRange {
    pub low: Bound<Bytes>,
    pub high: Bound<Bytes>,
}

impl RowRange {
    pub fn all() -> Self {
        RowRange {
            low: Bound::Unbounded,
            high: Bound::Unbounded,
        }
    }

    /// The inclusive row range `[low, high]`.
    pub fn closed(low: impl Into<Bytes>, high: impl Into<Bytes>) -> Self {
        RowRange {
            low: Bound::Included(low.into()),
            high: Bound::Included(high.into()),
        }
    }

    pub fn single(row: impl Into<Bytes>) -> Self {
        let row = row.into();
        RowRange::closed(row.clone(), row)
    }

    pub fn contains_row(&self, row: &[u8]) -> bool {
        let above_low = match &self.low {
            Bound::Unbounded => true,
            Bound::Included(l) => row >= l.as_ref(),
            Bound::Excluded(l) => row > l.as_ref(),
        };
        let below_high = match &self.high {
            Bound::Unbounded => true,
            Bound::Included(h) => row <= h.as_ref(),
            Bound::Excluded(h) => row < h.as_ref(),
        };
        above_low && below_high
    }

    pub fn to_key_range(&self) -> KeyRange {
        let start = match &self.low {
            Bound::Unbounded => Bound::Unbounded,
            Bound::Included(r) => Bound::Included(Key::row_start(r.clone())),
            Bound::Excluded(r) => Bound::Included(Key::following_row(r)),
        };
        let end = match &self.high {
            Bound::Unbounded => Bound::Unbounded,
            Bound::Included(r) => Bound::Excluded(Key::following_row(r)),
            Bound::Excluded(r) => Bound::Excluded(Key::row_start(r.clone())),
        };
        KeyRange::new(start, end)
    }

    fn is_empty(&self) -> bool {
        self.to_key_range().is_empty()
    }

    /// Orders ranges by their lower bound.
    pub(crate) fn low_cmp(&self, other: &RowRange) -> Ordering {
        low_cmp(self, other)
    }

    /// True when every row of `self` sorts before every row of `other`.
    fn precedes(&self, other: &RowRange) -> bool {
        let (high, low) = match (&self.high, &other.low) {
            (Bound::Unbounded, _) | (_, Bound::Unbounded) => return false,
            (h, l) => (h, l),
        };
        let (h, h_incl) = bound_parts(high);
        let (l, l_incl) = bound_parts(low);
        match h.cmp(l) {
            Ordering::Less => true,
            Ordering::Equal => !(h_incl && l_incl),
            Ordering::Greater => false,
        }
    }
}

fn bound_parts(b: &Bound<Bytes>) -> (&[u8], bool) {
    match b {
        Bound::Included(v) => (v, true),
        Bound::Excluded(v) => (v, false),
        Bound::Unbounded => unreachable!("caller filters unbounded"),
    }
}

fn low_cmp(a: &RowRange, b: &RowRange) -> Ordering {
    match (&a.low, &b.low) {
        (Bound::Unbounded, Bound::Unbounded) => Ordering::Equal,
        (Bound::Unbounded, _) => Ordering::Less,
        (_, Bound::Unbounded) => Ordering::Greater,
        (x, y) => {
            let (x, xi) = bound_parts(x);
            let (y, yi) = bound_parts(y);
            x.cmp(y).then((!xi).cmp(&!yi))
        }
    }
}

/// Ordered, pairwise-disjoint row ranges whose union is a scan domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RangeSet {
    ranges: Vec<RowRange>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Overlap {
    /// Index, in sorted order, of the later of the two overlapping ranges.
    pub index: usize,
}

impl RangeSet {
    /// The unbounded universe of rows.
    pub fn all() -> Self {
        RangeSet {
            ranges: vec![RowRange::all()],
        }
    }

    /// Sorts the ranges and rejects overlaps. Empty ranges are dropped.
    pub fn new(mut ranges: Vec<RowRange>) -> Result<Self, Overlap> {
        ranges.retain(|r| !r.is_empty());
        ranges.sort_by(low_cmp);
        for (i, pair) in ranges.windows(2).enumerate() {
            if !pair[0].precedes(&pair[1]) {
                return Err(Overlap { index: i + 1 });
            }
        }
        Ok(RangeSet { ranges })
    }

    pub fn singletons<I, R>(rows: I) -> Result<Self, Overlap>
    where
        I: IntoIterator<Item = R>,
        R: Into<Bytes>,
    {
        RangeSet::new(rows.into_iter().map(RowRange::single).collect())
    }

    pub fn ranges(&self) -> &[RowRange] {
        &self.ranges
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn is_all(&self) -> bool {
        self.ranges.len() == 1 && self.ranges[0] == RowRange::all()
    }

    pub fn contains_row(&self, row: &[u8]) -> bool {
        // Ranges are sorted and disjoint: find the last range starting at or before `row`.
        let idx = self.ranges.partition_point(|r| match &r.low {
            Bound::Unbounded => true,
            Bound::Included(l) => l.as_ref() <= row,
            Bound::Excluded(l) => l.as_ref() < row,
        });
        idx > 0 && self.ranges[idx - 1].contains_row(row)
    }

    /// Key ranges of this set clipped to `within`, in order.
    pub fn clip(&self, within: &KeyRange) -> Vec<KeyRange> {
        self.ranges
            .iter()
            .filter_map(|r| r.to_key_range().intersect(within))
            .collect()
    }
}

impl Default for RangeSet {
    fn default() -> Self {
        RangeSet::all()
    }
}

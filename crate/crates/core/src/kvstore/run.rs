//! Immutable sorted runs.
//!
//! A run is one contiguous buffer of length-prefixed entries
//! (`varint row_len, row, varint cq_len, cq, varint value_len, value`) plus
//! an offset index for binary search. The same bytes, prefixed by a magic
//! header, are the on-disk spill format.

use std::cmp::Ordering;
use std::io::{self, Read, Write};
use std::ops::Bound;

use bytes::Bytes;

use super::key::{Entry, Key};

const MAGIC: &[u8; 8] = b"TMRUN\x00\x00\x01";

fn put_varint(out: &mut Vec<u8>, mut v: usize) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn get_varint(data: &[u8], pos: &mut usize) -> Option<usize> {
    let mut v = 0usize;
    let mut shift = 0;
    loop {
        let b = *data.get(*pos)?;
        *pos += 1;
        v |= usize::from(b & 0x7f) << shift;
        if b & 0x80 == 0 {
            return Some(v);
        }
        shift += 7;
        if shift > 63 {
            return None;
        }
    }
}

#[derive(Debug, Default)]
pub struct SortedRun {
    data: Bytes,
    offsets: Vec<usize>,
}

/// Accumulates strictly increasing entries into a [`SortedRun`].
#[derive(Default)]
pub struct SortedRunBuilder {
    data: Vec<u8>,
    offsets: Vec<usize>,
    last: Option<(usize, usize, usize, usize)>,
}

impl SortedRunBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an entry. Keys must arrive in strictly increasing order.
    pub fn push(&mut self, row: &[u8], cq: &[u8], value: &[u8]) {
        assert!(self.try_push(row, cq, value), "sorted run keys must strictly increase");
    }

    /// Appends an entry, returning `false` (and appending nothing) when the
    /// key does not sort after the previous one.
    pub fn try_push(&mut self, row: &[u8], cq: &[u8], value: &[u8]) -> bool {
        if let Some((rs, rl, cs, cl)) = self.last {
            if (&self.data[rs..rs + rl], &self.data[cs..cs + cl]) >= (row, cq) {
                return false;
            }
        }
        self.offsets.push(self.data.len());
        put_varint(&mut self.data, row.len());
        let rs = self.data.len();
        self.data.extend_from_slice(row);
        put_varint(&mut self.data, cq.len());
        let cs = self.data.len();
        self.data.extend_from_slice(cq);
        put_varint(&mut self.data, value.len());
        self.data.extend_from_slice(value);
        self.last = Some((rs, row.len(), cs, cq.len()));
        true
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn finish(self) -> SortedRun {
        SortedRun {
            data: Bytes::from(self.data),
            offsets: self.offsets,
        }
    }
}

impl SortedRun {
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Encoded size in bytes.
    pub fn byte_size(&self) -> usize {
        self.data.len()
    }

    /// `(row_start, row_end, cq_start, cq_end, value_start, value_end)`.
    fn spans(&self, idx: usize) -> [usize; 6] {
        let data = &self.data[..];
        let mut pos = self.offsets[idx];
        let mut out = [0usize; 6];
        for pair in out.chunks_mut(2) {
            let len = get_varint(data, &mut pos).expect("run index points at a valid entry");
            pair[0] = pos;
            pair[1] = pos + len;
            pos += len;
        }
        out
    }

    pub fn key_parts(&self, idx: usize) -> (&[u8], &[u8]) {
        let s = self.spans(idx);
        (&self.data[s[0]..s[1]], &self.data[s[2]..s[3]])
    }

    pub fn value_slice(&self, idx: usize) -> &[u8] {
        let s = self.spans(idx);
        &self.data[s[4]..s[5]]
    }

    /// Zero-copy entry: key and value share the run's buffer.
    pub fn entry(&self, idx: usize) -> Entry {
        let s = self.spans(idx);
        Entry {
            key: Key {
                row: self.data.slice(s[0]..s[1]),
                cq: self.data.slice(s[2]..s[3]),
            },
            value: self.data.slice(s[4]..s[5]),
        }
    }

    pub fn key(&self, idx: usize) -> Key {
        let s = self.spans(idx);
        Key {
            row: self.data.slice(s[0]..s[1]),
            cq: self.data.slice(s[2]..s[3]),
        }
    }

    pub fn value(&self, idx: usize) -> Bytes {
        let s = self.spans(idx);
        self.data.slice(s[4]..s[5])
    }

    /// Index of the first entry at or after `start`.
    pub fn lower_bound(&self, start: &Bound<Key>) -> usize {
        match start {
            Bound::Unbounded => 0,
            Bound::Included(k) => self.partition(|r, c| k.cmp_parts(r, c) == Ordering::Greater),
            Bound::Excluded(k) => self.partition(|r, c| k.cmp_parts(r, c) != Ordering::Less),
        }
    }

    /// Index one past the last entry at or before `end`.
    pub fn upper_bound(&self, end: &Bound<Key>) -> usize {
        match end {
            Bound::Unbounded => self.len(),
            Bound::Included(k) => self.partition(|r, c| k.cmp_parts(r, c) != Ordering::Less),
            Bound::Excluded(k) => self.partition(|r, c| k.cmp_parts(r, c) == Ordering::Greater),
        }
    }

    /// First index for which `pred` (monotone true→false over the run) is false.
    fn partition(&self, pred: impl Fn(&[u8], &[u8]) -> bool) -> usize {
        let (mut lo, mut hi) = (0, self.len());
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            let (row, cq) = self.key_parts(mid);
            if pred(row, cq) {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        lo
    }

    pub fn iter(&self) -> impl Iterator<Item = Entry> + '_ {
        (0..self.len()).map(|i| self.entry(i))
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&(self.data.len() as u64).to_le_bytes())?;
        out.write_all(&self.data)?;
        out.flush()
    }

    pub fn read_from<R: Read>(mut input: R) -> io::Result<SortedRun> {
        let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not a sorted run file"));
        }
        let mut len = [0u8; 8];
        input.read_exact(&mut len)?;
        let len = usize::try_from(u64::from_le_bytes(len)).map_err(|_| bad("run too large"))?;
        let mut data = vec![0u8; len];
        input.read_exact(&mut data)?;

        let mut builder = SortedRunBuilder::new();
        let mut pos = 0;
        while pos < data.len() {
            let mut parts = [&[][..]; 3];
            for part in parts.iter_mut() {
                let n = get_varint(&data, &mut pos).ok_or_else(|| bad("truncated entry"))?;
                *part = data.get(pos..pos + n).ok_or_else(|| bad("truncated entry"))?;
                pos += n;
            }
            if !builder.try_push(parts[0], parts[1], parts[2]) {
                return Err(bad("run keys out of order"));
            }
        }
        Ok(builder.finish())
    }
}

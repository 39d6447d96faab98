//! Line-oriented text form of a table: `row<TAB>cq<TAB>value<LF>`, UTF-8,
//! sorted by key.

use std::io::{BufRead, Write};

use bytes::Bytes;

use super::key::{Entry, Key};
use crate::error::{Error, Result};

fn check_field(line: usize, name: &str, field: &[u8]) -> Result<()> {
    if std::str::from_utf8(field).is_err() {
        return Err(Error::Dump {
            line,
            reason: format!("{name} is not UTF-8"),
        });
    }
    if field.iter().any(|&b| b == b'\t' || b == b'\n') {
        return Err(Error::Dump {
            line,
            reason: format!("{name} contains a tab or newline"),
        });
    }
    Ok(())
}

/// Writes entries in dump format. Returns the number of lines written.
pub fn write_dump<I, W>(entries: I, mut out: W) -> Result<u64>
where
    I: IntoIterator<Item = Result<Entry>>,
    W: Write,
{
    let mut n = 0u64;
    let mut prev: Option<Key> = None;
    for entry in entries {
        let entry = entry?;
        let line = n as usize + 1;
        check_field(line, "row", &entry.key.row)?;
        check_field(line, "column qualifier", &entry.key.cq)?;
        check_field(line, "value", &entry.value)?;
        if prev.as_ref().is_some_and(|p| *p >= entry.key) {
            return Err(Error::Dump {
                line,
                reason: format!("key {} is not after the previous key", entry.key),
            });
        }
        out.write_all(&entry.key.row)?;
        out.write_all(b"\t")?;
        out.write_all(&entry.key.cq)?;
        out.write_all(b"\t")?;
        out.write_all(&entry.value)?;
        out.write_all(b"\n")?;
        prev = Some(entry.key);
        n += 1;
    }
    out.flush()?;
    Ok(n)
}

/// Parses a dump, requiring strictly increasing keys.
pub fn read_dump<R: BufRead>(input: R) -> Result<Vec<Entry>> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let mut fields = line.split('\t');
        let (Some(row), Some(cq), Some(value), None) = (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(Error::Dump {
                line: lineno,
                reason: "expected exactly three tab-separated fields".into(),
            });
        };
        let entry = Entry::new(
            Bytes::copy_from_slice(row.as_bytes()),
            Bytes::copy_from_slice(cq.as_bytes()),
            Bytes::copy_from_slice(value.as_bytes()),
        );
        if out.last().is_some_and(|p| p.key >= entry.key) {
            return Err(Error::Dump {
                line: lineno,
                reason: "keys must be strictly increasing".into(),
            });
        }
        out.push(entry);
    }
    Ok(out)
}

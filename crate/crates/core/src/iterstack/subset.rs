//! Row subset expressions.
//!
//! Every token ends with `,`. A lone token is a single row; `lo,:,hi,` is the
//! inclusive range from `lo` to `hi`. The empty expression means every row.

use bytes::Bytes;

use crate::error::{Error, Result};
use crate::kvstore::{RangeSet, RowRange};

fn err(position: usize, reason: impl Into<String>) -> Error {
    Error::SubsetParse {
        position,
        reason: reason.into(),
    }
}

pub fn parse_subset_expr(expr: &str) -> Result<RangeSet> {
    if expr.is_empty() {
        return Ok(RangeSet::all());
    }
    let mut tokens: Vec<(usize, &str)> = Vec::new();
    let mut start = 0;
    for (i, c) in expr.char_indices() {
        if c == ',' {
            tokens.push((start, &expr[start..i]));
            start = i + 1;
        }
    }
    if start < expr.len() {
        return Err(err(start, "token is missing its trailing ','"));
    }

    let mut ranges: Vec<(RowRange, usize)> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let (pos, tok) = tokens[i];
        if tok == ":" {
            return Err(err(pos, "':' must sit between two row tokens"));
        }
        match tokens.get(i + 1) {
            Some(&(colon_pos, ":")) => {
                let (hi_pos, hi) = match tokens.get(i + 2) {
                    Some(&(p, t)) if t != ":" => (p, t),
                    _ => return Err(err(colon_pos, "dangling ':' without an upper bound")),
                };
                if tok > hi {
                    return Err(err(hi_pos, format!("range low {tok:?} exceeds high {hi:?}")));
                }
                ranges.push((
                    RowRange::closed(Bytes::copy_from_slice(tok.as_bytes()), Bytes::copy_from_slice(hi.as_bytes())),
                    pos,
                ));
                i += 3;
            }
            _ => {
                ranges.push((RowRange::single(Bytes::copy_from_slice(tok.as_bytes())), pos));
                i += 1;
            }
        }
    }
    ranges.sort_by(|a, b| a.0.low_cmp(&b.0));
    let positions: Vec<usize> = ranges.iter().map(|(_, p)| *p).collect();
    RangeSet::new(ranges.into_iter().map(|(r, _)| r).collect())
        .map_err(|o| err(positions[o.index], "range overlaps an earlier one"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(set: &RangeSet) -> Vec<RowRange> {
        set.ranges().to_vec()
    }

    #[test]
    fn documented_examples() {
        assert!(parse_subset_expr("").unwrap().is_all());
        assert_eq!(rows(&parse_subset_expr("a,:,c,").unwrap()), vec![RowRange::closed("a", "c")]);
        assert_eq!(
            rows(&parse_subset_expr("a,c,:,e,g,").unwrap()),
            vec![RowRange::single("a"), RowRange::closed("c", "e"), RowRange::single("g")]
        );
    }

    #[test]
    fn unsorted_input_is_sorted() {
        let set = parse_subset_expr("z,b,:,d,").unwrap();
        assert_eq!(rows(&set), vec![RowRange::closed("b", "d"), RowRange::single("z")]);
        // An empty token names the empty row.
        assert!(parse_subset_expr(",").unwrap().contains_row(b""));
    }

    #[test]
    fn errors_carry_positions() {
        let pos = |e: &str| match parse_subset_expr(e) {
            Err(Error::SubsetParse { position, .. }) => position,
            other => panic!("expected parse error for {e:?}, got {other:?}"),
        };
        assert_eq!(pos("a,b"), 2);
        assert_eq!(pos("a,:,"), 2);
        assert_eq!(pos(":,a,"), 0);
        assert_eq!(pos("a,:,:,"), 2);
        assert_eq!(pos("a,:,c,b,"), 6);
        assert_eq!(pos("d,:,c,"), 4);
        assert_eq!(pos("a,a,"), 2);
    }
}

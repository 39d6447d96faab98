//! Pluggable ⊕/⊗ semirings over table values.
//!
//! [`Semiring`] is the typed interface users implement. The store and the
//! iterators only see byte-string values, so every registered semiring is
//! wrapped in a [`ValueSemiring`] that decodes, computes and re-encodes.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use bytes::Bytes;
use parking_lot::RwLock;

use crate::decimal::Decimal;
use crate::error::{Error, Result};

pub const PLUS_TIMES: &str = "plus-times";
pub const MIN_PLUS: &str = "min-plus";

/// A semiring with additive identity `zero`, which must also annihilate
/// under `times`. `plus` must be associative and commutative because
/// combiners apply it to arbitrary subsets of partial products in arbitrary
/// order.
pub trait Semiring: Send + Sync + 'static {
    type Elem: Clone + PartialEq + fmt::Debug + Send + Sync + 'static;

    fn name(&self) -> &str;
    fn zero(&self) -> Self::Elem;
    fn plus(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    fn times(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    fn decode(&self, value: &[u8]) -> Option<Self::Elem>;
    fn encode(&self, elem: &Self::Elem) -> Bytes;

    fn is_zero(&self, elem: &Self::Elem) -> bool {
        *elem == self.zero()
    }
}

/// Ordinary arithmetic on exact decimals.
#[derive(Debug, Clone, Copy, Default)]
pub struct PlusTimes;

impl Semiring for PlusTimes {
    type Elem = Decimal;

    fn name(&self) -> &str {
        PLUS_TIMES
    }

    fn zero(&self) -> Decimal {
        Decimal::zero()
    }

    fn plus(&self, a: &Decimal, b: &Decimal) -> Decimal {
        a.add(b)
    }

    fn times(&self, a: &Decimal, b: &Decimal) -> Decimal {
        a.mul(b)
    }

    fn decode(&self, value: &[u8]) -> Option<Decimal> {
        Decimal::parse_bytes(value).ok()
    }

    fn encode(&self, elem: &Decimal) -> Bytes {
        Bytes::from(elem.to_bytes())
    }

    fn is_zero(&self, elem: &Decimal) -> bool {
        elem.is_zero()
    }
}

/// Tropical semiring: ⊕ = min, ⊗ = +, zero = +∞ (encoded `inf`).
#[derive(Debug, Clone, Copy, Default)]
pub struct MinPlus;

impl Semiring for MinPlus {
    /// `None` is +∞.
    type Elem = Option<Decimal>;

    fn name(&self) -> &str {
        MIN_PLUS
    }

    fn zero(&self) -> Option<Decimal> {
        None
    }

    fn plus(&self, a: &Option<Decimal>, b: &Option<Decimal>) -> Option<Decimal> {
        match (a, b) {
            (None, x) | (x, None) => x.clone(),
            (Some(x), Some(y)) => Some(x.min(y).clone()),
        }
    }

    fn times(&self, a: &Option<Decimal>, b: &Option<Decimal>) -> Option<Decimal> {
        match (a, b) {
            (Some(x), Some(y)) => Some(x.add(y)),
            _ => None,
        }
    }

    fn decode(&self, value: &[u8]) -> Option<Option<Decimal>> {
        if value == b"inf" {
            return Some(None);
        }
        Decimal::parse_bytes(value).ok().map(Some)
    }

    fn encode(&self, elem: &Option<Decimal>) -> Bytes {
        match elem {
            None => Bytes::from_static(b"inf"),
            Some(d) => Bytes::from(d.to_bytes()),
        }
    }
}

/// Which operand of a row product failed to decode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operand {
    Left(usize),
    Right(usize),
}

/// Products of two decoded rows, evaluated lazily per `(i, j)` pair.
pub trait RowProduct: Send {
    /// `left[i] ⊗ right[j]`, or `None` when the product is the semiring zero.
    fn product(&self, i: usize, j: usize) -> Option<Bytes>;
}

/// Type-erased semiring over encoded values.
pub trait ValueSemiring: Send + Sync {
    fn name(&self) -> &str;

    fn zero_value(&self) -> Bytes;

    /// `None` when the value does not decode.
    fn is_zero_value(&self, value: &[u8]) -> Option<bool>;

    /// ⊕-folds the values. `Ok(None)` means the sum is zero; `Err(i)` names
    /// the first value that does not decode.
    fn sum_values(&self, values: &[&[u8]]) -> Result<Option<Bytes>, usize>;

    fn times_values(&self, a: &[u8], b: &[u8]) -> Result<Option<Bytes>, Operand>;

    /// Decodes both rows once so each of the `|left|·|right|` products costs
    /// one ⊗ and one encode.
    fn row_product(&self, left: &[Bytes], right: &[Bytes]) -> Result<Box<dyn RowProduct>, Operand>;
}

struct Erased<S>(Arc<S>);

struct TypedRowProduct<S: Semiring> {
    semiring: Arc<S>,
    left: Vec<S::Elem>,
    right: Vec<S::Elem>,
}

impl<S: Semiring> RowProduct for TypedRowProduct<S> {
    fn product(&self, i: usize, j: usize) -> Option<Bytes> {
        let p = self.semiring.times(&self.left[i], &self.right[j]);
        if self.semiring.is_zero(&p) {
            None
        } else {
            Some(self.semiring.encode(&p))
        }
    }
}

fn decode_all<S: Semiring>(s: &S, values: &[Bytes]) -> Result<Vec<S::Elem>, usize> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| s.decode(v).ok_or(i))
        .collect()
}

impl<S: Semiring> ValueSemiring for Erased<S> {
    fn name(&self) -> &str {
        self.0.name()
    }

    fn zero_value(&self) -> Bytes {
        self.0.encode(&self.0.zero())
    }

    fn is_zero_value(&self, value: &[u8]) -> Option<bool> {
        self.0.decode(value).map(|e| self.0.is_zero(&e))
    }

    fn sum_values(&self, values: &[&[u8]]) -> Result<Option<Bytes>, usize> {
        let s = &*self.0;
        let mut acc = s.zero();
        for (i, v) in values.iter().enumerate() {
            let e = s.decode(v).ok_or(i)?;
            acc = s.plus(&acc, &e);
        }
        Ok((!s.is_zero(&acc)).then(|| s.encode(&acc)))
    }

    fn times_values(&self, a: &[u8], b: &[u8]) -> Result<Option<Bytes>, Operand> {
        let s = &*self.0;
        let a = s.decode(a).ok_or(Operand::Left(0))?;
        let b = s.decode(b).ok_or(Operand::Right(0))?;
        let p = s.times(&a, &b);
        Ok((!s.is_zero(&p)).then(|| s.encode(&p)))
    }

    fn row_product(&self, left: &[Bytes], right: &[Bytes]) -> Result<Box<dyn RowProduct>, Operand> {
        let left = decode_all(&*self.0, left).map_err(Operand::Left)?;
        let right = decode_all(&*self.0, right).map_err(Operand::Right)?;
        Ok(Box::new(TypedRowProduct {
            semiring: self.0.clone(),
            left,
            right,
        }))
    }
}

pub fn erase<S: Semiring>(semiring: S) -> Arc<dyn ValueSemiring> {
    Arc::new(Erased(Arc::new(semiring)))
}

/// Semirings addressable by name from table configs and iterator options.
pub struct SemiringRegistry {
    entries: RwLock<HashMap<String, Arc<dyn ValueSemiring>>>,
}

impl SemiringRegistry {
    /// A registry holding the built-in `plus-times` and `min-plus` semirings.
    pub fn with_builtins() -> Self {
        let registry = SemiringRegistry {
            entries: RwLock::new(HashMap::new()),
        };
        registry.register(PlusTimes);
        registry.register(MinPlus);
        registry
    }

    /// Registers (or replaces) a semiring under its own name.
    pub fn register<S: Semiring>(&self, semiring: S) {
        let name = semiring.name().to_string();
        self.entries.write().insert(name, erase(semiring));
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn ValueSemiring>> {
        self.entries
            .read()
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownSemiring(name.to_string()))
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<_> = self.entries.read().keys().cloned().collect();
        names.sort();
        names
    }
}

impl Default for SemiringRegistry {
    fn default() -> Self {
        SemiringRegistry::with_builtins()
    }
}

impl fmt::Debug for SemiringRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SemiringRegistry")
            .field("names", &self.names())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dec() -> impl Strategy<Value = Decimal> {
        (-10_000i64..10_000, 0u32..4).prop_map(|(m, s)| {
            Decimal::from_parts(m.into(), s)
        })
    }

    fn tropical() -> impl Strategy<Value = Option<Decimal>> {
        proptest::option::weighted(0.8, dec())
    }

    fn check_laws<S: Semiring>(s: &S, a: &S::Elem, b: &S::Elem, c: &S::Elem) {
        let zero = s.zero();
        assert_eq!(s.plus(&s.plus(a, b), c), s.plus(a, &s.plus(b, c)));
        assert_eq!(s.plus(a, b), s.plus(b, a));
        assert_eq!(s.plus(a, &zero), *a);
        assert_eq!(s.plus(&zero, a), *a);
        assert!(s.is_zero(&s.times(a, &zero)));
        assert!(s.is_zero(&s.times(&zero, a)));
        assert_eq!(s.decode(&s.encode(a)).as_ref(), Some(a));
    }

    proptest! {
        #[test]
        fn plus_times_laws(a in dec(), b in dec(), c in dec()) {
            check_laws(&PlusTimes, &a, &b, &c);
        }

        #[test]
        fn min_plus_laws(a in tropical(), b in tropical(), c in tropical()) {
            check_laws(&MinPlus, &a, &b, &c);
        }
    }

    #[test]
    fn erased_sum_drops_zero() {
        let s = erase(PlusTimes);
        assert_eq!(s.sum_values(&[b"2", b"3"]).unwrap(), Some(Bytes::from("5")));
        assert_eq!(s.sum_values(&[b"2", b"-2"]).unwrap(), None);
        assert_eq!(s.sum_values(&[b"2", b"x"]), Err(1));
        assert_eq!(s.times_values(b"1.5", b"4").unwrap(), Some(Bytes::from("6")));
        assert_eq!(s.times_values(b"0", b"4").unwrap(), None);
    }

    #[test]
    fn row_product_reports_bad_operand() {
        let s = erase(PlusTimes);
        let left = [Bytes::from("1"), Bytes::from("nope")];
        let right = [Bytes::from("2")];
        assert_eq!(s.row_product(&left, &right).err(), Some(Operand::Left(1)));
        let p = s.row_product(&right, &left[..1]).unwrap();
        assert_eq!(p.product(0, 0), Some(Bytes::from("2")));
    }

    #[test]
    fn registry_lookup() {
        let r = SemiringRegistry::with_builtins();
        assert_eq!(r.names(), vec![MIN_PLUS.to_string(), PLUS_TIMES.to_string()]);
        assert!(matches!(r.get("max-times"), Err(Error::UnknownSemiring(_))));
        let mp = r.get(MIN_PLUS).unwrap();
        assert_eq!(mp.sum_values(&[b"3", b"inf", b"1.5"]).unwrap(), Some(Bytes::from("1.5")));
        assert_eq!(mp.times_values(b"3", b"inf").unwrap(), None);
    }
}

//! Exact decimal arithmetic for table values.
//!
//! A [`Decimal`] is `mantissa × 10^-scale`, always kept in canonical form:
//! no trailing fractional zeros, zero has scale 0, and the mantissa lives in
//! an `i128` unless it does not fit. Canonical form makes the textual
//! encoding a function of the numeric value, so sums are byte-identical no
//! matter in which order a combiner folds them.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};

/// Largest exponent magnitude accepted by the parser.
const MAX_EXPONENT: i64 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Mantissa {
    Small(i128),
    Big(BigInt),
}

impl Mantissa {
    fn to_big(&self) -> BigInt {
        match self {
            Mantissa::Small(v) => BigInt::from(*v),
            Mantissa::Big(v) => v.clone(),
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            Mantissa::Small(v) => *v == 0,
            Mantissa::Big(v) => v.is_zero(),
        }
    }

    fn is_negative(&self) -> bool {
        match self {
            Mantissa::Small(v) => *v < 0,
            Mantissa::Big(v) => v.is_negative(),
        }
    }
}

/// Arbitrary-precision signed decimal number.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Decimal {
    mantissa: Mantissa,
    scale: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed decimal {0:?}")]
pub struct ParseDecimalError(pub String);

fn pow10_small(exp: u32) -> Option<i128> {
    10i128.checked_pow(exp)
}

fn pow10_big(exp: u32) -> BigInt {
    num_traits::pow(BigInt::from(10), exp as usize)
}

fn scale_up(m: &Mantissa, by: u32) -> Mantissa {
    if by == 0 {
        return m.clone();
    }
    if let Mantissa::Small(v) = m {
        if let Some(p) = pow10_small(by) {
            if let Some(r) = v.checked_mul(p) {
                return Mantissa::Small(r);
            }
        }
    }
    Mantissa::Big(m.to_big() * pow10_big(by))
}

impl Decimal {
    pub const fn zero() -> Self {
        Decimal {
            mantissa: Mantissa::Small(0),
            scale: 0,
        }
    }

    pub fn one() -> Self {
        Decimal::from(1i64)
    }

    fn normalized(mantissa: Mantissa, mut scale: u32) -> Self {
        match mantissa {
            Mantissa::Small(mut v) => {
                if v == 0 {
                    return Decimal::zero();
                }
                while scale > 0 && v % 10 == 0 {
                    v /= 10;
                    scale -= 1;
                }
                Decimal {
                    mantissa: Mantissa::Small(v),
                    scale,
                }
            }
            Mantissa::Big(mut v) => {
                if v.is_zero() {
                    return Decimal::zero();
                }
                let ten = BigInt::from(10);
                while scale > 0 {
                    let (q, r) = v.div_rem(&ten);
                    if !r.is_zero() {
                        break;
                    }
                    v = q;
                    scale -= 1;
                }
                let mantissa = match v.to_i128() {
                    Some(small) => Mantissa::Small(small),
                    None => Mantissa::Big(v),
                };
                Decimal { mantissa, scale }
            }
        }
    }

    /// Digits after the decimal point in canonical form.
    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.mantissa.is_negative()
    }

    pub fn is_integer(&self) -> bool {
        self.scale == 0
    }

    /// Returns the value as `i128` when it is an integer that fits.
    pub fn to_i128(&self) -> Option<i128> {
        match (&self.mantissa, self.scale) {
            (Mantissa::Small(v), 0) => Some(*v),
            _ => None,
        }
    }

    /// Returns `(mantissa, scale)` with the value equal to `mantissa / 10^scale`.
    pub fn to_parts(&self) -> (BigInt, u32) {
        (self.mantissa.to_big(), self.scale)
    }

    pub fn from_parts(mantissa: BigInt, scale: u32) -> Self {
        Decimal::normalized(Mantissa::Big(mantissa), scale)
    }

    pub fn add(&self, other: &Decimal) -> Decimal {
        let scale = self.scale.max(other.scale);
        if let (Mantissa::Small(a), Mantissa::Small(b)) = (&self.mantissa, &other.mantissa) {
            let a = pow10_small(scale - self.scale).and_then(|p| a.checked_mul(p));
            let b = pow10_small(scale - other.scale).and_then(|p| b.checked_mul(p));
            if let Some(sum) = a.zip(b).and_then(|(a, b)| a.checked_add(b)) {
                return Decimal::normalized(Mantissa::Small(sum), scale);
            }
        }
        let a = scale_up(&self.mantissa, scale - self.scale).to_big();
        let b = scale_up(&other.mantissa, scale - other.scale).to_big();
        Decimal::normalized(Mantissa::Big(a + b), scale)
    }

    pub fn mul(&self, other: &Decimal) -> Decimal {
        let scale = self
            .scale
            .checked_add(other.scale)
            .expect("decimal scale overflow");
        if let (Mantissa::Small(a), Mantissa::Small(b)) = (&self.mantissa, &other.mantissa) {
            if let Some(p) = a.checked_mul(*b) {
                return Decimal::normalized(Mantissa::Small(p), scale);
            }
        }
        Decimal::normalized(
            Mantissa::Big(self.mantissa.to_big() * other.mantissa.to_big()),
            scale,
        )
    }

    pub fn neg(&self) -> Decimal {
        let mantissa = match &self.mantissa {
            Mantissa::Small(v) => match v.checked_neg() {
                Some(n) => Mantissa::Small(n),
                None => Mantissa::Big(-BigInt::from(*v)),
            },
            Mantissa::Big(v) => Mantissa::Big(-v),
        };
        Decimal::normalized(mantissa, self.scale)
    }

    /// Parses canonical or non-canonical decimal text: optional sign, digits
    /// with an optional fraction, optional `e`/`E` exponent.
    pub fn parse_bytes(text: &[u8]) -> Result<Decimal, ParseDecimalError> {
        let fail = || ParseDecimalError(String::from_utf8_lossy(text).into_owned());
        let mut pos = 0;
        let negative = match text.first() {
            Some(b'-') => {
                pos = 1;
                true
            }
            Some(b'+') => {
                pos = 1;
                false
            }
            _ => false,
        };
        let int_start = pos;
        while pos < text.len() && text[pos].is_ascii_digit() {
            pos += 1;
        }
        let int_digits = &text[int_start..pos];
        let mut frac_digits: &[u8] = &[];
        if pos < text.len() && text[pos] == b'.' {
            pos += 1;
            let start = pos;
            while pos < text.len() && text[pos].is_ascii_digit() {
                pos += 1;
            }
            frac_digits = &text[start..pos];
        }
        if int_digits.is_empty() && frac_digits.is_empty() {
            return Err(fail());
        }
        let mut exponent: i64 = 0;
        if pos < text.len() && (text[pos] == b'e' || text[pos] == b'E') {
            pos += 1;
            let exp_negative = match text.get(pos) {
                Some(b'-') => {
                    pos += 1;
                    true
                }
                Some(b'+') => {
                    pos += 1;
                    false
                }
                _ => false,
            };
            let start = pos;
            while pos < text.len() && text[pos].is_ascii_digit() {
                if exponent > MAX_EXPONENT {
                    return Err(fail());
                }
                exponent = exponent * 10 + i64::from(text[pos] - b'0');
                pos += 1;
            }
            if start == pos || exponent > MAX_EXPONENT {
                return Err(fail());
            }
            if exp_negative {
                exponent = -exponent;
            }
        }
        if pos != text.len() {
            return Err(fail());
        }

        let digit_count = int_digits.len() + frac_digits.len();
        let mut mantissa = if digit_count <= 38 {
            let mut v: i128 = 0;
            for &d in int_digits.iter().chain(frac_digits) {
                v = v * 10 + i128::from(d - b'0');
            }
            Mantissa::Small(if negative { -v } else { v })
        } else {
            let mut digits = Vec::with_capacity(digit_count);
            digits.extend_from_slice(int_digits);
            digits.extend_from_slice(frac_digits);
            let v = BigInt::parse_bytes(&digits, 10).ok_or_else(fail)?;
            Mantissa::Big(if negative { -v } else { v })
        };
        let mut scale = frac_digits.len() as i64 - exponent;
        if scale < 0 {
            mantissa = scale_up(&mantissa, (-scale) as u32);
            scale = 0;
        }
        let scale = u32::try_from(scale).map_err(|_| fail())?;
        Ok(Decimal::normalized(mantissa, scale))
    }

    /// Canonical text encoding as bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8);
        self.write_into(&mut out);
        out
    }

    fn write_into(&self, out: &mut Vec<u8>) {
        use std::io::Write;
        if self.scale == 0 {
            match &self.mantissa {
                Mantissa::Small(v) => write!(out, "{v}"),
                Mantissa::Big(v) => write!(out, "{v}"),
            }
            .expect("writing to a Vec cannot fail");
            return;
        }
        let digits = match &self.mantissa {
            Mantissa::Small(v) => v.unsigned_abs().to_string(),
            Mantissa::Big(v) => v.abs().to_string(),
        };
        if self.is_negative() {
            out.push(b'-');
        }
        let scale = self.scale as usize;
        if digits.len() <= scale {
            out.extend_from_slice(b"0.");
            out.resize(out.len() + scale - digits.len(), b'0');
            out.extend_from_slice(digits.as_bytes());
        } else {
            let split = digits.len() - scale;
            out.extend_from_slice(&digits.as_bytes()[..split]);
            out.push(b'.');
            out.extend_from_slice(&digits.as_bytes()[split..]);
        }
    }
}

impl Default for Decimal {
    fn default() -> Self {
        Decimal::zero()
    }
}

impl From<i64> for Decimal {
    fn from(v: i64) -> Self {
        Decimal::normalized(Mantissa::Small(i128::from(v)), 0)
    }
}

impl From<i128> for Decimal {
    fn from(v: i128) -> Self {
        Decimal::normalized(Mantissa::Small(v), 0)
    }
}

impl FromStr for Decimal {
    type Err = ParseDecimalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Decimal::parse_bytes(s.as_bytes())
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bytes = self.to_bytes();
        f.write_str(std::str::from_utf8(&bytes).expect("decimal text is ASCII"))
    }
}

impl Ord for Decimal {
    fn cmp(&self, other: &Self) -> Ordering {
        let scale = self.scale.max(other.scale);
        if let (Mantissa::Small(a), Mantissa::Small(b)) = (&self.mantissa, &other.mantissa) {
            let a = pow10_small(scale - self.scale).and_then(|p| a.checked_mul(p));
            let b = pow10_small(scale - other.scale).and_then(|p| b.checked_mul(p));
            if let (Some(a), Some(b)) = (a, b) {
                return a.cmp(&b);
            }
        }
        let a = scale_up(&self.mantissa, scale - self.scale).to_big();
        let b = scale_up(&other.mantissa, scale - other.scale).to_big();
        a.cmp(&b)
    }
}

impl PartialOrd for Decimal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::rational::BigRational;
    use proptest::prelude::*;

    fn d(s: &str) -> Decimal {
        s.parse().unwrap()
    }

    fn rational(x: &Decimal) -> BigRational {
        let (m, s) = x.to_parts();
        BigRational::new(m, pow10_big(s))
    }

    #[test]
    fn canonical_encoding() {
        assert_eq!(d("10.0").to_string(), "10");
        assert_eq!(d("-0").to_string(), "0");
        assert_eq!(d("0.50").to_string(), "0.5");
        assert_eq!(d("-.25").to_string(), "-0.25");
        assert_eq!(d("1.5e2").to_string(), "150");
        assert_eq!(d("15e-3").to_string(), "0.015");
        assert_eq!(d("+007").to_string(), "7");
        assert_eq!(d("2.5").mul(&d("2")).to_string(), "5");
        assert_eq!(d("1.5").add(&d("1.5")).to_string(), "3");
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["", "-", ".", "1.2.3", "abc", "1e", "1e+", "--1", " 1", "1 ", "1e9999999"] {
            assert!(Decimal::parse_bytes(bad.as_bytes()).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn overflow_promotes_to_big() {
        let big = d("170141183460469231731687303715884105727"); // i128::MAX
        let sum = big.add(&Decimal::one());
        assert_eq!(sum.to_string(), "170141183460469231731687303715884105728");
        let sq = big.mul(&big);
        assert_eq!(sq.add(&big.mul(&big).neg()), Decimal::zero());
        // Canonical form demotes back to the small representation.
        assert_eq!(sum.add(&Decimal::from(-1i64)), big);
    }

    fn arb_decimal() -> impl Strategy<Value = String> {
        (
            any::<bool>(),
            "[0-9]{1,45}",
            proptest::option::of("[0-9]{1,12}"),
        )
            .prop_map(|(neg, int, frac)| {
                let mut s = String::new();
                if neg {
                    s.push('-');
                }
                s.push_str(&int);
                if let Some(f) = frac {
                    s.push('.');
                    s.push_str(&f);
                }
                s
            })
    }

    proptest! {
        #[test]
        fn arithmetic_matches_rationals(a in arb_decimal(), b in arb_decimal()) {
            let (x, y) = (d(&a), d(&b));
            prop_assert_eq!(rational(&x.add(&y)), rational(&x) + rational(&y));
            prop_assert_eq!(rational(&x.mul(&y)), rational(&x) * rational(&y));
            prop_assert_eq!(x.cmp(&y), rational(&x).cmp(&rational(&y)));
        }

        #[test]
        fn text_roundtrip_is_canonical(a in arb_decimal()) {
            let x = d(&a);
            let text = x.to_string();
            let back = d(&text);
            prop_assert_eq!(&back, &x);
            prop_assert_eq!(back.to_string(), text);
        }
    }
}

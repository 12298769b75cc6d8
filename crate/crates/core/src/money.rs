//! Exact money and fraction arithmetic.
//!
//! Every bid, value, price and ledger sum is an exact rational so that the
//! good/bad predicate `average >= (1 - epsilon) * mean` is decided without
//! float drift, including the boundary case of equality.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Exact rational used for probabilities and dimensionless parameters.
pub type Fraction = Ratio<i128>;

/// Largest number of significant decimal digits a float may carry before
/// [`fraction_from_f64`] treats it as a non-terminating fraction.
const MAX_DECIMAL_DIGITS: usize = 12;

/// An exact amount of money.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Money(Fraction);

impl Money {
    pub const ZERO: Money = Money(Ratio::new_raw(0, 1));

    pub fn new(numer: i128, denom: i128) -> Self {
        Money(Ratio::new(numer, denom))
    }

    pub fn from_integer(n: i128) -> Self {
        Money(Ratio::from_integer(n))
    }

    pub fn from_ratio(r: Fraction) -> Self {
        Money(r)
    }

    /// `ticks * tick`, the grid point with the given index.
    pub fn from_ticks(ticks: i128, tick: Money) -> Self {
        Money(tick.0 * ticks)
    }

    /// Largest multiple of `1/resolution` not above `x`.
    ///
    /// Used where a real-valued quantity (square roots, logarithms) has to
    /// become a payment.
    pub fn from_f64_floor(x: f64, resolution: i128) -> Self {
        let scaled = (x * resolution as f64).floor();
        Money(Ratio::new(scaled as i128, resolution))
    }

    pub fn ratio(self) -> Fraction {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        fraction_to_f64(self.0)
    }

    pub fn to_big(self) -> BigRational {
        fraction_to_big(self.0)
    }

    pub fn is_zero(self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(self) -> bool {
        self.0.is_negative()
    }

    /// Number of whole `tick`s in `self`, if `self` lies on that grid.
    pub fn ticks(self, tick: Money) -> Option<i128> {
        let q = self.0 / tick.0;
        q.is_integer().then(|| q.to_integer())
    }

    pub fn clamp_min(self, floor: Money) -> Money {
        self.max(floor)
    }
}

impl fmt::Debug for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Money({})", format_fraction(self.0))
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_fraction(self.0))
    }
}

impl FromStr for Money {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_fraction(s).map(Money)
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl SubAssign for Money {
    fn sub_assign(&mut self, rhs: Money) {
        self.0 -= rhs.0;
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl Mul<Fraction> for Money {
    type Output = Money;
    fn mul(self, rhs: Fraction) -> Money {
        Money(self.0 * rhs)
    }
}

impl Mul<i128> for Money {
    type Output = Money;
    fn mul(self, rhs: i128) -> Money {
        Money(self.0 * rhs)
    }
}

impl Div<i128> for Money {
    type Output = Money;
    fn div(self, rhs: i128) -> Money {
        Money(self.0 / rhs)
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, |a, b| a + b)
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&format_fraction(self.0))
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        ExactNumber::deserialize(deserializer).map(|n| Money(n.0))
    }
}

/// A config number that may be written as a JSON number (`0.25`) or as a
/// string holding a decimal or a fraction (`"0.25"`, `"1/3"`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExactNumber(pub Fraction);

impl Serialize for ExactNumber {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&format_fraction(self.0))
    }
}

impl<'de> Deserialize<'de> for ExactNumber {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(i64),
            Float(f64),
            Text(String),
        }
        let frac = match Repr::deserialize(deserializer)? {
            Repr::Int(i) => Ok(Ratio::from_integer(i as i128)),
            Repr::Float(x) => fraction_from_f64(x),
            Repr::Text(s) => parse_fraction(&s),
        };
        frac.map(ExactNumber).map_err(serde::de::Error::custom)
    }
}

/// Parses `"3"`, `"0.25"`, `"-1.5"` or `"1/3"` into an exact fraction.
pub fn parse_fraction(s: &str) -> Result<Fraction> {
    let s = s.trim();
    let bad = || Error::Parse(format!("not an exact number: {s:?}"));
    if let Some((n, d)) = s.split_once('/') {
        let n: i128 = n.trim().parse().map_err(|_| bad())?;
        let d: i128 = d.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(Ratio::new(n, d));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    if frac_part.len() > 30 {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: i128 = if digits.is_empty() { 0 } else { digits.parse().map_err(|_| bad())? };
    let denom = 10i128.pow(frac_part.len() as u32);
    let r = Ratio::new(numer, denom);
    Ok(if neg { -r } else { r })
}

/// Converts a float to the fraction it was most likely meant to denote.
///
/// Short decimals (`0.01`) map to their exact decimal value; anything else
/// (`0.3333333333333333`) goes through a continued-fraction approximation.
pub fn fraction_from_f64(x: f64) -> Result<Fraction> {
    if !x.is_finite() {
        return Err(Error::Parse(format!("non-finite number {x}")));
    }
    let shortest = format!("{x}");
    if !shortest.contains('e') {
        let significant = shortest.trim_start_matches('-').replace('.', "").trim_start_matches('0').len();
        if significant <= MAX_DECIMAL_DIGITS {
            return parse_fraction(&shortest);
        }
    }
    Ratio::<i128>::approximate_float(x)
        .map(|r| {
            // Keep denominators small enough for ledger sums over long horizons.
            if *r.denom() > 1 << 40 {
                Ratio::new((x * (1u64 << 40) as f64).round() as i128, 1 << 40)
            } else {
                r
            }
        })
        .ok_or_else(|| Error::Parse(format!("cannot represent {x} exactly")))
}

pub fn fraction_to_f64(r: Fraction) -> f64 {
    r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN)
}

pub fn fraction_to_big(r: Fraction) -> BigRational {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

pub fn big_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Terminating decimals print as decimals, everything else as `n/d`.
pub fn format_fraction(r: Fraction) -> String {
    let mut d = *r.denom();
    let mut places = 0u32;
    let mut twos = 0u32;
    let mut fives = 0u32;
    while d % 2 == 0 {
        d /= 2;
        twos += 1;
    }
    while d % 5 == 0 {
        d /= 5;
        fives += 1;
    }
    if d != 1 || twos.max(fives) > 30 {
        return format!("{}/{}", r.numer(), r.denom());
    }
    places += twos.max(fives);
    if places == 0 {
        return r.numer().to_string();
    }
    let scaled = (r * 10i128.pow(places)).to_integer();
    let neg = scaled < 0;
    let digits = format!("{:0>width$}", scaled.abs(), width = places as usize + 1);
    let (int_part, frac_part) = digits.split_at(digits.len() - places as usize);
    format!("{}{}.{}", if neg { "-" } else { "" }, int_part, frac_part)
}

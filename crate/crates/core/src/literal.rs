//! Exact literal constants: decimal numbers, strings, booleans.
//!
//! Numbers are arbitrary-precision rationals whose denominators stay powers
//! of ten under `+`, `-`, `*`, so every value prints back as a finite
//! decimal. Binary floating point is never involved.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

/// Exact decimal number.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Decimal(BigRational);

impl Decimal {
    pub fn zero() -> Self {
        Decimal(BigRational::zero())
    }

    pub fn from_int(n: i64) -> Self {
        Decimal(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn rational(&self) -> &BigRational {
        &self.0
    }

    pub fn from_rational(r: BigRational) -> Self {
        Decimal(r)
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn add(&self, other: &Decimal) -> Decimal {
        Decimal(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Decimal) -> Decimal {
        Decimal(&self.0 - &other.0)
    }

    pub fn mul(&self, other: &Decimal) -> Decimal {
        Decimal(&self.0 * &other.0)
    }

    pub fn neg(&self) -> Decimal {
        Decimal(-&self.0)
    }

    pub fn max(&self, other: &Decimal) -> Decimal {
        if self.0 >= other.0 { self.clone() } else { other.clone() }
    }

    pub fn min(&self, other: &Decimal) -> Decimal {
        if self.0 <= other.0 { self.clone() } else { other.clone() }
    }
}

impl fmt::Display for Decimal {
    /// Renders as a finite decimal when the denominator is of the form
    /// 2^a * 5^b, else falls back to `p/q` (unreachable without division).
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let numer = self.0.numer();
        let denom = self.0.denom();
        if denom == &BigInt::from(1) {
            return write!(f, "{numer}");
        }
        // Count factors of 2 and 5 in the denominator.
        let mut d = denom.clone();
        let (two, five) = (BigInt::from(2), BigInt::from(5));
        let mut twos = 0u32;
        let mut fives = 0u32;
        while (&d % &two).is_zero() {
            d /= &two;
            twos += 1;
        }
        while (&d % &five).is_zero() {
            d /= &five;
            fives += 1;
        }
        if d != BigInt::from(1) {
            return write!(f, "{numer}/{denom}");
        }
        let digits = twos.max(fives);
        // Scale numerator to an integer over 10^digits.
        let mut scaled = numer.clone();
        for _ in twos..digits {
            scaled *= &two;
        }
        for _ in fives..digits {
            scaled *= &five;
        }
        let neg = scaled.is_negative();
        let abs = scaled.abs().to_string();
        let abs = if abs.len() <= digits as usize {
            format!("{}{}", "0".repeat(digits as usize - abs.len() + 1), abs)
        } else {
            abs
        };
        let split = abs.len() - digits as usize;
        let (int_part, frac_part) = abs.split_at(split);
        let frac_part = frac_part.trim_end_matches('0');
        let sign = if neg { "-" } else { "" };
        if frac_part.is_empty() {
            write!(f, "{sign}{int_part}")
        } else {
            write!(f, "{sign}{int_part}.{frac_part}")
        }
    }
}

impl fmt::Debug for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Parse error for decimal literals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseDecimalError(pub String);

impl fmt::Display for ParseDecimalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid decimal literal: {}", self.0)
    }
}

impl std::error::Error for ParseDecimalError {}

impl FromStr for Decimal {
    type Err = ParseDecimalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let (neg, t) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t),
        };
        let (int_part, frac_part) = match t.split_once('.') {
            Some((i, fr)) => (i, fr),
            None => (t, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(ParseDecimalError(s.to_string()));
        }
        if !int_part.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
        {
            return Err(ParseDecimalError(s.to_string()));
        }
        let digits = format!("{int_part}{frac_part}");
        let digits = if digits.is_empty() { "0".to_string() } else { digits };
        let numer: BigInt = digits.parse().map_err(|_| ParseDecimalError(s.to_string()))?;
        let denom = BigInt::from(10).pow(frac_part.len() as u32);
        let r = BigRational::new(numer, denom);
        Ok(Decimal(if neg { -r } else { r }))
    }
}

/// A literal constant of one of the three built-in types.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Literal {
    Num(Decimal),
    Str(String),
    Bool(bool),
}

impl Literal {
    pub fn num(s: &str) -> Literal {
        Literal::Num(s.parse().expect("numeric literal"))
    }

    pub fn sort_name(&self) -> &'static str {
        match self {
            Literal::Num(_) => "Float",
            Literal::Str(_) => "String",
            Literal::Bool(_) => "Bool",
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Num(d) => write!(f, "{d}"),
            Literal::Str(s) => write!(f, "'{}'", s.replace('\'', "\\'")),
            Literal::Bool(b) => write!(f, "{b}"),
        }
    }
}

impl fmt::Debug for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_print_round() {
        for s in ["0", "1", "3.2", "0.052", "-4.75", "13722", "0.7"] {
            let d: Decimal = s.parse().unwrap();
            assert_eq!(d.to_string(), s);
        }
    }

    #[test]
    fn leading_dot_normalizes() {
        let d: Decimal = ".052".parse().unwrap();
        assert_eq!(d.to_string(), "0.052");
    }

    #[test]
    fn exact_arithmetic() {
        let a: Decimal = "1".parse().unwrap();
        let b: Decimal = "2.2".parse().unwrap();
        assert_eq!(a.add(&b).to_string(), "3.2");
        let x: Decimal = "0.1".parse().unwrap();
        let y: Decimal = "0.2".parse().unwrap();
        assert_eq!(x.add(&y).to_string(), "0.3");
    }

    #[test]
    fn trailing_zeros_dropped() {
        let a: Decimal = "2.50".parse().unwrap();
        assert_eq!(a.to_string(), "2.5");
        let b: Decimal = "3.00".parse().unwrap();
        assert_eq!(b.to_string(), "3");
    }

    #[test]
    fn bad_literals_rejected() {
        assert!("".parse::<Decimal>().is_err());
        assert!("1.2.3".parse::<Decimal>().is_err());
        assert!("abc".parse::<Decimal>().is_err());
    }
}

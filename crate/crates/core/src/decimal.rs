//! Exact fixed-point decimals for numeric keys, filters and sums.
//!
//! Accepted syntax is an optional sign, one or more digits and an optional
//! fractional part (`-12`, `+3.50`, `0.125`). Exponents are rejected. Values
//! carry up to 38 significant digits.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

const MAX_DIGITS: usize = 38;

#[derive(Clone, Copy, Debug)]
pub struct Decimal {
    mantissa: i128,
    scale: u32,
}

fn pow10(exp: u32) -> Option<i128> {
    10i128.checked_pow(exp)
}

impl Decimal {
    pub const ZERO: Decimal = Decimal {
        mantissa: 0,
        scale: 0,
    };

    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa == 0
    }

    fn rescale(&self, scale: u32) -> Result<i128> {
        debug_assert!(scale >= self.scale);
        pow10(scale - self.scale)
            .and_then(|f| self.mantissa.checked_mul(f))
            .ok_or(Error::Overflow)
    }

    /// Exact sum. The result keeps the larger of the two scales.
    pub fn checked_add(&self, other: &Decimal) -> Result<Decimal> {
        let scale = self.scale.max(other.scale);
        let mantissa = self
            .rescale(scale)?
            .checked_add(other.rescale(scale)?)
            .ok_or(Error::Overflow)?;
        Ok(Decimal { mantissa, scale })
    }

    /// Canonical text with trailing fractional zeros removed, so that equal
    /// values always render identically.
    pub fn normalized(&self) -> Decimal {
        let mut d = *self;
        while d.scale > 0 && d.mantissa % 10 == 0 {
            d.mantissa /= 10;
            d.scale -= 1;
        }
        d
    }
}

impl FromStr for Decimal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::NotNumeric(s.to_string());
        let (negative, body) = match s.as_bytes().first() {
            Some(b'-') => (true, &s[1..]),
            Some(b'+') => (false, &s[1..]),
            _ => (false, s),
        };
        let (int, frac) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int.is_empty()
            || !int.bytes().all(|b| b.is_ascii_digit())
            || (body.contains('.') && frac.is_empty())
            || !frac.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(bad());
        }
        let int = int.trim_start_matches('0');
        if int.len() + frac.len() > MAX_DIGITS {
            return Err(Error::Overflow);
        }
        let mut mantissa: i128 = 0;
        for b in int.bytes().chain(frac.bytes()) {
            mantissa = mantissa * 10 + i128::from(b - b'0');
        }
        Ok(Decimal {
            mantissa: if negative { -mantissa } else { mantissa },
            scale: frac.len() as u32,
        })
    }
}

impl Ord for Decimal {
    fn cmp(&self, other: &Self) -> Ordering {
        // Integer parts first; fractional remainders are < 10^38 after
        // alignment so the second step cannot overflow.
        let (fa, fb) = (pow10(self.scale).unwrap(), pow10(other.scale).unwrap());
        let (ia, ib) = (self.mantissa / fa, other.mantissa / fb);
        ia.cmp(&ib).then_with(|| {
            let scale = self.scale.max(other.scale);
            let ra = (self.mantissa % fa) * pow10(scale - self.scale).unwrap();
            let rb = (other.mantissa % fb) * pow10(scale - other.scale).unwrap();
            ra.cmp(&rb)
        })
    }
}

impl PartialOrd for Decimal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Decimal {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Decimal {}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let abs = self.mantissa.unsigned_abs();
        let factor = 10u128.pow(self.scale);
        if self.mantissa < 0 {
            f.write_str("-")?;
        }
        write!(f, "{}", abs / factor)?;
        if self.scale > 0 {
            write!(f, ".{:0width$}", abs % factor, width = self.scale as usize)?;
        }
        Ok(())
    }
}

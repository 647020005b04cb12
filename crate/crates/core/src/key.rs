//! Key addressing: `key=FROM[/TO][@num][@desc]` column spans and the record
//! comparator built on them.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::decimal::Decimal;
use crate::error::{Error, Result};
use crate::record::Record;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Raw byte order, locale independent.
    Lexicographic,
    /// Decimal value order.
    Numeric,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Ascending,
    Descending,
}

/// An inclusive, 1-based column span with its comparison mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct KeyRange {
    from: usize,
    to: usize,
    mode: Mode,
    direction: Direction,
}

impl KeyRange {
    pub fn new(from: usize, to: usize) -> Result<Self> {
        if from == 0 || to < from {
            return Err(Error::InvalidArgument(format!(
                "invalid column span {from}/{to}"
            )));
        }
        Ok(KeyRange {
            from,
            to,
            mode: Mode::Lexicographic,
            direction: Direction::Ascending,
        })
    }

    pub fn column(col: usize) -> Result<Self> {
        Self::new(col, col)
    }

    pub fn numeric(mut self) -> Self {
        self.mode = Mode::Numeric;
        self
    }

    pub fn descending(mut self) -> Self {
        self.direction = Direction::Descending;
        self
    }

    pub fn from(&self) -> usize {
        self.from
    }

    pub fn to(&self) -> usize {
        self.to
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// Number of columns in the span.
    pub fn len(&self) -> usize {
        self.to - self.from + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlaps(&self, other: &KeyRange) -> bool {
        self.from <= other.to && other.from <= self.to
    }

    pub fn contains(&self, column: usize) -> bool {
        (self.from..=self.to).contains(&column)
    }

    /// The key columns of a line, in order.
    pub fn columns<'a>(&self, line: &'a str) -> impl Iterator<Item = &'a str> {
        line.split(' ').skip(self.from - 1).take(self.len())
    }

    /// The key columns as one contiguous slice (they are separated by single spaces).
    pub fn slice<'a>(&self, line: &'a str) -> Option<&'a str> {
        let bytes = line.as_bytes();
        let mut start = 0;
        let mut spaces = memchr::memchr_iter(b' ', bytes);
        for _ in 1..self.from {
            start = spaces.next()? + 1;
        }
        for _ in self.from..self.to {
            spaces.next()?;
        }
        let end = spaces.next().unwrap_or(bytes.len());
        Some(&line[start..end])
    }

    /// Verifies that `line` is wide enough and, in numeric mode, that every
    /// key column is a decimal. Lines that pass can be compared with
    /// [`KeyRange::cmp_lines`].
    pub fn check(&self, line: &str) -> Result<()> {
        let Some(key) = self.slice(line) else {
            return Err(Error::TooNarrow {
                width: line.split(' ').count(),
                needed: self.to,
            });
        };
        if self.mode == Mode::Numeric {
            for col in key.split(' ') {
                col.parse::<Decimal>()?;
            }
        }
        Ok(())
    }

    /// Compares two checked lines on this key.
    pub fn cmp_lines(&self, a: &str, b: &str) -> Ordering {
        compare_spans(a, self, b, self)
    }

    /// FNV-1a over the key columns. Numeric keys are hashed in canonical
    /// form so equal values share a hash.
    pub fn stable_hash(&self, line: &str) -> u64 {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h = OFFSET;
        let mut feed = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(PRIME);
            }
        };
        match self.mode {
            Mode::Lexicographic => feed(self.slice(line).unwrap_or(line).as_bytes()),
            Mode::Numeric => {
                for (i, col) in self.columns(line).enumerate() {
                    if i > 0 {
                        feed(b" ");
                    }
                    match col.parse::<Decimal>() {
                        Ok(d) => feed(d.normalized().to_string().as_bytes()),
                        Err(_) => feed(col.as_bytes()),
                    }
                }
            }
        }
        h
    }
}

/// Compares the span `ka` of `a` against the span `kb` of `b`, column by
/// column, using the mode and direction of `ka`. Both lines must already
/// pass [`KeyRange::check`] for their spans.
pub fn compare_spans(a: &str, ka: &KeyRange, b: &str, kb: &KeyRange) -> Ordering {
    let ord = match ka.mode {
        Mode::Lexicographic => {
            if ka.len() == 1 && kb.len() == 1 {
                let fa = ka.slice(a).unwrap_or_default();
                let fb = kb.slice(b).unwrap_or_default();
                fa.as_bytes().cmp(fb.as_bytes())
            } else {
                cmp_columns(ka.columns(a), kb.columns(b), |x, y| x.as_bytes().cmp(y.as_bytes()))
            }
        }
        Mode::Numeric => cmp_columns(ka.columns(a), kb.columns(b), |x, y| {
            match (x.parse::<Decimal>(), y.parse::<Decimal>()) {
                (Ok(x), Ok(y)) => x.cmp(&y),
                _ => x.as_bytes().cmp(y.as_bytes()),
            }
        }),
    };
    match ka.direction {
        Direction::Ascending => ord,
        Direction::Descending => ord.reverse(),
    }
}

fn cmp_columns<'a>(
    mut a: impl Iterator<Item = &'a str>,
    mut b: impl Iterator<Item = &'a str>,
    cmp: impl Fn(&str, &str) -> Ordering,
) -> Ordering {
    loop {
        match (a.next(), b.next()) {
            (Some(x), Some(y)) => match cmp(x, y) {
                Ordering::Equal => continue,
                o => return o,
            },
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
        }
    }
}

/// Compares two records on `key`.
pub fn compare_records(a: &Record, b: &Record, key: &KeyRange) -> Result<Ordering> {
    key.check(a.as_str())?;
    key.check(b.as_str())?;
    Ok(key.cmp_lines(a.as_str(), b.as_str()))
}

/// Parses `key=FROM[/TO][@num][@desc]`.
pub fn parse_key_spec(text: &str) -> Result<KeyRange> {
    let bad = |reason| Error::KeySpec {
        expr: text.to_string(),
        reason,
    };
    let body = text
        .strip_prefix("key=")
        .ok_or_else(|| bad("expected `key=`"))?;
    let (span, mut rest) = match body.find('@') {
        Some(i) => (&body[..i], &body[i..]),
        None => (body, ""),
    };
    let mut mode = Mode::Lexicographic;
    let mut direction = Direction::Ascending;
    if let Some(r) = rest.strip_prefix("@num") {
        mode = Mode::Numeric;
        rest = r;
    }
    if let Some(r) = rest.strip_prefix("@desc") {
        direction = Direction::Descending;
        rest = r;
    }
    if !rest.is_empty() {
        return Err(bad("unknown modifier"));
    }
    let index = |s: &str| -> Result<usize> {
        if s.starts_with('-') {
            return Err(bad("column index must be positive"));
        }
        match s.parse::<usize>() {
            Ok(0) => Err(bad("column index must be positive")),
            Ok(n) if s.bytes().all(|b| b.is_ascii_digit()) => Ok(n),
            _ => Err(bad("malformed column index")),
        }
    };
    let (from, to) = match span.split_once('/') {
        Some((f, t)) => (index(f)?, index(t)?),
        None => {
            let f = index(span)?;
            (f, f)
        }
    };
    if from > to {
        return Err(bad("FROM is greater than TO"));
    }
    Ok(KeyRange {
        from,
        to,
        mode,
        direction,
    })
}

impl FromStr for KeyRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_key_spec(s)
    }
}

impl fmt::Display for KeyRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "key={}", self.from)?;
        if self.to != self.from {
            write!(f, "/{}", self.to)?;
        }
        if self.mode == Mode::Numeric {
            f.write_str("@num")?;
        }
        if self.direction == Direction::Descending {
            f.write_str("@desc")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(s: &str) -> Record {
        Record::parse(s).unwrap()
    }

    fn key(s: &str) -> KeyRange {
        parse_key_spec(s).unwrap()
    }

    #[test]
    fn parse_examples() {
        assert_eq!(key("key=1"), KeyRange::new(1, 1).unwrap());
        assert_eq!(key("key=2/4"), KeyRange::new(2, 4).unwrap());
        assert_eq!(key("key=3@num"), KeyRange::new(3, 3).unwrap().numeric());
        assert_eq!(
            key("key=1/2@num@desc"),
            KeyRange::new(1, 2).unwrap().numeric().descending()
        );
        assert_eq!(key("key=5@desc").direction(), Direction::Descending);
    }

    #[test]
    fn parse_rejects() {
        for s in [
            "key=3/2", "key=0", "key=-1", "key=", "key=a", "key=1/", "1", "key=1@foo",
            "key=1@desc@num", "key=+1", "key=1/2/3",
        ] {
            assert!(
                matches!(parse_key_spec(s), Err(Error::KeySpec { .. })),
                "{s}"
            );
        }
    }

    #[test]
    fn display_round_trips() {
        for s in ["key=1", "key=2/4", "key=1@num", "key=3/7@num@desc", "key=2@desc"] {
            assert_eq!(key(s).to_string(), s);
        }
    }

    #[test]
    fn compare_examples() {
        assert_eq!(
            compare_records(&rec("a 2"), &rec("b 1"), &key("key=1")).unwrap(),
            Ordering::Less
        );
        assert_eq!(
            compare_records(&rec("x 5"), &rec("x 5"), &key("key=1/2")).unwrap(),
            Ordering::Equal
        );
        assert_eq!(
            compare_records(&rec("10"), &rec("9"), &key("key=1@num")).unwrap(),
            Ordering::Greater
        );
        assert_eq!(
            compare_records(&rec("10"), &rec("9"), &key("key=1")).unwrap(),
            Ordering::Less
        );
        assert_eq!(
            compare_records(&rec("a"), &rec("b"), &key("key=1@desc")).unwrap(),
            Ordering::Greater
        );
    }

    #[test]
    fn compare_errors() {
        assert!(matches!(
            compare_records(&rec("a"), &rec("b c"), &key("key=2")),
            Err(Error::TooNarrow { width: 1, needed: 2 })
        ));
        assert!(matches!(
            compare_records(&rec("1"), &rec("x"), &key("key=1@num")),
            Err(Error::NotNumeric(_))
        ));
    }

    #[test]
    fn slice_is_contiguous_key() {
        let k = key("key=2/3");
        assert_eq!(k.slice("a b c d"), Some("b c"));
        assert_eq!(k.slice("a b c"), Some("b c"));
        assert_eq!(k.slice("a b"), None);
        assert_eq!(key("key=1").slice("solo"), Some("solo"));
    }

    #[test]
    fn numeric_hash_ignores_representation() {
        let k = key("key=1@num");
        assert_eq!(k.stable_hash("1.50 x"), k.stable_hash("1.5 y"));
        let lex = key("key=1");
        assert_eq!(lex.stable_hash("a x"), lex.stable_hash("a y"));
        assert_ne!(lex.stable_hash("a x"), lex.stable_hash("b x"));
        // FNV-1a 64 of "a"
        assert_eq!(lex.stable_hash("a"), 0xaf63_dc4c_8601_ec8c);
    }

    /// Reference comparator: materializes every key column and compares the
    /// vectors, with numbers converted through f64 (exact for small integers).
    fn brute_compare(a: &str, b: &str, from: usize, to: usize, numeric: bool) -> Ordering {
        let pick = |s: &str| -> Vec<String> {
            s.split(' ').collect::<Vec<_>>()[from - 1..to]
                .iter()
                .map(|x| x.to_string())
                .collect()
        };
        let (ka, kb) = (pick(a), pick(b));
        if numeric {
            let na: Vec<f64> = ka.iter().map(|x| x.parse().unwrap()).collect();
            let nb: Vec<f64> = kb.iter().map(|x| x.parse().unwrap()).collect();
            na.partial_cmp(&nb).unwrap()
        } else {
            let ba: Vec<&[u8]> = ka.iter().map(|s| s.as_bytes()).collect();
            let bb: Vec<&[u8]> = kb.iter().map(|s| s.as_bytes()).collect();
            ba.cmp(&bb)
        }
    }

    #[test]
    fn both_modes_agree_with_brute_force_over_token_set() {
        let tokens = ["0", "1", "9", "10", "-2", "05", "100", "-10", "2.5", "-0.5"];
        let mut lines = Vec::new();
        for a in tokens {
            for b in tokens {
                lines.push(format!("{a} {b}"));
            }
        }
        for (from, to) in [(1, 1), (2, 2), (1, 2)] {
            for numeric in [false, true] {
                let mut k = KeyRange::new(from, to).unwrap();
                if numeric {
                    k = k.numeric();
                }
                for a in &lines {
                    for b in &lines {
                        assert_eq!(
                            compare_records(&rec(a), &rec(b), &k).unwrap(),
                            brute_compare(a, b, from, to, numeric),
                            "{a:?} vs {b:?} on {k}"
                        );
                    }
                }
            }
        }
    }

    fn line() -> impl Strategy<Value = String> {
        prop::collection::vec(prop_oneof!["[a-c]{1,2}", "-?[0-9]{1,2}"], 3)
            .prop_map(|f| f.join(" "))
    }

    proptest! {
        #[test]
        fn comparator_is_a_total_preorder(
            a in line(), b in line(), c in line(),
            from in 1usize..=3, extra in 0usize..3, desc: bool,
        ) {
            let to = (from + extra).min(3);
            let mut k = KeyRange::new(from, to).unwrap();
            if desc {
                k = k.descending();
            }
            let (ra, rb, rc) = (rec(&a), rec(&b), rec(&c));
            let ab = compare_records(&ra, &rb, &k).unwrap();
            let ba = compare_records(&rb, &ra, &k).unwrap();
            prop_assert_eq!(ab, ba.reverse());
            let bc = compare_records(&rb, &rc, &k).unwrap();
            let ac = compare_records(&ra, &rc, &k).unwrap();
            if ab != Ordering::Greater && bc != Ordering::Greater {
                prop_assert_ne!(ac, Ordering::Greater);
            }
            prop_assert_eq!(compare_records(&ra, &ra, &k).unwrap(), Ordering::Equal);
        }
    }
}

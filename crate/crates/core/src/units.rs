//! Byte sizes, half-open address ranges and small range-set helpers.

use std::fmt;

use serde::{Deserialize, Deserializer};

use crate::error::{Error, Result};

pub const KIB: u64 = 1 << 10;
pub const MIB: u64 = 1 << 20;
pub const GIB: u64 = 1 << 30;
pub const TIB: u64 = 1 << 40;

/// Base page size.
pub const PAGE_SIZE: u64 = 4 * KIB;

/// Half-open byte range `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ByteRange {
    pub start: u64,
    pub end: u64,
}

impl ByteRange {
    pub const fn new(start: u64, end: u64) -> Self {
        Self { start, end }
    }

    pub const fn with_len(start: u64, len: u64) -> Self {
        Self { start, end: start + len }
    }

    pub const fn len(&self) -> u64 {
        self.end.saturating_sub(self.start)
    }

    pub const fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub const fn contains(&self, addr: u64) -> bool {
        self.start <= addr && addr < self.end
    }

    pub const fn contains_range(&self, other: &ByteRange) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn intersection(&self, other: &ByteRange) -> Option<ByteRange> {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        (start < end).then_some(ByteRange { start, end })
    }

    pub fn overlap_len(&self, other: &ByteRange) -> u64 {
        self.intersection(other).map_or(0, |r| r.len())
    }

    pub fn offset(&self, by: u64) -> ByteRange {
        ByteRange::new(self.start + by, self.end + by)
    }
}

impl fmt::Display for ByteRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:#x}, {:#x})", self.start, self.end)
    }
}

/// Sorts and coalesces overlapping or adjacent ranges; empty ranges are dropped.
pub fn normalize(ranges: &[ByteRange]) -> Vec<ByteRange> {
    let mut sorted: Vec<ByteRange> = ranges.iter().copied().filter(|r| !r.is_empty()).collect();
    sorted.sort_unstable();
    let mut out: Vec<ByteRange> = Vec::with_capacity(sorted.len());
    for r in sorted {
        match out.last_mut() {
            Some(last) if r.start <= last.end => last.end = last.end.max(r.end),
            _ => out.push(r),
        }
    }
    out
}

pub fn total_len(ranges: &[ByteRange]) -> u64 {
    ranges.iter().map(ByteRange::len).sum()
}

/// Total bytes shared by two normalized (sorted, disjoint) range lists.
pub fn intersection_len(a: &[ByteRange], b: &[ByteRange]) -> u64 {
    let (mut i, mut j, mut acc) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        acc += a[i].overlap_len(&b[j]);
        if a[i].end <= b[j].end {
            i += 1;
        } else {
            j += 1;
        }
    }
    acc
}

/// `a` minus `b`, both normalized.
pub fn subtract(a: &[ByteRange], b: &[ByteRange]) -> Vec<ByteRange> {
    let mut out = Vec::new();
    let mut j = 0;
    for r in a {
        let mut cur = r.start;
        while j < b.len() && b[j].end <= cur {
            j += 1;
        }
        let mut k = j;
        while k < b.len() && b[k].start < r.end {
            if b[k].start > cur {
                out.push(ByteRange::new(cur, b[k].start));
            }
            cur = cur.max(b[k].end);
            k += 1;
        }
        if cur < r.end {
            out.push(ByteRange::new(cur, r.end));
        }
    }
    out
}

/// Parses sizes such as `4096`, `512KiB`, `10 GiB`, `1.5TiB`.
pub fn parse_size(text: &str) -> Result<u64> {
    let s = text.trim();
    let split = s
        .find(|c: char| !(c.is_ascii_digit() || c == '.' || c == '_'))
        .unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let num: String = num.chars().filter(|&c| c != '_').collect();
    let mult = match unit.trim() {
        "" | "B" => 1,
        "KiB" | "K" => KIB,
        "MiB" | "M" => MIB,
        "GiB" | "G" => GIB,
        "TiB" | "T" => TIB,
        other => return Err(Error::Parse(format!("unknown size unit {other:?} in {text:?}"))),
    };
    if let Ok(n) = num.parse::<u64>() {
        return n
            .checked_mul(mult)
            .ok_or_else(|| Error::Parse(format!("size {text:?} overflows 64 bits")));
    }
    let f: f64 = num
        .parse()
        .map_err(|_| Error::Parse(format!("invalid size {text:?}")))?;
    if !f.is_finite() || f < 0.0 {
        return Err(Error::Parse(format!("invalid size {text:?}")));
    }
    Ok((f * mult as f64).floor() as u64)
}

/// Renders a byte count with the largest binary unit that divides it.
pub fn format_size(bytes: u64) -> String {
    for (unit, name) in [(TIB, "TiB"), (GIB, "GiB"), (MIB, "MiB"), (KIB, "KiB")] {
        if bytes >= unit && bytes % unit == 0 {
            return format!("{}{name}", bytes / unit);
        }
    }
    format!("{bytes}")
}

/// Serde adapter accepting either an integer byte count or a suffixed string.
pub fn de_size<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(u64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Int(n) => Ok(n),
        Raw::Text(s) => parse_size(&s).map_err(serde::de::Error::custom),
    }
}

pub fn de_size_opt<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<u64>, D::Error> {
    de_size(d).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_suffixes() {
        assert_eq!(parse_size("4096").unwrap(), 4096);
        assert_eq!(parse_size("5TiB").unwrap(), 5 * TIB);
        assert_eq!(parse_size("10 GiB").unwrap(), 10 * GIB);
        assert_eq!(parse_size("1.5GiB").unwrap(), 3 * GIB / 2);
        assert_eq!(parse_size("1_024KiB").unwrap(), MIB);
        assert!(parse_size("3 parsecs").is_err());
        assert!(parse_size("GiB").is_err());
    }

    #[test]
    fn normalize_coalesces_adjacent() {
        let r = normalize(&[
            ByteRange::new(10, 20),
            ByteRange::new(0, 10),
            ByteRange::new(30, 40),
            ByteRange::new(35, 36),
            ByteRange::new(50, 50),
        ]);
        assert_eq!(r, vec![ByteRange::new(0, 20), ByteRange::new(30, 40)]);
    }

    #[test]
    fn subtract_and_intersect() {
        let a = [ByteRange::new(0, 100), ByteRange::new(200, 300)];
        let b = [ByteRange::new(50, 60), ByteRange::new(90, 210)];
        assert_eq!(
            subtract(&a, &b),
            vec![ByteRange::new(0, 50), ByteRange::new(60, 90), ByteRange::new(210, 300)]
        );
        assert_eq!(intersection_len(&a, &b), 10 + 10 + 10);
    }

    #[test]
    fn format_round_trips() {
        for v in [4096, 5 * TIB, 10 * GIB, 3 * MIB, 4097] {
            assert_eq!(parse_size(&format_size(v)).unwrap(), v);
        }
    }
}

//! Four-level radix page table carrying ACCESSED bits at every level.
//!
//! Only virtual geometry is modeled. Tables are materialized the first time an
//! access walks through them; a table that was never materialized has all of
//! its bits clear, so clearing or testing entries under it never allocates.

use std::fmt;
use std::io::Write;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::units::{normalize, ByteRange};

/// Exclusive upper bound of the 48-bit canonical space covered by four levels.
pub const VA_LIMIT: u64 = 1 << 48;

/// Entries per table at every level.
pub const FANOUT: u64 = 512;

const WORDS: usize = (FANOUT / 64) as usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    Pte,
    Pmd,
    Pud,
    Pgd,
}

impl Level {
    /// Root first.
    pub const TOP_DOWN: [Level; 4] = [Level::Pgd, Level::Pud, Level::Pmd, Level::Pte];

    pub const fn shift(self) -> u32 {
        match self {
            Level::Pte => 12,
            Level::Pmd => 21,
            Level::Pud => 30,
            Level::Pgd => 39,
        }
    }

    /// Bytes of virtual address space mapped by one entry.
    pub const fn coverage(self) -> u64 {
        1 << self.shift()
    }

    pub const fn below(self) -> Option<Level> {
        match self {
            Level::Pgd => Some(Level::Pud),
            Level::Pud => Some(Level::Pmd),
            Level::Pmd => Some(Level::Pte),
            Level::Pte => None,
        }
    }

    pub const fn depth(self) -> usize {
        match self {
            Level::Pgd => 0,
            Level::Pud => 1,
            Level::Pmd => 2,
            Level::Pte => 3,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            Level::Pte => "PTE",
            Level::Pmd => "PMD",
            Level::Pud => "PUD",
            Level::Pgd => "PGD",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A virtual address inside the four-level canonical space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VirtAddr(u64);

impl VirtAddr {
    pub fn new(addr: u64) -> Result<Self> {
        if addr < VA_LIMIT {
            Ok(Self(addr))
        } else {
            Err(Error::InvalidArgument(format!("address {addr:#x} beyond 48-bit space")))
        }
    }

    pub const fn get(self) -> u64 {
        self.0
    }
}

/// One page-table entry named by its level and global index (`addr / coverage`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntryRef {
    pub level: Level,
    pub index: u64,
}

impl EntryRef {
    pub const fn new(level: Level, index: u64) -> Self {
        Self { level, index }
    }

    pub const fn containing(addr: VirtAddr, level: Level) -> Self {
        Self { level, index: addr.0 >> level.shift() }
    }

    pub const fn va_range(&self) -> ByteRange {
        let cov = self.level.coverage();
        ByteRange::new(self.index * cov, (self.index + 1) * cov)
    }

    /// Index of this entry within its table.
    const fn slot(&self) -> usize {
        (self.index % FANOUT) as usize
    }
}

impl fmt::Display for EntryRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.level, self.index)
    }
}

/// Index span of the entries at `level` fully contained in `range`.
pub fn entry_span_within(range: ByteRange, level: Level) -> Range<u64> {
    let cov = level.coverage();
    let first = range.start.div_ceil(cov);
    let last = range.end / cov;
    if range.is_empty() || first >= last {
        first..first
    } else {
        first..last
    }
}

/// Entries at `level` whose coverage lies entirely inside `range`, ascending.
pub fn entries_within(range: ByteRange, level: Level) -> Vec<EntryRef> {
    entry_span_within(range, level).map(|i| EntryRef::new(level, i)).collect()
}

struct Table {
    bits: [u64; WORDS],
    /// Empty for leaf (PTE) tables.
    children: Box<[Option<Box<Table>>]>,
}

impl Table {
    fn new(leaf: bool) -> Self {
        let children = if leaf {
            Box::default()
        } else {
            std::iter::repeat_with(|| None).take(FANOUT as usize).collect()
        };
        Self { bits: [0; WORDS], children }
    }

    #[inline]
    fn set(&mut self, slot: usize) -> bool {
        let word = &mut self.bits[slot >> 6];
        let mask = 1u64 << (slot & 63);
        let was_clear = *word & mask == 0;
        *word |= mask;
        was_clear
    }

    #[inline]
    fn get(&self, slot: usize) -> bool {
        self.bits[slot >> 6] & (1u64 << (slot & 63)) != 0
    }

    #[inline]
    fn clear(&mut self, slot: usize) -> bool {
        let word = &mut self.bits[slot >> 6];
        let mask = 1u64 << (slot & 63);
        let was_set = *word & mask != 0;
        *word &= !mask;
        was_set
    }

    fn popcount(&self) -> u64 {
        self.bits.iter().map(|w| u64::from(w.count_ones())).sum()
    }
}

/// Per-level debug statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LevelStats {
    pub level: Level,
    pub entries_materialized: u64,
    pub bits_set: u64,
}

/// Lazily materialized four-level page table of a single simulated process.
pub struct SparsePageTable {
    mapped: Vec<ByteRange>,
    root: Table,
    tables: [u64; 4],
    bits_set_total: u64,
    bits_cleared_total: u64,
}

impl Default for SparsePageTable {
    fn default() -> Self {
        Self::new()
    }
}

impl SparsePageTable {
    pub fn new() -> Self {
        Self {
            mapped: Vec::new(),
            root: Table::new(false),
            tables: [1, 0, 0, 0],
            bits_set_total: 0,
            bits_cleared_total: 0,
        }
    }

    pub fn mapped_ranges(&self) -> &[ByteRange] {
        &self.mapped
    }

    /// 0→1 transitions caused by accesses.
    pub fn bits_set_total(&self) -> u64 {
        self.bits_set_total
    }

    /// Number of reset operations issued, whatever the previous bit value.
    pub fn bits_cleared_total(&self) -> u64 {
        self.bits_cleared_total
    }

    pub fn map_range(&mut self, start: u64, len: u64) -> Result<()> {
        if len == 0 {
            return Err(Error::InvalidArgument("cannot map an empty range".into()));
        }
        let end = start
            .checked_add(len)
            .filter(|&e| e <= VA_LIMIT)
            .ok_or_else(|| Error::InvalidArgument(format!("mapping {start:#x}+{len:#x} exceeds 48-bit space")))?;
        let requested = ByteRange::new(start, end);
        if let Some(existing) = self.mapped.iter().find(|m| m.overlap_len(&requested) > 0) {
            return Err(Error::Overlap { requested, existing: *existing });
        }
        self.mapped.push(requested);
        self.mapped = normalize(&self.mapped);
        Ok(())
    }

    /// Removes `range` from the mapped set. Bits under it are dropped with it.
    pub fn unmap_range(&mut self, range: ByteRange) {
        self.mapped = crate::units::subtract(&self.mapped, &[range]);
        let pages = self.collect_accessed_ptes(range);
        for page in pages {
            let entry = EntryRef::new(Level::Pte, page);
            if let Some(t) = self.table_for_mut(entry) {
                t.clear(entry.slot());
            }
        }
    }

    #[inline]
    pub fn is_mapped(&self, addr: u64) -> bool {
        match self.mapped.as_slice() {
            [only] => only.contains(addr),
            ranges => {
                let i = ranges.partition_point(|r| r.end <= addr);
                i < ranges.len() && ranges[i].contains(addr)
            }
        }
    }

    pub fn overlaps_mapping(&self, range: ByteRange) -> bool {
        let i = self.mapped.partition_point(|r| r.end <= range.start);
        i < self.mapped.len() && self.mapped[i].start < range.end
    }

    /// Simulates a page walk for `addr`, setting the ACCESSED bit at all four levels.
    pub fn record_access(&mut self, addr: u64) -> Result<()> {
        if !self.is_mapped(addr) {
            return Err(Error::Fault(addr));
        }
        self.walk_and_set(addr);
        Ok(())
    }

    /// Replays a batch of accesses. Stops at the first unmapped address.
    pub fn record_batch(&mut self, addrs: &[u64]) -> Result<()> {
        if let [only] = self.mapped.as_slice() {
            let only = *only;
            for &addr in addrs {
                if !only.contains(addr) {
                    return Err(Error::Fault(addr));
                }
                self.walk_and_set(addr);
            }
            Ok(())
        } else {
            addrs.iter().try_for_each(|&a| self.record_access(a))
        }
    }

    #[inline]
    fn walk_and_set(&mut self, addr: u64) {
        let mut newly_set = 0u64;
        let mut table = &mut self.root;
        for level in [Level::Pgd, Level::Pud, Level::Pmd] {
            let slot = ((addr >> level.shift()) % FANOUT) as usize;
            newly_set += u64::from(table.set(slot));
            let child = &mut table.children[slot];
            if child.is_none() {
                let leaf = level == Level::Pmd;
                *child = Some(Box::new(Table::new(leaf)));
                self.tables[level.depth() + 1] += 1;
            }
            table = child.as_deref_mut().expect("materialized above");
        }
        newly_set += u64::from(table.set(((addr >> Level::Pte.shift()) % FANOUT) as usize));
        self.bits_set_total += newly_set;
    }

    fn check_entry(&self, entry: EntryRef) -> Result<()> {
        let range = entry.va_range();
        if range.end > VA_LIMIT || !self.overlaps_mapping(range) {
            return Err(Error::InvalidArgument(format!("entry {entry} lies outside every mapped range")));
        }
        Ok(())
    }

    fn table_for(&self, entry: EntryRef) -> Option<&Table> {
        let addr = entry.va_range().start;
        let mut table = &self.root;
        for level in Level::TOP_DOWN {
            if level == entry.level {
                return Some(table);
            }
            let slot = ((addr >> level.shift()) % FANOUT) as usize;
            table = table.children.get(slot)?.as_deref()?;
        }
        None
    }

    fn table_for_mut(&mut self, entry: EntryRef) -> Option<&mut Table> {
        let addr = entry.va_range().start;
        let mut table = &mut self.root;
        for level in Level::TOP_DOWN {
            if level == entry.level {
                return Some(table);
            }
            let slot = ((addr >> level.shift()) % FANOUT) as usize;
            table = table.children.get_mut(slot)?.as_deref_mut()?;
        }
        None
    }

    /// Resets the ACCESSED bit of `entry` and returns its previous value.
    pub fn clear_accessed(&mut self, entry: EntryRef) -> Result<bool> {
        self.check_entry(entry)?;
        self.bits_cleared_total += 1;
        Ok(self.table_for_mut(entry).is_some_and(|t| t.clear(entry.slot())))
    }

    pub fn test_accessed(&self, entry: EntryRef) -> Result<bool> {
        self.check_entry(entry)?;
        Ok(self.table_for(entry).is_some_and(|t| t.get(entry.slot())))
    }

    /// Resets every PTE bit in `range` (page aligned). Counts one flip per page.
    pub fn clear_pte_range(&mut self, range: ByteRange) -> u64 {
        let first = range.start >> Level::Pte.shift();
        let last = range.end.div_ceil(Level::Pte.coverage());
        if first >= last {
            return 0;
        }
        Self::visit_leaf_tables_mut(&mut self.root, Level::Pgd, 0, range, &mut |base, table| {
            for slot in leaf_slots(base, range) {
                table.clear(slot);
            }
        });
        let flips = last - first;
        self.bits_cleared_total += flips;
        flips
    }

    /// Page indices (`addr >> 12`) with the PTE bit set inside `range`, ascending.
    pub fn collect_accessed_ptes(&self, range: ByteRange) -> Vec<u64> {
        let mut out = Vec::new();
        Self::visit_leaf_tables(&self.root, Level::Pgd, 0, range, &mut |base, table| {
            for slot in leaf_slots(base, range) {
                if table.get(slot) {
                    out.push((base >> Level::Pte.shift()) + slot as u64);
                }
            }
        });
        out
    }

    fn visit_leaf_tables(table: &Table, level: Level, base: u64, range: ByteRange, f: &mut impl FnMut(u64, &Table)) {
        let Some(next) = level.below() else {
            f(base, table);
            return;
        };
        for (slot, child) in table.children.iter().enumerate() {
            let Some(child) = child else { continue };
            let child_base = base + slot as u64 * level.coverage();
            let span = ByteRange::with_len(child_base, level.coverage());
            if span.overlap_len(&range) > 0 {
                Self::visit_leaf_tables(child, next, child_base, range, f);
            }
        }
    }

    fn visit_leaf_tables_mut(
        table: &mut Table,
        level: Level,
        base: u64,
        range: ByteRange,
        f: &mut impl FnMut(u64, &mut Table),
    ) {
        let Some(next) = level.below() else {
            f(base, table);
            return;
        };
        for (slot, child) in table.children.iter_mut().enumerate() {
            let Some(child) = child else { continue };
            let child_base = base + slot as u64 * level.coverage();
            let span = ByteRange::with_len(child_base, level.coverage());
            if span.overlap_len(&range) > 0 {
                Self::visit_leaf_tables_mut(child, next, child_base, range, f);
            }
        }
    }

    pub fn level_stats(&self) -> [LevelStats; 4] {
        let mut bits = [0u64; 4];
        fn walk(table: &Table, depth: usize, bits: &mut [u64; 4]) {
            bits[depth] += table.popcount();
            for child in table.children.iter().flatten() {
                walk(child, depth + 1, bits);
            }
        }
        walk(&self.root, 0, &mut bits);
        Level::TOP_DOWN.map(|level| LevelStats {
            level,
            entries_materialized: self.tables[level.depth()] * FANOUT,
            bits_set: bits[level.depth()],
        })
    }

    /// Writes `level,entries_materialized,bits_set` lines, root first.
    pub fn write_debug_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "level,entries_materialized,bits_set")?;
        for s in self.level_stats() {
            writeln!(out, "{},{},{}", s.level, s.entries_materialized, s.bits_set)?;
        }
        Ok(())
    }
}

fn leaf_slots(base: u64, range: ByteRange) -> Range<usize> {
    let span = ByteRange::with_len(base, Level::Pmd.coverage());
    match span.intersection(&range) {
        Some(r) => {
            let lo = ((r.start - base) >> Level::Pte.shift()) as usize;
            let hi = (r.end - base).div_ceil(Level::Pte.coverage()) as usize;
            lo..hi
        }
        None => 0..0,
    }
}

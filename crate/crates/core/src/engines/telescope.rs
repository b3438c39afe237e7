//! Page-table-tree profiling. Each region is profiled through the highest
//! page-table entries that fit it (bounded) or overshoot it by at most a
//! per-level fraction of the entry's coverage (flex, and only above the level
//! the bounded rule would pick). Parts of the region not covered at that level
//! are profiled from the next level down.

use std::ops::Range;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::damon::sample_window;
use super::{hot_regions, Engine, EngineReport, DEFAULT_HOT_COUNT};
use crate::error::Result;
use crate::pagetable::{EntryRef, Level, SparsePageTable};
use crate::regions::{IntervalConfig, RegionConfig, RegionSet};
use crate::units::ByteRange;
use crate::workload::AccessBatch;

/// Maximum overshoot per level as a fraction of the entry's coverage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlexThresholds {
    pub pgd: f64,
    pub pud: f64,
    pub pmd: f64,
    pub pte: f64,
}

impl Default for FlexThresholds {
    fn default() -> Self {
        Self { pgd: 0.15, pud: 0.15, pmd: 0.25, pte: 0.25 }
    }
}

impl FlexThresholds {
    pub const ZERO: FlexThresholds = FlexThresholds { pgd: 0.0, pud: 0.0, pmd: 0.0, pte: 0.0 };

    pub fn uniform(t: f64) -> Self {
        Self { pgd: t, pud: t, pmd: t, pte: t }
    }

    pub fn get(&self, level: Level) -> f64 {
        match level {
            Level::Pgd => self.pgd,
            Level::Pud => self.pud,
            Level::Pmd => self.pmd,
            Level::Pte => self.pte,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Variant {
    Bounded,
    Flex(FlexThresholds),
}

impl Variant {
    fn thresholds(&self) -> FlexThresholds {
        match self {
            Variant::Bounded => FlexThresholds::ZERO,
            Variant::Flex(t) => *t,
        }
    }
}

/// A run of entries at one level and the part of the region they profile.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoverPiece {
    pub level: Level,
    pub entries: Range<u64>,
    pub covered: ByteRange,
}

/// Decomposition of a region into entry runs, ascending by address. The
/// `covered` parts partition the region.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cover {
    pub region: ByteRange,
    pub pieces: Vec<CoverPiece>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProfileChoice {
    pub entry: EntryRef,
    pub overshoot_bytes: u64,
}

fn overshoot(entry: EntryRef, region: ByteRange) -> u64 {
    entry.level.coverage() - entry.va_range().overlap_len(&region)
}

fn within_threshold(entry: EntryRef, region: ByteRange, thr: f64) -> bool {
    overshoot(entry, region) as f64 <= thr * entry.level.coverage() as f64
}

/// Contiguous run of entries at `level` overlapping `range` whose overshoot is within `thr`.
fn qualifying_run(range: ByteRange, level: Level, thr: f64) -> Range<u64> {
    let cov = level.coverage();
    let first = range.start / cov;
    let last = (range.end - 1) / cov;
    let ok = |i: u64| within_threshold(EntryRef::new(level, i), range, thr);
    let a = if ok(first) { first } else { first + 1 };
    let b = if ok(last) { last + 1 } else { last };
    if a < b {
        a..b
    } else {
        0..0
    }
}

/// Highest level with an entry fully inside `range`.
fn bounded_level(range: ByteRange) -> Option<Level> {
    Level::TOP_DOWN.into_iter().find(|&l| !qualifying_run(range, l, 0.0).is_empty())
}

/// Overshoot allowed at `level`: only levels above the bounded choice may overshoot.
fn allowed(level: Level, bounded: Option<Level>, thr: &FlexThresholds) -> f64 {
    match bounded {
        Some(b) if level <= b => 0.0,
        _ => thr.get(level),
    }
}

fn cover_into(range: ByteRange, top: Option<Level>, thr: &FlexThresholds, out: &mut Vec<CoverPiece>) {
    if range.is_empty() {
        return;
    }
    let bounded = bounded_level(range);
    let mut level = match top {
        Some(l) => l,
        None => {
            // Sub-page sliver: profile the page holding its start.
            let e = range.start / Level::Pte.coverage();
            out.push(CoverPiece { level: Level::Pte, entries: e..e + 1, covered: range });
            return;
        }
    };
    loop {
        let run = qualifying_run(range, level, allowed(level, bounded, thr));
        if !run.is_empty() {
            let cov = level.coverage();
            let lo = (run.start * cov).max(range.start);
            let hi = (run.end * cov).min(range.end);
            cover_into(ByteRange::new(range.start, lo), level.below(), thr, out);
            out.push(CoverPiece { level, entries: run, covered: ByteRange::new(lo, hi) });
            cover_into(ByteRange::new(hi, range.end), level.below(), thr, out);
            return;
        }
        match level.below() {
            Some(l) => level = l,
            None => return cover_into(range, None, thr, out),
        }
    }
}

/// Full decomposition of `region` for the given variant.
pub fn decompose(region: ByteRange, variant: &Variant) -> Cover {
    let mut pieces = Vec::new();
    cover_into(region, Some(Level::Pgd), &variant.thresholds(), &mut pieces);
    Cover { region, pieces }
}

fn top_candidates(region: ByteRange, thr: &FlexThresholds) -> (Level, Vec<EntryRef>) {
    let bounded = bounded_level(region);
    for level in Level::TOP_DOWN {
        let run = qualifying_run(region, level, allowed(level, bounded, thr));
        if !run.is_empty() {
            return (level, run.map(|i| EntryRef::new(level, i)).collect());
        }
    }
    (Level::Pte, vec![EntryRef::new(Level::Pte, region.start / Level::Pte.coverage())])
}

/// Highest level with an entry fully inside `region`, and all such entries.
pub fn candidate_entries_bounded(region: ByteRange) -> (Level, Vec<EntryRef>) {
    top_candidates(region, &FlexThresholds::ZERO)
}

/// Highest level above the bounded choice with an entry overlapping `region`
/// within the overshoot threshold, and all such entries. Falls back to the
/// bounded choice.
pub fn candidate_entries_flex(region: ByteRange, thresholds: &FlexThresholds) -> (Level, Vec<EntryRef>) {
    top_candidates(region, thresholds)
}

/// Picks an entry of the cover with probability proportional to the region bytes it profiles,
/// so over successive picks every part of the region, tails included, is profiled.
pub fn coverage_rotation_pick(cover: &Cover, rng: &mut impl Rng) -> ProfileChoice {
    let region = cover.region;
    let addr = region.start + rng.random_range(0..region.len().max(1));
    let i = cover.pieces.partition_point(|p| p.covered.end <= addr).min(cover.pieces.len() - 1);
    let piece = &cover.pieces[i];
    let index = (addr / piece.level.coverage()).clamp(piece.entries.start, piece.entries.end - 1);
    let entry = EntryRef::new(piece.level, index);
    ProfileChoice { entry, overshoot_bytes: overshoot(entry, region) }
}

pub struct TelescopeEngine {
    tag: String,
    intervals: IntervalConfig,
    regions: RegionSet,
    pt: SparsePageTable,
    rng: ChaCha8Rng,
    variant: Variant,
    pub hot_count: u32,
}

impl TelescopeEngine {
    pub fn new(
        tag: &str,
        mapped: &[ByteRange],
        intervals: IntervalConfig,
        region_cfg: RegionConfig,
        variant: Variant,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        intervals.validate()?;
        let cfg = RegionConfig { samples_per_window: intervals.samples_per_window(), ..region_cfg };
        let regions = RegionSet::init(mapped, cfg.min_regions, cfg)?;
        let mut pt = SparsePageTable::new();
        for m in crate::units::normalize(mapped) {
            pt.map_range(m.start, m.len())?;
        }
        Ok(Self { tag: tag.into(), intervals, regions, pt, rng, variant, hot_count: DEFAULT_HOT_COUNT })
    }

    pub fn regions(&self) -> &RegionSet {
        &self.regions
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn page_table(&self) -> &SparsePageTable {
        &self.pt
    }
}

impl Engine for TelescopeEngine {
    fn tag(&self) -> &str {
        &self.tag
    }

    fn observe_window(&mut self, batch: &AccessBatch) -> Result<EngineReport> {
        let covers: Vec<Cover> = self.regions.regions().iter().map(|r| decompose(r.range, &self.variant)).collect();
        let rng = &mut self.rng;
        let cost = sample_window(&mut self.regions, &mut self.pt, batch, &self.intervals, |i, _| {
            coverage_rotation_pick(&covers[i], rng).entry
        })?;
        let snapshot = self.regions.end_window_maintenance(&mut self.rng);
        Ok(EngineReport {
            t_start_ms: batch.t_start_ms,
            t_end_ms: batch.t_end_ms,
            hot: hot_regions(&snapshot, self.hot_count),
            regions: snapshot,
            cost,
        })
    }

    fn refresh_mappings(&mut self, mapped: &[ByteRange]) -> Result<()> {
        let mapped = crate::units::normalize(mapped);
        if mapped != self.pt.mapped_ranges() {
            for gone in crate::units::subtract(self.pt.mapped_ranges(), &mapped) {
                self.pt.unmap_range(gone);
            }
            for new in crate::units::subtract(&mapped, &self.pt.mapped_ranges().to_vec()) {
                self.pt.map_range(new.start, new.len())?;
            }
        }
        self.regions.refresh_mappings(&mapped);
        Ok(())
    }
}

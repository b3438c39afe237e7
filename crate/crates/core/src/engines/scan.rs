//! Two-pass linear PTE scanning and its throttle cost model.

use super::{check_window, Cost, Engine, EngineReport, ScoredRange};
use crate::error::{Error, Result};
use crate::pagetable::SparsePageTable;
use crate::regions::IntervalConfig;
use crate::units::{normalize, ByteRange, MIB, PAGE_SIZE, TIB};
use crate::workload::AccessBatch;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScanMode {
    Aggressive,
    Moderate,
    Conservative,
}

impl ScanMode {
    pub const ALL: [ScanMode; 3] = [ScanMode::Aggressive, ScanMode::Moderate, ScanMode::Conservative];

    pub const fn sleep_ms_per_chunk(self) -> u64 {
        match self {
            ScanMode::Aggressive => 0,
            ScanMode::Moderate => 10,
            ScanMode::Conservative => 100,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            ScanMode::Aggressive => "aggressive",
            ScanMode::Moderate => "moderate",
            ScanMode::Conservative => "conservative",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanThrottle {
    pub mode: ScanMode,
    pub sleep_ms_per_chunk: u64,
    pub chunk_bytes: u64,
    /// Bytes of address space processed per second of active scanning.
    pub base_scan_rate: f64,
    /// Scales the active fraction into a CPU utilization figure.
    pub duty_factor: f64,
}

/// Active scan rate at which 5 TiB takes 110 s.
pub const BASE_SCAN_RATE: f64 = (5 * TIB) as f64 / 110.0;
/// Utilization of the unthrottled scanner.
pub const SCAN_DUTY_FACTOR: f64 = 0.4917;

impl ScanThrottle {
    pub fn new(mode: ScanMode) -> Self {
        Self {
            mode,
            sleep_ms_per_chunk: mode.sleep_ms_per_chunk(),
            chunk_bytes: 256 * MIB,
            base_scan_rate: BASE_SCAN_RATE,
            duty_factor: SCAN_DUTY_FACTOR,
        }
    }

    /// Average bytes scanned per second including sleeps.
    pub fn effective_rate(&self) -> f64 {
        let per_chunk_s = self.chunk_bytes as f64 / self.base_scan_rate + self.sleep_ms_per_chunk as f64 / 1000.0;
        self.chunk_bytes as f64 / per_chunk_s
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanModel {
    pub active_s: f64,
    pub sleep_s: f64,
    pub scan_time_s: f64,
    pub cpu_utilization: f64,
}

/// Closed-form time for one full scan of `heap_bytes` and its CPU utilization.
pub fn linear_scan_model(heap_bytes: u64, t: &ScanThrottle) -> Result<ScanModel> {
    if heap_bytes == 0 || t.chunk_bytes == 0 || !(t.base_scan_rate > 0.0) {
        return Err(Error::InvalidArgument("scan model needs positive heap, chunk and rate".into()));
    }
    let active_s = heap_bytes as f64 / t.base_scan_rate;
    let sleep_s = heap_bytes.div_ceil(t.chunk_bytes) as f64 * t.sleep_ms_per_chunk as f64 / 1000.0;
    let scan_time_s = active_s + sleep_s;
    Ok(ScanModel { active_s, sleep_s, scan_time_s, cpu_utilization: t.duty_factor * active_s / scan_time_s })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ScanPass {
    #[default]
    Clear,
    Collect,
}

/// Position of a two-pass scan over the mapped space, in bytes from the
/// start of the concatenated mapped ranges.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ScanCursor {
    pub pass: ScanPass,
    pub offset: u64,
    /// Pages found so far in the current collect pass.
    pub found: Vec<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ScanStep {
    /// Pages found accessed during this step.
    pub found: Vec<u64>,
    /// Hot set of every double pass completed during this step, the latest last.
    pub completed: Vec<Vec<u64>>,
    pub flips: u64,
    pub checked: u64,
}

/// Maps `[off, off + len)` of the concatenated mapped space onto address ranges.
fn linear_slice(mapped: &[ByteRange], mut off: u64, mut len: u64) -> Vec<ByteRange> {
    let mut out = Vec::new();
    for m in mapped {
        if len == 0 {
            break;
        }
        if off >= m.len() {
            off -= m.len();
            continue;
        }
        let take = (m.len() - off).min(len);
        out.push(ByteRange::with_len(m.start + off, take));
        len -= take;
        off = 0;
    }
    out
}

/// Advances the scan by `budget_bytes` (rounded to whole pages, at least one).
pub fn linear_scan_step(pt: &mut SparsePageTable, cursor: &mut ScanCursor, budget_bytes: u64) -> ScanStep {
    let mapped = pt.mapped_ranges().to_vec();
    let total: u64 = mapped.iter().map(ByteRange::len).sum();
    let mut step = ScanStep::default();
    if total == 0 || budget_bytes == 0 {
        return step;
    }
    let mut budget = (budget_bytes / PAGE_SIZE).max(1) * PAGE_SIZE;
    while budget > 0 {
        let len = budget.min(total - cursor.offset);
        for r in linear_slice(&mapped, cursor.offset, len) {
            match cursor.pass {
                ScanPass::Clear => step.flips += pt.clear_pte_range(r),
                ScanPass::Collect => {
                    let pages = pt.collect_accessed_ptes(r);
                    step.checked += r.len().div_ceil(PAGE_SIZE);
                    step.found.extend_from_slice(&pages);
                    cursor.found.extend(pages);
                }
            }
        }
        budget -= len;
        cursor.offset += len;
        if cursor.offset == total {
            cursor.offset = 0;
            cursor.pass = match cursor.pass {
                ScanPass::Clear => ScanPass::Collect,
                ScanPass::Collect => {
                    step.completed.push(std::mem::take(&mut cursor.found));
                    ScanPass::Clear
                }
            };
        }
    }
    step
}

/// Coalesces ascending page indices into byte ranges.
pub(crate) fn pages_to_ranges(pages: &[u64]) -> Vec<ByteRange> {
    let mut out: Vec<ByteRange> = Vec::new();
    for &p in pages {
        let r = ByteRange::with_len(p * PAGE_SIZE, PAGE_SIZE);
        match out.last_mut() {
            Some(last) if last.end == r.start => last.end = r.end,
            _ => out.push(r),
        }
    }
    out
}

pub struct ScanEngine {
    tag: String,
    throttle: ScanThrottle,
    intervals: IntervalConfig,
    pt: SparsePageTable,
    cursor: ScanCursor,
    /// Fractional budget carried between intervals.
    carry: f64,
    last_hot: Vec<ByteRange>,
}

impl ScanEngine {
    pub fn new(tag: &str, mapped: &[ByteRange], throttle: ScanThrottle, intervals: IntervalConfig) -> Result<Self> {
        let mut pt = SparsePageTable::new();
        for m in normalize(mapped) {
            pt.map_range(m.start, m.len())?;
        }
        Ok(Self {
            tag: tag.into(),
            throttle,
            intervals,
            pt,
            cursor: ScanCursor::default(),
            carry: 0.0,
            last_hot: Vec::new(),
        })
    }

    pub fn throttle(&self) -> &ScanThrottle {
        &self.throttle
    }
}

impl Engine for ScanEngine {
    fn tag(&self) -> &str {
        &self.tag
    }

    fn observe_window(&mut self, batch: &AccessBatch) -> Result<EngineReport> {
        check_window(batch, &self.intervals)?;
        let per_interval = self.throttle.effective_rate() * self.intervals.sampling_ms as f64 / 1000.0;
        let mut cost = Cost::default();
        let mut t = batch.t_start_ms;
        while t < batch.t_end_ms {
            let t_next = t + self.intervals.sampling_ms;
            self.carry += per_interval;
            let budget = (self.carry / PAGE_SIZE as f64).floor() as u64 * PAGE_SIZE;
            if budget > 0 {
                self.carry -= budget as f64;
                let step = linear_scan_step(&mut self.pt, &mut self.cursor, budget);
                if let Some(done) = step.completed.last() {
                    self.last_hot = pages_to_ranges(done);
                }
                cost.bit_flips += step.flips;
                cost.work_units += step.flips + step.checked;
                cost.covered_bytes += step.flips * PAGE_SIZE;
            }
            self.pt.record_batch(batch.span(t, t_next))?;
            t = t_next;
        }
        Ok(EngineReport {
            t_start_ms: batch.t_start_ms,
            t_end_ms: batch.t_end_ms,
            hot: self
                .last_hot
                .iter()
                .map(|&range| ScoredRange { range, access_count: 1, score: 100 })
                .collect(),
            regions: Vec::new(),
            cost,
        })
    }

    fn refresh_mappings(&mut self, mapped: &[ByteRange]) -> Result<()> {
        let mapped = normalize(mapped);
        if mapped != self.pt.mapped_ranges() {
            for gone in crate::units::subtract(self.pt.mapped_ranges(), &mapped) {
                self.pt.unmap_range(gone);
            }
            for new in crate::units::subtract(&mapped, &self.pt.mapped_ranges().to_vec()) {
                self.pt.map_range(new.start, new.len())?;
            }
            self.cursor = ScanCursor::default();
        }
        Ok(())
    }
}

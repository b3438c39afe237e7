//! Telemetry engines. Each engine owns a private page table and consumes one
//! profile window of accesses at a time.

mod damon;
mod pmu;
mod scan;
mod telescope;

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use damon::DamonEngine;
pub use pmu::{pmu_sample_step, PmuConfig, PmuEngine, PMU_BLOCK};
pub use scan::{
    linear_scan_model, linear_scan_step, ScanCursor, ScanEngine, ScanModel, ScanMode, ScanPass, ScanStep, ScanThrottle,
    BASE_SCAN_RATE, SCAN_DUTY_FACTOR,
};
pub use telescope::{
    candidate_entries_bounded, candidate_entries_flex, coverage_rotation_pick, decompose, Cover, CoverPiece,
    FlexThresholds, ProfileChoice, TelescopeEngine, Variant,
};

use crate::error::{Error, Result};
use crate::regions::{IntervalConfig, Region};
use crate::units::{normalize, ByteRange};
use crate::workload::AccessBatch;

/// Profiling work done by an engine.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Cost {
    /// ACCESSED-bit reset operations.
    pub bit_flips: u64,
    /// Bit resets plus bit checks (or samples handled, for the PMU).
    pub work_units: u64,
    pub samples: u64,
    pub interrupts: u64,
    /// Sum over flips of the flipped entry's coverage.
    pub covered_bytes: u64,
}

impl std::ops::AddAssign for Cost {
    fn add_assign(&mut self, o: Self) {
        self.bit_flips += o.bit_flips;
        self.work_units += o.work_units;
        self.samples += o.samples;
        self.interrupts += o.interrupts;
        self.covered_bytes += o.covered_bytes;
    }
}

/// A reported range with the count and score that made it hot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScoredRange {
    pub range: ByteRange,
    pub access_count: u32,
    pub score: u8,
}

impl From<&Region> for ScoredRange {
    fn from(r: &Region) -> Self {
        Self { range: r.range, access_count: r.access_count, score: r.score }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EngineReport {
    pub t_start_ms: u64,
    pub t_end_ms: u64,
    /// Disjoint ranges classified hot this window, ascending.
    pub hot: Vec<ScoredRange>,
    /// Full region snapshot for region-based engines, empty otherwise.
    pub regions: Vec<Region>,
    pub cost: Cost,
}

impl EngineReport {
    pub fn hot_ranges(&self) -> Vec<ByteRange> {
        normalize(&self.hot.iter().map(|h| h.range).collect::<Vec<_>>())
    }

    /// Ranges offered to the tiering policy: every region when the engine keeps
    /// regions, otherwise the hot ranges.
    pub fn tiering_candidates(&self) -> Vec<ScoredRange> {
        if self.regions.is_empty() {
            self.hot.clone()
        } else {
            self.regions.iter().map(ScoredRange::from).collect()
        }
    }
}

pub trait Engine: Send {
    fn tag(&self) -> &str;

    /// Consumes one profile window of accesses and reports on it.
    fn observe_window(&mut self, batch: &AccessBatch) -> Result<EngineReport>;

    /// Rescans the process mappings.
    fn refresh_mappings(&mut self, mapped: &[ByteRange]) -> Result<()>;
}

/// Classification shared by the region-based engines: a region is reported hot
/// when its window count exceeds this value.
pub const DEFAULT_HOT_COUNT: u32 = 5;

/// Every engine tag the harness understands.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EngineKind {
    DamonMod,
    DamonAgg,
    PmuMod,
    PmuAgg,
    TelescopeBounded,
    TelescopeFlex,
    ScanAggressive,
    ScanModerate,
    ScanConservative,
    None,
}

impl EngineKind {
    pub const ALL: [EngineKind; 10] = [
        EngineKind::DamonMod,
        EngineKind::DamonAgg,
        EngineKind::PmuMod,
        EngineKind::PmuAgg,
        EngineKind::TelescopeBounded,
        EngineKind::TelescopeFlex,
        EngineKind::ScanAggressive,
        EngineKind::ScanModerate,
        EngineKind::ScanConservative,
        EngineKind::None,
    ];

    pub const fn tag(self) -> &'static str {
        match self {
            EngineKind::DamonMod => "damon-mod",
            EngineKind::DamonAgg => "damon-agg",
            EngineKind::PmuMod => "pmu-mod",
            EngineKind::PmuAgg => "pmu-agg",
            EngineKind::TelescopeBounded => "telescope-bnd",
            EngineKind::TelescopeFlex => "telescope-flx",
            EngineKind::ScanAggressive => "scan-agg",
            EngineKind::ScanModerate => "scan-mod",
            EngineKind::ScanConservative => "scan-cons",
            EngineKind::None => "none",
        }
    }

    pub const fn description(self) -> &'static str {
        match self {
            EngineKind::DamonMod => "region sampling, one PTE per region, 5 ms sampling / 200 ms window",
            EngineKind::DamonAgg => "region sampling, one PTE per region, 1 ms sampling / 200 ms window",
            EngineKind::PmuMod => "load-event sampling at 5 kHz, 2 MiB blocks",
            EngineKind::PmuAgg => "load-event sampling at 10 kHz, 2 MiB blocks",
            EngineKind::TelescopeBounded => "page-table tree profiling, entries within region bounds",
            EngineKind::TelescopeFlex => "page-table tree profiling, entries may overshoot by a per-level threshold",
            EngineKind::ScanAggressive => "two-pass linear PTE scan, no sleep between 256 MiB chunks",
            EngineKind::ScanModerate => "two-pass linear PTE scan, 10 ms sleep per 256 MiB chunk",
            EngineKind::ScanConservative => "two-pass linear PTE scan, 100 ms sleep per 256 MiB chunk",
            EngineKind::None => "reports nothing (no-migration baseline)",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == tag).ok_or_else(|| {
            let known: Vec<&str> = Self::ALL.iter().map(|k| k.tag()).collect();
            Error::config("engine", format!("unknown engine tag {tag:?}; known tags: {}", known.join(", ")))
        })
    }

    /// Sampling/window timing this engine runs with, derived from the base intervals.
    pub fn intervals(self, base: IntervalConfig) -> IntervalConfig {
        match self {
            EngineKind::DamonAgg => IntervalConfig { sampling_ms: 1, ..base },
            _ => base,
        }
    }

    /// Builds the engine over the given mapping. `seed` is the run seed; each
    /// engine draws from its own stream derived from its tag.
    pub fn build(self, mapped: &[ByteRange], base: IntervalConfig, seed: u64) -> Result<Box<dyn Engine>> {
        let intervals = self.intervals(base);
        intervals.validate()?;
        let rng = engine_rng(seed, self.tag());
        Ok(match self {
            EngineKind::DamonMod | EngineKind::DamonAgg => {
                Box::new(DamonEngine::new(self.tag(), mapped, intervals, Default::default(), rng)?)
            }
            EngineKind::PmuMod => Box::new(PmuEngine::new(self.tag(), PmuConfig::with_freq(5_000.0), rng)),
            EngineKind::PmuAgg => Box::new(PmuEngine::new(self.tag(), PmuConfig::with_freq(10_000.0), rng)),
            EngineKind::TelescopeBounded => Box::new(TelescopeEngine::new(
                self.tag(),
                mapped,
                intervals,
                Default::default(),
                Variant::Bounded,
                rng,
            )?),
            EngineKind::TelescopeFlex => Box::new(TelescopeEngine::new(
                self.tag(),
                mapped,
                intervals,
                Default::default(),
                Variant::Flex(FlexThresholds::default()),
                rng,
            )?),
            EngineKind::ScanAggressive => Box::new(ScanEngine::new(self.tag(), mapped, ScanThrottle::new(ScanMode::Aggressive), intervals)?),
            EngineKind::ScanModerate => Box::new(ScanEngine::new(self.tag(), mapped, ScanThrottle::new(ScanMode::Moderate), intervals)?),
            EngineKind::ScanConservative => {
                Box::new(ScanEngine::new(self.tag(), mapped, ScanThrottle::new(ScanMode::Conservative), intervals)?)
            }
            EngineKind::None => Box::new(NullEngine),
        })
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Per-engine RNG: the run seed on a stream chosen by hashing the tag, far away
/// from the streams used for workload slots.
pub fn engine_rng(seed: u64, tag: &str) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(h | 1 << 63);
    rng
}

/// Engine that never reports anything.
pub struct NullEngine;

impl Engine for NullEngine {
    fn tag(&self) -> &str {
        EngineKind::None.tag()
    }

    fn observe_window(&mut self, batch: &AccessBatch) -> Result<EngineReport> {
        Ok(EngineReport { t_start_ms: batch.t_start_ms, t_end_ms: batch.t_end_ms, ..Default::default() })
    }

    fn refresh_mappings(&mut self, _mapped: &[ByteRange]) -> Result<()> {
        Ok(())
    }
}

/// Hot ranges of a region snapshot: regions whose count exceeds `hot_count`.
pub fn hot_regions(snapshot: &[Region], hot_count: u32) -> Vec<ScoredRange> {
    snapshot.iter().filter(|r| r.access_count > hot_count).map(ScoredRange::from).collect()
}

/// Checks that a batch is one whole window of `intervals`.
pub(crate) fn check_window(batch: &AccessBatch, intervals: &IntervalConfig) -> Result<()> {
    let len = batch.t_end_ms - batch.t_start_ms;
    if len == 0 || len % intervals.sampling_ms != 0 {
        return Err(Error::InvalidArgument(format!(
            "window of {len} ms is not a positive multiple of the {} ms sampling interval",
            intervals.sampling_ms
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_round_trip() {
        for k in EngineKind::ALL {
            assert_eq!(EngineKind::from_tag(k.tag()).unwrap(), k);
        }
        let err = EngineKind::from_tag("damon").unwrap_err().to_string();
        assert!(err.contains("engine") && err.contains("telescope-flx"), "{err}");
    }

    #[test]
    fn engine_streams_differ() {
        use rand::Rng;
        let a: u64 = engine_rng(1, "damon-mod").random();
        let b: u64 = engine_rng(1, "telescope-bnd").random();
        let c: u64 = engine_rng(1, "damon-mod").random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }
}

//! Hardware-event sampling model: accesses are thinned to the configured
//! sample frequency and aggregated into 2 MiB blocks.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};

use super::{Cost, Engine, EngineReport, ScoredRange};
use crate::error::Result;
use crate::units::{ByteRange, MIB};
use crate::workload::AccessBatch;

/// Aggregation granularity.
pub const PMU_BLOCK: u64 = 2 * MIB;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PmuConfig {
    pub sample_freq_hz: f64,
    pub block_bytes: u64,
    /// Hits a block needs within one window to be reported.
    pub block_threshold: u32,
    /// Samples per second above which the frequency is halved.
    pub throttle_ceiling: f64,
}

impl PmuConfig {
    pub fn with_freq(sample_freq_hz: f64) -> Self {
        Self { sample_freq_hz, block_bytes: PMU_BLOCK, block_threshold: 2, throttle_ceiling: 100_000.0 }
    }
}

/// Thins `addrs` with per-access probability `p`, taking at most `cap` samples,
/// and adds them to `hist` keyed by block index. Returns samples taken.
pub fn pmu_sample_step(
    addrs: &[u64],
    p: f64,
    cap: u64,
    block_bytes: u64,
    hist: &mut BTreeMap<u64, u32>,
    rng: &mut impl Rng,
) -> u64 {
    if addrs.is_empty() || cap == 0 || !(p > 0.0) {
        return 0;
    }
    let mut taken = 0;
    if p >= 1.0 {
        for &a in addrs.iter().take(cap as usize) {
            *hist.entry(a / block_bytes).or_default() += 1;
            taken += 1;
        }
        return taken;
    }
    // Gaps between Bernoulli successes are geometric.
    let gap = Geometric::new(p).expect("0 < p < 1");
    let mut i = gap.sample(rng) as usize;
    while i < addrs.len() && taken < cap {
        *hist.entry(addrs[i] / block_bytes).or_default() += 1;
        taken += 1;
        i = i.saturating_add(1).saturating_add(gap.sample(rng) as usize);
    }
    taken
}

pub struct PmuEngine {
    tag: String,
    cfg: PmuConfig,
    effective_freq: f64,
    rng: ChaCha8Rng,
    /// Samples allowed so far, `sum(freq * window_s)`.
    allowance: f64,
    taken_total: u64,
}

impl PmuEngine {
    pub fn new(tag: &str, cfg: PmuConfig, rng: ChaCha8Rng) -> Self {
        Self { tag: tag.into(), cfg, effective_freq: cfg.sample_freq_hz, rng, allowance: 0.0, taken_total: 0 }
    }

    pub fn effective_freq(&self) -> f64 {
        self.effective_freq
    }

    pub fn samples_taken(&self) -> u64 {
        self.taken_total
    }
}

impl Engine for PmuEngine {
    fn tag(&self) -> &str {
        &self.tag
    }

    fn observe_window(&mut self, batch: &AccessBatch) -> Result<EngineReport> {
        let window_s = (batch.t_end_ms - batch.t_start_ms) as f64 / 1000.0;
        let expected = self.effective_freq * window_s;
        self.allowance += expected;
        let cap = (self.allowance.floor() as u64).saturating_sub(self.taken_total);
        let p = if batch.is_empty() { 0.0 } else { (expected / batch.len() as f64).min(1.0) };
        let mut hist = BTreeMap::new();
        let taken = pmu_sample_step(&batch.addrs, p, cap, self.cfg.block_bytes, &mut hist, &mut self.rng);
        self.taken_total += taken;
        if window_s > 0.0 && taken as f64 / window_s > self.cfg.throttle_ceiling {
            self.effective_freq /= 2.0;
        }
        let hot = hist
            .iter()
            .filter(|&(_, &hits)| hits >= self.cfg.block_threshold)
            .map(|(&block, &hits)| ScoredRange {
                range: ByteRange::with_len(block * self.cfg.block_bytes, self.cfg.block_bytes),
                access_count: hits,
                score: hits.min(100) as u8,
            })
            .collect();
        Ok(EngineReport {
            t_start_ms: batch.t_start_ms,
            t_end_ms: batch.t_end_ms,
            hot,
            regions: Vec::new(),
            cost: Cost { bit_flips: 0, work_units: taken, samples: taken, interrupts: taken, covered_bytes: 0 },
        })
    }

    fn refresh_mappings(&mut self, _mapped: &[ByteRange]) -> Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn zero_probability_is_empty() {
        let mut h = BTreeMap::new();
        assert_eq!(pmu_sample_step(&[1, 2, 3], 0.0, 10, PMU_BLOCK, &mut h, &mut rng()), 0);
        assert!(h.is_empty());
    }

    #[test]
    fn one_block_one_key() {
        let addrs: Vec<u64> = (0..1000).map(|i| 4 * MIB + i * 1024).collect();
        let mut h = BTreeMap::new();
        let n = pmu_sample_step(&addrs, 0.5, u64::MAX, PMU_BLOCK, &mut h, &mut rng());
        assert_eq!(h.len(), 1);
        assert_eq!(h[&2], n as u32);
    }

    #[test]
    fn cap_is_respected() {
        let addrs = vec![0u64; 10_000];
        let mut h = BTreeMap::new();
        assert_eq!(pmu_sample_step(&addrs, 0.9, 17, PMU_BLOCK, &mut h, &mut rng()), 17);
    }

    #[test]
    fn threshold_filters_blocks() {
        let mut e = PmuEngine::new("pmu", PmuConfig::with_freq(1e9), rng());
        // p = 1: block 0 sees 5 hits, block 1 sees 1
        let mut addrs = vec![0u64; 5];
        addrs.push(PMU_BLOCK);
        let batch = AccessBatch { t_start_ms: 0, t_end_ms: 6, per_ms: 1, addrs };
        let r = e.observe_window(&batch).unwrap();
        assert_eq!(r.hot.len(), 1);
        assert_eq!(r.hot[0].range, ByteRange::new(0, PMU_BLOCK));
        assert_eq!(r.hot[0].access_count, 5);
    }

    #[test]
    fn throttle_halves_frequency() {
        let mut e = PmuEngine::new("pmu", PmuConfig { throttle_ceiling: 1000.0, ..PmuConfig::with_freq(5000.0) }, rng());
        let batch = AccessBatch { t_start_ms: 0, t_end_ms: 200, per_ms: 100, addrs: vec![0; 20_000] };
        let r = e.observe_window(&batch).unwrap();
        assert!((900..=1000).contains(&r.cost.interrupts), "{}", r.cost.interrupts);
        assert_eq!(e.effective_freq(), 2500.0);
    }
}

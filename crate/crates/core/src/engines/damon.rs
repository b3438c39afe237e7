use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{check_window, hot_regions, Cost, Engine, EngineReport, DEFAULT_HOT_COUNT};
use crate::error::Result;
use crate::pagetable::{EntryRef, Level, SparsePageTable};
use crate::regions::{IntervalConfig, Region, RegionConfig, RegionSet};
use crate::units::{ByteRange, PAGE_SIZE};
use crate::workload::AccessBatch;

/// Runs every sampling interval of one window: pick one entry per region,
/// clear it, replay the interval's accesses, test it.
pub(crate) fn sample_window(
    regions: &mut RegionSet,
    pt: &mut SparsePageTable,
    batch: &AccessBatch,
    intervals: &IntervalConfig,
    mut pick: impl FnMut(usize, &Region) -> EntryRef,
) -> Result<Cost> {
    check_window(batch, intervals)?;
    let mut cost = Cost::default();
    let mut picks: Vec<EntryRef> = Vec::with_capacity(regions.len());
    let mut t = batch.t_start_ms;
    while t < batch.t_end_ms {
        let t_next = t + intervals.sampling_ms;
        picks.clear();
        picks.extend(regions.regions().iter().enumerate().map(|(i, r)| pick(i, r)));
        for &e in &picks {
            pt.clear_accessed(e)?;
            cost.covered_bytes += e.level.coverage();
        }
        pt.record_batch(batch.span(t, t_next))?;
        for (i, &e) in picks.iter().enumerate() {
            let hit = pt.test_accessed(e)?;
            regions.record_window_sample(i, hit);
        }
        let n = picks.len() as u64;
        cost.bit_flips += n;
        cost.work_units += 2 * n;
        cost.samples += n;
        t = t_next;
    }
    Ok(cost)
}

/// Uniformly random page of `range` as a PTE entry.
pub(crate) fn random_page(range: ByteRange, rng: &mut impl Rng) -> EntryRef {
    let first = range.start / PAGE_SIZE;
    let pages = (range.len() / PAGE_SIZE).max(1);
    EntryRef::new(Level::Pte, first + rng.random_range(0..pages))
}

/// Region-based sampling: one random PTE per region per sampling interval.
pub struct DamonEngine {
    tag: String,
    intervals: IntervalConfig,
    regions: RegionSet,
    pt: SparsePageTable,
    rng: ChaCha8Rng,
    pub hot_count: u32,
}

impl DamonEngine {
    pub fn new(
        tag: &str,
        mapped: &[ByteRange],
        intervals: IntervalConfig,
        region_cfg: RegionConfig,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        intervals.validate()?;
        let cfg = RegionConfig { samples_per_window: intervals.samples_per_window(), ..region_cfg };
        let regions = RegionSet::init(mapped, cfg.min_regions, cfg)?;
        let mut pt = SparsePageTable::new();
        for m in crate::units::normalize(mapped) {
            pt.map_range(m.start, m.len())?;
        }
        Ok(Self { tag: tag.into(), intervals, regions, pt, rng, hot_count: DEFAULT_HOT_COUNT })
    }

    pub fn regions(&self) -> &RegionSet {
        &self.regions
    }

    pub fn page_table(&self) -> &SparsePageTable {
        &self.pt
    }
}

impl Engine for DamonEngine {
    fn tag(&self) -> &str {
        &self.tag
    }

    fn observe_window(&mut self, batch: &AccessBatch) -> Result<EngineReport> {
        let rng = &mut self.rng;
        let cost = sample_window(&mut self.regions, &mut self.pt, batch, &self.intervals, |_, r| {
            random_page(r.range, rng)
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

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::units::{GIB, MIB};
    use crate::workload::{generate_batch, Phase, Scenario};

    fn engine(heap: u64) -> DamonEngine {
        DamonEngine::new(
            "damon-mod",
            &[ByteRange::new(0, heap)],
            IntervalConfig::default(),
            RegionConfig::default(),
            ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap()
    }

    fn batch(heap: u64, hot: ByteRange, per_ms: u64) -> AccessBatch {
        let s = Scenario {
            name: "t".into(),
            heap_bytes: heap,
            heap_base: 0,
            phases: vec![Phase::uniform(1000, vec![hot])],
            accesses_per_ms: per_ms,
            rng_seed: 1,
        };
        generate_batch(&s, 0, 200).unwrap()
    }

    #[test]
    fn saturated_region_counts_every_sample() {
        // 64 pages, 20k accesses per interval: every page is touched each interval.
        let heap = 256 * 1024;
        let mut e = engine(heap);
        let r = e.observe_window(&batch(heap, ByteRange::new(0, heap), 4000)).unwrap();
        assert!(r.regions.iter().all(|r| r.access_count == 40), "{:?}", r.regions);
        assert_eq!(r.cost.bit_flips, 40 * 10);
    }

    #[test]
    fn no_accesses_no_counts() {
        let heap = GIB;
        let mut e = engine(heap);
        let empty = AccessBatch { t_start_ms: 0, t_end_ms: 200, per_ms: 0, addrs: vec![] };
        let r = e.observe_window(&empty).unwrap();
        assert!(r.hot.is_empty());
        assert!(r.regions.iter().all(|r| r.access_count == 0));
    }

    #[test]
    fn flips_equal_regions_per_interval() {
        let heap = 64 * MIB;
        let mut e = engine(heap);
        for w in 0..3u64 {
            let n = e.regions().len() as u64;
            let mut b = batch(heap, ByteRange::new(0, MIB), 100);
            b.t_start_ms += 200 * w;
            b.t_end_ms += 200 * w;
            let r = e.observe_window(&b).unwrap();
            assert_eq!(r.cost.bit_flips, n * 40);
        }
    }
}

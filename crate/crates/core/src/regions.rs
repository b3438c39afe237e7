//! Region bookkeeping shared by the region sampler and the tree profiler:
//! access counting, aging, scoring, random splitting and similarity merging.

use rand::Rng;

use crate::error::{Error, Result};
use crate::units::{self, ByteRange, PAGE_SIZE};

/// Sampling, aggregation and mapping-refresh periods.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IntervalConfig {
    pub sampling_ms: u64,
    pub window_ms: u64,
    pub region_update_ms: u64,
}

impl Default for IntervalConfig {
    fn default() -> Self {
        Self { sampling_ms: 5, window_ms: 200, region_update_ms: 1000 }
    }
}

impl IntervalConfig {
    pub fn new(sampling_ms: u64, window_ms: u64, region_update_ms: u64) -> Result<Self> {
        let cfg = Self { sampling_ms, window_ms, region_update_ms };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sampling_ms == 0 || self.window_ms == 0 || self.region_update_ms == 0 {
            return Err(Error::config("intervals", "intervals must be positive"));
        }
        if self.window_ms % self.sampling_ms != 0 {
            return Err(Error::config("intervals", "profile window must be a multiple of the sampling interval"));
        }
        Ok(())
    }

    pub fn samples_per_window(&self) -> u32 {
        (self.window_ms / self.sampling_ms) as u32
    }
}

/// How close two adjacent counts must be for their regions to merge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MergeThreshold {
    Absolute(u32),
    /// Fraction of the samples taken per window.
    FractionOfSamples(f64),
    /// Fraction of the largest count observed in the window, as the kernel does.
    FractionOfMax(f64),
    /// Fraction of the larger of the two counts being compared.
    Relative(f64),
}

impl MergeThreshold {
    /// Largest count difference still considered close. `window_max` is the largest
    /// count in the window, `pair_max` the larger of the two counts compared.
    pub fn resolve(&self, samples_per_window: u32, window_max: u32, pair_max: u32) -> u32 {
        match *self {
            MergeThreshold::Absolute(n) => n,
            MergeThreshold::FractionOfSamples(f) => (f * f64::from(samples_per_window)).round() as u32,
            MergeThreshold::FractionOfMax(f) => (f * f64::from(window_max)).floor() as u32,
            MergeThreshold::Relative(f) => (f * f64::from(pair_max)).floor() as u32,
        }
    }

    fn close(&self, samples_per_window: u32, window_max: u32, a: u32, b: u32) -> bool {
        a.abs_diff(b) <= self.resolve(samples_per_window, window_max, a.max(b))
    }
}

/// `score = round(100 * (count_weight * count/samples + age_weight * min(age, age_cap)/age_cap))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreWeights {
    pub count_weight: f64,
    pub age_weight: f64,
    pub age_cap: u32,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self { count_weight: 0.7, age_weight: 0.3, age_cap: 10 }
    }
}

/// Hotness in `[0, 100]` from a window's access count and the region's age.
pub fn score(access_count: u32, age: u32, samples_per_window: u32, w: &ScoreWeights) -> u8 {
    let freq = if samples_per_window == 0 {
        0.0
    } else {
        (f64::from(access_count) / f64::from(samples_per_window)).min(1.0)
    };
    let age = if w.age_cap == 0 { 0.0 } else { f64::from(age.min(w.age_cap)) / f64::from(w.age_cap) };
    let s = 100.0 * (w.count_weight * freq + w.age_weight * age);
    s.round().clamp(0.0, 100.0) as u8
}

/// Per-window component of the score, i.e. `round(100 * count / samples)`.
pub fn frequency_percent(access_count: u32, samples_per_window: u32) -> u8 {
    score(access_count, 0, samples_per_window, &ScoreWeights { count_weight: 1.0, age_weight: 0.0, age_cap: 1 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Region {
    pub range: ByteRange,
    pub access_count: u32,
    pub age: u32,
    pub score: u8,
    /// Count of the previous window, used to detect pattern changes.
    pub last_count: u32,
}

impl Region {
    pub fn new(range: ByteRange) -> Self {
        Self { range, access_count: 0, age: 0, score: 0, last_count: 0 }
    }

    fn pages(&self) -> u64 {
        self.range.len() / PAGE_SIZE
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionConfig {
    pub min_regions: usize,
    pub max_regions: usize,
    pub merge_threshold: MergeThreshold,
    pub samples_per_window: u32,
    pub weights: ScoreWeights,
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self {
            min_regions: 10,
            max_regions: 1000,
            merge_threshold: MergeThreshold::Relative(0.3),
            samples_per_window: 40,
            weights: ScoreWeights::default(),
        }
    }
}

impl RegionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_regions == 0 || self.min_regions > self.max_regions {
            return Err(Error::config("regions", "need 1 <= min_regions <= max_regions"));
        }
        if self.samples_per_window == 0 {
            return Err(Error::config("regions", "samples_per_window must be positive"));
        }
        Ok(())
    }
}

/// Ordered, disjoint regions covering exactly the mapped ranges.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionSet {
    regions: Vec<Region>,
    cfg: RegionConfig,
}

/// Splits `range` into `n` page-aligned pieces of equal page count; the last takes the remainder.
fn equal_split(range: ByteRange, n: u64) -> impl Iterator<Item = ByteRange> {
    let pages = range.len() / PAGE_SIZE;
    let n = n.clamp(1, pages.max(1));
    let step = pages / n;
    (0..n).map(move |i| {
        let start = range.start + i * step * PAGE_SIZE;
        let end = if i + 1 == n { range.end } else { start + step * PAGE_SIZE };
        ByteRange::new(start, end)
    })
}

impl RegionSet {
    /// Divides each contiguous mapped range into equally sized regions, `initial_count` in total,
    /// apportioned by size with at least one region per range.
    pub fn init(mapped: &[ByteRange], initial_count: usize, cfg: RegionConfig) -> Result<Self> {
        cfg.validate()?;
        let mapped = units::normalize(mapped);
        if mapped.is_empty() {
            return Err(Error::InvalidArgument("cannot build regions over an empty mapping".into()));
        }
        if initial_count == 0 {
            return Err(Error::InvalidArgument("initial region count must be at least 1".into()));
        }
        if let Some(r) = mapped.iter().find(|r| r.start % PAGE_SIZE != 0 || r.end % PAGE_SIZE != 0) {
            return Err(Error::InvalidArgument(format!("mapped range {r} is not page aligned")));
        }
        let total = units::total_len(&mapped) as u128;
        let mut counts: Vec<u64> = mapped
            .iter()
            .map(|r| ((initial_count as u128 * r.len() as u128 / total) as u64).max(1))
            .collect();
        let assigned: u64 = counts.iter().sum();
        if let Some(last) = counts.last_mut() {
            *last += (initial_count as u64).saturating_sub(assigned);
        }
        let regions = mapped
            .iter()
            .zip(counts)
            .flat_map(|(r, n)| equal_split(*r, n))
            .map(Region::new)
            .collect();
        Ok(Self { regions, cfg })
    }

    pub fn config(&self) -> &RegionConfig {
        &self.cfg
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn record_window_sample(&mut self, index: usize, accessed: bool) {
        if accessed {
            let r = &mut self.regions[index];
            r.access_count = (r.access_count + 1).min(self.cfg.samples_per_window);
        }
    }

    fn window_max(&self) -> u32 {
        self.regions.iter().map(|r| r.access_count).max().unwrap_or(0)
    }

    /// Largest region a merge may produce, so the set can always hold `min_regions`.
    fn size_limit(&self) -> u64 {
        let total: u64 = self.regions.iter().map(|r| r.range.len()).sum();
        (total / self.cfg.min_regions as u64).max(PAGE_SIZE)
    }

    /// Left-to-right merge passes until no adjacent pair qualifies.
    pub fn merge(&mut self, threshold: MergeThreshold) {
        let limit = self.size_limit();
        let (spw, max) = (self.cfg.samples_per_window, self.window_max());
        loop {
            let before = self.regions.len();
            let mut out: Vec<Region> = Vec::with_capacity(before);
            for r in self.regions.drain(..) {
                match out.last_mut() {
                    Some(prev)
                        if prev.range.end == r.range.start
                            && threshold.close(spw, max, prev.access_count, r.access_count)
                            && prev.range.len() + r.range.len() <= limit =>
                    {
                        let (la, lb) = (prev.range.len() as u128, r.range.len() as u128);
                        let avg = |a: u32, b: u32| {
                            ((u128::from(a) * la + u128::from(b) * lb + (la + lb) / 2) / (la + lb)) as u32
                        };
                        prev.access_count = avg(prev.access_count, r.access_count);
                        prev.last_count = avg(prev.last_count, r.last_count);
                        prev.age = prev.age.min(r.age);
                        prev.range.end = r.range.end;
                    }
                    _ => out.push(r),
                }
            }
            self.regions = out;
            if self.regions.len() == before {
                break;
            }
        }
    }

    /// Splits every region of at least two pages in two at a random page boundary
    /// within 10%–90% of its length.
    pub fn split(&mut self, rng: &mut impl Rng) {
        let mut out = Vec::with_capacity(self.regions.len() * 2);
        for r in self.regions.drain(..) {
            let pages = r.pages();
            if pages < 2 {
                out.push(r);
                continue;
            }
            let lo = (pages as f64 * 0.1).ceil().max(1.0) as u64;
            let hi = ((pages as f64 * 0.9).floor() as u64).min(pages - 1);
            let cut = if lo >= hi { lo.min(pages - 1) } else { rng.random_range(lo..=hi) };
            let mid = r.range.start + cut * PAGE_SIZE;
            out.push(Region { range: ByteRange::new(r.range.start, mid), ..r });
            out.push(Region { range: ByteRange::new(mid, r.range.end), ..r });
        }
        self.regions = out;
    }

    /// End-of-window maintenance. Ages and scores regions, merges similar neighbours,
    /// returns the scored snapshot, then splits (while below half the maximum) and
    /// resets counts for the next window.
    pub fn end_window_maintenance(&mut self, rng: &mut impl Rng) -> Vec<Region> {
        let threshold = self.cfg.merge_threshold;
        let (spw, max) = (self.cfg.samples_per_window, self.window_max());
        for r in &mut self.regions {
            if !threshold.close(spw, max, r.access_count, r.last_count) {
                r.age = 0;
            } else {
                r.age = r.age.saturating_add(1);
            }
        }
        self.merge(threshold);
        let spw = self.cfg.samples_per_window;
        for r in &mut self.regions {
            r.score = score(r.access_count, r.age, spw, &self.cfg.weights);
        }
        let snapshot = self.regions.clone();
        if self.regions.len() < self.cfg.max_regions / 2 {
            self.split(rng);
        }
        for r in &mut self.regions {
            r.last_count = r.access_count;
            r.access_count = 0;
        }
        snapshot
    }

    /// Clips regions to the new mapping and adds fresh regions over newly mapped areas.
    /// Returns whether anything changed.
    pub fn refresh_mappings(&mut self, mapped: &[ByteRange]) -> bool {
        let mapped = units::normalize(mapped);
        let mut out: Vec<Region> = Vec::with_capacity(self.regions.len());
        let mut changed = false;
        for r in &self.regions {
            let pieces: Vec<ByteRange> = mapped.iter().filter_map(|m| m.intersection(&r.range)).collect();
            if pieces != [r.range] {
                changed = true;
            }
            out.extend(pieces.into_iter().map(|range| Region { range, ..*r }));
        }
        let covered: Vec<ByteRange> = out.iter().map(|r| r.range).collect();
        let fresh = units::subtract(&mapped, &units::normalize(&covered));
        if !fresh.is_empty() {
            changed = true;
            out.extend(fresh.into_iter().map(Region::new));
            out.sort_unstable_by_key(|r| r.range.start);
        }
        self.regions = out;
        changed
    }

    /// Regions as ranges, for coverage checks.
    pub fn ranges(&self) -> Vec<ByteRange> {
        self.regions.iter().map(|r| r.range).collect()
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::units::{GIB, TIB};

    fn set(ranges: &[(u64, u64, u32)]) -> RegionSet {
        RegionSet {
            regions: ranges
                .iter()
                .map(|&(s, e, c)| Region { access_count: c, ..Region::new(ByteRange::new(s, e)) })
                .collect(),
            cfg: RegionConfig { min_regions: 1, ..RegionConfig::default() },
        }
    }

    #[test]
    fn init_examples() {
        let s = RegionSet::init(&[ByteRange::new(0, 5 * TIB)], 10, RegionConfig::default()).unwrap();
        assert_eq!(s.len(), 10);
        assert!(s.regions().iter().all(|r| r.range.len() == 512 * GIB));

        let one = RegionSet::init(&[ByteRange::new(0, GIB)], 1, RegionConfig::default()).unwrap();
        assert_eq!(one.ranges(), vec![ByteRange::new(0, GIB)]);

        let two = RegionSet::init(
            &[ByteRange::new(0, GIB), ByteRange::new(2 * GIB, 3 * GIB)],
            4,
            RegionConfig::default(),
        )
        .unwrap();
        let lens: Vec<u64> = two.regions().iter().map(|r| r.range.len()).collect();
        assert_eq!(lens, vec![GIB / 2; 4]);
        assert_eq!(two.regions()[2].range.start, 2 * GIB);

        assert!(RegionSet::init(&[], 4, RegionConfig::default()).is_err());
    }

    #[test]
    fn remainder_goes_to_last_region() {
        let s = RegionSet::init(&[ByteRange::new(0, 10 * PAGE_SIZE)], 3, RegionConfig::default()).unwrap();
        let pages: Vec<u64> = s.regions().iter().map(Region::pages).collect();
        assert_eq!(pages, vec![3, 3, 4]);
    }

    #[test]
    fn window_samples_count_hits() {
        let mut s = set(&[(0, GIB, 0)]);
        for _ in 0..3 {
            s.record_window_sample(0, true);
        }
        s.record_window_sample(0, false);
        assert_eq!(s.regions()[0].access_count, 3);
        for _ in 0..100 {
            s.record_window_sample(0, true);
        }
        assert_eq!(s.regions()[0].access_count, 40);
    }

    #[test]
    fn close_counts_merge() {
        let mut s = set(&[(0, GIB, 40), (GIB, 2 * GIB, 39), (2 * GIB, 3 * GIB, 10)]);
        s.merge(MergeThreshold::Absolute(2));
        assert_eq!(s.ranges(), vec![ByteRange::new(0, 2 * GIB), ByteRange::new(2 * GIB, 3 * GIB)]);
        // size-weighted average of 40 and 39 over equal sizes, rounded half up
        assert_eq!(s.regions()[0].access_count, 40);
        let again = s.clone();
        s.merge(MergeThreshold::Absolute(2));
        assert_eq!(s, again);
    }

    #[test]
    fn merge_respects_size_limit() {
        let ranges: Vec<(u64, u64, u32)> = (0..20).map(|i| (i * GIB, (i + 1) * GIB, 0)).collect();
        let mut s = set(&ranges);
        s.cfg.min_regions = 10;
        s.merge(MergeThreshold::Absolute(0));
        assert_eq!(s.len(), 10);
        assert!(s.regions().iter().all(|r| r.range.len() == 2 * GIB));
    }

    #[test]
    fn small_sets_split() {
        let mut s = RegionSet::init(&[ByteRange::new(0, 5 * GIB)], 5, RegionConfig::default()).unwrap();
        // distinct counts so nothing merges
        for (i, c) in [0u32, 10, 20, 30, 40].into_iter().enumerate() {
            for _ in 0..c {
                s.record_window_sample(i, true);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let snap = s.end_window_maintenance(&mut rng);
        assert_eq!(snap.len(), 5);
        assert_eq!(s.len(), 10);
        assert!(s.regions().iter().all(|r| r.access_count == 0));
    }

    #[test]
    fn split_offsets_stay_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let parent = ByteRange::new(0, 1000 * PAGE_SIZE);
        for _ in 0..10_000 {
            let mut s = set(&[(parent.start, parent.end, 0)]);
            s.split(&mut rng);
            let frac = s.regions()[0].range.len() as f64 / parent.len() as f64;
            assert!((0.1..=0.9).contains(&frac), "{frac}");
        }
    }

    #[test]
    fn score_examples() {
        let w = ScoreWeights::default();
        assert_eq!(score(0, 0, 40, &w), 0);
        assert_eq!(frequency_percent(40, 40), 100);
        assert_eq!(frequency_percent(20, 40), 50);
        assert_eq!(score(20, 0, 40, &w), 35);
        assert_eq!(score(40, 10, 40, &w), 100);
        assert_eq!(score(40, 99, 40, &w), 100);
    }

    #[test]
    fn refresh_examples() {
        let base = RegionSet::init(&[ByteRange::new(0, 4 * GIB)], 4, RegionConfig::default()).unwrap();
        let mut same = base.clone();
        assert!(!same.refresh_mappings(&[ByteRange::new(0, 4 * GIB)]));
        assert_eq!(same, base);

        let mut grown = base.clone();
        assert!(grown.refresh_mappings(&[ByteRange::new(0, 4 * GIB), ByteRange::new(8 * GIB, 9 * GIB)]));
        assert_eq!(grown.len(), 5);
        assert_eq!(grown.regions()[4].range, ByteRange::new(8 * GIB, 9 * GIB));

        let mut shrunk = base.clone();
        shrunk.refresh_mappings(&[ByteRange::new(0, 2 * GIB)]);
        assert_eq!(shrunk.ranges(), base.ranges()[..2].to_vec());
    }

    #[test]
    fn merge_threshold_modes() {
        assert_eq!(MergeThreshold::FractionOfSamples(0.1).resolve(40, 0, 0), 4);
        assert_eq!(MergeThreshold::FractionOfMax(0.1).resolve(40, 37, 5), 3);
        assert_eq!(MergeThreshold::Absolute(2).resolve(40, 40, 40), 2);
        assert_eq!(MergeThreshold::Relative(0.1).resolve(40, 40, 39), 3);
        assert!(!MergeThreshold::Relative(0.1).close(40, 40, 0, 1));
    }
}

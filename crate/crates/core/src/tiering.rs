//! Two-tier placement driven by engine reports, and a latency-based throughput proxy.

use crate::engines::ScoredRange;
use crate::error::{Error, Result};
use crate::units::{self, ByteRange, GIB};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TierModel {
    pub near_latency_ns: f64,
    pub far_latency_ns: f64,
    pub near_capacity_bytes: u64,
    pub migration_bandwidth_bytes_per_s: f64,
}

impl Default for TierModel {
    fn default() -> Self {
        Self {
            near_latency_ns: 100.0,
            far_latency_ns: 300.0,
            near_capacity_bytes: 768 * GIB,
            migration_bandwidth_bytes_per_s: (10 * GIB) as f64,
        }
    }
}

impl TierModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.near_latency_ns > 0.0 && self.far_latency_ns > self.near_latency_ns) {
            return Err(Error::config("tier_model", "need far latency > near latency > 0"));
        }
        if self.near_capacity_bytes == 0 || !(self.migration_bandwidth_bytes_per_s > 0.0) {
            return Err(Error::config("tier_model", "capacity and bandwidth must be positive"));
        }
        Ok(())
    }
}

/// Migration policy knobs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TieringConfig {
    /// Regions need an access count strictly above this to be hot.
    pub hot_count: u32,
    /// Regions this large or larger are skipped.
    pub max_region_bytes: u64,
    /// Bytes migrated per profile window at most.
    pub budget_bytes: u64,
    /// Telemetry and migration start here.
    pub warmup_ms: u64,
    pub model: TierModel,
}

impl Default for TieringConfig {
    fn default() -> Self {
        Self {
            hot_count: 5,
            max_region_bytes: 4 * GIB,
            budget_bytes: 10 * GIB,
            warmup_ms: 150_000,
            model: TierModel::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NearRange {
    pub range: ByteRange,
    /// Score the range had when last reported.
    pub score: u8,
}

/// Near-tier residency; everything else is far.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Placement {
    near: Vec<NearRange>,
}

impl Placement {
    pub fn near(&self) -> &[NearRange] {
        &self.near
    }

    pub fn near_ranges(&self) -> Vec<ByteRange> {
        self.near.iter().map(|n| n.range).collect()
    }

    pub fn near_bytes(&self) -> u64 {
        self.near.iter().map(|n| n.range.len()).sum()
    }

    #[inline]
    pub fn is_near(&self, addr: u64) -> bool {
        let i = self.near.partition_point(|n| n.range.end <= addr);
        i < self.near.len() && self.near[i].range.contains(addr)
    }

    fn overlaps_near(&self, r: ByteRange) -> bool {
        let i = self.near.partition_point(|n| n.range.end <= r.start);
        i < self.near.len() && self.near[i].range.start < r.end
    }

    fn insert(&mut self, range: ByteRange, score: u8) {
        let i = self.near.partition_point(|n| n.range.start < range.start);
        self.near.insert(i, NearRange { range, score });
    }

    /// Updates near-range scores from the latest report: the highest overlapping
    /// candidate score, or 0 if none overlaps.
    pub fn refresh_scores(&mut self, candidates: &[ScoredRange]) {
        for n in &mut self.near {
            n.score = candidates
                .iter()
                .filter(|c| c.range.overlap_len(&n.range) > 0)
                .map(|c| c.score)
                .max()
                .unwrap_or(0);
        }
    }

    /// Evicts at least `bytes` from the near tier, lowest score first, then lowest
    /// address; the last victim is trimmed from its end. Returns bytes evicted.
    fn evict(&mut self, bytes: u64) -> u64 {
        let mut order: Vec<usize> = (0..self.near.len()).collect();
        order.sort_by_key(|&i| (self.near[i].score, self.near[i].range.start));
        let mut freed = 0;
        let mut drop = vec![false; self.near.len()];
        for i in order {
            if freed >= bytes {
                break;
            }
            let need = bytes - freed;
            let r = &mut self.near[i].range;
            if r.len() <= need {
                freed += r.len();
                drop[i] = true;
            } else {
                r.end -= need;
                freed += need;
            }
        }
        let mut k = 0;
        self.near.retain(|_| {
            k += 1;
            !drop[k - 1]
        });
        freed
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MigrationPlan {
    /// Far-resident ranges to promote, grouped by source region, in priority order.
    pub entries: Vec<ScoredRange>,
    pub total_bytes: u64,
}

/// Hot (count above threshold), not too large, far-resident candidates by score
/// descending (ties: count descending, address ascending), stopping before the
/// candidate that would exceed the budget.
pub fn classify_and_plan(candidates: &[ScoredRange], placement: &Placement, cfg: &TieringConfig) -> MigrationPlan {
    let mut hot: Vec<&ScoredRange> = candidates
        .iter()
        .filter(|c| c.access_count > cfg.hot_count && c.range.len() < cfg.max_region_bytes)
        .collect();
    hot.sort_by(|a, b| {
        b.score
            .cmp(&a.score)
            .then(b.access_count.cmp(&a.access_count))
            .then(a.range.start.cmp(&b.range.start))
    });
    let near = placement.near_ranges();
    let mut plan = MigrationPlan::default();
    for c in hot {
        let far = units::subtract(&[c.range], &near);
        let bytes = units::total_len(&far);
        if bytes == 0 {
            continue;
        }
        if plan.total_bytes + bytes > cfg.budget_bytes {
            break;
        }
        plan.total_bytes += bytes;
        plan.entries.extend(far.into_iter().map(|range| ScoredRange { range, ..*c }));
    }
    plan
}

/// Promotes the plan's ranges, evicting cold near ranges when capacity runs out.
/// Returns the modeled migration time in seconds.
pub fn apply_plan(plan: &MigrationPlan, placement: &mut Placement, model: &TierModel) -> Result<f64> {
    let ranges: Vec<ByteRange> = plan.entries.iter().map(|e| e.range).collect();
    if units::total_len(&units::normalize(&ranges)) != units::total_len(&ranges) {
        return Err(Error::Consistency("migration plan ranges overlap".into()));
    }
    if let Some(e) = plan.entries.iter().find(|e| placement.overlaps_near(e.range)) {
        return Err(Error::Consistency(format!("planned range {} is already near-resident", e.range)));
    }
    let bytes = units::total_len(&ranges);
    if bytes > model.near_capacity_bytes {
        return Err(Error::Consistency("migration plan exceeds near-tier capacity".into()));
    }
    let free = model.near_capacity_bytes - placement.near_bytes();
    if bytes > free {
        placement.evict(bytes - free);
    }
    for e in &plan.entries {
        placement.insert(e.range, e.score);
    }
    Ok(bytes as f64 / model.migration_bandwidth_bytes_per_s)
}

/// Operations per second implied by the mean latency of `addrs` under `placement`.
pub fn throughput_proxy(addrs: &[u64], placement: &Placement, model: &TierModel) -> f64 {
    if addrs.is_empty() {
        return 0.0;
    }
    let near = addrs.iter().filter(|&&a| placement.is_near(a)).count() as f64;
    let n = addrs.len() as f64;
    let mean_ns = (near * model.near_latency_ns + (n - near) * model.far_latency_ns) / n;
    1e9 / mean_ns
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(start_gib: u64, len_gib: u64, count: u32, score: u8) -> ScoredRange {
        ScoredRange { range: ByteRange::with_len(start_gib * GIB, len_gib * GIB), access_count: count, score }
    }

    #[test]
    fn count_threshold_and_size_rule() {
        let p = Placement::default();
        let cfg = TieringConfig::default();
        let plan = classify_and_plan(&[cand(0, 1, 6, 50), cand(1, 1, 4, 90)], &p, &cfg);
        assert_eq!(plan.entries, vec![cand(0, 1, 6, 50)]);
        let plan = classify_and_plan(&[cand(0, 8, 40, 100)], &p, &cfg);
        assert!(plan.entries.is_empty());
    }

    #[test]
    fn budget_stops_at_ten_gib() {
        let cands: Vec<ScoredRange> = (0..12).map(|i| cand(i * 2, 1, 30, 100 - i as u8)).collect();
        let plan = classify_and_plan(&cands, &Placement::default(), &TieringConfig::default());
        assert_eq!(plan.total_bytes, 10 * GIB);
        assert_eq!(plan.entries, cands[..10].to_vec());
    }

    #[test]
    fn apply_and_evict() {
        let model = TierModel { near_capacity_bytes: 3 * GIB, ..TierModel::default() };
        let mut p = Placement::default();
        assert_eq!(apply_plan(&MigrationPlan::default(), &mut p, &model).unwrap(), 0.0);
        let plan = MigrationPlan { entries: vec![cand(0, 1, 9, 10), cand(4, 2, 9, 80)], total_bytes: 3 * GIB };
        apply_plan(&plan, &mut p, &model).unwrap();
        assert_eq!(p.near_bytes(), 3 * GIB);
        let next = MigrationPlan { entries: vec![cand(10, 1, 9, 90)], total_bytes: GIB };
        apply_plan(&next, &mut p, &model).unwrap();
        assert_eq!(p.near_bytes(), 3 * GIB);
        assert!(!p.is_near(0));
        assert!(p.is_near(10 * GIB));
        assert!(matches!(apply_plan(&next, &mut p, &model), Err(Error::Consistency(_))));
    }

    #[test]
    fn ten_gib_takes_one_second() {
        let mut p = Placement::default();
        let plan = MigrationPlan { entries: vec![cand(0, 10, 9, 10)], total_bytes: 10 * GIB };
        assert_eq!(apply_plan(&plan, &mut p, &TierModel::default()).unwrap(), 1.0);
    }

    #[test]
    fn throughput_examples() {
        let m = TierModel::default();
        let mut p = Placement::default();
        p.insert(ByteRange::new(0, 100), 0);
        assert!((throughput_proxy(&[1, 2], &p, &m) - 1e7).abs() < 1e-6);
        assert!((throughput_proxy(&[200, 300], &p, &m) - 1e9 / 300.0).abs() < 1e-6);
        assert!((throughput_proxy(&[1, 200], &p, &m) - 5e6).abs() < 1e-6);
    }
}

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tiersim::engines::{
    candidate_entries_bounded, candidate_entries_flex, decompose, FlexThresholds, ScoredRange, Variant,
};
use tiersim::metrics::precision_recall;
use tiersim::pagetable::{EntryRef, Level, SparsePageTable};
use tiersim::regions::{MergeThreshold, RegionConfig, RegionSet};
use tiersim::tiering::{apply_plan, classify_and_plan, Placement, TierModel, TieringConfig};
use tiersim::units::{normalize, total_len, ByteRange, GIB, MIB, PAGE_SIZE, TIB};
use tiersim::workload::{generate_batch, Phase, Scenario};

fn overshoot(e: EntryRef, r: ByteRange) -> u64 {
    e.level.coverage() - e.va_range().overlap_len(&r)
}

/// Page-aligned region anywhere in the first 8 TiB.
fn region() -> impl Strategy<Value = ByteRange> {
    (0u64..(8 * TIB / PAGE_SIZE), 1u64..(2 * TIB / PAGE_SIZE))
        .prop_map(|(s, len)| ByteRange::with_len(s * PAGE_SIZE, len * PAGE_SIZE))
}

/// Region whose size is drawn log-uniformly so every level gets exercised.
fn region_any_scale() -> impl Strategy<Value = ByteRange> {
    (0u64..(8 * TIB / PAGE_SIZE), 0u32..30, 0u64..1024).prop_map(|(s, shift, frac)| {
        let len = ((1u64 << shift) + frac * (1u64 << shift) / 1024).max(1);
        ByteRange::with_len(s * PAGE_SIZE, len * PAGE_SIZE)
    })
}

fn thresholds() -> impl Strategy<Value = FlexThresholds> {
    (0.0..0.99f64, 0.0..0.99f64, 0.0..0.99f64, 0.0..0.99f64)
        .prop_map(|(pgd, pud, pmd, pte)| FlexThresholds { pgd, pud, pmd, pte })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn cover_partitions_region(r in region_any_scale(), thr in thresholds()) {
        for variant in [Variant::Bounded, Variant::Flex(thr)] {
            let cover = decompose(r, &variant);
            let mut at = r.start;
            for p in &cover.pieces {
                prop_assert_eq!(p.covered.start, at);
                prop_assert!(!p.entries.is_empty());
                for i in p.entries.clone() {
                    let e = EntryRef::new(p.level, i);
                    prop_assert!(e.va_range().overlap_len(&p.covered) > 0);
                }
                at = p.covered.end;
            }
            prop_assert_eq!(at, r.end);
        }
    }

    #[test]
    fn bounded_entries_stay_inside(r in region_any_scale()) {
        for p in decompose(r, &Variant::Bounded).pieces {
            for i in p.entries {
                prop_assert_eq!(overshoot(EntryRef::new(p.level, i), r), 0);
            }
        }
        let (_, entries) = candidate_entries_bounded(r);
        for e in entries {
            prop_assert!(r.contains_range(&e.va_range()));
        }
    }

    #[test]
    fn flex_overshoot_within_threshold(r in region(), thr in thresholds()) {
        let (level, entries) = candidate_entries_flex(r, &thr);
        for e in &entries {
            prop_assert_eq!(e.level, level);
            prop_assert!(overshoot(*e, r) as f64 <= thr.get(level) * level.coverage() as f64);
        }
        for p in decompose(r, &Variant::Flex(thr)).pieces {
            for i in p.entries {
                let e = EntryRef::new(p.level, i);
                prop_assert!(overshoot(e, r) as f64 <= thr.get(p.level) * p.level.coverage() as f64);
            }
        }
    }

    #[test]
    fn level_maximality(r in region_any_scale(), thr in thresholds()) {
        // bounded: no level above the chosen one has an entry fully inside the region
        let (level, _) = candidate_entries_bounded(r);
        for above in Level::TOP_DOWN.into_iter().filter(|l| *l > level) {
            let cov = above.coverage();
            let inside = (r.start / cov..r.end.div_ceil(cov)).any(|i| r.contains_range(&EntryRef::new(above, i).va_range()));
            prop_assert!(!inside, "{:?} fits at {:?}", r, above);
        }
        // flex: never below the bounded choice, and no higher level qualifies
        let (flevel, _) = candidate_entries_flex(r, &thr);
        prop_assert!(flevel >= level);
        for above in Level::TOP_DOWN.into_iter().filter(|l| *l > flevel) {
            let cov = above.coverage();
            let ok = (r.start / cov..r.end.div_ceil(cov))
                .any(|i| overshoot(EntryRef::new(above, i), r) as f64 <= thr.get(above) * cov as f64);
            prop_assert!(!ok, "{:?} qualifies at {:?}", r, above);
        }
    }

    #[test]
    fn zero_thresholds_degenerate_to_bounded(r in region_any_scale()) {
        prop_assert_eq!(candidate_entries_flex(r, &FlexThresholds::ZERO), candidate_entries_bounded(r));
        prop_assert_eq!(decompose(r, &Variant::Flex(FlexThresholds::ZERO)), decompose(r, &Variant::Bounded));
    }

    #[test]
    fn set_bits_are_upward_closed(offsets in proptest::collection::vec(0u64..(64 * MIB), 1..200), base_gib in 0u64..4) {
        let base = base_gib * GIB + 3 * MIB;
        let mut pt = SparsePageTable::new();
        pt.map_range(base, 64 * MIB).unwrap();
        for o in &offsets {
            pt.record_access(base + o).unwrap();
        }
        for o in &offsets {
            for level in Level::TOP_DOWN {
                let e = EntryRef::new(level, (base + o) / level.coverage());
                prop_assert!(pt.test_accessed(e).unwrap());
            }
        }
        let mut pages: Vec<u64> = offsets.iter().map(|o| (base + o) / PAGE_SIZE).collect();
        pages.sort_unstable();
        pages.dedup();
        prop_assert_eq!(pt.collect_accessed_ptes(ByteRange::with_len(base, 64 * MIB)), pages);
    }

    #[test]
    fn region_ops_conserve_coverage(
        counts in proptest::collection::vec(0u32..=40, 1..60),
        seed in any::<u64>(),
        rounds in 1usize..6,
    ) {
        let mapped = [ByteRange::with_len(GIB, 64 * GIB), ByteRange::with_len(200 * GIB, 8 * GIB)];
        let cfg = RegionConfig { min_regions: 2, max_regions: 200, ..RegionConfig::default() };
        let mut set = RegionSet::init(&mapped, 10, cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..rounds {
            for (i, c) in counts.iter().enumerate().take(set.len()) {
                for k in 0..40 {
                    set.record_window_sample(i, k < *c);
                }
            }
            set.end_window_maintenance(&mut rng);
            let ranges = set.ranges();
            prop_assert_eq!(normalize(&ranges), normalize(&mapped));
            prop_assert_eq!(total_len(&ranges), total_len(&mapped));
            for w in ranges.windows(2) {
                prop_assert!(w[0].end <= w[1].start);
            }
            prop_assert!(set.len() <= 200);
        }
    }

    #[test]
    fn merge_is_idempotent(counts in proptest::collection::vec(0u32..=40, 2..40), thr in 0u32..10) {
        let cfg = RegionConfig { min_regions: 1, max_regions: 1000, ..RegionConfig::default() };
        let mut set = RegionSet::init(&[ByteRange::with_len(0, 40 * GIB)], counts.len(), cfg).unwrap();
        for (i, c) in counts.iter().enumerate() {
            for k in 0..40 {
                set.record_window_sample(i, k < *c);
            }
        }
        set.merge(MergeThreshold::Absolute(thr));
        let once = set.regions().to_vec();
        set.merge(MergeThreshold::Absolute(thr));
        prop_assert_eq!(set.regions(), &once[..]);
        for w in once.windows(2) {
            prop_assert!(w[0].access_count.abs_diff(w[1].access_count) > thr);
        }
    }

    #[test]
    fn split_offsets_in_bounds(pages in 2u64..100_000, seed in any::<u64>()) {
        let r = ByteRange::with_len(GIB, pages * PAGE_SIZE);
        let cfg = RegionConfig { min_regions: 1, ..RegionConfig::default() };
        let mut set = RegionSet::init(&[r], 1, cfg).unwrap();
        set.split(&mut ChaCha8Rng::seed_from_u64(seed));
        let parts = set.ranges();
        prop_assert_eq!(parts.len(), 2);
        let left = parts[0].len() / PAGE_SIZE;
        prop_assert!(left >= 1 && left < pages);
        if pages >= 10 {
            prop_assert!(left as f64 >= 0.1 * pages as f64 - 1e-9 && left as f64 <= 0.9 * pages as f64 + 1e-9);
        }
    }

    #[test]
    fn precision_recall_in_unit_interval(
        rep in proptest::collection::vec((0u64..1000, 1u64..200), 0..8),
        truth in proptest::collection::vec((0u64..1000, 1u64..200), 0..8),
    ) {
        let to = |v: &[(u64, u64)]| v.iter().map(|&(s, l)| ByteRange::with_len(s * PAGE_SIZE, l * PAGE_SIZE)).collect::<Vec<_>>();
        let pr = precision_recall(&to(&rep), &to(&truth));
        for v in [pr.precision, pr.recall].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert_eq!(pr.recall.is_none(), truth.is_empty());
        // reporting the truth itself is perfect
        if !truth.is_empty() {
            let own = precision_recall(&to(&truth), &to(&truth));
            prop_assert_eq!((own.precision, own.recall), (Some(1.0), Some(1.0)));
        }
    }

    #[test]
    fn plans_respect_rules(
        cands in proptest::collection::vec((0u64..64, 1u64..6, 0u32..=40, 0u8..=100), 0..30),
        near in proptest::collection::vec((0u64..64, 1u64..4), 0..5),
    ) {
        let cfg = TieringConfig::default();
        let mut placement = Placement::default();
        let mut plan0 = tiersim::tiering::MigrationPlan::default();
        let near: Vec<ByteRange> = near.iter().map(|&(s, l)| ByteRange::with_len(s * GIB, l * GIB)).collect();
        for range in normalize(&near) {
            plan0.entries.push(ScoredRange { range, access_count: 40, score: 100 });
        }
        apply_plan(&plan0, &mut placement, &TierModel::default()).unwrap();
        // candidates are disjoint, as a region snapshot is
        let mut at = 0;
        let mut disjoint = Vec::new();
        for &(gap, len, count, score) in &cands {
            let start = at + gap * GIB / 8;
            disjoint.push(ScoredRange { range: ByteRange::with_len(start, len * GIB / 2), access_count: count, score });
            at = start + len * GIB / 2;
        }
        let plan = classify_and_plan(&disjoint, &placement, &cfg);
        prop_assert!(plan.total_bytes <= cfg.budget_bytes);
        prop_assert_eq!(plan.total_bytes, plan.entries.iter().map(|e| e.range.len()).sum::<u64>());
        for e in &plan.entries {
            prop_assert!(e.access_count > cfg.hot_count);
            prop_assert!(e.range.len() < cfg.max_region_bytes);
            prop_assert!(placement.near().iter().all(|n| n.range.overlap_len(&e.range) == 0));
        }
        let before = placement.near_bytes();
        apply_plan(&plan, &mut placement, &cfg.model).unwrap();
        prop_assert_eq!(placement.near_bytes(), before + plan.total_bytes);
    }

    #[test]
    fn batches_do_not_depend_on_chunking(seed in any::<u64>(), cut in 1u64..40) {
        let s = Scenario {
            name: "p".into(),
            heap_bytes: 256 * MIB,
            heap_base: 4 * GIB,
            phases: vec![
                Phase { background_fraction: 0.2, ..Phase::uniform(20, vec![ByteRange::with_len(MIB, 8 * MIB)]) },
                Phase::uniform(20, vec![ByteRange::with_len(100 * MIB, 2 * MIB)]),
            ],
            accesses_per_ms: 37,
            rng_seed: seed,
        };
        let whole = generate_batch(&s, 0, 40).unwrap();
        let a = generate_batch(&s, 0, cut).unwrap();
        let b = generate_batch(&s, cut, 40).unwrap();
        prop_assert_eq!(whole.addrs.len(), 40 * 37);
        let joined: Vec<u64> = a.addrs.iter().chain(&b.addrs).copied().collect();
        prop_assert_eq!(&whole.addrs, &joined);
        prop_assert!(whole.addrs.iter().all(|&x| s.heap_range().contains(x)));
        // second phase is uniform over its hot range only
        let hot = ByteRange::with_len(4 * GIB + 100 * MIB, 2 * MIB);
        prop_assert!(whole.span(20, 40).iter().all(|&x| hot.contains(x)));
    }
}

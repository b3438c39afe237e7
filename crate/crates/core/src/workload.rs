//! Synthetic access streams in the style of MASIM microbenchmarks and
//! key-value load generators.
//!
//! Time is split into 1 ms slots. Each slot draws its addresses from its own
//! ChaCha stream (`stream = slot index`), so a batch for any window is the
//! concatenation of its slots no matter how the window is chunked.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::pagetable::VA_LIMIT;
use crate::par::Execution;
use crate::units::{self, de_size, de_size_opt, normalize, ByteRange, GIB, MIB, PAGE_SIZE, TIB};

/// Accesses per simulated millisecond used by every built-in scenario.
pub const DEFAULT_ACCESSES_PER_MS: u64 = 2000;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Clone, Debug, PartialEq)]
pub enum Distribution {
    /// Uniform over the union of the phase's hot ranges.
    UniformInHot,
    /// Key index drawn from a normal distribution centered mid-keyspace; each
    /// key owns a contiguous `key_bytes` extent of the heap.
    GaussianKeys { std_dev_keys: f64, key_bytes: u64 },
    /// `hot_op_fraction` of accesses uniform over the hot ranges, the rest
    /// uniform over the remainder of the heap.
    Hotspot { hot_fraction: f64, hot_op_fraction: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phase {
    pub duration_ms: u64,
    /// Heap-relative hot ranges.
    pub hot_ranges: Vec<ByteRange>,
    pub distribution: Distribution,
    /// Fraction of accesses spread uniformly over the whole heap.
    pub background_fraction: f64,
}

impl Phase {
    pub fn uniform(duration_ms: u64, hot_ranges: Vec<ByteRange>) -> Self {
        Self { duration_ms, hot_ranges, distribution: Distribution::UniformInHot, background_fraction: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub heap_bytes: u64,
    /// Virtual address where the heap is mapped.
    pub heap_base: u64,
    pub phases: Vec<Phase>,
    pub accesses_per_ms: u64,
    pub rng_seed: u64,
}

impl Scenario {
    pub fn heap_range(&self) -> ByteRange {
        ByteRange::with_len(self.heap_base, self.heap_bytes)
    }

    pub fn total_duration_ms(&self) -> u64 {
        self.phases.iter().map(|p| p.duration_ms).sum()
    }

    /// Start times of every phase after the first.
    pub fn phase_boundaries_ms(&self) -> Vec<u64> {
        self.phases
            .iter()
            .scan(0, |t, p| {
                *t += p.duration_ms;
                Some(*t)
            })
            .take(self.phases.len().saturating_sub(1))
            .collect()
    }

    /// Index of the phase active at `t_ms`; times past the end map to the last phase.
    pub fn phase_index_at(&self, t_ms: u64) -> usize {
        let mut end = 0;
        for (i, p) in self.phases.iter().enumerate() {
            end += p.duration_ms;
            if t_ms < end {
                return i;
            }
        }
        self.phases.len() - 1
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: String| Err(Error::config(field, msg));
        if self.heap_bytes == 0 {
            return fail("heap", "heap size must be positive".into());
        }
        if self.heap_bytes % PAGE_SIZE != 0 || self.heap_base % PAGE_SIZE != 0 {
            return fail("heap", "heap base and size must be 4 KiB aligned".into());
        }
        if self.heap_base.checked_add(self.heap_bytes).is_none_or(|e| e > VA_LIMIT) {
            return fail("heap", "heap exceeds the 48-bit address space".into());
        }
        if self.phases.is_empty() {
            return fail("phases", "at least one phase is required".into());
        }
        if self.accesses_per_ms == 0 {
            return fail("accesses_per_ms", "access rate must be positive".into());
        }
        for (i, p) in self.phases.iter().enumerate() {
            let field = format!("phases[{i}]");
            if p.duration_ms == 0 {
                return fail(&field, "duration must be positive".into());
            }
            if !(0.0..=1.0).contains(&p.background_fraction) {
                return fail(&field, "background_fraction must lie in [0, 1]".into());
            }
            let norm = normalize(&p.hot_ranges);
            if units::total_len(&norm) != units::total_len(&p.hot_ranges) {
                return fail(&field, "hot ranges overlap".into());
            }
            if p.hot_ranges.iter().any(|r| r.is_empty() || r.end > self.heap_bytes) {
                return fail(&field, "hot ranges must be non-empty and inside the heap".into());
            }
            match p.distribution {
                Distribution::UniformInHot if p.hot_ranges.is_empty() && p.background_fraction < 1.0 => {
                    return fail(&field, "uniform distribution needs at least one hot range".into());
                }
                Distribution::GaussianKeys { std_dev_keys, key_bytes } => {
                    if key_bytes == 0 || key_bytes > self.heap_bytes || !(std_dev_keys > 0.0) {
                        return fail(&field, "gaussian needs positive std_dev_keys and 0 < key_size <= heap".into());
                    }
                }
                Distribution::Hotspot { hot_fraction, hot_op_fraction } => {
                    if !(0.0..=1.0).contains(&hot_fraction) || !(0.0..=1.0).contains(&hot_op_fraction) {
                        return fail(&field, "hotspot fractions must lie in [0, 1]".into());
                    }
                    if p.hot_ranges.is_empty() {
                        return fail(&field, "hotspot distribution needs hot ranges".into());
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Accesses generated for `[t_start_ms, t_end_ms)`, grouped in 1 ms slots of
/// `per_ms` addresses each.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AccessBatch {
    pub t_start_ms: u64,
    pub t_end_ms: u64,
    pub per_ms: usize,
    pub addrs: Vec<u64>,
}

impl AccessBatch {
    /// Accesses issued during `[from_ms, to_ms)`, which must lie inside the batch window.
    pub fn span(&self, from_ms: u64, to_ms: u64) -> &[u64] {
        debug_assert!(self.t_start_ms <= from_ms && from_ms <= to_ms && to_ms <= self.t_end_ms);
        let lo = (from_ms - self.t_start_ms) as usize * self.per_ms;
        let hi = (to_ms - self.t_start_ms) as usize * self.per_ms;
        &self.addrs[lo..hi]
    }

    pub fn len(&self) -> usize {
        self.addrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.addrs.is_empty()
    }
}

/// Picks uniformly over a union of disjoint ranges.
#[derive(Clone, Debug)]
struct RangeUnion {
    ranges: Vec<ByteRange>,
    /// Cumulative lengths, `prefix[i]` = bytes before `ranges[i]`.
    prefix: Vec<u64>,
    total: u64,
}

impl RangeUnion {
    fn new(ranges: Vec<ByteRange>) -> Self {
        let mut prefix = Vec::with_capacity(ranges.len());
        let mut total = 0;
        for r in &ranges {
            prefix.push(total);
            total += r.len();
        }
        Self { ranges, prefix, total }
    }

    #[inline]
    fn sample(&self, rng: &mut impl Rng) -> u64 {
        let u = rng.random_range(0..self.total);
        if let [only] = self.ranges.as_slice() {
            return only.start + u;
        }
        let i = self.prefix.partition_point(|&p| p <= u) - 1;
        self.ranges[i].start + (u - self.prefix[i])
    }
}

#[derive(Clone, Debug)]
enum Sampler {
    Hot(RangeUnion),
    Gaussian { normal: Normal<f64>, keys: u64, key_bytes: u64 },
    Hotspot { hot: RangeUnion, cold: Option<RangeUnion>, hot_op_fraction: f64 },
}

#[derive(Clone, Debug)]
struct PhaseSampler {
    sampler: Option<Sampler>,
    heap: u64,
    background: f64,
}

impl PhaseSampler {
    fn new(heap: u64, phase: &Phase) -> Self {
        let hot = normalize(&phase.hot_ranges);
        let sampler = match phase.distribution {
            Distribution::UniformInHot if hot.is_empty() => None,
            Distribution::UniformInHot => Some(Sampler::Hot(RangeUnion::new(hot))),
            Distribution::GaussianKeys { std_dev_keys, key_bytes } => {
                let keys = heap / key_bytes;
                let normal = Normal::new(keys as f64 / 2.0, std_dev_keys).expect("validated std dev");
                Some(Sampler::Gaussian { normal, keys, key_bytes })
            }
            Distribution::Hotspot { hot_op_fraction, .. } => {
                let cold = units::subtract(&[ByteRange::new(0, heap)], &hot);
                Some(Sampler::Hotspot {
                    hot: RangeUnion::new(hot),
                    cold: (!cold.is_empty()).then(|| RangeUnion::new(cold)),
                    hot_op_fraction,
                })
            }
        };
        Self { sampler, heap, background: phase.background_fraction }
    }

    #[inline]
    fn sample(&self, rng: &mut impl Rng) -> u64 {
        let sampler = match &self.sampler {
            Some(s) if self.background == 0.0 || rng.random::<f64>() >= self.background => s,
            _ => return rng.random_range(0..self.heap),
        };
        match sampler {
            Sampler::Hot(u) => u.sample(rng),
            Sampler::Gaussian { normal, keys, key_bytes } => {
                let key = normal.sample(rng).round().clamp(0.0, (*keys - 1) as f64) as u64;
                key * key_bytes + rng.random_range(0..*key_bytes)
            }
            Sampler::Hotspot { hot, cold, hot_op_fraction } => match cold {
                Some(cold) if rng.random::<f64>() >= *hot_op_fraction => cold.sample(rng),
                _ => hot.sample(rng),
            },
        }
    }
}

/// Reusable generator for one scenario.
#[derive(Clone, Debug)]
pub struct BatchGenerator {
    phases: Vec<PhaseSampler>,
    phase_ends: Vec<u64>,
    heap_base: u64,
    per_ms: usize,
    seed: u64,
    execution: Execution,
}

impl BatchGenerator {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let phase_ends = scenario
            .phases
            .iter()
            .scan(0, |t, p| {
                *t += p.duration_ms;
                Some(*t)
            })
            .collect();
        Ok(Self {
            phases: scenario.phases.iter().map(|p| PhaseSampler::new(scenario.heap_bytes, p)).collect(),
            phase_ends,
            heap_base: scenario.heap_base,
            per_ms: scenario.accesses_per_ms as usize,
            seed: scenario.rng_seed,
            execution: Execution::default(),
        })
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn total_duration_ms(&self) -> u64 {
        *self.phase_ends.last().expect("validated")
    }

    fn fill_slot(&self, slot_ms: u64, out: &mut [u64]) {
        let phase_idx = self.phase_ends.partition_point(|&end| end <= slot_ms).min(self.phases.len() - 1);
        let phase = &self.phases[phase_idx];
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(slot_ms);
        for a in out {
            *a = self.heap_base + phase.sample(&mut rng);
        }
    }

    /// Fills `batch` with the accesses of `[t_start_ms, t_end_ms)`, reusing its buffer.
    pub fn fill(&self, t_start_ms: u64, t_end_ms: u64, batch: &mut AccessBatch) -> Result<()> {
        if t_end_ms <= t_start_ms {
            return Err(Error::InvalidArgument(format!("empty window [{t_start_ms}, {t_end_ms})")));
        }
        if t_end_ms > self.total_duration_ms() {
            return Err(Error::InvalidArgument(format!(
                "window end {t_end_ms} ms beyond scenario end {} ms",
                self.total_duration_ms()
            )));
        }
        let slots = (t_end_ms - t_start_ms) as usize;
        batch.t_start_ms = t_start_ms;
        batch.t_end_ms = t_end_ms;
        batch.per_ms = self.per_ms;
        batch.addrs.resize(slots * self.per_ms, 0);
        crate::par::for_each_chunk_mut(self.execution, &mut batch.addrs, self.per_ms, |i, chunk| {
            self.fill_slot(t_start_ms + i as u64, chunk);
        });
        Ok(())
    }
}

/// Deterministic access batch for `[t_start_ms, t_end_ms)`.
pub fn generate_batch(scenario: &Scenario, t_start_ms: u64, t_end_ms: u64) -> Result<AccessBatch> {
    let mut batch = AccessBatch::default();
    BatchGenerator::new(scenario)?.fill(t_start_ms, t_end_ms, &mut batch)?;
    Ok(batch)
}

/// Absolute hot ranges of the phase active at `t_ms`.
pub fn ground_truth_hot(scenario: &Scenario, t_ms: u64) -> Vec<ByteRange> {
    let phase = &scenario.phases[scenario.phase_index_at(t_ms)];
    let hot: Vec<ByteRange> = phase.hot_ranges.iter().map(|r| r.offset(scenario.heap_base)).collect();
    normalize(&hot)
}

fn align_down(v: u64, to: u64) -> u64 {
    v - v % to
}

/// Hot range covering 10% of the heap, placed at 40% of it, both 2 MiB aligned.
fn subtb(name: &str, heap: u64) -> Scenario {
    let hot_len = align_down(heap / 10, 2 * MIB);
    let hot_off = align_down(heap / 10 * 4, 2 * MIB);
    Scenario {
        name: name.into(),
        heap_bytes: heap,
        heap_base: 0,
        phases: vec![Phase::uniform(60_000, vec![ByteRange::with_len(hot_off, hot_len)])],
        accesses_per_ms: DEFAULT_ACCESSES_PER_MS,
        rng_seed: DEFAULT_SEED,
    }
}

/// Named scenarios reproducing the microbenchmarks and key-value workloads.
pub fn builtin_scenarios() -> Vec<Scenario> {
    let hot10 = |off_gib: u64| ByteRange::with_len(off_gib * GIB, 10 * GIB);
    let multi_phase = Scenario {
        name: "multi_phase_5tb".into(),
        heap_bytes: 5 * TIB,
        heap_base: 0,
        phases: vec![
            Phase::uniform(80_000, vec![hot10(1000)]),
            Phase::uniform(80_000, vec![hot10(3200)]),
            Phase::uniform(80_000, vec![hot10(2200), hot10(4300)]),
        ],
        accesses_per_ms: DEFAULT_ACCESSES_PER_MS,
        rng_seed: DEFAULT_SEED,
    };
    let needle = Scenario {
        name: "needle_5tb".into(),
        heap_bytes: 5 * TIB,
        heap_base: 0,
        phases: vec![Phase::uniform(240_000, vec![ByteRange::with_len(2900 * GIB + 10 * MIB, 50 * MIB)])],
        accesses_per_ms: DEFAULT_ACCESSES_PER_MS,
        rng_seed: DEFAULT_SEED,
    };
    let hotspot_heap = 2 * TIB;
    // The hot 1% is spread over the heap in evenly spaced clusters, as a slab
    // allocator interleaves hot and cold items.
    let clusters = 20;
    let cluster_len = align_down(hotspot_heap / 100 / clusters, 2 * MIB);
    let stride = hotspot_heap / clusters;
    let hotspot = Scenario {
        name: "hotspot_2tb".into(),
        heap_bytes: hotspot_heap,
        heap_base: 0,
        phases: vec![Phase {
            duration_ms: 450_000,
            hot_ranges: (0..clusters)
                .map(|i| ByteRange::with_len(align_down(i * stride + stride / 2, 2 * MIB), cluster_len))
                .collect(),
            distribution: Distribution::Hotspot { hot_fraction: 0.01, hot_op_fraction: 0.99 },
            background_fraction: 0.0,
        }],
        accesses_per_ms: DEFAULT_ACCESSES_PER_MS,
        rng_seed: DEFAULT_SEED,
    };
    let key_bytes = 5 * MIB;
    let keys = 200_000;
    let std_dev_keys = 100.0;
    // Ground truth covers keys within two standard deviations of the mean.
    let hot_keys = 4 * std_dev_keys as u64;
    let gaussian = Scenario {
        name: "gaussian_1tb".into(),
        heap_bytes: keys * key_bytes,
        heap_base: 0,
        phases: vec![Phase {
            duration_ms: 300_000,
            hot_ranges: vec![ByteRange::with_len((keys / 2 - hot_keys / 2) * key_bytes, hot_keys * key_bytes)],
            distribution: Distribution::GaussianKeys { std_dev_keys, key_bytes },
            background_fraction: 0.0,
        }],
        accesses_per_ms: DEFAULT_ACCESSES_PER_MS,
        rng_seed: DEFAULT_SEED,
    };
    vec![
        multi_phase,
        subtb("subtb_1g", GIB),
        subtb("subtb_10g", 10 * GIB),
        subtb("subtb_100g", 100 * GIB),
        needle,
        hotspot,
        gaussian,
    ]
}

pub fn builtin_scenario(name: &str) -> Option<Scenario> {
    builtin_scenarios().into_iter().find(|s| s.name == name)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    #[serde(deserialize_with = "de_size")]
    heap: u64,
    #[serde(default, deserialize_with = "de_size_opt")]
    heap_base: Option<u64>,
    accesses_per_ms: Option<u64>,
    seed: Option<u64>,
    phases: Vec<PhaseFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PhaseFile {
    duration_ms: u64,
    #[serde(default)]
    hot_ranges: Vec<RangeFile>,
    #[serde(default)]
    distribution: Option<DistributionFile>,
    #[serde(default)]
    background_fraction: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RangeFile {
    #[serde(deserialize_with = "de_size")]
    offset: u64,
    #[serde(deserialize_with = "de_size")]
    len: u64,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum DistributionFile {
    Uniform,
    Gaussian {
        std_dev_keys: f64,
        #[serde(deserialize_with = "de_size")]
        key_size: u64,
    },
    Hotspot {
        hot_fraction: f64,
        hot_op_fraction: f64,
    },
}

/// Parses a TOML scenario description. See the README for the field list.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let scenario = Scenario {
        name: file.name,
        heap_bytes: file.heap,
        heap_base: file.heap_base.unwrap_or(0),
        accesses_per_ms: file.accesses_per_ms.unwrap_or(DEFAULT_ACCESSES_PER_MS),
        rng_seed: file.seed.unwrap_or(DEFAULT_SEED),
        phases: file
            .phases
            .into_iter()
            .map(|p| Phase {
                duration_ms: p.duration_ms,
                hot_ranges: p.hot_ranges.iter().map(|r| ByteRange::with_len(r.offset, r.len)).collect(),
                distribution: match p.distribution.unwrap_or(DistributionFile::Uniform) {
                    DistributionFile::Uniform => Distribution::UniformInHot,
                    DistributionFile::Gaussian { std_dev_keys, key_size } => {
                        Distribution::GaussianKeys { std_dev_keys, key_bytes: key_size }
                    }
                    DistributionFile::Hotspot { hot_fraction, hot_op_fraction } => {
                        Distribution::Hotspot { hot_fraction, hot_op_fraction }
                    }
                },
                background_fraction: p.background_fraction,
            })
            .collect(),
    };
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario_file(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(&text)
}

/// Resolves a built-in name or a path to a scenario file.
pub fn resolve_scenario(name_or_path: &str) -> Result<Scenario> {
    if let Some(s) = builtin_scenario(name_or_path) {
        return Ok(s);
    }
    let path = Path::new(name_or_path);
    if path.exists() {
        return load_scenario_file(path);
    }
    let known: Vec<String> = builtin_scenarios().into_iter().map(|s| s.name).collect();
    Err(Error::config(
        "scenario",
        format!("unknown scenario {name_or_path:?}; built-ins are {}", known.join(", ")),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(name: &str) -> Scenario {
        builtin_scenario(name).unwrap()
    }

    #[test]
    fn catalog_shapes() {
        let names: Vec<String> = builtin_scenarios().into_iter().map(|s| s.name).collect();
        for n in ["multi_phase_5tb", "subtb_1g", "subtb_10g", "subtb_100g", "needle_5tb", "hotspot_2tb", "gaussian_1tb"]
        {
            assert!(names.iter().any(|x| x == n), "{n}");
        }
        let s = scenario("subtb_100g");
        assert_eq!(s.heap_bytes, 100 * GIB);
        assert_eq!(units::total_len(&s.phases[0].hot_ranges), 10 * GIB);

        let m = scenario("multi_phase_5tb");
        assert_eq!(m.phase_boundaries_ms(), vec![80_000, 160_000]);
        assert_eq!(m.total_duration_ms(), 240_000);

        let h = scenario("hotspot_2tb");
        assert_eq!(
            h.phases[0].distribution,
            Distribution::Hotspot { hot_fraction: 0.01, hot_op_fraction: 0.99 }
        );
        for s in builtin_scenarios() {
            s.validate().unwrap();
        }
    }

    #[test]
    fn ground_truth_by_phase() {
        let m = scenario("multi_phase_5tb");
        assert_eq!(ground_truth_hot(&m, 10_000), vec![ByteRange::with_len(1000 * GIB, 10 * GIB)]);
        let p2 = ground_truth_hot(&m, 80_000);
        assert_eq!(p2, vec![ByteRange::with_len(3200 * GIB, 10 * GIB)]);
        assert_eq!(units::intersection_len(&p2, &ground_truth_hot(&m, 0)), 0);
        assert_eq!(ground_truth_hot(&m, 200_000).len(), 2);
        let n = scenario("needle_5tb");
        assert_eq!(units::total_len(&ground_truth_hot(&n, 0)), 50 * MIB);
    }

    #[test]
    fn phase_one_accesses_stay_in_first_hot_range() {
        let m = scenario("multi_phase_5tb");
        let b = generate_batch(&m, 1000, 1010).unwrap();
        assert_eq!(b.len(), 10 * DEFAULT_ACCESSES_PER_MS as usize);
        let hot = ByteRange::with_len(1000 * GIB, 10 * GIB);
        assert!(b.addrs.iter().all(|&a| hot.contains(a)));
    }

    #[test]
    fn batches_are_chunking_invariant() {
        let m = scenario("subtb_1g");
        let whole = generate_batch(&m, 100, 110).unwrap();
        let a = generate_batch(&m, 100, 103).unwrap();
        let b = generate_batch(&m, 103, 110).unwrap();
        assert_eq!(whole.addrs, [a.addrs, b.addrs].concat());
        assert_eq!(whole.span(103, 104), &generate_batch(&m, 103, 104).unwrap().addrs[..]);
        let other_seed = generate_batch(&m.clone().with_seed(7), 100, 110).unwrap();
        assert_ne!(whole.addrs, other_seed.addrs);
    }

    #[test]
    fn window_errors() {
        let m = scenario("subtb_1g");
        assert!(generate_batch(&m, 10, 10).is_err());
        assert!(generate_batch(&m, 59_999, 60_001).is_err());
    }

    #[test]
    fn full_heap_hot_range_is_uniform() {
        let s = Scenario {
            name: "flat".into(),
            heap_bytes: 64 * MIB,
            heap_base: 0,
            phases: vec![Phase::uniform(10, vec![ByteRange::new(0, 64 * MIB)])],
            accesses_per_ms: 10_000,
            rng_seed: 3,
        };
        let b = generate_batch(&s, 0, 10).unwrap();
        let mut buckets = [0u32; 8];
        for a in &b.addrs {
            buckets[(a / (8 * MIB)) as usize] += 1;
        }
        // 12_500 expected per bucket; 4 sigma is about 420.
        for c in buckets {
            assert!((12_080..=12_920).contains(&c), "{buckets:?}");
        }
    }

    #[test]
    fn scenario_file_round_trip() {
        let text = r#"
            name = "custom"
            heap = "64GiB"
            accesses_per_ms = 50
            seed = 9

            [[phases]]
            duration_ms = 1000
            hot_ranges = [{ offset = "1GiB", len = "2GiB" }]

            [[phases]]
            duration_ms = 500
            background_fraction = 0.1
            distribution = { kind = "hotspot", hot_fraction = 0.01, hot_op_fraction = 0.99 }
            hot_ranges = [{ offset = 0, len = "640MiB" }]
        "#;
        let s = parse_scenario(text).unwrap();
        assert_eq!(s.heap_bytes, 64 * GIB);
        assert_eq!(s.accesses_per_ms, 50);
        assert_eq!(s.phases[0].hot_ranges, vec![ByteRange::with_len(GIB, 2 * GIB)]);
        assert_eq!(s.phases[1].background_fraction, 0.1);

        let bad = text.replace("\"2GiB\"", "\"200GiB\"");
        assert!(matches!(parse_scenario(&bad), Err(Error::Config { .. })));
        assert!(parse_scenario("name = 3").is_err());
    }

    #[test]
    fn unknown_scenario_names_builtins() {
        let err = resolve_scenario("no_such_thing").unwrap_err().to_string();
        assert!(err.contains("multi_phase_5tb"), "{err}");
    }
}

//! Named reproduction scripts. Each script runs its scenarios over several
//! seeds, reduces every per-seed statistic to its median and checks the result
//! against one criterion's thresholds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engines::{
    candidate_entries_bounded, candidate_entries_flex, decompose, linear_scan_model, linear_scan_step, CoverPiece,
    EngineKind, FlexThresholds, ScanCursor, ScanMode, ScanPass, ScanThrottle, Variant,
};
use crate::error::{Error, Result};
use crate::harness::{run, RunConfig, RunResult};
use crate::metrics::precision_recall;
use crate::pagetable::{EntryRef, Level, SparsePageTable};
use crate::par::Execution;
use crate::tiering::TieringConfig;
use crate::units::{ByteRange, GIB, MIB, PAGE_SIZE, TIB};
use crate::workload::{generate_batch, resolve_scenario, Phase, Scenario};

pub const DEFAULT_SEEDS: [u64; 3] = [1, 2, 3];

/// Tiering runs stop here instead of at the end of the scenario.
pub const TIERING_RUN_MS: u64 = 330_000;
/// Trailing span averaged for steady-state throughput.
pub const STEADY_STATE_MS: u64 = 100_000;
/// Wall-clock budget for the multi-phase runs over all seeds.
pub const MULTI_PHASE_BUDGET_S: f64 = 600.0;

const REGION_ENGINES: [EngineKind; 6] = [
    EngineKind::DamonMod,
    EngineKind::DamonAgg,
    EngineKind::PmuMod,
    EngineKind::PmuAgg,
    EngineKind::TelescopeBounded,
    EngineKind::TelescopeFlex,
];
const NEEDLE_ENGINES: [EngineKind; 4] =
    [EngineKind::DamonMod, EngineKind::DamonAgg, EngineKind::TelescopeBounded, EngineKind::TelescopeFlex];
const TIERING_ENGINES: [EngineKind; 3] = [EngineKind::TelescopeFlex, EngineKind::DamonMod, EngineKind::None];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Script {
    pub name: &'static str,
    pub criterion: &'static str,
    pub scenarios: &'static [&'static str],
    pub summary: &'static str,
}

pub const SCRIPTS: [Script; 9] = [
    Script {
        name: "multi_phase",
        criterion: "A1",
        scenarios: &["multi_phase_5tb"],
        summary: "per-phase precision/recall of every sampling engine on a three-phase 5 TiB heap",
    },
    Script {
        name: "subtb",
        criterion: "A2",
        scenarios: &["subtb_1g", "subtb_10g", "subtb_100g"],
        summary: "steady-state accuracy as the hot region grows from 100 MiB to 10 GiB",
    },
    Script {
        name: "needle",
        criterion: "A3",
        scenarios: &["needle_5tb"],
        summary: "a 50 MiB hot range in a 5 TiB heap",
    },
    Script {
        name: "bitflips",
        criterion: "A4",
        scenarios: &["multi_phase_5tb"],
        summary: "ACCESSED-bit resets, absolute and per covered GiB",
    },
    Script {
        name: "scan_model",
        criterion: "A5",
        scenarios: &[],
        summary: "closed-form linear scan time and utilization",
    },
    Script {
        name: "tiering",
        criterion: "A6",
        scenarios: &["hotspot_2tb"],
        summary: "throughput with report-driven migration after warmup",
    },
    Script {
        name: "oracle",
        criterion: "A7",
        scenarios: &[],
        summary: "page table, linear scan and precision/recall against brute force on a 16 MiB heap",
    },
    Script {
        name: "geometry",
        criterion: "A8",
        scenarios: &[],
        summary: "bounded and flex level selection on the worked examples",
    },
    Script {
        name: "determinism",
        criterion: "A9",
        scenarios: &["subtb_1g"],
        summary: "byte-identical CSV output for repeated runs",
    },
];

pub fn script(name: &str) -> Result<&'static Script> {
    SCRIPTS.iter().find(|s| s.name == name).ok_or_else(|| {
        let names: Vec<&str> = SCRIPTS.iter().map(|s| s.name).collect();
        Error::config("repro", format!("unknown script {name:?}; available: all, {}", names.join(", ")))
    })
}

/// One threshold test inside a criterion.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn at_least(label: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { label: label.into(), passed: value >= bound, detail: format!("{value:.4} >= {bound}") }
    }

    fn at_most(label: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { label: label.into(), passed: value <= bound, detail: format!("{value:.4} <= {bound}") }
    }

    fn within(label: impl Into<String>, value: f64, target: f64, rel: f64) -> Self {
        let passed = ((value - target) / target).abs() <= rel;
        Self { label: label.into(), passed, detail: format!("{value:.2} within {:.0}% of {target}", rel * 100.0) }
    }

    fn holds(label: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { label: label.into(), passed, detail: detail.into() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub criterion: &'static str,
    pub script: &'static str,
    pub checks: Vec<Check>,
}

impl Outcome {
    fn new(script: &'static str, checks: Vec<Check>) -> Self {
        let criterion = SCRIPTS.iter().find(|s| s.name == script).map_or("?", |s| s.criterion);
        Self { criterion, script, checks }
    }

    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// `A1 PASS multi_phase (12/12 checks)`.
    pub fn line(&self) -> String {
        let ok = self.checks.iter().filter(|c| c.passed).count();
        format!(
            "{} {} {} ({ok}/{} checks)",
            self.criterion,
            if self.passed() { "PASS" } else { "FAIL" },
            self.script,
            self.checks.len()
        )
    }
}

#[derive(Clone, Debug)]
pub struct ReproOptions {
    pub seeds: Vec<u64>,
    pub execution: Execution,
    /// Per-seed CSVs, determinism scratch files and `report.md` go here.
    pub out_dir: Option<PathBuf>,
}

impl Default for ReproOptions {
    fn default() -> Self {
        Self { seeds: DEFAULT_SEEDS.to_vec(), execution: Execution::default(), out_dir: None }
    }
}

/// Median of the values; NaN marks an undefined statistic and sorts last.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn med(runs: &[RunResult], f: impl Fn(&RunResult) -> Option<f64>) -> f64 {
    median(&runs.iter().map(|r| f(r).unwrap_or(f64::NAN)).collect::<Vec<_>>())
}

fn phase_stat(r: &RunResult, tag: &str, phase: usize, recall: bool) -> Option<f64> {
    let p = r.engine(tag)?.phase(phase)?;
    if recall {
        p.mean_recall
    } else {
        p.mean_precision
    }
}

/// Runs of one scenario over several seeds, with the time they took.
#[derive(Clone, Debug)]
pub struct SeededRuns {
    pub runs: Vec<RunResult>,
    pub elapsed_s: f64,
}

/// Runs `cfg` once per seed. With `out_dir`, each seed writes under `out_dir/seed-<n>`.
pub fn run_seeds(cfg: &RunConfig, seeds: &[u64], out_dir: Option<&Path>) -> Result<SeededRuns> {
    let t0 = Instant::now();
    let runs = seeds
        .iter()
        .map(|&s| {
            let cfg = RunConfig {
                seed: Some(s),
                out_dir: out_dir.map(|d| d.join(format!("seed-{s}"))),
                ..cfg.clone()
            };
            run(&cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SeededRuns { runs, elapsed_s: t0.elapsed().as_secs_f64() })
}

/// Run configuration a script uses for one of its scenarios.
pub fn script_config(scenario: &str, execution: Execution) -> Result<RunConfig> {
    let s = resolve_scenario(scenario)?;
    let mut cfg = match scenario {
        "needle_5tb" => RunConfig::new(s, NEEDLE_ENGINES.to_vec()),
        "hotspot_2tb" => {
            let mut c = RunConfig::new(s, TIERING_ENGINES.to_vec());
            c.tiering = Some(TieringConfig::default());
            c.duration_ms = Some(TIERING_RUN_MS);
            c
        }
        _ => RunConfig::new(s, REGION_ENGINES.to_vec()),
    };
    cfg.execution = execution;
    Ok(cfg)
}

/// A1: telescope accurate in every phase, DAMON blind, PMU precise but partial.
pub fn evaluate_multi_phase(runs: &SeededRuns) -> Outcome {
    let phases = runs.runs.first().and_then(|r| r.engines.first()).map_or(0, |e| e.phases.len());
    let mut checks = Vec::new();
    for phase in 0..phases {
        let n = phase + 1;
        for tag in ["telescope-bnd", "telescope-flx"] {
            let p = med(&runs.runs, |r| phase_stat(r, tag, phase, false));
            let rc = med(&runs.runs, |r| phase_stat(r, tag, phase, true));
            checks.push(Check::at_least(format!("{tag} phase {n} precision"), p, 0.85));
            checks.push(Check::at_least(format!("{tag} phase {n} recall"), rc, 0.85));
        }
        for tag in ["damon-mod", "damon-agg"] {
            let rc = med(&runs.runs, |r| phase_stat(r, tag, phase, true));
            checks.push(Check::at_most(format!("{tag} phase {n} recall"), rc, 0.1));
        }
        let p = med(&runs.runs, |r| phase_stat(r, "pmu-agg", phase, false));
        let rc = med(&runs.runs, |r| phase_stat(r, "pmu-agg", phase, true));
        checks.push(Check::at_least(format!("pmu-agg phase {n} precision"), p, 0.8));
        checks.push(Check::at_most(format!("pmu-agg phase {n} recall"), rc, 0.2));
    }
    checks.push(Check::holds("three phases", phases == 3, format!("{phases} phases")));
    checks.push(Check::at_most("wall time over all seeds (s)", runs.elapsed_s, MULTI_PHASE_BUDGET_S));
    Outcome::new("multi_phase", checks)
}

/// A2. Takes the runs of subtb_1g, subtb_10g and subtb_100g in that order.
pub fn evaluate_subtb(small: &SeededRuns, mid: &SeededRuns, large: &SeededRuns) -> Outcome {
    let mut checks = Vec::new();
    for tag in REGION_ENGINES.map(EngineKind::tag) {
        let p = med(&small.runs, |r| phase_stat(r, tag, 0, false));
        let rc = med(&small.runs, |r| phase_stat(r, tag, 0, true));
        checks.push(Check::at_least(format!("subtb_1g {tag} precision"), p, 0.85));
        checks.push(Check::at_least(format!("subtb_1g {tag} recall"), rc, 0.85));
    }
    for tag in ["damon-mod", "damon-agg"] {
        let rc = med(&large.runs, |r| phase_stat(r, tag, 0, true));
        checks.push(Check::at_most(format!("subtb_100g {tag} recall"), rc, 0.1));
    }
    for tag in ["telescope-bnd", "telescope-flx"] {
        let p = med(&large.runs, |r| phase_stat(r, tag, 0, false));
        let rc = med(&large.runs, |r| phase_stat(r, tag, 0, true));
        checks.push(Check::at_least(format!("subtb_100g {tag} precision"), p, 0.85));
        checks.push(Check::at_least(format!("subtb_100g {tag} recall"), rc, 0.85));
    }
    for tag in ["pmu-mod", "pmu-agg"] {
        let r: Vec<f64> = [small, mid, large].iter().map(|s| med(&s.runs, |r| phase_stat(r, tag, 0, true))).collect();
        checks.push(Check::holds(
            format!("{tag} recall degrades 1g -> 10g -> 100g"),
            r[0] >= r[1] && r[1] >= r[2] && r[0] > r[2],
            format!("{:.4} -> {:.4} -> {:.4}", r[0], r[1], r[2]),
        ));
    }
    Outcome::new("subtb", checks)
}

/// A3: telescope finds the needle, DAMON reports nothing.
pub fn evaluate_needle(runs: &SeededRuns) -> Outcome {
    let mut checks = Vec::new();
    for tag in ["telescope-bnd", "telescope-flx"] {
        let p = med(&runs.runs, |r| phase_stat(r, tag, 0, false));
        let rc = med(&runs.runs, |r| phase_stat(r, tag, 0, true));
        checks.push(Check::at_least(format!("{tag} precision"), p, 0.8));
        checks.push(Check::at_least(format!("{tag} recall"), rc, 0.8));
    }
    for tag in ["damon-mod", "damon-agg"] {
        let p = med(&runs.runs, |r| phase_stat(r, tag, 0, false));
        let rc = med(&runs.runs, |r| phase_stat(r, tag, 0, true));
        checks.push(Check::holds(format!("{tag} precision = recall = 0"), p == 0.0 && rc == 0.0, format!("{p} / {rc}")));
        let silent = med(&runs.runs, |r| {
            let w = &r.engine(tag)?.windows;
            (!w.is_empty()).then(|| w.iter().filter(|w| w.reported_bytes == 0).count() as f64 / w.len() as f64)
        });
        checks.push(Check::at_least(format!("{tag} windows with no hot region"), silent, 0.95));
    }
    Outcome::new("needle", checks)
}

/// A4: telescope resets fewer bits, and far fewer per GiB of address space covered.
pub fn evaluate_bitflips(runs: &SeededRuns) -> Outcome {
    let mut checks = Vec::new();
    for t in ["telescope-bnd", "telescope-flx"] {
        for d in ["damon-mod", "damon-agg"] {
            let ratio = med(&runs.runs, |r| Some(r.engine(d)?.flips_per_covered_gib()? / r.engine(t)?.flips_per_covered_gib()?));
            checks.push(Check::at_least(format!("{d} / {t} flips per covered GiB"), ratio, 10.0));
            let tf = med(&runs.runs, |r| Some(r.engine(t)?.total.bit_flips as f64));
            let df = med(&runs.runs, |r| Some(r.engine(d)?.total.bit_flips as f64));
            checks.push(Check::holds(format!("{t} flips <= {d} flips"), tf <= df, format!("{tf:.0} vs {df:.0}")));
        }
    }
    Outcome::new("bitflips", checks)
}

/// A5: analytic scan times and utilization ordering.
pub fn evaluate_scan_model() -> Result<Outcome> {
    let heap = 5 * TIB;
    let moderate = linear_scan_model(heap, &ScanThrottle::new(ScanMode::Moderate))?;
    let conservative = linear_scan_model(heap, &ScanThrottle::new(ScanMode::Conservative))?;
    let aggressive = linear_scan_model(heap, &ScanThrottle::new(ScanMode::Aggressive))?;
    let mut checks = vec![
        Check::within("aggressive active time, 5 TiB (s)", aggressive.scan_time_s, 110.0, 0.01),
        Check::within("moderate scan time, 5 TiB (s)", moderate.scan_time_s, 314.8, 0.01),
        Check::within("conservative scan time, 5 TiB (s)", conservative.scan_time_s, 2158.0, 0.01),
    ];
    for (label, heap) in [("100 GiB", 100 * GIB), ("1 TiB", TIB), ("5 TiB", 5 * TIB)] {
        let u = |m| linear_scan_model(heap, &ScanThrottle::new(m)).map(|s| s.cpu_utilization);
        let (c, m, a) = (u(ScanMode::Conservative)?, u(ScanMode::Moderate)?, u(ScanMode::Aggressive)?);
        checks.push(Check::holds(
            format!("utilization conservative < moderate < aggressive, {label}"),
            c < m && m < a,
            format!("{c:.4} < {m:.4} < {a:.4}"),
        ));
    }
    Ok(Outcome::new("scan_model", checks))
}

/// A6: telescope-driven migration beats both the baseline and DAMON.
pub fn evaluate_tiering(runs: &SeededRuns) -> Outcome {
    let steady = |r: &RunResult, tag: &str| r.engine(tag)?.mean_throughput_since(r.end_ms.saturating_sub(STEADY_STATE_MS));
    let vs_base = med(&runs.runs, |r| Some(steady(r, "telescope-flx")? / steady(r, "none")?));
    let vs_damon = med(&runs.runs, |r| Some(steady(r, "telescope-flx")? / steady(r, "damon-mod")?));
    let damon_bytes = med(&runs.runs, |r| Some(r.engine("damon-mod")?.migrated_bytes as f64));
    let checks = vec![
        Check::at_least("telescope-flx / no-migration steady throughput", vs_base, 1.2),
        Check::at_least("telescope-flx / damon-mod steady throughput", vs_damon, 1.15),
        Check::holds("damon-mod migrates nothing", damon_bytes == 0.0, format!("{damon_bytes} bytes")),
    ];
    Outcome::new("tiering", checks)
}

/// Scenario used by the brute-force comparisons: 16 MiB straddling a PUD
/// boundary, 10^4 accesses.
pub fn oracle_scenario(seed: u64) -> Scenario {
    Scenario {
        name: "oracle_16m".into(),
        heap_bytes: 16 * MIB,
        heap_base: GIB - 6 * MIB,
        phases: vec![Phase {
            background_fraction: 0.3,
            ..Phase::uniform(200, vec![ByteRange::with_len(4 * MIB, 3 * MIB)])
        }],
        accesses_per_ms: 50,
        rng_seed: seed,
    }
}

fn entries_over(range: ByteRange, level: Level) -> impl Iterator<Item = EntryRef> {
    let cov = level.coverage();
    (range.start / cov..range.end.div_ceil(cov)).map(move |i| EntryRef::new(level, i))
}

/// A7: exact agreement with brute-force recomputation.
pub fn evaluate_oracle(seed: u64) -> Result<Outcome> {
    let scenario = oracle_scenario(seed);
    let heap = scenario.heap_range();
    let batch = generate_batch(&scenario, 0, 200)?;
    let (first, second) = batch.addrs.split_at(batch.addrs.len() / 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // (a) bits at every level after a replay, a round of random resets and a second replay
    let mut pt = SparsePageTable::new();
    pt.map_range(heap.start, heap.len())?;
    pt.record_batch(first)?;
    let mut cleared = Vec::new();
    for level in Level::TOP_DOWN {
        for e in entries_over(heap, level) {
            if rng.random_bool(0.5) {
                pt.clear_accessed(e)?;
                cleared.push(e);
            }
        }
    }
    pt.record_batch(second)?;
    let mut mismatches = 0;
    let mut entries = 0;
    for level in Level::TOP_DOWN {
        for e in entries_over(heap, level) {
            let span = e.va_range();
            let late = second.iter().any(|&a| span.contains(a));
            let early = first.iter().any(|&a| span.contains(a));
            let expect = late || (early && !cleared.contains(&e));
            entries += 1;
            if pt.test_accessed(e)? != expect {
                mismatches += 1;
            }
        }
    }
    let mut checks = vec![Check::holds(
        "page-table bits at all levels",
        mismatches == 0,
        format!("{mismatches} mismatches over {entries} entries, {} accesses", batch.addrs.len()),
    )];

    // (b) one clear pass, the accesses, one collect pass
    let mut pt = SparsePageTable::new();
    pt.map_range(heap.start, heap.len())?;
    pt.record_batch(first)?;
    let mut cursor = ScanCursor::default();
    linear_scan_step(&mut pt, &mut cursor, heap.len());
    pt.record_batch(second)?;
    let step = linear_scan_step(&mut pt, &mut cursor, heap.len());
    let mut touched: Vec<u64> = second.iter().map(|a| a / PAGE_SIZE).collect();
    touched.sort_unstable();
    touched.dedup();
    let hot = step.completed.last().cloned().unwrap_or_default();
    checks.push(Check::holds(
        "linear-scan hot set equals touched pages",
        hot == touched && cursor.pass == ScanPass::Clear,
        format!("{} scanned hot pages, {} touched", hot.len(), touched.len()),
    ));

    // (c) random page-aligned reports and truths against a page bitmap
    let pages = heap.len() / PAGE_SIZE;
    let random_ranges = |rng: &mut ChaCha8Rng| -> Vec<ByteRange> {
        (0..rng.random_range(0..6))
            .map(|_| {
                let a = rng.random_range(0..pages);
                let b = rng.random_range(a..=pages.min(a + 600));
                ByteRange::new(heap.start + a * PAGE_SIZE, heap.start + b * PAGE_SIZE)
            })
            .collect()
    };
    let mut bad = 0;
    let trials = 500;
    for _ in 0..trials {
        let (rep, truth) = (random_ranges(&mut rng), random_ranges(&mut rng));
        let bitmap = |rs: &[ByteRange]| {
            let mut bits = vec![false; pages as usize];
            for r in rs {
                for p in (r.start - heap.start) / PAGE_SIZE..(r.end - heap.start) / PAGE_SIZE {
                    bits[p as usize] = true;
                }
            }
            bits
        };
        let (br, bt) = (bitmap(&rep), bitmap(&truth));
        let count = |b: &[bool]| b.iter().filter(|&&x| x).count() as f64;
        let hit = br.iter().zip(&bt).filter(|(a, b)| **a && **b).count() as f64;
        let (nr, nt) = (count(&br), count(&bt));
        let precision = if nr > 0.0 {
            Some(hit / nr)
        } else if nt > 0.0 {
            Some(0.0)
        } else {
            None
        };
        let recall = (nt > 0.0).then(|| hit / nt);
        let got = precision_recall(&rep, &truth);
        if got.precision != precision || got.recall != recall {
            bad += 1;
        }
    }
    checks.push(Check::holds("precision/recall equals page bitmap", bad == 0, format!("{bad} of {trials} trials differ")));
    Ok(Outcome::new("oracle", checks))
}

/// A8: the worked level-selection examples.
pub fn evaluate_geometry() -> Outcome {
    let gib = |a: u64, b: u64| ByteRange::new(a * GIB, b * GIB);
    let flex = FlexThresholds::default();
    let overshoot = |e: EntryRef, r: ByteRange| e.level.coverage() - e.va_range().overlap_len(&r);

    let cover = decompose(gib(0, 600), &Variant::Bounded);
    let expected = vec![
        CoverPiece { level: Level::Pgd, entries: 0..1, covered: gib(0, 512) },
        CoverPiece { level: Level::Pud, entries: 512..600, covered: gib(512, 600) },
    ];
    let (l300, e300) = candidate_entries_bounded(gib(0, 300));
    let r450 = gib(1526, 1976);
    let (l450, e450) = candidate_entries_flex(r450, &flex);
    let over450 = e450.first().map(|&e| overshoot(e, r450));
    let (lf300, ef300) = candidate_entries_flex(gib(0, 300), &flex);
    let checks = vec![
        Check::holds("600 GiB bounded -> PGD 0 + 88 PUD tail", cover.pieces == expected, format!("{:?}", cover.pieces)),
        Check::holds(
            "300 GiB bounded -> PUD, 300 candidates",
            l300 == Level::Pud && e300.len() == 300,
            format!("{l300}, {}", e300.len()),
        ),
        Check::holds(
            "450 GiB flex 15% -> PGD 3, overshoot 72 GiB",
            l450 == Level::Pgd && e450 == [EntryRef::new(Level::Pgd, 3)] && over450 == Some(72 * GIB),
            format!("{l450} {e450:?} overshoot {over450:?}"),
        ),
        Check::holds(
            "300 GiB flex 15% -> PUD fallback",
            (lf300, &ef300) == (Level::Pud, &e300),
            format!("{lf300}, {}", ef300.len()),
        ),
    ];
    Outcome::new("geometry", checks)
}

fn read_tree(root: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
                out.insert(path.strip_prefix(root).expect("walked from root").to_path_buf(), bytes);
            }
        }
    }
    Ok(out)
}

fn tree_check(label: &str, a: &Path, b: &Path) -> Result<Check> {
    let (ta, tb) = (read_tree(a)?, read_tree(b)?);
    let differing: Vec<String> =
        ta.iter().filter(|(k, v)| tb.get(*k) != Some(*v)).map(|(k, _)| k.display().to_string()).collect();
    let same = ta.len() == tb.len() && differing.is_empty() && !ta.is_empty();
    let detail = if same {
        format!("{} files identical", ta.len())
    } else {
        format!("{} vs {} files; differing: {}", ta.len(), tb.len(), differing.join(" "))
    };
    Ok(Check::holds(label, same, detail))
}

/// A9: repeated runs write identical files, and so does the other execution mode.
/// Scratch output goes to `scratch`, which is created and left in place.
pub fn evaluate_determinism(seed: u64, scratch: &Path) -> Result<Outcome> {
    let scenario = resolve_scenario("subtb_1g")?;
    let plain = RunConfig { duration_ms: Some(6_000), ..RunConfig::new(scenario.clone(), EngineKind::ALL.to_vec()) };
    let tiered = RunConfig {
        duration_ms: Some(6_000),
        tiering: Some(TieringConfig { warmup_ms: 2_000, ..TieringConfig::default() }),
        ..RunConfig::new(scenario, vec![EngineKind::TelescopeFlex, EngineKind::DamonMod, EngineKind::None])
    };
    let other = match Execution::default() {
        Execution::Parallel => Execution::Sequential,
        Execution::Sequential => Execution::Parallel,
    };
    for (name, exec) in [("a", Execution::default()), ("b", Execution::default()), ("c", other)] {
        for cfg in [&plain, &tiered] {
            let dir = scratch.join(name).join(if cfg.tiering.is_some() { "tiered" } else { "plain" });
            run(&RunConfig { seed: Some(seed), out_dir: Some(dir), execution: exec, ..cfg.clone() })?;
        }
    }
    let checks = vec![
        tree_check("same seed, same execution mode", &scratch.join("a"), &scratch.join("b"))?,
        tree_check(&format!("{:?} vs {other:?}", Execution::default()), &scratch.join("a"), &scratch.join("c"))?,
    ];
    Ok(Outcome::new("determinism", checks))
}

/// Runs the named script, or every script for `all`, and returns one outcome
/// per criterion. Scenario runs are shared between scripts.
pub fn repro(name: &str, opts: &ReproOptions) -> Result<Vec<Outcome>> {
    let scripts: Vec<&Script> = if name == "all" { SCRIPTS.iter().collect() } else { vec![script(name)?] };
    if opts.seeds.is_empty() {
        return Err(Error::config("repro", "need at least one seed"));
    }
    let mut cache: BTreeMap<&str, SeededRuns> = BTreeMap::new();
    let mut outcomes = Vec::new();
    for s in scripts {
        for &scen in s.scenarios {
            if s.name != "determinism" && !cache.contains_key(scen) {
                let cfg = script_config(scen, opts.execution)?;
                cache.insert(scen, run_seeds(&cfg, &opts.seeds, opts.out_dir.as_deref())?);
            }
        }
        let outcome = match s.name {
            "multi_phase" => evaluate_multi_phase(&cache["multi_phase_5tb"]),
            "subtb" => evaluate_subtb(&cache["subtb_1g"], &cache["subtb_10g"], &cache["subtb_100g"]),
            "needle" => evaluate_needle(&cache["needle_5tb"]),
            "bitflips" => evaluate_bitflips(&cache["multi_phase_5tb"]),
            "scan_model" => evaluate_scan_model()?,
            "tiering" => evaluate_tiering(&cache["hotspot_2tb"]),
            "oracle" => {
                let per_seed = opts.seeds.iter().map(|&s| evaluate_oracle(s)).collect::<Result<Vec<_>>>()?;
                Outcome::new("oracle", per_seed.into_iter().flat_map(|o| o.checks).collect())
            }
            "geometry" => evaluate_geometry(),
            "determinism" => {
                let (scratch, temporary) = match &opts.out_dir {
                    Some(d) => (d.join("determinism"), false),
                    None => (
                        std::env::temp_dir().join(format!("tiersim-determinism-{}-{}", std::process::id(), opts.seeds[0])),
                        true,
                    ),
                };
                if scratch.exists() {
                    fs::remove_dir_all(&scratch).map_err(|e| Error::io(&scratch, e))?;
                }
                let outcome = evaluate_determinism(opts.seeds[0], &scratch);
                if temporary {
                    let _ = fs::remove_dir_all(&scratch);
                }
                outcome?
            }
            other => unreachable!("script {other} has no evaluator"),
        };
        outcomes.push(outcome);
    }
    if let Some(dir) = &opts.out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("report.md");
        fs::write(&path, markdown_report(&outcomes, &opts.seeds)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(outcomes)
}

/// Pass/fail table followed by every check.
pub fn markdown_report(outcomes: &[Outcome], seeds: &[u64]) -> String {
    let mut md = String::from("# Reproduction report\n\n");
    let seeds: Vec<String> = seeds.iter().map(u64::to_string).collect();
    let _ = writeln!(md, "Seeds: {}. Statistics are medians over seeds.\n", seeds.join(", "));
    md.push_str("| Criterion | Script | Result | Checks passed |\n|---|---|---|---|\n");
    for o in outcomes {
        let ok = o.checks.iter().filter(|c| c.passed).count();
        let _ = writeln!(
            md,
            "| {} | {} | {} | {ok}/{} |",
            o.criterion,
            o.script,
            if o.passed() { "pass" } else { "FAIL" },
            o.checks.len()
        );
    }
    for o in outcomes {
        let _ = writeln!(md, "\n## {} {}\n", o.criterion, o.script);
        for c in &o.checks {
            let _ = writeln!(md, "- [{}] {}: {}", if c.passed { "x" } else { " " }, c.label, c.detail);
        }
    }
    md
}

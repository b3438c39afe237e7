//! Discrete-time driver: one access batch per profile window, fed to every
//! engine, followed by scoring, optional migration and CSV emission.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::engines::{Cost, Engine, EngineKind, EngineReport};
use crate::error::{Error, Result};
use crate::metrics::{
    fmt_opt, precision_recall, summarize, utilization_proxy, HeatmapGrid, PhaseSummary, PrScore, WindowRecord,
    DEFAULT_HEATMAP_BUCKETS,
};
use crate::par::{self, Execution};
use crate::regions::IntervalConfig;
use crate::tiering::{apply_plan, classify_and_plan, throughput_proxy, Placement, TieringConfig};
use crate::units::{total_len, ByteRange, GIB};
use crate::workload::{ground_truth_hot, AccessBatch, BatchGenerator, Scenario};

/// Post-phase-change windows left out of per-phase means.
pub const DEFAULT_EXCLUSION_WINDOWS: usize = 10;

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub engines: Vec<EngineKind>,
    pub intervals: IntervalConfig,
    /// Truncates the scenario; `None` runs it to the end.
    pub duration_ms: Option<u64>,
    /// Overrides the scenario seed.
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub tiering: Option<TieringConfig>,
    pub execution: Execution,
    pub exclusion_windows: usize,
    pub heatmap_buckets: (usize, usize),
}

impl RunConfig {
    pub fn new(scenario: Scenario, engines: Vec<EngineKind>) -> Self {
        Self {
            scenario,
            engines,
            intervals: IntervalConfig::default(),
            duration_ms: None,
            seed: None,
            out_dir: None,
            tiering: None,
            execution: Execution::default(),
            exclusion_windows: DEFAULT_EXCLUSION_WINDOWS,
            heatmap_buckets: (DEFAULT_HEATMAP_BUCKETS, DEFAULT_HEATMAP_BUCKETS),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.scenario.rng_seed)
    }

    pub fn end_ms(&self) -> u64 {
        self.duration_ms.unwrap_or_else(|| self.scenario.total_duration_ms())
    }

    /// First simulated window start: the warmup end when tiering is on.
    pub fn start_ms(&self) -> u64 {
        match &self.tiering {
            Some(t) => t.warmup_ms.div_ceil(self.intervals.window_ms) * self.intervals.window_ms,
            None => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.intervals.validate()?;
        if self.engines.is_empty() {
            return Err(Error::config("engine", "at least one engine is required"));
        }
        for (i, e) in self.engines.iter().enumerate() {
            if self.engines[..i].contains(e) {
                return Err(Error::config("engine", format!("engine tag {e} given twice")));
            }
            e.intervals(self.intervals).validate()?;
        }
        let total = self.scenario.total_duration_ms();
        let end = self.end_ms();
        if end > total {
            return Err(Error::config("duration", format!("{end} ms exceeds the scenario length of {total} ms")));
        }
        if end < self.start_ms() + self.intervals.window_ms {
            return Err(Error::config("duration", "run must cover at least one profile window after warmup"));
        }
        if let Some(t) = &self.tiering {
            t.model.validate()?;
        }
        Ok(())
    }
}

/// Everything recorded for one engine during a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EngineRun {
    pub tag: String,
    pub windows: Vec<WindowRecord>,
    pub phases: Vec<PhaseSummary>,
    pub total: Cost,
    pub peak_utilization: f64,
    /// `(t_ms, ops_per_s)` per window, when tiering is on.
    pub throughput: Vec<(u64, f64)>,
    pub migrated_bytes: u64,
    pub max_regions: usize,
}

impl EngineRun {
    /// Flips per GiB of page-table coverage reset.
    pub fn flips_per_covered_gib(&self) -> Option<f64> {
        (self.total.covered_bytes > 0)
            .then(|| self.total.bit_flips as f64 / (self.total.covered_bytes as f64 / GIB as f64))
    }

    pub fn phase(&self, phase: usize) -> Option<&PhaseSummary> {
        self.phases.iter().find(|p| p.phase == phase)
    }

    /// Mean throughput over windows starting at or after `from_ms`.
    pub fn mean_throughput_since(&self, from_ms: u64) -> Option<f64> {
        let v: Vec<f64> = self.throughput.iter().filter(|(t, _)| *t > from_ms).map(|(_, x)| *x).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunResult {
    pub scenario: String,
    pub seed: u64,
    pub start_ms: u64,
    pub end_ms: u64,
    pub engines: Vec<EngineRun>,
}

impl RunResult {
    pub fn engine(&self, tag: &str) -> Option<&EngineRun> {
        self.engines.iter().find(|e| e.tag == tag)
    }
}

struct Sinks {
    dir: PathBuf,
    pr: BufWriter<File>,
    cost: BufWriter<File>,
    regions: BufWriter<File>,
    reports: BufWriter<File>,
    migration: Option<BufWriter<File>>,
    throughput: Option<BufWriter<File>>,
}

fn create(path: &Path, header: &str) -> Result<BufWriter<File>> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    writeln!(w, "{header}").map_err(|e| Error::io(path, e))?;
    Ok(w)
}

impl Sinks {
    fn open(dir: PathBuf, tiering: bool) -> Result<Self> {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let f = |name: &str, header: &str| create(&dir.join(name), header);
        Ok(Self {
            pr: f("pr.csv", "t_ms,engine,precision,recall")?,
            cost: f("cost.csv", "t_ms,engine,bit_flips,work_units,samples,interrupts")?,
            regions: f("regions.csv", "t_ms,start,end,access_count,age,score")?,
            reports: f("reports.csv", "t_ms,engine,range_start,range_end,score")?,
            migration: tiering.then(|| f("migration.csv", "t_ms,range_start,range_end,bytes,score")).transpose()?,
            throughput: tiering.then(|| f("throughput.csv", "t_ms,engine,ops_per_s,near_bytes")).transpose()?,
            dir,
        })
    }

    fn io(&self, e: std::io::Error) -> Error {
        Error::io(&self.dir, e)
    }
}

struct Runner {
    engine: Box<dyn Engine>,
    placement: Placement,
    heatmap: HeatmapGrid,
    sinks: Option<Sinks>,
    run: EngineRun,
}

struct WindowCtx<'a> {
    batch: &'a AccessBatch,
    truth: &'a [ByteRange],
    phase: usize,
    window_ms: u64,
    tiering: Option<&'a TieringConfig>,
}

impl Runner {
    fn step(&mut self, ctx: &WindowCtx<'_>) -> Result<()> {
        let report = self.engine.observe_window(ctx.batch)?;
        let hot = report.hot_ranges();
        let pr = precision_recall(&hot, ctx.truth);
        let t = report.t_end_ms;
        self.run.windows.push(WindowRecord {
            t_start_ms: report.t_start_ms,
            t_end_ms: t,
            phase: ctx.phase,
            pr,
            reported_bytes: total_len(&hot),
            cost: report.cost,
        });
        self.run.total += report.cost;
        self.run.peak_utilization = self.run.peak_utilization.max(utilization_proxy(&report.cost, ctx.window_ms));
        self.run.max_regions = self.run.max_regions.max(report.regions.len());
        self.heatmap.accumulate(&report);

        let mut migrated = Vec::new();
        if let Some(cfg) = ctx.tiering {
            let ops = throughput_proxy(&ctx.batch.addrs, &self.placement, &cfg.model);
            self.run.throughput.push((t, ops));
            let candidates = report.tiering_candidates();
            self.placement.refresh_scores(&candidates);
            let plan = classify_and_plan(&candidates, &self.placement, cfg);
            apply_plan(&plan, &mut self.placement, &cfg.model)?;
            self.run.migrated_bytes += plan.total_bytes;
            migrated = plan.entries;
        }
        if let Some(s) = &mut self.sinks {
            write_window(s, self.engine.tag(), &report, pr, &migrated, &self.placement, self.run.throughput.last())
                .map_err(|e| s.io(e))?;
        }
        Ok(())
    }
}

fn write_window(
    s: &mut Sinks,
    tag: &str,
    report: &EngineReport,
    pr: PrScore,
    migrated: &[crate::engines::ScoredRange],
    placement: &Placement,
    throughput: Option<&(u64, f64)>,
) -> std::io::Result<()> {
    let t = report.t_end_ms;
    writeln!(s.pr, "{t},{tag},{},{}", fmt_opt(pr.precision), fmt_opt(pr.recall))?;
    let c = &report.cost;
    writeln!(s.cost, "{t},{tag},{},{},{},{}", c.bit_flips, c.work_units, c.samples, c.interrupts)?;
    for r in &report.regions {
        writeln!(s.regions, "{t},{},{},{},{},{}", r.range.start, r.range.end, r.access_count, r.age, r.score)?;
    }
    for h in &report.hot {
        writeln!(s.reports, "{t},{tag},{},{},{}", h.range.start, h.range.end, h.score)?;
    }
    if let Some(w) = &mut s.migration {
        for m in migrated {
            writeln!(w, "{t},{},{},{},{}", m.range.start, m.range.end, m.range.len(), m.score)?;
        }
    }
    if let (Some(w), Some((_, ops))) = (&mut s.throughput, throughput) {
        writeln!(w, "{t},{tag},{ops:.1},{}", placement.near_bytes())?;
    }
    Ok(())
}

/// Runs a scenario against every configured engine. Writes CSV artifacts under
/// `<out_dir>/<scenario>/` when an output directory is set.
pub fn run(cfg: &RunConfig) -> Result<RunResult> {
    cfg.validate()?;
    let seed = cfg.seed();
    let scenario = cfg.scenario.clone().with_seed(seed);
    let generator = BatchGenerator::new(&scenario)?.with_execution(cfg.execution);
    let mapped = vec![scenario.heap_range()];
    let (start, end) = (cfg.start_ms(), cfg.end_ms());
    let window = cfg.intervals.window_ms;
    let scenario_dir = cfg.out_dir.as_ref().map(|d| d.join(&scenario.name));

    let mut runners = cfg
        .engines
        .iter()
        .map(|&kind| {
            let sinks = match &scenario_dir {
                Some(d) => Some(Sinks::open(d.join(kind.tag()), cfg.tiering.is_some())?),
                None => None,
            };
            Ok(Runner {
                engine: kind.build(&mapped, cfg.intervals, seed)?,
                placement: Placement::default(),
                heatmap: HeatmapGrid::new(start, end, scenario.heap_range(), cfg.heatmap_buckets.0, cfg.heatmap_buckets.1),
                sinks,
                run: EngineRun { tag: kind.tag().into(), ..Default::default() },
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut batch = AccessBatch::default();
    let mut t = start;
    while t + window <= end {
        generator.fill(t, t + window, &mut batch)?;
        let truth = ground_truth_hot(&scenario, t);
        let ctx = WindowCtx {
            batch: &batch,
            truth: &truth,
            phase: scenario.phase_index_at(t),
            window_ms: window,
            tiering: cfg.tiering.as_ref(),
        };
        par::map_mut(cfg.execution, &mut runners, |r| r.step(&ctx)).into_iter().collect::<Result<()>>()?;
        t += window;
        if t % cfg.intervals.region_update_ms == 0 {
            for r in &mut runners {
                r.engine.refresh_mappings(&mapped)?;
            }
        }
    }

    let mut result = RunResult { scenario: scenario.name.clone(), seed, start_ms: start, end_ms: t, engines: vec![] };
    for mut r in runners {
        r.run.phases = summarize(&r.run.windows, scenario.phases.len(), cfg.exclusion_windows);
        if let Some(s) = &mut r.sinks {
            for w in [&mut s.pr, &mut s.cost, &mut s.regions, &mut s.reports] {
                w.flush().map_err(|e| Error::io(&s.dir, e))?;
            }
            for w in [&mut s.migration, &mut s.throughput].into_iter().flatten() {
                w.flush().map_err(|e| Error::io(&s.dir, e))?;
            }
            let path = s.dir.join("heatmap.csv");
            let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
            r.heatmap.write_csv(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))?;
        }
        result.engines.push(r.run);
    }
    if let Some(dir) = &scenario_dir {
        write_run_files(dir, cfg, &result)?;
    }
    Ok(result)
}

fn write_run_files(dir: &Path, cfg: &RunConfig, result: &RunResult) -> Result<()> {
    let write = |name: &str, body: String| {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))
    };
    let mut summary = String::from("engine,phase,mean_precision,mean_recall,bit_flips,work_units\n");
    let mut totals =
        String::from("engine,bit_flips,work_units,covered_bytes,flips_per_covered_gib,peak_utilization,migrated_bytes\n");
    for e in &result.engines {
        for p in &e.phases {
            summary.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.tag,
                p.phase + 1,
                fmt_opt(p.mean_precision),
                fmt_opt(p.mean_recall),
                p.bit_flips,
                p.work_units
            ));
        }
        totals.push_str(&format!(
            "{},{},{},{},{},{:.6},{}\n",
            e.tag,
            e.total.bit_flips,
            e.total.work_units,
            e.total.covered_bytes,
            fmt_opt(e.flips_per_covered_gib()),
            e.peak_utilization,
            e.migrated_bytes
        ));
    }
    write("summary.csv", summary)?;
    write("totals.csv", totals)?;
    let engines: Vec<&str> = cfg.engines.iter().map(|e| e.tag()).collect();
    let meta = format!(
        "key,value\nscenario,{}\nseed,{}\nstart_ms,{}\nend_ms,{}\nsampling_ms,{}\nwindow_ms,{}\nengines,{}\ntiering,{}\n",
        result.scenario,
        result.seed,
        result.start_ms,
        result.end_ms,
        cfg.intervals.sampling_ms,
        cfg.intervals.window_ms,
        engines.join(" "),
        cfg.tiering.is_some()
    );
    write("run_meta.csv", meta)
}

#[derive(Debug, Deserialize)]
struct SummaryRow {
    engine: String,
    phase: usize,
    mean_precision: Option<f64>,
    mean_recall: Option<f64>,
    bit_flips: u64,
    work_units: u64,
}

/// Locates the scenario directory of a run: the directory itself when it holds
/// `summary.csv`, otherwise its single scenario subdirectory.
fn scenario_dir(dir: &Path) -> Result<PathBuf> {
    if dir.join("summary.csv").is_file() {
        return Ok(dir.to_path_buf());
    }
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut found = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.join("summary.csv").is_file() {
            found.push(p);
        }
    }
    match found.len() {
        1 => Ok(found.remove(0)),
        0 => Err(Error::io(dir.join("summary.csv"), std::io::Error::new(std::io::ErrorKind::NotFound, "no run summary found"))),
        _ => Err(Error::config("compare", format!("{} holds several scenario runs; pass one of them", dir.display()))),
    }
}

fn read_meta(dir: &Path) -> Result<String> {
    let path = dir.join("run_meta.csv");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    text.lines()
        .find_map(|l| l.strip_prefix("scenario,"))
        .map(str::to_string)
        .ok_or_else(|| Error::Parse(format!("{}: no scenario entry", path.display())))
}

fn read_summary(dir: &Path) -> Result<Vec<SummaryRow>> {
    let path = dir.join("summary.csv");
    let mut rdr = csv::Reader::from_path(&path).map_err(|e| Error::Csv { path: path.clone(), source: e })?;
    rdr.deserialize().collect::<std::result::Result<Vec<_>, _>>().map_err(|e| Error::Csv { path, source: e })
}

/// Side-by-side phase means and costs of several runs of one scenario, with
/// deltas against the first run holding the same engine and phase.
pub fn compare(dirs: &[PathBuf]) -> Result<String> {
    if dirs.len() < 2 {
        return Err(Error::config("compare", "need at least two run directories"));
    }
    let mut runs = Vec::new();
    for d in dirs {
        let sd = scenario_dir(d)?;
        runs.push((d.display().to_string(), read_meta(&sd)?, read_summary(&sd)?));
    }
    let scenario = &runs[0].1;
    if let Some((d, s, _)) = runs.iter().find(|(_, s, _)| s != scenario) {
        return Err(Error::config(
            "compare",
            format!("refusing to compare different scenarios: {} ran {scenario:?}, {d} ran {s:?}", runs[0].0),
        ));
    }
    let mut out = String::from(
        "run,engine,phase,mean_precision,mean_recall,bit_flips,work_units,\
         delta_precision,delta_recall,delta_bit_flips,delta_work_units\n",
    );
    let delta = |a: Option<f64>, b: Option<f64>| fmt_opt(a.zip(b).map(|(a, b)| a - b));
    for (i, (name, _, rows)) in runs.iter().enumerate() {
        for row in rows {
            let base = runs[..=i]
                .iter()
                .find_map(|(_, _, rs)| rs.iter().find(|r| r.engine == row.engine && r.phase == row.phase))
                .expect("row itself qualifies");
            out.push_str(&format!(
                "{name},{},{},{},{},{},{},{},{},{},{}\n",
                row.engine,
                row.phase,
                fmt_opt(row.mean_precision),
                fmt_opt(row.mean_recall),
                row.bit_flips,
                row.work_units,
                delta(row.mean_precision, base.mean_precision),
                delta(row.mean_recall, base.mean_recall),
                row.bit_flips as i128 - base.bit_flips as i128,
                row.work_units as i128 - base.work_units as i128,
            ));
        }
    }
    Ok(out)
}

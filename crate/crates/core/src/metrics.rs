//! Precision/recall against ground truth, heatmaps and per-phase summaries.

use std::io::Write;

use crate::engines::{Cost, EngineReport};
use crate::units::{intersection_len, normalize, total_len, ByteRange};

/// Byte-overlap precision and recall. `None` marks an undefined value.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PrScore {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

/// Precision is 0 when nothing is reported but truth exists; recall is undefined
/// when truth is empty.
pub fn precision_recall(reported: &[ByteRange], truth: &[ByteRange]) -> PrScore {
    let reported = normalize(reported);
    let truth = normalize(truth);
    let rep = total_len(&reported);
    let tru = total_len(&truth);
    let hit = intersection_len(&reported, &truth) as f64;
    let precision = if rep > 0 {
        Some(hit / rep as f64)
    } else if tru > 0 {
        Some(0.0)
    } else {
        None
    };
    let recall = (tru > 0).then(|| hit / tru as f64);
    PrScore { precision, recall }
}

/// Scores accumulated over a time × address grid.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatmapGrid {
    pub t_start_ms: u64,
    pub t_end_ms: u64,
    pub heap: ByteRange,
    pub time_buckets: usize,
    pub addr_buckets: usize,
    cells: Vec<f64>,
}

pub const DEFAULT_HEATMAP_BUCKETS: usize = 200;

fn edge(start: u64, span: u64, i: usize, n: usize) -> u64 {
    start + (u128::from(span) * i as u128 / n as u128) as u64
}

fn bucket(start: u64, span: u64, x: u64, n: usize) -> usize {
    (((u128::from(x - start)) * n as u128 / u128::from(span)) as usize).min(n - 1)
}

impl HeatmapGrid {
    pub fn new(t_start_ms: u64, t_end_ms: u64, heap: ByteRange, time_buckets: usize, addr_buckets: usize) -> Self {
        let time_buckets = time_buckets.clamp(1, (t_end_ms - t_start_ms).max(1) as usize);
        let addr_buckets = addr_buckets.max(1);
        Self { t_start_ms, t_end_ms, heap, time_buckets, addr_buckets, cells: vec![0.0; time_buckets * addr_buckets] }
    }

    pub fn cell(&self, t_bucket: usize, a_bucket: usize) -> f64 {
        self.cells[t_bucket * self.addr_buckets + a_bucket]
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().sum()
    }

    /// Adds each reported range's score to the cells it overlaps, split by byte overlap.
    pub fn accumulate(&mut self, report: &EngineReport) {
        let span_t = self.t_end_ms - self.t_start_ms;
        if report.t_start_ms < self.t_start_ms || report.t_start_ms >= self.t_end_ms {
            return;
        }
        let tb = bucket(self.t_start_ms, span_t, report.t_start_ms, self.time_buckets);
        let span_a = self.heap.len();
        for h in &report.hot {
            let Some(r) = h.range.intersection(&self.heap) else { continue };
            let first = bucket(self.heap.start, span_a, r.start, self.addr_buckets);
            let last = bucket(self.heap.start, span_a, r.end - 1, self.addr_buckets);
            for ab in first..=last {
                let cell = ByteRange::new(
                    edge(self.heap.start, span_a, ab, self.addr_buckets),
                    edge(self.heap.start, span_a, ab + 1, self.addr_buckets),
                );
                let w = cell.overlap_len(&r) as f64 / r.len() as f64;
                self.cells[tb * self.addr_buckets + ab] += f64::from(h.score) * w;
            }
        }
    }

    /// `t_ms,offset_start,score` for every non-zero cell; offsets are heap-relative.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "t_ms,offset_start,score")?;
        let span_t = self.t_end_ms - self.t_start_ms;
        for tb in 0..self.time_buckets {
            let t = edge(self.t_start_ms, span_t, tb, self.time_buckets);
            for ab in 0..self.addr_buckets {
                let v = self.cell(tb, ab);
                if v != 0.0 {
                    let off = edge(0, self.heap.len(), ab, self.addr_buckets);
                    writeln!(out, "{t},{off},{v}")?;
                }
            }
        }
        Ok(())
    }
}

/// One profile window's outcome for one engine.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WindowRecord {
    pub t_start_ms: u64,
    pub t_end_ms: u64,
    pub phase: usize,
    pub pr: PrScore,
    /// Bytes reported hot in the window.
    pub reported_bytes: u64,
    pub cost: Cost,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseSummary {
    /// Zero-based phase index.
    pub phase: usize,
    pub mean_precision: Option<f64>,
    pub mean_recall: Option<f64>,
    pub windows: usize,
    pub bit_flips: u64,
    pub work_units: u64,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Per-phase means, skipping the first `exclusion_windows` windows of every phase
/// (the run start counts as a phase change). A phase whose windows are all
/// excluded is averaged over all its windows. Costs cover every window.
pub fn summarize(records: &[WindowRecord], phases: usize, exclusion_windows: usize) -> Vec<PhaseSummary> {
    (0..phases)
        .filter_map(|phase| {
            let in_phase: Vec<&WindowRecord> = records.iter().filter(|r| r.phase == phase).collect();
            if in_phase.is_empty() {
                return None;
            }
            let kept: Vec<&WindowRecord> = if in_phase.len() > exclusion_windows {
                in_phase[exclusion_windows..].to_vec()
            } else {
                in_phase.clone()
            };
            Some(PhaseSummary {
                phase,
                mean_precision: mean(kept.iter().filter_map(|r| r.pr.precision)),
                mean_recall: mean(kept.iter().filter_map(|r| r.pr.recall)),
                windows: kept.len(),
                bit_flips: in_phase.iter().map(|r| r.cost.bit_flips).sum(),
                work_units: in_phase.iter().map(|r| r.cost.work_units).sum(),
            })
        })
        .collect()
}

/// Simulated CPU share of a window's profiling work: each work unit is priced as
/// one page of linear scanning.
pub fn utilization_proxy(cost: &Cost, window_ms: u64) -> f64 {
    use crate::engines::{BASE_SCAN_RATE, SCAN_DUTY_FACTOR};
    let busy_s = cost.work_units as f64 * crate::units::PAGE_SIZE as f64 / BASE_SCAN_RATE;
    (SCAN_DUTY_FACTOR * busy_s / (window_ms as f64 / 1000.0)).min(1.0)
}

/// Formats an optional ratio for CSV output; undefined values are empty fields.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engines::ScoredRange;
    use crate::units::GIB;

    fn report(t: u64, ranges: &[(u64, u64, u8)]) -> EngineReport {
        EngineReport {
            t_start_ms: t,
            t_end_ms: t + 200,
            hot: ranges
                .iter()
                .map(|&(s, e, score)| ScoredRange { range: ByteRange::new(s, e), access_count: 40, score })
                .collect(),
            ..Default::default()
        }
    }

    #[test]
    fn pr_examples() {
        let truth = [ByteRange::with_len(100 * GIB, 10 * GIB)];
        let exact = precision_recall(&truth, &truth);
        assert_eq!((exact.precision, exact.recall), (Some(1.0), Some(1.0)));
        let sup = precision_recall(&[ByteRange::with_len(95 * GIB, 20 * GIB)], &truth);
        assert_eq!((sup.precision, sup.recall), (Some(0.5), Some(1.0)));
        let dis = precision_recall(&[ByteRange::with_len(0, GIB)], &truth);
        assert_eq!((dis.precision, dis.recall), (Some(0.0), Some(0.0)));
        let none = precision_recall(&[], &truth);
        assert_eq!((none.precision, none.recall), (Some(0.0), Some(0.0)));
        let no_truth = precision_recall(&[ByteRange::with_len(0, GIB)], &[]);
        assert_eq!(no_truth.recall, None);
    }

    #[test]
    fn heatmap_splits_by_overlap() {
        let mut g = HeatmapGrid::new(0, 1000, ByteRange::new(0, 1000), 5, 10);
        g.accumulate(&report(0, &[(100, 200, 50)]));
        assert_eq!(g.cell(0, 1), 50.0);
        g.accumulate(&report(200, &[(170, 270, 100)]));
        assert!((g.cell(1, 1) - 30.0).abs() < 1e-9 && (g.cell(1, 2) - 70.0).abs() < 1e-9);
        let before = g.clone();
        g.accumulate(&report(400, &[]));
        assert_eq!(g, before);
        assert!((g.total() - 150.0).abs() < 1e-9);
    }

    #[test]
    fn heatmap_csv_lists_nonzero_cells() {
        let mut g = HeatmapGrid::new(0, 1000, ByteRange::new(1000, 2000), 5, 10);
        g.accumulate(&report(200, &[(1100, 1200, 9)]));
        let mut out = Vec::new();
        g.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "t_ms,offset_start,score\n200,100,9\n");
    }

    #[test]
    fn summary_excludes_phase_starts() {
        let rec = |t: u64, phase, p: f64| WindowRecord {
            t_start_ms: t,
            t_end_ms: t + 200,
            phase,
            pr: PrScore { precision: Some(p), recall: Some(p) },
            reported_bytes: 0,
            cost: Cost { bit_flips: 1, ..Default::default() },
        };
        let mut records: Vec<WindowRecord> = (0..12).map(|i| rec(i * 200, 0, if i < 10 { 0.0 } else { 1.0 })).collect();
        records.extend((12..24).map(|i| rec(i * 200, 1, if i < 22 { 0.0 } else { 0.5 })));
        let s = summarize(&records, 2, 10);
        assert_eq!(s[0].mean_precision, Some(1.0));
        assert_eq!(s[1].mean_recall, Some(0.5));
        assert_eq!(s[0].bit_flips, 12);
        assert_eq!(s[1].windows, 2);
    }
}

//! Mean and standard error across repeats on a common grid, and the
//! plot-ready tables built from them.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::Algorithm;
use super::run::{RunResult, RunRow};
use crate::error::{Error, Result};

/// What a curve is plotted against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    /// `log2` of the number of labels queried, at powers of two.
    Log2Queries,
    /// Rounds of the stream, on an even grid ending at the last round.
    SamplesSeen,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Alive,
    TeacherError,
    TestError,
    Accuracy,
    Queries,
}

impl Metric {
    fn of(self, row: &RunRow) -> Option<f64> {
        match self {
            Metric::Alive => Some(row.alive as f64),
            Metric::TeacherError => row.teacher_error,
            Metric::TestError => Some(row.test_error),
            Metric::Accuracy => Some(1.0 - row.test_error),
            Metric::Queries => Some(row.tau as f64),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub algorithm: Algorithm,
    pub dataset: String,
    pub axis: Axis,
    pub metric: Metric,
    pub runs: usize,
    pub points: Vec<CurvePoint>,
}

impl Curve {
    pub fn at(&self, x: f64) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.x == x)
    }
}

/// Sample mean and `std / sqrt(n)` with the `n - 1` variance.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Value of a run at grid position `g`: the last row at or before `g`,
/// or the run's final value when the run ended earlier.
fn step_value(rows: &[RunRow], metric: Metric, axis: Axis, g: f64) -> Option<f64> {
    let key = |r: &RunRow| match axis {
        Axis::Log2Queries => r.tau as f64,
        Axis::SamplesSeen => r.t as f64,
    };
    let at = rows.partition_point(|r| key(r) <= g);
    let row = if at == 0 { rows.first()? } else { &rows[at - 1] };
    metric.of(row)
}

fn grid(results: &[RunResult], axis: Axis) -> Vec<f64> {
    match axis {
        Axis::Log2Queries => {
            let max_tau = results.iter().map(|r| r.summary.tau).max().unwrap_or(0);
            let mut g = Vec::new();
            let mut q = 1usize;
            while q <= max_tau {
                g.push(q as f64);
                q *= 2;
            }
            g
        }
        Axis::SamplesSeen => {
            let rounds = results.iter().map(|r| r.summary.rounds).max().unwrap_or(0);
            let steps = rounds.min(50);
            (1..=steps).map(|k| (k * rounds / steps) as f64).collect()
        }
    }
}

/// Aggregates runs of one algorithm on one dataset.
pub fn aggregate(results: &[RunResult], axis: Axis, metric: Metric) -> Result<Curve> {
    let first = results.first().ok_or(Error::Empty("run results"))?;
    if results.iter().any(|r| r.algorithm != first.algorithm || r.dataset != first.dataset) {
        return Err(Error::invalid("results", "mixes algorithms or datasets"));
    }
    let mut points = Vec::new();
    for g in grid(results, axis) {
        let values: Vec<f64> = results
            .iter()
            .filter_map(|r| step_value(&r.rows, metric, axis, g))
            .collect();
        if values.is_empty() {
            continue;
        }
        let (mean, stderr) = mean_stderr(&values);
        let x = match axis {
            Axis::Log2Queries => g.log2(),
            Axis::SamplesSeen => g,
        };
        points.push(CurvePoint { x, mean, stderr });
    }
    Ok(Curve {
        algorithm: first.algorithm,
        dataset: first.dataset.clone(),
        axis,
        metric,
        runs: results.len(),
        points,
    })
}

/// One output table per figure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5Lite,
}

impl Figure {
    pub const ALL: [Figure; 5] = [Figure::Fig1, Figure::Fig2, Figure::Fig3, Figure::Fig4, Figure::Fig5Lite];

    pub fn file_name(self) -> &'static str {
        match self {
            Figure::Fig1 => "fig1.csv",
            Figure::Fig2 => "fig2.csv",
            Figure::Fig3 => "fig3.csv",
            Figure::Fig4 => "fig4.csv",
            Figure::Fig5Lite => "fig5-lite.csv",
        }
    }

    pub fn axis_metric(self) -> (Axis, Metric) {
        match self {
            Figure::Fig1 => (Axis::Log2Queries, Metric::Alive),
            Figure::Fig2 => (Axis::Log2Queries, Metric::TeacherError),
            Figure::Fig3 => (Axis::Log2Queries, Metric::TestError),
            Figure::Fig4 => (Axis::SamplesSeen, Metric::Queries),
            Figure::Fig5Lite => (Axis::Log2Queries, Metric::Accuracy),
        }
    }

    fn includes(self, algorithm: Algorithm) -> bool {
        use Algorithm::*;
        match self {
            Figure::Fig1 | Figure::Fig3 | Figure::Fig4 => matches!(algorithm, Iwal | IwalD | Btal),
            Figure::Fig2 => algorithm == Btal,
            Figure::Fig5Lite => matches!(algorithm, BtalPlus | RandomQuery),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub tables: Vec<(Figure, Vec<Curve>)>,
}

/// Groups runs by (algorithm, dataset) and aggregates every figure that
/// applies to them. Groups keep their first-seen order.
pub fn aggregate_figures(results: &[RunResult]) -> Result<AggregateResult> {
    if results.is_empty() {
        return Err(Error::Empty("run results"));
    }
    let mut groups: Vec<((Algorithm, String), Vec<RunResult>)> = Vec::new();
    for r in results {
        let key = (r.algorithm, r.dataset.clone());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r.clone()),
            None => groups.push((key, vec![r.clone()])),
        }
    }
    let mut tables = Vec::new();
    for fig in Figure::ALL {
        let (axis, metric) = fig.axis_metric();
        let mut curves = Vec::new();
        for ((algo, _), runs) in &groups {
            if fig.includes(*algo) {
                curves.push(aggregate(runs, axis, metric)?);
            }
        }
        tables.push((fig, curves));
    }
    Ok(AggregateResult { tables })
}

fn format_float(v: f64) -> String {
    // shortest round-trip form, stable across runs
    format!("{v:?}")
}

pub fn render_table(curves: &[Curve]) -> String {
    let mut out = String::from("x,mean,stderr,algorithm,dataset\n");
    for c in curves {
        for p in &c.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                format_float(p.x),
                format_float(p.mean),
                format_float(p.stderr),
                c.algorithm,
                c.dataset
            );
        }
    }
    out
}

/// Writes `contents` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Writes one table per figure into `out_dir` and returns their paths.
pub fn emit_tables(agg: &AggregateResult, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for fig in Figure::ALL {
        let curves = agg
            .tables
            .iter()
            .find(|(f, _)| *f == fig)
            .map(|(_, c)| c.as_slice())
            .unwrap_or(&[]);
        let path = out_dir.join(fig.file_name());
        write_atomic(&path, render_table(curves).as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run::RunSummary;

    fn run(algorithm: Algorithm, rows: Vec<(usize, usize, f64)>) -> RunResult {
        let rows: Vec<RunRow> = rows
            .into_iter()
            .map(|(t, tau, e)| RunRow {
                t,
                tau,
                alive: 100 - tau,
                teacher_error: Some(e),
                test_error: e,
            })
            .collect();
        let last = *rows.last().unwrap();
        RunResult {
            algorithm,
            dataset: "d".into(),
            run_index: 0,
            seed: 0,
            summary: RunSummary {
                rounds: last.t,
                tau: last.tau,
                alive: last.alive,
                test_error: last.test_error,
                teacher_initial_error: None,
                teacher_final_error: None,
                alpha_sum: 0.0,
                teacher_updates: vec![],
                teacher_pruned: None,
                audit: None,
            },
            rows,
        }
    }

    #[test]
    fn mean_stderr_examples() {
        assert_eq!(mean_stderr(&[0.3]), (0.3, 0.0));
        let (m, s) = mean_stderr(&[1.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - 1.5).abs() < 1e-15);
        assert_eq!(mean_stderr(&[0.25; 20]), (0.25, 0.0));
    }

    #[test]
    fn early_finishers_carry_their_last_value() {
        let a = run(Algorithm::Iwal, vec![(1, 1, 0.5), (2, 2, 0.4), (4, 3, 0.3), (5, 4, 0.2)]);
        let b = run(Algorithm::Iwal, vec![(1, 1, 0.6), (3, 2, 0.1), (5, 2, 0.1)]);
        let c = aggregate(&[a, b], Axis::Log2Queries, Metric::TestError).unwrap();
        let xs: Vec<f64> = c.points.iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![0.0, 1.0, 2.0]);
        // at tau = 4 the second run contributes its final value
        assert!((c.points[2].mean - 0.15).abs() < 1e-15);
        assert!((c.points[2].stderr - 0.05).abs() < 1e-15);
    }

    #[test]
    fn samples_seen_grid_is_increasing() {
        let a = run(Algorithm::Btal, (1..=120).map(|t| (t, t / 2, 0.1)).collect());
        let c = aggregate(&[a], Axis::SamplesSeen, Metric::Queries).unwrap();
        assert!(c.points.windows(2).all(|w| w[0].x < w[1].x));
        assert_eq!(c.points.last().unwrap().x, 120.0);
    }

    #[test]
    fn aggregate_rejects_empty_and_mixed_input() {
        assert!(aggregate(&[], Axis::Log2Queries, Metric::Alive).is_err());
        let a = run(Algorithm::Iwal, vec![(1, 1, 0.5)]);
        let b = run(Algorithm::Btal, vec![(1, 1, 0.5)]);
        assert!(aggregate(&[a, b], Axis::Log2Queries, Metric::Alive).is_err());
    }

    #[test]
    fn empty_table_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_tables(&AggregateResult::default(), dir.path()).unwrap();
        assert_eq!(paths.len(), 5);
        for p in paths {
            assert_eq!(std::fs::read_to_string(p).unwrap(), "x,mean,stderr,algorithm,dataset\n");
        }
    }

    #[test]
    fn figures_pick_their_algorithms() {
        let runs = vec![
            run(Algorithm::Iwal, vec![(1, 1, 0.5), (2, 2, 0.4)]),
            run(Algorithm::Btal, vec![(1, 1, 0.5), (2, 2, 0.3)]),
        ];
        let agg = aggregate_figures(&runs).unwrap();
        let fig2 = &agg.tables.iter().find(|(f, _)| *f == Figure::Fig2).unwrap().1;
        assert_eq!(fig2.len(), 1);
        assert_eq!(fig2[0].algorithm, Algorithm::Btal);
        let text = render_table(&agg.tables[0].1);
        assert!(text.starts_with("x,mean,stderr,algorithm,dataset\n0.0,"));
    }
}

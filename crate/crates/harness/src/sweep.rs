//! Parameter sweeps: train once, then unlearn once per (grid value, repeat)
//! cell. Repeats vary the forget-partition seed; the model seeds stay fixed.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Context;
use rayon::prelude::*;
use unrank_core::metrics::{p_correct, p_forget, p_retain_on};
use unrank_core::{apply_substitutes, curd_unlearn_observed, partition, ForgetProtocol, Method, MetricsReport, Scalar};

use crate::artifacts::{update_manifest, write};
use crate::config::ExperimentConfig;
use crate::error::{HResult, HarnessError};
use crate::pipeline::{evaluate, forget_for_protocol, load_data, load_or_train_teacher, run_method, Data, Teacher};
use crate::svg::{Chart, Series};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    K,
    Gamma,
    Fraction,
    Method,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::K => "k",
            Axis::Gamma => "gamma",
            Axis::Fraction => "fraction",
            Axis::Method => "method",
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "k" => Ok(Axis::K),
            "gamma" => Ok(Axis::Gamma),
            "fraction" => Ok(Axis::Fraction),
            "method" => Ok(Axis::Method),
            _ => Err(format!("unknown axis `{s}` (expected k, gamma, fraction or method)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AxisValue {
    K(usize),
    Gamma(f64),
    Fraction(f64),
    Method(Method),
}

impl AxisValue {
    pub fn label(&self) -> String {
        match self {
            AxisValue::K(k) => k.to_string(),
            AxisValue::Gamma(g) | AxisValue::Fraction(g) => g.to_string(),
            AxisValue::Method(m) => m.name().to_string(),
        }
    }

    fn numeric(&self) -> Option<f64> {
        match self {
            AxisValue::K(k) => Some(*k as f64),
            AxisValue::Gamma(g) | AxisValue::Fraction(g) => Some(*g),
            AxisValue::Method(_) => None,
        }
    }
}

pub fn grid(cfg: &ExperimentConfig, axis: Axis) -> Vec<AxisValue> {
    let s = &cfg.sweep;
    match axis {
        Axis::K => s.k.iter().map(|&k| AxisValue::K(k)).collect(),
        Axis::Gamma => s.gamma.iter().map(|&g| AxisValue::Gamma(g)).collect(),
        Axis::Fraction => s.fraction.iter().map(|&f| AxisValue::Fraction(f)).collect(),
        Axis::Method => s.methods.iter().map(|&m| AxisValue::Method(m)).collect(),
    }
}

/// Metrics reported per cell, in CSV order. Timing is kept out of this list.
pub const SWEEP_METRICS: [&str; 9] = [
    "p_forget",
    "p_forget_query",
    "p_forget_doc",
    "p_correct",
    "p_correct_query",
    "p_correct_doc",
    "p_retain",
    "p_test",
    "p_delta_retain",
];

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryPoint {
    pub epoch: usize,
    pub p_forget: f64,
    pub p_correct: f64,
    pub p_retain: f64,
}

#[derive(Clone, Debug)]
pub struct Cell {
    pub value: AxisValue,
    pub repeat: usize,
    pub outcome: Result<CellResult, String>,
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub report: MetricsReport,
    pub trajectory: Vec<TrajectoryPoint>,
}

/// Mean and standard error of one metric at one grid value.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub value: AxisValue,
    pub metric: &'static str,
    pub n: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation over `sqrt(n)`; `None` when `n < 2`.
    pub stderr: Option<f64>,
}

pub struct SweepReport {
    pub axis: Axis,
    pub cells: Vec<Cell>,
    pub summary: Vec<SummaryRow>,
    pub files: Vec<PathBuf>,
}

impl SweepReport {
    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|c| c.outcome.is_err()).count()
    }

    pub fn mean(&self, value: &AxisValue, metric: &str) -> Option<f64> {
        self.summary.iter().find(|r| &r.value == value && r.metric == metric).and_then(|r| r.mean)
    }
}

fn metric(report: &MetricsReport, name: &str) -> Option<f64> {
    report.fields().iter().find(|(k, _)| *k == name).and_then(|(_, v)| *v)
}

pub fn summarise(cells: &[Cell], values: &[AxisValue]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for value in values {
        for name in SWEEP_METRICS {
            let xs: Vec<f64> = cells
                .iter()
                .filter(|c| &c.value == value)
                .filter_map(|c| c.outcome.as_ref().ok())
                .filter_map(|r| metric(&r.report, name))
                .collect();
            let n = xs.len();
            let mean = (n > 0).then(|| xs.iter().sum::<f64>() / n as f64);
            let stderr = (n >= 2).then(|| {
                let m = mean.unwrap();
                let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
                var.sqrt() / (n as f64).sqrt()
            });
            out.push(SummaryRow { value: *value, metric: name, n, mean, stderr });
        }
    }
    out
}

fn run_cell<T: Scalar>(
    cfg: &ExperimentConfig,
    data: &Data<T>,
    teacher: &Teacher<T>,
    value: AxisValue,
    repeat: usize,
) -> HResult<CellResult> {
    let mut cfg = cfg.clone();
    let mut proto = ForgetProtocol { seed: cfg.protocol.seed.wrapping_add(repeat as u64), ..cfg.protocol.clone() };
    let mut method = Method::Curd;
    match value {
        AxisValue::K(k) => cfg.unlearn.k = k,
        AxisValue::Gamma(g) => cfg.unlearn.gamma = g,
        AxisValue::Fraction(f) => proto.fraction = f,
        AxisValue::Method(m) => method = m,
    }
    let forget = forget_for_protocol(&data.train, &proto)?;

    if let AxisValue::Fraction(_) = value {
        let corrected = apply_substitutes(&data.train, &forget.set, &forget.subs)?;
        let retain = partition(&data.train, &forget.set)?;
        let tp = teacher.snapshot.params();
        let mut trajectory = Vec::new();
        let out = curd_unlearn_observed(
            &teacher.snapshot,
            &data.train,
            &forget.set,
            &forget.subs,
            &cfg.unlearn,
            |epoch, w| {
                if forget.set.is_empty() {
                    return Ok(());
                }
                trajectory.push(TrajectoryPoint {
                    epoch,
                    p_forget: p_forget(w, &data.train, &forget.set)?,
                    p_correct: p_correct(w, tp, &corrected, &forget.set)?,
                    p_retain: p_retain_on(w, &data.train, &retain)?,
                });
                Ok(())
            },
        )?;
        let report = evaluate(&out.params, data, teacher, &forget, Some(&out.log))?;
        return Ok(CellResult { report, trajectory });
    }

    let out = run_method(&cfg, method, data, teacher, &forget)?;
    let report = evaluate(&out.params, data, teacher, &forget, Some(&out.log))?;
    Ok(CellResult { report, trajectory: Vec::new() })
}

fn clean(msg: &str) -> String {
    msg.replace([',', '\n', '\r'], ";")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Runs the sweep and writes `sweep.csv`, `sweep_summary.csv`,
/// `sweep_timing.csv`, `sweep.svg` (and `trajectories.csv` for the
/// fraction axis) under `<run>/sweep/<axis>/`.
///
/// Cell failures are recorded in the CSVs; the returned report lists them
/// and the caller decides the exit status.
pub fn cmd_sweep<T: Scalar>(cfg: &ExperimentConfig, axis: Axis) -> HResult<SweepReport> {
    let data = load_data::<T>(cfg)?;
    let teacher = load_or_train_teacher(cfg, &data)?;
    let values = grid(cfg, axis);
    let jobs: Vec<(AxisValue, usize)> =
        values.iter().flat_map(|v| (0..cfg.sweep.repeats).map(move |r| (*v, r))).collect();

    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(cfg.sweep.workers).build().context("building worker pool")?;
    let cells: Vec<Cell> = pool.install(|| {
        jobs.par_iter()
            .map(|&(value, repeat)| Cell {
                value,
                repeat,
                outcome: run_cell(cfg, &data, &teacher, value, repeat).map_err(|e| e.to_string()),
            })
            .collect()
    });
    let summary = summarise(&cells, &values);

    let dir = cfg.run_dir().join("sweep").join(axis.name());
    let mut files = Vec::new();

    let mut long = String::from("axis,value,repeat,metric,score,status\n");
    let mut timing = String::from("axis,value,repeat,unlearn_time_normalised\n");
    for c in &cells {
        let status = match &c.outcome {
            Ok(_) => "ok".to_string(),
            Err(e) => format!("error: {}", clean(e)),
        };
        for name in SWEEP_METRICS {
            let v = c.outcome.as_ref().ok().and_then(|r| metric(&r.report, name));
            let _ = writeln!(long, "{},{},{},{name},{},{status}", axis.name(), c.value.label(), c.repeat, opt(v));
        }
        let t = c.outcome.as_ref().ok().and_then(|r| r.report.unlearn_time_normalised);
        let _ = writeln!(timing, "{},{},{},{}", axis.name(), c.value.label(), c.repeat, opt(t));
    }
    let mut summ = String::from("axis,value,metric,n,mean,stderr\n");
    for r in &summary {
        let _ = writeln!(
            summ,
            "{},{},{},{},{},{}",
            axis.name(),
            r.value.label(),
            r.metric,
            r.n,
            opt(r.mean),
            opt(r.stderr)
        );
    }
    for (name, text) in [("sweep.csv", long), ("sweep_summary.csv", summ), ("sweep_timing.csv", timing)] {
        let p = dir.join(name);
        write(&p, &text)?;
        files.push(p);
    }

    let chart = Chart {
        title: format!("{} sweep (mean over {} repeat(s))", axis.name(), cfg.sweep.repeats),
        x_label: axis.name().into(),
        y_label: "score".into(),
        x_ticks: values.iter().map(AxisValue::label).collect(),
        xs: values.iter().map(AxisValue::numeric).collect(),
        series: SWEEP_METRICS
            .iter()
            .map(|m| Series {
                name: m.to_string(),
                ys: values
                    .iter()
                    .map(|v| summary.iter().find(|r| &r.value == v && r.metric == *m).and_then(|r| r.mean))
                    .collect(),
            })
            .filter(|s| s.ys.iter().any(Option::is_some))
            .collect(),
    };
    let svg = dir.join("sweep.svg");
    write(&svg, &chart.render())?;
    files.push(svg);

    if axis == Axis::Fraction {
        let unit = cfg.sweep.epoch_unit as f64;
        let mut t = String::from("fraction,repeat,epoch,epoch_units,p_forget,p_correct,p_retain\n");
        for c in &cells {
            if let Ok(r) = &c.outcome {
                for p in &r.trajectory {
                    let _ = writeln!(
                        t,
                        "{},{},{},{},{},{},{}",
                        c.value.label(),
                        c.repeat,
                        p.epoch,
                        p.epoch as f64 / unit,
                        p.p_forget,
                        p.p_correct,
                        p.p_retain
                    );
                }
            }
        }
        let p = dir.join("trajectories.csv");
        write(&p, &t)?;
        files.push(p);
    }
    update_manifest(cfg, &format!("sweep/{}", axis.name()), &files)?;
    Ok(SweepReport { axis, cells, summary, files })
}

/// Maps a finished sweep to the process result: cell failures become
/// [`HarnessError::PartialSweep`].
pub fn check(report: &SweepReport) -> HResult<()> {
    match report.failed() {
        0 => Ok(()),
        failed => Err(HarnessError::PartialSweep { failed, total: report.cells.len() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(v: AxisValue, r: usize, p_forget: Option<f64>) -> Cell {
        let report = MetricsReport {
            p_forget,
            p_forget_query: None,
            p_forget_doc: None,
            p_correct: None,
            p_correct_query: None,
            p_correct_doc: None,
            p_retain: 1.0,
            p_test: None,
            p_delta_retain: 0.0,
            unlearn_time_normalised: None,
        };
        Cell { value: v, repeat: r, outcome: Ok(CellResult { report, trajectory: vec![] }) }
    }

    #[test]
    fn single_repeat_has_mean_and_no_stderr() {
        let v = AxisValue::K(2);
        let s = summarise(&[cell(v, 0, Some(0.25))], &[v]);
        let row = s.iter().find(|r| r.metric == "p_forget").unwrap();
        assert_eq!((row.n, row.mean, row.stderr), (1, Some(0.25), None));
    }

    #[test]
    fn stderr_is_sample_sd_over_root_n() {
        let v = AxisValue::Gamma(0.5);
        let cells = [cell(v, 0, Some(1.0)), cell(v, 1, Some(2.0)), cell(v, 2, Some(3.0))];
        let s = summarise(&cells, &[v]);
        let row = s.iter().find(|r| r.metric == "p_forget").unwrap();
        assert_eq!(row.mean, Some(2.0));
        assert!((row.stderr.unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn failed_cells_are_excluded_from_aggregates() {
        let v = AxisValue::K(5);
        let bad = Cell { value: v, repeat: 1, outcome: Err("boom".into()) };
        let s = summarise(&[cell(v, 0, Some(0.5)), bad], &[v]);
        assert_eq!(s.iter().find(|r| r.metric == "p_forget").unwrap().n, 1);
    }

    #[test]
    fn axis_names_parse() {
        for a in [Axis::K, Axis::Gamma, Axis::Fraction, Axis::Method] {
            assert_eq!(a.name().parse::<Axis>().unwrap(), a);
        }
        assert!("lambda".parse::<Axis>().is_err());
    }
}

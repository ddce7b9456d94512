//! The `generate`, `train`, `unlearn` and `evaluate` commands.
//!
//! Commands sharing a run directory chain automatically: `train` picks up
//! data written by `generate`, `unlearn` picks up the teacher written by
//! `train`. Anything not found on disk is rebuilt deterministically from the
//! config.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use unrank_core::io::{self as uio, train_log_csv, unlearn_log_csv};
use unrank_core::metrics::{mrr, normalised_unlearn_time};
use unrank_core::{
    apply_substitutes, build_forget_set, build_protocol, curd_unlearn, generate, run_baseline, Dataset, ForgetOptions,
    ForgetProtocol, ForgetSet, ForgetSpec, Method, MetricsReport, Scalar, ScorerParams, SubstituteMap, TeacherSnapshot,
    TrainEpoch, UnlearnEpoch, Unlearned,
};

use crate::artifacts::{update_manifest, write};
use crate::config::ExperimentConfig;
use crate::error::{HResult, HarnessError};

pub const TEACHER_FILE: &str = "teacher.json";

/// Train and test corpora for one experiment.
pub struct Data<T> {
    pub train: Dataset<T>,
    pub test: Option<Dataset<T>>,
}

/// The teacher plus the per-epoch training times used to normalise unlearning cost.
pub struct Teacher<T> {
    pub snapshot: TeacherSnapshot<T>,
    pub train_log: Option<Vec<TrainEpoch>>,
}

impl<T> Teacher<T> {
    pub fn train_epoch_seconds(&self) -> Option<Vec<f64>> {
        self.train_log.as_ref().map(|l| l.iter().map(|e| e.wall_seconds).collect())
    }
}

/// A resolved forget request.
pub struct Forget {
    pub spec: ForgetSpec,
    pub set: ForgetSet,
    pub subs: SubstituteMap,
}

fn data_dir(cfg: &ExperimentConfig) -> Option<PathBuf> {
    cfg.paths.data_dir.clone().or_else(|| {
        let d = cfg.run_dir().join("data");
        d.join("train").is_dir().then_some(d)
    })
}

pub fn load_data<T: Scalar>(cfg: &ExperimentConfig) -> HResult<Data<T>> {
    match data_dir(cfg) {
        Some(dir) => {
            let train = uio::load_dataset_dir(&dir.join("train"))?;
            let test_dir = dir.join("test");
            let test = if test_dir.is_dir() { Some(uio::load_dataset_dir(&test_dir)?) } else { None };
            Ok(Data { train, test })
        }
        None => {
            let corpus = generate::<T>(&cfg.generator)?;
            Ok(Data { train: corpus.train, test: Some(corpus.test) })
        }
    }
}

pub fn train_teacher<T: Scalar>(cfg: &ExperimentConfig, data: &Data<T>) -> HResult<Teacher<T>> {
    let shape = cfg.shape(data.train.dim());
    let trained = unrank_core::train(&data.train, shape, &cfg.train)?;
    Ok(Teacher { snapshot: TeacherSnapshot::new(trained.params), train_log: Some(trained.log) })
}

fn read_train_log(path: &Path) -> Option<Vec<TrainEpoch>> {
    let text = std::fs::read_to_string(path).ok()?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next()?.split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let (ce, cl, cv, cw) = (col("epoch")?, col("loss")?, col("val_mrr")?, col("wall_seconds")?);
    lines
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            Some(TrainEpoch {
                epoch: c.get(ce)?.parse().ok()?,
                loss: c.get(cl)?.parse().ok()?,
                val_mrr: c.get(cv)?.parse().ok()?,
                wall_seconds: c.get(cw)?.parse().ok()?,
            })
        })
        .collect()
}

/// Loads the teacher checkpoint (explicit path, then `<run>/teacher.json`)
/// or trains one.
pub fn load_or_train_teacher<T: Scalar>(cfg: &ExperimentConfig, data: &Data<T>) -> HResult<Teacher<T>> {
    let run = cfg.run_dir();
    let path = cfg.paths.teacher.clone().or_else(|| {
        let p = run.join(TEACHER_FILE);
        p.is_file().then_some(p)
    });
    match path {
        Some(p) => {
            let params: ScorerParams<T> = uio::load_checkpoint(&p)?;
            if params.shape().input_dim != data.train.dim() {
                return Err(HarnessError::Config(format!(
                    "teacher {} expects {} features but the dataset has {}",
                    p.display(),
                    params.shape().input_dim,
                    data.train.dim()
                )));
            }
            let log_path = p.parent().unwrap_or(Path::new(".")).join("train").join("epochs.csv");
            Ok(Teacher { snapshot: TeacherSnapshot::new(params), train_log: read_train_log(&log_path) })
        }
        None => train_teacher(cfg, data),
    }
}

/// Builds the forget set: an explicit spec file, then the one stored by
/// `generate`, then the configured protocol.
pub fn load_forget<T: Scalar>(cfg: &ExperimentConfig, train: &Dataset<T>) -> HResult<Forget> {
    let stored = data_dir(cfg).map(|d| d.join("forget").join("forget_spec.json")).filter(|p| p.is_file());
    let spec_path = cfg.paths.forget_spec.clone().or(stored);
    let (spec, subs) = match spec_path {
        Some(p) => {
            let spec = uio::load_forget_spec(&p)?;
            let set = build_forget_set(train, &spec, ForgetOptions::default())?;
            let sub_path = cfg.paths.substitutes.clone().or_else(|| {
                let s = p.with_file_name("substitutes.json");
                s.is_file().then_some(s)
            });
            let subs = match sub_path {
                Some(s) => uio::load_substitutes(&s, train)?,
                None => SubstituteMap::random(train, &set, cfg.protocol.seed.wrapping_add(1))?,
            };
            (spec, subs)
        }
        None => build_protocol(train, &cfg.protocol)?,
    };
    forget_from(train, spec, subs)
}

pub fn forget_from<T: Scalar>(train: &Dataset<T>, spec: ForgetSpec, subs: SubstituteMap) -> HResult<Forget> {
    let set = build_forget_set(train, &spec, ForgetOptions::default())?;
    subs.validate(train, &set)?;
    Ok(Forget { spec, set, subs })
}

pub fn forget_for_protocol<T: Scalar>(train: &Dataset<T>, proto: &ForgetProtocol) -> HResult<Forget> {
    let (spec, subs) = build_protocol(train, proto)?;
    forget_from(train, spec, subs)
}

/// Runs one unlearning method against the teacher.
pub fn run_method<T: Scalar>(
    cfg: &ExperimentConfig,
    method: Method,
    data: &Data<T>,
    teacher: &Teacher<T>,
    forget: &Forget,
) -> HResult<Unlearned<T>> {
    let out = match method {
        Method::Curd => curd_unlearn(&teacher.snapshot, &data.train, &forget.set, &forget.subs, &cfg.unlearn)?,
        m => {
            let corrected = apply_substitutes(&data.train, &forget.set, &forget.subs)?;
            run_baseline(m, &teacher.snapshot, &corrected, &forget.set, &cfg.train, &cfg.baseline)?
        }
    };
    Ok(out)
}

pub fn evaluate<T: Scalar>(
    student: &ScorerParams<T>,
    data: &Data<T>,
    teacher: &Teacher<T>,
    forget: &Forget,
    unlearn_log: Option<&[UnlearnEpoch]>,
) -> HResult<MetricsReport> {
    let corrected = apply_substitutes(&data.train, &forget.set, &forget.subs)?;
    let timing = match (unlearn_log, teacher.train_epoch_seconds()) {
        (Some(log), Some(train)) if !log.is_empty() && !train.is_empty() => {
            let secs: Vec<f64> = log.iter().map(|e| e.wall_seconds).collect();
            Some(normalised_unlearn_time(&secs, &train, log.len())?)
        }
        _ => None,
    };
    Ok(MetricsReport::compute(student, teacher.snapshot.params(), &corrected, &forget.set, data.test.as_ref(), timing)?)
}

/// `metrics.json` keeps the CSV column order.
pub fn metrics_json(report: &MetricsReport) -> String {
    let map: serde_json::Map<String, serde_json::Value> = report
        .fields()
        .iter()
        .map(|(k, v)| (k.to_string(), v.map_or(serde_json::Value::Null, serde_json::Value::from)))
        .collect();
    serde_json::to_string_pretty(&serde_json::Value::Object(map)).expect("metrics serialise") + "\n"
}

fn write_metrics(dir: &Path, report: &MetricsReport, files: &mut Vec<PathBuf>) -> HResult<()> {
    let json = dir.join("metrics.json");
    let csv = dir.join("metrics.csv");
    write(&json, &metrics_json(report))?;
    write(&csv, &report.to_csv())?;
    files.extend([json, csv]);
    Ok(())
}

fn fraction_dir(f: f64) -> String {
    format!("fraction-{f}")
}

#[derive(Debug, Serialize)]
struct GenerateManifest<'a> {
    generator: &'a unrank_core::GenConfig,
    protocol: &'a ForgetProtocol,
    fractions: &'a [f64],
}

/// Writes train/test corpora, the configured forget spec and one spec per
/// fraction of the sweep grid. Returns the written files.
pub fn cmd_generate<T: Scalar>(cfg: &ExperimentConfig) -> HResult<Vec<PathBuf>> {
    let corpus = generate::<T>(&cfg.generator)?;
    let data = cfg.paths.data_dir.clone().unwrap_or_else(|| cfg.run_dir().join("data"));
    let mut files = uio::save_dataset_dir(&corpus.train, &data.join("train"))?;
    files.extend(uio::save_dataset_dir(&corpus.test, &data.join("test"))?);

    let mut save_forget = |dir: PathBuf, proto: &ForgetProtocol| -> HResult<()> {
        let (spec, subs) = build_protocol(&corpus.train, proto)?;
        let (sp, sb) = (dir.join("forget_spec.json"), dir.join("substitutes.json"));
        uio::save_forget_spec(&spec, &sp)?;
        uio::save_substitutes(&subs, &corpus.train, &sb)?;
        files.extend([sp, sb]);
        Ok(())
    };
    save_forget(data.join("forget"), &cfg.protocol)?;
    for &f in &cfg.sweep.fraction {
        let proto = ForgetProtocol { fraction: f, ..cfg.protocol.clone() };
        save_forget(data.join("forget").join(fraction_dir(f)), &proto)?;
    }

    let info = GenerateManifest { generator: &cfg.generator, protocol: &cfg.protocol, fractions: &cfg.sweep.fraction };
    let gen_path = data.join("generator.json");
    write(&gen_path, &(serde_json::to_string_pretty(&info).context("generator manifest")? + "\n"))?;
    files.push(gen_path);
    let manifest = update_manifest(cfg, "generate", &files)?;
    files.push(manifest);
    Ok(files)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub epochs: usize,
    pub final_loss: Option<f64>,
    pub p_retain: f64,
    pub p_test: Option<f64>,
}

/// Trains the teacher and writes `teacher.json`, `train/epochs.csv` and
/// `train/metrics.json`.
pub fn cmd_train<T: Scalar>(cfg: &ExperimentConfig) -> HResult<TrainSummary> {
    let data = load_data::<T>(cfg)?;
    let teacher = train_teacher(cfg, &data)?;
    let run = cfg.run_dir();
    let log = teacher.train_log.as_deref().unwrap_or_default();
    let params = teacher.snapshot.params();
    let summary = TrainSummary {
        epochs: log.len(),
        final_loss: log.last().map(|e| e.loss),
        p_retain: mrr(params, &data.train, &data.train.judged())?,
        p_test: data.test.as_ref().map(|t| unrank_core::metrics::p_test(params, t)).transpose()?,
    };
    let ck = run.join(TEACHER_FILE);
    uio::save_checkpoint(params, &ck)?;
    let log_path = run.join("train").join("epochs.csv");
    write(&log_path, &train_log_csv(log))?;
    let metrics = run.join("train").join("metrics.json");
    write(&metrics, &(serde_json::to_string_pretty(&summary).context("train summary")? + "\n"))?;
    update_manifest(cfg, "train", &[ck, log_path, metrics])?;
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct UnlearnOutcome {
    pub report: MetricsReport,
    pub dir: PathBuf,
}

/// Unlearns with `method` and writes the student checkpoint, its epoch log
/// and metrics under `<run>/unlearn/<method>/`.
pub fn cmd_unlearn<T: Scalar>(cfg: &ExperimentConfig, method: Method) -> HResult<UnlearnOutcome> {
    let data = load_data::<T>(cfg)?;
    let teacher = load_or_train_teacher(cfg, &data)?;
    let forget = load_forget(cfg, &data.train)?;
    let out = run_method(cfg, method, &data, &teacher, &forget)?;
    let report = evaluate(&out.params, &data, &teacher, &forget, Some(&out.log))?;

    let dir = cfg.run_dir().join("unlearn").join(method.name());
    let ck = dir.join("student.json");
    uio::save_checkpoint(&out.params, &ck)?;
    let log = dir.join("epochs.csv");
    write(&log, &unlearn_log_csv(method.name(), &out.log))?;
    let mut files = vec![ck, log];
    write_metrics(&dir, &report, &mut files)?;
    update_manifest(cfg, &format!("unlearn/{}", method.name()), &files)?;
    Ok(UnlearnOutcome { report, dir })
}

/// Evaluates a checkpoint (default: the teacher) against the teacher and
/// writes `<run>/evaluate/<name>/metrics.{json,csv}`.
pub fn cmd_evaluate<T: Scalar>(
    cfg: &ExperimentConfig,
    checkpoint: Option<&Path>,
    name: Option<&str>,
) -> HResult<UnlearnOutcome> {
    let data = load_data::<T>(cfg)?;
    let teacher = load_or_train_teacher(cfg, &data)?;
    let forget = load_forget(cfg, &data.train)?;
    let student = match checkpoint {
        Some(p) => uio::load_checkpoint::<T>(p)?,
        None => teacher.snapshot.params().clone(),
    };
    let report = evaluate(&student, &data, &teacher, &forget, None)?;
    let name = name
        .map(str::to_string)
        .or_else(|| checkpoint.and_then(|p| p.file_stem()).map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "teacher".into());
    let dir = cfg.run_dir().join("evaluate").join(&name);
    let mut files = Vec::new();
    write_metrics(&dir, &report, &mut files)?;
    update_manifest(cfg, &format!("evaluate/{name}"), &files)?;
    Ok(UnlearnOutcome { report, dir })
}

//! File formats.
//!
//! * pairs TSV: `query_id<TAB>doc_id<TAB>label` with label `1` or `0`
//! * features TSV: `id<TAB>x_1<TAB>...<TAB>x_n`
//! * forget spec JSON: `{"forget_queries": [...], "forget_docs": [...]}`
//! * substitutes JSON: `{"substitutes": {"query|doc": "substitute"}}`
//! * checkpoint JSON: scorer shape plus flat weights
//!
//! Blank lines and lines starting with `#` are skipped in TSV input.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curd::UnlearnEpoch;
use crate::data::{Dataset, FeatureTable, ForgetSpec, Label, SubstituteMap};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scorer::{ScorerKind, ScorerParams, ScorerShape};
use crate::trainer::TrainEpoch;

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, msg: msg.into() }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

pub fn parse_pairs(text: &str, path: &Path) -> Result<Vec<(String, String, Label)>> {
    data_lines(text)
        .map(|(n, line)| {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(parse_err(path, n, format!("expected 3 columns, found {}", cols.len())));
            }
            let label = match cols[2].trim() {
                "1" => Label::Positive,
                "0" => Label::Negative,
                other => return Err(parse_err(path, n, format!("label must be 0 or 1, got `{other}`"))),
            };
            Ok((cols[0].to_string(), cols[1].to_string(), label))
        })
        .collect()
}

pub fn format_pairs(pairs: &[(String, String, Label)]) -> String {
    let mut out = String::new();
    for (q, d, l) in pairs {
        let _ = writeln!(out, "{q}\t{d}\t{}", if l.is_positive() { 1 } else { 0 });
    }
    out
}

/// Parses a feature table; every row must have the same width.
pub fn parse_features<T: Scalar>(text: &str, path: &Path) -> Result<(usize, FeatureTable<T>)> {
    let mut table = FeatureTable::new();
    let mut dim = None;
    for (n, line) in data_lines(text) {
        let mut cols = line.split('\t');
        let id = cols.next().unwrap_or_default().to_string();
        let row = cols
            .map(|c| {
                c.trim().parse::<f64>().map(T::lit).map_err(|e| parse_err(path, n, format!("bad feature `{c}`: {e}")))
            })
            .collect::<Result<Vec<T>>>()?;
        if row.is_empty() {
            return Err(parse_err(path, n, "row has no features"));
        }
        match dim {
            None => dim = Some(row.len()),
            Some(k) if k != row.len() => {
                return Err(parse_err(path, n, format!("expected {k} features, found {}", row.len())))
            }
            _ => {}
        }
        if table.insert(id.clone(), row).is_some() {
            return Err(parse_err(path, n, format!("duplicate id `{id}`")));
        }
    }
    let dim = dim.ok_or_else(|| parse_err(path, 0, "no feature rows"))?;
    Ok((dim, table))
}

/// Features are written with Rust's shortest round-trip float formatting.
pub fn format_features<T: Scalar>(table: &FeatureTable<T>) -> String {
    let mut out = String::new();
    for (id, row) in table {
        out.push_str(id);
        for x in row {
            let _ = write!(out, "\t{x}");
        }
        out.push('\n');
    }
    out
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, text).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Loads a dataset from a pairs file and the two feature files.
pub fn load_dataset<T: Scalar>(pairs: &Path, query_features: &Path, doc_features: &Path) -> Result<Dataset<T>> {
    let records = parse_pairs(&read(pairs)?, pairs)?;
    let (qd, qf) = parse_features::<T>(&read(query_features)?, query_features)?;
    let (dd, df) = parse_features::<T>(&read(doc_features)?, doc_features)?;
    if qd != dd {
        return Err(Error::InvalidDataset(format!("query features have {qd} columns but document features have {dd}")));
    }
    Dataset::from_records(qd, records, &qf, &df)
}

/// File names used for a dataset stored in a directory.
pub const PAIRS_FILE: &str = "pairs.tsv";
pub const QUERY_FEATURES_FILE: &str = "query_features.tsv";
pub const DOC_FEATURES_FILE: &str = "doc_features.tsv";

pub fn load_dataset_dir<T: Scalar>(dir: &Path) -> Result<Dataset<T>> {
    load_dataset(&dir.join(PAIRS_FILE), &dir.join(QUERY_FEATURES_FILE), &dir.join(DOC_FEATURES_FILE))
}

/// Writes the three dataset files into `dir` and returns their paths.
pub fn save_dataset_dir<T: Scalar>(dataset: &Dataset<T>, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let files = [
        (PAIRS_FILE, format_pairs(&dataset.records())),
        (QUERY_FEATURES_FILE, format_features(&dataset.query_feature_table())),
        (DOC_FEATURES_FILE, format_features(&dataset.doc_feature_table())),
    ];
    files
        .into_iter()
        .map(|(name, text)| {
            let p = dir.join(name);
            write(&p, &text)?;
            Ok(p)
        })
        .collect()
}

pub fn load_forget_spec(path: &Path) -> Result<ForgetSpec> {
    Ok(serde_json::from_str(&read(path)?)?)
}

pub fn save_forget_spec(spec: &ForgetSpec, path: &Path) -> Result<()> {
    write(path, &(serde_json::to_string_pretty(spec)? + "\n"))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubstituteFile {
    substitutes: BTreeMap<String, String>,
}

/// Substitute keys are `query|doc`.
pub fn substitutes_to_json<T: Scalar>(subs: &SubstituteMap, dataset: &Dataset<T>) -> Result<String> {
    let substitutes = subs
        .iter()
        .map(|((q, d), r)| (format!("{}|{}", dataset.query_id(q), dataset.doc_id(d)), dataset.doc_id(r).to_string()))
        .collect();
    Ok(serde_json::to_string_pretty(&SubstituteFile { substitutes })? + "\n")
}

pub fn substitutes_from_json<T: Scalar>(text: &str, dataset: &Dataset<T>) -> Result<SubstituteMap> {
    let file: SubstituteFile = serde_json::from_str(text)?;
    let mut out = SubstituteMap::new();
    for (key, sub) in file.substitutes {
        let (q, d) = key
            .split_once('|')
            .ok_or_else(|| Error::InvalidSubstitute(format!("key `{key}` is not of the form query|doc")))?;
        out.insert(dataset.query_idx(q)?, dataset.doc_idx(d)?, dataset.doc_idx(&sub)?);
    }
    Ok(out)
}

pub fn load_substitutes<T: Scalar>(path: &Path, dataset: &Dataset<T>) -> Result<SubstituteMap> {
    substitutes_from_json(&read(path)?, dataset)
}

pub fn save_substitutes<T: Scalar>(subs: &SubstituteMap, dataset: &Dataset<T>, path: &Path) -> Result<()> {
    write(path, &substitutes_to_json(subs, dataset)?)
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialised scorer. Weights are stored as `f64` regardless of the scalar
/// the model was trained with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub scalar: String,
    pub kind: ScorerKind,
    pub input_dim: usize,
    pub hidden: usize,
    pub weights: Vec<f64>,
}

impl Checkpoint {
    pub fn from_params<T: Scalar>(params: &ScorerParams<T>) -> Self {
        let s = params.shape();
        Self {
            format_version: CHECKPOINT_VERSION,
            scalar: T::NAME.to_string(),
            kind: s.kind,
            input_dim: s.input_dim,
            hidden: s.hidden,
            weights: params.weights().iter().map(|w| w.as_f64()).collect(),
        }
    }

    pub fn to_params<T: Scalar>(&self) -> Result<ScorerParams<T>> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint format_version {} (expected {CHECKPOINT_VERSION})",
                self.format_version
            )));
        }
        let shape = ScorerShape::new(self.kind, self.input_dim, self.hidden);
        ScorerParams::new(shape, self.weights.iter().map(|w| T::lit(*w)).collect())
    }
}

pub fn save_checkpoint<T: Scalar>(params: &ScorerParams<T>, path: &Path) -> Result<()> {
    write(path, &(serde_json::to_string(&Checkpoint::from_params(params))? + "\n"))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<ScorerParams<T>> {
    let ck: Checkpoint = serde_json::from_str(&read(path)?)?;
    ck.to_params()
}

pub fn train_log_csv(log: &[TrainEpoch]) -> String {
    let mut out = String::from("epoch,loss,val_mrr,wall_seconds\n");
    for e in log {
        let _ = writeln!(out, "{},{},{},{}", e.epoch, e.loss, e.val_mrr, e.wall_seconds);
    }
    out
}

pub fn unlearn_log_csv(method: &str, log: &[UnlearnEpoch]) -> String {
    let mut out = format!("# method={method}\nepoch,fc_loss,retain_loss,wall_seconds\n");
    for e in log {
        let _ = writeln!(out, "{},{},{},{}", e.epoch, e.fc_loss, e.retain_loss, e.wall_seconds);
    }
    out
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write(path, text)
}

pub fn read_text(path: &Path) -> Result<String> {
    read(path)
}

//! Output bookkeeping: the run manifest and timing-free content hashing.
//!
//! Wall-clock values only ever appear in columns or keys named in
//! [`TIMING_FIELDS`]. [`strip_timing`] removes them so that everything else
//! can be compared and hashed byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::HResult;

pub const TIMING_FIELDS: [&str; 2] = ["wall_seconds", "unlearn_time_normalised"];
pub const MANIFEST: &str = "manifest.json";

/// File content with timing columns (CSV) or keys (JSON) removed.
pub fn strip_timing(path: &Path, content: &[u8]) -> Vec<u8> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let Ok(text) = std::str::from_utf8(content) else {
        return content.to_vec();
    };
    match ext {
        "csv" => strip_csv(text).into_bytes(),
        "json" => match serde_json::from_str::<Value>(text) {
            Ok(mut v) => {
                strip_json(&mut v);
                serde_json::to_vec_pretty(&v).expect("value serialises")
            }
            Err(_) => content.to_vec(),
        },
        _ => content.to_vec(),
    }
}

fn strip_csv(text: &str) -> String {
    let mut drop: Vec<usize> = Vec::new();
    let mut header_seen = false;
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        if line.starts_with('#') {
            out.push_str(line);
            out.push('\n');
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if !header_seen {
            header_seen = true;
            drop =
                cells.iter().enumerate().filter(|(_, c)| TIMING_FIELDS.contains(&c.trim())).map(|(i, _)| i).collect();
        }
        let kept: Vec<&str> = cells.iter().enumerate().filter(|(i, _)| !drop.contains(i)).map(|(_, c)| *c).collect();
        out.push_str(&kept.join(","));
        out.push('\n');
    }
    out
}

fn strip_json(v: &mut Value) {
    match v {
        Value::Object(map) => {
            for key in TIMING_FIELDS {
                map.remove(key);
            }
            map.values_mut().for_each(strip_json);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_json),
        _ => {}
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize)]
struct Entry<'a> {
    config: &'a ExperimentConfig,
    /// sha256 of each file's timing-free content, keyed by run-relative path.
    files: BTreeMap<String, String>,
}

/// Records `files` (run-relative) for `command` in `<run>/manifest.json`,
/// keeping entries written by other commands.
pub fn update_manifest(cfg: &ExperimentConfig, command: &str, files: &[PathBuf]) -> HResult<PathBuf> {
    let run = cfg.run_dir();
    let path = run.join(MANIFEST);
    let mut root: Value = match fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text).with_context(|| format!("{}", path.display()))?,
        Err(_) => serde_json::json!({}),
    };
    let mut hashes = BTreeMap::new();
    for f in files {
        let bytes = fs::read(f).with_context(|| format!("{}", f.display()))?;
        let rel = f.strip_prefix(&run).unwrap_or(f).to_string_lossy().replace('\\', "/");
        hashes.insert(rel, sha256_hex(&strip_timing(f, &bytes)));
    }
    let entry = serde_json::to_value(Entry { config: cfg, files: hashes }).context("manifest entry")?;
    let obj = root.as_object_mut().context("manifest root must be an object")?;
    obj.insert("tool".into(), Value::String(format!("unrank {}", env!("CARGO_PKG_VERSION"))));
    let commands = obj.entry("commands").or_insert_with(|| serde_json::json!({}));
    commands.as_object_mut().context("manifest `commands` must be an object")?.insert(command.to_string(), entry);
    // serde_json maps are ordered, so the manifest is stable across runs.
    write(&path, &(serde_json::to_string_pretty(&root).context("manifest")? + "\n"))?;
    Ok(path)
}

pub fn write(path: &Path, text: &str) -> HResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Every regular file under `dir`, sorted by path.
pub fn walk(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

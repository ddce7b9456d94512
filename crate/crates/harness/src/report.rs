//! `report`: collects every `metrics.json` and `sweep_summary.csv` under a
//! run directory into one Markdown file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde_json::Value;

use crate::artifacts::{walk, write};
use crate::error::HResult;

const COLUMNS: [&str; 7] =
    ["p_forget", "p_correct", "p_retain", "p_test", "p_delta_retain", "p_forget_query", "p_forget_doc"];

fn cell(v: Option<&Value>) -> String {
    match v.and_then(Value::as_f64) {
        Some(x) => format!("{x:.4}"),
        None => "-".into(),
    }
}

/// Renders the report for `run` and writes it to `<run>/report.md`.
pub fn cmd_report(run: &Path) -> HResult<(PathBuf, String)> {
    let files = walk(run).with_context(|| format!("reading {}", run.display()))?;
    let mut out = format!("# Report for `{}`\n\n", run.display());

    let metrics: Vec<&PathBuf> = files.iter().filter(|p| p.file_name().is_some_and(|n| n == "metrics.json")).collect();
    if !metrics.is_empty() {
        out.push_str("## Evaluations\n\n| run | ");
        out.push_str(&COLUMNS.join(" | "));
        out.push_str(" |\n|---|");
        out.push_str(&"---|".repeat(COLUMNS.len()));
        out.push('\n');
        for p in metrics {
            let v: Value =
                serde_json::from_str(&std::fs::read_to_string(p)?).with_context(|| format!("{}", p.display()))?;
            let name = p.parent().and_then(|d| d.strip_prefix(run).ok()).map(|d| d.display().to_string());
            let _ = write!(out, "| {} |", name.unwrap_or_default());
            for c in COLUMNS {
                let _ = write!(out, " {} |", cell(v.get(c)));
            }
            out.push('\n');
        }
        out.push('\n');
    }

    for p in files.iter().filter(|p| p.file_name().is_some_and(|n| n == "sweep_summary.csv")) {
        let text = std::fs::read_to_string(p)?;
        let rel = p.strip_prefix(run).unwrap_or(p).display().to_string();
        let _ = writeln!(out, "## Sweep `{rel}`\n\n| value | metric | n | mean | stderr |\n|---|---|---|---|---|");
        for line in text.lines().skip(1) {
            let c: Vec<&str> = line.split(',').collect();
            if c.len() == 6 && ["p_forget", "p_correct", "p_retain", "p_test"].contains(&c[2]) {
                let _ = writeln!(out, "| {} | {} | {} | {} | {} |", c[1], c[2], c[3], c[4], c[5]);
            }
        }
        out.push('\n');
    }
    let path = run.join("report.md");
    write(&path, &out)?;
    Ok((path, out))
}

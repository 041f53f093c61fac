//! Result files.
//!
//! `runs.jsonl` and `summary.csv` depend only on the config and master seed.
//! Wall-clock timings go to `timings.jsonl` so the other two stay
//! byte-reproducible.

use std::fs;
use std::path::{Path, PathBuf};

use super::{summary_csv, ExperimentReport, RunResult};
use crate::error::{Error, Result};
use crate::federated::write_round_trace;

pub const RUNS_FILE: &str = "runs.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TIMINGS_FILE: &str = "timings.jsonl";
pub const TRACES_DIR: &str = "traces";

fn jsonl<T: serde::Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it).map_err(|e| Error::invalid(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf> {
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes every artifact into `dir` (created if missing) and returns the paths written.
pub fn write_outputs(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = vec![
        write(dir.join(RUNS_FILE), &jsonl(&report.runs)?)?,
        write(dir.join(SUMMARY_FILE), &summary_csv(&report.summaries))?,
        write(dir.join(TIMINGS_FILE), &jsonl(&report.timings)?)?,
    ];
    if !report.traces.is_empty() {
        let tdir = dir.join(TRACES_DIR);
        fs::create_dir_all(&tdir).map_err(|e| Error::io(&tdir, e))?;
        for (key, records) in &report.traces {
            let path = tdir.join(format!("{key}.jsonl"));
            let mut buf = Vec::new();
            write_round_trace(&mut buf, records)?;
            fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Parses `runs.jsonl` text. Blank lines are skipped; a malformed line is
/// reported with its 1-based number.
pub fn parse_runs(text: &str) -> Result<Vec<RunResult>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: RunResult = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if let Some(a) = r.accuracy {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("accuracy {a} outside [0, 1]"),
                });
            }
        }
        out.push(r);
    }
    if out.is_empty() {
        return Err(Error::invalid("no runs found"));
    }
    Ok(out)
}

pub fn read_runs(path: &Path) -> Result<Vec<RunResult>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_runs(&text)
}

//! Cell summaries, trend checks and table rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::Setup;
use super::RunResult;
use crate::error::{Error, Result};

/// Key ordering cells setup-major, then epsilon ascending (absent first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct CellKey(Setup, Option<EpsKey>);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct EpsKey(u64);

impl EpsKey {
    fn new(e: f64) -> Self {
        EpsKey(e.to_bits())
    }

    fn get(self) -> f64 {
        f64::from_bits(self.0)
    }
}

impl PartialOrd for EpsKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for EpsKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.get().total_cmp(&other.get())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub setup: Setup,
    pub epsilon: Option<f64>,
    /// Fractions in `[0, 1]`; `None` when every run in the cell failed.
    pub mean_accuracy: Option<f64>,
    pub std_accuracy: Option<f64>,
    /// Successful runs.
    pub n_runs: usize,
    pub n_failed: usize,
    /// Fewer than two successful runs, or some run failed.
    pub flagged: bool,
}

/// Mean and sample standard deviation (`n - 1` denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Some((mean, (ss / (n - 1.0)).sqrt()))
}

/// Groups runs by `(setup, epsilon)` and summarizes each cell. Input order
/// does not matter: runs are sorted by run index before any arithmetic.
pub fn summarize(results: &[RunResult]) -> Vec<CellSummary> {
    let mut cells: BTreeMap<CellKey, Vec<&RunResult>> = BTreeMap::new();
    for r in results {
        cells
            .entry(CellKey(r.setup, r.epsilon.map(EpsKey::new)))
            .or_default()
            .push(r);
    }
    cells
        .into_iter()
        .map(|(CellKey(setup, eps), mut runs)| {
            runs.sort_by_key(|r| r.run_index);
            let accs: Vec<f64> = runs.iter().filter_map(|r| r.accuracy).collect();
            let n_failed = runs.len() - accs.len();
            let ms = mean_std(&accs);
            CellSummary {
                setup,
                epsilon: eps.map(EpsKey::get),
                mean_accuracy: ms.map(|m| m.0),
                std_accuracy: ms.map(|m| m.1),
                n_runs: accs.len(),
                n_failed,
                flagged: accs.len() < 2 || n_failed > 0,
            }
        })
        .collect()
}

/// Renders a fraction pair as percentages: `"60.03 ± 1.37"`.
pub fn format_cell(mean: f64, std: f64) -> String {
    format!("{:.2} ± {:.2}", mean * 100.0, std * 100.0)
}

pub const SUMMARY_CSV_HEADER: &str = "setup,epsilon,mean_accuracy,std_accuracy,n_runs";

fn opt_num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn summary_csv(cells: &[CellSummary]) -> String {
    let mut out = String::from(SUMMARY_CSV_HEADER);
    out.push('\n');
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            c.setup.tag(),
            opt_num(c.epsilon),
            opt_num(c.mean_accuracy),
            opt_num(c.std_accuracy),
            c.n_runs
        );
    }
    out
}

/// Plain-text grid: one block per setup, one row per epsilon.
pub fn render_table(cells: &[CellSummary]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>8}  {:<18} {:>5}",
        "Setup", "epsilon", "accuracy (%)", "runs"
    );
    let mut last: Option<Setup> = None;
    for c in cells {
        let name = if last == Some(c.setup) {
            ""
        } else {
            c.setup.display_name()
        };
        last = Some(c.setup);
        let eps = c.epsilon.map(|e| e.to_string()).unwrap_or_else(|| "-".into());
        let acc = match (c.mean_accuracy, c.std_accuracy) {
            (Some(m), Some(s)) => format_cell(m, s),
            _ => "failed".into(),
        };
        let flag = if c.flagged { " *" } else { "" };
        let _ = writeln!(out, "{name:<16} {eps:>8}  {acc:<18} {:>5}{flag}", c.n_runs);
    }
    if cells.iter().any(|c| c.flagged) {
        out.push_str("* fewer than two successful runs, or failed runs in the cell\n");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendReport {
    pub setup: Setup,
    pub reference: Setup,
    /// Adjacent epsilon pairs where the mean drops at all.
    pub decreases: usize,
    /// Adjacent pairs where the mean drops by more than the higher-epsilon cell's std.
    pub monotone_violations: usize,
    /// Reference mean minus the best private cell's mean.
    pub baseline_gap: f64,
    /// Private cells whose mean exceeds reference mean + reference std.
    pub above_reference: usize,
}

/// Checks that accuracy grows with epsilon for `setup` and stays below its
/// non-private reference (the matching non-DP setup if summarized,
/// otherwise the baseline).
pub fn trend_check(summaries: &[CellSummary], setup: Setup) -> Result<TrendReport> {
    let mut pts: Vec<(f64, f64, f64)> = summaries
        .iter()
        .filter(|c| c.setup == setup)
        .filter_map(|c| Some((c.epsilon?, c.mean_accuracy?, c.std_accuracy?)))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.len() < 3 {
        return Err(Error::invalid(format!(
            "trend check for {setup} needs at least 3 epsilon cells, found {}",
            pts.len()
        )));
    }
    let find = |s: Setup| {
        summaries
            .iter()
            .find(|c| c.setup == s && c.epsilon.is_none())
            .and_then(|c| Some((c.mean_accuracy?, c.std_accuracy?)))
    };
    let counterpart = setup.counterpart();
    let (reference, (ref_mean, ref_std)) = match find(counterpart) {
        Some(v) if counterpart != setup => (counterpart, v),
        _ => (
            Setup::Baseline,
            find(Setup::Baseline)
                .ok_or_else(|| Error::invalid(format!("trend check for {setup} needs a baseline cell")))?,
        ),
    };
    let mut decreases = 0;
    let mut violations = 0;
    for w in pts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi.1 < lo.1 {
            decreases += 1;
            if lo.1 - hi.1 > hi.2 {
                violations += 1;
            }
        }
    }
    let best = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let above = pts.iter().filter(|p| p.1 > ref_mean + ref_std).count();
    Ok(TrendReport {
        setup,
        reference,
        decreases,
        monotone_violations: violations,
        baseline_gap: ref_mean - best,
        above_reference: above,
    })
}

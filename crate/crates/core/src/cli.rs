//! The `privtext` command line.
//!
//! Exit codes: 0 success, 1 run-time or invariant failure, 2 usage or
//! configuration error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::corpus::{
    heterogeneity_score, histogram, partition_iid, partition_noniid_shards, train_test_split, unassigned, write_corpus,
    ClientPartition, CorpusFormat, Label,
};
use crate::dp::{calibrate_sigma, AccountantState, PrivacyBudget, DEFAULT_DELTA};
use crate::error::Error;
use crate::harness::{self, read_runs, render_table, summarize, ExperimentConfig, RunOptions};
use crate::synth::{self, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "privtext",
    version,
    about = "Differentially private and federated text classification experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic three-class corpus with a 60/28/12 neutral/positive/negative mix.
    GenCorpus(GenCorpusArgs),
    /// Find the noise multiplier that meets a privacy budget and print it as JSON.
    Calibrate(CalibrateArgs),
    /// Run an experiment grid and write runs.jsonl and summary.csv.
    Run(RunArgs),
    /// Render the accuracy table from a runs.jsonl file.
    Report(ReportArgs),
    /// Print per-client label histograms for the configured partitions.
    InspectPartition(InspectArgs),
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    /// Output directory; the corpus is written to corpus.txt (phrasebank) or corpus.tsv.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of sentences.
    #[arg(long, default_value_t = 3000)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = CorpusFormat::Phrasebank)]
    pub format: CorpusFormat,
    /// Per-mille chance that a sentence also carries another class's cue.
    #[arg(long, default_value_t = 100)]
    pub confusion_per_mille: u32,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    /// Sampling rate q = lot size / dataset size.
    #[arg(long)]
    pub sample_rate: f64,
    /// Total number of DP-SGD steps.
    #[arg(long)]
    pub steps: u64,
    /// Directory for calibration.json and, with --trace-every, accountant_trace.jsonl.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the accountant's per-order totals every N steps (requires --out).
    #[arg(long, requires = "out")]
    pub trace_every: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config value by dotted key, e.g. `--set federated.rounds=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_key_val)]
    pub set: Vec<(String, String)>,
    /// Override the master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the corpus file format.
    #[arg(long, value_enum)]
    pub format: Option<CorpusFormat>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output directory for runs.jsonl, summary.csv, timings.jsonl and traces.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A runs.jsonl file, or a directory containing one.
    pub runs: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scheme {
    Iid,
    Noniid,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Partitioning to show; both when omitted.
    #[arg(long, value_enum)]
    pub scheme: Option<Scheme>,
}

fn parse_key_val(s: &str) -> std::result::Result<(String, String), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected KEY=VALUE, got {s:?}"))?;
    if k.trim().is_empty() {
        return Err(format!("empty key in {s:?}"));
    }
    Ok((k.trim().to_string(), v.trim().to_string()))
}

/// A failure together with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: Error,
}

impl Failure {
    fn usage(error: Error) -> Self {
        Failure {
            code: EXIT_USAGE,
            error,
        }
    }

    fn runtime(error: Error) -> Self {
        Failure {
            code: EXIT_RUNTIME,
            error,
        }
    }
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let code = match error {
            Error::Config(_) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        };
        Failure { code, error }
    }
}

type CmdResult = std::result::Result<i32, Failure>;

/// Parses `args` (including the program name) and runs the command,
/// writing human output to `out` and diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{e}");
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.error);
            f.code
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    match cmd {
        Command::GenCorpus(a) => cmd_gen_corpus(&a, out),
        Command::Calibrate(a) => cmd_calibrate(&a, out),
        Command::Run(a) => cmd_run(&a, out, err),
        Command::Report(a) => cmd_report(&a, out),
        Command::InspectPartition(a) => cmd_inspect_partition(&a, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> std::result::Result<(), Failure> {
    out.write_all(text.as_bytes())
        .map_err(|e| Failure::runtime(Error::io("standard output", e)))
}

fn create_dir(dir: &Path) -> std::result::Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::runtime(Error::io(dir, e)))
}

fn cmd_gen_corpus(a: &GenCorpusArgs, out: &mut dyn Write) -> CmdResult {
    let cfg = SynthConfig {
        size: a.size,
        seed: a.seed,
        confusion_per_mille: a.confusion_per_mille,
    };
    let examples = synth::generate(&cfg).map_err(Failure::usage)?;
    create_dir(&a.out)?;
    let name = match a.format {
        CorpusFormat::Phrasebank => "corpus.txt",
        CorpusFormat::Tsv => "corpus.tsv",
    };
    let path = a.out.join(name);
    std::fs::write(&path, write_corpus(&examples, a.format)).map_err(|e| Failure::runtime(Error::io(&path, e)))?;
    let h = histogram(examples.iter().map(|e| e.label));
    emit(
        out,
        &format!(
            "wrote {} examples to {} (negative {}, neutral {}, positive {})\n",
            examples.len(),
            path.display(),
            h[Label::Negative.index()],
            h[Label::Neutral.index()],
            h[Label::Positive.index()]
        ),
    )?;
    Ok(EXIT_OK)
}

fn cmd_calibrate(a: &CalibrateArgs, out: &mut dyn Write) -> CmdResult {
    let budget = PrivacyBudget::new(a.epsilon, a.delta).map_err(Failure::usage)?;
    let cal = calibrate_sigma(&budget, a.sample_rate, a.steps).map_err(|e| match e {
        Error::InvalidArgument(_) => Failure::usage(e),
        other => Failure::runtime(other),
    })?;
    let json = serde_json::json!({
        "target_epsilon": a.epsilon,
        "delta": a.delta,
        "sample_rate": a.sample_rate,
        "steps": a.steps,
        "sigma": cal.sigma,
        "achieved_epsilon": cal.epsilon,
        "best_order": cal.best_order,
        "iterations": cal.iterations,
        "at_floor": cal.at_floor,
    });
    let text = serde_json::to_string_pretty(&json).map_err(|e| Failure::runtime(Error::invalid(e.to_string())))?;
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        let path = dir.join("calibration.json");
        std::fs::write(&path, format!("{text}\n")).map_err(|e| Failure::runtime(Error::io(&path, e)))?;
        if let Some(every) = a.trace_every {
            if every == 0 {
                return Err(Failure::usage(Error::invalid("--trace-every must be at least 1")));
            }
            let mut trace = String::new();
            let mut acc = AccountantState::new();
            let mut done = 0;
            while done < a.steps {
                let k = every.min(a.steps - done);
                acc.compose_in_place(a.sample_rate, cal.sigma, k)?;
                done += k;
                trace.push_str(&acc.trace_line(done).to_string());
                trace.push('\n');
            }
            let path = dir.join("accountant_trace.jsonl");
            std::fs::write(&path, trace).map_err(|e| Failure::runtime(Error::io(&path, e)))?;
        }
    }
    emit(out, &format!("{text}\n"))?;
    Ok(EXIT_OK)
}

fn load_config(a: &ConfigArgs) -> std::result::Result<ExperimentConfig, Failure> {
    let mut set = a.set.clone();
    if let Some(seed) = a.seed {
        set.push(("master_seed".into(), seed.to_string()));
    }
    if let Some(f) = a.format {
        let name = match f {
            CorpusFormat::Phrasebank => "phrasebank",
            CorpusFormat::Tsv => "tsv",
        };
        set.push(("corpus.format".into(), format!("\"{name}\"")));
    }
    ExperimentConfig::load(&a.config, &set).map_err(Failure::usage)
}

fn cmd_run(a: &RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let config = load_config(&a.config)?;
    let options = RunOptions::from_env().map_err(Failure::usage)?;
    let report = harness::run_experiment(&config, &options)?;
    harness::write_outputs(&report, &a.out).map_err(Failure::runtime)?;
    emit(out, &render_table(&report.summaries))?;
    for r in report.runs.iter().filter(|r| !r.succeeded()) {
        let _ = writeln!(
            err,
            "warning: run {} failed: {}",
            r.key(),
            r.failure.as_deref().unwrap_or("")
        );
    }
    if report.ok() {
        Ok(EXIT_OK)
    } else {
        for f in &report.invariant_failures {
            let _ = writeln!(err, "invariant violated: {f}");
        }
        Ok(EXIT_RUNTIME)
    }
}

fn cmd_report(a: &ReportArgs, out: &mut dyn Write) -> CmdResult {
    let path = if a.runs.is_dir() {
        a.runs.join(harness::RUNS_FILE)
    } else {
        a.runs.clone()
    };
    let runs = read_runs(&path).map_err(Failure::runtime)?;
    emit(out, &render_table(&summarize(&runs)))?;
    Ok(EXIT_OK)
}

fn partition_table(name: &str, parts: &[ClientPartition], train_len: usize, global: &[usize; 3]) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    let _ = writeln!(s, "{name} partition");
    let _ = writeln!(
        s,
        "{:>6} {:>6} {:>9} {:>8} {:>9}",
        "client", "size", "negative", "neutral", "positive"
    );
    for p in parts {
        let h = p.label_histogram;
        let _ = writeln!(
            s,
            "{:>6} {:>6} {:>9} {:>8} {:>9}",
            p.client_id,
            p.len(),
            h[0],
            h[1],
            h[2]
        );
    }
    let _ = writeln!(s, "unassigned: {}", unassigned(parts, train_len).len());
    let _ = writeln!(s, "heterogeneity score: {:.4}", heterogeneity_score(parts, global));
    s
}

fn cmd_inspect_partition(a: &InspectArgs, out: &mut dyn Write) -> CmdResult {
    let config = load_config(&a.config)?;
    let (examples, _) = harness::load_examples(&config)?;
    let (train, _) = train_test_split(&examples, &config.split)?;
    let labels: Vec<Label> = train.iter().map(|e| e.label).collect();
    let global = histogram(labels.iter().copied());
    let n = config.federated.num_clients;
    let p = config.partition;
    let mut text = String::new();
    if a.scheme != Some(Scheme::Noniid) {
        let parts = partition_iid(&labels, n, p.seed)?;
        text.push_str(&partition_table("IID", &parts, train.len(), &global));
    }
    if a.scheme != Some(Scheme::Iid) {
        if !text.is_empty() {
            text.push('\n');
        }
        let parts = partition_noniid_shards(&labels, p.shard_size, p.shards_per_client, n, p.seed)?;
        text.push_str(&partition_table("Non-IID", &parts, train.len(), &global));
    }
    emit(out, &text)?;
    Ok(EXIT_OK)
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use shapevm::engine::{Mode, VmConfig};
use shapevm::harness::{self, BenchSpec, HarnessError, Measured};
use shapevm::metrics::{self, relative_report, Limit, RunRecord};

/// Exit status for command-line usage errors.
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "shapevm", version, about = "Run and benchmark programs on the typed-shape VM")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a program and print its output.
    Run {
        path: PathBuf,
        #[command(flatten)]
        vm: VmFlags,
        #[arg(long, default_value = "typed")]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        warmup: usize,
        #[arg(long, default_value_t = 1)]
        iters: usize,
        /// Metrics document written to standard error (or --metrics-out).
        #[arg(long, value_enum, default_value = "none")]
        metrics: MetricsFormat,
        #[arg(long)]
        metrics_out: Option<PathBuf>,
        /// Print every block's versions and their contexts to standard error.
        #[arg(long)]
        dump_versions: bool,
        /// Print inline cache states to standard error.
        #[arg(long)]
        dump_pics: bool,
    },
    /// Run a program under several configurations and report counters
    /// gathered over the timing iterations.
    Bench {
        path: PathBuf,
        #[command(flatten)]
        vm: VmFlags,
        /// Configurations such as `oracle`, `pic`, `typed/0`, `typed/inf`.
        #[arg(long = "config", value_delimiter = ',', default_values = ["pic", "typed/0", "typed/2", "typed/inf"])]
        configs: Vec<String>,
        #[arg(long, default_value_t = 10)]
        warmup: usize,
        #[arg(long, default_value_t = 10)]
        iters: usize,
        #[arg(long, value_enum, default_value = "json")]
        metrics: MetricsFormat,
        #[arg(long)]
        metrics_out: Option<PathBuf>,
    },
    /// Compare report rows against a baseline row.
    Compare {
        /// Report (JSON or CSV) holding the candidate rows.
        report: PathBuf,
        /// Report holding the baseline; defaults to `report`.
        baseline_report: Option<PathBuf>,
        /// Label of the baseline row, e.g. `pic_untyped`.
        #[arg(long, default_value = "pic_untyped")]
        baseline: String,
        #[arg(long, value_enum, default_value = "text")]
        format: CompareFormat,
    },
}

#[derive(Args, Clone, Copy)]
struct VmFlags {
    #[arg(long, default_value = "2")]
    maxshapes: Limit,
    #[arg(long, default_value_t = 20)]
    maxvers: usize,
    #[arg(long, default_value_t = 8)]
    pic_limit: usize,
    /// Verify every version's context against live values.
    #[arg(long)]
    assert_contexts: bool,
}

impl VmFlags {
    fn config(self, mode: Mode, maxshapes: Limit) -> VmConfig {
        VmConfig { mode, maxshapes, maxvers: self.maxvers, pic_limit: self.pic_limit, assert_contexts: self.assert_contexts }
    }

    fn parse_config(self, label: &str) -> Result<VmConfig, String> {
        if let Some(n) = label.strip_prefix("typed/") {
            return Ok(self.config(Mode::Typed, n.parse()?));
        }
        Ok(self.config(label.parse()?, self.maxshapes))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricsFormat {
    Json,
    Csv,
    None,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CompareFormat {
    Text,
    Csv,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure { code: e.exit_code() as u8, message: e.to_string() }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure { code: 3, message: format!("cannot access {}: {e}", path.display()) }
}

fn program_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn render(records: &[RunRecord], format: MetricsFormat) -> Option<String> {
    match format {
        MetricsFormat::None => None,
        MetricsFormat::Json if records.len() == 1 => {
            Some(serde_json::to_string_pretty(&records[0]).expect("records serialize") + "\n")
        }
        MetricsFormat::Json => Some(serde_json::to_string_pretty(records).expect("records serialize") + "\n"),
        MetricsFormat::Csv => Some(metrics::write_csv(records).expect("in-memory csv")),
    }
}

fn emit(doc: &str, out: Option<&Path>, to_stdout: bool) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, doc).map_err(|e| io_failure(p, e)),
        None if to_stdout => {
            print!("{doc}");
            Ok(())
        }
        None => {
            eprint!("{doc}");
            Ok(())
        }
    }
}

fn run_cmd(path: &Path, cfg: VmConfig, warmup: usize, iters: usize, format: MetricsFormat, out: Option<&Path>, dumps: (bool, bool)) -> Result<(), Failure> {
    let src = harness::read_source(path)?;
    let m: Measured = harness::measure_source(&program_name(path), &src, cfg, warmup, iters)?;
    for line in &m.outcome.output {
        println!("{line}");
    }
    if dumps.0 {
        eprint!("{}", m.dump_versions);
    }
    if dumps.1 {
        eprint!("{}", m.dump_pics);
    }
    if let Some(doc) = render(std::slice::from_ref(&m.record), format) {
        emit(&doc, out, false)?;
    }
    match m.outcome.error {
        Some(e) => Err(Failure { code: 2, message: e.to_string() }),
        None => Ok(()),
    }
}

fn bench_cmd(path: &Path, spec: &BenchSpec, format: MetricsFormat, out: Option<&Path>) -> Result<(), Failure> {
    let src = harness::read_source(path)?;
    let rows = harness::bench(&program_name(path), &src, spec)?;
    let records: Vec<RunRecord> = rows.iter().map(|m| m.record.clone()).collect();
    if let Some(doc) = render(&records, format) {
        emit(&doc, out, true)?;
    }
    match rows.iter().find_map(|m| m.outcome.error.clone()) {
        Some(e) => Err(Failure { code: 2, message: e.to_string() }),
        None => Ok(()),
    }
}

fn load_report(path: &Path) -> Result<Vec<RunRecord>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let malformed = |m: String| Failure { code: 1, message: format!("{}: {m}", path.display()) };
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        serde_json::from_str(trimmed).map_err(|e| malformed(e.to_string()))
    } else if trimmed.starts_with('{') {
        serde_json::from_str(trimmed).map(|r| vec![r]).map_err(|e| malformed(e.to_string()))
    } else {
        metrics::read_csv(&text).map_err(|e| malformed(e.to_string()))
    }
}

fn compare_cmd(report: &Path, baseline_report: Option<&Path>, baseline: &str, format: CompareFormat) -> Result<(), Failure> {
    let candidates = load_report(report)?;
    let pool = match baseline_report {
        Some(p) => load_report(p)?,
        None => candidates.clone(),
    };
    let base = pool
        .iter()
        .find(|r| r.label() == baseline)
        .or(if pool.len() == 1 { pool.first() } else { None })
        .ok_or_else(|| Failure { code: 1, message: format!("no row labelled '{baseline}'") })?;
    for c in &candidates {
        let rep = relative_report(c, base).map_err(|e| Failure { code: 2, message: e.to_string() })?;
        match format {
            CompareFormat::Text => println!("{}", rep.to_text()),
            CompareFormat::Csv => print!("{}", rep.to_csv().expect("in-memory csv")),
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { path, vm, mode, warmup, iters, metrics, metrics_out, dump_versions, dump_pics } => {
            let cfg = vm.config(mode, vm.maxshapes);
            run_cmd(&path, cfg, warmup, iters, metrics, metrics_out.as_deref(), (dump_versions, dump_pics))
        }
        Command::Bench { path, vm, configs, warmup, iters, metrics, metrics_out } => {
            let configs = configs
                .iter()
                .map(|c| vm.parse_config(c))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|message| Failure { code: EXIT_USAGE, message })?;
            let spec = BenchSpec { warmup, iters: iters.max(1), configs };
            bench_cmd(&path, &spec, metrics, metrics_out.as_deref())
        }
        Command::Compare { report, baseline_report, baseline, format } => {
            compare_cmd(&report, baseline_report.as_deref(), &baseline, format)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.message);
            ExitCode::from(f.code)
        }
    }
}

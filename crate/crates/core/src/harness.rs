//! Program loading and the warmup/timing loops behind the CLI.

use std::path::Path;
use std::time::Instant;

use thiserror::Error;

use crate::engine::{Engine, Mode, VmConfig};
use crate::frontend::ast::Program;
use crate::frontend::lower::{lower, ScopeError};
use crate::frontend::{parse, SyntaxError};
use crate::metrics::{ConfigRecord, Metrics, RunRecord};
use crate::oracle::{run_oracle, Outcome};
use crate::runtime::with_large_stack;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Scope(#[from] ScopeError),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl HarnessError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Syntax(_) | HarnessError::Scope(_) => 1,
            HarnessError::Io { .. } => 3,
        }
    }
}

pub fn read_source(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.display().to_string(), source })
}

/// Parses `src` and checks that it lowers.
pub fn compile(src: &str) -> Result<Program, HarnessError> {
    let ast = parse(src)?;
    lower(&ast)?;
    Ok(ast)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchSpec {
    pub warmup: usize,
    pub iters: usize,
    pub configs: Vec<VmConfig>,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec { warmup: 10, iters: 10, configs: vec![VmConfig::default()] }
    }
}

/// Result of running one program under one configuration.
#[derive(Debug, Clone)]
pub struct Measured {
    pub record: RunRecord,
    /// Outcome of the last iteration.
    pub outcome: Outcome,
    pub max_versions_per_block: usize,
    pub heap_consistent: bool,
    pub dump_versions: String,
    pub dump_pics: String,
}

fn config_record(cfg: &VmConfig, warmup: usize, iters: usize) -> ConfigRecord {
    ConfigRecord {
        mode: cfg.mode.to_string(),
        maxshapes: cfg.maxshapes,
        maxvers: cfg.maxvers,
        pic_limit: cfg.pic_limit,
        warmup,
        iters,
    }
}

/// Runs `warmup` uncounted iterations, then `iters` counted ones. Counters
/// cover the timed iterations only, except for the compile-side totals.
pub fn measure(name: &str, ast: &Program, cfg: VmConfig, warmup: usize, iters: usize) -> Result<Measured, HarnessError> {
    let ir = lower(ast)?;
    let iters = iters.max(1);
    if cfg.mode == Mode::Oracle {
        let mut outcome = Outcome::default();
        for _ in 0..warmup {
            run_oracle(ast);
        }
        let start = Instant::now();
        for _ in 0..iters {
            outcome = run_oracle(ast);
        }
        let counters = Metrics { wall_time_ns: start.elapsed().as_nanos() as u64, ..Default::default() };
        return Ok(Measured {
            record: RunRecord { program: name.to_string(), config: config_record(&cfg, warmup, iters), counters },
            outcome,
            max_versions_per_block: 0,
            heap_consistent: true,
            dump_versions: String::new(),
            dump_pics: String::new(),
        });
    }
    let mut engine = Engine::new(ir, cfg);
    for _ in 0..warmup {
        engine.run_iteration();
    }
    let before = engine.metrics();
    let start = Instant::now();
    let mut outcome = Outcome::default();
    for _ in 0..iters {
        outcome = engine.run_iteration();
    }
    let elapsed = start.elapsed().as_nanos() as u64;
    let mut counters = engine.metrics().since(&before);
    counters.wall_time_ns = elapsed;
    Ok(Measured {
        record: RunRecord { program: name.to_string(), config: config_record(&cfg, warmup, iters), counters },
        outcome,
        max_versions_per_block: engine.max_versions_per_block(),
        heap_consistent: engine.heap_consistent(),
        dump_versions: engine.dump_versions(),
        dump_pics: engine.dump_pics(),
    })
}

/// Compiles and measures `src` on a thread with room for deep interpreter
/// recursion.
pub fn measure_source(name: &str, src: &str, cfg: VmConfig, warmup: usize, iters: usize) -> Result<Measured, HarnessError> {
    let (name, src) = (name.to_string(), src.to_string());
    with_large_stack(move || measure(&name, &compile(&src)?, cfg, warmup, iters))
}

/// One report row per configuration, in order.
pub fn bench(name: &str, src: &str, spec: &BenchSpec) -> Result<Vec<Measured>, HarnessError> {
    spec.configs.iter().map(|cfg| measure_source(name, src, *cfg, spec.warmup, spec.iters)).collect()
}

/// Metrics JSON with the wall time zeroed, for comparing runs.
pub fn deterministic_json(record: &RunRecord) -> String {
    let mut r = record.clone();
    r.counters.wall_time_ns = 0;
    serde_json::to_string_pretty(&r).expect("records serialize")
}

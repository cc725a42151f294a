//! Dynamic counters and relative reports.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    pub type_tag_tests: u64,
    pub shape_tests: u64,
    pub write_guards: u64,
    pub shape_flips: u64,
    pub property_reads: u64,
    pub property_writes: u64,
    pub known_callee_calls: u64,
    pub total_calls: u64,
    pub versions_created: u64,
    pub specialized_instructions: u64,
    pub shapes_created: u64,
    /// int32 overflow checks executed by the arithmetic fast path.
    pub overflow_checks: u64,
    pub wall_time_ns: u64,
}

impl Metrics {
    pub const FIELDS: [&'static str; 13] = [
        "type_tag_tests",
        "shape_tests",
        "write_guards",
        "shape_flips",
        "property_reads",
        "property_writes",
        "known_callee_calls",
        "total_calls",
        "versions_created",
        "specialized_instructions",
        "shapes_created",
        "overflow_checks",
        "wall_time_ns",
    ];

    /// Counters that measure compilation state rather than execution; they
    /// are reported as totals instead of per-iteration deltas.
    pub const CUMULATIVE: [&'static str; 3] = ["versions_created", "specialized_instructions", "shapes_created"];

    pub fn values(&self) -> [u64; 13] {
        [
            self.type_tag_tests,
            self.shape_tests,
            self.write_guards,
            self.shape_flips,
            self.property_reads,
            self.property_writes,
            self.known_callee_calls,
            self.total_calls,
            self.versions_created,
            self.specialized_instructions,
            self.shapes_created,
            self.overflow_checks,
            self.wall_time_ns,
        ]
    }

    pub fn from_values(v: [u64; 13]) -> Metrics {
        Metrics {
            type_tag_tests: v[0],
            shape_tests: v[1],
            write_guards: v[2],
            shape_flips: v[3],
            property_reads: v[4],
            property_writes: v[5],
            known_callee_calls: v[6],
            total_calls: v[7],
            versions_created: v[8],
            specialized_instructions: v[9],
            shapes_created: v[10],
            overflow_checks: v[11],
            wall_time_ns: v[12],
        }
    }

    pub fn get(&self, field: &str) -> Option<u64> {
        Self::FIELDS.iter().position(|f| *f == field).map(|i| self.values()[i])
    }

    /// Execution counters accumulated between `earlier` and `self`; the
    /// cumulative counters keep `self`'s totals.
    pub fn since(&self, earlier: &Metrics) -> Metrics {
        let (now, before) = (self.values(), earlier.values());
        let mut out = [0; 13];
        for (i, f) in Self::FIELDS.iter().enumerate() {
            out[i] = if Self::CUMULATIVE.contains(f) { now[i] } else { now[i].saturating_sub(before[i]) };
        }
        Metrics::from_values(out)
    }

    /// Known invariants between counters.
    pub fn consistent(&self) -> bool {
        self.known_callee_calls <= self.total_calls && self.shape_flips <= self.property_writes
    }
}

/// Infinity-capable limit, serialized as a number or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Limit {
    Finite(usize),
    Infinite,
}

impl Limit {
    pub fn as_option(self) -> Option<usize> {
        match self {
            Limit::Finite(n) => Some(n),
            Limit::Infinite => None,
        }
    }
}

impl fmt::Display for Limit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Limit::Finite(n) => write!(f, "{n}"),
            Limit::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for Limit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inf" | "infinity" | "∞" => Ok(Limit::Infinite),
            n => n.parse().map(Limit::Finite).map_err(|_| format!("expected a non-negative integer or 'inf', got '{s}'")),
        }
    }
}

impl Serialize for Limit {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Limit::Finite(n) => s.serialize_u64(*n as u64),
            Limit::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Limit {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(Limit::Finite(n as usize)),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Configuration columns of a report row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigRecord {
    pub mode: String,
    pub maxshapes: Limit,
    pub maxvers: usize,
    pub pic_limit: usize,
    pub warmup: usize,
    pub iters: usize,
}

/// One program run under one configuration; the metrics JSON document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub program: String,
    pub config: ConfigRecord,
    pub counters: Metrics,
}

impl RunRecord {
    pub fn label(&self) -> String {
        match self.config.mode.as_str() {
            "typed" => format!("typed/{}", self.config.maxshapes),
            "pic" => "pic_untyped".to_string(),
            other => other.to_string(),
        }
    }
}

pub const CSV_CONFIG_COLUMNS: [&str; 7] = ["program", "mode", "maxshapes", "maxvers", "pic_limit", "warmup", "iters"];

pub fn csv_header() -> Vec<String> {
    CSV_CONFIG_COLUMNS.iter().chain(Metrics::FIELDS.iter()).map(|s| s.to_string()).collect()
}

pub fn write_csv(records: &[RunRecord]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(csv_header())?;
    for r in records {
        let mut row = vec![
            r.program.clone(),
            r.config.mode.clone(),
            r.config.maxshapes.to_string(),
            r.config.maxvers.to_string(),
            r.config.pic_limit.to_string(),
            r.config.warmup.to_string(),
            r.config.iters.to_string(),
        ];
        row.extend(r.counters.values().iter().map(|v| v.to_string()));
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed report: {0}")]
    Malformed(String),
}

pub fn read_csv(text: &str) -> Result<Vec<RunRecord>, ReportError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != csv_header() {
        return Err(ReportError::Malformed(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let field = |i: usize| row.get(i).unwrap_or_default();
        let num = |i: usize| -> Result<u64, ReportError> {
            field(i).parse().map_err(|_| ReportError::Malformed(format!("bad number '{}'", field(i))))
        };
        let mut vals = [0u64; 13];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = num(CSV_CONFIG_COLUMNS.len() + k)?;
        }
        out.push(RunRecord {
            program: field(0).to_string(),
            config: ConfigRecord {
                mode: field(1).to_string(),
                maxshapes: field(2).parse().map_err(ReportError::Malformed)?,
                maxvers: num(3)? as usize,
                pic_limit: num(4)? as usize,
                warmup: num(5)? as usize,
                iters: num(6)? as usize,
            },
            counters: Metrics::from_values(vals),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("MismatchedRuns: {0}")]
pub struct MismatchedRuns(pub String);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    Value(f64),
    NotApplicable,
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ratio::Value(r) => write!(f, "{r:.4}"),
            Ratio::NotApplicable => f.write_str("n/a"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelativeRow {
    pub counter: &'static str,
    pub candidate: u64,
    pub baseline: u64,
    pub ratio: Ratio,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelativeReport {
    pub candidate: String,
    pub baseline: String,
    pub rows: Vec<RelativeRow>,
}

impl RelativeReport {
    pub fn ratio(&self, counter: &str) -> Option<Ratio> {
        self.rows.iter().find(|r| r.counter == counter).map(|r| r.ratio)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} relative to {}\n", self.candidate, self.baseline);
        let _ = writeln!(out, "{:<26} {:>14} {:>14} {:>10}", "counter", "candidate", "baseline", "ratio");
        for r in &self.rows {
            let _ = writeln!(out, "{:<26} {:>14} {:>14} {:>10}", r.counter, r.candidate, r.baseline, r.ratio.to_string());
        }
        out
    }

    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["candidate", "baseline", "counter", "candidate_value", "baseline_value", "ratio"])?;
        for r in &self.rows {
            w.write_record([
                self.candidate.as_str(),
                self.baseline.as_str(),
                r.counter,
                &r.candidate.to_string(),
                &r.baseline.to_string(),
                &r.ratio.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

/// Per-counter candidate/baseline ratios. Both runs must come from the same
/// program with the same iteration counts.
pub fn relative_report(candidate: &RunRecord, baseline: &RunRecord) -> Result<RelativeReport, MismatchedRuns> {
    if candidate.program != baseline.program {
        return Err(MismatchedRuns(format!("programs differ: {} vs {}", candidate.program, baseline.program)));
    }
    let (c, b) = (&candidate.config, &baseline.config);
    if (c.warmup, c.iters) != (b.warmup, b.iters) {
        return Err(MismatchedRuns(format!(
            "iteration counts differ: warmup {}/{} vs {}/{}",
            c.warmup, c.iters, b.warmup, b.iters
        )));
    }
    let (cv, bv) = (candidate.counters.values(), baseline.counters.values());
    let rows = Metrics::FIELDS
        .iter()
        .enumerate()
        .map(|(i, &counter)| RelativeRow {
            counter,
            candidate: cv[i],
            baseline: bv[i],
            ratio: if bv[i] == 0 { Ratio::NotApplicable } else { Ratio::Value(cv[i] as f64 / bv[i] as f64) },
        })
        .collect();
    Ok(RelativeReport { candidate: candidate.label(), baseline: baseline.label(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(mode: &str, counters: Metrics) -> RunRecord {
        RunRecord {
            program: "p.mjs".into(),
            config: ConfigRecord {
                mode: mode.into(),
                maxshapes: Limit::Finite(2),
                maxvers: 20,
                pic_limit: 8,
                warmup: 10,
                iters: 10,
            },
            counters,
        }
    }

    fn sample() -> Metrics {
        Metrics { type_tag_tests: 10, shape_tests: 4, property_reads: 7, wall_time_ns: 99, ..Default::default() }
    }

    #[test]
    fn identical_runs_have_unit_ratios() {
        let r = record("typed", sample());
        let rep = relative_report(&r, &r).unwrap();
        assert_eq!(rep.ratio("type_tag_tests"), Some(Ratio::Value(1.0)));
        assert_eq!(rep.ratio("write_guards"), Some(Ratio::NotApplicable));
        assert!(rep.to_text().contains("n/a"));
    }

    #[test]
    fn mismatched_iterations_rejected() {
        let a = record("typed", sample());
        let mut b = record("pic", sample());
        b.config.iters = 5;
        assert!(relative_report(&a, &b).is_err());
        b.config.iters = 10;
        b.program = "q.mjs".into();
        assert!(relative_report(&a, &b).is_err());
    }

    #[test]
    fn since_keeps_cumulative_totals() {
        let before = Metrics { type_tag_tests: 3, versions_created: 5, ..Default::default() };
        let after = Metrics { type_tag_tests: 10, versions_created: 6, ..Default::default() };
        let d = after.since(&before);
        assert_eq!(d.type_tag_tests, 7);
        assert_eq!(d.versions_created, 6);
    }

    #[test]
    fn limit_parsing() {
        assert_eq!("inf".parse::<Limit>().unwrap(), Limit::Infinite);
        assert_eq!("3".parse::<Limit>().unwrap(), Limit::Finite(3));
        assert!("x".parse::<Limit>().is_err());
        assert_eq!(serde_json::to_string(&Limit::Infinite).unwrap(), "\"inf\"");
        assert_eq!(serde_json::from_str::<Limit>("2").unwrap(), Limit::Finite(2));
    }

    fn metrics_strategy() -> impl Strategy<Value = Metrics> {
        prop::array::uniform13(0u64..1_000_000).prop_map(Metrics::from_values)
    }

    proptest! {
        #[test]
        fn csv_round_trips(ms in prop::collection::vec(metrics_strategy(), 1..5), inf in any::<bool>()) {
            let records: Vec<RunRecord> = ms.into_iter().map(|m| {
                let mut r = record("typed", m);
                if inf { r.config.maxshapes = Limit::Infinite; }
                r
            }).collect();
            let text = write_csv(&records).unwrap();
            prop_assert_eq!(read_csv(&text).unwrap(), records);
        }

        #[test]
        fn json_round_trips(m in metrics_strategy()) {
            let r = record("pic", m);
            let text = serde_json::to_string(&r).unwrap();
            prop_assert_eq!(serde_json::from_str::<RunRecord>(&text).unwrap(), r);
        }
    }
}

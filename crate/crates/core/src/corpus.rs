//! The shipped benchmark corpus: curated programs plus seeded random object
//! workloads.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusProgram {
    pub name: String,
    pub source: String,
    /// Every function is declared once and no global function binding is
    /// ever reassigned.
    pub single_definition: bool,
}

macro_rules! curated {
    ($(($file:literal, $single:expr)),* $(,)?) => {
        [$(($file, include_str!(concat!("../corpus/", $file)), $single)),*]
    };
}

const CURATED: [(&str, &str, bool); 17] = curated![
    ("bitwise_and.mjs", true),
    ("prop_increment.mjs", true),
    ("prop_increment_control.mjs", true),
    ("proto_chain.mjs", true),
    ("shape_poly_tree.mjs", true),
    ("debug_redefine.mjs", false),
    ("shape_flip.mjs", true),
    ("recursive_fib.mjs", true),
    ("binary_trees.mjs", true),
    ("closures_counter.mjs", true),
    ("arrays_sum.mjs", true),
    ("strings_concat.mjs", true),
    ("overflow_promote.mjs", true),
    ("method_calls.mjs", true),
    ("readonly_const.mjs", true),
    ("mixed_values.mjs", true),
    ("global_counters.mjs", true),
];

pub const RANDOM_WORKLOADS: u64 = 50;

pub fn curated() -> Vec<CorpusProgram> {
    CURATED
        .iter()
        .map(|&(name, source, single)| CorpusProgram { name: name.into(), source: source.into(), single_definition: single })
        .collect()
}

pub fn by_name(name: &str) -> Option<CorpusProgram> {
    curated().into_iter().find(|p| p.name == name)
}

/// Curated programs followed by [`RANDOM_WORKLOADS`] seeded workloads.
pub fn full() -> Vec<CorpusProgram> {
    let mut all = curated();
    all.extend((0..RANDOM_WORKLOADS).map(|seed| CorpusProgram {
        name: format!("random_{seed}.mjs"),
        source: random_workload(seed),
        single_definition: true,
    }));
    all
}

const PROPS: [&str; 6] = ["p0", "p1", "p2", "p3", "p4", "p5"];

fn literal(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..6) {
        0 => rng.gen_range(-50..50).to_string(),
        1 => format!("{}.5", rng.gen_range(0..20)),
        2 => format!("\"s{}\"", rng.gen_range(0..5)),
        3 => "null".into(),
        4 => if rng.gen_bool(0.5) { "true" } else { "false" }.into(),
        _ => format!("{{q: {}}}", rng.gen_range(0..9)),
    }
}

fn object_literal(rng: &mut ChaCha8Rng, proto: Option<&str>) -> String {
    let n = rng.gen_range(1..5);
    let mut names: Vec<&str> = PROPS.choose_multiple(rng, n).copied().collect();
    names.sort_unstable();
    let mut parts: Vec<String> = proto.map(|p| format!("__proto__: {p}")).into_iter().collect();
    parts.extend(names.iter().map(|n| format!("{n}: {}", literal(rng))));
    format!("{{{}}}", parts.join(", "))
}

/// A deterministic program that allocates objects of several layouts, some
/// with prototypes, and repeatedly copies and compares their properties.
/// Every property write is paired with at least one property read.
pub fn random_workload(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut src = format!("// random object workload, seed {seed}\n");
    let _ = writeln!(src, "var protoA = {};", object_literal(&mut rng, None));
    let _ = writeln!(src, "var protoB = {};", object_literal(&mut rng, Some("protoA")));
    let makers = rng.gen_range(2..5);
    for m in 0..makers {
        let proto = match rng.gen_range(0..3) {
            0 => None,
            1 => Some("protoA"),
            _ => Some("protoB"),
        };
        let _ = writeln!(src, "function make{m}() {{ return {}; }}", object_literal(&mut rng, proto));
    }
    let _ = writeln!(src, "function step(o, other, i) {{");
    for _ in 0..rng.gen_range(2..7) {
        let (k, j) = (PROPS.choose(&mut rng).unwrap(), PROPS.choose(&mut rng).unwrap());
        match rng.gen_range(0..4) {
            0 => {
                let _ = writeln!(src, "  o.{k} = other.{j};");
            }
            1 => {
                let _ = writeln!(src, "  if (o.{j} == {}) {{ o.{k} = o.{j}; }}", literal(&mut rng));
            }
            2 => {
                let _ = writeln!(src, "  if ((i & {}) == 0) {{ other.{k} = o.{j}; }}", rng.gen_range(1..8));
            }
            _ => {
                let _ = writeln!(src, "  o.{k} = o.{j} == other.{k};");
            }
        }
    }
    let _ = writeln!(src, "  return o.{};\n}}", PROPS.choose(&mut rng).unwrap());
    let count = 8;
    let objs: Vec<String> = (0..count).map(|_| format!("make{}()", rng.gen_range(0..makers))).collect();
    let _ = writeln!(src, "var objs = [{}];", objs.join(", "));
    let _ = writeln!(src, "var i = 0;\nvar last = null;");
    let _ = writeln!(src, "while (i < {}) {{", rng.gen_range(100..300));
    let _ = writeln!(src, "  last = step(objs[i & 7], objs[(i + {}) & 7], i);", rng.gen_range(1..8));
    let _ = writeln!(src, "  i = i + 1;\n}}");
    let _ = writeln!(src, "print(last);");
    for k in 0..count {
        let reads: Vec<String> = PROPS.iter().map(|p| format!("objs[{k}].{p}")).collect();
        let _ = writeln!(src, "print({});", reads.join(", "));
    }
    src
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse;

    #[test]
    fn corpus_parses() {
        let all = full();
        assert!(all.len() >= 12 + 50);
        for p in &all {
            parse(&p.source).unwrap_or_else(|e| panic!("{}: {e}\n{}", p.name, p.source));
        }
    }

    #[test]
    fn workloads_are_seed_determined() {
        assert_eq!(random_workload(3), random_workload(3));
        assert_ne!(random_workload(3), random_workload(4));
    }

    #[test]
    fn lookup_by_name() {
        assert!(by_name("bitwise_and.mjs").is_some_and(|p| p.single_definition));
        assert!(by_name("debug_redefine.mjs").is_some_and(|p| !p.single_definition));
        assert!(by_name("nope.mjs").is_none());
    }
}

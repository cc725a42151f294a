//! Acceptance gate: one PASS/FAIL line per criterion, failing the test if
//! any criterion fails.

use std::time::Instant;

use shapevm::corpus::{self, CorpusProgram};
use shapevm::engine::VmConfig;
use shapevm::harness::{deterministic_json, measure_source, Measured};
use shapevm::metrics::{Limit, Metrics};
use shapevm::object::Heap;
use shapevm::shape::{PropFlags, ShapeTree, TypeDesc, PROTO};
use shapevm::value::{TypeTag, Value};

type Check = Result<(), String>;

fn engine_configs() -> Vec<VmConfig> {
    vec![
        VmConfig::pic(),
        VmConfig::typed(Limit::Finite(0)),
        VmConfig::typed(Limit::Finite(1)),
        VmConfig::typed(Limit::Finite(2)),
        VmConfig::typed(Limit::Infinite),
    ]
}

struct Row {
    program: CorpusProgram,
    oracle: Measured,
    /// Parallel to `engine_configs()`.
    engines: Vec<Measured>,
}

fn run(p: &CorpusProgram, cfg: VmConfig) -> Measured {
    measure_source(&p.name, &p.source, cfg, 1, 1).unwrap_or_else(|e| panic!("{}: {e}", p.name))
}

fn table(programs: &[CorpusProgram]) -> Vec<Row> {
    programs
        .iter()
        .map(|p| Row {
            program: p.clone(),
            oracle: run(p, VmConfig::oracle()),
            engines: engine_configs().into_iter().map(|c| run(p, c)).collect(),
        })
        .collect()
}

fn differential(rows: &[Row]) -> Check {
    for r in rows {
        for m in &r.engines {
            if m.outcome != r.oracle.outcome {
                return Err(format!(
                    "{} under {}: {:?} != oracle {:?}",
                    r.program.name,
                    m.record.label(),
                    m.outcome,
                    r.oracle.outcome
                ));
            }
        }
    }
    Ok(())
}

fn delta(with: &Metrics, control: &Metrics, f: &str) -> i64 {
    with.get(f).unwrap() as i64 - control.get(f).unwrap() as i64
}

fn check_counts() -> Check {
    const N: i64 = 1000;
    let with = corpus::by_name("prop_increment.mjs").unwrap();
    let control = corpus::by_name("prop_increment_control.mjs").unwrap();
    let expect = |cfg: VmConfig| match cfg.mode {
        shapevm::engine::Mode::Pic => (2 * N, N, N),
        _ => (N, 0, N),
    };
    let cfgs = [VmConfig::pic(), VmConfig::typed(Limit::Finite(1)), VmConfig::typed(Limit::Finite(2)), VmConfig::typed(Limit::Infinite)];
    for cfg in cfgs {
        let w = measure_source(&with.name, &with.source, cfg, 2, 1).unwrap().record.counters;
        let c = measure_source(&control.name, &control.source, cfg, 2, 1).unwrap().record.counters;
        let got = (delta(&w, &c, "shape_tests"), delta(&w, &c, "type_tag_tests"), delta(&w, &c, "overflow_checks"));
        if got != expect(cfg) {
            return Err(format!("{}: (shape, tag, overflow) per loop = {got:?}, expected {:?}", cfg.label(), expect(cfg)));
        }
    }
    Ok(())
}

fn tag_test_elimination() -> Check {
    let p = corpus::by_name("bitwise_and.mjs").unwrap();
    let typed = measure_source(&p.name, &p.source, VmConfig::typed(Limit::Finite(2)), 10, 10).unwrap().record.counters;
    let pic = measure_source(&p.name, &p.source, VmConfig::pic(), 10, 10).unwrap().record.counters;
    if pic.type_tag_tests == 0 {
        return Err("baseline executed no tag tests".into());
    }
    let ratio = typed.type_tag_tests as f64 / pic.type_tag_tests as f64;
    if ratio < 0.01 {
        Ok(())
    } else {
        Err(format!("ratio {ratio:.4} ({} / {})", typed.type_tag_tests, pic.type_tag_tests))
    }
}

fn shape_flip() -> Check {
    let mut h = Heap::new(true);
    let make = |h: &mut Heap, y: Value, w: i32| {
        let Value::Object(o) = h.new_object(&Value::Null).unwrap() else { unreachable!() };
        h.set_prop_slow(o, "x", Value::Int(1)).unwrap();
        h.set_prop_slow(o, "y", y).unwrap();
        h.set_prop_slow(o, "w", Value::Int(w)).unwrap();
        o
    };
    let b = make(&mut h, Value::str("foo"), 4);
    let c = make(&mut h, Value::Null, 5);
    let (s2, s3) = (h.shape_of(b), h.shape_of(c));
    if s2 == s3 {
        return Err("b and c share a shape before the flip".into());
    }
    let t = &mut h.tree;
    let mut built = t.define_property(ShapeTree::ROOT, PROTO, TypeDesc::Tag(TypeTag::Const), PropFlags::HIDDEN).unwrap();
    for (n, d) in [("x", TypeTag::Int32), ("y", TypeTag::String), ("w", TypeTag::Int32)] {
        built = t.define_property(built, n, TypeDesc::Tag(d), PropFlags::DEFAULT).unwrap();
    }
    h.set_prop_slow(c, "y", Value::str("bif")).unwrap();
    if h.shape_of(c) != s2 || built != s2 {
        return Err(format!("after flip c has {}, b has {s2}, rebuilt chain {built}", h.shape_of(c)));
    }
    let nodes = h.tree.shapes_created();
    h.set_prop_slow(c, "y", Value::Null).unwrap();
    if h.shape_of(c) != s3 || h.tree.shapes_created() != nodes || h.stats.shape_flips != 2 {
        return Err(format!("flip back gave {} (want {s3}), {} new nodes", h.shape_of(c), h.tree.shapes_created() - nodes));
    }
    Ok(())
}

fn shapes_direction(rows: &[Row]) -> Check {
    for r in rows {
        let untyped = r.engines[0].record.counters.shapes_created;
        for m in &r.engines[1..] {
            if m.record.counters.shapes_created < untyped {
                return Err(format!("{} {}: {} < {untyped}", r.program.name, m.record.label(), m.record.counters.shapes_created));
            }
        }
    }
    Ok(())
}

fn maxshapes_containment(rows: &[Row]) -> Check {
    let p = corpus::by_name("shape_poly_tree.mjs").unwrap();
    let inf = run(&p, VmConfig::typed(Limit::Infinite));
    let two = run(&p, VmConfig::typed(Limit::Finite(2)));
    let (a, b) = (inf.record.counters.specialized_instructions, two.record.counters.specialized_instructions);
    if a <= b {
        return Err(format!("specialized_instructions typed/inf {a} <= typed/2 {b}"));
    }
    for r in rows {
        for m in &r.engines {
            if m.max_versions_per_block > m.record.config.maxvers + 1 {
                return Err(format!("{} {}: {} versions in one block", r.program.name, m.record.label(), m.max_versions_per_block));
            }
        }
    }
    Ok(())
}

fn known_callees(rows: &[Row]) -> Check {
    for r in rows.iter().filter(|r| r.program.single_definition) {
        for m in &r.engines[1..] {
            let c = &m.record.counters;
            if c.known_callee_calls != c.total_calls {
                return Err(format!("{} {}: {}/{} known", r.program.name, m.record.label(), c.known_callee_calls, c.total_calls));
            }
        }
    }
    Ok(())
}

fn guard_economy(rows: &[Row]) -> Check {
    for r in rows {
        let c = &r.engines[3].record.counters;
        if c.write_guards > c.property_reads {
            return Err(format!("{}: {} guards > {} reads", r.program.name, c.write_guards, c.property_reads));
        }
    }
    Ok(())
}

fn context_soundness(programs: &[CorpusProgram]) -> Check {
    for p in programs {
        for cfg in engine_configs() {
            let m = run(p, cfg.with_assertions());
            if let Some(e) = m.outcome.error.filter(|e| e.kind == shapevm::error::ErrorKind::InternalError) {
                return Err(format!("{} {}: {}", p.name, cfg.label(), e.message));
            }
            if !m.heap_consistent {
                return Err(format!("{} {}: slots disagree with shapes", p.name, cfg.label()));
            }
        }
    }
    Ok(())
}

fn determinism(rows: &[Row]) -> Check {
    for r in rows {
        for (cfg, m) in engine_configs().into_iter().zip(&r.engines) {
            let again = run(&r.program, cfg);
            if deterministic_json(&again.record) != deterministic_json(&m.record) {
                return Err(format!("{} {}: metrics differ between runs", r.program.name, cfg.label()));
            }
        }
    }
    Ok(())
}

#[test]
fn acceptance() {
    let start = Instant::now();
    let programs = corpus::full();
    let rows = table(&programs);
    let results: Vec<(&str, Check)> = vec![
        ("1 differential correctness", differential(&rows)),
        ("2 read-modify-write check counts", check_counts()),
        ("3 tag-test elimination on bitwise-and", tag_test_elimination()),
        ("4 shape flip semantics", shape_flip()),
        ("5 shapes-created direction", shapes_direction(&rows)),
        ("6 maxshapes containment", maxshapes_containment(&rows)),
        ("7 known-callee ratio", known_callees(&rows)),
        ("8 write-guard economy", guard_economy(&rows)),
        ("9 context soundness", context_soundness(&programs)),
        ("10 determinism", determinism(&rows)),
    ];
    let elapsed = start.elapsed();
    let mut failed = Vec::new();
    for (name, r) in &results {
        match r {
            Ok(()) => println!("PASS {name}"),
            Err(why) => {
                println!("FAIL {name}: {why}");
                failed.push(*name);
            }
        }
    }
    println!("acceptance suite finished in {:.1}s", elapsed.as_secs_f64());
    assert!(elapsed.as_secs() < 60, "acceptance suite exceeded 60 s");
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

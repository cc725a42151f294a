//! The specializing engine: lazy basic block versioning over the IR, with
//! per-site inline caches and optional shape propagation.

mod compile;
pub mod context;
mod exec;
pub mod pic;

use std::fmt::{self, Write as _};
use std::rc::Rc;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::frontend::ir::IrProgram;
use crate::metrics::{Limit, Metrics};
use crate::object::Heap;
use crate::oracle::Outcome;
use crate::value::{ObjRef, Value};
use compile::{BlockTable, Version};
use pic::PicSite;

pub use compile::VersionId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// The reference interpreter.
    Oracle,
    /// Untyped shapes with polymorphic inline caches.
    #[serde(rename = "pic_untyped", alias = "pic")]
    Pic,
    /// Typed shapes, optionally propagating shape facts between versions.
    Typed,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Oracle => "oracle",
            Mode::Pic => "pic_untyped",
            Mode::Typed => "typed",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(Mode::Oracle),
            "pic" | "pic_untyped" => Ok(Mode::Pic),
            "typed" => Ok(Mode::Typed),
            _ => Err(format!("unknown mode '{s}' (expected oracle, pic, pic_untyped or typed)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VmConfig {
    pub mode: Mode,
    /// Distinct shapes one instruction may propagate into successor
    /// contexts.
    pub maxshapes: Limit,
    /// Specialized versions per block before falling back to a generic one.
    pub maxvers: usize,
    pub pic_limit: usize,
    /// Check every version's entry context against the live values.
    pub assert_contexts: bool,
}

impl Default for VmConfig {
    fn default() -> Self {
        VmConfig { mode: Mode::Typed, maxshapes: Limit::Finite(2), maxvers: 20, pic_limit: 8, assert_contexts: false }
    }
}

impl VmConfig {
    pub fn oracle() -> Self {
        VmConfig { mode: Mode::Oracle, ..Default::default() }
    }

    pub fn pic() -> Self {
        VmConfig { mode: Mode::Pic, ..Default::default() }
    }

    pub fn typed(maxshapes: Limit) -> Self {
        VmConfig { mode: Mode::Typed, maxshapes, ..Default::default() }
    }

    pub fn with_assertions(mut self) -> Self {
        self.assert_contexts = true;
        self
    }

    pub fn typed_shapes(&self) -> bool {
        self.mode == Mode::Typed
    }

    pub fn propagates(&self) -> bool {
        self.typed_shapes() && self.maxshapes != Limit::Finite(0)
    }

    pub fn label(&self) -> String {
        match self.mode {
            Mode::Typed => format!("typed/{}", self.maxshapes),
            Mode::Pic => "pic_untyped".to_string(),
            Mode::Oracle => "oracle".to_string(),
        }
    }
}

/// Execution counters kept by the engine; the heap keeps the property
/// counters and the shape tree the shape count.
#[derive(Debug, Default, Clone, Copy)]
struct Counters {
    type_tag_tests: u64,
    shape_tests: u64,
    write_guards: u64,
    known_callee_calls: u64,
    total_calls: u64,
    versions_created: u64,
    specialized_instructions: u64,
    overflow_checks: u64,
}

#[derive(Debug)]
pub struct Engine {
    program: Rc<IrProgram>,
    config: VmConfig,
    heap: Heap,
    versions: Vec<Rc<Version>>,
    /// Indexed by function, then block.
    tables: Vec<Vec<BlockTable>>,
    pics: Vec<PicSite>,
    counters: Counters,
    global: ObjRef,
    output: Vec<String>,
    depth: usize,
}

impl Engine {
    /// # Panics
    /// If `config.mode` is [`Mode::Oracle`], which has no engine.
    pub fn new(program: IrProgram, config: VmConfig) -> Self {
        assert!(config.mode != Mode::Oracle, "the oracle mode runs the reference interpreter");
        let tables = program
            .functions
            .iter()
            .map(|f| f.blocks.iter().map(|_| BlockTable::default()).collect())
            .collect();
        let pics = vec![PicSite::default(); program.num_sites as usize];
        let mut heap = Heap::new(config.typed_shapes());
        let global = heap.new_global();
        Engine {
            program: Rc::new(program),
            config,
            heap,
            versions: Vec::new(),
            tables,
            pics,
            counters: Counters::default(),
            global,
            output: Vec::new(),
            depth: 0,
        }
    }

    pub fn config(&self) -> &VmConfig {
        &self.config
    }

    pub fn heap(&self) -> &Heap {
        &self.heap
    }

    /// Runs the main function once against a fresh global object. Compiled
    /// versions and inline caches persist across iterations.
    pub fn run_iteration(&mut self) -> Outcome {
        self.global = self.heap.new_global();
        self.depth = 0;
        let main = self.program.main;
        let error = self.run_frame(main, None, Value::Undefined, Vec::new()).err();
        Outcome { output: std::mem::take(&mut self.output), error }
    }

    /// Totals since the engine was created; `wall_time_ns` is left at zero.
    pub fn metrics(&self) -> Metrics {
        let c = &self.counters;
        let h = &self.heap.stats;
        Metrics {
            type_tag_tests: c.type_tag_tests,
            shape_tests: c.shape_tests,
            write_guards: c.write_guards,
            shape_flips: h.shape_flips,
            property_reads: h.property_reads,
            property_writes: h.property_writes,
            known_callee_calls: c.known_callee_calls,
            total_calls: c.total_calls,
            versions_created: c.versions_created,
            specialized_instructions: c.specialized_instructions,
            shapes_created: self.heap.tree.shapes_created(),
            overflow_checks: c.overflow_checks,
            wall_time_ns: 0,
        }
    }

    pub fn max_versions_per_block(&self) -> usize {
        self.tables.iter().flatten().map(BlockTable::count).max().unwrap_or(0)
    }

    pub fn versions_of(&self, func: u32, block: u32) -> usize {
        self.tables[func as usize][block as usize].count()
    }

    /// Every live object's slots agree with its shape's descriptors.
    pub fn heap_consistent(&self) -> bool {
        (0..self.heap.object_count()).all(|i| self.heap.slots_match_shape(ObjRef(i as u32)))
    }

    pub fn dump_versions(&self) -> String {
        let mut out = String::new();
        for (fi, blocks) in self.tables.iter().enumerate() {
            let f = self.program.function(fi as u32);
            for (bi, table) in blocks.iter().enumerate().filter(|(_, t)| t.count() > 0) {
                let _ = writeln!(out, "{} b{bi}: {} versions", f.name, table.count());
                for &v in table.order.iter().chain(table.generic.iter()) {
                    let ver = &self.versions[v as usize];
                    let generic = if ver.generic { " generic" } else { "" };
                    let _ = writeln!(out, "  v{v} {} size={}{generic}", ver.ctx, ver.size);
                }
            }
        }
        out
    }

    pub fn dump_pics(&self) -> String {
        let mut out = String::new();
        for (i, p) in self.pics.iter().enumerate().filter(|(_, p)| p.megamorphic || !p.cases.is_empty()) {
            if p.megamorphic {
                let _ = writeln!(out, "site {i}: megamorphic");
            } else {
                let cases: Vec<String> = p.cases.iter().map(ToString::to_string).collect();
                let _ = writeln!(out, "site {i}: [{}]", cases.join(", "));
            }
        }
        out
    }
}

/// Runs `program` once on a fresh engine.
pub fn run(program: IrProgram, config: VmConfig) -> Outcome {
    Engine::new(program, config).run_iteration()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{lower::lower, parse};
    use crate::oracle::run_oracle;
    use crate::runtime::with_large_stack;

    fn configs() -> Vec<VmConfig> {
        vec![
            VmConfig::pic(),
            VmConfig::typed(Limit::Finite(0)),
            VmConfig::typed(Limit::Finite(1)),
            VmConfig::typed(Limit::Finite(2)),
            VmConfig::typed(Limit::Infinite),
            VmConfig { maxvers: 1, ..VmConfig::typed(Limit::Infinite) },
        ]
    }

    /// Runs `src` under every mode with context assertions on, twice per
    /// engine, and checks each run against the oracle.
    fn agree(src: &str) -> Outcome {
        let src = src.to_string();
        with_large_stack(move || {
            let ast = parse(&src).unwrap();
            let want = run_oracle(&ast);
            for cfg in configs() {
                let mut e = Engine::new(lower(&ast).unwrap(), cfg.with_assertions());
                for i in 0..2 {
                    assert_eq!(e.run_iteration(), want, "{} iteration {i}\n{}", cfg.label(), e.dump_versions());
                }
                assert!(e.heap_consistent());
                assert!(e.max_versions_per_block() <= cfg.maxvers + 1);
            }
            want
        })
    }

    fn counters(src: &str, cfg: VmConfig) -> Metrics {
        let src = src.to_string();
        with_large_stack(move || {
            let mut e = Engine::new(lower(&parse(&src).unwrap()).unwrap(), cfg);
            let o = e.run_iteration();
            assert_eq!(o.error, None);
            e.metrics()
        })
    }

    #[test]
    fn basic_programs_agree() {
        agree("print(1 + 2, 2147483647 + 1, 7 * 3, -2147483647 - 5, \"a\" + 1);");
        agree("var o = {x: 1, y: {z: 2}}; o.x = o.x + o.y.z; print(o.x); o.x = \"s\"; print(o.x);");
        agree("function f(n) { if (n < 2) { return n; } return f(n - 1) + f(n - 2); } print(f(15));");
        agree("var a = [1, 2, 3]; var s = 0; var i = 0; while (i < a.length) { s = s + a[i]; i = i + 1; } print(s);");
    }

    #[test]
    fn errors_agree() {
        assert!(agree("print(nope);").error.is_some());
        assert!(agree("var o = {}; defineConst(o, \"k\", 1); o.k = 2;").error.is_some());
        assert!(agree("function f() { return f(); } f();").error.is_some());
        assert!(agree("var x = 3; x();").error.is_some());
        assert!(agree("var x = null; print(x.y);").error.is_some());
    }

    #[test]
    fn polymorphic_and_flipping_sites_agree() {
        agree(
            "function get(o) { return o.v; } var i = 0; var s = 0; \
             while (i < 40) { var o = {v: i}; if ((i & 3) == 0) { o = {a: 1, v: 2.5}; } \
             if ((i & 5) == 5) { o.v = \"x\"; } if ((i & 7) == 7) { o = {__proto__: {v: i}}; } \
             s = s + get(o); i = i + 1; } print(s);",
        );
        agree(
            "function debug(m) {} function on() { debug = function(m) { print(m); }; } \
             var i = 0; while (i < 5) { debug(i); if (i == 2) { on(); } i = i + 1; }",
        );
    }

    #[test]
    fn many_shapes_at_one_site_agree() {
        let mut src = String::from("function get(o) { return o.k; } var t = 0;");
        for i in 0..20 {
            src.push_str(&format!("t = t + get({{p{i}: 1, k: {i}}});"));
        }
        src.push_str("var i = 0; while (i < 20) { t = t + get({q: i, k: 1}); i = i + 1; } print(t);");
        agree(&src);
    }

    #[test]
    fn closures_agree() {
        agree(
            "function mk() { var n = 0; return function() { n = n + 1; return n; }; } \
             var c = mk(); c(); c(); print(c()); var d = mk(); print(d());",
        );
    }

    #[test]
    fn bitwise_and_needs_no_tag_tests_when_typed() {
        let src = "var o = {x: 12, y: 10}; var i = 0; var r = 0; while (i < 50) { r = o.x & o.y; i = i + 1; } print(r);";
        let typed = counters(src, VmConfig::typed(Limit::Finite(2)));
        let pic = counters(src, VmConfig::pic());
        assert!(typed.type_tag_tests < pic.type_tag_tests, "{typed:?} {pic:?}");
    }

    #[test]
    fn known_callees_are_counted() {
        let m = counters("function f() { return 1; } var g = f; var x = f(); x = g();", VmConfig::typed(Limit::Finite(2)));
        assert_eq!(m.total_calls, 2);
        assert!(m.known_callee_calls <= m.total_calls);
        let pic = counters("function f() { return 1; } f();", VmConfig::pic());
        assert_eq!(pic.known_callee_calls, 0);
    }

    #[test]
    fn each_value_claims_at_most_maxshapes_shapes_per_block() {
        let src = "function mk(n) { if (n == 0) { return {k: 1}; } if (n == 1) { return {j: 0, k: 2}; } \
                   if (n == 2) { return {i: 0, k: 3}; } return {h: 0, k: 4}; } \
                   var os = [mk(0), mk(1), mk(2), mk(3)]; \
                   function pair(a, b) { var x = a.k; var y = b.k; return a.k + b.k + x + y; } \
                   var i = 0; var t = 0; while (i < 16) { t = t + pair(os[i & 3], os[(i * 3 + 1) & 3]); i = i + 1; } print(t);";
        agree(src);
        let versions = |cfg: VmConfig| {
            let src = src.to_string();
            with_large_stack(move || {
                let mut e = Engine::new(lower(&parse(&src).unwrap()).unwrap(), cfg);
                e.run_iteration();
                e.max_versions_per_block()
            })
        };
        assert!(versions(VmConfig::typed(Limit::Finite(1))) <= 4);
        assert!(versions(VmConfig::typed(Limit::Infinite)) > versions(VmConfig::typed(Limit::Finite(2))));
    }

    #[test]
    fn mode_parsing_and_labels() {
        assert_eq!("typed".parse::<Mode>().unwrap(), Mode::Typed);
        assert!("fast".parse::<Mode>().is_err());
        assert_eq!("pic".parse::<Mode>(), "pic_untyped".parse::<Mode>());
        assert_eq!(Mode::Pic.to_string(), "pic_untyped");
        assert_eq!(VmConfig::typed(Limit::Infinite).label(), "typed/inf");
        assert_eq!(VmConfig::pic().label(), "pic_untyped");
        assert!(!VmConfig::typed(Limit::Finite(0)).propagates());
    }
}

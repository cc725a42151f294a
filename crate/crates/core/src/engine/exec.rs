//! Executes block versions, resolving successors lazily.

use std::rc::Rc;

use super::compile::{Edge, Fork, ForkKind, Obs, Op, Term, VersionId};
use super::context::{Fact, TypeContext};
use super::Engine;
use crate::error::{ErrorKind, RuntimeError, MAX_CALL_DEPTH};
use crate::frontend::ir::{IrFunction, SiteId};
use crate::object::Env;
use crate::runtime;
use crate::shape::ShapeId;
use crate::value::{arith, int_arith_checked, Builtin, FnIdent, IntResult, ObjRef, TypeTag, Value};

type Res<T> = Result<T, RuntimeError>;

fn internal(msg: String) -> RuntimeError {
    RuntimeError::new(ErrorKind::InternalError, msg)
}

impl Engine {
    fn call_script(&mut self, func: u32, parent: Option<Rc<Env>>, this: Value, args: Vec<Value>) -> Res<Value> {
        if self.depth >= MAX_CALL_DEPTH {
            return Err(RuntimeError::stack_overflow());
        }
        self.depth += 1;
        let r = self.run_frame(func, parent, this, args);
        self.depth -= 1;
        r
    }

    pub(super) fn run_frame(&mut self, func: u32, parent: Option<Rc<Env>>, this: Value, args: Vec<Value>) -> Res<Value> {
        let prog = self.program.clone();
        let f = prog.function(func);
        let env = Env::new(f.num_cells as usize, parent);
        let mut temps = vec![Value::Undefined; f.num_temps as usize];
        temps[f.this_temp as usize] = this;
        for (i, &p) in f.params.iter().enumerate() {
            temps[p as usize] = runtime::arg(&args, i);
        }
        let entry = TypeContext::unknown(f.num_temps, f.num_cells);
        let mut vid = self.get_version(func, IrFunction::ENTRY, &entry);
        loop {
            let v = self.versions[vid as usize].clone();
            if self.config.assert_contexts {
                self.check_context(&v.ctx, &temps, &env, f, v.block.0)?;
            }
            for op in &v.code {
                self.exec_op(op, &mut temps, &env)?;
            }
            vid = match &v.term {
                Term::Return(t) => return Ok(std::mem::replace(&mut temps[*t as usize], Value::Undefined)),
                Term::Goto(e) => self.follow(func, e),
                Term::Branch { cond, test, then, otherwise } => {
                    self.counters.type_tag_tests += *test as u64;
                    self.follow(func, if temps[*cond as usize].truthy() { then } else { otherwise })
                }
                Term::TagTest { value, tag, then, otherwise } => {
                    self.counters.type_tag_tests += 1;
                    self.follow(func, if temps[*value as usize].tag() == *tag { then } else { otherwise })
                }
                Term::Fork(fk) => self.exec_fork(func, fk, &mut temps)?,
            };
        }
    }

    fn follow(&mut self, func: u32, e: &Edge) -> VersionId {
        if let Some(v) = e.target.get() {
            return v;
        }
        let v = self.get_version(func, e.block, &e.ctx);
        e.target.set(Some(v));
        v
    }

    fn check_context(&self, ctx: &TypeContext, temps: &[Value], env: &Rc<Env>, f: &IrFunction, block: u32) -> Res<()> {
        let here = || format!("{} b{block}", f.name);
        for (i, fact) in ctx.temps.iter().enumerate() {
            if !self.fact_holds(fact, &temps[i]) {
                return Err(internal(format!("context claims t{i}:{fact} in {} but found {}", here(), temps[i].kind_name())));
            }
        }
        let cells = env.cells.borrow();
        for (i, fact) in ctx.cells.iter().enumerate() {
            if !self.fact_holds(fact, &cells[i]) {
                return Err(internal(format!("context claims c{i}:{fact} in {} but found {}", here(), cells[i].kind_name())));
            }
        }
        if let Some(s) = ctx.global_shape {
            let actual = self.heap.shape_of(self.global);
            if actual != s {
                return Err(internal(format!("context claims global@{s} in {} but global has {actual}", here())));
            }
        }
        Ok(())
    }

    fn fact_holds(&self, fact: &Fact, v: &Value) -> bool {
        fact.tag.is_none_or(|t| t == v.tag())
            && fact.ident.is_none_or(|id| self.heap.ident_of(v) == Some(id))
            && fact.shape.is_none_or(|s| matches!(v, Value::Object(o) if self.heap.shape_of(*o) == s))
    }

    fn exec_op(&mut self, op: &Op, temps: &mut [Value], env: &Rc<Env>) -> Res<()> {
        match op {
            Op::Const { dst, value } => temps[*dst as usize] = value.clone(),
            Op::Move { dst, src } => temps[*dst as usize] = temps[*src as usize].clone(),
            Op::IntFast { dst, op, lhs, rhs } => {
                temps[*dst as usize] = arith(*op, &temps[*lhs as usize], &temps[*rhs as usize])?;
            }
            Op::Arith { dst, op, lhs, rhs, tests } => {
                self.counters.type_tag_tests += *tests as u64;
                temps[*dst as usize] = arith(*op, &temps[*lhs as usize], &temps[*rhs as usize])?;
            }
            Op::Not { dst, src, test } => {
                self.counters.type_tag_tests += *test as u64;
                temps[*dst as usize] = Value::Bool(!temps[*src as usize].truthy());
            }
            Op::GetIndex { dst, arr, index, tests } => {
                self.counters.type_tag_tests += *tests as u64;
                temps[*dst as usize] = runtime::index_get(&temps[*arr as usize], &temps[*index as usize], &self.heap)?;
            }
            Op::SetIndex { arr, index, val, tests } => {
                self.counters.type_tag_tests += *tests as u64;
                let a = &temps[*arr as usize];
                let at = runtime::index_check(a, &temps[*index as usize], &self.heap)?;
                let Value::Array(r) = a else { unreachable!("index_check accepts only arrays") };
                runtime::store_element(self.heap.array_mut(*r), at, temps[*val as usize].clone());
            }
            Op::NewObject { dst, proto } => {
                let p = proto.map_or(Value::Null, |p| temps[p as usize].clone());
                temps[*dst as usize] = self.heap.new_object(&p)?;
            }
            Op::NewArray { dst, elems } => {
                let vals = elems.iter().map(|e| temps[*e as usize].clone()).collect();
                temps[*dst as usize] = self.heap.alloc_array(vals);
            }
            Op::MakeClosure { dst, func } => {
                temps[*dst as usize] = self.heap.alloc_closure(FnIdent::Script(*func), Some(env.clone()));
            }
            Op::LoadVar { dst, depth, index } => {
                temps[*dst as usize] = env.ancestor(*depth).cells.borrow()[*index as usize].clone();
            }
            Op::StoreVar { depth, index, src } => {
                env.ancestor(*depth).cells.borrow_mut()[*index as usize] = temps[*src as usize].clone();
            }
            Op::DeclareGlobal { name } => {
                if self.heap.lookup_own(self.global, name).is_none() {
                    self.heap.set_prop_slow(self.global, name, Value::Undefined)?;
                }
            }
            Op::Call { dst, callee, this, args, known, test } => {
                self.counters.total_calls += 1;
                if known.is_some() {
                    self.counters.known_callee_calls += 1;
                }
                self.counters.type_tag_tests += *test as u64;
                let Value::Closure(c) = temps[*callee as usize] else {
                    return Err(RuntimeError::not_callable());
                };
                let clo = self.heap.closure(c).clone();
                if self.config.assert_contexts && known.is_some_and(|k| k != clo.ident) {
                    return Err(internal(format!("call site expected {} but called {}", known.unwrap(), clo.ident)));
                }
                let this = this.map_or(Value::Undefined, |t| temps[t as usize].clone());
                let argv: Vec<Value> = args.iter().map(|a| temps[*a as usize].clone()).collect();
                temps[*dst as usize] = match clo.ident {
                    FnIdent::Native(b) => self.native(b, &argv)?,
                    FnIdent::Script(id) => self.call_script(id, clo.env, this, argv)?,
                };
            }
        }
        Ok(())
    }

    fn native(&mut self, b: Builtin, args: &[Value]) -> Res<Value> {
        match b {
            Builtin::Print => {
                let line = runtime::print_line(args, &self.heap);
                self.output.push(line);
                Ok(Value::Undefined)
            }
            Builtin::DefineConst => {
                let name = runtime::define_const_name(args)?;
                let Value::Object(o) = args[0] else { unreachable!("define_const_name checks the receiver") };
                self.heap.define_const(o, &name, runtime::arg(args, 2))?;
                Ok(Value::Undefined)
            }
            Builtin::ObjectWithProto => self.heap.new_object(&runtime::arg(args, 0)),
        }
    }

    /// Shape to propagate into a successor context.
    fn propagate(&self, s: ShapeId) -> Option<ShapeId> {
        self.config.propagates().then_some(s)
    }

    /// Shape dispatch for an access on `o`: nothing when the shape is known
    /// statically, otherwise the site's inline cache. Returns the receiver
    /// shape if the access was cached.
    fn dispatch(&mut self, o: ObjRef, known: Option<ShapeId>, site: SiteId) -> Res<Option<ShapeId>> {
        let actual = self.heap.shape_of(o);
        match known {
            Some(s) => {
                if s != actual && self.config.assert_contexts {
                    return Err(internal(format!("access assumed shape {s} but object has {actual}")));
                }
                Ok(Some(actual))
            }
            None => {
                let d = self.pics[site.0 as usize].dispatch(actual, self.config.pic_limit);
                self.counters.shape_tests += d.tests as u64;
                Ok(d.cached.then_some(actual))
            }
        }
    }

    fn read_object(&mut self, o: ObjRef, name: &str, known: Option<ShapeId>, site: SiteId, obs: &mut Obs) -> Res<Option<Value>> {
        self.heap.stats.property_reads += 1;
        let cached = self.dispatch(o, known, site)?;
        obs.obj_shape = match (known, cached) {
            (Some(s), _) => Some(s),
            (None, Some(s)) => self.propagate(s),
            (None, None) => None,
        };
        let look = self.heap.lookup_chain(o, name);
        if look.proto_links > 0 {
            // Each link is a null check on the next prototype; the first is
            // folded when the receiver's shape (and so its prototype slot's
            // descriptor) is known.
            let skip = (known.is_some() || (self.config.propagates() && cached.is_some())) as u32;
            self.counters.type_tag_tests += look.proto_links.saturating_sub(skip) as u64;
        }
        if self.config.typed_shapes() {
            if let Some(d) = look.desc {
                obs.result = Fact { tag: d.tag(), shape: None, ident: d.identity() };
            }
        }
        Ok(look.desc.map(|_| look.value))
    }

    #[allow(clippy::too_many_arguments)]
    fn write_object(
        &mut self,
        o: ObjRef,
        name: &str,
        v: Value,
        known: Option<ShapeId>,
        site: SiteId,
        guard: bool,
        obs: &mut Obs,
    ) -> Res<(ShapeId, ShapeId)> {
        let cached = self.dispatch(o, known, site)?;
        if guard {
            self.counters.write_guards += 1;
            obs.val = Some(Fact { tag: Some(v.tag()), shape: None, ident: self.heap.ident_of(&v) });
        }
        let effect = self.heap.set_prop_slow(o, name, v)?;
        let (pre, post) = (effect.before(), effect.after());
        obs.obj_shape = if known == Some(post) {
            Some(post)
        } else if cached.is_some() {
            self.propagate(post)
        } else {
            None
        };
        Ok((pre, post))
    }

    fn exec_fork(&mut self, func: u32, fk: &Fork, temps: &mut [Value]) -> Res<VersionId> {
        let mut obs = Obs::default();
        match &fk.kind {
            ForkKind::Overflow { dst, op, lhs, rhs } => {
                self.counters.overflow_checks += 1;
                let r = match (&temps[*lhs as usize], &temps[*rhs as usize]) {
                    (Value::Int(a), Value::Int(b)) => match int_arith_checked(*op, *a, *b) {
                        IntResult::Int(i) => Value::Int(i),
                        IntResult::Promoted(f) => Value::Float(f),
                    },
                    (a, b) => arith(*op, a, b)?,
                };
                obs.result = Fact::tag(r.tag());
                temps[*dst as usize] = r;
            }
            ForkKind::GetProp { dst, obj, name, site, tag_test, shape } => {
                let base = temps[*obj as usize].clone();
                if *tag_test {
                    self.counters.type_tag_tests += 1;
                    obs.obj_tag = Some(base.tag());
                }
                temps[*dst as usize] = match base {
                    Value::Object(o) => self.read_object(o, name, *shape, *site, &mut obs)?.unwrap_or(Value::Undefined),
                    other => runtime::primitive_get(&other, name, &self.heap)?,
                };
            }
            ForkKind::SetProp { obj, name, val, site, tag_test, shape, guard } => {
                let base = temps[*obj as usize].clone();
                if *tag_test {
                    self.counters.type_tag_tests += 1;
                    obs.obj_tag = Some(TypeTag::Object);
                }
                let Value::Object(o) = base else {
                    return Err(RuntimeError::cannot_write(name, base.kind_name()));
                };
                let v = temps[*val as usize].clone();
                let (pre, post) = self.write_object(o, name, v, *shape, *site, *guard, &mut obs)?;
                if pre != post && fk.ctx.mentions_shape(pre, Some(*obj)) {
                    obs.dropped = Some(pre);
                }
            }
            ForkKind::GetGlobal { dst, name, site, shape } => {
                let g = self.global;
                temps[*dst as usize] =
                    self.read_object(g, name, *shape, *site, &mut obs)?.ok_or_else(|| RuntimeError::not_defined(name))?;
            }
            ForkKind::SetGlobal { name, val, site, shape, guard } => {
                let g = self.global;
                let v = temps[*val as usize].clone();
                self.write_object(g, name, v, *shape, *site, *guard, &mut obs)?;
            }
        }
        if let Some(&v) = fk.cache.borrow().get(&obs) {
            return Ok(v);
        }
        let ctx = fk.successor_ctx(&obs);
        let v = self.get_version(func, fk.next, &ctx);
        fk.cache.borrow_mut().insert(obs, v);
        Ok(v)
    }
}

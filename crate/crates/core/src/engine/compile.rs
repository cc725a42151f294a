//! Lazy creation of block versions: each version is the block's code
//! specialized to one entry context, with folded tests removed.

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::rc::Rc;

use super::context::{Fact, TypeContext};
use super::Engine;
use crate::frontend::ir::{BlockId, ConstVal, Instr, IrFunction, SiteId, Temp, Terminator};
use crate::shape::{PropFlags, ShapeId, ShapeTree, TypeDesc, PROTO};
use crate::value::{result_tag, BinOp, FnIdent, TypeTag, Value};

pub type VersionId = u32;

#[derive(Debug)]
pub(super) enum Op {
    Const { dst: Temp, value: Value },
    Move { dst: Temp, src: Temp },
    /// Non-overflowing operator on two int32 operands.
    IntFast { dst: Temp, op: BinOp, lhs: Temp, rhs: Temp },
    Arith { dst: Temp, op: BinOp, lhs: Temp, rhs: Temp, tests: u8 },
    Not { dst: Temp, src: Temp, test: bool },
    GetIndex { dst: Temp, arr: Temp, index: Temp, tests: u8 },
    SetIndex { arr: Temp, index: Temp, val: Temp, tests: u8 },
    NewObject { dst: Temp, proto: Option<Temp> },
    NewArray { dst: Temp, elems: Vec<Temp> },
    MakeClosure { dst: Temp, func: u32 },
    LoadVar { dst: Temp, depth: u32, index: u32 },
    StoreVar { depth: u32, index: u32, src: Temp },
    DeclareGlobal { name: Rc<str> },
    Call { dst: Temp, callee: Temp, this: Option<Temp>, args: Vec<Temp>, known: Option<FnIdent>, test: bool },
}

/// A static successor, resolved to a version on first use.
#[derive(Debug)]
pub(super) struct Edge {
    pub block: BlockId,
    pub ctx: TypeContext,
    pub target: Cell<Option<VersionId>>,
}

impl Edge {
    fn new(block: BlockId, ctx: TypeContext) -> Self {
        Edge { block, ctx, target: Cell::new(None) }
    }
}

#[derive(Debug)]
pub(super) enum ForkKind {
    Overflow { dst: Temp, op: BinOp, lhs: Temp, rhs: Temp },
    GetProp { dst: Temp, obj: Temp, name: Rc<str>, site: SiteId, tag_test: bool, shape: Option<ShapeId> },
    SetProp { obj: Temp, name: Rc<str>, val: Temp, site: SiteId, tag_test: bool, shape: Option<ShapeId>, guard: bool },
    GetGlobal { dst: Temp, name: Rc<str>, site: SiteId, shape: Option<ShapeId> },
    SetGlobal { name: Rc<str>, val: Temp, site: SiteId, shape: Option<ShapeId>, guard: bool },
}

/// What a fork instruction observed at run time. Equal observations share
/// a successor version.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub(super) struct Obs {
    pub obj_tag: Option<TypeTag>,
    pub obj_shape: Option<ShapeId>,
    pub result: Fact,
    pub val: Option<Fact>,
    pub dropped: Option<ShapeId>,
}

/// Terminal instruction whose outcome selects the successor version.
#[derive(Debug)]
pub(super) struct Fork {
    pub kind: ForkKind,
    /// Context just before the instruction.
    pub ctx: TypeContext,
    pub next: BlockId,
    pub cache: RefCell<HashMap<Obs, VersionId>>,
}

impl Fork {
    pub fn successor_ctx(&self, obs: &Obs) -> TypeContext {
        let mut c = self.ctx.clone();
        match &self.kind {
            ForkKind::Overflow { dst, .. } => c.temps[*dst as usize] = obs.result,
            ForkKind::GetProp { dst, obj, .. } => {
                let o = &mut c.temps[*obj as usize];
                if let Some(t) = obs.obj_tag {
                    o.tag = Some(t);
                }
                o.shape = obs.obj_shape;
                c.temps[*dst as usize] = obs.result;
            }
            ForkKind::SetProp { obj, val, .. } => {
                if let Some(s) = obs.dropped {
                    c.drop_shape(s);
                }
                if let Some(v) = obs.val {
                    c.temps[*val as usize] = v;
                }
                let o = &mut c.temps[*obj as usize];
                if let Some(t) = obs.obj_tag {
                    o.tag = Some(t);
                }
                o.shape = obs.obj_shape;
            }
            ForkKind::GetGlobal { dst, .. } => {
                c.global_shape = obs.obj_shape;
                c.temps[*dst as usize] = obs.result;
            }
            ForkKind::SetGlobal { val, .. } => {
                if let Some(v) = obs.val {
                    c.temps[*val as usize] = v;
                }
                c.global_shape = obs.obj_shape;
            }
        }
        c
    }
}

#[derive(Debug)]
pub(super) enum Term {
    Goto(Edge),
    Branch { cond: Temp, test: bool, then: Edge, otherwise: Edge },
    TagTest { value: Temp, tag: TypeTag, then: Edge, otherwise: Edge },
    Return(Temp),
    Fork(Box<Fork>),
}

#[derive(Debug)]
pub(super) struct Version {
    pub block: BlockId,
    pub ctx: TypeContext,
    pub code: Vec<Op>,
    pub term: Term,
    pub generic: bool,
    /// Specialized instructions, counting each emitted dynamic check.
    pub size: usize,
}

/// Versions of one block.
#[derive(Debug, Default)]
pub(super) struct BlockTable {
    pub by_ctx: HashMap<TypeContext, VersionId>,
    pub order: Vec<VersionId>,
    pub generic: Option<VersionId>,
    /// Distinct shapes entry contexts have claimed, per temp, then per
    /// cell, then for the global object.
    pub shapes: Vec<Vec<ShapeId>>,
}

impl BlockTable {
    pub fn count(&self) -> usize {
        self.order.len() + self.generic.is_some() as usize
    }

    /// Keeps `s` as the shape of value `slot` if that value has claimed
    /// fewer than `limit` other shapes at this block.
    fn admit(&mut self, slot: usize, s: ShapeId, limit: Option<usize>) -> bool {
        if self.shapes.len() <= slot {
            self.shapes.resize(slot + 1, Vec::new());
        }
        let seen = &mut self.shapes[slot];
        if seen.contains(&s) {
            return true;
        }
        if limit.is_some_and(|n| seen.len() >= n) {
            return false;
        }
        seen.push(s);
        true
    }

    /// Applies the per-value shape cap to an entry context.
    fn limit_shapes(&mut self, ctx: &mut TypeContext, limit: Option<usize>) {
        let values = ctx.temps.iter_mut().chain(ctx.cells.iter_mut()).map(|f| &mut f.shape);
        for (slot, shape) in values.chain(std::iter::once(&mut ctx.global_shape)).enumerate() {
            if let Some(s) = *shape {
                if !self.admit(slot, s, limit) {
                    *shape = None;
                }
            }
        }
    }
}

fn const_value(c: &ConstVal) -> Value {
    match c {
        ConstVal::Int(i) => Value::Int(*i),
        ConstVal::Float(f) => Value::Float(*f),
        ConstVal::Str(s) => Value::Str(s.clone()),
        ConstVal::Bool(b) => Value::Bool(*b),
        ConstVal::Null => Value::Null,
        ConstVal::Undefined => Value::Undefined,
    }
}

impl Engine {
    /// The version of `block` for `ctx`, created on first request. Facts
    /// about dead temps are dropped and each value may claim at most
    /// `maxshapes` distinct shapes per block. Once a block has `maxvers`
    /// specialized versions, further contexts share one generic version.
    pub(super) fn get_version(&mut self, func: u32, block: BlockId, ctx: &TypeContext) -> VersionId {
        let prog = self.program.clone();
        let f = prog.function(func);
        let mut masked = ctx.masked(&f.live_in[block.0 as usize]);
        let limit = self.config.maxshapes.as_option();
        self.tables[func as usize][block.0 as usize].limit_shapes(&mut masked, limit);
        let table = &self.tables[func as usize][block.0 as usize];
        if let Some(&v) = table.by_ctx.get(&masked) {
            return v;
        }
        if table.order.len() < self.config.maxvers {
            let v = self.compile(f, block, masked.clone(), false);
            let table = &mut self.tables[func as usize][block.0 as usize];
            table.by_ctx.insert(masked, v);
            table.order.push(v);
            return v;
        }
        let generic = masked.merge_into_generic();
        if let Some(&v) = table.by_ctx.get(&generic) {
            return v;
        }
        if let Some(v) = table.generic {
            return v;
        }
        let v = self.compile(f, block, generic, true);
        self.tables[func as usize][block.0 as usize].generic = Some(v);
        v
    }

    fn compile(&mut self, f: &IrFunction, block: BlockId, entry: TypeContext, generic: bool) -> VersionId {
        let b = f.block(block);
        let mut ctx = entry.clone();
        let mut checks = 0usize;
        let fork_last = b.instrs.last().is_some_and(Instr::is_fork_point);
        let plain = if fork_last { &b.instrs[..b.instrs.len() - 1] } else { &b.instrs[..] };
        let code: Vec<Op> = plain.iter().map(|i| self.compile_instr(f, i, &mut ctx, &mut checks)).collect();
        let term = if fork_last {
            let Terminator::Jump(next) = b.term else { unreachable!("fork points end in a jump") };
            let kind = self.compile_fork(b.instrs.last().expect("fork instruction"), &ctx, &mut checks);
            Term::Fork(Box::new(Fork {
                kind,
                ctx,
                next,
                cache: RefCell::new(HashMap::new()),
            }))
        } else {
            match &b.term {
                Terminator::Jump(t) => Term::Goto(Edge::new(*t, ctx)),
                Terminator::Branch { cond, then, otherwise } => {
                    let test = ctx.temps[*cond as usize].tag.is_none();
                    checks += test as usize;
                    Term::Branch { cond: *cond, test, then: Edge::new(*then, ctx.clone()), otherwise: Edge::new(*otherwise, ctx) }
                }
                Terminator::TagTest { value, tag, then, otherwise } => match ctx.temps[*value as usize].tag {
                    Some(t) => Term::Goto(Edge::new(if t == *tag { *then } else { *otherwise }, ctx)),
                    None => {
                        checks += 1;
                        let mut then_ctx = ctx.clone();
                        then_ctx.temps[*value as usize] = Fact::tag(*tag);
                        Term::TagTest {
                            value: *value,
                            tag: *tag,
                            then: Edge::new(*then, then_ctx),
                            otherwise: Edge::new(*otherwise, ctx),
                        }
                    }
                },
                Terminator::Return(t) => Term::Return(*t),
            }
        };
        let size = code.len() + 1 + checks;
        self.counters.versions_created += 1;
        self.counters.specialized_instructions += size as u64;
        self.versions.push(Rc::new(Version { block, ctx: entry, code, term, generic, size }));
        self.versions.len() as VersionId - 1
    }

    fn compile_instr(&mut self, f: &IrFunction, ins: &Instr, ctx: &mut TypeContext, checks: &mut usize) -> Op {
        let fact = |ctx: &TypeContext, t: Temp| ctx.temps[t as usize];
        match ins {
            Instr::Const { dst, value } => {
                ctx.temps[*dst as usize] = Fact::tag(value.tag());
                Op::Const { dst: *dst, value: const_value(value) }
            }
            Instr::Move { dst, src } => {
                ctx.temps[*dst as usize] = fact(ctx, *src);
                Op::Move { dst: *dst, src: *src }
            }
            Instr::IntOp { dst, op, lhs, rhs } => {
                ctx.temps[*dst as usize] = Fact::maybe_tag(op.fixed_result_tag());
                Op::IntFast { dst: *dst, op: *op, lhs: *lhs, rhs: *rhs }
            }
            Instr::Arith { dst, op, lhs, rhs } => {
                let (a, b) = (fact(ctx, *lhs).tag, fact(ctx, *rhs).tag);
                let tests = if op.is_equality() { 0 } else { a.is_none() as u8 + b.is_none() as u8 };
                *checks += tests as usize;
                let tag = match (a, b) {
                    (Some(a), Some(b)) => result_tag(*op, a, b),
                    _ => op.fixed_result_tag(),
                };
                ctx.temps[*dst as usize] = Fact::maybe_tag(tag);
                Op::Arith { dst: *dst, op: *op, lhs: *lhs, rhs: *rhs, tests }
            }
            Instr::Not { dst, src } => {
                let test = fact(ctx, *src).tag.is_none();
                *checks += test as usize;
                ctx.temps[*dst as usize] = Fact::tag(TypeTag::Const);
                Op::Not { dst: *dst, src: *src, test }
            }
            Instr::GetIndex { dst, arr, index } => {
                let tests = self.learn_index(ctx, *arr, *index);
                *checks += tests as usize;
                ctx.temps[*dst as usize] = Fact::UNKNOWN;
                Op::GetIndex { dst: *dst, arr: *arr, index: *index, tests }
            }
            Instr::SetIndex { arr, index, val } => {
                let tests = self.learn_index(ctx, *arr, *index);
                *checks += tests as usize;
                Op::SetIndex { arr: *arr, index: *index, val: *val, tests }
            }
            Instr::NewObject { dst, proto } => {
                let proto_tag = match proto {
                    None => Some(TypeTag::Const),
                    Some(p) => fact(ctx, *p).tag.filter(|t| *t == TypeTag::Object),
                };
                let shape = match proto_tag {
                    Some(t) if self.config.propagates() => {
                        let desc = self.heap.tree.canonical(TypeDesc::of_tag(t));
                        Some(
                            self.heap
                                .tree
                                .define_property(ShapeTree::ROOT, PROTO, desc, PropFlags::HIDDEN)
                                .expect("root has no properties"),
                        )
                    }
                    _ => None,
                };
                ctx.temps[*dst as usize] = Fact::object(shape);
                Op::NewObject { dst: *dst, proto: *proto }
            }
            Instr::NewArray { dst, elems } => {
                ctx.temps[*dst as usize] = Fact::tag(TypeTag::Array);
                Op::NewArray { dst: *dst, elems: elems.clone() }
            }
            Instr::MakeClosure { dst, func } => {
                ctx.temps[*dst as usize] = Fact::closure(Some(FnIdent::Script(*func)));
                Op::MakeClosure { dst: *dst, func: *func }
            }
            Instr::LoadVar { dst, depth, index } => {
                ctx.temps[*dst as usize] = if *depth == 0 { ctx.cells[*index as usize] } else { Fact::UNKNOWN };
                Op::LoadVar { dst: *dst, depth: *depth, index: *index }
            }
            Instr::StoreVar { depth, index, src } => {
                if *depth == 0 {
                    ctx.cells[*index as usize] = fact(ctx, *src);
                }
                Op::StoreVar { depth: *depth, index: *index, src: *src }
            }
            Instr::DeclareGlobal { name } => {
                ctx.global_shape = None;
                Op::DeclareGlobal { name: name.clone() }
            }
            Instr::Call { dst, callee, this, args } => {
                let c = fact(ctx, *callee);
                let known = c.ident;
                let test = known.is_none() && c.tag.is_none();
                *checks += test as usize;
                ctx.after_call(&f.cell_mutable);
                ctx.temps[*dst as usize] = Fact::UNKNOWN;
                Op::Call { dst: *dst, callee: *callee, this: *this, args: args.clone(), known, test }
            }
            Instr::GetProp { .. } | Instr::SetProp { .. } | Instr::GetGlobal { .. } | Instr::SetGlobal { .. } => {
                unreachable!("property access always ends its block")
            }
        }
    }

    fn learn_index(&self, ctx: &mut TypeContext, arr: Temp, index: Temp) -> u8 {
        let tests = ctx.temps[arr as usize].tag.is_none() as u8 + ctx.temps[index as usize].tag.is_none() as u8;
        ctx.temps[arr as usize] = Fact::tag(TypeTag::Array);
        ctx.temps[index as usize] = Fact::tag(TypeTag::Int32);
        tests
    }

    fn compile_fork(&self, ins: &Instr, ctx: &TypeContext, checks: &mut usize) -> ForkKind {
        let typed = self.config.typed_shapes();
        match ins {
            Instr::IntOp { dst, op, lhs, rhs } => {
                *checks += 1;
                ForkKind::Overflow { dst: *dst, op: *op, lhs: *lhs, rhs: *rhs }
            }
            Instr::GetProp { dst, obj, name, site } => {
                let f = ctx.temps[*obj as usize];
                let tag_test = f.tag.is_none();
                *checks += tag_test as usize + f.shape.is_none() as usize;
                ForkKind::GetProp { dst: *dst, obj: *obj, name: name.clone(), site: *site, tag_test, shape: f.shape }
            }
            Instr::SetProp { obj, name, val, site } => {
                let f = ctx.temps[*obj as usize];
                let tag_test = f.tag.is_none();
                let guard = typed && !ctx.temps[*val as usize].desc_known();
                *checks += tag_test as usize + f.shape.is_none() as usize + guard as usize;
                ForkKind::SetProp {
                    obj: *obj,
                    name: name.clone(),
                    val: *val,
                    site: *site,
                    tag_test,
                    shape: f.shape,
                    guard,
                }
            }
            Instr::GetGlobal { dst, name, site } => {
                *checks += ctx.global_shape.is_none() as usize;
                ForkKind::GetGlobal { dst: *dst, name: name.clone(), site: *site, shape: ctx.global_shape }
            }
            Instr::SetGlobal { name, val, site } => {
                let guard = typed && !ctx.temps[*val as usize].desc_known();
                *checks += ctx.global_shape.is_none() as usize + guard as usize;
                ForkKind::SetGlobal { name: name.clone(), val: *val, site: *site, shape: ctx.global_shape, guard }
            }
            other => unreachable!("{other} is not a fork point"),
        }
    }
}

//! AST to block IR.
//!
//! Locals live in temps unless a nested function refers to them, in which
//! case they live in environment cells. Names that resolve to no enclosing
//! function are properties of the global object.

use std::collections::{HashMap, HashSet};
use std::rc::Rc;

use thiserror::Error;

use super::ast::{declared_names, Expr, Function, Program, Stmt};
use super::ir::{Block, BlockId, ConstVal, Instr, IrFunction, IrProgram, SiteId, Temp, Terminator};
use crate::value::{BinOp, Builtin, TypeTag};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LowerOptions {
    /// Reject identifiers inside functions that are declared nowhere in the
    /// program (neither locally, in an enclosing function, nor at top level).
    pub strict_locals: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("ScopeError: '{name}' is not declared in function {function}")]
pub struct ScopeError {
    pub name: String,
    pub function: String,
}

pub fn lower(p: &Program) -> Result<IrProgram, ScopeError> {
    lower_with(p, LowerOptions::default())
}

pub fn lower_with(p: &Program, opts: LowerOptions) -> Result<IrProgram, ScopeError> {
    let analysis = Analysis::run(p);
    let (top_vars, top_funcs) = declared_names(&p.body);
    let mut top_names: HashSet<String> = top_vars.into_iter().collect();
    top_names.extend(top_funcs.iter().filter_map(|f| f.name.clone()));
    top_names.extend(Builtin::ALL.iter().map(|b| b.global_name().to_string()));
    let mut lw = Lowerer {
        analysis,
        opts,
        top_names,
        functions: (0..=p.function_count).map(|_| None).collect(),
        scopes: Vec::new(),
        num_sites: 0,
    };
    lw.lower_main(p)?;
    Ok(IrProgram {
        functions: lw.functions.into_iter().map(|f| f.expect("every function lowered")).collect(),
        main: p.function_count,
        num_sites: lw.num_sites,
    })
}

/// Which locals are captured by nested functions, and which are ever the
/// target of an assignment statement.
#[derive(Debug, Default)]
struct Analysis {
    captured: HashSet<(u32, String)>,
    assigned: HashSet<(u32, String)>,
}

impl Analysis {
    fn run(p: &Program) -> Self {
        let mut a = Analysis::default();
        let mut stack = Vec::new();
        a.stmts(&p.body, &mut stack);
        a
    }

    fn locals_of(f: &Function) -> HashSet<String> {
        let (vars, funcs) = declared_names(&f.body);
        let mut s: HashSet<String> = f.params.iter().cloned().collect();
        s.extend(vars);
        s.extend(funcs.iter().filter_map(|g| g.name.clone()));
        s
    }

    fn name(&mut self, name: &str, assign: bool, stack: &[(u32, HashSet<String>)]) {
        for (depth, (id, locals)) in stack.iter().rev().enumerate() {
            if locals.contains(name) {
                if depth > 0 {
                    self.captured.insert((*id, name.to_string()));
                }
                if assign {
                    self.assigned.insert((*id, name.to_string()));
                }
                return;
            }
        }
    }

    fn function(&mut self, f: &Function, stack: &mut Vec<(u32, HashSet<String>)>) {
        stack.push((f.id, Self::locals_of(f)));
        self.stmts(&f.body, stack);
        stack.pop();
    }

    fn stmts(&mut self, body: &[Stmt], stack: &mut Vec<(u32, HashSet<String>)>) {
        for s in body {
            match s {
                Stmt::Var { init, .. } => {
                    if let Some(e) = init {
                        self.expr(e, stack);
                    }
                }
                Stmt::Assign { target, value } => {
                    match target {
                        Expr::Ident(n) => self.name(n, true, stack),
                        other => self.expr(other, stack),
                    }
                    self.expr(value, stack);
                }
                Stmt::Expr(e) => self.expr(e, stack),
                Stmt::If { cond, then, otherwise } => {
                    self.expr(cond, stack);
                    self.stmts(then, stack);
                    self.stmts(otherwise, stack);
                }
                Stmt::While { cond, body } => {
                    self.expr(cond, stack);
                    self.stmts(body, stack);
                }
                Stmt::Return(e) => {
                    if let Some(e) = e {
                        self.expr(e, stack);
                    }
                }
                Stmt::FunctionDecl(f) => self.function(f, stack),
                Stmt::Block(b) => self.stmts(b, stack),
            }
        }
    }

    fn expr(&mut self, e: &Expr, stack: &mut Vec<(u32, HashSet<String>)>) {
        match e {
            Expr::Int(_) | Expr::Float(_) | Expr::Str(_) | Expr::Bool(_) | Expr::Null | Expr::Undefined | Expr::This => {}
            Expr::Ident(n) => self.name(n, false, stack),
            Expr::Binary { lhs, rhs, .. } | Expr::And(lhs, rhs) | Expr::Or(lhs, rhs) => {
                self.expr(lhs, stack);
                self.expr(rhs, stack);
            }
            Expr::Not(x) => self.expr(x, stack),
            Expr::Object(entries) => entries.iter().for_each(|(_, v)| self.expr(v, stack)),
            Expr::Array(elems) => elems.iter().for_each(|v| self.expr(v, stack)),
            Expr::Member { obj, .. } => self.expr(obj, stack),
            Expr::Index { obj, index } => {
                self.expr(obj, stack);
                self.expr(index, stack);
            }
            Expr::Call { callee, args } => {
                self.expr(callee, stack);
                args.iter().for_each(|a| self.expr(a, stack));
            }
            Expr::Function(f) => self.function(f, stack),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Loc {
    Temp(Temp),
    Cell(u32),
}

struct Builder {
    id: u32,
    name: String,
    blocks: Vec<(Vec<Instr>, Option<Terminator>)>,
    cur: usize,
    num_temps: u32,
    /// Tags fixed by the producing instruction.
    hints: HashMap<Temp, TypeTag>,
    this_temp: Option<Temp>,
    cell_mutable: Vec<bool>,
}

impl Builder {
    fn new(id: u32, name: String) -> Self {
        Builder {
            id,
            name,
            blocks: vec![(Vec::new(), None)],
            cur: 0,
            num_temps: 0,
            hints: HashMap::new(),
            this_temp: None,
            cell_mutable: Vec::new(),
        }
    }

    fn temp(&mut self) -> Temp {
        self.num_temps += 1;
        self.num_temps - 1
    }

    fn hinted(&mut self, tag: Option<TypeTag>) -> Temp {
        let t = self.temp();
        if let Some(tag) = tag {
            self.hints.insert(t, tag);
        }
        t
    }

    fn new_block(&mut self) -> BlockId {
        self.blocks.push((Vec::new(), None));
        BlockId(self.blocks.len() as u32 - 1)
    }

    fn switch_to(&mut self, b: BlockId) {
        self.cur = b.0 as usize;
    }

    fn emit(&mut self, i: Instr) {
        let fork = i.is_fork_point();
        self.blocks[self.cur].0.push(i);
        if fork {
            let next = self.new_block();
            self.terminate(Terminator::Jump(next));
            self.switch_to(next);
        }
    }

    fn terminate(&mut self, t: Terminator) {
        let slot = &mut self.blocks[self.cur].1;
        debug_assert!(slot.is_none(), "block terminated twice");
        *slot = Some(t);
    }

    fn constant(&mut self, v: ConstVal) -> Temp {
        let dst = self.hinted(Some(v.tag()));
        self.emit(Instr::Const { dst, value: v });
        dst
    }

    fn finish(mut self, params: Vec<Temp>) -> IrFunction {
        for i in 0..self.blocks.len() {
            if self.blocks[i].1.is_none() {
                self.cur = i;
                let u = self.constant(ConstVal::Undefined);
                self.blocks[i].1 = Some(Terminator::Return(u));
            }
        }
        let this_temp = self.this_temp.unwrap_or_else(|| self.temp());
        let blocks = self
            .blocks
            .into_iter()
            .enumerate()
            .map(|(i, (instrs, term))| Block { id: BlockId(i as u32), instrs, term: term.expect("terminated") })
            .collect();
        let mut f = IrFunction {
            id: self.id,
            name: self.name,
            this_temp,
            params,
            num_temps: self.num_temps,
            num_cells: self.cell_mutable.len() as u32,
            cell_mutable: self.cell_mutable,
            blocks,
            live_in: Vec::new(),
        };
        f.compute_liveness();
        f
    }
}

struct Lowerer {
    analysis: Analysis,
    opts: LowerOptions,
    top_names: HashSet<String>,
    functions: Vec<Option<IrFunction>>,
    /// Locals of the functions being lowered, innermost last.
    scopes: Vec<HashMap<String, Loc>>,
    num_sites: u32,
}

enum Resolved {
    Local(Loc, u32),
    Global,
}

impl Lowerer {
    fn site(&mut self) -> SiteId {
        self.num_sites += 1;
        SiteId(self.num_sites - 1)
    }

    fn lower_main(&mut self, p: &Program) -> Result<(), ScopeError> {
        let mut b = Builder::new(p.function_count, "<main>".to_string());
        let (_, funcs) = declared_names(&p.body);
        for f in funcs {
            let c = self.closure(&mut b, &f)?;
            let name = f.name.clone().expect("declarations are named");
            let site = self.site();
            b.emit(Instr::SetGlobal { name: Rc::from(name.as_str()), val: c, site });
        }
        self.stmts(&mut b, &p.body)?;
        self.functions[p.function_count as usize] = Some(b.finish(Vec::new()));
        Ok(())
    }

    fn lower_function(&mut self, f: &Function) -> Result<(), ScopeError> {
        let name = f.name.clone().unwrap_or_else(|| format!("<anonymous fn{}>", f.id));
        let mut b = Builder::new(f.id, name);
        let this = b.temp();
        b.this_temp = Some(this);
        let params: Vec<Temp> = f.params.iter().map(|_| b.temp()).collect();
        let (vars, funcs) = declared_names(&f.body);
        let mut locals = HashMap::new();
        let cell_of = |b: &mut Builder, name: &str| -> Option<Loc> {
            let key = (f.id, name.to_string());
            if self.analysis.captured.contains(&key) {
                b.cell_mutable.push(self.analysis.assigned.contains(&key));
                Some(Loc::Cell(b.cell_mutable.len() as u32 - 1))
            } else {
                None
            }
        };
        for (p, &t) in f.params.iter().zip(&params) {
            let loc = match locals.get(p) {
                Some(&l) => l,
                None => cell_of(&mut b, p).unwrap_or(Loc::Temp(t)),
            };
            match loc {
                Loc::Temp(_) => {
                    locals.insert(p.clone(), Loc::Temp(t));
                }
                Loc::Cell(index) => {
                    locals.insert(p.clone(), loc);
                    b.emit(Instr::StoreVar { depth: 0, index, src: t });
                }
            }
        }
        let decl_names = funcs.iter().filter_map(|g| g.name.clone());
        for name in vars.into_iter().chain(decl_names) {
            if locals.contains_key(&name) {
                continue;
            }
            let loc = match cell_of(&mut b, &name) {
                Some(l) => l,
                None => {
                    let t = b.temp();
                    b.emit(Instr::Const { dst: t, value: ConstVal::Undefined });
                    Loc::Temp(t)
                }
            };
            locals.insert(name, loc);
        }
        self.scopes.push(locals);
        let result = (|| {
            for g in &funcs {
                let c = self.closure(&mut b, g)?;
                let name = g.name.as_deref().expect("declarations are named");
                self.store_local(&mut b, name, c);
            }
            self.stmts(&mut b, &f.body)
        })();
        self.scopes.pop();
        result?;
        self.functions[f.id as usize] = Some(b.finish(params));
        Ok(())
    }

    fn closure(&mut self, b: &mut Builder, f: &Rc<Function>) -> Result<Temp, ScopeError> {
        self.lower_function(f)?;
        let dst = b.hinted(Some(TypeTag::Closure));
        b.emit(Instr::MakeClosure { dst, func: f.id });
        Ok(dst)
    }

    fn resolve(&self, b: &Builder, name: &str) -> Result<Resolved, ScopeError> {
        for (depth, scope) in self.scopes.iter().rev().enumerate() {
            if let Some(&loc) = scope.get(name) {
                return Ok(Resolved::Local(loc, depth as u32));
            }
        }
        if self.opts.strict_locals && !self.scopes.is_empty() && !self.top_names.contains(name) {
            return Err(ScopeError { name: name.to_string(), function: b.name.clone() });
        }
        Ok(Resolved::Global)
    }

    fn store_local(&mut self, b: &mut Builder, name: &str, val: Temp) {
        match self.scopes.last().and_then(|s| s.get(name)) {
            Some(Loc::Temp(t)) => b.emit(Instr::Move { dst: *t, src: val }),
            Some(Loc::Cell(index)) => b.emit(Instr::StoreVar { depth: 0, index: *index, src: val }),
            None => unreachable!("'{name}' is not a local"),
        }
    }

    fn store_name(&mut self, b: &mut Builder, name: &str, val: Temp) -> Result<(), ScopeError> {
        match self.resolve(b, name)? {
            Resolved::Local(Loc::Temp(t), _) => b.emit(Instr::Move { dst: t, src: val }),
            Resolved::Local(Loc::Cell(index), depth) => b.emit(Instr::StoreVar { depth, index, src: val }),
            Resolved::Global => {
                let site = self.site();
                b.emit(Instr::SetGlobal { name: Rc::from(name), val, site });
            }
        }
        Ok(())
    }

    fn stmts(&mut self, b: &mut Builder, body: &[Stmt]) -> Result<(), ScopeError> {
        body.iter().try_for_each(|s| self.stmt(b, s))
    }

    fn stmt(&mut self, b: &mut Builder, s: &Stmt) -> Result<(), ScopeError> {
        let top = self.scopes.is_empty();
        match s {
            Stmt::Var { name, init } => match (init, top) {
                (Some(e), true) => {
                    let v = self.expr(b, e)?;
                    let site = self.site();
                    b.emit(Instr::SetGlobal { name: Rc::from(name.as_str()), val: v, site });
                }
                (None, true) => b.emit(Instr::DeclareGlobal { name: Rc::from(name.as_str()) }),
                (Some(e), false) => {
                    let v = self.expr(b, e)?;
                    self.store_local(b, name, v);
                }
                (None, false) => {}
            },
            Stmt::Assign { target, value } => match target {
                Expr::Ident(name) => {
                    let v = self.expr(b, value)?;
                    self.store_name(b, name, v)?;
                }
                Expr::Member { obj, name } => {
                    let o = self.expr(b, obj)?;
                    let v = self.expr(b, value)?;
                    let site = self.site();
                    b.emit(Instr::SetProp { obj: o, name: Rc::from(name.as_str()), val: v, site });
                }
                Expr::Index { obj, index } => {
                    let a = self.expr(b, obj)?;
                    let i = self.expr(b, index)?;
                    let v = self.expr(b, value)?;
                    b.emit(Instr::SetIndex { arr: a, index: i, val: v });
                }
                _ => unreachable!("parser rejects other assignment targets"),
            },
            Stmt::Expr(e) => {
                self.expr(b, e)?;
            }
            Stmt::If { cond, then, otherwise } => {
                let c = self.expr(b, cond)?;
                let (tb, eb, join) = (b.new_block(), b.new_block(), b.new_block());
                b.terminate(Terminator::Branch { cond: c, then: tb, otherwise: eb });
                b.switch_to(tb);
                self.stmts(b, then)?;
                b.terminate(Terminator::Jump(join));
                b.switch_to(eb);
                self.stmts(b, otherwise)?;
                b.terminate(Terminator::Jump(join));
                b.switch_to(join);
            }
            Stmt::While { cond, body } => {
                let (head, body_b, exit) = (b.new_block(), b.new_block(), b.new_block());
                b.terminate(Terminator::Jump(head));
                b.switch_to(head);
                let c = self.expr(b, cond)?;
                b.terminate(Terminator::Branch { cond: c, then: body_b, otherwise: exit });
                b.switch_to(body_b);
                self.stmts(b, body)?;
                b.terminate(Terminator::Jump(head));
                b.switch_to(exit);
            }
            Stmt::Return(e) => {
                let v = match e {
                    Some(e) => self.expr(b, e)?,
                    None => b.constant(ConstVal::Undefined),
                };
                b.terminate(Terminator::Return(v));
                let dead = b.new_block();
                b.switch_to(dead);
            }
            Stmt::FunctionDecl(_) => {}
            Stmt::Block(body) => self.stmts(b, body)?,
        }
        Ok(())
    }

    fn expr(&mut self, b: &mut Builder, e: &Expr) -> Result<Temp, ScopeError> {
        Ok(match e {
            Expr::Int(i) => b.constant(ConstVal::Int(*i)),
            Expr::Float(f) => b.constant(ConstVal::Float(*f)),
            Expr::Str(s) => b.constant(ConstVal::Str(s.clone())),
            Expr::Bool(v) => b.constant(ConstVal::Bool(*v)),
            Expr::Null => b.constant(ConstVal::Null),
            Expr::Undefined => b.constant(ConstVal::Undefined),
            Expr::This => match b.this_temp {
                Some(t) => t,
                None => b.constant(ConstVal::Undefined),
            },
            Expr::Ident(name) => match self.resolve(b, name)? {
                Resolved::Local(Loc::Temp(t), _) => t,
                Resolved::Local(Loc::Cell(index), depth) => {
                    let dst = b.temp();
                    b.emit(Instr::LoadVar { dst, depth, index });
                    dst
                }
                Resolved::Global => {
                    let dst = b.temp();
                    let site = self.site();
                    b.emit(Instr::GetGlobal { dst, name: Rc::from(name.as_str()), site });
                    dst
                }
            },
            Expr::Binary { op, lhs, rhs } => {
                let l = self.expr(b, lhs)?;
                let r = self.expr(b, rhs)?;
                binary(b, *op, l, r)
            }
            Expr::Not(x) => {
                let src = self.expr(b, x)?;
                let dst = b.hinted(Some(TypeTag::Const));
                b.emit(Instr::Not { dst, src });
                dst
            }
            Expr::And(lhs, rhs) | Expr::Or(lhs, rhs) => {
                let is_and = matches!(e, Expr::And(..));
                let l = self.expr(b, lhs)?;
                let dst = b.temp();
                b.emit(Instr::Move { dst, src: l });
                let (rb, join) = (b.new_block(), b.new_block());
                let (then, otherwise) = if is_and { (rb, join) } else { (join, rb) };
                b.terminate(Terminator::Branch { cond: l, then, otherwise });
                b.switch_to(rb);
                let r = self.expr(b, rhs)?;
                b.emit(Instr::Move { dst, src: r });
                b.terminate(Terminator::Jump(join));
                b.switch_to(join);
                dst
            }
            Expr::Object(entries) => {
                let mut proto = None;
                let mut props = Vec::new();
                for (k, v) in entries {
                    let t = self.expr(b, v)?;
                    if k == crate::shape::PROTO {
                        proto = Some(t);
                    } else {
                        props.push((k, t));
                    }
                }
                let dst = b.hinted(Some(TypeTag::Object));
                b.emit(Instr::NewObject { dst, proto });
                for (k, val) in props {
                    let site = self.site();
                    b.emit(Instr::SetProp { obj: dst, name: Rc::from(k.as_str()), val, site });
                }
                dst
            }
            Expr::Array(elems) => {
                let elems = elems.iter().map(|x| self.expr(b, x)).collect::<Result<Vec<_>, _>>()?;
                let dst = b.hinted(Some(TypeTag::Array));
                b.emit(Instr::NewArray { dst, elems });
                dst
            }
            Expr::Member { obj, name } => {
                let o = self.expr(b, obj)?;
                self.get_prop(b, o, name)
            }
            Expr::Index { obj, index } => {
                let arr = self.expr(b, obj)?;
                let index = self.expr(b, index)?;
                let dst = b.temp();
                b.emit(Instr::GetIndex { dst, arr, index });
                dst
            }
            Expr::Call { callee, args } => {
                let (callee, this) = match &**callee {
                    Expr::Member { obj, name } => {
                        let o = self.expr(b, obj)?;
                        (self.get_prop(b, o, name), Some(o))
                    }
                    other => (self.expr(b, other)?, None),
                };
                let args = args.iter().map(|a| self.expr(b, a)).collect::<Result<Vec<_>, _>>()?;
                let dst = b.temp();
                b.emit(Instr::Call { dst, callee, this, args });
                dst
            }
            Expr::Function(f) => self.closure(b, f)?,
        })
    }

    fn get_prop(&mut self, b: &mut Builder, obj: Temp, name: &str) -> Temp {
        let dst = b.temp();
        let site = self.site();
        b.emit(Instr::GetProp { dst, obj, name: Rc::from(name), site });
        dst
    }
}

/// Lowers a binary operator, testing for the int32 fast path on every
/// operand whose tag the producing instruction does not already fix.
fn binary(b: &mut Builder, op: BinOp, l: Temp, r: Temp) -> Temp {
    let (hl, hr) = (b.hints.get(&l).copied(), b.hints.get(&r).copied());
    let fixed = op.fixed_result_tag();
    let int_possible = hl.is_none_or(|t| t == TypeTag::Int32) && hr.is_none_or(|t| t == TypeTag::Int32);
    if op.is_equality() || !int_possible {
        let tag = match (hl, hr) {
            (Some(a), Some(c)) => crate::value::result_tag(op, a, c),
            _ => fixed,
        };
        let dst = b.hinted(tag);
        b.emit(Instr::Arith { dst, op, lhs: l, rhs: r });
        return dst;
    }
    let dst = b.hinted(fixed);
    let untested: Vec<Temp> = [(l, hl), (r, hr)].iter().filter(|(_, h)| h.is_none()).map(|(t, _)| *t).collect();
    if untested.is_empty() {
        b.emit(Instr::IntOp { dst, op, lhs: l, rhs: r });
        return dst;
    }
    let (int_b, gen_b, join) = (b.new_block(), b.new_block(), b.new_block());
    for (i, &t) in untested.iter().enumerate() {
        let then = if i + 1 == untested.len() { int_b } else { b.new_block() };
        b.terminate(Terminator::TagTest { value: t, tag: TypeTag::Int32, then, otherwise: gen_b });
        b.switch_to(then);
    }
    b.blocks[int_b.0 as usize].0.push(Instr::IntOp { dst, op, lhs: l, rhs: r });
    b.terminate(Terminator::Jump(join));
    b.switch_to(gen_b);
    b.emit(Instr::Arith { dst, op, lhs: l, rhs: r });
    b.terminate(Terminator::Jump(join));
    b.switch_to(join);
    dst
}

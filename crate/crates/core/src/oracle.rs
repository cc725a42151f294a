//! Reference interpreter. Walks the AST directly and stores objects as
//! insertion-ordered hash tables with an explicit prototype link, with no
//! shapes, caches or specialization. Every engine mode must agree with it.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{ErrorKind, RuntimeError, MAX_CALL_DEPTH};
use crate::frontend::ast::{declared_names, Expr, Function, Program, Stmt};
use crate::object::shape_error;
use crate::runtime;
use crate::shape::{ShapeError, PROTO};
use crate::value::{arith, ArrRef, ArrayStore, Builtin, ClosureRef, ObjRef, Value};

/// Observable result of running a program.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Outcome {
    pub output: Vec<String>,
    pub error: Option<RuntimeError>,
}

impl Outcome {
    pub fn error_kind(&self) -> Option<ErrorKind> {
        self.error.as_ref().map(|e| e.kind)
    }
}

#[derive(Debug)]
struct Prop {
    value: Value,
    writable: bool,
}

#[derive(Debug, Default)]
struct HashObject {
    props: IndexMap<String, Prop>,
    proto: Option<ObjRef>,
}

/// One function activation's variables.
#[derive(Debug, Default)]
struct Scope {
    vars: RefCell<HashMap<String, Value>>,
    parent: Option<Rc<Scope>>,
}

#[derive(Debug, Clone)]
enum Callee {
    Script(Rc<Function>, Option<Rc<Scope>>),
    Native(Builtin),
}

enum Flow {
    Normal,
    Return(Value),
}

type Res<T> = Result<T, RuntimeError>;

struct Interp {
    objects: Vec<HashObject>,
    arrays: Vec<Vec<Value>>,
    closures: Vec<Callee>,
    global: ObjRef,
    output: Vec<String>,
    depth: usize,
}

impl ArrayStore for Interp {
    fn elements(&self, r: ArrRef) -> &[Value] {
        &self.arrays[r.0 as usize]
    }
}

/// Runs `program` to completion.
pub fn run_oracle(program: &Program) -> Outcome {
    let mut it = Interp {
        objects: Vec::new(),
        arrays: Vec::new(),
        closures: Vec::new(),
        global: ObjRef(0),
        output: Vec::new(),
        depth: 0,
    };
    let g = it.alloc_object(None);
    it.global = g;
    for b in Builtin::ALL {
        it.closures.push(Callee::Native(b));
        let f = Value::Closure(ClosureRef(it.closures.len() as u32 - 1));
        it.objects[g.0 as usize].props.insert(b.global_name().to_string(), Prop { value: f, writable: true });
    }
    let error = it.run_main(program).err();
    Outcome { output: it.output, error }
}

impl Interp {
    fn alloc_object(&mut self, proto: Option<ObjRef>) -> ObjRef {
        self.objects.push(HashObject { props: IndexMap::new(), proto });
        ObjRef(self.objects.len() as u32 - 1)
    }

    fn make_closure(&mut self, f: &Rc<Function>, scope: &Option<Rc<Scope>>) -> Value {
        self.closures.push(Callee::Script(f.clone(), scope.clone()));
        Value::Closure(ClosureRef(self.closures.len() as u32 - 1))
    }

    fn run_main(&mut self, p: &Program) -> Res<()> {
        let (_, funcs) = declared_names(&p.body);
        for f in funcs {
            let c = self.make_closure(&f, &None);
            self.set_prop(self.global, f.name.as_deref().expect("declarations are named"), c)?;
        }
        self.stmts(&p.body, &None, &Value::Undefined)?;
        Ok(())
    }

    fn get_chain(&self, o: ObjRef, name: &str) -> Option<Value> {
        let mut cur = Some(o);
        while let Some(c) = cur {
            let obj = &self.objects[c.0 as usize];
            if let Some(p) = obj.props.get(name) {
                return Some(p.value.clone());
            }
            cur = obj.proto;
        }
        None
    }

    fn set_prop(&mut self, o: ObjRef, name: &str, v: Value) -> Res<()> {
        let obj = &mut self.objects[o.0 as usize];
        match obj.props.get_mut(name) {
            Some(p) if !p.writable => Err(RuntimeError::read_only(name)),
            Some(p) => {
                p.value = v;
                Ok(())
            }
            None => {
                obj.props.insert(name.to_string(), Prop { value: v, writable: true });
                Ok(())
            }
        }
    }

    fn lookup_var(scope: &Option<Rc<Scope>>, name: &str) -> Option<Rc<Scope>> {
        let mut cur = scope.clone();
        while let Some(s) = cur {
            if s.vars.borrow().contains_key(name) {
                return Some(s);
            }
            cur = s.parent.clone();
        }
        None
    }

    fn read_name(&mut self, scope: &Option<Rc<Scope>>, name: &str) -> Res<Value> {
        match Self::lookup_var(scope, name) {
            Some(s) => Ok(s.vars.borrow()[name].clone()),
            None => self.get_chain(self.global, name).ok_or_else(|| RuntimeError::not_defined(name)),
        }
    }

    fn write_name(&mut self, scope: &Option<Rc<Scope>>, name: &str, v: Value) -> Res<()> {
        match Self::lookup_var(scope, name) {
            Some(s) => {
                s.vars.borrow_mut().insert(name.to_string(), v);
                Ok(())
            }
            None => self.set_prop(self.global, name, v),
        }
    }

    fn stmts(&mut self, body: &[Stmt], scope: &Option<Rc<Scope>>, this: &Value) -> Res<Flow> {
        for s in body {
            if let Flow::Return(v) = self.stmt(s, scope, this)? {
                return Ok(Flow::Return(v));
            }
        }
        Ok(Flow::Normal)
    }

    fn stmt(&mut self, s: &Stmt, scope: &Option<Rc<Scope>>, this: &Value) -> Res<Flow> {
        match s {
            Stmt::Var { name, init } => match init {
                Some(e) => {
                    let v = self.expr(e, scope, this)?;
                    self.write_name(scope, name, v)?;
                }
                None if scope.is_none() => {
                    let g = &mut self.objects[self.global.0 as usize];
                    if !g.props.contains_key(name.as_str()) {
                        g.props.insert(name.clone(), Prop { value: Value::Undefined, writable: true });
                    }
                }
                None => {}
            },
            Stmt::Assign { target, value } => match target {
                Expr::Ident(name) => {
                    let v = self.expr(value, scope, this)?;
                    self.write_name(scope, name, v)?;
                }
                Expr::Member { obj, name } => {
                    let o = self.expr(obj, scope, this)?;
                    let v = self.expr(value, scope, this)?;
                    match o {
                        Value::Object(r) => self.set_prop(r, name, v)?,
                        other => return Err(RuntimeError::cannot_write(name, other.kind_name())),
                    }
                }
                Expr::Index { obj, index } => {
                    let a = self.expr(obj, scope, this)?;
                    let i = self.expr(index, scope, this)?;
                    let v = self.expr(value, scope, this)?;
                    let at = runtime::index_check(&a, &i, self)?;
                    let Value::Array(r) = a else { unreachable!() };
                    runtime::store_element(&mut self.arrays[r.0 as usize], at, v);
                }
                _ => unreachable!("parser rejects other assignment targets"),
            },
            Stmt::Expr(e) => {
                self.expr(e, scope, this)?;
            }
            Stmt::If { cond, then, otherwise } => {
                let c = self.expr(cond, scope, this)?;
                let branch = if c.truthy() { then } else { otherwise };
                return self.stmts(branch, scope, this);
            }
            Stmt::While { cond, body } => {
                while self.expr(cond, scope, this)?.truthy() {
                    if let Flow::Return(v) = self.stmts(body, scope, this)? {
                        return Ok(Flow::Return(v));
                    }
                }
            }
            Stmt::Return(e) => {
                let v = match e {
                    Some(e) => self.expr(e, scope, this)?,
                    None => Value::Undefined,
                };
                return Ok(Flow::Return(v));
            }
            Stmt::FunctionDecl(_) => {}
            Stmt::Block(b) => return self.stmts(b, scope, this),
        }
        Ok(Flow::Normal)
    }

    fn get_member(&mut self, base: &Value, name: &str) -> Res<Value> {
        match base {
            Value::Object(r) => Ok(self.get_chain(*r, name).unwrap_or(Value::Undefined)),
            other => runtime::primitive_get(other, name, self),
        }
    }

    fn expr(&mut self, e: &Expr, scope: &Option<Rc<Scope>>, this: &Value) -> Res<Value> {
        Ok(match e {
            Expr::Int(i) => Value::Int(*i),
            Expr::Float(f) => Value::Float(*f),
            Expr::Str(s) => Value::Str(s.clone()),
            Expr::Bool(b) => Value::Bool(*b),
            Expr::Null => Value::Null,
            Expr::Undefined => Value::Undefined,
            Expr::This => this.clone(),
            Expr::Ident(name) => self.read_name(scope, name)?,
            Expr::Binary { op, lhs, rhs } => {
                let a = self.expr(lhs, scope, this)?;
                let b = self.expr(rhs, scope, this)?;
                arith(*op, &a, &b)?
            }
            Expr::Not(x) => Value::Bool(!self.expr(x, scope, this)?.truthy()),
            Expr::And(l, r) => {
                let a = self.expr(l, scope, this)?;
                if a.truthy() {
                    self.expr(r, scope, this)?
                } else {
                    a
                }
            }
            Expr::Or(l, r) => {
                let a = self.expr(l, scope, this)?;
                if a.truthy() {
                    a
                } else {
                    self.expr(r, scope, this)?
                }
            }
            Expr::Object(entries) => {
                let mut proto = Value::Null;
                let mut props = Vec::new();
                for (k, v) in entries {
                    let v = self.expr(v, scope, this)?;
                    if k == PROTO {
                        proto = v;
                    } else {
                        props.push((k, v));
                    }
                }
                let o = self.new_object(&proto)?;
                for (k, v) in props {
                    self.set_prop(o, k, v)?;
                }
                Value::Object(o)
            }
            Expr::Array(elems) => {
                let vals = elems.iter().map(|x| self.expr(x, scope, this)).collect::<Res<Vec<_>>>()?;
                self.arrays.push(vals);
                Value::Array(ArrRef(self.arrays.len() as u32 - 1))
            }
            Expr::Member { obj, name } => {
                let o = self.expr(obj, scope, this)?;
                self.get_member(&o, name)?
            }
            Expr::Index { obj, index } => {
                let a = self.expr(obj, scope, this)?;
                let i = self.expr(index, scope, this)?;
                runtime::index_get(&a, &i, self)?
            }
            Expr::Call { callee, args } => {
                let (f, recv) = match &**callee {
                    Expr::Member { obj, name } => {
                        let o = self.expr(obj, scope, this)?;
                        (self.get_member(&o, name)?, o)
                    }
                    other => (self.expr(other, scope, this)?, Value::Undefined),
                };
                let args = args.iter().map(|a| self.expr(a, scope, this)).collect::<Res<Vec<_>>>()?;
                self.call(&f, recv, args)?
            }
            Expr::Function(f) => self.make_closure(f, scope),
        })
    }

    fn new_object(&mut self, proto: &Value) -> Res<ObjRef> {
        match proto {
            Value::Object(p) => Ok(self.alloc_object(Some(*p))),
            Value::Null => Ok(self.alloc_object(None)),
            other => Err(RuntimeError::bad_proto(other.kind_name())),
        }
    }

    fn call(&mut self, f: &Value, this: Value, args: Vec<Value>) -> Res<Value> {
        let Value::Closure(c) = f else {
            return Err(RuntimeError::not_callable());
        };
        match self.closures[c.0 as usize].clone() {
            Callee::Native(b) => self.native(b, &args),
            Callee::Script(func, env) => {
                if self.depth >= MAX_CALL_DEPTH {
                    return Err(RuntimeError::stack_overflow());
                }
                self.depth += 1;
                let r = self.invoke(&func, env, this, args);
                self.depth -= 1;
                r
            }
        }
    }

    fn invoke(&mut self, f: &Rc<Function>, env: Option<Rc<Scope>>, this: Value, args: Vec<Value>) -> Res<Value> {
        let scope = Rc::new(Scope { vars: RefCell::new(HashMap::new()), parent: env });
        {
            let mut vars = scope.vars.borrow_mut();
            for (i, p) in f.params.iter().enumerate() {
                vars.insert(p.clone(), runtime::arg(&args, i));
            }
        }
        let (var_names, funcs) = declared_names(&f.body);
        {
            let mut vars = scope.vars.borrow_mut();
            for n in var_names.iter().chain(funcs.iter().filter_map(|g| g.name.as_ref())) {
                vars.entry(n.clone()).or_insert(Value::Undefined);
            }
        }
        let scope = Some(scope);
        for g in &funcs {
            let c = self.make_closure(g, &scope);
            let name = g.name.as_deref().expect("declarations are named");
            scope.as_ref().expect("function scope").vars.borrow_mut().insert(name.to_string(), c);
        }
        match self.stmts(&f.body, &scope, &this)? {
            Flow::Return(v) => Ok(v),
            Flow::Normal => Ok(Value::Undefined),
        }
    }

    fn native(&mut self, b: Builtin, args: &[Value]) -> Res<Value> {
        match b {
            Builtin::Print => {
                let line = runtime::print_line(args, self);
                self.output.push(line);
                Ok(Value::Undefined)
            }
            Builtin::DefineConst => {
                let name = runtime::define_const_name(args)?;
                let Value::Object(o) = args[0] else { unreachable!() };
                let obj = &mut self.objects[o.0 as usize];
                if obj.props.contains_key(&*name) {
                    return Err(shape_error(ShapeError::DuplicateProperty(name.to_string())));
                }
                obj.props.insert(name.to_string(), Prop { value: runtime::arg(args, 2), writable: false });
                Ok(Value::Undefined)
            }
            Builtin::ObjectWithProto => Ok(Value::Object(self.new_object(&runtime::arg(args, 0))?)),
        }
    }
}

use std::rc::Rc;

use crate::value::BinOp;

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub body: Vec<Stmt>,
    /// Number of function literals in the program; ids are `0..function_count`.
    pub function_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Function {
    pub id: u32,
    pub name: Option<String>,
    pub params: Vec<String>,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Var { name: String, init: Option<Expr> },
    Assign { target: Expr, value: Expr },
    Expr(Expr),
    If { cond: Expr, then: Vec<Stmt>, otherwise: Vec<Stmt> },
    While { cond: Expr, body: Vec<Stmt> },
    Return(Option<Expr>),
    FunctionDecl(Rc<Function>),
    Block(Vec<Stmt>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Int(i32),
    Float(f64),
    Str(Rc<str>),
    Bool(bool),
    Null,
    Undefined,
    Ident(String),
    This,
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    /// Entries in source order; a `__proto__` entry sets the prototype.
    Object(Vec<(String, Expr)>),
    Array(Vec<Expr>),
    Member { obj: Box<Expr>, name: String },
    Index { obj: Box<Expr>, index: Box<Expr> },
    Call { callee: Box<Expr>, args: Vec<Expr> },
    Function(Rc<Function>),
}

/// Names declared directly in a function body (not inside nested
/// functions), in first-declaration order: `var`s then function declarations.
pub fn declared_names(body: &[Stmt]) -> (Vec<String>, Vec<Rc<Function>>) {
    fn walk(stmts: &[Stmt], vars: &mut Vec<String>, funcs: &mut Vec<Rc<Function>>) {
        for s in stmts {
            match s {
                Stmt::Var { name, .. } => {
                    if !vars.contains(name) {
                        vars.push(name.clone());
                    }
                }
                Stmt::FunctionDecl(f) => funcs.push(f.clone()),
                Stmt::If { then, otherwise, .. } => {
                    walk(then, vars, funcs);
                    walk(otherwise, vars, funcs);
                }
                Stmt::While { body, .. } => walk(body, vars, funcs),
                Stmt::Block(b) => walk(b, vars, funcs),
                Stmt::Assign { .. } | Stmt::Expr(_) | Stmt::Return(_) => {}
            }
        }
    }
    let mut vars = Vec::new();
    let mut funcs = Vec::new();
    walk(body, &mut vars, &mut funcs);
    (vars, funcs)
}

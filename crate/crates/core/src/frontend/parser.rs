//! Lexer and recursive-descent parser for MicroJS.

use std::fmt;
use std::rc::Rc;

use thiserror::Error;

use super::ast::{Expr, Function, Program, Stmt};
use crate::shape::PROTO;
use crate::value::BinOp;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("SyntaxError at {line}:{column}: {message}")]
pub struct SyntaxError {
    pub line: u32,
    pub column: u32,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    Punct(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "'{s}'"),
            Tok::Int(i) => write!(f, "{i}"),
            Tok::Float(x) => write!(f, "{x}"),
            Tok::Str(s) => write!(f, "\"{s}\""),
            Tok::Punct(p) => write!(f, "'{p}'"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: u32,
    column: u32,
}

const PUNCTS: [&str; 24] = [
    "==", "!=", "<=", ">=", "&&", "||", "(", ")", "{", "}", "[", "]", ",", ";", ".", ":", "=", "<", ">",
    "+", "-", "*", "&", "|",
];

const KEYWORDS: [&str; 11] =
    ["var", "function", "if", "else", "while", "return", "true", "false", "null", "undefined", "this"];

fn lex(src: &str) -> Result<Vec<Token>, SyntaxError> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let err = |line, column, message: String| SyntaxError { line, column, message };
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            let (sl, sc) = (line, col);
            i += 2;
            col += 2;
            loop {
                if i + 1 >= chars.len() {
                    return Err(err(sl, sc, "unterminated comment".into()));
                }
                if chars[i] == '*' && chars[i + 1] == '/' {
                    i += 2;
                    col += 2;
                    break;
                }
                if chars[i] == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
                i += 1;
            }
            continue;
        }
        let (tl, tc) = (line, col);
        let start = i;
        if c.is_ascii_digit() {
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let mut is_float = false;
            if i < chars.len() && chars[i] == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) {
                is_float = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    is_float = true;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let tok = if is_float {
                Tok::Float(text.parse().map_err(|_| err(tl, tc, format!("bad number {text}")))?)
            } else {
                match text.parse::<i64>() {
                    Ok(v) => Tok::Int(v),
                    Err(_) => Tok::Float(text.parse().map_err(|_| err(tl, tc, format!("bad number {text}")))?),
                }
            };
            col += (i - start) as u32;
            toks.push(Token { tok, line: tl, column: tc });
            continue;
        }
        if c.is_alphabetic() || c == '_' || c == '$' {
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '$') {
                i += 1;
            }
            col += (i - start) as u32;
            toks.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), line: tl, column: tc });
            continue;
        }
        if c == '"' || c == '\'' {
            i += 1;
            col += 1;
            let mut s = String::new();
            loop {
                let Some(&d) = chars.get(i) else {
                    return Err(err(tl, tc, "unterminated string".into()));
                };
                i += 1;
                col += 1;
                if d == c {
                    break;
                }
                match d {
                    '\n' => return Err(err(tl, tc, "unterminated string".into())),
                    '\\' => {
                        let Some(&e) = chars.get(i) else {
                            return Err(err(tl, tc, "unterminated string".into()));
                        };
                        i += 1;
                        col += 1;
                        s.push(match e {
                            'n' => '\n',
                            't' => '\t',
                            '0' => '\0',
                            other => other,
                        });
                    }
                    other => s.push(other),
                }
            }
            toks.push(Token { tok: Tok::Str(s), line: tl, column: tc });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match PUNCTS.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                i += p.len();
                col += p.len() as u32;
                toks.push(Token { tok: Tok::Punct(p), line: tl, column: tc });
            }
            None if c == '!' => {
                i += 1;
                col += 1;
                toks.push(Token { tok: Tok::Punct("!"), line: tl, column: tc });
            }
            None => return Err(err(tl, tc, format!("unexpected character '{c}'"))),
        }
    }
    toks.push(Token { tok: Tok::Eof, line, column: col });
    Ok(toks)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    next_fn: u32,
    fn_depth: u32,
}

type PResult<T> = Result<T, SyntaxError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn error_here<T>(&self, message: impl Into<String>) -> PResult<T> {
        let t = &self.toks[self.pos];
        Err(SyntaxError { line: t.line, column: t.column, message: message.into() })
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_keyword(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == k)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.error_here(format!("expected '{p}' but found {}", self.peek()))
        }
    }

    fn expect_ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                if s == PROTO {
                    return self.error_here("'__proto__' is only allowed as an object literal key");
                }
                self.bump();
                Ok(s)
            }
            other => self.error_here(format!("expected identifier but found {other}")),
        }
    }

    fn program(&mut self) -> PResult<Program> {
        let mut body = Vec::new();
        while *self.peek() != Tok::Eof {
            body.push(self.statement()?);
        }
        Ok(Program { body, function_count: self.next_fn })
    }

    fn block_or_statement(&mut self) -> PResult<Vec<Stmt>> {
        if self.is_punct("{") {
            self.bump();
            let mut out = Vec::new();
            while !self.eat_punct("}") {
                if *self.peek() == Tok::Eof {
                    return self.error_here("expected '}'");
                }
                out.push(self.statement()?);
            }
            Ok(out)
        } else {
            Ok(vec![self.statement()?])
        }
    }

    fn statement(&mut self) -> PResult<Stmt> {
        if self.is_punct("{") {
            return Ok(Stmt::Block(self.block_or_statement()?));
        }
        if self.is_keyword("var") {
            self.bump();
            let name = self.expect_ident()?;
            let init = if self.eat_punct("=") { Some(self.expression()?) } else { None };
            self.expect_punct(";")?;
            return Ok(Stmt::Var { name, init });
        }
        if self.is_keyword("function") {
            self.bump();
            let name = self.expect_ident()?;
            let f = self.function_rest(Some(name))?;
            return Ok(Stmt::FunctionDecl(f));
        }
        if self.is_keyword("if") {
            self.bump();
            self.expect_punct("(")?;
            let cond = self.expression()?;
            self.expect_punct(")")?;
            let then = self.block_or_statement()?;
            let otherwise = if self.is_keyword("else") {
                self.bump();
                self.block_or_statement()?
            } else {
                Vec::new()
            };
            return Ok(Stmt::If { cond, then, otherwise });
        }
        if self.is_keyword("while") {
            self.bump();
            self.expect_punct("(")?;
            let cond = self.expression()?;
            self.expect_punct(")")?;
            let body = self.block_or_statement()?;
            return Ok(Stmt::While { cond, body });
        }
        if self.is_keyword("return") {
            if self.fn_depth == 0 {
                return self.error_here("'return' outside of a function");
            }
            self.bump();
            let value = if self.is_punct(";") { None } else { Some(self.expression()?) };
            self.expect_punct(";")?;
            return Ok(Stmt::Return(value));
        }
        let e = self.expression()?;
        if self.is_punct("=") {
            if !matches!(e, Expr::Ident(_) | Expr::Member { .. } | Expr::Index { .. }) {
                return self.error_here("invalid assignment target");
            }
            self.bump();
            let value = self.expression()?;
            self.expect_punct(";")?;
            return Ok(Stmt::Assign { target: e, value });
        }
        self.expect_punct(";")?;
        Ok(Stmt::Expr(e))
    }

    fn function_rest(&mut self, name: Option<String>) -> PResult<Rc<Function>> {
        let id = self.next_fn;
        self.next_fn += 1;
        self.expect_punct("(")?;
        let mut params = Vec::new();
        if !self.eat_punct(")") {
            loop {
                params.push(self.expect_ident()?);
                if self.eat_punct(")") {
                    break;
                }
                self.expect_punct(",")?;
            }
        }
        if !self.is_punct("{") {
            return self.error_here("expected '{' before function body");
        }
        self.fn_depth += 1;
        let body = self.block_or_statement()?;
        self.fn_depth -= 1;
        Ok(Rc::new(Function { id, name, params, body }))
    }

    fn expression(&mut self) -> PResult<Expr> {
        self.binary(0)
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Tok::Punct(p) = *self.peek() {
            let Some(prec) = precedence(p) else { break };
            if prec < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(prec + 1)?;
            lhs = match p {
                "&&" => Expr::And(Box::new(lhs), Box::new(rhs)),
                "||" => Expr::Or(Box::new(lhs), Box::new(rhs)),
                _ => Expr::Binary { op: binop(p), lhs: Box::new(lhs), rhs: Box::new(rhs) },
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat_punct("!") {
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        if self.eat_punct("-") {
            match *self.peek() {
                Tok::Int(i) => {
                    self.bump();
                    let n = -i;
                    return Ok(match i32::try_from(n) {
                        Ok(v) => Expr::Int(v),
                        Err(_) => Expr::Float(n as f64),
                    });
                }
                Tok::Float(f) => {
                    self.bump();
                    return Ok(Expr::Float(-f));
                }
                _ => {}
            }
            let e = self.unary()?;
            return Ok(Expr::Binary { op: BinOp::Sub, lhs: Box::new(Expr::Int(0)), rhs: Box::new(e) });
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        loop {
            if self.eat_punct(".") {
                let name = self.expect_ident()?;
                e = Expr::Member { obj: Box::new(e), name };
            } else if self.eat_punct("[") {
                let index = self.expression()?;
                self.expect_punct("]")?;
                e = Expr::Index { obj: Box::new(e), index: Box::new(index) };
            } else if self.eat_punct("(") {
                let mut args = Vec::new();
                if !self.eat_punct(")") {
                    loop {
                        args.push(self.expression()?);
                        if self.eat_punct(")") {
                            break;
                        }
                        self.expect_punct(",")?;
                    }
                }
                e = Expr::Call { callee: Box::new(e), args };
            } else {
                break;
            }
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Int(i) => {
                self.bump();
                Ok(match i32::try_from(i) {
                    Ok(v) => Expr::Int(v),
                    Err(_) => Expr::Float(i as f64),
                })
            }
            Tok::Float(f) => {
                self.bump();
                Ok(Expr::Float(f))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::Str(Rc::from(s)))
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expression()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Punct("{") => self.object_literal(),
            Tok::Punct("[") => {
                self.bump();
                let mut elems = Vec::new();
                if !self.eat_punct("]") {
                    loop {
                        elems.push(self.expression()?);
                        if self.eat_punct("]") {
                            break;
                        }
                        self.expect_punct(",")?;
                    }
                }
                Ok(Expr::Array(elems))
            }
            Tok::Ident(s) => match s.as_str() {
                "true" => {
                    self.bump();
                    Ok(Expr::Bool(true))
                }
                "false" => {
                    self.bump();
                    Ok(Expr::Bool(false))
                }
                "null" => {
                    self.bump();
                    Ok(Expr::Null)
                }
                "undefined" => {
                    self.bump();
                    Ok(Expr::Undefined)
                }
                "this" => {
                    self.bump();
                    Ok(Expr::This)
                }
                "function" => {
                    self.bump();
                    let name = if matches!(self.peek(), Tok::Ident(_)) { Some(self.expect_ident()?) } else { None };
                    Ok(Expr::Function(self.function_rest(name)?))
                }
                _ => Ok(Expr::Ident(self.expect_ident()?)),
            },
            other => self.error_here(format!("unexpected {other}")),
        }
    }

    fn object_literal(&mut self) -> PResult<Expr> {
        self.expect_punct("{")?;
        let mut entries: Vec<(String, Expr)> = Vec::new();
        if !self.eat_punct("}") {
            loop {
                let key = match self.peek().clone() {
                    Tok::Ident(s) if s == PROTO => {
                        if entries.iter().any(|(k, _)| k == PROTO) {
                            return self.error_here("duplicate __proto__ entry");
                        }
                        self.bump();
                        s
                    }
                    Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                        self.bump();
                        s
                    }
                    other => return self.error_here(format!("expected property name but found {other}")),
                };
                self.expect_punct(":")?;
                entries.push((key, self.expression()?));
                if self.eat_punct("}") {
                    break;
                }
                self.expect_punct(",")?;
                if self.eat_punct("}") {
                    break;
                }
            }
        }
        Ok(Expr::Object(entries))
    }
}

fn precedence(p: &str) -> Option<u8> {
    Some(match p {
        "||" => 1,
        "&&" => 2,
        "|" => 3,
        "&" => 4,
        "==" | "!=" => 5,
        "<" | ">" | "<=" | ">=" => 6,
        "+" | "-" => 7,
        "*" => 8,
        _ => return None,
    })
}

fn binop(p: &str) -> BinOp {
    match p {
        "+" => BinOp::Add,
        "-" => BinOp::Sub,
        "*" => BinOp::Mul,
        "&" => BinOp::BitAnd,
        "|" => BinOp::BitOr,
        "<" => BinOp::Lt,
        ">" => BinOp::Gt,
        "<=" => BinOp::Le,
        ">=" => BinOp::Ge,
        "==" => BinOp::Eq,
        "!=" => BinOp::Ne,
        _ => unreachable!("not a binary operator: {p}"),
    }
}

pub fn parse(source: &str) -> Result<Program, SyntaxError> {
    let toks = lex(source)?;
    Parser { toks, pos: 0, next_fn: 0, fn_depth: 0 }.program()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn object_literal_declaration() {
        let p = parse("var a = {x:1};").unwrap();
        assert_eq!(
            p.body,
            vec![Stmt::Var { name: "a".into(), init: Some(Expr::Object(vec![("x".into(), Expr::Int(1))])) }]
        );
    }

    #[test]
    fn property_increment() {
        let p = parse("a.z = a.z + 1;").unwrap();
        let member = || Expr::Member { obj: Box::new(Expr::Ident("a".into())), name: "z".into() };
        assert_eq!(
            p.body,
            vec![Stmt::Assign {
                target: member(),
                value: Expr::Binary { op: BinOp::Add, lhs: Box::new(member()), rhs: Box::new(Expr::Int(1)) },
            }]
        );
    }

    #[test]
    fn missing_initializer_reports_position() {
        let e = parse("var x = ;").unwrap_err();
        assert_eq!((e.line, e.column), (1, 9));
        let e = parse("var a = 1;\n  a = ;").unwrap_err();
        assert_eq!((e.line, e.column), (2, 7));
    }

    #[test]
    fn precedence_and_literals() {
        let p = parse("x = 1 + 2 * 3 < 4 && !y;").unwrap();
        let Stmt::Assign { value, .. } = &p.body[0] else { panic!() };
        assert!(matches!(value, Expr::And(..)));
        let p = parse("x = 4294967296; y = -2147483648; z = 1.5e3;").unwrap();
        let vals: Vec<&Expr> = p.body.iter().map(|s| match s { Stmt::Assign { value, .. } => value, _ => panic!() }).collect();
        assert_eq!(vals, vec![&Expr::Float(4294967296.0), &Expr::Int(i32::MIN), &Expr::Float(1500.0)]);
    }

    #[test]
    fn proto_key_only_in_literals() {
        assert!(parse("var o = {__proto__: null, x: 1};").is_ok());
        assert!(parse("var p = o.__proto__;").is_err());
        assert!(parse("var o = {__proto__: null, __proto__: null};").is_err());
    }

    #[test]
    fn functions_get_sequential_ids() {
        let p = parse("function f(a, b) { return function () { return a; }; } var g = function (x) { return x; };").unwrap();
        assert_eq!(p.function_count, 3);
        let Stmt::FunctionDecl(f) = &p.body[0] else { panic!() };
        assert_eq!((f.id, f.params.len()), (0, 2));
    }

    #[test]
    fn rejects_return_at_top_level_and_bad_targets() {
        assert!(parse("return 1;").is_err());
        assert!(parse("f() = 1;").is_err());
        assert!(parse("var s = \"abc").is_err());
        assert!(parse("x = 1").is_err());
    }

    #[test]
    fn comments_and_strings() {
        let p = parse("// hi\n/* block\n comment */ print('a\\n' + \"b\");").unwrap();
        assert_eq!(p.body.len(), 1);
    }
}

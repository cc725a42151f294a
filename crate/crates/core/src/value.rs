//! Tagged runtime values and the primitive operators shared by every
//! execution mode.
//!
//! Integers are kept as `int32` until an operation overflows, at which point
//! the exact result is produced as a `float64`.

use std::fmt;
use std::rc::Rc;

use crate::error::RuntimeError;

/// The seven value categories the engine specializes on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TypeTag {
    Int32,
    Float64,
    /// `undefined`, `null`, `true` and `false`.
    Const,
    String,
    Object,
    Array,
    Closure,
}

impl TypeTag {
    pub const ALL: [TypeTag; 7] = [
        TypeTag::Int32,
        TypeTag::Float64,
        TypeTag::Const,
        TypeTag::String,
        TypeTag::Object,
        TypeTag::Array,
        TypeTag::Closure,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TypeTag::Int32 => "int32",
            TypeTag::Float64 => "float64",
            TypeTag::Const => "const",
            TypeTag::String => "string",
            TypeTag::Object => "object",
            TypeTag::Array => "array",
            TypeTag::Closure => "closure",
        }
    }

    /// Heap-pointer tags; only these may carry shape facts.
    pub fn is_heap(self) -> bool {
        matches!(self, TypeTag::Object | TypeTag::Array | TypeTag::Closure)
    }
}

impl fmt::Display for TypeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjRef(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ArrRef(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClosureRef(pub u32);

/// A runtime value. Heap references index into whichever heap produced them.
///
/// Equality is strict: values with different tags are never equal, so
/// `Int(1) != Float(1.0)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i32),
    Float(f64),
    Undefined,
    Null,
    Bool(bool),
    Str(Rc<str>),
    Object(ObjRef),
    Array(ArrRef),
    Closure(ClosureRef),
}

impl Value {
    pub fn tag(&self) -> TypeTag {
        tag_of(self)
    }

    pub fn str(s: &str) -> Value {
        Value::Str(Rc::from(s))
    }

    pub fn truthy(&self) -> bool {
        match self {
            Value::Undefined | Value::Null | Value::Bool(false) => false,
            Value::Int(i) => *i != 0,
            Value::Float(f) => *f != 0.0 && !f.is_nan(),
            Value::Str(s) => !s.is_empty(),
            _ => true,
        }
    }

    /// Short description used in error messages.
    pub fn kind_name(&self) -> &'static str {
        match self {
            Value::Undefined => "undefined",
            Value::Null => "null",
            Value::Bool(_) => "boolean",
            other => other.tag().name(),
        }
    }
}

pub fn tag_of(v: &Value) -> TypeTag {
    match v {
        Value::Int(_) => TypeTag::Int32,
        Value::Float(_) => TypeTag::Float64,
        Value::Undefined | Value::Null | Value::Bool(_) => TypeTag::Const,
        Value::Str(_) => TypeTag::String,
        Value::Object(_) => TypeTag::Object,
        Value::Array(_) => TypeTag::Array,
        Value::Closure(_) => TypeTag::Closure,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    BitAnd,
    BitOr,
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Ne,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::BitAnd => "&",
            BinOp::BitOr => "|",
            BinOp::Lt => "<",
            BinOp::Gt => ">",
            BinOp::Le => "<=",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
        }
    }

    /// Operators whose int32 fast path can overflow.
    pub fn can_overflow(self) -> bool {
        matches!(self, BinOp::Add | BinOp::Sub | BinOp::Mul)
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, BinOp::Lt | BinOp::Gt | BinOp::Le | BinOp::Ge | BinOp::Eq | BinOp::Ne)
    }

    pub fn is_bitwise(self) -> bool {
        matches!(self, BinOp::BitAnd | BinOp::BitOr)
    }

    /// Strict equality never inspects tags beyond comparing them.
    pub fn is_equality(self) -> bool {
        matches!(self, BinOp::Eq | BinOp::Ne)
    }

    /// Tag of the result when it does not depend on operand tags.
    pub fn fixed_result_tag(self) -> Option<TypeTag> {
        if self.is_comparison() {
            Some(TypeTag::Const)
        } else if self.is_bitwise() {
            Some(TypeTag::Int32)
        } else {
            None
        }
    }
}

/// Result of the int32 fast path: either still an int32 or promoted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntResult {
    Int(i32),
    Promoted(f64),
}

/// int32 arithmetic with overflow promotion. Only meaningful for operators
/// that return numbers.
pub fn int_arith(op: BinOp, a: i32, b: i32) -> Value {
    match int_arith_checked(op, a, b) {
        IntResult::Int(i) => Value::Int(i),
        IntResult::Promoted(f) => Value::Float(f),
    }
}

pub fn int_arith_checked(op: BinOp, a: i32, b: i32) -> IntResult {
    let wide = match op {
        BinOp::Add => a as i64 + b as i64,
        BinOp::Sub => a as i64 - b as i64,
        BinOp::Mul => a as i64 * b as i64,
        BinOp::BitAnd => return IntResult::Int(a & b),
        BinOp::BitOr => return IntResult::Int(a | b),
        _ => unreachable!("int_arith on non-arithmetic operator {op:?}"),
    };
    match i32::try_from(wide) {
        Ok(i) => IntResult::Int(i),
        Err(_) => IntResult::Promoted(wide as f64),
    }
}

/// ECMAScript ToInt32 for bitwise operators.
pub fn to_int32(f: f64) -> i32 {
    if !f.is_finite() {
        return 0;
    }
    let t = f.trunc();
    let m = t.rem_euclid(4294967296.0);
    m as u32 as i32
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Int(i) => Some(*i as f64),
        Value::Float(f) => Some(*f),
        _ => None,
    }
}

fn compare(op: BinOp, a: f64, b: f64) -> bool {
    match op {
        BinOp::Lt => a < b,
        BinOp::Gt => a > b,
        BinOp::Le => a <= b,
        BinOp::Ge => a >= b,
        _ => unreachable!(),
    }
}

/// The generic binary operator: full tag dispatch.
pub fn arith(op: BinOp, a: &Value, b: &Value) -> Result<Value, RuntimeError> {
    match op {
        BinOp::Eq => return Ok(Value::Bool(a == b)),
        BinOp::Ne => return Ok(Value::Bool(a != b)),
        _ => {}
    }
    if let (Value::Int(x), Value::Int(y)) = (a, b) {
        return Ok(match op {
            BinOp::Lt | BinOp::Gt | BinOp::Le | BinOp::Ge => {
                Value::Bool(compare(op, *x as f64, *y as f64))
            }
            _ => int_arith(op, *x, *y),
        });
    }
    if op == BinOp::Add {
        if let (Value::Str(x), Value::Str(y)) = (a, b) {
            let mut s = String::with_capacity(x.len() + y.len());
            s.push_str(x);
            s.push_str(y);
            return Ok(Value::Str(Rc::from(s)));
        }
    }
    let (Some(x), Some(y)) = (as_f64(a), as_f64(b)) else {
        return Err(RuntimeError::type_error(format!(
            "unsupported operands for '{}': {} and {}",
            op.symbol(),
            a.kind_name(),
            b.kind_name()
        )));
    };
    Ok(match op {
        BinOp::Add => Value::Float(x + y),
        BinOp::Sub => Value::Float(x - y),
        BinOp::Mul => Value::Float(x * y),
        BinOp::BitAnd => Value::Int(to_int32(x) & to_int32(y)),
        BinOp::BitOr => Value::Int(to_int32(x) | to_int32(y)),
        BinOp::Lt | BinOp::Gt | BinOp::Le | BinOp::Ge => Value::Bool(compare(op, x, y)),
        BinOp::Eq | BinOp::Ne => unreachable!(),
    })
}

/// Tag of `arith(op, a, b)` when it is decidable from operand tags alone.
pub fn result_tag(op: BinOp, a: TypeTag, b: TypeTag) -> Option<TypeTag> {
    if let Some(t) = op.fixed_result_tag() {
        return Some(t);
    }
    use TypeTag::*;
    match (a, b) {
        (Int32, Int32) => None,
        (Float64, Float64) | (Int32, Float64) | (Float64, Int32) => Some(Float64),
        (String, String) if op == BinOp::Add => Some(String),
        _ => None,
    }
}

pub fn format_number(f: f64) -> String {
    if f.is_nan() {
        "NaN".to_string()
    } else if f.is_infinite() {
        if f > 0.0 { "Infinity" } else { "-Infinity" }.to_string()
    } else if f == f.trunc() && f.abs() < 1e21 {
        format!("{}", f as i128)
    } else {
        format!("{f}")
    }
}

/// Read access to array storage, so that printing can show elements.
pub trait ArrayStore {
    fn elements(&self, r: ArrRef) -> &[Value];
}

pub fn display_value(v: &Value, arrays: &dyn ArrayStore) -> String {
    fn go(v: &Value, arrays: &dyn ArrayStore, depth: usize, out: &mut String) {
        match v {
            Value::Int(i) => out.push_str(&i.to_string()),
            Value::Float(f) => out.push_str(&format_number(*f)),
            Value::Undefined => out.push_str("undefined"),
            Value::Null => out.push_str("null"),
            Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Value::Str(s) => out.push_str(s),
            Value::Object(_) => out.push_str("[object Object]"),
            Value::Closure(_) => out.push_str("function"),
            Value::Array(r) => {
                if depth > 4 {
                    out.push_str("...");
                    return;
                }
                for (i, e) in arrays.elements(*r).iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    go(e, arrays, depth + 1, out);
                }
            }
        }
    }
    let mut out = String::new();
    go(v, arrays, 0, &mut out);
    out
}

/// Functions provided by the runtime rather than by program text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Builtin {
    Print,
    DefineConst,
    ObjectWithProto,
}

impl Builtin {
    pub const ALL: [Builtin; 3] = [Builtin::Print, Builtin::DefineConst, Builtin::ObjectWithProto];

    pub fn global_name(self) -> &'static str {
        match self {
            Builtin::Print => "print",
            Builtin::DefineConst => "defineConst",
            Builtin::ObjectWithProto => "objectWithProto",
        }
    }
}

/// Identity of a callee: which code a closure runs. Closures created from the
/// same function expression share an identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FnIdent {
    Script(u32),
    Native(Builtin),
}

impl fmt::Display for FnIdent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FnIdent::Script(id) => write!(f, "fn{id}"),
            FnIdent::Native(b) => f.write_str(b.global_name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tags_of_literals() {
        assert_eq!(tag_of(&Value::Int(42)), TypeTag::Int32);
        assert_eq!(tag_of(&Value::Null), TypeTag::Const);
        assert_eq!(tag_of(&Value::Float(3.5)), TypeTag::Float64);
        assert_eq!(tag_of(&Value::Undefined), TypeTag::Const);
        assert_eq!(tag_of(&Value::Bool(true)), TypeTag::Const);
    }

    #[test]
    fn add_small_ints_stays_int() {
        assert_eq!(arith(BinOp::Add, &Value::Int(1), &Value::Int(2)).unwrap(), Value::Int(3));
    }

    #[test]
    fn add_overflow_promotes() {
        let oracle = 2147483647i64 + 1;
        let r = arith(BinOp::Add, &Value::Int(i32::MAX), &Value::Int(1)).unwrap();
        assert_eq!(r, Value::Float(oracle as f64));
        assert_eq!(r, Value::Float(2147483648.0));
    }

    #[test]
    fn concat_strings() {
        let r = arith(BinOp::Add, &Value::str("ab"), &Value::str("c")).unwrap();
        assert_eq!(r, Value::str("abc"));
    }

    #[test]
    fn unsupported_combination_is_type_error() {
        let e = arith(BinOp::Add, &Value::Object(ObjRef(0)), &Value::Int(1)).unwrap_err();
        assert_eq!(e.kind, crate::error::ErrorKind::TypeError);
        assert!(arith(BinOp::Add, &Value::str("a"), &Value::Int(1)).is_err());
    }

    #[test]
    fn strict_equality_discriminates_tags() {
        assert_eq!(arith(BinOp::Eq, &Value::Int(1), &Value::Float(1.0)).unwrap(), Value::Bool(false));
        assert_eq!(arith(BinOp::Eq, &Value::str("x"), &Value::str("x")).unwrap(), Value::Bool(true));
        assert_eq!(arith(BinOp::Ne, &Value::Null, &Value::Undefined).unwrap(), Value::Bool(true));
    }

    #[test]
    fn truthiness() {
        for v in [Value::Bool(false), Value::Null, Value::Undefined, Value::Int(0), Value::Float(0.0), Value::str("")] {
            assert!(!v.truthy(), "{v:?}");
        }
        for v in [Value::Bool(true), Value::Int(-1), Value::Float(0.5), Value::str("0"), Value::Object(ObjRef(0))] {
            assert!(v.truthy(), "{v:?}");
        }
    }

    #[test]
    fn bitwise_on_floats_uses_int32_conversion() {
        let r = arith(BinOp::BitAnd, &Value::Float(4294967296.0), &Value::Int(7)).unwrap();
        assert_eq!(r, Value::Int(0));
        assert_eq!(to_int32(4294967295.0), -1);
        assert_eq!(to_int32(-1.5), -1);
    }

    #[test]
    fn number_formatting() {
        assert_eq!(format_number(2147483648.0), "2147483648");
        assert_eq!(format_number(0.5), "0.5");
        assert_eq!(format_number(f64::INFINITY), "Infinity");
    }

    proptest! {
        #[test]
        fn add_fitting_sum_is_int(a in any::<i32>(), b in any::<i32>()) {
            let exact = a as i64 + b as i64;
            let r = arith(BinOp::Add, &Value::Int(a), &Value::Int(b)).unwrap();
            if exact >= i32::MIN as i64 && exact <= i32::MAX as i64 {
                prop_assert_eq!(r, Value::Int(exact as i32));
            } else {
                prop_assert_eq!(r.tag(), TypeTag::Float64);
            }
        }

        #[test]
        fn add_is_exact(a in any::<i32>(), b in any::<i32>()) {
            let exact = a as i64 + b as i64;
            let r = arith(BinOp::Add, &Value::Int(a), &Value::Int(b)).unwrap();
            let got = match r { Value::Int(i) => i as f64, Value::Float(f) => f, _ => unreachable!() };
            prop_assert_eq!(got, exact as f64);
            prop_assert_eq!(got as i64, exact);
        }

        #[test]
        fn sub_and_mul_match_wide_oracle(a in any::<i32>(), b in any::<i32>()) {
            for (op, exact) in [(BinOp::Sub, a as i64 - b as i64), (BinOp::Mul, a as i64 * b as i64)] {
                let r = arith(op, &Value::Int(a), &Value::Int(b)).unwrap();
                match r {
                    Value::Int(i) => prop_assert_eq!(i as i64, exact),
                    Value::Float(f) => {
                        prop_assert!(i32::try_from(exact).is_err());
                        prop_assert_eq!(f, exact as f64);
                    }
                    _ => prop_assert!(false),
                }
            }
        }

        #[test]
        fn tag_of_is_total(i in any::<i32>(), f in any::<f64>()) {
            prop_assert_eq!(tag_of(&Value::Int(i)), TypeTag::Int32);
            prop_assert_eq!(tag_of(&Value::Float(f)), TypeTag::Float64);
        }
    }
}

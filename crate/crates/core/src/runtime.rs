//! Operations whose semantics do not depend on the object representation,
//! shared by the reference interpreter and the engine.

use crate::error::RuntimeError;
use crate::value::{display_value, ArrayStore, Value};

/// Property read on a non-object base. Arrays and strings expose `length`.
pub fn primitive_get(base: &Value, name: &str, arrays: &dyn ArrayStore) -> Result<Value, RuntimeError> {
    let len = match base {
        Value::Array(r) => arrays.elements(*r).len(),
        Value::Str(s) => s.chars().count(),
        other => return Err(RuntimeError::cannot_read(name, other.kind_name())),
    };
    Ok(if name == "length" { Value::Int(len as i32) } else { Value::Undefined })
}

pub fn index_get(base: &Value, index: &Value, arrays: &dyn ArrayStore) -> Result<Value, RuntimeError> {
    let Value::Array(r) = base else {
        return Err(RuntimeError::not_indexable(base.kind_name()));
    };
    let Value::Int(i) = index else {
        return Err(RuntimeError::bad_index(index.kind_name()));
    };
    let elems = arrays.elements(*r);
    Ok(usize::try_from(*i).ok().and_then(|i| elems.get(i)).cloned().unwrap_or(Value::Undefined))
}

/// Validates an indexed store; returns the array's element vector index
/// (`len` meaning append).
pub fn index_check(base: &Value, index: &Value, arrays: &dyn ArrayStore) -> Result<usize, RuntimeError> {
    let Value::Array(r) = base else {
        return Err(RuntimeError::not_indexable(base.kind_name()));
    };
    let Value::Int(i) = index else {
        return Err(RuntimeError::bad_index(index.kind_name()));
    };
    let len = arrays.elements(*r).len();
    match usize::try_from(*i) {
        Ok(u) if u <= len => Ok(u),
        _ => Err(RuntimeError::index_out_of_bounds(*i, len)),
    }
}

pub fn store_element(elems: &mut Vec<Value>, at: usize, v: Value) {
    if at == elems.len() {
        elems.push(v);
    } else {
        elems[at] = v;
    }
}

/// Text printed by `print(args...)`.
pub fn print_line(args: &[Value], arrays: &dyn ArrayStore) -> String {
    args.iter().map(|v| display_value(v, arrays)).collect::<Vec<_>>().join(" ")
}

pub fn arg(args: &[Value], i: usize) -> Value {
    args.get(i).cloned().unwrap_or(Value::Undefined)
}

/// Validates `defineConst(obj, name, value)` arguments.
pub fn define_const_name(args: &[Value]) -> Result<std::rc::Rc<str>, RuntimeError> {
    if !matches!(arg(args, 0), Value::Object(_)) {
        return Err(RuntimeError::bad_argument("defineConst", "an object"));
    }
    match arg(args, 1) {
        Value::Str(s) => Ok(s),
        _ => Err(RuntimeError::bad_argument("defineConst", "a string name")),
    }
}

/// Stack reserved for threads that execute programs; deep recursion in
/// programs maps onto recursion in both interpreters.
pub const STACK_BYTES: usize = 128 << 20;

/// Runs `f` on a fresh thread with a [`STACK_BYTES`] stack.
pub fn with_large_stack<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    std::thread::scope(|s| {
        std::thread::Builder::new()
            .stack_size(STACK_BYTES)
            .spawn_scoped(s, f)
            .expect("spawn interpreter thread")
            .join()
            .unwrap_or_else(|e| std::panic::resume_unwind(e))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::ErrorKind;
    use crate::value::ArrRef;

    struct Arrays(Vec<Vec<Value>>);

    impl ArrayStore for Arrays {
        fn elements(&self, r: ArrRef) -> &[Value] {
            &self.0[r.0 as usize]
        }
    }

    #[test]
    fn length_of_arrays_and_strings() {
        let a = Arrays(vec![vec![Value::Int(1), Value::Int(2)]]);
        assert_eq!(primitive_get(&Value::Array(ArrRef(0)), "length", &a).unwrap(), Value::Int(2));
        assert_eq!(primitive_get(&Value::str("héllo"), "length", &a).unwrap(), Value::Int(5));
        assert_eq!(primitive_get(&Value::str("x"), "foo", &a).unwrap(), Value::Undefined);
        let e = primitive_get(&Value::Undefined, "x", &a).unwrap_err();
        assert_eq!(e.kind, ErrorKind::TypeError);
        assert_eq!(e.message, "cannot read property 'x' of undefined");
    }

    #[test]
    fn indexing_rules() {
        let a = Arrays(vec![vec![Value::Int(7)]]);
        let arr = Value::Array(ArrRef(0));
        assert_eq!(index_get(&arr, &Value::Int(0), &a).unwrap(), Value::Int(7));
        assert_eq!(index_get(&arr, &Value::Int(5), &a).unwrap(), Value::Undefined);
        assert_eq!(index_get(&arr, &Value::Int(-1), &a).unwrap(), Value::Undefined);
        assert!(index_get(&arr, &Value::Float(0.0), &a).is_err());
        assert_eq!(index_check(&arr, &Value::Int(1), &a).unwrap(), 1);
        assert!(index_check(&arr, &Value::Int(2), &a).is_err());
        assert!(index_check(&Value::Int(0), &Value::Int(0), &a).is_err());
        let mut v = vec![Value::Int(1)];
        store_element(&mut v, 1, Value::Int(2));
        store_element(&mut v, 0, Value::Int(0));
        assert_eq!(v, vec![Value::Int(0), Value::Int(2)]);
    }
}

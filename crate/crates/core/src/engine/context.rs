//! Type contexts: what a block version may assume about temps, cells and
//! the global object on entry.

use std::fmt::{self, Write as _};

use crate::frontend::ir::TempSet;
use crate::shape::ShapeId;
use crate::value::{FnIdent, TypeTag};

/// Knowledge about one value. A known shape implies tag `object`; a known
/// identity implies tag `closure`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Fact {
    pub tag: Option<TypeTag>,
    pub shape: Option<ShapeId>,
    pub ident: Option<FnIdent>,
}

impl Fact {
    pub const UNKNOWN: Fact = Fact { tag: None, shape: None, ident: None };

    pub fn tag(tag: TypeTag) -> Fact {
        Fact { tag: Some(tag), ..Fact::UNKNOWN }
    }

    pub fn maybe_tag(tag: Option<TypeTag>) -> Fact {
        Fact { tag, ..Fact::UNKNOWN }
    }

    pub fn object(shape: Option<ShapeId>) -> Fact {
        Fact { tag: Some(TypeTag::Object), shape, ident: None }
    }

    pub fn closure(ident: Option<FnIdent>) -> Fact {
        Fact { tag: Some(TypeTag::Closure), shape: None, ident }
    }

    pub fn is_unknown(&self) -> bool {
        *self == Fact::UNKNOWN
    }

    /// Whether the value's full descriptor (tag and, for closures, identity)
    /// is known.
    pub fn desc_known(&self) -> bool {
        match self.tag {
            None => false,
            Some(TypeTag::Closure) => self.ident.is_some(),
            Some(_) => true,
        }
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.tag, self.shape, self.ident) {
            (None, _, _) => f.write_str("?"),
            (Some(_), Some(s), _) => write!(f, "object@{s}"),
            (Some(_), None, Some(id)) => write!(f, "closure<{id}>"),
            (Some(t), None, None) => write!(f, "{t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TypeContext {
    pub temps: Vec<Fact>,
    /// The function's own environment cells.
    pub cells: Vec<Fact>,
    pub global_shape: Option<ShapeId>,
}

impl TypeContext {
    pub fn unknown(num_temps: u32, num_cells: u32) -> Self {
        TypeContext {
            temps: vec![Fact::UNKNOWN; num_temps as usize],
            cells: vec![Fact::UNKNOWN; num_cells as usize],
            global_shape: None,
        }
    }

    /// Forgets facts about temps that are dead on entry to a block.
    pub fn masked(&self, live: &TempSet) -> Self {
        let mut c = self.clone();
        for (i, f) in c.temps.iter_mut().enumerate() {
            if !live.contains(i as u32) {
                *f = Fact::UNKNOWN;
            }
        }
        c
    }

    /// The all-unknown context used by a block's generic version.
    pub fn merge_into_generic(&self) -> Self {
        TypeContext::unknown(self.temps.len() as u32, self.cells.len() as u32)
    }

    pub fn is_generic(&self) -> bool {
        self.global_shape.is_none() && self.temps.iter().chain(&self.cells).all(Fact::is_unknown)
    }

    pub fn drop_all_shapes(&mut self) {
        for f in self.temps.iter_mut().chain(self.cells.iter_mut()) {
            f.shape = None;
        }
        self.global_shape = None;
    }

    /// Forgets every non-global fact claiming shape `s`.
    pub fn drop_shape(&mut self, s: ShapeId) {
        for f in self.temps.iter_mut().chain(self.cells.iter_mut()) {
            if f.shape == Some(s) {
                f.shape = None;
            }
        }
    }

    /// Whether any temp other than `except`, or any cell, claims shape `s`.
    pub fn mentions_shape(&self, s: ShapeId, except: Option<u32>) -> bool {
        self.temps.iter().enumerate().any(|(i, f)| Some(i as u32) != except && f.shape == Some(s))
            || self.cells.iter().any(|f| f.shape == Some(s))
    }

    /// Facts that survive a call: no shapes, and nothing about cells the
    /// callee might assign.
    pub fn after_call(&mut self, cell_mutable: &[bool]) {
        self.drop_all_shapes();
        for (f, &m) in self.cells.iter_mut().zip(cell_mutable) {
            if m {
                *f = Fact::UNKNOWN;
            }
        }
    }

    pub fn known_count(&self) -> usize {
        self.temps.iter().chain(&self.cells).filter(|f| !f.is_unknown()).count() + self.global_shape.is_some() as usize
    }
}

impl fmt::Display for TypeContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for (i, fact) in self.temps.iter().enumerate().filter(|(_, f)| !f.is_unknown()) {
            parts.push(format!("t{i}:{fact}"));
        }
        for (i, fact) in self.cells.iter().enumerate().filter(|(_, f)| !f.is_unknown()) {
            parts.push(format!("c{i}:{fact}"));
        }
        if let Some(s) = self.global_shape {
            parts.push(format!("global@{s}"));
        }
        let mut out = String::from("{");
        for (i, p) in parts.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            let _ = write!(out, "{p}");
        }
        out.push('}');
        f.write_str(&out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TypeContext {
        let mut c = TypeContext::unknown(3, 2);
        c.temps[0] = Fact::object(Some(ShapeId(4)));
        c.temps[1] = Fact::tag(TypeTag::Int32);
        c.cells[0] = Fact::object(Some(ShapeId(4)));
        c.cells[1] = Fact::closure(Some(FnIdent::Script(0)));
        c.global_shape = Some(ShapeId(9));
        c
    }

    #[test]
    fn generic_is_all_unknown_and_idempotent() {
        let g = sample().merge_into_generic();
        assert!(g.is_generic());
        assert_eq!(g.merge_into_generic(), g);
        assert_eq!(g.known_count(), 0);
    }

    #[test]
    fn masking_keeps_live_temps_and_cells() {
        let mut live = TempSet::new(3);
        live.insert(1);
        let m = sample().masked(&live);
        assert!(m.temps[0].is_unknown());
        assert_eq!(m.temps[1], Fact::tag(TypeTag::Int32));
        assert_eq!(m.cells, sample().cells);
    }

    #[test]
    fn calls_drop_shapes_and_mutable_cells() {
        let mut c = sample();
        c.after_call(&[false, true]);
        assert_eq!(c.temps[0], Fact::object(None));
        assert_eq!(c.temps[1], Fact::tag(TypeTag::Int32));
        assert_eq!(c.cells[0], Fact::object(None));
        assert!(c.cells[1].is_unknown());
        assert_eq!(c.global_shape, None);
    }

    #[test]
    fn drop_shape_is_selective() {
        let mut c = sample();
        assert!(c.mentions_shape(ShapeId(4), Some(0)));
        c.drop_shape(ShapeId(4));
        assert_eq!(c.temps[0].shape, None);
        assert_eq!(c.cells[0].shape, None);
        assert_eq!(c.global_shape, Some(ShapeId(9)));
        assert_eq!(c.to_string(), "{t0:object, t1:int32, c0:object, c1:closure<fn0>, global@S9}");
    }
}

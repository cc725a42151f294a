//! The global shape tree.
//!
//! Every object points at one node of the tree; the path from the root to that
//! node lists the object's properties in definition order. Nodes also record a
//! [`TypeDesc`] for their property, so a single shape test reveals the tags
//! of every property of the object. Overwriting a property with a value whose
//! descriptor differs moves the object to a sibling lineage (a *flip*).

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::rc::Rc;

use thiserror::Error;

use crate::value::{FnIdent, TypeTag};

/// Name of the hidden prototype property stored in slot 0.
pub const PROTO: &str = "__proto__";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ShapeId(pub u32);

impl fmt::Display for ShapeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.0)
    }
}

/// Type knowledge attached to a property.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TypeDesc {
    /// Untyped shapes: nothing is recorded.
    Any,
    /// A non-closure tag.
    Tag(TypeTag),
    /// A closure, with the callee identity when only one has ever been stored.
    Closure(Option<FnIdent>),
}

impl TypeDesc {
    pub fn of_tag(tag: TypeTag) -> TypeDesc {
        if tag == TypeTag::Closure {
            TypeDesc::Closure(None)
        } else {
            TypeDesc::Tag(tag)
        }
    }

    pub fn tag(self) -> Option<TypeTag> {
        match self {
            TypeDesc::Any => None,
            TypeDesc::Tag(t) => Some(t),
            TypeDesc::Closure(_) => Some(TypeTag::Closure),
        }
    }

    pub fn identity(self) -> Option<FnIdent> {
        match self {
            TypeDesc::Closure(id) => id,
            _ => None,
        }
    }

    /// Descriptor recorded when a value with `tag` (and, for closures,
    /// identity `ident`) is written over a property currently described by
    /// `current`. The first closure written keeps its identity; a different
    /// closure degrades the descriptor to identity-unknown for good.
    pub fn for_write(current: Option<TypeDesc>, tag: TypeTag, ident: Option<FnIdent>) -> TypeDesc {
        if tag != TypeTag::Closure {
            return TypeDesc::Tag(tag);
        }
        match current {
            Some(TypeDesc::Closure(Some(old))) if Some(old) == ident => TypeDesc::Closure(Some(old)),
            Some(TypeDesc::Closure(_)) => TypeDesc::Closure(None),
            _ => TypeDesc::Closure(ident),
        }
    }
}

impl fmt::Display for TypeDesc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeDesc::Any => f.write_str("any"),
            TypeDesc::Tag(t) => write!(f, "{t}"),
            TypeDesc::Closure(None) => f.write_str("closure"),
            TypeDesc::Closure(Some(id)) => write!(f, "closure<{id}>"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PropFlags {
    pub writable: bool,
    pub enumerable: bool,
}

impl PropFlags {
    pub const DEFAULT: PropFlags = PropFlags { writable: true, enumerable: true };
    pub const CONST: PropFlags = PropFlags { writable: false, enumerable: true };
    pub const HIDDEN: PropFlags = PropFlags { writable: true, enumerable: false };
}

impl Default for PropFlags {
    fn default() -> Self {
        PropFlags::DEFAULT
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShapeError {
    #[error("property '{0}' is already defined")]
    DuplicateProperty(String),
    #[error("property '{0}' not found")]
    NotFound(String),
    #[error("property '{0}' is read-only")]
    ReadOnly(String),
    #[error("shape has no prototype slot")]
    MissingProto,
}

type TransitionKey = (Rc<str>, TypeDesc, PropFlags);

#[derive(Debug)]
pub struct ShapeNode {
    pub parent: Option<ShapeId>,
    pub name: Rc<str>,
    pub slot: u32,
    pub flags: PropFlags,
    pub desc: TypeDesc,
    children: HashMap<TransitionKey, ShapeId>,
    /// Children in creation order, for deterministic dumps.
    child_order: Vec<ShapeId>,
}

/// Result of a successful lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PropInfo {
    pub slot: u32,
    pub desc: TypeDesc,
    pub flags: PropFlags,
}

#[derive(Debug)]
pub struct ShapeTree {
    nodes: Vec<ShapeNode>,
    typed: bool,
    shapes_created: u64,
}

impl ShapeTree {
    pub const ROOT: ShapeId = ShapeId(0);

    /// `typed == false` erases every descriptor to [`TypeDesc::Any`].
    pub fn new(typed: bool) -> Self {
        let root = ShapeNode {
            parent: None,
            name: Rc::from(""),
            slot: 0,
            flags: PropFlags::DEFAULT,
            desc: TypeDesc::Any,
            children: HashMap::new(),
            child_order: Vec::new(),
        };
        ShapeTree { nodes: vec![root], typed, shapes_created: 0 }
    }

    pub fn is_typed(&self) -> bool {
        self.typed
    }

    pub fn empty_shape(&self) -> ShapeId {
        Self::ROOT
    }

    /// Number of nodes created since construction (the root excluded).
    pub fn shapes_created(&self) -> u64 {
        self.shapes_created
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() == 1
    }

    pub fn node(&self, s: ShapeId) -> &ShapeNode {
        &self.nodes[s.0 as usize]
    }

    pub fn canonical(&self, d: TypeDesc) -> TypeDesc {
        if self.typed {
            d
        } else {
            TypeDesc::Any
        }
    }

    /// Number of properties (and therefore slots) an object of shape `s` has.
    pub fn prop_count(&self, s: ShapeId) -> u32 {
        if s == Self::ROOT {
            0
        } else {
            self.node(s).slot + 1
        }
    }

    /// The node's ancestors, root excluded, in definition order.
    pub fn lineage(&self, s: ShapeId) -> Vec<ShapeId> {
        let mut path = Vec::new();
        let mut cur = s;
        while cur != Self::ROOT {
            path.push(cur);
            cur = self.node(cur).parent.expect("non-root node has a parent");
        }
        path.reverse();
        path
    }

    fn find(&self, s: ShapeId, name: &str) -> Option<ShapeId> {
        let mut cur = s;
        while cur != Self::ROOT {
            let n = self.node(cur);
            if &*n.name == name {
                return Some(cur);
            }
            cur = n.parent?;
        }
        None
    }

    pub fn lookup(&self, s: ShapeId, name: &str) -> Option<PropInfo> {
        self.find(s, name).map(|id| {
            let n = self.node(id);
            PropInfo { slot: n.slot, desc: n.desc, flags: n.flags }
        })
    }

    /// Follows or creates the transition `(name, d, f)` out of `s`.
    pub fn define_property(
        &mut self,
        s: ShapeId,
        name: &str,
        d: TypeDesc,
        f: PropFlags,
    ) -> Result<ShapeId, ShapeError> {
        if self.find(s, name).is_some() {
            return Err(ShapeError::DuplicateProperty(name.to_string()));
        }
        Ok(self.transition(s, Rc::from(name), d, f))
    }

    fn transition(&mut self, s: ShapeId, name: Rc<str>, d: TypeDesc, f: PropFlags) -> ShapeId {
        let d = self.canonical(d);
        let key = (name, d, f);
        if let Some(&child) = self.node(s).children.get(&key) {
            return child;
        }
        let id = ShapeId(self.nodes.len() as u32);
        let slot = self.prop_count(s);
        self.nodes.push(ShapeNode {
            parent: Some(s),
            name: key.0.clone(),
            slot,
            flags: f,
            desc: d,
            children: HashMap::new(),
            child_order: Vec::new(),
        });
        let parent = &mut self.nodes[s.0 as usize];
        parent.children.insert(key, id);
        parent.child_order.push(id);
        self.shapes_created += 1;
        id
    }

    /// Replays the lineage of `s` from the root with `name`'s descriptor and
    /// flags replaced. Slots are unchanged and existing nodes are reused.
    pub fn replace_property(
        &mut self,
        s: ShapeId,
        name: &str,
        new_d: TypeDesc,
        new_f: PropFlags,
    ) -> Result<ShapeId, ShapeError> {
        let target = self.find(s, name).ok_or_else(|| ShapeError::NotFound(name.to_string()))?;
        let new_d = self.canonical(new_d);
        {
            let n = self.node(target);
            if n.desc == new_d && n.flags == new_f {
                return Ok(s);
            }
        }
        let path = self.lineage(s);
        let mut cur = Self::ROOT;
        for id in path {
            let n = self.node(id);
            let (name, mut d, mut f) = (n.name.clone(), n.desc, n.flags);
            if id == target {
                d = new_d;
                f = new_f;
            }
            cur = self.transition(cur, name, d, f);
        }
        Ok(cur)
    }

    /// Shape flip: changes the descriptor of writable property `name`.
    pub fn flip_property(&mut self, s: ShapeId, name: &str, new_d: TypeDesc) -> Result<ShapeId, ShapeError> {
        let info = self.lookup(s, name).ok_or_else(|| ShapeError::NotFound(name.to_string()))?;
        if !info.flags.writable {
            return Err(ShapeError::ReadOnly(name.to_string()));
        }
        self.replace_property(s, name, new_d, info.flags)
    }

    /// Descriptor of the hidden prototype slot: `object` when a prototype is
    /// present, `const` (null) when not.
    pub fn proto_desc(&self, s: ShapeId) -> Result<TypeDesc, ShapeError> {
        match self.lineage(s).first() {
            Some(&first) if &*self.node(first).name == PROTO => Ok(self.node(first).desc),
            _ => Err(ShapeError::MissingProto),
        }
    }

    /// Preorder rendering, one node per line as `name:desc@slot[flags]`.
    pub fn dump(&self) -> String {
        let mut out = String::from("<root>\n");
        let mut stack: Vec<(ShapeId, usize)> =
            self.node(Self::ROOT).child_order.iter().rev().map(|&c| (c, 1)).collect();
        while let Some((id, depth)) = stack.pop() {
            let n = self.node(id);
            let _ = writeln!(
                out,
                "{:indent$}{}:{}@{}[{}{}]",
                "",
                n.name,
                n.desc,
                n.slot,
                if n.flags.writable { 'w' } else { '-' },
                if n.flags.enumerable { 'e' } else { '-' },
                indent = depth * 2
            );
            stack.extend(n.child_order.iter().rev().map(|&c| (c, depth + 1)));
        }
        out
    }
}

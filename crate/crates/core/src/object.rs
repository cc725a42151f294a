//! Shaped heap objects, arrays and closures, with the generic (slow path)
//! property protocol. The global object is an ordinary object here.

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::RuntimeError;
use crate::shape::{PropFlags, PropInfo, ShapeError, ShapeId, ShapeTree, TypeDesc, PROTO};
use crate::value::{ArrRef, ArrayStore, Builtin, ClosureRef, FnIdent, ObjRef, TypeTag, Value};

#[derive(Debug, Clone)]
pub struct ObjectData {
    pub shape: ShapeId,
    pub slots: Vec<Value>,
}

/// Captured variable storage for one function activation.
#[derive(Debug, Default)]
pub struct Env {
    pub cells: RefCell<Vec<Value>>,
    pub parent: Option<Rc<Env>>,
}

impl Env {
    pub fn new(size: usize, parent: Option<Rc<Env>>) -> Rc<Env> {
        Rc::new(Env { cells: RefCell::new(vec![Value::Undefined; size]), parent })
    }

    pub fn ancestor(self: &Rc<Env>, depth: u32) -> Rc<Env> {
        let mut e = self.clone();
        for _ in 0..depth {
            e = e.parent.clone().expect("environment depth out of range");
        }
        e
    }
}

#[derive(Debug, Clone)]
pub struct Closure {
    pub ident: FnIdent,
    pub env: Option<Rc<Env>>,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct HeapStats {
    pub property_reads: u64,
    pub property_writes: u64,
    pub shape_flips: u64,
}

/// What a property write did to the receiver's shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteEffect {
    /// In-place store; shape unchanged.
    Stored { shape: ShapeId },
    /// New own property; shape transitioned to a child.
    Added { from: ShapeId, to: ShapeId },
    /// Existing property's descriptor changed.
    Flipped { from: ShapeId, to: ShapeId },
}

impl WriteEffect {
    pub fn before(self) -> ShapeId {
        match self {
            WriteEffect::Stored { shape } => shape,
            WriteEffect::Added { from, .. } | WriteEffect::Flipped { from, .. } => from,
        }
    }

    pub fn after(self) -> ShapeId {
        match self {
            WriteEffect::Stored { shape } => shape,
            WriteEffect::Added { to, .. } | WriteEffect::Flipped { to, .. } => to,
        }
    }
}

/// Outcome of a prototype-chain lookup.
#[derive(Debug, Clone)]
pub struct ChainLookup {
    pub value: Value,
    /// Descriptor of the property on its holder, when found.
    pub desc: Option<TypeDesc>,
    /// Prototype links followed, counting the final link that turned out null.
    pub proto_links: u32,
}

#[derive(Debug)]
pub struct Heap {
    pub tree: ShapeTree,
    objects: Vec<ObjectData>,
    arrays: Vec<Vec<Value>>,
    closures: Vec<Closure>,
    pub stats: HeapStats,
}

impl ArrayStore for Heap {
    fn elements(&self, r: ArrRef) -> &[Value] {
        &self.arrays[r.0 as usize]
    }
}

impl Heap {
    pub fn new(typed: bool) -> Self {
        Heap {
            tree: ShapeTree::new(typed),
            objects: Vec::new(),
            arrays: Vec::new(),
            closures: Vec::new(),
            stats: HeapStats::default(),
        }
    }

    pub fn object(&self, o: ObjRef) -> &ObjectData {
        &self.objects[o.0 as usize]
    }

    pub fn shape_of(&self, o: ObjRef) -> ShapeId {
        self.objects[o.0 as usize].shape
    }

    pub fn slot(&self, o: ObjRef, slot: u32) -> &Value {
        &self.objects[o.0 as usize].slots[slot as usize]
    }

    pub fn store_slot(&mut self, o: ObjRef, slot: u32, v: Value) {
        self.objects[o.0 as usize].slots[slot as usize] = v;
    }

    pub fn closure(&self, c: ClosureRef) -> &Closure {
        &self.closures[c.0 as usize]
    }

    pub fn alloc_closure(&mut self, ident: FnIdent, env: Option<Rc<Env>>) -> Value {
        self.closures.push(Closure { ident, env });
        Value::Closure(ClosureRef(self.closures.len() as u32 - 1))
    }

    pub fn alloc_array(&mut self, elems: Vec<Value>) -> Value {
        self.arrays.push(elems);
        Value::Array(ArrRef(self.arrays.len() as u32 - 1))
    }

    pub fn array(&self, a: ArrRef) -> &Vec<Value> {
        &self.arrays[a.0 as usize]
    }

    pub fn array_mut(&mut self, a: ArrRef) -> &mut Vec<Value> {
        &mut self.arrays[a.0 as usize]
    }

    /// Closure identity carried by `v`, if it is a closure.
    pub fn ident_of(&self, v: &Value) -> Option<FnIdent> {
        match v {
            Value::Closure(c) => Some(self.closure(*c).ident),
            _ => None,
        }
    }

    /// Descriptor a write of `v` would record over `current`.
    pub fn desc_for_write(&self, current: Option<TypeDesc>, v: &Value) -> TypeDesc {
        self.tree.canonical(TypeDesc::for_write(current, v.tag(), self.ident_of(v)))
    }

    pub fn new_object(&mut self, proto: &Value) -> Result<Value, RuntimeError> {
        if !matches!(proto, Value::Object(_) | Value::Null) {
            return Err(RuntimeError::bad_proto(proto.kind_name()));
        }
        let desc = self.desc_for_write(None, proto);
        let shape = self
            .tree
            .define_property(ShapeTree::ROOT, PROTO, desc, PropFlags::HIDDEN)
            .expect("root has no properties");
        Ok(self.alloc_object(shape, vec![proto.clone()]))
    }

    /// Allocates an object with a known shape; `slots` must match it.
    pub fn alloc_object(&mut self, shape: ShapeId, slots: Vec<Value>) -> Value {
        debug_assert_eq!(self.tree.prop_count(shape) as usize, slots.len());
        self.objects.push(ObjectData { shape, slots });
        Value::Object(ObjRef(self.objects.len() as u32 - 1))
    }

    /// The prototype stored in slot 0.
    pub fn proto_of(&self, o: ObjRef) -> Option<ObjRef> {
        match self.slot(o, 0) {
            Value::Object(p) => Some(*p),
            _ => None,
        }
    }

    pub fn lookup_own(&self, o: ObjRef, name: &str) -> Option<PropInfo> {
        self.tree.lookup(self.shape_of(o), name)
    }

    /// Walks the prototype chain without touching counters.
    pub fn lookup_chain(&self, o: ObjRef, name: &str) -> ChainLookup {
        let mut cur = o;
        let mut links = 0;
        loop {
            if let Some(info) = self.lookup_own(cur, name) {
                return ChainLookup { value: self.slot(cur, info.slot).clone(), desc: Some(info.desc), proto_links: links };
            }
            links += 1;
            match self.proto_of(cur) {
                Some(p) => cur = p,
                None => return ChainLookup { value: Value::Undefined, desc: None, proto_links: links },
            }
        }
    }

    pub fn get_prop_slow(&mut self, o: ObjRef, name: &str) -> Value {
        self.stats.property_reads += 1;
        self.lookup_chain(o, name).value
    }

    /// Generic property write. Absent properties are always created on the
    /// receiver, even when a prototype defines them.
    pub fn set_prop_slow(&mut self, o: ObjRef, name: &str, v: Value) -> Result<WriteEffect, RuntimeError> {
        self.stats.property_writes += 1;
        self.write_prop(o, name, v, PropFlags::DEFAULT)
    }

    fn write_prop(&mut self, o: ObjRef, name: &str, v: Value, add_flags: PropFlags) -> Result<WriteEffect, RuntimeError> {
        let shape = self.shape_of(o);
        match self.tree.lookup(shape, name) {
            None => {
                let desc = self.desc_for_write(None, &v);
                let to = self.tree.define_property(shape, name, desc, add_flags).map_err(shape_error)?;
                let obj = &mut self.objects[o.0 as usize];
                obj.shape = to;
                obj.slots.push(v);
                Ok(WriteEffect::Added { from: shape, to })
            }
            Some(info) => {
                if !info.flags.writable {
                    return Err(RuntimeError::read_only(name));
                }
                let desc = self.desc_for_write(Some(info.desc), &v);
                let obj_shape = if desc == info.desc {
                    None
                } else {
                    Some(self.tree.flip_property(shape, name, desc).map_err(shape_error)?)
                };
                let obj = &mut self.objects[o.0 as usize];
                obj.slots[info.slot as usize] = v;
                match obj_shape {
                    None => Ok(WriteEffect::Stored { shape }),
                    Some(to) => {
                        obj.shape = to;
                        self.stats.shape_flips += 1;
                        Ok(WriteEffect::Flipped { from: shape, to })
                    }
                }
            }
        }
    }

    /// Adds a read-only property. Fails if `name` is already own.
    pub fn define_const(&mut self, o: ObjRef, name: &str, v: Value) -> Result<WriteEffect, RuntimeError> {
        if self.lookup_own(o, name).is_some() {
            return Err(shape_error(ShapeError::DuplicateProperty(name.to_string())));
        }
        self.stats.property_writes += 1;
        self.write_prop(o, name, v, PropFlags::CONST)
    }

    /// A fresh global object, seeded with the builtins.
    pub fn new_global(&mut self) -> ObjRef {
        let Value::Object(g) = self.new_object(&Value::Null).expect("null prototype") else { unreachable!() };
        for b in Builtin::ALL {
            let f = self.alloc_closure(FnIdent::Native(b), None);
            self.write_prop(g, b.global_name(), f, PropFlags::DEFAULT).expect("fresh global");
        }
        g
    }

    /// Every slot's tag agrees with the descriptor of the node owning it.
    pub fn slots_match_shape(&self, o: ObjRef) -> bool {
        let obj = self.object(o);
        let lineage = self.tree.lineage(obj.shape);
        obj.slots.len() >= lineage.len()
            && lineage.iter().all(|&id| {
                let n = self.tree.node(id);
                let v = &obj.slots[n.slot as usize];
                match n.desc {
                    TypeDesc::Any => true,
                    TypeDesc::Tag(t) => v.tag() == t,
                    TypeDesc::Closure(id) => {
                        v.tag() == TypeTag::Closure && (id.is_none() || self.ident_of(v) == id)
                    }
                }
            })
    }

    pub fn object_count(&self) -> usize {
        self.objects.len()
    }
}

pub fn shape_error(e: ShapeError) -> RuntimeError {
    match e {
        ShapeError::ReadOnly(n) => RuntimeError::read_only(&n),
        other => RuntimeError::type_error(other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::ErrorKind;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn obj(v: Value) -> ObjRef {
        match v {
            Value::Object(o) => o,
            _ => panic!("not an object"),
        }
    }

    #[test]
    fn new_object_records_prototype_presence() {
        let mut h = Heap::new(true);
        let a = obj(h.new_object(&Value::Null).unwrap());
        assert_eq!(h.tree.proto_desc(h.shape_of(a)).unwrap().tag(), Some(TypeTag::Const));
        let b = obj(h.new_object(&Value::Object(a)).unwrap());
        assert_eq!(h.tree.proto_desc(h.shape_of(b)).unwrap().tag(), Some(TypeTag::Object));
        let c = obj(h.new_object(&Value::Null).unwrap());
        assert_ne!(a, c);
        assert_eq!(h.shape_of(a), h.shape_of(c));
        assert_eq!(h.new_object(&Value::Int(1)).unwrap_err().kind, ErrorKind::TypeError);
    }

    #[test]
    fn reads_follow_the_prototype_chain() {
        let mut h = Heap::new(true);
        let p = obj(h.new_object(&Value::Null).unwrap());
        h.set_prop_slow(p, "m", Value::Int(7)).unwrap();
        let c = obj(h.new_object(&Value::Object(p)).unwrap());
        h.set_prop_slow(c, "x", Value::Int(1)).unwrap();
        assert_eq!(h.get_prop_slow(c, "x"), Value::Int(1));
        assert_eq!(h.get_prop_slow(c, "m"), Value::Int(7));
        assert_eq!(h.get_prop_slow(c, "missing"), Value::Undefined);
        assert_eq!(h.lookup_chain(c, "m").proto_links, 1);
        assert_eq!(h.lookup_chain(c, "missing").proto_links, 2);
        assert_eq!(h.stats.property_reads, 3);
    }

    #[test]
    fn shadowing_writes_create_own_property() {
        let mut h = Heap::new(true);
        let p = obj(h.new_object(&Value::Null).unwrap());
        h.set_prop_slow(p, "m", Value::Int(7)).unwrap();
        let c = obj(h.new_object(&Value::Object(p)).unwrap());
        h.set_prop_slow(c, "m", Value::Int(8)).unwrap();
        assert_eq!(h.get_prop_slow(p, "m"), Value::Int(7));
        assert_eq!(h.get_prop_slow(c, "m"), Value::Int(8));
    }

    #[test]
    fn flip_on_type_change() {
        let mut h = Heap::new(true);
        // Figure-3 style objects: b.y is a string, c.y is null.
        let b = obj(h.new_object(&Value::Null).unwrap());
        let c = obj(h.new_object(&Value::Null).unwrap());
        for (o, y) in [(b, Value::str("foo")), (c, Value::Null)] {
            h.set_prop_slow(o, "x", Value::Int(1)).unwrap();
            h.set_prop_slow(o, "y", y).unwrap();
            h.set_prop_slow(o, "w", Value::Int(3)).unwrap();
        }
        assert_ne!(h.shape_of(b), h.shape_of(c));
        let eff = h.set_prop_slow(c, "y", Value::str("bif")).unwrap();
        assert!(matches!(eff, WriteEffect::Flipped { .. }));
        assert_eq!(h.shape_of(c), h.shape_of(b));
        assert_eq!(h.stats.shape_flips, 1);
        let s = h.shape_of(c);
        assert_eq!(h.set_prop_slow(c, "x", Value::Int(7)).unwrap(), WriteEffect::Stored { shape: s });
        assert_eq!(h.stats.shape_flips, 1);
    }

    #[test]
    fn second_closure_degrades_identity() {
        let mut h = Heap::new(true);
        let o = obj(h.new_object(&Value::Null).unwrap());
        let fa = h.alloc_closure(FnIdent::Script(0), None);
        let fb = h.alloc_closure(FnIdent::Script(1), None);
        h.set_prop_slow(o, "f", fa).unwrap();
        assert_eq!(h.lookup_own(o, "f").unwrap().desc, TypeDesc::Closure(Some(FnIdent::Script(0))));
        let eff = h.set_prop_slow(o, "f", fb).unwrap();
        assert!(matches!(eff, WriteEffect::Flipped { .. }));
        assert_eq!(h.lookup_own(o, "f").unwrap().desc, TypeDesc::Closure(None));
    }

    #[test]
    fn constants_are_read_only() {
        let mut h = Heap::new(true);
        let o = obj(h.new_object(&Value::Null).unwrap());
        h.define_const(o, "PI", Value::Float(2.5)).unwrap();
        assert_eq!(h.get_prop_slow(o, "PI"), Value::Float(2.5));
        assert_eq!(h.set_prop_slow(o, "PI", Value::Int(3)).unwrap_err().kind, ErrorKind::ReadOnlyError);
        assert!(h.define_const(o, "PI", Value::Int(1)).is_err());
        let o2 = obj(h.new_object(&Value::Null).unwrap());
        h.define_const(o2, "PI", Value::Float(2.0)).unwrap();
        assert_eq!(h.shape_of(o), h.shape_of(o2));
    }

    #[test]
    fn global_object_has_builtins() {
        let mut h = Heap::new(true);
        let g = h.new_global();
        let info = h.lookup_own(g, "print").unwrap();
        assert_eq!(info.desc, TypeDesc::Closure(Some(FnIdent::Native(Builtin::Print))));
        let g2 = h.new_global();
        assert_eq!(h.shape_of(g), h.shape_of(g2));
    }

    #[derive(Debug, Clone)]
    enum Op {
        Set(usize, usize, u8),
        Get(usize, usize),
    }

    fn op_strategy() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0usize..4, 0usize..5, 0u8..6).prop_map(|(o, n, v)| Op::Set(o, n, v)),
            (0usize..4, 0usize..5).prop_map(|(o, n)| Op::Get(o, n)),
        ]
    }

    proptest! {
        #[test]
        fn matches_hash_table_model(ops in prop::collection::vec(op_strategy(), 0..60), typed in any::<bool>()) {
            let mut h = Heap::new(typed);
            let fns = [h.alloc_closure(FnIdent::Script(0), None), h.alloc_closure(FnIdent::Script(1), None)];
            let root = obj(h.new_object(&Value::Null).unwrap());
            let objs: Vec<ObjRef> = (0..4)
                .map(|i| {
                    let proto = if i % 2 == 1 { Value::Object(root) } else { Value::Null };
                    obj(h.new_object(&proto).unwrap())
                })
                .collect();
            let mut model: Vec<HashMap<String, Value>> = vec![HashMap::new(); 4];
            let mut root_model: HashMap<String, Value> = HashMap::new();
            h.set_prop_slow(root, "p1", Value::Int(100)).unwrap();
            root_model.insert("p1".into(), Value::Int(100));
            for op in ops {
                match op {
                    Op::Set(o, n, v) => {
                        let val = match v {
                            0 => Value::Int(n as i32),
                            1 => Value::Float(0.5),
                            2 => Value::str("s"),
                            3 => Value::Null,
                            4 => fns[0].clone(),
                            _ => fns[1].clone(),
                        };
                        let name = format!("p{n}");
                        h.set_prop_slow(objs[o], &name, val.clone()).unwrap();
                        model[o].insert(name, val);
                    }
                    Op::Get(o, n) => {
                        let name = format!("p{n}");
                        let expect = model[o]
                            .get(&name)
                            .cloned()
                            .or_else(|| if o % 2 == 1 { root_model.get(&name).cloned() } else { None })
                            .unwrap_or(Value::Undefined);
                        prop_assert_eq!(h.get_prop_slow(objs[o], &name), expect);
                    }
                }
                for &o in &objs {
                    prop_assert!(h.slots_match_shape(o));
                }
            }
            prop_assert!(h.stats.shape_flips <= h.stats.property_writes);
        }
    }
}

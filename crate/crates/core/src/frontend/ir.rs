//! Basic-block IR. Each function is a control-flow graph over virtual temps.
//!
//! Instructions whose outcome can refine type knowledge at run time (property
//! and global accesses, int32 arithmetic that may overflow) are always the
//! last instruction of their block, so the engine can continue in a
//! successor version specialized on what it observed.

use std::fmt::{self, Write as _};
use std::rc::Rc;

use crate::value::{BinOp, TypeTag};

pub type Temp = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId(pub u32);

/// A property-access site in the source program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SiteId(pub u32);

#[derive(Debug, Clone, PartialEq)]
pub enum ConstVal {
    Int(i32),
    Float(f64),
    Str(Rc<str>),
    Bool(bool),
    Null,
    Undefined,
}

impl ConstVal {
    pub fn tag(&self) -> TypeTag {
        match self {
            ConstVal::Int(_) => TypeTag::Int32,
            ConstVal::Float(_) => TypeTag::Float64,
            ConstVal::Str(_) => TypeTag::String,
            ConstVal::Bool(_) | ConstVal::Null | ConstVal::Undefined => TypeTag::Const,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instr {
    Const { dst: Temp, value: ConstVal },
    Move { dst: Temp, src: Temp },
    /// int32 fast path; operands were tag-tested by preceding branches.
    IntOp { dst: Temp, op: BinOp, lhs: Temp, rhs: Temp },
    /// Fully generic operator with tag dispatch.
    Arith { dst: Temp, op: BinOp, lhs: Temp, rhs: Temp },
    Not { dst: Temp, src: Temp },
    GetProp { dst: Temp, obj: Temp, name: Rc<str>, site: SiteId },
    SetProp { obj: Temp, name: Rc<str>, val: Temp, site: SiteId },
    GetGlobal { dst: Temp, name: Rc<str>, site: SiteId },
    SetGlobal { name: Rc<str>, val: Temp, site: SiteId },
    /// `var x;` at top level: defines `x` as undefined unless present.
    DeclareGlobal { name: Rc<str> },
    GetIndex { dst: Temp, arr: Temp, index: Temp },
    SetIndex { arr: Temp, index: Temp, val: Temp },
    NewObject { dst: Temp, proto: Option<Temp> },
    NewArray { dst: Temp, elems: Vec<Temp> },
    MakeClosure { dst: Temp, func: u32 },
    /// Captured variable in the environment `depth` functions out.
    LoadVar { dst: Temp, depth: u32, index: u32 },
    StoreVar { depth: u32, index: u32, src: Temp },
    Call { dst: Temp, callee: Temp, this: Option<Temp>, args: Vec<Temp> },
}

impl Instr {
    pub fn def(&self) -> Option<Temp> {
        match self {
            Instr::Const { dst, .. }
            | Instr::Move { dst, .. }
            | Instr::IntOp { dst, .. }
            | Instr::Arith { dst, .. }
            | Instr::Not { dst, .. }
            | Instr::GetProp { dst, .. }
            | Instr::GetGlobal { dst, .. }
            | Instr::GetIndex { dst, .. }
            | Instr::NewObject { dst, .. }
            | Instr::NewArray { dst, .. }
            | Instr::MakeClosure { dst, .. }
            | Instr::LoadVar { dst, .. }
            | Instr::Call { dst, .. } => Some(*dst),
            Instr::SetProp { .. }
            | Instr::SetGlobal { .. }
            | Instr::DeclareGlobal { .. }
            | Instr::SetIndex { .. }
            | Instr::StoreVar { .. } => None,
        }
    }

    pub fn uses(&self) -> Vec<Temp> {
        match self {
            Instr::Const { .. } | Instr::GetGlobal { .. } | Instr::DeclareGlobal { .. } => vec![],
            Instr::MakeClosure { .. } | Instr::LoadVar { .. } => vec![],
            Instr::Move { src, .. } | Instr::Not { src, .. } | Instr::StoreVar { src, .. } => vec![*src],
            Instr::IntOp { lhs, rhs, .. } | Instr::Arith { lhs, rhs, .. } => vec![*lhs, *rhs],
            Instr::GetProp { obj, .. } => vec![*obj],
            Instr::SetProp { obj, val, .. } => vec![*obj, *val],
            Instr::SetGlobal { val, .. } => vec![*val],
            Instr::GetIndex { arr, index, .. } => vec![*arr, *index],
            Instr::SetIndex { arr, index, val } => vec![*arr, *index, *val],
            Instr::NewObject { proto, .. } => proto.iter().copied().collect(),
            Instr::NewArray { elems, .. } => elems.clone(),
            Instr::Call { callee, this, args, .. } => {
                let mut v = vec![*callee];
                v.extend(this.iter().copied());
                v.extend(args.iter().copied());
                v
            }
        }
    }

    /// Instructions that end their block so the engine can fork on them.
    pub fn is_fork_point(&self) -> bool {
        match self {
            Instr::IntOp { op, .. } => op.can_overflow(),
            Instr::GetProp { .. } | Instr::SetProp { .. } | Instr::GetGlobal { .. } | Instr::SetGlobal { .. } => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Terminator {
    Jump(BlockId),
    /// Truthiness branch.
    Branch { cond: Temp, then: BlockId, otherwise: BlockId },
    /// Branch on the tag of `value`.
    TagTest { value: Temp, tag: TypeTag, then: BlockId, otherwise: BlockId },
    Return(Temp),
}

impl Terminator {
    pub fn successors(&self) -> Vec<BlockId> {
        match self {
            Terminator::Jump(b) => vec![*b],
            Terminator::Branch { then, otherwise, .. } | Terminator::TagTest { then, otherwise, .. } => {
                vec![*then, *otherwise]
            }
            Terminator::Return(_) => vec![],
        }
    }

    pub fn uses(&self) -> Vec<Temp> {
        match self {
            Terminator::Jump(_) => vec![],
            Terminator::Branch { cond, .. } => vec![*cond],
            Terminator::TagTest { value, .. } => vec![*value],
            Terminator::Return(t) => vec![*t],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub id: BlockId,
    pub instrs: Vec<Instr>,
    pub term: Terminator,
}

/// Fixed-size bit set over temps.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TempSet {
    words: Vec<u64>,
}

impl TempSet {
    pub fn new(n: u32) -> Self {
        TempSet { words: vec![0; (n as usize).div_ceil(64)] }
    }

    pub fn insert(&mut self, t: Temp) -> bool {
        let (w, b) = ((t / 64) as usize, t % 64);
        let was = self.words[w] & (1 << b) != 0;
        self.words[w] |= 1 << b;
        !was
    }

    pub fn remove(&mut self, t: Temp) {
        let (w, b) = ((t / 64) as usize, t % 64);
        self.words[w] &= !(1 << b);
    }

    pub fn contains(&self, t: Temp) -> bool {
        let (w, b) = ((t / 64) as usize, t % 64);
        self.words.get(w).is_some_and(|x| x & (1 << b) != 0)
    }

    pub fn union_with(&mut self, other: &TempSet) -> bool {
        let mut changed = false;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            let n = *a | *b;
            changed |= n != *a;
            *a = n;
        }
        changed
    }

    pub fn iter(&self) -> impl Iterator<Item = Temp> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &bits)| {
            (0..64).filter(move |b| bits & (1u64 << b) != 0).map(move |b| (w * 64 + b) as Temp)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrFunction {
    pub id: u32,
    pub name: String,
    /// `this` arrives in `this_temp`, arguments in `params`.
    pub this_temp: Temp,
    pub params: Vec<Temp>,
    pub num_temps: u32,
    pub num_cells: u32,
    /// Captured variables that are assigned after initialization; their
    /// facts do not survive calls.
    pub cell_mutable: Vec<bool>,
    pub blocks: Vec<Block>,
    pub live_in: Vec<TempSet>,
}

impl IrFunction {
    pub const ENTRY: BlockId = BlockId(0);

    pub fn block(&self, b: BlockId) -> &Block {
        &self.blocks[b.0 as usize]
    }

    pub fn instr_count(&self) -> usize {
        self.blocks.iter().map(|b| b.instrs.len() + 1).sum()
    }

    /// Standard backward liveness over temps.
    pub fn compute_liveness(&mut self) {
        let n = self.blocks.len();
        let mut uses = vec![TempSet::new(self.num_temps); n];
        let mut defs = vec![TempSet::new(self.num_temps); n];
        for (i, b) in self.blocks.iter().enumerate() {
            for t in b.term.uses() {
                uses[i].insert(t);
            }
            for ins in b.instrs.iter().rev() {
                if let Some(d) = ins.def() {
                    uses[i].remove(d);
                    defs[i].insert(d);
                }
                for t in ins.uses() {
                    uses[i].insert(t);
                }
            }
        }
        let mut live_in = uses.clone();
        let mut changed = true;
        while changed {
            changed = false;
            for i in (0..n).rev() {
                let mut out = TempSet::new(self.num_temps);
                for s in self.blocks[i].term.successors() {
                    out.union_with(&live_in[s.0 as usize]);
                }
                for d in defs[i].iter() {
                    // A def only kills liveness if the block does not read it first.
                    if !uses[i].contains(d) {
                        out.remove(d);
                    }
                }
                changed |= live_in[i].union_with(&out);
            }
        }
        self.live_in = live_in;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrProgram {
    /// Indexed by function id; the last entry is the top-level script.
    pub functions: Vec<IrFunction>,
    pub main: u32,
    pub num_sites: u32,
}

impl IrProgram {
    pub fn function(&self, id: u32) -> &IrFunction {
        &self.functions[id as usize]
    }

    pub fn dump(&self) -> String {
        let mut out = String::new();
        for f in &self.functions {
            let _ = writeln!(out, "function {} (fn{}):", f.name, f.id);
            for b in &f.blocks {
                let _ = writeln!(out, "  b{}:", b.id.0);
                for i in &b.instrs {
                    let _ = writeln!(out, "    {i}");
                }
                let _ = writeln!(out, "    {}", b.term);
            }
        }
        out
    }
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instr::Const { dst, value } => write!(f, "t{dst} = const {value:?}"),
            Instr::Move { dst, src } => write!(f, "t{dst} = t{src}"),
            Instr::IntOp { dst, op, lhs, rhs } => write!(f, "t{dst} = int t{lhs} {} t{rhs}", op.symbol()),
            Instr::Arith { dst, op, lhs, rhs } => write!(f, "t{dst} = generic t{lhs} {} t{rhs}", op.symbol()),
            Instr::Not { dst, src } => write!(f, "t{dst} = !t{src}"),
            Instr::GetProp { dst, obj, name, site } => write!(f, "t{dst} = get_prop t{obj}.{name} @{}", site.0),
            Instr::SetProp { obj, name, val, site } => write!(f, "set_prop t{obj}.{name} = t{val} @{}", site.0),
            Instr::GetGlobal { dst, name, site } => write!(f, "t{dst} = get_global {name} @{}", site.0),
            Instr::SetGlobal { name, val, site } => write!(f, "set_global {name} = t{val} @{}", site.0),
            Instr::DeclareGlobal { name } => write!(f, "declare_global {name}"),
            Instr::GetIndex { dst, arr, index } => write!(f, "t{dst} = t{arr}[t{index}]"),
            Instr::SetIndex { arr, index, val } => write!(f, "t{arr}[t{index}] = t{val}"),
            Instr::NewObject { dst, proto } => match proto {
                Some(p) => write!(f, "t{dst} = new_obj proto=t{p}"),
                None => write!(f, "t{dst} = new_obj"),
            },
            Instr::NewArray { dst, elems } => write!(f, "t{dst} = new_array {elems:?}"),
            Instr::MakeClosure { dst, func } => write!(f, "t{dst} = closure fn{func}"),
            Instr::LoadVar { dst, depth, index } => write!(f, "t{dst} = load_var {depth}:{index}"),
            Instr::StoreVar { depth, index, src } => write!(f, "store_var {depth}:{index} = t{src}"),
            Instr::Call { dst, callee, this, args } => {
                write!(f, "t{dst} = call t{callee}")?;
                if let Some(t) = this {
                    write!(f, " this=t{t}")?;
                }
                write!(f, " {args:?}")
            }
        }
    }
}

impl fmt::Display for Terminator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Terminator::Jump(b) => write!(f, "jump b{}", b.0),
            Terminator::Branch { cond, then, otherwise } => {
                write!(f, "branch t{cond} ? b{} : b{}", then.0, otherwise.0)
            }
            Terminator::TagTest { value, tag, then, otherwise } => {
                write!(f, "is_{tag} t{value} ? b{} : b{}", then.0, otherwise.0)
            }
            Terminator::Return(t) => write!(f, "return t{t}"),
        }
    }
}

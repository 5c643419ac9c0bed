//! The textual SSA IR: program model, parser, printer, SSA validation,
//! control-flow graphs and control dependence.
//!
//! Heap accesses are expressed as `(base, offset)` pairs. Fields and array
//! elements share that model; `loadidx`/`storeidx` carry a dynamic offset
//! held in an SSA name.

mod cdep;
mod cfg;
mod parse;
mod print;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use indexmap::IndexMap;

pub use cdep::{compute_control_dependence, CdEntry, ControlDependence};
pub use cfg::{build_cfg, immediate_dominators, Cfg, CfgError, DomTree};
pub use parse::{parse_program, parse_program_files, parse_unchecked, ParseError, ParseErrorKind};
pub use print::print_program;
pub use validate::{validate_ssa, Diagnostic, Severity};

/// A whole program: classes and functions in declaration order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Program {
    pub classes: IndexMap<String, ClassDecl>,
    pub functions: IndexMap<String, Function>,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.get(name)
    }

    pub fn function_index(&self, name: &str) -> Option<usize> {
        self.functions.get_index_of(name)
    }

    pub fn class(&self, name: &str) -> Option<&ClassDecl> {
        self.classes.get(name)
    }

    /// Total number of instructions across all functions.
    pub fn instruction_count(&self) -> usize {
        self.functions
            .values()
            .flat_map(|f| f.blocks.iter())
            .map(|b| b.insts.len())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Field {
    pub name: String,
    pub offset: i64,
}

#[derive(Debug, Clone)]
pub struct ClassDecl {
    pub name: String,
    pub parent: Option<String>,
    pub fields: Vec<Field>,
    /// Slots declared (or overridden) by this class itself.
    pub vtable: BTreeMap<u32, String>,
    pub line: u32,
}

impl PartialEq for ClassDecl {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.parent == other.parent
            && self.fields == other.fields
            && self.vtable == other.vtable
    }
}

impl Eq for ClassDecl {}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct FuncAttrs {
    pub entry: bool,
    pub event: bool,
}

#[derive(Debug, Clone)]
pub struct Function {
    pub name: String,
    pub params: Vec<String>,
    pub attrs: FuncAttrs,
    pub blocks: Vec<Block>,
    pub line: u32,
}

impl PartialEq for Function {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.params == other.params
            && self.attrs == other.attrs
            && self.blocks == other.blocks
    }
}

impl Eq for Function {}

impl Function {
    pub fn block_index(&self, label: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.label == label)
    }

    pub fn inst(&self, at: InstRef) -> &Inst {
        &self.blocks[at.block].insts[at.idx]
    }

    /// Iterates every instruction together with its position.
    pub fn insts(&self) -> impl Iterator<Item = (InstRef, &Inst)> {
        self.blocks.iter().enumerate().flat_map(|(b, block)| {
            block
                .insts
                .iter()
                .enumerate()
                .map(move |(i, inst)| (InstRef::new(b, i), inst))
        })
    }

    pub fn is_root(&self) -> bool {
        self.attrs.entry || self.attrs.event
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub label: String,
    pub insts: Vec<Inst>,
}

impl Block {
    pub fn terminator(&self) -> Option<&Inst> {
        self.insts.last().filter(|i| i.op.is_terminator())
    }
}

/// Position of an instruction inside a function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstRef {
    pub block: usize,
    pub idx: usize,
}

impl InstRef {
    pub fn new(block: usize, idx: usize) -> Self {
        Self { block, idx }
    }
}

/// A program-wide instruction position, printed as `func:block:idx`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Site {
    pub func: String,
    pub block: usize,
    pub idx: usize,
}

impl Site {
    pub fn new(func: impl Into<String>, at: InstRef) -> Self {
        Self {
            func: func.into(),
            block: at.block,
            idx: at.idx,
        }
    }

    pub fn inst_ref(&self) -> InstRef {
        InstRef::new(self.block, self.idx)
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.func, self.block, self.idx)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Constant {
    Int(i64),
    Str(String),
}

#[derive(Debug, Clone)]
pub struct Inst {
    pub result: Option<String>,
    pub op: Op,
    pub line: u32,
    /// Control predicates attached by the implicit-flow prepass.
    pub pseudo: Vec<String>,
}

impl PartialEq for Inst {
    fn eq(&self, other: &Self) -> bool {
        self.result == other.result && self.op == other.op && self.pseudo == other.pseudo
    }
}

impl Eq for Inst {}

impl Inst {
    pub fn new(result: Option<String>, op: Op) -> Self {
        Self {
            result,
            op,
            line: 0,
            pseudo: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    /// `(value, predecessor label)` pairs.
    Phi(Vec<(String, String)>),
    New(String),
    Const(Constant),
    Copy(String),
    Binop(String, String),
    Load { base: String, offset: i64 },
    Store { base: String, offset: i64, value: String },
    LoadIdx { base: String, index: String },
    StoreIdx { base: String, index: String, value: String },
    Call { callee: String, args: Vec<String> },
    VCall { receiver: String, slot: u32, args: Vec<String> },
    ICall { target: String, args: Vec<String> },
    FuncAddr(String),
    Br { cond: String, then_label: String, else_label: String },
    Jmp(String),
    Ret(Option<String>),
}

impl Op {
    pub fn is_terminator(&self) -> bool {
        matches!(self, Op::Br { .. } | Op::Jmp(_) | Op::Ret(_))
    }

    pub fn is_call(&self) -> bool {
        matches!(self, Op::Call { .. } | Op::VCall { .. } | Op::ICall { .. })
    }

    pub fn mnemonic(&self) -> &'static str {
        match self {
            Op::Phi(_) => "phi",
            Op::New(_) => "new",
            Op::Const(_) => "const",
            Op::Copy(_) => "copy",
            Op::Binop(..) => "binop",
            Op::Load { .. } => "load",
            Op::Store { .. } => "store",
            Op::LoadIdx { .. } => "loadidx",
            Op::StoreIdx { .. } => "storeidx",
            Op::Call { .. } => "call",
            Op::VCall { .. } => "vcall",
            Op::ICall { .. } => "icall",
            Op::FuncAddr(_) => "funcaddr",
            Op::Br { .. } => "br",
            Op::Jmp(_) => "jmp",
            Op::Ret(_) => "ret",
        }
    }

    /// SSA names read by this instruction, in operand order. Phi inputs are
    /// included even though they are read on the incoming edge.
    pub fn uses(&self) -> Vec<&str> {
        match self {
            Op::Phi(ins) => ins.iter().map(|(v, _)| v.as_str()).collect(),
            Op::New(_) | Op::Const(_) | Op::FuncAddr(_) | Op::Jmp(_) => Vec::new(),
            Op::Copy(a) => vec![a],
            Op::Binop(a, b) => vec![a, b],
            Op::Load { base, .. } => vec![base],
            Op::Store { base, value, .. } => vec![base, value],
            Op::LoadIdx { base, index } => vec![base, index],
            Op::StoreIdx { base, index, value } => vec![base, index, value],
            Op::Call { args, .. } => args.iter().map(String::as_str).collect(),
            Op::VCall { receiver, args, .. } => std::iter::once(receiver.as_str())
                .chain(args.iter().map(String::as_str))
                .collect(),
            Op::ICall { target, args } => std::iter::once(target.as_str())
                .chain(args.iter().map(String::as_str))
                .collect(),
            Op::Br { cond, .. } => vec![cond],
            Op::Ret(v) => v.iter().map(String::as_str).collect(),
        }
    }

    /// Labels this terminator may transfer control to.
    pub fn targets(&self) -> Vec<&str> {
        match self {
            Op::Br {
                then_label,
                else_label,
                ..
            } => vec![then_label, else_label],
            Op::Jmp(l) => vec![l],
            _ => Vec::new(),
        }
    }

    /// Arguments as passed to the callee's parameters; a virtual call's
    /// receiver binds to the first parameter.
    pub fn call_args(&self) -> Vec<&str> {
        match self {
            Op::Call { args, .. } | Op::ICall { args, .. } => {
                args.iter().map(String::as_str).collect()
            }
            Op::VCall { receiver, args, .. } => std::iter::once(receiver.as_str())
                .chain(args.iter().map(String::as_str))
                .collect(),
            _ => Vec::new(),
        }
    }
}

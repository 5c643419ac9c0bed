//! Small-step concrete interpreter used as a soundness oracle.
//!
//! Binops mix their operands deterministically, external calls return 0,
//! unset cells read as 0, and accesses through non-objects are skipped.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::ir::{Constant, Function, InstRef, Op, Program, Site};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Int(i64),
    Str(String),
    Obj(usize),
    Func(String),
}

impl Value {
    fn as_int(&self) -> i64 {
        match self {
            Value::Int(i) => *i,
            Value::Str(s) => s.len() as i64,
            Value::Obj(o) => *o as i64 + 1,
            Value::Func(f) => f.len() as i64,
        }
    }
}

fn mix(a: i64, b: i64) -> i64 {
    let x = (a as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (b as u64).rotate_left(23);
    ((x ^ (x >> 29)) % 7) as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("step budget exhausted")]
pub struct Timeout;

/// Observations from one run.
#[derive(Debug, Clone, Default)]
pub struct ConcreteState {
    pub steps: usize,
    /// Executed calls that landed in a program function.
    pub call_edges: BTreeSet<(String, InstRef, String)>,
    /// Run-time classes held by each `(function, name)`.
    pub classes: BTreeMap<(String, String), BTreeSet<String>>,
    /// Names of one function that held the same object at the same time.
    pub coinciding: BTreeSet<(String, String, String)>,
    /// For loads, the store in the same activation that last wrote the cell
    /// read, if any.
    pub load_writers: BTreeSet<(Site, Site)>,
    pub objects: Vec<String>,
    /// Values at return from the entry function.
    pub env: BTreeMap<String, Value>,
}

struct Machine<'p> {
    p: &'p Program,
    budget: usize,
    st: ConcreteState,
    heap: HashMap<(usize, i64), Value>,
    /// Last writer per cell: (store site, activation id).
    writer: HashMap<(usize, i64), (Site, usize)>,
    activations: usize,
}

fn resolve_slot(p: &Program, class: &str, slot: u32) -> Option<String> {
    let mut cur = Some(class.to_string());
    while let Some(c) = cur {
        let decl = p.classes.get(&c)?;
        if let Some(f) = decl.vtable.get(&slot) {
            return Some(f.clone());
        }
        cur = decl.parent.clone();
    }
    None
}

impl<'p> Machine<'p> {
    fn bind(&mut self, f: &Function, env: &mut HashMap<String, Value>, name: &str, v: Value) {
        if let Value::Obj(o) = v {
            self.st
                .classes
                .entry((f.name.clone(), name.to_string()))
                .or_default()
                .insert(self.st.objects[o].clone());
            for (other, ov) in env.iter() {
                if other != name && *ov == v {
                    let (a, b) = if other.as_str() < name {
                        (other.clone(), name.to_string())
                    } else {
                        (name.to_string(), other.clone())
                    };
                    self.st.coinciding.insert((f.name.clone(), a, b));
                }
            }
        }
        env.insert(name.to_string(), v);
    }

    fn call(&mut self, caller: &str, at: InstRef, callee: &str, args: Vec<Value>) -> Result<Value, Timeout> {
        let Some(f) = self.p.function(callee) else {
            return Ok(Value::Int(0));
        };
        self.st.call_edges.insert((caller.to_string(), at, callee.to_string()));
        self.exec(f, args).map(|(v, _)| v)
    }

    fn exec(&mut self, f: &'p Function, args: Vec<Value>) -> Result<(Value, HashMap<String, Value>), Timeout> {
        self.activations += 1;
        let act = self.activations;
        let mut env: HashMap<String, Value> = HashMap::new();
        for (i, prm) in f.params.iter().enumerate() {
            let v = args.get(i).cloned().unwrap_or(Value::Int(0));
            self.bind(f, &mut env, prm, v);
        }
        let get = |env: &HashMap<String, Value>, n: &str| env.get(n).cloned().unwrap_or(Value::Int(0));
        let mut block = 0usize;
        let mut prev: Option<usize> = None;
        loop {
            let b = &f.blocks[block];
            // Phis read their inputs simultaneously.
            let mut phis = Vec::new();
            for inst in &b.insts {
                let Op::Phi(ins) = &inst.op else { break };
                let from = prev.map(|p| f.blocks[p].label.as_str());
                let v = ins
                    .iter()
                    .find(|(_, l)| Some(l.as_str()) == from)
                    .map_or(Value::Int(0), |(x, _)| get(&env, x));
                phis.push((inst.result.clone().unwrap_or_default(), v));
            }
            for (r, v) in phis {
                self.bind(f, &mut env, &r, v);
            }
            let mut next = None;
            for (idx, inst) in b.insts.iter().enumerate() {
                self.st.steps += 1;
                if self.st.steps > self.budget {
                    return Err(Timeout);
                }
                let at = InstRef::new(block, idx);
                let site = || Site::new(&f.name, at);
                let val = match &inst.op {
                    Op::Phi(_) => continue,
                    Op::New(c) => {
                        self.st.objects.push(c.clone());
                        Some(Value::Obj(self.st.objects.len() - 1))
                    }
                    Op::Const(Constant::Int(i)) => Some(Value::Int(*i)),
                    Op::Const(Constant::Str(s)) => Some(Value::Str(s.clone())),
                    Op::Copy(x) => Some(get(&env, x)),
                    Op::Binop(x, y) => Some(Value::Int(mix(get(&env, x).as_int(), get(&env, y).as_int()))),
                    Op::Load { base, offset } => Some(self.load(&get(&env, base), *offset, site(), act)),
                    Op::LoadIdx { base, index } => {
                        let off = get(&env, index).as_int();
                        Some(self.load(&get(&env, base), off, site(), act))
                    }
                    Op::Store { base, offset, value } => {
                        self.store(&get(&env, base), *offset, get(&env, value), site(), act);
                        None
                    }
                    Op::StoreIdx { base, index, value } => {
                        let off = get(&env, index).as_int();
                        self.store(&get(&env, base), off, get(&env, value), site(), act);
                        None
                    }
                    Op::Call { callee, args } => {
                        let a = args.iter().map(|x| get(&env, x)).collect();
                        Some(self.call(&f.name, at, callee, a)?)
                    }
                    Op::VCall { receiver, slot, args } => {
                        let r = get(&env, receiver);
                        let target = match &r {
                            Value::Obj(o) => resolve_slot(self.p, &self.st.objects[*o], *slot),
                            _ => None,
                        };
                        match target {
                            Some(t) => {
                                let mut a = vec![r];
                                a.extend(args.iter().map(|x| get(&env, x)));
                                Some(self.call(&f.name, at, &t, a)?)
                            }
                            None => Some(Value::Int(0)),
                        }
                    }
                    Op::ICall { target, args } => match get(&env, target) {
                        Value::Func(t) => {
                            let a = args.iter().map(|x| get(&env, x)).collect();
                            Some(self.call(&f.name, at, &t, a)?)
                        }
                        _ => Some(Value::Int(0)),
                    },
                    Op::FuncAddr(g) => Some(Value::Func(g.clone())),
                    Op::Br {
                        cond,
                        then_label,
                        else_label,
                    } => {
                        let l = if get(&env, cond).as_int() != 0 { then_label } else { else_label };
                        next = f.block_index(l);
                        None
                    }
                    Op::Jmp(l) => {
                        next = f.block_index(l);
                        None
                    }
                    Op::Ret(v) => {
                        let r = v.as_ref().map_or(Value::Int(0), |x| get(&env, x));
                        return Ok((r, env));
                    }
                };
                if let (Some(r), Some(v)) = (&inst.result, val) {
                    self.bind(f, &mut env, r, v);
                }
            }
            let Some(n) = next else {
                return Ok((Value::Int(0), env));
            };
            prev = Some(block);
            block = n;
        }
    }

    fn load(&mut self, base: &Value, off: i64, site: Site, act: usize) -> Value {
        let Value::Obj(o) = base else { return Value::Int(0) };
        if let Some((w, a)) = self.writer.get(&(*o, off)) {
            if *a == act && w.func == site.func {
                self.st.load_writers.insert((site, w.clone()));
            }
        }
        self.heap.get(&(*o, off)).cloned().unwrap_or(Value::Int(0))
    }

    fn store(&mut self, base: &Value, off: i64, v: Value, site: Site, act: usize) {
        let Value::Obj(o) = base else { return };
        self.heap.insert((*o, off), v);
        self.writer.insert((*o, off), (site, act));
    }
}

/// Runs `entry` with every parameter bound to `Int(1)`.
pub fn interpret_entry(p: &Program, entry: &str, budget: usize) -> Result<ConcreteState, Timeout> {
    let f = p.function(entry).expect("entry function exists");
    let mut m = Machine {
        p,
        budget,
        st: ConcreteState::default(),
        heap: HashMap::new(),
        writer: HashMap::new(),
        activations: 0,
    };
    let args = vec![Value::Int(1); f.params.len()];
    let (_, env) = m.exec(f, args)?;
    m.st.env = env.into_iter().collect();
    Ok(m.st)
}

/// Runs the first entry function (or `main`) of the program.
pub fn interpret(p: &Program, budget: usize) -> Result<ConcreteState, Timeout> {
    let entry = p
        .functions
        .values()
        .find(|f| f.attrs.entry)
        .map_or("main", |f| f.name.as_str());
    interpret_entry(p, entry, budget)
}

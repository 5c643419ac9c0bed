//! Intraprocedural allocation-site points-to analysis and value numbering,
//! combined into a may/must alias oracle.

use std::collections::{BTreeSet, HashMap};

use crate::ir::{Cfg, Constant, Function, InstRef, Op};

/// Abstract memory location a name may hold.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AbsLoc {
    /// Object allocated by the `new` at this position.
    Site(InstRef),
    /// Address of a function taken with `funcaddr`.
    Func(String),
    /// Anything not created in this function: parameters, heap loads,
    /// call results.
    Unknown,
}

pub type LocSet = BTreeSet<AbsLoc>;

/// Flow-insensitive points-to sets of one function.
#[derive(Debug, Clone, Default)]
pub struct PointsTo {
    sets: HashMap<String, LocSet>,
}

static EMPTY: LocSet = BTreeSet::new();

impl PointsTo {
    /// Points-to set of `name`; empty for names that never hold an address.
    pub fn get(&self, name: &str) -> &LocSet {
        self.sets.get(name).unwrap_or(&EMPTY)
    }

    pub fn has_unknown(&self, name: &str) -> bool {
        self.get(name).contains(&AbsLoc::Unknown)
    }

    /// Functions whose address may be held by `name`.
    pub fn functions<'a>(&'a self, name: &str) -> impl Iterator<Item = &'a str> + 'a {
        self.get(name).iter().filter_map(|l| match l {
            AbsLoc::Func(f) => Some(f.as_str()),
            _ => None,
        })
    }
}

fn unknown() -> LocSet {
    BTreeSet::from([AbsLoc::Unknown])
}

/// Allocation-site points-to analysis: `new` yields its own site, copies and
/// phis union their inputs, and parameters, loads and call results are
/// unknown. Iterated to a fixpoint.
pub fn run_pointer_analysis(f: &Function) -> PointsTo {
    let mut sets: HashMap<String, LocSet> = HashMap::new();
    for p in &f.params {
        sets.insert(p.clone(), unknown());
    }
    let mut copies: Vec<(&str, Vec<&str>)> = Vec::new();
    for (at, inst) in f.insts() {
        let Some(r) = &inst.result else { continue };
        let init = match &inst.op {
            Op::New(_) => BTreeSet::from([AbsLoc::Site(at)]),
            Op::FuncAddr(g) => BTreeSet::from([AbsLoc::Func(g.clone())]),
            Op::Load { .. } | Op::LoadIdx { .. } => unknown(),
            op if op.is_call() => unknown(),
            Op::Copy(a) => {
                copies.push((r, vec![a.as_str()]));
                BTreeSet::new()
            }
            Op::Phi(ins) => {
                copies.push((r, ins.iter().map(|(v, _)| v.as_str()).collect()));
                BTreeSet::new()
            }
            _ => BTreeSet::new(),
        };
        sets.insert(r.clone(), init);
    }
    let mut changed = true;
    while changed {
        changed = false;
        for (r, srcs) in &copies {
            let mut add = LocSet::new();
            for s in srcs {
                if let Some(set) = sets.get(*s) {
                    add.extend(set.iter().cloned());
                }
            }
            let dst = sets.entry(r.to_string()).or_default();
            let before = dst.len();
            dst.extend(add);
            changed |= dst.len() != before;
        }
    }
    PointsTo { sets }
}

/// Per-function value numbers; names sharing a number hold equal values.
#[derive(Debug, Clone, Default)]
pub struct ValueNumbering {
    numbers: HashMap<String, u32>,
}

impl ValueNumbering {
    pub fn get(&self, name: &str) -> Option<u32> {
        self.numbers.get(name).copied()
    }

    pub fn same(&self, a: &str, b: &str) -> bool {
        a == b || matches!((self.get(a), self.get(b)), (Some(x), Some(y)) if x == y)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Key {
    Const(Constant),
    Binop(u32, u32),
    Load(u32, i64, u32),
    LoadIdx(u32, u32, u32),
    FuncAddr(String),
}

/// Hash-based value numbering over reverse postorder. Loads are keyed by a
/// memory epoch that advances at every store and call and is fresh per
/// block, so only loads with no intervening write are congruent.
pub fn value_number(f: &Function, cfg: &Cfg) -> ValueNumbering {
    let mut next = 0u32;
    let mut fresh = || {
        next += 1;
        next
    };
    let mut numbers: HashMap<String, u32> = HashMap::new();
    for p in &f.params {
        numbers.insert(p.clone(), fresh());
    }
    let mut table: HashMap<Key, u32> = HashMap::new();
    let mut epoch = 0u32;
    for &b in &cfg.rpo {
        epoch += 1;
        for inst in &f.blocks[b].insts {
            if matches!(
                inst.op,
                Op::Store { .. } | Op::StoreIdx { .. } | Op::Call { .. } | Op::VCall { .. } | Op::ICall { .. }
            ) {
                epoch += 1;
            }
            let Some(r) = &inst.result else { continue };
            let num = |n: &str| numbers.get(n).copied();
            let key = match &inst.op {
                Op::Const(c) => Some(Key::Const(c.clone())),
                Op::Binop(a, b) => num(a).zip(num(b)).map(|(x, y)| Key::Binop(x, y)),
                Op::Load { base, offset } => num(base).map(|x| Key::Load(x, *offset, epoch)),
                Op::LoadIdx { base, index } => {
                    num(base).zip(num(index)).map(|(x, y)| Key::LoadIdx(x, y, epoch))
                }
                Op::FuncAddr(g) => Some(Key::FuncAddr(g.clone())),
                _ => None,
            };
            let v = match (&inst.op, key) {
                (_, Some(k)) => *table.entry(k).or_insert_with(&mut fresh),
                (Op::Copy(a), None) => num(a).unwrap_or_else(&mut fresh),
                (Op::Phi(ins), None) => {
                    let first = num(&ins[0].0);
                    if first.is_some() && ins.iter().all(|(v, _)| num(v) == first) {
                        first.unwrap_or_default()
                    } else {
                        fresh()
                    }
                }
                _ => fresh(),
            };
            numbers.insert(r.clone(), v);
        }
    }
    // Names in dead blocks still get distinct numbers.
    for (_, inst) in f.insts() {
        if let Some(r) = &inst.result {
            if !numbers.contains_key(r) {
                numbers.insert(r.clone(), fresh());
            }
        }
    }
    ValueNumbering { numbers }
}

/// May/must alias queries for the names of one function.
#[derive(Debug, Clone)]
pub struct AliasOracle {
    pub pts: PointsTo,
    pub vn: ValueNumbering,
    in_cycle: Vec<bool>,
}

impl AliasOracle {
    pub fn new(f: &Function, cfg: &Cfg) -> Self {
        Self {
            pts: run_pointer_analysis(f),
            vn: value_number(f, cfg),
            in_cycle: cfg.blocks_in_cycles(),
        }
    }

    /// False only when the points-to sets are disjoint and neither holds
    /// `Unknown`.
    pub fn may_alias(&self, a: &str, b: &str) -> bool {
        if self.vn.same(a, b) {
            return true;
        }
        let (pa, pb) = (self.pts.get(a), self.pts.get(b));
        if pa.contains(&AbsLoc::Unknown) || pb.contains(&AbsLoc::Unknown) {
            return true;
        }
        pa.intersection(pb).next().is_some()
    }

    /// True when both names hold the same value: equal value numbers, or the
    /// same singleton allocation site executed at most once per call.
    pub fn must_alias(&self, a: &str, b: &str) -> bool {
        if self.vn.same(a, b) {
            return true;
        }
        let (pa, pb) = (self.pts.get(a), self.pts.get(b));
        if pa.len() != 1 || pa != pb {
            return false;
        }
        match pa.iter().next() {
            Some(AbsLoc::Site(at)) => !self.in_cycle[at.block],
            Some(AbsLoc::Func(_)) => true,
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{build_cfg, parse_program};

    fn oracle(text: &str) -> AliasOracle {
        let p = parse_program(text).unwrap();
        let f = p.functions.values().last().unwrap();
        AliasOracle::new(f, &build_cfg(f).unwrap())
    }

    const CLASSES: &str = "class B { }\n";

    #[test]
    fn new_and_phi_sets() {
        let o = oracle(&format!(
            "{CLASSES}func f(%c) {{\nL0: %a = new B\n br %c, L1, L2\nL1: %b = new B\n jmp L2\n\
             L2: %m = phi [%a, L0], [%b, L1]\n ret }}"
        ));
        assert_eq!(o.pts.get("a").len(), 1);
        assert_eq!(o.pts.get("m").len(), 2);
        assert!(!o.may_alias("a", "b"));
        assert!(o.may_alias("a", "m"));
        assert!(o.may_alias("a", "a"));
        assert!(o.may_alias("c", "a"));
        assert!(!o.must_alias("a", "b"));
    }

    #[test]
    fn copies_and_binops_share_numbers() {
        let o = oracle(
            "func f(%a, %b) {\nL0: %c = %a\n %x = binop %a, %b\n %y = binop %a, %b\n ret }",
        );
        assert!(o.must_alias("a", "c"));
        assert!(o.vn.same("x", "y"));
        assert!(!o.vn.same("a", "b"));
    }

    #[test]
    fn store_separates_loads() {
        let o = oracle(
            "func f(%p, %v) {\nL0: %x = load %p @ 0\n %y = load %p @ 0\n store %p @ 0, %v\n\
             %z = load %p @ 0\n ret }",
        );
        assert!(o.vn.same("x", "y"));
        assert!(!o.vn.same("y", "z"));
    }

    #[test]
    fn allocation_in_loop_is_not_must_alias() {
        let o = oracle(&format!(
            "{CLASSES}func f(%c) {{\nL0: %x = new B\n jmp L1\nL1: %p = phi [%x, L0], [%a, L1]\n\
             %a = new B\n br %c, L1, L2\nL2: ret }}"
        ));
        assert!(o.may_alias("a", "p"));
        assert!(!o.must_alias("a", "p"));
        let straight = oracle(&format!(
            "{CLASSES}func f() {{\nL0: %a = new B\n jmp L1\nL1: %d = phi [%a, L0]\n ret }}"
        ));
        assert!(straight.must_alias("a", "d"));
    }
}

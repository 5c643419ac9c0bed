//! Class hierarchy analysis and class type analysis.
//!
//! Type sets start at instantiation sites and flow along scalar SSA edges,
//! heap SSA edges and call bindings. Calls are resolved on the fly from the
//! roots, so only code reachable in the evolving call graph contributes.

mod hierarchy;

use std::collections::{BTreeSet, HashMap, VecDeque};

pub use hierarchy::{build_class_hierarchy, ClassHierarchy, ClassInfo, HierarchyError};

use crate::alias::PointsTo;
use crate::callgraph::{entry_functions, Resolver};
use crate::hssa::{HeapLoc, HssaForm, NodeKind};
use crate::ir::{InstRef, Op, Program};

static NO_TYPES: BTreeSet<String> = BTreeSet::new();

/// Possible classes of every SSA name and heap SSA node.
#[derive(Debug, Clone, Default)]
pub struct TypeMap {
    names: HashMap<String, HashMap<String, BTreeSet<String>>>,
    nodes: HashMap<String, HashMap<usize, BTreeSet<String>>>,
}

impl TypeMap {
    pub fn of_name(&self, func: &str, name: &str) -> &BTreeSet<String> {
        self.names
            .get(func)
            .and_then(|m| m.get(name))
            .unwrap_or(&NO_TYPES)
    }

    pub fn of_node(&self, func: &str, id: usize) -> &BTreeSet<String> {
        self.nodes
            .get(func)
            .and_then(|m| m.get(&id))
            .unwrap_or(&NO_TYPES)
    }

    /// `name: {A, B}` lines for every function with a non-empty set, in
    /// declaration order.
    pub fn dump(&self, p: &Program) -> String {
        let mut out = String::new();
        for f in p.functions.values() {
            let Some(m) = self.names.get(&f.name) else { continue };
            let mut entries: Vec<(&String, &BTreeSet<String>)> = m.iter().collect();
            entries.sort();
            for (name, set) in entries {
                let classes: Vec<&str> = set.iter().map(String::as_str).collect();
                out.push_str(&format!("{}:%{name} {{{}}}\n", f.name, classes.join(", ")));
            }
        }
        out
    }
}

/// Small class-index bitset with a symbolic top element.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct TSet {
    top: bool,
    bits: Vec<u64>,
}

impl TSet {
    fn single(c: usize) -> Self {
        let mut s = Self::default();
        s.insert(c);
        s
    }

    fn insert(&mut self, c: usize) -> bool {
        let (w, b) = (c / 64, c % 64);
        if self.bits.len() <= w {
            self.bits.resize(w + 1, 0);
        }
        let old = self.bits[w];
        self.bits[w] |= 1 << b;
        old != self.bits[w]
    }

    fn union_with(&mut self, other: &TSet) -> bool {
        let mut changed = !self.top && other.top;
        self.top |= other.top;
        if self.bits.len() < other.bits.len() {
            self.bits.resize(other.bits.len(), 0);
        }
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            let old = *a;
            *a |= b;
            changed |= old != *a;
        }
        changed
    }

    fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .flat_map(|(w, &word)| (0..64).filter(move |b| word >> b & 1 == 1).map(move |b| w * 64 + b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum VKey {
    Name(usize, usize),
    Node(usize, usize),
}

struct Graph {
    ids: HashMap<VKey, usize>,
    succs: Vec<Vec<usize>>,
    sets: Vec<TSet>,
}

impl Graph {
    fn id(&mut self, k: VKey) -> usize {
        if let Some(&i) = self.ids.get(&k) {
            return i;
        }
        let i = self.sets.len();
        self.ids.insert(k, i);
        self.succs.push(Vec::new());
        self.sets.push(TSet::default());
        i
    }
}

/// Per-function name interning.
struct Names {
    index: Vec<HashMap<String, usize>>,
}

impl Names {
    fn get(&mut self, fi: usize, name: &str) -> usize {
        let m = &mut self.index[fi];
        let n = m.len();
        *m.entry(name.to_string()).or_insert(n)
    }
}

struct Cta<'a> {
    p: &'a Program,
    hssa: &'a HashMap<String, HssaForm>,
    pts: &'a HashMap<String, PointsTo>,
    resolver: Resolver<'a>,
    class_ids: Vec<String>,
    g: Graph,
    names: Names,
    work: VecDeque<usize>,
    reachable: Vec<bool>,
    func_queue: VecDeque<usize>,
    bound: BTreeSet<(usize, InstRef, usize)>,
    /// Virtual call sites keyed by the receiver's node.
    watchers: HashMap<usize, Vec<(usize, InstRef)>>,
    instantiated: TSet,
}

impl<'a> Cta<'a> {
    fn name(&mut self, fi: usize, n: &str) -> usize {
        let ni = self.names.get(fi, n);
        self.g.id(VKey::Name(fi, ni))
    }

    fn node(&mut self, fi: usize, id: usize) -> usize {
        self.g.id(VKey::Node(fi, id))
    }

    fn seed(&mut self, v: usize, s: &TSet) {
        if self.g.sets[v].union_with(s) {
            self.work.push_back(v);
        }
    }

    fn edge(&mut self, from: usize, to: usize) {
        if self.g.succs[from].contains(&to) {
            return;
        }
        self.g.succs[from].push(to);
        let s = self.g.sets[from].clone();
        self.seed(to, &s);
    }

    fn class_id(&self, c: &str) -> usize {
        self.class_ids.iter().position(|x| x == c).unwrap_or(0)
    }

    fn hssa_of(&self, fi: usize) -> Option<&'a HssaForm> {
        self.hssa.get(self.p.functions[fi].name.as_str())
    }

    /// Intraprocedural edges of function `fi`.
    fn local_edges(&mut self, fi: usize) {
        let p = self.p;
        let f = &p.functions[fi];
        let h = self.hssa_of(fi);
        for (at, inst) in f.insts() {
            let Some(r) = &inst.result else {
                if let Op::Store { value, .. } | Op::StoreIdx { value, .. } = &inst.op {
                    if let Some(d) = h.and_then(|h| h.dphi_at(at)) {
                        let (v, n) = (self.name(fi, value), self.node(fi, d));
                        self.edge(v, n);
                    }
                }
                continue;
            };
            let rv = self.name(fi, r);
            match &inst.op {
                Op::Copy(a) => {
                    let av = self.name(fi, a);
                    self.edge(av, rv);
                }
                Op::Phi(ins) => {
                    for (a, _) in ins {
                        let av = self.name(fi, a);
                        self.edge(av, rv);
                    }
                }
                Op::Load { .. } | Op::LoadIdx { .. } => {
                    if let Some(u) = h.and_then(|h| h.uphi_at(at)) {
                        let un = self.node(fi, u);
                        self.edge(un, rv);
                    }
                }
                _ => {}
            }
        }
        if let Some(h) = h {
            for e in &h.edges {
                let (a, b) = (self.node(fi, e.from), self.node(fi, e.to));
                self.edge(a, b);
            }
        }
    }

    fn make_reachable(&mut self, fi: usize) {
        if std::mem::replace(&mut self.reachable[fi], true) {
            return;
        }
        self.func_queue.push_back(fi);
    }

    fn visit_function(&mut self, fi: usize) {
        let p = self.p;
        let f = &p.functions[fi];
        self.local_edges(fi);
        let top = TSet {
            top: true,
            bits: Vec::new(),
        };
        if f.is_root() {
            for prm in &f.params {
                let v = self.name(fi, prm);
                self.seed(v, &top);
            }
            if let Some(h) = self.hssa_of(fi) {
                let empty = PointsTo::default();
                let pts = self.pts.get(&f.name).unwrap_or(&empty);
                for n in h.external_uses() {
                    if let (NodeKind::UPhi, HeapLoc::Field { base, .. }) = (n.kind, &n.loc) {
                        if pts.has_unknown(base) {
                            let v = self.node(fi, n.id);
                            self.seed(v, &top);
                        }
                    }
                }
            }
        }
        let mut grew = false;
        for (at, inst) in f.insts() {
            match &inst.op {
                Op::New(c) => {
                    let s = TSet::single(self.class_id(c));
                    grew |= self.instantiated.union_with(&s);
                    let r = self.name(fi, inst.result.as_deref().unwrap_or_default());
                    self.seed(r, &s);
                }
                Op::Call { callee, .. } => {
                    if let Some(gi) = self.p.function_index(callee) {
                        self.bind(fi, at, gi);
                    }
                }
                Op::ICall { target, args } => {
                    let empty = PointsTo::default();
                    let pts = self.pts.get(&f.name).unwrap_or(&empty);
                    for g in self.resolver.indirect(target, args.len(), pts) {
                        if let Some(gi) = self.p.function_index(&g) {
                            self.bind(fi, at, gi);
                        }
                    }
                }
                Op::VCall { receiver, .. } => {
                    let rv = self.name(fi, receiver);
                    self.watchers.entry(rv).or_default().push((fi, at));
                    self.resolve_virtual(rv, fi, at);
                }
                _ => {}
            }
        }
        if grew {
            self.refresh_top_receivers();
        }
    }

    fn resolve_virtual(&mut self, rv: usize, fi: usize, at: InstRef) {
        let Op::VCall { slot, .. } = &self.p.functions[fi].inst(at).op else {
            return;
        };
        let set = &self.g.sets[rv];
        let classes: BTreeSet<usize> = if set.top {
            set.iter().chain(self.instantiated.iter()).collect()
        } else {
            set.iter().collect()
        };
        let names: Vec<&String> = classes.iter().map(|&c| &self.class_ids[c]).collect();
        for g in self.resolver.virtual_call(*slot, names) {
            if let Some(gi) = self.p.function_index(&g) {
                self.bind(fi, at, gi);
            }
        }
    }

    fn refresh_top_receivers(&mut self) {
        let sites: Vec<(usize, usize, InstRef)> = self
            .watchers
            .iter()
            .filter(|(rv, _)| self.g.sets[**rv].top)
            .flat_map(|(rv, ss)| ss.iter().map(move |&(fi, at)| (*rv, fi, at)))
            .collect();
        for (rv, fi, at) in sites {
            self.resolve_virtual(rv, fi, at);
        }
    }

    /// Connects a call site in `fi` to callee `gi`.
    fn bind(&mut self, fi: usize, at: InstRef, gi: usize) {
        if !self.bound.insert((fi, at, gi)) {
            return;
        }
        self.make_reachable(gi);
        let p = self.p;
        let caller = &p.functions[fi];
        let callee = &p.functions[gi];
        let inst = caller.inst(at);
        for (a, prm) in inst.op.call_args().into_iter().zip(&callee.params) {
            let (av, pv) = (self.name(fi, a), self.name(gi, prm));
            self.edge(av, pv);
        }
        if let Some(r) = &inst.result {
            let rv = self.name(fi, r);
            for (_, ri) in callee.insts() {
                if let Op::Ret(Some(v)) = &ri.op {
                    let vv = self.name(gi, v);
                    self.edge(vv, rv);
                }
            }
        }
        let (Some(hc), Some(hg)) = (self.hssa_of(fi), self.hssa_of(gi)) else {
            return;
        };
        if let Some(cu) = hc.call_uphi_at(at) {
            let cu = self.node(fi, cu);
            for n in hg.external_uses() {
                let t = self.node(gi, n.id);
                self.edge(cu, t);
            }
        }
        for cd in hc.call_dphis_at(at) {
            if hc.node(cd).arg.is_some() {
                continue;
            }
            let cd = self.node(fi, cd);
            for &d in &hg.exit_defs {
                let s = self.node(gi, d);
                self.edge(s, cd);
            }
        }
    }

    fn run(&mut self) {
        loop {
            if let Some(fi) = self.func_queue.pop_front() {
                self.visit_function(fi);
                continue;
            }
            let Some(v) = self.work.pop_front() else { break };
            let s = self.g.sets[v].clone();
            for i in 0..self.g.succs[v].len() {
                let w = self.g.succs[v][i];
                if self.g.sets[w].union_with(&s) {
                    self.work.push_back(w);
                }
            }
            if let Some(sites) = self.watchers.get(&v).cloned() {
                for (fi, at) in sites {
                    self.resolve_virtual(v, fi, at);
                }
            }
        }
    }
}

/// Least fixpoint of class type sets from the entry functions. Root
/// parameters and heap state reachable only from outside the program are
/// typed as every class instantiated in reachable code.
pub fn run_class_type_analysis(
    p: &Program,
    hier: &ClassHierarchy,
    hssa: &HashMap<String, HssaForm>,
    pts: &HashMap<String, PointsTo>,
) -> TypeMap {
    let mut cta = Cta {
        p,
        hssa,
        pts,
        resolver: Resolver::new(p, hier),
        class_ids: p.classes.keys().cloned().collect(),
        g: Graph {
            ids: HashMap::new(),
            succs: Vec::new(),
            sets: Vec::new(),
        },
        names: Names {
            index: vec![HashMap::new(); p.functions.len()],
        },
        work: VecDeque::new(),
        reachable: vec![false; p.functions.len()],
        func_queue: VecDeque::new(),
        bound: BTreeSet::new(),
        watchers: HashMap::new(),
        instantiated: TSet::default(),
    };
    for r in entry_functions(p).0 {
        if let Some(fi) = p.function_index(&r) {
            cta.make_reachable(fi);
        }
    }
    cta.run();

    let expand = |s: &TSet| -> BTreeSet<String> {
        let mut out: BTreeSet<String> = s.iter().map(|c| cta.class_ids[c].clone()).collect();
        if s.top {
            out.extend(cta.instantiated.iter().map(|c| cta.class_ids[c].clone()));
        }
        out
    };
    let mut names_by_idx: Vec<Vec<&str>> = vec![Vec::new(); p.functions.len()];
    for (fi, m) in cta.names.index.iter().enumerate() {
        let mut v = vec![""; m.len()];
        for (n, &i) in m {
            v[i] = n.as_str();
        }
        names_by_idx[fi] = v;
    }
    let mut map = TypeMap::default();
    for (key, &v) in &cta.g.ids {
        let set = expand(&cta.g.sets[v]);
        if set.is_empty() {
            continue;
        }
        match *key {
            VKey::Name(fi, ni) => {
                map.names
                    .entry(p.functions[fi].name.clone())
                    .or_default()
                    .insert(names_by_idx[fi][ni].to_string(), set);
            }
            VKey::Node(fi, id) => {
                map.nodes
                    .entry(p.functions[fi].name.clone())
                    .or_default()
                    .insert(id, set);
            }
        }
    }
    map
}

#[cfg(test)]
mod tests {
    use crate::ir::parse_program;
    use crate::pipeline::{Analysis, Options};

    fn types(src: &str, func: &str, name: &str) -> Vec<String> {
        let a = Analysis::run(parse_program(src).unwrap(), Options::default()).unwrap();
        a.types.of_name(func, name).iter().cloned().collect()
    }

    const CLASSES: &str = "class A { vtable { 0 : A::f } }\nclass B : A { vtable { 0 : B::f } }\n\
                           func A::f(%t) { L0: ret }\nfunc B::f(%t) { L0: ret }\n";

    #[test]
    fn phi_joins_allocation_classes() {
        let src = format!(
            "{CLASSES}func main(%c) entry {{ L0: br %c, L1, L2\nL1: %a = new A\n jmp L3\n\
             L2: %b = new B\n jmp L3\nL3: %m = phi [%a, L1], [%b, L2]\n vcall %m slot 0 ()\n ret }}"
        );
        assert_eq!(types(&src, "main", "m"), ["A", "B"]);
        let a = Analysis::run(parse_program(&src).unwrap(), Options::default()).unwrap();
        assert_eq!(a.call_graph.callees("main"), ["A::f", "B::f"]);
    }

    #[test]
    fn unreachable_allocations_do_not_contribute() {
        let src = format!(
            "{CLASSES}func main() entry {{ L0: %a = new A\n vcall %a slot 0 ()\n ret }}\n\
             func dead() {{ L0: %b = new B\n ret }}"
        );
        assert_eq!(types(&src, "A::f", "t"), ["A"]);
        assert!(types(&src, "dead", "b").is_empty());
    }

    #[test]
    fn classes_flow_through_the_heap() {
        let src = format!(
            "class H {{ field x @ 0 }}\n{CLASSES}func main() entry {{ L0: %h = new H\n %b = new B\n \
             store %h @ 0, %b\n %m = load %h @ 0\n ret }}"
        );
        assert_eq!(types(&src, "main", "m"), ["B"]);
    }
}

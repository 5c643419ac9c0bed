//! Call graphs: the conservative class-hierarchy graph used to bootstrap
//! side effects, and the refined graph built from class type sets and
//! function-pointer points-to sets.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt::Write;

use crate::alias::{AbsLoc, PointsTo};
use crate::class_analysis::{ClassHierarchy, TypeMap};
use crate::ir::{Diagnostic, InstRef, Op, Program, Severity, Site};

/// Default bound on the number of call edges in an enumerated path.
pub const DEFAULT_PATH_BOUND: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CallEdge {
    pub caller: String,
    pub site: InstRef,
    pub callee: String,
}

#[derive(Debug, Clone, Default)]
pub struct CallGraph {
    pub roots: Vec<String>,
    edges: Vec<CallEdge>,
    targets: HashMap<(String, InstRef), Vec<String>>,
    succs: HashMap<String, Vec<String>>,
    reachable: BTreeSet<String>,
}

impl CallGraph {
    fn from_edges(p: &Program, roots: Vec<String>, mut edges: Vec<CallEdge>) -> Self {
        let order = |f: &str| p.function_index(f).unwrap_or(usize::MAX);
        edges.sort_by(|a, b| {
            (order(&a.caller), &a.caller, a.site, &a.callee).cmp(&(
                order(&b.caller),
                &b.caller,
                b.site,
                &b.callee,
            ))
        });
        edges.dedup();
        let mut targets: HashMap<(String, InstRef), Vec<String>> = HashMap::new();
        let mut succs: HashMap<String, BTreeSet<String>> = HashMap::new();
        for e in &edges {
            targets
                .entry((e.caller.clone(), e.site))
                .or_default()
                .push(e.callee.clone());
            succs.entry(e.caller.clone()).or_default().insert(e.callee.clone());
        }
        let succs: HashMap<String, Vec<String>> = succs
            .into_iter()
            .map(|(k, v)| (k, v.into_iter().collect()))
            .collect();
        let mut reachable = BTreeSet::new();
        let mut queue: VecDeque<String> = roots.iter().cloned().collect();
        while let Some(f) = queue.pop_front() {
            if !reachable.insert(f.clone()) {
                continue;
            }
            for g in succs.get(&f).into_iter().flatten() {
                queue.push_back(g.clone());
            }
        }
        Self {
            roots,
            edges,
            targets,
            succs,
            reachable,
        }
    }

    pub fn edges(&self) -> &[CallEdge] {
        &self.edges
    }

    /// Callees of the call at `at` in `func`, sorted.
    pub fn targets(&self, func: &str, at: InstRef) -> &[String] {
        self.targets
            .get(&(func.to_string(), at))
            .map_or(&[], Vec::as_slice)
    }

    /// Distinct callees of `func`, sorted.
    pub fn callees(&self, func: &str) -> &[String] {
        self.succs.get(func).map_or(&[], Vec::as_slice)
    }

    /// Whether `func` (defined or external) is reachable from a root.
    pub fn is_reachable(&self, func: &str) -> bool {
        self.reachable.contains(func)
    }

    pub fn reachable(&self) -> &BTreeSet<String> {
        &self.reachable
    }

    /// One `caller -> callee @ site` line per edge.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let _ = writeln!(out, "{} -> {} @ {}", e.caller, e.callee, Site::new(&e.caller, e.site));
        }
        out
    }
}

/// Entry and event functions in declaration order, with a warning when
/// there are none.
pub fn entry_functions(p: &Program) -> (Vec<String>, Vec<Diagnostic>) {
    let roots: Vec<String> = p
        .functions
        .values()
        .filter(|f| f.is_root())
        .map(|f| f.name.clone())
        .collect();
    let mut diags = Vec::new();
    if roots.is_empty() {
        diags.push(Diagnostic {
            severity: Severity::Warning,
            func: String::new(),
            line: 0,
            message: "program has no entry or event functions".into(),
        });
    }
    (roots, diags)
}

/// Shared call-target resolution.
pub(crate) struct Resolver<'a> {
    p: &'a Program,
    hier: &'a ClassHierarchy,
    address_taken: BTreeSet<&'a str>,
}

impl<'a> Resolver<'a> {
    pub(crate) fn new(p: &'a Program, hier: &'a ClassHierarchy) -> Self {
        let address_taken = p
            .functions
            .values()
            .flat_map(|f| f.insts())
            .filter_map(|(_, i)| match &i.op {
                Op::FuncAddr(g) => Some(g.as_str()),
                _ => None,
            })
            .collect();
        Self {
            p,
            hier,
            address_taken,
        }
    }

    /// Targets of an indirect call: functions whose address flows into the
    /// pointer, plus address-taken functions of matching arity when the
    /// pointer may come from elsewhere.
    pub(crate) fn indirect(&self, target: &str, nargs: usize, pts: &PointsTo) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = pts.functions(target).map(str::to_string).collect();
        if pts.get(target).contains(&AbsLoc::Unknown) {
            for g in &self.address_taken {
                if self.p.function(g).is_some_and(|f| f.params.len() == nargs) {
                    out.insert(g.to_string());
                }
            }
        }
        out
    }

    /// Targets of a virtual call given the receiver's possible classes.
    pub(crate) fn virtual_call<'c>(
        &self,
        slot: u32,
        classes: impl IntoIterator<Item = &'c String>,
    ) -> BTreeSet<String> {
        classes
            .into_iter()
            .filter_map(|c| self.hier.resolve(c, slot))
            .map(str::to_string)
            .collect()
    }

    fn conservative(&self, op: &Op, pts: &PointsTo) -> BTreeSet<String> {
        match op {
            Op::Call { callee, .. } => BTreeSet::from([callee.clone()]),
            Op::VCall { slot, .. } => self
                .hier
                .all_implementations(*slot)
                .into_iter()
                .map(str::to_string)
                .collect(),
            Op::ICall { target, .. } => {
                let mut out: BTreeSet<String> = pts.functions(target).map(str::to_string).collect();
                if pts.get(target).contains(&AbsLoc::Unknown) {
                    out.extend(self.address_taken.iter().map(|g| g.to_string()));
                }
                out
            }
            _ => BTreeSet::new(),
        }
    }
}

/// Conservative call graph over every function: virtual calls reach every
/// implementation of the slot, unresolvable indirect calls reach every
/// address-taken function.
pub fn cha_call_graph(
    p: &Program,
    hier: &ClassHierarchy,
    pts: &HashMap<String, PointsTo>,
) -> CallGraph {
    let resolver = Resolver::new(p, hier);
    let empty = PointsTo::default();
    let mut edges = Vec::new();
    for f in p.functions.values() {
        let fp = pts.get(&f.name).unwrap_or(&empty);
        for (at, inst) in f.insts() {
            for callee in resolver.conservative(&inst.op, fp) {
                edges.push(CallEdge {
                    caller: f.name.clone(),
                    site: at,
                    callee,
                });
            }
        }
    }
    CallGraph::from_edges(p, entry_functions(p).0, edges)
}

/// Refined call graph from the roots: virtual calls resolve through the
/// receiver's class type set, indirect calls through points-to sets.
pub fn build_call_graph(
    p: &Program,
    hier: &ClassHierarchy,
    types: &TypeMap,
    pts: &HashMap<String, PointsTo>,
) -> CallGraph {
    let resolver = Resolver::new(p, hier);
    let empty = PointsTo::default();
    let roots = entry_functions(p).0;
    let mut edges = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut queue: VecDeque<String> = roots.iter().cloned().collect();
    while let Some(name) = queue.pop_front() {
        if !seen.insert(name.clone()) {
            continue;
        }
        let Some(f) = p.function(&name) else { continue };
        let fp = pts.get(&name).unwrap_or(&empty);
        for (at, inst) in f.insts() {
            let callees = match &inst.op {
                Op::Call { callee, .. } => BTreeSet::from([callee.clone()]),
                Op::VCall { receiver, slot, .. } => {
                    resolver.virtual_call(*slot, types.of_name(&name, receiver).iter())
                }
                Op::ICall { target, args } => resolver.indirect(target, args.len(), fp),
                _ => continue,
            };
            for callee in callees {
                queue.push_back(callee.clone());
                edges.push(CallEdge {
                    caller: name.clone(),
                    site: at,
                    callee,
                });
            }
        }
    }
    CallGraph::from_edges(p, roots, edges)
}

/// All simple call paths from `from` to `to` with at most `bound` edges, in
/// lexicographic order of their function sequences.
pub fn enumerate_paths(cg: &CallGraph, from: &str, to: &str, bound: usize) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut path = vec![from.to_string()];
    extend_paths(cg, to, bound, &mut path, &mut out);
    out
}

fn extend_paths(
    cg: &CallGraph,
    to: &str,
    bound: usize,
    path: &mut Vec<String>,
    out: &mut Vec<Vec<String>>,
) {
    let last = path.last().expect("path is never empty").clone();
    if last == to {
        out.push(path.clone());
        return;
    }
    if path.len() > bound {
        return;
    }
    for next in cg.callees(&last) {
        if path.contains(next) {
            continue;
        }
        path.push(next.clone());
        extend_paths(cg, to, bound, path, out);
        path.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alias::run_pointer_analysis;
    use crate::class_analysis::build_class_hierarchy;
    use crate::ir::parse_program;

    fn cha(text: &str) -> CallGraph {
        let p = parse_program(text).unwrap();
        let h = build_class_hierarchy(&p).unwrap();
        let pts = p
            .functions
            .values()
            .map(|f| (f.name.clone(), run_pointer_analysis(f)))
            .collect();
        cha_call_graph(&p, &h, &pts)
    }

    #[test]
    fn paths_in_a_chain_and_a_diamond() {
        let cg = cha(
            "func a() entry { L0: call @b()\n call @c()\n ret }\nfunc b() { L0: call @d()\n ret }\n\
             func c() { L0: call @d()\n ret }\nfunc d() { L0: ret }",
        );
        let paths = enumerate_paths(&cg, "a", "d", DEFAULT_PATH_BOUND);
        assert_eq!(paths, vec![vec!["a", "b", "d"], vec!["a", "c", "d"]]);
        assert_eq!(enumerate_paths(&cg, "a", "d", 1), Vec::<Vec<String>>::new());
        assert_eq!(enumerate_paths(&cg, "b", "d", 1), vec![vec!["b", "d"]]);
    }

    #[test]
    fn recursion_yields_simple_paths_only() {
        let cg = cha("func a() entry { L0: call @a()\n call @b()\n ret }\nfunc b() { L0: call @a()\n ret }");
        assert_eq!(enumerate_paths(&cg, "a", "b", 8), vec![vec!["a", "b"]]);
    }

    #[test]
    fn funcaddr_resolves_indirect_call() {
        let cg = cha(
            "func main() entry { L0: %f = funcaddr @g\n %r = icall %f()\n ret }\n\
             func g() { L0: ret }\nfunc h() { L0: ret }",
        );
        assert_eq!(cg.dump(), "main -> g @ main:0:1\n");
        assert!(!cg.is_reachable("h"));
    }

    #[test]
    fn no_roots_warns() {
        let p = parse_program("func f() { L0: ret }").unwrap();
        let (roots, diags) = entry_functions(&p);
        assert!(roots.is_empty());
        assert_eq!(diags.len(), 1);
    }
}

//! Brute-force reference implementations checked against the engine.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use crate::callgraph::CallGraph;
use crate::ir::{Cfg, Constant, Function, InstRef, Op, Program};
use crate::pipeline::Analysis;
use crate::rules::{Position, RuleSet};

fn reaches_exit_avoiding(cfg: &Cfg, from: usize, avoid: usize) -> bool {
    if from == avoid {
        return false;
    }
    let mut seen = vec![false; cfg.exit + 1];
    let mut stack = vec![from];
    while let Some(x) = stack.pop() {
        if x == cfg.exit {
            return true;
        }
        if x == avoid || seen[x] {
            continue;
        }
        seen[x] = true;
        stack.extend(cfg.succs[x].iter().copied());
    }
    false
}

/// Direct control dependence by definition: `a` controls `b` iff one
/// successor of `a` always reaches `b` before the exit and another can
/// reach the exit while avoiding `b`.
pub fn control_dependence_bruteforce(cfg: &Cfg) -> Vec<BTreeSet<usize>> {
    let n = cfg.num_blocks();
    let mut out = vec![BTreeSet::new(); n];
    for a in (0..n).filter(|&a| cfg.is_live(a)) {
        let succs: Vec<usize> = cfg.succs[a].clone();
        if succs.len() < 2 {
            continue;
        }
        for (b, deps) in out.iter_mut().enumerate().filter(|(b, _)| cfg.is_live(*b)) {
            let must = succs.iter().any(|&s| s != cfg.exit && !reaches_exit_avoiding(cfg, s, b));
            let bypass = succs.iter().any(|&s| reaches_exit_avoiding(cfg, s, b));
            if must && bypass {
                deps.insert(a);
            }
        }
    }
    out
}

/// Predicates of all direct and enclosing controllers of each block.
pub fn controlling_predicates(f: &Function, cfg: &Cfg) -> Vec<BTreeSet<String>> {
    let direct = control_dependence_bruteforce(cfg);
    let cond = |b: usize| match f.blocks[b].terminator().map(|t| &t.op) {
        Some(Op::Br { cond, .. }) => Some(cond.clone()),
        _ => None,
    };
    (0..direct.len())
        .map(|b| {
            let mut seen = BTreeSet::new();
            let mut work: Vec<usize> = direct[b].iter().copied().collect();
            while let Some(c) = work.pop() {
                if seen.insert(c) {
                    work.extend(direct[c].iter().copied());
                }
            }
            seen.into_iter().filter_map(cond).collect()
        })
        .collect()
}

/// Node of the oracle's flow graph: `(function, name)`, with heap nodes
/// named `H<id>`.
pub type FlowNode = (String, String);

fn v(f: &str, n: &str) -> FlowNode {
    (f.to_string(), n.to_string())
}

fn h(f: &str, id: usize) -> FlowNode {
    (f.to_string(), format!("H{id}"))
}

/// The explicit union of scalar, heap, pseudo-use and call edges, built
/// from the program text, the heap SSA overlay and the call graph.
pub fn flow_edges(a: &Analysis) -> BTreeSet<(FlowNode, FlowNode)> {
    let p = &a.program;
    let cg = &a.call_graph;
    let mut e = BTreeSet::new();
    for f in p.functions.values().filter(|f| cg.is_reachable(&f.name)) {
        let fname = f.name.as_str();
        let hs = &a.hssa[fname];
        let preds = a
            .options
            .implicit_flows
            .then(|| controlling_predicates(f, &a.facts[fname].cfg));
        for (at, inst) in f.insts() {
            let res = inst.result.as_deref();
            match &inst.op {
                Op::Copy(x) => {
                    if let Some(r) = res {
                        e.insert((v(fname, x), v(fname, r)));
                    }
                }
                Op::Phi(ins) => {
                    for (x, _) in ins {
                        e.insert((v(fname, x), v(fname, res.unwrap_or_default())));
                    }
                }
                Op::Binop(x, y) => {
                    for z in [x, y] {
                        e.insert((v(fname, z), v(fname, res.unwrap_or_default())));
                    }
                }
                Op::Load { .. } | Op::LoadIdx { .. } => {
                    if let (Some(u), Some(r)) = (hs.uphi_at(at), res) {
                        e.insert((h(fname, u), v(fname, r)));
                    }
                }
                Op::Store { value, .. } | Op::StoreIdx { value, .. } => {
                    if let Some(d) = hs.dphi_at(at) {
                        e.insert((v(fname, value), h(fname, d)));
                    }
                }
                Op::Call { callee, args } if p.function(callee).is_none() => {
                    for x in args {
                        if let Some(r) = res {
                            e.insert((v(fname, x), v(fname, r)));
                        }
                        for d in hs.call_dphis_at(at) {
                            e.insert((v(fname, x), h(fname, d)));
                        }
                    }
                }
                _ => {}
            }
            if let Some(preds) = &preds {
                let writes = matches!(
                    inst.op,
                    Op::Store { .. } | Op::StoreIdx { .. } | Op::Call { .. } | Op::VCall { .. } | Op::ICall { .. }
                );
                if res.is_none() && !writes {
                    continue;
                }
                let mut targets: Vec<FlowNode> = res.map(|r| v(fname, r)).into_iter().collect();
                targets.extend(hs.dphi_at(at).map(|d| h(fname, d)));
                targets.extend(hs.call_dphis_at(at).into_iter().map(|d| h(fname, d)));
                for pr in &preds[at.block] {
                    if Some(pr.as_str()) == res {
                        continue;
                    }
                    for t in &targets {
                        e.insert((v(fname, pr), t.clone()));
                    }
                }
            }
        }
        for edge in &hs.edges {
            e.insert((h(fname, edge.from), h(fname, edge.to)));
        }
    }
    for ce in cg.edges() {
        let (Some(caller), Some(callee)) = (p.function(&ce.caller), p.function(&ce.callee)) else {
            continue;
        };
        if !cg.is_reachable(&caller.name) {
            continue;
        }
        let inst = caller.inst(ce.site);
        for (x, prm) in inst.op.call_args().into_iter().zip(&callee.params) {
            e.insert((v(&caller.name, x), v(&callee.name, prm)));
        }
        if let Some(r) = &inst.result {
            for (_, ri) in callee.insts() {
                if let Op::Ret(Some(x)) = &ri.op {
                    e.insert((v(&callee.name, x), v(&caller.name, r)));
                }
            }
        }
        let (hc, hg) = (&a.hssa[&caller.name], &a.hssa[&callee.name]);
        if let Some(cu) = hc.call_uphi_at(ce.site) {
            for n in hg.nodes.iter().filter(|n| n.external) {
                e.insert((h(&caller.name, cu), h(&callee.name, n.id)));
            }
        }
        for cd in hc.call_dphis_at(ce.site) {
            if hc.node(cd).arg.is_none() {
                for &d in &hg.exit_defs {
                    e.insert((h(&callee.name, d), h(&caller.name, cd)));
                }
            }
        }
    }
    e
}

/// `(source site, sink site)` pairs found by breadth-first search from each
/// source over [`flow_edges`]. Sites print as `fn:block:idx`, or
/// `fn:param:i` for event parameters.
pub fn oracle_taint(a: &Analysis, rs: &RuleSet) -> BTreeSet<(String, String)> {
    let p = &a.program;
    let cg = &a.call_graph;
    let mut adj: HashMap<FlowNode, Vec<FlowNode>> = HashMap::new();
    for (x, y) in flow_edges(a) {
        adj.entry(x).or_default().push(y);
    }
    let site = |f: &str, at: InstRef| format!("{f}:{}:{}", at.block, at.idx);
    let mut out = BTreeSet::new();
    for rule in &rs.taint {
        // Seeds grouped by source site.
        let mut seeds: BTreeMap<String, Vec<FlowNode>> = BTreeMap::new();
        let mut sinks: Vec<(String, FlowNode)> = Vec::new();
        for f in p.functions.values().filter(|f| cg.is_reachable(&f.name)) {
            if rule.source.event && f.attrs.event && f.name == rule.source.func {
                if let Position::Param(i) = rule.source.pos {
                    if let Some(prm) = f.params.get(i) {
                        seeds.entry(format!("{}:param:{i}", f.name)).or_default().push(v(&f.name, prm));
                    }
                }
            }
        }
        for ce in cg.edges() {
            let Some(caller) = p.function(&ce.caller) else { continue };
            let inst = caller.inst(ce.site);
            let args = inst.op.call_args();
            if !rule.source.event && ce.callee == rule.source.func {
                let s = seeds.entry(site(&caller.name, ce.site)).or_default();
                match rule.source.pos {
                    Position::Return => s.extend(inst.result.as_deref().map(|r| v(&caller.name, r))),
                    Position::Param(i) => {
                        s.extend(args.get(i).map(|x| v(&caller.name, x)));
                        let hs = &a.hssa[&caller.name];
                        for d in hs.call_dphis_at(ce.site) {
                            if hs.node(d).arg == Some(i) {
                                s.push(h(&caller.name, d));
                            }
                        }
                    }
                }
            }
            for sk in rule.sinks.iter().filter(|sk| sk.func == ce.callee) {
                if let Some(x) = args.get(sk.param) {
                    sinks.push((site(&caller.name, ce.site), v(&caller.name, x)));
                }
            }
        }
        for (src, start) in seeds {
            let mut seen: BTreeSet<FlowNode> = start.iter().cloned().collect();
            let mut q: VecDeque<FlowNode> = start.into_iter().collect();
            while let Some(n) = q.pop_front() {
                for m in adj.get(&n).into_iter().flatten() {
                    if seen.insert(m.clone()) {
                        q.push_back(m.clone());
                    }
                }
            }
            for (sk, node) in &sinks {
                if seen.contains(node) {
                    out.insert((src.clone(), sk.clone()));
                }
            }
        }
    }
    out
}

/// Every simple call path from `from` to `to` with at most `bound` edges,
/// with the union of privileges checked by `checker` in functions on it.
pub fn oracle_privilege_paths(
    p: &Program,
    cg: &CallGraph,
    from: &str,
    to: &str,
    checker: &str,
    bound: usize,
) -> Vec<(Vec<String>, BTreeSet<String>)> {
    let mut adj: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for e in cg.edges() {
        adj.entry(e.caller.as_str()).or_default().insert(e.callee.as_str());
    }
    let checked = |func: &str| -> BTreeSet<String> {
        let Some(f) = p.function(func) else { return BTreeSet::new() };
        let consts: HashMap<&str, &Op> = f
            .insts()
            .filter_map(|(_, i)| i.result.as_deref().map(|r| (r, &i.op)))
            .collect();
        let mut s = BTreeSet::new();
        for (_, i) in f.insts() {
            if let Op::Call { callee, args } = &i.op {
                if callee == checker {
                    let mut name = args.first().map(String::as_str);
                    let mut lit = None;
                    while let Some(n) = name {
                        match consts.get(n) {
                            Some(Op::Copy(x)) if x != n => name = Some(x),
                            Some(Op::Const(Constant::Str(s))) => {
                                lit = Some(s.clone());
                                break;
                            }
                            _ => break,
                        }
                    }
                    s.insert(lit.unwrap_or_else(|| crate::privilege::UNKNOWN_PRIV.to_string()));
                }
            }
        }
        s
    };
    let mut out = Vec::new();
    let mut stack: Vec<Vec<&str>> = vec![vec![from]];
    while let Some(path) = stack.pop() {
        let last = *path.last().unwrap_or(&from);
        if last == to {
            let pvs = path.iter().flat_map(|f| checked(f)).collect();
            out.push((path.iter().map(|s| s.to_string()).collect(), pvs));
            continue;
        }
        if path.len() > bound {
            continue;
        }
        for &n in adj.get(last).into_iter().flatten() {
            if !path.contains(&n) {
                let mut q = path.clone();
                q.push(n);
                stack.push(q);
            }
        }
    }
    out.sort();
    out
}

/// Stores that can reach the load at `at` along some CFG path on which no
/// store to the same base name and static offset intervenes.
pub fn reaching_stores(f: &Function, cfg: &Cfg, at: InstRef) -> BTreeSet<InstRef> {
    let (lbase, loff) = match &f.inst(at).op {
        Op::Load { base, offset } => (base.as_str(), Some(*offset)),
        Op::LoadIdx { base, .. } => (base.as_str(), None),
        _ => return BTreeSet::new(),
    };
    let kills = |op: &Op| matches!(op, Op::Store { base, offset, .. } if base == lbase && Some(*offset) == loff);
    let mut out = BTreeSet::new();
    // Scan backward: (block, position before which to look).
    let mut seen = BTreeSet::new();
    let mut work = vec![(at.block, at.idx)];
    while let Some((b, upto)) = work.pop() {
        let mut killed = false;
        for idx in (0..upto).rev() {
            let op = &f.blocks[b].insts[idx].op;
            if matches!(op, Op::Store { .. } | Op::StoreIdx { .. }) {
                out.insert(InstRef::new(b, idx));
            }
            if kills(op) {
                killed = true;
                break;
            }
        }
        if killed {
            continue;
        }
        for &pb in &cfg.preds[b] {
            if cfg.is_live(pb) && seen.insert(pb) {
                work.push((pb, f.blocks[pb].insts.len()));
            }
        }
    }
    out
}

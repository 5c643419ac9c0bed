//! Interprocedural, context-insensitive taint propagation over scalar SSA,
//! heap SSA, pseudo-use and call-binding edges.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::fmt;

use crate::ir::{ControlDependence, Function, Op, Site};
use crate::pipeline::Analysis;
use crate::ranking;
use crate::rules::{PairRole, Position, RuleSet};

/// Attaches to every definition and heap write the predicates controlling
/// its block. Pseudo-uses only feed taint; execution is unchanged.
pub fn insert_pseudo_uses(f: &Function, cd: &ControlDependence) -> Function {
    let mut out = f.clone();
    for (b, block) in out.blocks.iter_mut().enumerate() {
        let preds = cd.predicates(b);
        if preds.is_empty() {
            continue;
        }
        for inst in &mut block.insts {
            let writes = matches!(
                inst.op,
                Op::Store { .. } | Op::StoreIdx { .. } | Op::Call { .. } | Op::VCall { .. } | Op::ICall { .. }
            );
            if inst.result.is_none() && !writes {
                continue;
            }
            inst.pseudo = preds
                .iter()
                .filter(|p| Some(*p) != inst.result.as_ref())
                .cloned()
                .collect();
        }
    }
    out
}

/// The two-point taint lattice with origin tags. Untainted is the top
/// element; meeting with Tainted yields Tainted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaintValue {
    Untainted,
    Tainted(BTreeSet<usize>),
}

pub fn taint_meet(a: &TaintValue, b: &TaintValue) -> TaintValue {
    match (a, b) {
        (TaintValue::Untainted, TaintValue::Untainted) => TaintValue::Untainted,
        (TaintValue::Tainted(x), TaintValue::Untainted) | (TaintValue::Untainted, TaintValue::Tainted(x)) => {
            TaintValue::Tainted(x.clone())
        }
        (TaintValue::Tainted(x), TaintValue::Tainted(y)) => TaintValue::Tainted(x.union(y).copied().collect()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HopKind {
    Scalar,
    Heap,
    Pseudo,
    Call,
}

impl fmt::Display for HopKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HopKind::Scalar => "scalar",
            HopKind::Heap => "heap",
            HopKind::Pseudo => "pseudo",
            HopKind::Call => "call",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TNode {
    Value { func: String, name: String },
    Heap { func: String, id: usize },
}

impl TNode {
    pub fn func(&self) -> &str {
        match self {
            TNode::Value { func, .. } | TNode::Heap { func, .. } => func,
        }
    }
}

impl fmt::Display for TNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TNode::Value { func, name } => write!(f, "{func}:%{name}"),
            TNode::Heap { func, id } => write!(f, "{func}:H{id}"),
        }
    }
}

/// Where taint enters: a call of a source function, or a parameter of an
/// event handler.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SourceSite {
    Inst(Site),
    Param { func: String, index: usize },
}

impl SourceSite {
    pub fn func(&self) -> &str {
        match self {
            SourceSite::Inst(s) => &s.func,
            SourceSite::Param { func, .. } => func,
        }
    }
}

impl fmt::Display for SourceSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceSite::Inst(s) => s.fmt(f),
            SourceSite::Param { func, index } => write!(f, "{func}:param:{index}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seed {
    pub rule: usize,
    pub site: SourceSite,
    pub node: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SinkPoint {
    pub rule: usize,
    pub site: Site,
    pub node: usize,
}

/// The explicit union edge set taint flows along.
#[derive(Debug, Clone, Default)]
pub struct TaintGraph {
    pub nodes: Vec<TNode>,
    /// `(from, to, kind)`, sorted and deduplicated.
    pub edges: Vec<(usize, usize, HopKind)>,
    pub seeds: Vec<Seed>,
    pub sinks: Vec<SinkPoint>,
    index: HashMap<TNode, usize>,
}

impl TaintGraph {
    fn intern(&mut self, n: TNode) -> usize {
        if let Some(&i) = self.index.get(&n) {
            return i;
        }
        self.nodes.push(n.clone());
        self.index.insert(n, self.nodes.len() - 1);
        self.nodes.len() - 1
    }

    fn value(&mut self, func: &str, name: &str) -> usize {
        self.intern(TNode::Value {
            func: func.to_string(),
            name: name.to_string(),
        })
    }

    fn heap(&mut self, func: &str, id: usize) -> usize {
        self.intern(TNode::Heap {
            func: func.to_string(),
            id,
        })
    }

    pub fn node_id(&self, n: &TNode) -> Option<usize> {
        self.index.get(n).copied()
    }

    /// Outgoing adjacency lists.
    pub fn successors(&self) -> Vec<Vec<(usize, HopKind)>> {
        let mut succ = vec![Vec::new(); self.nodes.len()];
        for &(a, b, k) in &self.edges {
            succ[a].push((b, k));
        }
        succ
    }
}

/// Builds the taint graph of the root-reachable part of the program.
pub fn build_taint_graph(a: &Analysis, rules: &RuleSet) -> TaintGraph {
    let p = &a.program;
    let cg = &a.call_graph;
    let mut g = TaintGraph::default();
    let mut edges: BTreeSet<(usize, usize, HopKind)> = BTreeSet::new();

    for f in p.functions.values().filter(|f| cg.is_reachable(&f.name)) {
        let fname = f.name.as_str();
        let h = &a.hssa[fname];
        for (at, inst) in f.insts() {
            let result = inst.result.as_deref().map(|r| g.value(fname, r));
            match &inst.op {
                Op::Copy(x) => {
                    let xv = g.value(fname, x);
                    edges.insert((xv, result.unwrap_or(xv), HopKind::Scalar));
                }
                Op::Phi(ins) => {
                    for (x, _) in ins {
                        let xv = g.value(fname, x);
                        if let Some(r) = result {
                            edges.insert((xv, r, HopKind::Scalar));
                        }
                    }
                }
                Op::Binop(x, y) => {
                    for v in [x, y] {
                        let vv = g.value(fname, v);
                        if let Some(r) = result {
                            edges.insert((vv, r, HopKind::Scalar));
                        }
                    }
                }
                Op::Load { .. } | Op::LoadIdx { .. } => {
                    if let (Some(u), Some(r)) = (h.uphi_at(at), result) {
                        let un = g.heap(fname, u);
                        edges.insert((un, r, HopKind::Heap));
                    }
                }
                Op::Store { value, .. } | Op::StoreIdx { value, .. } => {
                    if let Some(d) = h.dphi_at(at) {
                        let (vv, dn) = (g.value(fname, value), g.heap(fname, d));
                        edges.insert((vv, dn, HopKind::Heap));
                    }
                }
                Op::Call { callee, args } if p.function(callee).is_none() => {
                    let dphis = h.call_dphis_at(at);
                    for x in args {
                        let xv = g.value(fname, x);
                        if let Some(r) = result {
                            edges.insert((xv, r, HopKind::Scalar));
                        }
                        for &d in &dphis {
                            let dn = g.heap(fname, d);
                            edges.insert((xv, dn, HopKind::Heap));
                        }
                    }
                }
                _ => {}
            }
            if !inst.pseudo.is_empty() {
                let mut targets: Vec<usize> = result.into_iter().collect();
                for id in h.at(at) {
                    if h.node(*id).kind.is_def() {
                        targets.push(g.heap(fname, *id));
                    }
                }
                for pr in &inst.pseudo {
                    let pv = g.value(fname, pr);
                    for &t in &targets {
                        edges.insert((pv, t, HopKind::Pseudo));
                    }
                }
            }
        }
        for e in &h.edges {
            let (x, y) = (g.heap(fname, e.from), g.heap(fname, e.to));
            edges.insert((x, y, HopKind::Heap));
        }
    }

    for e in cg.edges() {
        let (Some(caller), Some(callee)) = (p.function(&e.caller), p.function(&e.callee)) else {
            continue;
        };
        if !cg.is_reachable(&caller.name) {
            continue;
        }
        let inst = caller.inst(e.site);
        for (x, prm) in inst.op.call_args().into_iter().zip(&callee.params) {
            let (xv, pv) = (g.value(&caller.name, x), g.value(&callee.name, prm));
            edges.insert((xv, pv, HopKind::Call));
        }
        if let Some(r) = &inst.result {
            let rv = g.value(&caller.name, r);
            for (_, ri) in callee.insts() {
                if let Op::Ret(Some(v)) = &ri.op {
                    let vv = g.value(&callee.name, v);
                    edges.insert((vv, rv, HopKind::Call));
                }
            }
        }
        let (hc, hg) = (&a.hssa[&caller.name], &a.hssa[&callee.name]);
        if let Some(cu) = hc.call_uphi_at(e.site) {
            let cu = g.heap(&caller.name, cu);
            for n in hg.external_uses() {
                let t = g.heap(&callee.name, n.id);
                edges.insert((cu, t, HopKind::Call));
            }
        }
        for cd in hc.call_dphis_at(e.site) {
            if hc.node(cd).arg.is_some() {
                continue;
            }
            let cd = g.heap(&caller.name, cd);
            for &d in &hg.exit_defs {
                let s = g.heap(&callee.name, d);
                edges.insert((s, cd, HopKind::Call));
            }
        }
    }

    // Seeds and sinks.
    for (ri, rule) in rules.taint.iter().enumerate() {
        if rule.source.event {
            if let (Some(f), Position::Param(i)) = (p.function(&rule.source.func), rule.source.pos) {
                if f.attrs.event && cg.is_reachable(&f.name) {
                    if let Some(prm) = f.params.get(i) {
                        let node = g.value(&f.name, prm);
                        g.seeds.push(Seed {
                            rule: ri,
                            site: SourceSite::Param {
                                func: f.name.clone(),
                                index: i,
                            },
                            node,
                        });
                    }
                }
            }
        }
        for e in cg.edges() {
            let Some(caller) = p.function(&e.caller) else { continue };
            let inst = caller.inst(e.site);
            let site = Site::new(&caller.name, e.site);
            if !rule.source.event && e.callee == rule.source.func {
                match rule.source.pos {
                    Position::Return => {
                        if let Some(r) = &inst.result {
                            let node = g.value(&caller.name, r);
                            g.seeds.push(Seed {
                                rule: ri,
                                site: SourceSite::Inst(site.clone()),
                                node,
                            });
                        }
                    }
                    Position::Param(i) => {
                        let h = &a.hssa[&caller.name];
                        let mut nodes: Vec<usize> = Vec::new();
                        if let Some(x) = inst.op.call_args().get(i) {
                            nodes.push(g.value(&caller.name, x));
                        }
                        for d in h.call_dphis_at(e.site) {
                            if h.node(d).arg == Some(i) {
                                nodes.push(g.heap(&caller.name, d));
                            }
                        }
                        for node in nodes {
                            g.seeds.push(Seed {
                                rule: ri,
                                site: SourceSite::Inst(site.clone()),
                                node,
                            });
                        }
                    }
                }
            }
            for s in &rule.sinks {
                if e.callee != s.func {
                    continue;
                }
                if let Some(x) = inst.op.call_args().get(s.param) {
                    let node = g.value(&caller.name, x);
                    g.sinks.push(SinkPoint {
                        rule: ri,
                        site: site.clone(),
                        node,
                    });
                }
            }
        }
    }
    g.sinks.sort_by(|x, y| (x.rule, &x.site, x.node).cmp(&(y.rule, &y.site, y.node)));
    g.sinks.dedup();
    g.edges = edges.into_iter().collect();
    g
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub rule: String,
    pub severity: u8,
    pub source: SourceSite,
    pub sink: Site,
    /// Graph nodes from the tainted source value to the sink argument.
    pub path: Vec<TNode>,
    /// Kind of each hop between consecutive `path` nodes.
    pub hops: Vec<HopKind>,
    pub call_distance: u8,
    pub control_distance: Option<usize>,
}

impl Finding {
    pub fn witness_len(&self) -> usize {
        self.hops.len()
    }

    pub fn has_pseudo_hop(&self) -> bool {
        self.hops.contains(&HopKind::Pseudo)
    }
}

/// Dense set of origin indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OriginSet {
    words: Vec<u64>,
}

impl OriginSet {
    fn empty(n: usize) -> Self {
        Self {
            words: vec![0; n.div_ceil(64)],
        }
    }

    pub fn contains(&self, i: usize) -> bool {
        self.words.get(i / 64).is_some_and(|w| w >> (i % 64) & 1 == 1)
    }

    fn insert(&mut self, i: usize) -> bool {
        let (w, b) = (i / 64, 1u64 << (i % 64));
        let fresh = self.words[w] & b == 0;
        self.words[w] |= b;
        fresh
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words
            .iter()
            .enumerate()
            .flat_map(|(wi, &w)| (0..64).filter(move |b| w >> b & 1 == 1).map(move |b| wi * 64 + b))
    }
}

/// Origin-tagged fixpoint over the taint graph. Each origin is a
/// `(rule, source site)` pair.
pub struct TaintSolution {
    pub graph: TaintGraph,
    pub origins: Vec<(usize, SourceSite)>,
    /// Origins reaching each node.
    pub state: Vec<OriginSet>,
}

pub fn solve(graph: TaintGraph) -> TaintSolution {
    let mut origin_ids: BTreeMap<(usize, SourceSite), usize> = BTreeMap::new();
    for s in &graph.seeds {
        let n = origin_ids.len();
        origin_ids.entry((s.rule, s.site.clone())).or_insert(n);
    }
    let mut origins = vec![(0, SourceSite::Param { func: String::new(), index: 0 }); origin_ids.len()];
    for (k, &v) in &origin_ids {
        origins[v] = k.clone();
    }
    let no = origins.len();
    let succ = graph.successors();
    let n = graph.nodes.len();
    let mut state = vec![OriginSet::empty(no); n];
    // Bits a node has gained but not yet pushed to its successors.
    let mut pending = vec![OriginSet::empty(no); n];
    let mut queued = vec![false; n];
    let mut work: VecDeque<usize> = VecDeque::new();
    for s in &graph.seeds {
        let o = origin_ids[&(s.rule, s.site.clone())];
        if state[s.node].insert(o) {
            pending[s.node].insert(o);
            if !queued[s.node] {
                queued[s.node] = true;
                work.push_back(s.node);
            }
        }
    }
    while let Some(x) = work.pop_front() {
        queued[x] = false;
        let delta = std::mem::replace(&mut pending[x], OriginSet::empty(no));
        for &(y, _) in &succ[x] {
            let mut grew = false;
            for (i, &d) in delta.words.iter().enumerate() {
                let add = d & !state[y].words[i];
                if add != 0 {
                    state[y].words[i] |= add;
                    pending[y].words[i] |= add;
                    grew = true;
                }
            }
            if grew && !queued[y] {
                queued[y] = true;
                work.push_back(y);
            }
        }
    }
    TaintSolution {
        graph,
        origins,
        state,
    }
}

/// Cheapest witness from any seed of origin `o` to every node it taints:
/// fewest pseudo-use hops first, then fewest hops, ties to lower node ids.
fn witness_tree(sol: &TaintSolution, succ: &[Vec<(usize, HopKind)>], o: usize) -> Vec<Option<(usize, HopKind)>> {
    let n = sol.graph.nodes.len();
    let mut dist: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut prev: Vec<Option<(usize, HopKind)>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    let (rule, site) = &sol.origins[o];
    for s in &sol.graph.seeds {
        if s.rule == *rule && &s.site == site && dist[s.node].is_none() {
            dist[s.node] = Some((0, 0));
            heap.push(Reverse((0usize, 0usize, s.node)));
        }
    }
    while let Some(Reverse((ps, hops, v))) = heap.pop() {
        if dist[v] != Some((ps, hops)) {
            continue;
        }
        for &(w, k) in &succ[v] {
            if !sol.state[w].contains(o) {
                continue;
            }
            let cand = (ps + usize::from(k == HopKind::Pseudo), hops + 1);
            let better = match dist[w] {
                None => true,
                Some(d) => cand < d || (cand == d && prev[w].is_some_and(|(u, _)| v < u)),
            };
            if better {
                let fresh = dist[w] != Some(cand);
                dist[w] = Some(cand);
                prev[w] = Some((v, k));
                if fresh {
                    heap.push(Reverse((cand.0, cand.1, w)));
                }
            }
        }
    }
    prev
}

/// Runs taint propagation and reports every (source, sink) pair, with a
/// witness and distance metrics.
pub fn run_taint_analysis(a: &Analysis, rules: &RuleSet) -> Vec<Finding> {
    let sol = solve(build_taint_graph(a, rules));
    let succ = sol.graph.successors();
    let mut trees: HashMap<usize, Vec<Option<(usize, HopKind)>>> = HashMap::new();
    let mut seen: BTreeSet<(usize, SourceSite, Site)> = BTreeSet::new();
    let mut out = Vec::new();
    for sink in &sol.graph.sinks {
        for o in sol.state[sink.node].iter() {
            let (rule, site) = &sol.origins[o];
            if *rule != sink.rule || !seen.insert((*rule, site.clone(), sink.site.clone())) {
                continue;
            }
            let tree = trees.entry(o).or_insert_with(|| witness_tree(&sol, &succ, o));
            let mut path = vec![sink.node];
            let mut hops = Vec::new();
            let mut cur = sink.node;
            while let Some((p, k)) = tree[cur] {
                path.push(p);
                hops.push(k);
                cur = p;
            }
            path.reverse();
            hops.reverse();
            let r = &rules.taint[*rule];
            let mut f = Finding {
                rule: r.name.clone(),
                severity: r.severity,
                source: site.clone(),
                sink: sink.site.clone(),
                path: path.into_iter().map(|i| sol.graph.nodes[i].clone()).collect(),
                hops,
                call_distance: 0,
                control_distance: None,
            };
            f.call_distance = ranking::call_distance(&f);
            f.control_distance = a
                .facts
                .get(f.sink.func.as_str())
                .and_then(|ff| ranking::control_distance(&f, &ff.cd));
            out.push(f);
        }
    }
    out.sort_by(|x, y| (&x.rule, &x.source, &x.sink).cmp(&(&y.rule, &y.source, &y.sink)));
    out
}

/// A producer finding and a consumer finding joined by a shared pair tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollusionReport {
    pub tag: String,
    pub producer: Finding,
    pub consumer: Finding,
}

/// Joins findings of two separately analyzed programs whose rules carry
/// `pair producer TAG` and `pair consumer TAG` respectively.
pub fn join_colluding(
    producer: (&[Finding], &RuleSet),
    consumer: (&[Finding], &RuleSet),
) -> Vec<CollusionReport> {
    let tag_of = |rs: &RuleSet, name: &str, role: PairRole| -> Option<String> {
        rs.taint
            .iter()
            .find(|r| r.name == name)
            .and_then(|r| r.pair.as_ref())
            .filter(|p| p.role == role)
            .map(|p| p.tag.clone())
    };
    let mut out = Vec::new();
    for pf in producer.0 {
        let Some(tag) = tag_of(producer.1, &pf.rule, PairRole::Producer) else { continue };
        for cf in consumer.0 {
            if tag_of(consumer.1, &cf.rule, PairRole::Consumer).as_deref() == Some(tag.as_str()) {
                out.push(CollusionReport {
                    tag: tag.clone(),
                    producer: pf.clone(),
                    consumer: cf.clone(),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meet_is_a_semilattice() {
        let t = TaintValue::Tainted(BTreeSet::from([1]));
        let u = TaintValue::Untainted;
        let vals = [u.clone(), t.clone()];
        assert_eq!(taint_meet(&u, &u), u);
        assert_eq!(taint_meet(&t, &u), t);
        for a in &vals {
            assert_eq!(taint_meet(a, a), *a);
            for b in &vals {
                assert_eq!(taint_meet(a, b), taint_meet(b, a));
                for c in &vals {
                    assert_eq!(
                        taint_meet(&taint_meet(a, b), c),
                        taint_meet(a, &taint_meet(b, c))
                    );
                }
            }
        }
    }
}

//! Heap SSA: dphi nodes at heap definitions, uphi nodes at heap uses, merge
//! nodes where differing definitions of possibly-aliased locations join, and
//! call nodes summarizing callee side effects.

use std::collections::{BTreeSet, HashMap};
use std::fmt::{self, Write};

use crate::alias::{AliasOracle, PointsTo};
use crate::callgraph::CallGraph;
use crate::ir::{Cfg, Function, InstRef, Op, Program};

/// Set of field offsets touched by a function; `any` covers every offset.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct OffsetSet {
    pub any: bool,
    pub offsets: BTreeSet<i64>,
}

impl OffsetSet {
    pub fn all() -> Self {
        Self {
            any: true,
            offsets: BTreeSet::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        !self.any && self.offsets.is_empty()
    }

    fn insert(&mut self, off: &Offset) {
        match off {
            Offset::Static(o) => {
                self.offsets.insert(*o);
            }
            Offset::Dynamic(_) | Offset::Any => self.any = true,
        }
    }

    /// Adds `other`; returns whether anything changed.
    pub fn union_with(&mut self, other: &OffsetSet) -> bool {
        let before = (self.any, self.offsets.len());
        self.any |= other.any;
        self.offsets.extend(other.offsets.iter().copied());
        before != (self.any, self.offsets.len())
    }

    fn covers(&self, off: &Offset) -> bool {
        match off {
            Offset::Static(o) => self.any || self.offsets.contains(o),
            Offset::Dynamic(_) | Offset::Any => !self.is_empty(),
        }
    }

    fn intersects(&self, other: &OffsetSet) -> bool {
        (self.any && !other.is_empty())
            || (other.any && !self.is_empty())
            || self.offsets.intersection(&other.offsets).next().is_some()
    }
}

impl fmt::Display for OffsetSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.any {
            return f.write_str("*");
        }
        let parts: Vec<String> = self.offsets.iter().map(i64::to_string).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// Heap loads and stores a function may perform, itself or through callees.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Effects {
    pub loads: OffsetSet,
    pub stores: OffsetSet,
}

impl Effects {
    pub fn is_empty(&self) -> bool {
        self.loads.is_empty() && self.stores.is_empty()
    }

    fn union_with(&mut self, other: &Effects) -> bool {
        let a = self.loads.union_with(&other.loads);
        let b = self.stores.union_with(&other.stores);
        a || b
    }
}

#[derive(Debug, Clone, Default)]
pub struct SideEffectMap {
    map: HashMap<String, Effects>,
}

impl SideEffectMap {
    /// Effects of a defined function; empty for unknown names.
    pub fn get(&self, func: &str) -> Effects {
        self.map.get(func).cloned().unwrap_or_default()
    }
}

/// Whether an argument passed to an external function may carry an address.
fn passes_address(pts: &PointsTo, arg: &str) -> bool {
    !pts.get(arg).is_empty()
}

/// Per-function heap effects, closed transitively over `cg`. External
/// callees receiving an address may write anything reachable from it;
/// indirect calls through an unknown pointer may do anything.
pub fn compute_side_effects(
    p: &Program,
    cg: &CallGraph,
    pts: &HashMap<String, PointsTo>,
) -> SideEffectMap {
    let empty = PointsTo::default();
    let mut map: HashMap<String, Effects> = HashMap::new();
    for f in p.functions.values() {
        let fp = pts.get(&f.name).unwrap_or(&empty);
        let mut e = Effects::default();
        for (_, inst) in f.insts() {
            match &inst.op {
                Op::Load { offset, .. } => e.loads.insert(&Offset::Static(*offset)),
                Op::LoadIdx { .. } => e.loads.insert(&Offset::Any),
                Op::Store { offset, .. } => e.stores.insert(&Offset::Static(*offset)),
                Op::StoreIdx { .. } => e.stores.insert(&Offset::Any),
                Op::Call { callee, args } if p.function(callee).is_none() => {
                    if args.iter().any(|a| passes_address(fp, a)) {
                        e.stores.insert(&Offset::Any);
                    }
                }
                Op::ICall { target, .. } if fp.has_unknown(target) => {
                    e.loads.insert(&Offset::Any);
                    e.stores.insert(&Offset::Any);
                }
                _ => {}
            }
        }
        map.insert(f.name.clone(), e);
    }
    let mut changed = true;
    while changed {
        changed = false;
        for f in p.functions.values() {
            let mut acc = map[&f.name].clone();
            for g in cg.callees(&f.name) {
                if let Some(ge) = map.get(g) {
                    acc.union_with(ge);
                }
            }
            if acc != map[&f.name] {
                map.insert(f.name.clone(), acc);
                changed = true;
            }
        }
    }
    SideEffectMap { map }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    DPhi,
    UPhi,
    MergePhi,
    CallUPhi,
    CallDPhi,
}

impl NodeKind {
    pub fn is_def(self) -> bool {
        matches!(self, NodeKind::DPhi | NodeKind::CallDPhi | NodeKind::MergePhi)
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeKind::DPhi => "dphi",
            NodeKind::UPhi => "uphi",
            NodeKind::MergePhi => "mergephi",
            NodeKind::CallUPhi => "call-uphi",
            NodeKind::CallDPhi => "call-dphi",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Offset {
    Static(i64),
    /// Indexed access; the index name takes part in must-alias checks.
    Dynamic(String),
    /// Every offset of the base.
    Any,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HeapLoc {
    Field { base: String, offset: Offset },
    /// Callee effects at a call site, or the union of a merge's inputs.
    Effects(OffsetSet),
}

impl fmt::Display for HeapLoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeapLoc::Field { base, offset } => match offset {
                Offset::Static(o) => write!(f, "%{base}@{o}"),
                Offset::Dynamic(i) => write!(f, "%{base}@%{i}"),
                Offset::Any => write!(f, "%{base}@*"),
            },
            HeapLoc::Effects(_) => f.write_str("*@*"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HNode {
    pub id: usize,
    pub kind: NodeKind,
    pub block: usize,
    /// Instruction index; `None` for merge nodes, which sit at the block head.
    pub idx: Option<usize>,
    pub loc: HeapLoc,
    /// For external-call dphis, the argument position they summarize.
    pub arg: Option<usize>,
    /// A use that may observe heap state from outside the function.
    pub external: bool,
}

impl HNode {
    pub fn inst_ref(&self) -> Option<InstRef> {
        self.idx.map(|i| InstRef::new(self.block, i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeLabel {
    Must,
    May,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HEdge {
    pub from: usize,
    pub to: usize,
    pub label: EdgeLabel,
}

/// Heap SSA overlay of one function. Node ids start at 1.
#[derive(Debug, Clone, Default)]
pub struct HssaForm {
    pub func: String,
    pub nodes: Vec<HNode>,
    /// Def-use edges sorted by `(from, to)`.
    pub edges: Vec<HEdge>,
    /// Real definitions reaching a `ret`.
    pub exit_defs: Vec<usize>,
    by_inst: HashMap<InstRef, Vec<usize>>,
}

impl HssaForm {
    pub fn node(&self, id: usize) -> &HNode {
        &self.nodes[id - 1]
    }

    /// Nodes attached to the instruction at `at`, in id order.
    pub fn at(&self, at: InstRef) -> &[usize] {
        self.by_inst.get(&at).map_or(&[], Vec::as_slice)
    }

    fn kind_at(&self, at: InstRef, kind: NodeKind) -> impl Iterator<Item = usize> + '_ {
        self.at(at)
            .iter()
            .copied()
            .filter(move |&id| self.node(id).kind == kind)
    }

    pub fn dphi_at(&self, at: InstRef) -> Option<usize> {
        self.kind_at(at, NodeKind::DPhi).next()
    }

    pub fn uphi_at(&self, at: InstRef) -> Option<usize> {
        self.kind_at(at, NodeKind::UPhi).next()
    }

    pub fn call_uphi_at(&self, at: InstRef) -> Option<usize> {
        self.kind_at(at, NodeKind::CallUPhi).next()
    }

    pub fn call_dphis_at(&self, at: InstRef) -> Vec<usize> {
        self.kind_at(at, NodeKind::CallDPhi).collect()
    }

    /// Uses that may read heap state written outside this function.
    pub fn external_uses(&self) -> impl Iterator<Item = &HNode> {
        self.nodes.iter().filter(|n| n.external)
    }

    pub fn inputs(&self, id: usize) -> Vec<usize> {
        self.edges.iter().filter(|e| e.to == id).map(|e| e.from).collect()
    }

    /// One `Hn kind fn:block:idx base@offset <- [H...]` line per node.
    pub fn dump(&self) -> String {
        let mut inputs: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len() + 1];
        for e in &self.edges {
            inputs[e.to].push(e.from);
        }
        let mut out = String::new();
        for n in &self.nodes {
            let idx = n.idx.map_or("head".to_string(), |i| i.to_string());
            let ins: Vec<String> = inputs[n.id].iter().map(|i| format!("H{i}")).collect();
            let _ = writeln!(
                out,
                "H{} {} {}:{}:{} {} <- [{}]",
                n.id,
                n.kind,
                self.func,
                n.block,
                idx,
                n.loc,
                ins.join(", ")
            );
        }
        out
    }
}

/// Def-use edges of a form, ordered by node id.
pub fn heap_def_use_chains(h: &HssaForm) -> Vec<HEdge> {
    h.edges.clone()
}

/// A heap access before ids are assigned.
struct Event {
    kind: NodeKind,
    block: usize,
    idx: usize,
    loc: HeapLoc,
    arg: Option<usize>,
}

struct Ctx<'a> {
    alias: &'a AliasOracle,
}

impl Ctx<'_> {
    fn offsets_overlap(a: &Offset, b: &Offset) -> bool {
        match (a, b) {
            (Offset::Static(x), Offset::Static(y)) => x == y,
            _ => true,
        }
    }

    fn conflict(&self, a: &HeapLoc, b: &HeapLoc) -> bool {
        match (a, b) {
            (
                HeapLoc::Field { base: b1, offset: o1 },
                HeapLoc::Field { base: b2, offset: o2 },
            ) => Self::offsets_overlap(o1, o2) && self.alias.may_alias(b1, b2),
            (HeapLoc::Field { offset, .. }, HeapLoc::Effects(s))
            | (HeapLoc::Effects(s), HeapLoc::Field { offset, .. }) => s.covers(offset),
            (HeapLoc::Effects(s1), HeapLoc::Effects(s2)) => s1.intersects(s2),
        }
    }

    /// Both locations denote the same single cell on every execution.
    fn same_cell(&self, a: &HeapLoc, b: &HeapLoc) -> bool {
        let (
            HeapLoc::Field { base: b1, offset: o1 },
            HeapLoc::Field { base: b2, offset: o2 },
        ) = (a, b)
        else {
            return false;
        };
        let offsets = match (o1, o2) {
            (Offset::Static(x), Offset::Static(y)) => x == y,
            (Offset::Dynamic(i), Offset::Dynamic(j)) => self.alias.vn.same(i, j),
            _ => false,
        };
        offsets && self.alias.must_alias(b1, b2)
    }
}

/// Builds the heap SSA form of `f`. Call nodes summarize the effects of the
/// callees `cg` gives for each site; calls to functions outside the program
/// get one dphi per address-carrying argument.
pub fn build_hssa(
    p: &Program,
    f: &Function,
    cfg: &Cfg,
    alias: &AliasOracle,
    se: &SideEffectMap,
    cg: &CallGraph,
) -> HssaForm {
    let ctx = Ctx { alias };
    let nb = f.blocks.len();

    // Heap events in program order.
    let mut events: Vec<Event> = Vec::new();
    let mut block_events: Vec<std::ops::Range<usize>> = vec![0..0; nb];
    for (b, block) in f.blocks.iter().enumerate() {
        let start = events.len();
        if cfg.is_live(b) {
            for (i, inst) in block.insts.iter().enumerate() {
                push_events(p, f, alias, se, cg, InstRef::new(b, i), &inst.op, &mut events);
            }
        }
        block_events[b] = start..events.len();
    }

    // Reaching real definitions, with strong kills by dphis of the same cell.
    let transfer = |set: &mut BTreeSet<usize>, e: usize, must_only: bool| {
        let ev = &events[e];
        match ev.kind {
            NodeKind::DPhi => {
                set.retain(|&k| {
                    !(events[k].kind == NodeKind::DPhi && ctx.same_cell(&ev.loc, &events[k].loc))
                });
                set.insert(e);
            }
            NodeKind::CallDPhi if !must_only => {
                set.insert(e);
            }
            _ => {}
        }
    };
    let preds = cfg.live_preds();
    let mut out: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); nb];
    let mut inn: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); nb];
    let mut changed = true;
    while changed {
        changed = false;
        for &b in &cfg.rpo {
            let mut set = BTreeSet::new();
            for &pb in &preds[b] {
                set.extend(out[pb].iter().copied());
            }
            inn[b] = set.clone();
            for e in block_events[b].clone() {
                transfer(&mut set, e, false);
            }
            if set != out[b] {
                out[b] = set;
                changed = true;
            }
        }
    }
    // Dphis defined on every path (for the external flag of uses).
    let mut must_out: Vec<Option<BTreeSet<usize>>> = vec![None; nb];
    let mut must_in: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); nb];
    changed = true;
    while changed {
        changed = false;
        for &b in &cfg.rpo {
            let mut set: Option<BTreeSet<usize>> = if b == 0 { Some(BTreeSet::new()) } else { None };
            for &pb in &preds[b] {
                if let Some(o) = &must_out[pb] {
                    set = Some(match set {
                        None => o.clone(),
                        Some(s) => s.intersection(o).copied().collect(),
                    });
                }
            }
            let mut set = set.unwrap_or_default();
            must_in[b] = set.clone();
            for e in block_events[b].clone() {
                transfer(&mut set, e, true);
            }
            if must_out[b].as_ref() != Some(&set) {
                must_out[b] = Some(set);
                changed = true;
            }
        }
    }

    // Merge nodes: at each join, groups of conflicting definitions that do
    // not all arrive along every incoming edge.
    let is_join = |b: usize| preds[b].len() >= 2 || (b == 0 && !preds[b].is_empty());
    let mut merges: Vec<Vec<Vec<usize>>> = vec![Vec::new(); nb];
    let mut all_path: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); nb];
    for &b in &cfg.rpo {
        if !is_join(b) {
            continue;
        }
        let mut a: Option<BTreeSet<usize>> = if b == 0 { Some(BTreeSet::new()) } else { None };
        for &pb in &preds[b] {
            a = Some(match a {
                None => out[pb].clone(),
                Some(s) => s.intersection(&out[pb]).copied().collect(),
            });
        }
        let a = a.unwrap_or_default();
        let u: Vec<usize> = inn[b].iter().copied().collect();
        let mut comp: Vec<usize> = (0..u.len()).collect();
        fn find(c: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while c[r] != r {
                r = c[r];
            }
            c[x] = r;
            r
        }
        for i in 0..u.len() {
            for j in i + 1..u.len() {
                if ctx.conflict(&events[u[i]].loc, &events[u[j]].loc) {
                    let (ri, rj) = (find(&mut comp, i), find(&mut comp, j));
                    if ri != rj {
                        comp[ri.max(rj)] = ri.min(rj);
                    }
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut root_group: HashMap<usize, usize> = HashMap::new();
        for (i, &ui) in u.iter().enumerate() {
            let r = find(&mut comp, i);
            let g = *root_group.entry(r).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(ui);
        }
        for g in groups {
            if g.len() >= 2 && !g.iter().all(|d| a.contains(d)) {
                merges[b].push(g);
            }
        }
        all_path[b] = a;
    }

    // Final ids: per block, merges first, then events in order.
    let mut nodes: Vec<HNode> = Vec::new();
    let mut event_id = vec![0usize; events.len()];
    let mut merge_ids: Vec<Vec<usize>> = vec![Vec::new(); nb];
    for b in 0..nb {
        for g in &merges[b] {
            let mut offs = OffsetSet::default();
            for &d in g {
                match &events[d].loc {
                    HeapLoc::Field { offset, .. } => offs.insert(offset),
                    HeapLoc::Effects(s) => {
                        offs.union_with(s);
                    }
                }
            }
            nodes.push(HNode {
                id: nodes.len() + 1,
                kind: NodeKind::MergePhi,
                block: b,
                idx: None,
                loc: HeapLoc::Effects(offs),
                arg: None,
                external: false,
            });
            merge_ids[b].push(nodes.len());
        }
        for e in block_events[b].clone() {
            let ev = &events[e];
            nodes.push(HNode {
                id: nodes.len() + 1,
                kind: ev.kind,
                block: ev.block,
                idx: Some(ev.idx),
                loc: ev.loc.clone(),
                arg: ev.arg,
                external: false,
            });
            event_id[e] = nodes.len();
        }
    }

    // Visible definitions: real defs and merges, walked in RPO.
    #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
    enum Vis {
        Def(usize),
        Merge(usize, usize),
    }
    // Definitions reaching use `e` along some path without passing a dphi
    // that overwrites exactly the cell `e` reads.
    let event_block_end = |b: usize| block_events[b].end;
    let defs_before_use = |e: usize| -> BTreeSet<usize> {
        let ev = &events[e];
        let mut found = BTreeSet::new();
        let mut seen = BTreeSet::new();
        let mut work = vec![(ev.block, e)];
        while let Some((b, upto)) = work.pop() {
            let mut killed = false;
            for k in (block_events[b].start..upto).rev() {
                let d = &events[k];
                if matches!(d.kind, NodeKind::DPhi | NodeKind::CallDPhi) {
                    found.insert(k);
                    if d.kind == NodeKind::DPhi && ctx.same_cell(&d.loc, &ev.loc) {
                        killed = true;
                        break;
                    }
                }
            }
            if !killed {
                for &pb in &preds[b] {
                    if seen.insert(pb) {
                        work.push((pb, event_block_end(pb)));
                    }
                }
            }
        }
        found
    };
    let mut edges: BTreeSet<HEdge> = BTreeSet::new();
    let mut vout: Vec<Vec<Vis>> = vec![Vec::new(); nb];
    for &b in &cfg.rpo {
        let mut vis: Vec<Vis> = if is_join(b) {
            let covered: BTreeSet<usize> = merges[b].iter().flatten().copied().collect();
            let mut v: Vec<Vis> = inn[b]
                .iter()
                .filter(|d| all_path[b].contains(d) || !covered.contains(d))
                .map(|&d| Vis::Def(d))
                .collect();
            for (k, g) in merges[b].iter().enumerate() {
                for &d in g {
                    edges.insert(HEdge {
                        from: event_id[d],
                        to: merge_ids[b][k],
                        label: EdgeLabel::May,
                    });
                }
                v.push(Vis::Merge(b, k));
            }
            v
        } else if let Some(&pb) = preds[b].first() {
            vout[pb].clone()
        } else {
            Vec::new()
        };
        let mut reach = inn[b].clone();
        let mut must = must_in[b].clone();
        for e in block_events[b].clone() {
            let ev = &events[e];
            match ev.kind {
                NodeKind::DPhi | NodeKind::CallDPhi => {
                    transfer(&mut reach, e, false);
                    transfer(&mut must, e, true);
                    vis.retain(|v| match *v {
                        Vis::Def(d) => reach.contains(&d),
                        Vis::Merge(mb, k) => merges[mb][k].iter().any(|d| reach.contains(d)),
                    });
                    vis.push(Vis::Def(e));
                }
                NodeKind::UPhi | NodeKind::CallUPhi => {
                    let to = event_id[e];
                    let live = defs_before_use(e);
                    let feeds = |d: usize| live.contains(&d) && ctx.conflict(&events[d].loc, &ev.loc);
                    // A same-cell dphi is a must source only when no other
                    // real definition of a conflicting location is visible.
                    let direct = vis.iter().filter(|v| matches!(v, Vis::Def(d) if feeds(*d))).count();
                    for v in &vis {
                        match *v {
                            Vis::Def(d) => {
                                if feeds(d) {
                                    let label = if direct == 1
                                        && events[d].kind == NodeKind::DPhi
                                        && ctx.same_cell(&events[d].loc, &ev.loc)
                                    {
                                        EdgeLabel::Must
                                    } else {
                                        EdgeLabel::May
                                    };
                                    edges.insert(HEdge {
                                        from: event_id[d],
                                        to,
                                        label,
                                    });
                                }
                            }
                            Vis::Merge(mb, k) => {
                                if merges[mb][k].iter().any(|&d| feeds(d)) {
                                    edges.insert(HEdge {
                                        from: merge_ids[mb][k],
                                        to,
                                        label: EdgeLabel::May,
                                    });
                                }
                            }
                        }
                    }
                    nodes[to - 1].external = ev.kind == NodeKind::CallUPhi
                        || !must.iter().any(|&d| ctx.same_cell(&events[d].loc, &ev.loc));
                }
                NodeKind::MergePhi => {}
            }
        }
        vout[b] = vis;
    }

    let mut exit_defs = BTreeSet::new();
    for &b in &cfg.rpo {
        if matches!(f.blocks[b].terminator().map(|t| &t.op), Some(Op::Ret(_))) {
            exit_defs.extend(out[b].iter().map(|&e| event_id[e]));
        }
    }

    let mut by_inst: HashMap<InstRef, Vec<usize>> = HashMap::new();
    for n in &nodes {
        if let Some(at) = n.inst_ref() {
            by_inst.entry(at).or_default().push(n.id);
        }
    }
    HssaForm {
        func: f.name.clone(),
        nodes,
        edges: edges.into_iter().collect(),
        exit_defs: exit_defs.into_iter().collect(),
        by_inst,
    }
}

#[allow(clippy::too_many_arguments)]
fn push_events(
    p: &Program,
    f: &Function,
    alias: &AliasOracle,
    se: &SideEffectMap,
    cg: &CallGraph,
    at: InstRef,
    op: &Op,
    events: &mut Vec<Event>,
) {
    let mut push = |kind, loc, arg| {
        events.push(Event {
            kind,
            block: at.block,
            idx: at.idx,
            loc,
            arg,
        })
    };
    let field = |base: &str, offset: Offset| HeapLoc::Field {
        base: base.to_string(),
        offset,
    };
    match op {
        Op::Store { base, offset, .. } => push(NodeKind::DPhi, field(base, Offset::Static(*offset)), None),
        Op::StoreIdx { base, index, .. } => {
            push(NodeKind::DPhi, field(base, Offset::Dynamic(index.clone())), None)
        }
        Op::Load { base, offset } => push(NodeKind::UPhi, field(base, Offset::Static(*offset)), None),
        Op::LoadIdx { base, index } => {
            push(NodeKind::UPhi, field(base, Offset::Dynamic(index.clone())), None)
        }
        Op::Call { callee, args } if p.function(callee).is_none() => {
            let mut seen = BTreeSet::new();
            for (i, a) in args.iter().enumerate() {
                if passes_address(&alias.pts, a) && seen.insert(a) {
                    push(NodeKind::CallDPhi, field(a, Offset::Any), Some(i));
                }
            }
        }
        Op::Call { .. } | Op::VCall { .. } | Op::ICall { .. } => {
            let mut eff = Effects::default();
            for g in cg.targets(&f.name, at) {
                eff.union_with(&se.get(g));
            }
            if let Op::ICall { target, .. } = op {
                if alias.pts.has_unknown(target) {
                    eff.loads = OffsetSet::all();
                    eff.stores = OffsetSet::all();
                }
            }
            if !eff.loads.is_empty() {
                push(NodeKind::CallUPhi, HeapLoc::Effects(eff.loads), None);
            }
            if !eff.stores.is_empty() {
                push(NodeKind::CallDPhi, HeapLoc::Effects(eff.stores), None);
            }
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alias::run_pointer_analysis;
    use crate::callgraph::cha_call_graph;
    use crate::class_analysis::build_class_hierarchy;
    use crate::ir::{build_cfg, parse_program};

    fn forms(text: &str) -> (Program, HashMap<String, HssaForm>, SideEffectMap) {
        let p = parse_program(text).unwrap();
        let h = build_class_hierarchy(&p).unwrap();
        let pts: HashMap<String, PointsTo> = p
            .functions
            .values()
            .map(|f| (f.name.clone(), run_pointer_analysis(f)))
            .collect();
        let cg = cha_call_graph(&p, &h, &pts);
        let se = compute_side_effects(&p, &cg, &pts);
        let mut out = HashMap::new();
        for f in p.functions.values() {
            let cfg = build_cfg(f).unwrap();
            let alias = AliasOracle::new(f, &cfg);
            out.insert(f.name.clone(), build_hssa(&p, f, &cfg, &alias, &se, &cg));
        }
        (p, out, se)
    }

    #[test]
    fn store_then_load_is_one_must_edge() {
        let (_, h, _) = forms("func f(%p, %v) entry { L0: store %p @ 0, %v\n %x = load %p @ 0\n ret }");
        let h = &h["f"];
        assert_eq!(
            h.edges,
            vec![HEdge {
                from: 1,
                to: 2,
                label: EdgeLabel::Must
            }]
        );
        assert!(!h.node(2).external);
    }

    #[test]
    fn aliased_stores_both_reach_the_load() {
        let (_, h, _) = forms(
            "func f(%a, %b, %v, %w) entry { L0: store %a @ 0, %v\n store %b @ 0, %w\n\
             %x = load %a @ 0\n ret }",
        );
        let h = &h["f"];
        assert_eq!(h.inputs(3), vec![1, 2]);
        assert_eq!(h.edges[0].label, EdgeLabel::May);
        assert_eq!(h.edges[1].label, EdgeLabel::May);
    }

    #[test]
    fn strong_update_kills_same_cell() {
        let (_, h, _) = forms(
            "func f(%a, %v, %w) entry { L0: store %a @ 0, %v\n store %a @ 0, %w\n\
             %x = load %a @ 0\n %y = load %a @ 8\n ret }",
        );
        let h = &h["f"];
        assert_eq!(h.inputs(3), vec![2]);
        assert!(h.inputs(4).is_empty());
        assert!(h.node(4).external);
    }

    #[test]
    fn indexed_store_conflicts_with_static_offsets() {
        let (_, h, _) = forms(
            "func f(%a, %i, %v) entry { L0: storeidx %a, %i, %v\n %x = load %a @ 16\n ret }",
        );
        assert_eq!(h["f"].inputs(2), vec![1]);
        assert_eq!(h["f"].node(1).loc.to_string(), "%a@%i");
    }

    #[test]
    fn side_effects_close_over_calls() {
        let (_, h, se) = forms(
            "func f(%o) entry { L0: call @g(%o)\n ret }\nfunc g(%o) { L0: call @h(%o)\n ret }\n\
             func h(%o) { L0: store %o @ 4, %o\n ret }\nfunc k() { L0: ret }",
        );
        assert!(se.get("f").stores.offsets.contains(&4));
        assert!(se.get("k").is_empty());
        let f = &h["f"];
        assert_eq!(f.nodes.len(), 1);
        assert_eq!(f.nodes[0].kind, NodeKind::CallDPhi);
        assert_eq!(h["h"].exit_defs, vec![1]);
    }

    #[test]
    fn empty_function_has_no_edges() {
        let (_, h, _) = forms("func f() entry { L0: ret }");
        assert!(heap_def_use_chains(&h["f"]).is_empty());
    }
}

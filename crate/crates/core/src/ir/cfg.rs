use std::collections::VecDeque;

use thiserror::Error;

use super::{Function, Op};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CfgError {
    #[error("function `{func}`: block `{block}` jumps to unknown label `{label}`")]
    UnknownLabel {
        func: String,
        block: String,
        label: String,
    },
    #[error("function `{func}`: block `{block}` does not end in a terminator")]
    MissingTerminator { func: String, block: String },
}

/// Control-flow graph over a function's blocks plus one synthetic exit node.
///
/// Node `i < exit` is block `i`; node `exit` is the synthetic exit. Blocks
/// that cannot reach the exit (infinite loops) get a virtual edge from their
/// loop header so that post-dominance is total over live blocks.
#[derive(Debug, Clone)]
pub struct Cfg {
    pub succs: Vec<Vec<usize>>,
    pub preds: Vec<Vec<usize>>,
    pub exit: usize,
    /// Blocks that received a virtual edge to the exit.
    pub virtual_edges: Vec<usize>,
    /// Reachability from the entry block, indexed by block.
    pub live: Vec<bool>,
    /// Live blocks in reverse postorder from the entry.
    pub rpo: Vec<usize>,
}

impl Cfg {
    pub fn num_blocks(&self) -> usize {
        self.exit
    }

    /// One line per block: `func:LABEL -> LABEL, ...`, naming the synthetic
    /// exit `exit` (suffixed `*` for a virtual edge) and marking dead blocks.
    pub fn dump(&self, f: &Function) -> String {
        let mut out = String::new();
        for (b, block) in f.blocks.iter().enumerate() {
            let succ: Vec<String> = self.succs[b]
                .iter()
                .map(|&s| {
                    if s != self.exit {
                        f.blocks[s].label.clone()
                    } else if self.virtual_edges.contains(&b) {
                        "exit*".to_string()
                    } else {
                        "exit".to_string()
                    }
                })
                .collect();
            let dead = if self.is_live(b) { "" } else { " (dead)" };
            out.push_str(&format!("{}:{} -> {}{dead}\n", f.name, block.label, succ.join(", ")));
        }
        out
    }

    pub fn is_live(&self, b: usize) -> bool {
        self.live.get(b).copied().unwrap_or(false)
    }

    /// Successor lists restricted to live nodes (the exit is always live).
    pub fn live_succs(&self) -> Vec<Vec<usize>> {
        (0..=self.exit)
            .map(|n| {
                if n < self.exit && !self.live[n] {
                    return Vec::new();
                }
                self.succs[n]
                    .iter()
                    .copied()
                    .filter(|&s| s == self.exit || self.live[s])
                    .collect()
            })
            .collect()
    }

    pub fn live_preds(&self) -> Vec<Vec<usize>> {
        (0..=self.exit)
            .map(|n| {
                if n < self.exit && !self.live[n] {
                    return Vec::new();
                }
                self.preds[n]
                    .iter()
                    .copied()
                    .filter(|&p| self.live[p])
                    .collect()
            })
            .collect()
    }

    /// Forward dominator tree rooted at the entry block.
    pub fn dominators(&self) -> DomTree {
        immediate_dominators(0, &self.live_succs(), &self.live_preds())
    }

    /// Post-dominator tree rooted at the synthetic exit.
    pub fn post_dominators(&self) -> DomTree {
        immediate_dominators(self.exit, &self.live_preds(), &self.live_succs())
    }

    /// Live blocks that lie on a cycle of the CFG.
    pub fn blocks_in_cycles(&self) -> Vec<bool> {
        let succs = self.live_succs();
        let n = self.exit;
        (0..n)
            .map(|b| {
                if !self.live[b] {
                    return false;
                }
                let mut seen = vec![false; n + 1];
                let mut stack: Vec<usize> = succs[b].clone();
                while let Some(x) = stack.pop() {
                    if x == b {
                        return true;
                    }
                    if x == n || seen[x] {
                        continue;
                    }
                    seen[x] = true;
                    stack.extend(succs[x].iter().copied());
                }
                false
            })
            .collect()
    }
}

/// Immediate dominators of a graph, by the iterative algorithm of Cooper,
/// Harvey and Kennedy over a reverse postorder.
#[derive(Debug, Clone)]
pub struct DomTree {
    pub root: usize,
    pub idom: Vec<Option<usize>>,
    /// Postorder number of each node reachable from the root.
    po: Vec<Option<usize>>,
    /// Reachable nodes in reverse postorder.
    pub rpo: Vec<usize>,
}

impl DomTree {
    pub fn is_reachable(&self, n: usize) -> bool {
        self.po[n].is_some()
    }

    /// Reflexive dominance.
    pub fn dominates(&self, a: usize, b: usize) -> bool {
        if !self.is_reachable(a) || !self.is_reachable(b) {
            return false;
        }
        let mut cur = b;
        loop {
            if cur == a {
                return true;
            }
            match self.idom[cur] {
                Some(p) => cur = p,
                None => return false,
            }
        }
    }

    /// Children lists of the tree.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut ch = vec![Vec::new(); self.idom.len()];
        for (n, d) in self.idom.iter().enumerate() {
            if let Some(d) = d {
                ch[*d].push(n);
            }
        }
        ch
    }

    /// Dominance frontier of every node, given the same successor lists the
    /// tree was built from.
    pub fn frontiers(&self, preds: &[Vec<usize>]) -> Vec<Vec<usize>> {
        let mut df: Vec<Vec<usize>> = vec![Vec::new(); self.idom.len()];
        for &b in &self.rpo {
            let ps: Vec<usize> = preds[b].iter().copied().filter(|&p| self.is_reachable(p)).collect();
            if ps.len() < 2 {
                continue;
            }
            for p in ps {
                let mut runner = p;
                while Some(runner) != self.idom[b] {
                    if !df[runner].contains(&b) {
                        df[runner].push(b);
                    }
                    match self.idom[runner] {
                        Some(r) => runner = r,
                        None => break,
                    }
                }
            }
        }
        for d in &mut df {
            d.sort_unstable();
        }
        df
    }
}

pub fn immediate_dominators(root: usize, succs: &[Vec<usize>], preds: &[Vec<usize>]) -> DomTree {
    let n = succs.len();
    let mut po: Vec<Option<usize>> = vec![None; n];
    let mut order = Vec::with_capacity(n);
    let mut visited = vec![false; n];
    let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
    visited[root] = true;
    while let Some(&mut (node, ref mut i)) = stack.last_mut() {
        if let Some(&s) = succs[node].get(*i) {
            *i += 1;
            if !visited[s] {
                visited[s] = true;
                stack.push((s, 0));
            }
        } else {
            po[node] = Some(order.len());
            order.push(node);
            stack.pop();
        }
    }
    let rpo: Vec<usize> = order.iter().rev().copied().collect();

    let mut idom: Vec<Option<usize>> = vec![None; n];
    idom[root] = Some(root);
    let intersect = |idom: &[Option<usize>], mut a: usize, mut b: usize| -> usize {
        while a != b {
            while po[a] < po[b] {
                a = idom[a].expect("processed node");
            }
            while po[b] < po[a] {
                b = idom[b].expect("processed node");
            }
        }
        a
    };
    let mut changed = true;
    while changed {
        changed = false;
        for &b in rpo.iter().skip(1) {
            let mut new_idom: Option<usize> = None;
            for &p in &preds[b] {
                if po[p].is_none() || idom[p].is_none() {
                    continue;
                }
                new_idom = Some(match new_idom {
                    None => p,
                    Some(cur) => intersect(&idom, p, cur),
                });
            }
            if new_idom.is_some() && idom[b] != new_idom {
                idom[b] = new_idom;
                changed = true;
            }
        }
    }
    idom[root] = None;
    DomTree { root, idom, po, rpo }
}

/// Builds the CFG of `f`: successor edges from terminators, a synthetic exit
/// wired from every `ret`, and virtual exit edges for exit-free loops.
pub fn build_cfg(f: &Function) -> Result<Cfg, CfgError> {
    let n = f.blocks.len();
    let exit = n;
    let mut succs: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for (b, block) in f.blocks.iter().enumerate() {
        let term = block.terminator().ok_or_else(|| CfgError::MissingTerminator {
            func: f.name.clone(),
            block: block.label.clone(),
        })?;
        if let Op::Ret(_) = term.op {
            succs[b].push(exit);
            continue;
        }
        for label in term.op.targets() {
            let t = f.block_index(label).ok_or_else(|| CfgError::UnknownLabel {
                func: f.name.clone(),
                block: block.label.clone(),
                label: label.to_string(),
            })?;
            if !succs[b].contains(&t) {
                succs[b].push(t);
            }
        }
    }
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for (b, ss) in succs.iter().enumerate() {
        for &s in ss {
            preds[s].push(b);
        }
    }

    let mut live = vec![false; n];
    let mut stack = vec![0usize];
    while let Some(b) = stack.pop() {
        if b == exit || live[b] {
            continue;
        }
        live[b] = true;
        stack.extend(succs[b].iter().copied());
    }

    let mut cfg = Cfg {
        succs,
        preds,
        exit,
        virtual_edges: Vec::new(),
        live,
        rpo: Vec::new(),
    };
    let dom = cfg.dominators();
    cfg.rpo = dom.rpo.iter().copied().filter(|&b| b != exit).collect();
    add_virtual_exit_edges(&mut cfg, &dom);
    Ok(cfg)
}

fn reaches_exit(cfg: &Cfg) -> Vec<bool> {
    let mut seen = vec![false; cfg.exit + 1];
    let mut queue = VecDeque::from([cfg.exit]);
    seen[cfg.exit] = true;
    while let Some(x) = queue.pop_front() {
        for &p in &cfg.preds[x] {
            if cfg.live[p] && !seen[p] {
                seen[p] = true;
                queue.push_back(p);
            }
        }
    }
    seen
}

fn add_virtual_exit_edges(cfg: &mut Cfg, dom: &DomTree) {
    loop {
        let ok = reaches_exit(cfg);
        let stuck: Vec<usize> = cfg.rpo.iter().copied().filter(|&b| !ok[b]).collect();
        let Some(&fallback) = stuck.first() else {
            return;
        };
        // Earliest natural-loop header (in RPO) among the stuck blocks, so
        // outer loops are connected before the loops nested in them.
        let header = stuck
            .iter()
            .copied()
            .find(|&h| {
                cfg.preds[h]
                    .iter()
                    .any(|&t| cfg.live[t] && dom.dominates(h, t))
            })
            .unwrap_or(fallback);
        cfg.succs[header].push(cfg.exit);
        cfg.preds[cfg.exit].push(header);
        cfg.virtual_edges.push(header);
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_program;
    use super::*;

    fn cfg_of(text: &str) -> Cfg {
        let p = parse_program(text).unwrap();
        build_cfg(p.functions.values().next().unwrap()).unwrap()
    }

    #[test]
    fn straight_line_is_a_chain() {
        let cfg = cfg_of("func f() { L0: jmp L1\nL1: jmp L2\nL2: ret }");
        assert_eq!(cfg.succs, vec![vec![1], vec![2], vec![3], vec![]]);
        assert!(cfg.virtual_edges.is_empty());
    }

    #[test]
    fn diamond() {
        let cfg = cfg_of(
            "func f(%c) { L0: br %c, L1, L2\nL1: jmp L3\nL2: jmp L3\nL3: ret }",
        );
        assert_eq!(cfg.succs.len(), 5);
        assert_eq!(cfg.preds[3], vec![1, 2]);
        let pdom = cfg.post_dominators();
        assert_eq!(pdom.idom[0], Some(3));
        let dom = cfg.dominators();
        assert_eq!(dom.idom[3], Some(0));
        assert_eq!(dom.frontiers(&cfg.live_preds())[1], vec![3]);
    }

    #[test]
    fn dead_blocks_are_kept_but_not_live() {
        let cfg = cfg_of("func f() { L0: ret\nL1: jmp L0 }");
        assert_eq!(cfg.live, vec![true, false]);
        assert_eq!(cfg.preds[0], vec![1]);
        assert!(cfg.live_preds()[0].is_empty());
    }

    #[test]
    fn infinite_loop_gets_virtual_edge_from_header() {
        let cfg = cfg_of(
            "func f(%c) { L0: br %c, L1, L3\nL1: jmp L2\nL2: jmp L1\nL3: ret }",
        );
        assert_eq!(cfg.virtual_edges, vec![1]);
        let pdom = cfg.post_dominators();
        for b in 0..4 {
            assert!(pdom.dominates(cfg.exit, b));
        }
    }

    #[test]
    fn cycles() {
        let cfg = cfg_of("func f(%c) { L0: jmp L1\nL1: br %c, L1, L2\nL2: ret }");
        assert_eq!(cfg.blocks_in_cycles(), vec![false, true, false]);
    }
}

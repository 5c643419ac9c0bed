use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{Cfg, Function, Op};

/// Block `block` is control dependent on the branch of `block`'s dependency
/// through successor number `succ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CdEntry {
    pub block: usize,
    pub succ: usize,
}

/// Control dependence of one function, plus the region tree used for
/// source/sink distance metrics.
///
/// A region groups blocks with identical direct control dependences. Region
/// 0 is a virtual root holding code that depends on nothing.
#[derive(Debug, Clone)]
pub struct ControlDependence {
    /// Direct control dependences per block (empty for dead blocks).
    pub deps: Vec<Vec<CdEntry>>,
    /// Branch condition of each block's terminator, if it is a `br`.
    conds: Vec<Option<String>>,
    /// All predicates controlling a block, directly or through an enclosing
    /// controller.
    transitive: Vec<Vec<String>>,
    region_of: Vec<usize>,
    region_parent: Vec<Option<usize>>,
    region_depth: Vec<usize>,
}

impl ControlDependence {
    /// Controlling predicates of every instruction in `block`, including
    /// those of enclosing conditionals, sorted by name.
    pub fn predicates(&self, block: usize) -> &[String] {
        &self.transitive[block]
    }

    /// Predicates of the direct controllers of `block`.
    pub fn direct_predicates(&self, block: usize) -> BTreeSet<&str> {
        self.deps[block]
            .iter()
            .filter_map(|e| self.conds[e.block].as_deref())
            .collect()
    }

    /// Whether `block` is directly control dependent on `controller`.
    pub fn depends_on(&self, block: usize, controller: usize) -> bool {
        self.deps[block].iter().any(|e| e.block == controller)
    }

    pub fn region(&self, block: usize) -> usize {
        self.region_of[block]
    }

    pub fn num_regions(&self) -> usize {
        self.region_parent.len()
    }

    pub fn region_parent(&self, region: usize) -> Option<usize> {
        self.region_parent[region]
    }

    /// Depth of `block` in the region tree; code outside any conditional
    /// has depth 0.
    pub fn depth(&self, block: usize) -> usize {
        self.region_depth[self.region_of[block]]
    }

    /// Tree distance between the regions of two blocks:
    /// `depth(a) - depth(lca) + depth(b) - depth(lca)`.
    pub fn distance(&self, a: usize, b: usize) -> usize {
        let (mut ra, mut rb) = (self.region_of[a], self.region_of[b]);
        let (da, db) = (self.region_depth[ra], self.region_depth[rb]);
        while self.region_depth[ra] > self.region_depth[rb] {
            ra = self.region_parent[ra].unwrap_or(0);
        }
        while self.region_depth[rb] > self.region_depth[ra] {
            rb = self.region_parent[rb].unwrap_or(0);
        }
        while ra != rb {
            ra = self.region_parent[ra].unwrap_or(0);
            rb = self.region_parent[rb].unwrap_or(0);
        }
        let dl = self.region_depth[ra];
        (da - dl) + (db - dl)
    }
}

/// Control dependence from the post-dominator tree: for each edge `A -> S`,
/// every node on the post-dominator chain from `S` up to (excluding)
/// `ipdom(A)` depends on `A`.
pub fn compute_control_dependence(f: &Function, cfg: &Cfg) -> ControlDependence {
    let n = cfg.num_blocks();
    let pdom = cfg.post_dominators();
    let succs = cfg.live_succs();
    let mut deps: Vec<BTreeSet<CdEntry>> = vec![BTreeSet::new(); n];
    for (a, out) in succs.iter().enumerate().take(n) {
        if !cfg.is_live(a) {
            continue;
        }
        let stop = pdom.idom[a];
        for (k, &s) in out.iter().enumerate() {
            let mut runner = Some(s);
            while let Some(r) = runner {
                if Some(r) == stop || r == cfg.exit {
                    break;
                }
                deps[r].insert(CdEntry { block: a, succ: k });
                runner = pdom.idom[r];
            }
        }
    }
    let deps: Vec<Vec<CdEntry>> = deps.into_iter().map(|s| s.into_iter().collect()).collect();

    let conds: Vec<Option<String>> = f
        .blocks
        .iter()
        .map(|b| match b.terminator().map(|t| &t.op) {
            Some(Op::Br { cond, .. }) => Some(cond.clone()),
            _ => None,
        })
        .collect();

    // Transitive predicates: closure over controller chains.
    let transitive: Vec<Vec<String>> = (0..n)
        .map(|b| {
            let mut seen = vec![false; n];
            let mut preds = BTreeSet::new();
            let mut stack: Vec<usize> = deps[b].iter().map(|e| e.block).collect();
            while let Some(c) = stack.pop() {
                if std::mem::replace(&mut seen[c], true) {
                    continue;
                }
                if let Some(p) = &conds[c] {
                    preds.insert(p.clone());
                }
                stack.extend(deps[c].iter().map(|e| e.block));
            }
            preds.into_iter().collect()
        })
        .collect();

    // Regions keyed by dependence set; region 0 is the empty set.
    let mut keys: BTreeMap<Vec<CdEntry>, usize> = BTreeMap::new();
    keys.insert(Vec::new(), 0);
    let mut region_keys: Vec<Vec<CdEntry>> = vec![Vec::new()];
    let mut region_of = vec![0usize; n];
    for b in 0..n {
        let key = deps[b].clone();
        let id = *keys.entry(key.clone()).or_insert_with(|| {
            region_keys.push(key);
            region_keys.len() - 1
        });
        region_of[b] = id;
    }
    let nr = region_keys.len();
    // Edge from the region of a controller block to the dependent region.
    let mut children: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); nr];
    for (r, key) in region_keys.iter().enumerate().skip(1) {
        for e in key {
            let pr = region_of[e.block];
            if pr != r {
                children[pr].insert(r);
            }
        }
    }
    let mut region_parent: Vec<Option<usize>> = vec![None; nr];
    let mut region_depth: Vec<Option<usize>> = vec![None; nr];
    region_depth[0] = Some(0);
    let mut queue = VecDeque::from([0usize]);
    while let Some(r) = queue.pop_front() {
        let d = region_depth[r].unwrap_or(0);
        for &c in &children[r] {
            if region_depth[c].is_none() {
                region_depth[c] = Some(d + 1);
                region_parent[c] = Some(r);
                queue.push_back(c);
            }
        }
    }
    // Regions only reachable through a cycle hang off the root.
    let region_depth: Vec<usize> = region_depth
        .into_iter()
        .enumerate()
        .map(|(r, d)| match d {
            Some(d) => d,
            None => {
                region_parent[r] = Some(0);
                1
            }
        })
        .collect();

    ControlDependence {
        deps,
        conds,
        transitive,
        region_of,
        region_parent,
        region_depth,
    }
}

#[cfg(test)]
mod tests {
    use super::super::{build_cfg, parse_program};
    use super::*;

    fn cd_of(text: &str) -> ControlDependence {
        let p = parse_program(text).unwrap();
        let f = p.functions.values().next().unwrap();
        compute_control_dependence(f, &build_cfg(f).unwrap())
    }

    #[test]
    fn diamond_arms_depend_on_predicate_join_does_not() {
        let cd = cd_of("func f(%c) { L0: br %c, L1, L2\nL1: jmp L3\nL2: jmp L3\nL3: ret }");
        assert_eq!(cd.predicates(1), ["c"]);
        assert_eq!(cd.predicates(2), ["c"]);
        assert!(cd.predicates(3).is_empty());
        assert!(cd.predicates(0).is_empty());
        assert_eq!(cd.depth(1), 1);
        assert_eq!(cd.depth(3), 0);
        assert_eq!(cd.distance(0, 1), 1);
        assert_eq!(cd.distance(1, 2), 2);
        assert_eq!(cd.distance(0, 3), 0);
    }

    #[test]
    fn nested_if_depends_on_both_predicates() {
        let cd = cd_of(
            "func f(%a, %b) {\n\
             L0: br %a, L1, L4\n\
             L1: br %b, L2, L3\n\
             L2: jmp L3\n\
             L3: jmp L4\n\
             L4: ret }",
        );
        assert_eq!(cd.predicates(2), ["a", "b"]);
        assert_eq!(cd.direct_predicates(2).into_iter().collect::<Vec<_>>(), ["b"]);
        assert_eq!(cd.depth(2), 2);
        assert_eq!(cd.distance(0, 2), 2);
    }

    #[test]
    fn loop_header_controls_itself_and_body() {
        let cd = cd_of("func f(%c) { L0: jmp L1\nL1: br %c, L2, L3\nL2: jmp L1\nL3: ret }");
        assert!(cd.depends_on(1, 1));
        assert!(cd.depends_on(2, 1));
        assert!(!cd.depends_on(3, 1));
        assert_eq!(cd.region(1), cd.region(2));
        assert_eq!(cd.depth(2), 1);
    }
}

mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use sifa::hssa::NodeKind;
use sifa::ir::{build_cfg, compute_control_dependence, parse_program, print_program, validate_ssa, Op, Site};
use sifa::pipeline::{Analysis, Options};
use sifa::ranking::rank_findings;
use sifa::rules::{
    parse_rules, print_rules, Position, PrivMode, PrivilegeRule, RuleSet, TaintRule, TaintSink, TaintSource,
    DEFAULT_CHECKER,
};
use sifa::taint::{run_taint_analysis, Finding, SourceSite, TNode};
use sifa::testkit::oracle::flow_edges;
use sifa::testkit::{control_dependence_bruteforce, generate_program, interpret, reaching_stores};

fn analysis(seed: u64, size: usize, implicit_flows: bool) -> Analysis {
    let p = parse_program(&generate_program(seed, size)).unwrap();
    Analysis::run(p, Options { implicit_flows }).unwrap()
}

fn gen_rules() -> RuleSet {
    common::rules_file(
        "taint-rule gen severity=5 {\n  source Source return\n  sink Sink param=0\n}\n\
         taint-rule ext severity=3 {\n  source Ext param=1\n  sink Sink param=0\n}\n",
    )
}

#[test]
fn generated_programs_validate_cleanly() {
    for seed in 0..1000 {
        let text = generate_program(seed, 10 + (seed as usize % 190));
        let p = parse_program(&text).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        let diags = validate_ssa(&p);
        assert!(diags.is_empty(), "seed {seed}: {diags:?}");
    }
}

#[test]
fn generator_is_deterministic() {
    assert_eq!(generate_program(0, 10), generate_program(0, 10));
    assert_ne!(generate_program(0, 60), generate_program(1, 60));
}

fn ident() -> impl Strategy<Value = String> {
    "[A-Z][A-Za-z0-9_]{0,8}"
}

fn taint_rule(i: usize) -> impl Strategy<Value = TaintRule> {
    (
        1u8..=10,
        ident(),
        prop_oneof![Just(Position::Return), (0usize..4).prop_map(Position::Param)],
        any::<bool>(),
        prop::collection::vec((ident(), 0usize..4), 1..3),
    )
        .prop_map(move |(severity, func, pos, event, sinks)| TaintRule {
            name: format!("t{i}"),
            severity,
            source: TaintSource {
                func,
                event: event && matches!(pos, Position::Param(_)),
                pos,
            },
            sinks: sinks.into_iter().map(|(func, param)| TaintSink { func, param }).collect(),
            pair: None,
        })
}

fn priv_rule(i: usize) -> impl Strategy<Value = PrivilegeRule> {
    (
        prop_oneof![Just(PrivMode::ForbidExtra), Just(PrivMode::RequireAll), Just(PrivMode::ReportUnchecked)],
        ident(),
        ident(),
        prop::collection::btree_set("PRV_[A-Z]{1,4}", 0..4),
        prop_oneof![Just(DEFAULT_CHECKER.to_string()), ident()],
    )
        .prop_filter("only report-unchecked allows an empty set", |(mode, _, _, upvs, _)| {
            *mode == PrivMode::ReportUnchecked || !upvs.is_empty()
        })
        .prop_map(move |(mode, source, sink, upvs, checker)| PrivilegeRule {
            name: format!("p{i}"),
            mode,
            source,
            sink,
            upvs,
            checker,
        })
}

fn rule_set() -> impl Strategy<Value = RuleSet> {
    (0usize..4, 0usize..4).prop_flat_map(|(nt, np)| {
        let taint: Vec<_> = (0..nt).map(taint_rule).collect();
        let privilege: Vec<_> = (0..np).map(priv_rule).collect();
        (taint, privilege).prop_map(|(taint, privilege)| RuleSet { taint, privilege })
    })
}

fn finding() -> impl Strategy<Value = Finding> {
    (0u8..10, 0usize..3, 0usize..3, 0usize..3, 0usize..3, any::<bool>(), prop::option::of(0usize..4)).prop_map(
        |(severity, sb, si, kb, ki, inter, ctl)| Finding {
            rule: format!("r{}", severity % 3),
            severity,
            source: SourceSite::Inst(Site::new("main", sifa::ir::InstRef::new(sb, si))),
            sink: Site::new(if inter { "g" } else { "main" }, sifa::ir::InstRef::new(kb, ki)),
            path: vec![],
            hops: vec![],
            call_distance: u8::from(inter),
            control_distance: if inter { None } else { ctl },
        },
    )
}

fn rank_key(f: &Finding) -> (std::cmp::Reverse<u8>, u8, (u8, usize)) {
    (
        std::cmp::Reverse(f.severity),
        f.call_distance,
        f.control_distance.map_or((1, 0), |d| (0, d)),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn print_parse_round_trip(seed in 0u64..10_000, size in 10usize..200) {
        let p = parse_program(&generate_program(seed, size)).unwrap();
        let once = print_program(&p);
        let again = print_program(&parse_program(&once).unwrap());
        prop_assert_eq!(once, again);
    }

    #[test]
    fn rules_round_trip(rs in rule_set()) {
        let text = print_rules(&rs);
        let back = parse_rules(&text).unwrap();
        prop_assert_eq!(back, rs);
    }

    #[test]
    fn control_dependence_matches_definition(seed in 0u64..10_000) {
        let p = parse_program(&generate_program(seed, 80)).unwrap();
        for f in p.functions.values() {
            let cfg = build_cfg(f).unwrap();
            let cd = compute_control_dependence(f, &cfg);
            let brute = control_dependence_bruteforce(&cfg);
            for (b, deps) in brute.iter().enumerate() {
                let engine: BTreeSet<usize> = cd.deps[b].iter().map(|e| e.block).collect();
                prop_assert_eq!(&engine, deps, "{} block {}", f.name, b);
            }
        }
    }

    #[test]
    fn ranking_orders_by_key_and_cutoff_is_a_prefix(
        fs in prop::collection::vec(finding(), 0..20),
        cutoff in 0usize..25,
    ) {
        let full = rank_findings(fs.clone(), None).findings;
        prop_assert_eq!(full.len(), fs.len());
        for w in full.windows(2) {
            prop_assert!(rank_key(&w[0]) <= rank_key(&w[1]));
        }
        let mut rev = fs.clone();
        rev.reverse();
        prop_assert_eq!(&rank_findings(rev, None).findings, &full);
        let top = rank_findings(fs, Some(cutoff)).findings;
        prop_assert_eq!(&top[..], &full[..cutoff.min(full.len())]);
    }

    #[test]
    fn witnesses_replay_over_explicit_edges(seed in 0u64..10_000, implicit in any::<bool>()) {
        let a = analysis(seed, 60, implicit);
        let edges = flow_edges(&a);
        let node = |n: &TNode| match n {
            TNode::Value { func, name } => (func.clone(), name.clone()),
            TNode::Heap { func, id } => (func.clone(), format!("H{id}")),
        };
        for f in run_taint_analysis(&a, &gen_rules()) {
            prop_assert_eq!(f.hops.len() + 1, f.path.len());
            for w in f.path.windows(2) {
                prop_assert!(edges.contains(&(node(&w[0]), node(&w[1]))), "{} -> {}", w[0], w[1]);
            }
            prop_assert_eq!(f.has_pseudo_hop() && !implicit, false);
        }
    }
}

/// Direct definitions feeding a load never include a store that a later
/// same-cell store always overwrites, and every store observed by a
/// concrete run is among the definitions reaching the load.
#[test]
fn heap_ssa_reaching_definitions() {
    let (mut checked, mut observed) = (0, 0);
    for seed in 0..300 {
        let a = analysis(seed, 60, false);
        let st = interpret(&a.program, 50_000).ok();
        for (name, h) in &a.hssa {
            let f = &a.program.functions[name];
            let cfg = &a.facts[name].cfg;
            for n in h.nodes.iter().filter(|n| n.kind == NodeKind::UPhi) {
                let at = n.inst_ref().unwrap();
                if !matches!(f.inst(at).op, Op::Load { .. } | Op::LoadIdx { .. }) {
                    continue;
                }
                let oracle = reaching_stores(f, cfg, at);
                let mut direct = BTreeSet::new();
                let mut all = BTreeSet::new();
                let mut stack: Vec<(usize, bool)> = h.inputs(n.id).into_iter().map(|i| (i, true)).collect();
                let mut seen = BTreeSet::new();
                while let Some((i, first)) = stack.pop() {
                    if !seen.insert(i) {
                        continue;
                    }
                    let m = h.node(i);
                    match m.kind {
                        NodeKind::DPhi => {
                            all.insert(m.inst_ref().unwrap());
                            if first {
                                direct.insert(m.inst_ref().unwrap());
                            }
                        }
                        NodeKind::MergePhi => stack.extend(h.inputs(i).into_iter().map(|j| (j, false))),
                        _ => {}
                    }
                }
                checked += 1;
                assert!(direct.is_subset(&oracle), "seed {seed} {name} {at:?}: {direct:?} vs {oracle:?}");
                let Some(st) = &st else { continue };
                for (load, store) in &st.load_writers {
                    if load.func == *name && load.inst_ref() == at {
                        observed += 1;
                        assert!(all.contains(&store.inst_ref()), "seed {seed} {name} {at:?} misses {store}");
                    }
                }
            }
        }
    }
    assert!(checked > 1000 && observed > 0, "checked {checked}, observed {observed}");
}

#![allow(dead_code)]

use std::collections::BTreeSet;

use sifa::cli::{run, Format, Mode, Outcome, RunConfig};
use sifa::ir::{parse_program, InstRef, Op};
use sifa::pipeline::{Analysis, Options};
use sifa::rules::{parse_rules, RuleSet};
use sifa::testkit::{fixture_path, load_fixture};

pub fn analyze(name: &str, implicit_flows: bool) -> (Analysis, RuleSet) {
    let fx = load_fixture(name).expect("fixture exists");
    let p = parse_program(&fx.ir).expect("fixture parses");
    let a = Analysis::run(p, Options { implicit_flows }).expect("fixture analyzes");
    let rs = fx.rules.map(|r| parse_rules(&r).expect("rules parse")).unwrap_or_default();
    (a, rs)
}

pub fn rules_file(text: &str) -> RuleSet {
    parse_rules(text).expect("rules parse")
}

pub fn cli(name: &str, rules: &str, mode: Mode, format: Format) -> Outcome {
    let mut cfg = RunConfig::new(mode, vec![fixture_path(name, "tir")]);
    cfg.rules = Some(fixture_path(rules, "rules"));
    cfg.format = format;
    run(&cfg)
}

/// Every `vcall` site of `func`.
pub fn vcall_sites(a: &Analysis, func: &str) -> Vec<InstRef> {
    a.program.functions[func]
        .insts()
        .filter(|(_, i)| matches!(i.op, Op::VCall { .. }))
        .map(|(at, _)| at)
        .collect()
}

pub fn strings(xs: &[&str]) -> BTreeSet<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

//! Generates random programs, runs them concretely and checks what the
//! interpreter observed against the static results.
//!
//! Run with `cargo run --example random_programs -- [COUNT]`.

use sifa::ir::parse_program;
use sifa::pipeline::{Analysis, Options};
use sifa::rules::parse_rules;
use sifa::taint::run_taint_analysis;
use sifa::testkit::{generate_program, interpret, oracle_taint};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let count: u64 = std::env::args().nth(1).map_or(Ok(50), |s| s.parse())?;
    let rules = parse_rules("taint-rule gen severity=5 {\n source Source return\n sink Sink param=0\n}")?;
    let (mut findings, mut edges, mut mismatches) = (0, 0, 0);
    for seed in 0..count {
        let a = Analysis::run(parse_program(&generate_program(seed, 60))?, Options::default())?;
        let fs = run_taint_analysis(&a, &rules);
        let engine: std::collections::BTreeSet<_> =
            fs.iter().map(|f| (f.source.to_string(), f.sink.to_string())).collect();
        if engine != oracle_taint(&a, &rules) {
            mismatches += 1;
        }
        findings += fs.len();
        if let Ok(st) = interpret(&a.program, 50_000) {
            for (caller, at, callee) in &st.call_edges {
                assert!(a.call_graph.targets(caller, *at).contains(callee));
                edges += 1;
            }
        }
    }
    println!("{count} programs: {findings} findings, {mismatches} oracle mismatches, {edges} executed call edges covered");
    Ok(())
}

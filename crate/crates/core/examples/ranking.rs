//! Ranks findings by severity, then call distance, then control distance,
//! and keeps the top three.
//!
//! Run with `cargo run --example ranking`.

use sifa::ir::parse_program;
use sifa::pipeline::{Analysis, Options};
use sifa::ranking::rank_findings;
use sifa::rules::parse_rules;
use sifa::taint::run_taint_analysis;
use sifa::testkit::load_fixture;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fx = load_fixture("ranking")?;
    let a = Analysis::run(parse_program(&fx.ir)?, Options::default())?;
    let findings = run_taint_analysis(&a, &parse_rules(fx.rules.as_deref().unwrap_or_default())?);
    for cutoff in [None, Some(3)] {
        println!("cutoff {cutoff:?}");
        for f in rank_findings(findings.clone(), cutoff).findings {
            let ctl = f.control_distance.map_or("-".to_string(), |d| d.to_string());
            println!("  sev {} call {} ctl {ctl:>2}  [{}] {} -> {}", f.severity, f.call_distance, f.rule, f.source, f.sink);
        }
    }
    Ok(())
}

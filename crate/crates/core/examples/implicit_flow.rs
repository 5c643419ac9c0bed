//! A branch on tainted data taints values defined under it. The same
//! program is analyzed with and without implicit flows.
//!
//! Run with `cargo run --example implicit_flow`.

use sifa::ir::parse_program;
use sifa::pipeline::{Analysis, Options};
use sifa::rules::parse_rules;
use sifa::taint::run_taint_analysis;
use sifa::testkit::load_fixture;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fx = load_fixture("fig6")?;
    let rules = parse_rules(fx.rules.as_deref().unwrap_or_default())?;
    for implicit_flows in [true, false] {
        let a = Analysis::run(parse_program(&fx.ir)?, Options { implicit_flows })?;
        let fs = run_taint_analysis(&a, &rules);
        println!("implicit flows {implicit_flows}: {} finding(s)", fs.len());
        for f in fs {
            let hops: Vec<String> = f.hops.iter().map(ToString::to_string).collect();
            println!("  {} -> {} via [{}]", f.source, f.sink, hops.join(", "));
        }
    }
    Ok(())
}

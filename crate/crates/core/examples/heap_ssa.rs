//! Prints the heap SSA overlay of a function: dphi at stores, uphi at
//! loads, merge nodes at joins and summary nodes at calls.
//!
//! Run with `cargo run --example heap_ssa`.

use sifa::hssa::EdgeLabel;
use sifa::ir::parse_program;
use sifa::pipeline::{Analysis, Options};
use sifa::testkit::load_fixture;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fx = load_fixture("fig4")?;
    let a = Analysis::run(parse_program(&fx.ir)?, Options::default())?;
    let h = &a.hssa["test"];
    print!("{}", h.dump());
    for e in &h.edges {
        let label = match e.label {
            EdgeLabel::Must => "must",
            EdgeLabel::May => "may",
        };
        println!("H{} -> H{} ({label})", e.from, e.to);
    }
    Ok(())
}

//! Class type analysis narrows a virtual call to the classes that can
//! actually reach the receiver.
//!
//! Run with `cargo run --example class_types`.

use sifa::ir::{parse_program, Op};
use sifa::pipeline::{Analysis, Options};
use sifa::testkit::load_fixture;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for name in ["fig4", "fig4_mustnot"] {
        let fx = load_fixture(name)?;
        let a = Analysis::run(parse_program(&fx.ir)?, Options::default())?;
        println!("== {name}");
        println!("type(m) = {:?}", a.types.of_name("test", "m"));
        for (at, inst) in a.program.functions["test"].insts() {
            if let Op::VCall { slot, .. } = inst.op {
                let cha: Vec<&str> = a.hierarchy.all_implementations(slot).into_iter().collect();
                println!("vcall slot {slot}: CHA {cha:?}, CTA {:?}", a.call_graph.targets("test", at));
            }
        }
    }
    Ok(())
}

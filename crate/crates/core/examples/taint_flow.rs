//! Interprocedural taint through the heap: the source value is stored in
//! an object, the object is passed to a callee, and the callee reads the
//! field and hands it to the sink.
//!
//! Run with `cargo run --example taint_flow`.

use sifa::ir::parse_program;
use sifa::pipeline::{Analysis, Options};
use sifa::rules::parse_rules;
use sifa::taint::run_taint_analysis;

const PROGRAM: &str = r#"
class Info { field x @ 0 }

func main() entry {
L0:
  %x = call @TaintSource()
  %info = new Info
  store %info @ 0, %x
  call @evaluate(%info)
  ret
}

func evaluate(%i) {
L0:
  %m = load %i @ 0
  call @TaintSink(%m)
  ret
}
"#;

const RULES: &str = "taint-rule interproc severity=5 {
  source TaintSource return
  sink TaintSink param=0
}";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = Analysis::run(parse_program(PROGRAM)?, Options::default())?;
    for f in run_taint_analysis(&a, &parse_rules(RULES)?) {
        println!("[{}] {} -> {} (call distance {})", f.rule, f.source, f.sink, f.call_distance);
        print!("  {}", f.path[0]);
        for (n, hop) in f.path[1..].iter().zip(&f.hops) {
            print!(" -{hop}-> {n}");
        }
        println!();
    }
    Ok(())
}

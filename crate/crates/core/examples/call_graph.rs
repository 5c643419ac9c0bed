//! Builds the call graph of a program mixing direct, virtual and indirect
//! calls, and lists the call paths between two functions.
//!
//! Run with `cargo run --example call_graph`.

use sifa::callgraph::enumerate_paths;
use sifa::ir::parse_program;
use sifa::pipeline::{Analysis, Options};

const PROGRAM: &str = r#"
class Shape { vtable { 0 : Shape::draw } }
class Circle : Shape { vtable { 0 : Circle::draw } }
class Square : Shape { vtable { 0 : Square::draw } }

func Shape::draw(%this) { L0: ret }
func Circle::draw(%this) { L0: call @render(%this) ret }
func Square::draw(%this) { L0: call @render(%this) ret }

func render(%s) {
L0:
  %cb = funcaddr @flush
  icall %cb (%s)
  ret
}

func flush(%s) { L0: ret }

func main() entry {
L0:
  %c = new Circle
  vcall %c slot 0 ()
  ret
}
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = Analysis::run(parse_program(PROGRAM)?, Options::default())?;
    println!("class hierarchy bootstrap:");
    print!("{}", a.cha_graph.dump());
    println!("refined by class types:");
    print!("{}", a.call_graph.dump());
    for path in enumerate_paths(&a.call_graph, "main", "flush", 8) {
        println!("path: {}", path.join(" -> "));
    }
    Ok(())
}

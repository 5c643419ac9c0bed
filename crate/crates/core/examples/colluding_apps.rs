//! Two apps analyzed separately: one writes contacts to shared storage,
//! the other reads shared storage and sends it out. Paired rule tags join
//! the two halves.
//!
//! Run with `cargo run --example colluding_apps`.

use sifa::ir::parse_program;
use sifa::pipeline::{Analysis, Options};
use sifa::rules::parse_rules;
use sifa::taint::{join_colluding, run_taint_analysis};

const PRODUCER: &str = r#"
func main() entry {
L0:
  %c = call @ReadContacts()
  call @SharedPrefs_Put(%c)
  ret
}
"#;

const CONSUMER: &str = r#"
func main() entry {
L0:
  %v = call @SharedPrefs_Get()
  call @Http_Post(%v)
  ret
}
"#;

const PRODUCER_RULES: &str = "taint-rule stash severity=6 {
  source ReadContacts return
  sink SharedPrefs_Put param=0
  pair producer contacts
}";

const CONSUMER_RULES: &str = "taint-rule exfil severity=6 {
  source SharedPrefs_Get return
  sink Http_Post param=0
  pair consumer contacts
}";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (pr, cr) = (parse_rules(PRODUCER_RULES)?, parse_rules(CONSUMER_RULES)?);
    let pf = run_taint_analysis(&Analysis::run(parse_program(PRODUCER)?, Options::default())?, &pr);
    let cf = run_taint_analysis(&Analysis::run(parse_program(CONSUMER)?, Options::default())?, &cr);
    for r in join_colluding((&pf, &pr), (&cf, &cr)) {
        println!(
            "tag {}: producer {} -> {}, consumer {} -> {}",
            r.tag, r.producer.source, r.producer.sink, r.consumer.source, r.consumer.sink
        );
    }
    Ok(())
}

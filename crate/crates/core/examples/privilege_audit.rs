//! Audits the privilege checks on every call path from a privileged API
//! down to a low-level operation.
//!
//! Run with `cargo run --example privilege_audit`.

use sifa::ir::parse_program;
use sifa::pipeline::{Analysis, Options};
use sifa::privilege::{collect_privilege_paths, detect_violations, unnecessary_checks};
use sifa::rules::parse_rules;

const PROGRAM: &str = r#"
func Settings_Set(%v) event {
L0:
  %p = const str "PRV_SETTINGS"
  call @CheckUserPrivilege(%p)
  call @write_config(%v)
  ret
}

func Settings_Get(%v) event {
L0:
  %p = const str "PRV_SETTINGS"
  call @CheckUserPrivilege(%p)
  call @read_config(%v)
  ret
}

func Status_Get(%v) event {
L0:
  call @read_config(%v)
  ret
}

func write_config(%v) {
L0:
  call @sys_write(%v)
  ret
}

func read_config(%v) {
L0:
  call @sys_read(%v)
  ret
}
"#;

const RULES: &str = "
priv-rule set mode=require-all {
  source Settings_Set
  sink sys_write
  privs PRV_SETTINGS PRV_ADMIN
}
priv-rule get mode=forbid-extra {
  source Settings_Get
  sink sys_read
  privs PRV_SETTINGS
}
priv-rule status mode=report-unchecked {
  source Status_Get
  sink sys_read
}
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = Analysis::run(parse_program(PROGRAM)?, Options::default())?;
    let rules = parse_rules(RULES)?;
    let mut all = Vec::new();
    for rule in &rules.privilege {
        let traces = collect_privilege_paths(&a.call_graph, &a.program, rule, 64);
        for v in detect_violations(&traces, rule) {
            println!(
                "[{}] {}: {} pvs {:?} offending {:?}",
                rule.name,
                v.mode,
                v.trace.path.join(" -> "),
                v.trace.pvs,
                v.offending
            );
        }
        all.push((rule.clone(), traces));
    }
    for u in unnecessary_checks(&all) {
        println!("{} reaches {:?} on {} path(s) without any check", u.source, u.sinks, u.paths);
    }
    Ok(())
}

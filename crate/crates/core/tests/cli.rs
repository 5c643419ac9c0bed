mod common;

use std::path::PathBuf;
use std::process::Command;

use common::cli;
use sifa::cli::{run, DumpKind, Format, Mode, RunConfig};
use sifa::testkit::fixture_path;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sifa"))
}

#[test]
fn exit_codes_follow_findings() {
    assert_eq!(cli("fig5", "fig5", Mode::AppTaint, Format::Text).code, 1);
    assert_eq!(cli("fig8", "fig8", Mode::ApiPrivilege, Format::Text).code, 0);
    assert_eq!(cli("fig8", "fig8_extra", Mode::ApiPrivilege, Format::Text).code, 1);
}

#[test]
fn missing_input_is_an_input_error() {
    let out = run(&RunConfig::new(Mode::AppTaint, vec![PathBuf::from("/nonexistent.tir")]));
    assert_eq!(out.code, 2);
    assert!(out.stderr.starts_with("error: cannot read"));
}

#[test]
fn taint_mode_without_rules_is_an_input_error() {
    let out = run(&RunConfig::new(Mode::AppTaint, vec![fixture_path("fig5", "tir")]));
    assert_eq!(out.code, 2);
}

#[test]
fn text_report_shape() {
    let out = cli("friendfinder", "friendfinder", Mode::AppTaint, Format::Text);
    assert!(out.stdout.starts_with("taint findings\n"));
    assert!(out.stdout.ends_with("1 findings\n"));
    assert!(out.stdout.contains("[leak] severity 5"));
}

#[test]
fn cutoff_truncates_the_report() {
    let mut cfg = RunConfig::new(Mode::AppTaint, vec![fixture_path("ranking", "tir")]);
    cfg.rules = Some(fixture_path("ranking", "rules"));
    cfg.format = Format::Tsv;
    cfg.cutoff = Some(3);
    let out = run(&cfg);
    assert_eq!(out.stdout.lines().count(), 4);
    let full = std::fs::read_to_string(fixture_path("ranking", "expected.tsv")).unwrap();
    assert!(full.starts_with(&out.stdout));
}

#[test]
fn dumps_are_available() {
    let mut cfg = RunConfig::new(Mode::Dump, vec![fixture_path("loop_noexit", "tir")]);
    cfg.dump = Some(DumpKind::Cfg);
    let out = run(&cfg);
    assert_eq!(out.code, 0);
    assert!(out.stdout.contains("main:L1 -> L2, exit*"), "{}", out.stdout);
    cfg.inputs = vec![fixture_path("fig4", "tir")];
    for kind in [DumpKind::Hssa, DumpKind::Callgraph, DumpKind::Types] {
        cfg.dump = Some(kind);
        let out = run(&cfg);
        assert_eq!(out.code, 0, "{kind:?}: {}", out.stderr);
        assert!(!out.stdout.is_empty(), "{kind:?}");
    }
}

#[test]
fn binary_reports_and_exits() {
    let out = bin()
        .args(["--mode", "api-privilege", "--format", "tsv", "--rules"])
        .arg(fixture_path("push", "rules"))
        .arg(fixture_path("push", "tir"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let expected = std::fs::read_to_string(fixture_path("push", "expected.tsv")).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), expected);

    let out = bin().arg("--no-such-flag").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn disabling_implicit_flows_drops_the_fig6_finding() {
    let mut cfg = RunConfig::new(Mode::AppTaint, vec![fixture_path("fig6", "tir")]);
    cfg.rules = Some(fixture_path("fig6", "rules"));
    assert_eq!(run(&cfg).code, 1);
    cfg.implicit_flows = false;
    let out = run(&cfg);
    assert_eq!(out.code, 0);
    assert!(out.stdout.ends_with("0 findings\n"));
}

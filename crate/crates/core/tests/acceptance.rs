//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{analyze, cli, rules_file, strings, vcall_sites};
use sifa::cli::{Format, Mode};
use sifa::hssa::EdgeLabel;
use sifa::ir::parse_program;
use sifa::pipeline::{Analysis, Options};
use sifa::privilege::{collect_privilege_paths, detect_violations};
use sifa::ranking::rank_findings;
use sifa::rules::PrivilegeRule;
use sifa::taint::{run_taint_analysis, Finding, SourceSite};
use sifa::testkit::{
    control_dependence_bruteforce, generate_large, generate_program, interpret, load_fixture,
    oracle_privilege_paths, oracle_taint,
};

const FIXTURE_LIMIT: Duration = Duration::from_secs(1);
const ORACLE_LIMIT: Duration = Duration::from_secs(60);
const SOUNDNESS_LIMIT: Duration = Duration::from_secs(120);
const THROUGHPUT_LIMIT: Duration = Duration::from_secs(30);
const PEAK_MEMORY_LIMIT_KB: u64 = 4 * 1024 * 1024;
const SEEDS: u64 = 200;
const GEN_SIZE: usize = 60;
const LARGE_SIZE: usize = 100_000;
const INTERP_BUDGET: usize = 50_000;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(t: Instant, limit: Duration) -> Result<Duration, String> {
    let e = t.elapsed();
    ensure(e <= limit, || format!("took {e:.2?}, limit {limit:?}"))?;
    Ok(e)
}

fn cta_fig4() -> Check {
    let t = Instant::now();
    let mut detail = Vec::new();
    for (name, classes, targets) in [
        ("fig4_mustnot", vec!["B"], vec!["B::foo"]),
        ("fig4", vec!["B", "C"], vec!["B::foo", "C::foo"]),
    ] {
        let (a, _) = analyze(name, true);
        let m = a.types.of_name("test", "m");
        ensure(*m == strings(&classes), || format!("{name}: type(m) = {m:?}"))?;
        let sites = vcall_sites(&a, "test");
        ensure(sites.len() == 1, || format!("{name}: {} vcall sites", sites.len()))?;
        let got: BTreeSet<&str> = a.call_graph.targets("test", sites[0]).iter().map(String::as_str).collect();
        ensure(got == targets.iter().copied().collect(), || format!("{name}: targets {got:?}"))?;
        detail.push(format!("{name} m={m:?}"));
    }
    let e = within(t, FIXTURE_LIMIT)?;
    Ok(format!("{} ({e:.2?})", detail.join("; ")))
}

const FIG4_HSSA: &str = "\
H1 dphi test:0:1 %p@0 <- []
H2 dphi test:1:1 %q@0 <- []
H3 mergephi test:2:head *@* <- [H1, H2]
H4 uphi test:2:0 %p@0 <- [H1, H3]
H5 call-uphi test:2:1 *@* <- []
";

fn hssa_golden() -> Check {
    let t = Instant::now();
    let (a, _) = analyze("fig4", true);
    let h = &a.hssa["test"];
    let dump = h.dump();
    ensure(dump == FIG4_HSSA, || format!("dump differs:\n{dump}"))?;
    let must: Vec<_> = h.edges.iter().filter(|e| e.label == EdgeLabel::Must).map(|e| (e.from, e.to)).collect();
    ensure(must == [(1, 4)], || format!("must edges {must:?}"))?;
    let e = within(t, FIXTURE_LIMIT)?;
    Ok(format!("5 nodes, must H1->H4 ({e:.2?})"))
}

fn site_of(f: &Finding) -> (String, String) {
    (f.source.to_string(), f.sink.to_string())
}

fn interprocedural_taint() -> Check {
    let t = Instant::now();
    let (a, rs) = analyze("fig5", true);
    let fs = run_taint_analysis(&a, &rs);
    ensure(fs.len() == 1 && fs[0].call_distance == 1, || format!("fig5 findings {fs:?}"))?;
    let oracle = oracle_taint(&a, &rs);
    ensure(oracle == BTreeSet::from([site_of(&fs[0])]), || format!("fig5 oracle {oracle:?}"))?;

    let (a, rs) = analyze("friendfinder", true);
    let fs = run_taint_analysis(&a, &rs);
    ensure(fs.len() == 1, || format!("friendfinder findings {fs:?}"))?;
    let f = &fs[0];
    let callee = |func: &str, at| match &a.program.functions[func].inst(at).op {
        sifa::ir::Op::Call { callee, .. } => callee.clone(),
        _ => String::new(),
    };
    let SourceSite::Inst(src) = &f.source else {
        return Err("friendfinder source is not a call".into());
    };
    let pair = (callee(&src.func, src.inst_ref()), callee(&f.sink.func, f.sink.inst_ref()));
    ensure(
        pair == ("GetImagePathPtr".into(), "BluetoothOppClient_PushFile".into()),
        || format!("friendfinder pair {pair:?}"),
    )?;
    let oracle = oracle_taint(&a, &rs);
    ensure(oracle == BTreeSet::from([site_of(f)]), || format!("friendfinder oracle {oracle:?}"))?;
    let e = within(t, FIXTURE_LIMIT)?;
    Ok(format!("fig5 1 finding call_distance=1; friendfinder {} -> {} ({e:.2?})", pair.0, pair.1))
}

fn implicit_flow() -> Check {
    let t = Instant::now();
    let (a, rs) = analyze("fig6", true);
    let fs = run_taint_analysis(&a, &rs);
    ensure(fs.len() == 1, || format!("{} findings with pseudo-uses", fs.len()))?;
    let pseudo = fs[0].hops.iter().filter(|h| **h == sifa::taint::HopKind::Pseudo).count();
    ensure(pseudo >= 1, || "witness has no pseudo hop".into())?;
    let sink_arg = fs[0].path.last().map(|n| n.to_string()).unwrap_or_default();
    ensure(sink_arg == "main:%y3", || format!("sink argument {sink_arg}"))?;
    let (a, rs) = analyze("fig6", false);
    let off = run_taint_analysis(&a, &rs);
    ensure(off.is_empty(), || format!("{} findings without pseudo-uses", off.len()))?;
    let e = within(t, FIXTURE_LIMIT)?;
    Ok(format!("1 finding with {pseudo} pseudo hop(s), 0 without ({e:.2?})"))
}

fn violations_of(name: &str, rule_text: &str) -> Result<Vec<sifa::privilege::PathViolation>, String> {
    let (a, _) = analyze(name, true);
    let rs = rules_file(rule_text);
    let rule: &PrivilegeRule = rs.privilege.first().ok_or("no privilege rule")?;
    let traces = collect_privilege_paths(&a.call_graph, &a.program, rule, 64);
    let oracle = oracle_privilege_paths(&a.program, &a.call_graph, &rule.source, &rule.sink, &rule.checker, 64);
    let mine: Vec<_> = traces.iter().map(|t| (t.path.clone(), t.pvs.clone())).collect();
    ensure(mine == oracle, || format!("{name}: paths {mine:?} vs oracle {oracle:?}"))?;
    Ok(detect_violations(&traces, rule))
}

fn privilege_audit() -> Check {
    let t = Instant::now();
    let read = |n: &str| std::fs::read_to_string(sifa::testkit::fixture_path(n, "rules")).unwrap();
    let v = violations_of("fig8", &read("fig8"))?;
    ensure(v.is_empty(), || format!("fig8 {{PRV_1,PRV_2}}: {v:?}"))?;
    let v = violations_of("fig8", &read("fig8_extra"))?;
    ensure(v.len() == 1, || format!("fig8 {{PRV_1}}: {} violations", v.len()))?;
    ensure(v[0].offending == strings(&["PRV_2"]), || format!("offending {:?}", v[0].offending))?;
    ensure(
        v[0].trace.path == ["ButtonEvent", "evaluate", "BlueToothOp"],
        || format!("path {:?}", v[0].trace.path),
    )?;
    let v = violations_of("push", &read("push"))?;
    ensure(v.len() == 1, || format!("push: {} violations", v.len()))?;
    ensure(v[0].offending == strings(&["PRV_HTTP"]), || format!("push missing {:?}", v[0].offending))?;
    let e = within(t, FIXTURE_LIMIT)?;
    Ok(format!("fig8 0 then 1 (+PRV_2), push missing PRV_HTTP ({e:.2?})"))
}

fn generated(seed: u64, implicit_flows: bool) -> Analysis {
    let p = parse_program(&generate_program(seed, GEN_SIZE)).expect("generated program parses");
    Analysis::run(p, Options { implicit_flows }).expect("generated program analyzes")
}

const SOURCE_RULE: &str = "taint-rule gen severity=5 {\n  source Source return\n  sink Sink param=0\n}\n";
const EXT_RULE: &str = "taint-rule ext severity=3 {\n  source Ext param=1\n  sink Sink param=0\n}\n";

fn generated_rules() -> sifa::rules::RuleSet {
    rules_file(&format!("{SOURCE_RULE}{EXT_RULE}"))
}

fn oracle_equivalence() -> Check {
    let t = Instant::now();
    let rs = generated_rules();
    let mut pairs = 0;
    for seed in 0..SEEDS {
        let a = generated(seed, true);
        let engine: BTreeSet<_> = run_taint_analysis(&a, &rs).iter().map(site_of).collect();
        let oracle = oracle_taint(&a, &rs);
        ensure(engine == oracle, || format!("seed {seed}: engine {engine:?} oracle {oracle:?}"))?;
        pairs += engine.len();
    }
    let e = within(t, ORACLE_LIMIT)?;
    Ok(format!("{SEEDS} programs, {pairs} pairs equal ({e:.2?})"))
}

fn interpreter_soundness() -> Check {
    let t = Instant::now();
    let (mut runs, mut timeouts, mut checks) = (0, 0, 0usize);
    let mut seed = 0u64;
    while runs < SEEDS {
        let a = generated(seed, false);
        seed += 1;
        let Ok(st) = interpret(&a.program, INTERP_BUDGET) else {
            timeouts += 1;
            continue;
        };
        runs += 1;
        for (caller, at, callee) in &st.call_edges {
            checks += 1;
            ensure(
                a.call_graph.targets(caller, *at).contains(callee),
                || format!("seed {}: missing call edge {caller} {at:?} -> {callee}", seed - 1),
            )?;
        }
        for ((func, name), classes) in &st.classes {
            checks += 1;
            let got = a.types.of_name(func, name);
            ensure(classes.is_subset(got), || {
                format!("seed {}: {func}:%{name} ran as {classes:?}, CTA {got:?}", seed - 1)
            })?;
        }
        for (func, x, y) in &st.coinciding {
            checks += 1;
            ensure(a.facts[func].alias.may_alias(x, y), || {
                format!("seed {}: {func} %{x} and %{y} coincide but do not alias", seed - 1)
            })?;
        }
    }
    let e = within(t, SOUNDNESS_LIMIT)?;
    Ok(format!("{runs} terminating runs ({timeouts} timeouts skipped), {checks} facts, 0 violations ({e:.2?})"))
}

/// Controllers of `b` by the brute-force definition, closed transitively.
fn controllers(cdeps: &[BTreeSet<usize>], b: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::new();
    let mut work: Vec<usize> = cdeps[b].iter().copied().collect();
    while let Some(c) = work.pop() {
        if seen.insert(c) {
            work.extend(cdeps[c].iter().copied());
        }
    }
    seen
}

fn ranking() -> Check {
    let t = Instant::now();
    let (a, rs) = analyze("ranking", true);
    let findings = run_taint_analysis(&a, &rs);
    ensure(findings.len() == 6, || format!("{} findings", findings.len()))?;
    let sev: Vec<u8> = {
        let mut s: Vec<u8> = findings.iter().map(|f| f.severity).collect();
        s.sort_unstable_by(|x, y| y.cmp(x));
        s
    };
    ensure(sev == [9, 9, 5, 5, 5, 3], || format!("severities {sev:?}"))?;

    // Expected order from independently computed keys.
    let cdeps: BTreeMap<&str, Vec<BTreeSet<usize>>> = a
        .program
        .functions
        .keys()
        .map(|k| (k.as_str(), control_dependence_bruteforce(&a.facts[k].cfg)))
        .collect();
    let key = |f: &Finding| {
        let interproc = f.source.func() != f.sink.func;
        let ctl = (!interproc).then(|| {
            let src_block = match &f.source {
                SourceSite::Inst(s) => s.block,
                SourceSite::Param { .. } => 0,
            };
            let deps = &cdeps[f.sink.func.as_str()];
            controllers(deps, src_block)
                .symmetric_difference(&controllers(deps, f.sink.block))
                .count()
        });
        (
            std::cmp::Reverse(f.severity),
            u8::from(interproc),
            ctl.map_or((1, 0), |d| (0, d)),
            f.source.clone(),
            f.sink.clone(),
        )
    };
    let mut expected = findings.clone();
    expected.sort_by_key(key);
    let ranked = rank_findings(findings.clone(), None).findings;
    let order = |v: &[Finding]| v.iter().map(site_of).collect::<Vec<_>>();
    ensure(order(&ranked) == order(&expected), || {
        format!("ranked {:?} expected {:?}", order(&ranked), order(&expected))
    })?;
    let top = rank_findings(findings, Some(3)).findings;
    ensure(top == ranked[..3], || "cutoff 3 differs from the top of the full order".into())?;
    let mixed: BTreeSet<_> = ranked.iter().map(|f| (f.call_distance, f.control_distance)).collect();
    ensure(mixed.len() >= 3, || format!("distances not mixed: {mixed:?}"))?;
    let e = within(t, FIXTURE_LIMIT)?;
    Ok(format!("6 findings in key order, cutoff 3 is a prefix ({e:.2?})"))
}

fn peak_rss_kb() -> Option<u64> {
    let s = std::fs::read_to_string("/proc/self/status").ok()?;
    s.lines()
        .find_map(|l| l.strip_prefix("VmHWM:"))
        .and_then(|v| v.trim().trim_end_matches("kB").trim().parse().ok())
}

fn throughput() -> Check {
    let text = generate_large(7, LARGE_SIZE);
    // The large generator calibrates source density for this rule alone.
    let rs = rules_file(SOURCE_RULE);
    let t = Instant::now();
    let p = parse_program(&text).map_err(|e| e.to_string())?;
    let n = p.instruction_count();
    ensure(n >= LARGE_SIZE, || format!("only {n} instructions"))?;
    let a = Analysis::run(p, Options::default()).map_err(|e| e.to_string())?;
    let report = rank_findings(run_taint_analysis(&a, &rs), None);
    let e = within(t, THROUGHPUT_LIMIT)?;
    let rate = n as f64 / e.as_secs_f64();
    let mem = match peak_rss_kb() {
        Some(kb) => {
            ensure(kb <= PEAK_MEMORY_LIMIT_KB, || format!("peak memory {kb} kB"))?;
            format!("peak {} MB", kb / 1024)
        }
        None => "peak memory unavailable".into(),
    };
    Ok(format!(
        "{n} instructions, {} findings in {e:.2?} ({rate:.0} inst/s), {mem}",
        report.findings.len()
    ))
}

const FIXTURES: &[(&str, &str, Mode)] = &[
    ("fig5", "fig5", Mode::AppTaint),
    ("fig6", "fig6", Mode::AppTaint),
    ("fig7", "fig7", Mode::AppTaint),
    ("friendfinder", "friendfinder", Mode::AppTaint),
    ("ranking", "ranking", Mode::AppTaint),
    ("fig8", "fig8", Mode::ApiPrivilege),
    ("fig8", "fig8_extra", Mode::ApiPrivilege),
    ("push", "push", Mode::ApiPrivilege),
];

fn determinism() -> Check {
    let mut runs = 0;
    for &(name, rules, mode) in FIXTURES {
        for format in [Format::Text, Format::Tsv] {
            let first = cli(name, rules, mode, format);
            let second = cli(name, rules, mode, format);
            ensure(first == second, || format!("{name}/{rules} {format:?} differs between runs"))?;
            ensure(first.code != 2, || format!("{name}/{rules}: {}", first.stderr))?;
            runs += 2;
            if format == Format::Tsv && name == rules {
                if let Some(exp) = load_fixture(name).ok().and_then(|f| f.expected) {
                    ensure(first.stdout == exp, || format!("{name}: report differs from expected.tsv"))?;
                }
            }
        }
    }
    Ok(format!("{runs} runs over {} fixture configurations, byte-identical", FIXTURES.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("class type analysis on fig4", cta_fig4),
        ("heap SSA golden form", hssa_golden),
        ("interprocedural taint", interprocedural_taint),
        ("implicit flow", implicit_flow),
        ("privilege audit", privilege_audit),
        ("taint oracle equivalence", oracle_equivalence),
        ("soundness against the interpreter", interpreter_soundness),
        ("ranking and cutoff", ranking),
        ("throughput", throughput),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let res = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match res {
            Ok(msg) => println!("PASS {:>2} {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {msg}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

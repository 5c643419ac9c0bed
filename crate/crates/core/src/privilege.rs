//! Privilege-path audit: call paths from a privileged API to a low-level
//! sink, with the privileges checked along each path.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::callgraph::{enumerate_paths, CallGraph};
use crate::ir::{Constant, Function, Op, Program, Site};
use crate::rules::{PrivMode, PrivilegeRule};

/// Stands in for a privilege whose name is not a string constant.
pub const UNKNOWN_PRIV: &str = "UNKNOWN_PRIV";

/// Privileges checked anywhere in one function.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PrivSummary {
    pub privs: BTreeSet<String>,
    pub checks: Vec<Site>,
}

fn const_str(defs: &HashMap<&str, &Op>, name: &str) -> Option<String> {
    let mut cur = name;
    // Bounded so a malformed copy cycle cannot spin.
    for _ in 0..=defs.len() {
        match defs.get(cur)? {
            Op::Const(Constant::Str(s)) => return Some(s.clone()),
            Op::Copy(x) => cur = x,
            _ => return None,
        }
    }
    None
}

pub fn privilege_summary(f: &Function, checker: &str) -> PrivSummary {
    let defs: HashMap<&str, &Op> = f
        .insts()
        .filter_map(|(_, i)| i.result.as_deref().map(|r| (r, &i.op)))
        .collect();
    let mut s = PrivSummary::default();
    for (at, inst) in f.insts() {
        let Op::Call { callee, args } = &inst.op else { continue };
        if callee != checker {
            continue;
        }
        let name = args
            .first()
            .and_then(|a| const_str(&defs, a))
            .unwrap_or_else(|| UNKNOWN_PRIV.to_string());
        s.privs.insert(name);
        s.checks.push(Site::new(&f.name, at));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathTrace {
    pub rule: String,
    pub path: Vec<String>,
    pub pvs: BTreeSet<String>,
    pub checks: Vec<Site>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathViolation {
    pub trace: PathTrace,
    pub mode: PrivMode,
    /// Extra privileges (forbid-extra), missing ones (require-all), or empty
    /// (report-unchecked).
    pub offending: BTreeSet<String>,
}

/// Every simple call path of at most `bound` edges from the rule's source to
/// its sink, provided the source is reachable from a root.
pub fn collect_privilege_paths(
    cg: &CallGraph,
    p: &Program,
    rule: &PrivilegeRule,
    bound: usize,
) -> Vec<PathTrace> {
    if !cg.is_reachable(&rule.source) {
        return Vec::new();
    }
    let mut summaries: HashMap<&str, PrivSummary> = HashMap::new();
    let mut out = Vec::new();
    for path in enumerate_paths(cg, &rule.source, &rule.sink, bound) {
        let mut pvs = BTreeSet::new();
        let mut checks = Vec::new();
        for func in &path {
            let Some(f) = p.function(func) else { continue };
            let s = summaries
                .entry(f.name.as_str())
                .or_insert_with(|| privilege_summary(f, &rule.checker));
            pvs.extend(s.privs.iter().cloned());
            checks.extend(s.checks.iter().cloned());
        }
        out.push(PathTrace {
            rule: rule.name.clone(),
            path,
            pvs,
            checks,
        });
    }
    out
}

pub fn detect_violations(traces: &[PathTrace], rule: &PrivilegeRule) -> Vec<PathViolation> {
    traces
        .iter()
        .filter_map(|t| {
            let offending: BTreeSet<String> = match rule.mode {
                PrivMode::ForbidExtra => t.pvs.difference(&rule.upvs).cloned().collect(),
                PrivMode::RequireAll => rule.upvs.difference(&t.pvs).cloned().collect(),
                PrivMode::ReportUnchecked => {
                    if !t.pvs.is_empty() {
                        return None;
                    }
                    BTreeSet::new()
                }
            };
            if offending.is_empty() && rule.mode != PrivMode::ReportUnchecked {
                return None;
            }
            Some(PathViolation {
                trace: t.clone(),
                mode: rule.mode,
                offending,
            })
        })
        .collect()
}

/// A source all of whose paths to the declared sinks check nothing, so any
/// privilege demanded of its callers guards only unprivileged operations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnnecessaryCheck {
    pub source: String,
    pub sinks: BTreeSet<String>,
    pub paths: usize,
}

/// Summarizes report-unchecked rules per source.
pub fn unnecessary_checks(results: &[(PrivilegeRule, Vec<PathTrace>)]) -> Vec<UnnecessaryCheck> {
    let mut by_source: BTreeMap<&str, (bool, BTreeSet<String>, usize)> = BTreeMap::new();
    for (rule, traces) in results {
        if rule.mode != PrivMode::ReportUnchecked {
            continue;
        }
        let e = by_source.entry(&rule.source).or_insert((true, BTreeSet::new(), 0));
        e.1.insert(rule.sink.clone());
        e.2 += traces.len();
        e.0 &= traces.iter().all(|t| t.pvs.is_empty());
    }
    by_source
        .into_iter()
        .filter(|(_, (clean, _, n))| *clean && *n > 0)
        .map(|(s, (_, sinks, paths))| UnnecessaryCheck {
            source: s.to_string(),
            sinks,
            paths,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rule(mode: PrivMode, upvs: &[&str]) -> PrivilegeRule {
        PrivilegeRule {
            name: "r".into(),
            mode,
            source: "s".into(),
            sink: "t".into(),
            upvs: upvs.iter().map(|s| s.to_string()).collect(),
            checker: crate::rules::DEFAULT_CHECKER.into(),
        }
    }

    fn trace(pvs: &[&str]) -> PathTrace {
        PathTrace {
            rule: "r".into(),
            path: vec!["s".into(), "t".into()],
            pvs: pvs.iter().map(|s| s.to_string()).collect(),
            checks: vec![],
        }
    }

    #[test]
    fn require_all_reports_missing() {
        let v = detect_violations(&[trace(&["PRV_PUSH"])], &rule(PrivMode::RequireAll, &["PRV_PUSH", "PRV_HTTP"]));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].offending, BTreeSet::from(["PRV_HTTP".to_string()]));
    }

    #[test]
    fn forbid_extra_accepts_equal_sets() {
        let r = rule(PrivMode::ForbidExtra, &["PRV_1", "PRV_2"]);
        assert!(detect_violations(&[trace(&["PRV_1", "PRV_2"])], &r).is_empty());
    }

    #[test]
    fn report_unchecked_flags_empty_pvs() {
        let r = rule(PrivMode::ReportUnchecked, &[]);
        assert_eq!(detect_violations(&[trace(&[]), trace(&["X"])], &r).len(), 1);
    }

    #[test]
    fn checker_argument_through_copy_and_unknown() {
        let p = crate::ir::parse_program(
            "func f(%x) { L0: %a = const str \"P\"\n %b = %a\n call @Check(%b)\n call @Check(%x)\n ret }",
        )
        .unwrap();
        let s = privilege_summary(&p.functions["f"], "Check");
        assert_eq!(s.privs, BTreeSet::from(["P".to_string(), UNKNOWN_PRIV.to_string()]));
        assert_eq!(s.checks.len(), 2);
    }
}

//! Command-line driver: loads IR and rules, runs one analysis mode and
//! renders a deterministic report.

use std::fmt::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use thiserror::Error;

use crate::callgraph::DEFAULT_PATH_BOUND;
use crate::ir::{parse_program_files, ParseError, Program};
use crate::pipeline::{Analysis, AnalysisError, Options};
use crate::privilege::{collect_privilege_paths, detect_violations, unnecessary_checks, PathViolation, UnnecessaryCheck};
use crate::ranking::{rank_findings, RankedReport};
use crate::rules::{parse_rules, validate_rules, RuleError, RuleSet};
use crate::taint::run_taint_analysis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    AppTaint,
    ApiPrivilege,
    Dump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DumpKind {
    Cfg,
    Hssa,
    Callgraph,
    Types,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Tsv,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "sifa", version, about = "Static taint and privilege-path analysis")]
pub struct Args {
    #[arg(long, value_enum, default_value = "app-taint")]
    pub mode: Mode,
    /// Rule file; required for app-taint and api-privilege.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Keep only the top N ranked findings.
    #[arg(long)]
    pub cutoff: Option<usize>,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
    /// Maximum number of call edges in a privilege path.
    #[arg(long, default_value_t = DEFAULT_PATH_BOUND)]
    pub path_bound: usize,
    /// What to print in dump mode.
    #[arg(long, value_enum)]
    pub dump: Option<DumpKind>,
    /// Disable pseudo-uses of control predicates.
    #[arg(long)]
    pub no_implicit: bool,
    /// IR files, linked into one program.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub mode: Mode,
    pub dump: Option<DumpKind>,
    pub inputs: Vec<PathBuf>,
    pub rules: Option<PathBuf>,
    pub cutoff: Option<usize>,
    pub format: Format,
    pub path_bound: usize,
    pub implicit_flows: bool,
}

impl From<Args> for RunConfig {
    fn from(a: Args) -> Self {
        Self {
            mode: a.mode,
            dump: a.dump,
            inputs: a.files,
            rules: a.rules,
            cutoff: a.cutoff,
            format: a.format,
            path_bound: a.path_bound,
            implicit_flows: !a.no_implicit,
        }
    }
}

impl RunConfig {
    pub fn new(mode: Mode, inputs: Vec<PathBuf>) -> Self {
        Self {
            mode,
            dump: None,
            inputs,
            rules: None,
            cutoff: None,
            format: Format::Text,
            path_bound: DEFAULT_PATH_BOUND,
            implicit_flows: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("{}:{source}", path.display())]
    Rules {
        path: PathBuf,
        #[source]
        source: RuleError,
    },
    #[error("{}: {message}", path.display())]
    RuleCheck { path: PathBuf, message: String },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("{0}")]
    Usage(String),
}

/// Everything a run produced: the report, diagnostics for stderr and the
/// process exit code (0 clean, 1 findings, 2 input error).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub stdout: String,
    pub stderr: String,
    pub code: i32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Results {
    Taint(RankedReport),
    Privilege {
        violations: Vec<PathViolation>,
        unnecessary: Vec<UnnecessaryCheck>,
    },
}

impl Results {
    pub fn count(&self) -> usize {
        match self {
            Results::Taint(r) => r.findings.len(),
            Results::Privilege { violations, .. } => violations.len(),
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_program(inputs: &[PathBuf]) -> Result<Program, CliError> {
    let files = inputs
        .iter()
        .map(|p| Ok((p.display().to_string(), read(p)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(parse_program_files(&files)?)
}

/// Loads and checks the rule file, returning rule warnings alongside.
fn load_rules(cfg: &RunConfig, p: &Program) -> Result<(RuleSet, Vec<String>), CliError> {
    let path = cfg
        .rules
        .as_ref()
        .ok_or_else(|| CliError::Usage("--rules is required for this mode".into()))?;
    let rs = parse_rules(&read(path)?).map_err(|source| CliError::Rules {
        path: path.clone(),
        source,
    })?;
    let mut warnings = Vec::new();
    for d in validate_rules(&rs, p) {
        if d.is_error() {
            return Err(CliError::RuleCheck {
                path: path.clone(),
                message: d.to_string(),
            });
        }
        warnings.push(d.to_string());
    }
    Ok((rs, warnings))
}

fn analyze(cfg: &RunConfig) -> Result<(Analysis, Vec<String>), CliError> {
    let p = load_program(&cfg.inputs)?;
    let a = Analysis::run(
        p,
        Options {
            implicit_flows: cfg.implicit_flows,
        },
    )?;
    let warnings = a.warnings.iter().map(|d| d.to_string()).collect();
    Ok((a, warnings))
}

pub fn run_app_analysis(cfg: &RunConfig) -> Result<(Results, Vec<String>), CliError> {
    let (a, mut warnings) = analyze(cfg)?;
    let (rs, w) = load_rules(cfg, &a.program)?;
    warnings.extend(w);
    let findings = run_taint_analysis(&a, &rs);
    Ok((Results::Taint(rank_findings(findings, cfg.cutoff)), warnings))
}

pub fn run_api_analysis(cfg: &RunConfig) -> Result<(Results, Vec<String>), CliError> {
    let (a, mut warnings) = analyze(cfg)?;
    let (rs, w) = load_rules(cfg, &a.program)?;
    warnings.extend(w);
    let mut violations = Vec::new();
    let mut traced = Vec::new();
    for rule in &rs.privilege {
        let traces = collect_privilege_paths(&a.call_graph, &a.program, rule, cfg.path_bound);
        violations.extend(detect_violations(&traces, rule));
        traced.push((rule.clone(), traces));
    }
    let unnecessary = unnecessary_checks(&traced);
    Ok((
        Results::Privilege {
            violations,
            unnecessary,
        },
        warnings,
    ))
}

pub fn run_dump(cfg: &RunConfig) -> Result<String, CliError> {
    let what = cfg
        .dump
        .ok_or_else(|| CliError::Usage("--dump is required in dump mode".into()))?;
    let (a, _) = analyze(cfg)?;
    let mut out = String::new();
    match what {
        DumpKind::Cfg => {
            for f in a.program.functions.values() {
                out.push_str(&a.facts[&f.name].cfg.dump(f));
            }
        }
        DumpKind::Hssa => {
            for f in a.program.functions.values() {
                out.push_str(&a.hssa[&f.name].dump());
            }
        }
        DumpKind::Callgraph => out.push_str(&a.call_graph.dump()),
        DumpKind::Types => out.push_str(&a.types.dump(&a.program)),
    }
    Ok(out)
}

fn dist(d: Option<usize>) -> String {
    d.map_or_else(|| "N/A".to_string(), |d| d.to_string())
}

fn join(set: &std::collections::BTreeSet<String>) -> String {
    set.iter().cloned().collect::<Vec<_>>().join(",")
}

pub fn emit_report(results: &Results, format: Format) -> String {
    let mut out = String::new();
    match (results, format) {
        (Results::Taint(r), Format::Tsv) => {
            out.push_str("rule\tseverity\tsource_site\tsink_site\tcall_distance\tcontrol_distance\twitness_len\n");
            for f in &r.findings {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    f.rule,
                    f.severity,
                    f.source,
                    f.sink,
                    f.call_distance,
                    dist(f.control_distance),
                    f.witness_len()
                );
            }
        }
        (Results::Taint(r), Format::Text) => {
            out.push_str("taint findings\n");
            for (i, f) in r.findings.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{}. [{}] severity {}: {} -> {} (call distance {}, control distance {})",
                    i + 1,
                    f.rule,
                    f.severity,
                    f.source,
                    f.sink,
                    f.call_distance,
                    dist(f.control_distance)
                );
                let mut hops = f.path.first().map(ToString::to_string).unwrap_or_default();
                for (k, n) in f.hops.iter().zip(f.path.iter().skip(1)) {
                    let _ = write!(hops, " -{k}-> {n}");
                }
                let _ = writeln!(out, "   {hops}");
            }
            let _ = writeln!(out, "{} findings", r.findings.len());
        }
        (Results::Privilege { violations, .. }, Format::Tsv) => {
            out.push_str("rule\tmode\tpath\tpvs\toffending\n");
            for v in violations {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}",
                    v.trace.rule,
                    v.mode,
                    v.trace.path.join("->"),
                    join(&v.trace.pvs),
                    join(&v.offending)
                );
            }
        }
        (
            Results::Privilege {
                violations,
                unnecessary,
            },
            Format::Text,
        ) => {
            out.push_str("privilege violations\n");
            for (i, v) in violations.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{}. [{}] {}: {}\n   pvs {{{}}} offending {{{}}}",
                    i + 1,
                    v.trace.rule,
                    v.mode,
                    v.trace.path.join(" -> "),
                    join(&v.trace.pvs),
                    join(&v.offending)
                );
            }
            for u in unnecessary {
                let sinks: Vec<&str> = u.sinks.iter().map(String::as_str).collect();
                let _ = writeln!(
                    out,
                    "note: {} reaches {} only through unchecked paths ({} paths)",
                    u.source,
                    sinks.join(", "),
                    u.paths
                );
            }
            let _ = writeln!(out, "{} findings", violations.len());
        }
    }
    out
}

/// Runs one configuration end to end without touching the process state.
pub fn run(cfg: &RunConfig) -> Outcome {
    let res = match cfg.mode {
        Mode::AppTaint => run_app_analysis(cfg),
        Mode::ApiPrivilege => run_api_analysis(cfg),
        Mode::Dump => {
            return match run_dump(cfg) {
                Ok(stdout) => Outcome {
                    stdout,
                    stderr: String::new(),
                    code: 0,
                },
                Err(e) => Outcome {
                    stdout: String::new(),
                    stderr: format!("error: {e}\n"),
                    code: 2,
                },
            };
        }
    };
    match res {
        Ok((results, warnings)) => {
            let mut stderr = String::new();
            for w in warnings {
                let _ = writeln!(stderr, "{w}");
            }
            Outcome {
                stdout: emit_report(&results, cfg.format),
                stderr,
                code: i32::from(results.count() > 0),
            }
        }
        Err(e) => Outcome {
            stdout: String::new(),
            stderr: format!("error: {e}\n"),
            code: 2,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranking::RankedReport;

    #[test]
    fn empty_text_report() {
        let r = Results::Taint(RankedReport {
            findings: vec![],
            cutoff: None,
        });
        assert_eq!(emit_report(&r, Format::Text), "taint findings\n0 findings\n");
    }

    #[test]
    fn args_parse_spec_flags() {
        let a = Args::try_parse_from([
            "sifa", "--mode", "api-privilege", "--rules", "r.rules", "--cutoff", "3", "--format", "tsv",
            "--path-bound", "8", "a.tir", "b.tir",
        ])
        .unwrap();
        let c = RunConfig::from(a);
        assert_eq!(c.mode, Mode::ApiPrivilege);
        assert_eq!(c.cutoff, Some(3));
        assert_eq!(c.path_bound, 8);
        assert_eq!(c.inputs.len(), 2);
        assert!(Args::try_parse_from(["sifa", "--dump", "hssa", "--mode", "dump", "x.tir"]).is_ok());
    }

    #[test]
    fn missing_rules_is_an_input_error() {
        let mut c = RunConfig::new(Mode::AppTaint, vec![PathBuf::from("/nonexistent.tir")]);
        c.rules = Some(PathBuf::from("/nonexistent.rules"));
        assert_eq!(run(&c).code, 2);
    }
}

//! Declarative rule files: taint rules (sources, sinks, severities) and
//! privilege rules (allowed privilege sets, checker functions).

use std::collections::{BTreeSet, HashSet};
use std::fmt::{self, Write};

use thiserror::Error;

use crate::ir::{Op, Program, Severity};

pub const DEFAULT_CHECKER: &str = "CheckUserPrivilege";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Position {
    Return,
    Param(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaintSource {
    pub func: String,
    pub pos: Position,
    /// Seeds parameters of event handlers instead of call results.
    pub event: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaintSink {
    pub func: String,
    pub param: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairRole {
    Producer,
    Consumer,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pair {
    pub role: PairRole,
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaintRule {
    pub name: String,
    pub severity: u8,
    pub source: TaintSource,
    pub sinks: Vec<TaintSink>,
    pub pair: Option<Pair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrivMode {
    /// Violation when the path exercises a privilege outside the allowed set.
    ForbidExtra,
    /// Violation when an allowed privilege is never checked on the path.
    RequireAll,
    /// Violation when no privilege is checked at all.
    ReportUnchecked,
}

impl PrivMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PrivMode::ForbidExtra => "forbid-extra",
            PrivMode::RequireAll => "require-all",
            PrivMode::ReportUnchecked => "report-unchecked",
        }
    }
}

impl fmt::Display for PrivMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrivilegeRule {
    pub name: String,
    pub mode: PrivMode,
    pub source: String,
    pub sink: String,
    pub upvs: BTreeSet<String>,
    pub checker: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleSet {
    pub taint: Vec<TaintRule>,
    pub privilege: Vec<PrivilegeRule>,
}

impl RuleSet {
    pub fn is_empty(&self) -> bool {
        self.taint.is_empty() && self.privilege.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleErrorKind {
    Syntax,
    Duplicate,
    Severity,
    Invalid,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{line}:{col}: {message}")]
pub struct RuleError {
    pub kind: RuleErrorKind,
    pub line: u32,
    pub col: u32,
    pub message: String,
}

#[derive(Debug, Clone)]
struct Tok {
    text: String,
    line: u32,
    col: u32,
}

fn lex(text: &str) -> Vec<Tok> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        let mut cur = String::new();
        let mut start = 0;
        let flush = |cur: &mut String, start: usize, out: &mut Vec<Tok>| {
            if !cur.is_empty() {
                out.push(Tok {
                    text: std::mem::take(cur),
                    line: ln as u32 + 1,
                    col: start as u32 + 1,
                });
            }
        };
        for (i, c) in line.char_indices() {
            if c.is_whitespace() {
                flush(&mut cur, start, &mut out);
            } else if c == '{' || c == '}' {
                flush(&mut cur, start, &mut out);
                out.push(Tok {
                    text: c.to_string(),
                    line: ln as u32 + 1,
                    col: i as u32 + 1,
                });
            } else {
                if cur.is_empty() {
                    start = i;
                }
                cur.push(c);
            }
        }
        flush(&mut cur, start, &mut out);
    }
    out
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
    last: (u32, u32),
}

impl Parser {
    fn err(&self, kind: RuleErrorKind, at: Option<&Tok>, message: impl Into<String>) -> RuleError {
        let (line, col) = at.map_or(self.last, |t| (t.line, t.col));
        RuleError {
            kind,
            line,
            col,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self, what: &str) -> Result<Tok, RuleError> {
        match self.toks.get(self.pos).cloned() {
            Some(t) => {
                self.pos += 1;
                self.last = (t.line, t.col + t.text.len() as u32);
                Ok(t)
            }
            None => Err(self.err(RuleErrorKind::Syntax, None, format!("expected {what}, found end of input"))),
        }
    }

    fn expect(&mut self, text: &str) -> Result<Tok, RuleError> {
        let t = self.next(&format!("`{text}`"))?;
        if t.text != text {
            return Err(self.err(
                RuleErrorKind::Syntax,
                Some(&t),
                format!("expected `{text}`, found `{}`", t.text),
            ));
        }
        Ok(t)
    }

    fn ident(&mut self, what: &str) -> Result<String, RuleError> {
        let t = self.next(what)?;
        let ok = t
            .text
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == ':' || c == '.' || c == '-');
        if !ok || t.text.contains('=') {
            return Err(self.err(RuleErrorKind::Syntax, Some(&t), format!("expected {what}, found `{}`", t.text)));
        }
        Ok(t.text)
    }

    /// Parses `key=VALUE`.
    fn keyed(&mut self, key: &str) -> Result<(Tok, String), RuleError> {
        let t = self.next(&format!("`{key}=`"))?;
        match t.text.strip_prefix(key).and_then(|r| r.strip_prefix('=')) {
            Some(v) if !v.is_empty() => {
                let v = v.to_string();
                Ok((t, v))
            }
            _ => Err(self.err(
                RuleErrorKind::Syntax,
                Some(&t),
                format!("expected `{key}=...`, found `{}`", t.text),
            )),
        }
    }

    fn number(&self, tok: &Tok, v: &str) -> Result<i64, RuleError> {
        v.parse::<i64>()
            .map_err(|_| self.err(RuleErrorKind::Syntax, Some(tok), format!("`{v}` is not an integer")))
    }

    fn param(&mut self) -> Result<usize, RuleError> {
        let (t, v) = self.keyed("param")?;
        let n = self.number(&t, &v)?;
        usize::try_from(n).map_err(|_| self.err(RuleErrorKind::Syntax, Some(&t), "parameter position must be non-negative"))
    }

    fn at_close(&self) -> bool {
        self.peek().is_some_and(|t| t.text == "}")
    }

    fn taint_rule(&mut self) -> Result<TaintRule, RuleError> {
        let name = self.ident("a rule name")?;
        let (t, sev) = self.keyed("severity")?;
        let sev = self.number(&t, &sev)?;
        if !(1..=10).contains(&sev) {
            return Err(self.err(RuleErrorKind::Severity, Some(&t), format!("severity {sev} is outside 1..10")));
        }
        self.expect("{")?;
        self.expect("source")?;
        let func = self.ident("a source function")?;
        let pos = if self.peek().is_some_and(|t| t.text == "return") {
            self.pos += 1;
            Position::Return
        } else {
            Position::Param(self.param()?)
        };
        let event = if self.peek().is_some_and(|t| t.text.starts_with("type=")) {
            let (t, v) = self.keyed("type")?;
            if v != "event" {
                return Err(self.err(RuleErrorKind::Syntax, Some(&t), format!("unknown source type `{v}`")));
            }
            true
        } else {
            false
        };
        let mut sinks = Vec::new();
        while self.peek().is_some_and(|t| t.text == "sink") {
            self.pos += 1;
            let func = self.ident("a sink function")?;
            let param = self.param()?;
            sinks.push(TaintSink { func, param });
        }
        if sinks.is_empty() {
            let t = self.peek().cloned();
            return Err(self.err(RuleErrorKind::Syntax, t.as_ref(), "taint rule needs at least one sink"));
        }
        let pair = if self.peek().is_some_and(|t| t.text == "pair") {
            self.pos += 1;
            let t = self.next("`producer` or `consumer`")?;
            let role = match t.text.as_str() {
                "producer" => PairRole::Producer,
                "consumer" => PairRole::Consumer,
                other => {
                    return Err(self.err(
                        RuleErrorKind::Syntax,
                        Some(&t),
                        format!("expected `producer` or `consumer`, found `{other}`"),
                    ))
                }
            };
            Some(Pair {
                role,
                tag: self.ident("a pair tag")?,
            })
        } else {
            None
        };
        self.expect("}")?;
        Ok(TaintRule {
            name,
            severity: sev as u8,
            source: TaintSource { func, pos, event },
            sinks,
            pair,
        })
    }

    fn priv_rule(&mut self) -> Result<PrivilegeRule, RuleError> {
        let name = self.ident("a rule name")?;
        let (t, mode) = self.keyed("mode")?;
        let mode = match mode.as_str() {
            "forbid-extra" => PrivMode::ForbidExtra,
            "require-all" => PrivMode::RequireAll,
            "report-unchecked" => PrivMode::ReportUnchecked,
            other => {
                return Err(self.err(RuleErrorKind::Syntax, Some(&t), format!("unknown mode `{other}`")))
            }
        };
        let open = self.expect("{")?;
        self.expect("source")?;
        let source = self.ident("a source function")?;
        self.expect("sink")?;
        let sink = self.ident("a sink function")?;
        let mut upvs = BTreeSet::new();
        if self.peek().is_some_and(|t| t.text == "privs") {
            self.pos += 1;
            while !self.at_close() && !self.peek().is_some_and(|t| t.text == "checker") {
                upvs.insert(self.ident("a privilege name")?);
            }
        }
        let checker = if self.peek().is_some_and(|t| t.text == "checker") {
            self.pos += 1;
            self.ident("a checker function")?
        } else {
            DEFAULT_CHECKER.to_string()
        };
        self.expect("}")?;
        if upvs.is_empty() && mode != PrivMode::ReportUnchecked {
            return Err(self.err(
                RuleErrorKind::Invalid,
                Some(&open),
                format!("mode {mode} needs a non-empty `privs` list"),
            ));
        }
        Ok(PrivilegeRule {
            name,
            mode,
            source,
            sink,
            upvs,
            checker,
        })
    }
}

/// Parses a rule file. Fails on the first syntax error, duplicate rule name
/// or out-of-range severity.
pub fn parse_rules(text: &str) -> Result<RuleSet, RuleError> {
    let mut p = Parser {
        toks: lex(text),
        pos: 0,
        last: (1, 1),
    };
    let mut rs = RuleSet::default();
    let mut names: HashSet<String> = HashSet::new();
    while let Some(t) = p.peek().cloned() {
        p.pos += 1;
        let name_tok = p.peek().cloned();
        let name = match t.text.as_str() {
            "taint-rule" => {
                let r = p.taint_rule()?;
                let n = r.name.clone();
                rs.taint.push(r);
                n
            }
            "priv-rule" => {
                let r = p.priv_rule()?;
                let n = r.name.clone();
                rs.privilege.push(r);
                n
            }
            other => {
                return Err(p.err(
                    RuleErrorKind::Syntax,
                    Some(&t),
                    format!("expected `taint-rule` or `priv-rule`, found `{other}`"),
                ))
            }
        };
        if !names.insert(name.clone()) {
            return Err(p.err(
                RuleErrorKind::Duplicate,
                name_tok.as_ref(),
                format!("rule `{name}` is defined more than once"),
            ));
        }
    }
    Ok(rs)
}

/// Renders rules in the input grammar.
pub fn print_rules(rs: &RuleSet) -> String {
    let mut out = String::new();
    for r in &rs.taint {
        let _ = writeln!(out, "taint-rule {} severity={} {{", r.name, r.severity);
        let pos = match r.source.pos {
            Position::Return => "return".to_string(),
            Position::Param(i) => format!("param={i}"),
        };
        let ev = if r.source.event { " type=event" } else { "" };
        let _ = writeln!(out, "  source {} {pos}{ev}", r.source.func);
        for s in &r.sinks {
            let _ = writeln!(out, "  sink {} param={}", s.func, s.param);
        }
        if let Some(pair) = &r.pair {
            let role = match pair.role {
                PairRole::Producer => "producer",
                PairRole::Consumer => "consumer",
            };
            let _ = writeln!(out, "  pair {role} {}", pair.tag);
        }
        out.push_str("}\n");
    }
    for r in &rs.privilege {
        let _ = writeln!(out, "priv-rule {} mode={} {{", r.name, r.mode);
        let _ = writeln!(out, "  source {}", r.source);
        let _ = writeln!(out, "  sink {}", r.sink);
        if !r.upvs.is_empty() {
            let privs: Vec<&str> = r.upvs.iter().map(String::as_str).collect();
            let _ = writeln!(out, "  privs {}", privs.join(" "));
        }
        if r.checker != DEFAULT_CHECKER {
            let _ = writeln!(out, "  checker {}", r.checker);
        }
        out.push_str("}\n");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleDiagnostic {
    pub severity: Severity,
    pub rule: String,
    pub message: String,
}

impl RuleDiagnostic {
    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for RuleDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{sev}: rule {}: {}", self.rule, self.message)
    }
}

/// Checks rules against a program: warnings for functions the program
/// neither defines nor calls, errors for parameter positions out of range.
pub fn validate_rules(rs: &RuleSet, p: &Program) -> Vec<RuleDiagnostic> {
    // Largest argument count at any direct call of each external function.
    let mut called: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    for f in p.functions.values() {
        for (_, inst) in f.insts() {
            if let Op::Call { callee, args } = &inst.op {
                let e = called.entry(callee.as_str()).or_insert(0);
                *e = (*e).max(args.len());
            }
        }
    }
    let mut out = Vec::new();
    let check = |rule: &str, func: &str, param: Option<usize>, out: &mut Vec<RuleDiagnostic>| {
        let arity = match p.function(func) {
            Some(f) => f.params.len(),
            None => match called.get(func) {
                Some(&n) => n,
                None => {
                    out.push(RuleDiagnostic {
                        severity: Severity::Warning,
                        rule: rule.to_string(),
                        message: format!("function `{func}` does not occur in the program"),
                    });
                    return;
                }
            },
        };
        if let Some(i) = param {
            if i >= arity {
                out.push(RuleDiagnostic {
                    severity: Severity::Error,
                    rule: rule.to_string(),
                    message: format!("param={i} is out of range for `{func}` with {arity} parameter(s)"),
                });
            }
        }
    };
    for r in &rs.taint {
        match (r.source.pos, r.source.event) {
            (Position::Return, true) => out.push(RuleDiagnostic {
                severity: Severity::Error,
                rule: r.name.clone(),
                message: "event sources must name a parameter".into(),
            }),
            (Position::Param(i), _) => check(&r.name, &r.source.func, Some(i), &mut out),
            (Position::Return, false) => check(&r.name, &r.source.func, None, &mut out),
        }
        if r.source.event {
            if let Some(f) = p.function(&r.source.func) {
                if !f.attrs.event {
                    out.push(RuleDiagnostic {
                        severity: Severity::Warning,
                        rule: r.name.clone(),
                        message: format!("`{}` is not marked as an event handler", f.name),
                    });
                }
            }
        }
        for s in &r.sinks {
            check(&r.name, &s.func, Some(s.param), &mut out);
        }
    }
    for r in &rs.privilege {
        check(&r.name, &r.source, None, &mut out);
        check(&r.name, &r.sink, None, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_program;

    #[test]
    fn leak_rule() {
        let rs = parse_rules(
            "taint-rule leak severity=5 { source GetImagePathPtr return  sink BluetoothOppClient_PushFile param=0 }",
        )
        .unwrap();
        assert_eq!(rs.taint.len(), 1);
        let r = &rs.taint[0];
        assert_eq!(r.source.pos, Position::Return);
        assert_eq!(r.sinks[0].func, "BluetoothOppClient_PushFile");
    }

    #[test]
    fn push_rule() {
        let rs = parse_rules(
            "priv-rule push mode=require-all { source PushService_Register  sink glibc_send  privs PRV_PUSH PRV_HTTP }",
        )
        .unwrap();
        let r = &rs.privilege[0];
        assert_eq!(r.mode, PrivMode::RequireAll);
        assert_eq!(r.upvs.len(), 2);
        assert_eq!(r.checker, DEFAULT_CHECKER);
    }

    #[test]
    fn empty_and_comment_only_files() {
        assert!(parse_rules("").unwrap().is_empty());
        assert!(parse_rules("# nothing\n\n").unwrap().is_empty());
    }

    #[test]
    fn errors() {
        let e = parse_rules("taint-rule a severity=11 { source f return sink g param=0 }").unwrap_err();
        assert_eq!(e.kind, RuleErrorKind::Severity);
        let e = parse_rules(
            "taint-rule a severity=1 { source f return sink g param=0 }\n\
             taint-rule a severity=2 { source f return sink g param=0 }",
        )
        .unwrap_err();
        assert_eq!((e.kind, e.line), (RuleErrorKind::Duplicate, 2));
        let e = parse_rules("taint-rule a severity=1 { source f sink g param=0 }").unwrap_err();
        assert_eq!(e.kind, RuleErrorKind::Syntax);
        let e = parse_rules("priv-rule p mode=forbid-extra { source f sink g }").unwrap_err();
        assert_eq!(e.kind, RuleErrorKind::Invalid);
    }

    #[test]
    fn round_trip() {
        let text = "taint-rule cam severity=7 {\n  source OnCameraPreviewed param=1 type=event\n\
                    sink Send param=0\n  sink Log param=1\n  pair producer ipc1\n}\n\
                    priv-rule bt mode=forbid-extra {\n  source ButtonEvent\n  sink BlueToothOp\n\
                    privs PRV_1 PRV_2\n  checker CheckUserPriv\n}\n";
        let rs = parse_rules(text).unwrap();
        assert_eq!(parse_rules(&print_rules(&rs)).unwrap(), rs);
    }

    #[test]
    fn validation_against_program() {
        let p = parse_program(
            "func main(%a, %b) entry { L0: %x = call @Src()\n call @Snk(%x)\n ret }",
        )
        .unwrap();
        let ok = parse_rules("taint-rule r severity=1 { source Src return sink Snk param=0 }").unwrap();
        assert!(validate_rules(&ok, &p).is_empty());
        let missing = parse_rules("taint-rule r severity=1 { source Nope return sink Snk param=0 }").unwrap();
        let d = validate_rules(&missing, &p);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].severity, Severity::Warning);
        let range = parse_rules("taint-rule r severity=1 { source main param=3 sink Snk param=0 }").unwrap();
        let d = validate_rules(&range, &p);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].severity, Severity::Error);
    }
}

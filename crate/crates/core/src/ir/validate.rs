use std::collections::HashMap;
use std::fmt;

use super::{build_cfg, Function, InstRef, Op, Program};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub func: String,
    pub line: u32,
    pub message: String,
}

impl Diagnostic {
    fn error(f: &Function, line: u32, message: String) -> Self {
        Self {
            severity: Severity::Error,
            func: f.name.clone(),
            line,
            message,
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{sev}: {}:{}: {}", self.func, self.line, self.message)
    }
}

/// Where a name is defined: a parameter or an instruction.
#[derive(Clone, Copy)]
enum Def {
    Param,
    Inst(InstRef),
}

/// Checks single definition, def-dominates-use, phi placement and arity for
/// every function. Dead blocks are reported as warnings and otherwise
/// skipped.
pub fn validate_ssa(p: &Program) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for f in p.functions.values() {
        validate_function(f, &mut out);
    }
    out
}

fn validate_function(f: &Function, out: &mut Vec<Diagnostic>) {
    let cfg = match build_cfg(f) {
        Ok(cfg) => cfg,
        Err(e) => {
            out.push(Diagnostic::error(f, f.line, e.to_string()));
            return;
        }
    };
    let dom = cfg.dominators();

    let mut defs: HashMap<&str, Def> = HashMap::new();
    for p in &f.params {
        if defs.insert(p, Def::Param).is_some() {
            out.push(Diagnostic::error(f, f.line, format!("%{p} is defined more than once")));
        }
    }
    for (at, inst) in f.insts() {
        if let Some(r) = &inst.result {
            if defs.insert(r, Def::Inst(at)).is_some() {
                out.push(Diagnostic::error(f, inst.line, format!("%{r} is defined more than once")));
            }
        }
    }

    for (b, block) in f.blocks.iter().enumerate() {
        if !cfg.is_live(b) {
            out.push(Diagnostic {
                severity: Severity::Warning,
                func: f.name.clone(),
                line: block.insts.first().map_or(f.line, |i| i.line),
                message: format!("block {} is unreachable", block.label),
            });
            continue;
        }
        let mut preds: Vec<&str> = cfg.preds[b]
            .iter()
            .map(|&p| f.blocks[p].label.as_str())
            .collect();
        preds.sort_unstable();
        preds.dedup();
        let mut in_head = true;
        for (i, inst) in block.insts.iter().enumerate() {
            let here = InstRef::new(b, i);
            if let Op::Phi(ins) = &inst.op {
                if !in_head {
                    out.push(Diagnostic::error(f, inst.line, "phi after a non-phi instruction".into()));
                }
                let mut labels: Vec<&str> = ins.iter().map(|(_, l)| l.as_str()).collect();
                labels.sort_unstable();
                if labels.len() != preds.len() {
                    out.push(Diagnostic::error(
                        f,
                        inst.line,
                        format!("phi has {} inputs but block {} has {} predecessors", labels.len(), block.label, preds.len()),
                    ));
                } else if labels != preds {
                    out.push(Diagnostic::error(
                        f,
                        inst.line,
                        format!("phi labels do not match the predecessors of {}", block.label),
                    ));
                }
                for (v, l) in ins {
                    let Some(pb) = f.block_index(l) else { continue };
                    if !cfg.is_live(pb) {
                        continue;
                    }
                    match defs.get(v.as_str()) {
                        None => out.push(undefined_use(f, inst.line, v)),
                        Some(Def::Param) => {}
                        Some(Def::Inst(d)) => {
                            if !dom.dominates(d.block, pb) {
                                out.push(Diagnostic::error(
                                    f,
                                    inst.line,
                                    format!("use before def: %{v} does not reach the end of {l}"),
                                ));
                            }
                        }
                    }
                }
                continue;
            }
            in_head = false;
            for v in inst.op.uses() {
                match defs.get(v) {
                    None => out.push(undefined_use(f, inst.line, v)),
                    Some(Def::Param) => {}
                    Some(Def::Inst(d)) => {
                        let ok = if d.block == b {
                            d.idx < here.idx
                        } else {
                            dom.dominates(d.block, b)
                        };
                        if !ok {
                            out.push(Diagnostic::error(
                                f,
                                inst.line,
                                format!("use before def: %{v} is not dominated by its definition"),
                            ));
                        }
                    }
                }
            }
        }
    }
}

fn undefined_use(f: &Function, line: u32, v: &str) -> Diagnostic {
    Diagnostic::error(f, line, format!("use before def: %{v} is never defined"))
}

#[cfg(test)]
mod tests {
    use super::super::parse_program;
    use super::*;

    fn diags(text: &str) -> Vec<Diagnostic> {
        validate_ssa(&parse_program(text).unwrap())
    }

    #[test]
    fn well_formed_function_has_no_diagnostics() {
        let d = diags(
            "func f(%c) {\nL0: %a = const 1\n br %c, L1, L2\nL1: %b = const 2\n jmp L3\n\
             L2: jmp L3\nL3: %x = phi [%b, L1], [%a, L2]\n ret %x }",
        );
        assert!(d.is_empty(), "{d:?}");
    }

    #[test]
    fn duplicate_definition_names_the_variable() {
        let d = diags(
            "func f(%c) {\nL0: %x = const 1\n br %c, L1, L2\nL1: %x = const 2\n jmp L2\nL2: ret }",
        );
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("%x"));
    }

    #[test]
    fn use_before_def_in_block_and_across_blocks() {
        let d = diags("func f() {\nL0: %a = binop %y, %y\n %y = const 1\n ret }");
        assert!(d.iter().all(|d| d.message.starts_with("use before def")));
        assert_eq!(d.len(), 2);
        let d = diags(
            "func f(%c) {\nL0: br %c, L1, L2\nL1: %y = const 1\n jmp L2\nL2: ret %y }",
        );
        assert_eq!(d.len(), 1);
        assert!(d[0].message.starts_with("use before def"));
    }

    #[test]
    fn phi_arity_and_placement() {
        let d = diags(
            "func f(%c) {\nL0: br %c, L1, L2\nL1: jmp L2\nL2: %x = phi [%c, L1]\n ret }",
        );
        assert_eq!(d.len(), 1);
        let d = diags(
            "func f(%c) {\nL0: jmp L1\nL1: %a = const 1\n %x = phi [%c, L0]\n ret }",
        );
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("phi after"));
    }

    #[test]
    fn dead_block_is_a_warning() {
        let d = diags("func f() {\nL0: ret\nL1: %z = binop %q, %q\n jmp L0 }");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].severity, Severity::Warning);
    }
}

use std::fmt::Write;

use super::{Constant, Function, Inst, Op, Program};

fn args(out: &mut String, args: &[String]) {
    out.push('(');
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "%{a}");
    }
    out.push(')');
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

pub(crate) fn print_inst(out: &mut String, inst: &Inst) {
    if let Some(r) = &inst.result {
        let _ = write!(out, "%{r} = ");
    }
    match &inst.op {
        Op::Phi(ins) => {
            out.push_str("phi ");
            for (i, (v, l)) in ins.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                let _ = write!(out, "[%{v}, {l}]");
            }
        }
        Op::New(c) => {
            let _ = write!(out, "new {c}");
        }
        Op::Const(Constant::Int(v)) => {
            let _ = write!(out, "const {v}");
        }
        Op::Const(Constant::Str(s)) => {
            let _ = write!(out, "const str {}", escape(s));
        }
        Op::Copy(a) => {
            let _ = write!(out, "%{a}");
        }
        Op::Binop(a, b) => {
            let _ = write!(out, "binop %{a}, %{b}");
        }
        Op::Load { base, offset } => {
            let _ = write!(out, "load %{base} @ {offset}");
        }
        Op::Store {
            base,
            offset,
            value,
        } => {
            let _ = write!(out, "store %{base} @ {offset}, %{value}");
        }
        Op::LoadIdx { base, index } => {
            let _ = write!(out, "loadidx %{base}, %{index}");
        }
        Op::StoreIdx { base, index, value } => {
            let _ = write!(out, "storeidx %{base}, %{index}, %{value}");
        }
        Op::Call { callee, args: a } => {
            let _ = write!(out, "call @{callee}");
            args(out, a);
        }
        Op::VCall {
            receiver,
            slot,
            args: a,
        } => {
            let _ = write!(out, "vcall %{receiver} slot {slot} ");
            args(out, a);
        }
        Op::ICall { target, args: a } => {
            let _ = write!(out, "icall %{target}");
            args(out, a);
        }
        Op::FuncAddr(f) => {
            let _ = write!(out, "funcaddr @{f}");
        }
        Op::Br {
            cond,
            then_label,
            else_label,
        } => {
            let _ = write!(out, "br %{cond}, {then_label}, {else_label}");
        }
        Op::Jmp(l) => {
            let _ = write!(out, "jmp {l}");
        }
        Op::Ret(None) => out.push_str("ret"),
        Op::Ret(Some(v)) => {
            let _ = write!(out, "ret %{v}");
        }
    }
    if !inst.pseudo.is_empty() {
        out.push_str("  # pseudo-use");
        for p in &inst.pseudo {
            let _ = write!(out, " %{p}");
        }
    }
}

pub(crate) fn print_function(out: &mut String, f: &Function) {
    let _ = write!(out, "func {}(", f.name);
    for (i, p) in f.params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "%{p}");
    }
    out.push(')');
    if f.attrs.entry {
        out.push_str(" entry");
    }
    if f.attrs.event {
        out.push_str(" event");
    }
    out.push_str(" {\n");
    for b in &f.blocks {
        let _ = writeln!(out, "{}:", b.label);
        for inst in &b.insts {
            out.push_str("  ");
            print_inst(out, inst);
            out.push('\n');
        }
    }
    out.push_str("}\n");
}

/// Renders a program in the textual IR. Pseudo-uses are emitted as trailing
/// comments, so they do not survive a reparse.
pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for c in p.classes.values() {
        let _ = write!(out, "class {}", c.name);
        if let Some(parent) = &c.parent {
            let _ = write!(out, " : {parent}");
        }
        out.push_str(" {\n");
        for f in &c.fields {
            let _ = writeln!(out, "  field {} @ {}", f.name, f.offset);
        }
        if !c.vtable.is_empty() {
            out.push_str("  vtable {");
            for (slot, f) in &c.vtable {
                let _ = write!(out, " {slot} : {f}");
            }
            out.push_str(" }\n");
        }
        out.push_str("}\n");
    }
    for f in p.functions.values() {
        if !out.is_empty() {
            out.push('\n');
        }
        print_function(&mut out, f);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::parse_program;
    use super::*;

    #[test]
    fn round_trip_keeps_structure() {
        let text = r#"
class A { field x @ 0 vtable { 0 : A::f } }
class B : A { }
func A::f(%this) { L0: ret }
func main(%p) entry event {
L0:
  %a = new B
  %s = const str "a\"b\\c"
  store %p @ 0, %a
  %v = vcall %a slot 0 ()
  br %p, L1, L1
L1:
  ret %v
}
"#;
        let p = parse_program(text).unwrap();
        let printed = print_program(&p);
        assert_eq!(parse_program(&printed).unwrap(), p);
    }
}

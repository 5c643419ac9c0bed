use std::collections::{BTreeMap, HashSet};
use std::fmt;

use thiserror::Error;

use super::{Block, ClassDecl, Constant, Field, FuncAttrs, Function, Inst, Op, Program};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    Duplicate,
    Undefined,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParseErrorKind::Syntax => "syntax error",
            ParseErrorKind::Duplicate => "duplicate definition",
            ParseErrorKind::Undefined => "undefined reference",
        })
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{}{line}:{col}: {kind}: {message}", file.as_ref().map(|f| format!("{f}:")).unwrap_or_default())]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub file: Option<String>,
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl ParseError {
    fn new(kind: ParseErrorKind, line: u32, col: u32, message: impl Into<String>) -> Self {
        Self {
            kind,
            file: None,
            line,
            col,
            message: message.into(),
        }
    }

    fn in_file(mut self, file: &str) -> Self {
        self.file.get_or_insert_with(|| file.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Local(String),
    Global(String),
    Int(i64),
    Str(String),
    Punct(char),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Local(s) => write!(f, "`%{s}`"),
            Tok::Global(s) => write!(f, "`@{s}`"),
            Tok::Int(i) => write!(f, "`{i}`"),
            Tok::Str(s) => write!(f, "{s:?}"),
            Tok::Punct(c) => write!(f, "`{c}`"),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: u32,
    col: u32,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '$')
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);

    // Reads an identifier body; `::` joins segments when followed by an
    // identifier start.
    let ident_at = |start: usize| -> usize {
        let mut j = start;
        loop {
            while j < chars.len() && is_ident_char(chars[j]) {
                j += 1;
            }
            if j + 2 < chars.len()
                && chars[j] == ':'
                && chars[j + 1] == ':'
                && is_ident_start(chars[j + 2])
            {
                j += 2;
                continue;
            }
            return j;
        }
    };

    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let tok = if is_ident_start(c) {
            i = ident_at(i);
            Tok::Ident(chars[start..i].iter().collect())
        } else if c == '%' || (c == '@' && i + 1 < chars.len() && is_ident_start(chars[i + 1])) {
            let body = i + 1;
            i = if c == '%' {
                let mut j = body;
                while j < chars.len() && is_ident_char(chars[j]) {
                    j += 1;
                }
                j
            } else {
                ident_at(body)
            };
            if i == body {
                return Err(ParseError::new(
                    ParseErrorKind::Syntax,
                    tl,
                    tc,
                    "expected a name after `%`",
                ));
            }
            let name: String = chars[body..i].iter().collect();
            if c == '%' {
                Tok::Local(name)
            } else {
                Tok::Global(name)
            }
        } else if c.is_ascii_digit()
            || (c == '-' && i + 1 < chars.len() && chars[i + 1].is_ascii_digit())
        {
            i += 1;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            let v = s.parse::<i64>().map_err(|_| {
                ParseError::new(ParseErrorKind::Syntax, tl, tc, format!("integer `{s}` out of range"))
            })?;
            Tok::Int(v)
        } else if c == '"' {
            i += 1;
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None | Some('\n') => {
                        return Err(ParseError::new(
                            ParseErrorKind::Syntax,
                            tl,
                            tc,
                            "unterminated string literal",
                        ))
                    }
                    Some('"') => {
                        i += 1;
                        break;
                    }
                    Some('\\') => {
                        let esc = chars.get(i + 1).copied();
                        s.push(match esc {
                            Some('n') => '\n',
                            Some('t') => '\t',
                            Some('"') => '"',
                            Some('\\') => '\\',
                            _ => {
                                return Err(ParseError::new(
                                    ParseErrorKind::Syntax,
                                    tl,
                                    tc,
                                    "invalid escape in string literal",
                                ))
                            }
                        });
                        i += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            Tok::Str(s)
        } else if "{}()[],:=@".contains(c) {
            i += 1;
            Tok::Punct(c)
        } else {
            return Err(ParseError::new(
                ParseErrorKind::Syntax,
                tl,
                tc,
                format!("unexpected character `{c}`"),
            ));
        };
        col += (i - start) as u32;
        out.push(Spanned {
            tok,
            line: tl,
            col: tc,
        });
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    eof_line: u32,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn peek_at(&self, n: usize) -> Option<&Tok> {
        self.toks.get(self.pos + n).map(|s| &s.tok)
    }

    fn here(&self) -> (u32, u32) {
        self.toks
            .get(self.pos)
            .map(|s| (s.line, s.col))
            .unwrap_or((self.eof_line, 1))
    }

    fn prev_line(&self) -> u32 {
        self.pos
            .checked_sub(1)
            .and_then(|p| self.toks.get(p))
            .map(|s| s.line)
            .unwrap_or(1)
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        let (l, c) = self.here();
        ParseError::new(ParseErrorKind::Syntax, l, c, msg)
    }

    fn unexpected(&self, what: &str) -> ParseError {
        match self.peek() {
            Some(t) => self.err(format!("expected {what}, found {t}")),
            None => self.err(format!("expected {what}, found end of input")),
        }
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|s| s.tok.clone());
        self.pos += 1;
        t
    }

    fn punct(&mut self, c: char) -> Result<(), ParseError> {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{c}`")))
        }
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.is_keyword(kw) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{kw}`")))
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn local(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Local(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.unexpected("an SSA name")),
        }
    }

    fn global(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Global(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.unexpected("a function reference `@name`")),
        }
    }

    fn int(&mut self) -> Result<i64, ParseError> {
        match self.peek() {
            Some(Tok::Int(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(v)
            }
            _ => Err(self.unexpected("an integer")),
        }
    }

    fn program(&mut self) -> Result<Program, ParseError> {
        let mut prog = Program::default();
        while let Some(tok) = self.peek() {
            let (line, col) = self.here();
            match tok {
                Tok::Ident(s) if s == "class" => {
                    let class = self.class()?;
                    if prog.classes.contains_key(&class.name) {
                        return Err(ParseError::new(
                            ParseErrorKind::Duplicate,
                            line,
                            col,
                            format!("class `{}` defined twice", class.name),
                        ));
                    }
                    prog.classes.insert(class.name.clone(), class);
                }
                Tok::Ident(s) if s == "func" => {
                    let func = self.function()?;
                    if prog.functions.contains_key(&func.name) {
                        return Err(ParseError::new(
                            ParseErrorKind::Duplicate,
                            line,
                            col,
                            format!("function `{}` defined twice", func.name),
                        ));
                    }
                    prog.functions.insert(func.name.clone(), func);
                }
                _ => return Err(self.unexpected("`class` or `func`")),
            }
        }
        Ok(prog)
    }

    fn class(&mut self) -> Result<ClassDecl, ParseError> {
        let line = self.here().0;
        self.keyword("class")?;
        let name = self.ident("a class name")?;
        let parent = if self.eat_punct(':') {
            Some(self.ident("a parent class name")?)
        } else {
            None
        };
        self.punct('{')?;
        let mut fields: Vec<Field> = Vec::new();
        let mut vtable = BTreeMap::new();
        loop {
            if self.eat_punct('}') {
                break;
            }
            let (l, c) = self.here();
            if self.is_keyword("field") {
                self.pos += 1;
                let fname = self.ident("a field name")?;
                self.punct('@')?;
                let offset = self.int()?;
                if offset < 0 {
                    return Err(ParseError::new(
                        ParseErrorKind::Syntax,
                        l,
                        c,
                        format!("field `{fname}` has a negative offset"),
                    ));
                }
                if let Some(prev) = fields.iter().find(|f| f.name == fname || f.offset == offset) {
                    return Err(ParseError::new(
                        ParseErrorKind::Duplicate,
                        l,
                        c,
                        format!(
                            "field `{fname}` @ {offset} clashes with `{}` @ {} in class `{name}`",
                            prev.name, prev.offset
                        ),
                    ));
                }
                fields.push(Field {
                    name: fname,
                    offset,
                });
            } else if self.is_keyword("vtable") {
                self.pos += 1;
                self.punct('{')?;
                let mut any = false;
                while !self.eat_punct('}') {
                    let (l, c) = self.here();
                    let slot = self.int()?;
                    let slot = u32::try_from(slot).map_err(|_| {
                        ParseError::new(ParseErrorKind::Syntax, l, c, "vtable slot out of range")
                    })?;
                    self.punct(':')?;
                    let fname = self.ident("a function name")?;
                    if vtable.insert(slot, fname).is_some() {
                        return Err(ParseError::new(
                            ParseErrorKind::Duplicate,
                            l,
                            c,
                            format!("vtable slot {slot} declared twice in class `{name}`"),
                        ));
                    }
                    any = true;
                }
                if !any {
                    return Err(self.err("empty vtable"));
                }
            } else {
                return Err(self.unexpected("`field`, `vtable` or `}`"));
            }
        }
        Ok(ClassDecl {
            name,
            parent,
            fields,
            vtable,
            line,
        })
    }

    fn function(&mut self) -> Result<Function, ParseError> {
        let line = self.here().0;
        self.keyword("func")?;
        let name = self.ident("a function name")?;
        self.punct('(')?;
        let mut params = Vec::new();
        if !self.eat_punct(')') {
            loop {
                params.push(self.local()?);
                if self.eat_punct(')') {
                    break;
                }
                self.punct(',')?;
            }
        }
        let mut attrs = FuncAttrs::default();
        loop {
            if self.is_keyword("entry") {
                attrs.entry = true;
            } else if self.is_keyword("event") {
                attrs.event = true;
            } else {
                break;
            }
            self.pos += 1;
        }
        self.punct('{')?;
        let mut blocks: Vec<Block> = Vec::new();
        loop {
            if self.eat_punct('}') {
                break;
            }
            let (l, c) = self.here();
            let label = match (self.peek(), self.peek_at(1)) {
                (Some(Tok::Ident(s)), Some(Tok::Punct(':'))) => s.clone(),
                _ => return Err(self.unexpected("a block label")),
            };
            self.pos += 2;
            if blocks.iter().any(|b| b.label == label) {
                return Err(ParseError::new(
                    ParseErrorKind::Duplicate,
                    l,
                    c,
                    format!("label `{label}` defined twice in `{name}`"),
                ));
            }
            let mut insts: Vec<Inst> = Vec::new();
            loop {
                let at_label = matches!(
                    (self.peek(), self.peek_at(1)),
                    (Some(Tok::Ident(_)), Some(Tok::Punct(':')))
                );
                if at_label || matches!(self.peek(), Some(Tok::Punct('}')) | None) {
                    break;
                }
                if insts.last().is_some_and(|i| i.op.is_terminator()) {
                    return Err(self.err(format!("instruction after terminator in block `{label}`")));
                }
                insts.push(self.inst()?);
            }
            if !insts.last().is_some_and(|i| i.op.is_terminator()) {
                return Err(ParseError::new(
                    ParseErrorKind::Syntax,
                    l,
                    c,
                    format!("block `{label}` does not end in br, jmp or ret"),
                ));
            }
            blocks.push(Block { label, insts });
        }
        if blocks.is_empty() {
            return Err(self.err(format!("function `{name}` has no blocks")));
        }
        Ok(Function {
            name,
            params,
            attrs,
            blocks,
            line,
        })
    }

    fn args(&mut self) -> Result<Vec<String>, ParseError> {
        self.punct('(')?;
        let mut args = Vec::new();
        if self.eat_punct(')') {
            return Ok(args);
        }
        loop {
            args.push(self.local()?);
            if self.eat_punct(')') {
                return Ok(args);
            }
            self.punct(',')?;
        }
    }

    fn call_tail(&mut self, kw: &str) -> Result<Op, ParseError> {
        Ok(match kw {
            "call" => {
                let callee = self.global()?;
                let args = self.args()?;
                Op::Call { callee, args }
            }
            "vcall" => {
                let receiver = self.local()?;
                self.keyword("slot")?;
                let (l, c) = self.here();
                let slot = u32::try_from(self.int()?).map_err(|_| {
                    ParseError::new(ParseErrorKind::Syntax, l, c, "vtable slot out of range")
                })?;
                let args = self.args()?;
                Op::VCall {
                    receiver,
                    slot,
                    args,
                }
            }
            _ => {
                let target = self.local()?;
                let args = self.args()?;
                Op::ICall { target, args }
            }
        })
    }

    fn inst(&mut self) -> Result<Inst, ParseError> {
        let line = self.here().0;
        // Errors are reported on the line the instruction starts on, even when
        // the offending token is the first one of the next line.
        self.inst_body(line).map_err(|mut e| {
            if e.line > line {
                e.line = line;
                e.col = 1;
            }
            e
        })
    }

    fn inst_body(&mut self, line: u32) -> Result<Inst, ParseError> {
        let (result, op) = match self.bump() {
            Some(Tok::Local(res)) => {
                self.punct('=')?;
                let op = self.rhs()?;
                (Some(res), op)
            }
            Some(Tok::Ident(kw)) => {
                let op = match kw.as_str() {
                    "store" => {
                        let base = self.local()?;
                        self.punct('@')?;
                        let offset = self.int()?;
                        self.punct(',')?;
                        let value = self.local()?;
                        Op::Store {
                            base,
                            offset,
                            value,
                        }
                    }
                    "storeidx" => {
                        let base = self.local()?;
                        self.punct(',')?;
                        let index = self.local()?;
                        self.punct(',')?;
                        let value = self.local()?;
                        Op::StoreIdx { base, index, value }
                    }
                    "call" | "vcall" | "icall" => self.call_tail(&kw)?,
                    "br" => {
                        let cond = self.local()?;
                        self.punct(',')?;
                        let then_label = self.ident("a branch target label")?;
                        self.punct(',')?;
                        let else_label = self.ident("a second branch target label")?;
                        Op::Br {
                            cond,
                            then_label,
                            else_label,
                        }
                    }
                    "jmp" => Op::Jmp(self.ident("a jump target label")?),
                    "ret" => {
                        let ret_line = self.prev_line();
                        match self.toks.get(self.pos) {
                            Some(Spanned {
                                tok: Tok::Local(v),
                                line,
                                ..
                            }) if *line == ret_line => {
                                let v = v.clone();
                                self.pos += 1;
                                Op::Ret(Some(v))
                            }
                            _ => Op::Ret(None),
                        }
                    }
                    _ => {
                        self.pos -= 1;
                        return Err(self.unexpected("an instruction"));
                    }
                };
                (None, op)
            }
            _ => {
                self.pos -= 1;
                return Err(self.unexpected("an instruction"));
            }
        };
        Ok(Inst {
            result,
            op,
            line,
            pseudo: Vec::new(),
        })
    }

    fn rhs(&mut self) -> Result<Op, ParseError> {
        if let Some(Tok::Local(src)) = self.peek() {
            let src = src.clone();
            self.pos += 1;
            return Ok(Op::Copy(src));
        }
        let kw = self.ident("an instruction")?;
        Ok(match kw.as_str() {
            "phi" => {
                let mut ins = Vec::new();
                loop {
                    self.punct('[')?;
                    let v = self.local()?;
                    self.punct(',')?;
                    let l = self.ident("a predecessor label")?;
                    self.punct(']')?;
                    ins.push((v, l));
                    if !self.eat_punct(',') {
                        break;
                    }
                }
                Op::Phi(ins)
            }
            "new" => Op::New(self.ident("a class name")?),
            "const" => {
                if self.is_keyword("str") {
                    self.pos += 1;
                    match self.bump() {
                        Some(Tok::Str(s)) => Op::Const(Constant::Str(s)),
                        _ => {
                            self.pos -= 1;
                            return Err(self.unexpected("a string literal"));
                        }
                    }
                } else {
                    Op::Const(Constant::Int(self.int()?))
                }
            }
            "binop" => {
                let a = self.local()?;
                self.punct(',')?;
                let b = self.local()?;
                Op::Binop(a, b)
            }
            "load" => {
                let base = self.local()?;
                self.punct('@')?;
                let offset = self.int()?;
                Op::Load { base, offset }
            }
            "loadidx" => {
                let base = self.local()?;
                self.punct(',')?;
                let index = self.local()?;
                Op::LoadIdx { base, index }
            }
            "call" | "vcall" | "icall" => self.call_tail(&kw)?,
            "funcaddr" => Op::FuncAddr(self.global()?),
            _ => {
                self.pos -= 1;
                return Err(self.unexpected("an instruction"));
            }
        })
    }
}

/// Parses IR text without resolving cross references.
pub fn parse_unchecked(text: &str) -> Result<Program, ParseError> {
    let toks = lex(text)?;
    let eof_line = text.lines().count().max(1) as u32;
    let mut p = Parser {
        toks,
        pos: 0,
        eof_line,
    };
    p.program()
}

/// Parses IR text and checks that every class, function and label it
/// references is defined. Calls may target functions outside the program.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let prog = parse_unchecked(text)?;
    check_references(&prog)?;
    Ok(prog)
}

/// Parses several IR files into one program namespace.
pub fn parse_program_files<S: AsRef<str>>(files: &[(S, S)]) -> Result<Program, ParseError> {
    let mut merged = Program::default();
    for (name, text) in files {
        let name = name.as_ref();
        let prog = parse_unchecked(text.as_ref()).map_err(|e| e.in_file(name))?;
        for (cname, class) in prog.classes {
            if merged.classes.contains_key(&cname) {
                return Err(ParseError::new(
                    ParseErrorKind::Duplicate,
                    class.line,
                    1,
                    format!("class `{cname}` defined in more than one file"),
                )
                .in_file(name));
            }
            merged.classes.insert(cname, class);
        }
        for (fname, func) in prog.functions {
            if merged.functions.contains_key(&fname) {
                return Err(ParseError::new(
                    ParseErrorKind::Duplicate,
                    func.line,
                    1,
                    format!("function `{fname}` defined in more than one file"),
                )
                .in_file(name));
            }
            merged.functions.insert(fname, func);
        }
    }
    check_references(&merged)?;
    Ok(merged)
}

fn undefined(line: u32, msg: String) -> ParseError {
    ParseError::new(ParseErrorKind::Undefined, line, 1, msg)
}

fn check_references(prog: &Program) -> Result<(), ParseError> {
    for class in prog.classes.values() {
        if let Some(parent) = &class.parent {
            if !prog.classes.contains_key(parent) {
                return Err(undefined(
                    class.line,
                    format!("class `{}` extends unknown class `{parent}`", class.name),
                ));
            }
        }
        for (slot, f) in &class.vtable {
            if !prog.functions.contains_key(f) {
                return Err(undefined(
                    class.line,
                    format!("vtable slot {slot} of `{}` names unknown function `{f}`", class.name),
                ));
            }
        }
    }
    for func in prog.functions.values() {
        let labels: HashSet<&str> = func.blocks.iter().map(|b| b.label.as_str()).collect();
        for (_, inst) in func.insts() {
            let bad_label = match &inst.op {
                Op::Phi(ins) => ins.iter().map(|(_, l)| l.as_str()).find(|l| !labels.contains(l)),
                op => op.targets().into_iter().find(|l| !labels.contains(l)),
            };
            if let Some(l) = bad_label {
                return Err(undefined(
                    inst.line,
                    format!("label `{l}` is not defined in `{}`", func.name),
                ));
            }
            match &inst.op {
                Op::New(c) if !prog.classes.contains_key(c) => {
                    return Err(undefined(inst.line, format!("`new` of unknown class `{c}`")));
                }
                Op::FuncAddr(f) if !prog.functions.contains_key(f) => {
                    return Err(undefined(
                        inst.line,
                        format!("`funcaddr` of unknown function `{f}`"),
                    ));
                }
                _ => {}
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_program() {
        let p = parse_program("func main() entry { L0: ret }").unwrap();
        assert_eq!(p.functions.len(), 1);
        assert!(p.classes.is_empty());
        let main = &p.functions["main"];
        assert!(main.attrs.entry);
        assert_eq!(main.blocks[0].insts[0].op, Op::Ret(None));
    }

    #[test]
    fn br_with_one_label_is_a_syntax_error_on_its_line() {
        let text = "func main(%c) {\nL0:\n  br %c, L1\nL1:\n  ret\n}\n";
        let err = parse_program(text).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Syntax);
        assert_eq!(err.line, 3);
        let text = "func main(%c) {\nL0:\n  br %c, L1 }";
        let err = parse_program(text).unwrap_err();
        assert_eq!((err.kind, err.line), (ParseErrorKind::Syntax, 3));
    }

    #[test]
    fn qualified_names_and_vtables() {
        let text = "class A { field x @ 0 vtable { 0 : A::foo } }\n\
                    class B : A { vtable { 0: B::foo } }\n\
                    func A::foo(%this) { L0: ret }\n\
                    func B::foo(%this) { L0: ret }";
        let p = parse_program(text).unwrap();
        assert_eq!(p.classes["B"].parent.as_deref(), Some("A"));
        assert_eq!(p.classes["B"].vtable[&0], "B::foo");
        assert_eq!(p.classes["A"].fields[0].offset, 0);
    }

    #[test]
    fn instruction_forms() {
        let text = r#"
func g(%a) { L0: ret %a }
func main(%p, %i) entry {
L0:
  %a = new A
  %b = %a
  %s = const str "PRV \"1\""
  %n = const -4
  %x = binop %n, %i
  %l = load %p @ 8
  store %p @ 8, %x
  %e = loadidx %p, %i
  storeidx %p, %i, %e
  %f = funcaddr @g
  %r = icall %f(%x)
  %v = vcall %a slot 1 (%x, %r)
  call @ext(%s)
  br %x, L1, L2
L1:
  jmp L2
L2:
  %m = phi [%x, L0], [%n, L1]
  ret
}
class A { vtable { 1 : g } }
"#;
        let p = parse_program(text).unwrap();
        let main = &p.functions["main"];
        let ops: Vec<&str> = main.insts().map(|(_, i)| i.op.mnemonic()).collect();
        assert_eq!(
            ops,
            [
                "new", "copy", "const", "const", "binop", "load", "store", "loadidx", "storeidx",
                "funcaddr", "icall", "vcall", "call", "br", "jmp", "phi", "ret"
            ]
        );
        assert_eq!(
            main.blocks[0].insts[2].op,
            Op::Const(Constant::Str("PRV \"1\"".into()))
        );
    }

    #[test]
    fn reference_errors() {
        let e = parse_program("func main() { L0: %a = new Nope\n ret }").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::Undefined);
        let e = parse_program("func main() { L0: jmp L9 }").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::Undefined);
        let e = parse_program("func main() { L0: ret }\nfunc main() { L0: ret }").unwrap_err();
        assert_eq!((e.kind, e.line), (ParseErrorKind::Duplicate, 2));
        let e = parse_program("class A { field x @ 0 field y @ 0 }").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::Duplicate);
        // Calls to functions outside the program are fine.
        parse_program("func main() { L0: call @printf()\n ret }").unwrap();
    }

    #[test]
    fn block_shape_errors() {
        let e = parse_program("func main() { L0: ret\n ret }").unwrap_err();
        assert!(e.message.contains("after terminator"), "{e}");
        let e = parse_program("func main() { L0: %a = const 1 }").unwrap_err();
        assert!(e.message.contains("does not end"), "{e}");
    }

    #[test]
    fn multi_file_duplicates() {
        let files = [
            ("a.tir", "func f() { L0: ret }"),
            ("b.tir", "func f() { L0: ret }"),
        ];
        let e = parse_program_files(&files).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::Duplicate);
        assert_eq!(e.file.as_deref(), Some("b.tir"));
        let files = [
            ("a.tir", "class B : A { }"),
            ("b.tir", "class A { }"),
        ];
        assert_eq!(parse_program_files(&files).unwrap().classes.len(), 2);
    }
}

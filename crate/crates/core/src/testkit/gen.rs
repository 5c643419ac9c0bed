//! Seeded generator of well-formed random programs.
//!
//! Programs use `main(%in)` as the only entry, external `Source()`,
//! `Sink(%v)` and `Ext(..)` calls, structured branches and single-trip loops.
//! Direct and indirect calls only target later functions, and virtual calls
//! dispatch to two trailing leaf methods, so every program terminates.

use std::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const OFFSETS: [i64; 3] = [0, 8, 16];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenConfig {
    pub max_classes: usize,
    pub max_functions: usize,
    /// Upper bound on emitted instructions across all functions.
    pub size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Int,
    Obj,
    Any,
    /// Address of the function with this index.
    Fn(usize),
}

#[derive(Debug, Clone)]
struct Var {
    name: String,
    kind: Kind,
}

#[derive(Debug, Clone)]
struct FnSpec {
    name: String,
    params: usize,
    method: bool,
}

struct Body<'a> {
    g: &'a mut Gen,
    me: usize,
    lines: Vec<String>,
    label: String,
    next_label: usize,
    next_var: usize,
    budget: usize,
}

struct Gen {
    rng: ChaCha8Rng,
    classes: usize,
    funcs: Vec<FnSpec>,
    /// Probability that a drawn `Source`/`Sink` call is kept.
    taint_rate: f64,
}

impl Body<'_> {
    fn fresh(&mut self, prefix: &str) -> String {
        self.next_var += 1;
        format!("{prefix}{}", self.next_var)
    }

    fn new_label(&mut self) -> String {
        self.next_label += 1;
        format!("L{}", self.next_label)
    }

    fn emit(&mut self, line: String) {
        self.lines.push(format!("  {line}"));
        self.budget = self.budget.saturating_sub(1);
    }

    fn start_block(&mut self, label: String) {
        self.lines.push(format!("{label}:"));
        self.label = label;
    }

    fn pick<'s>(&mut self, scope: &'s [Var], ok: impl Fn(Kind) -> bool) -> Option<&'s Var> {
        let c: Vec<&Var> = scope.iter().filter(|v| ok(v.kind)).collect();
        if c.is_empty() {
            None
        } else {
            Some(c[self.g.rng.gen_range(0..c.len())])
        }
    }

    fn any(&mut self, scope: &[Var]) -> String {
        let i = self.g.rng.gen_range(0..scope.len());
        scope[i].name.clone()
    }

    fn int(&mut self, scope: &mut Vec<Var>) -> String {
        if let Some(v) = self.pick(scope, |k| matches!(k, Kind::Int | Kind::Any)) {
            return v.name.clone();
        }
        let x = self.fresh("k");
        let c = self.g.rng.gen_range(0..4);
        self.emit(format!("%{x} = const {c}"));
        scope.push(Var {
            name: x.clone(),
            kind: Kind::Int,
        });
        x
    }

    fn obj(&mut self, scope: &mut Vec<Var>) -> String {
        if self.g.rng.gen_bool(0.7) {
            if let Some(v) = self.pick(scope, |k| matches!(k, Kind::Obj | Kind::Any)) {
                return v.name.clone();
            }
        }
        let x = self.fresh("o");
        let c = self.g.rng.gen_range(0..self.g.classes);
        self.emit(format!("%{x} = new K{c}"));
        scope.push(Var {
            name: x.clone(),
            kind: Kind::Obj,
        });
        x
    }

    fn args(&mut self, scope: &[Var], n: usize) -> String {
        (0..n)
            .map(|_| format!("%{}", self.any(scope)))
            .collect::<Vec<_>>()
            .join(", ")
    }

    fn callees(&self) -> Vec<usize> {
        let first_method = self.g.funcs.len() - 2;
        (self.me + 1..self.g.funcs.len())
            .filter(|&j| !self.g.funcs[self.me].method || j >= first_method)
            .collect()
    }

    fn statement(&mut self, scope: &mut Vec<Var>, depth: usize) {
        let method = self.g.funcs[self.me].method;
        let roll = self.g.rng.gen_range(0..100);
        match roll {
            0..=9 => {
                self.obj(scope);
            }
            10..=19 => {
                let (a, b) = (self.int(scope), self.any(scope));
                let x = self.fresh("b");
                self.emit(format!("%{x} = binop %{a}, %{b}"));
                scope.push(Var { name: x, kind: Kind::Int });
            }
            20..=31 => {
                let base = self.obj(scope);
                let v = self.any(scope);
                let off = OFFSETS[self.g.rng.gen_range(0..OFFSETS.len())];
                self.emit(format!("store %{base} @ {off}, %{v}"));
            }
            32..=43 => {
                let base = self.obj(scope);
                let off = OFFSETS[self.g.rng.gen_range(0..OFFSETS.len())];
                let x = self.fresh("l");
                self.emit(format!("%{x} = load %{base} @ {off}"));
                scope.push(Var { name: x, kind: Kind::Any });
            }
            44..=47 => {
                let base = self.obj(scope);
                let i = self.int(scope);
                if self.g.rng.gen_bool(0.5) {
                    let v = self.any(scope);
                    self.emit(format!("storeidx %{base}, %{i}, %{v}"));
                } else {
                    let x = self.fresh("l");
                    self.emit(format!("%{x} = loadidx %{base}, %{i}"));
                    scope.push(Var { name: x, kind: Kind::Any });
                }
            }
            48..=50 => {
                let v = self.any(scope);
                let x = self.fresh("c");
                self.emit(format!("%{x} = %{v}"));
                let kind = scope.iter().find(|s| s.name == v).map_or(Kind::Any, |s| s.kind);
                scope.push(Var { name: x, kind });
            }
            51..=62 if !self.g.rng.gen_bool(self.g.taint_rate) => {
                let x = self.fresh("k");
                self.emit(format!("%{x} = const 1"));
                scope.push(Var { name: x, kind: Kind::Int });
            }
            51..=56 => {
                let x = self.fresh("s");
                self.emit(format!("%{x} = call @Source()"));
                scope.push(Var { name: x, kind: Kind::Int });
            }
            57..=62 => {
                let v = self.any(scope);
                self.emit(format!("call @Sink(%{v})"));
            }
            63..=66 => {
                let n = self.g.rng.gen_range(1..=2);
                let a = self.args(scope, n);
                let x = self.fresh("e");
                self.emit(format!("%{x} = call @Ext({a})"));
                scope.push(Var { name: x, kind: Kind::Any });
            }
            67..=76 => {
                let cs = self.callees();
                if cs.is_empty() {
                    return;
                }
                let j = cs[self.g.rng.gen_range(0..cs.len())];
                let (name, n) = (self.g.funcs[j].name.clone(), self.g.funcs[j].params);
                let a = self.args(scope, n);
                let x = self.fresh("r");
                self.emit(format!("%{x} = call @{name}({a})"));
                scope.push(Var { name: x, kind: Kind::Any });
            }
            77..=82 if !method => {
                let recv = self.obj(scope);
                let slot = self.g.rng.gen_range(0..2);
                let a = self.any(scope);
                let x = self.fresh("v");
                self.emit(format!("%{x} = vcall %{recv} slot {slot} (%{a})"));
                scope.push(Var { name: x, kind: Kind::Any });
            }
            83..=87 if !method => {
                let cs = self.callees();
                if cs.is_empty() {
                    return;
                }
                if let Some(fp) = self.pick(scope, |k| matches!(k, Kind::Fn(_))).cloned() {
                    let Kind::Fn(j) = fp.kind else { unreachable!() };
                    let a = self.args(scope, self.g.funcs[j].params);
                    let x = self.fresh("i");
                    self.emit(format!("%{x} = icall %{}({a})", fp.name));
                    scope.push(Var { name: x, kind: Kind::Any });
                } else {
                    let j = cs[self.g.rng.gen_range(0..cs.len())];
                    let x = self.fresh("f");
                    self.emit(format!("%{x} = funcaddr @{}", self.g.funcs[j].name));
                    scope.push(Var { name: x, kind: Kind::Fn(j) });
                }
            }
            88..=94 if depth < 3 && self.budget > 6 => self.diamond(scope, depth),
            95..=99 if depth < 3 && self.budget > 6 => self.single_trip_loop(scope, depth),
            _ => {
                let x = self.fresh("k");
                let c = self.g.rng.gen_range(0..4);
                self.emit(format!("%{x} = const {c}"));
                scope.push(Var { name: x, kind: Kind::Int });
            }
        }
    }

    fn sequence(&mut self, scope: &mut Vec<Var>, depth: usize, len: usize) {
        for _ in 0..len {
            if self.budget <= 2 {
                return;
            }
            self.statement(scope, depth);
        }
    }

    /// `br` into two arms joined by phis over one value from each arm.
    fn diamond(&mut self, scope: &mut Vec<Var>, depth: usize) {
        let c = self.int(scope);
        let (lt, le, lj) = (self.new_label(), self.new_label(), self.new_label());
        self.emit(format!("br %{c}, {lt}, {le}"));
        let mut ends = Vec::new();
        for l in [lt, le] {
            self.start_block(l);
            let mut arm = scope.clone();
            let n = self.g.rng.gen_range(1..=4);
            self.sequence(&mut arm, depth + 1, n);
            self.emit(format!("jmp {lj}"));
            let pick = self.any(&arm[scope.len().min(arm.len() - 1)..]);
            ends.push((self.label.clone(), pick, arm));
        }
        self.start_block(lj);
        let x = self.fresh("p");
        let kind = |arm: &Vec<Var>, n: &str| arm.iter().find(|v| v.name == n).map_or(Kind::Any, |v| v.kind);
        let (k0, k1) = (kind(&ends[0].2, &ends[0].1), kind(&ends[1].2, &ends[1].1));
        self.emit(format!(
            "%{x} = phi [%{}, {}], [%{}, {}]",
            ends[0].1, ends[0].0, ends[1].1, ends[1].0
        ));
        let kind = if k0 == k1 && !matches!(k0, Kind::Fn(_)) { k0 } else { Kind::Any };
        scope.push(Var { name: x, kind });
    }

    /// A loop whose header condition is 1 on entry and 0 on the back edge.
    fn single_trip_loop(&mut self, scope: &mut Vec<Var>, depth: usize) {
        let one = self.fresh("k");
        self.emit(format!("%{one} = const 1"));
        let carried = self.any(scope);
        let (lh, lb, lx) = (self.new_label(), self.new_label(), self.new_label());
        let pre = self.label.clone();
        self.emit(format!("jmp {lh}"));
        self.start_block(lh.clone());
        let (t, v) = (self.fresh("t"), self.fresh("p"));
        let tail_zero = self.fresh("k");
        // The body's values are not in scope at the header, so the back edge
        // carries a value defined in the body's last block.
        let body_pos = self.lines.len();
        self.start_block(lb.clone());
        let mut inner = scope.clone();
        inner.push(Var {
            name: v.clone(),
            kind: Kind::Any,
        });
        let n = self.g.rng.gen_range(1..=3);
        self.sequence(&mut inner, depth + 1, n);
        self.emit(format!("%{tail_zero} = const 0"));
        let back = self.any(&inner);
        let body_end = self.label.clone();
        self.emit(format!("jmp {lh}"));
        let header = vec![
            format!("  %{t} = phi [%{one}, {pre}], [%{tail_zero}, {body_end}]"),
            format!("  %{v} = phi [%{carried}, {pre}], [%{back}, {body_end}]"),
            format!("  br %{t}, {lb}, {lx}"),
        ];
        self.budget = self.budget.saturating_sub(3);
        for (i, l) in header.into_iter().enumerate() {
            self.lines.insert(body_pos + i, l);
        }
        self.start_block(lx);
        scope.push(Var { name: v, kind: Kind::Any });
    }
}

impl Gen {
    fn function(&mut self, me: usize, budget: usize) -> String {
        let spec = self.funcs[me].clone();
        let params: Vec<String> = if me == 0 {
            vec!["in".to_string()]
        } else if spec.method {
            vec!["this".to_string(), "x".to_string()]
        } else {
            (0..spec.params).map(|i| format!("a{i}")).collect()
        };
        let mut scope: Vec<Var> = params
            .iter()
            .enumerate()
            .map(|(i, n)| Var {
                name: n.clone(),
                kind: if spec.method && i == 0 { Kind::Obj } else { Kind::Any },
            })
            .collect();
        let mut body = Body {
            g: self,
            me,
            lines: Vec::new(),
            label: String::new(),
            next_label: 0,
            next_var: 0,
            budget,
        };
        body.start_block("L0".to_string());
        if scope.is_empty() {
            body.int(&mut scope);
        }
        let n = body.budget;
        body.sequence(&mut scope, 0, n);
        if me == 0 {
            body.emit("ret".to_string());
        } else {
            let r = body.any(&scope);
            body.emit(format!("ret %{r}"));
        }
        let ps: Vec<String> = params.iter().map(|p| format!("%{p}")).collect();
        let attr = if me == 0 { " entry" } else { "" };
        let mut out = format!("func {}({}){attr} {{\n", spec.name, ps.join(", "));
        for l in body.lines {
            out.push_str(&l);
            out.push('\n');
        }
        out.push_str("}\n");
        out
    }
}

fn generate(seed: u64, cfg: GenConfig, exact_functions: bool, taint_rate: f64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = rng.gen_range(1..=cfg.max_classes.max(1));
    let nfuncs = if exact_functions {
        cfg.max_functions.max(3)
    } else {
        rng.gen_range(3..=cfg.max_functions.max(3))
    };
    let mut funcs = vec![FnSpec {
        name: "main".into(),
        params: 1,
        method: false,
    }];
    for i in 1..nfuncs - 2 {
        funcs.push(FnSpec {
            name: format!("f{i}"),
            params: rng.gen_range(0..=2),
            method: false,
        });
    }
    for i in nfuncs - 2..nfuncs {
        funcs.push(FnSpec {
            name: format!("m{i}"),
            params: 2,
            method: true,
        });
    }
    let mut g = Gen {
        rng,
        classes,
        funcs,
        taint_rate,
    };
    let mut out = String::new();
    let methods = [g.funcs[nfuncs - 2].name.clone(), g.funcs[nfuncs - 1].name.clone()];
    for c in 0..classes {
        let parent = if c > 0 && g.rng.gen_bool(0.6) {
            Some(g.rng.gen_range(0..c))
        } else {
            None
        };
        let _ = write!(out, "class K{c}");
        if let Some(p) = parent {
            let _ = write!(out, " : K{p}");
        }
        out.push_str(" { field f0 @ 0 field f1 @ 8 field f2 @ 16");
        let mut slots = Vec::new();
        for s in 0..2 {
            if parent.is_none() || g.rng.gen_bool(0.5) {
                slots.push(format!("{s} : {}", methods[g.rng.gen_range(0..2)]));
            }
        }
        if !slots.is_empty() {
            let _ = write!(out, " vtable {{ {} }}", slots.join(" "));
        }
        out.push_str(" }\n");
    }
    let per_fn = (cfg.size / nfuncs).max(2);
    for me in 0..nfuncs {
        out.push('\n');
        out.push_str(&g.function(me, per_fn));
    }
    out
}

/// A random program of at most 4 classes, 6 functions and roughly `size`
/// instructions, identical for identical seeds.
pub fn generate_program(seed: u64, size: usize) -> String {
    generate(
        seed,
        GenConfig {
            max_classes: 4,
            max_functions: 6,
            size,
        },
        false,
        1.0,
    )
}

/// A program of about `instructions` instructions spread over functions of
/// roughly 150 instructions each, for throughput checks. Source and sink
/// calls are rarer than in [`generate_program`], as in real applications.
pub fn generate_large(seed: u64, instructions: usize) -> String {
    generate(
        seed,
        GenConfig {
            max_classes: 8,
            max_functions: (instructions / 150).max(3),
            size: instructions,
        },
        true,
        0.02,
    )
}

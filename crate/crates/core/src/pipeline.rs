//! The whole-program analysis pipeline shared by both analysis modes.

use std::collections::HashMap;

use thiserror::Error;

use crate::alias::{AliasOracle, PointsTo};
use crate::callgraph::{build_call_graph, cha_call_graph, entry_functions, CallGraph};
use crate::class_analysis::{
    build_class_hierarchy, run_class_type_analysis, ClassHierarchy, HierarchyError, TypeMap,
};
use crate::hssa::{build_hssa, compute_side_effects, HssaForm, SideEffectMap};
use crate::ir::{
    build_cfg, compute_control_dependence, validate_ssa, Cfg, ControlDependence, Diagnostic, Program,
};
use crate::taint::insert_pseudo_uses;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Options {
    /// Attach control predicates to control-dependent definitions so taint
    /// follows implicit flows.
    pub implicit_flows: bool,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            implicit_flows: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid program:\n{}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
}

/// Per-function structures derived from the CFG.
#[derive(Debug, Clone)]
pub struct FunctionFacts {
    pub cfg: Cfg,
    pub alias: AliasOracle,
    pub cd: ControlDependence,
}

/// Results of every analysis phase over one program.
#[derive(Debug, Clone)]
pub struct Analysis {
    /// The input program, with pseudo-uses attached when implicit flows are
    /// enabled.
    pub program: Program,
    pub options: Options,
    pub hierarchy: ClassHierarchy,
    pub facts: HashMap<String, FunctionFacts>,
    pub pts: HashMap<String, PointsTo>,
    /// Conservative graph used to bootstrap side effects.
    pub cha_graph: CallGraph,
    pub types: TypeMap,
    pub call_graph: CallGraph,
    pub effects: SideEffectMap,
    /// Heap SSA rebuilt over the refined call graph.
    pub hssa: HashMap<String, HssaForm>,
    /// Warnings from validation and root discovery.
    pub warnings: Vec<Diagnostic>,
}

fn build_forms(
    p: &Program,
    facts: &HashMap<String, FunctionFacts>,
    se: &SideEffectMap,
    cg: &CallGraph,
) -> HashMap<String, HssaForm> {
    p.functions
        .values()
        .map(|f| {
            let ff = &facts[&f.name];
            (f.name.clone(), build_hssa(p, f, &ff.cfg, &ff.alias, se, cg))
        })
        .collect()
}

impl Analysis {
    pub fn run(program: Program, options: Options) -> Result<Self, AnalysisError> {
        let diags = validate_ssa(&program);
        let (errors, mut warnings): (Vec<Diagnostic>, Vec<Diagnostic>) =
            diags.into_iter().partition(Diagnostic::is_error);
        if !errors.is_empty() {
            return Err(AnalysisError::Invalid(errors));
        }
        warnings.extend(entry_functions(&program).1);
        let hierarchy = build_class_hierarchy(&program)?;

        let mut facts = HashMap::new();
        for f in program.functions.values() {
            let cfg = build_cfg(f).map_err(|e| {
                AnalysisError::Invalid(vec![Diagnostic {
                    severity: crate::ir::Severity::Error,
                    func: f.name.clone(),
                    line: f.line,
                    message: e.to_string(),
                }])
            })?;
            let alias = AliasOracle::new(f, &cfg);
            let cd = compute_control_dependence(f, &cfg);
            facts.insert(f.name.clone(), FunctionFacts { cfg, alias, cd });
        }
        let pts: HashMap<String, PointsTo> = facts
            .iter()
            .map(|(k, v)| (k.clone(), v.alias.pts.clone()))
            .collect();

        let cha_graph = cha_call_graph(&program, &hierarchy, &pts);
        let effects0 = compute_side_effects(&program, &cha_graph, &pts);
        let hssa0 = build_forms(&program, &facts, &effects0, &cha_graph);
        let types = run_class_type_analysis(&program, &hierarchy, &hssa0, &pts);
        let call_graph = build_call_graph(&program, &hierarchy, &types, &pts);
        let effects = compute_side_effects(&program, &call_graph, &pts);
        let hssa = build_forms(&program, &facts, &effects, &call_graph);

        let mut program = program;
        if options.implicit_flows {
            for f in program.functions.values_mut() {
                *f = insert_pseudo_uses(f, &facts[&f.name].cd);
            }
        }
        Ok(Self {
            program,
            options,
            hierarchy,
            facts,
            pts,
            cha_graph,
            types,
            call_graph,
            effects,
            hssa,
            warnings,
        })
    }
}

use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexMap;
use thiserror::Error;

use crate::ir::Program;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum HierarchyError {
    #[error("class `{0}` is its own ancestor")]
    Cycle(String),
    #[error("class `{class}` slot {slot} names missing function `{func}`")]
    MissingFunction { class: String, slot: u32, func: String },
    #[error("unknown class `{0}`")]
    UnknownClass(String),
}

#[derive(Debug, Clone)]
pub struct ClassInfo {
    pub parent: Option<String>,
    pub children: Vec<String>,
    /// Slot table after override resolution along the ancestor chain.
    pub vtable: BTreeMap<u32, String>,
    /// The class and all its transitive subclasses.
    pub cone: BTreeSet<String>,
}

/// Single-inheritance class tree with resolved vtables.
#[derive(Debug, Clone, Default)]
pub struct ClassHierarchy {
    classes: IndexMap<String, ClassInfo>,
}

impl ClassHierarchy {
    pub fn info(&self, class: &str) -> Option<&ClassInfo> {
        self.classes.get(class)
    }

    pub fn class_names(&self) -> impl Iterator<Item = &str> {
        self.classes.keys().map(String::as_str)
    }

    pub fn subclass_cone(&self, class: &str) -> Result<&BTreeSet<String>, HierarchyError> {
        self.classes
            .get(class)
            .map(|c| &c.cone)
            .ok_or_else(|| HierarchyError::UnknownClass(class.to_string()))
    }

    /// Function invoked for `slot` on an object of run-time class `class`.
    pub fn resolve(&self, class: &str, slot: u32) -> Option<&str> {
        self.classes.get(class)?.vtable.get(&slot).map(String::as_str)
    }

    /// Every implementation of `slot` over all classes, sorted.
    pub fn all_implementations(&self, slot: u32) -> BTreeSet<&str> {
        self.classes
            .values()
            .filter_map(|c| c.vtable.get(&slot).map(String::as_str))
            .collect()
    }
}

pub fn build_class_hierarchy(p: &Program) -> Result<ClassHierarchy, HierarchyError> {
    let mut classes: IndexMap<String, ClassInfo> = IndexMap::new();
    for c in p.classes.values() {
        if let Some(parent) = &c.parent {
            if !p.classes.contains_key(parent) {
                return Err(HierarchyError::UnknownClass(parent.clone()));
            }
        }
        for (slot, f) in &c.vtable {
            if !p.functions.contains_key(f) {
                return Err(HierarchyError::MissingFunction {
                    class: c.name.clone(),
                    slot: *slot,
                    func: f.clone(),
                });
            }
        }
        // Ancestor chain, root first.
        let mut chain = vec![c];
        let mut cur = c;
        while let Some(parent) = &cur.parent {
            cur = &p.classes[parent];
            if cur.name == c.name {
                return Err(HierarchyError::Cycle(c.name.clone()));
            }
            if chain.len() > p.classes.len() {
                return Err(HierarchyError::Cycle(cur.name.clone()));
            }
            chain.push(cur);
        }
        let mut vtable = BTreeMap::new();
        for anc in chain.iter().rev() {
            for (slot, f) in &anc.vtable {
                vtable.insert(*slot, f.clone());
            }
        }
        classes.insert(
            c.name.clone(),
            ClassInfo {
                parent: c.parent.clone(),
                children: Vec::new(),
                vtable,
                cone: BTreeSet::new(),
            },
        );
    }
    let names: Vec<String> = classes.keys().cloned().collect();
    for name in &names {
        if let Some(parent) = classes[name].parent.clone() {
            classes[&parent].children.push(name.clone());
        }
        let mut cur = Some(name.clone());
        while let Some(c) = cur {
            classes[&c].cone.insert(name.clone());
            cur = classes[&c].parent.clone();
        }
    }
    Ok(ClassHierarchy { classes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_program;

    #[test]
    fn cones_and_resolved_tables() {
        let p = parse_program(
            "class A { vtable { 0 : A::foo 1 : A::bar } }\nclass B : A { vtable { 0 : B::foo } }\n\
             class C : A { }\n\
             func A::foo(%t) { L0: ret }\nfunc A::bar(%t) { L0: ret }\nfunc B::foo(%t) { L0: ret }",
        )
        .unwrap();
        let h = build_class_hierarchy(&p).unwrap();
        let cone: Vec<&str> = h.subclass_cone("A").unwrap().iter().map(String::as_str).collect();
        assert_eq!(cone, ["A", "B", "C"]);
        assert_eq!(h.subclass_cone("B").unwrap().len(), 1);
        assert_eq!(h.resolve("B", 0), Some("B::foo"));
        assert_eq!(h.resolve("B", 1), Some("A::bar"));
        assert_eq!(h.resolve("C", 0), Some("A::foo"));
        assert!(h.subclass_cone("Z").is_err());
    }

    #[test]
    fn parent_cycle_is_rejected() {
        let p = crate::ir::parse_unchecked("class A : B { }\nclass B : A { }").unwrap();
        assert!(matches!(build_class_hierarchy(&p), Err(HierarchyError::Cycle(_))));
    }
}

//! Compile-time features: named switches with `use` dependencies, resolved
//! to a least fixpoint. Primitives are features too.

use crate::datum::Datum;
use std::collections::{BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Clone)]
pub struct PrimitiveDecl {
    pub name: String,
    pub arity: usize,
    pub uses: Vec<String>,
    pub body: String,
}

#[derive(Debug, Clone, Default)]
pub struct FeatureDecl {
    pub name: String,
    pub uses: Vec<String>,
    /// (location name, host code) pairs injected by the templater.
    pub snippets: Vec<(String, String)>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("feature `{0}` is force-disabled but required by `{1}`")]
    DisabledConflict(String, String),
    #[error("feature `{0}` both enabled and disabled on the command line")]
    OverrideConflict(String),
}

#[derive(Debug, Clone, Default)]
pub struct FeatureSet {
    /// Primitive declarations in baseline order; the position is the
    /// baseline dispatch index.
    pub primitives: Vec<PrimitiveDecl>,
    pub features: Vec<FeatureDecl>,
    pub enabled: BTreeSet<String>,
    pub disabled: BTreeSet<String>,
    pub values: HashMap<String, Datum>,
}

impl FeatureSet {
    pub fn declare_primitive(&mut self, p: PrimitiveDecl) {
        self.primitives.push(p);
    }

    pub fn declare_feature(&mut self, f: FeatureDecl) {
        self.features.push(f);
    }

    pub fn primitive_index(&self, name: &str) -> Option<usize> {
        self.primitives.iter().position(|p| p.name == name)
    }

    pub fn uses_of(&self, name: &str) -> &[String] {
        if let Some(p) = self.primitives.iter().find(|p| p.name == name) {
            return &p.uses;
        }
        if let Some(f) = self.features.iter().find(|f| f.name == name) {
            return &f.uses;
        }
        &[]
    }

    pub fn is_enabled(&self, name: &str) -> bool {
        self.enabled.contains(name)
    }

    pub fn set_value(&mut self, name: &str, v: Datum) {
        self.values.insert(name.to_string(), v);
    }

    /// Least fixpoint over the dependency graph, starting from the demanded
    /// set plus `-f+` overrides, minus nothing: a `-f-` override that the
    /// closure reaches is an error.
    pub fn resolve(
        &mut self,
        demanded: &BTreeSet<String>,
        enable: &[String],
        disable: &[String],
    ) -> Result<(), FeatureError> {
        for f in enable {
            if disable.contains(f) {
                return Err(FeatureError::OverrideConflict(f.clone()));
            }
        }
        self.disabled = disable.iter().cloned().collect();
        let mut work: Vec<(String, String)> = demanded
            .iter()
            .chain(enable.iter())
            .map(|f| (f.clone(), f.clone()))
            .collect();
        let mut enabled = BTreeSet::new();
        while let Some((f, wanted_by)) = work.pop() {
            if self.disabled.contains(&f) {
                if demanded.contains(&f) || enable.contains(&f) || wanted_by != f {
                    return Err(FeatureError::DisabledConflict(f, wanted_by));
                }
                continue;
            }
            if !enabled.insert(f.clone()) {
                continue;
            }
            for dep in self.uses_of(&f) {
                work.push((dep.clone(), f.clone()));
            }
        }
        self.enabled = enabled;
        Ok(())
    }
}

/// The baseline primitive table: names, arities and dispatch order the
/// virtual machine is built around. The library source declares the same
/// table with `define-primitive`; this copy serves code that runs without
/// the library (unit tests, the decoder).
pub fn baseline_primitives() -> Vec<(&'static str, usize)> {
    vec![
        ("##rib", 3),
        ("##id", 1),
        ("##pop", 2),
        ("##arg2", 2),
        ("##close", 1),
        ("##rib?", 1),
        ("##field0", 1),
        ("##field1", 1),
        ("##field2", 1),
        ("##field0-set!", 2),
        ("##field1-set!", 2),
        ("##field2-set!", 2),
        ("##eqv?", 2),
        ("##<", 2),
        ("##+", 2),
        ("##-", 2),
        ("##*", 2),
        ("##quotient", 2),
        ("##getchar", 0),
        ("##putchar", 1),
        ("##exit", 1),
        ("##stdin-fd", 0),
        ("##stdout-fd", 0),
        ("##get-fd-input-file", 1),
        ("##get-fd-output-file", 1),
        ("##read-char-fd", 1),
        ("##write-char-fd", 2),
        ("##close-input-fd", 1),
        ("##close-output-fd", 1),
    ]
}

pub fn baseline_feature_set() -> FeatureSet {
    let mut fs = FeatureSet::default();
    for (name, arity) in baseline_primitives() {
        fs.declare_primitive(PrimitiveDecl {
            name: name.to_string(),
            arity,
            uses: vec![],
            body: String::new(),
        });
    }
    fs
}

//! Safety-constraint set algebra.
//!
//! Entailment is subset containment over atoms. The available-fact sets built
//! here are the left-hand sides of every discharge check: a function's own
//! constraints plus what its body establishes, and for a (constructor, method)
//! pair the union of both sides minus everything a disruptive method of the
//! struct may break.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{Atom, CrateModel, FactSet, FunctionDecl};
use crate::upg::StructGroup;

/// Where an available atom came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    OwnSc,
    Establishes,
    ConstructorSc,
    ConstructorEstablishes,
    MethodEstablishes,
    Auditor,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvailableFacts {
    pub atoms: FactSet,
    /// One source per atom; the first contributor wins.
    pub provenance: BTreeMap<Atom, Source>,
    /// Atoms a source contributed that were then removed as broken invariants.
    #[serde(default, skip_serializing_if = "FactSet::is_empty")]
    pub removed: FactSet,
}

impl AvailableFacts {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds atoms not already present, tagged with `source`.
    pub fn add(&mut self, set: &FactSet, source: Source) {
        for atom in set {
            if self.atoms.insert(atom.clone()) {
                self.provenance.insert(atom.clone(), source);
            }
        }
    }

    fn subtract(&mut self, broken: &FactSet) {
        for atom in broken {
            if self.provenance.remove(atom).is_some() {
                self.removed.insert(atom.clone());
            }
        }
        self.atoms.remove_all(broken);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "result", content = "missing")]
pub enum Entailment {
    Holds,
    Missing(FactSet),
}

impl Entailment {
    pub fn holds(&self) -> bool {
        matches!(self, Entailment::Holds)
    }

    pub fn missing(&self) -> FactSet {
        match self {
            Entailment::Holds => FactSet::new(),
            Entailment::Missing(m) => m.clone(),
        }
    }
}

/// Invariants a method breaks that its own constraints do not cover.
pub fn bs_of_method(m: &FunctionDecl) -> FactSet {
    m.breaks.difference(&m.sc)
}

/// Union of the broken sets of every disruptive member of the struct.
pub fn bs_of_struct(group: &StructGroup, model: &CrateModel) -> FactSet {
    group
        .disruptive
        .iter()
        .filter_map(|p| model.function(p))
        .fold(FactSet::new(), |acc, m| acc.union(&bs_of_method(m)))
}

pub fn entails(available: &AvailableFacts, required: &FactSet) -> Entailment {
    let missing = required.difference(&available.atoms);
    if missing.is_empty() {
        Entailment::Holds
    } else {
        Entailment::Missing(missing)
    }
}

pub fn facts_for_function(f: &FunctionDecl) -> AvailableFacts {
    let mut facts = AvailableFacts::new();
    facts.add(&f.sc, Source::OwnSc);
    facts.add(&f.establishes, Source::Establishes);
    facts
}

/// Facts available to `method` on an instance built by `ctor`, after removing
/// every invariant a disruptive method of the struct may break.
pub fn facts_for_pair(
    ctor: &FunctionDecl,
    method: &FunctionDecl,
    group: &StructGroup,
    model: &CrateModel,
) -> AvailableFacts {
    let mut facts = AvailableFacts::new();
    facts.add(&method.sc, Source::OwnSc);
    facts.add(&ctor.sc, Source::ConstructorSc);
    facts.add(&ctor.establishes, Source::ConstructorEstablishes);
    facts.add(&method.establishes, Source::MethodEstablishes);
    facts.subtract(&bs_of_struct(group, model));
    facts
}

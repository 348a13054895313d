//! Data model of an analyzed crate.
//!
//! A [`CrateModel`] is a tree of [`ModuleDecl`]s plus a flat index over every
//! function, struct and external declaration. The index also carries the
//! implicit members a struct can opt into (a literal constructor and direct
//! field access), so the rest of the pipeline sees them as ordinary functions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diag::{Diagnostic, Location};

/// Atoms starting with this prefix are reserved for tool-generated facts.
pub const RESERVED_ATOM_PREFIX: &str = "__";

/// Meta-atom required by `declare_sc` obligations.
pub const DECLARED_SC_ATOM: &str = "__declared_sc";

/// A named safety-constraint predicate.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Atom(String);

impl Atom {
    pub fn new(name: impl Into<String>) -> Self {
        Atom(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// `[A-Za-z_][A-Za-z0-9_]*`
    pub fn is_valid_name(name: &str) -> bool {
        let mut chars = name.chars();
        match chars.next() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
            _ => return false,
        }
        chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
    }

    pub fn is_reserved(&self) -> bool {
        self.0.starts_with(RESERVED_ATOM_PREFIX)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Atom {
    fn from(s: &str) -> Self {
        Atom(s.to_owned())
    }
}

/// A finite, duplicate-free set of atoms. Serializes as a sorted array.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FactSet(BTreeSet<Atom>);

impl FactSet {
    pub fn new() -> Self {
        FactSet(BTreeSet::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, atom: &Atom) -> bool {
        self.0.contains(atom)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Atom> {
        self.0.iter()
    }

    pub fn insert(&mut self, atom: Atom) -> bool {
        self.0.insert(atom)
    }

    pub fn union(&self, other: &FactSet) -> FactSet {
        FactSet(self.0.union(&other.0).cloned().collect())
    }

    pub fn difference(&self, other: &FactSet) -> FactSet {
        FactSet(self.0.difference(&other.0).cloned().collect())
    }

    pub fn intersection(&self, other: &FactSet) -> FactSet {
        FactSet(self.0.intersection(&other.0).cloned().collect())
    }

    pub fn is_subset(&self, other: &FactSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn extend(&mut self, other: &FactSet) {
        self.0.extend(other.0.iter().cloned());
    }

    pub fn remove_all(&mut self, other: &FactSet) {
        self.0.retain(|a| !other.0.contains(a));
    }
}

impl<A: Into<Atom>> FromIterator<A> for FactSet {
    fn from_iter<I: IntoIterator<Item = A>>(iter: I) -> Self {
        FactSet(iter.into_iter().map(Into::into).collect())
    }
}

impl<'a> IntoIterator for &'a FactSet {
    type Item = &'a Atom;
    type IntoIter = std::collections::btree_set::Iter<'a, Atom>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

impl fmt::Display for FactSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str(a.as_str())?;
        }
        f.write_str("]")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    Public,
    Private,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unsafety {
    Safe,
    Unsafe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Receiver {
    None,
    RefSelf,
    MutSelf,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Plain,
    ConstructorOf(String),
    DestructorOf(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallSite {
    pub callee: String,
    /// Auditor-asserted reasons why particular callee atoms hold at this site.
    #[serde(default)]
    pub discharge_hints: BTreeMap<Atom, String>,
}

impl CallSite {
    pub fn to(callee: impl Into<String>) -> Self {
        CallSite {
            callee: callee.into(),
            discharge_hints: BTreeMap::new(),
        }
    }

    pub fn hinted_atoms(&self) -> FactSet {
        self.discharge_hints.keys().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionDecl {
    pub path: String,
    /// Owning struct, for constructors, destructors and methods.
    pub owner: Option<String>,
    pub visibility: Visibility,
    pub unsafety: Unsafety,
    pub receiver: Receiver,
    pub role: Role,
    pub sc: FactSet,
    pub establishes: FactSet,
    pub breaks: FactSet,
    pub calls: Vec<CallSite>,
}

/// Position of a function inside its owning struct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FnKind {
    Constructor,
    StaticFn,
    DynamicMethod,
    Destructor,
}

impl FunctionDecl {
    pub fn new(path: impl Into<String>) -> Self {
        FunctionDecl {
            path: path.into(),
            owner: None,
            visibility: Visibility::Private,
            unsafety: Unsafety::Safe,
            receiver: Receiver::None,
            role: Role::Plain,
            sc: FactSet::new(),
            establishes: FactSet::new(),
            breaks: FactSet::new(),
            calls: Vec::new(),
        }
    }

    pub fn is_unsafe(&self) -> bool {
        self.unsafety == Unsafety::Unsafe
    }

    pub fn is_public(&self) -> bool {
        self.visibility == Visibility::Public
    }

    pub fn kind(&self) -> FnKind {
        match (&self.role, self.receiver) {
            (Role::ConstructorOf(_), _) => FnKind::Constructor,
            (Role::DestructorOf(_), _) => FnKind::Destructor,
            (Role::Plain, Receiver::None) => FnKind::StaticFn,
            (Role::Plain, _) => FnKind::DynamicMethod,
        }
    }

    /// Dynamic methods and destructors run on an existing instance.
    pub fn runs_on_instance(&self) -> bool {
        matches!(self.kind(), FnKind::DynamicMethod | FnKind::Destructor)
    }

    /// Struct this function belongs to, from its role or explicit owner.
    pub fn owning_struct(&self) -> Option<&str> {
        match &self.role {
            Role::ConstructorOf(s) | Role::DestructorOf(s) => Some(s),
            Role::Plain => self.owner.as_deref(),
        }
    }

    /// Last path segment.
    pub fn name(&self) -> &str {
        self.path.rsplit("::").next().unwrap_or(&self.path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDecl {
    pub name: String,
    pub ty: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructDecl {
    pub path: String,
    pub visibility: Visibility,
    pub fields: Vec<FieldDecl>,
    pub invariants: FactSet,
    /// Code outside the struct may build it with a struct literal.
    #[serde(default)]
    pub literal_constructor: bool,
    /// Code outside the struct may write its fields directly.
    #[serde(default)]
    pub field_access: bool,
}

impl StructDecl {
    pub fn new(path: impl Into<String>) -> Self {
        StructDecl {
            path: path.into(),
            visibility: Visibility::Private,
            fields: Vec::new(),
            invariants: FactSet::new(),
            literal_constructor: false,
            field_access: false,
        }
    }

    pub fn is_public(&self) -> bool {
        self.visibility == Visibility::Public
    }

    pub fn literal_constructor_path(&self) -> String {
        format!("{}::<literal>", self.path)
    }

    pub fn field_access_path(&self) -> String {
        format!("{}::<field_access>", self.path)
    }
}

/// A function outside the crate, known only by its declared constraints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternDecl {
    pub path: String,
    pub unsafety: Unsafety,
    pub sc: FactSet,
}

impl ExternDecl {
    pub fn is_unsafe(&self) -> bool {
        self.unsafety == Unsafety::Unsafe
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleDecl {
    pub path: String,
    pub functions: Vec<FunctionDecl>,
    pub structs: Vec<StructDecl>,
    #[serde(default)]
    pub externs: Vec<ExternDecl>,
    pub submodules: Vec<ModuleDecl>,
}

impl ModuleDecl {
    pub fn new(path: impl Into<String>) -> Self {
        ModuleDecl {
            path: path.into(),
            functions: Vec::new(),
            structs: Vec::new(),
            externs: Vec::new(),
            submodules: Vec::new(),
        }
    }

    /// This module followed by all descendants, depth-first.
    pub fn walk(&self) -> Vec<&ModuleDecl> {
        let mut out = vec![self];
        for sub in &self.submodules {
            out.extend(sub.walk());
        }
        out
    }
}

/// Anything a call site can resolve to.
#[derive(Debug, Clone, Copy)]
pub enum Callee<'a> {
    Local(&'a FunctionDecl),
    Extern(&'a ExternDecl),
}

impl<'a> Callee<'a> {
    pub fn path(&self) -> &'a str {
        match self {
            Callee::Local(f) => &f.path,
            Callee::Extern(e) => &e.path,
        }
    }

    pub fn is_unsafe(&self) -> bool {
        match self {
            Callee::Local(f) => f.is_unsafe(),
            Callee::Extern(e) => e.is_unsafe(),
        }
    }

    pub fn sc(&self) -> &'a FactSet {
        match self {
            Callee::Local(f) => &f.sc,
            Callee::Extern(e) => &e.sc,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Index {
    functions: BTreeMap<String, FunctionDecl>,
    structs: BTreeMap<String, StructDecl>,
    externs: BTreeMap<String, ExternDecl>,
    /// item path -> path of the module declaring it
    module_of: BTreeMap<String, String>,
    modules: BTreeSet<String>,
}

/// An analyzed crate. Immutable once constructed.
#[derive(Debug, Clone, Serialize)]
pub struct CrateModel {
    pub name: String,
    pub root: ModuleDecl,
    #[serde(skip)]
    index: Index,
}

impl PartialEq for CrateModel {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.root == other.root
    }
}

impl Eq for CrateModel {}

impl CrateModel {
    /// Builds the index. Fails when two declarations share a path.
    pub fn new(name: impl Into<String>, root: ModuleDecl) -> Result<Self, Vec<Diagnostic>> {
        let mut model = CrateModel {
            name: name.into(),
            root,
            index: Index::default(),
        };
        let mut diags = Vec::new();
        let mut index = Index::default();
        let mut seen = BTreeSet::new();
        for module in model.root.walk() {
            let mut claim = |path: &str, diags: &mut Vec<Diagnostic>| {
                if !seen.insert(path.to_owned()) {
                    diags.push(Diagnostic::error(
                        Location::Entity(path.to_owned()),
                        format!("duplicate path `{path}`"),
                    ));
                    false
                } else {
                    true
                }
            };
            if claim(&module.path, &mut diags) {
                index.modules.insert(module.path.clone());
            }
            for s in &module.structs {
                if claim(&s.path, &mut diags) {
                    index.structs.insert(s.path.clone(), s.clone());
                    index.module_of.insert(s.path.clone(), module.path.clone());
                }
                for (enabled, synthetic) in [
                    (s.literal_constructor, literal_constructor_of(s)),
                    (s.field_access, field_access_of(s)),
                ] {
                    if enabled && claim(&synthetic.path, &mut diags) {
                        index.module_of.insert(synthetic.path.clone(), module.path.clone());
                        index.functions.insert(synthetic.path.clone(), synthetic);
                    }
                }
            }
            for f in &module.functions {
                if claim(&f.path, &mut diags) {
                    index.functions.insert(f.path.clone(), f.clone());
                    index.module_of.insert(f.path.clone(), module.path.clone());
                }
            }
            for e in &module.externs {
                if claim(&e.path, &mut diags) {
                    index.externs.insert(e.path.clone(), e.clone());
                    index.module_of.insert(e.path.clone(), module.path.clone());
                }
            }
        }
        if diags.is_empty() {
            model.index = index;
            Ok(model)
        } else {
            Err(diags)
        }
    }

    pub fn empty(name: &str) -> Self {
        CrateModel::new(name, ModuleDecl::new(name)).expect("empty model has no duplicates")
    }

    /// Every function, including implicit struct members, sorted by path.
    pub fn functions(&self) -> impl Iterator<Item = &FunctionDecl> {
        self.index.functions.values()
    }

    pub fn structs(&self) -> impl Iterator<Item = &StructDecl> {
        self.index.structs.values()
    }

    pub fn externs(&self) -> impl Iterator<Item = &ExternDecl> {
        self.index.externs.values()
    }

    pub fn function(&self, path: &str) -> Option<&FunctionDecl> {
        self.index.functions.get(path)
    }

    pub fn struct_decl(&self, path: &str) -> Option<&StructDecl> {
        self.index.structs.get(path)
    }

    pub fn extern_decl(&self, path: &str) -> Option<&ExternDecl> {
        self.index.externs.get(path)
    }

    pub fn has_module(&self, path: &str) -> bool {
        self.index.modules.contains(path)
    }

    pub fn resolve(&self, path: &str) -> Option<Callee<'_>> {
        if let Some(f) = self.function(path) {
            Some(Callee::Local(f))
        } else {
            self.extern_decl(path).map(Callee::Extern)
        }
    }

    /// Module that declares the given item.
    pub fn module_of(&self, path: &str) -> Option<&str> {
        self.index.module_of.get(path).map(String::as_str)
    }

    /// Functions owned by a struct (explicit and implicit), sorted by path.
    pub fn members_of<'a>(&'a self, struct_path: &'a str) -> impl Iterator<Item = &'a FunctionDecl> {
        self.functions()
            .filter(move |f| f.owning_struct() == Some(struct_path))
    }

    pub fn modules(&self) -> Vec<&ModuleDecl> {
        self.root.walk()
    }
}

fn literal_constructor_of(s: &StructDecl) -> FunctionDecl {
    FunctionDecl {
        visibility: s.visibility,
        role: Role::ConstructorOf(s.path.clone()),
        owner: Some(s.path.clone()),
        ..FunctionDecl::new(s.literal_constructor_path())
    }
}

fn field_access_of(s: &StructDecl) -> FunctionDecl {
    FunctionDecl {
        visibility: s.visibility,
        receiver: Receiver::MutSelf,
        owner: Some(s.path.clone()),
        breaks: s.invariants.clone(),
        ..FunctionDecl::new(s.field_access_path())
    }
}

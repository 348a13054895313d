//! Discharge obligations and soundness verdicts.
//!
//! Three kinds of obligation are generated:
//!
//! * `declare_sc`: an unsafe function must declare its safety constraints;
//! * `call_discharge`: a function, static method or constructor must make the
//!   constraints of each direct unsafe callee available;
//! * `pair_discharge`: for every constructor `c` of a struct and every dynamic
//!   method or destructor `m` with unsafe callees, the constraints of each of
//!   `m`'s unsafe callees must follow from what `c` and `m` provide once every
//!   invariant a disruptive method may break has been removed.
//!
//! Verdicts roll obligations up from functions to structs, modules and the
//! crate, in strong mode (every item) or weak mode (public items only).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constraints::{entails, facts_for_function, facts_for_pair, AvailableFacts, Source};
use crate::diag::{Diagnostic, Location};
use crate::model::{Atom, CrateModel, FactSet, FunctionDecl, ModuleDecl, DECLARED_SC_ATOM};
use crate::par::{self, Parallelism};
use crate::upg::{unsafe_callees_of, StructGroup, Upg, UpgError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObligationKind {
    DeclareSc,
    CallDischarge,
    PairDischarge,
}

impl ObligationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ObligationKind::DeclareSc => "declare_sc",
            ObligationKind::CallDischarge => "call_discharge",
            ObligationKind::PairDischarge => "pair_discharge",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    AutoDischarged,
    Open,
    ManuallyDischarged,
}

impl Status {
    pub fn is_discharged(self) -> bool {
        self != Status::Open
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::AutoDischarged => "auto_discharged",
            Status::Open => "open",
            Status::ManuallyDischarged => "manually_discharged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Obligation {
    pub id: String,
    pub kind: ObligationKind,
    /// `[function]`, `[caller, callee]` or `[constructor, method, callee]`.
    pub subject: Vec<String>,
    /// Function whose body the obligation is about.
    pub owner: String,
    pub required: FactSet,
    pub available: AvailableFacts,
    pub missing: FactSet,
    pub status: Status,
}

impl Obligation {
    fn new(kind: ObligationKind, subject: Vec<String>, required: FactSet, available: AvailableFacts) -> Self {
        let missing = entails(&available, &required).missing();
        let status = if missing.is_empty() {
            Status::AutoDischarged
        } else {
            Status::Open
        };
        let owner = match kind {
            ObligationKind::PairDischarge => subject[1].clone(),
            _ => subject[0].clone(),
        };
        Obligation {
            id: obligation_id(kind, &subject, &required),
            kind,
            subject,
            owner,
            required,
            available,
            missing,
            status,
        }
    }

    pub fn callee(&self) -> Option<&str> {
        match self.kind {
            ObligationKind::DeclareSc => None,
            _ => self.subject.last().map(String::as_str),
        }
    }
}

/// First 16 hex digits of SHA-256 over kind, subject paths and required atoms.
pub fn obligation_id(kind: ObligationKind, subject: &[String], required: &FactSet) -> String {
    let mut h = Sha256::new();
    h.update(kind.as_str().as_bytes());
    h.update(b"\n");
    h.update(subject.join(",").as_bytes());
    h.update(b"\n");
    let atoms: Vec<&str> = required.iter().map(Atom::as_str).collect();
    h.update(atoms.join(",").as_bytes());
    hex::encode(&h.finalize()[..8])
}

/// Atoms hinted at every call site from `f` to `callee`.
fn common_hints(f: &FunctionDecl, callee: &str) -> FactSet {
    f.calls
        .iter()
        .filter(|c| c.callee == callee)
        .map(|c| c.hinted_atoms())
        .reduce(|acc, h| acc.intersection(&h))
        .unwrap_or_default()
}

fn declare_sc(f: &FunctionDecl) -> Option<Obligation> {
    (f.is_unsafe() && f.sc.is_empty()).then(|| {
        Obligation::new(
            ObligationKind::DeclareSc,
            vec![f.path.clone()],
            [DECLARED_SC_ATOM].into_iter().collect(),
            AvailableFacts::new(),
        )
    })
}

/// Obligations of a single function body.
///
/// Emits `declare_sc` for an unsafe function without constraints. For
/// functions that do not run on an instance, also one `call_discharge` per
/// direct unsafe callee; calls from dynamic methods and destructors are
/// covered by [`gen_struct_obligations`] instead.
pub fn gen_function_obligations(f: &FunctionDecl, model: &CrateModel) -> Result<Vec<Obligation>, UpgError> {
    let mut out: Vec<Obligation> = declare_sc(f).into_iter().collect();
    if f.runs_on_instance() {
        return Ok(out);
    }
    for call in &f.calls {
        if model.resolve(&call.callee).is_none() {
            return Err(UpgError::UnresolvedFunction(call.callee.clone()));
        }
    }
    let base = facts_for_function(f);
    for callee in unsafe_callees_of(model, f) {
        let required = model.resolve(&callee).expect("resolved above").sc().clone();
        let mut available = base.clone();
        available.add(&common_hints(f, &callee), Source::Auditor);
        out.push(Obligation::new(
            ObligationKind::CallDischarge,
            vec![f.path.clone(), callee],
            required,
            available,
        ));
    }
    Ok(out)
}

fn pair_obligations(group: &StructGroup, model: &CrateModel, diags: &mut Vec<Diagnostic>) -> Vec<Obligation> {
    let mut out = Vec::new();
    for method_path in group.instance_methods() {
        let Some(method) = model.function(method_path) else { continue };
        let callees = unsafe_callees_of(model, method);
        if callees.is_empty() {
            continue;
        }
        if group.constructors.is_empty() {
            diags.push(Diagnostic::warn(
                Location::Entity(method_path.to_owned()),
                "method calls unsafe code but its struct has no constructor; no instance can reach it",
            ));
            continue;
        }
        for ctor in group.constructors.iter().filter_map(|c| model.function(c)) {
            let base = facts_for_pair(ctor, method, group, model);
            for callee in &callees {
                let required = model.resolve(callee).expect("unsafe callee resolves").sc().clone();
                let mut available = base.clone();
                available.add(&common_hints(method, callee), Source::Auditor);
                out.push(Obligation::new(
                    ObligationKind::PairDischarge,
                    vec![ctor.path.clone(), method.path.clone(), callee.clone()],
                    required,
                    available,
                ));
            }
        }
    }
    out
}

/// Pair obligations of a struct group plus the function obligations of its
/// constructors and static methods.
pub fn gen_struct_obligations(
    group: &StructGroup,
    model: &CrateModel,
) -> Result<(Vec<Obligation>, Vec<Diagnostic>), UpgError> {
    let mut diags = Vec::new();
    let mut out = Vec::new();
    for f in model.members_of(&group.struct_path).filter(|f| !f.runs_on_instance()) {
        out.extend(gen_function_obligations(f, model)?);
    }
    out.extend(pair_obligations(group, model, &mut diags));
    Ok((out, diags))
}

/// Every obligation of a crate, sorted by id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObligationSet {
    pub obligations: Vec<Obligation>,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
}

impl ObligationSet {
    pub fn get(&self, id: &str) -> Option<&Obligation> {
        self.obligations
            .binary_search_by(|o| o.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.obligations[i])
    }

    pub fn all_auto_discharged(&self) -> bool {
        self.obligations.iter().all(|o| o.status == Status::AutoDischarged)
    }

    /// Generation-time statuses.
    pub fn statuses(&self) -> Statuses {
        self.obligations.iter().map(|o| (o.id.clone(), o.status)).collect()
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.obligations).expect("obligations serialize");
        s.push('\n');
        s
    }
}

pub type Statuses = BTreeMap<String, Status>;

pub fn gen_crate_obligations(model: &CrateModel, upg: &Upg, mode: Parallelism) -> Result<ObligationSet, UpgError> {
    let functions: Vec<&FunctionDecl> = model.functions().collect();
    let per_fn = par::map(mode, &functions, |f| gen_function_obligations(f, model));
    let per_group = par::map(mode, &upg.struct_groups, |g| {
        let mut diags = Vec::new();
        let obs = pair_obligations(g, model, &mut diags);
        (obs, diags)
    });
    let mut set = ObligationSet::default();
    for obs in per_fn {
        set.obligations.extend(obs?);
    }
    for (obs, diags) in per_group {
        set.obligations.extend(obs);
        set.diagnostics.extend(diags);
    }
    set.obligations.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Strong,
    Weak,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Strong => "strong",
            Mode::Weak => "weak",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Sound,
    Open(usize),
    Invalid(Vec<String>),
}

impl Verdict {
    pub fn is_sound(&self) -> bool {
        *self == Verdict::Sound
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Sound => "sound",
            Verdict::Open(_) => "open",
            Verdict::Invalid(_) => "invalid",
        }
    }

    pub fn unresolved(&self) -> usize {
        match self {
            Verdict::Open(n) => *n,
            _ => 0,
        }
    }

    fn combine(self, other: Verdict) -> Verdict {
        match (self, other) {
            (Verdict::Invalid(mut a), Verdict::Invalid(b)) => {
                a.extend(b);
                Verdict::Invalid(a)
            }
            (v @ Verdict::Invalid(_), _) | (_, v @ Verdict::Invalid(_)) => v,
            (a, b) => match a.unresolved() + b.unresolved() {
                0 => Verdict::Sound,
                n => Verdict::Open(n),
            },
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Sound => f.write_str("sound"),
            Verdict::Open(n) => write!(f, "open ({n})"),
            Verdict::Invalid(d) => write!(f, "invalid ({})", d.join("; ")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EntityVerdict {
    pub path: String,
    pub verdict: String,
    pub unresolved: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

impl EntityVerdict {
    fn new(path: &str, v: &Verdict) -> Self {
        EntityVerdict {
            path: path.to_owned(),
            verdict: v.label().to_owned(),
            unresolved: v.unresolved(),
            diagnostics: match v {
                Verdict::Invalid(d) => d.clone(),
                _ => Vec::new(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerdictTree {
    #[serde(rename = "crate")]
    pub crate_verdict: String,
    pub unresolved: usize,
    pub mode: Mode,
    pub modules: Vec<EntityVerdict>,
    pub structs: Vec<EntityVerdict>,
    pub functions: Vec<EntityVerdict>,
}

impl VerdictTree {
    pub fn is_sound(&self) -> bool {
        self.crate_verdict == "sound"
    }
}

/// Inputs shared by every verdict computation.
pub struct VerdictContext<'a> {
    pub model: &'a CrateModel,
    pub obligations: &'a ObligationSet,
    pub statuses: &'a Statuses,
    /// Error diagnostics anchored at entities turn those entities invalid.
    pub diagnostics: &'a [Diagnostic],
}

impl<'a> VerdictContext<'a> {
    fn status(&self, o: &Obligation) -> Status {
        self.statuses.get(&o.id).copied().unwrap_or(o.status)
    }

    pub fn function_verdict(&self, path: &str) -> Verdict {
        let errors: Vec<String> = self
            .diagnostics
            .iter()
            .filter(|d| d.is_error())
            .filter(|d| d.entity().is_some_and(|e| e.split('#').next() == Some(path)))
            .map(|d| d.message.clone())
            .collect();
        if !errors.is_empty() {
            return Verdict::Invalid(errors);
        }
        let open = self
            .obligations
            .obligations
            .iter()
            .filter(|o| o.owner == path && !self.status(o).is_discharged())
            .count();
        if open == 0 {
            Verdict::Sound
        } else {
            Verdict::Open(open)
        }
    }

    pub fn struct_verdict(&self, path: &str) -> Verdict {
        let own_errors: Vec<String> = self
            .diagnostics
            .iter()
            .filter(|d| d.is_error() && d.entity() == Some(path))
            .map(|d| d.message.clone())
            .collect();
        let base = if own_errors.is_empty() {
            Verdict::Sound
        } else {
            Verdict::Invalid(own_errors)
        };
        self.model
            .members_of(path)
            .map(|f| self.function_verdict(&f.path))
            .fold(base, Verdict::combine)
    }

    pub fn module_verdict(&self, module: &ModuleDecl, mode: Mode) -> Verdict {
        let included = |public: bool| mode == Mode::Strong || public;
        let mut v = Verdict::Sound;
        for f in module.functions.iter().filter(|f| f.owning_struct().is_none()) {
            if included(f.is_public()) {
                v = v.combine(self.function_verdict(&f.path));
            }
        }
        for s in module.structs.iter().filter(|s| included(s.is_public())) {
            v = v.combine(self.struct_verdict(&s.path));
        }
        for sub in &module.submodules {
            v = v.combine(self.module_verdict(sub, mode));
        }
        v
    }

    pub fn crate_verdict(&self, mode: Mode) -> VerdictTree {
        let modules: Vec<EntityVerdict> = {
            let mut ms: Vec<_> = self
                .model
                .modules()
                .into_iter()
                .map(|m| EntityVerdict::new(&m.path, &self.module_verdict(m, mode)))
                .collect();
            ms.sort_by(|a, b| a.path.cmp(&b.path));
            ms
        };
        let structs = self
            .model
            .structs()
            .map(|s| EntityVerdict::new(&s.path, &self.struct_verdict(&s.path)))
            .collect();
        let functions = self
            .model
            .functions()
            .map(|f| EntityVerdict::new(&f.path, &self.function_verdict(&f.path)))
            .collect();
        let root = self.module_verdict(&self.model.root, mode);
        VerdictTree {
            crate_verdict: root.label().to_owned(),
            unresolved: root.unresolved(),
            mode,
            modules,
            structs,
            functions,
        }
    }
}

/// Obligations grouped by the struct their owner belongs to (free functions
/// map to `None`).
pub fn by_struct<'a>(model: &CrateModel, set: &'a ObligationSet) -> BTreeMap<Option<String>, Vec<&'a Obligation>> {
    let mut out: BTreeMap<Option<String>, Vec<&Obligation>> = BTreeMap::new();
    for o in &set.obligations {
        let s = model
            .function(&o.owner)
            .and_then(|f| f.owning_struct())
            .map(str::to_owned);
        out.entry(s).or_default().push(o);
    }
    out
}

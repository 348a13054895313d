//! Semantic checks over a constructed [`CrateModel`].

use crate::diag::{Diagnostic, Location};
use crate::model::{Callee, CrateModel, FactSet, FnKind, FunctionDecl, Receiver, Role};

pub fn validate(model: &CrateModel) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    for f in model.functions() {
        check_function(model, f, &mut diags);
    }
    for s in model.structs() {
        let destructors: Vec<_> = model
            .members_of(&s.path)
            .filter(|f| f.kind() == FnKind::Destructor)
            .collect();
        if destructors.len() > 1 {
            diags.push(Diagnostic::error(
                at(&s.path),
                format!("struct declares {} destructors", destructors.len()),
            ));
        }
        check_reserved(&s.path, &s.invariants, &mut diags);
        let gaps = invariant_gaps(model, &s.path, &s.invariants);
        if !gaps.is_empty() {
            diags.push(Diagnostic::warn(
                at(&s.path),
                format!("constructor-established atoms {gaps} are required by methods but missing from the struct invariants"),
            ));
        }
    }
    for e in model.externs() {
        match (e.is_unsafe(), e.sc.is_empty()) {
            (false, false) => diags.push(Diagnostic::error(
                at(&e.path),
                "safe function declares non-empty sc",
            )),
            (true, true) => diags.push(Diagnostic::warn(
                at(&e.path),
                "unsafe function declares no safety constraints",
            )),
            _ => {}
        }
        check_reserved(&e.path, &e.sc, &mut diags);
    }
    diags.sort_by(|a, b| a.location.cmp(&b.location));
    diags
}

fn at(path: &str) -> Location {
    Location::Entity(path.to_owned())
}

/// Location of the `index`-th call site of `caller`.
pub fn call_site_location(caller: &str, index: usize) -> Location {
    Location::Entity(format!("{caller}#{index}"))
}

fn check_function(model: &CrateModel, f: &FunctionDecl, diags: &mut Vec<Diagnostic>) {
    let here = || at(&f.path);
    match (f.is_unsafe(), f.sc.is_empty()) {
        (false, false) => diags.push(Diagnostic::error(here(), "safe function declares non-empty sc")),
        (true, true) => diags.push(Diagnostic::warn(
            here(),
            "unsafe function declares no safety constraints",
        )),
        _ => {}
    }
    match &f.role {
        Role::ConstructorOf(_) if f.receiver != Receiver::None => {
            diags.push(Diagnostic::error(here(), "constructor must not take a receiver"))
        }
        Role::DestructorOf(_) if f.receiver != Receiver::MutSelf || f.is_unsafe() => diags.push(
            Diagnostic::error(here(), "destructor must be safe and take `&mut self`"),
        ),
        _ => {}
    }
    if let (Role::ConstructorOf(s) | Role::DestructorOf(s), Some(owner)) = (&f.role, &f.owner) {
        if s != owner {
            diags.push(Diagnostic::error(
                here(),
                format!("role names struct `{s}` but owner is `{owner}`"),
            ));
        }
    }
    match f.owning_struct() {
        Some(s) if model.struct_decl(s).is_none() => {
            diags.push(Diagnostic::error(here(), format!("unknown struct `{s}`")))
        }
        None if f.receiver != Receiver::None => diags.push(Diagnostic::error(
            here(),
            "method with a receiver has no owning struct",
        )),
        _ => {}
    }
    if !f.breaks.is_empty() && !f.runs_on_instance() {
        diags.push(Diagnostic::error(
            here(),
            "only dynamic methods and destructors may declare `breaks`",
        ));
    }
    for set in [&f.sc, &f.establishes, &f.breaks] {
        check_reserved(&f.path, set, diags);
    }
    for (i, call) in f.calls.iter().enumerate() {
        match model.resolve(&call.callee) {
            None => diags.push(Diagnostic::error(
                call_site_location(&f.path, i),
                format!("unresolved callee `{}`", call.callee),
            )),
            Some(callee) => {
                for atom in call.discharge_hints.keys() {
                    if !callee.sc().contains(atom) {
                        diags.push(Diagnostic::error(
                            call_site_location(&f.path, i),
                            format!(
                                "discharge hint `{atom}` is not a safety constraint of `{}`",
                                callee.path()
                            ),
                        ));
                    }
                }
            }
        }
    }
}

fn check_reserved(path: &str, set: &FactSet, diags: &mut Vec<Diagnostic>) {
    for atom in set.iter().filter(|a| a.is_reserved()) {
        diags.push(Diagnostic::error(
            at(path),
            format!("atom `{atom}` uses the reserved `__` prefix"),
        ));
    }
}

/// Atoms some constructor establishes that some instance method's unsafe
/// callee requires, but which the struct does not list as an invariant.
fn invariant_gaps(model: &CrateModel, struct_path: &str, invariants: &FactSet) -> FactSet {
    let mut established = FactSet::new();
    let mut required = FactSet::new();
    for f in model.members_of(struct_path) {
        match f.kind() {
            FnKind::Constructor => established.extend(&f.establishes),
            FnKind::DynamicMethod | FnKind::Destructor => {
                for call in &f.calls {
                    if let Some(callee) = model.resolve(&call.callee).filter(Callee::is_unsafe) {
                        required.extend(callee.sc());
                    }
                }
            }
            FnKind::StaticFn => {}
        }
    }
    established.intersection(&required).difference(invariants)
}

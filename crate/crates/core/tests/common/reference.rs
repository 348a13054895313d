//! A deliberately naive second implementation of the execution semantics.
//!
//! Struct membership comes straight from the model rather than the graph,
//! and traces are enumerated breadth-first by explicit counting, so
//! disagreements with the library oracle point at a bug in one of the two.

use std::collections::BTreeSet;

use upg_core::model::{CrateModel, FnKind, FunctionDecl};

type State = BTreeSet<String>;

fn names(set: &upg_core::FactSet) -> impl Iterator<Item = String> + '_ {
    set.iter().map(|a| a.as_str().to_owned())
}

/// `None` when some unsafe call is not covered.
pub fn step(model: &CrateModel, f: &FunctionDecl, state: &State) -> Option<State> {
    let mut s = state.clone();
    s.extend(names(&f.sc));
    s.extend(names(&f.establishes));
    for call in &f.calls {
        let callee = model.resolve(&call.callee).expect("resolved");
        if !callee.is_unsafe() {
            continue;
        }
        for need in names(callee.sc()) {
            let hinted = call.discharge_hints.keys().any(|h| h.as_str() == need);
            if !s.contains(&need) && !hinted {
                return None;
            }
        }
    }
    for b in names(&f.breaks) {
        if !f.sc.iter().any(|a| a.as_str() == b) {
            s.remove(&b);
        }
    }
    Some(s)
}

pub fn function_ub(model: &CrateModel, f: &FunctionDecl) -> bool {
    step(model, f, &names(&f.sc).collect()).is_none()
}

pub fn trace_ub(model: &CrateModel, trace: &[&FunctionDecl]) -> bool {
    let mut state: State = trace.iter().flat_map(|f| names(&f.sc)).collect();
    for f in trace {
        match step(model, f, &state) {
            Some(next) => state = next,
            None => return true,
        }
    }
    false
}

pub struct Members<'m> {
    pub constructors: Vec<&'m FunctionDecl>,
    pub methods: Vec<&'m FunctionDecl>,
    pub destructor: Option<&'m FunctionDecl>,
}

pub fn members<'m>(model: &'m CrateModel, struct_path: &str) -> Members<'m> {
    let mut m = Members {
        constructors: Vec::new(),
        methods: Vec::new(),
        destructor: None,
    };
    for f in model.functions() {
        if f.owning_struct() != Some(struct_path) {
            continue;
        }
        match f.kind() {
            FnKind::Constructor => m.constructors.push(f),
            FnKind::DynamicMethod => m.methods.push(f),
            FnKind::Destructor => m.destructor = Some(f),
            FnKind::StaticFn => {}
        }
    }
    m
}

/// Every trace of at most `k` method calls, each with and without the
/// destructor at the end.
pub fn all_traces<'m>(members: &Members<'m>, k: usize) -> Vec<Vec<&'m FunctionDecl>> {
    let mut out = Vec::new();
    let n = members.methods.len();
    for ctor in &members.constructors {
        for len in 0..=k {
            if n == 0 && len > 0 {
                break;
            }
            let total = n.pow(len as u32);
            for mut code in 0..total {
                let mut trace = vec![*ctor];
                for _ in 0..len {
                    trace.push(members.methods[code % n]);
                    code /= n;
                }
                if let Some(d) = members.destructor {
                    let mut closed = trace.clone();
                    closed.push(d);
                    out.push(closed);
                }
                out.push(trace);
            }
        }
    }
    out
}

pub fn ub_traces(model: &CrateModel, struct_path: &str, k: usize) -> Vec<Vec<String>> {
    all_traces(&members(model, struct_path), k)
        .into_iter()
        .filter(|t| trace_ub(model, t))
        .map(|t| t.iter().map(|f| f.path.clone()).collect())
        .collect()
}

/// Whether anything in the crate can reach undefined behavior within `k`.
pub fn crate_has_ub(model: &CrateModel, k: usize) -> bool {
    let functions = model
        .functions()
        .filter(|f| matches!(f.kind(), FnKind::Constructor | FnKind::StaticFn))
        .any(|f| function_ub(model, f));
    functions || model.structs().any(|s| !ub_traces(model, &s.path, k).is_empty())
}

//! Bounded abstract-execution oracle.
//!
//! A function body executes over a set of atoms that are currently true:
//! its established atoms and its own constraints hold before the first call,
//! every unsafe call must find its callee's constraints (plus any atoms hinted
//! at that call site) in the state, and after the last call the state loses
//! the invariants the body breaks but does not itself require. Executing an
//! unsafe call whose constraints are not all true is undefined behavior.
//!
//! Struct checks enumerate every trace `constructor; m1; ...; mj (; destructor)`
//! with `j <= k` exhaustively. Bodies of callees are not entered: each
//! function is checked against its own contract separately.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::bs_of_method;
use crate::model::{CrateModel, FactSet, FunctionDecl};
use crate::par::{self, Parallelism};
use crate::upg::{unsafe_callees_of, StructGroup, Upg};

pub const DEFAULT_BOUND: usize = 4;
pub const DEFAULT_TRACE_CAP: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("struct `{struct_path}` needs {traces} traces per constructor at bound {bound}, above the cap of {cap}")]
    TraceCapExceeded {
        struct_path: String,
        traces: u64,
        bound: usize,
        cap: u64,
    },
    #[error("trace bound must be at least 1")]
    ZeroBound,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstractState {
    pub atoms: FactSet,
}

impl AbstractState {
    pub fn new(atoms: FactSet) -> Self {
        AbstractState { atoms }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub steps: Vec<String>,
    pub context_assumptions: FactSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UbReport {
    pub trace: Trace,
    pub failing_step: String,
    pub failing_callee: String,
    pub missing: FactSet,
}

/// Runs one body from `state`.
pub fn exec_function(f: &FunctionDecl, state: &AbstractState, model: &CrateModel) -> Result<AbstractState, UbReport> {
    let mut atoms = state.atoms.union(&f.establishes);
    atoms.extend(&f.sc);
    for call in &f.calls {
        let Some(callee) = model.resolve(&call.callee) else { continue };
        if !callee.is_unsafe() {
            continue;
        }
        let have = atoms.union(&call.hinted_atoms());
        let missing = callee.sc().difference(&have);
        if !missing.is_empty() {
            return Err(UbReport {
                trace: Trace {
                    steps: vec![f.path.clone()],
                    context_assumptions: state.atoms.clone(),
                },
                failing_step: f.path.clone(),
                failing_callee: callee.path().to_owned(),
                missing,
            });
        }
    }
    atoms.remove_all(&bs_of_method(f));
    Ok(AbstractState { atoms })
}

/// Runs `f` from its own constraints.
pub fn oracle_check_function(f: &FunctionDecl, model: &CrateModel) -> Option<UbReport> {
    exec_function(f, &AbstractState::new(f.sc.clone()), model).err()
}

/// `(|methods| + has_destructor) ^ bound`, saturating.
pub fn traces_per_constructor(group: &StructGroup, bound: usize) -> u64 {
    let width = group.instance_methods().len() as u64;
    let exp = u32::try_from(bound).unwrap_or(u32::MAX);
    width.saturating_pow(exp)
}

fn run_trace(steps: &[&FunctionDecl], model: &CrateModel) -> Option<UbReport> {
    let assumptions = steps.iter().fold(FactSet::new(), |acc, f| acc.union(&f.sc));
    let mut state = AbstractState::new(assumptions.clone());
    for f in steps {
        match exec_function(f, &state, model) {
            Ok(next) => state = next,
            Err(ub) => {
                return Some(UbReport {
                    trace: Trace {
                        steps: steps.iter().map(|f| f.path.clone()).collect(),
                        context_assumptions: assumptions,
                    },
                    ..ub
                })
            }
        }
    }
    None
}

/// Enumerates the traces of one constructor in order: a sequence, then the
/// same sequence closed by the destructor, then its one-longer extensions.
fn first_ub_from(
    ctor: &FunctionDecl,
    methods: &[&FunctionDecl],
    destructor: Option<&FunctionDecl>,
    bound: usize,
    model: &CrateModel,
) -> Option<UbReport> {
    fn walk<'m>(
        trace: &mut Vec<&'m FunctionDecl>,
        methods: &[&'m FunctionDecl],
        destructor: Option<&'m FunctionDecl>,
        remaining: usize,
        model: &CrateModel,
    ) -> Option<UbReport> {
        if let Some(ub) = run_trace(trace, model) {
            return Some(ub);
        }
        if let Some(d) = destructor {
            trace.push(d);
            let found = run_trace(trace, model);
            trace.pop();
            if found.is_some() {
                return found;
            }
        }
        if remaining == 0 {
            return None;
        }
        for m in methods {
            trace.push(m);
            let found = walk(trace, methods, destructor, remaining - 1, model);
            trace.pop();
            if found.is_some() {
                return found;
            }
        }
        None
    }
    let mut trace = vec![ctor];
    walk(&mut trace, methods, destructor, bound, model)
}

/// Exhaustive bounded check of a struct. Returns the first witness in
/// enumeration order (constructors by path, then trace order).
pub fn oracle_check_struct(
    group: &StructGroup,
    bound: usize,
    cap: u64,
    model: &CrateModel,
    mode: Parallelism,
) -> Result<Option<UbReport>, OracleError> {
    if bound == 0 {
        return Err(OracleError::ZeroBound);
    }
    let reaches_unsafe = group
        .instance_methods()
        .into_iter()
        .filter_map(|m| model.function(m))
        .any(|m| !unsafe_callees_of(model, m).is_empty());
    if !reaches_unsafe {
        return Ok(None);
    }
    let traces = traces_per_constructor(group, bound);
    if traces > cap {
        return Err(OracleError::TraceCapExceeded {
            struct_path: group.struct_path.clone(),
            traces,
            bound,
            cap,
        });
    }
    let methods: Vec<&FunctionDecl> = group
        .dynamic_methods
        .iter()
        .filter_map(|m| model.function(m))
        .collect();
    let destructor = group.destructor.as_deref().and_then(|d| model.function(d));
    let ctors: Vec<&FunctionDecl> = group
        .constructors
        .iter()
        .filter_map(|c| model.function(c))
        .collect();
    let found = par::map(mode, &ctors, |c| first_ub_from(c, &methods, destructor, bound, model));
    Ok(found.into_iter().flatten().next())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleReport {
    pub checked: usize,
    pub ub_witnesses: Vec<UbReport>,
}

/// Checks every function that does not run on an instance, then every struct
/// group. Witnesses come out in that order, each list sorted by path.
pub fn oracle_check_crate(
    model: &CrateModel,
    upg: &Upg,
    bound: usize,
    cap: u64,
    mode: Parallelism,
) -> Result<OracleReport, OracleError> {
    if bound == 0 {
        return Err(OracleError::ZeroBound);
    }
    let functions: Vec<&FunctionDecl> = model.functions().filter(|f| !f.runs_on_instance()).collect();
    let fn_results = par::map(mode, &functions, |f| oracle_check_function(f, model));
    let mut witnesses: Vec<UbReport> = fn_results.into_iter().flatten().collect();
    let struct_results = par::map(mode, &upg.struct_groups, |g| oracle_check_struct(g, bound, cap, model, mode));
    for found in struct_results {
        witnesses.extend(found?);
    }
    Ok(OracleReport {
        checked: functions.len() + upg.struct_groups.len(),
        ub_witnesses: witnesses,
    })
}

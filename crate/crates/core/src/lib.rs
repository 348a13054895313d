//! Soundness auditing of unsafe code over a modeled Rust crate.
//!
//! The pipeline: parse a crate model ([`facts`] or [`json`]), [`validate`] it,
//! build the unsafety propagation graph ([`upg`]), generate discharge
//! obligations and verdicts ([`obligations`]) using the set algebra in
//! [`constraints`], cross-check against the bounded oracle in [`semantics`],
//! and fold in auditor judgments ([`audit`]).

pub mod audit;
pub mod constraints;
pub mod diag;
pub mod facts;
pub mod json;
pub mod model;
pub mod obligations;
pub mod par;
pub mod report;
pub mod semantics;
pub mod upg;
pub mod validate;

pub use diag::{Diagnostic, Location, Severity};
pub use facts::parse_facts;
pub use json::load_json;
pub use model::{Atom, CrateModel, FactSet};
pub use par::Parallelism;
pub use validate::validate;

use obligations::{gen_crate_obligations, Mode, ObligationSet, Statuses, VerdictContext, VerdictTree};
use upg::{build_upg, segment, Subgraph, Upg, UpgError};

/// Everything derived from a model that does not depend on audit state.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub model: CrateModel,
    /// Validation findings plus obligation-generation diagnostics.
    pub diagnostics: Vec<Diagnostic>,
    pub upg: Upg,
    pub subgraphs: Vec<Subgraph>,
    pub obligations: ObligationSet,
}

impl Analysis {
    pub fn new(model: CrateModel, mode: Parallelism) -> Result<Self, UpgError> {
        let mut diagnostics = validate(&model);
        let upg = build_upg(&model);
        let subgraphs = segment(&upg);
        let obligations = gen_crate_obligations(&model, &upg, mode)?;
        diagnostics.extend(obligations.diagnostics.iter().cloned());
        Ok(Analysis {
            model,
            diagnostics,
            upg,
            subgraphs,
            obligations,
        })
    }

    pub fn verdicts(&self, statuses: &Statuses, mode: Mode) -> VerdictTree {
        VerdictContext {
            model: &self.model,
            obligations: &self.obligations,
            statuses,
            diagnostics: &self.diagnostics,
        }
        .crate_verdict(mode)
    }
}

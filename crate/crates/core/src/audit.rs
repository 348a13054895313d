//! Persisted auditor judgments.
//!
//! Judgments live in an append-only, line-delimited JSON file. Each line is
//! stamped with the fingerprint of the model it was made against; after any
//! change to the model those judgments are stale and no longer count, but
//! they stay in the trail.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::Path;

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::diag::{Diagnostic, Location};
use crate::json::to_canonical_json;
use crate::model::CrateModel;
use crate::obligations::{ObligationSet, Status, Statuses};

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("unknown obligation `{0}`")]
    UnknownObligation(String),
    #[error("justification must not be empty")]
    EmptyJustification,
    #[error("audit state was loaded for model {state}, current model is {current}")]
    StaleFingerprint { state: String, current: String },
    #[error("{path}:{line}: {message}")]
    Malformed { path: String, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgmentVerdict {
    Discharged,
    Reopened,
}

impl std::str::FromStr for JudgmentVerdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "discharged" => Ok(JudgmentVerdict::Discharged),
            "reopened" => Ok(JudgmentVerdict::Reopened),
            other => Err(format!("unknown verdict `{other}` (expected discharged or reopened)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub id: String,
    pub verdict: JudgmentVerdict,
    pub justification: String,
    pub author: String,
    /// ISO-8601 UTC.
    pub ts: String,
    /// Model the judgment was made against.
    #[serde(default)]
    pub fingerprint: String,
}

impl Judgment {
    pub fn to_line(&self) -> String {
        let value = serde_json::to_value(self).expect("judgment serializes");
        serde_json::to_string(&value).expect("value serializes")
    }
}

/// SHA-256 of the canonical JSON serialization, hex encoded.
pub fn model_fingerprint(model: &CrateModel) -> String {
    hex::encode(Sha256::digest(to_canonical_json(model).as_bytes()))
}

pub fn now_utc() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditState {
    pub model_fingerprint: String,
    pub judgments: Vec<Judgment>,
}

impl AuditState {
    pub fn new(model_fingerprint: impl Into<String>) -> Self {
        AuditState {
            model_fingerprint: model_fingerprint.into(),
            judgments: Vec::new(),
        }
    }

    /// Reads a trail for the current model. A missing file is an empty trail.
    ///
    /// Judgments naming obligations that do not exist are left out of the
    /// state and reported; stale judgments are kept and reported.
    pub fn load(
        path: &Path,
        model_fingerprint: &str,
        obligations: &ObligationSet,
    ) -> Result<(AuditState, Vec<Diagnostic>), AuditError> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(e.into()),
        };
        let mut state = AuditState::new(model_fingerprint);
        let mut diags = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let judgment: Judgment = serde_json::from_str(line).map_err(|e| AuditError::Malformed {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })?;
            let here = Location::Source { line: i + 1, column: 1 };
            if obligations.get(&judgment.id).is_none() {
                diags.push(Diagnostic::warn(
                    here,
                    format!("judgment for unknown obligation `{}` ignored", judgment.id),
                ));
                continue;
            }
            if judgment.fingerprint != model_fingerprint {
                diags.push(Diagnostic::warn(
                    here,
                    format!("judgment for `{}` was made against a different model; treated as stale", judgment.id),
                ));
            }
            state.judgments.push(judgment);
        }
        Ok((state, diags))
    }

    pub fn is_stale(&self, judgment: &Judgment) -> bool {
        judgment.fingerprint != self.model_fingerprint
    }

    /// Records a judgment and returns the new state; `self` is untouched.
    #[allow(clippy::too_many_arguments)]
    pub fn mark(
        &self,
        current_fingerprint: &str,
        obligations: &ObligationSet,
        id: &str,
        verdict: JudgmentVerdict,
        justification: &str,
        author: &str,
        ts: &str,
    ) -> Result<(AuditState, Judgment), AuditError> {
        if self.model_fingerprint != current_fingerprint {
            return Err(AuditError::StaleFingerprint {
                state: self.model_fingerprint.clone(),
                current: current_fingerprint.to_owned(),
            });
        }
        if obligations.get(id).is_none() {
            return Err(AuditError::UnknownObligation(id.to_owned()));
        }
        if justification.trim().is_empty() {
            return Err(AuditError::EmptyJustification);
        }
        let judgment = Judgment {
            id: id.to_owned(),
            verdict,
            justification: justification.to_owned(),
            author: author.to_owned(),
            ts: ts.to_owned(),
            fingerprint: current_fingerprint.to_owned(),
        };
        let mut next = self.clone();
        next.judgments.push(judgment.clone());
        Ok((next, judgment))
    }

    /// Ids of obligations whose latest judgment is stale.
    pub fn stale_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .judgments
            .iter()
            .filter(|j| self.is_stale(j))
            .map(|j| j.id.clone())
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }
}

/// Auto-discharged obligations stay so; otherwise the latest current
/// judgment decides, and without one the obligation is open.
pub fn effective_statuses(obligations: &ObligationSet, state: &AuditState) -> Statuses {
    obligations
        .obligations
        .iter()
        .map(|o| {
            let status = if o.status == Status::AutoDischarged {
                Status::AutoDischarged
            } else {
                state
                    .judgments
                    .iter()
                    .rev()
                    .filter(|j| j.id == o.id && !state.is_stale(j))
                    .map(|j| match j.verdict {
                        JudgmentVerdict::Discharged => Status::ManuallyDischarged,
                        JudgmentVerdict::Reopened => Status::Open,
                    })
                    .next()
                    .unwrap_or(Status::Open)
            };
            (o.id.clone(), status)
        })
        .collect()
}

/// Appends one line and syncs it to disk.
pub fn append_judgment(path: &Path, judgment: &Judgment) -> io::Result<()> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut line = judgment.to_line();
    line.push('\n');
    file.write_all(line.as_bytes())?;
    file.flush()?;
    file.sync_all()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facts::parse_facts;
    use crate::obligations::gen_crate_obligations;
    use crate::par::Parallelism;
    use crate::upg::build_upg;

    fn setup() -> (String, ObligationSet, String) {
        let model = parse_facts("crate c { fn unsafe f() sc [a]; fn g() calls f; }").unwrap();
        let set = gen_crate_obligations(&model, &build_upg(&model), Parallelism::Sequential).unwrap();
        let id = set.obligations[0].id.clone();
        (model_fingerprint(&model), set, id)
    }

    #[test]
    fn discharge_then_reopen() {
        let (fp, set, id) = setup();
        let state = AuditState::new(&fp);
        assert_eq!(effective_statuses(&set, &state), set.statuses());

        let (state, _) = state
            .mark(&fp, &set, &id, JudgmentVerdict::Discharged, "caller checks len before call", "ann", "t0")
            .unwrap();
        assert_eq!(effective_statuses(&set, &state)[&id], Status::ManuallyDischarged);

        let (state, _) = state
            .mark(&fp, &set, &id, JudgmentVerdict::Reopened, "len check removed", "ann", "t1")
            .unwrap();
        assert_eq!(effective_statuses(&set, &state)[&id], Status::Open);
        assert_eq!(state.judgments.len(), 2);
    }

    #[test]
    fn mark_errors() {
        let (fp, set, id) = setup();
        let state = AuditState::new(&fp);
        let err = state
            .mark(&fp, &set, "nope", JudgmentVerdict::Discharged, "x", "a", "t")
            .unwrap_err();
        assert_eq!(err.to_string(), "unknown obligation `nope`");
        assert!(matches!(
            state.mark(&fp, &set, &id, JudgmentVerdict::Discharged, "  ", "a", "t"),
            Err(AuditError::EmptyJustification)
        ));
        assert!(matches!(
            state.mark("other", &set, &id, JudgmentVerdict::Discharged, "x", "a", "t"),
            Err(AuditError::StaleFingerprint { .. })
        ));
    }

    #[test]
    fn stale_judgments_count_as_open_but_stay_in_trail() {
        let (fp, set, id) = setup();
        let (state, _) = AuditState::new(&fp)
            .mark(&fp, &set, &id, JudgmentVerdict::Discharged, "ok", "a", "t")
            .unwrap();
        let moved = AuditState {
            model_fingerprint: "changed".into(),
            judgments: state.judgments.clone(),
        };
        assert_eq!(effective_statuses(&set, &moved)[&id], Status::Open);
        assert_eq!(moved.stale_ids(), vec![id]);
        assert_eq!(moved.judgments.len(), 1);
    }

    #[test]
    fn trail_file_round_trip() {
        let (fp, set, id) = setup();
        let dir = std::env::temp_dir().join(format!("upg-audit-test-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("audit.jsonl");
        let _ = fs::remove_file(&path);
        let (_, j) = AuditState::new(&fp)
            .mark(&fp, &set, &id, JudgmentVerdict::Discharged, "ok", "a", "2026-01-01T00:00:00Z")
            .unwrap();
        append_judgment(&path, &j).unwrap();
        let mut bogus = j.clone();
        bogus.id = "ffffffffffffffff".into();
        append_judgment(&path, &bogus).unwrap();

        let (state, diags) = AuditState::load(&path, &fp, &set).unwrap();
        assert_eq!(state.judgments, vec![j]);
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("unknown obligation"));
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.ends_with('\n'));
        let _ = fs::remove_dir_all(&dir);
    }
}

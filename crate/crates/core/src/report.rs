//! Plain-text renderings for terminals.

use std::fmt::Write as _;

use crate::diag::Diagnostic;
use crate::obligations::{Obligation, ObligationKind, ObligationSet, Status, Statuses, VerdictTree};

fn status_rank(s: Status) -> u8 {
    match s {
        Status::Open => 0,
        Status::ManuallyDischarged => 1,
        Status::AutoDischarged => 2,
    }
}

fn effective(o: &Obligation, statuses: &Statuses) -> Status {
    statuses.get(&o.id).copied().unwrap_or(o.status)
}

/// Open obligations first, then manual, then automatic; by subject within.
pub fn ordered<'a>(set: &'a ObligationSet, statuses: &Statuses) -> Vec<(&'a Obligation, Status)> {
    let mut rows: Vec<_> = set.obligations.iter().map(|o| (o, effective(o, statuses))).collect();
    rows.sort_by(|(a, sa), (b, sb)| {
        (status_rank(*sa), &a.subject, a.kind).cmp(&(status_rank(*sb), &b.subject, b.kind))
    });
    rows
}

fn describe(o: &Obligation) -> String {
    match o.kind {
        ObligationKind::DeclareSc => format!("{} declares no safety constraints", o.subject[0]),
        ObligationKind::CallDischarge => format!("{} -> {}", o.subject[0], o.subject[1]),
        ObligationKind::PairDischarge => {
            format!("({}, {}) -> {}", o.subject[0], o.subject[1], o.subject[2])
        }
    }
}

pub fn obligations_table(set: &ObligationSet, statuses: &Statuses) -> String {
    let mut out = String::new();
    for (o, status) in ordered(set, statuses) {
        let _ = write!(
            out,
            "{:<19} {} {:<14} {}",
            status.as_str(),
            o.id,
            o.kind.as_str(),
            describe(o)
        );
        if status == Status::Open && o.kind != ObligationKind::DeclareSc {
            let _ = write!(out, "  missing {}", o.missing);
        }
        out.push('\n');
    }
    out
}

pub fn check_report(tree: &VerdictTree, set: &ObligationSet, statuses: &Statuses, diags: &[Diagnostic]) -> String {
    let mut out = String::new();
    let label = |verdict: &str, n: usize| {
        if verdict == "open" {
            format!("open ({n})")
        } else {
            verdict.to_owned()
        }
    };
    let _ = writeln!(out, "crate: {}", label(&tree.crate_verdict, tree.unresolved));
    let _ = writeln!(out, "mode: {}", tree.mode.as_str());
    for m in &tree.modules {
        let _ = writeln!(out, "module {}: {}", m.path, label(&m.verdict, m.unresolved));
    }
    for s in &tree.structs {
        let _ = writeln!(out, "struct {}: {}", s.path, label(&s.verdict, s.unresolved));
    }
    for f in &tree.functions {
        let _ = writeln!(out, "fn {}: {}", f.path, label(&f.verdict, f.unresolved));
    }
    if !set.obligations.is_empty() {
        out.push_str("\nobligations:\n");
        for line in obligations_table(set, statuses).lines() {
            let _ = writeln!(out, "  {line}");
        }
    }
    if !diags.is_empty() {
        out.push_str("\ndiagnostics:\n");
        for d in diags {
            let _ = writeln!(out, "  {d}");
        }
    }
    out
}

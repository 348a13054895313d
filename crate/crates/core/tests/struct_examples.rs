mod common;

use std::collections::BTreeSet;

use common::{fixture, reference, set};
use upg_core::audit::{effective_statuses, model_fingerprint, AuditState, JudgmentVerdict};
use upg_core::constraints::{bs_of_struct, facts_for_pair, Source};
use upg_core::obligations::{Mode, ObligationKind, Status};
use upg_core::semantics::oracle_check_struct;
use upg_core::upg::{build_upg, export_dot, segment, SubgraphKind};
use upg_core::{parse_facts, Analysis, CrateModel, Parallelism};

fn strings(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn group_of<'a>(upg: &'a upg_core::upg::Upg, path: &str) -> &'a upg_core::upg::StructGroup {
    upg.struct_group(path).unwrap_or_else(|| panic!("no group for {path}"))
}

#[test]
fn buf_struct_group() {
    let model = fixture("buf");
    let upg = build_upg(&model);
    let g = group_of(&upg, "c::Buf");
    assert_eq!(g.constructors, strings(&["c::Buf::new"]));
    assert_eq!(g.dynamic_methods, strings(&["c::Buf::get", "c::Buf::set_len"]));
    assert_eq!(g.disruptive, strings(&["c::Buf::set_len"]));
    assert_eq!(g.destructor, None);
}

#[test]
fn buf_struct_audit_subgraph() {
    let upg = build_upg(&fixture("buf"));
    let subs = segment(&upg);
    let audit = subs
        .iter()
        .find(|s| s.kind == SubgraphKind::StructAudit && s.focus == "c::Buf::get")
        .expect("struct_audit for get");
    for member in ["c::Buf::new", "c::Buf::get", "c::Buf::set_len"] {
        assert!(audit.nodes.contains(member), "{member} missing from {:?}", audit.nodes);
    }
    assert_eq!(audit.struct_path.as_deref(), Some("c::Buf"));
}

#[test]
fn buf_dot_matches_golden() {
    let dot = export_dot(&build_upg(&fixture("buf")));
    assert!(dot.contains("subgraph cluster_c__Buf"));
    let golden = common::fixtures_dir().join("golden/buf.dot");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&golden, &dot).unwrap();
    }
    assert_eq!(dot, std::fs::read_to_string(&golden).expect("golden/buf.dot"));
}

#[test]
fn bs_of_struct_cases() {
    let none = parse_facts(
        "crate c { extern fn unsafe u sc [a]; struct S { } fn new() constructor of S; fn m(&self) method of S calls u; }",
    )
    .unwrap();
    assert_eq!(bs_of_struct(group_of(&build_upg(&none), "c::S"), &none), set(&[]));

    let buf = fixture("buf");
    assert_eq!(bs_of_struct(group_of(&build_upg(&buf), "c::Buf"), &buf), set(&["len_ok"]));

    let two = parse_facts(
        "crate c {
            extern fn unsafe u sc [a];
            struct S { }
            fn new() constructor of S;
            fn m(&self) method of S calls u;
            fn x(&mut self) method of S breaks [a];
            fn y(&mut self) method of S breaks [b];
        }",
    )
    .unwrap();
    assert_eq!(bs_of_struct(group_of(&build_upg(&two), "c::S"), &two), set(&["a", "b"]));
}

fn pair_facts(model: &CrateModel, s: &str, c: &str, m: &str) -> upg_core::constraints::AvailableFacts {
    let upg = build_upg(model);
    facts_for_pair(
        model.function(c).unwrap(),
        model.function(m).unwrap(),
        group_of(&upg, s),
        model,
    )
}

#[test]
fn facts_for_pair_cases() {
    let clean = fixture("buf_no_set_len");
    let f = pair_facts(&clean, "c::Buf", "c::Buf::new", "c::Buf::get");
    assert_eq!(f.atoms, set(&["len_ok"]));
    assert_eq!(f.provenance[&"len_ok".into()], Source::ConstructorEstablishes);

    let broken = fixture("buf");
    let f = pair_facts(&broken, "c::Buf", "c::Buf::new", "c::Buf::get");
    assert!(!f.atoms.contains(&"len_ok".into()));
    assert_eq!(f.removed, set(&["len_ok"]));

    let unsafe_ctor = parse_facts(
        "crate c {
            extern fn unsafe u sc [ptr_valid];
            struct S { }
            fn unsafe new() constructor of S sc [ptr_valid];
            fn m(&self) method of S calls u;
        }",
    )
    .unwrap();
    let f = pair_facts(&unsafe_ctor, "c::S", "c::S::new", "c::S::m");
    assert_eq!(f.atoms, set(&["ptr_valid"]));
    assert_eq!(f.provenance[&"ptr_valid".into()], Source::ConstructorSc);
}

fn analysis(model: CrateModel) -> Analysis {
    Analysis::new(model, Parallelism::Sequential).unwrap()
}

#[test]
fn buf_pair_obligation_open_then_discharged_without_set_len() {
    let a = analysis(fixture("buf"));
    let pairs: Vec<_> = a
        .obligations
        .obligations
        .iter()
        .filter(|o| o.kind == ObligationKind::PairDischarge)
        .collect();
    assert_eq!(pairs.len(), 1);
    assert_eq!(pairs[0].subject, ["c::Buf::new", "c::Buf::get", "get_unchecked"]);
    assert_eq!(pairs[0].status, Status::Open);
    assert_eq!(pairs[0].missing, set(&["len_ok"]));

    // Without the disruptive method the available facts are exactly what
    // `new` establishes, which covers what `get_unchecked` requires.
    let a = analysis(fixture("buf_no_set_len"));
    let o = &a.obligations.obligations[0];
    assert_eq!(o.kind, ObligationKind::PairDischarge);
    assert_eq!(o.available.atoms, set(&["len_ok"]));
    assert!(o.required.is_subset(&o.available.atoms));
    assert_eq!(o.status, Status::AutoDischarged);
}

#[test]
fn public_struct_with_open_pair_is_open_in_both_modes() {
    let a = analysis(fixture("buf"));
    let statuses = a.obligations.statuses();
    for mode in [Mode::Strong, Mode::Weak] {
        let tree = a.verdicts(&statuses, mode);
        assert_eq!(tree.crate_verdict, "open");
        let s = tree.structs.iter().find(|s| s.path == "c::Buf").unwrap();
        assert_eq!(s.verdict, "open");
    }
}

#[test]
fn open_module_is_pinpointed() {
    let model = parse_facts(
        "crate c {
            module good { fn unsafe f() sc [a]; fn pub g() establishes [a] calls f; }
            module bad { fn unsafe f() sc [a]; fn pub g() calls f; }
        }",
    )
    .unwrap();
    let a = analysis(model);
    let tree = a.verdicts(&a.obligations.statuses(), Mode::Strong);
    assert_eq!(tree.crate_verdict, "open");
    let verdict = |p: &str| tree.modules.iter().find(|m| m.path == p).unwrap().verdict.clone();
    assert_eq!(verdict("c::bad"), "open");
    assert_eq!(verdict("c::good"), "sound");
}

#[test]
fn all_manually_discharged_is_sound() {
    let model = fixture("drop_breaks");
    let fp = model_fingerprint(&model);
    let a = analysis(model);
    let mut state = AuditState::new(&fp);
    for o in &a.obligations.obligations {
        state = state
            .mark(&fp, &a.obligations, &o.id, JudgmentVerdict::Discharged, "drop runs last", "t", "ts")
            .unwrap()
            .0;
    }
    let statuses = effective_statuses(&a.obligations, &state);
    assert!(statuses.values().all(|s| *s == Status::ManuallyDischarged));
    assert!(a.verdicts(&statuses, Mode::Strong).is_sound());
}

#[test]
fn oracle_buf_without_set_len_k3() {
    let model = fixture("buf_no_set_len");
    let upg = build_upg(&model);
    let found = oracle_check_struct(group_of(&upg, "c::Buf"), 3, 1_000_000, &model, Parallelism::Sequential);
    assert_eq!(found, Ok(None));
    assert!(reference::ub_traces(&model, "c::Buf", 3).is_empty());
}

#[test]
fn oracle_buf_with_set_len_k2() {
    let model = fixture("buf");
    let upg = build_upg(&model);
    let ub = oracle_check_struct(group_of(&upg, "c::Buf"), 2, 1_000_000, &model, Parallelism::Sequential)
        .unwrap()
        .expect("witness");
    assert_eq!(ub.trace.steps, ["c::Buf::new", "c::Buf::set_len", "c::Buf::get"]);
    assert_eq!(ub.failing_step, "c::Buf::get");
    assert_eq!(ub.failing_callee, "get_unchecked");
    assert_eq!(ub.missing, set(&["len_ok"]));

    // The reference enumeration agrees this is the only failing trace at k=2,
    // and is also the first in lexicographic order.
    let mut expected = reference::ub_traces(&model, "c::Buf", 2);
    expected.sort();
    assert_eq!(expected, vec![ub.trace.steps.clone()]);
}

#[test]
fn parallel_and_sequential_oracles_agree_on_fixtures() {
    for name in common::fixture_names() {
        let model = fixture(&name);
        let upg = build_upg(&model);
        let seq = upg_core::semantics::oracle_check_crate(&model, &upg, 4, 1_000_000, Parallelism::Sequential);
        let par = upg_core::semantics::oracle_check_crate(&model, &upg, 4, 1_000_000, Parallelism::Parallel);
        assert_eq!(seq, par, "{name}");
    }
}

use std::path::{Path, PathBuf};
use std::process::Command;

use upg_cli::run_captured;

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(format!("{name}.facts"))
        .display()
        .to_string()
}

fn run(args: &[&str]) -> (u8, String, String) {
    let mut argv = vec!["upg-audit"];
    argv.extend_from_slice(args);
    run_captured(argv)
}

fn open_id(facts: &str) -> String {
    let (_, out, _) = run(&["obligations", facts, "--format", "json"]);
    let list: serde_json::Value = serde_json::from_str(&out).unwrap();
    list.as_array()
        .unwrap()
        .iter()
        .find(|o| o["status"] == "open")
        .expect("an open obligation")["id"]
        .as_str()
        .unwrap()
        .to_owned()
}

#[test]
fn check_empty_crate() {
    let (code, out, _) = run(&["check", &fixture("empty")]);
    assert_eq!(code, 0);
    assert!(out.starts_with("crate: sound\n"), "{out}");
}

#[test]
fn check_two_function_open() {
    let (code, out, _) = run(&["check", &fixture("two_fn")]);
    assert_eq!(code, 1);
    assert!(out.starts_with("crate: open (1)\n"));
    assert!(out.contains("missing [a]"), "{out}");
}

#[test]
fn check_malformed_input() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.facts");
    std::fs::write(&bad, "crate c { fn f( }").unwrap();
    let (code, out, err) = run(&["check", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(out.is_empty());
    assert!(err.contains("bad.facts: error 1:17"), "{err}");

    let (code, _, err) = run(&["check", "/nonexistent/model.facts"]);
    assert_eq!(code, 2);
    assert!(err.contains("/nonexistent/model.facts"));
}

#[test]
fn check_modes() {
    let f = fixture("visibility_divergence");
    assert_eq!(run(&["check", &f]).0, 1);
    let (code, out, _) = run(&["check", &f, "--mode", "weak"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("crate: sound\nmode: weak\n"));
}

#[test]
fn check_json_report() {
    let (code, out, _) = run(&["check", &fixture("buf"), "--format", "json"]);
    assert_eq!(code, 1);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["verdict"]["crate"], "open");
    assert_eq!(v["obligations"][0]["missing"], serde_json::json!(["len_ok"]));
}

#[test]
fn text_report_orders_open_first() {
    let (_, out, _) = run(&["check", &fixture("ctor_missing_invariant")]);
    let open = out.find("  open ").unwrap();
    let auto = out.find("  auto_discharged ").unwrap();
    assert!(open < auto);
}

#[test]
fn json_input_matches_facts_input() {
    let text = std::fs::read_to_string(fixture("buf")).unwrap();
    let model = upg_core::parse_facts(&text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("buf.json");
    std::fs::write(&json, upg_core::json::to_json_pretty(&model)).unwrap();
    let a = run(&["check", &fixture("buf")]);
    let b = run(&["check", json.to_str().unwrap()]);
    assert_eq!(a, b);

    let renamed = dir.path().join("model.txt");
    std::fs::copy(&json, &renamed).unwrap();
    assert_eq!(run(&["check", renamed.to_str().unwrap()]).0, 2);
    let c = run(&["check", renamed.to_str().unwrap(), "--input-format", "json"]);
    assert_eq!(a, c);
}

#[test]
fn oracle_exit_codes() {
    let (code, out, _) = run(&["oracle", &fixture("two_fn_discharged")]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["ub_witnesses"], serde_json::json!([]));

    let (code, out, _) = run(&["oracle", &fixture("buf"), "--k", "2"]);
    assert_eq!(code, 1);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(
        v["ub_witnesses"][0]["trace"]["steps"],
        serde_json::json!(["c::Buf::new", "c::Buf::set_len", "c::Buf::get"])
    );

    let (code, _, err) = run(&["oracle", &fixture("buf"), "--cap", "1"]);
    assert_eq!(code, 3);
    assert!(err.contains("c::Buf"), "{err}");

    assert_eq!(run(&["oracle", &fixture("buf"), "--k", "0"]).0, 2);
    assert_eq!(run(&["oracle", &fixture("buf"), "--cap", "0"]).0, 2);
}

#[test]
fn export_dot() {
    let (code, out, _) = run(&["export-dot", &fixture("empty")]);
    assert_eq!((code, out.as_str()), (0, "digraph upg {\n}\n"));
    let (_, out, _) = run(&["export-dot", &fixture("two_fn")]);
    assert!(out.contains("\"c::g\" -> \"c::f\""));
    let (_, out, _) = run(&["export-dot", &fixture("buf"), "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["struct_groups"][0]["struct"], "c::Buf");
    assert_eq!(run(&["export-dot", &fixture("buf"), "--format", "text"]).0, 2);
}

fn audit_arg(path: &Path) -> String {
    path.display().to_string()
}

#[test]
fn mark_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let audit = audit_arg(&dir.path().join("audit.jsonl"));
    let f = fixture("two_fn");
    let id = open_id(&f);

    let (code, out, err) = run(&[
        "mark", &f, "--id", &id, "--verdict", "discharged",
        "--justification", "callers uphold a", "--author", "ann", "--audit", &audit,
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains(&id));
    let (code, out, _) = run(&["check", &f, "--audit", &audit]);
    assert_eq!(code, 0);
    assert!(out.contains("manually_discharged"));

    let (code, _, _) = run(&[
        "mark", &f, "--id", &id, "--verdict", "reopened",
        "--justification", "not true after refactor", "--author", "ann", "--audit", &audit,
    ]);
    assert_eq!(code, 0);
    assert_eq!(run(&["check", &f, "--audit", &audit]).0, 1);

    let (code, _, err) = run(&[
        "mark", &f, "--id", "0000000000000000", "--verdict", "discharged",
        "--justification", "x", "--audit", &audit,
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("unknown obligation"));
    let (code, _, err) = run(&[
        "mark", &f, "--id", &id, "--verdict", "discharged", "--justification", " ", "--audit", &audit,
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("justification"));

    let trail = std::fs::read_to_string(&audit).unwrap();
    assert_eq!(trail.lines().count(), 2);
}

#[test]
fn model_change_makes_judgments_stale() {
    let dir = tempfile::tempdir().unwrap();
    let audit = audit_arg(&dir.path().join("audit.jsonl"));
    let f = fixture("two_fn");
    let id = open_id(&f);
    run(&[
        "mark", &f, "--id", &id, "--verdict", "discharged",
        "--justification", "ok", "--author", "ann", "--audit", &audit,
    ]);

    let changed = dir.path().join("two_fn.facts");
    let text = std::fs::read_to_string(&f).unwrap().replace("fn g() calls f;", "fn g() calls f;\n  fn h();");
    std::fs::write(&changed, text).unwrap();
    assert_eq!(open_id(changed.to_str().unwrap()), id);
    let (code, _, err) = run(&["check", changed.to_str().unwrap(), "--audit", &audit]);
    assert_eq!(code, 1);
    assert!(err.contains("stale"), "{err}");
    assert_eq!(std::fs::read_to_string(&audit).unwrap().lines().count(), 1);
}

#[test]
fn mark_without_audit_file() {
    let (code, _, err) = run_captured([
        "upg-audit", "mark", &fixture("two_fn"), "--id", "x", "--verdict", "discharged", "--justification", "y",
    ]);
    if std::env::var_os("UPG_AUDIT_FILE").is_none() {
        assert_eq!(code, 2);
        assert!(err.contains("--audit"));
    }
}

#[test]
fn usage_errors() {
    assert_eq!(run(&["frobnicate"]).0, 2);
    assert_eq!(run(&["check"]).0, 2);
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, 0);
    for sub in ["check", "oracle", "obligations", "mark", "export-dot", "serve"] {
        assert!(out.contains(sub), "{sub}");
    }
}

#[test]
fn binary_exit_codes_and_env_audit() {
    let bin = env!("CARGO_BIN_EXE_upg-audit");
    let status = |args: &[&str]| Command::new(bin).args(args).output().unwrap();
    assert_eq!(status(&["check", &fixture("empty")]).status.code(), Some(0));
    assert_eq!(status(&["check", &fixture("two_fn")]).status.code(), Some(1));
    assert_eq!(status(&["oracle", &fixture("buf"), "--cap", "1"]).status.code(), Some(3));

    let dir = tempfile::tempdir().unwrap();
    let audit = dir.path().join("env.jsonl");
    let f = fixture("two_fn");
    let out = Command::new(bin)
        .args(["mark", &f, "--id", &open_id(&f), "--verdict", "discharged", "--justification", "ok"])
        .env("UPG_AUDIT_FILE", &audit)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = Command::new(bin).args(["check", &f]).env("UPG_AUDIT_FILE", &audit).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn serve_binary_end_to_end() {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpStream;
    use std::process::Stdio;

    let bin = env!("CARGO_BIN_EXE_upg-audit");
    let dir = tempfile::tempdir().unwrap();
    let audit = dir.path().join("serve.jsonl");
    let mut child = Command::new(bin)
        .args(["serve", &fixture("empty"), "--addr", "127.0.0.1:0", "--audit"])
        .arg(&audit)
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stderr = BufReader::new(child.stderr.take().unwrap());
    let mut line = String::new();
    stderr.read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on http://").expect(&line).to_owned();

    let mut stream = TcpStream::connect(&addr).unwrap();
    write!(stream, "GET /api/verdict HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains("\"crate\":\"sound\""), "{response}");

    let taken = Command::new(bin)
        .args(["serve", &fixture("empty"), "--addr", &addr, "--audit"])
        .arg(&audit)
        .output()
        .unwrap();
    assert_eq!(taken.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&taken.stderr).contains("cannot listen"));

    child.kill().unwrap();
    child.wait().unwrap();
}

#![allow(dead_code)]

pub mod gen;
pub mod reference;

use std::path::PathBuf;

use upg_core::{parse_facts, CrateModel, FactSet};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture(name: &str) -> CrateModel {
    let path = fixtures_dir().join(format!("{name}.facts"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_facts(&text).unwrap_or_else(|d| panic!("{name}: {d:?}"))
}

/// Names of every `.facts` fixture, sorted.
pub fn fixture_names() -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(fixtures_dir())
        .expect("fixtures directory")
        .filter_map(|e| {
            let p = e.ok()?.path();
            (p.extension()? == "facts").then(|| p.file_stem()?.to_str().map(str::to_owned))?
        })
        .collect();
    names.sort();
    names
}

pub fn set(atoms: &[&str]) -> FactSet {
    atoms.iter().copied().collect()
}

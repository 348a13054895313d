//! JSON form of a [`CrateModel`].
//!
//! Documents are checked against the schema by hand before deserialization so
//! that every defect is reported at a JSON pointer. Serialization goes through
//! `serde_json::Value`, whose map type is ordered, giving sorted keys.

use serde::Deserialize;
use serde_json::{Map, Value};

use crate::diag::{has_errors, Diagnostic, Location};
use crate::model::{Atom, CrateModel, ModuleDecl};
use crate::validate::validate;

/// Compact canonical JSON: sorted keys, sorted atom arrays, no whitespace.
pub fn to_canonical_json(model: &CrateModel) -> String {
    let value = serde_json::to_value(model).expect("model serializes");
    serde_json::to_string(&value).expect("value serializes")
}

/// Canonical JSON, indented, with a trailing newline.
pub fn to_json_pretty(model: &CrateModel) -> String {
    let value = serde_json::to_value(model).expect("model serializes");
    let mut out = serde_json::to_string_pretty(&value).expect("value serializes");
    out.push('\n');
    out
}

#[derive(Deserialize)]
struct RawCrate {
    name: String,
    root: ModuleDecl,
}

/// Loads a model document, applying the same semantic checks as the facts parser.
pub fn load_json(bytes: &[u8]) -> Result<CrateModel, Vec<Diagnostic>> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| {
        vec![Diagnostic::error(
            Location::Pointer(String::new()),
            format!("invalid JSON at line {} column {}: {e}", e.line(), e.column()),
        )]
    })?;
    let mut diags = Vec::new();
    check_crate(&value, &mut diags);
    if !diags.is_empty() {
        return Err(diags);
    }
    let raw: RawCrate = serde_json::from_value(value).map_err(|e| {
        vec![Diagnostic::error(Location::Pointer(String::new()), e.to_string())]
    })?;
    let model = CrateModel::new(raw.name, raw.root)?;
    let diags = validate(&model);
    if has_errors(&diags) {
        return Err(diags.into_iter().filter(Diagnostic::is_error).collect());
    }
    Ok(model)
}

fn escape(token: &str) -> String {
    token.replace('~', "~0").replace('/', "~1")
}

fn err(ptr: &str, message: impl Into<String>, diags: &mut Vec<Diagnostic>) {
    diags.push(Diagnostic::error(Location::Pointer(ptr.to_owned()), message));
}

enum Shape {
    Str,
    Bool,
    Atoms,
    OptStr,
    Enum(&'static [&'static str]),
    Role,
    Object(fn(&Value, &str, &mut Vec<Diagnostic>)),
    Array(fn(&Value, &str, &mut Vec<Diagnostic>)),
    Hints,
}

fn check_object(
    value: &Value,
    ptr: &str,
    required: &[(&str, Shape)],
    optional: &[(&str, Shape)],
    diags: &mut Vec<Diagnostic>,
) {
    let Some(obj) = value.as_object() else {
        err(ptr, "expected an object", diags);
        return;
    };
    for (key, shape) in required {
        let child = format!("{ptr}/{}", escape(key));
        match obj.get(*key) {
            None => err(&child, format!("missing required key `{key}`"), diags),
            Some(v) => check_shape(v, &child, shape, diags),
        }
    }
    for (key, shape) in optional {
        if let Some(v) = obj.get(*key) {
            check_shape(v, &format!("{ptr}/{}", escape(key)), shape, diags);
        }
    }
    for key in obj.keys() {
        let known = required.iter().chain(optional).any(|(k, _)| k == key);
        if !known {
            err(&format!("{ptr}/{}", escape(key)), format!("unknown key `{key}`"), diags);
        }
    }
}

fn check_shape(v: &Value, ptr: &str, shape: &Shape, diags: &mut Vec<Diagnostic>) {
    match shape {
        Shape::Str if !v.is_string() => err(ptr, "expected a string", diags),
        Shape::Bool if !v.is_boolean() => err(ptr, "expected a boolean", diags),
        Shape::OptStr if !(v.is_string() || v.is_null()) => {
            err(ptr, "expected a string or null", diags)
        }
        Shape::Enum(allowed) => match v.as_str() {
            Some(s) if allowed.contains(&s) => {}
            _ => err(ptr, format!("expected one of {}", allowed.join(", ")), diags),
        },
        Shape::Atoms => match v.as_array() {
            None => err(ptr, "expected an array of atoms", diags),
            Some(items) => {
                let mut prev: Option<&str> = None;
                for (i, item) in items.iter().enumerate() {
                    let p = format!("{ptr}/{i}");
                    match item.as_str() {
                        Some(s) if Atom::is_valid_name(s) => {
                            if prev.is_some_and(|p| p >= s) {
                                err(&p, "atom arrays must be sorted and duplicate-free", diags);
                            }
                            prev = Some(s);
                        }
                        _ => err(&p, "expected an atom name", diags),
                    }
                }
            }
        },
        Shape::Role => match v {
            Value::String(s) if s == "plain" => {}
            Value::Object(m) if m.len() == 1 => {
                let (k, inner) = m.iter().next().expect("one entry");
                if k != "constructor_of" && k != "destructor_of" {
                    err(ptr, "expected `plain`, `constructor_of` or `destructor_of`", diags);
                } else if !inner.is_string() {
                    err(&format!("{ptr}/{k}"), "expected a struct path", diags);
                }
            }
            _ => err(ptr, "expected `plain`, `constructor_of` or `destructor_of`", diags),
        },
        Shape::Object(check) => check(v, ptr, diags),
        Shape::Array(item) => match v.as_array() {
            None => err(ptr, "expected an array", diags),
            Some(items) => {
                for (i, x) in items.iter().enumerate() {
                    item(x, &format!("{ptr}/{i}"), diags);
                }
            }
        },
        Shape::Hints => match v.as_object() {
            None => err(ptr, "expected an object", diags),
            Some(m) => check_hints(m, ptr, diags),
        },
        _ => {}
    }
}

fn check_hints(m: &Map<String, Value>, ptr: &str, diags: &mut Vec<Diagnostic>) {
    for (k, v) in m {
        let p = format!("{ptr}/{}", escape(k));
        if !Atom::is_valid_name(k) {
            err(&p, "hint key must be an atom name", diags);
        }
        if !v.is_string() {
            err(&p, "expected a justification string", diags);
        }
    }
}

const VISIBILITY: &[&str] = &["public", "private"];
const UNSAFETY: &[&str] = &["safe", "unsafe"];
const RECEIVER: &[&str] = &["none", "ref_self", "mut_self"];

fn check_crate(v: &Value, diags: &mut Vec<Diagnostic>) {
    check_object(
        v,
        "",
        &[("name", Shape::Str), ("root", Shape::Object(check_module))],
        &[],
        diags,
    );
}

fn check_module(v: &Value, ptr: &str, diags: &mut Vec<Diagnostic>) {
    check_object(
        v,
        ptr,
        &[
            ("path", Shape::Str),
            ("functions", Shape::Array(check_function)),
            ("structs", Shape::Array(check_struct)),
            ("submodules", Shape::Array(check_module)),
        ],
        &[("externs", Shape::Array(check_extern))],
        diags,
    );
}

fn check_function(v: &Value, ptr: &str, diags: &mut Vec<Diagnostic>) {
    check_object(
        v,
        ptr,
        &[
            ("path", Shape::Str),
            ("visibility", Shape::Enum(VISIBILITY)),
            ("unsafety", Shape::Enum(UNSAFETY)),
            ("receiver", Shape::Enum(RECEIVER)),
            ("role", Shape::Role),
            ("sc", Shape::Atoms),
            ("establishes", Shape::Atoms),
            ("breaks", Shape::Atoms),
            ("calls", Shape::Array(check_call)),
        ],
        &[("owner", Shape::OptStr)],
        diags,
    );
}

fn check_call(v: &Value, ptr: &str, diags: &mut Vec<Diagnostic>) {
    check_object(
        v,
        ptr,
        &[("callee", Shape::Str)],
        &[("discharge_hints", Shape::Hints)],
        diags,
    );
}

fn check_field(v: &Value, ptr: &str, diags: &mut Vec<Diagnostic>) {
    check_object(v, ptr, &[("name", Shape::Str), ("ty", Shape::Str)], &[], diags);
}

fn check_struct(v: &Value, ptr: &str, diags: &mut Vec<Diagnostic>) {
    check_object(
        v,
        ptr,
        &[
            ("path", Shape::Str),
            ("visibility", Shape::Enum(VISIBILITY)),
            ("fields", Shape::Array(check_field)),
            ("invariants", Shape::Atoms),
        ],
        &[("literal_constructor", Shape::Bool), ("field_access", Shape::Bool)],
        diags,
    );
}

fn check_extern(v: &Value, ptr: &str, diags: &mut Vec<Diagnostic>) {
    check_object(
        v,
        ptr,
        &[
            ("path", Shape::Str),
            ("unsafety", Shape::Enum(UNSAFETY)),
            ("sc", Shape::Atoms),
        ],
        &[],
        diags,
    );
}

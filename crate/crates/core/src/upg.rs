//! Unsafety propagation graph.
//!
//! Nodes are the functions through which unsafe code propagates: every
//! crate-local unsafe function, every function that reaches an unsafe callee
//! directly or through crate-local calls, the external unsafe functions that
//! are actually called, and every member of a struct group. Edges are the call
//! edges whose callee is unsafe or itself reaches an unsafe callee. A struct
//! group is formed for each struct with at least one constructor, dynamic
//! method or destructor that calls unsafe code directly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::bs_of_method;
use crate::model::{Callee, CrateModel, FnKind, FunctionDecl, Unsafety};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum UpgError {
    #[error("unresolved function `{0}`")]
    UnresolvedFunction(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UpgNode {
    pub function: String,
    pub kind: FnKind,
    pub unsafety: Unsafety,
    /// Declared outside the crate.
    #[serde(default)]
    pub external: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UpgEdge {
    pub caller: String,
    pub callee: String,
    pub callee_unsafe: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructGroup {
    #[serde(rename = "struct")]
    pub struct_path: String,
    pub constructors: BTreeSet<String>,
    pub dynamic_methods: BTreeSet<String>,
    pub destructor: Option<String>,
    pub disruptive: BTreeSet<String>,
}

impl StructGroup {
    /// Dynamic methods followed by the destructor, if any.
    pub fn instance_methods(&self) -> Vec<&str> {
        self.dynamic_methods
            .iter()
            .map(String::as_str)
            .chain(self.destructor.as_deref())
            .collect()
    }

    pub fn members(&self) -> BTreeSet<&str> {
        self.constructors
            .iter()
            .map(String::as_str)
            .chain(self.instance_methods())
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Upg {
    pub nodes: Vec<UpgNode>,
    pub edges: Vec<UpgEdge>,
    pub struct_groups: Vec<StructGroup>,
}

impl Upg {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.edges.is_empty() && self.struct_groups.is_empty()
    }

    pub fn node(&self, path: &str) -> Option<&UpgNode> {
        self.nodes
            .binary_search_by(|n| n.function.as_str().cmp(path))
            .ok()
            .map(|i| &self.nodes[i])
    }

    pub fn struct_group(&self, path: &str) -> Option<&StructGroup> {
        self.struct_groups.iter().find(|g| g.struct_path == path)
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("upg serializes");
        s.push('\n');
        s
    }
}

/// Direct unsafe callees of `f` (crate-local or external).
pub fn unsafe_callees(model: &CrateModel, f: &str) -> Result<BTreeSet<String>, UpgError> {
    let decl = model
        .function(f)
        .ok_or_else(|| UpgError::UnresolvedFunction(f.to_owned()))?;
    Ok(unsafe_callees_of(model, decl))
}

pub fn unsafe_callees_of(model: &CrateModel, f: &FunctionDecl) -> BTreeSet<String> {
    f.calls
        .iter()
        .filter_map(|c| model.resolve(&c.callee))
        .filter(Callee::is_unsafe)
        .map(|c| c.path().to_owned())
        .collect()
}

/// Crate-local functions that reach an unsafe callee, directly or through
/// crate-local calls.
fn reaching_functions(model: &CrateModel) -> BTreeSet<String> {
    let mut reach: BTreeSet<String> = model
        .functions()
        .filter(|f| !unsafe_callees_of(model, f).is_empty())
        .map(|f| f.path.clone())
        .collect();
    loop {
        let before = reach.len();
        for f in model.functions() {
            if !reach.contains(&f.path) && f.calls.iter().any(|c| reach.contains(&c.callee)) {
                reach.insert(f.path.clone());
            }
        }
        if reach.len() == before {
            return reach;
        }
    }
}

fn struct_group(model: &CrateModel, struct_path: &str) -> Option<StructGroup> {
    let mut group = StructGroup {
        struct_path: struct_path.to_owned(),
        constructors: BTreeSet::new(),
        dynamic_methods: BTreeSet::new(),
        destructor: None,
        disruptive: BTreeSet::new(),
    };
    let mut calls_unsafe = false;
    for f in model.members_of(struct_path) {
        let kind = f.kind();
        match kind {
            FnKind::Constructor => {
                group.constructors.insert(f.path.clone());
            }
            FnKind::DynamicMethod => {
                group.dynamic_methods.insert(f.path.clone());
            }
            FnKind::Destructor => {
                group.destructor.get_or_insert_with(|| f.path.clone());
            }
            FnKind::StaticFn => continue,
        }
        calls_unsafe |= !unsafe_callees_of(model, f).is_empty();
        if f.runs_on_instance() && !bs_of_method(f).is_empty() {
            group.disruptive.insert(f.path.clone());
        }
    }
    calls_unsafe.then_some(group)
}

pub fn build_upg(model: &CrateModel) -> Upg {
    let reach = reaching_functions(model);
    let struct_groups: Vec<StructGroup> = model
        .structs()
        .filter_map(|s| struct_group(model, &s.path))
        .collect();

    let mut edges = BTreeSet::new();
    for f in model.functions().filter(|f| reach.contains(&f.path)) {
        for call in &f.calls {
            let Some(callee) = model.resolve(&call.callee) else {
                continue;
            };
            if callee.is_unsafe() || reach.contains(callee.path()) {
                edges.insert(UpgEdge {
                    caller: f.path.clone(),
                    callee: callee.path().to_owned(),
                    callee_unsafe: callee.is_unsafe(),
                });
            }
        }
    }

    let mut included: BTreeSet<&str> = model
        .functions()
        .filter(|f| f.is_unsafe() || reach.contains(&f.path))
        .map(|f| f.path.as_str())
        .collect();
    included.extend(edges.iter().map(|e| e.callee.as_str()));
    for g in &struct_groups {
        included.extend(g.members());
    }

    let nodes = included
        .into_iter()
        .filter_map(|p| match model.resolve(p)? {
            Callee::Local(f) => Some(UpgNode {
                function: f.path.clone(),
                kind: f.kind(),
                unsafety: f.unsafety,
                external: false,
            }),
            Callee::Extern(e) => Some(UpgNode {
                function: e.path.clone(),
                kind: FnKind::StaticFn,
                unsafety: e.unsafety,
                external: true,
            }),
        })
        .collect();

    Upg {
        nodes,
        edges: edges.into_iter().collect(),
        struct_groups,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubgraphKind {
    UnsafeNode,
    CallWithUnsafeCallee,
    StructAudit,
}

impl SubgraphKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SubgraphKind::UnsafeNode => "unsafe_node",
            SubgraphKind::CallWithUnsafeCallee => "call_with_unsafe_callee",
            SubgraphKind::StructAudit => "struct_audit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subgraph {
    pub id: String,
    pub kind: SubgraphKind,
    pub focus: String,
    /// Struct being audited, for `struct_audit` subgraphs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub struct_path: Option<String>,
    pub nodes: BTreeSet<String>,
    pub edges: Vec<UpgEdge>,
}

/// Splits the graph into independently auditable pieces.
///
/// * one `unsafe_node` per unsafe node;
/// * one `struct_audit` per dynamic method or destructor with unsafe callees,
///   holding that method, every constructor and every disruptive method of
///   its struct, plus all of the method's outgoing edges;
/// * one `call_with_unsafe_callee` per remaining edge.
pub fn segment(upg: &Upg) -> Vec<Subgraph> {
    let mut out = Vec::new();
    for node in upg.nodes.iter().filter(|n| n.unsafety == Unsafety::Unsafe) {
        out.push(Subgraph {
            id: format!("unsafe_node:{}", node.function),
            kind: SubgraphKind::UnsafeNode,
            focus: node.function.clone(),
            struct_path: None,
            nodes: BTreeSet::from([node.function.clone()]),
            edges: Vec::new(),
        });
    }

    let mut out_edges: BTreeMap<&str, Vec<&UpgEdge>> = BTreeMap::new();
    for e in &upg.edges {
        out_edges.entry(e.caller.as_str()).or_default().push(e);
    }

    let mut covered: BTreeSet<&str> = BTreeSet::new();
    for group in &upg.struct_groups {
        for method in group.instance_methods() {
            let edges = out_edges.get(method).cloned().unwrap_or_default();
            if !edges.iter().any(|e| e.callee_unsafe) {
                continue;
            }
            covered.insert(method);
            let mut nodes: BTreeSet<String> = group
                .constructors
                .iter()
                .chain(&group.disruptive)
                .cloned()
                .collect();
            nodes.insert(method.to_owned());
            nodes.extend(edges.iter().map(|e| e.callee.clone()));
            out.push(Subgraph {
                id: format!("struct_audit:{method}"),
                kind: SubgraphKind::StructAudit,
                focus: method.to_owned(),
                struct_path: Some(group.struct_path.clone()),
                nodes,
                edges: edges.into_iter().cloned().collect(),
            });
        }
    }

    for e in upg.edges.iter().filter(|e| !covered.contains(e.caller.as_str())) {
        out.push(Subgraph {
            id: format!("call_with_unsafe_callee:{}->{}", e.caller, e.callee),
            kind: SubgraphKind::CallWithUnsafeCallee,
            focus: e.caller.clone(),
            struct_path: None,
            nodes: BTreeSet::from([e.caller.clone(), e.callee.clone()]),
            edges: vec![e.clone()],
        });
    }

    out.sort_by(|a, b| (&a.focus, a.kind, &a.id).cmp(&(&b.focus, b.kind, &b.id)));
    out
}

fn cluster_id(struct_path: &str) -> String {
    struct_path
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn node_line(out: &mut String, indent: &str, node: &UpgNode) {
    let mut attrs = Vec::new();
    if node.unsafety == Unsafety::Unsafe {
        attrs.push("shape=box");
    }
    if node.external {
        attrs.push("style=dashed");
    }
    if attrs.is_empty() {
        let _ = writeln!(out, "{indent}\"{}\";", node.function);
    } else {
        let _ = writeln!(out, "{indent}\"{}\" [{}];", node.function, attrs.join(", "));
    }
}

/// Graphviz rendering. Unsafe nodes are boxes, struct groups are clusters.
pub fn export_dot(upg: &Upg) -> String {
    let mut out = String::from("digraph upg {\n");
    let mut clustered = BTreeSet::new();
    for group in &upg.struct_groups {
        let _ = writeln!(out, "  subgraph cluster_{} {{", cluster_id(&group.struct_path));
        let _ = writeln!(out, "    label=\"{}\";", group.struct_path);
        for member in group.members() {
            if let Some(node) = upg.node(member) {
                node_line(&mut out, "    ", node);
                clustered.insert(member);
            }
        }
        out.push_str("  }\n");
    }
    for node in upg.nodes.iter().filter(|n| !clustered.contains(n.function.as_str())) {
        node_line(&mut out, "  ", node);
    }
    for e in &upg.edges {
        let _ = writeln!(out, "  \"{}\" -> \"{}\";", e.caller, e.callee);
    }
    out.push_str("}\n");
    out
}

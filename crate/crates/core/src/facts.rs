//! Parser for the facts language.
//!
//! ```text
//! crate      := "crate" IDENT "{" item* "}"
//! item       := module | structdecl | fndecl | externfn | staticmut
//! module     := "module" IDENT "{" item* "}"
//! structdecl := "struct" "pub"? IDENT "{" structline* "}"
//! structline := "field" IDENT ":" IDENT ";" | "invariants" atomset ";"
//!             | "literal_constructor" ";" | "field_access" ";"
//! fndecl     := "fn" ("unsafe" | "pub")* IDENT recv? roleclause? clause* ";"
//! recv       := "(" ("&self" | "&mut self")? ")"
//! roleclause := ("constructor" | "destructor" | "method") "of" PATH
//! clause     := "sc" atomset | "establishes" atomset | "breaks" atomset
//!             | "calls" PATH ("where" "{" (IDENT ":" STRING ","?)* "}")?
//! externfn   := "extern" "fn" "unsafe"? PATH "sc" atomset ";"
//! staticmut  := "static" "mut" IDENT "sc" atomset ";"
//! atomset    := "[" (IDENT ","?)* "]"
//! PATH       := IDENT ("::" IDENT)*
//! ```
//!
//! Whitespace is insignificant and `#` starts a line comment. Functions owned
//! by a struct get the path `module::Struct::name`. A `static mut` becomes an
//! unsafe external function at `module::NAME` carrying the declared constraints.
//!
//! Call targets resolve against, in order: the caller's struct, the caller's
//! module, the crate root, and finally the path taken verbatim.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::diag::{has_errors, Diagnostic, Location};
use crate::model::{
    Atom, CallSite, CrateModel, ExternDecl, FactSet, FieldDecl, FunctionDecl, ModuleDecl, Receiver,
    Role, StructDecl, Unsafety, Visibility,
};
use crate::validate::validate;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pos {
    line: usize,
    column: usize,
}

impl From<Pos> for Location {
    fn from(p: Pos) -> Self {
        Location::Source {
            line: p.line,
            column: p.column,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Str(String),
    Sym(&'static str),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Str(_) => "string literal".to_owned(),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".to_owned(),
        }
    }
}

type Spanned = (Tok, Pos);

fn lex(text: &str) -> Result<Vec<Spanned>, Diagnostic> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut column) = (1usize, 1usize);
    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                column = 1;
            } else if c.is_some() {
                column += 1;
            }
            c
        }};
    }
    while let Some(&c) = chars.peek() {
        let pos = Pos { line, column };
        match c {
            c if c.is_whitespace() => {
                bump!();
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    bump!();
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut ident = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        ident.push(c);
                        bump!();
                    } else {
                        break;
                    }
                }
                out.push((Tok::Ident(ident), pos));
            }
            '"' => {
                bump!();
                let mut s = String::new();
                loop {
                    match bump!() {
                        Some('"') => break,
                        Some('\\') => match bump!() {
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            Some(c @ ('"' | '\\')) => s.push(c),
                            _ => {
                                return Err(Diagnostic::error(
                                    Location::Source { line, column },
                                    "invalid escape in string literal",
                                ))
                            }
                        },
                        Some(c) => s.push(c),
                        None => {
                            return Err(Diagnostic::error(pos.into(), "unterminated string literal"))
                        }
                    }
                }
                out.push((Tok::Str(s), pos));
            }
            ':' => {
                bump!();
                if chars.peek() == Some(&':') {
                    bump!();
                    out.push((Tok::Sym("::"), pos));
                } else {
                    out.push((Tok::Sym(":"), pos));
                }
            }
            _ => {
                let sym = match c {
                    '{' => "{",
                    '}' => "}",
                    '[' => "[",
                    ']' => "]",
                    '(' => "(",
                    ')' => ")",
                    ';' => ";",
                    ',' => ",",
                    '&' => "&",
                    other => {
                        return Err(Diagnostic::error(
                            pos.into(),
                            format!("unexpected character `{other}`"),
                        ))
                    }
                };
                bump!();
                out.push((Tok::Sym(sym), pos));
            }
        }
    }
    out.push((Tok::Eof, Pos { line, column }));
    Ok(out)
}

#[derive(Debug)]
struct ModAst {
    name: String,
    pos: Pos,
    items: Vec<Item>,
}

#[derive(Debug)]
enum Item {
    Module(ModAst),
    Struct(StructAst),
    Fn(FnAst),
    Extern(ExternAst),
}

#[derive(Debug)]
struct StructAst {
    name: String,
    pos: Pos,
    public: bool,
    fields: Vec<FieldDecl>,
    invariants: FactSet,
    literal_constructor: bool,
    field_access: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RoleKw {
    Constructor,
    Destructor,
    Method,
}

#[derive(Debug)]
struct CallAst {
    path: String,
    pos: Pos,
    hints: BTreeMap<Atom, String>,
}

#[derive(Debug)]
struct FnAst {
    name: String,
    pos: Pos,
    unsafe_: bool,
    public: bool,
    receiver: Receiver,
    role: Option<(RoleKw, String, Pos)>,
    sc: FactSet,
    establishes: FactSet,
    breaks: FactSet,
    calls: Vec<CallAst>,
}

#[derive(Debug)]
struct ExternAst {
    /// Verbatim path for `extern fn`, bare name for `static mut`.
    path: String,
    pos: Pos,
    unsafe_: bool,
    is_static: bool,
    sc: FactSet,
}

struct Parser {
    toks: Vec<Spanned>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn advance(&mut self) -> Spanned {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn unexpected(&self, expected: &str) -> Diagnostic {
        Diagnostic::error(
            self.pos().into(),
            format!("expected {expected}, found {}", self.peek().describe()),
        )
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), Diagnostic> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{kw}`")))
        }
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        if matches!(self.peek(), Tok::Sym(s) if *s == sym) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, sym: &str) -> Result<(), Diagnostic> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{sym}`")))
        }
    }

    fn ident(&mut self) -> Result<(String, Pos), Diagnostic> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let pos = self.pos();
                self.advance();
                Ok((s, pos))
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn path(&mut self) -> Result<(String, Pos), Diagnostic> {
        let (mut path, pos) = self.ident()?;
        while self.eat_sym("::") {
            let (seg, _) = self.ident()?;
            path.push_str("::");
            path.push_str(&seg);
        }
        Ok((path, pos))
    }

    fn atom_set(&mut self) -> Result<FactSet, Diagnostic> {
        self.expect_sym("[")?;
        let mut set = FactSet::new();
        while !self.eat_sym("]") {
            let (name, _) = self.ident()?;
            set.insert(Atom::new(name));
            self.eat_sym(",");
        }
        Ok(set)
    }

    fn crate_decl(&mut self) -> Result<ModAst, Diagnostic> {
        self.expect_kw("crate")?;
        let (name, pos) = self.ident()?;
        let items = self.block()?;
        if *self.peek() != Tok::Eof {
            return Err(self.unexpected("end of input"));
        }
        Ok(ModAst { name, pos, items })
    }

    fn block(&mut self) -> Result<Vec<Item>, Diagnostic> {
        self.expect_sym("{")?;
        let mut items = Vec::new();
        while !self.eat_sym("}") {
            items.push(self.item()?);
        }
        Ok(items)
    }

    fn item(&mut self) -> Result<Item, Diagnostic> {
        if self.eat_kw("module") {
            let (name, pos) = self.ident()?;
            let items = self.block()?;
            Ok(Item::Module(ModAst { name, pos, items }))
        } else if self.eat_kw("struct") {
            self.struct_decl().map(Item::Struct)
        } else if self.eat_kw("fn") {
            self.fn_decl().map(Item::Fn)
        } else if self.eat_kw("extern") {
            self.expect_kw("fn")?;
            let unsafe_ = self.eat_kw("unsafe");
            let (path, pos) = self.path()?;
            self.expect_kw("sc")?;
            let sc = self.atom_set()?;
            self.expect_sym(";")?;
            Ok(Item::Extern(ExternAst {
                path,
                pos,
                unsafe_,
                is_static: false,
                sc,
            }))
        } else if self.eat_kw("static") {
            self.expect_kw("mut")?;
            let (name, pos) = self.ident()?;
            self.expect_kw("sc")?;
            let sc = self.atom_set()?;
            self.expect_sym(";")?;
            Ok(Item::Extern(ExternAst {
                path: name,
                pos,
                unsafe_: true,
                is_static: true,
                sc,
            }))
        } else {
            Err(self.unexpected("`module`, `struct`, `fn`, `extern` or `static`"))
        }
    }

    fn struct_decl(&mut self) -> Result<StructAst, Diagnostic> {
        let public = self.eat_kw("pub");
        let (name, pos) = self.ident()?;
        let mut s = StructAst {
            name,
            pos,
            public,
            fields: Vec::new(),
            invariants: FactSet::new(),
            literal_constructor: false,
            field_access: false,
        };
        self.expect_sym("{")?;
        while !self.eat_sym("}") {
            if self.eat_kw("field") {
                let (name, _) = self.ident()?;
                self.expect_sym(":")?;
                let (ty, _) = self.ident()?;
                s.fields.push(FieldDecl { name, ty });
            } else if self.eat_kw("invariants") {
                let set = self.atom_set()?;
                s.invariants.extend(&set);
            } else if self.eat_kw("literal_constructor") {
                s.literal_constructor = true;
            } else if self.eat_kw("field_access") {
                s.field_access = true;
            } else {
                return Err(self.unexpected(
                    "`field`, `invariants`, `literal_constructor`, `field_access` or `}`",
                ));
            }
            self.expect_sym(";")?;
        }
        Ok(s)
    }

    fn fn_decl(&mut self) -> Result<FnAst, Diagnostic> {
        let (mut unsafe_, mut public) = (false, false);
        loop {
            if self.eat_kw("unsafe") {
                unsafe_ = true;
            } else if self.eat_kw("pub") {
                public = true;
            } else {
                break;
            }
        }
        let (name, pos) = self.ident()?;
        let mut f = FnAst {
            name,
            pos,
            unsafe_,
            public,
            receiver: Receiver::None,
            role: None,
            sc: FactSet::new(),
            establishes: FactSet::new(),
            breaks: FactSet::new(),
            calls: Vec::new(),
        };
        if self.eat_sym("(") {
            if self.eat_sym("&") {
                f.receiver = if self.eat_kw("mut") {
                    Receiver::MutSelf
                } else {
                    Receiver::RefSelf
                };
                self.expect_kw("self")?;
            }
            self.expect_sym(")")?;
        }
        let role_kw = if self.is_kw("constructor") {
            Some(RoleKw::Constructor)
        } else if self.is_kw("destructor") {
            Some(RoleKw::Destructor)
        } else if self.is_kw("method") {
            Some(RoleKw::Method)
        } else {
            None
        };
        if let Some(kw) = role_kw {
            self.advance();
            self.expect_kw("of")?;
            let (owner, pos) = self.path()?;
            f.role = Some((kw, owner, pos));
        }
        while !self.eat_sym(";") {
            if self.eat_kw("sc") {
                let set = self.atom_set()?;
                f.sc.extend(&set);
            } else if self.eat_kw("establishes") {
                let set = self.atom_set()?;
                f.establishes.extend(&set);
            } else if self.eat_kw("breaks") {
                let set = self.atom_set()?;
                f.breaks.extend(&set);
            } else if self.eat_kw("calls") {
                let (path, pos) = self.path()?;
                let mut hints = BTreeMap::new();
                if self.eat_kw("where") {
                    self.expect_sym("{")?;
                    while !self.eat_sym("}") {
                        let (atom, _) = self.ident()?;
                        self.expect_sym(":")?;
                        let text = match self.advance() {
                            (Tok::Str(s), _) => s,
                            _ => {
                                self.at -= 1;
                                return Err(self.unexpected("string literal"));
                            }
                        };
                        hints.insert(Atom::new(atom), text);
                        self.eat_sym(",");
                    }
                }
                f.calls.push(CallAst { path, pos, hints });
            } else {
                return Err(self.unexpected("`sc`, `establishes`, `breaks`, `calls` or `;`"));
            }
        }
        Ok(f)
    }
}

/// Lowers the syntax tree into a model, resolving struct and callee paths.
struct Lowering<'a> {
    crate_name: &'a str,
    structs: BTreeSet<String>,
    callables: BTreeSet<String>,
    positions: HashMap<String, Pos>,
    diags: Vec<Diagnostic>,
}

fn join(prefix: &str, name: &str) -> String {
    format!("{prefix}::{name}")
}

impl<'a> Lowering<'a> {
    fn candidates(&self, scope: &[&str], path: &str) -> Vec<String> {
        let mut out: Vec<String> = scope.iter().map(|s| join(s, path)).collect();
        out.push(join(self.crate_name, path));
        out.push(path.to_owned());
        out
    }

    fn resolve_struct(&self, module: &str, name: &str) -> Option<String> {
        self.candidates(&[module], name)
            .into_iter()
            .find(|c| self.structs.contains(c))
    }

    fn owner_of(&self, module: &str, f: &FnAst) -> Option<String> {
        f.role
            .as_ref()
            .and_then(|(_, name, _)| self.resolve_struct(module, name))
    }

    fn fn_path(&self, module: &str, f: &FnAst) -> String {
        match self.owner_of(module, f) {
            Some(owner) => join(&owner, &f.name),
            None => join(module, &f.name),
        }
    }

    fn extern_path(module: &str, e: &ExternAst) -> String {
        if e.is_static {
            join(module, &e.path)
        } else {
            e.path.clone()
        }
    }

    fn collect_structs(&mut self, module: &str, m: &ModAst) {
        self.positions.insert(module.to_owned(), m.pos);
        for item in &m.items {
            match item {
                Item::Struct(s) => {
                    let path = join(module, &s.name);
                    self.positions.insert(path.clone(), s.pos);
                    self.structs.insert(path);
                }
                Item::Module(sub) => self.collect_structs(&join(module, &sub.name), sub),
                _ => {}
            }
        }
    }

    fn collect_callables(&mut self, module: &str, m: &ModAst) {
        for item in &m.items {
            match item {
                Item::Fn(f) => {
                    let path = self.fn_path(module, f);
                    self.positions.insert(path.clone(), f.pos);
                    for (i, call) in f.calls.iter().enumerate() {
                        self.positions.insert(format!("{path}#{i}"), call.pos);
                    }
                    self.callables.insert(path);
                }
                Item::Extern(e) => {
                    let path = Self::extern_path(module, e);
                    self.positions.insert(path.clone(), e.pos);
                    self.callables.insert(path);
                }
                Item::Struct(s) => {
                    let decl = StructDecl::new(join(module, &s.name));
                    if s.literal_constructor {
                        self.callables.insert(decl.literal_constructor_path());
                    }
                    if s.field_access {
                        self.callables.insert(decl.field_access_path());
                    }
                }
                Item::Module(sub) => self.collect_callables(&join(module, &sub.name), sub),
            }
        }
    }

    fn lower_module(&mut self, path: String, m: &ModAst) -> ModuleDecl {
        let mut decl = ModuleDecl::new(path.clone());
        for item in &m.items {
            match item {
                Item::Module(sub) => {
                    let sub_path = join(&path, &sub.name);
                    let lowered = self.lower_module(sub_path, sub);
                    decl.submodules.push(lowered);
                }
                Item::Struct(s) => decl.structs.push(StructDecl {
                    path: join(&path, &s.name),
                    visibility: visibility(s.public),
                    fields: s.fields.clone(),
                    invariants: s.invariants.clone(),
                    literal_constructor: s.literal_constructor,
                    field_access: s.field_access,
                }),
                Item::Extern(e) => decl.externs.push(ExternDecl {
                    path: Self::extern_path(&path, e),
                    unsafety: unsafety(e.unsafe_),
                    sc: e.sc.clone(),
                }),
                Item::Fn(f) => {
                    if let Some(lowered) = self.lower_fn(&path, f) {
                        decl.functions.push(lowered);
                    }
                }
            }
        }
        decl
    }

    fn lower_fn(&mut self, module: &str, f: &FnAst) -> Option<FunctionDecl> {
        let owner = self.owner_of(module, f);
        if let (Some((_, name, pos)), None) = (&f.role, &owner) {
            self.diags.push(Diagnostic::error(
                (*pos).into(),
                format!("unknown struct `{name}`"),
            ));
            return None;
        }
        let path = self.fn_path(module, f);
        let role = match (&f.role, &owner) {
            (Some((RoleKw::Constructor, _, _)), Some(o)) => Role::ConstructorOf(o.clone()),
            (Some((RoleKw::Destructor, _, _)), Some(o)) => Role::DestructorOf(o.clone()),
            _ => Role::Plain,
        };
        let mut scope = Vec::new();
        if let Some(o) = &owner {
            scope.push(o.as_str());
        }
        scope.push(module);
        let mut calls = Vec::new();
        for call in &f.calls {
            let resolved = self
                .candidates(&scope, &call.path)
                .into_iter()
                .find(|c| self.callables.contains(c));
            match resolved {
                Some(callee) => calls.push(CallSite {
                    callee,
                    discharge_hints: call.hints.clone(),
                }),
                None => self.diags.push(Diagnostic::error(
                    call.pos.into(),
                    format!("unresolved callee `{}`", call.path),
                )),
            }
        }
        Some(FunctionDecl {
            path,
            owner,
            visibility: visibility(f.public),
            unsafety: unsafety(f.unsafe_),
            receiver: f.receiver,
            role,
            sc: f.sc.clone(),
            establishes: f.establishes.clone(),
            breaks: f.breaks.clone(),
            calls,
        })
    }

    /// Maps entity-anchored diagnostics back onto source positions.
    fn position(&self, d: Diagnostic) -> Diagnostic {
        let located = match &d.location {
            Location::Entity(path) => self
                .positions
                .get(path)
                .or_else(|| {
                    // implicit struct members point at their struct
                    path.rsplit_once("::<").and_then(|(s, _)| self.positions.get(s))
                })
                .map(|p| Location::from(*p)),
            _ => None,
        };
        match located {
            Some(location) => Diagnostic { location, ..d },
            None => d,
        }
    }
}

fn visibility(public: bool) -> Visibility {
    if public {
        Visibility::Public
    } else {
        Visibility::Private
    }
}

fn unsafety(unsafe_: bool) -> Unsafety {
    if unsafe_ {
        Unsafety::Unsafe
    } else {
        Unsafety::Safe
    }
}

/// Parses and validates a facts-language source.
///
/// Fails with positioned diagnostics on syntax errors, duplicate paths,
/// unresolved callees and every other error-severity validation finding.
/// Warnings are not returned here; run [`validate`] on the result for those.
pub fn parse_facts(text: &str) -> Result<CrateModel, Vec<Diagnostic>> {
    let toks = lex(text).map_err(|d| vec![d])?;
    let mut parser = Parser { toks, at: 0 };
    let ast = parser.crate_decl().map_err(|d| vec![d])?;

    let mut lowering = Lowering {
        crate_name: &ast.name,
        structs: BTreeSet::new(),
        callables: BTreeSet::new(),
        positions: HashMap::new(),
        diags: Vec::new(),
    };
    lowering.collect_structs(&ast.name, &ast);
    lowering.collect_callables(&ast.name, &ast);
    let root = lowering.lower_module(ast.name.clone(), &ast);
    if !lowering.diags.is_empty() {
        return Err(std::mem::take(&mut lowering.diags));
    }
    let model = CrateModel::new(ast.name.clone(), root)
        .map_err(|ds| ds.into_iter().map(|d| lowering.position(d)).collect::<Vec<_>>())?;
    let diags = validate(&model);
    if has_errors(&diags) {
        return Err(diags
            .into_iter()
            .filter(Diagnostic::is_error)
            .map(|d| lowering.position(d))
            .collect());
    }
    Ok(model)
}

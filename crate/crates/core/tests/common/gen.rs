//! Random crate models, emitted as facts source.

use std::fmt::Write as _;

use rand::Rng;

pub const ATOMS: [&str; 4] = ["a", "b", "c", "d"];

#[derive(Debug, Clone, Copy)]
pub struct Limits {
    pub functions: usize,
    pub structs: usize,
    pub atoms: usize,
    /// Per struct, counting a public-field pseudo method.
    pub dynamic_methods: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            functions: 6,
            structs: 2,
            atoms: 4,
            dynamic_methods: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    Free,
    Ctor(usize),
    Static(usize),
    Method(usize, bool),
    Dtor(usize),
}

struct Func {
    slot: Slot,
    public: bool,
    unsafe_: bool,
    sc: Vec<&'static str>,
    establishes: Vec<&'static str>,
    breaks: Vec<&'static str>,
    calls: Vec<(usize, Vec<&'static str>)>,
}

fn subset<R: Rng>(rng: &mut R, n_atoms: usize, p: f64) -> Vec<&'static str> {
    ATOMS[..n_atoms].iter().copied().filter(|_| rng.random_bool(p)).collect()
}

fn atom_list(atoms: &[&str]) -> String {
    format!("[{}]", atoms.join(", "))
}

/// A valid model within `limits`.
pub fn random_facts<R: Rng>(rng: &mut R, limits: &Limits) -> String {
    let n_atoms = rng.random_range(1..=limits.atoms);
    let n_structs = rng.random_range(0..=limits.structs);
    let n_fns = rng.random_range(1..=limits.functions);
    let n_externs = rng.random_range(0..=2usize);

    let mut dynamic = vec![0usize; n_structs];
    let mut has_dtor = vec![false; n_structs];
    let field_access: Vec<bool> = (0..n_structs)
        .map(|s| {
            let on = rng.random_bool(0.1);
            if on {
                dynamic[s] += 1;
            }
            on
        })
        .collect();
    let literal: Vec<bool> = (0..n_structs).map(|_| rng.random_bool(0.1)).collect();
    let invariants: Vec<Vec<&str>> = (0..n_structs).map(|_| subset(rng, n_atoms, 0.5)).collect();

    let mut funcs: Vec<Func> = Vec::new();
    for _ in 0..n_fns {
        let slot = if n_structs == 0 || rng.random_bool(0.3) {
            Slot::Free
        } else {
            let s = rng.random_range(0..n_structs);
            match rng.random_range(0..10) {
                0..=2 => Slot::Ctor(s),
                3 => Slot::Static(s),
                4 if !has_dtor[s] => {
                    has_dtor[s] = true;
                    Slot::Dtor(s)
                }
                _ if dynamic[s] < limits.dynamic_methods => {
                    dynamic[s] += 1;
                    Slot::Method(s, rng.random_bool(0.5))
                }
                _ => Slot::Ctor(s),
            }
        };
        let unsafe_ = !matches!(slot, Slot::Dtor(_)) && rng.random_bool(0.4);
        let sc = if unsafe_ { subset(rng, n_atoms, 0.4) } else { Vec::new() };
        // Constructors that establish little make every pair obligation open,
        // which would starve the interesting all-discharged case.
        let p_establish = if matches!(slot, Slot::Ctor(_)) { 0.65 } else { 0.35 };
        let establishes = subset(rng, n_atoms, p_establish);
        let mut breaks = match slot {
            Slot::Method(..) | Slot::Dtor(_) => subset(rng, n_atoms, 0.3),
            _ => Vec::new(),
        };
        // An unsafe method that breaks part of its own contract is the case
        // where the subtraction rule matters most.
        if matches!(slot, Slot::Method(..)) && !sc.is_empty() && rng.random_bool(0.5) {
            let pick = sc[rng.random_range(0..sc.len())];
            if !breaks.contains(&pick) {
                breaks.push(pick);
                breaks.sort_unstable();
            }
        }
        funcs.push(Func {
            slot,
            public: rng.random_bool(0.6),
            unsafe_,
            sc,
            establishes,
            breaks,
            calls: Vec::new(),
        });
    }

    let extern_sc: Vec<Vec<&str>> = (0..n_externs).map(|_| subset(rng, n_atoms, 0.5)).collect();
    // Targets 0..n_fns are functions, the rest externs.
    let targets = n_fns + n_externs;
    for i in 0..n_fns {
        let n_calls = rng.random_range(0..=2usize);
        for _ in 0..n_calls {
            let instance = matches!(funcs[i].slot, Slot::Method(..) | Slot::Dtor(_));
            let t = if instance && n_externs > 0 && rng.random_bool(0.5) {
                n_fns + rng.random_range(0..n_externs)
            } else {
                rng.random_range(0..targets)
            };
            let callee_sc: Vec<&str> = if t < n_fns {
                if funcs[t].unsafe_ {
                    funcs[t].sc.clone()
                } else {
                    Vec::new()
                }
            } else {
                extern_sc[t - n_fns].clone()
            };
            let hints: Vec<&str> = callee_sc.into_iter().filter(|_| rng.random_bool(0.2)).collect();
            funcs[i].calls.push((t, hints));
        }
    }

    let fn_name = |i: usize| format!("f{i}");
    let target_path = |t: usize| -> String {
        if t >= n_fns {
            return format!("e{}", t - n_fns);
        }
        match funcs[t].slot {
            Slot::Free => fn_name(t),
            Slot::Ctor(s) | Slot::Static(s) | Slot::Method(s, _) | Slot::Dtor(s) => format!("S{s}::{}", fn_name(t)),
        }
    };

    let mut out = String::from("crate c {\n");
    for (e, sc) in extern_sc.iter().enumerate() {
        let _ = writeln!(out, "  extern fn unsafe e{e} sc {};", atom_list(sc));
    }
    for s in 0..n_structs {
        let _ = writeln!(out, "  struct pub S{s} {{");
        let _ = writeln!(out, "    invariants {};", atom_list(&invariants[s]));
        if literal[s] {
            out.push_str("    literal_constructor;\n");
        }
        if field_access[s] {
            out.push_str("    field_access;\n");
        }
        out.push_str("  }\n");
    }
    for (i, f) in funcs.iter().enumerate() {
        let mut line = String::from("  fn");
        if f.unsafe_ {
            line.push_str(" unsafe");
        }
        if f.public {
            line.push_str(" pub");
        }
        let _ = write!(line, " {}", fn_name(i));
        match f.slot {
            Slot::Free => {}
            Slot::Ctor(s) => {
                let _ = write!(line, "() constructor of S{s}");
            }
            Slot::Static(s) => {
                let _ = write!(line, "() method of S{s}");
            }
            Slot::Method(s, mutable) => {
                let recv = if mutable { "&mut self" } else { "&self" };
                let _ = write!(line, "({recv}) method of S{s}");
            }
            Slot::Dtor(s) => {
                let _ = write!(line, "(&mut self) destructor of S{s}");
            }
        }
        if !f.sc.is_empty() {
            let _ = write!(line, " sc {}", atom_list(&f.sc));
        }
        if !f.establishes.is_empty() {
            let _ = write!(line, " establishes {}", atom_list(&f.establishes));
        }
        if !f.breaks.is_empty() {
            let _ = write!(line, " breaks {}", atom_list(&f.breaks));
        }
        for (t, hints) in &f.calls {
            let _ = write!(line, " calls {}", target_path(*t));
            if !hints.is_empty() {
                let body: Vec<String> = hints.iter().map(|a| format!("{a}: \"checked\"")).collect();
                let _ = write!(line, " where {{ {} }}", body.join(", "));
            }
        }
        line.push_str(";\n");
        out.push_str(&line);
    }
    out.push_str("}\n");
    out
}

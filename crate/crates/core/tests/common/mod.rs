#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::time::Duration;

use hypa_core::oracle::DomainBounds;
use hypa_core::{Problem, Solver, SolverConfig};
use rand::rngs::StdRng;
use rand::Rng;

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

/// Loads systems, property and predicates from the fixture directory.
pub fn load(systems: &[&str], property: &str, predicates: &str) -> Problem {
    let sys: Vec<PathBuf> = systems.iter().map(|s| fixture(s)).collect();
    Problem::load(&sys, &fixture(property), Some(&fixture(predicates)), None).expect("fixture parses")
}

pub fn solver() -> Solver {
    let cfg = SolverConfig::locate(None).expect("an SMT solver on PATH").with_query_timeout(Duration::from_secs(10));
    Solver::new(cfg)
}

/// A random finite-domain problem in the input language.
#[derive(Clone, Debug)]
pub struct Instance {
    pub systems: Vec<String>,
    pub property: String,
    pub predicates: String,
    pub bounds: DomainBounds,
    pub universal: usize,
    pub existential: usize,
}

impl Instance {
    pub fn problem(&self) -> Problem {
        let sys: Vec<(&str, &str)> = self.systems.iter().map(|s| ("system", s.as_str())).collect();
        Problem::parse(&sys, ("property", &self.property), Some(("predicates", &self.predicates)), None)
            .unwrap_or_else(|e| panic!("generated instance does not parse: {e}\n{self:?}"))
    }
}

fn pick<'a, T>(rng: &mut StdRng, xs: &'a [T]) -> &'a T {
    &xs[rng.gen_range(0..xs.len())]
}

fn random_system(rng: &mut StdRng, name: &str, vars: &[String], d: i64) -> String {
    let in_domain = |v: &str| format!("(and (>= {v} 0) (<= {v} {}))", d - 1);
    let init: Vec<String> = vars
        .iter()
        .map(|v| if rng.gen_bool(0.6) { format!("(= {v} {})", rng.gen_range(0..d)) } else { in_domain(v) })
        .collect();
    let rules = rng.gen_range(1..=3);
    let mut branches = Vec::new();
    for r in 0..rules {
        let guard = if r + 1 == rules {
            "true".to_string()
        } else {
            let v = pick(rng, vars).clone();
            let c = rng.gen_range(0..d);
            match rng.gen_range(0..3) {
                0 => format!("(= {v} {c})"),
                1 => format!("(not (= {v} {c}))"),
                _ => format!("(= {v} {})", pick(rng, vars)),
            }
        };
        let updates: Vec<String> = vars
            .iter()
            .map(|v| match rng.gen_range(0..4) {
                0 => format!("(= {v}' {v})"),
                1 => format!("(= {v}' {})", rng.gen_range(0..d)),
                2 => format!("(= {v}' {})", pick(rng, vars)),
                _ => in_domain(&format!("{v}'")),
            })
            .collect();
        branches.push(format!("(and {guard} {})", updates.join(" ")));
    }
    let decls: Vec<String> = vars.iter().map(|v| format!("({v} Int)")).collect();
    format!(
        "(system {name}\n  (vars {})\n  (init (and {}))\n  (step (or {})))\n",
        decls.join(" "),
        init.join(" "),
        branches.join("\n    ")
    )
}

fn random_atom(rng: &mut StdRng, vars: &[String], k: usize, d: i64) -> String {
    let v = pick(rng, vars);
    let i = rng.gen_range(1..=k);
    if rng.gen_bool(0.6) {
        let mut j = rng.gen_range(1..=k);
        if j == i {
            j = i % k + 1;
        }
        format!("(= {v}@pi{i} {}@pi{j})", pick(rng, vars))
    } else {
        format!("(= {v}@pi{i} {})", rng.gen_range(0..d))
    }
}

/// Random instance with domains of at most 3 values, at most 2 variables,
/// at most 2 universal and 2 existential copies (3 copies overall) and the
/// atomic-complete predicate set {v@i = c}. The composed concrete state
/// space is kept at or below `max_product` states.
pub fn random_instance(rng: &mut StdRng, max_product: u64) -> Instance {
    loop {
        let d: i64 = rng.gen_range(2..=3);
        let nv = rng.gen_range(1..=2);
        let universal = rng.gen_range(1..=2);
        let existential = if universal == 2 { rng.gen_range(0..=1) } else { rng.gen_range(1..=2) };
        let k = universal + existential;
        if (d as u64).pow((nv * k) as u32) > max_product {
            continue;
        }
        let vars: Vec<String> = (0..nv).map(|i| format!("v{i}")).collect();
        let nsys = rng.gen_range(1..=2);
        let names: Vec<String> = (0..nsys).map(|i| format!("S{i}")).collect();
        let systems: Vec<String> = names.iter().map(|n| random_system(rng, n, &vars, d)).collect();
        let mut quants = Vec::new();
        for i in 1..=k {
            let kind = if i <= universal { "forall" } else { "exists" };
            let obs = if rng.gen_bool(0.7) {
                "true".to_string()
            } else {
                format!("(= {} {})", pick(rng, &vars), rng.gen_range(0..d))
            };
            quants.push(format!("  ({kind} pi{i} {} {obs})", pick(rng, &names)));
        }
        let a = random_atom(rng, &vars, k, d);
        let b = random_atom(rng, &vars, k, d);
        let body = match rng.gen_range(0..5) {
            0 => format!("(G {a})"),
            1 => format!("(G (or {a} {b}))"),
            2 => format!("(=> {a} (G {b}))"),
            3 => format!("(G (=> {a} {b}))"),
            _ => format!("(W {a} (G {b}))"),
        };
        let property = format!("(property\n{}\n  (body {body}))\n", quants.join("\n"));
        let mut preds = Vec::new();
        for i in 1..=k {
            for v in &vars {
                for c in 0..d {
                    preds.push(format!("  ({v}{i}={c} (= {v}@pi{i} {c}))"));
                }
            }
        }
        let predicates = format!("(predicates\n{})\n", preds.join("\n"));
        let bounds = vars.iter().map(|v| (v.clone(), (0, d - 1))).collect();
        return Instance { systems, property, predicates, bounds, universal, existential };
    }
}

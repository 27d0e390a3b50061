//! Readers and printers for the input formats: systems, properties,
//! predicate sets and safety automata, all written as s-expressions.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::automaton::{Edge, SafetyAutomaton};
use crate::logic::{check_sorts, CmpOp, Formula, Sort, Var};
use crate::sexp::{self, Pos, Sexp};

/// A symbolic transition system (X, init, step). `step` ranges over X ∪ X′.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sts {
    pub name: String,
    pub vars: Vec<Var>,
    pub init: Formula,
    pub step: Formula,
}

impl Sts {
    pub fn var(&self, name: &str) -> Option<&Var> {
        self.vars.iter().find(|v| &*v.base == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QuantKind {
    Forall,
    Exists,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Quantifier {
    pub kind: QuantKind,
    pub trace: String,
    /// Index into the loaded systems.
    pub system: usize,
    /// Observation formula over the system's unindexed variables.
    pub observation: Formula,
}

/// LTL over atoms whose variables are indexed by trace position (1-based).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Ltl {
    Atom(Formula),
    Not(Box<Ltl>),
    And(Vec<Ltl>),
    Or(Vec<Ltl>),
    Implies(Box<Ltl>, Box<Ltl>),
    Next(Box<Ltl>),
    Globally(Box<Ltl>),
    Finally(Box<Ltl>),
    Until(Box<Ltl>, Box<Ltl>),
    WeakUntil(Box<Ltl>, Box<Ltl>),
}

impl Ltl {
    /// Atoms in first-occurrence order.
    pub fn atoms(&self) -> Vec<Formula> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut Vec<Formula>) {
        match self {
            Ltl::Atom(f) => {
                if !out.contains(f) {
                    out.push(f.clone());
                }
            }
            Ltl::Not(a) | Ltl::Next(a) | Ltl::Globally(a) | Ltl::Finally(a) => a.collect_atoms(out),
            Ltl::And(xs) | Ltl::Or(xs) => xs.iter().for_each(|x| x.collect_atoms(out)),
            Ltl::Implies(a, b) | Ltl::Until(a, b) | Ltl::WeakUntil(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }
}

/// ∀^l ∃^(k-l) OHyperLTL formula.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HyperProperty {
    pub quantifiers: Vec<Quantifier>,
    pub body: Ltl,
}

impl HyperProperty {
    pub fn k(&self) -> usize {
        self.quantifiers.len()
    }

    /// Number of universal quantifiers (they form a prefix).
    pub fn l(&self) -> usize {
        self.quantifiers.iter().take_while(|q| q.kind == QuantKind::Forall).count()
    }

    pub fn trace_names(&self) -> Vec<String> {
        self.quantifiers.iter().map(|q| q.trace.clone()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Predicate {
    pub name: String,
    pub formula: Formula,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct PredicateSet {
    pub preds: Vec<Predicate>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: Pos, msg: String },
    #[error("unsupported quantifier prefix at {pos}: existential quantifiers must follow all universal ones")]
    UnsupportedPrefix { pos: Pos },
    #[error("primed variable {var} in init at {pos}")]
    PrimedInInit { pos: Pos, var: String },
    #[error("sort error at {pos}: {msg}")]
    Sort { pos: Pos, msg: String },
}

impl From<sexp::SyntaxError> for ParseError {
    fn from(e: sexp::SyntaxError) -> Self {
        ParseError::Syntax { pos: e.pos, msg: e.msg }
    }
}

fn syntax(pos: Pos, msg: impl Into<String>) -> ParseError {
    ParseError::Syntax { pos, msg: msg.into() }
}

fn is_ident(s: &str) -> bool {
    let mut cs = s.chars();
    matches!(cs.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && cs.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

/// How identifiers inside a formula are resolved.
enum Scope<'a> {
    /// Unindexed variables of one system; primes allowed when `primes`.
    System { sys: &'a Sts, primes: bool },
    /// `x@t` references, `t` a trace name or 1-based ordinal.
    Indexed { traces: &'a [String], systems: Vec<&'a Sts> },
}

impl Scope<'_> {
    fn resolve(&self, tok: &str, pos: Pos) -> Result<Var, ParseError> {
        let (stem, primed) = match tok.strip_suffix('\'') {
            Some(s) => (s, true),
            None => (tok, false),
        };
        match self {
            Scope::System { sys, primes } => {
                if stem.contains('@') {
                    return Err(syntax(pos, format!("indexed variable {tok} not allowed here")));
                }
                let v = sys.var(stem).ok_or_else(|| syntax(pos, format!("unknown variable {stem} in system {}", sys.name)))?;
                if primed && !primes {
                    return Err(ParseError::PrimedInInit { pos, var: tok.to_string() });
                }
                Ok(if primed { v.primed() } else { v.clone() })
            }
            Scope::Indexed { traces, systems } => {
                if primed {
                    return Err(syntax(pos, format!("primed variable {tok} not allowed here")));
                }
                let (base, tv) = stem
                    .split_once('@')
                    .ok_or_else(|| syntax(pos, format!("variable {tok} must be indexed as name@trace")))?;
                let copy = match traces.iter().position(|t| t == tv) {
                    Some(i) => i + 1,
                    None => match tv.parse::<usize>() {
                        Ok(i) if i >= 1 && i <= traces.len() => i,
                        _ => return Err(syntax(pos, format!("unknown trace variable {tv}"))),
                    },
                };
                let sys = systems[copy - 1];
                let v = sys.var(base).ok_or_else(|| syntax(pos, format!("unknown variable {base} in system {}", sys.name)))?;
                Ok(v.indexed(copy as u32))
            }
        }
    }
}

fn parse_int(tok: &str) -> Option<i64> {
    let digits = tok.strip_prefix('-').unwrap_or(tok);
    if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
        tok.parse().ok()
    } else {
        None
    }
}

fn parse_fexpr(s: &Sexp, scope: &Scope) -> Result<Formula, ParseError> {
    let pos = s.pos();
    match s {
        Sexp::Atom(tok, _) => {
            if let Some(n) = parse_int(tok) {
                return Ok(Formula::Int(n));
            }
            match tok.as_str() {
                "true" => Ok(Formula::Bool(true)),
                "false" => Ok(Formula::Bool(false)),
                _ => Ok(Formula::Var(scope.resolve(tok, pos)?)),
            }
        }
        Sexp::List(items, _) => {
            let head = s.head().ok_or_else(|| syntax(pos, "expected an operator"))?;
            let args = items[1..].iter().map(|a| parse_fexpr(a, scope)).collect::<Result<Vec<_>, _>>()?;
            let arity = |n: usize| {
                if args.len() == n {
                    Ok(())
                } else {
                    Err(syntax(pos, format!("{head} expects {n} arguments, got {}", args.len())))
                }
            };
            let at_least = |n: usize| {
                if args.len() >= n {
                    Ok(())
                } else {
                    Err(syntax(pos, format!("{head} expects at least {n} arguments")))
                }
            };
            let mut it = args.clone().into_iter();
            let mut next = || Box::new(it.next().unwrap());
            let f = match head {
                "and" => Formula::And(args),
                "or" => Formula::Or(args),
                "not" => {
                    arity(1)?;
                    Formula::Not(next())
                }
                "=>" => {
                    arity(2)?;
                    Formula::Implies(next(), next())
                }
                "=" => {
                    arity(2)?;
                    let sort = check_sorts(&args[0]).map_err(|e| ParseError::Sort { pos, msg: e.to_string() })?;
                    if sort == Sort::Bool {
                        Formula::Iff(next(), next())
                    } else {
                        Formula::Cmp(CmpOp::Eq, next(), next())
                    }
                }
                "<" | "<=" | ">" | ">=" => {
                    arity(2)?;
                    let op = match head {
                        "<" => CmpOp::Lt,
                        "<=" => CmpOp::Le,
                        ">" => CmpOp::Gt,
                        _ => CmpOp::Ge,
                    };
                    Formula::Cmp(op, next(), next())
                }
                "+" => Formula::Add(args),
                "-" => {
                    at_least(1)?;
                    if args.len() == 1 {
                        Formula::Neg(next())
                    } else {
                        let mut acc = *next();
                        for _ in 1..args.len() {
                            acc = Formula::Sub(Box::new(acc), next());
                        }
                        acc
                    }
                }
                "*" => {
                    at_least(2)?;
                    let mut acc = *next();
                    for _ in 1..args.len() {
                        acc = Formula::Mul(Box::new(acc), next());
                    }
                    acc
                }
                "ite" => {
                    arity(3)?;
                    Formula::Ite(next(), next(), next())
                }
                other => return Err(syntax(pos, format!("unknown operator {other}"))),
            };
            check_sorts(&f).map_err(|e| ParseError::Sort { pos, msg: e.to_string() })?;
            Ok(f)
        }
    }
}

fn expect_bool(f: &Formula, pos: Pos) -> Result<(), ParseError> {
    match check_sorts(f) {
        Ok(Sort::Bool) => Ok(()),
        Ok(s) => Err(ParseError::Sort { pos, msg: format!("expected Bool, found {s}") }),
        Err(e) => Err(ParseError::Sort { pos, msg: e.to_string() }),
    }
}

fn section<'a>(items: &'a [Sexp], name: &str, pos: Pos) -> Result<&'a [Sexp], ParseError> {
    let found: Vec<_> = items.iter().filter(|s| s.head() == Some(name)).collect();
    match found.as_slice() {
        [one] => Ok(&one.list().unwrap()[1..]),
        [] => Err(syntax(pos, format!("missing ({name} ...) section"))),
        [_, dup, ..] => Err(syntax(dup.pos(), format!("duplicate ({name} ...) section"))),
    }
}

fn single<'a>(args: &'a [Sexp], what: &str, pos: Pos) -> Result<&'a Sexp, ParseError> {
    match args {
        [one] => Ok(one),
        _ => Err(syntax(pos, format!("{what} expects exactly one expression"))),
    }
}

/// Parses every `(system ...)` form in `text`.
pub fn parse_systems(text: &str) -> Result<Vec<Sts>, ParseError> {
    sexp::parse_all(text)?.iter().map(system_from_sexp).collect()
}

/// Parses a file holding exactly one system.
pub fn parse_system(text: &str) -> Result<Sts, ParseError> {
    let s = sexp::parse_one(text)?;
    system_from_sexp(&s)
}

fn system_from_sexp(s: &Sexp) -> Result<Sts, ParseError> {
    let pos = s.pos();
    if s.head() != Some("system") {
        return Err(syntax(pos, "expected (system <name> ...)"));
    }
    let items = s.list().unwrap();
    let name = items
        .get(1)
        .and_then(Sexp::atom)
        .filter(|n| is_ident(n))
        .ok_or_else(|| syntax(pos, "system needs a name"))?
        .to_string();
    let rest = &items[2..];
    for item in rest {
        match item.head() {
            Some("vars" | "init" | "step") => {}
            _ => return Err(syntax(item.pos(), "expected (vars ...), (init ...) or (step ...)")),
        }
    }
    let mut vars = Vec::new();
    for decl in section(rest, "vars", pos)? {
        let parts = decl.list().ok_or_else(|| syntax(decl.pos(), "expected (<id> Int|Bool)"))?;
        let (id, sort) = match parts {
            [Sexp::Atom(id, _), Sexp::Atom(sort, spos)] => {
                let sort = match sort.as_str() {
                    "Int" => Sort::Int,
                    "Bool" => Sort::Bool,
                    other => return Err(syntax(*spos, format!("unknown sort {other}"))),
                };
                (id, sort)
            }
            _ => return Err(syntax(decl.pos(), "expected (<id> Int|Bool)")),
        };
        if !is_ident(id) {
            return Err(syntax(decl.pos(), format!("invalid identifier {id}")));
        }
        if vars.iter().any(|v: &Var| &*v.base == id) {
            return Err(syntax(decl.pos(), format!("duplicate variable {id}")));
        }
        vars.push(Var { base: Arc::from(id.as_str()), copy: None, primed: false, sort });
    }
    let mut sys = Sts { name, vars, init: Formula::Bool(true), step: Formula::Bool(true) };
    let init_s = single(section(rest, "init", pos)?, "init", pos)?;
    let init = parse_fexpr(init_s, &Scope::System { sys: &sys, primes: false })?;
    expect_bool(&init, init_s.pos())?;
    let step_s = single(section(rest, "step", pos)?, "step", pos)?;
    let step = parse_fexpr(step_s, &Scope::System { sys: &sys, primes: true })?;
    expect_bool(&step, step_s.pos())?;
    sys.init = init;
    sys.step = step;
    Ok(sys)
}

/// Parses a property. Quantifiers may name a system; when omitted and a
/// single system is loaded, that system is used.
pub fn parse_property(text: &str, systems: &[Sts]) -> Result<HyperProperty, ParseError> {
    let s = sexp::parse_one(text)?;
    let pos = s.pos();
    if s.head() != Some("property") {
        return Err(syntax(pos, "expected (property ...)"));
    }
    let items = &s.list().unwrap()[1..];
    let mut quantifiers = Vec::new();
    let mut body = None;
    let mut seen_exists = false;
    for item in items {
        let ipos = item.pos();
        match item.head() {
            Some(kw @ ("forall" | "exists")) => {
                if body.is_some() {
                    return Err(syntax(ipos, "quantifiers must precede the body"));
                }
                let kind = if kw == "forall" { QuantKind::Forall } else { QuantKind::Exists };
                if kind == QuantKind::Forall && seen_exists {
                    return Err(ParseError::UnsupportedPrefix { pos: ipos });
                }
                seen_exists |= kind == QuantKind::Exists;
                let parts = &item.list().unwrap()[1..];
                let (tv, sys_name, obs) = match parts {
                    [tv, obs] => (tv, None, obs),
                    [tv, sys, obs] => (tv, Some(sys), obs),
                    _ => return Err(syntax(ipos, format!("expected ({kw} <trace> [<system>] <observation>)"))),
                };
                let tv = tv.atom().filter(|t| is_ident(t)).ok_or_else(|| syntax(tv.pos(), "expected a trace variable"))?;
                if quantifiers.iter().any(|q: &Quantifier| q.trace == tv) {
                    return Err(syntax(ipos, format!("duplicate trace variable {tv}")));
                }
                let system = match sys_name {
                    Some(n) => {
                        let name = n.atom().ok_or_else(|| syntax(n.pos(), "expected a system name"))?;
                        systems
                            .iter()
                            .position(|s| s.name == name)
                            .ok_or_else(|| syntax(n.pos(), format!("unknown system {name}")))?
                    }
                    None if systems.len() == 1 => 0,
                    None => return Err(syntax(ipos, "several systems loaded; quantifier must name one")),
                };
                let observation = parse_fexpr(obs, &Scope::System { sys: &systems[system], primes: false })?;
                expect_bool(&observation, obs.pos())?;
                quantifiers.push(Quantifier { kind, trace: tv.to_string(), system, observation });
            }
            Some("body") => {
                if body.is_some() {
                    return Err(syntax(ipos, "duplicate body"));
                }
                let e = single(&item.list().unwrap()[1..], "body", ipos)?;
                body = Some(e);
            }
            _ => return Err(syntax(ipos, "expected (forall ...), (exists ...) or (body ...)")),
        }
    }
    if quantifiers.is_empty() {
        return Err(syntax(pos, "property needs at least one quantifier"));
    }
    if quantifiers[0].kind != QuantKind::Forall {
        return Err(ParseError::UnsupportedPrefix { pos: items[0].pos() });
    }
    let body = body.ok_or_else(|| syntax(pos, "missing (body ...)"))?;
    let traces: Vec<String> = quantifiers.iter().map(|q| q.trace.clone()).collect();
    let scope = Scope::Indexed { traces: &traces, systems: quantifiers.iter().map(|q| &systems[q.system]).collect() };
    let body = parse_ltl(body, &scope)?;
    Ok(HyperProperty { quantifiers, body })
}

fn parse_ltl(s: &Sexp, scope: &Scope) -> Result<Ltl, ParseError> {
    let pos = s.pos();
    let head = s.head();
    let args = || &s.list().unwrap()[1..];
    let unary = |ctor: fn(Box<Ltl>) -> Ltl| -> Result<Ltl, ParseError> {
        Ok(ctor(Box::new(parse_ltl(single(args(), head.unwrap(), pos)?, scope)?)))
    };
    let binary = |ctor: fn(Box<Ltl>, Box<Ltl>) -> Ltl| -> Result<Ltl, ParseError> {
        match args() {
            [a, b] => Ok(ctor(Box::new(parse_ltl(a, scope)?), Box::new(parse_ltl(b, scope)?))),
            _ => Err(syntax(pos, format!("{} expects two arguments", head.unwrap()))),
        }
    };
    let nary = |xs: &[Sexp]| xs.iter().map(|x| parse_ltl(x, scope)).collect::<Result<Vec<_>, _>>();
    match head {
        Some("G") => unary(Ltl::Globally),
        Some("F") => unary(Ltl::Finally),
        Some("X") => unary(Ltl::Next),
        Some("not") => unary(Ltl::Not),
        Some("U") => binary(Ltl::Until),
        Some("W") => binary(Ltl::WeakUntil),
        Some("=>") => binary(Ltl::Implies),
        Some("and") => Ok(Ltl::And(nary(args())?)),
        Some("or") => Ok(Ltl::Or(nary(args())?)),
        _ => {
            let f = parse_fexpr(s, scope)?;
            expect_bool(&f, pos)?;
            Ok(Ltl::Atom(f))
        }
    }
}

/// Parses `(predicates (<name> <fexpr>)...)`; variables are indexed with the
/// trace names of `property` (or 1-based ordinals).
pub fn parse_predicates(text: &str, property: &HyperProperty, systems: &[Sts]) -> Result<PredicateSet, ParseError> {
    let s = sexp::parse_one(text)?;
    if s.head() != Some("predicates") {
        return Err(syntax(s.pos(), "expected (predicates ...)"));
    }
    let traces = property.trace_names();
    let scope = Scope::Indexed { traces: &traces, systems: property.quantifiers.iter().map(|q| &systems[q.system]).collect() };
    let mut preds = Vec::new();
    for item in &s.list().unwrap()[1..] {
        let (name, body) = match item.list() {
            Some([Sexp::Atom(name, _), body]) => (name.clone(), body),
            _ => return Err(syntax(item.pos(), "expected (<name> <formula>)")),
        };
        if preds.iter().any(|p: &Predicate| p.name == name) {
            return Err(syntax(item.pos(), format!("duplicate predicate {name}")));
        }
        let formula = parse_fexpr(body, &scope)?;
        expect_bool(&formula, body.pos())?;
        preds.push(Predicate { name, formula });
    }
    Ok(PredicateSet { preds })
}

/// Parses `(automaton (states ...) (init q) (bad ...) (edge q θ q')...)`.
pub fn parse_automaton(text: &str, property: &HyperProperty, systems: &[Sts]) -> Result<SafetyAutomaton, ParseError> {
    let s = sexp::parse_one(text)?;
    let pos = s.pos();
    if s.head() != Some("automaton") {
        return Err(syntax(pos, "expected (automaton ...)"));
    }
    let items = &s.list().unwrap()[1..];
    let names = |xs: &[Sexp]| -> Result<Vec<String>, ParseError> {
        xs.iter().map(|x| x.atom().map(str::to_string).ok_or_else(|| syntax(x.pos(), "expected a state name"))).collect()
    };
    let states = names(section(items, "states", pos)?)?;
    let lookup = |n: &str, p: Pos| states.iter().position(|s| s == n).ok_or_else(|| syntax(p, format!("unknown state {n}")));
    let init_s = single(section(items, "init", pos)?, "init", pos)?;
    let init = lookup(init_s.atom().unwrap_or(""), init_s.pos())?;
    let mut bad = BTreeSet::new();
    for b in section(items, "bad", pos)? {
        bad.insert(lookup(b.atom().unwrap_or(""), b.pos())?);
    }
    let traces = property.trace_names();
    let scope = Scope::Indexed { traces: &traces, systems: property.quantifiers.iter().map(|q| &systems[q.system]).collect() };
    let mut edges = Vec::new();
    for item in items {
        match item.head() {
            Some("states" | "init" | "bad") => {}
            Some("edge") => match &item.list().unwrap()[1..] {
                [from, guard, to] => {
                    let from = lookup(from.atom().unwrap_or(""), from.pos())?;
                    let to = lookup(to.atom().unwrap_or(""), to.pos())?;
                    let guard_f = parse_fexpr(guard, &scope)?;
                    expect_bool(&guard_f, guard.pos())?;
                    edges.push(Edge { from, guard: guard_f, to });
                }
                _ => return Err(syntax(item.pos(), "expected (edge <q> <guard> <q'>)")),
            },
            _ => return Err(syntax(item.pos(), "unexpected automaton section")),
        }
    }
    Ok(SafetyAutomaton { states, init, bad, edges })
}

/// Renders a formula in the input syntax, naming copies by trace variable.
pub fn render_formula(f: &Formula, traces: Option<&[String]>) -> String {
    match traces {
        None => f.to_string(),
        Some(names) => f
            .rename_vars(&mut |v: &Var| -> Result<Var, ()> {
                Ok(match v.copy {
                    Some(c) if (c as usize) <= names.len() => Var {
                        base: Arc::from(format!("{}@{}", v.base, names[c as usize - 1])),
                        copy: None,
                        ..v.clone()
                    },
                    _ => v.clone(),
                })
            })
            .expect("infallible")
            .to_string(),
    }
}

pub fn render_ltl(l: &Ltl, traces: Option<&[String]>) -> String {
    let join = |head: &str, xs: &[&Ltl]| {
        let mut s = format!("({head}");
        for x in xs {
            s.push(' ');
            s.push_str(&render_ltl(x, traces));
        }
        s.push(')');
        s
    };
    match l {
        Ltl::Atom(f) => render_formula(f, traces),
        Ltl::Not(a) => join("not", &[a]),
        Ltl::And(xs) => join("and", &xs.iter().collect::<Vec<_>>()),
        Ltl::Or(xs) => join("or", &xs.iter().collect::<Vec<_>>()),
        Ltl::Implies(a, b) => join("=>", &[a, b]),
        Ltl::Next(a) => join("X", &[a]),
        Ltl::Globally(a) => join("G", &[a]),
        Ltl::Finally(a) => join("F", &[a]),
        Ltl::Until(a, b) => join("U", &[a, b]),
        Ltl::WeakUntil(a, b) => join("W", &[a, b]),
    }
}

pub fn print_system(sys: &Sts) -> String {
    let mut s = format!("(system {}\n  (vars", sys.name);
    for v in &sys.vars {
        let _ = write!(s, " ({} {})", v.base, v.sort);
    }
    let _ = write!(s, ")\n  (init {})\n  (step {}))\n", sys.init, sys.step);
    s
}

pub fn print_property(p: &HyperProperty, systems: &[Sts]) -> String {
    let mut s = String::from("(property\n");
    for q in &p.quantifiers {
        let kw = match q.kind {
            QuantKind::Forall => "forall",
            QuantKind::Exists => "exists",
        };
        let _ = writeln!(s, "  ({kw} {} {} {})", q.trace, systems[q.system].name, q.observation);
    }
    let traces = p.trace_names();
    let _ = writeln!(s, "  (body {}))", render_ltl(&p.body, Some(&traces)));
    s
}

pub fn print_predicates(ps: &PredicateSet, traces: &[String]) -> String {
    let mut s = String::from("(predicates");
    for p in &ps.preds {
        let _ = write!(s, "\n  ({} {})", p.name, render_formula(&p.formula, Some(traces)));
    }
    s.push_str(")\n");
    s
}

pub fn print_automaton(a: &SafetyAutomaton, traces: &[String]) -> String {
    let mut s = String::from("(automaton\n  (states");
    for q in &a.states {
        let _ = write!(s, " {q}");
    }
    let _ = write!(s, ")\n  (init {})\n  (bad", a.states[a.init]);
    for &b in &a.bad {
        let _ = write!(s, " {}", a.states[b]);
    }
    s.push(')');
    for e in &a.edges {
        let _ = write!(s, "\n  (edge {} {} {})", a.states[e.from], render_formula(&e.guard, Some(traces)), a.states[e.to]);
    }
    s.push_str(")\n");
    s
}

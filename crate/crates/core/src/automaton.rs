//! Deterministic safety automata for the trace body, and the translation from
//! the safety fragment of LTL (negation normal form without U and F).

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::frontend::Ltl;
use crate::logic::{and, not, or, Assignment, EvalError, Formula};
use crate::smt::{SatResult, SmtError, Solver};

/// Largest number of states the translation may produce.
pub const MAX_STATES: usize = 1 << 12;
/// Largest number of distinct atoms the translation splits on.
pub const MAX_ATOMS: usize = 12;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub from: usize,
    pub guard: Formula,
    pub to: usize,
}

/// (Q, q0, δ, B) with δ given by guarded edges. A word is accepted when no
/// run visits a state in B.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SafetyAutomaton {
    pub states: Vec<String>,
    pub init: usize,
    pub bad: BTreeSet<usize>,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AutomatonError {
    #[error("operator {0} is outside the supported safety fragment")]
    UnsupportedBody(&'static str),
    #[error("translation exceeds {MAX_STATES} states")]
    TooManyStates,
    #[error("body has {0} atoms; at most {MAX_ATOMS} are supported")]
    TooManyAtoms(usize),
    #[error("state {state}: guards overlap, e.g. at {witness}")]
    NotDeterministic { state: String, witness: String },
    #[error("state {state}: guards are not total, e.g. at {witness}")]
    NotTotal { state: String, witness: String },
    #[error("state {state}: {count} transitions apply to one abstract state")]
    Expressibility { state: String, count: usize },
    #[error("no unique transition from {state} for the given valuation")]
    NoTransition { state: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Smt(#[from] SmtError),
}

impl SafetyAutomaton {
    pub fn is_bad(&self, q: usize) -> bool {
        self.bad.contains(&q)
    }

    pub fn edges_from(&self, q: usize) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.from == q)
    }

    /// Successor of `q` on a concrete letter.
    pub fn step_concrete(&self, q: usize, letter: &Assignment) -> Result<usize, AutomatonError> {
        let mut targets = BTreeSet::new();
        for e in self.edges_from(q) {
            if e.guard.holds_in(letter)? {
                targets.insert(e.to);
            }
        }
        match targets.len() {
            1 => Ok(*targets.first().unwrap()),
            _ => Err(AutomatonError::NoTransition { state: self.states[q].clone() }),
        }
    }

    /// δ(q, ŝ): the unique target whose guard is compatible with an abstract
    /// state. `compatible(θ)` must decide whether ⟦ŝ⟧ ∧ θ may be satisfiable.
    pub fn delta_abstract(
        &self,
        q: usize,
        mut compatible: impl FnMut(&Formula) -> Result<bool, SmtError>,
    ) -> Result<usize, AutomatonError> {
        let mut targets = BTreeSet::new();
        for e in self.edges_from(q) {
            if targets.contains(&e.to) {
                continue;
            }
            if compatible(&e.guard)? {
                targets.insert(e.to);
            }
        }
        match targets.len() {
            1 => Ok(*targets.first().unwrap()),
            n => Err(AutomatonError::Expressibility { state: self.states[q].clone(), count: n }),
        }
    }

    /// Checks that guards of edges with different targets are disjoint and
    /// that the guards leaving every state cover all valuations.
    pub fn check_deterministic_total(&self, solver: &Solver) -> Result<(), AutomatonError> {
        for q in 0..self.states.len() {
            let out: Vec<&Edge> = self.edges_from(q).collect();
            for (i, a) in out.iter().enumerate() {
                for b in &out[i + 1..] {
                    if a.to == b.to {
                        continue;
                    }
                    if let SatResult::Sat(m) = solver.check_sat(&and(vec![a.guard.clone(), b.guard.clone()]))? {
                        return Err(AutomatonError::NotDeterministic { state: self.states[q].clone(), witness: show_model(&m) });
                    }
                }
            }
            let gap = not(or(out.iter().map(|e| e.guard.clone()).collect()));
            if let SatResult::Sat(m) = solver.check_sat(&gap)? {
                return Err(AutomatonError::NotTotal { state: self.states[q].clone(), witness: show_model(&m) });
            }
        }
        Ok(())
    }

    /// Runs the automaton over a finite word of atom valuations (bit `i` of a
    /// letter gives atom `i`) and reports whether a bad state was reached.
    /// Only meaningful for automata built by [`ltl_to_safety_automaton`].
    pub fn rejects_prefix(&self, atoms: &[Formula], word: &[u32]) -> Result<bool, AutomatonError> {
        let mut q = self.init;
        for &letter in word {
            if self.is_bad(q) {
                return Ok(true);
            }
            q = self.step_letter(q, atoms, letter)?;
        }
        Ok(self.is_bad(q))
    }

    fn step_letter(&self, q: usize, atoms: &[Formula], letter: u32) -> Result<usize, AutomatonError> {
        let mut targets = BTreeSet::new();
        for e in self.edges_from(q) {
            if eval_over_atoms(&e.guard, atoms, letter)? {
                targets.insert(e.to);
            }
        }
        match targets.len() {
            1 => Ok(*targets.first().unwrap()),
            _ => Err(AutomatonError::NoTransition { state: self.states[q].clone() }),
        }
    }
}

fn show_model(m: &crate::smt::Model) -> String {
    m.values.iter().map(|(v, x)| format!("{v}={x}")).collect::<Vec<_>>().join(", ")
}

/// Evaluates a boolean combination of `atoms` under a letter.
pub fn eval_over_atoms(f: &Formula, atoms: &[Formula], letter: u32) -> Result<bool, EvalError> {
    if let Some(i) = atoms.iter().position(|a| a == f) {
        return Ok(letter >> i & 1 == 1);
    }
    match f {
        Formula::Bool(b) => Ok(*b),
        Formula::Not(a) => Ok(!eval_over_atoms(a, atoms, letter)?),
        Formula::And(xs) => {
            for x in xs {
                if !eval_over_atoms(x, atoms, letter)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        Formula::Or(xs) => {
            for x in xs {
                if eval_over_atoms(x, atoms, letter)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        Formula::Implies(a, b) => Ok(!eval_over_atoms(a, atoms, letter)? || eval_over_atoms(b, atoms, letter)?),
        Formula::Iff(a, b) => Ok(eval_over_atoms(a, atoms, letter)? == eval_over_atoms(b, atoms, letter)?),
        _ => Err(EvalError::Unbound(f.to_string())),
    }
}

/// Safety-fragment formula in negation normal form. Literals refer to atom indices.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Nnf {
    True,
    False,
    Lit(usize, bool),
    And(Vec<Nnf>),
    Or(Vec<Nnf>),
    Next(Box<Nnf>),
    Globally(Box<Nnf>),
    WeakUntil(Box<Nnf>, Box<Nnf>),
}

fn to_nnf(l: &Ltl, positive: bool, atoms: &[Formula]) -> Result<Nnf, AutomatonError> {
    let rec = |x: &Ltl, p: bool| to_nnf(x, p, atoms);
    Ok(match l {
        Ltl::Atom(Formula::Bool(b)) => {
            if *b == positive {
                Nnf::True
            } else {
                Nnf::False
            }
        }
        Ltl::Atom(f) => Nnf::Lit(atoms.iter().position(|a| a == f).expect("atom collected"), positive),
        Ltl::Not(a) => rec(a, !positive)?,
        Ltl::And(xs) | Ltl::Or(xs) => {
            let parts = xs.iter().map(|x| rec(x, positive)).collect::<Result<Vec<_>, _>>()?;
            if matches!(l, Ltl::And(_)) == positive {
                Nnf::And(parts)
            } else {
                Nnf::Or(parts)
            }
        }
        Ltl::Implies(a, b) => {
            let parts = vec![rec(a, !positive)?, rec(b, positive)?];
            if positive {
                Nnf::Or(parts)
            } else {
                Nnf::And(parts)
            }
        }
        Ltl::Next(a) => Nnf::Next(Box::new(rec(a, positive)?)),
        Ltl::Globally(a) => {
            if positive {
                Nnf::Globally(Box::new(rec(a, true)?))
            } else {
                return Err(AutomatonError::UnsupportedBody("F"));
            }
        }
        Ltl::Finally(a) => {
            if positive {
                return Err(AutomatonError::UnsupportedBody("F"));
            }
            Nnf::Globally(Box::new(rec(a, false)?))
        }
        Ltl::WeakUntil(a, b) => {
            if positive {
                Nnf::WeakUntil(Box::new(rec(a, true)?), Box::new(rec(b, true)?))
            } else {
                return Err(AutomatonError::UnsupportedBody("U"));
            }
        }
        Ltl::Until(a, b) => {
            if positive {
                return Err(AutomatonError::UnsupportedBody("U"));
            }
            // ¬(a U b) ≡ ¬b W (¬a ∧ ¬b)
            let nb = rec(b, false)?;
            Nnf::WeakUntil(Box::new(nb.clone()), Box::new(Nnf::And(vec![rec(a, false)?, nb])))
        }
    })
}

/// Disjunction of conjunctions of obligations for the next position.
type Dnf = BTreeSet<BTreeSet<Nnf>>;

fn dnf_true() -> Dnf {
    BTreeSet::from([BTreeSet::new()])
}

fn dnf_and(a: &Dnf, b: &Dnf) -> Dnf {
    let mut out = Dnf::new();
    for x in a {
        for y in b {
            out.insert(x.union(y).cloned().collect());
        }
    }
    out
}

/// Drops clauses that are supersets of other clauses.
fn minimise(d: Dnf) -> Dnf {
    let clauses: Vec<_> = d.into_iter().collect();
    clauses
        .iter()
        .filter(|c| !clauses.iter().any(|o| o != *c && o.is_subset(c)))
        .cloned()
        .collect()
}

/// Obligations for the next position after reading `letter` while `f` must hold now.
fn progress(f: &Nnf, letter: u32) -> Dnf {
    match f {
        Nnf::True => dnf_true(),
        Nnf::False => Dnf::new(),
        Nnf::Lit(i, p) => {
            if (letter >> i & 1 == 1) == *p {
                dnf_true()
            } else {
                Dnf::new()
            }
        }
        Nnf::And(xs) => xs.iter().fold(dnf_true(), |acc, x| dnf_and(&acc, &progress(x, letter))),
        Nnf::Or(xs) => xs.iter().flat_map(|x| progress(x, letter)).collect(),
        Nnf::Next(a) => BTreeSet::from([BTreeSet::from([(**a).clone()])]),
        Nnf::Globally(a) => dnf_and(&progress(a, letter), &BTreeSet::from([BTreeSet::from([f.clone()])])),
        Nnf::WeakUntil(a, b) => {
            let mut out = progress(b, letter);
            out.extend(dnf_and(&progress(a, letter), &BTreeSet::from([BTreeSet::from([f.clone()])])));
            out
        }
    }
}

fn progress_state(state: &Dnf, letter: u32) -> Dnf {
    let mut out = Dnf::new();
    for clause in state {
        let next = clause.iter().fold(dnf_true(), |acc, f| dnf_and(&acc, &progress(f, letter)));
        out.extend(next);
    }
    let out = minimise(out);
    if out.contains(&BTreeSet::new()) {
        dnf_true()
    } else {
        out
    }
}

fn letter_cube(atoms: &[Formula], letter: u32) -> Formula {
    and(atoms
        .iter()
        .enumerate()
        .map(|(i, a)| if letter >> i & 1 == 1 { a.clone() } else { not(a.clone()) })
        .collect())
}

/// Translates a body in the safety fragment into a deterministic, total
/// safety automaton over the body's atoms. The bad states form a single
/// absorbing sink.
pub fn ltl_to_safety_automaton(body: &Ltl) -> Result<SafetyAutomaton, AutomatonError> {
    let atoms: Vec<Formula> = body.atoms().into_iter().filter(|a| !matches!(a, Formula::Bool(_))).collect();
    if atoms.len() > MAX_ATOMS {
        return Err(AutomatonError::TooManyAtoms(atoms.len()));
    }
    let nnf = to_nnf(body, true, &atoms)?;
    let letters = 1u32 << atoms.len();
    let initial: Dnf = BTreeSet::from([BTreeSet::from([nnf])]);
    let mut ids: HashMap<Dnf, usize> = HashMap::new();
    let mut order: Vec<Dnf> = Vec::new();
    let mut transitions: Vec<BTreeMap<Option<usize>, Vec<u32>>> = Vec::new();
    ids.insert(initial.clone(), 0);
    order.push(initial);
    let mut i = 0;
    while i < order.len() {
        let state = order[i].clone();
        let mut out: BTreeMap<Option<usize>, Vec<u32>> = BTreeMap::new();
        for letter in 0..letters {
            let next = progress_state(&state, letter);
            let target = if next.is_empty() {
                None
            } else {
                let id = match ids.get(&next) {
                    Some(&id) => id,
                    None => {
                        if order.len() + 1 >= MAX_STATES {
                            return Err(AutomatonError::TooManyStates);
                        }
                        let id = order.len();
                        ids.insert(next.clone(), id);
                        order.push(next);
                        id
                    }
                };
                Some(id)
            };
            out.entry(target).or_default().push(letter);
        }
        transitions.push(out);
        i += 1;
    }
    // States all of whose continuations fail are merged into the bad sink, so
    // that the sink is entered exactly on bad prefixes.
    let mut live = vec![true; order.len()];
    loop {
        let mut changed = false;
        for (q, out) in transitions.iter().enumerate() {
            if live[q] && !out.keys().any(|t| t.is_some_and(|t| live[t])) {
                live[q] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut renumber = vec![None; order.len()];
    let mut next_id = 0;
    for (q, &l) in live.iter().enumerate() {
        if l {
            renumber[q] = Some(next_id);
            next_id += 1;
        }
    }
    let bad_id = next_id;
    let id_of = |t: Option<usize>| t.and_then(|t| renumber[t]).unwrap_or(bad_id);
    let mut states: Vec<String> = (0..bad_id).map(|i| format!("q{i}")).collect();
    states.push("qB".to_string());
    let mut edges = Vec::new();
    for (from, out) in transitions.iter().enumerate() {
        let Some(from) = renumber[from] else { continue };
        let mut merged: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
        for (target, ls) in out {
            merged.entry(id_of(*target)).or_default().extend(ls);
        }
        for (to, mut ls) in merged {
            ls.sort_unstable();
            let guard = if ls.len() as u32 == letters {
                Formula::Bool(true)
            } else if ls.len() == 1 {
                letter_cube(&atoms, ls[0])
            } else {
                or(ls.iter().map(|&l| letter_cube(&atoms, l)).collect())
            };
            edges.push(Edge { from, guard, to });
        }
    }
    edges.push(Edge { from: bad_id, guard: Formula::Bool(true), to: bad_id });
    let init = id_of(Some(0));
    Ok(SafetyAutomaton { states, init, bad: BTreeSet::from([bad_id]), edges })
}

/// Truth of an LTL formula at position 0 of the lasso word
/// `word[..loop_start] (word[loop_start..])^ω`, with atoms read from letter bits.
pub fn ltl_holds_on_lasso(f: &Ltl, atoms: &[Formula], word: &[u32], loop_start: usize) -> bool {
    assert!(loop_start < word.len(), "lasso loop must be non-empty");
    let n = word.len();
    let succ = |i: usize| if i + 1 < n { i + 1 } else { loop_start };
    fn table(f: &Ltl, atoms: &[Formula], word: &[u32], succ: &dyn Fn(usize) -> usize) -> Vec<bool> {
        let n = word.len();
        let fix = |init: bool, step: &dyn Fn(usize, &[bool]) -> bool| {
            let mut v = vec![init; n];
            loop {
                let next: Vec<bool> = (0..n).map(|i| step(i, &v)).collect();
                if next == v {
                    return v;
                }
                v = next;
            }
        };
        match f {
            Ltl::Atom(Formula::Bool(b)) => vec![*b; n],
            Ltl::Atom(a) => {
                let i = atoms.iter().position(|x| x == a).expect("atom collected");
                word.iter().map(|l| l >> i & 1 == 1).collect()
            }
            Ltl::Not(a) => table(a, atoms, word, succ).into_iter().map(|b| !b).collect(),
            Ltl::And(xs) => {
                let ts: Vec<_> = xs.iter().map(|x| table(x, atoms, word, succ)).collect();
                (0..n).map(|i| ts.iter().all(|t| t[i])).collect()
            }
            Ltl::Or(xs) => {
                let ts: Vec<_> = xs.iter().map(|x| table(x, atoms, word, succ)).collect();
                (0..n).map(|i| ts.iter().any(|t| t[i])).collect()
            }
            Ltl::Implies(a, b) => {
                let (ta, tb) = (table(a, atoms, word, succ), table(b, atoms, word, succ));
                (0..n).map(|i| !ta[i] || tb[i]).collect()
            }
            Ltl::Next(a) => {
                let t = table(a, atoms, word, succ);
                (0..n).map(|i| t[succ(i)]).collect()
            }
            Ltl::Globally(a) => {
                let t = table(a, atoms, word, succ);
                fix(true, &|i, v| t[i] && v[succ(i)])
            }
            Ltl::Finally(a) => {
                let t = table(a, atoms, word, succ);
                fix(false, &|i, v| t[i] || v[succ(i)])
            }
            Ltl::Until(a, b) | Ltl::WeakUntil(a, b) => {
                let (ta, tb) = (table(a, atoms, word, succ), table(b, atoms, word, succ));
                let weak = matches!(f, Ltl::WeakUntil(..));
                fix(weak, &|i, v| tb[i] || (ta[i] && v[succ(i)]))
            }
        }
    }
    table(f, atoms, word, &succ)[0]
}

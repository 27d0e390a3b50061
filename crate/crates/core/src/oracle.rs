//! Explicit-state ground truth for finite-domain instances: enumerate a
//! system over bounded domains, project it onto its observation points and
//! decide a ∀*∃* safety property exactly.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use thiserror::Error;

use crate::automaton::{AutomatonError, SafetyAutomaton};
use crate::frontend::{HyperProperty, QuantKind, Sts};
use crate::logic::{Assignment, EvalError, Formula, Sort, Value, Var};

pub const MAX_STATES: usize = 100_000;
const MAX_PAIRS: usize = 200_000_000;
const MAX_PRODUCT_NODES: usize = 2_000_000;

/// Inclusive integer range per variable name.
pub type DomainBounds = BTreeMap<String, (i64, i64)>;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("no domain bound for integer variable {0}")]
    MissingBound(String),
    #[error("bounded state space has {0} states; the limit is {MAX_STATES}")]
    TooManyStates(usize),
    #[error("transition enumeration needs {0} evaluations")]
    TooManyPairs(usize),
    #[error("product exceeds {MAX_PRODUCT_NODES} nodes")]
    ProductTooLarge,
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
}

/// A finite system (S, S0, ρ) whose states are valuations of `vars`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExplicitSystem {
    pub vars: Vec<Var>,
    pub states: Vec<Vec<Value>>,
    pub init: Vec<usize>,
    pub succ: Vec<Vec<usize>>,
}

impl ExplicitSystem {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }

    /// Valuation of state `s` over the plain variables.
    pub fn assignment(&self, s: usize) -> Assignment {
        self.vars.iter().cloned().zip(self.states[s].iter().copied()).collect()
    }

    /// Valuation of state `s` over the variables of copy `copy` (1-based).
    pub fn indexed_assignment(&self, s: usize, copy: u32) -> Assignment {
        self.vars.iter().map(|v| v.indexed(copy)).zip(self.states[s].iter().copied()).collect()
    }

    /// States from which an infinite path exists.
    pub fn live(&self) -> Vec<bool> {
        let n = self.len();
        let mut pred: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut out_deg = vec![0usize; n];
        for (s, ts) in self.succ.iter().enumerate() {
            out_deg[s] = ts.len();
            for &t in ts {
                pred[t].push(s);
            }
        }
        let mut live = vec![true; n];
        let mut queue: VecDeque<usize> = (0..n).filter(|&s| out_deg[s] == 0).collect();
        while let Some(s) = queue.pop_front() {
            if !live[s] {
                continue;
            }
            live[s] = false;
            for &p in &pred[s] {
                out_deg[p] -= 1;
                if out_deg[p] == 0 && live[p] {
                    queue.push_back(p);
                }
            }
        }
        live
    }

    /// States reachable from the initial ones.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack: Vec<usize> = self.init.clone();
        for &s in &stack {
            seen[s] = true;
        }
        while let Some(s) = stack.pop() {
            for &t in &self.succ[s] {
                if !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
        seen
    }

    /// Keeps only states with an infinite future. Traces are unchanged.
    pub fn prune(&self) -> (ExplicitSystem, Vec<usize>) {
        let live = self.live();
        self.restrict(&live)
    }

    fn restrict(&self, keep: &[bool]) -> (ExplicitSystem, Vec<usize>) {
        let mut new_id = vec![usize::MAX; self.len()];
        let mut origin = Vec::new();
        for s in 0..self.len() {
            if keep[s] {
                new_id[s] = origin.len();
                origin.push(s);
            }
        }
        let sys = ExplicitSystem {
            vars: self.vars.clone(),
            states: origin.iter().map(|&s| self.states[s].clone()).collect(),
            init: self.init.iter().filter(|&&s| keep[s]).map(|&s| new_id[s]).collect(),
            succ: origin
                .iter()
                .map(|&s| self.succ[s].iter().filter(|&&t| keep[t]).map(|&t| new_id[t]).collect())
                .collect(),
        };
        (sys, origin)
    }
}

fn domain_of(v: &Var, bounds: &DomainBounds) -> Result<Vec<Value>, OracleError> {
    match v.sort {
        Sort::Bool => Ok(vec![Value::Bool(false), Value::Bool(true)]),
        Sort::Int => {
            let &(lo, hi) = bounds.get(&*v.base).ok_or_else(|| OracleError::MissingBound(v.base.to_string()))?;
            Ok((lo..=hi).map(Value::Int).collect())
        }
    }
}

/// Enumerates the system over the bounded grid. Transitions leaving the
/// grid are dropped.
pub fn explicitize(sys: &Sts, bounds: &DomainBounds) -> Result<ExplicitSystem, OracleError> {
    let domains: Vec<Vec<Value>> = sys.vars.iter().map(|v| domain_of(v, bounds)).collect::<Result<_, _>>()?;
    let total = domains.iter().try_fold(1usize, |acc, d| acc.checked_mul(d.len())).unwrap_or(usize::MAX);
    if total > MAX_STATES {
        return Err(OracleError::TooManyStates(total));
    }
    if total.saturating_mul(total) > MAX_PAIRS {
        return Err(OracleError::TooManyPairs(total.saturating_mul(total)));
    }
    let mut states: Vec<Vec<Value>> = vec![Vec::new()];
    for d in &domains {
        states = states
            .into_iter()
            .flat_map(|prefix| {
                d.iter().map(move |x| {
                    let mut s = prefix.clone();
                    s.push(*x);
                    s
                })
            })
            .collect();
    }
    let position: HashMap<&str, usize> = sys.vars.iter().enumerate().map(|(i, v)| (&*v.base, i)).collect();
    let lookup = |cur: &[Value], next: &[Value], v: &Var| -> Option<Value> {
        let i = *position.get(&*v.base)?;
        Some(if v.primed { next[i] } else { cur[i] })
    };
    let mut init = Vec::new();
    for (i, s) in states.iter().enumerate() {
        if sys.init.eval(&|v: &Var| lookup(s, s, v))?.as_bool() == Some(true) {
            init.push(i);
        }
    }
    let mut succ = vec![Vec::new(); states.len()];
    for (i, s) in states.iter().enumerate() {
        for (j, t) in states.iter().enumerate() {
            if sys.step.eval(&|v: &Var| lookup(s, t, v))?.as_bool() == Some(true) {
                succ[i].push(j);
            }
        }
    }
    Ok(ExplicitSystem { vars: sys.vars.clone(), states, init, succ })
}

/// T_ξ together with the original id of each of its states.
#[derive(Clone, Debug)]
pub struct Projected {
    pub system: ExplicitSystem,
    pub origin: Vec<usize>,
}

/// The projection onto observation points: states are the observed states;
/// initial states are observed states reachable from an initial state
/// without passing another observed state; s → t when a path of length at
/// least one leads from s to t through unobserved states only.
pub fn project(sys: &ExplicitSystem, observed: &[bool]) -> Projected {
    let n = sys.len();
    let mut new_id = vec![usize::MAX; n];
    let mut origin = Vec::new();
    for s in 0..n {
        if observed[s] {
            new_id[s] = origin.len();
            origin.push(s);
        }
    }
    // Observed states reachable from `start` through unobserved states.
    let first_observed = |start: &[usize]| -> Vec<usize> {
        let mut seen = vec![false; n];
        let mut hits = Vec::new();
        let mut stack = Vec::new();
        for &s in start {
            if !seen[s] {
                seen[s] = true;
                stack.push(s);
            }
        }
        while let Some(s) = stack.pop() {
            if observed[s] {
                hits.push(new_id[s]);
                continue;
            }
            for &t in &sys.succ[s] {
                if !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
        hits.sort_unstable();
        hits
    };
    let init = first_observed(&sys.init);
    let succ = origin.iter().map(|&s| first_observed(&sys.succ[s])).collect();
    Projected {
        system: ExplicitSystem {
            vars: sys.vars.clone(),
            states: origin.iter().map(|&s| sys.states[s].clone()).collect(),
            init,
            succ,
        },
        origin,
    }
}

/// Evaluates ξ on every state.
pub fn observed_states(sys: &ExplicitSystem, xi: &Formula) -> Result<Vec<bool>, OracleError> {
    (0..sys.len())
        .map(|s| Ok(xi.holds_in(&sys.assignment(s))?))
        .collect()
}

/// T_ξ for an observation formula.
pub fn project_system(sys: &ExplicitSystem, xi: &Formula) -> Result<Projected, OracleError> {
    Ok(project(sys, &observed_states(sys, xi)?))
}

/// True when no reachable cycle avoids the observed states, so every trace
/// of the system has infinitely many observation points.
pub fn observations_recur(sys: &ExplicitSystem, observed: &[bool]) -> bool {
    let reach = sys.reachable();
    let keep: Vec<bool> = (0..sys.len()).map(|s| reach[s] && !observed[s]).collect();
    let (sub, _) = sys.restrict(&keep);
    sub.live().iter().all(|l| !l)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleVerdict {
    pub holds: bool,
    /// Whether every existential copy observes infinitely often on every
    /// trace, the assumption under which the game is sound.
    pub existential_observations_recur: bool,
    pub product_nodes: usize,
}

struct Copy {
    sys: ExplicitSystem,
    letters: Vec<Assignment>,
}

fn tuple_successors(copies: &[&Copy], code: usize) -> Vec<usize> {
    let mut digits = Vec::with_capacity(copies.len());
    let mut rest = code;
    for c in copies {
        digits.push(rest % c.sys.len());
        rest /= c.sys.len();
    }
    let mut out = vec![0usize];
    let mut radix = 1usize;
    for (c, &d) in copies.iter().zip(&digits) {
        out = out.iter().flat_map(|&acc| c.sys.succ[d].iter().map(move |&t| acc + t * radix)).collect();
        radix *= c.sys.len();
    }
    out
}

fn tuple_initial(copies: &[&Copy]) -> Vec<usize> {
    let mut out = vec![0usize];
    let mut radix = 1usize;
    for c in copies {
        out = out.iter().flat_map(|&acc| c.sys.init.iter().map(move |&t| acc + t * radix)).collect();
        radix *= c.sys.len();
    }
    out
}

fn tuple_letter(copies: &[&Copy], code: usize, into: &mut Assignment) {
    let mut rest = code;
    for c in copies {
        let d = rest % c.sys.len();
        rest /= c.sys.len();
        into.extend(c.letters[d].iter().map(|(v, x)| (v.clone(), *x)));
    }
}

/// Decides ∀π_1..π_l ∃π_{l+1}..π_k. body over the given projected systems.
///
/// The refuter picks universal traces step by step; the checker tracks the
/// set of (existential tuple, automaton state) pairs that have not yet hit a
/// bad state. The property fails exactly when some universal prefix empties
/// this set, because existential traces may depend on the whole universal
/// traces and König's lemma reduces "every existential choice is rejected"
/// to a finite prefix.
pub fn explicit_check(projected: &[ExplicitSystem], l: usize, automaton: &SafetyAutomaton) -> Result<(bool, usize), OracleError> {
    let copies: Vec<Copy> = projected
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (sys, _) = p.prune();
            let letters = (0..sys.len()).map(|s| sys.indexed_assignment(s, i as u32 + 1)).collect();
            Copy { sys, letters }
        })
        .collect();
    let univ: Vec<&Copy> = copies[..l].iter().collect();
    let ex: Vec<&Copy> = copies[l..].iter().collect();
    if univ.iter().any(|c| c.sys.init.is_empty()) {
        return Ok((true, 0));
    }
    let mut delta_cache: HashMap<(usize, usize, usize), usize> = HashMap::new();
    let mut step = |q: usize, u: usize, e: usize| -> Result<usize, OracleError> {
        if let Some(&t) = delta_cache.get(&(q, u, e)) {
            return Ok(t);
        }
        let mut letter = Assignment::new();
        tuple_letter(&univ, u, &mut letter);
        tuple_letter(&ex, e, &mut letter);
        let t = automaton.step_concrete(q, &letter)?;
        delta_cache.insert((q, u, e), t);
        Ok(t)
    };
    type Node = (usize, Vec<(usize, usize)>);
    let mut seen: HashSet<Node> = HashSet::new();
    let mut queue: VecDeque<Node> = VecDeque::new();
    let ex_init = tuple_initial(&ex);
    for u in tuple_initial(&univ) {
        let mut set = Vec::new();
        for &e in &ex_init {
            let q = step(automaton.init, u, e)?;
            if !automaton.is_bad(q) {
                set.push((e, q));
            }
        }
        set.sort_unstable();
        set.dedup();
        if set.is_empty() {
            return Ok((false, seen.len()));
        }
        let node = (u, set);
        if seen.insert(node.clone()) {
            queue.push_back(node);
        }
    }
    while let Some((u, set)) = queue.pop_front() {
        for u2 in tuple_successors(&univ, u) {
            let mut next = Vec::new();
            for &(e, q) in &set {
                for e2 in tuple_successors(&ex, e) {
                    let q2 = step(q, u2, e2)?;
                    if !automaton.is_bad(q2) {
                        next.push((e2, q2));
                    }
                }
            }
            next.sort_unstable();
            next.dedup();
            if next.is_empty() {
                return Ok((false, seen.len()));
            }
            let node = (u2, next);
            if !seen.contains(&node) {
                if seen.len() >= MAX_PRODUCT_NODES {
                    return Err(OracleError::ProductTooLarge);
                }
                seen.insert(node.clone());
                queue.push_back(node);
            }
        }
    }
    Ok((true, seen.len()))
}

/// Explicit model checking of a property over bounded domains.
pub fn check_property(
    systems: &[Sts],
    property: &HyperProperty,
    automaton: &SafetyAutomaton,
    bounds: &DomainBounds,
) -> Result<OracleVerdict, OracleError> {
    let mut explicit: HashMap<usize, ExplicitSystem> = HashMap::new();
    let mut projected = Vec::new();
    let mut recur = true;
    for q in &property.quantifiers {
        if !explicit.contains_key(&q.system) {
            explicit.insert(q.system, explicitize(&systems[q.system], bounds)?);
        }
        let sys = &explicit[&q.system];
        let observed = observed_states(sys, &q.observation)?;
        if q.kind == QuantKind::Exists && !observations_recur(sys, &observed) {
            recur = false;
        }
        projected.push(project(sys, &observed).system);
    }
    let (holds, product_nodes) = explicit_check(&projected, property.l(), automaton)?;
    Ok(OracleVerdict { holds, existential_observations_recur: recur, product_nodes })
}

/// All words of length `n` that start some infinite path of `sys`.
pub fn prefixes(sys: &ExplicitSystem, n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let live = sys.live();
    let mut words: Vec<Vec<usize>> = sys.init.iter().filter(|&&s| live[s]).map(|&s| vec![s]).collect();
    for _ in 1..n {
        words = words
            .into_iter()
            .flat_map(|w| {
                let last = *w.last().unwrap();
                sys.succ[last].iter().filter(|&&t| live[t]).map(move |&t| {
                    let mut w2 = w.clone();
                    w2.push(t);
                    w2
                })
            })
            .collect();
    }
    words.sort();
    words.dedup();
    words
}

//! Predicate abstraction of the k-fold self-composition.
//!
//! An abstract state is a cube over the predicate set P: bit i says whether
//! p_i holds. Abstract moves are computed with SMT queries over the indexed
//! and primed copies of the systems' transition formulas.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automaton::{AutomatonError, SafetyAutomaton};
use crate::frontend::{HyperProperty, Predicate, PredicateSet, QuantKind, Sts};
use crate::logic::{
    and, implies, index_formula, not, or, prime_formula, same, Assignment, CmpOp, EvalError, Formula, LogicError, Value,
    Var,
};
use crate::smt::{SatResult, SmtError, Solver, ValidResult};

/// Largest supported predicate set.
pub const MAX_PREDICATES: usize = 128;

/// Truth values of the predicates, one bit per predicate.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AbstractState {
    bits: u128,
    len: u8,
}

impl AbstractState {
    pub fn new(len: usize) -> Self {
        assert!(len <= MAX_PREDICATES);
        AbstractState { bits: 0, len: len as u8 }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut s = AbstractState::new(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            s.set(i, b);
        }
        s
    }

    /// Parses a string of `0`/`1` characters.
    pub fn parse(text: &str) -> Option<Self> {
        let bools: Option<Vec<bool>> = text
            .chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect();
        bools.filter(|b| b.len() <= MAX_PREDICATES).map(|b| AbstractState::from_bools(&b))
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len());
        self.bits >> i & 1 == 1
    }

    pub fn set(&mut self, i: usize, b: bool) {
        debug_assert!(i < self.len());
        if b {
            self.bits |= 1 << i;
        } else {
            self.bits &= !(1 << i);
        }
    }
}

impl fmt::Display for AbstractState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len() {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for AbstractState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ŝ{self}")
    }
}

/// A set of copies (1-based in display, 0-based bits). Used for schedulings
/// M, the moved vector b and observation vectors.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Copies(pub u32);

/// A scheduling: a non-empty set of copies that move together.
pub type Scheduling = Copies;

impl Copies {
    pub fn all(k: usize) -> Copies {
        Copies(if k >= 32 { u32::MAX } else { (1u32 << k) - 1 })
    }

    pub fn single(i: usize) -> Copies {
        Copies(1 << i)
    }

    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn with(self, i: usize) -> Copies {
        Copies(self.0 | 1 << i)
    }

    pub fn union(self, o: Copies) -> Copies {
        Copies(self.0 | o.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..32).filter(move |&i| self.contains(i))
    }

    /// Every non-empty subset of {0..k}, in increasing bitmask order.
    pub fn nonempty_subsets(k: usize) -> impl Iterator<Item = Copies> {
        (1..=Copies::all(k).0).map(Copies)
    }

    /// 1-based members, for reports.
    pub fn members(self) -> Vec<usize> {
        self.iter().map(|i| i + 1).collect()
    }
}

impl fmt::Display for Copies {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.members().iter().map(usize::to_string).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

impl fmt::Debug for Copies {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// A restriction (ŝ, M, A): after scheduling M from ŝ, the existential copies
/// promise to reach one of the cubes in A.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Restriction {
    pub state: AbstractState,
    pub sched: Scheduling,
    pub targets: BTreeSet<AbstractState>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AbstractionError {
    #[error("{formula} is not expressible by the predicates on abstract state {state}: it holds at {holds} and fails at {fails}")]
    Expressibility { formula: String, state: String, holds: String, fails: String },
    #[error("{0} predicates given; at most {MAX_PREDICATES} are supported")]
    TooManyPredicates(usize),
    #[error("abstract game exceeds {0} nodes")]
    Blowup(usize),
    #[error("copy count {0} is unsupported")]
    BadShape(usize),
    #[error(transparent)]
    Smt(#[from] SmtError),
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Everything fixed for one verification problem.
#[derive(Clone, Debug)]
pub struct CompositionContext {
    pub k: usize,
    pub l: usize,
    /// System of each copy.
    pub systems: Vec<Sts>,
    /// Observation formula of each copy, unindexed.
    pub observations: Vec<Formula>,
    pub predicates: Vec<Predicate>,
    pub automaton: SafetyAutomaton,
    pub trace_names: Vec<String>,
    init_idx: Vec<Formula>,
    step_idx: Vec<Formula>,
    frame_idx: Vec<Formula>,
    obs_idx: Vec<Formula>,
    primed_preds: Vec<Formula>,
    lookup: HashMap<Formula, usize>,
    /// (copy, location, predicate index) for predicates of the form pc@i = c.
    pc_preds: Vec<(usize, i64, usize)>,
}

fn pc_locations(sys: &Sts) -> BTreeSet<i64> {
    let mut locs = BTreeSet::new();
    let Some(pc) = sys.var("pc") else { return locs };
    let mut scan = |f: &Formula| {
        f.visit(&mut |g| {
            if let Formula::Cmp(CmpOp::Eq, a, b) = g {
                for (x, y) in [(a, b), (b, a)] {
                    if let (Formula::Var(v), Formula::Int(c)) = (&**x, &**y) {
                        if v.plain() == *pc {
                            locs.insert(*c);
                        }
                    }
                }
            }
        })
    };
    scan(&sys.init);
    scan(&sys.step);
    locs
}

impl CompositionContext {
    /// Builds the context. With `auto_pc`, one predicate `pc@i = c` is added
    /// for every copy i whose system has an integer `pc` and every location c
    /// mentioned in its init or step formula.
    pub fn new(
        systems: &[Sts],
        property: &HyperProperty,
        predicates: &PredicateSet,
        automaton: SafetyAutomaton,
        auto_pc: bool,
    ) -> Result<Self, AbstractionError> {
        let k = property.k();
        if k == 0 || k > 16 {
            return Err(AbstractionError::BadShape(k));
        }
        let copy_systems: Vec<Sts> = property.quantifiers.iter().map(|q| systems[q.system].clone()).collect();
        let trace_names = property.trace_names();
        let mut preds: Vec<Predicate> = Vec::new();
        if auto_pc {
            for (i, sys) in copy_systems.iter().enumerate() {
                let Some(pc) = sys.var("pc") else { continue };
                if pc.sort != crate::logic::Sort::Int {
                    continue;
                }
                for c in pc_locations(sys) {
                    preds.push(Predicate {
                        name: format!("pc@{}={}", trace_names[i], c),
                        formula: crate::logic::eq(Formula::Var(pc.indexed(i as u32 + 1)), Formula::Int(c)),
                    });
                }
            }
        }
        for p in &predicates.preds {
            let key = p.formula.canonical();
            if !preds.iter().any(|q| q.formula.canonical() == key) {
                preds.push(p.clone());
            }
        }
        if preds.len() > MAX_PREDICATES {
            return Err(AbstractionError::TooManyPredicates(preds.len()));
        }
        let mut init_idx = Vec::new();
        let mut step_idx = Vec::new();
        let mut frame_idx = Vec::new();
        let mut obs_idx = Vec::new();
        for (i, (sys, q)) in copy_systems.iter().zip(&property.quantifiers).enumerate() {
            let c = i as u32 + 1;
            init_idx.push(index_formula(&sys.init, c)?);
            step_idx.push(index_formula(&sys.step, c)?);
            frame_idx.push(and(sys.vars.iter().map(|v| same(&v.indexed(c).primed(), &v.indexed(c))).collect()));
            obs_idx.push(index_formula(&q.observation, c)?);
        }
        let primed_preds = preds.iter().map(|p| prime_formula(&p.formula)).collect::<Result<Vec<_>, _>>()?;
        let mut lookup = HashMap::new();
        let mut pc_preds = Vec::new();
        for (j, p) in preds.iter().enumerate() {
            lookup.entry(p.formula.canonical()).or_insert(j);
            if let Formula::Cmp(CmpOp::Eq, a, b) = &p.formula {
                for (x, y) in [(a, b), (b, a)] {
                    if let (Formula::Var(v), Formula::Int(loc)) = (&**x, &**y) {
                        if &*v.base == "pc" && !v.primed {
                            if let Some(c) = v.copy {
                                pc_preds.push((c as usize - 1, *loc, j));
                            }
                        }
                    }
                }
            }
        }
        Ok(CompositionContext {
            k,
            l: property.l(),
            systems: copy_systems,
            observations: property.quantifiers.iter().map(|q| q.observation.clone()).collect(),
            predicates: preds,
            automaton,
            trace_names,
            init_idx,
            step_idx,
            frame_idx,
            obs_idx,
            primed_preds,
            lookup,
            pc_preds,
        })
    }

    pub fn n(&self) -> usize {
        self.predicates.len()
    }

    pub fn is_universal(&self, i: usize) -> bool {
        i < self.l
    }

    pub fn quant_kind(&self, i: usize) -> QuantKind {
        if self.is_universal(i) {
            QuantKind::Forall
        } else {
            QuantKind::Exists
        }
    }

    /// ⟦ŝ⟧ = ⋀ ite(ŝ[i], p_i, ¬p_i).
    pub fn gamma(&self, s: &AbstractState) -> Formula {
        and(self.predicates.iter().enumerate().map(|(i, p)| literal(&p.formula, s.get(i))).collect())
    }

    /// ⟦ŝ⟧′ over primed variables.
    pub fn gamma_primed(&self, s: &AbstractState) -> Formula {
        and(self.primed_preds.iter().enumerate().map(|(i, p)| literal(p, s.get(i))).collect())
    }

    /// step_M = ⋀_i ite(i ∈ M, step_⟨πi⟩, frame_i).
    pub fn step_formula(&self, m: Scheduling) -> Formula {
        and((0..self.k).map(|i| self.copy_move(m, i)).collect())
    }

    fn copy_move(&self, m: Scheduling, i: usize) -> Formula {
        if m.contains(i) {
            self.step_idx[i].clone()
        } else {
            self.frame_idx[i].clone()
        }
    }

    pub fn init_formula(&self, i: usize) -> &Formula {
        &self.init_idx[i]
    }

    pub fn step_of(&self, i: usize) -> &Formula {
        &self.step_idx[i]
    }

    pub fn observation_of(&self, i: usize) -> &Formula {
        &self.obs_idx[i]
    }

    /// Indexed variables of copy i.
    pub fn copy_vars(&self, i: usize) -> Vec<Var> {
        self.systems[i].vars.iter().map(|v| v.indexed(i as u32 + 1)).collect()
    }

    /// The restriction formula validRes(ŝ, M, A):
    /// ∀X ∀X′_univ. (⟦ŝ⟧ ∧ moves_univ) ⇒ ∃X′_ex. (moves_ex ∧ ⋁_{ŝ′∈A} ⟦ŝ′⟧′).
    pub fn build_valid_res(&self, s: &AbstractState, m: Scheduling, targets: &BTreeSet<AbstractState>) -> Formula {
        let mut outer: Vec<Var> = Vec::new();
        for i in 0..self.k {
            outer.extend(self.copy_vars(i));
        }
        for i in 0..self.l {
            outer.extend(self.copy_vars(i).iter().map(Var::primed));
        }
        let inner: Vec<Var> = (self.l..self.k).flat_map(|i| self.copy_vars(i)).map(|v| v.primed()).collect();
        let mut premise = vec![self.gamma(s)];
        premise.extend((0..self.l).map(|i| self.copy_move(m, i)));
        let mut concl: Vec<Formula> = (self.l..self.k).map(|i| self.copy_move(m, i)).collect();
        concl.push(or(targets.iter().map(|t| self.gamma_primed(t)).collect()));
        let body = if inner.is_empty() { and(concl) } else { Formula::Exists(inner, Box::new(and(concl))) };
        Formula::Forall(outer, Box::new(implies(and(premise), body)))
    }

    /// Decides θ on ŝ syntactically when θ is a boolean combination of
    /// predicates (up to operand order).
    pub fn decide_syntactically(&self, s: &AbstractState, theta: &Formula) -> Option<bool> {
        let replaced = theta.map(&mut |node| {
            if matches!(node, Formula::Bool(_)) {
                return node;
            }
            match self.lookup.get(&node.canonical()) {
                Some(&j) => Formula::Bool(s.get(j)),
                None => node,
            }
        });
        match replaced.simplify() {
            Formula::Bool(b) => Some(b),
            _ => None,
        }
    }

    /// Concrete abstraction α(μ) of a valuation of all copies.
    pub fn abstract_of(&self, mu: &Assignment) -> Result<AbstractState, EvalError> {
        let mut s = AbstractState::new(self.n());
        for (j, p) in self.predicates.iter().enumerate() {
            s.set(j, p.formula.holds_in(mu)?);
        }
        Ok(s)
    }

    /// Location of copy i in ŝ, if pc predicates pin it down.
    pub fn pc_of(&self, s: &AbstractState, i: usize) -> Option<i64> {
        self.pc_preds.iter().find(|&&(c, _, j)| c == i && s.get(j)).map(|&(_, loc, _)| loc)
    }

    /// "(2,2)" when every copy has a known location, otherwise None.
    pub fn pc_label(&self, s: &AbstractState) -> Option<String> {
        let locs: Option<Vec<String>> = (0..self.k).map(|i| self.pc_of(s, i).map(|l| l.to_string())).collect();
        locs.map(|l| format!("({})", l.join(",")))
    }

    /// Names of the predicates true in ŝ, excluding pc predicates.
    pub fn true_predicates(&self, s: &AbstractState) -> Vec<String> {
        self.predicates
            .iter()
            .enumerate()
            .filter(|(j, _)| s.get(*j) && !self.pc_preds.iter().any(|&(_, _, p)| p == *j))
            .map(|(_, p)| p.name.clone())
            .collect()
    }

    /// Human-readable description of a cube.
    pub fn describe(&self, s: &AbstractState) -> String {
        let preds = self.true_predicates(s).join(" ");
        match self.pc_label(s) {
            Some(pc) if preds.is_empty() => pc,
            Some(pc) => format!("{pc} {preds}"),
            None => preds,
        }
    }
}

fn literal(p: &Formula, positive: bool) -> Formula {
    if positive {
        p.clone()
    } else {
        not(p.clone())
    }
}

fn show_model(m: &crate::smt::Model) -> String {
    m.values.iter().map(|(v, x)| format!("{v}={x}")).collect::<Vec<_>>().join(" ")
}

/// Counters for abstraction work.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct AbstractionStats {
    pub successor_sets: u64,
    pub valid_res_queries: u64,
    pub enumeration_fallbacks: u64,
}

/// Lazily computed abstract transition structure, memoised per query.
pub struct Abstraction<'a> {
    pub ctx: &'a CompositionContext,
    pub solver: &'a Solver,
    succ: Mutex<HashMap<(AbstractState, Scheduling), Arc<Vec<AbstractState>>>>,
    obs: Mutex<HashMap<AbstractState, Copies>>,
    delta: Mutex<HashMap<(usize, AbstractState), usize>>,
    valid: Mutex<HashMap<Restriction, bool>>,
    stats: Mutex<AbstractionStats>,
    warnings: Mutex<Vec<String>>,
}

impl<'a> Abstraction<'a> {
    pub fn new(ctx: &'a CompositionContext, solver: &'a Solver) -> Self {
        Abstraction {
            ctx,
            solver,
            succ: Mutex::default(),
            obs: Mutex::default(),
            delta: Mutex::default(),
            valid: Mutex::default(),
            stats: Mutex::default(),
            warnings: Mutex::default(),
        }
    }

    pub fn stats(&self) -> AbstractionStats {
        *self.stats.lock().unwrap()
    }

    pub fn warnings(&self) -> Vec<String> {
        self.warnings.lock().unwrap().clone()
    }

    fn warn(&self, w: String) {
        let mut ws = self.warnings.lock().unwrap();
        if !ws.contains(&w) {
            ws.push(w);
        }
    }

    /// Enumerates every cube ŝ′ such that `base ∧ ⟦ŝ′⟧` (over `preds`) is
    /// satisfiable. Models are projected onto the predicates and blocked;
    /// when a model cannot be trusted the search falls back to splitting on
    /// one predicate at a time.
    fn all_sat(&self, base: &Formula, preds: &[Formula]) -> Result<Vec<AbstractState>, AbstractionError> {
        let mut found: Vec<AbstractState> = Vec::new();
        let mut blocks: Vec<Formula> = Vec::new();
        loop {
            let mut conj = vec![base.clone()];
            conj.extend(blocks.iter().cloned());
            match self.solver.check_sat(&and(conj))? {
                SatResult::Unsat => break,
                SatResult::Unknown(_) => return self.split_sat(base, preds),
                SatResult::Sat(model) => {
                    let env = |v: &Var| Some(model.value(v));
                    if base.eval(&env).ok() != Some(Value::Bool(true)) {
                        return self.split_sat(base, preds);
                    }
                    let mut s = AbstractState::new(preds.len());
                    for (j, p) in preds.iter().enumerate() {
                        match p.eval(&env)? {
                            Value::Bool(b) => s.set(j, b),
                            Value::Int(_) => return Err(EvalError::IllSorted.into()),
                        }
                    }
                    if found.contains(&s) {
                        return self.split_sat(base, preds);
                    }
                    blocks.push(not(and(preds.iter().enumerate().map(|(j, p)| literal(p, s.get(j))).collect())));
                    found.push(s);
                }
            }
        }
        found.sort();
        Ok(found)
    }

    fn split_sat(&self, base: &Formula, preds: &[Formula]) -> Result<Vec<AbstractState>, AbstractionError> {
        self.stats.lock().unwrap().enumeration_fallbacks += 1;
        let mut out = Vec::new();
        let mut stack = vec![(0usize, AbstractState::new(preds.len()))];
        while let Some((depth, partial)) = stack.pop() {
            let mut conj = vec![base.clone()];
            conj.extend((0..depth).map(|j| literal(&preds[j], partial.get(j))));
            if !self.solver.maybe_sat(&and(conj))? {
                continue;
            }
            if depth == preds.len() {
                out.push(partial);
                continue;
            }
            for b in [true, false] {
                let mut next = partial;
                next.set(depth, b);
                stack.push((depth + 1, next));
            }
        }
        out.sort();
        Ok(out)
    }

    /// Abstract states containing an initial state of every copy. Each one
    /// is checked for init expressibility; a failure is reported as a
    /// warning because initial cubes only over-approximate.
    pub fn initial_abstract_states(&self) -> Result<Vec<AbstractState>, AbstractionError> {
        let ctx = self.ctx;
        let init = and((0..ctx.k).map(|i| ctx.init_formula(i).clone()).collect());
        let preds: Vec<Formula> = ctx.predicates.iter().map(|p| p.formula.clone()).collect();
        let states = self.all_sat(&init, &preds)?;
        let mut loose = Vec::new();
        for s in &states {
            if ctx.decide_syntactically(s, &init) == Some(true) {
                continue;
            }
            if self.solver.check_sat(&and(vec![ctx.gamma(s), not(init.clone())]))?.is_sat() {
                loose.push(s);
            }
        }
        if let Some(first) = loose.first() {
            self.warn(format!(
                "init is not expressible on {} of {} initial abstract states (first: {})",
                loose.len(),
                states.len(),
                ctx.describe(first)
            ));
        }
        Ok(states)
    }

    /// Abstract M-successors of ŝ.
    pub fn m_successors(&self, s: &AbstractState, m: Scheduling) -> Result<Arc<Vec<AbstractState>>, AbstractionError> {
        if let Some(hit) = self.succ.lock().unwrap().get(&(*s, m)) {
            return Ok(hit.clone());
        }
        let ctx = self.ctx;
        let base = and(vec![ctx.gamma(s), ctx.step_formula(m)]);
        let succ = Arc::new(self.all_sat(&base, &ctx.primed_preds)?);
        self.stats.lock().unwrap().successor_sets += 1;
        self.succ.lock().unwrap().insert((*s, m), succ.clone());
        Ok(succ)
    }

    /// Value of θ on ŝ, failing when θ is not constant on ⟦ŝ⟧.
    pub fn validate_expressible(&self, theta: &Formula, s: &AbstractState) -> Result<bool, AbstractionError> {
        if let Some(b) = self.ctx.decide_syntactically(s, theta) {
            return Ok(b);
        }
        let g = self.ctx.gamma(s);
        let pos = self.solver.check_sat(&and(vec![g.clone(), theta.clone()]))?;
        let neg = self.solver.check_sat(&and(vec![g, not(theta.clone())]))?;
        match (pos, neg) {
            (SatResult::Unsat, _) => Ok(false),
            (_, SatResult::Unsat) => Ok(true),
            (p, n) => Err(AbstractionError::Expressibility {
                formula: theta.to_string(),
                state: self.ctx.describe(s),
                holds: match p {
                    SatResult::Sat(m) => show_model(&m),
                    _ => "unknown".into(),
                },
                fails: match n {
                    SatResult::Sat(m) => show_model(&m),
                    _ => "unknown".into(),
                },
            }),
        }
    }

    /// obs(ŝ): bit i is set when ξ_i holds on ⟦ŝ⟧.
    pub fn obs_vector(&self, s: &AbstractState) -> Result<Copies, AbstractionError> {
        if let Some(&o) = self.obs.lock().unwrap().get(s) {
            return Ok(o);
        }
        let mut o = Copies::default();
        for i in 0..self.ctx.k {
            if self.validate_expressible(self.ctx.observation_of(i), s)? {
                o = o.with(i);
            }
        }
        self.obs.lock().unwrap().insert(*s, o);
        Ok(o)
    }

    /// δ(q, ŝ).
    pub fn delta(&self, q: usize, s: &AbstractState) -> Result<usize, AbstractionError> {
        if let Some(&t) = self.delta.lock().unwrap().get(&(q, *s)) {
            return Ok(t);
        }
        let ctx = self.ctx;
        let g = ctx.gamma(s);
        let t = ctx.automaton.delta_abstract(q, |theta| match ctx.decide_syntactically(s, theta) {
            Some(b) => Ok(b),
            None => self.solver.maybe_sat(&and(vec![g.clone(), theta.clone()])),
        })?;
        self.delta.lock().unwrap().insert((q, *s), t);
        Ok(t)
    }

    /// Checks validRes(ŝ, M, A). An inconclusive answer counts as invalid.
    pub fn check_valid_res(&self, r: &Restriction) -> Result<bool, AbstractionError> {
        if let Some(&v) = self.valid.lock().unwrap().get(r) {
            return Ok(v);
        }
        let f = self.ctx.build_valid_res(&r.state, r.sched, &r.targets);
        self.stats.lock().unwrap().valid_res_queries += 1;
        let ok = match self.solver.check_valid(&f)? {
            ValidResult::Valid => true,
            ValidResult::Invalid(_) => false,
            ValidResult::Unknown(reason) => {
                self.warn(format!("restriction check inconclusive ({reason}); treated as invalid"));
                false
            }
        };
        self.valid.lock().unwrap().insert(r.clone(), ok);
        Ok(ok)
    }

    /// Concrete successor witness for the existential copies: given a full
    /// current valuation and next values of the universal copies, find next
    /// values of the existential copies that respect M and land in A.
    pub fn extract_existential_successor(
        &self,
        mu: &Assignment,
        universal_next: &Assignment,
        m: Scheduling,
        targets: &BTreeSet<AbstractState>,
    ) -> Result<Option<Assignment>, AbstractionError> {
        let ctx = self.ctx;
        let mut concl: Vec<Formula> = (ctx.l..ctx.k).map(|i| ctx.copy_move(m, i)).collect();
        concl.push(or(targets.iter().map(|t| ctx.gamma_primed(t)).collect()));
        let mut subst: BTreeMap<Var, Formula> = BTreeMap::new();
        for (v, x) in mu.iter().chain(universal_next.iter()) {
            subst.insert(v.clone(), x.to_formula());
        }
        let f = and(concl).substitute(&subst);
        match self.solver.check_sat(&f)? {
            SatResult::Sat(model) => {
                let mut out = Assignment::new();
                for i in ctx.l..ctx.k {
                    for v in ctx.copy_vars(i) {
                        let p = v.primed();
                        out.insert(v, model.value(&p));
                    }
                }
                Ok(Some(out))
            }
            _ => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::ltl_to_safety_automaton;
    use crate::frontend::{parse_predicates, parse_property, parse_systems};
    use crate::smt::SolverConfig;

    const Q2: &str = "(system Q2 (vars (pc Int) (a Int) (x Int) (y Int))
        (init (and (= pc 2) (= a 0) (= x 0) (= y 0)))
        (step (or (and (= pc 2) (= pc' 3) (= a' a) (= x' x) (= y' y))
                  (and (= pc 3) (= pc' 4) (= a' a) (= y' y)))))";

    fn setup() -> (CompositionContext, Solver) {
        let systems = parse_systems(Q2).unwrap();
        let prop = parse_property(
            "(property (forall p1 Q2 (= pc 2)) (exists p2 Q2 (= pc 2)) (body (G (= a@p1 a@p2))))",
            &systems,
        )
        .unwrap();
        let preds = parse_predicates("(predicates (a1=a2 (= a@p1 a@p2)) (x1=x2 (= x@p1 x@p2)))", &prop, &systems).unwrap();
        let aut = ltl_to_safety_automaton(&prop.body).unwrap();
        let ctx = CompositionContext::new(&systems, &prop, &preds, aut, true).unwrap();
        let solver = Solver::start(SolverConfig::locate(None).expect("SMT solver required")).unwrap();
        (ctx, solver)
    }

    fn cube(ctx: &CompositionContext, truths: &[&str]) -> AbstractState {
        let mut s = AbstractState::new(ctx.n());
        for (j, p) in ctx.predicates.iter().enumerate() {
            s.set(j, truths.contains(&p.name.as_str()));
        }
        s
    }

    #[test]
    fn pc_predicates_are_generated() {
        let (ctx, _) = setup();
        let names: Vec<_> = ctx.predicates.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, ["pc@p1=2", "pc@p1=3", "pc@p1=4", "pc@p2=2", "pc@p2=3", "pc@p2=4", "a1=a2", "x1=x2"]);
        let s = cube(&ctx, &["pc@p1=4", "pc@p2=3", "a1=a2"]);
        assert_eq!(ctx.describe(&s), "(4,3) a1=a2");
    }

    #[test]
    fn successors_of_havoc_step() {
        let (ctx, solver) = setup();
        let abs = Abstraction::new(&ctx, &solver);
        let s = cube(&ctx, &["pc@p1=4", "pc@p2=3", "a1=a2"]);
        let succ = abs.m_successors(&s, Copies::single(1)).unwrap();
        let mut descr: Vec<String> = succ.iter().map(|t| ctx.describe(t)).collect();
        descr.sort();
        assert_eq!(descr, ["(4,4) a1=a2", "(4,4) a1=a2 x1=x2"]);
    }

    #[test]
    fn restriction_to_equal_choice_is_valid() {
        let (ctx, solver) = setup();
        let abs = Abstraction::new(&ctx, &solver);
        let s = cube(&ctx, &["pc@p1=4", "pc@p2=3", "a1=a2"]);
        let good = cube(&ctx, &["pc@p1=4", "pc@p2=4", "a1=a2", "x1=x2"]);
        let other = cube(&ctx, &["pc@p1=4", "pc@p2=4", "a1=a2"]);
        let r = |t: AbstractState| Restriction { state: s, sched: Copies::single(1), targets: BTreeSet::from([t]) };
        assert!(abs.check_valid_res(&r(good)).unwrap());
        assert!(abs.check_valid_res(&r(other)).unwrap());
        // A target the step cannot reach is not a valid promise.
        let unreachable = cube(&ctx, &["pc@p1=4", "pc@p2=2", "a1=a2"]);
        assert!(!abs.check_valid_res(&r(unreachable)).unwrap());
    }

    #[test]
    fn observation_and_delta() {
        let (ctx, solver) = setup();
        let abs = Abstraction::new(&ctx, &solver);
        let s = cube(&ctx, &["pc@p1=2", "pc@p2=3", "a1=a2"]);
        assert_eq!(abs.obs_vector(&s).unwrap(), Copies::single(0));
        assert!(!ctx.automaton.is_bad(abs.delta(ctx.automaton.init, &s).unwrap()));
        let t = cube(&ctx, &["pc@p1=2", "pc@p2=2"]);
        assert!(ctx.automaton.is_bad(abs.delta(ctx.automaton.init, &t).unwrap()));
    }

    #[test]
    fn inexpressible_observation_is_reported() {
        let (ctx, solver) = setup();
        let abs = Abstraction::new(&ctx, &solver);
        let s = cube(&ctx, &["pc@p1=2", "pc@p2=3"]);
        let theta = crate::logic::cmp(CmpOp::Gt, Formula::Var(Var::int("a").indexed(1)), Formula::Int(0));
        assert!(matches!(abs.validate_expressible(&theta, &s), Err(AbstractionError::Expressibility { .. })));
    }

    #[test]
    fn initial_states() {
        let (ctx, solver) = setup();
        let abs = Abstraction::new(&ctx, &solver);
        let init = abs.initial_abstract_states().unwrap();
        assert_eq!(init.len(), 1);
        assert_eq!(ctx.describe(&init[0]), "(2,2) a1=a2 x1=x2");
    }
}

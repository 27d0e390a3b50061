//! Replays a winning ∀∃ strategy against concrete universal traces and
//! builds the existential traces step by step from restriction witnesses.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;
use thiserror::Error;

use crate::abstraction::{AbstractState, Abstraction, AbstractionError, CompositionContext, Copies, Restriction};
use crate::arena::{StrategyAction, StrategyExport, StrategyNode};
use crate::automaton::AutomatonError;
use crate::logic::{and, eq, int, not, var, Assignment, EvalError, Formula, Sort, Value, Var};
use crate::smt::{SatResult, SmtError, Solver};

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("strategy does not match the problem: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Smt(#[from] SmtError),
    #[error(transparent)]
    Abstraction(#[from] AbstractionError),
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// A violated obligation found while certifying.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CertifyFailure {
    pub run: Option<usize>,
    pub step: Option<usize>,
    pub node: Option<usize>,
    pub reason: String,
}

impl std::fmt::Display for CertifyFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let Some(r) = self.run {
            write!(f, "run {r} ")?;
        }
        if let Some(s) = self.step {
            write!(f, "step {s} ")?;
        }
        if let Some(n) = self.node {
            write!(f, "node {n}: ")?;
        }
        f.write_str(&self.reason)
    }
}

/// One line of the simulation transcript.
#[derive(Clone, Debug, Serialize)]
pub struct TranscriptRecord {
    pub run: usize,
    pub step: usize,
    pub node: usize,
    pub cube: String,
    pub label: String,
    pub q: String,
    pub moved: Vec<usize>,
    pub sched: Vec<usize>,
    pub restriction: Vec<String>,
    pub state: BTreeMap<String, Value>,
}

/// Supplies the universal traces. Valuations are over the indexed,
/// unprimed variables of the copy.
pub trait Refuter {
    fn initial(&mut self, ctx: &CompositionContext, solver: &Solver, copy: usize) -> Result<Option<Assignment>, CertifyError>;
    fn successor(
        &mut self,
        ctx: &CompositionContext,
        solver: &Solver,
        copy: usize,
        current: &Assignment,
    ) -> Result<Option<Assignment>, CertifyError>;
}

fn pin(values: &Assignment, primed: bool) -> Vec<Formula> {
    values
        .iter()
        .map(|(v, x)| {
            let v = if primed { v.primed() } else { v.clone() };
            match x {
                Value::Bool(true) => var(&v),
                Value::Bool(false) => not(var(&v)),
                Value::Int(n) => eq(var(&v), int(*n)),
            }
        })
        .collect()
}

fn read_model(model: &crate::smt::Model, vars: &[Var], primed: bool) -> Assignment {
    vars.iter()
        .map(|v| {
            let key = if primed { v.primed() } else { v.clone() };
            (v.clone(), model.value(&key))
        })
        .collect()
}

/// Picks universal moves with the solver, biased by random value hints so
/// that different seeds explore different traces.
pub struct RandomRefuter {
    rng: StdRng,
    hints: usize,
}

impl RandomRefuter {
    pub fn new(seed: u64) -> Self {
        RandomRefuter { rng: StdRng::seed_from_u64(seed), hints: 3 }
    }

    fn pick(&mut self, solver: &Solver, base: Formula, vars: &[Var], primed: bool) -> Result<Option<Assignment>, CertifyError> {
        for _ in 0..self.hints {
            let v = &vars[self.rng.gen_range(0..vars.len())];
            let key = if primed { v.primed() } else { v.clone() };
            let hint = match v.sort {
                Sort::Bool => {
                    if self.rng.gen_bool(0.5) {
                        var(&key)
                    } else {
                        not(var(&key))
                    }
                }
                Sort::Int => eq(var(&key), int(self.rng.gen_range(-2..=9))),
            };
            if let SatResult::Sat(m) = solver.check_sat(&and(vec![base.clone(), hint]))? {
                return Ok(Some(read_model(&m, vars, primed)));
            }
        }
        match solver.check_sat(&base)? {
            SatResult::Sat(m) => Ok(Some(read_model(&m, vars, primed))),
            _ => Ok(None),
        }
    }
}

impl Refuter for RandomRefuter {
    fn initial(&mut self, ctx: &CompositionContext, solver: &Solver, copy: usize) -> Result<Option<Assignment>, CertifyError> {
        let vars = ctx.copy_vars(copy);
        self.pick(solver, ctx.init_formula(copy).clone(), &vars, false)
    }

    fn successor(
        &mut self,
        ctx: &CompositionContext,
        solver: &Solver,
        copy: usize,
        current: &Assignment,
    ) -> Result<Option<Assignment>, CertifyError> {
        let vars = ctx.copy_vars(copy);
        let mut conj = vec![ctx.step_of(copy).clone()];
        conj.extend(pin(current, false));
        self.pick(solver, and(conj), &vars, true)
    }
}

/// Replays fixed universal prefixes, one per universal copy. Each prefix is
/// checked against init and step; the run ends when a prefix runs out.
pub struct PrefixRefuter {
    prefixes: Vec<Vec<Assignment>>,
    pos: Vec<usize>,
}

impl PrefixRefuter {
    pub fn new(prefixes: Vec<Vec<Assignment>>) -> Self {
        let pos = vec![0; prefixes.len()];
        PrefixRefuter { prefixes, pos }
    }
}

impl Refuter for PrefixRefuter {
    fn initial(&mut self, ctx: &CompositionContext, _: &Solver, copy: usize) -> Result<Option<Assignment>, CertifyError> {
        let Some(mu) = self.prefixes.get(copy).and_then(|p| p.first()).cloned() else { return Ok(None) };
        if !ctx.init_formula(copy).holds_in(&mu)? {
            return Err(CertifyError::Mismatch(format!("prefix of copy {} does not start in an initial state", copy + 1)));
        }
        self.pos[copy] = 0;
        Ok(Some(mu))
    }

    fn successor(&mut self, ctx: &CompositionContext, _: &Solver, copy: usize, current: &Assignment) -> Result<Option<Assignment>, CertifyError> {
        let next = self.pos[copy] + 1;
        let Some(mu) = self.prefixes[copy].get(next).cloned() else { return Ok(None) };
        let mut both = current.clone();
        both.extend(mu.iter().map(|(v, x)| (v.primed(), *x)));
        if !ctx.step_of(copy).holds_in(&both)? {
            return Err(CertifyError::Mismatch(format!("prefix of copy {} is not a trace at position {next}", copy + 1)));
        }
        self.pos[copy] = next;
        Ok(Some(mu))
    }
}

/// Result of one simulation run.
#[derive(Clone, Debug, Default)]
pub struct Simulation {
    pub steps: usize,
    pub observations: usize,
    pub failure: Option<CertifyFailure>,
    /// Set when a universal copy had no further move.
    pub universal_stuck: bool,
    /// Constructed existential traces (only positions where the copy moved).
    pub existential: Vec<Vec<Assignment>>,
}

struct Index<'s> {
    by_key: HashMap<(String, String, Vec<usize>), &'s StrategyNode>,
    by_id: HashMap<usize, &'s StrategyNode>,
}

impl<'s> Index<'s> {
    fn new(strategy: &'s StrategyExport) -> Self {
        Index {
            by_key: strategy.nodes.iter().map(|n| ((n.cube.clone(), n.q.clone(), n.moved.clone()), n)).collect(),
            by_id: strategy.nodes.iter().map(|n| (n.id, n)).collect(),
        }
    }
}

fn check_shape(ctx: &CompositionContext, strategy: &StrategyExport) -> Result<(), CertifyError> {
    let names: Vec<String> = ctx.predicates.iter().map(|p| p.name.clone()).collect();
    if strategy.predicates != names || strategy.k != ctx.k || strategy.l != ctx.l {
        return Err(CertifyError::Mismatch("predicates or quantifier prefix differ".into()));
    }
    Ok(())
}

fn copies_of(members: &[usize]) -> Copies {
    members.iter().fold(Copies::default(), |c, &m| c.with(m - 1))
}

fn failure(run: usize, step: usize, node: usize, reason: impl Into<String>) -> Option<CertifyFailure> {
    Some(CertifyFailure { run: Some(run), step: Some(step), node: Some(node), reason: reason.into() })
}

/// Simulates the witness construction for `depth` steps: observation steps
/// advance the automaton; scheduling steps advance the scheduled universal
/// copies along the refuter's traces and obtain the existential successors
/// from a model of the restriction's conclusion.
pub fn simulate_witness(
    ctx: &CompositionContext,
    solver: &Solver,
    strategy: &StrategyExport,
    refuter: &mut dyn Refuter,
    depth: usize,
    run: usize,
    transcript: &mut Vec<TranscriptRecord>,
) -> Result<Simulation, CertifyError> {
    check_shape(ctx, strategy)?;
    let abs = Abstraction::new(ctx, solver);
    let index = Index::new(strategy);
    let aut = &ctx.automaton;
    let mut sim = Simulation { existential: vec![Vec::new(); ctx.k - ctx.l], ..Simulation::default() };
    if depth == 0 {
        return Ok(sim);
    }

    // Universal traces t_i and counters c_i.
    let mut traces: Vec<Vec<Assignment>> = Vec::new();
    let mut counters = vec![0usize; ctx.l];
    let mut mu = Assignment::new();
    for i in 0..ctx.l {
        match refuter.initial(ctx, solver, i)? {
            Some(a) => {
                mu.extend(a.clone());
                traces.push(vec![a]);
            }
            None => {
                sim.universal_stuck = true;
                return Ok(sim);
            }
        }
    }
    if ctx.l < ctx.k {
        let mut conj: Vec<Formula> = (ctx.l..ctx.k).map(|i| ctx.init_formula(i).clone()).collect();
        conj.extend(pin(&mu, false));
        match solver.check_sat(&and(conj))? {
            SatResult::Sat(m) => {
                for i in ctx.l..ctx.k {
                    let vals = read_model(&m, &ctx.copy_vars(i), false);
                    sim.existential[i - ctx.l].push(vals.clone());
                    mu.extend(vals);
                }
            }
            _ => {
                sim.failure = Some(CertifyFailure {
                    run: Some(run),
                    step: Some(0),
                    node: None,
                    reason: "no initial state for the existential copies".into(),
                });
                return Ok(sim);
            }
        }
    }
    let all: Vec<usize> = (1..=ctx.k).collect();
    let init_q = aut.states[aut.init].clone();
    let s0 = ctx.abstract_of(&mu)?;
    let Some(start) = index.by_key.get(&(s0.to_string(), init_q, all)).copied() else {
        sim.failure = Some(CertifyFailure {
            run: Some(run),
            step: Some(0),
            node: None,
            reason: format!("initial state {} has no strategy node", ctx.describe(&s0)),
        });
        return Ok(sim);
    };
    let mut node = start;
    let mut q_conc = aut.init;

    for step in 0..depth {
        sim.steps = step + 1;
        // P1: the concrete state lies in the node's cube.
        let s = ctx.abstract_of(&mu)?;
        if s.to_string() != node.cube {
            sim.failure = failure(run, step, node.id, format!("concrete state abstracts to {s}, node cube is {}", node.cube));
            return Ok(sim);
        }
        // P2: universal copies sit on their traces.
        for i in 0..ctx.l {
            let on_trace = ctx.copy_vars(i).iter().all(|v| mu.get(v) == traces[i][counters[i]].get(v));
            if !on_trace {
                sim.failure = failure(run, step, node.id, format!("copy {} left its trace", i + 1));
                return Ok(sim);
            }
        }
        let (sched, restriction) = match &node.action {
            StrategyAction::Observe { .. } => (Vec::new(), Vec::new()),
            StrategyAction::Schedule { sched, targets, .. } => (sched.clone(), targets.clone()),
        };
        transcript.push(TranscriptRecord {
            run,
            step,
            node: node.id,
            cube: node.cube.clone(),
            label: node.label.clone(),
            q: node.q.clone(),
            moved: node.moved.clone(),
            sched,
            restriction,
            state: mu.iter().map(|(v, x)| (v.to_string(), *x)).collect(),
        });
        match &node.action {
            StrategyAction::Observe { next } => {
                sim.observations += 1;
                q_conc = aut.step_concrete(q_conc, &mu)?;
                let Some(n) = index.by_id.get(next).copied() else {
                    return Err(CertifyError::Mismatch(format!("node {next} is missing")));
                };
                if aut.is_bad(q_conc) {
                    sim.failure = failure(run, step, node.id, "automaton reached a bad state");
                    return Ok(sim);
                }
                if n.q != aut.states[q_conc] {
                    sim.failure =
                        failure(run, step, node.id, format!("automaton is in {} but the strategy expects {}", aut.states[q_conc], n.q));
                    return Ok(sim);
                }
                node = n;
            }
            StrategyAction::Schedule { sched, targets, successors } => {
                let m = copies_of(sched);
                let mut next = mu.clone();
                let mut universal_next = Assignment::new();
                for i in 0..ctx.l {
                    let vals = if m.contains(i) {
                        match refuter.successor(ctx, solver, i, &traces[i][counters[i]])? {
                            Some(a) => {
                                traces[i].push(a.clone());
                                counters[i] += 1;
                                a
                            }
                            None => {
                                sim.universal_stuck = true;
                                return Ok(sim);
                            }
                        }
                    } else {
                        ctx.copy_vars(i).iter().map(|v| (v.clone(), mu[v])).collect()
                    };
                    universal_next.extend(vals.iter().map(|(v, x)| (v.primed(), *x)));
                    next.extend(vals);
                }
                let cubes: BTreeSet<AbstractState> = targets
                    .iter()
                    .map(|t| AbstractState::parse(t).ok_or_else(|| CertifyError::Mismatch(format!("bad cube {t}"))))
                    .collect::<Result<_, _>>()?;
                if ctx.l < ctx.k {
                    match abs.extract_existential_successor(&mu, &universal_next, m, &cubes)? {
                        Some(ex) => {
                            for i in ctx.l..ctx.k {
                                if !m.contains(i) {
                                    continue;
                                }
                                let vals: Assignment = ctx.copy_vars(i).iter().map(|v| (v.clone(), ex[v])).collect();
                                let mut both: Assignment = ctx.copy_vars(i).iter().map(|v| (v.clone(), mu[v])).collect();
                                both.extend(vals.iter().map(|(v, x)| (v.primed(), *x)));
                                if !ctx.step_of(i).holds_in(&both)? {
                                    sim.failure = failure(run, step, node.id, format!("extracted move of copy {} is not a step", i + 1));
                                    return Ok(sim);
                                }
                                sim.existential[i - ctx.l].push(vals.clone());
                                next.extend(vals);
                            }
                        }
                        None => {
                            sim.failure = failure(run, step, node.id, "no existential successor satisfies the restriction");
                            return Ok(sim);
                        }
                    }
                }
                let s2 = ctx.abstract_of(&next)?;
                let Some(pos) = targets.iter().position(|t| *t == s2.to_string()) else {
                    let reason = format!("successor {} is outside the restriction", ctx.describe(&s2));
                    sim.failure = failure(run, step, node.id, reason);
                    return Ok(sim);
                };
                let Some(n) = successors.get(pos).and_then(|id| index.by_id.get(id)).copied() else {
                    return Err(CertifyError::Mismatch(format!("node {} has no successor for {}", node.id, targets[pos])));
                };
                mu = next;
                node = n;
            }
        }
    }
    Ok(sim)
}

/// Re-checks every restriction of the strategy with a fresh validity query.
pub fn recheck_restrictions(
    ctx: &CompositionContext,
    solver: &Solver,
    strategy: &StrategyExport,
) -> Result<Vec<CertifyFailure>, CertifyError> {
    check_shape(ctx, strategy)?;
    let mut out = Vec::new();
    if ctx.l == ctx.k {
        return Ok(out);
    }
    let abs = Abstraction::new(ctx, solver);
    for n in &strategy.nodes {
        let StrategyAction::Schedule { sched, targets, .. } = &n.action else { continue };
        let state = AbstractState::parse(&n.cube).ok_or_else(|| CertifyError::Mismatch(format!("bad cube {}", n.cube)))?;
        let targets: BTreeSet<AbstractState> = targets
            .iter()
            .map(|t| AbstractState::parse(t).ok_or_else(|| CertifyError::Mismatch(format!("bad cube {t}"))))
            .collect::<Result<_, _>>()?;
        let r = Restriction { state, sched: copies_of(sched), targets };
        if !abs.check_valid_res(&r)? {
            out.push(CertifyFailure { run: None, step: None, node: Some(n.id), reason: "restriction is not valid".into() });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Certificate {
    pub runs: usize,
    pub steps: usize,
    pub observations: usize,
    pub stuck_runs: usize,
    pub failures: Vec<CertifyFailure>,
}

impl Certificate {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Restriction re-check followed by `runs` random simulations of `depth`
/// steps each.
pub fn certify(
    ctx: &CompositionContext,
    solver: &Solver,
    strategy: &StrategyExport,
    runs: usize,
    depth: usize,
    seed: u64,
    transcript: &mut Vec<TranscriptRecord>,
) -> Result<Certificate, CertifyError> {
    let mut cert = Certificate { failures: recheck_restrictions(ctx, solver, strategy)?, ..Certificate::default() };
    for run in 0..runs {
        let mut refuter = RandomRefuter::new(seed.wrapping_add(run as u64));
        let sim = simulate_witness(ctx, solver, strategy, &mut refuter, depth, run, transcript)?;
        cert.runs += 1;
        cert.steps += sim.steps;
        cert.observations += sim.observations;
        cert.stuck_runs += sim.universal_stuck as usize;
        cert.failures.extend(sim.failure);
    }
    Ok(cert)
}

/// Edits one restriction of the strategy into an invalid one: the first
/// scheduling node (in id order) that has an invalid single-cube restriction
/// among the M-successors gets that restriction. Returns the edited node id.
pub fn tamper(
    ctx: &CompositionContext,
    solver: &Solver,
    strategy: &StrategyExport,
) -> Result<Option<(StrategyExport, usize)>, CertifyError> {
    let abs = Abstraction::new(ctx, solver);
    for (pos, n) in strategy.nodes.iter().enumerate() {
        let StrategyAction::Schedule { sched, targets, successors } = &n.action else { continue };
        let m = copies_of(sched);
        if !(ctx.l..ctx.k).any(|i| m.contains(i)) {
            continue;
        }
        let state = AbstractState::parse(&n.cube).ok_or_else(|| CertifyError::Mismatch(format!("bad cube {}", n.cube)))?;
        for t in abs.m_successors(&state, m)?.iter() {
            let r = Restriction { state, sched: m, targets: [*t].into() };
            if abs.check_valid_res(&r)? {
                continue;
            }
            let mut edited = strategy.clone();
            let keep = targets.iter().position(|x| *x == t.to_string()).map(|i| successors[i]).unwrap_or(successors[0]);
            edited.nodes[pos].action =
                StrategyAction::Schedule { sched: sched.clone(), targets: vec![t.to_string()], successors: vec![keep] };
            return Ok(Some((edited, n.id)));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verifier::{verify_exists_lazy, Verdict, VerifyOptions};
    use crate::{Problem, SolverConfig};

    fn echo() -> CompositionContext {
        Problem::parse(
            &[("choose", include_str!("../fixtures/small/choose.sexp"))],
            ("property", include_str!("../fixtures/small/echo.sexp")),
            Some(("predicates", include_str!("../fixtures/small/predicates.sexp"))),
            None,
        )
        .unwrap()
        .context(true)
        .unwrap()
    }

    fn solver() -> Solver {
        Solver::new(SolverConfig::locate(None).unwrap())
    }

    fn strategy(ctx: &CompositionContext, s: &Solver) -> StrategyExport {
        let out = verify_exists_lazy(ctx, s, &VerifyOptions::default()).unwrap();
        assert_eq!(out.report.verdict, Verdict::Verified);
        out.strategy.unwrap()
    }

    fn o(copy: u32, pc: i64, value: i64) -> Assignment {
        [(Var::int("pc").indexed(copy), Value::Int(pc)), (Var::int("o").indexed(copy), Value::Int(value))].into()
    }

    #[test]
    fn random_runs_certify_the_echo_witness() {
        let ctx = echo();
        let s = solver();
        let st = strategy(&ctx, &s);
        let mut transcript = Vec::new();
        let cert = certify(&ctx, &s, &st, 3, 20, 7, &mut transcript).unwrap();
        assert!(cert.ok(), "{:?}", cert.failures);
        assert_eq!(cert.steps, 60);
        assert!(cert.observations > 0);
        assert_eq!(transcript.len(), 60);
    }

    #[test]
    fn existential_trace_copies_a_given_prefix() {
        let ctx = echo();
        let s = solver();
        let st = strategy(&ctx, &s);
        let prefix = vec![o(1, 2, 0), o(1, 2, 5), o(1, 2, 3), o(1, 2, 3)];
        let mut refuter = PrefixRefuter::new(vec![prefix]);
        let sim = simulate_witness(&ctx, &s, &st, &mut refuter, 30, 0, &mut Vec::new()).unwrap();
        assert!(sim.failure.is_none(), "{:?}", sim.failure);
        assert!(sim.universal_stuck);
        let outputs: Vec<Value> = sim.existential[0].iter().map(|a| a[&Var::int("o").indexed(2)]).collect();
        assert_eq!(&outputs[..4], &[Value::Int(0), Value::Int(5), Value::Int(3), Value::Int(3)]);
    }

    #[test]
    fn prefixes_must_be_traces() {
        let ctx = echo();
        let s = solver();
        let st = strategy(&ctx, &s);
        let mut refuter = PrefixRefuter::new(vec![vec![o(1, 2, 4)]]);
        assert!(matches!(
            simulate_witness(&ctx, &s, &st, &mut refuter, 5, 0, &mut Vec::new()),
            Err(CertifyError::Mismatch(_))
        ));
    }

    #[test]
    fn losing_restriction_fails_certification() {
        let ctx = echo();
        let s = solver();
        let st = strategy(&ctx, &s);
        // Every singleton restriction of this witness is valid.
        assert!(tamper(&ctx, &s, &st).unwrap().is_none());
        let mut bad = st.clone();
        let node = bad
            .nodes
            .iter_mut()
            .find(|n| matches!(n.action, StrategyAction::Schedule { .. }))
            .expect("a scheduling node");
        let StrategyAction::Schedule { targets, .. } = &mut node.action else { unreachable!() };
        let cube = AbstractState::parse(&targets[0]).unwrap();
        let mut flipped = cube;
        let eq = ctx.predicates.iter().position(|p| p.name == "o1=o2").unwrap();
        flipped.set(eq, !cube.get(eq));
        targets[0] = flipped.to_string();
        let cert = certify(&ctx, &s, &bad, 2, 10, 1, &mut Vec::new()).unwrap();
        assert!(!cert.ok());
    }
}

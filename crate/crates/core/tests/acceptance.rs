//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{load, random_instance, solver};
use hypa_core::abstraction::{AbstractState, Abstraction, CompositionContext, Copies, Restriction};
use hypa_core::arena::StrategyAction;
use hypa_core::certify::{certify, tamper};
use hypa_core::logic::{implies, Formula, Value, Var};
use hypa_core::oracle::{check_property, prefixes, project, ExplicitSystem};
use hypa_core::verifier::{
    build_env_graph, deadline_after, verify_exists_direct, verify_exists_lazy, verify_forall, EnvKind,
};
use hypa_core::{ltl_to_safety_automaton, Ltl, Outcome, Problem, Solver, StrategyExport, ValidResult, Verdict, VerifyError, VerifyOptions};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const FIG1_LIMIT: Duration = Duration::from_secs(120);
const FIG2_LIMIT: Duration = Duration::from_secs(120);
const MIN_REFINEMENTS: usize = 1;
const MAX_REFINEMENTS: usize = 100;
const DIRECT_SLOWDOWN: f64 = 5.0;
const GNI_LIMIT: Duration = Duration::from_secs(300);
const FUZZ_INSTANCES: usize = 100;
const FUZZ_BUDGET: Duration = Duration::from_secs(30 * 60);
const FUZZ_MAX_PRODUCT: u64 = 64;
const LEMMA_TRIPLES: usize = 500;
const AGREEMENT_FUZZ: usize = 15;
const DIRECT_DEADLINE: Duration = Duration::from_secs(60);
const PROJECTION_SYSTEMS: usize = 50;
const PROJECTION_MAX_STATES: usize = 50;
const PREFIX_LEN: usize = 6;
const CERT_RUNS: usize = 10;
const CERT_STEPS: usize = 50;
const AUTOMATON_FORMULAS: usize = 30;
const SEED: u64 = 20240601;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

/// A verified ∀∃ instance kept for certification.
struct Witness {
    name: &'static str,
    problem: Problem,
    strategy: StrategyExport,
}

#[derive(Default)]
struct Shared {
    witnesses: Vec<Witness>,
    fig2_lazy: Option<Outcome>,
    fig2_direct: Option<Result<Outcome, String>>,
}

fn context(p: &Problem) -> CompositionContext {
    p.context(true).expect("context builds")
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed())
}

fn copies_of(sched: &[usize]) -> Copies {
    sched.iter().fold(Copies::default(), |m, &i| m.with(i - 1))
}

fn fig1() -> Check {
    let p = load(&["fig1/p1.sexp", "fig1/p2.sexp"], "fig1/property.sexp", "fig1/predicates.sexp");
    let s = solver();
    let (out, t) = timed(|| verify_forall(&context(&p), &s, &VerifyOptions::default()).expect("forall runs"));
    ensure!(out.report.verdict == Verdict::Verified, "full predicate set: {}", out.report.verdict);
    ensure!(t < FIG1_LIMIT, "took {t:?}");
    let strategy = out.strategy.expect("strategy");
    let hit = strategy.nodes.iter().find(|n| {
        let mut words = n.label.split_whitespace();
        words.next() == Some("(2,2)") && words.any(|w| w == "x1=x2")
    });
    ensure!(hit.is_some(), "no strategy node with pc (2,2) and x1=x2");
    let linear = load(&["fig1/p1.sexp", "fig1/p2.sexp"], "fig1/property.sexp", "fig1/predicates_linear.sexp");
    let out2 = verify_forall(&context(&linear), &solver(), &VerifyOptions::default()).expect("forall runs");
    ensure!(out2.report.verdict == Verdict::Unknown, "without y1=2y2: {}", out2.report.verdict);
    Ok(format!("VERIFIED in {:.1}s (size {}), UNKNOWN without y1=2y2", t.as_secs_f64(), out.report.size))
}

fn fig2(shared: &mut Shared) -> Check {
    let p = load(&["fig2/q1.sexp", "fig2/q2.sexp"], "fig2/property.sexp", "fig2/predicates.sexp");
    let ctx = context(&p);
    let s = solver();
    let (out, t_lazy) = timed(|| verify_exists_lazy(&ctx, &s, &VerifyOptions::default()).expect("lazy runs"));
    ensure!(out.report.verdict == Verdict::Verified, "lazy: {}", out.report.verdict);
    ensure!(t_lazy < FIG2_LIMIT, "lazy took {t_lazy:?}");
    let refinements = out.report.refinements;
    ensure!((MIN_REFINEMENTS..=MAX_REFINEMENTS).contains(&refinements), "{refinements} refinements");
    let strategy = out.strategy.clone().expect("strategy");
    let abs = Abstraction::new(&ctx, &s);
    let mut strict = None;
    for n in &strategy.nodes {
        let StrategyAction::Schedule { sched, targets, .. } = &n.action else { continue };
        if sched != &[2] {
            continue;
        }
        let cube = AbstractState::parse(&n.cube).expect("cube");
        let all = abs.m_successors(&cube, copies_of(sched)).expect("successors");
        if targets.len() < all.len() {
            strict = Some((n.label.clone(), targets.len(), all.len()));
            break;
        }
    }
    let Some((label, a, m)) = strict else {
        return Err("no {2}-scheduled node with a strict restriction".into());
    };
    shared.witnesses.push(Witness { name: "fig2", problem: p.clone(), strategy });
    let s2 = solver();
    let (direct, t_direct) = timed(|| verify_exists_direct(&ctx, &s2, &VerifyOptions::default()));
    let ratio = t_direct.as_secs_f64() / t_lazy.as_secs_f64();
    let direct_note = match &direct {
        Err(VerifyError::SubsetBound { found, bound }) => format!("direct refused ({found} successors > {bound})"),
        Ok(d) => format!("direct {} in {:.1}s = {ratio:.1}x lazy", d.report.verdict, t_direct.as_secs_f64()),
        Err(e) => return Err(format!("direct failed: {e}")),
    };
    let direct_ok = match &direct {
        Err(VerifyError::SubsetBound { .. }) => true,
        Ok(_) => ratio > DIRECT_SLOWDOWN,
        Err(_) => false,
    };
    shared.fig2_direct = Some(direct.map_err(|e| e.to_string()));
    shared.fig2_lazy = Some(out);
    ensure!(direct_ok, "{direct_note}; needs > {DIRECT_SLOWDOWN}x");
    Ok(format!(
        "lazy VERIFIED in {:.1}s, {refinements} refinements, strict {{2}} restriction at {label} ({a} of {m}); {direct_note}",
        t_lazy.as_secs_f64()
    ))
}

fn gni(shared: &mut Shared) -> Check {
    let p = load(&["gni/gni.sexp"], "gni/property.sexp", "gni/predicates.sexp");
    let s = solver();
    let (out, t) = timed(|| verify_exists_lazy(&context(&p), &s, &VerifyOptions::default()).expect("lazy runs"));
    ensure!(out.report.verdict == Verdict::Verified, "GNI: {}", out.report.verdict);
    ensure!(t < GNI_LIMIT, "GNI took {t:?}");
    shared.witnesses.push(Witness { name: "gni", problem: p, strategy: out.strategy.clone().expect("strategy") });
    let swapped = load(&["gni/gni.sexp", "gni/gni_det.sexp"], "gni/property_swapped.sexp", "gni/predicates.sexp");
    let out2 = verify_exists_lazy(&context(&swapped), &solver(), &VerifyOptions::default()).expect("lazy runs");
    ensure!(out2.report.verdict == Verdict::Unknown, "swapped: {}", out2.report.verdict);
    Ok(format!(
        "VERIFIED in {:.1}s ({} refinements), swapped variant UNKNOWN",
        t.as_secs_f64(),
        out.report.refinements
    ))
}

fn run_verifier(ctx: &CompositionContext, s: &Solver) -> Outcome {
    let opts = VerifyOptions::default();
    if ctx.l == ctx.k {
        verify_forall(ctx, s, &opts).expect("forall runs")
    } else {
        verify_exists_lazy(ctx, s, &opts).expect("lazy runs")
    }
}

fn soundness_fuzz() -> Check {
    let mut rng = StdRng::seed_from_u64(SEED);
    let start = Instant::now();
    let (mut checked, mut verified, mut verified_exists, mut skipped) = (0, 0, 0, 0);
    while checked < FUZZ_INSTANCES {
        ensure!(start.elapsed() < FUZZ_BUDGET, "budget exhausted after {checked} instances");
        let inst = random_instance(&mut rng, FUZZ_MAX_PRODUCT);
        let p = inst.problem();
        let oracle = check_property(&p.systems, &p.property, &p.automaton, &inst.bounds).expect("oracle runs");
        if !oracle.existential_observations_recur {
            skipped += 1;
            continue;
        }
        checked += 1;
        let out = run_verifier(&context(&p), &solver());
        if out.report.verdict == Verdict::Verified {
            verified += 1;
            if inst.existential > 0 {
                verified_exists += 1;
            }
            ensure!(oracle.holds, "VERIFIED but the oracle refutes:\n{}\n{}", inst.systems.join("\n"), inst.property);
        }
    }
    Ok(format!(
        "{checked} instances ({verified} VERIFIED, {verified_exists} of them with ∃), 0 violations, {skipped} skipped, {:.0}s",
        start.elapsed().as_secs_f64()
    ))
}

fn primed_vars(f: &Formula) -> Vec<Var> {
    f.free_vars().into_iter().filter(|v| v.primed).collect()
}

fn lemma1() -> Check {
    let mut rng = StdRng::seed_from_u64(SEED + 1);
    let sources = [
        (load(&["fig2/q1.sexp", "fig2/q2.sexp"], "fig2/property.sexp", "fig2/predicates.sexp"), 350),
        (load(&["small/reveal.sexp", "small/commit.sexp"], "small/lookahead.sexp", "small/predicates_lookahead.sexp"), 100),
        (load(&["small/choose.sexp", "small/constant.sexp"], "small/echo_const.sexp", "small/predicates.sexp"), 50),
    ];
    let (mut triples, mut full_checked) = (0, 0);
    for (p, quota) in &sources {
        let ctx = context(p);
        let s = solver();
        let abs = Abstraction::new(&ctx, &s);
        let graph = build_env_graph(&abs, &VerifyOptions::default()).expect("graph builds");
        let moves: Vec<_> = graph
            .nodes
            .iter()
            .filter_map(|n| match &n.kind {
                EnvKind::Moves(ms) => Some(ms.iter().map(move |m| (n.state, m))),
                _ => None,
            })
            .flatten()
            .collect();
        ensure!(!moves.is_empty(), "no moves to sample");
        let mut full_done: HashSet<(AbstractState, Copies)> = HashSet::new();
        for _ in 0..*quota {
            let (state, m) = moves[rng.gen_range(0..moves.len())];
            let succ: Vec<AbstractState> = m.succ.iter().map(|(t, _)| *t).collect();
            let bigger: BTreeSet<AbstractState> = loop {
                let pick: BTreeSet<_> = succ.iter().filter(|_| rng.gen_bool(0.6)).copied().collect();
                if !pick.is_empty() {
                    break pick;
                }
            };
            let smaller: BTreeSet<AbstractState> = loop {
                let pick: BTreeSet<_> = bigger.iter().filter(|_| rng.gen_bool(0.5)).copied().collect();
                if !pick.is_empty() {
                    break pick;
                }
            };
            let small_ok = abs.check_valid_res(&Restriction { state, sched: m.sched, targets: smaller.clone() }).expect("query");
            let big_ok = abs.check_valid_res(&Restriction { state, sched: m.sched, targets: bigger.clone() }).expect("query");
            ensure!(!small_ok || big_ok, "valid {smaller:?} but invalid superset {bigger:?} at {}", ctx.describe(&state));
            triples += 1;
            if full_done.insert((state, m.sched)) {
                let step = ctx.step_formula(m.sched);
                let total = implies(ctx.gamma(&state), Formula::Exists(primed_vars(&step), Box::new(step)));
                if matches!(s.check_valid(&total).expect("query"), ValidResult::Valid) {
                    let all = Restriction { state, sched: m.sched, targets: succ.iter().copied().collect() };
                    ensure!(abs.check_valid_res(&all).expect("query"), "full successor set invalid at {}", ctx.describe(&state));
                    full_checked += 1;
                }
            }
        }
    }
    ensure!(triples >= LEMMA_TRIPLES, "only {triples} triples");
    Ok(format!("{triples} triples monotone, full successor set valid on {full_checked} total (ŝ, M)"))
}

fn lazy_direct_agreement(shared: &Shared) -> Check {
    let mut agreed = Vec::new();
    let mut excluded = Vec::new();
    if let (Some(lazy), Some(Ok(direct))) = (&shared.fig2_lazy, &shared.fig2_direct) {
        ensure!(lazy.report.verdict == direct.report.verdict, "fig2 disagrees");
        agreed.push("fig2".to_string());
    }
    let fixtures: [(&str, &[&str], &str, &str); 4] = [
        ("echo", &["small/choose.sexp"], "small/echo.sexp", "small/predicates.sexp"),
        ("echo_const", &["small/choose.sexp", "small/constant.sexp"], "small/echo_const.sexp", "small/predicates.sexp"),
        ("lookahead", &["small/reveal.sexp", "small/commit.sexp"], "small/lookahead.sexp", "small/predicates_lookahead.sexp"),
        ("gni", &["gni/gni.sexp"], "gni/property.sexp", "gni/predicates.sexp"),
    ];
    let mut problems: Vec<(String, Problem)> =
        fixtures.iter().map(|(n, sys, prop, preds)| (n.to_string(), load(sys, prop, preds))).collect();
    let mut rng = StdRng::seed_from_u64(SEED + 2);
    let mut fuzz = 0;
    while fuzz < AGREEMENT_FUZZ {
        let inst = random_instance(&mut rng, FUZZ_MAX_PRODUCT);
        if inst.existential == 0 {
            continue;
        }
        fuzz += 1;
        problems.push((format!("random#{fuzz}"), inst.problem()));
    }
    for (name, p) in &problems {
        let ctx = context(p);
        let mut cfg_direct = solver();
        cfg_direct.set_deadline(deadline_after(Some(DIRECT_DEADLINE)));
        let direct = match verify_exists_direct(&ctx, &cfg_direct, &VerifyOptions::default()) {
            Ok(o) if o.report.reason.is_none() => o,
            Ok(_) | Err(VerifyError::SubsetBound { .. }) => {
                excluded.push(name.clone());
                continue;
            }
            Err(e) => return Err(format!("{name}: direct failed: {e}")),
        };
        let lazy = verify_exists_lazy(&ctx, &solver(), &VerifyOptions::default()).expect("lazy runs");
        ensure!(
            lazy.report.verdict == direct.report.verdict,
            "{name}: lazy {} vs direct {}",
            lazy.report.verdict,
            direct.report.verdict
        );
        agreed.push(name.clone());
    }
    Ok(format!("{} instances agree; direct out of bounds on [{}]", agreed.len(), excluded.join(", ")))
}

fn random_explicit(rng: &mut StdRng) -> (ExplicitSystem, Vec<bool>) {
    let n = rng.gen_range(1..=PROJECTION_MAX_STATES);
    let v = Var::int("s");
    let states = (0..n).map(|i| vec![Value::Int(i as i64)]).collect();
    let succ = (0..n)
        .map(|_| {
            if rng.gen_bool(0.1) {
                Vec::new()
            } else {
                let mut out: Vec<usize> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(0..n)).collect();
                out.sort_unstable();
                out.dedup();
                out
            }
        })
        .collect();
    let mut init: Vec<usize> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(0..n)).collect();
    init.sort_unstable();
    init.dedup();
    let density = *[0.2, 0.5, 0.8].get(rng.gen_range(0..3)).unwrap();
    let observed = (0..n).map(|_| rng.gen_bool(density)).collect();
    (ExplicitSystem { vars: vec![v], states, init, succ }, observed)
}

/// States from which some path reaches an observed state lying on a cycle.
fn fair_states(sys: &ExplicitSystem, observed: &[bool]) -> Vec<bool> {
    let n = sys.len();
    let reach_from = |s: usize| {
        let mut seen = vec![false; n];
        let mut stack: Vec<usize> = sys.succ[s].clone();
        while let Some(t) = stack.pop() {
            if !seen[t] {
                seen[t] = true;
                stack.extend(sys.succ[t].iter().copied());
            }
        }
        seen
    };
    let reach: Vec<Vec<bool>> = (0..n).map(reach_from).collect();
    let recurrent: Vec<bool> = (0..n).map(|u| observed[u] && reach[u][u]).collect();
    (0..n).map(|s| recurrent[s] || (0..n).any(|u| recurrent[u] && reach[s][u])).collect()
}

/// Observation words of length `len` of fair paths, by search over
/// (state, emitted word) pairs of the unprojected system.
fn brute_observation_words(sys: &ExplicitSystem, observed: &[bool], len: usize) -> BTreeSet<Vec<usize>> {
    let fair = fair_states(sys, observed);
    let mut seen: HashSet<(usize, Vec<usize>)> = HashSet::new();
    let mut stack = Vec::new();
    for &s in &sys.init {
        let w = if observed[s] { vec![s] } else { Vec::new() };
        stack.push((s, w));
    }
    let mut out = BTreeSet::new();
    while let Some((s, w)) = stack.pop() {
        if w.len() > len || !seen.insert((s, w.clone())) {
            continue;
        }
        if w.len() == len && observed[s] && w.last() == Some(&s) && fair[s] {
            out.insert(w.clone());
        }
        for &t in &sys.succ[s] {
            let mut w2 = w.clone();
            if observed[t] {
                w2.push(t);
            }
            stack.push((t, w2));
        }
    }
    out
}

fn projection() -> Check {
    let mut rng = StdRng::seed_from_u64(SEED + 3);
    let mut words = 0;
    for case in 0..PROJECTION_SYSTEMS {
        let (sys, observed) = random_explicit(&mut rng);
        let proj = project(&sys, &observed);
        for len in 1..=PREFIX_LEN {
            let ours: BTreeSet<Vec<usize>> =
                prefixes(&proj.system, len).into_iter().map(|w| w.into_iter().map(|s| proj.origin[s]).collect()).collect();
            let brute = brute_observation_words(&sys, &observed, len);
            ensure!(ours == brute, "system {case}, length {len}: {} vs {} words", ours.len(), brute.len());
            words += ours.len();
        }
    }
    Ok(format!("{PROJECTION_SYSTEMS} systems, {words} observation prefixes of length 1..={PREFIX_LEN} match"))
}

fn certification(shared: &Shared) -> Check {
    let mut witnesses: Vec<&Witness> = shared.witnesses.iter().collect();
    let echo = load(&["small/choose.sexp"], "small/echo.sexp", "small/predicates.sexp");
    let out = verify_exists_lazy(&context(&echo), &solver(), &VerifyOptions::default()).expect("lazy runs");
    ensure!(out.report.verdict == Verdict::Verified, "echo: {}", out.report.verdict);
    let echo_w = Witness { name: "echo", problem: echo, strategy: out.strategy.expect("strategy") };
    witnesses.push(&echo_w);
    ensure!(witnesses.iter().any(|w| w.name == "fig2"), "no fig2 strategy to certify");
    let mut summary = Vec::new();
    for (i, w) in witnesses.iter().enumerate() {
        let ctx = context(&w.problem);
        let s = solver();
        let mut transcript = Vec::new();
        let cert = certify(&ctx, &s, &w.strategy, CERT_RUNS, CERT_STEPS, SEED + i as u64, &mut transcript).expect("certify runs");
        ensure!(cert.ok(), "{}: {}", w.name, cert.failures[0]);
        ensure!(cert.runs == CERT_RUNS, "{}: {} runs", w.name, cert.runs);
        summary.push(format!("{} ({} observations)", w.name, cert.observations));
    }
    let fig2 = witnesses.iter().find(|w| w.name == "fig2").unwrap();
    let ctx = context(&fig2.problem);
    let s = solver();
    let (bad, node) = tamper(&ctx, &s, &fig2.strategy).expect("tamper runs").ok_or("nothing to tamper with")?;
    let cert = certify(&ctx, &s, &bad, CERT_RUNS, CERT_STEPS, SEED, &mut Vec::new()).expect("certify runs");
    ensure!(!cert.ok(), "tampered strategy (node {node}) passed certification");
    Ok(format!(
        "{} certified over {CERT_RUNS}x{CERT_STEPS} steps; tampered node {node} rejected ({})",
        summary.join(", "),
        cert.failures[0].reason
    ))
}

fn p(name: &str) -> Ltl {
    Ltl::Atom(Formula::Var(Var::boolean(name).indexed(1)))
}
fn not_(f: Ltl) -> Ltl {
    Ltl::Not(Box::new(f))
}
fn g(f: Ltl) -> Ltl {
    Ltl::Globally(Box::new(f))
}
fn x(f: Ltl) -> Ltl {
    Ltl::Next(Box::new(f))
}
fn w(a: Ltl, b: Ltl) -> Ltl {
    Ltl::WeakUntil(Box::new(a), Box::new(b))
}
fn imp(a: Ltl, b: Ltl) -> Ltl {
    Ltl::Implies(Box::new(a), Box::new(b))
}
fn and2(a: Ltl, b: Ltl) -> Ltl {
    Ltl::And(vec![a, b])
}
fn or2(a: Ltl, b: Ltl) -> Ltl {
    Ltl::Or(vec![a, b])
}

fn corpus() -> Vec<Ltl> {
    let (a, b) = (|| p("a"), || p("b"));
    vec![
        a(),
        not_(a()),
        g(a()),
        g(not_(a())),
        x(a()),
        x(x(b())),
        g(imp(a(), x(b()))),
        g(imp(a(), x(x(b())))),
        g(or2(a(), b())),
        g(and2(a(), b())),
        imp(a(), g(b())),
        w(a(), b()),
        w(a(), g(b())),
        g(w(a(), b())),
        not_(Ltl::Finally(Box::new(a()))),
        not_(Ltl::Until(Box::new(a()), Box::new(b()))),
        g(imp(a(), w(a(), b()))),
        and2(g(a()), g(not_(a()))),
        and2(x(a()), x(not_(a()))),
        x(x(and2(a(), not_(a())))),
        g(imp(a(), x(not_(a())))),
        g(imp(x(a()), b())),
        or2(g(a()), g(b())),
        and2(g(imp(a(), x(b()))), g(imp(b(), x(not_(b()))))),
        w(not_(a()), and2(a(), b())),
        g(imp(a(), g(b()))),
        x(g(a())),
        imp(a(), x(g(not_(b())))),
        not_(x(Ltl::Finally(Box::new(and2(a(), b()))))),
        g(imp(and2(a(), b()), x(x(a())))),
        w(a(), x(b())),
        Ltl::Atom(Formula::Bool(true)),
        and2(a(), g(imp(a(), x(a())))),
    ]
}

/// Truth of `f` at every position of the lasso `word[..start] word[start..]^ω`.
fn lasso_table(f: &Ltl, atoms: &[Formula], word: &[u32], start: usize) -> Vec<bool> {
    let n = word.len();
    let next = |i: usize| if i + 1 < n { i + 1 } else { start };
    let fix = |init: bool, step: &dyn Fn(usize, &[bool]) -> bool| {
        let mut v = vec![init; n];
        loop {
            let mut changed = false;
            for i in (0..n).rev() {
                let b = step(i, &v);
                if b != v[i] {
                    v[i] = b;
                    changed = true;
                }
            }
            if !changed {
                return v;
            }
        }
    };
    match f {
        Ltl::Atom(Formula::Bool(b)) => vec![*b; n],
        Ltl::Atom(a) => {
            let bit = atoms.iter().position(|x| x == a).expect("known atom");
            word.iter().map(|l| l >> bit & 1 == 1).collect()
        }
        Ltl::Not(a) => lasso_table(a, atoms, word, start).into_iter().map(|b| !b).collect(),
        Ltl::And(fs) => {
            let ts: Vec<Vec<bool>> = fs.iter().map(|f| lasso_table(f, atoms, word, start)).collect();
            (0..n).map(|i| ts.iter().all(|t| t[i])).collect()
        }
        Ltl::Or(fs) => {
            let ts: Vec<Vec<bool>> = fs.iter().map(|f| lasso_table(f, atoms, word, start)).collect();
            (0..n).map(|i| ts.iter().any(|t| t[i])).collect()
        }
        Ltl::Implies(a, b) => {
            let (ta, tb) = (lasso_table(a, atoms, word, start), lasso_table(b, atoms, word, start));
            (0..n).map(|i| !ta[i] || tb[i]).collect()
        }
        Ltl::Next(a) => {
            let t = lasso_table(a, atoms, word, start);
            (0..n).map(|i| t[next(i)]).collect()
        }
        Ltl::Globally(a) => {
            let t = lasso_table(a, atoms, word, start);
            fix(true, &|i, v| t[i] && v[next(i)])
        }
        Ltl::Finally(a) => {
            let t = lasso_table(a, atoms, word, start);
            fix(false, &|i, v| t[i] || v[next(i)])
        }
        Ltl::Until(a, b) => {
            let (ta, tb) = (lasso_table(a, atoms, word, start), lasso_table(b, atoms, word, start));
            fix(false, &|i, v| tb[i] || (ta[i] && v[next(i)]))
        }
        Ltl::WeakUntil(a, b) => {
            let (ta, tb) = (lasso_table(a, atoms, word, start), lasso_table(b, atoms, word, start));
            fix(true, &|i, v| tb[i] || (ta[i] && v[next(i)]))
        }
    }
}

/// Whether some lasso continuation of `prefix` with a stem of at most one
/// letter and a loop of at most two letters satisfies `f`.
fn extendable(f: &Ltl, atoms: &[Formula], prefix: &[u32], letters: u32) -> bool {
    let mut stems: Vec<Vec<u32>> = vec![Vec::new()];
    stems.extend((0..letters).map(|l| vec![l]));
    let mut loops: Vec<Vec<u32>> = (0..letters).map(|l| vec![l]).collect();
    loops.extend((0..letters * letters).map(|l| vec![l / letters, l % letters]));
    for stem in &stems {
        for lp in &loops {
            let mut word = prefix.to_vec();
            word.extend(stem);
            let start = word.len();
            word.extend(lp);
            if lasso_table(f, atoms, &word, start)[0] {
                return true;
            }
        }
    }
    false
}

fn automata() -> Check {
    let formulas = corpus();
    ensure!(formulas.len() >= AUTOMATON_FORMULAS, "corpus has {} formulas", formulas.len());
    let s = solver();
    let mut prefixes_checked = 0usize;
    for (idx, f) in formulas.iter().enumerate() {
        let aut = ltl_to_safety_automaton(f).map_err(|e| format!("formula {idx}: {e}"))?;
        aut.check_deterministic_total(&s).map_err(|e| format!("formula {idx}: {e}"))?;
        let atoms: Vec<Formula> = f.atoms().into_iter().filter(|a| !matches!(a, Formula::Bool(_))).collect();
        let letters = 1u32 << atoms.len();
        // good[len][word index]: some infinite continuation satisfies f.
        let mut good: Vec<Vec<bool>> = vec![Vec::new(); PREFIX_LEN + 1];
        let count = |len: usize| (letters as usize).pow(len as u32);
        let decode = |mut idx: usize, len: usize| {
            let mut w = vec![0u32; len];
            for slot in w.iter_mut().rev() {
                *slot = (idx % letters as usize) as u32;
                idx /= letters as usize;
            }
            w
        };
        good[PREFIX_LEN] = (0..count(PREFIX_LEN)).map(|i| extendable(f, &atoms, &decode(i, PREFIX_LEN), letters)).collect();
        for len in (0..PREFIX_LEN).rev() {
            good[len] = (0..count(len))
                .map(|i| (0..letters as usize).any(|l| good[len + 1][i * letters as usize + l]))
                .collect();
        }
        for (len, row) in good.iter().enumerate() {
            for (i, &ok) in row.iter().enumerate() {
                let word = decode(i, len);
                let rejected = aut.rejects_prefix(&atoms, &word).map_err(|e| format!("formula {idx}: {e}"))?;
                ensure!(rejected != ok, "formula {idx} ({f:?}) on {word:?}: automaton rejects={rejected}, semantics bad={}", !ok);
                prefixes_checked += 1;
            }
        }
    }
    Ok(format!("{} formulas, {prefixes_checked} prefixes of length 0..={PREFIX_LEN} agree; all deterministic and total", formulas.len()))
}

fn main() {
    let mut shared = Shared::default();
    let mut results: Vec<(usize, &str, Check)> = Vec::new();
    let mut run = |id: usize, name: &'static str, f: &mut dyn FnMut(&mut Shared) -> Check, shared: &mut Shared| {
        let start = Instant::now();
        let r = catch_unwind(AssertUnwindSafe(|| f(shared))).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let status = if r.is_ok() { "PASS" } else { "FAIL" };
        let detail = match &r {
            Ok(d) | Err(d) => d,
        };
        println!("{status} {id} {name}: {detail} [{:.1}s]", start.elapsed().as_secs_f64());
        results.push((id, name, r));
    };
    run(1, "fig1-forall", &mut |_| fig1(), &mut shared);
    run(2, "fig2-lazy", &mut fig2, &mut shared);
    run(3, "gni", &mut gni, &mut shared);
    run(4, "soundness-fuzz", &mut |_| soundness_fuzz(), &mut shared);
    run(5, "lemma1-monotonicity", &mut |_| lemma1(), &mut shared);
    run(6, "lazy-direct-agreement", &mut |s| lazy_direct_agreement(s), &mut shared);
    run(7, "projection", &mut |_| projection(), &mut shared);
    run(8, "certification", &mut |s| certification(s), &mut shared);
    run(9, "automaton", &mut |_| automata(), &mut shared);
    let failed: Vec<usize> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    let by_id: HashMap<usize, &str> = results.iter().map(|r| (r.0, r.1)).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", results.len());
    } else {
        let names: Vec<String> = failed.iter().map(|i| format!("{i} {}", by_id[i])).collect();
        println!("acceptance: failed {}", names.join(", "));
        std::process::exit(1);
    }
}

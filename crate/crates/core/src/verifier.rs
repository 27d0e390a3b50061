//! Game construction and the verification loops: the ∀ game, the direct
//! ∀∃ game over all valid restrictions, and lazy restriction refinement.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::abstraction::{AbstractState, Abstraction, AbstractionError, Copies, CompositionContext, Restriction, Scheduling};
use crate::arena::{reachable_under, GameNode, Player, SafetyGame, StrategyAction, StrategyExport, StrategyNode};
use crate::smt::{QueryCounts, SmtError, Solver};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Verified,
    Unknown,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Verified => "VERIFIED",
            Verdict::Unknown => "UNKNOWN",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct VerifierStats {
    pub env_nodes: usize,
    pub sched_nodes: usize,
    pub iterations: usize,
    pub valid_res_queries: u64,
    pub antichain_size: usize,
    pub antichain_peak: usize,
    pub successor_sets: u64,
    pub enumeration_fallbacks: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub mode: String,
    pub verdict: Verdict,
    /// Nodes of the initial abstract game.
    pub size: usize,
    /// Seconds spent building the abstraction.
    pub t_abs: f64,
    /// Seconds spent solving games and checking restrictions.
    pub t_solve: f64,
    pub refinements: usize,
    pub query_counts: QueryCounts,
    pub stats: VerifierStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub report: VerificationReport,
    /// SAFE's winning strategy, when the verdict is VERIFIED.
    pub strategy: Option<StrategyExport>,
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("direct construction needs {found} successors at one node; the subset bound is {bound}")]
    SubsetBound { found: usize, bound: usize },
    #[error(transparent)]
    Abstraction(#[from] AbstractionError),
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    /// Upper bound on explored abstract nodes.
    pub max_nodes: usize,
    /// Largest successor set the direct construction enumerates subsets of.
    pub subset_bound: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { max_nodes: 500_000, subset_bound: 16 }
    }
}

/// One SAFE position (ŝ, q, b) of the abstract game, with its moves.
#[derive(Clone, Debug)]
pub struct EnvNode {
    pub state: AbstractState,
    pub q: usize,
    pub moved: Copies,
    pub bad: bool,
    pub kind: EnvKind,
}

#[derive(Clone, Debug)]
pub enum EnvKind {
    /// Bad nodes are not expanded.
    Stop,
    /// Every copy moved and observes: the automaton steps.
    Observe { next: usize },
    Moves(Vec<Move>),
}

#[derive(Clone, Debug)]
pub struct Move {
    pub sched: Scheduling,
    /// M-successor cubes with the Env node each leads to.
    pub succ: Vec<(AbstractState, usize)>,
}

/// All Env nodes reachable when SAFE may pick any scheduling and every
/// M-successor is possible.
#[derive(Clone, Debug, Default)]
pub struct EnvGraph {
    pub nodes: Vec<EnvNode>,
    pub initial: Vec<usize>,
}

impl EnvGraph {
    pub fn size(&self) -> usize {
        self.nodes.len()
            + self
                .nodes
                .iter()
                .map(|n| match &n.kind {
                    EnvKind::Moves(ms) => ms.len(),
                    _ => 0,
                })
                .sum::<usize>()
    }

    fn sched_nodes(&self) -> usize {
        self.size() - self.nodes.len()
    }
}

/// Explores the abstract game graph from the initial abstract states.
pub fn build_env_graph(abs: &Abstraction, opts: &VerifyOptions) -> Result<EnvGraph, AbstractionError> {
    let ctx = abs.ctx;
    let aut = &ctx.automaton;
    let mut graph = EnvGraph::default();
    let mut ids: HashMap<(AbstractState, usize, Copies), usize> = HashMap::new();
    let mut queue = VecDeque::new();
    let mut intern = |graph: &mut EnvGraph, queue: &mut VecDeque<usize>, key: (AbstractState, usize, Copies)| -> Result<usize, AbstractionError> {
        if let Some(&id) = ids.get(&key) {
            return Ok(id);
        }
        if graph.nodes.len() >= opts.max_nodes {
            return Err(AbstractionError::Blowup(opts.max_nodes));
        }
        let id = graph.nodes.len();
        let bad = aut.is_bad(key.1);
        graph.nodes.push(EnvNode { state: key.0, q: key.1, moved: key.2, bad, kind: EnvKind::Stop });
        ids.insert(key, id);
        queue.push_back(id);
        Ok(id)
    };
    let all = Copies::all(ctx.k);
    for s in abs.initial_abstract_states()? {
        let id = intern(&mut graph, &mut queue, (s, aut.init, all))?;
        graph.initial.push(id);
    }
    while let Some(id) = queue.pop_front() {
        let EnvNode { state, q, moved, bad, .. } = graph.nodes[id].clone();
        if bad {
            continue;
        }
        let obs = abs.obs_vector(&state)?;
        let kind = if moved == all && obs == all {
            let q2 = abs.delta(q, &state)?;
            EnvKind::Observe { next: intern(&mut graph, &mut queue, (state, q2, Copies::default()))? }
        } else {
            let mut moves = Vec::new();
            for m in Copies::nonempty_subsets(ctx.k) {
                if !m.iter().all(|i| !moved.contains(i) || !obs.contains(i)) {
                    continue;
                }
                let succ = abs.m_successors(&state, m)?;
                let mut targets = Vec::with_capacity(succ.len());
                for t in succ.iter() {
                    targets.push((*t, intern(&mut graph, &mut queue, (*t, q, moved.union(m)))?));
                }
                moves.push(Move { sched: m, succ: targets });
            }
            EnvKind::Moves(moves)
        };
        graph.nodes[id].kind = kind;
    }
    Ok(graph)
}

fn stats_of(abs: &Abstraction, graph: &EnvGraph) -> VerifierStats {
    let a = abs.stats();
    VerifierStats {
        env_nodes: graph.nodes.len(),
        sched_nodes: graph.sched_nodes(),
        valid_res_queries: a.valid_res_queries,
        successor_sets: a.successor_sets,
        enumeration_fallbacks: a.enumeration_fallbacks,
        ..VerifierStats::default()
    }
}

fn base_warnings(ctx: &CompositionContext) -> Vec<String> {
    let mut w = Vec::new();
    if ctx.l < ctx.k {
        w.push(
            "existential copies are assumed to reach their observation points infinitely often; this is not checked"
                .to_string(),
        );
    }
    w
}

struct Clock {
    start: Instant,
}

impl Clock {
    fn new() -> Self {
        Clock { start: Instant::now() }
    }
    fn secs(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

fn unknown_on_deadline(
    mode: &str,
    e: AbstractionError,
    solver: &Solver,
    t_abs: f64,
    t_solve: f64,
) -> Result<Outcome, VerifyError> {
    match e {
        AbstractionError::Smt(SmtError::Deadline) => Ok(Outcome {
            report: VerificationReport {
                mode: mode.to_string(),
                verdict: Verdict::Unknown,
                size: 0,
                t_abs,
                t_solve,
                refinements: 0,
                query_counts: solver.counts(),
                stats: VerifierStats::default(),
                reason: Some("timeout".into()),
                warnings: Vec::new(),
            },
            strategy: None,
        }),
        other => Err(other.into()),
    }
}

/// Chosen SAFE action per Env node, used for export.
#[derive(Clone, Debug)]
enum Choice {
    Observe(usize),
    Schedule { sched: Scheduling, targets: Vec<(AbstractState, usize)> },
}

fn export(ctx: &CompositionContext, graph: &EnvGraph, choices: &HashMap<usize, Choice>) -> StrategyExport {
    let mut seen = vec![false; graph.nodes.len()];
    let mut order = Vec::new();
    let mut queue: VecDeque<usize> = graph.initial.iter().copied().collect();
    for &v in &graph.initial {
        seen[v] = true;
    }
    while let Some(v) = queue.pop_front() {
        order.push(v);
        let next: Vec<usize> = match choices.get(&v) {
            Some(Choice::Observe(w)) => vec![*w],
            Some(Choice::Schedule { targets, .. }) => targets.iter().map(|t| t.1).collect(),
            None => Vec::new(),
        };
        for w in next {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.sort_unstable();
    let nodes = order
        .into_iter()
        .filter_map(|v| {
            let n = &graph.nodes[v];
            let action = match choices.get(&v)? {
                Choice::Observe(w) => StrategyAction::Observe { next: *w },
                Choice::Schedule { sched, targets } => StrategyAction::Schedule {
                    sched: sched.members(),
                    targets: targets.iter().map(|t| t.0.to_string()).collect(),
                    successors: targets.iter().map(|t| t.1).collect(),
                },
            };
            Some(StrategyNode {
                id: v,
                cube: n.state.to_string(),
                label: ctx.describe(&n.state),
                q: ctx.automaton.states[n.q].clone(),
                moved: n.moved.members(),
                action,
            })
        })
        .collect();
    StrategyExport {
        predicates: ctx.predicates.iter().map(|p| p.name.clone()).collect(),
        trace_names: ctx.trace_names.clone(),
        k: ctx.k,
        l: ctx.l,
        automaton_states: ctx.automaton.states.clone(),
        initial: graph.initial.clone(),
        nodes,
    }
}

/// The explicit ∀ game: Env nodes for SAFE, one Sched node per scheduling
/// for REACH. Sched node ids follow all Env node ids.
pub fn build_forall_game(graph: &EnvGraph) -> SafetyGame<GameNode> {
    let mut game = SafetyGame::new();
    for n in &graph.nodes {
        game.add_node(GameNode::Env { state: n.state, q: n.q, moved: n.moved }, Player::Safe, n.bad);
    }
    for (v, n) in graph.nodes.iter().enumerate() {
        match &n.kind {
            EnvKind::Stop => {}
            EnvKind::Observe { next } => game.add_edge(v, *next),
            EnvKind::Moves(moves) => {
                for mv in moves {
                    let s = game.add_node(
                        GameNode::Sched { state: n.state, q: n.q, moved: n.moved, sched: mv.sched },
                        Player::Reach,
                        false,
                    );
                    game.add_edge(v, s);
                    for &(_, w) in &mv.succ {
                        game.add_edge(s, w);
                    }
                }
            }
        }
    }
    game.initial = graph.initial.clone();
    game
}

/// Verifies a property with universal quantifiers only (or treats every
/// copy as universal): VERIFIED iff SAFE wins the ∀ game.
pub fn verify_forall(ctx: &CompositionContext, solver: &Solver, opts: &VerifyOptions) -> Result<Outcome, VerifyError> {
    let clock = Clock::new();
    let abs = Abstraction::new(ctx, solver);
    let graph = match build_env_graph(&abs, opts) {
        Ok(g) => g,
        Err(e) => return unknown_on_deadline("forall", e, solver, clock.secs(), 0.0),
    };
    let t_abs = clock.secs();
    let solve_clock = Clock::new();
    let mut warnings = base_warnings(ctx);
    warnings.extend(abs.warnings());
    if graph.initial.is_empty() {
        warnings.push("no initial abstract state: the property holds vacuously".into());
    }
    let game = build_forall_game(&graph);
    let sol = game.solve();
    let mut strategy = None;
    if sol.safe_wins {
        let pos = sol.maximal_strategy(&game).extract_positional();
        let mut choices = HashMap::new();
        for v in reachable_under(&game, &pos) {
            if v >= graph.nodes.len() {
                continue;
            }
            let Some(&w) = pos.get(&v) else { continue };
            let choice = match (&game.nodes[w], &graph.nodes[v].kind) {
                (GameNode::Env { .. }, _) => Choice::Observe(w),
                (GameNode::Sched { sched, .. }, EnvKind::Moves(moves)) => {
                    let mv = moves.iter().find(|m| m.sched == *sched).expect("move of chosen scheduling");
                    Choice::Schedule { sched: *sched, targets: mv.succ.clone() }
                }
                _ => continue,
            };
            choices.insert(v, choice);
        }
        strategy = Some(export(ctx, &graph, &choices));
    }
    let report = VerificationReport {
        mode: "forall".into(),
        verdict: if sol.safe_wins { Verdict::Verified } else { Verdict::Unknown },
        size: graph.size(),
        t_abs,
        t_solve: solve_clock.secs(),
        refinements: 0,
        query_counts: solver.counts(),
        stats: VerifierStats { iterations: 1, ..stats_of(&abs, &graph) },
        reason: None,
        warnings,
    };
    Ok(Outcome { report, strategy })
}

/// Maximal sets of cubes known to be invalid restrictions, per (ŝ, M).
/// A restriction is available unless it is a subset of a stored set.
#[derive(Clone, Debug, Default)]
pub struct InvalidAntichain {
    sets: HashMap<(AbstractState, Scheduling), Vec<BTreeSet<AbstractState>>>,
    size: usize,
    peak: usize,
}

impl InvalidAntichain {
    pub fn available(&self, r: &Restriction) -> bool {
        self.sets.get(&(r.state, r.sched)).is_none_or(|sets| !sets.iter().any(|s| r.targets.is_subset(s)))
    }

    /// Records an invalid restriction, dropping stored subsets of it.
    pub fn insert(&mut self, r: &Restriction) {
        let entry = self.sets.entry((r.state, r.sched)).or_default();
        if entry.iter().any(|s| r.targets.is_subset(s)) {
            return;
        }
        let before = entry.len();
        entry.retain(|s| !s.is_subset(&r.targets));
        self.size -= before - entry.len();
        entry.push(r.targets.clone());
        self.size += 1;
        self.peak = self.peak.max(self.size);
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn peak(&self) -> usize {
        self.peak
    }

    /// Every stored set, for inspection.
    pub fn entries(&self) -> impl Iterator<Item = (&(AbstractState, Scheduling), &Vec<BTreeSet<AbstractState>>)> {
        self.sets.iter()
    }
}

/// Minimal sets of cubes known to be valid restrictions, per (ŝ, M).
/// By upward closure every superset is valid too.
#[derive(Clone, Debug, Default)]
struct ValidStore {
    sets: HashMap<(AbstractState, Scheduling), Vec<BTreeSet<AbstractState>>>,
}

impl ValidStore {
    fn known(&self, r: &Restriction) -> bool {
        self.sets.get(&(r.state, r.sched)).is_some_and(|sets| sets.iter().any(|s| s.is_subset(&r.targets)))
    }

    fn insert(&mut self, r: &Restriction) {
        if self.known(r) {
            return;
        }
        let entry = self.sets.entry((r.state, r.sched)).or_default();
        entry.retain(|s| !r.targets.is_subset(s));
        entry.push(r.targets.clone());
    }
}

/// Winning region of the game with restrictions, where SAFE may pick any
/// restriction the antichain does not exclude. Because available sets are
/// upward closed, SAFE's best restriction for a move is the set of
/// successors that are still winning.
fn lazy_winning_region(graph: &EnvGraph, invalid: &InvalidAntichain) -> Vec<bool> {
    let n = graph.nodes.len();
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (v, node) in graph.nodes.iter().enumerate() {
        match &node.kind {
            EnvKind::Stop => {}
            EnvKind::Observe { next } => pred[*next].push(v),
            EnvKind::Moves(ms) => {
                for m in ms {
                    for &(_, w) in &m.succ {
                        pred[w].push(v);
                    }
                }
            }
        }
    }
    let mut win: Vec<bool> = graph.nodes.iter().map(|n| !n.bad).collect();
    let mut queue: VecDeque<usize> = (0..n).collect();
    let mut queued = vec![true; n];
    while let Some(v) = queue.pop_front() {
        queued[v] = false;
        if !win[v] {
            continue;
        }
        let node = &graph.nodes[v];
        let ok = match &node.kind {
            EnvKind::Stop => false,
            EnvKind::Observe { next } => win[*next],
            EnvKind::Moves(ms) => ms.iter().any(|m| best_restriction(node, m, &win).is_some_and(|r| invalid.available(&r))),
        };
        if !ok {
            win[v] = false;
            for &u in &pred[v] {
                if win[u] && !queued[u] {
                    queued[u] = true;
                    queue.push_back(u);
                }
            }
        }
    }
    win
}

fn best_restriction(node: &EnvNode, m: &Move, win: &[bool]) -> Option<Restriction> {
    let targets: BTreeSet<AbstractState> = m.succ.iter().filter(|(_, w)| win[*w]).map(|(t, _)| *t).collect();
    if targets.is_empty() {
        None
    } else {
        Some(Restriction { state: node.state, sched: m.sched, targets })
    }
}

/// Picks one restriction per winning Env node: a move whose restriction is
/// already known valid (or keeps every successor) if there is one, otherwise
/// the move that drops the fewest successors, lowest index first.
fn lazy_strategy(
    graph: &EnvGraph,
    win: &[bool],
    invalid: &InvalidAntichain,
    valid: &ValidStore,
) -> (HashMap<usize, Choice>, Vec<Restriction>) {
    let mut choices = HashMap::new();
    let mut used = Vec::new();
    let mut seen = vec![false; graph.nodes.len()];
    let mut queue: VecDeque<usize> = graph.initial.iter().copied().collect();
    for &v in &graph.initial {
        seen[v] = true;
    }
    while let Some(v) = queue.pop_front() {
        let node = &graph.nodes[v];
        let choice = match &node.kind {
            EnvKind::Stop => continue,
            EnvKind::Observe { next } => Choice::Observe(*next),
            EnvKind::Moves(ms) => {
                let candidates: Vec<(&Move, Restriction)> = ms
                    .iter()
                    .filter_map(|m| best_restriction(node, m, win).filter(|r| invalid.available(r)).map(|r| (m, r)))
                    .collect();
                let Some((m, r)) = candidates
                    .iter()
                    .find(|(m, r)| valid.known(r) || r.targets.len() == m.succ.len())
                    .or_else(|| candidates.iter().min_by_key(|(m, r)| m.succ.len() - r.targets.len()))
                    .cloned()
                else {
                    continue;
                };
                let targets: Vec<(AbstractState, usize)> =
                    m.succ.iter().filter(|(t, _)| r.targets.contains(t)).copied().collect();
                if !used.contains(&r) {
                    used.push(r);
                }
                Choice::Schedule { sched: m.sched, targets }
            }
        };
        let next: Vec<usize> = match &choice {
            Choice::Observe(w) => vec![*w],
            Choice::Schedule { targets, .. } => targets.iter().map(|t| t.1).collect(),
        };
        choices.insert(v, choice);
        for w in next {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    (choices, used)
}

/// Lazy restriction refinement: solve the game in which every restriction
/// not yet known to be invalid is allowed; check the restrictions the
/// resulting strategy uses; on the first invalid one, exclude it and all its
/// subsets and solve again.
pub fn verify_exists_lazy(ctx: &CompositionContext, solver: &Solver, opts: &VerifyOptions) -> Result<Outcome, VerifyError> {
    let clock = Clock::new();
    let abs = Abstraction::new(ctx, solver);
    let graph = match build_env_graph(&abs, opts) {
        Ok(g) => g,
        Err(e) => return unknown_on_deadline("lazy", e, solver, clock.secs(), 0.0),
    };
    let t_abs = clock.secs();
    let solve_clock = Clock::new();
    let mut invalid = InvalidAntichain::default();
    let mut valid = ValidStore::default();
    let mut refinements = 0;
    let mut iterations = 0;
    let mut warnings = base_warnings(ctx);
    if graph.initial.is_empty() {
        warnings.push("no initial abstract state: the property holds vacuously".into());
    }
    let (verdict, strategy, reason) = loop {
        iterations += 1;
        let win = lazy_winning_region(&graph, &invalid);
        if !graph.initial.iter().all(|&v| win[v]) {
            break (Verdict::Unknown, None, None);
        }
        let (choices, used) = lazy_strategy(&graph, &win, &invalid, &valid);
        let mut refined = false;
        for r in &used {
            if valid.known(r) {
                continue;
            }
            let ok = match abs.check_valid_res(r) {
                Ok(ok) => ok,
                Err(AbstractionError::Smt(SmtError::Deadline)) => {
                    refined = true;
                    break;
                }
                Err(e) => return Err(e.into()),
            };
            if ok {
                valid.insert(r);
            } else {
                invalid.insert(r);
                refinements += 1;
                refined = true;
                break;
            }
        }
        if solver.config().deadline.is_some_and(|d| Instant::now() >= d) {
            break (Verdict::Unknown, None, Some("timeout".to_string()));
        }
        if !refined {
            break (Verdict::Verified, Some(export(ctx, &graph, &choices)), None);
        }
    };
    warnings.extend(abs.warnings());
    let report = VerificationReport {
        mode: "lazy".into(),
        verdict,
        size: graph.size(),
        t_abs,
        t_solve: solve_clock.secs(),
        refinements,
        query_counts: solver.counts(),
        stats: VerifierStats {
            iterations,
            antichain_size: invalid.len(),
            antichain_peak: invalid.peak(),
            ..stats_of(&abs, &graph)
        },
        reason,
        warnings,
    };
    Ok(Outcome { report, strategy })
}

/// The explicit ∀∃ game: one SchedR node for every valid restriction.
pub fn build_exists_game_direct(
    abs: &Abstraction,
    graph: &EnvGraph,
    opts: &VerifyOptions,
) -> Result<SafetyGame<GameNode>, VerifyError> {
    let mut game = SafetyGame::new();
    for n in &graph.nodes {
        game.add_node(GameNode::Env { state: n.state, q: n.q, moved: n.moved }, Player::Safe, n.bad);
    }
    let mut valid_subsets: HashMap<(AbstractState, Scheduling), Arc<Vec<Vec<usize>>>> = HashMap::new();
    for (v, n) in graph.nodes.iter().enumerate() {
        match &n.kind {
            EnvKind::Stop => {}
            EnvKind::Observe { next } => game.add_edge(v, *next),
            EnvKind::Moves(moves) => {
                for mv in moves {
                    let size = mv.succ.len();
                    if size > opts.subset_bound {
                        return Err(VerifyError::SubsetBound { found: size, bound: opts.subset_bound });
                    }
                    let key = (n.state, mv.sched);
                    let subsets = match valid_subsets.get(&key) {
                        Some(s) => s.clone(),
                        None => {
                            let mut ok = Vec::new();
                            for mask in 1u32..(1u32 << size) {
                                let members: Vec<usize> = (0..size).filter(|i| mask >> i & 1 == 1).collect();
                                let r = Restriction {
                                    state: n.state,
                                    sched: mv.sched,
                                    targets: members.iter().map(|&i| mv.succ[i].0).collect(),
                                };
                                if abs.check_valid_res(&r)? {
                                    ok.push(members);
                                }
                            }
                            let ok = Arc::new(ok);
                            valid_subsets.insert(key, ok.clone());
                            ok
                        }
                    };
                    for members in subsets.iter() {
                        let targets: Vec<AbstractState> = members.iter().map(|&i| mv.succ[i].0).collect();
                        let s = game.add_node(
                            GameNode::SchedR { state: n.state, q: n.q, moved: n.moved, sched: mv.sched, targets },
                            Player::Reach,
                            false,
                        );
                        game.add_edge(v, s);
                        for &i in members {
                            game.add_edge(s, mv.succ[i].1);
                        }
                    }
                }
            }
        }
    }
    game.initial = graph.initial.clone();
    Ok(game)
}

/// Direct ∀∃ verification over the fully enumerated restriction game.
pub fn verify_exists_direct(ctx: &CompositionContext, solver: &Solver, opts: &VerifyOptions) -> Result<Outcome, VerifyError> {
    let clock = Clock::new();
    let abs = Abstraction::new(ctx, solver);
    let graph = match build_env_graph(&abs, opts) {
        Ok(g) => g,
        Err(e) => return unknown_on_deadline("direct", e, solver, clock.secs(), 0.0),
    };
    let game = match build_exists_game_direct(&abs, &graph, opts) {
        Ok(g) => g,
        Err(VerifyError::Abstraction(e)) => return unknown_on_deadline("direct", e, solver, clock.secs(), 0.0),
        Err(e) => return Err(e),
    };
    let t_abs = clock.secs();
    let solve_clock = Clock::new();
    let sol = game.solve();
    let mut strategy = None;
    if sol.safe_wins {
        let pos = sol.maximal_strategy(&game).extract_positional();
        let mut choices = HashMap::new();
        for v in reachable_under(&game, &pos) {
            if v >= graph.nodes.len() {
                continue;
            }
            let Some(&w) = pos.get(&v) else { continue };
            let choice = match &game.nodes[w] {
                GameNode::Env { .. } => Choice::Observe(w),
                GameNode::SchedR { sched, targets, .. } => {
                    let EnvKind::Moves(moves) = &graph.nodes[v].kind else { continue };
                    let mv = moves.iter().find(|m| m.sched == *sched).expect("move of chosen scheduling");
                    Choice::Schedule {
                        sched: *sched,
                        targets: mv.succ.iter().filter(|(t, _)| targets.contains(t)).copied().collect(),
                    }
                }
                GameNode::Sched { .. } => continue,
            };
            choices.insert(v, choice);
        }
        strategy = Some(export(ctx, &graph, &choices));
    }
    let mut warnings = base_warnings(ctx);
    warnings.extend(abs.warnings());
    let report = VerificationReport {
        mode: "direct".into(),
        verdict: if sol.safe_wins { Verdict::Verified } else { Verdict::Unknown },
        size: game.len(),
        t_abs,
        t_solve: solve_clock.secs(),
        refinements: 0,
        query_counts: solver.counts(),
        stats: VerifierStats { iterations: 1, ..stats_of(&abs, &graph) },
        reason: None,
        warnings,
    };
    Ok(Outcome { report, strategy })
}

/// Convenience: the ∀ game when every quantifier is universal, the lazy
/// loop otherwise.
pub fn verify(ctx: &CompositionContext, solver: &Solver, opts: &VerifyOptions) -> Result<Outcome, VerifyError> {
    if ctx.l == ctx.k {
        verify_forall(ctx, solver, opts)
    } else {
        verify_exists_lazy(ctx, solver, opts)
    }
}

/// Deadline helper for callers.
pub fn deadline_after(limit: Option<Duration>) -> Option<Instant> {
    limit.map(|d| Instant::now() + d)
}

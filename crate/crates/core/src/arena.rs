//! Two-player safety games on finite graphs and their strategies.
//!
//! SAFE wants to avoid the bad nodes forever; REACH wants to visit one.
//! A SAFE node without successors is lost for SAFE, a REACH node without
//! successors is won by SAFE.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::abstraction::{AbstractState, Copies, Scheduling};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Player {
    Safe,
    Reach,
}

/// Node of the abstract verification games.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum GameNode {
    /// SAFE picks a scheduling (or the automaton reads the state).
    Env { state: AbstractState, q: usize, moved: Copies },
    /// REACH picks an M-successor.
    Sched { state: AbstractState, q: usize, moved: Copies, sched: Scheduling },
    /// REACH picks a successor inside the restriction.
    SchedR { state: AbstractState, q: usize, moved: Copies, sched: Scheduling, targets: Vec<AbstractState> },
}

impl GameNode {
    pub fn owner(&self) -> Player {
        match self {
            GameNode::Env { .. } => Player::Safe,
            GameNode::Sched { .. } | GameNode::SchedR { .. } => Player::Reach,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct SafetyGame<N> {
    pub nodes: Vec<N>,
    pub owner: Vec<Player>,
    pub succ: Vec<Vec<usize>>,
    pub bad: Vec<bool>,
    pub initial: Vec<usize>,
}

impl<N> SafetyGame<N> {
    pub fn new() -> Self {
        SafetyGame { nodes: Vec::new(), owner: Vec::new(), succ: Vec::new(), bad: Vec::new(), initial: Vec::new() }
    }

    pub fn add_node(&mut self, label: N, owner: Player, bad: bool) -> usize {
        self.nodes.push(label);
        self.owner.push(owner);
        self.succ.push(Vec::new());
        self.bad.push(bad);
        self.nodes.len() - 1
    }

    pub fn add_edge(&mut self, from: usize, to: usize) {
        self.succ[from].push(to);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn predecessors(&self) -> Vec<Vec<usize>> {
        let mut pred = vec![Vec::new(); self.len()];
        for (u, out) in self.succ.iter().enumerate() {
            for &v in out {
                pred[v].push(u);
            }
        }
        pred
    }

    /// Backward attractor of the bad nodes for REACH, by predecessor counting.
    pub fn solve(&self) -> Solution {
        let n = self.len();
        let pred = self.predecessors();
        let mut attracted = vec![false; n];
        let mut remaining: Vec<usize> = self.succ.iter().map(Vec::len).collect();
        let mut queue = VecDeque::new();
        for v in 0..n {
            if self.bad[v] || (self.owner[v] == Player::Safe && self.succ[v].is_empty()) {
                attracted[v] = true;
                queue.push_back(v);
            }
        }
        while let Some(v) = queue.pop_front() {
            for &u in &pred[v] {
                if attracted[u] {
                    continue;
                }
                let pull = match self.owner[u] {
                    Player::Reach => true,
                    Player::Safe => {
                        remaining[u] -= 1;
                        remaining[u] == 0
                    }
                };
                if pull {
                    attracted[u] = true;
                    queue.push_back(u);
                }
            }
        }
        let safe_wins = self.initial.iter().all(|&v| !attracted[v]);
        Solution { attracted, safe_wins }
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    /// Nodes from which REACH can force a visit to a bad node.
    pub attracted: Vec<bool>,
    /// SAFE wins from every initial node.
    pub safe_wins: bool,
}

impl Solution {
    pub fn winning(&self, v: usize) -> bool {
        !self.attracted[v]
    }

    /// For each SAFE node in the winning region, all successors that stay in it.
    pub fn maximal_strategy<N>(&self, game: &SafetyGame<N>) -> MaximalStrategy {
        let mut allowed = BTreeMap::new();
        for v in 0..game.len() {
            if game.owner[v] == Player::Safe && self.winning(v) {
                let keep: Vec<usize> = game.succ[v].iter().copied().filter(|&w| self.winning(w)).collect();
                allowed.insert(v, keep);
            }
        }
        MaximalStrategy { allowed }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaximalStrategy {
    pub allowed: BTreeMap<usize, Vec<usize>>,
}

impl MaximalStrategy {
    /// One move per SAFE node: the lowest-numbered allowed successor.
    pub fn extract_positional(&self) -> BTreeMap<usize, usize> {
        self.allowed.iter().filter_map(|(&v, ws)| ws.iter().min().map(|&w| (v, w))).collect()
    }
}

/// Nodes reachable from the initial nodes when SAFE follows `choice` and
/// REACH plays anything.
pub fn reachable_under<N>(game: &SafetyGame<N>, choice: &BTreeMap<usize, usize>) -> Vec<usize> {
    let mut seen = vec![false; game.len()];
    let mut order = Vec::new();
    let mut queue: VecDeque<usize> = game.initial.iter().copied().collect();
    for &v in &game.initial {
        seen[v] = true;
    }
    while let Some(v) = queue.pop_front() {
        order.push(v);
        let next: Vec<usize> = match game.owner[v] {
            Player::Safe => choice.get(&v).copied().into_iter().collect(),
            Player::Reach => game.succ[v].clone(),
        };
        for w in next {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    order
}

/// What SAFE does at an exported node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategyAction {
    /// All copies observed: the automaton reads the state.
    Observe { next: usize },
    /// Schedule `sched`; the successor lies in `targets`.
    Schedule { sched: Vec<usize>, targets: Vec<String>, successors: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyNode {
    pub id: usize,
    pub cube: String,
    pub label: String,
    pub q: String,
    pub moved: Vec<usize>,
    pub action: StrategyAction,
}

/// A SAFE strategy restricted to the nodes it can reach.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyExport {
    pub predicates: Vec<String>,
    pub trace_names: Vec<String>,
    pub k: usize,
    pub l: usize,
    pub automaton_states: Vec<String>,
    pub initial: Vec<usize>,
    pub nodes: Vec<StrategyNode>,
}

impl StrategyExport {
    pub fn node(&self, id: usize) -> Option<&StrategyNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serialisable")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph strategy {\n  node [shape=box];\n");
        for n in &self.nodes {
            let moved: Vec<String> = n.moved.iter().map(usize::to_string).collect();
            let init = if self.initial.contains(&n.id) { ", penwidth=2" } else { "" };
            let _ = writeln!(
                s,
                "  n{} [label=\"{}\\n{} b={{{}}}\"{init}];",
                n.id,
                n.label.replace('"', "'"),
                n.q,
                moved.join(",")
            );
        }
        for n in &self.nodes {
            match &n.action {
                StrategyAction::Observe { next } => {
                    let _ = writeln!(s, "  n{} -> n{next} [style=dashed];", n.id);
                }
                StrategyAction::Schedule { sched, successors, targets } => {
                    let m: Vec<String> = sched.iter().map(usize::to_string).collect();
                    for w in successors {
                        let _ = writeln!(s, "  n{} -> n{w} [label=\"{{{}}} |A|={}\"];", n.id, m.join(","), targets.len());
                    }
                }
            }
        }
        s.push_str("}\n");
        s
    }
}

//! Verification of ∀*∃* OHyperLTL safety properties of infinite-state
//! systems with predicate abstraction, safety games and lazy refinement of
//! existential restrictions.

pub mod abstraction;
pub mod arena;
pub mod automaton;
pub mod certify;
pub mod frontend;
pub mod logic;
pub mod oracle;
pub mod problem;
pub mod sexp;
pub mod smt;
pub mod verifier;

pub use abstraction::{AbstractState, Abstraction, AbstractionError, CompositionContext, Copies, Restriction, Scheduling};
pub use arena::{GameNode, Player, SafetyGame, StrategyExport};
pub use automaton::{ltl_to_safety_automaton, SafetyAutomaton};
pub use frontend::{HyperProperty, Ltl, Predicate, PredicateSet, Quantifier, QuantKind, Sts};
pub use problem::{Problem, ProblemError};
pub use logic::{Assignment, Formula, Sort, Value, Var};
pub use smt::{QueryCounts, SatResult, Solver, SolverConfig, SmtError, ValidResult};
pub use verifier::{verify, Outcome, Verdict, VerificationReport, VerifyError, VerifyOptions};

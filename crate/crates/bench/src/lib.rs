//! Fixture loading shared by the benchmarks.

use std::path::{Path, PathBuf};

use hypa_core::{CompositionContext, Problem, Solver, SolverConfig};

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(rel)
}

/// A named fixture instance: systems, property, predicates.
pub struct Case {
    pub name: &'static str,
    pub systems: &'static [&'static str],
    pub property: &'static str,
    pub predicates: &'static str,
}

pub const FIG1: Case = Case {
    name: "fig1",
    systems: &["fig1/p1.sexp", "fig1/p2.sexp"],
    property: "fig1/property.sexp",
    predicates: "fig1/predicates.sexp",
};

pub const FIG2: Case = Case {
    name: "fig2",
    systems: &["fig2/q1.sexp", "fig2/q2.sexp"],
    property: "fig2/property.sexp",
    predicates: "fig2/predicates.sexp",
};

pub const ECHO: Case = Case {
    name: "echo",
    systems: &["small/choose.sexp"],
    property: "small/echo.sexp",
    predicates: "small/predicates.sexp",
};

pub const LOOKAHEAD: Case = Case {
    name: "lookahead",
    systems: &["small/reveal.sexp", "small/commit.sexp"],
    property: "small/lookahead.sexp",
    predicates: "small/predicates_lookahead.sexp",
};

impl Case {
    pub fn problem(&self) -> Problem {
        let systems: Vec<PathBuf> = self.systems.iter().map(|s| fixture(s)).collect();
        Problem::load(&systems, &fixture(self.property), Some(&fixture(self.predicates)), None).expect("fixture loads")
    }

    pub fn context(&self) -> CompositionContext {
        self.problem().context(true).expect("context builds")
    }
}

/// A solver with an empty query cache.
pub fn fresh_solver() -> Solver {
    Solver::new(SolverConfig::locate(None).expect("an SMT solver on PATH"))
}

//! A verification problem assembled from its input files.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::abstraction::{AbstractionError, CompositionContext};
use crate::automaton::{ltl_to_safety_automaton, AutomatonError, SafetyAutomaton};
use crate::frontend::{parse_automaton, parse_predicates, parse_property, parse_systems, HyperProperty, ParseError, PredicateSet, Sts};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{file}: {source}")]
    Parse { file: String, source: ParseError },
    #[error("{0}")]
    Automaton(#[from] AutomatonError),
    #[error("system {0} is declared twice")]
    DuplicateSystem(String),
}

#[derive(Clone, Debug)]
pub struct Problem {
    pub systems: Vec<Sts>,
    pub property: HyperProperty,
    pub predicates: PredicateSet,
    pub automaton: SafetyAutomaton,
}

fn parse_err(file: &str) -> impl FnOnce(ParseError) -> ProblemError + '_ {
    move |source| ProblemError::Parse { file: file.to_string(), source }
}

impl Problem {
    /// Builds a problem from file contents. Without an automaton text the
    /// body is translated; without predicates only pc predicates are used.
    pub fn parse(
        systems: &[(&str, &str)],
        property: (&str, &str),
        predicates: Option<(&str, &str)>,
        automaton: Option<(&str, &str)>,
    ) -> Result<Self, ProblemError> {
        let mut sys = Vec::new();
        for (name, text) in systems {
            for s in parse_systems(text).map_err(parse_err(name))? {
                if sys.iter().any(|t: &Sts| t.name == s.name) {
                    return Err(ProblemError::DuplicateSystem(s.name));
                }
                sys.push(s);
            }
        }
        let prop = parse_property(property.1, &sys).map_err(parse_err(property.0))?;
        let preds = match predicates {
            Some((name, text)) => parse_predicates(text, &prop, &sys).map_err(parse_err(name))?,
            None => PredicateSet::default(),
        };
        let aut = match automaton {
            Some((name, text)) => parse_automaton(text, &prop, &sys).map_err(parse_err(name))?,
            None => ltl_to_safety_automaton(&prop.body)?,
        };
        Ok(Problem { systems: sys, property: prop, predicates: preds, automaton: aut })
    }

    pub fn load(
        systems: &[PathBuf],
        property: &Path,
        predicates: Option<&Path>,
        automaton: Option<&Path>,
    ) -> Result<Self, ProblemError> {
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|source| ProblemError::Io { path: p.to_path_buf(), source });
        let sys_texts: Vec<(String, String)> =
            systems.iter().map(|p| Ok((p.display().to_string(), read(p)?))).collect::<Result<_, ProblemError>>()?;
        let prop_text = read(property)?;
        let pred_text = predicates.map(|p| Ok::<_, ProblemError>((p.display().to_string(), read(p)?))).transpose()?;
        let aut_text = automaton.map(|p| Ok::<_, ProblemError>((p.display().to_string(), read(p)?))).transpose()?;
        let sys_refs: Vec<(&str, &str)> = sys_texts.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let prop_name = property.display().to_string();
        Problem::parse(
            &sys_refs,
            (&prop_name, &prop_text),
            pred_text.as_ref().map(|(a, b)| (a.as_str(), b.as_str())),
            aut_text.as_ref().map(|(a, b)| (a.as_str(), b.as_str())),
        )
    }

    /// The composition context, with pc predicates added when `auto_pc`.
    pub fn context(&self, auto_pc: bool) -> Result<CompositionContext, AbstractionError> {
        CompositionContext::new(&self.systems, &self.property, &self.predicates, self.automaton.clone(), auto_pc)
    }
}

//! SMT-LIB2 backend driving an external solver process.
//!
//! Every query runs inside its own `(push 1)`/`(pop 1)` scope, so nothing
//! leaks between queries; a full `(reset)` is issued now and then to bound
//! the solver's memory. Answers other than `unknown` are memoised on the
//! canonical rendering of the formula.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::logic::{Formula, Sort, Value, Var};
use crate::sexp::{self, Sexp};

pub const DEFAULT_QUERY_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SmtError {
    #[error("no SMT solver found: pass --solver, set HYPA_SOLVER or put z3 on PATH")]
    NotFound,
    #[error("failed to start solver {path}: {msg}")]
    Spawn { path: String, msg: String },
    #[error("solver protocol error: {0}")]
    Protocol(String),
    #[error("solver process terminated unexpectedly")]
    Crashed,
    #[error("global deadline exceeded")]
    Deadline,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Model {
    pub values: BTreeMap<Var, Value>,
}

impl Model {
    pub fn get(&self, v: &Var) -> Option<Value> {
        self.values.get(v).copied()
    }

    /// Value of `v`, or the sort default when the solver left it unconstrained.
    pub fn value(&self, v: &Var) -> Value {
        self.get(v).unwrap_or_else(|| Value::default_of(v.sort))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SatResult {
    Sat(Model),
    Unsat,
    Unknown(String),
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }

    pub fn is_unsat(&self) -> bool {
        matches!(self, SatResult::Unsat)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ValidResult {
    Valid,
    Invalid(Model),
    Unknown(String),
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub path: PathBuf,
    pub args: Vec<String>,
    pub query_timeout: Duration,
    pub deadline: Option<Instant>,
}

impl SolverConfig {
    /// Resolves the solver command: explicit flag, then `HYPA_SOLVER`, then `z3` on PATH.
    pub fn locate(flag: Option<&str>) -> Result<SolverConfig, SmtError> {
        let env = std::env::var("HYPA_SOLVER").ok().filter(|s| !s.trim().is_empty());
        let spec = match flag.map(str::to_string).or(env) {
            Some(s) => s,
            None => find_on_path("z3").ok_or(SmtError::NotFound)?.to_string_lossy().into_owned(),
        };
        let mut parts = spec.split_whitespace();
        let path = PathBuf::from(parts.next().ok_or(SmtError::NotFound)?);
        let mut args: Vec<String> = parts.map(str::to_string).collect();
        if args.is_empty() {
            args = default_args(&path);
        }
        Ok(SolverConfig { path, args, query_timeout: DEFAULT_QUERY_TIMEOUT, deadline: None })
    }

    pub fn with_query_timeout(mut self, t: Duration) -> Self {
        self.query_timeout = t;
        self
    }

    pub fn with_deadline(mut self, d: Option<Instant>) -> Self {
        self.deadline = d;
        self
    }
}

fn default_args(path: &Path) -> Vec<String> {
    let name = path.file_name().map(|n| n.to_string_lossy().to_lowercase()).unwrap_or_default();
    if name.contains("z3") {
        vec!["-in".into(), "-smt2".into()]
    } else if name.contains("cvc5") {
        vec!["--lang=smt2".into(), "--incremental".into(), "--produce-models".into()]
    } else {
        Vec::new()
    }
}

fn find_on_path(name: &str) -> Option<PathBuf> {
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path).map(|d| d.join(name)).find(|p| p.is_file())
}

/// Query counters. Shared between threads.
#[derive(Debug, Default)]
struct Counters {
    queries: AtomicU64,
    cache_hits: AtomicU64,
    solver_calls: AtomicU64,
    sat: AtomicU64,
    unsat: AtomicU64,
    unknown: AtomicU64,
    timeouts: AtomicU64,
    restarts: AtomicU64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct QueryCounts {
    pub queries: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub sat: u64,
    pub unsat: u64,
    pub unknown: u64,
    pub timeouts: u64,
    pub restarts: u64,
}

/// One solver process.
pub struct Session {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
    scopes: u32,
}

const PRELUDE: &str = "(set-option :produce-models true)\n";

/// Queries answered between two full resets of a session.
const RESET_EVERY: u32 = 2000;

enum Reply {
    Line(String),
    Timeout,
    Closed,
}

impl Session {
    pub fn spawn(config: &SolverConfig) -> Result<Session, SmtError> {
        let mut child = Command::new(&config.path)
            .args(&config.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| SmtError::Spawn { path: config.path.display().to_string(), msg: e.to_string() })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut session = Session { child, stdin, lines: rx, scopes: 0 };
        session.send(PRELUDE)?;
        Ok(session)
    }

    fn send(&mut self, text: &str) -> Result<(), SmtError> {
        self.stdin.write_all(text.as_bytes()).map_err(|_| SmtError::Crashed)?;
        self.stdin.flush().map_err(|_| SmtError::Crashed)
    }

    fn recv(&self, until: Instant) -> Reply {
        loop {
            let left = until.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(left) {
                Ok(l) if l.trim().is_empty() => continue,
                Ok(l) => return Reply::Line(l),
                Err(RecvTimeoutError::Timeout) => return Reply::Timeout,
                Err(RecvTimeoutError::Disconnected) => return Reply::Closed,
            }
        }
    }

    /// Runs one query. Quantifier-free queries share the session inside a
    /// push/pop scope; quantified ones get a fresh solver state and a declared
    /// logic, since incremental mode handles quantifiers much worse.
    /// `Ok(None)` means the per-query timeout expired and the session must be
    /// discarded.
    fn run(&mut self, f: &Formula, vars: &[Var], timeout: Duration) -> Result<Option<SatResult>, SmtError> {
        let until = Instant::now() + timeout;
        let scoped = !f.has_quantifier();
        if scoped {
            if self.scopes >= RESET_EVERY {
                self.send("(reset)\n")?;
                self.send(PRELUDE)?;
                self.scopes = 0;
            }
            self.scopes += 1;
            self.send("(push 1)\n")?;
            self.send(&emit_query(f))?;
        } else {
            self.send("(reset)\n")?;
            self.send(&emit_script(f))?;
            self.scopes = RESET_EVERY;
        }
        let answer = match self.recv(until) {
            Reply::Line(l) => l,
            Reply::Timeout => return Ok(None),
            Reply::Closed => return Err(SmtError::Crashed),
        };
        let result = self.read_answer(answer, vars, until)?;
        if scoped && result.is_some() {
            self.send("(pop 1)\n")?;
        }
        Ok(result)
    }

    fn read_answer(&mut self, answer: String, vars: &[Var], until: Instant) -> Result<Option<SatResult>, SmtError> {
        match answer.trim() {
            "unsat" => Ok(Some(SatResult::Unsat)),
            "unknown" => Ok(Some(SatResult::Unknown("solver returned unknown".into()))),
            "sat" => {
                self.send("(get-model)\n")?;
                let mut text = String::new();
                let mut depth: i64 = 0;
                loop {
                    let line = match self.recv(until) {
                        Reply::Line(l) => l,
                        Reply::Timeout => return Ok(None),
                        Reply::Closed => return Err(SmtError::Crashed),
                    };
                    if text.is_empty() && line.trim_start().starts_with("(error") {
                        return Err(SmtError::Protocol(line));
                    }
                    depth += paren_balance(&line);
                    text.push_str(&line);
                    text.push('\n');
                    if depth <= 0 {
                        break;
                    }
                }
                Ok(Some(SatResult::Sat(parse_model(&text, vars)?)))
            }
            other => Err(SmtError::Protocol(other.to_string())),
        }
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn paren_balance(line: &str) -> i64 {
    let mut depth = 0;
    let mut quoted = false;
    for c in line.chars() {
        match c {
            '|' => quoted = !quoted,
            '(' if !quoted => depth += 1,
            ')' if !quoted => depth -= 1,
            _ => {}
        }
    }
    depth
}

fn parse_value(s: &Sexp) -> Option<Value> {
    match s {
        Sexp::Atom(a, _) => match a.as_str() {
            "true" => Some(Value::Bool(true)),
            "false" => Some(Value::Bool(false)),
            n => n.parse().ok().map(Value::Int),
        },
        Sexp::List(xs, _) => match xs.as_slice() {
            [op, inner] if op.atom() == Some("-") => parse_value(inner)?.as_int().and_then(i64::checked_neg).map(Value::Int),
            _ => None,
        },
    }
}

/// Parses a `(get-model)` reply, keeping the constants listed in `vars`.
pub fn parse_model(text: &str, vars: &[Var]) -> Result<Model, SmtError> {
    let by_name: HashMap<String, &Var> = vars.iter().map(|v| (v.smt_name(), v)).collect();
    let s = sexp::parse_one(text).map_err(|e| SmtError::Protocol(format!("bad model: {e}")))?;
    let entries = match &s {
        Sexp::List(xs, _) => {
            // Older z3 releases wrap the model in (model ...).
            if xs.first().and_then(Sexp::atom) == Some("model") {
                &xs[1..]
            } else {
                &xs[..]
            }
        }
        Sexp::Atom(..) => return Err(SmtError::Protocol(format!("bad model: {text}"))),
    };
    let mut model = Model::default();
    for e in entries {
        if let Some([head, name, params, _sort, value]) = e.list() {
            if head.atom() != Some("define-fun") || params.list().is_none_or(|p| !p.is_empty()) {
                continue;
            }
            let Some(v) = name.atom().and_then(|n| by_name.get(n)) else { continue };
            let val = parse_value(value).ok_or_else(|| SmtError::Protocol(format!("unsupported model value {value}")))?;
            model.values.insert((*v).clone(), val);
        }
    }
    Ok(model)
}

/// The SMT-LIB script asserting `f` and asking for satisfiability.
pub fn emit_script(f: &Formula) -> String {
    let quantified = f.has_quantifier();
    let logic = match (quantified, f.is_linear()) {
        (false, true) => "QF_LIA",
        (true, true) => "LIA",
        (false, false) => "QF_NIA",
        (true, false) => "NIA",
    };
    format!("(set-option :produce-models true)\n(set-logic {logic})\n{}", emit_query(f))
}

/// Declarations, assertion and `check-sat` for `f`, without a header.
pub fn emit_query(f: &Formula) -> String {
    let mut s = String::new();
    for v in f.free_vars() {
        let sort = match v.sort {
            Sort::Int => "Int",
            Sort::Bool => "Bool",
        };
        s.push_str(&format!("(declare-const |{}| {sort})\n", v.smt_name()));
    }
    s.push_str(&format!("(assert {})\n(check-sat)\n", f.to_smtlib()));
    s
}

/// Thread-safe solver front: a pool of sessions plus a shared result cache.
pub struct Solver {
    config: SolverConfig,
    pool: Mutex<Vec<Session>>,
    cache: Mutex<HashMap<String, SatResult>>,
    counters: Counters,
}

impl Solver {
    pub fn new(config: SolverConfig) -> Solver {
        Solver { config, pool: Mutex::new(Vec::new()), cache: Mutex::new(HashMap::new()), counters: Counters::default() }
    }

    /// Locates a solver and starts one session to make sure it runs.
    pub fn start(config: SolverConfig) -> Result<Solver, SmtError> {
        let s = Session::spawn(&config)?;
        let solver = Solver::new(config);
        solver.pool.lock().unwrap().push(s);
        Ok(solver)
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn set_deadline(&mut self, d: Option<Instant>) {
        self.config.deadline = d;
    }

    pub fn counts(&self) -> QueryCounts {
        let c = &self.counters;
        let load = |a: &AtomicU64| a.load(Ordering::Relaxed);
        QueryCounts {
            queries: load(&c.queries),
            cache_hits: load(&c.cache_hits),
            cache_misses: load(&c.solver_calls),
            sat: load(&c.sat),
            unsat: load(&c.unsat),
            unknown: load(&c.unknown),
            timeouts: load(&c.timeouts),
            restarts: load(&c.restarts),
        }
    }

    pub fn check_sat(&self, f: &Formula) -> Result<SatResult, SmtError> {
        if let Some(d) = self.config.deadline {
            if Instant::now() >= d {
                return Err(SmtError::Deadline);
            }
        }
        self.counters.queries.fetch_add(1, Ordering::Relaxed);
        let key = f.canonical().to_smtlib();
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            self.counters.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(hit.clone());
        }
        self.counters.solver_calls.fetch_add(1, Ordering::Relaxed);
        let vars: Vec<Var> = f.free_vars().into_iter().collect();
        let mut timeout = self.config.query_timeout;
        if let Some(d) = self.config.deadline {
            timeout = timeout.min(d.saturating_duration_since(Instant::now()));
        }
        let pooled = self.pool.lock().unwrap().pop();
        let mut session = match pooled {
            Some(s) => s,
            None => Session::spawn(&self.config)?,
        };
        let result = match session.run(f, &vars, timeout) {
            Ok(Some(r)) => {
                self.pool.lock().unwrap().push(session);
                r
            }
            Ok(None) => {
                // The process may still be working on the query; discard it.
                drop(session);
                self.counters.timeouts.fetch_add(1, Ordering::Relaxed);
                self.counters.restarts.fetch_add(1, Ordering::Relaxed);
                SatResult::Unknown("timeout".into())
            }
            Err(e) => {
                self.counters.restarts.fetch_add(1, Ordering::Relaxed);
                return Err(e);
            }
        };
        match &result {
            SatResult::Sat(_) => self.counters.sat.fetch_add(1, Ordering::Relaxed),
            SatResult::Unsat => self.counters.unsat.fetch_add(1, Ordering::Relaxed),
            SatResult::Unknown(_) => self.counters.unknown.fetch_add(1, Ordering::Relaxed),
        };
        if !matches!(result, SatResult::Unknown(_)) {
            self.cache.lock().unwrap().insert(key, result.clone());
        }
        Ok(result)
    }

    /// Validity of `f`. Leading universal quantifiers are opened so that a
    /// counter-model names their variables.
    pub fn check_valid(&self, f: &Formula) -> Result<ValidResult, SmtError> {
        let mut body = f;
        while let Formula::Forall(_, inner) = body {
            body = inner;
        }
        Ok(match self.check_sat(&Formula::Not(Box::new(body.clone())))? {
            SatResult::Unsat => ValidResult::Valid,
            SatResult::Sat(m) => ValidResult::Invalid(m),
            SatResult::Unknown(r) => ValidResult::Unknown(r),
        })
    }

    /// Satisfiability where an inconclusive answer counts as satisfiable.
    pub fn maybe_sat(&self, f: &Formula) -> Result<bool, SmtError> {
        Ok(!self.check_sat(f)?.is_unsat())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{and, cmp, eq, int, not, var, CmpOp};

    fn solver() -> Solver {
        Solver::start(SolverConfig::locate(None).expect("an SMT solver is required for these tests")).unwrap()
    }

    #[test]
    fn sat_with_model() {
        let s = solver();
        let x = Var::int("x").indexed(1);
        let f = and(vec![cmp(CmpOp::Gt, var(&x), int(2)), cmp(CmpOp::Lt, var(&x), int(4))]);
        match s.check_sat(&f).unwrap() {
            SatResult::Sat(m) => assert_eq!(m.get(&x), Some(Value::Int(3))),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_model_values() {
        let s = solver();
        let x = Var::int("x").primed();
        let f = eq(var(&x), int(-7));
        let SatResult::Sat(m) = s.check_sat(&f).unwrap() else { panic!() };
        assert_eq!(m.get(&x), Some(Value::Int(-7)));
    }

    #[test]
    fn unsat_and_cache() {
        let s = solver();
        let x = Var::int("x");
        let f = and(vec![cmp(CmpOp::Gt, var(&x), int(2)), cmp(CmpOp::Lt, var(&x), int(1))]);
        assert!(s.check_sat(&f).unwrap().is_unsat());
        let reordered = and(vec![cmp(CmpOp::Lt, var(&x), int(1)), cmp(CmpOp::Gt, var(&x), int(2))]);
        assert!(s.check_sat(&reordered).unwrap().is_unsat());
        let c = s.counts();
        assert_eq!((c.queries, c.cache_hits, c.cache_misses), (2, 1, 1));
    }

    #[test]
    fn validity() {
        let s = solver();
        let x = Var::int("x");
        let y = Var::int("y");
        // forall x exists y. y = x + 1
        let f = Formula::Forall(
            vec![x.clone()],
            Box::new(Formula::Exists(vec![y.clone()], Box::new(eq(var(&y), Formula::Add(vec![var(&x), int(1)]))))),
        );
        assert_eq!(s.check_valid(&f).unwrap(), ValidResult::Valid);
        let g = Formula::Forall(vec![x.clone()], Box::new(cmp(CmpOp::Gt, var(&x), int(0))));
        match s.check_valid(&g).unwrap() {
            ValidResult::Invalid(m) => assert!(m.value(&x).as_int().unwrap() <= 0),
            other => panic!("{other:?}"),
        }
        assert_eq!(s.check_valid(&not(Formula::Bool(false))).unwrap(), ValidResult::Valid);
    }

    #[test]
    fn timeout_restarts_session() {
        let cfg = SolverConfig::locate(None).unwrap().with_query_timeout(Duration::from_millis(200));
        let s = Solver::start(cfg).unwrap();
        let (a, b, c) = (Var::int("a"), Var::int("b"), Var::int("c"));
        let cube = |v: &Var| Formula::Mul(Box::new(var(v)), Box::new(Formula::Mul(Box::new(var(v)), Box::new(var(v)))));
        // a^3 + b^3 = c^3 over positive integers: hopeless for the solver.
        let f = and(vec![
            cmp(CmpOp::Gt, var(&a), int(0)),
            cmp(CmpOp::Gt, var(&b), int(0)),
            cmp(CmpOp::Gt, var(&c), int(0)),
            eq(Formula::Add(vec![cube(&a), cube(&b)]), cube(&c)),
        ]);
        assert_eq!(s.check_sat(&f).unwrap(), SatResult::Unknown("timeout".into()));
        assert_eq!(s.counts().timeouts, 1);
        // A fresh session answers the next query.
        assert!(s.check_sat(&cmp(CmpOp::Gt, var(&a), int(0))).unwrap().is_sat());
    }

    #[test]
    fn script_shape() {
        let x = Var::int("x").indexed(2);
        let script = emit_script(&cmp(CmpOp::Ge, var(&x), int(0)));
        assert!(script.contains("(set-logic QF_LIA)"));
        assert!(script.contains("(declare-const |x@2| Int)"));
        assert!(script.ends_with("(check-sat)\n"));
    }

    #[test]
    fn deadline_is_enforced() {
        let cfg = SolverConfig::locate(None).unwrap().with_deadline(Some(Instant::now()));
        let s = Solver::new(cfg);
        assert_eq!(s.check_sat(&Formula::Bool(true)), Err(SmtError::Deadline));
    }
}

//! `hypa`: verify ∀*∃* hyperproperties of symbolic transition systems.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use hypa_core::certify::{certify, TranscriptRecord};
use hypa_core::oracle::{check_property, DomainBounds};
use hypa_core::smt::QueryCounts;
use hypa_core::verifier::{verify_exists_direct, verify_exists_lazy, verify_forall, VerifierStats};
use hypa_core::{AbstractionError, Problem, Solver, SolverConfig, StrategyExport, Verdict, VerificationReport, VerifyError, VerifyOptions};

const EXIT_VERIFIED: u8 = 0;
const EXIT_UNKNOWN: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser)]
#[command(name = "hypa", version, about = "Predicate-abstraction games for forall-exists hyperproperties")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify a property, check it explicitly, or certify a strategy.
    Verify(Box<VerifyArgs>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// The game for universal properties (every copy treated as universal).
    Forall,
    /// Lazy restriction refinement for forall-exists properties.
    Lazy,
    /// The fully enumerated restriction game.
    Direct,
    /// Explicit-state check over bounded domains.
    Oracle,
    /// Re-check and simulate a strategy exported by a lazy or direct run.
    Certify,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Forall => "forall",
            Mode::Lazy => "lazy",
            Mode::Direct => "direct",
            Mode::Oracle => "oracle",
            Mode::Certify => "certify",
        }
    }
}

#[derive(clap::Args)]
struct VerifyArgs {
    /// System file (repeatable).
    #[arg(long = "system", required = true)]
    systems: Vec<PathBuf>,
    #[arg(long)]
    property: PathBuf,
    /// Predicate file. Required for forall, lazy and direct.
    #[arg(long)]
    predicates: Option<PathBuf>,
    /// Safety automaton for the body, instead of translating it.
    #[arg(long)]
    automaton: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "lazy")]
    mode: Mode,
    /// SMT solver binary; overrides HYPA_SOLVER.
    #[arg(long)]
    solver: Option<String>,
    /// Per-query timeout in seconds.
    #[arg(long, default_value_t = 10.0)]
    qtimeout: f64,
    /// Global timeout in seconds.
    #[arg(long)]
    timeout: Option<f64>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    strategy_dot: Option<PathBuf>,
    /// Winning strategy as JSON (written by forall/lazy/direct, read by certify).
    #[arg(long)]
    strategy_json: Option<PathBuf>,
    /// Simulation transcript as JSON lines (certify).
    #[arg(long)]
    transcript: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Domain of an integer variable for oracle mode, as var=lo..hi.
    #[arg(long = "domain-bound", value_parser = parse_bound)]
    domain_bounds: Vec<(String, (i64, i64))>,
    /// Simulation runs (certify).
    #[arg(long, default_value_t = 10)]
    runs: usize,
    /// Steps per simulation run (certify).
    #[arg(long, default_value_t = 50)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Do not add pc predicates automatically.
    #[arg(long)]
    no_auto_pc: bool,
    #[arg(long, default_value_t = 500_000)]
    max_nodes: usize,
}

fn parse_bound(s: &str) -> Result<(String, (i64, i64)), String> {
    let (name, range) = s.split_once('=').ok_or("expected var=lo..hi")?;
    let (lo, hi) = range.split_once("..").ok_or("expected var=lo..hi")?;
    let lo: i64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: i64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    if lo > hi {
        return Err(format!("empty range {lo}..{hi}"));
    }
    Ok((name.trim().to_string(), (lo, hi)))
}

/// Error carrying the exit code it maps to.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

fn usage(err: anyhow::Error) -> Failure {
    Failure { code: EXIT_USAGE, err }
}

fn internal(err: anyhow::Error) -> Failure {
    Failure { code: EXIT_INTERNAL, err }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_VERIFIED });
        }
    };
    let Command::Verify(args) = cli.command;
    match run(&args) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", render(&f.err));
            ExitCode::from(f.code)
        }
    }
}

/// The error chain, leaving out causes whose text is already shown.
fn render(err: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in err.chain() {
        let part = cause.to_string();
        if text.contains(&part) {
            continue;
        }
        if !text.is_empty() {
            text.push_str(": ");
        }
        text.push_str(&part);
    }
    text
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display())).map_err(internal)
}

fn run(args: &VerifyArgs) -> Result<u8, Failure> {
    if args.qtimeout <= 0.0 || args.timeout.is_some_and(|t| t <= 0.0) {
        return Err(usage(anyhow::anyhow!("timeouts must be positive")));
    }
    if args.jobs == 0 {
        return Err(usage(anyhow::anyhow!("--jobs must be at least 1")));
    }
    let needs_predicates = matches!(args.mode, Mode::Forall | Mode::Lazy | Mode::Direct | Mode::Certify);
    if needs_predicates && args.predicates.is_none() {
        return Err(usage(anyhow::anyhow!("--mode {} needs --predicates", args.mode.name())));
    }
    if args.mode == Mode::Certify && args.strategy_json.is_none() {
        return Err(usage(anyhow::anyhow!("--mode certify needs --strategy-json")));
    }
    let started = Instant::now();
    let problem = Problem::load(&args.systems, &args.property, args.predicates.as_deref(), args.automaton.as_deref())
        .map_err(|e| usage(e.into()))?;

    if args.mode == Mode::Oracle {
        return run_oracle(args, &problem);
    }

    let deadline = args.timeout.map(|t| started + Duration::from_secs_f64(t));
    let config = SolverConfig::locate(args.solver.as_deref())
        .map_err(|e| usage(e.into()))?
        .with_query_timeout(Duration::from_secs_f64(args.qtimeout))
        .with_deadline(deadline);
    let solver = Solver::start(config).map_err(|e| usage(e.into()))?;
    let ctx = problem.context(!args.no_auto_pc).map_err(|e| usage(e.into()))?;

    if args.mode == Mode::Certify {
        return run_certify(args, &ctx, &solver);
    }
    if ctx.l == ctx.k && args.mode != Mode::Forall {
        eprintln!("note: the property has no existential quantifier; --mode forall is equivalent");
    }
    let opts = VerifyOptions { max_nodes: args.max_nodes, ..VerifyOptions::default() };
    let result = match args.mode {
        Mode::Forall => verify_forall(&ctx, &solver, &opts),
        Mode::Lazy => verify_exists_lazy(&ctx, &solver, &opts),
        Mode::Direct => verify_exists_direct(&ctx, &solver, &opts),
        Mode::Oracle | Mode::Certify => unreachable!(),
    };
    let outcome = match result {
        Ok(o) => o,
        Err(e @ VerifyError::SubsetBound { .. }) => return Err(usage(anyhow::anyhow!("{e}; use --mode lazy"))),
        Err(VerifyError::Abstraction(
            e @ (AbstractionError::Expressibility { .. } | AbstractionError::TooManyPredicates(_) | AbstractionError::Automaton(_)),
        )) => return Err(usage(e.into())),
        Err(e) => return Err(internal(e.into())),
    };
    let report = &outcome.report;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    print_summary(report);
    if let Some(path) = &args.report {
        write_file(path, &serde_json::to_string_pretty(report).expect("serialisable"))?;
    }
    if let Some(strategy) = &outcome.strategy {
        if let Some(path) = &args.strategy_dot {
            write_file(path, &strategy.to_dot())?;
        }
        if let Some(path) = &args.strategy_json {
            write_file(path, &strategy.to_json())?;
        }
    }
    Ok(match report.verdict {
        Verdict::Verified => EXIT_VERIFIED,
        Verdict::Unknown => EXIT_UNKNOWN,
    })
}

fn print_summary(r: &VerificationReport) {
    println!("{}", r.verdict);
    println!(
        "mode={} size={} t_abs={:.3}s t_solve={:.3}s refinements={} queries={} cache_hits={}",
        r.mode, r.size, r.t_abs, r.t_solve, r.refinements, r.query_counts.queries, r.query_counts.cache_hits
    );
    if let Some(reason) = &r.reason {
        println!("reason: {reason}");
    }
}

fn run_oracle(args: &VerifyArgs, problem: &Problem) -> Result<u8, Failure> {
    let started = Instant::now();
    let bounds: DomainBounds = args.domain_bounds.iter().cloned().collect();
    let verdict = check_property(&problem.systems, &problem.property, &problem.automaton, &bounds)
        .map_err(|e| usage(e.into()))?;
    if !verdict.existential_observations_recur {
        eprintln!("warning: an existential copy has traces with finitely many observation points");
    }
    let report = VerificationReport {
        mode: "oracle".into(),
        verdict: if verdict.holds { Verdict::Verified } else { Verdict::Unknown },
        size: verdict.product_nodes,
        t_abs: 0.0,
        t_solve: started.elapsed().as_secs_f64(),
        refinements: 0,
        query_counts: QueryCounts::default(),
        stats: VerifierStats::default(),
        reason: (!verdict.holds).then(|| "property violated within the domain bounds".to_string()),
        warnings: Vec::new(),
    };
    print_summary(&report);
    if let Some(path) = &args.report {
        write_file(path, &serde_json::to_string_pretty(&report).expect("serialisable"))?;
    }
    Ok(if verdict.holds { EXIT_VERIFIED } else { EXIT_UNKNOWN })
}

fn run_certify(args: &VerifyArgs, ctx: &hypa_core::CompositionContext, solver: &Solver) -> Result<u8, Failure> {
    let started = Instant::now();
    let path = args.strategy_json.as_ref().expect("checked above");
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(usage)?;
    let strategy = StrategyExport::from_json(&text).with_context(|| format!("parsing {}", path.display())).map_err(usage)?;
    let mut transcript: Vec<TranscriptRecord> = Vec::new();
    let cert = certify(ctx, solver, &strategy, args.runs, args.steps, args.seed, &mut transcript)
        .map_err(|e| usage(e.into()))?;
    if let Some(tpath) = &args.transcript {
        let mut out = Vec::new();
        for rec in &transcript {
            serde_json::to_writer(&mut out, rec).expect("serialisable");
            out.push(b'\n');
        }
        std::fs::File::create(tpath)
            .and_then(|mut f| f.write_all(&out))
            .with_context(|| format!("writing {}", tpath.display()))
            .map_err(internal)?;
    }
    for f in &cert.failures {
        eprintln!("certification failure: {f}");
    }
    let ok = cert.ok();
    let report = VerificationReport {
        mode: "certify".into(),
        verdict: if ok { Verdict::Verified } else { Verdict::Unknown },
        size: strategy.nodes.len(),
        t_abs: 0.0,
        t_solve: started.elapsed().as_secs_f64(),
        refinements: 0,
        query_counts: solver.counts(),
        stats: VerifierStats::default(),
        reason: (!ok).then(|| format!("{} certification failure(s)", cert.failures.len())),
        warnings: Vec::new(),
    };
    print_summary(&report);
    println!("runs={} steps={} observations={} stuck_runs={}", cert.runs, cert.steps, cert.observations, cert.stuck_runs);
    if let Some(path) = &args.report {
        write_file(path, &serde_json::to_string_pretty(&report).expect("serialisable"))?;
    }
    Ok(if ok { EXIT_VERIFIED } else { EXIT_UNKNOWN })
}

//! `medsched`: generate, solve, verify, explain, benchmark and serve
//! scheduling instances from the command line.

use std::fs;
use std::io::{self, BufRead, IsTerminal, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use medsched_core::baseline::greedy_cts;
use medsched_core::cts::phase2_histogram;
use medsched_core::engine::{SolveConfig, SolveStatus};
use medsched_core::explain::{parse_fact, ExplainConfig, ExplainError, Reanalysis, SessionState};
use medsched_core::io::{
    generate, generate_cts, parse_instance, parse_solution, session_doc, write_explanation,
    write_histogram_csv, write_instance, write_solution, ExplanationBody, ExplanationDoc,
    GenParams, Instance, ProblemKind, Schedule,
};
use medsched_core::model::ObjectiveVector;
use medsched_core::pipeline::{verify_schedule, PipelineError, Prepared};
use medsched_service::ServiceConfig;

const SESSION_FORMAT: &str = "medsched/session";
const SESSION_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "medsched", version, about = "Exact scheduling for chemotherapy, operating rooms and pre-operative clinics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic instance.
    Gen(GenArgs),
    /// Solve an instance to lexicographic optimality.
    Solve(SolveArgs),
    /// Re-check a solution against its instance.
    Verify(VerifyArgs),
    /// Explain why an instance has no solution (a minimal conflict).
    ExplainUnsat(ExplainUnsatArgs),
    /// Explain why assignments hold in the optimal solution.
    ExplainWhy(ExplainWhyArgs),
    /// Explain why one assignment was chosen rather than another.
    ExplainContrast(ExplainContrastArgs),
    /// Compare the exact solver with the greedy baseline on seeded CTS instances.
    Bench(BenchArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct Limits {
    /// Wall-clock limit per solver call, in seconds.
    #[arg(long, env = "MEDSCHED_TIME_LIMIT", default_value_t = 60.0, value_parser = positive_secs)]
    time_limit: f64,
    /// Search-node budget; makes timed-out results reproducible.
    #[arg(long)]
    node_limit: Option<u64>,
}

impl Limits {
    fn solve(&self) -> SolveConfig {
        SolveConfig::with_secs(self.time_limit).with_node_limit(self.node_limit)
    }

    fn explain(&self) -> ExplainConfig {
        ExplainConfig {
            solve: self.solve(),
            ..ExplainConfig::default()
        }
    }
}

fn positive_secs(text: &str) -> Result<f64, String> {
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("`{text}` is not a positive number of seconds")),
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    kind: ProblemKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Patients (CTS, POAC) or registrations (ORS).
    #[arg(long)]
    size: usize,
    /// Demand over capacity.
    #[arg(long, default_value_t = 0.8)]
    tightness: f64,
    /// Slots per day (CTS) or days (ORS, POAC).
    #[arg(long)]
    horizon: Option<u32>,
    /// Leave out scalp cooling, isolation, late drugs and unit stays.
    #[arg(long)]
    no_extensions: bool,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    /// Solution file; standard output when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[command(flatten)]
    limits: Limits,
}

#[derive(Args)]
struct VerifyArgs {
    instance: PathBuf,
    solution: PathBuf,
}

#[derive(Args)]
struct ExplainUnsatArgs {
    instance: PathBuf,
    /// Read background facts from standard input, one per line, re-analysing after each.
    #[arg(long)]
    interactive: bool,
    /// Session file holding background facts; replayed first and, when
    /// interactive, updated after every accepted fact.
    #[arg(long)]
    session: Option<PathBuf>,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[command(flatten)]
    limits: Limits,
}

#[derive(Args)]
struct ExplainWhyArgs {
    instance: PathBuf,
    /// Atom of the optimal solution, e.g. `start(p1,2)=4`; repeatable.
    #[arg(long = "atom", required = true)]
    atoms: Vec<String>,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[command(flatten)]
    limits: Limits,
}

#[derive(Args)]
struct ExplainContrastArgs {
    instance: PathBuf,
    /// The assignment made, e.g. `assign(r1)=s2`.
    #[arg(long)]
    a: String,
    /// The assignment asked about instead.
    #[arg(long)]
    b: String,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[command(flatten)]
    limits: Limits,
}

#[derive(Args)]
struct BenchArgs {
    /// First seed; instances use consecutive seeds.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 30)]
    count: u64,
    #[arg(long, default_value_t = 50)]
    patients: usize,
    #[arg(long, default_value_t = 0.5)]
    tightness: f64,
    /// Directory for `summary.csv` and `histogram-<seed>.csv`.
    #[arg(long)]
    out_dir: PathBuf,
    /// Optional CSV of runtimes; they are kept out of the summary so that
    /// it is reproducible.
    #[arg(long)]
    timings: Option<PathBuf>,
    #[command(flatten)]
    limits: Limits,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Persist sessions as JSON files in this directory.
    #[arg(long)]
    state_dir: Option<PathBuf>,
    /// Default per-request solve limit, in seconds.
    #[arg(long, env = "MEDSCHED_TIME_LIMIT", default_value_t = 60.0, value_parser = positive_secs)]
    time_limit: f64,
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }

    fn general(message: impl ToString) -> Self {
        Failure::new(1, message.to_string())
    }

    fn usage(message: impl ToString) -> Self {
        Failure::new(2, message.to_string())
    }

    fn unsat(path: &Path) -> Self {
        Failure::new(
            3,
            format!(
                "the instance is unsatisfiable; run `medsched explain-unsat {}` for a minimal conflict",
                path.display()
            ),
        )
    }

    fn no_incumbent(message: impl ToString) -> Self {
        Failure::new(4, message.to_string())
    }
}

type CliResult = Result<(), Failure>;

fn pipeline_failure(e: PipelineError, instance: &Path) -> Failure {
    match e {
        PipelineError::Unsat => Failure::unsat(instance),
        PipelineError::NoSolution | PipelineError::NotOptimal => Failure::no_incumbent(e),
        PipelineError::Explain(inner) => match inner {
            ExplainError::Timeout => Failure::no_incumbent(inner),
            ExplainError::TargetNotInSolution(_)
            | ExplainError::SameAssignment(_)
            | ExplainError::AlreadyHolds(_)
            | ExplainError::ValueOutsideDomain { .. }
            | ExplainError::UnknownVar(_)
            | ExplainError::BadAtom(_) => Failure::usage(inner),
            other => Failure::general(other),
        },
        other => Failure::general(other),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Solve(a) => solve(a),
        Command::Verify(a) => verify(a),
        Command::ExplainUnsat(a) => explain_unsat(a),
        Command::ExplainWhy(a) => explain_why(a),
        Command::ExplainContrast(a) => explain_contrast(a),
        Command::Bench(a) => bench(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("medsched: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so a failed run never leaves a partial file behind.
fn write_atomic(path: &Path, contents: &str) -> CliResult {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let fail = |e: &dyn std::fmt::Display| Failure::general(format!("cannot write {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| fail(&e))?;
    tmp.write_all(contents.as_bytes()).map_err(|e| fail(&e))?;
    tmp.persist(path).map_err(|e| fail(&e.error))?;
    Ok(())
}

fn emit(out: Option<&Path>, contents: &str) -> CliResult {
    match out {
        Some(path) => write_atomic(path, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::general(format!("cannot read {}: {e}", path.display())))
}

fn load_instance(path: &Path) -> Result<Instance, Failure> {
    parse_instance(&read(path)?).map_err(|e| Failure::general(format!("{}: {e}", path.display())))
}

fn prepare(path: &Path, instance: &Instance, facts: &[String]) -> Result<Prepared, Failure> {
    Prepared::with_background(instance, facts).map_err(|e| match e {
        PipelineError::Explain(_) => Failure::usage(e),
        other => pipeline_failure(other, path),
    })
}

fn gen(a: GenArgs) -> CliResult {
    let params = GenParams {
        seed: a.seed,
        size: a.size,
        tightness: a.tightness,
        horizon: a.horizon,
        extensions: !a.no_extensions,
    };
    let instance = generate(a.kind, &params).map_err(Failure::general)?;
    emit(a.out.as_deref(), &write_instance(&instance))
}

fn solve(a: SolveArgs) -> CliResult {
    let instance = load_instance(&a.instance)?;
    let prepared = prepare(&a.instance, &instance, &[])?;
    let report = prepared.solve(&a.limits.solve()).map_err(|e| pipeline_failure(e, &a.instance))?;
    let outcome = &report.outcome;
    let summary = match &outcome.best {
        Some(best) => format!(
            "status: {}\nobjective: {}\nnodes: {}\n",
            outcome.status.as_str(),
            best.objective,
            outcome.stats.nodes
        ),
        None => format!("status: {}\n", outcome.status.as_str()),
    };
    match outcome.status {
        SolveStatus::Unsat => return Err(Failure::unsat(&a.instance)),
        SolveStatus::UnknownTimeout => {
            return Err(Failure::no_incumbent(format!(
                "no solution found within {}s",
                a.limits.time_limit
            )))
        }
        SolveStatus::Optimal | SolveStatus::FeasibleTimeout => {}
    }
    let doc = report.document().expect("a solved outcome has a schedule");
    match &a.out {
        Some(path) => {
            write_atomic(path, &write_solution(&doc))?;
            print!("{summary}");
        }
        None => {
            print!("{}", write_solution(&doc));
            eprint!("{summary}");
        }
    }
    Ok(())
}

fn verify(a: VerifyArgs) -> CliResult {
    let instance = load_instance(&a.instance)?;
    let doc = parse_solution(&read(&a.solution)?)
        .map_err(|e| Failure::general(format!("{}: {e}", a.solution.display())))?;
    let report = verify_schedule(&instance, &doc.schedule).map_err(Failure::general)?;
    let claimed = doc.schedule.objective();
    let mut lines = Vec::new();
    for v in &report.violations {
        lines.push(format!("violation: {v}"));
    }
    if claimed != &report.objective {
        lines.push(format!(
            "objective mismatch: document claims {claimed}, recomputed {}",
            report.objective
        ));
    }
    if lines.is_empty() {
        println!("valid; objective {}", report.objective);
        return Ok(());
    }
    for line in &lines {
        println!("{line}");
    }
    Err(Failure::general(format!("{} problem(s) found", lines.len())))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionFile {
    format: String,
    version: u32,
    kind: ProblemKind,
    background: Vec<String>,
}

fn load_session(path: &Path, kind: ProblemKind) -> Result<Vec<String>, Failure> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file: SessionFile = serde_json::from_str(&read(path)?)
        .map_err(|e| Failure::general(format!("{}: {e}", path.display())))?;
    if file.format != SESSION_FORMAT || file.version != SESSION_VERSION {
        return Err(Failure::general(format!(
            "{}: not a {SESSION_FORMAT} version {SESSION_VERSION} file",
            path.display()
        )));
    }
    if file.kind != kind {
        return Err(Failure::general(format!(
            "{}: session is for a {} instance, not {kind}",
            path.display(),
            file.kind
        )));
    }
    Ok(file.background)
}

fn save_session(path: &Path, kind: ProblemKind, background: &[String]) -> CliResult {
    let file = SessionFile {
        format: SESSION_FORMAT.into(),
        version: SESSION_VERSION,
        kind,
        background: background.to_vec(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("session file serializes");
    text.push('\n');
    write_atomic(path, &text)
}

fn explain_unsat(a: ExplainUnsatArgs) -> CliResult {
    let instance = load_instance(&a.instance)?;
    let kind = instance.kind();
    let facts = match &a.session {
        Some(path) => load_session(path, kind)?,
        None => Vec::new(),
    };
    if a.interactive {
        return interactive(&a, &instance, facts);
    }
    let prepared = prepare(&a.instance, &instance, &facts)?;
    let (mus, doc) = prepared.explain_unsat(&a.limits.explain()).map_err(|e| match e {
        PipelineError::Explain(ExplainError::NotUnsat) => {
            Failure::general("the instance is satisfiable; there is no conflict to explain")
        }
        other => pipeline_failure(other, &a.instance),
    })?;
    emit(a.out.as_deref(), &write_explanation(&doc))?;
    if a.out.is_some() {
        println!("minimal conflict of {} constraint(s)", mus.len());
    }
    Ok(())
}

fn print_entries(out: &mut impl Write, doc: &ExplanationDoc) -> io::Result<()> {
    if let ExplanationBody::Session(s) = &doc.body {
        if let Some(step) = s.steps.last() {
            if step.consistent {
                writeln!(out, "consistent")?;
            } else {
                writeln!(out, "inconsistent; minimal conflict:")?;
                for e in &step.mus {
                    writeln!(out, "  {}: {}", e.label, e.description)?;
                }
            }
        }
    }
    Ok(())
}

/// Read-eval loop over background fact lines. Blank lines and lines
/// starting with `#` are skipped; `quit` ends the session.
fn interactive(a: &ExplainUnsatArgs, instance: &Instance, saved: Vec<String>) -> CliResult {
    let config = a.limits.explain();
    let kind = instance.kind();
    let prepared = prepare(&a.instance, instance, &[])?;
    let mut stdout = io::stdout().lock();
    let io_err = |e: io::Error| Failure::general(e);
    match prepared.explain_unsat(&config) {
        Ok((_, doc)) => {
            writeln!(stdout, "the instance is unsatisfiable; minimal conflict:").map_err(io_err)?;
            if let ExplanationBody::Mus { entries } = &doc.body {
                for e in entries {
                    writeln!(stdout, "  {}: {}", e.label, e.description).map_err(io_err)?;
                }
            }
        }
        Err(PipelineError::Explain(ExplainError::NotUnsat)) => {
            writeln!(stdout, "the instance is satisfiable").map_err(io_err)?;
        }
        Err(e) => return Err(pipeline_failure(e, &a.instance)),
    }
    let mut session = SessionState::new(prepared.model);
    let mut accepted = Vec::new();
    let add = |session: &mut SessionState, text: &str| -> Result<(), Failure> {
        let fact = parse_fact(&session.base, session.next_label(), text).map_err(Failure::usage)?;
        session
            .add_background(vec![fact], &config)
            .map_err(|e| pipeline_failure(e.into(), &a.instance))?;
        Ok(())
    };
    for text in &saved {
        add(&mut session, text).map_err(|f| Failure::new(f.code, format!("replaying `{text}`: {}", f.message)))?;
        accepted.push(text.clone());
        writeln!(stdout, "> {text}").map_err(io_err)?;
        print_entries(&mut stdout, &session_doc(kind, &session)).map_err(io_err)?;
    }
    let prompt = io::stdin().is_terminal();
    let mut lines = io::stdin().lock().lines();
    loop {
        if prompt {
            eprint!("fact> ");
        }
        stdout.flush().map_err(io_err)?;
        let Some(line) = lines.next() else { break };
        let line = line.map_err(io_err)?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        if text == "quit" || text == "exit" {
            break;
        }
        match add(&mut session, text) {
            Ok(()) => {
                accepted.push(text.to_string());
                print_entries(&mut stdout, &session_doc(kind, &session)).map_err(io_err)?;
                if let Some(path) = &a.session {
                    save_session(path, kind, &accepted)?;
                }
            }
            Err(f) if f.code == 2 => writeln!(stdout, "error: {}", f.message).map_err(io_err)?,
            Err(f) => return Err(f),
        }
    }
    if let Some(path) = &a.session {
        save_session(path, kind, &accepted)?;
    }
    if let Some(out) = &a.out {
        write_atomic(out, &write_explanation(&session_doc(kind, &session)))?;
    }
    let consistent = !matches!(session.history.last().map(|h| &h.outcome), Some(Reanalysis::Inconsistent(_)));
    writeln!(stdout, "session ended after {} fact(s); {}", accepted.len(), if consistent { "consistent" } else { "inconsistent" })
        .map_err(io_err)?;
    Ok(())
}

fn explain_why(a: ExplainWhyArgs) -> CliResult {
    let instance = load_instance(&a.instance)?;
    let prepared = prepare(&a.instance, &instance, &[])?;
    let (_, _, doc) = prepared
        .explain_why(&a.atoms, &a.limits.explain())
        .map_err(|e| pipeline_failure(e, &a.instance))?;
    emit(a.out.as_deref(), &write_explanation(&doc))
}

fn explain_contrast(a: ExplainContrastArgs) -> CliResult {
    let instance = load_instance(&a.instance)?;
    let prepared = prepare(&a.instance, &instance, &[])?;
    let (result, doc) = prepared
        .explain_contrast(&a.a, &a.b, &a.limits.explain())
        .map_err(|e| pipeline_failure(e, &a.instance))?;
    emit(a.out.as_deref(), &write_explanation(&doc))?;
    if a.out.is_some() {
        println!("{:?}", result.verdict);
    }
    Ok(())
}

fn levels(objective: &ObjectiveVector) -> String {
    objective.0.iter().map(u64::to_string).collect::<Vec<_>>().join(";")
}

struct BenchRow {
    seed: u64,
    patients: usize,
    greedy_peak: u32,
    greedy_virtual: u32,
    status: SolveStatus,
    exact_peak: Option<u32>,
    objective: Option<ObjectiveVector>,
    greedy_ms: u128,
    exact_ms: u128,
}

fn bench(a: BenchArgs) -> CliResult {
    let config = a.limits.solve();
    let mut rows = Vec::new();
    let mut histograms = Vec::new();
    for seed in a.seed..a.seed + a.count {
        let inst = generate_cts(&GenParams::new(seed, a.patients, a.tightness))
            .map_err(|e| Failure::general(format!("seed {seed}: {e}")))?;
        let started = Instant::now();
        let greedy = greedy_cts(&inst);
        let greedy_ms = started.elapsed().as_millis();
        let baseline = phase2_histogram(&greedy.schedule, &inst);

        let started = Instant::now();
        let report = Prepared::new(&Instance::Cts(inst.clone()))
            .and_then(|p| p.solve(&config))
            .map_err(|e| Failure::general(format!("seed {seed}: {e}")))?;
        let exact_ms = started.elapsed().as_millis();
        let exact = match &report.schedule {
            Some(Schedule::Cts(s)) => phase2_histogram(s, &inst),
            _ => Vec::new(),
        };
        histograms.push((seed, write_histogram_csv(&inst, &baseline, &exact)));
        rows.push(BenchRow {
            seed,
            patients: inst.patients.len(),
            greedy_peak: baseline.iter().copied().max().unwrap_or(0),
            greedy_virtual: greedy.virtual_resources,
            status: report.outcome.status,
            exact_peak: report.schedule.as_ref().map(|_| exact.iter().copied().max().unwrap_or(0)),
            objective: report.schedule.as_ref().map(|s| s.objective().clone()),
            greedy_ms,
            exact_ms,
        });
    }

    let mut summary = String::from("seed,patients,greedy_peak,greedy_virtual_resources,exact_status,exact_peak,exact_objective\n");
    let mut timings = String::from("seed,greedy_ms,exact_ms\n");
    for r in &rows {
        summary.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.seed,
            r.patients,
            r.greedy_peak,
            r.greedy_virtual,
            r.status.as_str(),
            r.exact_peak.map(|p| p.to_string()).unwrap_or_default(),
            r.objective.as_ref().map(levels).unwrap_or_default(),
        ));
        timings.push_str(&format!("{},{},{}\n", r.seed, r.greedy_ms, r.exact_ms));
    }
    fs::create_dir_all(&a.out_dir)
        .map_err(|e| Failure::general(format!("cannot create {}: {e}", a.out_dir.display())))?;
    for (seed, csv) in &histograms {
        write_atomic(&a.out_dir.join(format!("histogram-{seed}.csv")), csv)?;
    }
    write_atomic(&a.out_dir.join("summary.csv"), &summary)?;
    if let Some(path) = &a.timings {
        write_atomic(path, &timings)?;
    }

    println!("{:>6} {:>8} {:>8} {:>8} {:>16} {:>10} {:>10}", "seed", "greedy", "virtual", "exact", "status", "greedy_ms", "exact_ms");
    for r in &rows {
        println!(
            "{:>6} {:>8} {:>8} {:>8} {:>16} {:>10} {:>10}",
            r.seed,
            r.greedy_peak,
            r.greedy_virtual,
            r.exact_peak.map(|p| p.to_string()).unwrap_or_else(|| "-".into()),
            r.status.as_str(),
            r.greedy_ms,
            r.exact_ms
        );
    }
    let lower = rows.iter().filter(|r| r.exact_peak.is_some_and(|p| p < r.greedy_peak)).count();
    println!("exact peak strictly lower on {lower} of {} instance(s)", rows.len());
    let regressions: Vec<u64> = rows
        .iter()
        .filter(|r| r.exact_peak.is_none_or(|p| p > r.greedy_peak))
        .map(|r| r.seed)
        .collect();
    if regressions.is_empty() {
        Ok(())
    } else {
        Err(Failure::new(
            5,
            format!("solver regression: exact peak above greedy (or missing) for seed(s) {regressions:?}"),
        ))
    }
}

fn serve(a: ServeArgs) -> CliResult {
    let config = ServiceConfig {
        default_time_limit: Duration::from_secs_f64(a.time_limit),
        state_dir: a.state_dir,
    };
    let runtime = tokio::runtime::Runtime::new().map_err(Failure::general)?;
    runtime
        .block_on(medsched_service::serve(a.addr, config))
        .map_err(Failure::general)
}

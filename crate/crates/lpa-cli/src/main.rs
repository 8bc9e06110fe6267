//! `lpa`: verify, run, and differentially fuzz lambda-PA programs.
//!
//! Exit codes are the machine contract:
//!   0  accepted / clean run / no soundness violations
//!   1  rejected / runtime fault / soundness violations found
//!   2  parse or scope error
//!   3  I/O error

use clap::{Parser, Subcommand};
use lambda_pa::fuzz::{differential, differential_corpus, GenConfig};
use lambda_pa::monitor::{run_traced, run_unchecked};
use lambda_pa::syntax::{check_scopes, parse, Expr};
use lambda_pa::trace::TraceDocument;
use lambda_pa::verifier::{explain, verify, Verdict};
use lambda_pa::Value;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "lpa", version, about = "Pointer-aliasing verifier and runtime monitor for lambda-PA")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Statically verify a program against the aliasing discipline.
    Verify {
        /// Path to a `.lpa` source file.
        path: PathBuf,
        /// Write the symbolic state trace as JSON to this file.
        #[arg(long, value_name = "OUT")]
        emit_states: Option<PathBuf>,
        /// Print the per-statement state trace.
        #[arg(long)]
        trace: bool,
        /// Suppress all output; communicate via the exit code only.
        #[arg(long)]
        quiet: bool,
    },
    /// Execute a program; `--monitor` enforces the aliasing discipline
    /// with fractional capabilities at runtime.
    Run {
        /// Path to a `.lpa` source file.
        path: PathBuf,
        /// Enforce the fractional-capability discipline while running.
        #[arg(long)]
        monitor: bool,
        /// Write the monitored state trace as JSON (implies --monitor).
        #[arg(long, value_name = "OUT")]
        emit_states: Option<PathBuf>,
    },
    /// Generate programs and differentially test verifier vs monitor.
    Fuzz {
        /// Number of programs to generate.
        #[arg(long, default_value_t = 1000)]
        count: usize,
        /// Generator seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for the JSON report and shrunk counterexamples.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Replay `.lpa` files from this directory instead of generating.
        #[arg(long, value_name = "DIR")]
        corpus: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match Cli::parse().cmd {
        Cmd::Verify {
            path,
            emit_states,
            trace,
            quiet,
        } => cmd_verify(&path, emit_states.as_deref(), trace, quiet),
        Cmd::Run {
            path,
            monitor,
            emit_states,
        } => cmd_run(&path, monitor, emit_states.as_deref()),
        Cmd::Fuzz {
            count,
            seed,
            out,
            corpus,
        } => cmd_fuzz(count, seed, out.as_deref(), corpus.as_deref()),
    }
}

const EXIT_FAIL: ExitCode = ExitCode::FAILURE;
const EXIT_BAD_SOURCE: u8 = 2;
const EXIT_IO: u8 = 3;

fn load(path: &std::path::Path) -> Result<(String, Expr), ExitCode> {
    let source = fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitCode::from(EXIT_IO)
    })?;
    let expr = parse(&source).map_err(|e| {
        eprintln!("{}: {e}", path.display());
        ExitCode::from(EXIT_BAD_SOURCE)
    })?;
    check_scopes(&expr).map_err(|e| {
        eprintln!("{}: {e}", path.display());
        ExitCode::from(EXIT_BAD_SOURCE)
    })?;
    Ok((source, expr))
}

fn cmd_verify(
    path: &std::path::Path,
    emit_states: Option<&std::path::Path>,
    trace: bool,
    quiet: bool,
) -> ExitCode {
    let (source, expr) = match load(path) {
        Ok(x) => x,
        Err(code) => return code,
    };
    let verdict = verify(&expr);
    if let Some(out) = emit_states {
        let doc = TraceDocument::from_verdict(&source, &verdict);
        if let Err(e) = fs::write(out, doc.to_json()) {
            eprintln!("error: cannot write {}: {e}", out.display());
            return ExitCode::from(EXIT_IO);
        }
    }
    if !quiet {
        println!("{}", explain(&verdict));
        if trace {
            print!("{}", render_trace(&verdict));
        }
    }
    if verdict.is_accepted() {
        ExitCode::SUCCESS
    } else {
        EXIT_FAIL
    }
}

fn render_trace(verdict: &Verdict) -> String {
    let mut out = String::new();
    for entry in verdict.trace() {
        if entry.shifts.is_empty() {
            out.push_str(&format!(
                "  after line {:>3}: {}\n",
                entry.after_span.line, entry.state
            ));
        } else {
            for shift in &entry.shifts {
                out.push_str(&format!(
                    "  vs end({}, {}, {}) => {}\n",
                    entry.state.display_name(shift.borrower),
                    entry.state.display_name(shift.lender),
                    shift.frac,
                    entry.state
                ));
            }
        }
    }
    out
}

fn render_value(v: &Value) -> String {
    match v {
        Value::Int(n) => n.to_string(),
        Value::Ref(r) => format!("&%{}", r.generation()),
    }
}

fn cmd_run(
    path: &std::path::Path,
    monitor: bool,
    emit_states: Option<&std::path::Path>,
) -> ExitCode {
    let (source, expr) = match load(path) {
        Ok(x) => x,
        Err(code) => return code,
    };
    let result = if monitor || emit_states.is_some() {
        let (result, snapshots) = run_traced(&expr);
        if let Some(out) = emit_states {
            let doc = TraceDocument::from_monitor(&source, &snapshots);
            if let Err(e) = fs::write(out, doc.to_json()) {
                eprintln!("error: cannot write {}: {e}", out.display());
                return ExitCode::from(EXIT_IO);
            }
        }
        result
    } else {
        run_unchecked(&expr)
    };
    match result {
        Ok(value) => {
            println!("final value: {}", render_value(&value));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            EXIT_FAIL
        }
    }
}

fn cmd_fuzz(
    count: usize,
    seed: u64,
    out: Option<&std::path::Path>,
    corpus: Option<&std::path::Path>,
) -> ExitCode {
    let report = match corpus {
        Some(dir) => {
            let mut paths: Vec<PathBuf> = match fs::read_dir(dir) {
                Ok(entries) => entries
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|ext| ext == "lpa"))
                    .collect(),
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", dir.display());
                    return ExitCode::from(EXIT_IO);
                }
            };
            paths.sort();
            let mut programs = Vec::new();
            for path in &paths {
                match load(path) {
                    Ok((_, expr)) => programs.push(expr),
                    Err(code) => return code,
                }
            }
            differential_corpus(programs.iter())
        }
        None => {
            let cfg = GenConfig::with_seed(seed);
            if let Err(e) = cfg.validate() {
                eprintln!("error: {e}");
                return EXIT_FAIL;
            }
            differential(&cfg, count)
        }
    };

    println!(
        "checked {} programs: {} accepted, {} rejected, {} soundness violations, {} trace mismatches",
        report.total,
        report.accepted,
        report.rejected,
        report.soundness_violations.len(),
        report.trace_mismatches.len()
    );

    if let Some(dir) = out {
        if let Err(e) = fs::create_dir_all(dir) {
            eprintln!("error: cannot create {}: {e}", dir.display());
            return ExitCode::from(EXIT_IO);
        }
        let report_path = dir.join("report.json");
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        if let Err(e) = fs::write(&report_path, json + "\n") {
            eprintln!("error: cannot write {}: {e}", report_path.display());
            return ExitCode::from(EXIT_IO);
        }
        for (i, violation) in report.soundness_violations.iter().enumerate() {
            let path = dir.join(format!("violation_{i}.lpa"));
            if let Err(e) = fs::write(&path, format!("{}\n", violation.minimized)) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::from(EXIT_IO);
            }
            println!("counterexample: {}", path.display());
        }
    } else {
        for violation in &report.soundness_violations {
            println!("counterexample (minimized): {}", violation.minimized);
        }
    }

    if report.soundness_violations.is_empty() {
        ExitCode::SUCCESS
    } else {
        EXIT_FAIL
    }
}

//! `upg-audit` command implementations.
//!
//! Every command except `serve` runs synchronously against a pair of output
//! sinks and returns its exit code, so the binary is a thin wrapper and tests
//! can drive commands in-process.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use upg_core::audit::{self, AuditState, JudgmentVerdict};
use upg_core::diag::has_errors;
use upg_core::obligations::{Mode, Obligation, ObligationSet, Statuses};
use upg_core::semantics::{oracle_check_crate, OracleError, DEFAULT_BOUND, DEFAULT_TRACE_CAP};
use upg_core::{report, upg, Analysis, CrateModel, Diagnostic, Parallelism};

pub mod server;

pub const EXIT_OK: u8 = 0;
/// Open obligations (`check`) or a UB witness (`oracle`).
pub const EXIT_FINDINGS: u8 = 1;
pub const EXIT_ERROR: u8 = 2;
pub const EXIT_CAP: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "upg-audit", version, about = "Audit unsafe code in a modeled Rust crate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the verdict tree and obligations.
    Check(CheckArgs),
    /// Run the bounded execution oracle.
    Oracle(OracleArgs),
    /// List obligations with their effective status.
    Obligations(ObligationsArgs),
    /// Record an auditor judgment in the audit file.
    Mark(MarkArgs),
    /// Export the unsafety propagation graph.
    ExportDot(ExportArgs),
    /// Serve the JSON HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    Facts,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
    Dot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum ModeArg {
    #[default]
    Strong,
    Weak,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Strong => Mode::Strong,
            ModeArg::Weak => Mode::Weak,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Crate model, `.facts` or `.json`.
    pub input: PathBuf,
    /// Overrides the format guessed from the file extension.
    #[arg(long, value_enum)]
    pub input_format: Option<InputFormat>,
}

impl InputArgs {
    pub fn format(&self) -> InputFormat {
        self.input_format.unwrap_or_else(|| {
            match self.input.extension().and_then(|e| e.to_str()) {
                Some("json") => InputFormat::Json,
                _ => InputFormat::Facts,
            }
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct AuditArg {
    /// Line-delimited JSON judgment trail.
    #[arg(long, env = "UPG_AUDIT_FILE")]
    pub audit: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value = "text")]
    pub format: OutputFormat,
    #[arg(long, value_enum, default_value = "strong")]
    pub mode: ModeArg,
    #[command(flatten)]
    pub audit: AuditArg,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Maximum number of method calls per trace.
    #[arg(long, default_value_t = DEFAULT_BOUND, value_parser = positive_usize)]
    pub k: usize,
    /// Maximum traces per constructor.
    #[arg(long, default_value_t = DEFAULT_TRACE_CAP, value_parser = clap::value_parser!(u64).range(1..))]
    pub cap: u64,
    #[arg(long, value_enum, default_value = "json")]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Args)]
pub struct ObligationsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value = "text")]
    pub format: OutputFormat,
    #[command(flatten)]
    pub audit: AuditArg,
}

#[derive(Debug, Clone, Args)]
pub struct MarkArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Obligation id.
    #[arg(long)]
    pub id: String,
    #[arg(long, value_enum)]
    pub verdict: VerdictArg,
    #[arg(long)]
    pub justification: String,
    #[arg(long, env = "USER", default_value = "unknown")]
    pub author: String,
    #[command(flatten)]
    pub audit: AuditArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VerdictArg {
    Discharged,
    Reopened,
}

impl From<VerdictArg> for JudgmentVerdict {
    fn from(v: VerdictArg) -> Self {
        match v {
            VerdictArg::Discharged => JudgmentVerdict::Discharged,
            VerdictArg::Reopened => JudgmentVerdict::Reopened,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// `dot` for Graphviz, `json` for the graph as data.
    #[arg(long, value_enum, default_value = "dot")]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    #[command(flatten)]
    pub audit: AuditArg,
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

/// Reads and parses a model; errors are already formatted for stderr.
pub fn load_model(input: &InputArgs) -> Result<CrateModel, Vec<String>> {
    let path = input.input.display().to_string();
    let bytes = fs::read(&input.input).map_err(|e| vec![format!("{path}: {e}")])?;
    let parsed = match input.format() {
        InputFormat::Json => upg_core::load_json(&bytes),
        InputFormat::Facts => match std::str::from_utf8(&bytes) {
            Ok(text) => upg_core::parse_facts(text),
            Err(e) => return Err(vec![format!("{path}: not valid UTF-8: {e}")]),
        },
    };
    parsed.map_err(|diags| render_diags(&path, &diags))
}

fn render_diags(path: &str, diags: &[Diagnostic]) -> Vec<String> {
    diags.iter().map(|d| format!("{path}: {d}")).collect()
}

/// Model plus analysis, or an exit code after reporting to `err`.
fn analyze(input: &InputArgs, err: &mut dyn Write) -> Result<Analysis, u8> {
    let model = load_model(input).map_err(|lines| {
        for l in lines {
            let _ = writeln!(err, "{l}");
        }
        EXIT_ERROR
    })?;
    Analysis::new(model, Parallelism::Parallel).map_err(|e| {
        let _ = writeln!(err, "{}: error: {e}", input.input.display());
        EXIT_ERROR
    })
}

/// Current audit state for `analysis`; a missing path means no judgments.
pub fn load_audit(
    path: Option<&Path>,
    analysis: &Analysis,
    err: &mut dyn Write,
) -> Result<AuditState, u8> {
    let fingerprint = audit::model_fingerprint(&analysis.model);
    let Some(path) = path else {
        return Ok(AuditState::new(fingerprint));
    };
    match AuditState::load(path, &fingerprint, &analysis.obligations) {
        Ok((state, warnings)) => {
            for w in &warnings {
                let _ = writeln!(err, "{}: {w}", path.display());
            }
            Ok(state)
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            Err(EXIT_ERROR)
        }
    }
}

/// Obligations with their status replaced by the effective one.
pub fn effective_obligations(set: &ObligationSet, statuses: &Statuses) -> Vec<Obligation> {
    set.obligations
        .iter()
        .map(|o| Obligation {
            status: statuses.get(&o.id).copied().unwrap_or(o.status),
            ..o.clone()
        })
        .collect()
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn wrong_format(err: &mut dyn Write, command: &str, format: OutputFormat) -> u8 {
    let name = format.to_possible_value().map(|v| v.get_name().to_owned()).unwrap_or_default();
    let _ = writeln!(err, "error: `{command}` does not support --format {name}");
    EXIT_ERROR
}

#[derive(Serialize)]
struct CheckJson<'a> {
    verdict: &'a upg_core::obligations::VerdictTree,
    obligations: Vec<Obligation>,
    diagnostics: Vec<String>,
}

pub fn cmd_check(args: &CheckArgs, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    if args.format == OutputFormat::Dot {
        return wrong_format(err, "check", args.format);
    }
    let analysis = match analyze(&args.input, err) {
        Ok(a) => a,
        Err(code) => return code,
    };
    let state = match load_audit(args.audit.audit.as_deref(), &analysis, err) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let statuses = audit::effective_statuses(&analysis.obligations, &state);
    let tree = analysis.verdicts(&statuses, args.mode.into());
    let text = match args.format {
        OutputFormat::Json => to_json(&CheckJson {
            verdict: &tree,
            obligations: effective_obligations(&analysis.obligations, &statuses),
            diagnostics: analysis.diagnostics.iter().map(ToString::to_string).collect(),
        }),
        _ => report::check_report(&tree, &analysis.obligations, &statuses, &analysis.diagnostics),
    };
    let _ = out.write_all(text.as_bytes());
    if has_errors(&analysis.diagnostics) {
        EXIT_ERROR
    } else if tree.is_sound() {
        EXIT_OK
    } else {
        EXIT_FINDINGS
    }
}

pub fn cmd_oracle(args: &OracleArgs, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    if args.format == OutputFormat::Dot {
        return wrong_format(err, "oracle", args.format);
    }
    let analysis = match analyze(&args.input, err) {
        Ok(a) => a,
        Err(code) => return code,
    };
    let report = match oracle_check_crate(&analysis.model, &analysis.upg, args.k, args.cap, Parallelism::Parallel) {
        Ok(r) => r,
        Err(e @ OracleError::TraceCapExceeded { .. }) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_CAP;
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_ERROR;
        }
    };
    let text = match args.format {
        OutputFormat::Text => {
            let mut s = format!("checked: {}\n", report.checked);
            for ub in &report.ub_witnesses {
                s.push_str(&format!(
                    "ub: {} calls {} missing {}\n  trace: {}\n  assuming: {}\n",
                    ub.failing_step,
                    ub.failing_callee,
                    ub.missing,
                    ub.trace.steps.join(" ; "),
                    ub.trace.context_assumptions
                ));
            }
            s
        }
        _ => to_json(&report),
    };
    let _ = out.write_all(text.as_bytes());
    if report.ub_witnesses.is_empty() {
        EXIT_OK
    } else {
        EXIT_FINDINGS
    }
}

pub fn cmd_obligations(args: &ObligationsArgs, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    if args.format == OutputFormat::Dot {
        return wrong_format(err, "obligations", args.format);
    }
    let analysis = match analyze(&args.input, err) {
        Ok(a) => a,
        Err(code) => return code,
    };
    let state = match load_audit(args.audit.audit.as_deref(), &analysis, err) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let statuses = audit::effective_statuses(&analysis.obligations, &state);
    let text = match args.format {
        OutputFormat::Json => to_json(&effective_obligations(&analysis.obligations, &statuses)),
        _ => report::obligations_table(&analysis.obligations, &statuses),
    };
    let _ = out.write_all(text.as_bytes());
    if has_errors(&analysis.diagnostics) {
        EXIT_ERROR
    } else {
        EXIT_OK
    }
}

pub fn cmd_mark(args: &MarkArgs, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let Some(path) = args.audit.audit.as_deref() else {
        let _ = writeln!(err, "error: no audit file; pass --audit or set UPG_AUDIT_FILE");
        return EXIT_ERROR;
    };
    let analysis = match analyze(&args.input, err) {
        Ok(a) => a,
        Err(code) => return code,
    };
    let state = match load_audit(Some(path), &analysis, err) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let fingerprint = audit::model_fingerprint(&analysis.model);
    let marked = state.mark(
        &fingerprint,
        &analysis.obligations,
        &args.id,
        args.verdict.into(),
        &args.justification,
        &args.author,
        &audit::now_utc(),
    );
    let judgment = match marked {
        Ok((_, j)) => j,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_ERROR;
        }
    };
    if let Err(e) = audit::append_judgment(path, &judgment) {
        let _ = writeln!(err, "error: writing {}: {e}", path.display());
        return EXIT_ERROR;
    }
    let _ = writeln!(out, "{}", judgment.to_line());
    EXIT_OK
}

pub fn cmd_export(args: &ExportArgs, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    if args.format == OutputFormat::Text {
        return wrong_format(err, "export-dot", args.format);
    }
    let analysis = match analyze(&args.input, err) {
        Ok(a) => a,
        Err(code) => return code,
    };
    let text = match args.format {
        OutputFormat::Json => analysis.upg.to_json_pretty(),
        _ => upg::export_dot(&analysis.upg),
    };
    let _ = out.write_all(text.as_bytes());
    EXIT_OK
}

/// Runs any command; `serve` blocks until interrupted.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    match &cli.command {
        Command::Check(a) => cmd_check(a, out, err),
        Command::Oracle(a) => cmd_oracle(a, out, err),
        Command::Obligations(a) => cmd_obligations(a, out, err),
        Command::Mark(a) => cmd_mark(a, out, err),
        Command::ExportDot(a) => cmd_export(a, out, err),
        Command::Serve(a) => server::serve(a, err),
    }
}

/// Parses `argv` and runs it, mapping clap's own exits onto the same codes.
pub fn run_args<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(argv) {
        Ok(cli) => run(cli, out, err),
        Err(e) => {
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = err.write_all(rendered.as_bytes());
                EXIT_ERROR
            } else {
                let _ = out.write_all(rendered.as_bytes());
                EXIT_OK
            }
        }
    }
}

/// Convenience for tests: runs and captures both streams.
pub fn run_captured<I, T>(argv: I) -> (u8, String, String)
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run_args(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8_lossy(&out).into_owned(),
        String::from_utf8_lossy(&err).into_owned(),
    )
}

pub fn stdio_run() -> u8 {
    let stdout = io::stdout();
    let stderr = io::stderr();
    let code = run_args(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock());
    let _ = io::stdout().flush();
    code
}

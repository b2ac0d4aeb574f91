//! The `qa` command line.
//!
//! Exit codes: 0 clean, 1 findings at or above the threshold (or a violated
//! goal), 2 usage error, 3 load or parse error, 4 resource limit reached,
//! 5 patch could not be applied.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use deployqa::finding::Severity;
use deployqa::petri::{ExportFormat, DEFAULT_MAX_MARKINGS};
use deployqa::pipeline::{analyze, load_input, AnalysisError, Input, Limits};
use deployqa::smells::RuleContext;

pub mod config;
mod fix;
mod perf;
mod petri;
pub mod report;

use config::{resolve, ConfigError, Overrides, Settings, CATALOG_ENV};
use report::Report;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Clean = 0,
    Findings = 1,
    Usage = 2,
    Load = 3,
    Limit = 4,
    Patch = 5,
}

/// A command that stopped early, with the diagnostic for standard error.
#[derive(Debug)]
pub struct Failure {
    pub exit: Exit,
    pub message: String,
}

impl Failure {
    fn new(exit: Exit, message: impl Into<String>) -> Self {
        Failure { exit, message: message.into() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::new(Exit::Usage, e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Sarif,
}

#[derive(Debug, Parser)]
#[command(name = "qa", version, about = "Quality checks for TOSCA service archives and Ansible playbooks")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Config file (default: ./qa.yaml when present)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Defect catalog to use instead of the built-in one
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Lowest severity that makes the command fail
    #[arg(long, value_parser = parse_severity)]
    severity_threshold: Option<Severity>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

fn parse_severity(s: &str) -> Result<Severity, String> {
    s.parse()
}

fn parse_export(s: &str) -> Result<ExportFormat, String> {
    s.parse()
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Verify the topology, analyze the workflow and detect smells
    Check {
        /// CSAR (zip or directory), blueprint or playbook
        path: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = DEFAULT_MAX_MARKINGS)]
        max_markings: usize,
        /// Add per-stage timings to the report
        #[arg(long)]
        timings: bool,
    },
    /// Recommend and apply resolutions
    Fix {
        path: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Only fix these rules (repeatable)
        #[arg(long = "rule")]
        rules: Vec<String>,
        /// Print the patches without writing (the default)
        #[arg(long, conflicts_with = "apply")]
        dry_run: bool,
        /// Write the patched files
        #[arg(long)]
        apply: bool,
    },
    /// Export the deployment workflow as a Petri net
    Petri {
        path: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_export, default_value = "dot")]
        export: ExportFormat,
        /// Write the export here instead of standard output
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also report deadlocks and dead transitions
        #[arg(long)]
        analyze: bool,
        #[arg(long, default_value_t = DEFAULT_MAX_MARKINGS)]
        max_markings: usize,
    },
    /// Performance models from benchmark data
    #[command(subcommand)]
    Perf(PerfCommand),
}

#[derive(Debug, Subcommand)]
enum PerfCommand {
    /// Fit a polynomial model and print it as JSON
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1)]
        degree: usize,
    },
    /// Evaluate a goals file
    Check {
        #[arg(long)]
        goals: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

/// Parse `args` (including the program name) and run the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                Exit::Usage as i32
            } else {
                let _ = write!(out, "{text}");
                Exit::Clean as i32
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(exit) => exit as i32,
        Err(f) => {
            let _ = writeln!(err, "qa: {}", f.message);
            f.exit as i32
        }
    }
}

fn settings(common: &Common) -> Result<Settings, Failure> {
    let flags = Overrides {
        config: common.config.clone(),
        catalog: common.catalog.clone(),
        threshold: common.severity_threshold,
    };
    let cwd = std::env::current_dir().unwrap_or_default();
    let env = std::env::var_os(CATALOG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    Ok(resolve(&flags, &cwd, env)?)
}

fn open(path: &Path) -> Result<Input, Failure> {
    if !path.exists() {
        return Err(Failure::new(Exit::Usage, format!("{}: no such file or directory", path.display())));
    }
    load_input(path).map_err(|e| Failure::new(Exit::Load, e.to_string()))
}

fn analysis_failure(e: AnalysisError) -> Failure {
    Failure::new(Exit::Load, e.to_string())
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), Failure> {
    out.write_all(text.as_bytes()).map_err(|e| Failure::new(Exit::Usage, format!("cannot write output: {e}")))
}

pub(crate) fn render(report: &Report, format: Format, settings: &Settings) -> String {
    match format {
        Format::Text => report.to_text(),
        Format::Json => report.to_json(),
        Format::Sarif => report.to_sarif(&settings.catalog),
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<Exit, Failure> {
    match command {
        Command::Check { path, common, max_markings, timings } => {
            let s = settings(&common)?;
            let report = check(&path, &s, Limits { max_markings }, timings)?;
            emit(out, &render(&report, common.format, &s))?;
            Ok(if !report.complete {
                Exit::Limit
            } else if report.blocking() {
                Exit::Findings
            } else {
                Exit::Clean
            })
        }
        Command::Fix { path, common, rules, dry_run: _, apply } => {
            let s = settings(&common)?;
            fix::run(&path, &s, &rules, apply, common.format, out)
        }
        Command::Petri { path, common, export, out: target, analyze, max_markings } => {
            let s = settings(&common)?;
            petri::run(
                &path,
                &s,
                export,
                target.as_deref(),
                analyze.then_some(Limits { max_markings }),
                common.format,
                out,
            )
        }
        Command::Perf(PerfCommand::Fit { data, degree }) => perf::fit(&data, degree, out),
        Command::Perf(PerfCommand::Check { goals, common }) => {
            let s = settings(&common)?;
            perf::check(&goals, &s, common.format, out)
        }
    }
}

/// Load and analyze `path` into a report.
pub fn check(path: &Path, s: &Settings, limits: Limits, timings: bool) -> Result<Report, Failure> {
    let started = Instant::now();
    let input = open(path)?;
    let loaded = started.elapsed();
    let analysis = analyze(&input, &RuleContext::new(&s.catalog, &s.rules), limits).map_err(analysis_failure)?;
    let mut report = Report::new(path.display().to_string(), input.digest(), analysis.findings, s.threshold);
    report.complete = analysis.complete;
    report.notes = analysis.notes;
    report.net = analysis.net;
    report.goals = analysis.goals;
    if timings {
        let ms = |d: std::time::Duration| d.as_secs_f64() * 1e3;
        report.timings = Some(
            [("load".to_owned(), ms(loaded)), ("analyze".to_owned(), ms(started.elapsed() - loaded))]
                .into_iter()
                .collect(),
        );
    }
    Ok(report)
}

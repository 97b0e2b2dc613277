use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use weaver_core::inliner::annotate_slice;
use weaver_core::llm::{LlmClient, ScriptedBackend};
use weaver_core::orchestrator::{
    load_log, load_subjects, load_suite, load_test, Clock, Engine, ExecutorConfig, FixedClock, FixtureExecutor, RunConfig,
    RunStatus, ShimExecutor, SystemClock, TestExecutor,
};
use weaver_core::prompting::templates_from;
use weaver_core::report::{emit, render_strata, stratified_report, Format, Stratum};
use weaver_core::retrieval::find_closest_test;
use weaver_core::slicer::backward_slice;
use weaver_core::subject::{build_cdg, build_cfg, parse_unit, Cdg, Cfg, LineId, SourceUnit};
use weaver_core::trace::Universe;

#[derive(Parser)]
#[command(name = "weaver", version, about = "Slice-guided test generation for Python code")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the backward slice for one line.
    Slice {
        file: PathBuf,
        #[arg(long)]
        line: u32,
        /// Suffix each line with its original line number.
        #[arg(long)]
        annotate: bool,
        #[command(flatten)]
        root: RootArg,
    },
    /// Print the suite test nearest to a line and its distance.
    Closest {
        file: PathBuf,
        #[arg(long)]
        line: u32,
        /// Output directory of a run.
        #[arg(long)]
        suite: PathBuf,
        #[command(flatten)]
        root: RootArg,
    },
    /// Print a slice with one suite test's trace in-lined.
    Inline {
        file: PathBuf,
        #[arg(long)]
        line: u32,
        #[arg(long)]
        test: String,
        #[arg(long)]
        suite: PathBuf,
        #[command(flatten)]
        root: RootArg,
    },
    /// Generate tests for a project.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Replay responses from a JSON array of strings instead of calling the endpoint.
        #[arg(long)]
        mock_transcript: Option<PathBuf>,
        /// Continue the run persisted in this directory.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Directory with template overrides.
        #[arg(long)]
        prompt_dir: Option<PathBuf>,
    },
    /// Summarize a finished or interrupted run.
    Report {
        out: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: FormatArg,
        #[arg(long, value_enum)]
        strata: Option<StrataArg>,
        /// Run config locating the subjects; needed for --strata.
        #[arg(long, default_value = "weaver.toml")]
        config: PathBuf,
    },
}

#[derive(clap::Args)]
struct RootArg {
    /// Project root; trace file names are relative to it.
    #[arg(long, default_value = ".")]
    root: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrataArg {
    Loc,
    Cc,
}

struct Loaded {
    unit: SourceUnit,
    cfg: Cfg,
    cdg: Cdg,
}

impl Loaded {
    fn target(&self, line: u32) -> LineId {
        self.unit.line_id(line)
    }
}

/// Parses `file`, naming it relative to `root` the way traces do.
fn load_file(file: &Path, root: &Path) -> Result<Loaded> {
    let text = std::fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let name = file.strip_prefix(root).unwrap_or(file);
    let name = name.to_string_lossy().replace('\\', "/");
    let name = name.trim_start_matches("./");
    let unit = parse_unit(&text, name)?;
    let cfg = build_cfg(&unit);
    let cdg = build_cdg(&cfg);
    Ok(Loaded { unit, cfg, cdg })
}

fn slice_cmd(file: &Path, line: u32, annotate: bool, root: &Path) -> Result<()> {
    let f = load_file(file, root)?;
    let slice = backward_slice(&f.unit, &f.cfg, &f.cdg, &f.target(line))?;
    if annotate {
        print!("{}", slice.render_with_line_numbers());
    } else {
        print!("{}", slice.rendered_text);
    }
    Ok(())
}

fn closest_cmd(file: &Path, line: u32, suite_dir: &Path, root: &Path) -> Result<()> {
    let f = load_file(file, root)?;
    let universe = Arc::new(Universe::from_units([&f.unit]));
    let suite = load_suite(suite_dir, universe, &[&f.cfg])?;
    match find_closest_test(&suite, &f.target(line), &f.cdg) {
        Some((test, delta)) => println!("{} {delta}", test.id),
        None => println!("none"),
    }
    Ok(())
}

fn inline_cmd(file: &Path, line: u32, test: &str, suite_dir: &Path, root: &Path) -> Result<()> {
    let f = load_file(file, root)?;
    let slice = backward_slice(&f.unit, &f.cfg, &f.cdg, &f.target(line))?;
    let test = load_test(suite_dir, test)?;
    let trace = test.trace.as_ref().context("test has no trace")?;
    print!("{}", annotate_slice(&f.unit, &slice, trace)?);
    Ok(())
}

fn run_cmd(config: &Path, transcript: Option<&Path>, resume: Option<&Path>, prompt_dir: Option<PathBuf>) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(d) = prompt_dir {
        cfg.run.prompt_dir = Some(d);
    }
    let out_dir = resume.map(Path::to_path_buf).unwrap_or_else(|| cfg.run.out_dir.clone());
    let previous = match resume {
        Some(dir) => Some(load_log(dir)?),
        None => None,
    };
    let done = previous.as_ref().map_or(0, |l| l.records.len());
    let offset = Duration::from_secs_f64(previous.as_ref().map_or(0.0, |l| l.totals.wall_secs));

    let (llm, clock): (LlmClient, Box<dyn Clock>) = match transcript {
        Some(path) => {
            let backend = ScriptedBackend::from_file(path)?;
            backend.skip(done);
            (LlmClient::new(cfg.llm.clone(), Box::new(backend))?, Box::new(FixedClock(offset)))
        }
        None => (LlmClient::http(cfg.llm.clone())?, Box::new(SystemClock::with_offset(offset))),
    };
    let executor: Box<dyn TestExecutor> = match &cfg.executor {
        ExecutorConfig::Fixtures { dir } => Box::new(FixtureExecutor::new(dir)),
        ExecutorConfig::Shim { command } => {
            Box::new(ShimExecutor::new(command.clone(), &cfg.project.root, out_dir.join("scratch")))
        }
    };
    let templates = templates_from(cfg.run.prompt_dir.as_deref()).context("loading templates")?;
    let subjects = load_subjects(&cfg)?;
    if subjects.is_empty() {
        bail!("no subject files under {}", cfg.project.root.display());
    }

    let mut engine = Engine::new(cfg.run.clone(), subjects, &llm, executor.as_ref(), templates, clock.as_ref());
    match resume {
        Some(dir) => engine.resume(dir)?,
        None => engine = engine.with_output(&out_dir),
    }
    let outcome = engine.run()?;
    let log = &outcome.log;
    let status = match log.status {
        RunStatus::Completed => "completed",
        RunStatus::TokenBudgetExhausted => "stopped: token budget exhausted",
        RunStatus::WallClockExceeded => "stopped: wall-clock budget exceeded",
        RunStatus::Running => "stopped",
    };
    eprintln!("{status}; {} prompts, {} tests in {}", log.records.len(), outcome.suite.len(), out_dir.display());
    Ok(())
}

fn report_cmd(out: &Path, format: FormatArg, strata: Option<StrataArg>, config: &Path) -> Result<()> {
    let log = load_log(out)?;
    let format = match format {
        FormatArg::Json => Format::Json,
        FormatArg::Csv => Format::Csv,
        FormatArg::Text => Format::Text,
    };
    print!("{}", emit(&log, format));
    if let Some(s) = strata {
        let cfg = RunConfig::load(config).context("--strata needs the run config")?;
        let subjects = load_subjects(&cfg)?;
        let units: Vec<&SourceUnit> = subjects.iter().map(|s| &s.unit).collect();
        let cfgs: Vec<&Cfg> = subjects.iter().map(|s| &s.cfg).collect();
        let universe = Arc::new(Universe::from_units(units.iter().copied()));
        let suite = load_suite(out, universe, &cfgs)?;
        let stratum = match s {
            StrataArg::Loc => Stratum::Loc,
            StrataArg::Cc => Stratum::Cc,
        };
        let rows = stratified_report(suite.coverage(), &units, stratum, stratum.default_buckets())?;
        println!();
        print!("{}", render_strata(&rows));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Slice { file, line, annotate, root } => slice_cmd(file, *line, *annotate, &root.root),
        Command::Closest { file, line, suite, root } => closest_cmd(file, *line, suite, &root.root),
        Command::Inline { file, line, test, suite, root } => inline_cmd(file, *line, test, suite, &root.root),
        Command::Run { config, mock_transcript, resume, prompt_dir } => {
            run_cmd(config, mock_transcript.as_deref(), resume.as_deref(), prompt_dir.clone())
        }
        Command::Report { out, format, strata, config } => report_cmd(out, *format, *strata, config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

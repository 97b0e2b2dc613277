use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::prompting::TEST_PREFIX;
use crate::subject::{LineId, SourceUnit};
use crate::trace::{parse_trace, ExecutionTrace, Outcome, TraceFormatError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExecError {
    #[error("test shim unavailable: {0}")]
    ShimUnavailable(String),
    #[error("no trace fixture for {0}")]
    MissingFixture(String),
    #[error("test harness fault: {0}")]
    Harness(String),
    #[error(transparent)]
    Trace(#[from] TraceFormatError),
}

/// Runs one candidate test against one subject file.
pub trait TestExecutor {
    fn execute(&self, test_id: &str, test_source: &str, unit: &SourceUnit, timeout: Duration)
        -> Result<ExecutionTrace, ExecError>;
}

/// Name of the first test function defined in `source`.
pub fn test_function_name(source: &str) -> Option<&str> {
    source.lines().find_map(|l| {
        let rest = l.trim_start().strip_prefix("def ")?.trim_start();
        let end = rest.find(|c: char| !(c == '_' || c.is_alphanumeric())).unwrap_or(rest.len());
        rest[..end].starts_with(TEST_PREFIX).then(|| &rest[..end])
    })
}

/// Pre-recorded traces, one `<function name>.json` per test.
pub struct FixtureExecutor {
    dir: PathBuf,
}

impl FixtureExecutor {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl TestExecutor for FixtureExecutor {
    fn execute(&self, test_id: &str, test_source: &str, unit: &SourceUnit, _: Duration) -> Result<ExecutionTrace, ExecError> {
        let name = test_function_name(test_source).ok_or_else(|| ExecError::MissingFixture("<unnamed test>".into()))?;
        let path = self.dir.join(format!("{name}.json"));
        let raw = std::fs::read_to_string(&path).map_err(|_| ExecError::MissingFixture(name.to_string()))?;
        let mut trace = parse_trace(&raw)?;
        trace.test_id = test_id.to_string();
        Ok(normalize_files(trace, unit))
    }
}

/// Runs `<command> --test <file> --subject <file> --timeout <s>` in a fresh
/// subprocess rooted at the project directory.
pub struct ShimExecutor {
    command: Vec<String>,
    root: PathBuf,
    scratch: PathBuf,
}

/// Extra time the shim gets beyond the test timeout before it is killed.
const KILL_GRACE: Duration = Duration::from_secs(5);

impl ShimExecutor {
    pub fn new(command: Vec<String>, root: impl Into<PathBuf>, scratch: impl Into<PathBuf>) -> Self {
        Self { command, root: root.into(), scratch: scratch.into() }
    }
}

impl TestExecutor for ShimExecutor {
    fn execute(&self, test_id: &str, test_source: &str, unit: &SourceUnit, timeout: Duration) -> Result<ExecutionTrace, ExecError> {
        let (program, args) = self.command.split_first().ok_or_else(|| ExecError::ShimUnavailable("empty command".into()))?;
        std::fs::create_dir_all(&self.scratch).map_err(|e| ExecError::Harness(e.to_string()))?;
        let test_path = self.scratch.join(format!("test_{test_id}.py"));
        std::fs::write(&test_path, test_source).map_err(|e| ExecError::Harness(e.to_string()))?;

        let mut child = Command::new(program)
            .args(args)
            .arg("--test")
            .arg(&test_path)
            .arg("--subject")
            .arg(self.root.join(&unit.file))
            .arg("--timeout")
            .arg(format!("{}", timeout.as_secs_f64()))
            .current_dir(&self.root)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| ExecError::ShimUnavailable(format!("{program}: {e}")))?;
        let mut stdout = child.stdout.take().expect("piped stdout");
        let mut stderr = child.stderr.take().expect("piped stderr");
        let out_reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = stdout.read_to_string(&mut s);
            s
        });
        let err_reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = stderr.read_to_string(&mut s);
            s
        });

        let deadline = Instant::now() + timeout + KILL_GRACE;
        let status = loop {
            match child.try_wait().map_err(|e| ExecError::Harness(e.to_string()))? {
                Some(status) => break Some(status),
                None if Instant::now() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    break None;
                }
                None => std::thread::sleep(Duration::from_millis(10)),
            }
        };
        let out = out_reader.join().unwrap_or_default();
        let err = err_reader.join().unwrap_or_default();
        let _ = std::fs::remove_file(&test_path);

        let Some(status) = status else {
            return Ok(ExecutionTrace::new(test_id, Vec::new(), Outcome::Timeout));
        };
        if !status.success() {
            return Err(ExecError::Harness(format!("shim exited with {status}: {}", err.trim())));
        }
        let mut trace = parse_trace(&out)?;
        trace.test_id = test_id.to_string();
        Ok(normalize_files(trace, unit))
    }
}

/// Rewrites event paths that name the subject file to its root-relative id.
fn normalize_files(mut trace: ExecutionTrace, unit: &SourceUnit) -> ExecutionTrace {
    let same = |f: &str| f == unit.file || Path::new(f).ends_with(Path::new(&unit.file));
    for ev in &mut trace.events {
        if ev.line.file != unit.file && same(&ev.line.file) {
            ev.line = LineId::new(unit.file.clone(), ev.line.line);
        }
    }
    ExecutionTrace::new(trace.test_id, trace.events, trace.outcome)
}

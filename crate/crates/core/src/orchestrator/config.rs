use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::llm::LlmConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    /// Project root; subject paths are reported relative to it.
    pub root: PathBuf,
    /// Glob patterns, relative to the root, selecting subject files.
    pub include: Vec<String>,
    pub exclude: Vec<String>,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        Self { root: PathBuf::from("."), include: vec!["**/*.py".into()], exclude: vec!["**/test_*.py".into()] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub seed_count: usize,
    pub gen_retries_per_line: usize,
    pub regen_retries_per_line: usize,
    pub repair_attempts: usize,
    pub test_timeout_secs: f64,
    pub wall_clock_budget_secs: f64,
    pub saturation_stop: bool,
    pub out_dir: PathBuf,
    /// Directory whose template files override the built-in ones.
    pub prompt_dir: Option<PathBuf>,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            seed_count: 10,
            gen_retries_per_line: 6,
            regen_retries_per_line: 5,
            repair_attempts: 2,
            test_timeout_secs: 10.0,
            wall_clock_budget_secs: 3.0 * 3600.0,
            saturation_stop: false,
            out_dir: PathBuf::from("weaver-out"),
            prompt_dir: None,
        }
    }
}

impl RunSettings {
    pub fn test_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.test_timeout_secs)
    }

    pub fn wall_clock_budget(&self) -> Duration {
        Duration::from_secs_f64(self.wall_clock_budget_secs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExecutorConfig {
    /// Runs each test through the tracing shim in a subprocess.
    Shim { command: Vec<String> },
    /// Looks traces up by test function name in a directory.
    Fixtures { dir: PathBuf },
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        ExecutorConfig::Shim { command: vec!["pyshim".into()] }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub project: ProjectConfig,
    pub run: RunSettings,
    pub llm: LlmConfig,
    pub executor: ExecutorConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.project.root);
        fix(&mut self.run.out_dir);
        if let Some(d) = &mut self.run.prompt_dir {
            fix(d);
        }
        if let ExecutorConfig::Fixtures { dir } = &mut self.executor {
            fix(dir);
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if !(self.run.wall_clock_budget_secs > 0.0) {
            return Err(RunError::Config("wall_clock_budget_secs must be positive".into()));
        }
        if !(self.run.test_timeout_secs > 0.0) {
            return Err(RunError::Config("test_timeout_secs must be positive".into()));
        }
        if self.project.include.is_empty() {
            return Err(RunError::Config("project.include selects no files".into()));
        }
        if let ExecutorConfig::Shim { command } = &self.executor {
            if command.is_empty() {
                return Err(RunError::Config("executor.command is empty".into()));
            }
        }
        self.llm.validate().map_err(|e| RunError::Config(e.to_string()))
    }

    /// Subject files under the project root matching the globs, as
    /// root-relative paths with `/` separators, sorted.
    pub fn subject_files(&self) -> Result<Vec<String>, RunError> {
        let pattern_err = |e: glob::PatternError| RunError::Config(format!("bad glob: {e}"));
        let excludes =
            self.project.exclude.iter().map(|p| glob::Pattern::new(p)).collect::<Result<Vec<_>, _>>().map_err(pattern_err)?;
        let mut out = Vec::new();
        for inc in &self.project.include {
            let full = self.project.root.join(inc);
            let entries = glob::glob(&full.to_string_lossy()).map_err(pattern_err)?;
            for entry in entries {
                let path = entry.map_err(|e| RunError::Io(e.to_string()))?;
                if !path.is_file() {
                    continue;
                }
                let rel = path.strip_prefix(&self.project.root).unwrap_or(&path);
                let rel = rel.to_string_lossy().replace('\\', "/");
                if excludes.iter().any(|p| p.matches(&rel)) {
                    continue;
                }
                out.push(rel);
            }
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

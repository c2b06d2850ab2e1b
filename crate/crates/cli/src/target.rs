//! Running one test case on the synthetic target or an external command.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

use opfuzz_core::synth::{execute, BugPattern, Diagnostics};
use opfuzz_core::testcase::{materialize, FrameworkTarget, TestCase};
use opfuzz_core::verdict::{Verdict, VerdictRecord};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::config::TargetSpec;

#[derive(Debug, Error)]
pub enum TargetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot run `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TargetError + '_ {
    move |source| TargetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub record: VerdictRecord,
    pub patterns: Vec<BugPattern>,
    pub log: String,
}

#[derive(Debug, Clone)]
pub enum Executed {
    Ran(Outcome),
    /// The target cannot express this test case.
    Skipped(String),
}

pub fn run_case(target: &TargetSpec, tc: &TestCase, work_dir: &Path) -> Result<Executed, TargetError> {
    match target {
        TargetSpec::Synthetic { manifest, block } => {
            let ex = execute(tc, manifest, *block);
            let log = synthetic_log(tc, &ex.verdict, &ex.diagnostics);
            Ok(Executed::Ran(Outcome {
                record: ex.record(),
                patterns: ex.diagnostics.patterns,
                log,
            }))
        }
        TargetSpec::External {
            argv,
            framework,
            timeout,
        } => run_external(argv, *framework, *timeout, tc, work_dir),
    }
}

fn synthetic_log(tc: &TestCase, verdict: &Verdict, d: &Diagnostics) -> String {
    let patterns: Vec<_> = d.patterns.iter().map(|p| p.name()).collect();
    format!(
        "test case {id}\n\
         true element count: {}\n\
         host element count: {}\n\
         grid: {} x block {} = capacity {}\n\
         slack: {}\n\
         injected patterns: [{}]\n\
         verdict: {}\n",
        d.true_count,
        d.host_count,
        d.grid,
        d.block,
        d.capacity,
        d.slack,
        patterns.join(", "),
        serde_json::to_string(verdict).expect("plain data serializes"),
        id = tc.id,
    )
}

/// Maps the last status line a script printed to a verdict.
pub fn parse_status(line: &str) -> Option<Verdict> {
    let line = line.trim();
    if line == "OK" {
        return Some(Verdict::Pass);
    }
    if let Some(name) = line.strip_prefix("EXCEPTION:") {
        let name = name.trim();
        if name.contains("OutOfMemory") || name.contains("ResourceExhausted") {
            return Some(Verdict::OutOfMemory);
        }
        return Some(Verdict::Exception { name: name.to_string() });
    }
    if let Some(kind) = line.strip_prefix("SANITIZER:") {
        return Some(Verdict::Sanitizer {
            kind: kind.trim().to_string(),
            frame: None,
        });
    }
    None
}

/// Replaces `{script}`, `{verdict}`, `{framework}` and `{timeout}`. The
/// script path is appended when no argument mentions it.
pub fn expand_argv(argv: &[String], script: &Path, verdict: &Path, framework: FrameworkTarget, timeout: Duration) -> Vec<String> {
    let script_s = script.display().to_string();
    let mut out: Vec<String> = argv
        .iter()
        .map(|a| {
            a.replace("{script}", &script_s)
                .replace("{verdict}", &verdict.display().to_string())
                .replace("{framework}", framework.name())
                .replace("{timeout}", &timeout.as_secs().max(1).to_string())
        })
        .collect();
    if !argv.iter().any(|a| a.contains("{script}")) {
        out.push(script_s);
    }
    out
}

fn run_external(
    argv: &[String],
    framework: FrameworkTarget,
    timeout: Duration,
    tc: &TestCase,
    work_dir: &Path,
) -> Result<Executed, TargetError> {
    let script = match materialize(tc, framework) {
        Ok(s) => s,
        Err(e) => return Ok(Executed::Skipped(e.to_string())),
    };
    let dir = work_dir.join("scripts");
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let script_path = dir.join(script.file_name());
    fs::write(&script_path, &script.source).map_err(io_err(&script_path))?;
    let verdict_path = dir.join(format!("{}_{}.verdict.json", tc.id, framework.name()));
    let _ = fs::remove_file(&verdict_path);

    let args = expand_argv(argv, &script_path, &verdict_path, framework, timeout);
    let command = shlex::try_join(args.iter().map(String::as_str)).unwrap_or_else(|_| args.join(" "));
    let stdout_path = dir.join(format!("{}_{}.stdout", tc.id, framework.name()));
    let stderr_path = dir.join(format!("{}_{}.stderr", tc.id, framework.name()));
    let stdout = fs::File::create(&stdout_path).map_err(io_err(&stdout_path))?;
    let stderr = fs::File::create(&stderr_path).map_err(io_err(&stderr_path))?;
    let spawn_err = |source| TargetError::Spawn {
        command: command.clone(),
        source,
    };
    let mut child = Command::new(&args[0])
        .args(&args[1..])
        .stdin(Stdio::null())
        .stdout(stdout)
        .stderr(stderr)
        .spawn()
        .map_err(spawn_err)?;
    let status = child.wait_timeout(timeout).map_err(spawn_err)?;
    let timed_out = status.is_none();
    let status = match status {
        Some(s) => Some(s),
        None => {
            let _ = child.kill();
            child.wait().ok()
        }
    };
    let out_text = fs::read_to_string(&stdout_path).unwrap_or_default();
    let err_text = fs::read_to_string(&stderr_path).unwrap_or_default();
    let _ = fs::remove_file(&stdout_path);
    let _ = fs::remove_file(&stderr_path);

    let from_file = fs::read_to_string(&verdict_path)
        .ok()
        .and_then(|t| VerdictRecord::from_json(&t).ok());
    let _ = fs::remove_file(&verdict_path);
    let status_line = out_text.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("");
    let verdict = if timed_out {
        Verdict::TimedOut
    } else if let Some(rec) = &from_file {
        rec.verdict.clone()
    } else if let Some(v) = parse_status(status_line) {
        v
    } else {
        let code = status.and_then(|s| s.code()).map_or("signal".to_string(), |c| c.to_string());
        Verdict::Exception {
            name: format!("NoStatus(exit {code})"),
        }
    };
    let log = format!(
        "command: {command}\nexit: {}\ntimed out: {timed_out}\n--- stdout ---\n{out_text}\n--- stderr ---\n{err_text}",
        status.map_or("none".to_string(), |s| s.to_string()),
    );
    let record = match from_file {
        Some(rec) if !timed_out => rec,
        _ => VerdictRecord::new(verdict, None),
    };
    Ok(Executed::Ran(Outcome {
        record,
        patterns: Vec::new(),
        log,
    }))
}

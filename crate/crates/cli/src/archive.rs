//! Findings on disk: one directory per signature holding the first test
//! case, its log and a running verdict record.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use opfuzz_core::testcase::{TestCase, TestCaseError};
use opfuzz_core::verdict::VerdictRecord;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ArchiveError + '_ {
    move |source| ArchiveError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub signature: String,
    pub operator: String,
    pub testcase_id: String,
    pub count: u64,
    pub first_seen: String,
    pub log: String,
    pub record: VerdictRecord,
}

pub fn findings_dir(out: &Path) -> PathBuf {
    out.join("findings")
}

/// Writes via a sibling temporary and a rename.
fn write_atomic(path: &Path, contents: &str) -> Result<(), ArchiveError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub struct Archiver {
    root: PathBuf,
    findings: BTreeMap<String, Finding>,
    /// Occurrences seen by this archiver, per signature.
    seen: BTreeMap<String, u64>,
}

impl Archiver {
    pub fn new(out: &Path) -> Self {
        Archiver {
            root: findings_dir(out),
            findings: BTreeMap::new(),
            seen: BTreeMap::new(),
        }
    }

    /// Adds one occurrence. The first occurrence of a signature creates
    /// `testcase.json`, `log.txt` and `verdict.json`; later ones only bump
    /// the count in `verdict.json`.
    pub fn record(
        &mut self,
        signature: &str,
        operator: &str,
        tc: &TestCase,
        record: &VerdictRecord,
        log: &str,
    ) -> Result<(), ArchiveError> {
        let dir = self.root.join(signature);
        let verdict_path = dir.join("verdict.json");
        if !self.findings.contains_key(signature) {
            let existing = if verdict_path.exists() {
                Some(load_verdict(&verdict_path)?)
            } else {
                None
            };
            let finding = match existing {
                Some(f) => f,
                None => {
                    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
                    write_atomic(&dir.join("testcase.json"), &(tc.to_json() + "\n"))?;
                    write_atomic(&dir.join("log.txt"), log)?;
                    Finding {
                        signature: signature.to_string(),
                        operator: operator.to_string(),
                        testcase_id: tc.id.clone(),
                        record: record.clone(),
                        count: 0,
                        first_seen: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                        log: "log.txt".into(),
                    }
                }
            };
            self.findings.insert(signature.to_string(), finding);
        }
        let finding = self.findings.get_mut(signature).expect("inserted above");
        finding.count += 1;
        *self.seen.entry(signature.to_string()).or_default() += 1;
        let text = serde_json::to_string_pretty(finding).expect("plain data serializes");
        write_atomic(&verdict_path, &(text + "\n"))
    }

    /// Findings touched by this archiver with their occurrence counts in
    /// this run, by signature.
    pub fn finish(self) -> Vec<(Finding, u64)> {
        let mut seen = self.seen;
        self.findings
            .into_values()
            .map(|f| {
                let n = seen.remove(&f.signature).unwrap_or(0);
                (f, n)
            })
            .collect()
    }
}

fn load_verdict(path: &Path) -> Result<Finding, ArchiveError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| ArchiveError::Malformed {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Reads `testcase.json` and `verdict.json` from one finding directory.
pub fn load_finding(dir: &Path) -> Result<(TestCase, Finding), ArchiveError> {
    let finding = load_verdict(&dir.join("verdict.json"))?;
    let tc_path = dir.join("testcase.json");
    let text = fs::read_to_string(&tc_path).map_err(io_err(&tc_path))?;
    let tc = TestCase::from_json(&text).map_err(|e: TestCaseError| ArchiveError::Malformed {
        path: tc_path,
        message: e.to_string(),
    })?;
    Ok((tc, finding))
}

/// Every finding under `{out}/findings`, by signature.
pub fn scan_findings(out: &Path) -> Result<Vec<Finding>, ArchiveError> {
    let root = findings_dir(out);
    if !root.exists() {
        return Ok(Vec::new());
    }
    let mut dirs = Vec::new();
    for entry in fs::read_dir(&root).map_err(io_err(&root))? {
        let path = entry.map_err(io_err(&root))?.path();
        if path.join("verdict.json").exists() {
            dirs.push(path);
        }
    }
    dirs.sort();
    dirs.iter().map(|d| load_verdict(&d.join("verdict.json"))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use opfuzz_core::synth::{execute, BugManifest};
    use opfuzz_core::verdict::{OobKind, Verdict};

    fn tc(id_seed: u64) -> TestCase {
        let json = format!(
            r#"{{"version":1,"id":"00000000000000000000000000000000","family":"ElemUnary","rank":null,
                "params":{{"dims":[{n},1,1],"outdims":[{n},1,1],"opcode":0}},"dtype":"f32","seed":0,
                "iteration":0,"generator_version":"test"}}"#,
            n = id_seed + 1
        );
        let mut tc = TestCase::from_json(&json).unwrap();
        tc.id = tc.compute_id();
        tc
    }

    fn oob() -> VerdictRecord {
        let big = tc(1 << 40);
        let ex = execute(&big, &BugManifest::empty(), 256);
        let mut rec = ex.record();
        rec.verdict = Verdict::OobWrite {
            kind: OobKind::UndersizedGrid,
        };
        rec
    }

    #[test]
    fn occurrences_share_a_directory() {
        let out = tempfile::tempdir().unwrap();
        let mut a = Archiver::new(out.path());
        a.record("sig-a", "ElemUnary", &tc(1), &oob(), "first").unwrap();
        a.record("sig-a", "ElemUnary", &tc(2), &oob(), "second").unwrap();
        a.record("sig-b", "ElemUnary", &tc(3), &VerdictRecord::new(Verdict::InvalidLaunchConfig, None), "x")
            .unwrap();
        let dir = out.path().join("findings/sig-a");
        let mut names: Vec<_> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert_eq!(names, ["log.txt", "testcase.json", "verdict.json"]);
        let (first, finding) = load_finding(&dir).unwrap();
        assert_eq!(first, tc(1));
        assert_eq!(finding.count, 2);
        assert_eq!(finding.record, oob());
        assert_eq!(fs::read_to_string(dir.join("log.txt")).unwrap(), "first");
        let all = scan_findings(out.path()).unwrap();
        assert_eq!(all.iter().map(|f| f.count).collect::<Vec<_>>(), [2, 1]);
        let done = a.finish();
        assert_eq!(done.len(), 2);

        let mut again = Archiver::new(out.path());
        again.record("sig-a", "ElemUnary", &tc(4), &oob(), "third").unwrap();
        assert_eq!(load_finding(&dir).unwrap().1.count, 3);
        assert_eq!(again.finish()[0].1, 1);
    }
}

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{TestCase, TestCaseError};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `tc` to `{dir}/testcases/{id}.json` via a temporary file and a
/// rename, so concurrent writers never expose partial files.
pub fn corpus_write(dir: &Path, tc: &TestCase) -> Result<PathBuf, CorpusError> {
    let cases = dir.join("testcases");
    fs::create_dir_all(&cases).map_err(io_err(&cases))?;
    let path = cases.join(format!("{}.json", tc.id));
    let mut tmp = tempfile::NamedTempFile::new_in(&cases).map_err(io_err(&cases))?;
    tmp.write_all(tc.to_json().as_bytes()).map_err(io_err(tmp.path()))?;
    tmp.write_all(b"\n").map_err(io_err(&path))?;
    tmp.persist(&path).map_err(|e| CorpusError::Io {
        path: path.clone(),
        source: e.error,
    })?;
    Ok(path)
}

#[derive(Debug)]
pub struct CorpusEntry {
    pub path: PathBuf,
    pub testcase: TestCase,
}

#[derive(Debug, Default)]
pub struct ScanReport {
    pub cases: Vec<CorpusEntry>,
    pub corrupt: Vec<(PathBuf, TestCaseError)>,
}

/// Reads every `*.json` under `{dir}/testcases`, sorted by file name.
/// Files that fail to parse are reported, not dropped.
pub fn corpus_scan(dir: &Path) -> Result<ScanReport, CorpusError> {
    let cases = dir.join("testcases");
    let mut report = ScanReport::default();
    if !cases.exists() {
        return Ok(report);
    }
    let mut paths = Vec::new();
    for entry in fs::read_dir(&cases).map_err(io_err(&cases))? {
        let path = entry.map_err(io_err(&cases))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            paths.push(path);
        }
    }
    paths.sort();
    for path in paths {
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        match TestCase::from_json(&text) {
            Ok(testcase) => report.cases.push(CorpusEntry { path, testcase }),
            Err(e) => report.corrupt.push((path, e)),
        }
    }
    Ok(report)
}

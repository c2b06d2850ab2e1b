//! CPU-only stand-in for a GPU kernel launch.
//!
//! The host side of an element-wise style kernel computes the number of
//! output elements, derives a grid of `block`-sized thread blocks from it
//! and launches. Injected bug patterns corrupt that arithmetic the way
//! real launch-configuration bugs do, and the verdict is decided
//! analytically from the resulting covering capacity.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::Value;
use crate::ops::{output_shape, OperatorFamily, ShapeError};
use crate::testcase::TestCase;
use crate::verdict::{OobKind, Verdict, VerdictRecord};

pub const DEFAULT_BLOCK: i64 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BugPattern {
    /// Element count narrowed to a signed 32-bit integer.
    Trunc32ElementCount,
    /// Grid computed with floor instead of ceiling division.
    FloorGrid,
}

impl BugPattern {
    pub fn name(self) -> &'static str {
        match self {
            BugPattern::Trunc32ElementCount => "Trunc32ElementCount",
            BugPattern::FloorGrid => "FloorGrid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectedBug {
    pub family: OperatorFamily,
    pub pattern: BugPattern,
    /// The bug only fires when the true element count is at least this.
    #[serde(default)]
    pub guard_min_true_count: u64,
    #[serde(default)]
    pub note: String,
}

impl InjectedBug {
    fn fires(&self, family: OperatorFamily, true_count: Value, pattern: BugPattern) -> bool {
        self.pattern == pattern && self.family == family && true_count >= self.guard_min_true_count as Value
    }
}

/// Bugs injected into the synthetic target. Empty means bug-free.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BugManifest {
    pub bugs: Vec<InjectedBug>,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed bug manifest: {0}")]
    Parse(#[from] serde_json::Error),
}

impl BugManifest {
    pub fn empty() -> Self {
        BugManifest::default()
    }

    /// Truncated element count on transposed convolutions and a
    /// floor-rounded grid on replication padding.
    pub fn default_manifest() -> Self {
        Self::from_json(include_str!("../data/default_manifest.json")).expect("bundled manifest parses")
    }

    pub fn from_json(text: &str) -> Result<Self, ManifestError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    fn fires(&self, family: OperatorFamily, true_count: Value, pattern: BugPattern) -> bool {
        self.bugs.iter().any(|b| b.fires(family, true_count, pattern))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaunchConfig {
    pub total_elements_true: Value,
    /// Element count as the host code sees it.
    pub total_elements_host: Value,
    pub block: i64,
    pub grid: Value,
}

impl LaunchConfig {
    pub fn capacity(&self) -> Value {
        self.grid * self.block as Value
    }
}

/// Low 32 bits of `v`, read back as a signed 32-bit integer.
pub fn trunc32(v: Value) -> Value {
    (v as u32) as i32 as Value
}

/// Launch configuration the (possibly buggy) host code computes for
/// `true_count` output elements.
pub fn launch_for_count(
    family: OperatorFamily,
    true_count: Value,
    manifest: &BugManifest,
    block: i64,
) -> (LaunchConfig, Vec<BugPattern>) {
    let mut applied = Vec::new();
    let host = if manifest.fires(family, true_count, BugPattern::Trunc32ElementCount) {
        applied.push(BugPattern::Trunc32ElementCount);
        trunc32(true_count)
    } else {
        true_count
    };
    let b = block as Value;
    let grid = if host <= 0 {
        0
    } else if manifest.fires(family, true_count, BugPattern::FloorGrid) {
        applied.push(BugPattern::FloorGrid);
        host / b
    } else {
        (host + b - 1) / b
    };
    let cfg = LaunchConfig {
        total_elements_true: true_count,
        total_elements_host: host,
        block,
        grid,
    };
    (cfg, applied)
}

/// Launch configuration for a test case, or the shape error that makes
/// it invalid.
pub fn launch_config(tc: &TestCase, manifest: &BugManifest, block: i64) -> Result<LaunchConfig, ShapeError> {
    let shape = output_shape(tc.kind().map_err(|e| ShapeError::Invalid { rule: e.to_string() })?, &tc.to_assignment())?;
    Ok(launch_for_count(tc.family, shape.elements(), manifest, block).0)
}

/// Everything reported alongside a synthetic verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub true_count: Value,
    pub host_count: Value,
    pub grid: Value,
    pub block: i64,
    /// `grid * block`.
    pub capacity: Value,
    /// `capacity - true_count`; negative when the grid falls short.
    pub slack: Value,
    pub patterns: Vec<BugPattern>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Execution {
    pub verdict: Verdict,
    pub diagnostics: Diagnostics,
}

impl Execution {
    pub fn record(&self) -> VerdictRecord {
        VerdictRecord::new(self.verdict.clone(), Some(self.diagnostics.clone()))
    }
}

/// Runs a test case on the synthetic target with block size `block`.
pub fn execute(tc: &TestCase, manifest: &BugManifest, block: i64) -> Execution {
    let shape = tc
        .kind()
        .map_err(|e| ShapeError::Invalid { rule: e.to_string() })
        .and_then(|k| output_shape(k, &tc.to_assignment()));
    let true_count = match shape {
        Ok(s) => s.elements(),
        Err(e) => {
            let rule = match e {
                ShapeError::Invalid { rule } => rule,
                other => other.to_string(),
            };
            return Execution {
                verdict: Verdict::PreconditionReject { rule },
                diagnostics: Diagnostics {
                    true_count: 0,
                    host_count: 0,
                    grid: 0,
                    block,
                    capacity: 0,
                    slack: 0,
                    patterns: Vec::new(),
                },
            };
        }
    };
    let (cfg, patterns) = launch_for_count(tc.family, true_count, manifest, block);
    let capacity = cfg.capacity();
    let verdict = if cfg.total_elements_host <= 0 || cfg.grid == 0 {
        Verdict::InvalidLaunchConfig
    } else if capacity < true_count {
        Verdict::OobWrite {
            kind: OobKind::UndersizedGrid,
        }
    } else {
        Verdict::Pass
    };
    Execution {
        verdict,
        diagnostics: Diagnostics {
            true_count,
            host_count: cfg.total_elements_host,
            grid: cfg.grid,
            block,
            capacity,
            slack: capacity - true_count,
            patterns,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verdict::{classify, BugClass};

    fn only(pattern: BugPattern) -> BugManifest {
        BugManifest {
            bugs: vec![InjectedBug {
                family: OperatorFamily::ConvTranspose,
                pattern,
                guard_min_true_count: 0,
                note: String::new(),
            }],
        }
    }

    const CT: OperatorFamily = OperatorFamily::ConvTranspose;

    #[test]
    fn bug_free_counts() {
        let (cfg, applied) = launch_for_count(CT, 1000, &BugManifest::empty(), 256);
        assert_eq!((cfg.total_elements_host, cfg.grid), (1000, 4));
        assert!(applied.is_empty());
    }

    #[test]
    fn truncation_goes_negative() {
        let (cfg, _) = launch_for_count(CT, (1 << 31) + 8, &only(BugPattern::Trunc32ElementCount), 256);
        assert_eq!(cfg.total_elements_host, -2_147_483_640);
        assert_eq!(cfg.grid, 0);
    }

    #[test]
    fn floor_grid_leaves_a_tail() {
        let (cfg, applied) = launch_for_count(CT, 257, &only(BugPattern::FloorGrid), 256);
        assert_eq!((cfg.grid, cfg.capacity()), (1, 256));
        assert_eq!(applied, vec![BugPattern::FloorGrid]);
    }

    #[test]
    fn guard_and_family_filter() {
        let mut m = only(BugPattern::FloorGrid);
        m.bugs[0].guard_min_true_count = 1000;
        assert!(launch_for_count(CT, 999, &m, 256).1.is_empty());
        assert!(!launch_for_count(CT, 1000, &m, 256).1.is_empty());
        assert!(launch_for_count(OperatorFamily::Conv, 5000, &m, 256).1.is_empty());
    }

    #[test]
    fn bundled_manifest() {
        let m = BugManifest::default_manifest();
        assert_eq!(m.bugs.len(), 2);
        assert_eq!(m.bugs[0].pattern, BugPattern::Trunc32ElementCount);
        assert_eq!(m.bugs[1].family, OperatorFamily::ReplicationPad);
        assert!(BugManifest::from_json(r#"[{"family": "Conv", "pattern": "Nope"}]"#).is_err());
    }

    #[test]
    fn verdict_mapping() {
        assert_eq!(
            classify(&Verdict::OobWrite {
                kind: OobKind::UndersizedGrid
            }),
            BugClass::SilentMemoryCorruption
        );
    }
}

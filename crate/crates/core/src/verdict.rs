//! Execution verdicts, the failure taxonomy they map to, and the
//! signatures findings are deduplicated by.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ops::OpKind;
use crate::synth::{BugPattern, Diagnostics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OobKind {
    UndersizedGrid,
    NegativeCount,
}

/// Outcome of one execution.
///
/// The synthetic target produces the first four variants; the rest come
/// from external targets.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "verdict")]
pub enum Verdict {
    Pass,
    OobWrite {
        kind: OobKind,
    },
    InvalidLaunchConfig,
    PreconditionReject {
        rule: String,
    },
    /// A memory checker reported an error, e.g. `InvalidGlobalWrite`.
    Sanitizer {
        kind: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frame: Option<String>,
    },
    /// The framework raised before or during the call.
    Exception {
        name: String,
    },
    OutOfMemory,
    TimedOut,
}

impl Verdict {
    /// Variant name, as written in the `verdict` field.
    pub fn tag(&self) -> &'static str {
        match self {
            Verdict::Pass => "Pass",
            Verdict::OobWrite { .. } => "OobWrite",
            Verdict::InvalidLaunchConfig => "InvalidLaunchConfig",
            Verdict::PreconditionReject { .. } => "PreconditionReject",
            Verdict::Sanitizer { .. } => "Sanitizer",
            Verdict::Exception { .. } => "Exception",
            Verdict::OutOfMemory => "OutOfMemory",
            Verdict::TimedOut => "TimedOut",
        }
    }

    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BugClass {
    None,
    SilentMemoryCorruption,
    GpuLevelException,
    CpuSideAssert,
    /// The framework rejected the call at the API level.
    ApiException,
    OutOfMemory,
    TimedOut,
}

impl BugClass {
    pub const ALL: [BugClass; 7] = [
        BugClass::None,
        BugClass::SilentMemoryCorruption,
        BugClass::GpuLevelException,
        BugClass::CpuSideAssert,
        BugClass::ApiException,
        BugClass::OutOfMemory,
        BugClass::TimedOut,
    ];

    /// Classes counted as bugs. API rejections, out-of-memory and
    /// timeouts are reported separately.
    pub fn is_bug(self) -> bool {
        matches!(
            self,
            BugClass::SilentMemoryCorruption | BugClass::GpuLevelException | BugClass::CpuSideAssert
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            BugClass::None => "None",
            BugClass::SilentMemoryCorruption => "SilentMemoryCorruption",
            BugClass::GpuLevelException => "GpuLevelException",
            BugClass::CpuSideAssert => "CpuSideAssert",
            BugClass::ApiException => "ApiException",
            BugClass::OutOfMemory => "OutOfMemory",
            BugClass::TimedOut => "TimedOut",
        }
    }
}

impl fmt::Display for BugClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Memory-checker error kinds that indicate an out-of-bounds or
/// misaligned access.
const MEMORY_ERRORS: &[&str] = &[
    "InvalidGlobalWrite",
    "InvalidGlobalRead",
    "InvalidSharedWrite",
    "InvalidSharedRead",
    "InvalidLocalWrite",
    "InvalidLocalRead",
    "MisalignedWrite",
    "MisalignedRead",
];

pub fn classify(v: &Verdict) -> BugClass {
    match v {
        Verdict::Pass => BugClass::None,
        Verdict::OobWrite { .. } => BugClass::SilentMemoryCorruption,
        Verdict::InvalidLaunchConfig => BugClass::GpuLevelException,
        Verdict::PreconditionReject { .. } => BugClass::CpuSideAssert,
        Verdict::Sanitizer { kind, .. } if MEMORY_ERRORS.contains(&kind.as_str()) => BugClass::SilentMemoryCorruption,
        Verdict::Sanitizer { kind, .. } if kind == "ApiError" => BugClass::CpuSideAssert,
        Verdict::Sanitizer { .. } => BugClass::GpuLevelException,
        Verdict::Exception { .. } => BugClass::ApiException,
        Verdict::OutOfMemory => BugClass::OutOfMemory,
        Verdict::TimedOut => BugClass::TimedOut,
    }
}

/// The verdict JSON shared with external targets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRecord {
    #[serde(flatten)]
    pub verdict: Verdict,
    #[serde(default = "unclassified")]
    pub bug_class: BugClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
}

fn unclassified() -> BugClass {
    BugClass::None
}

impl VerdictRecord {
    pub fn new(verdict: Verdict, diagnostics: Option<Diagnostics>) -> Self {
        let bug_class = classify(&verdict);
        VerdictRecord {
            verdict,
            bug_class,
            diagnostics,
        }
    }

    /// Parses a verdict document and reclassifies it locally, ignoring any
    /// class the producer wrote.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let mut r: VerdictRecord = serde_json::from_str(text)?;
        r.bug_class = classify(&r.verdict);
        Ok(r)
    }
}

/// Stable key of a finding: kind, verdict and the cause that produced it
/// (injected pattern, or memory-checker kind and top frame). Parameter
/// values never enter the signature.
pub fn dedup_signature(kind: OpKind, verdict: &Verdict, patterns: &[BugPattern]) -> String {
    let mut parts = vec![kind.to_string(), verdict.tag().to_string()];
    match verdict {
        Verdict::Sanitizer { kind, frame } => {
            parts.push(kind.clone());
            if let Some(f) = frame {
                parts.push(f.clone());
            }
        }
        Verdict::Exception { name } => parts.push(name.clone()),
        Verdict::PreconditionReject { rule } => parts.push(rule.clone()),
        _ => {}
    }
    if !patterns.is_empty() {
        let names: Vec<&str> = patterns.iter().map(|p| p.name()).collect();
        parts.push(names.join("+"));
    }
    parts.iter().map(|p| sanitize(p)).collect::<Vec<_>>().join("-")
}

fn sanitize(s: &str) -> String {
    let mut out: String = s
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' { c } else { '_' })
        .collect();
    out.truncate(80);
    out
}

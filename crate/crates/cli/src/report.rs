//! Campaign statistics, as `report.json` and a text summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use opfuzz_core::ops::OpKind;
use opfuzz_core::verdict::BugClass;
use serde::{Deserialize, Serialize};

use crate::campaign::Mode;
use crate::config::CampaignConfig;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyStats {
    pub generated: u64,
    pub executed: u64,
    /// Cases the target could not express.
    pub skipped: u64,
    /// Non-passing executions.
    pub findings: u64,
    /// The explorer ran out of new cases.
    pub exhausted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FindingSummary {
    pub signature: String,
    pub operator: String,
    pub bug_class: BugClass,
    /// Occurrences in this campaign.
    pub count: u64,
    pub testcase_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub mode: String,
    pub seed: u64,
    pub target: String,
    pub generated: u64,
    pub executed: u64,
    pub skipped: u64,
    /// Executions per bug class.
    pub histogram: BTreeMap<String, u64>,
    pub distinct_findings: usize,
    /// Distinct findings whose class counts as a bug.
    pub bugs: usize,
    pub findings: Vec<FindingSummary>,
    pub elapsed_secs: f64,
    /// Generated cases per minute.
    pub throughput_per_min: f64,
    pub per_family: BTreeMap<String, FamilyStats>,
    pub per_operator: BTreeMap<String, FamilyStats>,
}

impl CampaignReport {
    pub(crate) fn assemble(
        cfg: &CampaignConfig,
        mode: Mode,
        elapsed: Duration,
        per_operator: BTreeMap<String, FamilyStats>,
        counts: BTreeMap<String, u64>,
        findings: Vec<FindingSummary>,
    ) -> Self {
        let mut histogram: BTreeMap<String, u64> = BugClass::ALL.iter().map(|c| (c.name().to_string(), 0)).collect();
        histogram.extend(counts);
        let mut per_family: BTreeMap<String, FamilyStats> = BTreeMap::new();
        for (op, s) in &per_operator {
            let family = op.parse::<OpKind>().map_or_else(|_| op.clone(), |k| k.family.to_string());
            let f = per_family.entry(family).or_insert_with(|| FamilyStats {
                exhausted: true,
                ..FamilyStats::default()
            });
            f.generated += s.generated;
            f.executed += s.executed;
            f.skipped += s.skipped;
            f.findings += s.findings;
            f.exhausted &= s.exhausted;
        }
        let sum = |f: fn(&FamilyStats) -> u64| per_operator.values().map(f).sum::<u64>();
        let generated = sum(|s| s.generated);
        let secs = elapsed.as_secs_f64();
        CampaignReport {
            mode: match mode {
                Mode::Generate => "gen",
                Mode::Fuzz => "fuzz",
            }
            .into(),
            seed: cfg.seed,
            target: match mode {
                Mode::Generate => "none".into(),
                Mode::Fuzz => cfg.target.describe(),
            },
            generated,
            executed: sum(|s| s.executed),
            skipped: sum(|s| s.skipped),
            histogram,
            distinct_findings: findings.len(),
            bugs: findings.iter().filter(|f| f.bug_class.is_bug()).count(),
            findings,
            elapsed_secs: secs,
            throughput_per_min: if secs > 0.0 { generated as f64 * 60.0 / secs } else { 0.0 },
            per_family,
            per_operator,
        }
    }

    pub fn write(&self, out: &Path) -> Result<(), (PathBuf, std::io::Error)> {
        let json = out.join("report.json");
        let text = serde_json::to_string_pretty(self).expect("plain data serializes") + "\n";
        std::fs::write(&json, text).map_err(|e| (json, e))?;
        let summary = out.join("summary.txt");
        std::fs::write(&summary, self.summary()).map_err(|e| (summary, e))
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode: {}  seed: {}  target: {}", self.mode, self.seed, self.target);
        let _ = writeln!(
            s,
            "generated {}  executed {}  skipped {}  in {:.2}s ({:.0} cases/min)",
            self.generated, self.executed, self.skipped, self.elapsed_secs, self.throughput_per_min
        );
        let _ = writeln!(s, "verdicts by class:");
        for (class, n) in &self.histogram {
            let _ = writeln!(s, "  {class:<24} {n}");
        }
        let _ = writeln!(s, "findings: {} distinct, {} bugs", self.distinct_findings, self.bugs);
        for f in &self.findings {
            let _ = writeln!(s, "  {:<48} {:<24} x{}", f.signature, f.bug_class.name(), f.count);
        }
        let _ = writeln!(s, "per family:");
        for (family, st) in &self.per_family {
            let _ = writeln!(
                s,
                "  {family:<20} generated {:<7} executed {:<7} findings {}{}",
                st.generated,
                st.executed,
                st.findings,
                if st.exhausted { "  (exhausted)" } else { "" }
            );
        }
        s
    }
}

//! The generate/execute/archive loop.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use opfuzz_core::explorer::{ExploreError, ExplorerState, Next};
use opfuzz_core::ops::{build_model, OpError, OpKind};
use opfuzz_core::testcase::{corpus_write, CorpusError, TestCase, TestCaseError};
use opfuzz_core::verdict::{dedup_signature, VerdictRecord};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::archive::{ArchiveError, Archiver};
use crate::config::CampaignConfig;
use crate::report::{CampaignReport, FamilyStats, FindingSummary};
use crate::target::{run_case, Executed, TargetError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Generate and archive test cases without executing them.
    Generate,
    Fuzz,
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("{0}: {1}")]
    Model(OpKind, OpError),
    #[error("{0}: {1}")]
    Explore(OpKind, ExploreError),
    #[error(transparent)]
    TestCase(#[from] TestCaseError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Seed of the explorer stream for `kind`; independent of how operators
/// are spread over workers.
pub fn stream_seed(seed: u64, kind: OpKind) -> u64 {
    let digest = Sha256::digest(format!("{seed}:{kind}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

struct FindingEvent {
    signature: String,
    operator: String,
    testcase: TestCase,
    record: VerdictRecord,
    log: String,
}

#[derive(Default)]
struct WorkerStats {
    per_operator: BTreeMap<String, FamilyStats>,
    histogram: BTreeMap<String, u64>,
}

struct Stream {
    kind: OpKind,
    explorer: ExplorerState,
    quota: Option<u64>,
    seed: u64,
    done: bool,
}

/// Splits `count` over `n` operators, earlier ones taking the remainder.
fn quotas(count: Option<u64>, n: usize) -> Vec<Option<u64>> {
    (0..n)
        .map(|i| count.map(|c| c / n as u64 + u64::from((i as u64) < c % n as u64)))
        .collect()
}

pub fn run_campaign(cfg: &CampaignConfig, mode: Mode) -> Result<CampaignReport, CampaignError> {
    let start = Instant::now();
    let deadline = cfg.duration.map(|d| start + d);
    std::fs::create_dir_all(&cfg.out).map_err(|source| CampaignError::Io {
        path: cfg.out.clone(),
        source,
    })?;

    let quota = quotas(cfg.count, cfg.ops.len());
    let mut shards: Vec<Vec<Stream>> = (0..cfg.workers.min(cfg.ops.len())).map(|_| Vec::new()).collect();
    let n_shards = shards.len();
    for (i, (&kind, quota)) in cfg.ops.iter().zip(quota).enumerate() {
        let model = build_model(kind, &cfg.model).map_err(|e| CampaignError::Model(kind, e))?;
        let seed = stream_seed(cfg.seed, kind);
        let explorer = ExplorerState::new(model, seed, cfg.policy.clone()).map_err(|e| CampaignError::Explore(kind, e))?;
        shards[i % n_shards].push(Stream {
            kind,
            explorer,
            quota,
            seed,
            done: quota == Some(0),
        });
    }

    let stop = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<FindingEvent>();
    let out = cfg.out.as_path();
    let (results, archived) = std::thread::scope(|s| {
        let archiver = s.spawn(move || -> Result<_, ArchiveError> {
            let mut archiver = Archiver::new(out);
            for ev in rx {
                archiver.record(&ev.signature, &ev.operator, &ev.testcase, &ev.record, &ev.log)?;
            }
            Ok(archiver.finish())
        });
        let handles: Vec<_> = shards
            .into_iter()
            .map(|shard| {
                let tx = tx.clone();
                let stop = &stop;
                s.spawn(move || {
                    let r = run_worker(cfg, mode, shard, deadline, stop, &tx);
                    if r.is_err() {
                        stop.store(true, Ordering::Relaxed);
                    }
                    r
                })
            })
            .collect();
        drop(tx);
        let results: Vec<_> = handles.into_iter().map(|h| h.join().expect("worker panicked")).collect();
        (results, archiver.join().expect("archiver panicked"))
    });

    let mut stats = WorkerStats::default();
    for r in results {
        let w = r?;
        stats.per_operator.extend(w.per_operator);
        for (class, n) in w.histogram {
            *stats.histogram.entry(class).or_default() += n;
        }
    }
    let findings = archived?
        .into_iter()
        .map(|(f, n)| FindingSummary {
            signature: f.signature,
            operator: f.operator,
            bug_class: f.record.bug_class,
            count: n,
            testcase_id: f.testcase_id,
        })
        .collect();
    let report = CampaignReport::assemble(cfg, mode, start.elapsed(), stats.per_operator, stats.histogram, findings);
    report.write(&cfg.out).map_err(|(path, source)| CampaignError::Io { path, source })?;
    Ok(report)
}

fn run_worker(
    cfg: &CampaignConfig,
    mode: Mode,
    mut streams: Vec<Stream>,
    deadline: Option<Instant>,
    stop: &AtomicBool,
    tx: &mpsc::Sender<FindingEvent>,
) -> Result<WorkerStats, CampaignError> {
    let mut stats = WorkerStats::default();
    for st in &streams {
        stats.per_operator.insert(st.kind.to_string(), FamilyStats::default());
    }
    let past_deadline = || deadline.is_some_and(|d| Instant::now() >= d);
    while streams.iter().any(|s| !s.done) {
        if stop.load(Ordering::Relaxed) || past_deadline() {
            break;
        }
        for st in streams.iter_mut().filter(|s| !s.done) {
            let entry = stats.per_operator.get_mut(&st.kind.to_string()).expect("inserted above");
            let a = match st.explorer.next() {
                Next::Emitted(a) => a,
                Next::Exhausted => {
                    st.done = true;
                    entry.exhausted = true;
                    continue;
                }
            };
            let iteration = st.explorer.iteration() - 1;
            let tc = TestCase::from_assignment(st.kind, st.explorer.model(), &a, cfg.dtype, st.seed, iteration)?;
            corpus_write(&cfg.out, &tc)?;
            entry.generated += 1;
            if st.quota.is_some_and(|q| entry.generated >= q) {
                st.done = true;
            }
            if mode == Mode::Generate {
                continue;
            }
            match run_case(&cfg.target, &tc, &cfg.out)? {
                Executed::Skipped(_) => entry.skipped += 1,
                Executed::Ran(outcome) => {
                    entry.executed += 1;
                    *stats.histogram.entry(outcome.record.bug_class.name().to_string()).or_default() += 1;
                    if !outcome.record.verdict.is_pass() {
                        entry.findings += 1;
                        let signature = dedup_signature(st.kind, &outcome.record.verdict, &outcome.patterns);
                        let ev = FindingEvent {
                            signature,
                            operator: st.kind.to_string(),
                            testcase: tc,
                            record: outcome.record,
                            log: outcome.log,
                        };
                        if tx.send(ev).is_err() {
                            stop.store(true, Ordering::Relaxed);
                        }
                    }
                }
            }
            if past_deadline() {
                break;
            }
        }
    }
    Ok(stats)
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use opfuzz_cli::archive::{load_finding, scan_findings};
use opfuzz_cli::campaign::{run_campaign, Mode};
use opfuzz_cli::config::{parse_framework, parse_target, CampaignConfig, ConfigError, OpList, Settings};
use opfuzz_cli::report::CampaignReport;
use opfuzz_cli::target::{run_case, Executed};
use opfuzz_core::ops::validate;
use opfuzz_core::testcase::{corpus_scan, materialize, TestCase};

#[derive(Parser)]
#[command(name = "opfuzz", version, about = "Constraint-guided fuzzer for tensor operator parameters")]
struct Cli {
    /// JSON file with default settings; flags win over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate and archive test cases without running them.
    Gen(CampaignArgs),
    /// Generate, run, classify and archive findings.
    Fuzz(CampaignArgs),
    /// Validate a test case file, and run it when a target is given.
    Check {
        file: PathBuf,
        #[command(flatten)]
        target: TargetArgs,
    },
    /// Render a test case as a framework script.
    Materialize {
        file: PathBuf,
        #[arg(long)]
        framework: String,
        /// Write into this directory instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a campaign output directory.
    Stats { dir: PathBuf },
    /// Re-run an archived finding and compare verdicts.
    Replay {
        finding: PathBuf,
        #[command(flatten)]
        target: TargetArgs,
    },
}

#[derive(Args, Default)]
struct TargetArgs {
    /// `synthetic` or `external:<command>`.
    #[arg(long)]
    target: Option<String>,
    /// Bug manifest for the synthetic target.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Framework scripts are rendered for (external targets).
    #[arg(long)]
    framework: Option<String>,
    /// Per-case time limit for external targets, e.g. `120s`.
    #[arg(long)]
    timeout: Option<String>,
    /// Threads per block on the synthetic target.
    #[arg(long)]
    block: Option<i64>,
}

impl TargetArgs {
    fn settings(self) -> Settings {
        Settings {
            target: self.target,
            manifest: self.manifest,
            framework: self.framework,
            timeout: self.timeout,
            block: self.block,
            ..Settings::default()
        }
    }
}

#[derive(Args)]
struct CampaignArgs {
    /// Comma-separated operators or families, or `all`.
    #[arg(long)]
    ops: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Total test cases, split across operators.
    #[arg(long)]
    count: Option<u64>,
    /// Wall-clock budget, e.g. `30s` or `5m`.
    #[arg(long)]
    duration: Option<String>,
    /// Cap on input and output element counts; 0 disables it.
    #[arg(long)]
    max_elems: Option<i64>,
    /// Upper bound for spatial dimensions.
    #[arg(long)]
    dim_hi: Option<i64>,
    /// Hash buckets used by exclusion constraints.
    #[arg(long)]
    buckets: Option<u32>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// f16, f32, f64, i32 or i64.
    #[arg(long)]
    dtype: Option<String>,
    #[command(flatten)]
    target: TargetArgs,
}

impl CampaignArgs {
    fn settings(self) -> Settings {
        Settings {
            ops: self.ops.map(OpList::One),
            seed: self.seed,
            count: self.count,
            duration: self.duration,
            max_elems: self.max_elems,
            dim_hi: self.dim_hi,
            buckets: self.buckets,
            workers: self.workers,
            out: self.out,
            dtype: self.dtype,
            ..Settings::default()
        }
        .over(self.target.settings())
    }
}

enum Failure {
    Config(String),
    Internal(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Internal(e)
    }
}

const FINDINGS: u8 = 1;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(msg)) => {
            eprintln!("opfuzz: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("opfuzz: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let file = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    match cli.command {
        Cmd::Gen(args) => campaign(args.settings().over(file), Mode::Generate),
        Cmd::Fuzz(args) => campaign(args.settings().over(file), Mode::Fuzz),
        Cmd::Check { file: path, target } => check(&path, target, file),
        Cmd::Materialize { file, framework, out } => materialize_cmd(&file, &framework, out.as_deref()),
        Cmd::Stats { dir } => stats(&dir),
        Cmd::Replay { finding, target } => replay(&finding, target.settings().over(file)),
    }
}

fn campaign(settings: Settings, mode: Mode) -> Result<u8, Failure> {
    let cfg = CampaignConfig::from_settings(&settings)?;
    let report = run_campaign(&cfg, mode).context("campaign failed")?;
    print!("{}", report.summary());
    Ok(if report.distinct_findings > 0 { FINDINGS } else { 0 })
}

fn read_case(path: &Path) -> Result<TestCase, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    TestCase::from_json(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn check(path: &Path, target: TargetArgs, file: Settings) -> Result<u8, Failure> {
    let tc = read_case(path)?;
    let run_it = target.target.is_some();
    let settings = target.settings().over(file);
    let violations = validate(&tc).map_err(|e| Failure::Config(e.to_string()))?;
    if !tc.id_matches() {
        println!("warning: id {} does not match content ({})", tc.id, tc.compute_id());
    }
    if !violations.is_empty() {
        for v in &violations {
            println!("violation: {v}");
        }
        return Ok(FINDINGS);
    }
    println!("valid: {} {}", tc.kind().map_err(|e| Failure::Config(e.to_string()))?, tc.id);
    if !run_it {
        return Ok(0);
    }
    let spec = parse_target(&settings)?;
    let work = path.parent().unwrap_or(Path::new("."));
    match run_case(&spec, &tc, work).context("running test case")? {
        Executed::Skipped(why) => {
            println!("skipped: {why}");
            Ok(0)
        }
        Executed::Ran(outcome) => {
            println!("{}", serde_json::to_string_pretty(&outcome.record).expect("plain data serializes"));
            Ok(if outcome.record.verdict.is_pass() { 0 } else { FINDINGS })
        }
    }
}

fn materialize_cmd(path: &Path, framework: &str, out: Option<&Path>) -> Result<u8, Failure> {
    let tc = read_case(path)?;
    let target = parse_framework(framework)?;
    let script = materialize(&tc, target).map_err(|e| Failure::Config(e.to_string()))?;
    match out {
        None => print!("{}", script.source),
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| dir.display().to_string())?;
            let dest = dir.join(script.file_name());
            std::fs::write(&dest, &script.source).with_context(|| dest.display().to_string())?;
            println!("{}", dest.display());
        }
    }
    Ok(0)
}

fn stats(dir: &Path) -> Result<u8, Failure> {
    if !dir.is_dir() {
        return Err(Failure::Config(format!("{}: not a directory", dir.display())));
    }
    let scan = corpus_scan(dir).context("scanning corpus")?;
    let mut per_op = std::collections::BTreeMap::<String, u64>::new();
    for e in &scan.cases {
        let name = e.testcase.kind().map_or_else(|_| e.testcase.family.to_string(), |k| k.to_string());
        *per_op.entry(name).or_default() += 1;
    }
    println!("corpus: {} test cases, {} unreadable", scan.cases.len(), scan.corrupt.len());
    for (op, n) in &per_op {
        println!("  {op:<24} {n}");
    }
    for (path, err) in &scan.corrupt {
        println!("  unreadable {}: {err}", path.display());
    }
    let findings = scan_findings(dir).context("scanning findings")?;
    println!("findings: {}", findings.len());
    for f in &findings {
        println!("  {:<48} {:<24} x{}  first seen {}", f.signature, f.record.bug_class.name(), f.count, f.first_seen);
    }
    let report_path = dir.join("report.json");
    if let Ok(text) = std::fs::read_to_string(&report_path) {
        let report: CampaignReport =
            serde_json::from_str(&text).with_context(|| report_path.display().to_string())?;
        println!("last campaign:");
        print!("{}", report.summary());
    }
    Ok(0)
}

fn replay(dir: &Path, settings: Settings) -> Result<u8, Failure> {
    let (tc, finding) = load_finding(dir).map_err(|e| Failure::Config(e.to_string()))?;
    let spec = parse_target(&settings)?;
    match run_case(&spec, &tc, dir).context("replaying finding")? {
        Executed::Skipped(why) => Err(Failure::Config(format!("target cannot run this case: {why}"))),
        Executed::Ran(outcome) => {
            let now = serde_json::to_string(&outcome.record.verdict).expect("plain data serializes");
            let then = serde_json::to_string(&finding.record.verdict).expect("plain data serializes");
            if outcome.record.verdict == finding.record.verdict {
                println!("reproduced: {now}");
                Ok(0)
            } else {
                println!("not reproduced: recorded {then}, got {now}");
                Ok(FINDINGS)
            }
        }
    }
}

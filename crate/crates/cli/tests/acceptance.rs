//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use opfuzz_cli::campaign::{run_campaign, Mode};
use opfuzz_cli::config::{CampaignConfig, OpList, Settings};
use opfuzz_core::constraint::{bucket, mix32, solve, Assignment, Constraint, IntExpr, Model, SolveResult, VarRole};
use opfuzz_core::explorer::{fingerprint, ExplorePolicy, ExplorerState, Next};
use opfuzz_core::ops::{build_model, output_shape, validate, validate_assignment, Bounds, ModelConfig, OpKind};
use opfuzz_core::synth::{execute, BugManifest, DEFAULT_BLOCK};
use opfuzz_core::testcase::{materialize, Dtype, FrameworkTarget, TestCase};
use opfuzz_core::verdict::{classify, BugClass};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn fig3() -> Outcome {
    let start = Instant::now();
    let kind: OpKind = "Conv2d".parse().unwrap();
    let mut m = build_model(kind, &ModelConfig::default()).map_err(|e| e.to_string())?;
    for (name, v) in [("dims.0", 128), ("ksize.0", 5), ("pad.0", 1), ("dil.0", 1), ("stride.0", 1)] {
        m.fix(name, v).map_err(|e| e.to_string())?;
    }
    let a = match solve(&m, 0, 100_000).map_err(|e| e.to_string())? {
        SolveResult::Sat(a) => a,
        other => return Err(format!("{other:?}")),
    };
    let h_out = a.get("outdims.0").unwrap();
    ensure(h_out == 126, format!("H_out = {h_out}"))?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("H_out = {h_out} in {:.2?}", start.elapsed()))
}

fn soundness_sweep() -> Outcome {
    let start = Instant::now();
    let kinds = OpKind::all();
    let families: BTreeSet<_> = kinds.iter().map(|k| k.family).collect();
    let per_kind = 10_000usize.div_ceil(kinds.len());
    let mut total = 0;
    for kind in &kinds {
        let m = build_model(*kind, &ModelConfig::default()).map_err(|e| e.to_string())?;
        let mut st = ExplorerState::new(m.clone(), 2024, ExplorePolicy::default()).map_err(|e| e.to_string())?;
        for i in 0..per_kind {
            let Next::Emitted(a) = st.next() else {
                return Err(format!("{kind} exhausted after {i}"));
            };
            let tc = TestCase::from_assignment(*kind, &m, &a, Dtype::F32, 2024, i as u64).map_err(|e| e.to_string())?;
            let v = validate(&tc).map_err(|e| e.to_string())?;
            ensure(v.is_empty(), format!("{kind}: {v:?}"))?;
            total += 1;
        }
    }
    ensure(total >= 10_000, format!("only {total} cases"))?;
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!("{total} cases over {} families, 0 violations, {:.2?}", families.len(), start.elapsed()))
}

fn diversity() -> Outcome {
    let start = Instant::now();
    let kind: OpKind = "Conv2d".parse().unwrap();
    let policy = ExplorePolicy::default();
    let m = build_model(kind, &ModelConfig::default()).map_err(|e| e.to_string())?;
    let mut st = ExplorerState::new(m, 1, policy.clone()).map_err(|e| e.to_string())?;
    let mut seen = HashSet::new();
    let mut strides = HashSet::new();
    for i in 0..1000 {
        let Next::Emitted(a) = st.next() else {
            return Err(format!("exhausted after {i}"));
        };
        ensure(seen.insert(fingerprint(&a)), format!("duplicate at {i}"))?;
        for (var, v) in st.exclusions() {
            let x = a.get(var).unwrap();
            let hb = |y| bucket(y, policy.bucket_count).unwrap();
            ensure(x != v && hb(x) != hb(v), format!("exclusion {var} != {v} broken at {i}"))?;
        }
        strides.insert(a.get("stride.0").unwrap());
    }
    ensure(strides.len() >= 200, format!("{} distinct strides", strides.len()))?;
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!("1000 unique tuples, {} distinct strides, {:.2?}", strides.len(), start.elapsed()))
}

fn hash_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut inputs = HashSet::new();
    while inputs.len() < 1_000_000 {
        inputs.insert(rng.gen::<u32>());
    }
    let images: HashSet<u32> = inputs.iter().map(|&x| mix32(x)).collect();
    ensure(images.len() == inputs.len(), "collision among random inputs")?;
    let seq: HashSet<u32> = (0..1_000_000u32).map(mix32).collect();
    ensure(seq.len() == 1_000_000, "collision among sequential inputs")?;
    let mut hist = [0u32; 64];
    for v in 0..1_000_000i128 {
        hist[bucket(v, 64).unwrap() as usize] += 1;
    }
    let expect = 1_000_000.0 / 64.0;
    let worst = hist.iter().map(|&c| (c as f64 - expect).abs() / expect).fold(0.0, f64::max);
    ensure(worst <= 0.05, format!("bucket deviation {:.2}%", worst * 100.0))?;
    Ok(format!("no collisions over 2x10^6 inputs, max bucket deviation {:.2}%", worst * 100.0))
}

/// Every satisfying full assignment, by walking the domain product.
fn brute_force(m: &Model) -> BTreeSet<Vec<i128>> {
    let vars = m.vars();
    let mut cur: Vec<i128> = vars.iter().map(|v| v.lo).collect();
    let mut out = BTreeSet::new();
    loop {
        let a: Assignment = vars.iter().zip(&cur).map(|(v, x)| (v.name.to_string(), *x)).collect();
        if m.satisfied_by(&a) {
            out.insert(cur.clone());
        }
        let mut i = 0;
        loop {
            if i == vars.len() {
                return out;
            }
            if cur[i] < vars[i].hi {
                cur[i] += 1;
                break;
            }
            cur[i] = vars[i].lo;
            i += 1;
        }
    }
}

fn small_completeness() -> Outcome {
    let mut models = Vec::new();
    let mut m = Model::new();
    let x = m.declare("x", 0, 12, VarRole::Param).unwrap();
    let y = m.declare("y", 0, 12, VarRole::Param).unwrap();
    m.add("sum", Constraint::le(x.clone() + y.clone(), IntExpr::constant(12))).unwrap();
    m.add("odd", Constraint::ne(x * y, IntExpr::constant(6))).unwrap();
    models.push(("x+y<=12".to_string(), m));
    let tiny = ModelConfig {
        dim: Bounds::new(1, 4),
        chan: Bounds::new(1, 1),
        batch: Bounds::new(1, 1),
        ksize: Bounds::new(1, 3),
        stride: Bounds::new(1, 2),
        pad: Bounds::new(0, 1),
        dil: Bounds::new(1, 2),
        ..ModelConfig::default()
    };
    for name in ["Conv1d", "MaxPool1d", "AvgPool1d", "ConvTranspose1d", "ReflectionPad1d"] {
        let kind: OpKind = name.parse().unwrap();
        let mut cfg = tiny.clone();
        if name == "ConvTranspose1d" {
            cfg.dim = Bounds::new(1, 2);
        }
        models.push((name.to_string(), build_model(kind, &cfg).map_err(|e| e.to_string())?));
    }
    let mut sizes = Vec::new();
    for (name, m) in models {
        let want = brute_force(&m);
        ensure(want.len() <= 100, format!("{name}: {} solutions, too many", want.len()))?;
        let mut st = ExplorerState::new(m.clone(), 3, ExplorePolicy::default()).map_err(|e| e.to_string())?;
        let mut got = BTreeSet::new();
        while let Next::Emitted(a) = st.next() {
            let t: Vec<i128> = m.vars().iter().map(|v| a.get(&v.name).unwrap()).collect();
            ensure(got.insert(t), format!("{name}: repeated tuple"))?;
        }
        ensure(got == want, format!("{name}: enumerated {} of {}", got.len(), want.len()))?;
        sizes.push(format!("{name}={}", want.len()));
    }
    Ok(format!("exact enumeration: {}", sizes.join(" ")))
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden").join(name)
}

fn load_golden(name: &str) -> Result<TestCase, String> {
    let text = std::fs::read_to_string(golden(name)).map_err(|e| e.to_string())?;
    TestCase::from_json(&text).map_err(|e| e.to_string())
}

fn poc() -> Outcome {
    let start = Instant::now();
    let tc = load_golden("convtranspose2d.json")?;
    ensure(tc.axes("stride") == Some(&[200, 200][..]), "stride")?;
    ensure(tc.scalar("inch") == Some(10) && tc.axes("dims") == Some(&[40_000, 2][..]), "input dims")?;
    let manifest = BugManifest::default_manifest();
    let a = execute(&tc, &manifest, DEFAULT_BLOCK);
    let b = execute(&tc, &manifest, DEFAULT_BLOCK);
    ensure(a == b, "nondeterministic")?;
    ensure(a.verdict.tag() == "OobWrite", format!("{:?}", a.verdict))?;
    ensure(classify(&a.verdict) == BugClass::SilentMemoryCorruption, "class")?;
    within(start.elapsed(), Duration::from_secs(1))?;
    let d = &a.diagnostics;
    Ok(format!(
        "true {} host {} capacity {} -> OobWrite/SilentMemoryCorruption",
        d.true_count, d.host_count, d.capacity
    ))
}

fn transposed_campaign(out: &Path, manifest: Option<&Path>) -> Result<CampaignConfig, String> {
    let s = Settings {
        ops: Some(OpList::One("ConvTranspose2d".into())),
        seed: Some(2025),
        count: Some(10_000),
        dim_hi: Some(40_000),
        max_elems: Some(0),
        manifest: manifest.map(Path::to_path_buf),
        out: Some(out.to_path_buf()),
        ..Settings::default()
    };
    CampaignConfig::from_settings(&s).map_err(|e| e.to_string())
}

/// Fraction of uniformly drawn valid ConvTranspose2d tuples (campaign
/// bounds) that the default manifest turns into an out-of-bounds write.
/// Measured with `oracle_trigger_rate(20_000)`: 0.501.
const MEASURED_TRIGGER_RATE: f64 = 0.501;

fn oracle_trigger_rate(samples: usize) -> f64 {
    let kind: OpKind = "ConvTranspose2d".parse().unwrap();
    let cfg = ModelConfig {
        dim: Bounds::new(1, 40_000),
        ..ModelConfig::default()
    };
    let manifest = BugManifest::default_manifest();
    let m = build_model(kind, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let draw = |rng: &mut ChaCha8Rng, b: Bounds| rng.gen_range(b.lo..=b.hi) as i128;
    let (mut valid, mut hits) = (0usize, 0usize);
    while valid < samples {
        let mut a = Assignment::new();
        a.insert("batch", draw(&mut rng, cfg.batch));
        a.insert("inch", draw(&mut rng, cfg.chan));
        a.insert("outch", draw(&mut rng, cfg.chan));
        a.insert("groups", 1);
        for i in 0..2 {
            a.insert(format!("dims.{i}"), draw(&mut rng, cfg.dim));
            a.insert(format!("ksize.{i}"), draw(&mut rng, cfg.ksize));
            a.insert(format!("stride.{i}"), draw(&mut rng, cfg.stride));
            a.insert(format!("pad.{i}"), draw(&mut rng, cfg.pad));
            a.insert(format!("dil.{i}"), draw(&mut rng, cfg.dil));
            a.insert(format!("outpad.{i}"), draw(&mut rng, cfg.pad));
        }
        let Ok(shape) = output_shape(kind, &a) else { continue };
        for (i, o) in shape.shape[2..].iter().enumerate() {
            a.insert(format!("outdims.{i}"), *o);
        }
        if !validate_assignment(kind, &a).is_ok_and(|v| v.is_empty()) {
            continue;
        }
        valid += 1;
        let tc = TestCase::from_assignment(kind, &m, &with_aux(&m, &a), Dtype::F32, 0, 0).unwrap();
        if execute(&tc, &manifest, DEFAULT_BLOCK).verdict.tag() == "OobWrite" {
            hits += 1;
        }
    }
    hits as f64 / valid as f64
}

/// Auxiliary variables only matter to the solver; zero-fill them so the
/// assignment converts into a test case.
fn with_aux(m: &Model, a: &Assignment) -> Assignment {
    let mut full = a.clone();
    for v in m.vars() {
        if full.get(&v.name).is_none() {
            full.insert(v.name.to_string(), 0);
        }
    }
    full
}

fn campaign_discovery() -> Outcome {
    let start = Instant::now();
    let rate = oracle_trigger_rate(20_000);
    ensure(
        (rate - MEASURED_TRIGGER_RATE).abs() < 0.05,
        format!("oracle trigger rate {rate:.3} drifted from {MEASURED_TRIGGER_RATE}"),
    )?;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = transposed_campaign(tmp.path(), None)?;
    let r = run_campaign(&cfg, Mode::Fuzz).map_err(|e| e.to_string())?;
    let smc = r
        .findings
        .iter()
        .filter(|f| f.bug_class == BugClass::SilentMemoryCorruption)
        .map(|f| f.count)
        .sum::<u64>();
    ensure(r.generated <= 10_000, "budget exceeded")?;
    ensure(smc >= 1, "no SilentMemoryCorruption finding")?;
    within(start.elapsed(), Duration::from_secs(300))?;
    Ok(format!(
        "{} SMC hits in {} cases ({:.1}%), oracle rate {:.1}%, {:.2?}",
        smc,
        r.generated,
        100.0 * smc as f64 / r.generated as f64,
        rate * 100.0,
        start.elapsed()
    ))
}

fn no_false_positives() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifest = tmp.path().join("empty.json");
    std::fs::write(&manifest, "[]").map_err(|e| e.to_string())?;
    let cfg = transposed_campaign(&tmp.path().join("out"), Some(&manifest))?;
    let r = run_campaign(&cfg, Mode::Fuzz).map_err(|e| e.to_string())?;
    ensure(r.executed == 10_000, format!("executed {}", r.executed))?;
    ensure(r.distinct_findings == 0, format!("{} findings", r.distinct_findings))?;
    Ok(format!("{} cases, 0 findings", r.executed))
}

fn throughput() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let s = Settings {
        ops: Some(OpList::One("all".into())),
        duration: Some("60s".into()),
        out: Some(tmp.path().to_path_buf()),
        ..Settings::default()
    };
    let cfg = CampaignConfig::from_settings(&s).map_err(|e| e.to_string())?;
    let r = run_campaign(&cfg, Mode::Generate).map_err(|e| e.to_string())?;
    ensure(r.generated >= 1000, format!("{} cases in one minute", r.generated))?;
    Ok(format!("{} cases in {:.1}s ({:.0}/min)", r.generated, r.elapsed_secs, r.throughput_per_min))
}

fn goldens() -> Outcome {
    let mut n = 0;
    for name in ["conv2d", "convtranspose2d", "relu"] {
        let tc = load_golden(&format!("{name}.json"))?;
        for target in FrameworkTarget::ALL {
            let script = materialize(&tc, target).map_err(|e| e.to_string())?;
            let want = std::fs::read_to_string(golden(&format!("{name}_{}.py", target.name()))).map_err(|e| e.to_string())?;
            ensure(script.source == want, format!("{name} {target} differs"))?;
            n += 1;
        }
    }
    let torch = std::fs::read_to_string(golden("conv2d_pytorch.py")).unwrap();
    let tf = std::fs::read_to_string(golden("conv2d_tensorflow.py")).unwrap();
    ensure(torch.contains("out_channels=16"), "pytorch out_channels")?;
    ensure(tf.contains("filters = 16"), "tensorflow filters")?;
    Ok(format!("{n} scripts byte-identical; out_channels/filters mapped"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("conv model reproduces H_out = 126", fig3),
        ("constraint soundness sweep", soundness_sweep),
        ("diversity", diversity),
        ("hash bijectivity and uniformity", hash_suite),
        ("small-scale completeness", small_completeness),
        ("synthetic PoC regression", poc),
        ("synthetic campaign discovery", campaign_discovery),
        ("no false positives", no_false_positives),
        ("generation throughput", throughput),
        ("materialization goldens", goldens),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        match result {
            Ok(detail) => println!("PASS  {name} [{took:.2?}]: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} [{took:.2?}]: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

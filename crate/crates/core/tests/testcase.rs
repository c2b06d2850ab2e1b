//! Test-case serialization, the on-disk corpus and framework scripts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use opfuzz_core::explorer::{ExplorePolicy, ExplorerState, Next};
use opfuzz_core::ops::{build_model, validate, ModelConfig, OpKind};
use opfuzz_core::testcase::{
    corpus_scan, corpus_write, materialize, Dtype, FrameworkTarget, ParamValue, TestCase, TestCaseError,
    GENERATOR_VERSION, SCHEMA_VERSION,
};
use proptest::prelude::*;

fn generated(kind_index: usize, seed: u64, skip: u64) -> TestCase {
    let kinds = OpKind::all();
    let kind = kinds[kind_index % kinds.len()];
    let m = build_model(kind, &ModelConfig::default()).unwrap();
    let mut st = ExplorerState::new(m.clone(), seed, ExplorePolicy::default()).unwrap();
    let mut last = None;
    for _ in 0..=skip {
        if let Next::Emitted(a) = st.next() {
            last = Some(a);
        }
    }
    TestCase::from_assignment(kind, &m, &last.unwrap(), Dtype::F32, seed, skip).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn json_round_trip(k in 0usize..64, seed in any::<u64>(), skip in 0u64..3, dtype in 0usize..5) {
        let mut tc = generated(k, seed, skip);
        tc.dtype = Dtype::ALL[dtype];
        tc.id = tc.compute_id();
        let back = TestCase::from_json(&tc.to_json()).unwrap();
        prop_assert!(back.id_matches());
        prop_assert_eq!(&back, &tc);
        prop_assert!(validate(&back).unwrap().is_empty());
    }

    #[test]
    fn materialization_is_deterministic(k in 0usize..64, seed in any::<u64>()) {
        let tc = generated(k, seed, 0);
        let again = TestCase::from_json(&tc.to_json()).unwrap();
        for target in FrameworkTarget::ALL {
            match (materialize(&tc, target), materialize(&again, target)) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
                (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
                (a, b) => prop_assert!(false, "{:?} vs {:?}", a.is_ok(), b.is_ok()),
            }
        }
    }
}

#[test]
fn scan_reports_corrupt_files_and_keeps_the_rest() {
    let dir = tempfile::tempdir().unwrap();
    let cases: Vec<_> = (0..5).map(|i| generated(i, 3, 0)).collect();
    for tc in &cases {
        corpus_write(dir.path(), tc).unwrap();
    }
    let bad = dir.path().join("testcases/0000broken.json");
    std::fs::write(&bad, "{\"version\": 1, \"id\": ").unwrap();
    let wrong_version = dir.path().join("testcases/0001old.json");
    std::fs::write(&wrong_version, cases[0].to_json().replace("\"version\": 1", "\"version\": 7")).unwrap();
    std::fs::write(dir.path().join("testcases/notes.txt"), "ignored").unwrap();

    let report = corpus_scan(dir.path()).unwrap();
    assert_eq!(report.cases.len(), 5);
    assert_eq!(report.corrupt.len(), 2);
    assert_eq!(report.corrupt[0].0, bad);
    assert!(matches!(report.corrupt[1].1, TestCaseError::Version { found: 7 }));
    let mut want: Vec<_> = cases.iter().map(|c| c.id.clone()).collect();
    want.sort();
    let got: Vec<_> = report.cases.iter().map(|e| e.testcase.id.clone()).collect();
    assert_eq!(got, want);
}

#[test]
fn concurrent_writers_never_expose_partial_files() {
    let dir = tempfile::tempdir().unwrap();
    let cases: Vec<_> = (0..12).map(|i| generated(i, 17, 1)).collect();
    std::thread::scope(|s| {
        for t in 0..6 {
            let (cases, dir) = (&cases, dir.path());
            s.spawn(move || {
                for round in 0..20 {
                    for (i, tc) in cases.iter().enumerate() {
                        if (i + t + round) % 3 == 0 {
                            corpus_write(dir, tc).unwrap();
                        }
                    }
                    let report = corpus_scan(dir).unwrap();
                    assert!(report.corrupt.is_empty(), "{:?}", report.corrupt);
                }
            });
        }
    });
    let report = corpus_scan(dir.path()).unwrap();
    assert_eq!(report.cases.len(), cases.len());
    assert!(report.corrupt.is_empty());
    let names: Vec<PathBuf> = std::fs::read_dir(dir.path().join("testcases"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(names.len(), cases.len(), "leftover temporaries: {names:?}");
}

fn case(kind: &str, params: &[(&str, ParamValue)]) -> TestCase {
    let kind: OpKind = kind.parse().unwrap();
    let mut tc = TestCase {
        version: SCHEMA_VERSION,
        id: String::new(),
        family: kind.family,
        rank: kind.rank,
        params: params.iter().map(|(k, v)| (k.to_string(), v.clone())).collect::<BTreeMap<_, _>>(),
        dtype: Dtype::F32,
        seed: 0,
        iteration: 0,
        generator_version: GENERATOR_VERSION.into(),
    };
    tc.id = tc.compute_id();
    tc
}

fn golden_cases() -> Vec<(&'static str, TestCase)> {
    use ParamValue::{Axes, Int};
    let conv = case(
        "Conv2d",
        &[
            ("batch", Int(1)),
            ("inch", Int(3)),
            ("outch", Int(16)),
            ("groups", Int(1)),
            ("dims", Axes(vec![128, 128])),
            ("ksize", Axes(vec![5, 5])),
            ("stride", Axes(vec![1, 1])),
            ("pad", Axes(vec![1, 1])),
            ("dil", Axes(vec![1, 1])),
            ("outdims", Axes(vec![126, 126])),
        ],
    );
    let transposed = case(
        "ConvTranspose2d",
        &[
            ("batch", Int(1)),
            ("inch", Int(10)),
            ("outch", Int(16)),
            ("groups", Int(1)),
            ("dims", Axes(vec![40_000, 2])),
            ("ksize", Axes(vec![3, 3])),
            ("stride", Axes(vec![200, 200])),
            ("pad", Axes(vec![0, 0])),
            ("dil", Axes(vec![1, 1])),
            ("outpad", Axes(vec![0, 0])),
            ("outdims", Axes(vec![7_999_803, 203])),
        ],
    );
    let relu = case(
        "ElemUnary",
        &[("dims", Axes(vec![2, 3, 4])), ("outdims", Axes(vec![2, 3, 4])), ("opcode", Int(0))],
    );
    vec![("conv2d", conv), ("convtranspose2d", transposed), ("relu", relu)]
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Compares against the checked-in file, or rewrites it when
/// `UPDATE_GOLDENS` is set.
fn check_golden(name: &str, actual: &str) {
    let path = golden_dir().join(name);
    if std::env::var_os("UPDATE_GOLDENS").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, want, "{name} differs from golden");
}

#[test]
fn golden_cases_and_scripts() {
    for (name, tc) in golden_cases() {
        assert!(validate(&tc).unwrap().is_empty(), "{name}");
        check_golden(&format!("{name}.json"), &(tc.to_json() + "\n"));
        let parsed = TestCase::from_json(&std::fs::read_to_string(golden_dir().join(format!("{name}.json"))).unwrap())
            .unwrap();
        assert_eq!(parsed, tc);
        for target in FrameworkTarget::ALL {
            let script = materialize(&tc, target).unwrap();
            check_golden(&format!("{name}_{}.py", target.name()), &script.source);
        }
    }
}

#[test]
fn output_channel_names_follow_each_framework() {
    let (_, conv) = golden_cases().remove(0);
    let torch = materialize(&conv, FrameworkTarget::PyTorch).unwrap().source;
    assert!(torch.contains("out_channels=16"), "{torch}");
    let tf = materialize(&conv, FrameworkTarget::TensorFlow).unwrap().source;
    assert!(tf.contains("filters = 16"), "{tf}");
    assert!(!tf.contains("out_channels"));
}

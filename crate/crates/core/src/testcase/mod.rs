//! Framework-agnostic test cases: JSON form, identity, materialization
//! into framework scripts, and the on-disk corpus.

mod corpus;
mod mapping;
mod materialize;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::constraint::{Assignment, Model, Value, VarRole};
use crate::ops::{OpError, OpKind, OperatorFamily, Rank, MAX_CONCAT_INPUTS};

pub use corpus::{corpus_scan, corpus_write, CorpusEntry, CorpusError, ScanReport};
pub use mapping::{map_param, param_source, FrameworkTarget, MappingError, ParamSource};
pub use materialize::{materialize, MaterializeError, MaterializedScript};

/// Current test-case schema version.
pub const SCHEMA_VERSION: u32 = 1;

/// Version string recorded in generated test cases.
pub const GENERATOR_VERSION: &str = concat!("opfuzz ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F16,
    #[default]
    F32,
    F64,
    I32,
    I64,
}

impl Dtype {
    pub const ALL: [Dtype; 5] = [Dtype::F16, Dtype::F32, Dtype::F64, Dtype::I32, Dtype::I64];

    pub fn name(self) -> &'static str {
        match self {
            Dtype::F16 => "f16",
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
            Dtype::I32 => "i32",
            Dtype::I64 => "i64",
        }
    }

    pub fn is_float(self) -> bool {
        matches!(self, Dtype::F16 | Dtype::F32 | Dtype::F64)
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dtype {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Dtype::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| format!("unknown dtype `{s}`"))
    }
}

/// A scalar parameter or one value per axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Axes(Vec<i64>),
}

impl ParamValue {
    pub fn scalar(&self) -> Option<i64> {
        match self {
            ParamValue::Int(v) => Some(*v),
            ParamValue::Axes(_) => None,
        }
    }

    pub fn axes(&self) -> Option<&[i64]> {
        match self {
            ParamValue::Int(_) => None,
            ParamValue::Axes(v) => Some(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestCase {
    pub version: u32,
    pub id: String,
    pub family: OperatorFamily,
    pub rank: Option<Rank>,
    pub params: BTreeMap<String, ParamValue>,
    #[serde(default)]
    pub dtype: Dtype,
    pub seed: u64,
    pub iteration: u64,
    pub generator_version: String,
}

#[derive(Debug, Error)]
pub enum TestCaseError {
    #[error("malformed test case: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported test case version {found} (expected {SCHEMA_VERSION})")]
    Version { found: u64 },
    #[error("malformed test case: field `version` must be an integer")]
    MissingVersion,
    #[error("malformed test case: id must be 32 lowercase hex digits, got `{0}`")]
    BadId(String),
    #[error("parameter `{name}`: {reason}")]
    Param { name: String, reason: String },
    #[error(transparent)]
    Op(#[from] OpError),
}

impl TestCase {
    /// Builds a test case from a solver assignment over `model`.
    ///
    /// Auxiliary variables are dropped; `name.i` variables are collected
    /// into per-axis arrays.
    pub fn from_assignment(
        kind: OpKind,
        model: &Model,
        a: &Assignment,
        dtype: Dtype,
        seed: u64,
        iteration: u64,
    ) -> Result<Self, TestCaseError> {
        let mut scalars = BTreeMap::new();
        let mut arrays: BTreeMap<String, BTreeMap<usize, i64>> = BTreeMap::new();
        for v in model.vars() {
            if v.role == VarRole::Auxiliary {
                continue;
            }
            let value = a.get(&v.name).ok_or_else(|| TestCaseError::Param {
                name: v.name.to_string(),
                reason: "missing from assignment".into(),
            })?;
            let value = narrow(&v.name, value)?;
            match v.name.split_once('.') {
                Some((base, idx)) => {
                    let idx: usize = idx.parse().map_err(|_| TestCaseError::Param {
                        name: v.name.to_string(),
                        reason: "bad axis index".into(),
                    })?;
                    arrays.entry(base.to_string()).or_default().insert(idx, value);
                }
                None => {
                    scalars.insert(v.name.to_string(), ParamValue::Int(value));
                }
            }
        }
        let mut params = scalars;
        for (name, axes) in arrays {
            let len = axes.keys().max().map_or(0, |m| m + 1);
            let mut vals = vec![0; len];
            for (i, v) in axes {
                vals[i] = v;
            }
            params.insert(name, ParamValue::Axes(vals));
        }
        let mut tc = TestCase {
            version: SCHEMA_VERSION,
            id: String::new(),
            family: kind.family,
            rank: kind.rank,
            params,
            dtype,
            seed,
            iteration,
            generator_version: GENERATOR_VERSION.to_string(),
        };
        tc.id = tc.compute_id();
        Ok(tc)
    }

    pub fn kind(&self) -> Result<OpKind, OpError> {
        OpKind::new(self.family, self.rank)
    }

    /// Flattens params back into model variable names.
    pub fn to_assignment(&self) -> Assignment {
        let mut a = Assignment::new();
        for (name, v) in &self.params {
            match v {
                ParamValue::Int(x) => {
                    a.insert(name.clone(), *x as Value);
                }
                ParamValue::Axes(xs) => {
                    for (i, x) in xs.iter().enumerate() {
                        a.insert(format!("{name}.{i}"), *x as Value);
                    }
                }
            }
        }
        a
    }

    pub fn scalar(&self, name: &str) -> Option<i64> {
        self.params.get(name).and_then(ParamValue::scalar)
    }

    pub fn axes(&self, name: &str) -> Option<&[i64]> {
        self.params.get(name).and_then(ParamValue::axes)
    }

    /// First 128 bits of SHA-256 over family, rank, params and dtype.
    pub fn compute_id(&self) -> String {
        #[derive(Serialize)]
        struct Content<'a> {
            family: OperatorFamily,
            rank: Option<Rank>,
            params: &'a BTreeMap<String, ParamValue>,
            dtype: Dtype,
        }
        let content = Content {
            family: self.family,
            rank: self.rank,
            params: &self.params,
            dtype: self.dtype,
        };
        let bytes = serde_json::to_vec(&content).expect("plain data serializes");
        let digest = Sha256::digest(bytes);
        hex::encode(&digest[..16])
    }

    pub fn id_matches(&self) -> bool {
        self.id == self.compute_id()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TestCaseError> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        match raw.get("version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(found) => return Err(TestCaseError::Version { found }),
            None => return Err(TestCaseError::MissingVersion),
        }
        let tc: TestCase = serde_json::from_value(raw)?;
        if tc.id.len() != 32 || !tc.id.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
            return Err(TestCaseError::BadId(tc.id));
        }
        Ok(tc)
    }
}

fn narrow(name: &str, v: Value) -> Result<i64, TestCaseError> {
    i64::try_from(v).map_err(|_| TestCaseError::Param {
        name: name.to_string(),
        reason: format!("{v} does not fit in 64 bits"),
    })
}

/// Length `catsz` always has, so absent tensors appear as zeros.
pub const CATSZ_LEN: usize = MAX_CONCAT_INPUTS - 1;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ops::OperatorFamily;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameworkTarget {
    PyTorch,
    TensorFlow,
    PaddlePaddle,
}

impl FrameworkTarget {
    pub const ALL: [FrameworkTarget; 3] = [
        FrameworkTarget::PyTorch,
        FrameworkTarget::TensorFlow,
        FrameworkTarget::PaddlePaddle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FrameworkTarget::PyTorch => "pytorch",
            FrameworkTarget::TensorFlow => "tensorflow",
            FrameworkTarget::PaddlePaddle => "paddlepaddle",
        }
    }

    /// Whether the mapping table has rows for `family` on this target.
    pub fn supports(self, family: OperatorFamily) -> bool {
        table().rows[self as usize].contains_key(&family)
    }

    /// Documentation the table's doc-derived rows were taken from.
    pub fn doc_source(self) -> &'static str {
        &table().sources[self as usize]
    }
}

impl fmt::Display for FrameworkTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FrameworkTarget {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pytorch" | "torch" => Ok(FrameworkTarget::PyTorch),
            "tensorflow" | "tf" => Ok(FrameworkTarget::TensorFlow),
            "paddlepaddle" | "paddle" => Ok(FrameworkTarget::PaddlePaddle),
            _ => Err(format!("unknown framework `{s}` (pytorch, tensorflow, paddlepaddle)")),
        }
    }
}

/// Where a mapping row comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamSource {
    Paper,
    Doc,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MappingError {
    #[error("{family} is not supported on {target}")]
    Unsupported {
        family: OperatorFamily,
        target: FrameworkTarget,
    },
    #[error("no {target} name for `{generic}` of {family}")]
    Unmapped {
        generic: String,
        family: OperatorFamily,
        target: FrameworkTarget,
    },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawEntry {
    Doc(String),
    Sourced { name: String, source: ParamSource },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    sources: BTreeMap<String, String>,
    pytorch: BTreeMap<String, BTreeMap<String, RawEntry>>,
    tensorflow: BTreeMap<String, BTreeMap<String, RawEntry>>,
    paddlepaddle: BTreeMap<String, BTreeMap<String, RawEntry>>,
}

type Rows = BTreeMap<OperatorFamily, BTreeMap<String, (String, ParamSource)>>;

struct Table {
    sources: [String; 3],
    rows: [Rows; 3],
}

fn table() -> &'static Table {
    static TABLE: OnceLock<Table> = OnceLock::new();
    TABLE.get_or_init(|| parse_table(include_str!("mapping.toml")))
}

fn parse_table(text: &str) -> Table {
    let raw: RawTable = toml::from_str(text).expect("mapping table parses");
    let convert = |m: BTreeMap<String, BTreeMap<String, RawEntry>>| -> Rows {
        m.into_iter()
            .map(|(family, entries)| {
                let family: OperatorFamily = family.parse().expect("mapping table family");
                let entries = entries
                    .into_iter()
                    .map(|(generic, e)| {
                        let v = match e {
                            RawEntry::Doc(name) => (name, ParamSource::Doc),
                            RawEntry::Sourced { name, source } => (name, source),
                        };
                        (generic, v)
                    })
                    .collect();
                (family, entries)
            })
            .collect()
    };
    let source = |t: FrameworkTarget| raw.sources.get(t.name()).cloned().unwrap_or_default();
    let sources = FrameworkTarget::ALL.map(source);
    Table {
        sources,
        rows: [convert(raw.pytorch), convert(raw.tensorflow), convert(raw.paddlepaddle)],
    }
}

fn lookup(
    generic: &str,
    family: OperatorFamily,
    target: FrameworkTarget,
) -> Result<&'static (String, ParamSource), MappingError> {
    let rows = table().rows[target as usize]
        .get(&family)
        .ok_or(MappingError::Unsupported { family, target })?;
    rows.get(generic).ok_or_else(|| MappingError::Unmapped {
        generic: generic.to_string(),
        family,
        target,
    })
}

/// Framework name of generic parameter `generic` of `family` on `target`.
pub fn map_param(generic: &str, family: OperatorFamily, target: FrameworkTarget) -> Result<&'static str, MappingError> {
    lookup(generic, family, target).map(|(name, _)| name.as_str())
}

/// Whether a mapping row was taken from the paper or from framework docs.
pub fn param_source(
    generic: &str,
    family: OperatorFamily,
    target: FrameworkTarget,
) -> Result<ParamSource, MappingError> {
    lookup(generic, family, target).map(|(_, source)| *source)
}

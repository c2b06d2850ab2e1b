//! Operator families, their constraint models, and a closed-form shape oracle.
//!
//! Model variables follow one naming scheme shared with test-case params:
//! scalars use the generic name directly (`inch`, `groups`, ...) and
//! per-axis values append the axis index (`ksize.0`, `dims.1`, ...).
//! Auxiliary variables (`rem.*`, `qin`, `qout`) never leave this module;
//! [`derive_aux`] rebuilds them from the rest of an assignment.

mod build;
mod shape;
mod validate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::{Assignment, Model, ModelError, Value, VarRole};

pub use build::build_model;
pub use shape::{declared_output_shape, output_shape, ShapeError, ShapeResult};
pub use validate::{validate, validate_assignment};

/// Activation and arithmetic opcodes for element-wise unary operators.
pub const UNARY_OPCODES: &[&str] = &[
    "relu", "elu", "gelu", "sigmoid", "tanh", "abs", "sin", "cos", "sqrt", "exp", "log",
];

/// Opcodes for element-wise binary operators.
pub const BINARY_OPCODES: &[&str] = &[
    "add",
    "sub",
    "mul",
    "div",
    "pow",
    "remainder",
    "logaddexp",
    "atan2",
];

/// Number of axes of the element-wise, concat and matrix operand shapes.
pub const ELEMENTWISE_RANK: usize = 3;

/// Maximum number of tensors joined by a concat test case.
pub const MAX_CONCAT_INPUTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OperatorFamily {
    Conv,
    ConvTranspose,
    MaxPool,
    AvgPool,
    LPPool,
    FractionalMaxPool,
    AdaptiveAvgPool,
    AdaptiveMaxPool,
    ReflectionPad,
    ReplicationPad,
    ConstantPad,
    CircularPad,
    ZeroPad,
    ElemUnary,
    ElemBinary,
    MatMul,
    BMM,
    Concat,
}

impl OperatorFamily {
    pub const ALL: [OperatorFamily; 18] = [
        OperatorFamily::Conv,
        OperatorFamily::ConvTranspose,
        OperatorFamily::MaxPool,
        OperatorFamily::AvgPool,
        OperatorFamily::LPPool,
        OperatorFamily::FractionalMaxPool,
        OperatorFamily::AdaptiveAvgPool,
        OperatorFamily::AdaptiveMaxPool,
        OperatorFamily::ReflectionPad,
        OperatorFamily::ReplicationPad,
        OperatorFamily::ConstantPad,
        OperatorFamily::CircularPad,
        OperatorFamily::ZeroPad,
        OperatorFamily::ElemUnary,
        OperatorFamily::ElemBinary,
        OperatorFamily::MatMul,
        OperatorFamily::BMM,
        OperatorFamily::Concat,
    ];

    /// Conv, pooling and padding families take a spatial rank.
    pub fn is_spatial(self) -> bool {
        !matches!(
            self,
            OperatorFamily::ElemUnary
                | OperatorFamily::ElemBinary
                | OperatorFamily::MatMul
                | OperatorFamily::BMM
                | OperatorFamily::Concat
        )
    }

    pub fn supports(self, rank: Option<Rank>) -> bool {
        match (self.is_spatial(), rank) {
            (false, None) => true,
            (false, Some(_)) | (true, None) => false,
            (true, Some(r)) => !(self == OperatorFamily::FractionalMaxPool && r == Rank::R1),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OperatorFamily::Conv => "Conv",
            OperatorFamily::ConvTranspose => "ConvTranspose",
            OperatorFamily::MaxPool => "MaxPool",
            OperatorFamily::AvgPool => "AvgPool",
            OperatorFamily::LPPool => "LPPool",
            OperatorFamily::FractionalMaxPool => "FractionalMaxPool",
            OperatorFamily::AdaptiveAvgPool => "AdaptiveAvgPool",
            OperatorFamily::AdaptiveMaxPool => "AdaptiveMaxPool",
            OperatorFamily::ReflectionPad => "ReflectionPad",
            OperatorFamily::ReplicationPad => "ReplicationPad",
            OperatorFamily::ConstantPad => "ConstantPad",
            OperatorFamily::CircularPad => "CircularPad",
            OperatorFamily::ZeroPad => "ZeroPad",
            OperatorFamily::ElemUnary => "ElemUnary",
            OperatorFamily::ElemBinary => "ElemBinary",
            OperatorFamily::MatMul => "MatMul",
            OperatorFamily::BMM => "BMM",
            OperatorFamily::Concat => "Concat",
        }
    }

    /// Generic parameter names a test case of this family carries.
    pub fn params(self) -> &'static [&'static str] {
        use OperatorFamily::*;
        match self {
            Conv => &[
                "batch", "inch", "outch", "groups", "dims", "ksize", "stride", "pad", "dil",
                "outdims",
            ],
            ConvTranspose => &[
                "batch", "inch", "outch", "groups", "dims", "ksize", "stride", "pad", "dil",
                "outpad", "outdims",
            ],
            MaxPool => &[
                "batch", "inch", "dims", "ksize", "stride", "pad", "dil", "outdims",
            ],
            AvgPool => &["batch", "inch", "dims", "ksize", "stride", "pad", "outdims"],
            LPPool => &[
                "batch", "inch", "dims", "ksize", "stride", "pad", "norm", "outdims",
            ],
            FractionalMaxPool => &["batch", "inch", "dims", "ksize", "outdims"],
            AdaptiveAvgPool | AdaptiveMaxPool => &["batch", "inch", "dims", "outdims"],
            ReflectionPad | ReplicationPad | ConstantPad | CircularPad | ZeroPad => {
                &["batch", "inch", "dims", "padl", "padr", "outdims"]
            }
            ElemUnary => &["dims", "opcode", "outdims"],
            ElemBinary => &["dims", "dims2", "opcode", "outdims"],
            MatMul | BMM => &["dims", "dims2", "outdims"],
            Concat => &["dims", "axis", "count", "catsz", "outdims"],
        }
    }

    /// Whether `param` is a per-axis (array-valued) parameter.
    pub fn is_array_param(param: &str) -> bool {
        matches!(
            param,
            "dims"
                | "dims2"
                | "ksize"
                | "stride"
                | "pad"
                | "dil"
                | "outpad"
                | "padl"
                | "padr"
                | "outdims"
                | "catsz"
        )
    }
}

impl fmt::Display for OperatorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OperatorFamily {
    type Err = OpError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OperatorFamily::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| OpError::UnknownOperator(s.to_string()))
    }
}

/// Number of spatial axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Rank {
    R1,
    R2,
    R3,
}

impl Rank {
    pub const ALL: [Rank; 3] = [Rank::R1, Rank::R2, Rank::R3];

    pub fn axes(self) -> usize {
        match self {
            Rank::R1 => 1,
            Rank::R2 => 2,
            Rank::R3 => 3,
        }
    }
}

impl TryFrom<u8> for Rank {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(Rank::R1),
            2 => Ok(Rank::R2),
            3 => Ok(Rank::R3),
            _ => Err(format!("rank must be 1, 2 or 3, got {v}")),
        }
    }
}

impl From<Rank> for u8 {
    fn from(r: Rank) -> u8 {
        r.axes() as u8
    }
}

/// A family at a concrete rank, e.g. `Conv2d` or `MatMul`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OpKind {
    pub family: OperatorFamily,
    pub rank: Option<Rank>,
}

impl OpKind {
    pub fn new(family: OperatorFamily, rank: Option<Rank>) -> Result<Self, OpError> {
        if family.supports(rank) {
            Ok(OpKind { family, rank })
        } else {
            Err(OpError::UnsupportedRank { family, rank })
        }
    }

    pub fn spatial(family: OperatorFamily, rank: Rank) -> Result<Self, OpError> {
        Self::new(family, Some(rank))
    }

    /// Every supported (family, rank) combination.
    pub fn all() -> Vec<OpKind> {
        let mut out = Vec::new();
        for f in OperatorFamily::ALL {
            if f.is_spatial() {
                out.extend(
                    Rank::ALL
                        .into_iter()
                        .filter_map(|r| OpKind::new(f, Some(r)).ok()),
                );
            } else {
                out.push(OpKind {
                    family: f,
                    rank: None,
                });
            }
        }
        out
    }

    /// Number of entries in this kind's per-axis params other than `catsz`.
    pub fn axes(&self) -> usize {
        match (self.family, self.rank) {
            (OperatorFamily::MatMul, _) => 2,
            (_, Some(r)) => r.axes(),
            (_, None) => ELEMENTWISE_RANK,
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.rank {
            Some(r) => write!(f, "{}{}d", self.family, r.axes()),
            None => write!(f, "{}", self.family),
        }
    }
}

impl FromStr for OpKind {
    type Err = OpError;

    /// Accepts `Conv2d`, `conv2d`, `MatMul`, ...
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let lower = s.to_ascii_lowercase();
        for (suffix, rank) in [("1d", Rank::R1), ("2d", Rank::R2), ("3d", Rank::R3)] {
            if let Some(base) = lower.strip_suffix(suffix) {
                let family: OperatorFamily = base.parse()?;
                return OpKind::new(family, Some(rank));
            }
        }
        OpKind::new(s.parse()?, None)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OpError {
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("{family} does not support rank {rank:?}")]
    UnsupportedRank {
        family: OperatorFamily,
        rank: Option<Rank>,
    },
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Inclusive bounds of one class of model variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: i64,
    pub hi: i64,
}

impl Bounds {
    pub const fn new(lo: i64, hi: i64) -> Self {
        Bounds { lo, hi }
    }
}

/// Domain bounds used when building models.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: Bounds,
    pub chan: Bounds,
    pub batch: Bounds,
    pub ksize: Bounds,
    pub stride: Bounds,
    pub pad: Bounds,
    pub dil: Bounds,
    /// Cap on input and output element counts.
    pub max_elements: Option<i64>,
    /// Require the conv/pool window arithmetic to divide exactly.
    pub exact_division: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: Bounds::new(1, 512),
            chan: Bounds::new(1, 64),
            batch: Bounds::new(1, 8),
            ksize: Bounds::new(1, 11),
            stride: Bounds::new(1, 256),
            pad: Bounds::new(0, 8),
            dil: Bounds::new(1, 4),
            max_elements: None,
            exact_division: false,
        }
    }
}

impl ModelConfig {
    /// Bounds wide enough to hold any test case the CLI can produce.
    ///
    /// Validation uses these so that a test case generated under a widened
    /// campaign configuration is judged on operator semantics only.
    pub fn permissive() -> Self {
        let wide = Bounds::new(1, i32::MAX as i64);
        ModelConfig {
            dim: wide,
            chan: wide,
            batch: wide,
            ksize: wide,
            stride: wide,
            pad: Bounds::new(0, i32::MAX as i64),
            dil: wide,
            max_elements: None,
            exact_division: false,
        }
    }

    pub fn check(&self) -> Result<(), OpError> {
        let named = [
            ("dim", self.dim),
            ("chan", self.chan),
            ("batch", self.batch),
            ("ksize", self.ksize),
            ("stride", self.stride),
            ("pad", self.pad),
            ("dil", self.dil),
        ];
        for (name, b) in named {
            if b.lo > b.hi {
                return Err(OpError::Config(format!(
                    "{name}: lo {} > hi {}",
                    b.lo, b.hi
                )));
            }
            let min = if name == "pad" { 0 } else { 1 };
            if b.lo < min {
                return Err(OpError::Config(format!(
                    "{name}: lo must be at least {min}"
                )));
            }
        }
        if let Some(cap) = self.max_elements {
            if cap < 1 {
                return Err(OpError::Config("max_elements must be at least 1".into()));
            }
        }
        Ok(())
    }
}

pub(crate) fn axis_name(param: &str, i: usize) -> String {
    format!("{param}.{i}")
}

/// Drops auxiliary variables, keeping what a test case records.
pub fn public_params(model: &Model, a: &Assignment) -> Assignment {
    a.iter()
        .filter(|(name, _)| {
            model
                .var(name)
                .is_some_and(|v| v.role != VarRole::Auxiliary)
        })
        .map(|(name, v)| (name.to_string(), v))
        .collect()
}

/// Rebuilds auxiliary variables from the parameters they are derived from.
///
/// Values are computed from inputs only (never from output dims) so that a
/// tampered output shows up as a broken core relation.
pub fn derive_aux(kind: OpKind, a: &mut Assignment) {
    use OperatorFamily::*;
    let get = |a: &Assignment, n: &str| a.get(n);
    if matches!(kind.family, Conv | ConvTranspose) {
        if let (Some(g), Some(i), Some(o)) = (get(a, "groups"), get(a, "inch"), get(a, "outch")) {
            if g != 0 {
                a.insert("qin", i.div_euclid(g));
                a.insert("qout", o.div_euclid(g));
            }
        }
    }
    if matches!(kind.family, Conv | MaxPool | AvgPool | LPPool) {
        for i in 0..kind.axes() {
            let dil = if kind.family == Conv || kind.family == MaxPool {
                get(a, &axis_name("dil", i))
            } else {
                Some(1)
            };
            let vals = (
                get(a, &axis_name("dims", i)),
                get(a, &axis_name("pad", i)),
                dil,
                get(a, &axis_name("ksize", i)),
                get(a, &axis_name("stride", i)),
            );
            if let (Some(h), Some(p), Some(d), Some(k), Some(s)) = vals {
                if s != 0 {
                    let numer: Value = h + 2 * p - d * (k - 1) - 1;
                    a.insert(axis_name("rem", i), numer.rem_euclid(s));
                }
            }
        }
    }
}

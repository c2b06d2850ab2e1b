use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::hash::{bucket, DEFAULT_BUCKETS};
use super::{IntExpr, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("variable `{0}` is not declared")]
    UndeclaredVar(String),
    #[error("variable `{0}` declared twice")]
    DuplicateVar(String),
    #[error("variable `{name}` has empty domain [{lo}, {hi}]")]
    EmptyDomain { name: String, lo: Value, hi: Value },
    #[error("variable `{0}` must have a non-negative lower bound")]
    NegativeDomain(String),
    #[error("variable `{0}` has no value in the assignment")]
    UnboundVar(String),
    #[error("value {value} for `{name}` is outside [{lo}, {hi}]")]
    OutOfDomain {
        name: String,
        value: Value,
        lo: Value,
        hi: Value,
    },
    #[error("arithmetic overflow during evaluation")]
    Overflow,
    #[error("bucket count must be at least 2, got {0}")]
    BucketCount(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VarRole {
    InputDim,
    Param,
    OutputDim,
    Auxiliary,
}

impl VarRole {
    /// Roles the explorer may pick when excluding a value.
    pub fn is_decision(self) -> bool {
        matches!(self, VarRole::InputDim | VarRole::Param)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarDecl {
    pub name: Arc<str>,
    pub lo: Value,
    pub hi: Value,
    pub role: VarRole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl RelOp {
    pub fn holds(self, lhs: Value, rhs: Value) -> bool {
        match self {
            RelOp::Eq => lhs == rhs,
            RelOp::Ne => lhs != rhs,
            RelOp::Lt => lhs < rhs,
            RelOp::Le => lhs <= rhs,
            RelOp::Gt => lhs > rhs,
            RelOp::Ge => lhs >= rhs,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            RelOp::Eq => "=",
            RelOp::Ne => "!=",
            RelOp::Lt => "<",
            RelOp::Le => "<=",
            RelOp::Gt => ">",
            RelOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Constraint {
    Rel {
        op: RelOp,
        lhs: IntExpr,
        rhs: IntExpr,
    },
    /// Satisfied iff `bucket(a[var]) != bucket(excluded)`.
    HashBucketNe {
        var: Arc<str>,
        excluded: Value,
        buckets: u32,
    },
}

impl Constraint {
    pub fn rel(op: RelOp, lhs: impl Into<IntExpr>, rhs: impl Into<IntExpr>) -> Self {
        Constraint::Rel {
            op,
            lhs: lhs.into(),
            rhs: rhs.into(),
        }
    }

    pub fn eq(lhs: impl Into<IntExpr>, rhs: impl Into<IntExpr>) -> Self {
        Self::rel(RelOp::Eq, lhs, rhs)
    }

    pub fn ne(lhs: impl Into<IntExpr>, rhs: impl Into<IntExpr>) -> Self {
        Self::rel(RelOp::Ne, lhs, rhs)
    }

    pub fn lt(lhs: impl Into<IntExpr>, rhs: impl Into<IntExpr>) -> Self {
        Self::rel(RelOp::Lt, lhs, rhs)
    }

    pub fn le(lhs: impl Into<IntExpr>, rhs: impl Into<IntExpr>) -> Self {
        Self::rel(RelOp::Le, lhs, rhs)
    }

    pub fn gt(lhs: impl Into<IntExpr>, rhs: impl Into<IntExpr>) -> Self {
        Self::rel(RelOp::Gt, lhs, rhs)
    }

    pub fn ge(lhs: impl Into<IntExpr>, rhs: impl Into<IntExpr>) -> Self {
        Self::rel(RelOp::Ge, lhs, rhs)
    }

    /// `h(var) != h(excluded)` with the default bucket count.
    pub fn hash_ne(var: impl AsRef<str>, excluded: Value) -> Self {
        Constraint::HashBucketNe {
            var: Arc::from(var.as_ref()),
            excluded,
            buckets: DEFAULT_BUCKETS,
        }
    }

    pub fn holds(&self, assignment: &Assignment) -> Result<bool, ModelError> {
        match self {
            Constraint::Rel { op, lhs, rhs } => {
                Ok(op.holds(lhs.eval(assignment)?, rhs.eval(assignment)?))
            }
            Constraint::HashBucketNe {
                var,
                excluded,
                buckets,
            } => {
                let v = assignment
                    .get(var)
                    .ok_or_else(|| ModelError::UnboundVar(var.to_string()))?;
                Ok(bucket(v, *buckets)? != bucket(*excluded, *buckets)?)
            }
        }
    }

    pub fn for_each_var<'a>(&'a self, f: &mut impl FnMut(&'a Arc<str>)) {
        match self {
            Constraint::Rel { lhs, rhs, .. } => {
                lhs.for_each_var(f);
                rhs.for_each_var(f);
            }
            Constraint::HashBucketNe { var, .. } => f(var),
        }
    }

    /// The variable named by a `var != const` or hash exclusion, if this is one.
    pub fn excluded_var(&self) -> Option<&Arc<str>> {
        match self {
            Constraint::Rel {
                op: RelOp::Ne,
                lhs: IntExpr::Var(v),
                rhs: IntExpr::Const(_),
            } => Some(v),
            Constraint::HashBucketNe { var, .. } => Some(var),
            _ => None,
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::Rel { op, lhs, rhs } => write!(f, "{lhs} {} {rhs}", op.symbol()),
            Constraint::HashBucketNe {
                var,
                excluded,
                buckets,
            } => write!(f, "h{buckets}({var}) != h{buckets}({excluded})"),
        }
    }
}

/// Variable name to value.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment(BTreeMap<String, Value>);

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<Value> {
        self.0.get(name).copied()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Value) -> Option<Value> {
        self.0.insert(name.into(), value)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Value)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<(S, Value)> for Assignment {
    fn from_iter<T: IntoIterator<Item = (S, Value)>>(iter: T) -> Self {
        Assignment(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

/// One failed check when evaluating a model under a concrete assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.rule, self.detail)
    }
}

/// Declared variables plus the constraints over them.
///
/// Every constraint carries a short label so that validation failures can
/// name the rule that broke.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Model {
    vars: Vec<VarDecl>,
    constraints: Vec<Constraint>,
    labels: Vec<Arc<str>>,
}

impl Model {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a variable and returns an expression referring to it.
    pub fn declare(
        &mut self,
        name: impl AsRef<str>,
        lo: impl Into<Value>,
        hi: impl Into<Value>,
        role: VarRole,
    ) -> Result<IntExpr, ModelError> {
        let name = name.as_ref();
        let (lo, hi) = (lo.into(), hi.into());
        if self.index_of(name).is_some() {
            return Err(ModelError::DuplicateVar(name.to_string()));
        }
        if lo > hi {
            return Err(ModelError::EmptyDomain {
                name: name.to_string(),
                lo,
                hi,
            });
        }
        if lo < 0 && role != VarRole::Auxiliary {
            return Err(ModelError::NegativeDomain(name.to_string()));
        }
        self.vars.push(VarDecl {
            name: Arc::from(name),
            lo,
            hi,
            role,
        });
        Ok(IntExpr::var(name))
    }

    /// Adds a constraint, checking that it only mentions declared variables.
    pub fn add(&mut self, label: impl AsRef<str>, c: Constraint) -> Result<(), ModelError> {
        let mut missing = None;
        c.for_each_var(&mut |v| {
            if missing.is_none() && self.index_of(v).is_none() {
                missing = Some(v.to_string());
            }
        });
        if let Some(name) = missing {
            return Err(ModelError::UndeclaredVar(name));
        }
        self.constraints.push(c);
        self.labels.push(Arc::from(label.as_ref()));
        Ok(())
    }

    /// Narrows a declared variable to a single value.
    pub fn fix(&mut self, name: &str, value: Value) -> Result<(), ModelError> {
        let i = self
            .index_of(name)
            .ok_or_else(|| ModelError::UndeclaredVar(name.to_string()))?;
        let decl = &mut self.vars[i];
        if value < decl.lo || value > decl.hi {
            return Err(ModelError::OutOfDomain {
                name: name.to_string(),
                value,
                lo: decl.lo,
                hi: decl.hi,
            });
        }
        decl.lo = value;
        decl.hi = value;
        Ok(())
    }

    pub fn vars(&self) -> &[VarDecl] {
        &self.vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| &*v.name == name)
    }

    pub fn var(&self, name: &str) -> Option<&VarDecl> {
        self.vars.iter().find(|v| &*v.name == name)
    }

    /// Re-checks declarations and constraint references.
    pub fn check_well_formed(&self) -> Result<(), ModelError> {
        let mut seen = HashSet::new();
        for v in &self.vars {
            if !seen.insert(&*v.name) {
                return Err(ModelError::DuplicateVar(v.name.to_string()));
            }
            if v.lo > v.hi {
                return Err(ModelError::EmptyDomain {
                    name: v.name.to_string(),
                    lo: v.lo,
                    hi: v.hi,
                });
            }
        }
        for c in &self.constraints {
            let mut missing = None;
            c.for_each_var(&mut |name| {
                if missing.is_none() && !seen.contains(&**name) {
                    missing = Some(name.to_string());
                }
            });
            if let Some(name) = missing {
                return Err(ModelError::UndeclaredVar(name));
            }
            if let Constraint::HashBucketNe { buckets, .. } = c {
                if *buckets < 2 {
                    return Err(ModelError::BucketCount(*buckets));
                }
            }
        }
        Ok(())
    }

    /// Evaluates domains and every constraint under `a`, returning all failures.
    pub fn check(&self, a: &Assignment) -> Vec<Violation> {
        let mut out = Vec::new();
        for v in &self.vars {
            match a.get(&v.name) {
                None => out.push(Violation {
                    rule: format!("domain of {}", v.name),
                    detail: "missing value".into(),
                }),
                Some(x) if x < v.lo || x > v.hi => out.push(Violation {
                    rule: format!("domain of {}", v.name),
                    detail: format!("{x} outside [{}, {}]", v.lo, v.hi),
                }),
                Some(_) => {}
            }
        }
        for (c, label) in self.constraints.iter().zip(&self.labels) {
            match c.holds(a) {
                Ok(true) => {}
                Ok(false) => out.push(Violation {
                    rule: label.to_string(),
                    detail: format!("violated: {c}"),
                }),
                Err(e) => out.push(Violation {
                    rule: label.to_string(),
                    detail: e.to_string(),
                }),
            }
        }
        out
    }

    /// True iff `a` respects every domain and satisfies every constraint.
    pub fn satisfied_by(&self, a: &Assignment) -> bool {
        self.vars
            .iter()
            .all(|v| matches!(a.get(&v.name), Some(x) if x >= v.lo && x <= v.hi))
            && self.constraints.iter().all(|c| c.holds(a).unwrap_or(false))
    }

    /// Product of domain sizes, saturating.
    pub fn domain_size(&self) -> u128 {
        self.vars
            .iter()
            .map(|v| (v.hi - v.lo + 1) as u128)
            .fold(1u128, |acc, s| acc.saturating_mul(s))
    }
}

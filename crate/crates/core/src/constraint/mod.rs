//! Bounded-integer constraint language and its solver.

mod expr;
mod hash;
mod interval;
mod model;
mod propagate;
mod solve;

pub use expr::{eval, IntExpr, Value};
pub use hash::{bucket, mix32, DEFAULT_BUCKETS};
pub use interval::Interval;
pub use model::{Assignment, Constraint, Model, ModelError, RelOp, VarDecl, VarRole, Violation};
pub use propagate::{propagate, Conflict, Propagated};
pub use solve::{solve, SolveResult, DEFAULT_NODE_BUDGET};

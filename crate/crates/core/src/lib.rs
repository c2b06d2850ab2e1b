//! Constraint-guided fuzzing of deep-learning operator parameter spaces.

pub mod constraint;
pub mod explorer;
pub mod ops;
pub mod synth;
pub mod testcase;
pub mod verdict;

use std::fmt;
use std::ops;
use std::sync::Arc;

use super::{Assignment, ModelError};

/// Exact integer value used everywhere the fuzzer does arithmetic.
///
/// Element counts of the larger test cases exceed 2^32 by design, so all
/// evaluation happens in 128-bit signed arithmetic.
pub type Value = i128;

/// Integer expression tree over named variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum IntExpr {
    Const(Value),
    Var(Arc<str>),
    Add(Box<IntExpr>, Box<IntExpr>),
    Sub(Box<IntExpr>, Box<IntExpr>),
    Mul(Box<IntExpr>, Box<IntExpr>),
    Neg(Box<IntExpr>),
}

impl IntExpr {
    pub fn var(name: impl AsRef<str>) -> Self {
        IntExpr::Var(Arc::from(name.as_ref()))
    }

    pub fn constant(v: impl Into<Value>) -> Self {
        IntExpr::Const(v.into())
    }

    /// Sum of `terms`; the empty sum is zero.
    pub fn sum<I: IntoIterator<Item = IntExpr>>(terms: I) -> Self {
        terms
            .into_iter()
            .reduce(|a, b| a + b)
            .unwrap_or(IntExpr::Const(0))
    }

    /// Product of `terms`; the empty product is one.
    pub fn product<I: IntoIterator<Item = IntExpr>>(terms: I) -> Self {
        terms
            .into_iter()
            .reduce(|a, b| a * b)
            .unwrap_or(IntExpr::Const(1))
    }

    /// Evaluates the expression exactly under `assignment`.
    pub fn eval(&self, assignment: &Assignment) -> Result<Value, ModelError> {
        Ok(match self {
            IntExpr::Const(c) => *c,
            IntExpr::Var(name) => assignment
                .get(name)
                .ok_or_else(|| ModelError::UnboundVar(name.to_string()))?,
            IntExpr::Add(a, b) => checked(a.eval(assignment)?.checked_add(b.eval(assignment)?))?,
            IntExpr::Sub(a, b) => checked(a.eval(assignment)?.checked_sub(b.eval(assignment)?))?,
            IntExpr::Mul(a, b) => checked(a.eval(assignment)?.checked_mul(b.eval(assignment)?))?,
            IntExpr::Neg(a) => checked(a.eval(assignment)?.checked_neg())?,
        })
    }

    /// Calls `f` on every variable name in the tree, left to right.
    pub fn for_each_var<'a>(&'a self, f: &mut impl FnMut(&'a Arc<str>)) {
        match self {
            IntExpr::Const(_) => {}
            IntExpr::Var(name) => f(name),
            IntExpr::Add(a, b) | IntExpr::Sub(a, b) | IntExpr::Mul(a, b) => {
                a.for_each_var(f);
                b.for_each_var(f);
            }
            IntExpr::Neg(a) => a.for_each_var(f),
        }
    }
}

fn checked(v: Option<Value>) -> Result<Value, ModelError> {
    v.ok_or(ModelError::Overflow)
}

/// Free-function form of [`IntExpr::eval`].
pub fn eval(assignment: &Assignment, expr: &IntExpr) -> Result<Value, ModelError> {
    expr.eval(assignment)
}

impl From<Value> for IntExpr {
    fn from(v: Value) -> Self {
        IntExpr::Const(v)
    }
}

impl From<&IntExpr> for IntExpr {
    fn from(e: &IntExpr) -> Self {
        e.clone()
    }
}

impl From<i64> for IntExpr {
    fn from(v: i64) -> Self {
        IntExpr::Const(v as Value)
    }
}

impl From<i32> for IntExpr {
    fn from(v: i32) -> Self {
        IntExpr::Const(v as Value)
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $variant:ident) => {
        impl<R: Into<IntExpr>> ops::$trait<R> for IntExpr {
            type Output = IntExpr;
            fn $method(self, rhs: R) -> IntExpr {
                IntExpr::$variant(Box::new(self), Box::new(rhs.into()))
            }
        }

        impl<R: Into<IntExpr>> ops::$trait<R> for &IntExpr {
            type Output = IntExpr;
            fn $method(self, rhs: R) -> IntExpr {
                IntExpr::$variant(Box::new(self.clone()), Box::new(rhs.into()))
            }
        }
    };
}

binop!(Add, add, Add);
binop!(Sub, sub, Sub);
binop!(Mul, mul, Mul);

impl ops::Neg for IntExpr {
    type Output = IntExpr;
    fn neg(self) -> IntExpr {
        IntExpr::Neg(Box::new(self))
    }
}

impl fmt::Display for IntExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntExpr::Const(c) => write!(f, "{c}"),
            IntExpr::Var(name) => write!(f, "{name}"),
            IntExpr::Add(a, b) => write!(f, "({a} + {b})"),
            IntExpr::Sub(a, b) => write!(f, "({a} - {b})"),
            IntExpr::Mul(a, b) => write!(f, "{a}*{b}"),
            IntExpr::Neg(a) => write!(f, "-{a}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assign(pairs: &[(&str, Value)]) -> Assignment {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn conv_numerator_matches_reference_solution() {
        let h_in = IntExpr::var("H_in");
        let p = IntExpr::var("P");
        let d = IntExpr::var("D");
        let k = IntExpr::var("K");
        let numerator = h_in + p * 2 - d * (k - 1) - 1;
        let a = assign(&[("H_in", 128), ("P", 1), ("D", 1), ("K", 5)]);
        assert_eq!(numerator.eval(&a).unwrap(), 125);
    }

    #[test]
    fn square_of_zero() {
        let x = IntExpr::var("x");
        assert_eq!((&x * x.clone()).eval(&assign(&[("x", 0)])).unwrap(), 0);
    }

    #[test]
    fn wide_products_are_exact() {
        let e = (IntExpr::var("a") - 1) * IntExpr::var("b");
        let a = assign(&[("a", 40_000), ("b", 200)]);
        assert_eq!(eval(&a, &e).unwrap(), 7_999_800);

        let big = IntExpr::var("a") * IntExpr::var("a") * IntExpr::var("a");
        let a = assign(&[("a", 1 << 20)]);
        assert_eq!(big.eval(&a).unwrap(), 1i128 << 60);
    }

    #[test]
    fn missing_variable_is_reported() {
        let e = IntExpr::var("x") + IntExpr::var("y");
        let err = e.eval(&assign(&[("x", 1)])).unwrap_err();
        assert_eq!(err, ModelError::UnboundVar("y".into()));
    }

    #[test]
    fn empty_sum_and_product() {
        let a = Assignment::default();
        assert_eq!(IntExpr::sum(vec![]).eval(&a).unwrap(), 0);
        assert_eq!(IntExpr::product(vec![]).eval(&a).unwrap(), 1);
    }
}

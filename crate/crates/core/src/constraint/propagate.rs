//! Bounds propagation over a compiled, index-addressed copy of a [`Model`].

use std::collections::VecDeque;

use super::hash::bucket;
use super::interval::Interval;
use super::{Constraint, IntExpr, Model, ModelError, RelOp, Value, VarRole};

/// Raised when propagation proves that no solution exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conflict;

#[derive(Debug, Clone)]
pub(crate) enum CExpr {
    Const(Value),
    Var(usize),
    Add(Box<CExpr>, Box<CExpr>),
    Sub(Box<CExpr>, Box<CExpr>),
    Mul(Box<CExpr>, Box<CExpr>),
    Neg(Box<CExpr>),
}

#[derive(Debug, Clone)]
pub(crate) enum CConstraint {
    Rel {
        op: RelOp,
        lhs: CExpr,
        rhs: CExpr,
    },
    Hash {
        var: usize,
        excluded_bucket: u32,
        buckets: u32,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct Compiled {
    pub roles: Vec<VarRole>,
    pub domains: Vec<Interval>,
    cons: Vec<CConstraint>,
    watchers: Vec<Vec<usize>>,
}

impl Compiled {
    pub fn new(model: &Model) -> Result<Self, ModelError> {
        model.check_well_formed()?;
        let n = model.vars().len();
        let mut cons = Vec::with_capacity(model.constraints().len());
        let mut watchers = vec![Vec::new(); n];
        for (ci, c) in model.constraints().iter().enumerate() {
            let compiled = match c {
                Constraint::Rel { op, lhs, rhs } => CConstraint::Rel {
                    op: *op,
                    lhs: compile_expr(model, lhs)?,
                    rhs: compile_expr(model, rhs)?,
                },
                Constraint::HashBucketNe {
                    var,
                    excluded,
                    buckets,
                } => CConstraint::Hash {
                    var: lookup(model, var)?,
                    excluded_bucket: bucket(*excluded, *buckets)?,
                    buckets: *buckets,
                },
            };
            let mut vars = Vec::new();
            c.for_each_var(&mut |name| vars.push(model.index_of(name).expect("checked above")));
            vars.sort_unstable();
            vars.dedup();
            for v in vars {
                watchers[v].push(ci);
            }
            cons.push(compiled);
        }
        Ok(Compiled {
            roles: model.vars().iter().map(|v| v.role).collect(),
            domains: model
                .vars()
                .iter()
                .map(|v| Interval::new(v.lo, v.hi))
                .collect(),
            cons,
            watchers,
        })
    }

    /// Propagates to a fixpoint (or until the revision cap), starting from
    /// the constraints that watch `touched`, or all of them when `None`.
    pub fn propagate(&self, doms: &mut [Interval], touched: Option<usize>) -> Result<(), Conflict> {
        let mut queued = vec![false; self.cons.len()];
        let mut queue = VecDeque::new();
        match touched {
            Some(v) => {
                for &c in &self.watchers[v] {
                    queued[c] = true;
                    queue.push_back(c);
                }
            }
            None => {
                for c in 0..self.cons.len() {
                    queued[c] = true;
                    queue.push_back(c);
                }
            }
        }
        // Stopping early only weakens pruning; leaves are re-checked exactly.
        let mut budget = 64 * self.cons.len() + 1024;
        let mut changed = Vec::new();
        while let Some(ci) = queue.pop_front() {
            queued[ci] = false;
            changed.clear();
            self.revise(&self.cons[ci], doms, &mut changed)?;
            for &v in &changed {
                for &w in &self.watchers[v] {
                    if !queued[w] {
                        queued[w] = true;
                        queue.push_back(w);
                    }
                }
            }
            budget -= 1;
            if budget == 0 {
                break;
            }
        }
        Ok(())
    }

    fn revise(
        &self,
        c: &CConstraint,
        doms: &mut [Interval],
        changed: &mut Vec<usize>,
    ) -> Result<(), Conflict> {
        match c {
            CConstraint::Hash {
                var,
                excluded_bucket,
                buckets,
            } => {
                let d = doms[*var];
                let hit = |v: Value| (super::hash::mix32(v as u32) % buckets) == *excluded_bucket;
                let mut lo = d.lo;
                let mut hi = d.hi;
                while lo <= hi && hit(lo) {
                    lo += 1;
                }
                while hi >= lo && hit(hi) {
                    hi -= 1;
                }
                if lo > hi {
                    return Err(Conflict);
                }
                if lo != d.lo || hi != d.hi {
                    doms[*var] = Interval::new(lo, hi);
                    changed.push(*var);
                }
                Ok(())
            }
            CConstraint::Rel { op, lhs, rhs } => {
                let l = forward(lhs, doms);
                let r = forward(rhs, doms);
                match op {
                    RelOp::Eq => {
                        let both = l.intersect(r);
                        narrow(lhs, both, doms, changed)?;
                        let l = forward(lhs, doms);
                        narrow(rhs, l, doms, changed)
                    }
                    RelOp::Le => {
                        narrow(lhs, Interval::new(l.lo, r.hi), doms, changed)?;
                        let l = forward(lhs, doms);
                        narrow(rhs, Interval::new(l.lo, r.hi), doms, changed)
                    }
                    RelOp::Lt => {
                        narrow(
                            lhs,
                            Interval::new(l.lo, r.hi.saturating_sub(1)),
                            doms,
                            changed,
                        )?;
                        let l = forward(lhs, doms);
                        narrow(
                            rhs,
                            Interval::new(l.lo.saturating_add(1), r.hi),
                            doms,
                            changed,
                        )
                    }
                    RelOp::Ge => {
                        narrow(lhs, Interval::new(r.lo, l.hi), doms, changed)?;
                        let l = forward(lhs, doms);
                        narrow(rhs, Interval::new(r.lo, l.hi), doms, changed)
                    }
                    RelOp::Gt => {
                        narrow(
                            lhs,
                            Interval::new(r.lo.saturating_add(1), l.hi),
                            doms,
                            changed,
                        )?;
                        let l = forward(lhs, doms);
                        narrow(
                            rhs,
                            Interval::new(r.lo, l.hi.saturating_sub(1)),
                            doms,
                            changed,
                        )
                    }
                    RelOp::Ne => {
                        if l.is_point() && r.is_point() {
                            return if l.lo == r.lo { Err(Conflict) } else { Ok(()) };
                        }
                        if r.is_point() {
                            narrow(lhs, shave(l, r.lo), doms, changed)
                        } else if l.is_point() {
                            narrow(rhs, shave(r, l.lo), doms, changed)
                        } else {
                            Ok(())
                        }
                    }
                }
            }
        }
    }

    /// Exact check of every constraint once all domains are points.
    pub fn holds_at_leaf(&self, doms: &[Interval]) -> bool {
        self.cons.iter().all(|c| match c {
            CConstraint::Hash {
                var,
                excluded_bucket,
                buckets,
            } => super::hash::mix32(doms[*var].lo as u32) % buckets != *excluded_bucket,
            CConstraint::Rel { op, lhs, rhs } => match (exact(lhs, doms), exact(rhs, doms)) {
                (Some(l), Some(r)) => op.holds(l, r),
                _ => false,
            },
        })
    }
}

/// Removes `v` from `d` when it sits on a bound.
fn shave(d: Interval, v: Value) -> Interval {
    if d.lo == v {
        Interval::new(v + 1, d.hi)
    } else if d.hi == v {
        Interval::new(d.lo, v - 1)
    } else {
        d
    }
}

fn lookup(model: &Model, name: &str) -> Result<usize, ModelError> {
    model
        .index_of(name)
        .ok_or_else(|| ModelError::UndeclaredVar(name.to_string()))
}

fn compile_expr(model: &Model, e: &IntExpr) -> Result<CExpr, ModelError> {
    Ok(match e {
        IntExpr::Const(c) => CExpr::Const(*c),
        IntExpr::Var(name) => CExpr::Var(lookup(model, name)?),
        IntExpr::Add(a, b) => CExpr::Add(
            Box::new(compile_expr(model, a)?),
            Box::new(compile_expr(model, b)?),
        ),
        IntExpr::Sub(a, b) => CExpr::Sub(
            Box::new(compile_expr(model, a)?),
            Box::new(compile_expr(model, b)?),
        ),
        IntExpr::Mul(a, b) => CExpr::Mul(
            Box::new(compile_expr(model, a)?),
            Box::new(compile_expr(model, b)?),
        ),
        IntExpr::Neg(a) => CExpr::Neg(Box::new(compile_expr(model, a)?)),
    })
}

fn forward(e: &CExpr, doms: &[Interval]) -> Interval {
    match e {
        CExpr::Const(c) => Interval::point(*c),
        CExpr::Var(i) => doms[*i],
        CExpr::Add(a, b) => forward(a, doms).add(forward(b, doms)),
        CExpr::Sub(a, b) => forward(a, doms).sub(forward(b, doms)),
        CExpr::Mul(a, b) => forward(a, doms).mul(forward(b, doms)),
        CExpr::Neg(a) => forward(a, doms).neg(),
    }
}

fn exact(e: &CExpr, doms: &[Interval]) -> Option<Value> {
    match e {
        CExpr::Const(c) => Some(*c),
        CExpr::Var(i) => Some(doms[*i].lo),
        CExpr::Add(a, b) => exact(a, doms)?.checked_add(exact(b, doms)?),
        CExpr::Sub(a, b) => exact(a, doms)?.checked_sub(exact(b, doms)?),
        CExpr::Mul(a, b) => exact(a, doms)?.checked_mul(exact(b, doms)?),
        CExpr::Neg(a) => exact(a, doms)?.checked_neg(),
    }
}

/// Restricts `e` to values in `req`, projecting the requirement onto the
/// variables below it.
fn narrow(
    e: &CExpr,
    req: Interval,
    doms: &mut [Interval],
    changed: &mut Vec<usize>,
) -> Result<(), Conflict> {
    let cur = forward(e, doms);
    let new = cur.intersect(req);
    if new.is_empty() {
        return Err(Conflict);
    }
    if new == cur {
        return Ok(());
    }
    match e {
        CExpr::Const(_) => Ok(()),
        CExpr::Var(i) => {
            doms[*i] = doms[*i].intersect(new);
            changed.push(*i);
            Ok(())
        }
        CExpr::Add(a, b) => {
            let bi = forward(b, doms);
            narrow(a, new.sub(bi), doms, changed)?;
            let ai = forward(a, doms);
            narrow(b, new.sub(ai), doms, changed)
        }
        CExpr::Sub(a, b) => {
            let bi = forward(b, doms);
            narrow(a, new.add(bi), doms, changed)?;
            let ai = forward(a, doms);
            narrow(b, ai.sub(new), doms, changed)
        }
        CExpr::Neg(a) => narrow(a, new.neg(), doms, changed),
        CExpr::Mul(a, b) => {
            let bi = forward(b, doms);
            if let Some(q) = new.div_hull(bi) {
                narrow(a, q, doms, changed)?;
            }
            let ai = forward(a, doms);
            if let Some(q) = new.div_hull(ai) {
                narrow(b, q, doms, changed)?;
            }
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Propagated {
    /// Refined domains in declaration order; a superset of every solution.
    Refined(Vec<Interval>),
    Conflict,
}

pub fn propagate(model: &Model) -> Result<Propagated, ModelError> {
    let compiled = Compiled::new(model)?;
    let mut doms = compiled.domains.clone();
    Ok(match compiled.propagate(&mut doms, None) {
        Ok(()) => Propagated::Refined(doms),
        Err(Conflict) => Propagated::Conflict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::VarRole::Param;

    fn refined(m: &Model) -> Vec<Interval> {
        match propagate(m).unwrap() {
            Propagated::Refined(d) => d,
            Propagated::Conflict => panic!("unexpected conflict"),
        }
    }

    #[test]
    fn bounds_from_two_inequalities() {
        let mut m = Model::new();
        let x = m.declare("x", 0, 10, Param).unwrap();
        m.add("lo", Constraint::ge(x.clone(), 3)).unwrap();
        m.add("hi", Constraint::le(x, 7)).unwrap();
        assert_eq!(refined(&m), vec![Interval::new(3, 7)]);
    }

    #[test]
    fn sum_bounds() {
        let mut m = Model::new();
        let x = m.declare("x", 0, 10, Param).unwrap();
        let y = m.declare("y", 0, 10, Param).unwrap();
        m.add("sum", Constraint::eq(x + y, 4)).unwrap();
        assert_eq!(refined(&m), vec![Interval::new(0, 4), Interval::new(0, 4)]);
    }

    #[test]
    fn empty_interval_conflicts() {
        let mut m = Model::new();
        let x = m.declare("x", 0, 3, Param).unwrap();
        m.add("lo", Constraint::ge(x, 5)).unwrap();
        assert_eq!(propagate(&m).unwrap(), Propagated::Conflict);
    }

    #[test]
    fn product_with_fixed_factor_is_tight() {
        // 3 * (h - 1) + r = 125 with r in [0, 2] pins h to 42
        let mut m = Model::new();
        let h = m.declare("h", 1, 512, Param).unwrap();
        let r = m.declare("r", 0, 2, VarRole::Auxiliary).unwrap();
        m.add("core", Constraint::eq((h - 1) * 3 + r, 125)).unwrap();
        let doms = refined(&m);
        assert_eq!(doms, vec![Interval::point(42), Interval::point(2)]);
    }

    #[test]
    fn hash_exclusion_shaves_bounds() {
        let mut m = Model::new();
        m.declare("x", 0, 1, Param).unwrap();
        m.add("h", Constraint::hash_ne("x", 0)).unwrap();
        // bucket(0) == bucket(1) with 64 buckets
        assert_eq!(propagate(&m).unwrap(), Propagated::Conflict);
    }
}

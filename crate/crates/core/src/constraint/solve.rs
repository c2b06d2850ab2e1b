//! Randomized depth-first search on top of bounds propagation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::interval::Interval;
use super::propagate::Compiled;
use super::{Assignment, Model, ModelError};

/// Node budget used when the caller has no opinion.
pub const DEFAULT_NODE_BUDGET: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveResult {
    Sat(Assignment),
    Unsat,
    /// Budget ran out before either a solution or a refutation.
    Unknown {
        nodes_spent: u64,
    },
}

impl SolveResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SolveResult::Sat(_))
    }

    pub fn into_assignment(self) -> Option<Assignment> {
        match self {
            SolveResult::Sat(a) => Some(a),
            _ => None,
        }
    }
}

/// Finds one assignment satisfying `model`.
///
/// Values are drawn uniformly from the propagated interval of the chosen
/// variable, so repeated calls with different seeds spread over the
/// solution space instead of hugging domain bounds. Each search node is a
/// three-way split `x = v | x < v | x > v`, which keeps the search complete:
/// `Unsat` is only returned after every branch has been refuted.
pub fn solve(model: &Model, seed: u64, node_budget: u64) -> Result<SolveResult, ModelError> {
    let compiled = Compiled::new(model)?;
    Ok(search(&compiled, model, seed, node_budget.max(1)))
}

fn search(c: &Compiled, model: &Model, seed: u64, budget: u64) -> SolveResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stack: Vec<(Vec<Interval>, Option<usize>)> = vec![(c.domains.clone(), None)];
    let mut nodes = 0u64;

    while let Some((mut doms, touched)) = stack.pop() {
        if nodes >= budget {
            return SolveResult::Unknown { nodes_spent: nodes };
        }
        nodes += 1;
        if c.propagate(&mut doms, touched).is_err() {
            continue;
        }
        let Some(var) = pick_var(c, &doms) else {
            if c.holds_at_leaf(&doms) {
                return SolveResult::Sat(to_assignment(model, &doms));
            }
            continue;
        };
        let d = doms[var];
        let v = rng.gen_range(d.lo..=d.hi);
        let mut below = (v > d.lo).then(|| {
            let mut b = doms.clone();
            b[var] = Interval::new(d.lo, v - 1);
            (b, Some(var))
        });
        let mut above = (v < d.hi).then(|| {
            let mut b = doms.clone();
            b[var] = Interval::new(v + 1, d.hi);
            (b, Some(var))
        });
        if rng.gen_bool(0.5) {
            std::mem::swap(&mut below, &mut above);
        }
        stack.extend(below);
        stack.extend(above);
        doms[var] = Interval::point(v);
        stack.push((doms, Some(var)));
    }
    SolveResult::Unsat
}

/// Decision variables before derived ones, then the narrowest domain,
/// then declaration order.
fn pick_var(c: &Compiled, doms: &[Interval]) -> Option<usize> {
    doms.iter()
        .enumerate()
        .filter(|(_, d)| !d.is_point())
        .min_by_key(|(i, d)| (!c.roles[*i].is_decision(), d.width(), *i))
        .map(|(i, _)| i)
}

fn to_assignment(model: &Model, doms: &[Interval]) -> Assignment {
    model
        .vars()
        .iter()
        .zip(doms)
        .map(|(v, d)| (v.name.to_string(), d.lo))
        .collect()
}

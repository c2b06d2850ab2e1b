//! Iterative exploration of a model's solution space.
//!
//! After each emission one decision variable of the last solution is
//! picked at random and its value is excluded twice: exactly (`x != v`)
//! and by hash bucket (`h(x) != h(v)`). The bucket exclusion prunes a
//! pseudo-random slice of the domain, which pushes successive solutions
//! apart much faster than exact exclusions alone.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::constraint::{
    solve, Assignment, Constraint, IntExpr, Model, ModelError, SolveResult, DEFAULT_BUCKETS, DEFAULT_NODE_BUDGET,
};

/// What to do when the accumulated exclusions make the model unsolvable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RestartPolicy {
    /// Drop the exclusions of the most constrained variable first and
    /// fall back to a full reset once none are left.
    DropVar,
    /// Clear every exclusion at once.
    FullReset,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplorePolicy {
    pub bucket_count: u32,
    pub max_exclusions_per_var: usize,
    pub restart: RestartPolicy,
    pub node_budget: u64,
}

impl Default for ExplorePolicy {
    fn default() -> Self {
        ExplorePolicy {
            bucket_count: DEFAULT_BUCKETS,
            max_exclusions_per_var: 16,
            restart: RestartPolicy::DropVar,
            node_budget: DEFAULT_NODE_BUDGET,
        }
    }
}

impl ExplorePolicy {
    pub fn check(&self) -> Result<(), ExploreError> {
        if self.bucket_count < 2 {
            return Err(ExploreError::Policy("bucket_count must be at least 2".into()));
        }
        if self.max_exclusions_per_var < 1 {
            return Err(ExploreError::Policy("max_exclusions_per_var must be at least 1".into()));
        }
        if self.node_budget < 1 {
            return Err(ExploreError::Policy("node_budget must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExploreError {
    #[error("invalid explore policy: {0}")]
    Policy(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Next {
    Emitted(Assignment),
    Exhausted,
}

/// One value excluded from one variable, as the pair `x != v`,
/// `h(x) != h(v)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Exclusion {
    pub var: usize,
    pub value: i128,
}

/// Solves per call to [`ExplorerState::next`] before giving up.
const MAX_ATTEMPTS: usize = 4096;

/// Consecutive `Unknown` results tolerated with no exclusions active.
const UNKNOWN_RETRIES: usize = 4;

pub struct ExplorerState {
    base: Model,
    policy: ExplorePolicy,
    candidates: Vec<usize>,
    exclusions: VecDeque<Exclusion>,
    blocked: Vec<Assignment>,
    seen: HashSet<[u8; 32]>,
    seeds: ChaCha8Rng,
    rng: ChaCha8Rng,
    last: Option<Assignment>,
    iteration: u64,
    restarts: u64,
    exhausted: bool,
}

impl ExplorerState {
    pub fn new(model: Model, seed: u64, policy: ExplorePolicy) -> Result<Self, ExploreError> {
        policy.check()?;
        model.check_well_formed()?;
        let candidates = model
            .vars()
            .iter()
            .enumerate()
            .filter(|(_, v)| v.role.is_decision() && v.lo < v.hi)
            .map(|(i, _)| i)
            .collect();
        let mut seeds = ChaCha8Rng::seed_from_u64(seed);
        let rng = ChaCha8Rng::seed_from_u64(seeds.next_u64());
        Ok(ExplorerState {
            base: model,
            policy,
            candidates,
            exclusions: VecDeque::new(),
            blocked: Vec::new(),
            seen: HashSet::new(),
            seeds,
            rng,
            last: None,
            iteration: 0,
            restarts: 0,
            exhausted: false,
        })
    }

    pub fn model(&self) -> &Model {
        &self.base
    }

    /// Number of emissions so far.
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn restarts(&self) -> u64 {
        self.restarts
    }

    /// Active exclusions, oldest first.
    pub fn exclusions(&self) -> impl Iterator<Item = (&str, i128)> {
        self.exclusions.iter().map(|e| (&*self.base.vars()[e.var].name, e.value))
    }

    pub fn next(&mut self) -> Next {
        if self.exhausted {
            return Next::Exhausted;
        }
        if let Some(last) = self.last.take() {
            self.exclude_from(&last);
        }
        let mut unknowns = 0;
        for _ in 0..MAX_ATTEMPTS {
            let model = self.current_model();
            let seed = self.rng.next_u64();
            let result = solve(&model, seed, self.policy.node_budget).expect("explorer model is well formed");
            match result {
                SolveResult::Sat(a) => {
                    if self.seen.insert(fingerprint(&a)) {
                        self.iteration += 1;
                        self.last = Some(a.clone());
                        return Next::Emitted(a);
                    }
                    self.blocked.push(a);
                }
                SolveResult::Unknown { .. } if self.exclusions.is_empty() => {
                    unknowns += 1;
                    if unknowns > UNKNOWN_RETRIES {
                        break;
                    }
                }
                SolveResult::Unsat if self.exclusions.is_empty() => break,
                SolveResult::Unsat | SolveResult::Unknown { .. } => self.restart(),
            }
        }
        self.exhausted = true;
        Next::Exhausted
    }

    fn exclude_from(&mut self, last: &Assignment) {
        if self.candidates.is_empty() {
            return;
        }
        let var = self.candidates[self.rng.gen_range(0..self.candidates.len())];
        let Some(value) = last.get(&self.base.vars()[var].name) else {
            return;
        };
        let active = self.exclusions.iter().filter(|e| e.var == var).count();
        if active >= self.policy.max_exclusions_per_var {
            let oldest = self.exclusions.iter().position(|e| e.var == var).expect("counted above");
            self.exclusions.remove(oldest);
        }
        self.exclusions.push_back(Exclusion { var, value });
    }

    fn restart(&mut self) {
        self.restarts += 1;
        if self.policy.restart == RestartPolicy::DropVar {
            if let Some(var) = self.most_constrained() {
                self.exclusions.retain(|e| e.var != var);
                return;
            }
        }
        self.exclusions.clear();
        self.rng = ChaCha8Rng::seed_from_u64(self.seeds.next_u64());
    }

    /// Variable with the most active exclusions; ties go to the one
    /// excluded most recently.
    fn most_constrained(&self) -> Option<usize> {
        let mut counts: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for (pos, e) in self.exclusions.iter().enumerate() {
            let c = counts.entry(e.var).or_default();
            c.0 += 1;
            c.1 = pos;
        }
        counts.into_iter().max_by_key(|(_, c)| *c).map(|(v, _)| v)
    }

    fn current_model(&self) -> Model {
        let mut m = self.base.clone();
        for e in &self.exclusions {
            let name = self.base.vars()[e.var].name.clone();
            let excluded = Constraint::ne(IntExpr::Var(name.clone()), e.value);
            let hashed = Constraint::HashBucketNe {
                var: name,
                excluded: e.value,
                buckets: self.policy.bucket_count,
            };
            m.add("exclusion", excluded).expect("declared variable");
            m.add("hash exclusion", hashed).expect("declared variable");
        }
        for a in &self.blocked {
            m.add("emitted tuple", tuple_block(&self.base, a)).expect("declared variables");
        }
        m
    }
}

/// `sum((x - a[x])^2) != 0` over every variable: forbids exactly `a`.
fn tuple_block(model: &Model, a: &Assignment) -> Constraint {
    let terms = model.vars().iter().map(|v| {
        let d = IntExpr::Var(Arc::clone(&v.name)) - a.get(&v.name).unwrap_or(0);
        &d * d.clone()
    });
    Constraint::ne(IntExpr::sum(terms), 0)
}

/// Order-independent digest of a full assignment.
pub fn fingerprint(a: &Assignment) -> [u8; 32] {
    let mut h = Sha256::new();
    for (name, v) in a.iter() {
        h.update(name.as_bytes());
        h.update([0]);
        h.update(v.to_le_bytes());
    }
    h.finalize().into()
}

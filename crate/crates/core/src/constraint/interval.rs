use super::Value;

/// Closed integer interval. `lo > hi` encodes the empty set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Interval {
    pub lo: Value,
    pub hi: Value,
}

impl Interval {
    pub const EMPTY: Interval = Interval { lo: 1, hi: 0 };

    pub fn new(lo: Value, hi: Value) -> Self {
        Interval { lo, hi }
    }

    pub fn point(v: Value) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, v: Value) -> bool {
        self.lo <= v && v <= self.hi
    }

    /// Number of integers in the interval, saturating.
    pub fn width(&self) -> u128 {
        if self.is_empty() {
            0
        } else {
            (self.hi.abs_diff(self.lo)).saturating_add(1)
        }
    }

    pub fn intersect(self, other: Interval) -> Interval {
        Interval {
            lo: self.lo.max(other.lo),
            hi: self.hi.min(other.hi),
        }
    }

    pub fn hull(self, other: Interval) -> Interval {
        if self.is_empty() {
            return other;
        }
        if other.is_empty() {
            return self;
        }
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    pub fn add(self, o: Interval) -> Interval {
        Interval {
            lo: self.lo.saturating_add(o.lo),
            hi: self.hi.saturating_add(o.hi),
        }
    }

    pub fn sub(self, o: Interval) -> Interval {
        Interval {
            lo: self.lo.saturating_sub(o.hi),
            hi: self.hi.saturating_sub(o.lo),
        }
    }

    pub fn neg(self) -> Interval {
        Interval {
            lo: self.hi.saturating_neg(),
            hi: self.lo.saturating_neg(),
        }
    }

    pub fn mul(self, o: Interval) -> Interval {
        let c = [
            self.lo.saturating_mul(o.lo),
            self.lo.saturating_mul(o.hi),
            self.hi.saturating_mul(o.lo),
            self.hi.saturating_mul(o.hi),
        ];
        Interval {
            lo: *c.iter().min().unwrap(),
            hi: *c.iter().max().unwrap(),
        }
    }

    /// Integers `x` such that `x * y` lies in `self` for some `y` in `divisor`.
    ///
    /// Returns `None` when nothing can be concluded (zero is a possible
    /// divisor and a possible product). The result is a hull, so it may
    /// over-approximate but never drops a solution.
    pub fn div_hull(self, divisor: Interval) -> Option<Interval> {
        if divisor.is_empty() || self.is_empty() {
            return Some(Interval::EMPTY);
        }
        if divisor.contains(0) && self.contains(0) {
            return None;
        }
        let parts = [
            divisor.intersect(Interval::new(1, Value::MAX)),
            divisor.intersect(Interval::new(Value::MIN, -1)),
        ];
        let mut out = Interval::EMPTY;
        for p in parts.into_iter().filter(|p| !p.is_empty()) {
            let corners = [
                (self.lo, p.lo),
                (self.lo, p.hi),
                (self.hi, p.lo),
                (self.hi, p.hi),
            ];
            let lo = corners.iter().map(|&(a, b)| ceil_div(a, b)).min().unwrap();
            let hi = corners.iter().map(|&(a, b)| floor_div(a, b)).max().unwrap();
            if lo <= hi {
                out = out.hull(Interval::new(lo, hi));
            }
        }
        Some(out)
    }
}

pub fn floor_div(a: Value, b: Value) -> Value {
    debug_assert!(b != 0);
    if b > 0 {
        a.div_euclid(b)
    } else {
        a.saturating_neg().div_euclid(b.saturating_neg())
    }
}

pub fn ceil_div(a: Value, b: Value) -> Value {
    floor_div(a.saturating_neg(), b).saturating_neg()
}

use crate::constraint::{Constraint, IntExpr, Model, Value, VarRole};

use super::{
    axis_name, Bounds, ModelConfig, OpError, OpKind, OperatorFamily, BINARY_OPCODES, UNARY_OPCODES,
};

use VarRole::{Auxiliary, InputDim, OutputDim, Param};

struct Builder<'a> {
    m: Model,
    cfg: &'a ModelConfig,
}

impl Builder<'_> {
    fn var(&mut self, name: &str, lo: Value, hi: Value, role: VarRole) -> Result<IntExpr, OpError> {
        Ok(self.m.declare(name, lo, hi, role)?)
    }

    fn bounded(&mut self, name: &str, b: Bounds, role: VarRole) -> Result<IntExpr, OpError> {
        self.var(name, b.lo as Value, b.hi as Value, role)
    }

    fn axes(
        &mut self,
        param: &str,
        n: usize,
        b: Bounds,
        role: VarRole,
    ) -> Result<Vec<IntExpr>, OpError> {
        (0..n)
            .map(|i| self.bounded(&axis_name(param, i), b, role))
            .collect()
    }

    fn rule(&mut self, label: impl AsRef<str>, c: Constraint) -> Result<(), OpError> {
        Ok(self.m.add(label, c)?)
    }

    fn cap(&mut self, label: &str, factors: Vec<IntExpr>) -> Result<(), OpError> {
        if let Some(cap) = self.cfg.max_elements {
            self.rule(
                label,
                Constraint::le(IntExpr::product(factors), cap as Value),
            )?;
        }
        Ok(())
    }

    /// `batch`, `inch` and per-axis `dims`: the NC* input tensor.
    fn nchw_input(&mut self, axes: usize) -> Result<(IntExpr, IntExpr, Vec<IntExpr>), OpError> {
        let batch = self.bounded("batch", self.cfg.batch, InputDim)?;
        let inch = self.bounded("inch", self.cfg.chan, InputDim)?;
        let dims = self.axes("dims", axes, self.cfg.dim, InputDim)?;
        let mut factors = vec![batch.clone(), inch.clone()];
        factors.extend(dims.iter().cloned());
        self.cap("input elements", factors)?;
        Ok((batch, inch, dims))
    }

    fn output_cap(&mut self, lead: Vec<IntExpr>, outdims: &[IntExpr]) -> Result<(), OpError> {
        let mut factors = lead;
        factors.extend(outdims.iter().cloned());
        self.cap("output elements", factors)
    }

    /// `groups` with `inch = groups * qin` and `outch = groups * qout`.
    fn groups(&mut self, inch: &IntExpr, outch: &IntExpr) -> Result<(), OpError> {
        let chan_hi = self.cfg.chan.hi as Value;
        let groups = self.var("groups", 1, chan_hi, Param)?;
        let qin = self.var("qin", 1, chan_hi, Auxiliary)?;
        let qout = self.var("qout", 1, chan_hi, Auxiliary)?;
        self.rule(
            "groups divide inch",
            Constraint::eq(inch.clone(), &groups * qin),
        )?;
        self.rule(
            "groups divide outch",
            Constraint::eq(outch.clone(), groups * qout),
        )
    }

    /// Floor-division window relation, encoded with a remainder variable:
    /// `dims + 2*pad - dil*(ksize-1) - 1 = stride*(outdims-1) + rem`.
    fn window_axis(
        &mut self,
        i: usize,
        dims: &IntExpr,
        dil: IntExpr,
        pad: IntExpr,
    ) -> Result<IntExpr, OpError> {
        let cfg = self.cfg;
        let ksize = self.bounded(&axis_name("ksize", i), cfg.ksize, Param)?;
        let stride = self.bounded(&axis_name("stride", i), cfg.stride, Param)?;
        let out_hi = cfg.dim.hi as Value + 2 * cfg.pad.hi as Value;
        let outdims = self.var(&axis_name("outdims", i), 1, out_hi.max(1), OutputDim)?;
        let rem_hi = if cfg.exact_division {
            0
        } else {
            cfg.stride.hi as Value - 1
        };
        let rem = self.var(&axis_name("rem", i), 0, rem_hi, Auxiliary)?;
        let span = &dil * (&ksize - 1);
        self.rule(
            format!("core[{i}]"),
            Constraint::eq(dims + &pad * 2 - &span - 1, &stride * (&outdims - 1) + &rem),
        )?;
        self.rule(
            format!("rem[{i}] < stride[{i}]"),
            Constraint::le(rem, stride - 1),
        )?;
        self.rule(
            format!("window fits[{i}]"),
            Constraint::ge(dims + &pad * 2, span + 1),
        )?;
        Ok(outdims)
    }
}

/// Builds the constraint model of one operator kind.
pub fn build_model(kind: OpKind, cfg: &ModelConfig) -> Result<Model, OpError> {
    use OperatorFamily::*;
    cfg.check()?;
    if !kind.family.supports(kind.rank) {
        return Err(OpError::UnsupportedRank {
            family: kind.family,
            rank: kind.rank,
        });
    }
    let mut b = Builder {
        m: Model::new(),
        cfg,
    };
    let n = kind.axes();
    match kind.family {
        Conv => conv(&mut b, n)?,
        ConvTranspose => conv_transpose(&mut b, n)?,
        MaxPool | AvgPool | LPPool => pool(&mut b, kind.family, n)?,
        FractionalMaxPool => fractional(&mut b, n)?,
        AdaptiveAvgPool | AdaptiveMaxPool => adaptive(&mut b, n)?,
        ReflectionPad | ReplicationPad | ConstantPad | CircularPad | ZeroPad => {
            padding(&mut b, kind.family, n)?
        }
        ElemUnary => unary(&mut b)?,
        ElemBinary => binary(&mut b)?,
        MatMul => matmul(&mut b, false)?,
        BMM => matmul(&mut b, true)?,
        Concat => concat(&mut b)?,
    }
    Ok(b.m)
}

fn conv(b: &mut Builder, n: usize) -> Result<(), OpError> {
    let cfg = b.cfg;
    let (batch, inch, dims) = b.nchw_input(n)?;
    let outch = b.bounded("outch", cfg.chan, Param)?;
    b.groups(&inch, &outch)?;
    let mut outdims = Vec::with_capacity(n);
    for (i, h) in dims.iter().enumerate() {
        let pad = b.bounded(&axis_name("pad", i), cfg.pad, Param)?;
        let dil = b.bounded(&axis_name("dil", i), cfg.dil, Param)?;
        outdims.push(b.window_axis(i, h, dil, pad)?);
        let k = IntExpr::var(axis_name("ksize", i));
        b.rule(
            format!("dims[{i}] > ksize[{i}]"),
            Constraint::gt(h.clone(), k),
        )?;
    }
    b.output_cap(vec![batch, outch], &outdims)
}

fn conv_transpose(b: &mut Builder, n: usize) -> Result<(), OpError> {
    let cfg = b.cfg;
    let (batch, inch, dims) = b.nchw_input(n)?;
    let outch = b.bounded("outch", cfg.chan, Param)?;
    b.groups(&inch, &outch)?;
    let out_hi = (cfg.dim.hi as Value - 1) * cfg.stride.hi as Value
        + cfg.dil.hi as Value * (cfg.ksize.hi as Value - 1)
        + cfg.stride.hi as Value;
    let mut outdims = Vec::with_capacity(n);
    for (i, h) in dims.iter().enumerate() {
        let k = b.bounded(&axis_name("ksize", i), cfg.ksize, Param)?;
        let s = b.bounded(&axis_name("stride", i), cfg.stride, Param)?;
        let p = b.bounded(&axis_name("pad", i), cfg.pad, Param)?;
        let d = b.bounded(&axis_name("dil", i), cfg.dil, Param)?;
        let op = b.var(
            &axis_name("outpad", i),
            0,
            cfg.stride.hi as Value - 1,
            Param,
        )?;
        let o = b.var(&axis_name("outdims", i), 1, out_hi.max(1), OutputDim)?;
        b.rule(
            format!("core[{i}]"),
            Constraint::eq(
                o.clone(),
                (h - 1) * s.clone() - p * 2 + d * (k - 1) + op.clone() + 1,
            ),
        )?;
        b.rule(
            format!("outpad[{i}] < stride[{i}]"),
            Constraint::le(op, s - 1),
        )?;
        b.rule(format!("outdims[{i}] >= 1"), Constraint::ge(o.clone(), 1))?;
        outdims.push(o);
    }
    b.output_cap(vec![batch, outch], &outdims)
}

fn pool(b: &mut Builder, family: OperatorFamily, n: usize) -> Result<(), OpError> {
    let cfg = b.cfg;
    let (batch, inch, dims) = b.nchw_input(n)?;
    if family == OperatorFamily::LPPool {
        b.var("norm", 1, 6, Param)?;
    }
    let mut outdims = Vec::with_capacity(n);
    for (i, h) in dims.iter().enumerate() {
        // LPPool takes no padding argument in the frameworks we target.
        let pad_bounds = if family == OperatorFamily::LPPool {
            Bounds::new(0, 0)
        } else {
            cfg.pad
        };
        let pad = b.bounded(&axis_name("pad", i), pad_bounds, Param)?;
        let dil = if family == OperatorFamily::MaxPool {
            b.bounded(&axis_name("dil", i), cfg.dil, Param)?
        } else {
            IntExpr::constant(1)
        };
        outdims.push(b.window_axis(i, h, dil, pad.clone())?);
        let k = IntExpr::var(axis_name("ksize", i));
        if family == OperatorFamily::AvgPool && n == 3 {
            b.rule(
                format!("ksize[{i}] <= dims[{i}]"),
                Constraint::le(k.clone(), h.clone()),
            )?;
        }
        b.rule(
            format!("2*pad[{i}] <= ksize[{i}]"),
            Constraint::le(pad * 2, k),
        )?;
    }
    b.output_cap(vec![batch, inch], &outdims)
}

fn fractional(b: &mut Builder, n: usize) -> Result<(), OpError> {
    let cfg = b.cfg;
    let (batch, inch, dims) = b.nchw_input(n)?;
    // The 3-d kernel needs one more input element than the 2-d one.
    let slack = if n == 3 { 0 } else { 1 };
    let mut outdims = Vec::with_capacity(n);
    for (i, h) in dims.iter().enumerate() {
        let k = b.bounded(&axis_name("ksize", i), cfg.ksize, Param)?;
        let o = b.bounded(&axis_name("outdims", i), cfg.dim, OutputDim)?;
        b.rule(
            format!("outdims[{i}] < dims[{i}]"),
            Constraint::lt(o.clone(), h.clone()),
        )?;
        b.rule(
            format!("ksize[{i}] fits"),
            Constraint::le(k, h - o.clone() + slack),
        )?;
        outdims.push(o);
    }
    b.output_cap(vec![batch, inch], &outdims)
}

fn adaptive(b: &mut Builder, n: usize) -> Result<(), OpError> {
    let cfg = b.cfg;
    let (batch, inch, _dims) = b.nchw_input(n)?;
    let outdims = b.axes("outdims", n, Bounds::new(1, cfg.dim.hi), OutputDim)?;
    b.output_cap(vec![batch, inch], &outdims)
}

fn padding(b: &mut Builder, family: OperatorFamily, n: usize) -> Result<(), OpError> {
    let cfg = b.cfg;
    let (batch, inch, dims) = b.nchw_input(n)?;
    let out_hi = cfg.dim.hi as Value + 2 * cfg.pad.hi as Value;
    let mut outdims = Vec::with_capacity(n);
    for (i, h) in dims.iter().enumerate() {
        let pl = b.bounded(&axis_name("padl", i), cfg.pad, Param)?;
        let pr = b.bounded(&axis_name("padr", i), cfg.pad, Param)?;
        let o = b.var(&axis_name("outdims", i), 1, out_hi, OutputDim)?;
        b.rule(
            format!("core[{i}]"),
            Constraint::eq(o.clone(), h + pl.clone() + pr.clone()),
        )?;
        match family {
            OperatorFamily::ReflectionPad => {
                b.rule(
                    format!("padl[{i}] < dims[{i}]"),
                    Constraint::lt(pl, h.clone()),
                )?;
                b.rule(
                    format!("padr[{i}] < dims[{i}]"),
                    Constraint::lt(pr, h.clone()),
                )?;
            }
            OperatorFamily::CircularPad => {
                b.rule(
                    format!("padl[{i}] <= dims[{i}]"),
                    Constraint::le(pl, h.clone()),
                )?;
                b.rule(
                    format!("padr[{i}] <= dims[{i}]"),
                    Constraint::le(pr, h.clone()),
                )?;
            }
            _ => {}
        }
        outdims.push(o);
    }
    b.output_cap(vec![batch, inch], &outdims)
}

fn shape3(b: &mut Builder, param: &str, role: VarRole) -> Result<Vec<IntExpr>, OpError> {
    let dim = b.cfg.dim;
    let v = b.axes(param, super::ELEMENTWISE_RANK, dim, role)?;
    if role == InputDim {
        b.cap(&format!("{param} elements"), v.clone())?;
    }
    Ok(v)
}

fn unary(b: &mut Builder) -> Result<(), OpError> {
    let dims = shape3(b, "dims", InputDim)?;
    b.var("opcode", 0, UNARY_OPCODES.len() as Value - 1, Param)?;
    let dim = b.cfg.dim;
    let outdims = b.axes("outdims", dims.len(), dim, OutputDim)?;
    for (i, (o, d)) in outdims.into_iter().zip(dims).enumerate() {
        b.rule(format!("passthrough[{i}]"), Constraint::eq(o, d))?;
    }
    Ok(())
}

fn binary(b: &mut Builder) -> Result<(), OpError> {
    let lhs = shape3(b, "dims", InputDim)?;
    let rhs = shape3(b, "dims2", InputDim)?;
    b.var("opcode", 0, BINARY_OPCODES.len() as Value - 1, Param)?;
    let dim = b.cfg.dim;
    let outdims = b.axes("outdims", lhs.len(), dim, OutputDim)?;
    for (i, ((a, c), o)) in lhs.iter().zip(&rhs).zip(&outdims).enumerate() {
        b.rule(
            format!("broadcast[{i}]"),
            Constraint::eq((a - c.clone()) * (a - 1) * (c - 1), 0),
        )?;
        b.rule(
            format!("outdims[{i}] >= dims[{i}]"),
            Constraint::ge(o.clone(), a.clone()),
        )?;
        b.rule(
            format!("outdims[{i}] >= dims2[{i}]"),
            Constraint::ge(o.clone(), c.clone()),
        )?;
        b.rule(
            format!("outdims[{i}] is an operand dim"),
            Constraint::eq((o - a.clone()) * (o - c.clone()), 0),
        )?;
    }
    b.cap("output elements", outdims)
}

fn matmul(b: &mut Builder, batched: bool) -> Result<(), OpError> {
    let cfg = b.cfg;
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    if batched {
        lhs.push(b.bounded("dims.0", cfg.batch, InputDim)?);
    }
    let off = lhs.len();
    lhs.push(b.bounded(&axis_name("dims", off), cfg.dim, InputDim)?);
    lhs.push(b.bounded(&axis_name("dims", off + 1), cfg.dim, InputDim)?);
    if batched {
        rhs.push(b.bounded("dims2.0", cfg.batch, InputDim)?);
    }
    rhs.push(b.bounded(&axis_name("dims2", off), cfg.dim, InputDim)?);
    rhs.push(b.bounded(&axis_name("dims2", off + 1), cfg.dim, InputDim)?);
    b.cap("dims elements", lhs.clone())?;
    b.cap("dims2 elements", rhs.clone())?;

    let mut outdims = Vec::new();
    if batched {
        let o = b.bounded("outdims.0", cfg.batch, OutputDim)?;
        b.rule(
            "batch dims agree",
            Constraint::eq(lhs[0].clone(), rhs[0].clone()),
        )?;
        b.rule(
            "outdims[0] = batch",
            Constraint::eq(o.clone(), lhs[0].clone()),
        )?;
        outdims.push(o);
    }
    let rows = b.bounded(&axis_name("outdims", off), cfg.dim, OutputDim)?;
    let cols = b.bounded(&axis_name("outdims", off + 1), cfg.dim, OutputDim)?;
    b.rule(
        "inner dims agree",
        Constraint::eq(lhs[off + 1].clone(), rhs[off].clone()),
    )?;
    b.rule(
        "output rows",
        Constraint::eq(rows.clone(), lhs[off].clone()),
    )?;
    b.rule(
        "output cols",
        Constraint::eq(cols.clone(), rhs[off + 1].clone()),
    )?;
    outdims.push(rows);
    outdims.push(cols);
    b.cap("output elements", outdims)
}

/// `dims` is the first tensor; `catsz.j` is the axis size of tensor `j + 1`,
/// zero when fewer than `j + 2` tensors take part.
fn concat(b: &mut Builder) -> Result<(), OpError> {
    let cfg = b.cfg;
    let dims = shape3(b, "dims", InputDim)?;
    let axis = b.var("axis", 0, super::ELEMENTWISE_RANK as Value - 1, Param)?;
    let count = b.var("count", 2, super::MAX_CONCAT_INPUTS as Value, Param)?;
    let hi = cfg.dim.hi as Value;
    let c0 = b.var("catsz.0", cfg.dim.lo as Value, hi, InputDim)?;
    let c1 = b.var("catsz.1", 0, hi, InputDim)?;
    let c2 = b.var("catsz.2", 0, hi, InputDim)?;
    let three = (&count - 2) * (-(&count - 5));
    b.rule("tensor 3 present", Constraint::ge(c1.clone() * 2, three))?;
    b.rule(
        "tensor 3 absent",
        Constraint::le(c1.clone(), (&count - 2) * hi),
    )?;
    let four = (&count - 2) * (&count - 3);
    b.rule(
        "tensor 4 present",
        Constraint::ge(c2.clone() * 2, four.clone()),
    )?;
    b.rule("tensor 4 absent", Constraint::le(c2.clone() * 2, four * hi))?;
    let extra = c0 + c1 + c2;
    let out_hi = hi * super::MAX_CONCAT_INPUTS as Value;
    let outdims: Vec<IntExpr> = (0..3)
        .map(|i| b.var(&axis_name("outdims", i), 1, out_hi, OutputDim))
        .collect::<Result<_, _>>()?;
    // Lagrange indicators of axis == i over {0, 1, 2}, scaled by 2.
    let ind = [
        (&axis - 1) * (&axis - 2),
        &axis * (-(&axis - 2)) * 2,
        &axis * (&axis - 1),
    ];
    for (i, ind) in ind.into_iter().enumerate() {
        b.rule(
            format!("concat outdims[{i}]"),
            Constraint::eq(&outdims[i] * 2, &dims[i] * 2 + ind * extra.clone()),
        )?;
    }
    b.cap("output elements", outdims)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::{propagate, solve, Propagated, SolveResult};
    use crate::ops::Rank;

    fn kind(f: OperatorFamily, r: Rank) -> OpKind {
        OpKind::spatial(f, r).unwrap()
    }

    fn solve_sat(m: &Model, seed: u64) -> crate::constraint::Assignment {
        match solve(m, seed, 100_000).unwrap() {
            SolveResult::Sat(a) => a,
            other => panic!("expected Sat, got {other:?}"),
        }
    }

    #[test]
    fn reference_conv_solution() {
        let mut m = build_model(
            kind(OperatorFamily::Conv, Rank::R2),
            &ModelConfig::default(),
        )
        .unwrap();
        for (n, v) in [
            ("dims.0", 128),
            ("ksize.0", 5),
            ("pad.0", 1),
            ("dil.0", 1),
            ("stride.0", 1),
        ] {
            m.fix(n, v).unwrap();
        }
        for seed in 0..5 {
            assert_eq!(solve_sat(&m, seed).get("outdims.0"), Some(126));
        }
    }

    #[test]
    fn identity_window_keeps_size() {
        let mut m = build_model(
            kind(OperatorFamily::Conv, Rank::R1),
            &ModelConfig::default(),
        )
        .unwrap();
        for (n, v) in [("ksize.0", 1), ("stride.0", 1), ("pad.0", 0), ("dil.0", 1)] {
            m.fix(n, v).unwrap();
        }
        for seed in 0..20 {
            let a = solve_sat(&m, seed);
            assert_eq!(a.get("outdims.0"), a.get("dims.0"));
        }
    }

    #[test]
    fn maxpool_three_windows() {
        let mut m = build_model(
            kind(OperatorFamily::MaxPool, Rank::R1),
            &ModelConfig::default(),
        )
        .unwrap();
        for (n, v) in [
            ("dims.0", 7),
            ("ksize.0", 2),
            ("stride.0", 2),
            ("pad.0", 0),
            ("dil.0", 1),
        ] {
            m.fix(n, v).unwrap();
        }
        assert_eq!(solve_sat(&m, 3).get("outdims.0"), Some(3));
    }

    #[test]
    fn conv_transpose_admits_large_stride_case() {
        let cfg = ModelConfig {
            dim: Bounds::new(1, 40_000),
            ..ModelConfig::default()
        };
        let mut m = build_model(kind(OperatorFamily::ConvTranspose, Rank::R2), &cfg).unwrap();
        for (n, v) in [
            ("dims.0", 40_000),
            ("dims.1", 2),
            ("stride.0", 200),
            ("stride.1", 200),
        ] {
            m.fix(n, v).unwrap();
        }
        let a = solve_sat(&m, 11);
        assert!(m.satisfied_by(&a));
    }

    #[test]
    fn fractional_rank_one_is_rejected() {
        let k = OpKind {
            family: OperatorFamily::FractionalMaxPool,
            rank: Some(Rank::R1),
        };
        assert!(matches!(
            build_model(k, &ModelConfig::default()),
            Err(OpError::UnsupportedRank { .. })
        ));
    }

    #[test]
    fn element_cap_bounds_dims() {
        let cfg = ModelConfig {
            max_elements: Some(1000),
            ..ModelConfig::default()
        };
        let m = build_model(kind(OperatorFamily::AvgPool, Rank::R2), &cfg).unwrap();
        match propagate(&m).unwrap() {
            Propagated::Refined(d) => {
                let i = m.index_of("dims.0").unwrap();
                assert!(d[i].hi <= 1000);
            }
            Propagated::Conflict => panic!("conflict"),
        }
        for seed in 0..20 {
            let a = solve_sat(&m, seed);
            let n: i128 = ["batch", "inch", "dims.0", "dims.1"]
                .iter()
                .map(|k| a.get(k).unwrap())
                .product();
            assert!(n <= 1000);
        }
    }

    #[test]
    fn every_kind_builds_and_solves() {
        for k in OpKind::all() {
            let m = build_model(k, &ModelConfig::default()).unwrap();
            let a = solve_sat(&m, 1);
            assert!(m.satisfied_by(&a), "{k}");
        }
    }
}

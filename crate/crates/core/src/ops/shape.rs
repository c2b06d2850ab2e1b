//! Closed-form output shapes, written directly from the framework formulas.
//!
//! Nothing here goes through the constraint solver: this is the reference
//! the generated models are checked against.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::{Assignment, Value};

use super::{axis_name, OpKind, OperatorFamily, BINARY_OPCODES, MAX_CONCAT_INPUTS, UNARY_OPCODES};

/// Full output shape, batch and channel axes first where the operator has them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeResult {
    pub shape: Vec<Value>,
}

impl ShapeResult {
    pub fn elements(&self) -> Value {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShapeError {
    #[error("missing parameter `{0}`")]
    Missing(String),
    #[error("invalid parameters: {rule}")]
    Invalid { rule: String },
}

fn invalid<T>(rule: impl Into<String>) -> Result<T, ShapeError> {
    Err(ShapeError::Invalid { rule: rule.into() })
}

struct Params<'a>(&'a Assignment);

impl Params<'_> {
    fn get(&self, name: &str) -> Result<Value, ShapeError> {
        self.0
            .get(name)
            .ok_or_else(|| ShapeError::Missing(name.to_string()))
    }

    fn at(&self, name: &str, i: usize) -> Result<Value, ShapeError> {
        self.get(&axis_name(name, i))
    }

    fn positive(&self, name: &str) -> Result<Value, ShapeError> {
        let v = self.get(name)?;
        if v < 1 {
            return invalid(format!("{name} >= 1"));
        }
        Ok(v)
    }

    fn positive_at(&self, name: &str, i: usize) -> Result<Value, ShapeError> {
        self.positive(&axis_name(name, i))
    }

    fn non_negative_at(&self, name: &str, i: usize) -> Result<Value, ShapeError> {
        let v = self.at(name, i)?;
        if v < 0 {
            return invalid(format!("{name}[{i}] >= 0"));
        }
        Ok(v)
    }
}

/// Output extent of a sliding window with floor rounding, or `None` when
/// the dilated window does not fit in the padded input.
pub(crate) fn window_out(
    input: Value,
    ksize: Value,
    stride: Value,
    pad: Value,
    dil: Value,
) -> Option<Value> {
    let span = dil * (ksize - 1) + 1;
    let padded = input + 2 * pad;
    if padded < span {
        return None;
    }
    Some((padded - span).div_euclid(stride) + 1)
}

/// Reference output shape of `kind` under `params`.
pub fn output_shape(kind: OpKind, params: &Assignment) -> Result<ShapeResult, ShapeError> {
    use OperatorFamily::*;
    let p = Params(params);
    let n = kind.axes();
    let shape = match kind.family {
        Conv | ConvTranspose => {
            let batch = p.positive("batch")?;
            let inch = p.positive("inch")?;
            let outch = p.positive("outch")?;
            let groups = p.positive("groups")?;
            if inch % groups != 0 {
                return invalid("groups divide inch");
            }
            if outch % groups != 0 {
                return invalid("groups divide outch");
            }
            let mut shape = vec![batch, outch];
            for i in 0..n {
                let h = p.positive_at("dims", i)?;
                let k = p.positive_at("ksize", i)?;
                let s = p.positive_at("stride", i)?;
                let d = p.positive_at("dil", i)?;
                let pad = p.non_negative_at("pad", i)?;
                let out = if kind.family == Conv {
                    if h <= k {
                        return invalid(format!("dims[{i}] > ksize[{i}]"));
                    }
                    match window_out(h, k, s, pad, d) {
                        Some(o) => o,
                        None => return invalid(format!("window fits[{i}]")),
                    }
                } else {
                    let op = p.non_negative_at("outpad", i)?;
                    if op >= s {
                        return invalid(format!("outpad[{i}] < stride[{i}]"));
                    }
                    let o = (h - 1) * s - 2 * pad + d * (k - 1) + op + 1;
                    if o < 1 {
                        return invalid(format!("outdims[{i}] >= 1"));
                    }
                    o
                };
                shape.push(out);
            }
            shape
        }
        MaxPool | AvgPool | LPPool => {
            let mut shape = vec![p.positive("batch")?, p.positive("inch")?];
            if kind.family == LPPool {
                let norm = p.get("norm")?;
                if !(1..=6).contains(&norm) {
                    return invalid("norm in [1, 6]");
                }
            }
            for i in 0..n {
                let h = p.positive_at("dims", i)?;
                let k = p.positive_at("ksize", i)?;
                let s = p.positive_at("stride", i)?;
                let pad = p.non_negative_at("pad", i)?;
                let d = if kind.family == MaxPool {
                    p.positive_at("dil", i)?
                } else {
                    1
                };
                if kind.family == LPPool && pad != 0 {
                    return invalid(format!("pad[{i}] = 0"));
                }
                if kind.family == AvgPool && n == 3 && k > h {
                    return invalid(format!("ksize[{i}] <= dims[{i}]"));
                }
                if 2 * pad > k {
                    return invalid(format!("2*pad[{i}] <= ksize[{i}]"));
                }
                match window_out(h, k, s, pad, d) {
                    Some(o) => shape.push(o),
                    None => return invalid(format!("window fits[{i}]")),
                }
            }
            shape
        }
        FractionalMaxPool => {
            let mut shape = vec![p.positive("batch")?, p.positive("inch")?];
            for i in 0..n {
                let h = p.positive_at("dims", i)?;
                let k = p.positive_at("ksize", i)?;
                let o = p.positive_at("outdims", i)?;
                if o >= h {
                    return invalid(format!("outdims[{i}] < dims[{i}]"));
                }
                let slack = if n == 3 { 0 } else { 1 };
                if o + k > h + slack {
                    return invalid(format!("ksize[{i}] fits"));
                }
                shape.push(o);
            }
            shape
        }
        AdaptiveAvgPool | AdaptiveMaxPool => {
            let mut shape = vec![p.positive("batch")?, p.positive("inch")?];
            for i in 0..n {
                p.positive_at("dims", i)?;
                shape.push(p.positive_at("outdims", i)?);
            }
            shape
        }
        ReflectionPad | ReplicationPad | ConstantPad | CircularPad | ZeroPad => {
            let mut shape = vec![p.positive("batch")?, p.positive("inch")?];
            for i in 0..n {
                let h = p.positive_at("dims", i)?;
                let l = p.non_negative_at("padl", i)?;
                let r = p.non_negative_at("padr", i)?;
                match kind.family {
                    ReflectionPad if l >= h => return invalid(format!("padl[{i}] < dims[{i}]")),
                    ReflectionPad if r >= h => return invalid(format!("padr[{i}] < dims[{i}]")),
                    CircularPad if l > h => return invalid(format!("padl[{i}] <= dims[{i}]")),
                    CircularPad if r > h => return invalid(format!("padr[{i}] <= dims[{i}]")),
                    _ => {}
                }
                shape.push(h + l + r);
            }
            shape
        }
        ElemUnary => {
            opcode(&p, UNARY_OPCODES.len())?;
            (0..n)
                .map(|i| p.positive_at("dims", i))
                .collect::<Result<_, _>>()?
        }
        ElemBinary => {
            opcode(&p, BINARY_OPCODES.len())?;
            let mut shape = Vec::with_capacity(n);
            for i in 0..n {
                let a = p.positive_at("dims", i)?;
                let b = p.positive_at("dims2", i)?;
                shape.push(match (a, b) {
                    _ if a == b => a,
                    (1, _) => b,
                    (_, 1) => a,
                    _ => return invalid(format!("broadcast[{i}]")),
                });
            }
            shape
        }
        MatMul | BMM => {
            let lhs: Vec<Value> = (0..n)
                .map(|i| p.positive_at("dims", i))
                .collect::<Result<_, _>>()?;
            let rhs: Vec<Value> = (0..n)
                .map(|i| p.positive_at("dims2", i))
                .collect::<Result<_, _>>()?;
            if lhs[n - 1] != rhs[n - 2] {
                return invalid("inner dims agree");
            }
            let mut shape = Vec::with_capacity(n);
            if kind.family == BMM {
                if lhs[0] != rhs[0] {
                    return invalid("batch dims agree");
                }
                shape.push(lhs[0]);
            }
            shape.push(lhs[n - 2]);
            shape.push(rhs[n - 1]);
            shape
        }
        Concat => {
            let mut shape: Vec<Value> = (0..n)
                .map(|i| p.positive_at("dims", i))
                .collect::<Result<_, _>>()?;
            let axis = p.get("axis")?;
            let count = p.get("count")?;
            if !(0..n as Value).contains(&axis) {
                return invalid("axis in range");
            }
            if !(2..=MAX_CONCAT_INPUTS as Value).contains(&count) {
                return invalid("count in [2, 4]");
            }
            for j in 0..MAX_CONCAT_INPUTS - 1 {
                let sz = p.at("catsz", j)?;
                let active = (j as Value) < count - 1;
                if active && sz < 1 {
                    return invalid(format!("tensor {} present", j + 2));
                }
                if !active && sz != 0 {
                    return invalid(format!("tensor {} absent", j + 2));
                }
                shape[axis as usize] += sz;
            }
            shape
        }
    };
    Ok(ShapeResult { shape })
}

fn opcode(p: &Params, n: usize) -> Result<(), ShapeError> {
    let op = p.get("opcode")?;
    if !(0..n as Value).contains(&op) {
        return invalid("opcode in range");
    }
    Ok(())
}

/// Output shape as recorded in an assignment's `outdims` (plus batch and
/// channel axes), i.e. what the generator claims the operator produces.
pub fn declared_output_shape(kind: OpKind, a: &Assignment) -> Result<ShapeResult, ShapeError> {
    use OperatorFamily::*;
    let p = Params(a);
    let n = kind.axes();
    let mut shape = Vec::with_capacity(n + 2);
    match kind.family {
        Conv | ConvTranspose => {
            shape.push(p.get("batch")?);
            shape.push(p.get("outch")?);
        }
        f if f.is_spatial() => {
            shape.push(p.get("batch")?);
            shape.push(p.get("inch")?);
        }
        _ => {}
    }
    for i in 0..n {
        shape.push(p.at("outdims", i)?);
    }
    Ok(ShapeResult { shape })
}

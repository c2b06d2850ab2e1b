//! Rendering test cases as standalone Python scripts.
//!
//! Every script allocates seeded inputs, calls one operator on the GPU
//! (or the CPU when `OPFUZZ_DEVICE=cpu`), synchronizes, checks the output
//! shape and prints a single status line: `OK` or `EXCEPTION:<type>`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ops::{output_shape, OpKind, OperatorFamily, BINARY_OPCODES, UNARY_OPCODES};

use super::{map_param, Dtype, FrameworkTarget, MappingError, TestCase};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaterializedScript {
    pub target: FrameworkTarget,
    pub testcase_id: String,
    pub source: String,
    /// Input tensor shapes in the framework's layout.
    pub input_shapes: Vec<Vec<i64>>,
    /// Output shape the script checks for.
    pub output_shape: Vec<i64>,
}

impl MaterializedScript {
    pub fn file_name(&self) -> String {
        format!("{}_{}.py", self.testcase_id, self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MaterializeError {
    #[error("{kind} is not supported on {target}")]
    UnsupportedOnTarget { kind: String, target: FrameworkTarget },
    #[error("{target} cannot express this {kind} case: {reason}")]
    UnsupportedParams {
        kind: String,
        target: FrameworkTarget,
        reason: String,
    },
    #[error("invalid test case: {0}")]
    Invalid(String),
    #[error(transparent)]
    Mapping(#[from] MappingError),
}

/// Renders `tc` as a script for `target`. Output is byte-deterministic.
pub fn materialize(tc: &TestCase, target: FrameworkTarget) -> Result<MaterializedScript, MaterializeError> {
    let kind = tc.kind().map_err(|e| MaterializeError::Invalid(e.to_string()))?;
    if !target.supports(kind.family) {
        return Err(MaterializeError::UnsupportedOnTarget {
            kind: kind.to_string(),
            target,
        });
    }
    let out = output_shape(kind, &tc.to_assignment()).map_err(|e| MaterializeError::Invalid(e.to_string()))?;
    let out: Vec<i64> = out.shape.iter().map(|&v| v as i64).collect();
    let ctx = Ctx { tc, kind, target };
    let (inputs, body) = match target {
        FrameworkTarget::PyTorch => torch_body(&ctx)?,
        FrameworkTarget::TensorFlow => tf_body(&ctx)?,
        FrameworkTarget::PaddlePaddle => paddle_body(&ctx)?,
    };
    let output_shape = if target == FrameworkTarget::TensorFlow && kind.family.is_spatial() {
        channels_last(&out)
    } else {
        out
    };
    let source = render(&ctx, &body, &output_shape);
    Ok(MaterializedScript {
        target,
        testcase_id: tc.id.clone(),
        source,
        input_shapes: inputs,
        output_shape,
    })
}

struct Ctx<'a> {
    tc: &'a TestCase,
    kind: OpKind,
    target: FrameworkTarget,
}

impl Ctx<'_> {
    fn scalar(&self, name: &str) -> Result<i64, MaterializeError> {
        self.tc
            .scalar(name)
            .ok_or_else(|| MaterializeError::Invalid(format!("missing scalar `{name}`")))
    }

    fn axes(&self, name: &str) -> Result<Vec<i64>, MaterializeError> {
        self.tc
            .axes(name)
            .map(<[i64]>::to_vec)
            .ok_or_else(|| MaterializeError::Invalid(format!("missing per-axis `{name}`")))
    }

    fn name(&self, generic: &str) -> Result<&'static str, MaterializeError> {
        Ok(map_param(generic, self.kind.family, self.target)?)
    }

    /// `name=value` with the framework name of `generic`.
    fn kw(&self, generic: &str, value: String) -> Result<String, MaterializeError> {
        Ok(format!("{}={value}", self.name(generic)?))
    }

    fn kw_scalar(&self, generic: &str) -> Result<String, MaterializeError> {
        self.kw(generic, self.scalar(generic)?.to_string())
    }

    fn kw_tuple(&self, generic: &str) -> Result<String, MaterializeError> {
        self.kw(generic, tuple(&self.axes(generic)?))
    }

    fn nd(&self) -> usize {
        self.kind.axes()
    }

    fn unsupported(&self, reason: &str) -> MaterializeError {
        MaterializeError::UnsupportedParams {
            kind: self.kind.to_string(),
            target: self.target,
            reason: reason.to_string(),
        }
    }

    fn nchw(&self) -> Result<Vec<i64>, MaterializeError> {
        let mut s = vec![self.scalar("batch")?, self.scalar("inch")?];
        s.extend(self.axes("dims")?);
        Ok(s)
    }

    fn opcode(&self) -> Result<&'static str, MaterializeError> {
        let op = self.scalar("opcode")?;
        let names: &[&'static str] = if self.kind.family == OperatorFamily::ElemUnary {
            UNARY_OPCODES
        } else {
            BINARY_OPCODES
        };
        usize::try_from(op)
            .ok()
            .and_then(|i| names.get(i).copied())
            .ok_or_else(|| MaterializeError::Invalid(format!("opcode {op} out of range")))
    }

    /// Operand shapes of the element-wise, matrix and concat families.
    fn operands(&self) -> Result<Vec<Vec<i64>>, MaterializeError> {
        use OperatorFamily::*;
        let dims = self.axes("dims")?;
        Ok(match self.kind.family {
            ElemUnary => vec![dims],
            ElemBinary | MatMul | BMM => vec![dims, self.axes("dims2")?],
            Concat => {
                let axis = self.scalar("axis")? as usize;
                let count = self.scalar("count")? as usize;
                let sizes = self.axes("catsz")?;
                let mut out = vec![dims.clone()];
                for &sz in sizes.iter().take(count.saturating_sub(1)) {
                    let mut s = dims.clone();
                    s[axis] = sz;
                    out.push(s);
                }
                out
            }
            _ => unreachable!("spatial family"),
        })
    }
}

fn tuple(v: &[i64]) -> String {
    match v {
        [x] => format!("({x},)"),
        _ => format!("({})", join(v)),
    }
}

fn list(v: &[i64]) -> String {
    format!("[{}]", join(v))
}

fn join(v: &[i64]) -> String {
    v.iter().map(i64::to_string).collect::<Vec<_>>().join(", ")
}

fn channels_last(nchw: &[i64]) -> Vec<i64> {
    let mut s = vec![nchw[0]];
    s.extend(&nchw[2..]);
    s.push(nchw[1]);
    s
}

/// `(l, r)` pairs ordered last axis first, the order torch and paddle use.
fn reversed_pairs(l: &[i64], r: &[i64]) -> Vec<i64> {
    (0..l.len()).rev().flat_map(|i| [l[i], r[i]]).collect()
}

type Body = (Vec<Vec<i64>>, Vec<String>);

fn torch_body(c: &Ctx) -> Result<Body, MaterializeError> {
    use OperatorFamily::*;
    let n = c.nd();
    let f = c.kind.family;
    if !f.is_spatial() {
        return elementwise_body(c, "torch");
    }
    let x = c.nchw()?;
    let mut body = vec![format!("x = make({})", tuple(&x))];
    let module = |name: &str, args: Vec<String>| format!("op = torch.nn.{name}{n}d({})", args.join(", "));
    match f {
        Conv => {
            let args = ["inch", "outch", "ksize", "stride", "pad", "dil", "groups"]
                .iter()
                .map(|p| if matches!(*p, "inch" | "outch" | "groups") { c.kw_scalar(p) } else { c.kw_tuple(p) })
                .collect::<Result<_, _>>()?;
            body.push(module("Conv", args));
            body.push("op = op.to(device=DEVICE, dtype=DTYPE)".into());
        }
        ConvTranspose => {
            let args = ["inch", "outch", "ksize", "stride", "pad", "outpad", "groups", "dil"]
                .iter()
                .map(|p| if matches!(*p, "inch" | "outch" | "groups") { c.kw_scalar(p) } else { c.kw_tuple(p) })
                .collect::<Result<_, _>>()?;
            body.push(module("ConvTranspose", args));
            body.push("op = op.to(device=DEVICE, dtype=DTYPE)".into());
        }
        MaxPool => {
            let args = ["ksize", "stride", "pad", "dil"].iter().map(|p| c.kw_tuple(p)).collect::<Result<_, _>>()?;
            body.push(module("MaxPool", args));
        }
        AvgPool => {
            let args = ["ksize", "stride", "pad"].iter().map(|p| c.kw_tuple(p)).collect::<Result<_, _>>()?;
            body.push(module("AvgPool", args));
        }
        LPPool => {
            // lp_pool1d multiplies by kernel_size, so it must be a plain int.
            let window = |p: &str| match c.nd() {
                1 => c.kw(p, c.axes(p)?[0].to_string()),
                _ => c.kw_tuple(p),
            };
            let args = vec![c.kw_scalar("norm")?, window("ksize")?, window("stride")?];
            body.push(module("LPPool", args));
        }
        FractionalMaxPool => {
            let args = vec![c.kw_tuple("ksize")?, c.kw_tuple("outdims")?];
            body.push(module("FractionalMaxPool", args));
        }
        AdaptiveAvgPool | AdaptiveMaxPool => {
            let name = if f == AdaptiveAvgPool { "AdaptiveAvgPool" } else { "AdaptiveMaxPool" };
            body.push(module(name, vec![c.kw_tuple("outdims")?]));
        }
        ReflectionPad | ReplicationPad | ConstantPad | CircularPad | ZeroPad => {
            let pads = reversed_pairs(&c.axes("padl")?, &c.axes("padr")?);
            let mut args = vec![format!("{}={}", c.name("padl")?, tuple(&pads))];
            if f == ConstantPad {
                args.push("value=1".into());
            }
            body.push(module(f.name(), args));
        }
        _ => unreachable!("elementwise handled above"),
    }
    body.push("y = op(x)".into());
    body.push("if DEVICE == \"cuda\":".into());
    body.push("    torch.cuda.synchronize()".into());
    Ok((vec![x], body))
}

fn elementwise_body(c: &Ctx, fw: &str) -> Result<Body, MaterializeError> {
    use OperatorFamily::*;
    let shapes = c.operands()?;
    let mut body = Vec::new();
    let names = ["a", "b", "c", "d"];
    for (name, s) in names.iter().zip(&shapes) {
        body.push(format!("{name} = make({})", tuple(s)));
    }
    let call = match c.kind.family {
        ElemUnary => format!("{}(a)", unary_fn(c.target, c.opcode()?)),
        ElemBinary => format!("{}(a, b)", binary_fn(c.target, c.opcode()?)),
        MatMul | BMM => match c.target {
            FrameworkTarget::PyTorch if c.kind.family == BMM => "torch.bmm(a, b)".into(),
            FrameworkTarget::PyTorch => "torch.matmul(a, b)".into(),
            FrameworkTarget::TensorFlow => "tf.linalg.matmul(a, b)".into(),
            FrameworkTarget::PaddlePaddle if c.kind.family == BMM => "paddle.bmm(a, b)".into(),
            FrameworkTarget::PaddlePaddle => "paddle.matmul(a, b)".into(),
        },
        Concat => {
            let parts = names[..shapes.len()].join(", ");
            let axis = c.scalar("axis")?;
            let axis_kw = c.name("axis")?;
            match c.target {
                FrameworkTarget::PyTorch => format!("torch.cat([{parts}], {axis_kw}={axis})"),
                FrameworkTarget::TensorFlow => format!("tf.concat([{parts}], {axis_kw}={axis})"),
                FrameworkTarget::PaddlePaddle => format!("paddle.concat([{parts}], {axis_kw}={axis})"),
            }
        }
        _ => unreachable!("spatial family"),
    };
    body.push(format!("y = {call}"));
    match fw {
        "torch" => {
            body.push("if DEVICE == \"cuda\":".into());
            body.push("    torch.cuda.synchronize()".into());
        }
        "paddle" => {
            body.push("if DEVICE == \"gpu\":".into());
            body.push("    paddle.device.cuda.synchronize()".into());
        }
        _ => body.push("tf.test.experimental.sync_devices()".into()),
    }
    Ok((shapes, body))
}

fn unary_fn(target: FrameworkTarget, op: &str) -> String {
    match target {
        FrameworkTarget::PyTorch => match op {
            "elu" | "gelu" => format!("torch.nn.functional.{op}"),
            _ => format!("torch.{op}"),
        },
        FrameworkTarget::TensorFlow => match op {
            "relu" | "elu" | "gelu" => format!("tf.nn.{op}"),
            _ => format!("tf.math.{op}"),
        },
        FrameworkTarget::PaddlePaddle => match op {
            "relu" | "elu" | "gelu" | "sigmoid" => format!("paddle.nn.functional.{op}"),
            _ => format!("paddle.{op}"),
        },
    }
}

fn binary_fn(target: FrameworkTarget, op: &str) -> String {
    match target {
        FrameworkTarget::PyTorch => format!("torch.{op}"),
        FrameworkTarget::TensorFlow => match op {
            "add" => "tf.math.add".into(),
            "sub" => "tf.math.subtract".into(),
            "mul" => "tf.math.multiply".into(),
            "div" => "tf.math.divide".into(),
            "remainder" => "tf.math.floormod".into(),
            "logaddexp" => "tf.experimental.numpy.logaddexp".into(),
            _ => format!("tf.math.{op}"),
        },
        FrameworkTarget::PaddlePaddle => match op {
            "sub" => "paddle.subtract".into(),
            "mul" => "paddle.multiply".into(),
            "div" => "paddle.divide".into(),
            _ => format!("paddle.{op}"),
        },
    }
}

fn tf_body(c: &Ctx) -> Result<Body, MaterializeError> {
    use OperatorFamily::*;
    let n = c.nd();
    let f = c.kind.family;
    if !f.is_spatial() {
        return elementwise_body(c, "tf");
    }
    let x = channels_last(&c.nchw()?);
    let mut body = vec![format!("x = make({})", tuple(&x))];
    let paddings = |l: &[i64], r: &[i64]| {
        let mut rows = vec!["[0, 0]".to_string()];
        rows.extend(l.iter().zip(r).map(|(a, b)| format!("[{a}, {b}]")));
        rows.push("[0, 0]".into());
        format!("[{}]", rows.join(", "))
    };
    let explicit_pad = |body: &mut Vec<String>, value: &str| -> Result<(), MaterializeError> {
        let p = c.axes("pad")?;
        if p.iter().any(|&v| v != 0) {
            body.push(format!("x = tf.pad(x, {}{value})", paddings(&p, &p)));
        }
        Ok(())
    };
    let local = |body: &mut Vec<String>, generic: &str, value: String| -> Result<String, MaterializeError> {
        let name = c.name(generic)?;
        body.push(format!("{name} = {value}"));
        Ok(name.to_string())
    };
    let full = |name: &str| format!("(1, *{name}, 1)");
    match f {
        Conv => {
            explicit_pad(&mut body, "")?;
            let filters = local(&mut body, "outch", c.scalar("outch")?.to_string())?;
            let ksize = local(&mut body, "ksize", tuple(&c.axes("ksize")?))?;
            let strides = local(&mut body, "stride", tuple(&c.axes("stride")?))?;
            let dil = local(&mut body, "dil", tuple(&c.axes("dil")?))?;
            let groups = local(&mut body, "groups", c.scalar("groups")?.to_string())?;
            body.push(format!("w = make({ksize} + (x.shape[-1] // {groups}, {filters}))"));
            let stride_kw = if n == 1 { "stride" } else { "strides" };
            body.push(format!(
                "y = tf.nn.conv{n}d(x, w, {stride_kw}={}, padding=\"VALID\", dilations={})",
                full(&strides),
                full(&dil)
            ));
        }
        ConvTranspose => {
            if c.scalar("groups")? != 1 {
                return Err(c.unsupported("grouped transposed convolution"));
            }
            let (k, s, d, op) = (c.axes("ksize")?, c.axes("stride")?, c.axes("dil")?, c.axes("outpad")?);
            if op.iter().zip(&s).any(|(o, s)| o >= s) {
                return Err(c.unsupported("output padding not below stride"));
            }
            let filters = local(&mut body, "outch", c.scalar("outch")?.to_string())?;
            let ksize = local(&mut body, "ksize", tuple(&k))?;
            let strides = local(&mut body, "stride", tuple(&s))?;
            let dil = local(&mut body, "dil", tuple(&d))?;
            local(&mut body, "outpad", tuple(&op))?;
            let mut shape = vec![x[0]];
            for i in 0..n {
                shape.push((x[i + 1] - 1) * s[i] + d[i] * (k[i] - 1) + 1 + op[i]);
            }
            shape.push(c.scalar("outch")?);
            body.push(format!("w = make({ksize} + ({filters}, x.shape[-1]))"));
            body.push(format!(
                "y = tf.nn.conv_transpose(x, w, {}, strides={}, padding=\"VALID\", dilations={})",
                list(&shape),
                full(&strides),
                full(&dil)
            ));
            let p = c.axes("pad")?;
            if p.iter().any(|&v| v != 0) {
                let crops: Vec<String> = p
                    .iter()
                    .enumerate()
                    .map(|(i, v)| format!("{v}:y.shape[{}] - {v}", i + 1))
                    .collect();
                body.push(format!("y = y[:, {}, :]", crops.join(", ")));
            }
        }
        MaxPool | AvgPool => {
            let value = if f == MaxPool { ", constant_values=DTYPE.min" } else { "" };
            explicit_pad(&mut body, value)?;
            let (k, s) = (c.axes("ksize")?, c.axes("stride")?);
            let dilated = f == MaxPool && c.axes("dil")?.iter().any(|&v| v != 1);
            if dilated {
                // tf.nn.pool only dilates at stride 1; subsample afterwards.
                body.push(format!(
                    "y = tf.nn.pool(x, {}, \"MAX\", strides={}, padding=\"VALID\", dilations={})",
                    tuple(&k),
                    tuple(&[1; 3][..n]),
                    tuple(&c.axes("dil")?)
                ));
                let steps: Vec<String> = s.iter().map(|v| format!("::{v}")).collect();
                body.push(format!("y = y[:, {}, :]", steps.join(", ")));
            } else {
                let func = if f == MaxPool { "max_pool" } else { "avg_pool" };
                body.push(format!(
                    "y = tf.nn.{func}(x, {}, {}, padding=\"VALID\")",
                    c.kw_tuple("ksize")?,
                    c.kw_tuple("stride")?
                ));
            }
        }
        ReflectionPad | ConstantPad | ZeroPad => {
            let p = paddings(&c.axes("padl")?, &c.axes("padr")?);
            let mode = match f {
                ReflectionPad => "mode=\"REFLECT\"",
                ConstantPad => "mode=\"CONSTANT\", constant_values=1",
                _ => "mode=\"CONSTANT\"",
            };
            body.push(format!("y = tf.pad(x, {}={p}, {mode})", c.name("padl")?));
        }
        _ => unreachable!("unsupported families rejected by the mapping table"),
    }
    body.push("tf.test.experimental.sync_devices()".into());
    Ok((vec![x], body))
}

fn paddle_body(c: &Ctx) -> Result<Body, MaterializeError> {
    use OperatorFamily::*;
    let n = c.nd();
    let f = c.kind.family;
    if !f.is_spatial() {
        return elementwise_body(c, "paddle");
    }
    let x = c.nchw()?;
    let mut body = vec![format!("x = make({})", list(&x))];
    let module = |name: &str, args: Vec<String>| format!("op = paddle.nn.{name}({})", args.join(", "));
    match f {
        Conv | ConvTranspose => {
            let order: &[&str] = if f == Conv {
                &["inch", "outch", "ksize", "stride", "pad", "dil", "groups"]
            } else {
                &["inch", "outch", "ksize", "stride", "pad", "outpad", "groups", "dil"]
            };
            let args = order
                .iter()
                .map(|p| {
                    if matches!(*p, "inch" | "outch" | "groups") {
                        c.kw_scalar(p)
                    } else {
                        c.kw(p, list(&c.axes(p)?))
                    }
                })
                .collect::<Result<_, _>>()?;
            let name = if f == Conv { format!("Conv{n}D") } else { format!("Conv{n}DTranspose") };
            body.push(module(&name, args));
        }
        AvgPool => {
            let mut args: Vec<String> = ["ksize", "stride", "pad"]
                .iter()
                .map(|p| c.kw(p, list(&c.axes(p)?)))
                .collect::<Result<_, _>>()?;
            args.push("exclusive=False".into());
            body.push(module(&format!("AvgPool{n}D"), args));
        }
        AdaptiveAvgPool | AdaptiveMaxPool => {
            let name = if f == AdaptiveAvgPool { "AdaptiveAvgPool" } else { "AdaptiveMaxPool" };
            body.push(module(&format!("{name}{n}D"), vec![c.kw("outdims", list(&c.axes("outdims")?))?]));
        }
        ReflectionPad | ReplicationPad | ConstantPad | CircularPad | ZeroPad => {
            let pads = reversed_pairs(&c.axes("padl")?, &c.axes("padr")?);
            let (mode, value) = match f {
                ReflectionPad => ("reflect", "0.0"),
                ReplicationPad => ("replicate", "0.0"),
                CircularPad => ("circular", "0.0"),
                ConstantPad => ("constant", "1.0"),
                _ => ("constant", "0.0"),
            };
            let args = vec![
                format!("{}={}", c.name("padl")?, list(&pads)),
                format!("mode=\"{mode}\""),
                format!("value={value}"),
            ];
            body.push(module(&format!("Pad{n}D"), args));
        }
        _ => unreachable!("unsupported families rejected by the mapping table"),
    }
    body.push("y = op(x)".into());
    body.push("if DEVICE == \"gpu\":".into());
    body.push("    paddle.device.cuda.synchronize()".into());
    Ok((vec![x], body))
}

fn dtype_expr(target: FrameworkTarget, d: Dtype) -> String {
    let name = match d {
        Dtype::F16 => "float16",
        Dtype::F32 => "float32",
        Dtype::F64 => "float64",
        Dtype::I32 => "int32",
        Dtype::I64 => "int64",
    };
    match target {
        FrameworkTarget::PyTorch => format!("torch.{name}"),
        FrameworkTarget::TensorFlow => format!("tf.{name}"),
        FrameworkTarget::PaddlePaddle => format!("\"{name}\""),
    }
}

fn render(c: &Ctx, body: &[String], expected: &[i64]) -> String {
    let tc = c.tc;
    let seed = u32::from_str_radix(&tc.id.get(..8).unwrap_or("0"), 16).unwrap_or(0);
    let mut s = String::new();
    let mut line = |l: &str| {
        s.push_str(l);
        s.push('\n');
    };
    line(&format!("# opfuzz test case {}: {} ({})", tc.id, c.kind, tc.dtype));
    line("import os");
    line("import sys");
    line("");
    let (import, device, make, prelude): (&str, &str, &[&str], &[&str]) = match c.target {
        FrameworkTarget::PyTorch => (
            "import torch",
            "DEVICE = \"cuda\" if os.environ.get(\"OPFUZZ_DEVICE\", \"gpu\") == \"gpu\" else \"cpu\"",
            &[
                "def make(shape):",
                "    if DTYPE.is_floating_point:",
                "        return torch.randn(shape, dtype=DTYPE, device=DEVICE)",
                "    return torch.randint(-8, 8, shape, dtype=DTYPE, device=DEVICE)",
            ],
            &["torch.manual_seed(SEED)"],
        ),
        FrameworkTarget::TensorFlow => (
            "import tensorflow as tf",
            "DEVICE = \"/GPU:0\" if os.environ.get(\"OPFUZZ_DEVICE\", \"gpu\") == \"gpu\" else \"/CPU:0\"",
            &[
                "def make(shape):",
                "    if DTYPE.is_floating:",
                "        return tf.random.normal(shape, dtype=DTYPE)",
                "    return tf.random.uniform(shape, minval=-8, maxval=8, dtype=DTYPE)",
            ],
            &["tf.random.set_seed(SEED)"],
        ),
        FrameworkTarget::PaddlePaddle => (
            "import paddle",
            "DEVICE = \"gpu\" if os.environ.get(\"OPFUZZ_DEVICE\", \"gpu\") == \"gpu\" else \"cpu\"",
            &[
                "def make(shape):",
                "    if DTYPE.startswith(\"float\"):",
                "        return paddle.randn(shape, dtype=DTYPE)",
                "    return paddle.randint(-8, 8, shape, dtype=DTYPE)",
            ],
            &[
                "paddle.set_device(DEVICE)",
                "paddle.seed(SEED)",
                "if DTYPE.startswith(\"float\"):",
                "    paddle.set_default_dtype(DTYPE)",
            ],
        ),
    };
    line(import);
    line("");
    line(&format!("SEED = {seed}"));
    line(device);
    line(&format!("DTYPE = {}", dtype_expr(c.target, tc.dtype)));
    line(&format!("EXPECTED = {}", tuple(expected)));
    line("");
    line("");
    for l in make {
        line(l);
    }
    line("");
    line("");
    line("def run():");
    for l in prelude {
        line(&format!("    {l}"));
    }
    let indent = if c.target == FrameworkTarget::TensorFlow {
        line("    with tf.device(DEVICE):");
        "        "
    } else {
        "    "
    };
    for l in body {
        line(&format!("{indent}{l}"));
    }
    line("    return y");
    line("");
    line("");
    for l in [
        "def main():",
        "    try:",
        "        y = run()",
        "        shape = tuple(y.shape)",
        "        if shape != EXPECTED:",
        "            raise AssertionError(f\"output shape {shape}, expected {EXPECTED}\")",
        "    except Exception as e:",
        "        print(f\"EXCEPTION:{type(e).__name__}\", flush=True)",
        "        return 1",
        "    print(\"OK\", flush=True)",
        "    return 0",
        "",
        "",
        "if __name__ == \"__main__\":",
        "    sys.exit(main())",
    ] {
        line(l);
    }
    s
}

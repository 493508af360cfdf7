//! Wengert-list reverse-mode differentiation.
//!
//! Every operation on a [`Var`] appends one record to its [`Tape`]. Records are
//! appended in evaluation order, so the tape is topologically sorted by
//! construction and [`Tape::backward`] is a single reverse sweep.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use crate::error::{shape_err, Result, TensorError};
use crate::tensor::{broadcast_binary, matmul, reduce_to_shape, Tensor};

pub type NodeId = usize;

/// Elementwise function with its derivative, for ops outside the built-in set
/// (trigonometric basis functions, Bessel functions).
pub trait ElementwiseFn {
    fn name(&self) -> &'static str;
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
}

/// Multi-input operation with a hand-written vector-Jacobian product.
pub trait CustomOp {
    fn name(&self) -> &'static str;
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor>;
    /// Gradients w.r.t. each input, given the upstream gradient of the output.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad_out: &Tensor) -> Result<Vec<Tensor>>;
}

#[derive(Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Neg(NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    MatMul(NodeId, NodeId),
    Concat { inputs: Vec<NodeId>, axis: usize },
    Slice { input: NodeId, axis: usize, start: usize },
    Reshape(NodeId),
    Silu(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Pow(NodeId, f64),
    Sum(NodeId),
    SumAxis { input: NodeId, axis: usize },
    Norm { input: NodeId },
    GatherRows { input: NodeId, index: Rc<[usize]> },
    ScatterSum { input: NodeId, index: Rc<[usize]> },
    Map { input: NodeId, f: Rc<dyn ElementwiseFn> },
    Custom { inputs: Vec<NodeId>, op: Rc<dyn CustomOp> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Neg(_) => "neg",
            Op::Scale(..) => "scale",
            Op::AddScalar(_) => "add_scalar",
            Op::MatMul(..) => "matmul",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::Reshape(_) => "reshape",
            Op::Silu(_) => "silu",
            Op::Tanh(_) => "tanh",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Pow(..) => "pow",
            Op::Sum(_) => "sum",
            Op::SumAxis { .. } => "sum_axis",
            Op::Norm { .. } => "norm",
            Op::GatherRows { .. } => "gather_rows",
            Op::ScatterSum { .. } => "scatter_sum",
            Op::Map { f, .. } => f.name(),
            Op::Custom { op, .. } => op.name(),
        }
    }
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of operations. One tape per execution context.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("len", &self.len()).finish()
    }
}

/// Handle to a recorded tensor.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: NodeId,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

/// Gradients produced by one backward sweep, keyed by leaf id.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    by_leaf: HashMap<NodeId, Tensor>,
}

impl Gradients {
    pub fn get(&self, var: &Var<'_>) -> Option<&Tensor> {
        self.by_leaf.get(&var.id)
    }

    pub fn wrt(&self, var: &Var<'_>) -> Result<&Tensor> {
        self.get(var).ok_or_else(|| {
            TensorError::Contract(format!("node {} is not a requires_grad leaf", var.id))
        })
    }

    pub fn len(&self) -> usize {
        self.by_leaf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_leaf.is_empty()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Result<Var<'_>> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: op.name() });
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Ok(Var {
            tape: self,
            id: nodes.len() - 1,
        })
    }

    /// A leaf that receives a gradient.
    pub fn var(&self, value: Tensor) -> Result<Var<'_>> {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf held constant.
    pub fn constant(&self, value: Tensor) -> Result<Var<'_>> {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&self, value: f64) -> Result<Var<'_>> {
        self.constant(Tensor::scalar(value))
    }

    fn value(&self, id: NodeId) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    fn derived(&self, value: Tensor, op: Op, inputs: &[NodeId]) -> Result<Var<'_>> {
        let rg = inputs.iter().any(|&i| self.requires_grad(i));
        self.push(value, op, rg)
    }

    /// Records a custom operation.
    pub fn custom<'t>(&'t self, inputs: &[Var<'t>], op: Rc<dyn CustomOp>) -> Result<Var<'t>> {
        let values: Vec<Rc<Tensor>> = inputs.iter().map(|v| self.value(v.id)).collect();
        let refs: Vec<&Tensor> = values.iter().map(|v| v.as_ref()).collect();
        let out = op.forward(&refs)?;
        let ids: Vec<NodeId> = inputs.iter().map(|v| v.id).collect();
        self.derived(out, Op::Custom { inputs: ids.clone(), op }, &ids)
    }

    /// Reverse sweep from a scalar root. Every `requires_grad` leaf recorded on
    /// this tape gets an entry, zero-filled when it did not reach the root.
    pub fn backward(&self, root: &Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(root.tape, self) {
            return Err(TensorError::Contract("root belongs to another tape".into()));
        }
        let nodes = self.nodes.borrow();
        let root_val = &nodes[root.id].value;
        if !root_val.is_scalar() {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                root_val.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.id + 1];
        grads[root.id] = Some(Tensor::ones(root_val.shape()));

        for id in (0..=root.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if let Op::Leaf = node.op {
                grads[id] = Some(g);
                continue;
            }
            if !node.requires_grad {
                continue;
            }
            if !g.is_finite() {
                return Err(TensorError::NonFinite { op: node.op.name() });
            }
            for (input, gi) in vjp(&nodes, node, &g)? {
                if !nodes[input].requires_grad {
                    continue;
                }
                match &mut grads[input] {
                    Some(acc) => acc.add_assign(&gi)?,
                    slot @ None => *slot = Some(gi),
                }
            }
        }

        let mut by_leaf = HashMap::new();
        for (id, node) in nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.requires_grad {
                let g = grads
                    .get_mut(id)
                    .and_then(Option::take)
                    .unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                if !g.is_finite() {
                    return Err(TensorError::NonFinite { op: "backward" });
                }
                by_leaf.insert(id, g);
            }
        }
        Ok(Gradients { by_leaf })
    }
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

/// Per-op vector-Jacobian products: `(input id, gradient w.r.t. input)`.
fn vjp(nodes: &[Node], node: &Node, g: &Tensor) -> Result<Vec<(NodeId, Tensor)>> {
    let val = |id: NodeId| -> &Tensor { nodes[id].value.as_ref() };
    let out = node.value.as_ref();
    Ok(match &node.op {
        Op::Leaf => vec![],
        Op::Add(a, b) => vec![
            (*a, reduce_to_shape(g, val(*a).shape())),
            (*b, reduce_to_shape(g, val(*b).shape())),
        ],
        Op::Sub(a, b) => vec![
            (*a, reduce_to_shape(g, val(*a).shape())),
            (*b, reduce_to_shape(&g.scale(-1.0), val(*b).shape())),
        ],
        Op::Mul(a, b) => {
            let ga = broadcast_binary(g, val(*b), "mul", |x, y| x * y)?;
            let gb = broadcast_binary(g, val(*a), "mul", |x, y| x * y)?;
            vec![
                (*a, reduce_to_shape(&ga, val(*a).shape())),
                (*b, reduce_to_shape(&gb, val(*b).shape())),
            ]
        }
        Op::Div(a, b) => {
            let ga = broadcast_binary(g, val(*b), "div", |x, y| x / y)?;
            // d(a/b)/db = -(a/b)/b
            let q = broadcast_binary(out, val(*b), "div", |x, y| -x / y)?;
            let gb = broadcast_binary(g, &q, "div", |x, y| x * y)?;
            vec![
                (*a, reduce_to_shape(&ga, val(*a).shape())),
                (*b, reduce_to_shape(&gb, val(*b).shape())),
            ]
        }
        Op::Neg(a) => vec![(*a, g.scale(-1.0))],
        Op::Scale(a, s) => vec![(*a, g.scale(*s))],
        Op::AddScalar(a) => vec![(*a, g.clone())],
        Op::MatMul(a, b) => vec![
            (*a, matmul(g, false, val(*b), true)?),
            (*b, matmul(val(*a), true, g, false)?),
        ],
        Op::Concat { inputs, axis } => {
            let mut start = 0;
            let mut res = Vec::with_capacity(inputs.len());
            for &i in inputs {
                let len = val(i).shape()[*axis];
                res.push((i, slice_axis(g, *axis, start, len)?));
                start += len;
            }
            res
        }
        Op::Slice { input, axis, start } => {
            let src = val(*input);
            let mut gi = Tensor::zeros(src.shape());
            let (outer, dim, inner) = split_axis(src.shape(), *axis);
            let len = g.shape()[*axis];
            let gv = g.values();
            let dst = gi.values_mut();
            for o in 0..outer {
                for k in 0..len {
                    let s = (o * len + k) * inner;
                    let d = (o * dim + start + k) * inner;
                    dst[d..d + inner].copy_from_slice(&gv[s..s + inner]);
                }
            }
            vec![(*input, gi)]
        }
        Op::Reshape(a) => vec![(*a, g.reshape(val(*a).shape())?)],
        Op::Silu(a) => {
            let x = val(*a);
            vec![(*a, broadcast_binary(g, x, "silu", |gv, xv| gv * silu_grad(xv))?)]
        }
        Op::Tanh(a) => vec![(*a, broadcast_binary(g, out, "tanh", |gv, t| gv * (1.0 - t * t))?)],
        Op::Exp(a) => vec![(*a, broadcast_binary(g, out, "exp", |gv, e| gv * e)?)],
        Op::Log(a) => vec![(*a, broadcast_binary(g, val(*a), "log", |gv, x| gv / x)?)],
        Op::Pow(a, p) => {
            let p = *p;
            vec![(
                *a,
                broadcast_binary(g, val(*a), "pow", |gv, x| gv * p * x.powf(p - 1.0))?,
            )]
        }
        Op::Sum(a) => {
            let s = g.values()[0];
            vec![(*a, Tensor::full(val(*a).shape(), s))]
        }
        Op::SumAxis { input, axis } => {
            let shape = val(*input).shape().to_vec();
            let mut keep = shape.clone();
            keep[*axis] = 1;
            let gk = g.reshape(&keep)?;
            let gi = broadcast_binary(&Tensor::zeros(&shape), &gk, "sum_axis", |_, y| y)?;
            vec![(*input, gi)]
        }
        Op::Norm { input } => {
            // out = sqrt(sum x^2 + eps) over the last axis
            let x = val(*input);
            let w = *x.shape().last().unwrap_or(&1);
            let mut gi = vec![0.0; x.len()];
            for (r, chunk) in x.values().chunks(w.max(1)).enumerate() {
                let scale = g.values()[r] / out.values()[r];
                for (k, &xv) in chunk.iter().enumerate() {
                    gi[r * w + k] = scale * xv;
                }
            }
            vec![(*input, Tensor::new_unchecked(x.shape().to_vec(), gi))]
        }
        Op::GatherRows { input, index } => {
            let src = val(*input);
            let w = src.row_width();
            let mut gi = vec![0.0; src.len()];
            for (e, &r) in index.iter().enumerate() {
                let row = &g.values()[e * w..(e + 1) * w];
                for (d, v) in gi[r * w..(r + 1) * w].iter_mut().zip(row) {
                    *d += v;
                }
            }
            vec![(*input, Tensor::new_unchecked(src.shape().to_vec(), gi))]
        }
        Op::ScatterSum { input, index } => {
            let src = val(*input);
            let w = src.row_width();
            let mut gi = vec![0.0; src.len()];
            for (e, &s) in index.iter().enumerate() {
                gi[e * w..(e + 1) * w].copy_from_slice(&g.values()[s * w..(s + 1) * w]);
            }
            vec![(*input, Tensor::new_unchecked(src.shape().to_vec(), gi))]
        }
        Op::Map { input, f } => {
            let x = val(*input);
            vec![(*input, broadcast_binary(g, x, "map", |gv, xv| gv * f.derivative(xv))?)]
        }
        Op::Custom { inputs, op } => {
            let refs: Vec<&Tensor> = inputs.iter().map(|&i| val(i)).collect();
            let gs = op.backward(&refs, out, g)?;
            if gs.len() != inputs.len() {
                return Err(TensorError::Contract(format!(
                    "{} returned {} gradients for {} inputs",
                    op.name(),
                    gs.len(),
                    inputs.len()
                )));
            }
            for (gi, r) in gs.iter().zip(&refs) {
                if gi.shape() != r.shape() {
                    return Err(shape_err(op.name(), "gradient shape differs from input"));
                }
            }
            inputs.iter().copied().zip(gs).collect()
        }
    })
}

/// `(outer, dim, inner)` extents around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn slice_axis(t: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    let shape = t.shape();
    if axis >= shape.len() || start + len > shape[axis] {
        return Err(shape_err(
            "slice",
            format!("[{start}, {}) on axis {axis} of {shape:?}", start + len),
        ));
    }
    let (outer, dim, inner) = split_axis(shape, axis);
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let s = (o * dim + start) * inner;
        out.extend_from_slice(&t.values()[s..s + len * inner]);
    }
    let mut new_shape = shape.to_vec();
    new_shape[axis] = len;
    Ok(Tensor::new_unchecked(new_shape, out))
}

fn check_index(op: &'static str, index: &[usize], bound: usize) -> Result<()> {
    match index.iter().find(|&&i| i >= bound) {
        Some(&i) => Err(TensorError::Index { op, index: i, bound }),
        None => Ok(()),
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires_grad(self.id)
    }

    /// Scalar value; errors unless the tensor holds exactly one element.
    pub fn item(&self) -> Result<f64> {
        self.value().item()
    }

    fn same_tape(&self, other: &Var<'t>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(TensorError::Contract("operands live on different tapes".into()))
        }
    }

    fn binary(
        &self,
        other: &Var<'t>,
        name: &'static str,
        make: fn(NodeId, NodeId) -> Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var<'t>> {
        self.same_tape(other)?;
        let out = broadcast_binary(&self.value(), &other.value(), name, f)?;
        self.tape.derived(out, make(self.id, other.id), &[self.id, other.id])
    }

    fn unary(&self, op: Op, f: impl Fn(f64) -> f64) -> Result<Var<'t>> {
        let out = self.value().map(f);
        self.tape.derived(out, op, &[self.id])
    }

    pub fn add(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "add", Op::Add, |a, b| a + b)
    }

    pub fn sub(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "sub", Op::Sub, |a, b| a - b)
    }

    pub fn mul(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "mul", Op::Mul, |a, b| a * b)
    }

    pub fn div(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "div", Op::Div, |a, b| a / b)
    }

    pub fn neg(&self) -> Result<Var<'t>> {
        self.unary(Op::Neg(self.id), |x| -x)
    }

    pub fn scale(&self, s: f64) -> Result<Var<'t>> {
        self.unary(Op::Scale(self.id, s), |x| x * s)
    }

    pub fn add_scalar(&self, s: f64) -> Result<Var<'t>> {
        self.unary(Op::AddScalar(self.id), |x| x + s)
    }

    pub fn matmul(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(other)?;
        let out = matmul(&self.value(), false, &other.value(), false)?;
        self.tape
            .derived(out, Op::MatMul(self.id, other.id), &[self.id, other.id])
    }

    pub fn silu(&self) -> Result<Var<'t>> {
        self.unary(Op::Silu(self.id), silu)
    }

    pub fn tanh(&self) -> Result<Var<'t>> {
        self.unary(Op::Tanh(self.id), f64::tanh)
    }

    pub fn exp(&self) -> Result<Var<'t>> {
        self.unary(Op::Exp(self.id), f64::exp)
    }

    pub fn log(&self) -> Result<Var<'t>> {
        self.unary(Op::Log(self.id), f64::ln)
    }

    /// Elementwise `x^p` for a constant exponent.
    pub fn powf(&self, p: f64) -> Result<Var<'t>> {
        self.unary(Op::Pow(self.id, p), |x| x.powf(p))
    }

    pub fn map(&self, f: Rc<dyn ElementwiseFn>) -> Result<Var<'t>> {
        let out = self.value().map(|x| f.value(x));
        self.tape.derived(out, Op::Map { input: self.id, f }, &[self.id])
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&self) -> Result<Var<'t>> {
        let s = self.value().sum();
        self.tape.derived(Tensor::scalar(s), Op::Sum(self.id), &[self.id])
    }

    pub fn mean(&self) -> Result<Var<'t>> {
        let n = self.value().len();
        if n == 0 {
            return Err(TensorError::Contract("mean of empty tensor".into()));
        }
        self.sum()?.scale(1.0 / n as f64)
    }

    /// Sums over `axis`, removing it from the shape.
    pub fn sum_axis(&self, axis: usize) -> Result<Var<'t>> {
        let x = self.value();
        let shape = x.shape();
        if axis >= shape.len() {
            return Err(shape_err("sum_axis", format!("axis {axis} of {shape:?}")));
        }
        let (outer, dim, inner) = split_axis(shape, axis);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..dim {
                let s = (o * dim + k) * inner;
                for i in 0..inner {
                    out[o * inner + i] += x.values()[s + i];
                }
            }
        }
        let mut new_shape = shape.to_vec();
        new_shape.remove(axis);
        self.tape.derived(
            Tensor::new_unchecked(new_shape, out),
            Op::SumAxis { input: self.id, axis },
            &[self.id],
        )
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Var<'t>> {
        let dim = self.shape().get(axis).copied().unwrap_or(0);
        if dim == 0 {
            return Err(shape_err("mean_axis", "empty axis"));
        }
        self.sum_axis(axis)?.scale(1.0 / dim as f64)
    }

    /// Euclidean norm over the last axis, `sqrt(sum x^2 + eps)`. A positive
    /// `eps` keeps the gradient finite at the origin.
    pub fn norm(&self, eps: f64) -> Result<Var<'t>> {
        let x = self.value();
        let shape = x.shape();
        let Some((&w, lead)) = shape.split_last() else {
            return Err(shape_err("norm", "rank-0 input"));
        };
        let out: Vec<f64> = x
            .values()
            .chunks(w.max(1))
            .map(|c| (c.iter().map(|v| v * v).sum::<f64>() + eps).sqrt())
            .collect();
        let out = Tensor::new_unchecked(lead.to_vec(), if w == 0 { vec![] } else { out });
        self.tape.derived(out, Op::Norm { input: self.id }, &[self.id])
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t>> {
        let out = self.value().reshape(shape)?;
        self.tape.derived(out, Op::Reshape(self.id), &[self.id])
    }

    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Var<'t>> {
        let out = slice_axis(&self.value(), axis, start, len)?;
        self.tape.derived(
            out,
            Op::Slice {
                input: self.id,
                axis,
                start,
            },
            &[self.id],
        )
    }

    /// Concatenates along `axis`; all other dims must agree.
    pub fn concat(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| shape_err("concat", "no inputs"))?;
        let tape = first.tape;
        let values: Vec<Rc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        let base = values[0].shape().to_vec();
        if axis >= base.len() {
            return Err(shape_err("concat", format!("axis {axis} of {base:?}")));
        }
        let mut total = 0;
        for (p, v) in parts.iter().zip(&values) {
            first.same_tape(p)?;
            let s = v.shape();
            if s.len() != base.len()
                || s.iter().enumerate().any(|(k, &d)| k != axis && d != base[k])
            {
                return Err(shape_err("concat", format!("{base:?} vs {s:?}")));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in &values {
                let len = v.shape()[axis] * inner;
                out.extend_from_slice(&v.values()[o * len..(o + 1) * len]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let ids: Vec<NodeId> = parts.iter().map(|p| p.id).collect();
        tape.derived(
            Tensor::new_unchecked(shape, out),
            Op::Concat {
                inputs: ids.clone(),
                axis,
            },
            &ids,
        )
    }

    /// Selects rows (first-axis slices) by index; rows may repeat.
    pub fn gather_rows(&self, index: Rc<[usize]>) -> Result<Var<'t>> {
        let x = self.value();
        check_index("gather_rows", &index, x.rows())?;
        let w = x.row_width();
        let mut out = Vec::with_capacity(index.len() * w);
        for &r in index.iter() {
            out.extend_from_slice(&x.values()[r * w..(r + 1) * w]);
        }
        let mut shape = x.shape().to_vec();
        if shape.is_empty() {
            return Err(shape_err("gather_rows", "rank-0 input"));
        }
        shape[0] = index.len();
        self.tape.derived(
            Tensor::new_unchecked(shape, out),
            Op::GatherRows {
                input: self.id,
                index,
            },
            &[self.id],
        )
    }

    /// Row `s` of the result is the sum of input rows whose segment id is `s`.
    pub fn scatter_sum(&self, segment_ids: Rc<[usize]>, num_segments: usize) -> Result<Var<'t>> {
        let x = self.value();
        if x.rank() == 0 || segment_ids.len() != x.rows() {
            return Err(shape_err(
                "scatter_sum",
                format!("{} segment ids for shape {:?}", segment_ids.len(), x.shape()),
            ));
        }
        check_index("scatter_sum", &segment_ids, num_segments)?;
        let w = x.row_width();
        let mut out = vec![0.0; num_segments * w];
        for (e, &s) in segment_ids.iter().enumerate() {
            for (d, v) in out[s * w..(s + 1) * w].iter_mut().zip(&x.values()[e * w..(e + 1) * w]) {
                *d += v;
            }
        }
        let mut shape = x.shape().to_vec();
        shape[0] = num_segments;
        self.tape.derived(
            Tensor::new_unchecked(shape, out),
            Op::ScatterSum {
                input: self.id,
                index: segment_ids,
            },
            &[self.id],
        )
    }

    /// Same value, cut from the gradient graph.
    pub fn detach(&self) -> Result<Var<'t>> {
        self.tape.constant(self.value().as_ref().clone())
    }
}

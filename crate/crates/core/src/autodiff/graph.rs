use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{self, ConvGeom};
use super::{Tensor, SQRT_FLOOR};
use crate::{Error, Result};

/// Handle to a node inside one [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input(String),
    Constant(Tensor),
    MatMul,
    AddBias,
    Add,
    Sub,
    Mul,
    Scale(f64),
    AddScalar(f64),
    Relu,
    Square,
    Sqrt { floor: f64 },
    Reciprocal,
    SumRows,
    Sum,
    Mean,
    LogSumExpRows,
    PickColumns(Vec<usize>),
    GatherRows(Vec<usize>),
    Conv2d,
    MeanPool2d(usize),
    Flatten,
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Constant(_) => "constant",
            Op::MatMul => "matmul",
            Op::AddBias => "add_bias",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Scale(_) => "scale",
            Op::AddScalar(_) => "add_scalar",
            Op::Relu => "relu",
            Op::Square => "square",
            Op::Sqrt { .. } => "sqrt",
            Op::Reciprocal => "reciprocal",
            Op::SumRows => "sum_rows",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::LogSumExpRows => "logsumexp_rows",
            Op::PickColumns(_) => "pick_columns",
            Op::GatherRows(_) => "gather_rows",
            Op::Conv2d => "conv2d",
            Op::MeanPool2d(_) => "mean_pool2d",
            Op::Flatten => "flatten",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    inputs: Vec<NodeId>,
}

/// Append-only computation graph. Node inputs always precede the node, so
/// insertion order is a topological order and the graph is acyclic.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    outputs: BTreeMap<String, NodeId>,
}

/// Named tensors bound to the graph's input nodes.
#[derive(Debug, Clone, Default)]
pub struct Bindings<'a> {
    map: BTreeMap<&'a str, &'a Tensor>,
}

impl<'a> Bindings<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, name: &'a str, tensor: &'a Tensor) -> &mut Self {
        self.map.insert(name, tensor);
        self
    }

    pub fn with(mut self, name: &'a str, tensor: &'a Tensor) -> Self {
        self.map.insert(name, tensor);
        self
    }

    pub fn get(&self, name: &str) -> Option<&'a Tensor> {
        self.map.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'a str, &'a Tensor)> + '_ {
        self.map.iter().map(|(k, v)| (*k, *v))
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, inputs: &[NodeId]) -> NodeId {
        debug_assert!(inputs.iter().all(|i| i.0 < self.nodes.len()));
        self.nodes.push(Node {
            op,
            inputs: inputs.to_vec(),
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Named input. Requesting an existing name returns the same node.
    pub fn input(&mut self, name: &str) -> NodeId {
        if let Some(pos) = self
            .nodes
            .iter()
            .position(|n| matches!(&n.op, Op::Input(existing) if existing == name))
        {
            return NodeId(pos);
        }
        self.push(Op::Input(name.to_string()), &[])
    }

    /// Names of all input nodes, in insertion order.
    pub fn input_names(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.op {
                Op::Input(name) => Some(name.as_str()),
                _ => None,
            })
            .collect()
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        let mut value = value;
        value.set_requires_grad(false);
        self.push(Op::Constant(value), &[])
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::MatMul, &[a, b])
    }

    /// Adds a length-`n` bias to every row of an `m×n` matrix.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        self.push(Op::AddBias, &[x, bias])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul, &[a, b])
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        self.push(Op::Scale(factor), &[x])
    }

    pub fn add_scalar(&mut self, x: NodeId, value: f64) -> NodeId {
        self.push(Op::AddScalar(value), &[x])
    }

    /// `max(x, 0)`; the subgradient at 0 is 0.
    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Relu, &[x])
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Square, &[x])
    }

    /// `sqrt(max(x, 1e-12))`.
    pub fn sqrt(&mut self, x: NodeId) -> NodeId {
        self.sqrt_floored(x, SQRT_FLOOR)
    }

    pub fn sqrt_floored(&mut self, x: NodeId, floor: f64) -> NodeId {
        self.push(Op::Sqrt { floor }, &[x])
    }

    pub fn reciprocal(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Reciprocal, &[x])
    }

    /// `m×n → m`.
    pub fn sum_rows(&mut self, x: NodeId) -> NodeId {
        self.push(Op::SumRows, &[x])
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sum, &[x])
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Mean, &[x])
    }

    /// Row-wise max-shifted log-sum-exp, `m×n → m`.
    pub fn logsumexp_rows(&mut self, x: NodeId) -> NodeId {
        self.push(Op::LogSumExpRows, &[x])
    }

    /// Picks `x[i, columns[i]]` for every row, `m×n → m`.
    pub fn pick_columns(&mut self, x: NodeId, columns: Vec<usize>) -> NodeId {
        self.push(Op::PickColumns(columns), &[x])
    }

    /// Selects rows of an `m×n` matrix, repeating as requested.
    pub fn gather_rows(&mut self, x: NodeId, rows: Vec<usize>) -> NodeId {
        self.push(Op::GatherRows(rows), &[x])
    }

    /// Stride-1, same-padded convolution of `B×C×H×W` by `O×C×k×k` (odd k)
    /// plus a length-`O` bias.
    pub fn conv2d(&mut self, x: NodeId, weight: NodeId, bias: NodeId) -> NodeId {
        self.push(Op::Conv2d, &[x, weight, bias])
    }

    pub fn mean_pool2d(&mut self, x: NodeId, size: usize) -> NodeId {
        self.push(Op::MeanPool2d(size), &[x])
    }

    /// `B×… → B×(…)`.
    pub fn flatten(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Flatten, &[x])
    }

    pub fn set_output(&mut self, name: &str, node: NodeId) {
        self.outputs.insert(name.to_string(), node);
    }

    pub fn output_node(&self, name: &str) -> Option<NodeId> {
        self.outputs.get(name).copied()
    }

    pub fn evaluate(&self, bindings: &Bindings<'_>) -> Result<Evaluation> {
        let mut ev = Evaluation {
            values: Vec::with_capacity(self.nodes.len()),
            needs_grad: Vec::with_capacity(self.nodes.len()),
        };
        ev.resume(self, bindings)?;
        Ok(ev)
    }

    fn forward_node(&self, idx: usize, values: &[Tensor], bindings: &Bindings<'_>) -> Result<Tensor> {
        let node = &self.nodes[idx];
        let op_name = node.op.name();
        let mismatch = |detail: String| Error::ShapeMismatch {
            node: idx,
            op: op_name,
            detail,
        };
        let arg = |i: usize| &values[node.inputs[i].0];
        let unary = |f: &dyn Fn(f64) -> f64| {
            let x = arg(0);
            Tensor::from_parts(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect())
        };
        let binary = |f: &dyn Fn(f64, f64) -> f64| -> Result<Tensor> {
            let (a, b) = (arg(0), arg(1));
            if a.shape() != b.shape() {
                return Err(mismatch(format!("{:?} vs {:?}", a.shape(), b.shape())));
            }
            Ok(Tensor::from_parts(
                a.shape().to_vec(),
                a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
            ))
        };
        let matrix_dims = |t: &Tensor| -> Result<(usize, usize)> {
            match *t.shape() {
                [m, n] => Ok((m, n)),
                _ => Err(mismatch(format!("expected a matrix, got {:?}", t.shape()))),
            }
        };

        let out = match &node.op {
            Op::Input(name) => {
                let t = bindings
                    .get(name)
                    .ok_or_else(|| Error::UnboundInput(name.clone()))?;
                Tensor::from_parts(t.shape().to_vec(), t.data().to_vec())
            }
            Op::Constant(t) => t.clone(),
            Op::MatMul => {
                let (m, k) = matrix_dims(arg(0))?;
                let (k2, n) = matrix_dims(arg(1))?;
                if k != k2 {
                    return Err(mismatch(format!("{m}×{k} · {k2}×{n}")));
                }
                Tensor::from_parts(vec![m, n], kernels::matmul(arg(0).data(), arg(1).data(), m, k, n))
            }
            Op::AddBias => {
                let (m, n) = matrix_dims(arg(0))?;
                let bias = arg(1);
                if bias.len() != n {
                    return Err(mismatch(format!("bias length {} for {m}×{n}", bias.len())));
                }
                let mut data = arg(0).data().to_vec();
                for row in data.chunks_mut(n) {
                    row.iter_mut().zip(bias.data()).for_each(|(v, b)| *v += b);
                }
                Tensor::from_parts(vec![m, n], data)
            }
            Op::Add => binary(&|x, y| x + y)?,
            Op::Sub => binary(&|x, y| x - y)?,
            Op::Mul => binary(&|x, y| x * y)?,
            Op::Scale(c) => unary(&|v| v * c),
            Op::AddScalar(c) => unary(&|v| v + c),
            Op::Relu => unary(&|v| if v > 0.0 { v } else { 0.0 }),
            Op::Square => unary(&|v| v * v),
            Op::Sqrt { floor } => unary(&|v| libm::sqrt(if v > *floor { v } else { *floor })),
            Op::Reciprocal => unary(&|v| 1.0 / v),
            Op::SumRows => {
                let (m, n) = matrix_dims(arg(0))?;
                let data = arg(0).data().chunks(n.max(1)).take(m).map(|r| r.iter().sum()).collect();
                Tensor::from_parts(vec![m], data)
            }
            Op::Sum => Tensor::scalar(arg(0).data().iter().sum()),
            Op::Mean => {
                let x = arg(0);
                if x.is_empty() {
                    return Err(mismatch("mean of an empty tensor".into()));
                }
                Tensor::scalar(x.data().iter().sum::<f64>() / x.len() as f64)
            }
            Op::LogSumExpRows => {
                let (m, n) = matrix_dims(arg(0))?;
                if n == 0 {
                    return Err(mismatch("log-sum-exp over zero columns".into()));
                }
                let data = arg(0).data().chunks(n).take(m).map(logsumexp).collect();
                Tensor::from_parts(vec![m], data)
            }
            Op::PickColumns(cols) => {
                let (m, n) = matrix_dims(arg(0))?;
                if cols.len() != m {
                    return Err(mismatch(format!("{} column indices for {m} rows", cols.len())));
                }
                if let Some(&bad) = cols.iter().find(|&&c| c >= n) {
                    return Err(mismatch(format!("column {bad} out of range for width {n}")));
                }
                let x = arg(0).data();
                Tensor::from_parts(vec![m], cols.iter().enumerate().map(|(i, &c)| x[i * n + c]).collect())
            }
            Op::GatherRows(rows) => {
                let (m, n) = matrix_dims(arg(0))?;
                if rows.is_empty() {
                    return Err(mismatch("gather of zero rows".into()));
                }
                if let Some(&bad) = rows.iter().find(|&&r| r >= m) {
                    return Err(mismatch(format!("row {bad} out of range for {m} rows")));
                }
                let x = arg(0).data();
                let mut data = Vec::with_capacity(rows.len() * n);
                for &r in rows {
                    data.extend_from_slice(&x[r * n..(r + 1) * n]);
                }
                Tensor::from_parts(vec![rows.len(), n], data)
            }
            Op::Conv2d => {
                let (geom, batch) = conv_geom(arg(0), arg(1), arg(2)).map_err(mismatch)?;
                let data = kernels::conv2d_forward(geom, batch, arg(0).data(), arg(1).data(), arg(2).data());
                Tensor::from_parts(vec![batch, geom.out_channels, geom.height, geom.width], data)
            }
            Op::MeanPool2d(size) => {
                let x = arg(0);
                let [b, c, h, w] = *x.shape() else {
                    return Err(mismatch(format!("expected B×C×H×W, got {:?}", x.shape())));
                };
                if *size == 0 || h % size != 0 || w % size != 0 {
                    return Err(mismatch(format!("pool size {size} does not divide {h}×{w}")));
                }
                let data = kernels::mean_pool_forward(x.data(), b * c, h, w, *size);
                Tensor::from_parts(vec![b, c, h / size, w / size], data)
            }
            Op::Flatten => {
                let x = arg(0);
                if x.shape().len() < 2 {
                    return Err(mismatch(format!("cannot flatten {:?}", x.shape())));
                }
                let b = x.shape()[0];
                let rest = x.shape()[1..].iter().product();
                Tensor::from_parts(vec![b, rest], x.data().to_vec())
            }
        };
        Ok(out)
    }
}

fn conv_geom(x: &Tensor, w: &Tensor, b: &Tensor) -> core::result::Result<(ConvGeom, usize), String> {
    let [batch, c, h, wd] = *x.shape() else {
        return Err(format!("expected B×C×H×W input, got {:?}", x.shape()));
    };
    let [o, c2, k, k2] = *w.shape() else {
        return Err(format!("expected O×C×k×k weight, got {:?}", w.shape()));
    };
    if c != c2 || k != k2 || k % 2 == 0 {
        return Err(format!("weight {:?} incompatible with input {:?}", w.shape(), x.shape()));
    }
    if b.len() != o {
        return Err(format!("bias length {} for {o} output channels", b.len()));
    }
    Ok((
        ConvGeom {
            channels: c,
            height: h,
            width: wd,
            out_channels: o,
            kernel: k,
        },
        batch,
    ))
}

pub(crate) fn logsumexp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + libm::log(row.iter().map(|&v| libm::exp(v - max)).sum::<f64>())
}

/// Cached activations of one graph evaluation.
#[derive(Debug, Clone)]
pub struct Evaluation {
    values: Vec<Tensor>,
    needs_grad: Vec<bool>,
}

/// Gradients of a scalar with respect to every tracked input.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    by_input: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.by_input.get(name).map(Tensor::data)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.by_input.iter().map(|(k, v)| (k.as_str(), v.data()))
    }

    pub fn len(&self) -> usize {
        self.by_input.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_input.is_empty()
    }

    /// Stores the gradient for `name` in the tensor's grad buffer.
    pub fn write_into(&self, name: &str, tensor: &mut Tensor) -> Result<()> {
        let grad = self
            .by_input
            .get(name)
            .ok_or_else(|| Error::UnboundInput(name.to_string()))?;
        tensor.set_grad(grad.data().to_vec())
    }
}

impl Evaluation {
    /// Evaluates nodes appended to `graph` since the last call.
    pub fn resume(&mut self, graph: &Graph, bindings: &Bindings<'_>) -> Result<()> {
        for idx in self.values.len()..graph.nodes.len() {
            let value = graph.forward_node(idx, &self.values, bindings)?;
            let node = &graph.nodes[idx];
            let needs = match &node.op {
                Op::Input(name) => bindings.get(name).is_some_and(Tensor::requires_grad),
                Op::Constant(_) => false,
                _ => node.inputs.iter().any(|i| self.needs_grad[i.0]),
            };
            self.values.push(value);
            self.needs_grad.push(needs);
        }
        Ok(())
    }

    pub fn value(&self, node: NodeId) -> Result<&Tensor> {
        self.values.get(node.0).ok_or(Error::NotEvaluated(node.0))
    }

    pub fn output(&self, graph: &Graph, name: &str) -> Option<&Tensor> {
        graph.output_node(name).and_then(|id| self.values.get(id.0))
    }

    /// All named outputs of the graph.
    pub fn outputs(&self, graph: &Graph) -> BTreeMap<String, Tensor> {
        graph
            .outputs
            .iter()
            .filter_map(|(k, id)| self.values.get(id.0).map(|v| (k.clone(), v.clone())))
            .collect()
    }

    /// Reverse accumulation from the scalar `output`.
    pub fn backward(&self, graph: &Graph, output: NodeId) -> Result<Gradients> {
        let out = self.value(output)?;
        if !out.is_scalar() {
            return Err(Error::NonScalarOutput(out.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(vec![1.0]);
        let mut result = Gradients::default();

        for idx in (0..=output.0).rev() {
            let node = &graph.nodes[idx];
            if let Op::Input(name) = &node.op {
                if self.needs_grad[idx] {
                    let value = &self.values[idx];
                    let g = grads[idx].take().unwrap_or_else(|| vec![0.0; value.len()]);
                    let entry = result
                        .by_input
                        .entry(name.clone())
                        .or_insert_with(|| Tensor::zeros(value.shape().to_vec()));
                    entry.data_mut().iter_mut().zip(&g).for_each(|(e, v)| *e += v);
                }
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if !self.needs_grad[idx] {
                continue;
            }
            self.propagate(node, idx, &g, &mut grads);
        }
        Ok(result)
    }

    fn propagate(&self, node: &Node, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let inputs = &node.inputs;
        let val = |i: usize| &self.values[inputs[i].0];
        let needs = |i: usize| self.needs_grad[inputs[i].0];
        let out = &self.values[idx];
        macro_rules! acc {
            ($i:expr) => {{
                let id = inputs[$i].0;
                let len = self.values[id].len();
                grads[id].get_or_insert_with(|| vec![0.0; len])
            }};
        }
        match &node.op {
            Op::Input(_) | Op::Constant(_) => {}
            Op::MatMul => {
                let (m, k) = (val(0).shape()[0], val(0).shape()[1]);
                let n = val(1).shape()[1];
                if needs(0) {
                    let b = val(1).data();
                    kernels::matmul_a_bt_acc(g, b, acc!(0), m, k, n);
                }
                if needs(1) {
                    let a = val(0).data();
                    kernels::matmul_at_b_acc(a, g, acc!(1), m, k, n);
                }
            }
            Op::AddBias => {
                let n = val(0).shape()[1];
                if needs(0) {
                    acc!(0).iter_mut().zip(g).for_each(|(d, v)| *d += v);
                }
                if needs(1) {
                    let db = acc!(1);
                    for row in g.chunks(n) {
                        db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                    }
                }
            }
            Op::Add | Op::Sub => {
                let sign = if matches!(node.op, Op::Sub) { -1.0 } else { 1.0 };
                if needs(0) {
                    acc!(0).iter_mut().zip(g).for_each(|(d, v)| *d += v);
                }
                if needs(1) {
                    acc!(1).iter_mut().zip(g).for_each(|(d, v)| *d += sign * v);
                }
            }
            Op::Mul => {
                if needs(0) {
                    let b = val(1).data();
                    acc!(0).iter_mut().zip(g.iter().zip(b)).for_each(|(d, (gv, bv))| *d += gv * bv);
                }
                if needs(1) {
                    let a = val(0).data();
                    acc!(1).iter_mut().zip(g.iter().zip(a)).for_each(|(d, (gv, av))| *d += gv * av);
                }
            }
            Op::Scale(c) => acc!(0).iter_mut().zip(g).for_each(|(d, v)| *d += c * v),
            Op::AddScalar(_) | Op::Flatten => acc!(0).iter_mut().zip(g).for_each(|(d, v)| *d += v),
            Op::Relu => {
                let x = val(0).data();
                acc!(0).iter_mut().zip(g.iter().zip(x)).for_each(|(d, (gv, xv))| {
                    if *xv > 0.0 {
                        *d += gv
                    }
                });
            }
            Op::Square => {
                let x = val(0).data();
                acc!(0).iter_mut().zip(g.iter().zip(x)).for_each(|(d, (gv, xv))| *d += 2.0 * xv * gv);
            }
            Op::Sqrt { floor } => {
                let x = val(0).data();
                let y = out.data();
                acc!(0).iter_mut().enumerate().for_each(|(i, d)| {
                    if x[i] > *floor {
                        *d += g[i] * 0.5 / y[i];
                    }
                });
            }
            Op::Reciprocal => {
                let y = out.data();
                acc!(0).iter_mut().zip(g.iter().zip(y)).for_each(|(d, (gv, yv))| *d -= gv * yv * yv);
            }
            Op::SumRows => {
                let n = val(0).shape()[1];
                for (row, gv) in acc!(0).chunks_mut(n.max(1)).zip(g) {
                    row.iter_mut().for_each(|d| *d += gv);
                }
            }
            Op::Sum => acc!(0).iter_mut().for_each(|d| *d += g[0]),
            Op::Mean => {
                let n = val(0).len() as f64;
                acc!(0).iter_mut().for_each(|d| *d += g[0] / n);
            }
            Op::LogSumExpRows => {
                let n = val(0).shape()[1];
                let x = val(0).data();
                let lse = out.data();
                let dx = acc!(0);
                for (i, gv) in g.iter().enumerate() {
                    for j in 0..n {
                        dx[i * n + j] += gv * libm::exp(x[i * n + j] - lse[i]);
                    }
                }
            }
            Op::PickColumns(cols) => {
                let n = val(0).shape()[1];
                let dx = acc!(0);
                for (i, (&c, gv)) in cols.iter().zip(g).enumerate() {
                    dx[i * n + c] += gv;
                }
            }
            Op::GatherRows(rows) => {
                let n = val(0).shape()[1];
                let dx = acc!(0);
                for (t, &r) in rows.iter().enumerate() {
                    dx[r * n..(r + 1) * n]
                        .iter_mut()
                        .zip(&g[t * n..(t + 1) * n])
                        .for_each(|(d, v)| *d += v);
                }
            }
            Op::Conv2d => {
                let (geom, batch) = conv_geom(val(0), val(1), val(2)).expect("shape checked in forward");
                // Each accumulator is taken out so several can be borrowed at once.
                let mut take = |i: usize| -> Option<Vec<f64>> {
                    needs(i).then(|| {
                        let id = inputs[i].0;
                        let len = self.values[id].len();
                        grads[id].take().unwrap_or_else(|| vec![0.0; len])
                    })
                };
                let (mut dx, mut dw, mut db) = (take(0), take(1), take(2));
                kernels::conv2d_backward(
                    geom,
                    batch,
                    val(0).data(),
                    val(1).data(),
                    g,
                    dx.as_deref_mut(),
                    dw.as_deref_mut(),
                    db.as_deref_mut(),
                );
                for (i, buf) in [dx, dw, db].into_iter().enumerate() {
                    if let Some(buf) = buf {
                        grads[inputs[i].0] = Some(buf);
                    }
                }
            }
            Op::MeanPool2d(size) => {
                let s = val(0).shape();
                let (planes, h, w) = (s[0] * s[1], s[2], s[3]);
                kernels::mean_pool_backward(g, acc!(0), planes, h, w, *size);
            }
        }
    }
}

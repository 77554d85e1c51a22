//! Reverse-mode differentiation over a recorded tape of matrix-valued nodes.
//!
//! Every node holds a dense `rows x cols` value; scalars are `1 x 1`. The
//! operation set is closed (see [`Op`]) and covers what the quadratic-mixture
//! energy and the dual score-matching losses need. Forward tangents are not a
//! separate mechanism: [`tangent_forward`] records the Jacobian-vector
//! products as ordinary nodes, so [`Tape::backward`] differentiates through
//! them and yields parameter gradients of Jacobian entries.
//!
//! Binary elementwise ops broadcast a dimension of size 1 against the other
//! operand; the backward pass sums the adjoint over broadcast dimensions.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numerics::{sigmoid, softplus};

pub type Matrix = DMatrix<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Constant,
    Parameter,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Scale(NodeId, f64),
    Exp(NodeId),
    Log(NodeId),
    Tanh(NodeId),
    Softplus(NodeId),
    Sigmoid(NodeId),
    /// Row-wise log-sum-exp, `n x k -> n x 1`.
    LogSumExp(NodeId),
    /// Sum of the elementwise product, `-> 1 x 1`.
    Dot(NodeId, NodeId),
    /// Sum of all entries, `-> 1 x 1`.
    Sum(NodeId),
    /// `x W + b`, `x: n x i`, `W: i x o`, optional bias `1 x o`.
    Affine {
        x: NodeId,
        w: NodeId,
        bias: Option<NodeId>,
    },
    SliceCols {
        x: NodeId,
        start: usize,
        len: usize,
    },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Matrix,
}

/// Append-only record of a computation.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints from one backward pass, indexed by node.
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoints: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Adjoint of `node`; zeros of the node's shape when it is unreachable.
    pub fn get(&self, tape: &Tape, node: NodeId) -> Matrix {
        match &self.adjoints[node.0] {
            Some(m) => m.clone(),
            None => {
                let v = tape.value(node);
                Matrix::zeros(v.nrows(), v.ncols())
            }
        }
    }

    pub fn scalar(&self, node: NodeId) -> f64 {
        self.adjoints[node.0].as_ref().map_or(0.0, |m| m[(0, 0)])
    }
}

fn broadcast_shape(a: &Matrix, b: &Matrix) -> Option<(usize, usize)> {
    let dim = |x: usize, y: usize| match (x, y) {
        _ if x == y => Some(x),
        (1, y) => Some(y),
        (x, 1) => Some(x),
        _ => None,
    };
    Some((dim(a.nrows(), b.nrows())?, dim(a.ncols(), b.ncols())?))
}

fn at(m: &Matrix, r: usize, c: usize) -> f64 {
    let rr = if m.nrows() == 1 { 0 } else { r };
    let cc = if m.ncols() == 1 { 0 } else { c };
    m[(rr, cc)]
}

/// Sums `g` down to `shape` (undoing a broadcast).
fn reduce_to(g: Matrix, shape: (usize, usize)) -> Matrix {
    if (g.nrows(), g.ncols()) == shape {
        return g;
    }
    let mut out = Matrix::zeros(shape.0, shape.1);
    for c in 0..g.ncols() {
        for r in 0..g.nrows() {
            let rr = if shape.0 == 1 { 0 } else { r };
            let cc = if shape.1 == 1 { 0 } else { c };
            out[(rr, cc)] += g[(r, c)];
        }
    }
    out
}

fn shape_of(m: &Matrix) -> (usize, usize) {
    (m.nrows(), m.ncols())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node; ids from before the reset are invalid afterwards.
    pub fn reset(&mut self) {
        self.nodes.clear();
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value[(0, 0)]
    }

    pub fn op(&self, id: NodeId) -> Op {
        self.nodes[id.0].op
    }

    fn push(&mut self, op: Op, value: Matrix) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Constant, value)
    }

    pub fn constant_scalar(&mut self, v: f64) -> NodeId {
        self.constant(Matrix::from_element(1, 1, v))
    }

    pub fn parameter(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Parameter, value)
    }

    /// Records `op`, computing its value from operand values.
    pub fn record(&mut self, op: Op) -> Result<NodeId> {
        let next = self.nodes.len();
        let value = match op {
            Op::Constant | Op::Parameter => {
                return Err(Error::Contract("leaves are created with constant()/parameter()".into()))
            }
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => {
                let (va, vb) = (self.value(a), self.value(b));
                let (rows, cols) = broadcast_shape(va, vb).ok_or_else(|| {
                    Error::dim(format!(
                        "cannot broadcast {:?} with {:?}",
                        shape_of(va),
                        shape_of(vb)
                    ))
                })?;
                let mut out = Matrix::zeros(rows, cols);
                for c in 0..cols {
                    for r in 0..rows {
                        let (x, y) = (at(va, r, c), at(vb, r, c));
                        out[(r, c)] = match op {
                            Op::Add(..) => x + y,
                            Op::Sub(..) => x - y,
                            Op::Mul(..) => x * y,
                            _ => {
                                if y == 0.0 {
                                    return Err(Error::Domain { node: next, op: "div", value: y });
                                }
                                x / y
                            }
                        };
                    }
                }
                out
            }
            Op::Scale(a, k) => self.value(a) * k,
            Op::Exp(a) => self.value(a).map(f64::exp),
            Op::Log(a) => {
                let va = self.value(a);
                if let Some(bad) = va.iter().find(|v| !(**v > 0.0)) {
                    return Err(Error::Domain { node: next, op: "log", value: *bad });
                }
                va.map(f64::ln)
            }
            Op::Tanh(a) => self.value(a).map(f64::tanh),
            Op::Softplus(a) => self.value(a).map(softplus),
            Op::Sigmoid(a) => self.value(a).map(sigmoid),
            Op::LogSumExp(a) => {
                let va = self.value(a);
                let mut out = Matrix::zeros(va.nrows(), 1);
                for r in 0..va.nrows() {
                    let row: Vec<f64> = va.row(r).iter().copied().collect();
                    out[(r, 0)] = crate::numerics::logsumexp(&row);
                }
                out
            }
            Op::Dot(a, b) => {
                let (va, vb) = (self.value(a), self.value(b));
                if shape_of(va) != shape_of(vb) {
                    return Err(Error::dim("dot operands differ in shape"));
                }
                Matrix::from_element(1, 1, va.dot(vb))
            }
            Op::Sum(a) => Matrix::from_element(1, 1, self.value(a).sum()),
            Op::Affine { x, w, bias } => {
                let (vx, vw) = (self.value(x), self.value(w));
                if vx.ncols() != vw.nrows() {
                    return Err(Error::dim(format!(
                        "affine: input has {} columns, weight has {} rows",
                        vx.ncols(),
                        vw.nrows()
                    )));
                }
                let mut out = vx * vw;
                if let Some(b) = bias {
                    let vb = self.value(b);
                    if vb.nrows() != 1 || vb.ncols() != out.ncols() {
                        return Err(Error::dim("affine bias must be 1 x out"));
                    }
                    for mut row in out.row_iter_mut() {
                        row += vb.row(0);
                    }
                }
                out
            }
            Op::SliceCols { x, start, len } => {
                let vx = self.value(x);
                if start + len > vx.ncols() {
                    return Err(Error::dim("column slice out of range"));
                }
                vx.columns(start, len).into_owned()
            }
        };
        Ok(self.push(op, value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Add(a, b))
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Sub(a, b))
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Mul(a, b))
    }
    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Div(a, b))
    }
    pub fn scale(&mut self, a: NodeId, k: f64) -> Result<NodeId> {
        self.record(Op::Scale(a, k))
    }
    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Exp(a))
    }
    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Log(a))
    }
    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Tanh(a))
    }
    pub fn softplus(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Softplus(a))
    }
    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Sigmoid(a))
    }
    pub fn logsumexp(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::LogSumExp(a))
    }
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Dot(a, b))
    }
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Sum(a))
    }
    pub fn affine(&mut self, x: NodeId, w: NodeId, bias: Option<NodeId>) -> Result<NodeId> {
        self.record(Op::Affine { x, w, bias })
    }
    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.record(Op::SliceCols { x, start, len })
    }

    /// Adjoints of every node with respect to the scalar `output`.
    pub fn backward(&self, output: NodeId) -> Result<Gradients> {
        let out_val = self.value(output);
        if shape_of(out_val) != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar output, got {:?}",
                shape_of(out_val)
            )));
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; output.0 + 1];
        adj[output.0] = Some(Matrix::from_element(1, 1, 1.0));

        fn accumulate(adj: &mut [Option<Matrix>], id: NodeId, g: Matrix) {
            match &mut adj[id.0] {
                Some(existing) => *existing += g,
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=output.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match node.op {
                Op::Constant | Op::Parameter => {
                    adj[idx] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, a, reduce_to(g.clone(), shape_of(self.value(a))));
                    accumulate(&mut adj, b, reduce_to(g, shape_of(self.value(b))));
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, a, reduce_to(g.clone(), shape_of(self.value(a))));
                    accumulate(&mut adj, b, reduce_to(-g, shape_of(self.value(b))));
                }
                Op::Mul(a, b) | Op::Div(a, b) => {
                    let (va, vb) = (self.value(a), self.value(b));
                    let (rows, cols) = shape_of(&g);
                    let mut ga = Matrix::zeros(rows, cols);
                    let mut gb = Matrix::zeros(rows, cols);
                    for c in 0..cols {
                        for r in 0..rows {
                            let (x, y, gg) = (at(va, r, c), at(vb, r, c), g[(r, c)]);
                            if matches!(node.op, Op::Mul(..)) {
                                ga[(r, c)] = gg * y;
                                gb[(r, c)] = gg * x;
                            } else {
                                ga[(r, c)] = gg / y;
                                gb[(r, c)] = -gg * x / (y * y);
                            }
                        }
                    }
                    accumulate(&mut adj, a, reduce_to(ga, shape_of(va)));
                    accumulate(&mut adj, b, reduce_to(gb, shape_of(vb)));
                }
                Op::Scale(a, k) => accumulate(&mut adj, a, g * k),
                Op::Exp(a) => accumulate(&mut adj, a, g.component_mul(&node.value)),
                Op::Log(a) => accumulate(&mut adj, a, g.component_div(self.value(a))),
                Op::Tanh(a) => {
                    let d = node.value.map(|t| 1.0 - t * t);
                    accumulate(&mut adj, a, g.component_mul(&d));
                }
                Op::Softplus(a) => {
                    let d = self.value(a).map(sigmoid);
                    accumulate(&mut adj, a, g.component_mul(&d));
                }
                Op::Sigmoid(a) => {
                    let d = node.value.map(|s| s * (1.0 - s));
                    accumulate(&mut adj, a, g.component_mul(&d));
                }
                Op::LogSumExp(a) => {
                    let va = self.value(a);
                    let mut ga = Matrix::zeros(va.nrows(), va.ncols());
                    for r in 0..va.nrows() {
                        let lse = node.value[(r, 0)];
                        for c in 0..va.ncols() {
                            ga[(r, c)] = g[(r, 0)] * (va[(r, c)] - lse).exp();
                        }
                    }
                    accumulate(&mut adj, a, ga);
                }
                Op::Dot(a, b) => {
                    let s = g[(0, 0)];
                    accumulate(&mut adj, a, self.value(b) * s);
                    accumulate(&mut adj, b, self.value(a) * s);
                }
                Op::Sum(a) => {
                    let va = self.value(a);
                    accumulate(&mut adj, a, Matrix::from_element(va.nrows(), va.ncols(), g[(0, 0)]));
                }
                Op::Affine { x, w, bias } => {
                    let (vx, vw) = (self.value(x), self.value(w));
                    accumulate(&mut adj, x, &g * vw.transpose());
                    accumulate(&mut adj, w, vx.tr_mul(&g));
                    if let Some(b) = bias {
                        accumulate(&mut adj, b, reduce_to(g, (1, vw.ncols())));
                    }
                }
                Op::SliceCols { x, start, len } => {
                    let vx = self.value(x);
                    let mut gx = Matrix::zeros(vx.nrows(), vx.ncols());
                    gx.columns_mut(start, len).copy_from(&g);
                    accumulate(&mut adj, x, gx);
                }
            }
        }
        adj.resize(self.nodes.len(), None);
        Ok(Gradients { adjoints: adj })
    }
}

/// Fully connected network with `tanh` between layers and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// `(weight: in x out, bias: 1 x out)` per layer.
    pub layers: Vec<(Matrix, Matrix)>,
}

/// An [`Mlp`]'s parameters as leaves of one tape.
#[derive(Debug, Clone)]
pub struct BoundMlp {
    pub layers: Vec<(NodeId, NodeId)>,
}

/// A primal node together with its forward tangents, all on the same tape.
#[derive(Debug, Clone)]
pub struct DualNode {
    pub primal: NodeId,
    pub tangents: Vec<NodeId>,
}

impl Mlp {
    /// Layer widths `[in, h1, ..., out]`; weights and biases drawn from
    /// `init(fan_in)`.
    pub fn new(widths: &[usize], mut init: impl FnMut(usize) -> f64) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::param(format!("invalid layer widths {widths:?}")));
        }
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let weight = Matrix::from_fn(fan_in, fan_out, |_, _| init(fan_in));
                let bias = Matrix::from_fn(1, fan_out, |_, _| init(fan_in));
                (weight, bias)
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].0.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().0.ncols()
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(|(m, _)| m.ncols()));
        w
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|(w, b)| w.len() + b.len()).sum()
    }

    /// Parameters flattened layer by layer (weight column-major, then bias).
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in &self.layers {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::dim(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut off = 0;
        for (w, b) in &mut self.layers {
            let n = w.len();
            w.as_mut_slice().copy_from_slice(&flat[off..off + n]);
            off += n;
            let n = b.len();
            b.as_mut_slice().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundMlp {
        BoundMlp {
            layers: self
                .layers
                .iter()
                .map(|(w, b)| (tape.parameter(w.clone()), tape.parameter(b.clone())))
                .collect(),
        }
    }

    /// Plain forward pass without a tape, one row per input.
    pub fn eval(&self, input: &Matrix) -> Matrix {
        let mut h = input.clone();
        let last = self.layers.len() - 1;
        for (l, (w, b)) in self.layers.iter().enumerate() {
            let mut z = &h * w;
            for mut row in z.row_iter_mut() {
                row += b.row(0);
            }
            h = if l < last { z.map(f64::tanh) } else { z };
        }
        h
    }
}

impl BoundMlp {
    /// Flattened adjoints in [`Mlp::flat_params`] order.
    pub fn flat_grads(&self, tape: &Tape, grads: &Gradients) -> Vec<f64> {
        let mut out = Vec::new();
        for &(w, b) in &self.layers {
            out.extend_from_slice(grads.get(tape, w).as_slice());
            out.extend_from_slice(grads.get(tape, b).as_slice());
        }
        out
    }
}

/// Forward pass recording the network output and the Jacobian-vector product
/// for each seed tangent of `input`.
pub fn tangent_forward(
    tape: &mut Tape,
    net: &BoundMlp,
    input: NodeId,
    seeds: &[NodeId],
) -> Result<DualNode> {
    let in_shape = shape_of(tape.value(input));
    if let Some(bad) = seeds.iter().find(|s| shape_of(tape.value(**s)) != in_shape) {
        return Err(Error::dim(format!(
            "seed node {} has shape {:?}, input has {:?}",
            bad.0,
            shape_of(tape.value(*bad)),
            in_shape
        )));
    }
    let mut h = input;
    let mut dh: Vec<NodeId> = seeds.to_vec();
    let last = net.layers.len() - 1;
    for (l, &(w, b)) in net.layers.iter().enumerate() {
        let z = tape.affine(h, w, Some(b))?;
        let dz: Vec<NodeId> = dh
            .iter()
            .map(|&t| tape.affine(t, w, None))
            .collect::<Result<_>>()?;
        if l < last {
            h = tape.tanh(z)?;
            let sq = tape.mul(h, h)?;
            let one = tape.constant_scalar(1.0);
            let deriv = tape.sub(one, sq)?;
            dh = dz
                .into_iter()
                .map(|t| tape.mul(deriv, t))
                .collect::<Result<_>>()?;
        } else {
            h = z;
            dh = dz;
        }
    }
    Ok(DualNode {
        primal: h,
        tangents: dh,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(t: &mut Tape, v: f64) -> NodeId {
        t.constant_scalar(v)
    }

    #[test]
    fn mul_value_and_partials() {
        let mut t = Tape::new();
        let a = t.parameter(Matrix::from_element(1, 1, 2.0));
        let b = t.parameter(Matrix::from_element(1, 1, 3.0));
        let c = t.mul(a, b).unwrap();
        assert_eq!(t.scalar(c), 6.0);
        let g = t.backward(c).unwrap();
        assert_eq!((g.scalar(a), g.scalar(b)), (3.0, 2.0));
    }

    #[test]
    fn logsumexp_of_zeros() {
        let mut t = Tape::new();
        let x = t.parameter(Matrix::zeros(1, 2));
        let l = t.logsumexp(x).unwrap();
        assert!((t.scalar(l) - 2f64.ln()).abs() < 1e-15);
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(&t, x), Matrix::from_row_slice(1, 2, &[0.5, 0.5]));
    }

    #[test]
    fn softplus_stable_branch() {
        let mut t = Tape::new();
        let x = scalar(&mut t, -40.0);
        let s = t.softplus(x).unwrap();
        // log1p(e^-40) to double precision
        assert!((t.scalar(s) - 4.248354255291589e-18).abs() < 1e-30);
        let x = scalar(&mut t, 1000.0);
        let s = t.softplus(x).unwrap();
        assert_eq!(t.scalar(s), 1000.0);
    }

    #[test]
    fn domain_errors_carry_node_index() {
        let mut t = Tape::new();
        let x = scalar(&mut t, -1.0);
        let zero = scalar(&mut t, 0.0);
        match t.log(x) {
            Err(Error::Domain { node, op, .. }) => assert_eq!((node, op), (2, "log")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(t.div(x, zero), Err(Error::Domain { op: "div", .. })));
    }

    #[test]
    fn square_adjoint() {
        let mut t = Tape::new();
        let th = t.parameter(Matrix::from_element(1, 1, 3.0));
        let f = t.mul(th, th).unwrap();
        assert_eq!(t.backward(f).unwrap().scalar(th), 6.0);
    }

    #[test]
    fn constant_output_gives_zero_adjoints() {
        let mut t = Tape::new();
        let th = t.parameter(Matrix::from_element(2, 2, 1.0));
        let c = scalar(&mut t, 5.0);
        let g = t.backward(c).unwrap();
        assert_eq!(g.get(&t, th), Matrix::zeros(2, 2));
    }

    #[test]
    fn non_scalar_output_is_rejected() {
        let mut t = Tape::new();
        let th = t.parameter(Matrix::from_element(2, 1, 1.0));
        assert!(matches!(t.backward(th), Err(Error::Contract(_))));
    }

    #[test]
    fn broadcast_backward_reduces() {
        let mut t = Tape::new();
        let a = t.parameter(Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let col = t.parameter(Matrix::from_row_slice(2, 1, &[10.0, 20.0]));
        let s = t.sub(a, col).unwrap();
        let out = t.sum(s).unwrap();
        let g = t.backward(out).unwrap();
        assert_eq!(g.get(&t, col), Matrix::from_row_slice(2, 1, &[-3.0, -3.0]));
        assert_eq!(g.get(&t, a), Matrix::from_element(2, 3, 1.0));
    }

    #[test]
    fn reset_makes_tape_reusable() {
        let mut t = Tape::new();
        let x = t.parameter(Matrix::from_element(1, 1, 2.0));
        let y = t.exp(x).unwrap();
        let g1 = t.backward(y).unwrap().scalar(x);
        t.reset();
        assert!(t.is_empty());
        let x = t.parameter(Matrix::from_element(1, 1, 2.0));
        let y = t.exp(x).unwrap();
        assert_eq!(t.backward(y).unwrap().scalar(x), g1);
    }

    #[test]
    fn linear_network_tangents_are_exact() {
        let mlp = Mlp {
            layers: vec![(
                Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 4.0]),
                Matrix::from_row_slice(1, 3, &[0.1, 0.2, 0.3]),
            )],
        };
        let mut t = Tape::new();
        let net = mlp.bind(&mut t);
        let x = t.constant(Matrix::from_row_slice(1, 2, &[0.3, -0.7]));
        let s0 = t.constant(Matrix::from_row_slice(1, 2, &[1.0, 0.0]));
        let s1 = t.constant(Matrix::from_row_slice(1, 2, &[0.5, 2.0]));
        let zero = t.constant(Matrix::zeros(1, 2));
        let dual = tangent_forward(&mut t, &net, x, &[s0, s1, zero]).unwrap();
        let w = &mlp.layers[0].0;
        assert_eq!(t.value(dual.tangents[0]), &w.row(0).into_owned());
        let want = Matrix::from_row_slice(1, 2, &[0.5, 2.0]) * w;
        assert!((t.value(dual.tangents[1]) - want).abs().max() < 1e-15);
        assert_eq!(t.value(dual.tangents[2]), &Matrix::zeros(1, 3));
    }

    #[test]
    fn seed_shape_mismatch_is_rejected() {
        let mlp = Mlp::new(&[2, 3], |_| 0.1).unwrap();
        let mut t = Tape::new();
        let net = mlp.bind(&mut t);
        let x = t.constant(Matrix::zeros(1, 2));
        let bad = t.constant(Matrix::zeros(1, 3));
        assert!(tangent_forward(&mut t, &net, x, &[bad]).is_err());
    }
}

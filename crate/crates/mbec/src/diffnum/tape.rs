use std::collections::BTreeMap;

use super::params::{GradMap, ParamSet};
use super::tensor::Tensor;
use super::DiffnumError;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

enum Op {
    Const,
    Param(String),
    /// A[m,k] * B[n,k]^T -> [m,n]
    MatmulNT(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// X[m,n] + row vector b[n], broadcast over rows.
    AddRow(usize, usize),
    Scale(usize, f64),
    Tanh(usize),
    Sigmoid(usize),
    Relu(usize),
    /// Column-wise concatenation of two tensors with equal row counts.
    ConcatCols(usize, usize),
    /// out[i] = X[i, idx[i]]
    Gather(usize, Vec<usize>),
    /// Sum of squared entries -> scalar.
    SumSq(usize),
    /// Reshape to rank-1 without copying semantics.
    Flatten(usize),
}

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    op: Op,
}

/// Flat record of a forward computation; supports one reverse sweep.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Parameter leaves bound onto a tape, looked up by name.
pub struct Binding {
    ids: BTreeMap<String, NodeId>,
}

impl Binding {
    pub fn id(&self, name: &str) -> Result<NodeId, DiffnumError> {
        self.ids
            .get(name)
            .copied()
            .ok_or_else(|| DiffnumError::UnknownParam(name.to_string()))
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].grad.as_ref()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        debug_assert!(value.is_finite(), "tape op produced non-finite value");
        self.nodes.push(Node {
            value,
            grad: None,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Const)
    }

    pub fn param(&mut self, name: &str, value: Tensor) -> NodeId {
        self.push(value, Op::Param(name.to_string()))
    }

    /// Bind every parameter of `ps` whose name starts with `prefix` as a leaf.
    pub fn bind(&mut self, ps: &ParamSet, prefix: &str) -> Binding {
        let mut ids = BTreeMap::new();
        for (name, value) in ps.iter() {
            if name.starts_with(prefix) {
                let id = self.param(name, value.clone());
                ids.insert(name.to_string(), id);
            }
        }
        Binding { ids }
    }

    /// A[m,k] * B[n,k]^T. Rank-1 operands are treated as single rows.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffnumError> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.cols() != bv.cols() {
            return Err(self.mismatch("matmul_nt", a, b));
        }
        let (m, k, n) = (av.rows(), av.cols(), bv.rows());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let arow = av.row(i);
            for j in 0..n {
                let brow = bv.row(j);
                let mut acc = 0.0;
                for t in 0..k {
                    acc += arow[t] * brow[t];
                }
                out[i * n + j] = acc;
            }
        }
        Ok(self.push(Tensor::matrix(m, n, out), Op::MatmulNT(a.0, b.0)))
    }

    fn elementwise(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId, DiffnumError> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.rows() != bv.rows() || av.cols() != bv.cols() {
            return Err(DiffnumError::ShapeMismatch {
                op: op_name,
                left: av.dims().to_vec(),
                right: bv.dims().to_vec(),
            });
        }
        let mut value = av.clone();
        for (x, y) in value.data_mut().iter_mut().zip(bv.data()) {
            *x = f(*x, *y);
        }
        Ok(self.push(value, op))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffnumError> {
        self.elementwise("add", a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffnumError> {
        self.elementwise("sub", a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffnumError> {
        self.elementwise("mul", a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    /// X[m,n] + b[n] broadcast over rows of X.
    pub fn add_row(&mut self, x: NodeId, b: NodeId) -> Result<NodeId, DiffnumError> {
        let (xv, bv) = (&self.nodes[x.0].value, &self.nodes[b.0].value);
        if bv.rows() != 1 || xv.cols() != bv.cols() {
            return Err(self.mismatch("add_row", x, b));
        }
        let n = xv.cols();
        let mut value = xv.clone();
        for (i, v) in value.data_mut().iter_mut().enumerate() {
            *v += bv.data()[i % n];
        }
        Ok(self.push(value, Op::AddRow(x.0, b.0)))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let mut value = self.nodes[a.0].value.clone();
        value.data_mut().iter_mut().for_each(|x| *x *= c);
        self.push(value, Op::Scale(a.0, c))
    }

    fn unary(&mut self, a: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let mut value = self.nodes[a.0].value.clone();
        value.data_mut().iter_mut().for_each(|x| *x = f(*x));
        self.push(value, op)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, f64::tanh, Op::Tanh(a.0))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid(a.0))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |x| x.max(0.0), Op::Relu(a.0))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffnumError> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.rows() != bv.rows() {
            return Err(self.mismatch("concat_cols", a, b));
        }
        let rows = av.rows();
        let (ca, cb) = (av.cols(), bv.cols());
        let mut out = Vec::with_capacity(rows * (ca + cb));
        for i in 0..rows {
            out.extend_from_slice(av.row(i));
            out.extend_from_slice(bv.row(i));
        }
        let value = if av.rank() == 1 && bv.rank() == 1 {
            Tensor::vector(out)
        } else {
            Tensor::matrix(rows, ca + cb, out)
        };
        Ok(self.push(value, Op::ConcatCols(a.0, b.0)))
    }

    /// out[i] = X[i, idx[i]]; idx length must equal the row count.
    pub fn gather(&mut self, x: NodeId, idx: Vec<usize>) -> Result<NodeId, DiffnumError> {
        let xv = &self.nodes[x.0].value;
        let (m, n) = (xv.rows(), xv.cols());
        if idx.len() != m || idx.iter().any(|&j| j >= n) {
            return Err(DiffnumError::ShapeMismatch {
                op: "gather",
                left: xv.dims().to_vec(),
                right: vec![idx.len()],
            });
        }
        let out: Vec<f64> = idx.iter().enumerate().map(|(i, &j)| xv.row(i)[j]).collect();
        Ok(self.push(Tensor::vector(out), Op::Gather(x.0, idx)))
    }

    pub fn sum_sq(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.nodes[a.0].value.data().iter().map(|v| v * v).sum();
        self.push(Tensor::scalar(s), Op::SumSq(a.0))
    }

    pub fn flatten(&mut self, a: NodeId) -> NodeId {
        let value = Tensor::vector(self.nodes[a.0].value.data().to_vec());
        self.push(value, Op::Flatten(a.0))
    }

    fn mismatch(&self, op: &'static str, a: NodeId, b: NodeId) -> DiffnumError {
        DiffnumError::ShapeMismatch {
            op,
            left: self.nodes[a.0].value.dims().to_vec(),
            right: self.nodes[b.0].value.dims().to_vec(),
        }
    }

    /// Reverse sweep from a scalar loss node. Gradients of earlier sweeps are
    /// discarded.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), DiffnumError> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(DiffnumError::ShapeMismatch {
                op: "backward",
                left: self.nodes[loss.0].value.dims().to_vec(),
                right: vec![1],
            });
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        let mut seed = Tensor::zeros_like(&self.nodes[loss.0].value);
        seed.fill(1.0);
        self.nodes[loss.0].grad = Some(seed);

        for i in (0..=loss.0).rev() {
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            debug_assert!(g.is_finite(), "non-finite gradient at node {i}");
            // Inputs always precede their consumers, so split borrows are safe.
            let (head, tail) = self.nodes.split_at_mut(i);
            let node = &mut tail[0];
            match &node.op {
                Op::Const | Op::Param(_) => {}
                Op::MatmulNT(a, b) => {
                    let (m, n) = (node.value.rows(), node.value.cols());
                    let k = head[*a].value.cols();
                    {
                        let bd = head[*b].value.data().to_vec();
                        let da = grad_slot(&mut head[*a]);
                        // dA[i,:] += sum_j G[i,j] * B[j,:]
                        for i2 in 0..m {
                            let dst = &mut da[i2 * k..(i2 + 1) * k];
                            for j in 0..n {
                                let gij = g.data()[i2 * n + j];
                                if gij != 0.0 {
                                    let brow = &bd[j * k..(j + 1) * k];
                                    for t in 0..k {
                                        dst[t] += gij * brow[t];
                                    }
                                }
                            }
                        }
                    }
                    {
                        let ad = head[*a].value.data().to_vec();
                        let db = grad_slot(&mut head[*b]);
                        // dB[j,:] += sum_i G[i,j] * A[i,:]
                        for i2 in 0..m {
                            let arow = &ad[i2 * k..(i2 + 1) * k];
                            for j in 0..n {
                                let gij = g.data()[i2 * n + j];
                                if gij != 0.0 {
                                    let dst = &mut db[j * k..(j + 1) * k];
                                    for t in 0..k {
                                        dst[t] += gij * arow[t];
                                    }
                                }
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    axpy(grad_slot(&mut head[a]), 1.0, g.data());
                    axpy(grad_slot(&mut head[b]), 1.0, g.data());
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    axpy(grad_slot(&mut head[a]), 1.0, g.data());
                    axpy(grad_slot(&mut head[b]), -1.0, g.data());
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let bd = head[b].value.data().to_vec();
                    let ad = head[a].value.data().to_vec();
                    {
                        let da = grad_slot(&mut head[a]);
                        for (d, (gv, bv)) in da.iter_mut().zip(g.data().iter().zip(&bd)) {
                            *d += gv * bv;
                        }
                    }
                    {
                        let db = grad_slot(&mut head[b]);
                        for (d, (gv, av)) in db.iter_mut().zip(g.data().iter().zip(&ad)) {
                            *d += gv * av;
                        }
                    }
                }
                Op::AddRow(x, b) => {
                    let (x, b) = (*x, *b);
                    let n = head[b].value.cols();
                    axpy(grad_slot(&mut head[x]), 1.0, g.data());
                    let db = grad_slot(&mut head[b]);
                    for (i, gv) in g.data().iter().enumerate() {
                        db[i % n] += gv;
                    }
                }
                Op::Scale(a, c) => {
                    let (a, c) = (*a, *c);
                    axpy(grad_slot(&mut head[a]), c, g.data());
                }
                Op::Tanh(a) => {
                    let a = *a;
                    let y = node.value.data().to_vec();
                    let da = grad_slot(&mut head[a]);
                    for (d, (gv, yv)) in da.iter_mut().zip(g.data().iter().zip(&y)) {
                        *d += gv * (1.0 - yv * yv);
                    }
                }
                Op::Sigmoid(a) => {
                    let a = *a;
                    let y = node.value.data().to_vec();
                    let da = grad_slot(&mut head[a]);
                    for (d, (gv, yv)) in da.iter_mut().zip(g.data().iter().zip(&y)) {
                        *d += gv * yv * (1.0 - yv);
                    }
                }
                Op::Relu(a) => {
                    let a = *a;
                    let y = node.value.data().to_vec();
                    let da = grad_slot(&mut head[a]);
                    for (d, (gv, yv)) in da.iter_mut().zip(g.data().iter().zip(&y)) {
                        if *yv > 0.0 {
                            *d += gv;
                        }
                    }
                }
                Op::ConcatCols(a, b) => {
                    let (a, b) = (*a, *b);
                    let (ca, cb) = (head[a].value.cols(), head[b].value.cols());
                    let rows = head[a].value.rows();
                    {
                        let da = grad_slot(&mut head[a]);
                        for i2 in 0..rows {
                            for t in 0..ca {
                                da[i2 * ca + t] += g.data()[i2 * (ca + cb) + t];
                            }
                        }
                    }
                    {
                        let db = grad_slot(&mut head[b]);
                        for i2 in 0..rows {
                            for t in 0..cb {
                                db[i2 * cb + t] += g.data()[i2 * (ca + cb) + ca + t];
                            }
                        }
                    }
                }
                Op::Gather(x, idx) => {
                    let x = *x;
                    let idx = idx.clone();
                    let n = head[x].value.cols();
                    let dx = grad_slot(&mut head[x]);
                    for (i2, &j) in idx.iter().enumerate() {
                        dx[i2 * n + j] += g.data()[i2];
                    }
                }
                Op::SumSq(a) => {
                    let a = *a;
                    let gs = g.item();
                    let ad = head[a].value.data().to_vec();
                    let da = grad_slot(&mut head[a]);
                    for (d, av) in da.iter_mut().zip(&ad) {
                        *d += 2.0 * gs * av;
                    }
                }
                Op::Flatten(a) => {
                    let a = *a;
                    axpy(grad_slot(&mut head[a]), 1.0, g.data());
                }
            }
            tail[0].grad = Some(g);
        }
        Ok(())
    }

    /// Accumulate parameter-leaf gradients into the set. Leaves bound more
    /// than once contribute additively.
    pub fn export_grads(&self, ps: &mut ParamSet) -> Result<(), DiffnumError> {
        for node in &self.nodes {
            if let (Op::Param(name), Some(g)) = (&node.op, &node.grad) {
                ps.accumulate_grad(name, g.data())?;
            }
        }
        Ok(())
    }

    /// Parameter-leaf gradients keyed by name, duplicates summed.
    pub fn grad_map(&self) -> GradMap {
        let mut out = GradMap::new();
        for node in &self.nodes {
            if let (Op::Param(name), Some(g)) = (&node.op, &node.grad) {
                out.entry(name.clone())
                    .and_modify(|t| t.add_assign(g).expect("duplicate leaf shape"))
                    .or_insert_with(|| g.clone());
            }
        }
        out
    }
}

fn grad_slot(node: &mut Node) -> &mut [f64] {
    if node.grad.is_none() {
        node.grad = Some(Tensor::zeros_like(&node.value));
    }
    node.grad.as_mut().unwrap().data_mut()
}

fn axpy(dst: &mut [f64], c: f64, src: &[f64]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d += c * s;
    }
}

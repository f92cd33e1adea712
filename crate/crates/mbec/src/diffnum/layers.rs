use rand::Rng;

use super::params::ParamSet;
use super::tape::{Binding, NodeId, Tape};
use super::tensor::Tensor;
use super::DiffnumError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Act {
    Tanh,
    Sigmoid,
    Relu,
}

impl Act {
    fn apply(self, x: f64) -> f64 {
        match self {
            Act::Tanh => x.tanh(),
            Act::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Act::Relu => x.max(0.0),
        }
    }

    fn on_tape(self, tape: &mut Tape, x: NodeId) -> NodeId {
        match self {
            Act::Tanh => tape.tanh(x),
            Act::Sigmoid => tape.sigmoid(x),
            Act::Relu => tape.relu(x),
        }
    }
}

fn xavier(rng: &mut impl Rng, fan_in: usize, fan_out: usize, len: usize) -> Vec<f64> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..len).map(|_| rng.gen_range(-a..a)).collect()
}

/// w [out,in] row-major times x [in], plus optional accumulation target.
fn matvec_into(w: &[f64], x: &[f64], out: &mut [f64]) {
    let in_dim = x.len();
    for (o, wrow) in out.iter_mut().zip(w.chunks_exact(in_dim)) {
        let mut acc = 0.0;
        for t in 0..in_dim {
            acc += wrow[t] * x[t];
        }
        *o += acc;
    }
}

/// Fully-connected stack with a shared hidden activation and an optional
/// output activation. Parameters are `{prefix}/w{i}` and `{prefix}/b{i}`.
#[derive(Clone, Debug)]
pub struct Mlp {
    prefix: String,
    dims: Vec<usize>,
    hidden_act: Act,
    out_act: Option<Act>,
}

impl Mlp {
    pub fn new(prefix: &str, dims: &[usize], hidden_act: Act, out_act: Option<Act>) -> Self {
        assert!(dims.len() >= 2, "mlp needs at least input and output dims");
        Mlp {
            prefix: prefix.to_string(),
            dims: dims.to_vec(),
            hidden_act,
            out_act,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn init_params(&self, ps: &mut ParamSet, rng: &mut impl Rng) {
        for (i, pair) in self.dims.windows(2).enumerate() {
            let (fi, fo) = (pair[0], pair[1]);
            ps.insert(
                &format!("{}/w{i}", self.prefix),
                Tensor::matrix(fo, fi, xavier(rng, fi, fo, fi * fo)),
            );
            ps.insert(&format!("{}/b{i}", self.prefix), Tensor::vector(vec![0.0; fo]));
        }
    }

    /// Plain forward pass for one input row; no tape involvement.
    pub fn forward(&self, ps: &ParamSet, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.in_dim(), "mlp input dim mismatch");
        let layers = self.dims.len() - 1;
        let mut cur = x.to_vec();
        for i in 0..layers {
            let w = ps.get(&format!("{}/w{i}", self.prefix)).expect("mlp weight");
            let b = ps.get(&format!("{}/b{i}", self.prefix)).expect("mlp bias");
            let mut next = b.data().to_vec();
            matvec_into(w.data(), &cur, &mut next);
            let act = if i + 1 == layers {
                self.out_act
            } else {
                Some(self.hidden_act)
            };
            if let Some(a) = act {
                next.iter_mut().for_each(|v| *v = a.apply(*v));
            }
            cur = next;
        }
        cur
    }

    /// Tape forward for a batch laid out as an [m, in] node.
    pub fn on_tape(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        x: NodeId,
    ) -> Result<NodeId, DiffnumError> {
        let layers = self.dims.len() - 1;
        let mut cur = x;
        for i in 0..layers {
            let w = bind.id(&format!("{}/w{i}", self.prefix))?;
            let b = bind.id(&format!("{}/b{i}", self.prefix))?;
            let z = tape.matmul_nt(cur, w)?;
            cur = tape.add_row(z, b)?;
            let act = if i + 1 == layers {
                self.out_act
            } else {
                Some(self.hidden_act)
            };
            if let Some(a) = act {
                cur = a.on_tape(tape, cur);
            }
        }
        Ok(cur)
    }
}

/// Single LSTM cell with per-gate weight matrices.
///
/// Parameters: `{prefix}/w_{i,f,g,o}` of shape [hidden, in],
/// `{prefix}/u_{i,f,g,o}` of shape [hidden, hidden], `{prefix}/b_{i,f,g,o}`.
/// The forget-gate bias starts at 1.
#[derive(Clone, Debug)]
pub struct LstmCell {
    prefix: String,
    in_dim: usize,
    hidden: usize,
}

const GATES: [char; 4] = ['i', 'f', 'g', 'o'];

impl LstmCell {
    pub fn new(prefix: &str, in_dim: usize, hidden: usize) -> Self {
        LstmCell {
            prefix: prefix.to_string(),
            in_dim,
            hidden,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn init_params(&self, ps: &mut ParamSet, rng: &mut impl Rng) {
        let (h, d) = (self.hidden, self.in_dim);
        for gate in GATES {
            ps.insert(
                &format!("{}/w_{gate}", self.prefix),
                Tensor::matrix(h, d, xavier(rng, d, h, h * d)),
            );
            ps.insert(
                &format!("{}/u_{gate}", self.prefix),
                Tensor::matrix(h, h, xavier(rng, h, h, h * h)),
            );
            let bias = if gate == 'f' { 1.0 } else { 0.0 };
            ps.insert(
                &format!("{}/b_{gate}", self.prefix),
                Tensor::vector(vec![bias; h]),
            );
        }
    }

    fn gate_pre(&self, ps: &ParamSet, gate: char, x: &[f64], h: &[f64]) -> Vec<f64> {
        let w = ps
            .get(&format!("{}/w_{gate}", self.prefix))
            .expect("lstm weight");
        let u = ps
            .get(&format!("{}/u_{gate}", self.prefix))
            .expect("lstm weight");
        let b = ps
            .get(&format!("{}/b_{gate}", self.prefix))
            .expect("lstm bias");
        let mut pre = b.data().to_vec();
        matvec_into(w.data(), x, &mut pre);
        matvec_into(u.data(), h, &mut pre);
        pre
    }

    /// Plain cell step; returns (h', c').
    pub fn forward(&self, ps: &ParamSet, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(x.len(), self.in_dim, "lstm input dim mismatch");
        assert_eq!(h.len(), self.hidden, "lstm hidden dim mismatch");
        let i: Vec<f64> = self
            .gate_pre(ps, 'i', x, h)
            .into_iter()
            .map(|v| Act::Sigmoid.apply(v))
            .collect();
        let f: Vec<f64> = self
            .gate_pre(ps, 'f', x, h)
            .into_iter()
            .map(|v| Act::Sigmoid.apply(v))
            .collect();
        let g: Vec<f64> = self
            .gate_pre(ps, 'g', x, h)
            .into_iter()
            .map(|v| v.tanh())
            .collect();
        let o: Vec<f64> = self
            .gate_pre(ps, 'o', x, h)
            .into_iter()
            .map(|v| Act::Sigmoid.apply(v))
            .collect();
        let c_next: Vec<f64> = (0..self.hidden)
            .map(|t| f[t] * c[t] + i[t] * g[t])
            .collect();
        let h_next: Vec<f64> = (0..self.hidden).map(|t| o[t] * c_next[t].tanh()).collect();
        (h_next, c_next)
    }

    fn gate_pre_tape(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        gate: char,
        x: NodeId,
        h: NodeId,
    ) -> Result<NodeId, DiffnumError> {
        let w = bind.id(&format!("{}/w_{gate}", self.prefix))?;
        let u = bind.id(&format!("{}/u_{gate}", self.prefix))?;
        let b = bind.id(&format!("{}/b_{gate}", self.prefix))?;
        let wx = tape.matmul_nt(x, w)?;
        let uh = tape.matmul_nt(h, u)?;
        let s = tape.add(wx, uh)?;
        tape.add_row(s, b)
    }

    /// Tape cell step on [1, in] and [1, hidden] nodes; returns (h', c').
    pub fn on_tape(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        x: NodeId,
        h: NodeId,
        c: NodeId,
    ) -> Result<(NodeId, NodeId), DiffnumError> {
        let i_pre = self.gate_pre_tape(tape, bind, 'i', x, h)?;
        let i = tape.sigmoid(i_pre);
        let f_pre = self.gate_pre_tape(tape, bind, 'f', x, h)?;
        let f = tape.sigmoid(f_pre);
        let g_pre = self.gate_pre_tape(tape, bind, 'g', x, h)?;
        let g = tape.tanh(g_pre);
        let o_pre = self.gate_pre_tape(tape, bind, 'o', x, h)?;
        let o = tape.sigmoid(o_pre);
        let fc = tape.mul(f, c)?;
        let ig = tape.mul(i, g)?;
        let c_next = tape.add(fc, ig)?;
        let tc = tape.tanh(c_next);
        let h_next = tape.mul(o, tc)?;
        Ok((h_next, c_next))
    }
}

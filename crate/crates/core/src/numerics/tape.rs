//! Tensor-level reverse-mode differentiation.
//!
//! Every operation appends a node to a [`Tape`]; [`Tape::backward`] walks the
//! nodes in exact reverse recording order and accumulates adjoints. Parameters
//! are registered with [`Tape::param`] and are the only leaves that receive
//! gradients. Constants (inputs, masks) are recorded but never differentiated,
//! which is how drop masks stay outside the gradient path.

use std::collections::BTreeMap;
use std::fmt;

use super::tensor::Tensor;
use super::NumericsError;

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Identifier of a learnable tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "param#{}", self.0)
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Tensor),
    AddConst(Var),
    Scale(Var, f64),
    SoftmaxRows(Var),
    NormalizeRows(Var, Vec<f64>),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        normalized: Tensor,
        inv_std: Vec<f64>,
    },
    Gelu(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    CrossEntropy(Var, Tensor),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of operations; see the module docs.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: BTreeMap<ParamId, Var>,
}

/// Gradients keyed by parameter.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    grads: BTreeMap<ParamId, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Result<&Tensor, NumericsError> {
        self.grads
            .get(&id)
            .ok_or(NumericsError::UnregisteredParameter(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn shape_err(&self, op: &'static str, a: Var, b: Var) -> NumericsError {
        NumericsError::ShapeMismatch {
            op,
            left: self.value(a).shape().to_vec(),
            right: self.value(b).shape().to_vec(),
        }
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn param(&mut self, id: ParamId, value: Tensor) -> Result<Var, NumericsError> {
        if self.params.contains_key(&id) {
            return Err(NumericsError::DuplicateParameter(id));
        }
        let v = self.push(value, Op::Leaf, true);
        self.params.insert(id, v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).matmul_nt(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMulNt(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).add(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Adds a bias vector (one value per column) to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var, NumericsError> {
        let (x, b) = (self.value(a), self.value(bias));
        if b.len() != x.cols() {
            return Err(self.shape_err("add_row", a, bias));
        }
        let mut out = x.clone();
        let bd = b.data();
        for r in 0..out.rows() {
            for (o, bv) in out.row_mut(r).iter_mut().zip(bd) {
                *o += bv;
            }
        }
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(out, Op::AddRow(a, bias), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    /// Element-wise product with a constant tensor (no gradient to `c`).
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Result<Var, NumericsError> {
        let out = self.value(a).zip_map(&c, "mul_const", |x, y| x * y)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::MulConst(a, c), rg))
    }

    /// Element-wise sum with a constant tensor (no gradient to `c`).
    pub fn add_const(&mut self, a: Var, c: &Tensor) -> Result<Var, NumericsError> {
        let out = self.value(a).add(c)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::AddConst(a), rg))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).scale(k);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, k), rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).softmax_rows()?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::SoftmaxRows(a), rg))
    }

    /// Divides each row by its sum. Fails on rows whose sum is not positive.
    pub fn normalize_rows(&mut self, a: Var) -> Result<Var, NumericsError> {
        let mut out = self.value(a).clone();
        let mut sums = Vec::with_capacity(out.rows());
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let s: f64 = row.iter().sum();
            if s.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
                return Err(NumericsError::DegenerateRow { row: r });
            }
            row.iter_mut().for_each(|x| *x /= s);
            sums.push(s);
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::NormalizeRows(a, sums), rg))
    }

    /// Row-wise layer normalization with learned per-column scale and shift.
    pub fn layer_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<Var, NumericsError> {
        let xv = self.value(x);
        let c = xv.cols();
        if self.value(gamma).len() != c {
            return Err(self.shape_err("layer_norm", x, gamma));
        }
        if self.value(beta).len() != c {
            return Err(self.shape_err("layer_norm", x, beta));
        }
        let mut normalized = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.rows());
        for r in 0..xv.rows() {
            let row = normalized.row_mut(r);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + eps).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * is);
            inv_std.push(is);
        }
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut out = normalized.clone();
        for r in 0..out.rows() {
            for ((o, gv), bv) in out.row_mut(r).iter_mut().zip(g).zip(b) {
                *o = *o * gv + bv;
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            },
            rg,
        ))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(gelu);
        let rg = self.rg(a);
        self.push(out, Op::Gelu(a), rg)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NumericsError> {
        let x = self.value(a);
        if x.rank() != 2 || len == 0 || start + len > x.cols() {
            return Err(NumericsError::IndexOutOfRange {
                op: "slice_cols",
                index: start + len,
                bound: x.cols(),
            });
        }
        let mut data = Vec::with_capacity(x.rows() * len);
        for r in 0..x.rows() {
            data.extend_from_slice(&x.row(r)[start..start + len]);
        }
        let out = Tensor::matrix(x.rows(), len, data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::SliceCols(a, start), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let first = *parts.first().ok_or(NumericsError::EmptyInput("concat_cols"))?;
        let rows = self.value(first).rows();
        let mut total = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rank() != 2 || v.rows() != rows {
                return Err(self.shape_err("concat_cols", first, p));
            }
            total += v.cols();
        }
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::matrix(rows, total, data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let first = *parts.first().ok_or(NumericsError::EmptyInput("concat_rows"))?;
        let cols = self.value(first).cols();
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return Err(self.shape_err("concat_rows", first, p));
            }
            data.extend_from_slice(v.data());
        }
        let rows = data.len() / cols;
        let out = Tensor::matrix(rows, cols, data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Selects rows of `a` (rank-2 view) in the given order.
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var, NumericsError> {
        let x = self.value(a);
        let cols = x.cols();
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            if i >= x.rows() {
                return Err(NumericsError::IndexOutOfRange {
                    op: "gather_rows",
                    index: i,
                    bound: x.rows(),
                });
            }
            data.extend_from_slice(x.row(i));
        }
        let out = Tensor::matrix(indices.len(), cols, data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::GatherRows(a, indices.to_vec()), rg))
    }

    /// Mean softmax cross-entropy of `logits` (`[batch, classes]`) against labels.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var, NumericsError> {
        let x = self.value(logits);
        if x.rank() != 2 || x.rows() != labels.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "cross_entropy",
                left: x.shape().to_vec(),
                right: vec![labels.len()],
            });
        }
        let classes = x.cols();
        let mut probs = x.clone();
        let mut loss = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            if label >= classes {
                return Err(NumericsError::IndexOutOfRange {
                    op: "cross_entropy",
                    index: label,
                    bound: classes,
                });
            }
            let row = probs.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[label];
            row.iter_mut().for_each(|v| *v = (*v - lse).exp());
            row[label] -= 1.0;
        }
        let batch = labels.len() as f64;
        let dlogits = probs.scale(1.0 / batch);
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss / batch),
            Op::CrossEntropy(logits, dlogits),
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    /// Reverse pass from a scalar `loss`.
    ///
    /// Every registered parameter gets a gradient; parameters the loss does
    /// not depend on get zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumericsError> {
        let lv = self
            .nodes
            .get(loss.0)
            .ok_or(NumericsError::IndexOutOfRange {
                op: "backward",
                index: loss.0,
                bound: self.nodes.len(),
            })?;
        if lv.value.len() != 1 {
            return Err(NumericsError::NotScalarLoss {
                shape: lv.value.shape().to_vec(),
            });
        }
        let mut adj: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(Tensor::full(lv.value.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            self.propagate(node, &g, &mut adj)?;
            // Leaves keep their adjoint for collection below.
            if matches!(node.op, Op::Leaf) {
                adj[idx] = Some(g);
            }
        }

        let grads = self
            .params
            .iter()
            .map(|(&id, &v)| {
                let g = adj
                    .get_mut(v.0)
                    .and_then(Option::take)
                    .unwrap_or_else(|| Tensor::zeros(self.value(v).shape()));
                (id, g)
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn propagate(
        &self,
        node: &Node,
        g: &Tensor,
        adj: &mut [Option<Tensor>],
    ) -> Result<(), NumericsError> {
        let mut acc = |v: Var, delta: Tensor| {
            if !self.rg(v) {
                return;
            }
            match &mut adj[v.0] {
                Some(t) => t.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    acc(*a, g.matmul_nt(self.value(*b))?);
                }
                if self.rg(*b) {
                    acc(*b, self.value(*a).matmul_tn(g)?);
                }
            }
            Op::MatMulNt(a, b) => {
                if self.rg(*a) {
                    acc(*a, g.matmul(self.value(*b))?);
                }
                if self.rg(*b) {
                    acc(*b, g.matmul_tn(self.value(*a))?);
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.scale(-1.0));
            }
            Op::AddRow(a, bias) => {
                acc(*a, g.clone());
                if self.rg(*bias) {
                    let mut gb = vec![0.0; g.cols()];
                    for r in 0..g.rows() {
                        for (s, v) in gb.iter_mut().zip(g.row(r)) {
                            *s += v;
                        }
                    }
                    let shape = self.value(*bias).shape().to_vec();
                    acc(*bias, Tensor::new(shape, gb)?);
                }
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    acc(*a, g.zip_map(self.value(*b), "mul", |x, y| x * y)?);
                }
                if self.rg(*b) {
                    acc(*b, g.zip_map(self.value(*a), "mul", |x, y| x * y)?);
                }
            }
            Op::MulConst(a, c) => acc(*a, g.zip_map(c, "mul_const", |x, y| x * y)?),
            Op::AddConst(a) => acc(*a, g.clone()),
            Op::Scale(a, k) => acc(*a, g.scale(*k)),
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut ga = g.clone();
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((o, yv), gv) in ga.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *o = yv * (gv - dot);
                    }
                }
                acc(*a, ga);
            }
            Op::NormalizeRows(a, sums) => {
                let y = &node.value;
                let mut ga = g.clone();
                for (r, s) in sums.iter().enumerate() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (o, gv) in ga.row_mut(r).iter_mut().zip(gr) {
                        *o = (gv - dot) / s;
                    }
                }
                acc(*a, ga);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            } => {
                let c = normalized.cols();
                let gamma_v = self.value(*gamma).data();
                if self.rg(*gamma) || self.rg(*beta) {
                    let mut gg = vec![0.0; c];
                    let mut gbeta = vec![0.0; c];
                    for r in 0..g.rows() {
                        for (j, (gv, nv)) in g.row(r).iter().zip(normalized.row(r)).enumerate() {
                            gg[j] += gv * nv;
                            gbeta[j] += gv;
                        }
                    }
                    let gs = self.value(*gamma).shape().to_vec();
                    let bs = self.value(*beta).shape().to_vec();
                    acc(*gamma, Tensor::new(gs, gg)?);
                    acc(*beta, Tensor::new(bs, gbeta)?);
                }
                if self.rg(*x) {
                    let mut gx = g.clone();
                    for (r, is) in inv_std.iter().enumerate() {
                        let nr = normalized.row(r);
                        let ghat: Vec<f64> =
                            g.row(r).iter().zip(gamma_v).map(|(a, b)| a * b).collect();
                        let mean_g = ghat.iter().sum::<f64>() / c as f64;
                        let mean_gn =
                            ghat.iter().zip(nr).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                        for ((o, gh), nv) in gx.row_mut(r).iter_mut().zip(&ghat).zip(nr) {
                            *o = is * (gh - mean_g - nv * mean_gn);
                        }
                    }
                    acc(*x, gx);
                }
            }
            Op::Gelu(a) => {
                acc(*a, g.zip_map(self.value(*a), "gelu", |gv, x| gv * gelu_grad(x))?);
            }
            Op::SliceCols(a, start) => {
                let src = self.value(*a);
                let len = g.cols();
                let mut ga = Tensor::zeros(src.shape());
                for r in 0..g.rows() {
                    ga.row_mut(r)[*start..start + len].copy_from_slice(g.row(r));
                }
                acc(*a, ga);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let w = pv.cols();
                    if self.rg(p) {
                        let mut data = Vec::with_capacity(pv.len());
                        for r in 0..g.rows() {
                            data.extend_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        acc(p, Tensor::new(pv.shape().to_vec(), data)?);
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let n = pv.len();
                    if self.rg(p) {
                        let data = g.data()[offset..offset + n].to_vec();
                        acc(p, Tensor::new(pv.shape().to_vec(), data)?);
                    }
                    offset += n;
                }
            }
            Op::GatherRows(a, indices) => {
                let mut ga = Tensor::zeros(self.value(*a).shape());
                for (i, &src) in indices.iter().enumerate() {
                    for (o, v) in ga.row_mut(src).iter_mut().zip(g.row(i)) {
                        *o += v;
                    }
                }
                acc(*a, ga);
            }
            Op::CrossEntropy(logits, dlogits) => acc(*logits, dlogits.scale(g.item())),
            Op::Sum(a) => acc(*a, Tensor::full(self.value(*a).shape(), g.item())),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let p = tape
            .param(ParamId(0), Tensor::matrix(2, 2, vec![1.0, -2.0, 3.0, 0.5]).unwrap())
            .unwrap();
        let loss = tape.sum(p);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(ParamId(0)).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn half_squared_norm_gradient_is_identity() {
        let values = vec![0.3, -1.7, 2.5];
        let mut tape = Tape::new();
        let p = tape.param(ParamId(3), Tensor::new(vec![3], values.clone()).unwrap()).unwrap();
        let sq = tape.mul(p, p).unwrap();
        let s = tape.sum(sq);
        let loss = tape.scale(s, 0.5);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(ParamId(3)).unwrap().data(), values.as_slice());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let p = tape.param(ParamId(0), Tensor::zeros(&[2])).unwrap();
        assert!(matches!(
            tape.backward(p),
            Err(NumericsError::NotScalarLoss { .. })
        ));
    }

    #[test]
    fn unregistered_parameter_lookup_fails() {
        let mut tape = Tape::new();
        let p = tape.param(ParamId(0), Tensor::scalar(2.0)).unwrap();
        let grads = tape.backward(p).unwrap();
        assert!(matches!(
            grads.get(ParamId(7)),
            Err(NumericsError::UnregisteredParameter(ParamId(7)))
        ));
    }

    #[test]
    fn unused_parameter_gets_zero_gradient_of_same_shape() {
        let mut tape = Tape::new();
        let a = tape.param(ParamId(0), Tensor::scalar(2.0)).unwrap();
        tape.param(ParamId(1), Tensor::ones(&[3, 2])).unwrap();
        let loss = tape.scale(a, 4.0);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(ParamId(0)).unwrap().data(), &[4.0]);
        let unused = grads.get(ParamId(1)).unwrap();
        assert_eq!(unused.shape(), &[3, 2]);
        assert!(unused.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn duplicate_registration_rejected() {
        let mut tape = Tape::new();
        tape.param(ParamId(0), Tensor::scalar(1.0)).unwrap();
        assert!(matches!(
            tape.param(ParamId(0), Tensor::scalar(1.0)),
            Err(NumericsError::DuplicateParameter(_))
        ));
    }

    #[test]
    fn constants_receive_no_gradient_work() {
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::ones(&[2, 2]));
        let p = tape.param(ParamId(0), Tensor::ones(&[2, 2])).unwrap();
        let m = tape.matmul(c, p).unwrap();
        let loss = tape.sum(m);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(ParamId(0)).unwrap().data(), &[2.0; 4]);
    }

    #[test]
    fn normalize_rows_rejects_empty_mass() {
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap());
        assert!(matches!(
            tape.normalize_rows(c),
            Err(NumericsError::DegenerateRow { row: 0 })
        ));
    }
}

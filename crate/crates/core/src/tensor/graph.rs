use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{matmul_raw, SparseMatrix, Tensor, TensorError, PROB_EPSILON};

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulNT(Var, Var),
    /// `aᵀ · b`
    MatMulTN(Var, Var),
    SparseMatMul(Arc<SparseMatrix>, Var),
    Add(Var, Var),
    AddN(Vec<Var>),
    Mul(Var, Var),
    Scale(Var, f64),
    RowSum(Var),
    Relu(Var),
    Sigmoid(Var),
    Softmax { input: Var, axis: usize },
    Conv1d { input: Var, kernel: Var, dilation: usize },
    Embed { table: Var, ids: Vec<usize> },
    Dropout { input: Var, mask: Vec<f64> },
    Bce { pred: Var, targets: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

/// Tape of recorded operations for one forward/backward pass.
///
/// Values are computed eagerly when an operation is recorded. A graph is
/// single-use: build it, call [`Graph::backward`] once, read gradients, drop it.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// Registers a leaf. Gradients are tracked iff `t.requires_grad()`.
    pub fn param(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, t.requires_grad())
    }

    /// Registers a leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), Op::Leaf, false)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn data(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn value(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::new(&n.shape, n.value.clone()).expect("graph node shape is consistent")
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.node(v).value[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn dims2(&self, op: &'static str, v: Var) -> Result<(usize, usize), TensorError> {
        let s = &self.node(v).shape;
        if s.len() != 2 {
            return Err(TensorError::BadRank {
                op,
                expected: 2,
                shape: s.clone(),
            });
        }
        Ok((s[0], s[1]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = self.dims2("matmul", a)?;
        let (k2, n) = self.dims2("matmul", b)?;
        if k != k2 {
            return Err(TensorError::mismatch("matmul", &[m, k], &[k2, n]));
        }
        let mut out = vec![0.0; m * n];
        matmul_raw(self.data(a), self.data(b), m, k, n, &mut out);
        let ng = self.needs(&[a, b]);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), ng))
    }

    /// `a · bᵀ` for `a: m×k`, `b: n×k`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = self.dims2("matmul_nt", a)?;
        let (n, k2) = self.dims2("matmul_nt", b)?;
        if k != k2 {
            return Err(TensorError::mismatch("matmul_nt", &[m, k], &[n, k2]));
        }
        let mut out = vec![0.0; m * n];
        matmul_nt_raw(self.data(a), self.data(b), m, k, n, &mut out);
        let ng = self.needs(&[a, b]);
        Ok(self.push(vec![m, n], out, Op::MatMulNT(a, b), ng))
    }

    /// `aᵀ · b` for `a: k×m`, `b: k×n`.
    pub fn matmul_tn(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (k, m) = self.dims2("matmul_tn", a)?;
        let (k2, n) = self.dims2("matmul_tn", b)?;
        if k != k2 {
            return Err(TensorError::mismatch("matmul_tn", &[k, m], &[k2, n]));
        }
        let mut out = vec![0.0; m * n];
        matmul_tn_raw(self.data(a), self.data(b), k, m, n, &mut out);
        let ng = self.needs(&[a, b]);
        Ok(self.push(vec![m, n], out, Op::MatMulTN(a, b), ng))
    }

    /// Constant sparse matrix times a dense node.
    pub fn sparse_matmul(&mut self, a: &Arc<SparseMatrix>, x: Var) -> Result<Var, TensorError> {
        let (k, n) = self.dims2("sparse_matmul", x)?;
        if a.cols() != k {
            return Err(TensorError::mismatch(
                "sparse_matmul",
                &[a.rows(), a.cols()],
                &[k, n],
            ));
        }
        let mut out = vec![0.0; a.rows() * n];
        a.mul_dense_raw(self.data(x), n, &mut out);
        let ng = self.needs(&[x]);
        Ok(self.push(vec![a.rows(), n], out, Op::SparseMatMul(Arc::clone(a), x), ng))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::mismatch(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("add", a, b)?;
        let out = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x + y).collect();
        let ng = self.needs(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Add(a, b), ng))
    }

    /// Sum of same-shaped nodes, accumulated in argument order.
    pub fn add_n(&mut self, vars: &[Var]) -> Result<Var, TensorError> {
        let first = *vars.first().ok_or(TensorError::BadRank {
            op: "add_n",
            expected: 1,
            shape: vec![],
        })?;
        let mut out = self.data(first).to_vec();
        for &v in &vars[1..] {
            self.same_shape("add_n", first, v)?;
            out.iter_mut().zip(self.data(v)).for_each(|(o, x)| *o += x);
        }
        let ng = self.needs(vars);
        Ok(self.push(self.shape(first).to_vec(), out, Op::AddN(vars.to_vec()), ng))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("mul", a, b)?;
        let out = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).collect();
        let ng = self.needs(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.data(a).iter().map(|x| x * factor).collect();
        let ng = self.needs(&[a]);
        self.push(self.shape(a).to_vec(), out, Op::Scale(a, factor), ng)
    }

    /// Sums each row of an `m×n` matrix into a length-`m` vector.
    pub fn row_sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let (m, n) = self.dims2("row_sum", a)?;
        let out = self.data(a).chunks(n).map(|r| r.iter().sum()).collect();
        let ng = self.needs(&[a]);
        Ok(self.push(vec![m], out, Op::RowSum(a), ng))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.data(a).iter().map(|&x| x.max(0.0)).collect();
        let ng = self.needs(&[a]);
        self.push(self.shape(a).to_vec(), out, Op::Relu(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.data(a).iter().map(|&x| sigmoid(x)).collect();
        let ng = self.needs(&[a]);
        self.push(self.shape(a).to_vec(), out, Op::Sigmoid(a), ng)
    }

    /// Softmax along `axis` (0 or 1 for matrices, 0 for vectors).
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var, TensorError> {
        let len = self.axis_len("softmax", x, axis)?;
        self.softmax_masked(x, axis, len)
    }

    /// Softmax along `axis` over the first `valid` entries only; the rest get
    /// probability zero, as if their logits were `-inf`.
    pub fn softmax_masked(&mut self, x: Var, axis: usize, valid: usize) -> Result<Var, TensorError> {
        let len = self.axis_len("softmax", x, axis)?;
        let valid = valid.clamp(1, len);
        let (groups, stride, group_step) = self.axis_layout(x, axis);
        let src = self.data(x);
        let mut out = vec![0.0; src.len()];
        for g in 0..groups {
            let base = g * group_step;
            let idx = |i: usize| base + i * stride;
            let max = (0..valid).map(|i| src[idx(i)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for i in 0..valid {
                let e = (src[idx(i)] - max).exp();
                out[idx(i)] = e;
                total += e;
            }
            for i in 0..valid {
                out[idx(i)] /= total;
            }
        }
        let ng = self.needs(&[x]);
        Ok(self.push(self.shape(x).to_vec(), out, Op::Softmax { input: x, axis }, ng))
    }

    fn axis_len(&self, op: &'static str, x: Var, axis: usize) -> Result<usize, TensorError> {
        let s = self.shape(x);
        if s.len() > 2 || axis >= s.len() {
            return Err(TensorError::BadRank {
                op,
                expected: axis + 1,
                shape: s.to_vec(),
            });
        }
        Ok(s[axis])
    }

    /// `(group count, stride between entries of a group, offset between groups)`.
    fn axis_layout(&self, x: Var, axis: usize) -> (usize, usize, usize) {
        let s = self.shape(x);
        match (s.len(), axis) {
            (1, _) => (1, 1, 0),
            (_, 0) => (s[1], s[1], 1),
            _ => (s[0], 1, s[1]),
        }
    }

    /// Valid 1-D dilated convolution of `input: l×c_in` with
    /// `kernel: s×c_in×c_out`, producing `(l − (s−1)·dilation) × c_out`.
    pub fn dilated_conv1d(&mut self, input: Var, kernel: Var, dilation: usize) -> Result<Var, TensorError> {
        if dilation == 0 {
            return Err(TensorError::ZeroDilation);
        }
        let (l, c_in) = self.dims2("dilated_conv1d", input)?;
        let ks = self.shape(kernel).to_vec();
        if ks.len() != 3 || ks[1] != c_in {
            return Err(TensorError::mismatch("dilated_conv1d", &[l, c_in], &ks));
        }
        let (s, c_out) = (ks[0], ks[2]);
        let needed = (s - 1) * dilation + 1;
        if l < needed {
            return Err(TensorError::SequenceTooShort { len: l, needed });
        }
        let l_out = l - (s - 1) * dilation;
        let x = self.data(input);
        let k = self.data(kernel);
        let mut out = vec![0.0; l_out * c_out];
        for t in 0..l_out {
            let out_row = &mut out[t * c_out..(t + 1) * c_out];
            for j in 0..s {
                let x_row = &x[(t + j * dilation) * c_in..(t + j * dilation + 1) * c_in];
                for (ci, &xv) in x_row.iter().enumerate() {
                    let k_row = &k[(j * c_in + ci) * c_out..(j * c_in + ci + 1) * c_out];
                    for (o, &kv) in out_row.iter_mut().zip(k_row) {
                        *o += xv * kv;
                    }
                }
            }
        }
        let ng = self.needs(&[input, kernel]);
        Ok(self.push(
            vec![l_out, c_out],
            out,
            Op::Conv1d {
                input,
                kernel,
                dilation,
            },
            ng,
        ))
    }

    /// Gathers rows of `table` (`V×d`) into an `ids.len()×d` matrix.
    pub fn embed(&mut self, table: Var, ids: &[usize]) -> Result<Var, TensorError> {
        let (rows, d) = self.dims2("embed", table)?;
        if ids.is_empty() {
            return Err(TensorError::BadLength {
                shape: vec![0, d],
                len: 0,
            });
        }
        let t = self.data(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= rows {
                return Err(TensorError::IndexOutOfBounds { index: id, rows });
            }
            out.extend_from_slice(&t[id * d..(id + 1) * d]);
        }
        let ng = self.needs(&[table]);
        Ok(self.push(
            vec![ids.len(), d],
            out,
            Op::Embed {
                table,
                ids: ids.to_vec(),
            },
            ng,
        ))
    }

    /// Inverted dropout: in training, zeroes each entry with probability `rate`
    /// and rescales survivors by `1/(1−rate)`. Identity otherwise.
    pub fn dropout(&mut self, x: Var, rate: f64, seed: u64, training: bool) -> Result<Var, TensorError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::BadDropoutRate(rate));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.data(x).len())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let out = self.data(x).iter().zip(&mask).map(|(v, m)| v * m).collect();
        let ng = self.needs(&[x]);
        Ok(self.push(self.shape(x).to_vec(), out, Op::Dropout { input: x, mask }, ng))
    }

    /// Summed binary cross-entropy between probabilities and `{0,1}` targets,
    /// with predictions clamped to `[ε, 1−ε]`.
    pub fn bce_loss(&mut self, pred: Var, targets: &[f64]) -> Result<Var, TensorError> {
        let p = self.data(pred);
        if p.len() != targets.len() {
            return Err(TensorError::mismatch("bce_loss", self.shape(pred), &[targets.len()]));
        }
        let loss = p
            .iter()
            .zip(targets)
            .map(|(&p, &y)| {
                let p = p.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON);
                -y * p.ln() - (1.0 - y) * (1.0 - p).ln()
            })
            .sum();
        let ng = self.needs(&[pred]);
        Ok(self.push(
            vec![1],
            vec![loss],
            Op::Bce {
                pred,
                targets: targets.to_vec(),
            },
            ng,
        ))
    }

    /// Reverse-mode sweep from a scalar node.
    pub fn backward(&mut self, output: Var) -> Result<(), TensorError> {
        if self.node(output).value.len() != 1 {
            return Err(TensorError::NonScalarOutput(self.shape(output).to_vec()));
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[output.0] = Some(vec![1.0]);
        for i in (0..=output.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    /// Gradient of the last [`Graph::backward`] output with respect to `v`.
    /// Nodes that do not influence the output get a zero gradient.
    pub fn grad(&self, v: Var) -> Vec<f64> {
        self.grads
            .get(v.0)
            .and_then(|g| g.clone())
            .unwrap_or_else(|| vec![0.0; self.node(v).value.len()])
    }

    fn accumulate(&mut self, v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let n = self.nodes[v.0].value.len();
        let slot = self.grads[v.0].get_or_insert_with(|| vec![0.0; n]);
        f(slot);
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        // Split borrows: op inputs always have smaller indices than `i`.
        let (before, rest) = self.nodes.split_at(i);
        let node = &rest[0];
        let val = |v: Var| -> &[f64] { &before[v.0].value };
        let shp = |v: Var| -> &[usize] { &before[v.0].shape };
        let mut updates: Vec<(Var, Vec<f64>)> = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (shp(*a)[0], shp(*a)[1]);
                let n = shp(*b)[1];
                let mut da = vec![0.0; m * k];
                matmul_nt_raw(g, val(*b), m, n, k, &mut da);
                let mut db = vec![0.0; k * n];
                matmul_tn_raw(val(*a), g, m, k, n, &mut db);
                updates.push((*a, da));
                updates.push((*b, db));
            }
            Op::MatMulNT(a, b) => {
                // C = A·Bᵀ: dA = dC·B, dB = dCᵀ·A
                let (m, k) = (shp(*a)[0], shp(*a)[1]);
                let n = shp(*b)[0];
                let mut da = vec![0.0; m * k];
                matmul_raw(g, val(*b), m, n, k, &mut da);
                let mut db = vec![0.0; n * k];
                matmul_tn_raw(g, val(*a), m, n, k, &mut db);
                updates.push((*a, da));
                updates.push((*b, db));
            }
            Op::MatMulTN(a, b) => {
                // C = Aᵀ·B: dA = B·dCᵀ, dB = A·dC
                let (k, m) = (shp(*a)[0], shp(*a)[1]);
                let n = shp(*b)[1];
                let mut da = vec![0.0; k * m];
                matmul_nt_raw(val(*b), g, k, n, m, &mut da);
                let mut db = vec![0.0; k * n];
                matmul_raw(val(*a), g, k, m, n, &mut db);
                updates.push((*a, da));
                updates.push((*b, db));
            }
            Op::SparseMatMul(a, x) => {
                let n = shp(*x)[1];
                let mut dx = vec![0.0; a.cols() * n];
                a.mul_dense_transposed_raw(g, n, &mut dx);
                updates.push((*x, dx));
            }
            Op::Add(a, b) => {
                updates.push((*a, g.to_vec()));
                updates.push((*b, g.to_vec()));
            }
            Op::AddN(vars) => {
                for v in vars {
                    updates.push((*v, g.to_vec()));
                }
            }
            Op::Mul(a, b) => {
                let da = g.iter().zip(val(*b)).map(|(g, y)| g * y).collect();
                let db = g.iter().zip(val(*a)).map(|(g, x)| g * x).collect();
                updates.push((*a, da));
                updates.push((*b, db));
            }
            Op::Scale(a, c) => updates.push((*a, g.iter().map(|g| g * c).collect())),
            Op::RowSum(a) => {
                let n = shp(*a)[1];
                let da = g.iter().flat_map(|&gi| std::iter::repeat_n(gi, n)).collect();
                updates.push((*a, da));
            }
            Op::Relu(a) => {
                let da = g
                    .iter()
                    .zip(val(*a))
                    .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                    .collect();
                updates.push((*a, da));
            }
            Op::Sigmoid(a) => {
                let da = g
                    .iter()
                    .zip(&node.value)
                    .map(|(g, y)| g * y * (1.0 - y))
                    .collect();
                updates.push((*a, da));
            }
            Op::Softmax { input, axis } => {
                let s = shp(*input);
                let (groups, stride, step) = match (s.len(), *axis) {
                    (1, _) => (1, 1, 0),
                    (_, 0) => (s[1], s[1], 1),
                    _ => (s[0], 1, s[1]),
                };
                let len = if s.len() == 1 { s[0] } else { s[*axis] };
                let y = &node.value;
                let mut dx = vec![0.0; y.len()];
                for gi in 0..groups {
                    let idx = |j: usize| gi * step + j * stride;
                    let dot: f64 = (0..len).map(|j| y[idx(j)] * g[idx(j)]).sum();
                    for j in 0..len {
                        dx[idx(j)] = y[idx(j)] * (g[idx(j)] - dot);
                    }
                }
                updates.push((*input, dx));
            }
            Op::Conv1d {
                input,
                kernel,
                dilation,
            } => {
                let (l, c_in) = (shp(*input)[0], shp(*input)[1]);
                let (s, c_out) = (shp(*kernel)[0], shp(*kernel)[2]);
                let l_out = node.shape[0];
                let x = val(*input);
                let k = val(*kernel);
                let mut dx = vec![0.0; l * c_in];
                let mut dk = vec![0.0; s * c_in * c_out];
                for t in 0..l_out {
                    let g_row = &g[t * c_out..(t + 1) * c_out];
                    for j in 0..s {
                        let pos = t + j * dilation;
                        for ci in 0..c_in {
                            let kb = (j * c_in + ci) * c_out;
                            let xv = x[pos * c_in + ci];
                            let mut acc = 0.0;
                            for co in 0..c_out {
                                acc += g_row[co] * k[kb + co];
                                dk[kb + co] += xv * g_row[co];
                            }
                            dx[pos * c_in + ci] += acc;
                        }
                    }
                }
                updates.push((*input, dx));
                updates.push((*kernel, dk));
            }
            Op::Embed { table, ids } => {
                let d = shp(*table)[1];
                let mut dt = vec![0.0; before[table.0].value.len()];
                for (r, &id) in ids.iter().enumerate() {
                    for c in 0..d {
                        dt[id * d + c] += g[r * d + c];
                    }
                }
                updates.push((*table, dt));
            }
            Op::Dropout { input, mask } => {
                updates.push((*input, g.iter().zip(mask).map(|(g, m)| g * m).collect()));
            }
            Op::Bce { pred, targets } => {
                let dp = val(*pred)
                    .iter()
                    .zip(targets)
                    .map(|(&p, &y)| {
                        if !(PROB_EPSILON..=1.0 - PROB_EPSILON).contains(&p) {
                            0.0
                        } else {
                            g[0] * (-y / p + (1.0 - y) / (1.0 - p))
                        }
                    })
                    .collect();
                updates.push((*pred, dp));
            }
        }
        for (v, delta) in updates {
            self.accumulate(v, |slot| {
                slot.iter_mut().zip(&delta).for_each(|(s, d)| *s += d);
            });
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `out += a · bᵀ` with `a: m×k`, `b: n×k`.
fn matmul_nt_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            out[i * n + j] += a_row.iter().zip(b_row).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `out += aᵀ · b` with `a: k×m`, `b: k×n`.
fn matmul_tn_raw(a: &[f64], b: &[f64], k: usize, m: usize, n: usize, out: &mut [f64]) {
    for p in 0..k {
        let b_row = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = a[p * m + i];
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in out[i * n..(i + 1) * n].iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

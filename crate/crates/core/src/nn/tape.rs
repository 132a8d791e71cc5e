//! Tensor-level reverse-mode differentiation.
//!
//! Every primitive appends one node to a [`Tape`] holding its forward value
//! and whatever it needs to replay the adjoint. [`Tape::backward`] walks the
//! nodes in exact reverse order of recording and can only run once.

use super::{NnError, Scalar, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<S> {
    Leaf,
    Constant,
    MatMul { a: Var, b: Var },
    BatchMatMul { a: Var, b: Var, trans_b: bool },
    Add { a: Var, b: Var },
    AddRow { a: Var, row: Var },
    Mul { a: Var, b: Var },
    Scale { a: Var, factor: S },
    AddScalar { a: Var },
    Gelu { a: Var },
    Exp { a: Var },
    Softmax { a: Var },
    LogSoftmax { a: Var },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<S>, rstd: Vec<S> },
    Embedding { table: Var, indices: Vec<usize> },
    Reshape { a: Var },
    Sum { a: Var },
    Dot { a: Var, weights: Vec<S> },
    GatherLast { a: Var, indices: Vec<usize> },
    SegmentSum { a: Var, segment: usize },
}

#[derive(Debug)]
struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    requires_grad: bool,
}

/// Record of one forward pass.
#[derive(Debug, Default)]
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
    consumed: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<S> {
    grads: Vec<Option<Tensor<S>>>,
    shapes: Vec<Vec<usize>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, var: Var) -> Option<&Tensor<S>> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient of `var`, or zeros when the loss does not depend on it.
    pub fn take_or_zero(&mut self, var: Var) -> Tensor<S> {
        match self.grads[var.0].take() {
            Some(g) => g,
            None => Tensor::zeros(&self.shapes[var.0]),
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// `tanh` through one `exp`; saturates to `±1` without overflow.
fn fast_tanh<S: Scalar>(u: S) -> S {
    S::one() - S::lit(2.0) / (S::one() + (u + u).exp())
}

/// Tanh-approximated GELU.
pub fn gelu<S: Scalar>(x: S) -> S {
    let u = S::lit(GELU_C) * (x + S::lit(GELU_A) * x * x * x);
    S::lit(0.5) * x * (S::one() + fast_tanh(u))
}

fn gelu_grad<S: Scalar>(x: S) -> S {
    let u = S::lit(GELU_C) * (x + S::lit(GELU_A) * x * x * x);
    let t = fast_tanh(u);
    let du = S::lit(GELU_C) * (S::one() + S::lit(3.0 * GELU_A) * x * x);
    S::lit(0.5) * (S::one() + t) + S::lit(0.5) * x * (S::one() - t * t) * du
}

/// Numerically stable log-sum-exp of a slice.
pub fn log_sum_exp<S: Scalar>(xs: &[S]) -> S {
    let max = xs.iter().copied().fold(S::neg_infinity(), S::max);
    if !max.is_finite() {
        return max;
    }
    let sum: S = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Softmax of one row with an optional visible-prefix length; entries past
/// `visible` are exactly zero.
fn softmax_row<S: Scalar>(row: &[S], visible: usize, out: &mut [S]) {
    let max = row[..visible].iter().copied().fold(S::neg_infinity(), S::max);
    let mut total = S::zero();
    for (o, &x) in out[..visible].iter_mut().zip(&row[..visible]) {
        *o = (x - max).exp();
        total += *o;
    }
    let inv = total.recip();
    out[..visible].iter_mut().for_each(|o| *o *= inv);
    out[visible..].iter_mut().for_each(|o| *o = S::zero());
}

fn accumulate<S: Scalar>(
    grads: &mut [Option<Tensor<S>>],
    shape: &[usize],
    idx: usize,
    f: impl FnOnce(&mut [S]),
) {
    let slot = grads[idx].get_or_insert_with(|| Tensor::zeros(shape));
    f(slot.data_mut());
}

/// Adds `term(i)` to every entry, building the slot directly when empty.
fn accumulate_with<S: Scalar>(
    grads: &mut [Option<Tensor<S>>],
    shape: &[usize],
    idx: usize,
    term: impl Fn(usize) -> S,
) {
    match &mut grads[idx] {
        Some(t) => t.data_mut().iter_mut().enumerate().for_each(|(i, x)| *x += term(i)),
        None => {
            let len = shape.iter().product();
            let data = (0..len).map(term).collect();
            grads[idx] = Some(Tensor::new(shape.to_vec(), data).expect("length matches shape"));
        }
    }
}

/// Adds `g` (same length) into the slot, moving it in when empty.
fn accumulate_owned<S: Scalar>(grads: &mut [Option<Tensor<S>>], shape: &[usize], idx: usize, g: Tensor<S>) {
    match &mut grads[idx] {
        Some(t) => t.data_mut().iter_mut().zip(g.data()).for_each(|(x, &y)| *x += y),
        None => grads[idx] = Some(g.reshaped(shape).expect("length matches shape")),
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor<S> {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn grad_flag(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    /// Registers a differentiable input (a parameter).
    pub fn leaf(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Registers an input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (m, k, n) = match (sa, sb) {
            ([m, k], [k2, n]) if k == k2 => (*m, *k, *n),
            _ => return Err(NnError::shape("matmul", sa, sb)),
        };
        let mut out = Tensor::zeros(&[m, n]);
        S::gemm(
            m,
            k,
            n,
            S::one(),
            self.value(a).data(),
            (k, 1),
            self.value(b).data(),
            (n, 1),
            S::zero(),
            out.data_mut(),
            (n, 1),
        );
        let rg = self.grad_flag(&[a, b]);
        Ok(self.push(out, Op::MatMul { a, b }, rg))
    }

    /// Batched product of rank-3 tensors: `[B, M, K] x [B, K, N]`, or with
    /// `trans_b` the second operand is `[B, N, K]` and used transposed.
    pub fn batch_matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var, NnError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (batch, m, k, n) = match (sa, sb) {
            ([ba, m, k], [bb, k2, n]) if ba == bb && !trans_b && k == k2 => (*ba, *m, *k, *n),
            ([ba, m, k], [bb, n, k2]) if ba == bb && trans_b && k == k2 => (*ba, *m, *k, *n),
            _ => return Err(NnError::shape("batch_matmul", sa, sb)),
        };
        let mut out = Tensor::zeros(&[batch, m, n]);
        let b_strides = if trans_b { (1, k) } else { (n, 1) };
        {
            let av = self.nodes[a.0].value.data();
            let bv = self.nodes[b.0].value.data();
            let od = out.data_mut();
            for i in 0..batch {
                S::gemm(
                    m,
                    k,
                    n,
                    S::one(),
                    &av[i * m * k..(i + 1) * m * k],
                    (k, 1),
                    &bv[i * k * n..(i + 1) * k * n],
                    b_strides,
                    S::zero(),
                    &mut od[i * m * n..(i + 1) * m * n],
                    (n, 1),
                );
            }
        }
        let rg = self.grad_flag(&[a, b]);
        Ok(self.push(out, Op::BatchMatMul { a, b, trans_b }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        if self.shape(a) != self.shape(b) {
            return Err(NnError::shape("add", self.shape(a), self.shape(b)));
        }
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let rg = self.grad_flag(&[a, b]);
        Ok(self.push(out, Op::Add { a, b }, rg))
    }

    /// Adds a vector to every row (last axis) of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NnError> {
        let width = self.value(a).last_dim();
        if self.shape(row) != [width] {
            return Err(NnError::shape("add_row", self.shape(a), self.shape(row)));
        }
        let mut out = self.value(a).clone();
        let r = self.value(row).data();
        for chunk in out.data_mut().chunks_mut(width) {
            for (o, &v) in chunk.iter_mut().zip(r) {
                *o += v;
            }
        }
        let rg = self.grad_flag(&[a, row]);
        Ok(self.push(out, Op::AddRow { a, row }, rg))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        if self.shape(a) != self.shape(b) {
            return Err(NnError::shape("mul", self.shape(a), self.shape(b)));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let out = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.grad_flag(&[a, b]);
        Ok(self.push(out, Op::Mul { a, b }, rg))
    }

    pub fn scale(&mut self, a: Var, factor: S) -> Var {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= factor);
        let rg = self.grad_flag(&[a]);
        self.push(out, Op::Scale { a, factor }, rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: S) -> Var {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v += c);
        let rg = self.grad_flag(&[a]);
        self.push(out, Op::AddScalar { a }, rg)
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v = gelu(*v));
        let rg = self.grad_flag(&[a]);
        self.push(out, Op::Gelu { a }, rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.exp());
        let rg = self.grad_flag(&[a]);
        self.push(out, Op::Exp { a }, rg)
    }

    /// Softmax over the last axis. With `causal`, the input must have rank
    /// at least 2 and entry `(r, c)` of every trailing matrix is masked out
    /// when `c > r`.
    pub fn softmax(&mut self, a: Var, causal: bool) -> Result<Var, NnError> {
        let shape = self.shape(a).to_vec();
        let cols = self.value(a).last_dim();
        let rows_per_mat = if causal {
            match shape.len() {
                0 | 1 => return Err(NnError::Rank { op: "causal softmax", shape }),
                n => shape[n - 2],
            }
        } else {
            usize::MAX
        };
        let mut out = Tensor::zeros(&shape);
        let x = self.nodes[a.0].value.data();
        for (r, (xr, or)) in x.chunks(cols).zip(out.data_mut().chunks_mut(cols)).enumerate() {
            let visible = if causal {
                ((r % rows_per_mat) + 1).min(cols)
            } else {
                cols
            };
            softmax_row(xr, visible, or);
        }
        let rg = self.grad_flag(&[a]);
        Ok(self.push(out, Op::Softmax { a }, rg))
    }

    /// Log-softmax over the last axis, stabilized by max subtraction.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        let cols = out.last_dim();
        for row in out.data_mut().chunks_mut(cols) {
            let lse = log_sum_exp(row);
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let rg = self.grad_flag(&[a]);
        self.push(out, Op::LogSoftmax { a }, rg)
    }

    /// Layer normalization over the last axis followed by a per-feature
    /// affine map.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: S) -> Result<Var, NnError> {
        let width = self.value(x).last_dim();
        if self.shape(gamma) != [width] || self.shape(beta) != [width] {
            return Err(NnError::shape("layer_norm", self.shape(x), self.shape(gamma)));
        }
        let shape = self.shape(x).to_vec();
        let rows = self.value(x).len() / width.max(1);
        let mut xhat = vec![S::zero(); rows * width];
        let mut rstd = vec![S::zero(); rows];
        let mut out = Tensor::zeros(&shape);
        {
            let xv = self.nodes[x.0].value.data();
            let g = self.nodes[gamma.0].value.data();
            let b = self.nodes[beta.0].value.data();
            let w = S::lit(width as f64);
            let od = out.data_mut();
            for r in 0..rows {
                let row = &xv[r * width..(r + 1) * width];
                let mean = row.iter().copied().sum::<S>() / w;
                let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / w;
                let inv = (var + eps).sqrt().recip();
                rstd[r] = inv;
                for c in 0..width {
                    let h = (row[c] - mean) * inv;
                    xhat[r * width + c] = h;
                    od[r * width + c] = h * g[c] + b[c];
                }
            }
        }
        let rg = self.grad_flag(&[x, gamma, beta]);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    /// Row lookup: `table[V, H]` gathered at `indices` into `[len, H]`.
    pub fn embedding(&mut self, table: Var, indices: &[usize]) -> Result<Var, NnError> {
        let (vocab, width) = match self.shape(table) {
            [v, h] => (*v, *h),
            s => return Err(NnError::Rank { op: "embedding", shape: s.to_vec() }),
        };
        if let Some(&bad) = indices.iter().find(|&&i| i >= vocab) {
            return Err(NnError::Index { op: "embedding", index: bad, bound: vocab });
        }
        let tv = self.value(table).data();
        let mut data = Vec::with_capacity(indices.len() * width);
        for &i in indices {
            data.extend_from_slice(&tv[i * width..(i + 1) * width]);
        }
        let out = Tensor::new(vec![indices.len(), width], data)?;
        let rg = self.grad_flag(&[table]);
        Ok(self.push(
            out,
            Op::Embedding {
                table,
                indices: indices.to_vec(),
            },
            rg,
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, NnError> {
        let out = self.value(a).clone().reshaped(shape)?;
        let rg = self.grad_flag(&[a]);
        Ok(self.push(out, Op::Reshape { a }, rg))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().copied().sum();
        let rg = self.grad_flag(&[a]);
        self.push(Tensor::scalar(total), Op::Sum { a }, rg)
    }

    /// `sum_i weights[i] * a[i]` for a rank-1 `a`; the weights are constants.
    pub fn dot_const(&mut self, a: Var, weights: &[S]) -> Result<Var, NnError> {
        if self.shape(a) != [weights.len()] {
            return Err(NnError::shape("dot_const", self.shape(a), &[weights.len()]));
        }
        let total = self
            .value(a)
            .data()
            .iter()
            .zip(weights)
            .map(|(&x, &w)| x * w)
            .sum();
        let rg = self.grad_flag(&[a]);
        Ok(self.push(
            Tensor::scalar(total),
            Op::Dot {
                a,
                weights: weights.to_vec(),
            },
            rg,
        ))
    }

    /// Picks `a[r, indices[r]]` from a rank-2 `a`, giving a rank-1 result.
    pub fn gather_last(&mut self, a: Var, indices: &[usize]) -> Result<Var, NnError> {
        let (rows, cols) = match self.shape(a) {
            [r, c] => (*r, *c),
            s => return Err(NnError::Rank { op: "gather_last", shape: s.to_vec() }),
        };
        if rows != indices.len() {
            return Err(NnError::shape("gather_last", self.shape(a), &[indices.len()]));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= cols) {
            return Err(NnError::Index { op: "gather_last", index: bad, bound: cols });
        }
        let av = self.value(a).data();
        let data = indices
            .iter()
            .enumerate()
            .map(|(r, &c)| av[r * cols + c])
            .collect();
        let rg = self.grad_flag(&[a]);
        Ok(self.push(
            Tensor::from_vec(data),
            Op::GatherLast {
                a,
                indices: indices.to_vec(),
            },
            rg,
        ))
    }

    /// Sums consecutive runs of `segment` entries of a rank-1 tensor.
    pub fn segment_sum(&mut self, a: Var, segment: usize) -> Result<Var, NnError> {
        let len = match self.shape(a) {
            [l] if segment > 0 && l % segment == 0 => *l,
            s => return Err(NnError::shape("segment_sum", s, &[segment])),
        };
        let data = self
            .value(a)
            .data()
            .chunks(segment)
            .map(|c| c.iter().copied().sum())
            .collect::<Vec<S>>();
        debug_assert_eq!(data.len(), len / segment);
        let rg = self.grad_flag(&[a]);
        Ok(self.push(Tensor::from_vec(data), Op::SegmentSum { a, segment }, rg))
    }

    /// Replays adjoints from a scalar `loss`. The tape is consumed: a second
    /// call returns [`NnError::AlreadyConsumed`].
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<S>, NnError> {
        if self.consumed {
            return Err(NnError::AlreadyConsumed);
        }
        if self.value(loss).len() != 1 {
            return Err(NnError::NotScalar(self.shape(loss).to_vec()));
        }
        self.consumed = true;
        let count = self.nodes.len();
        let shapes: Vec<Vec<usize>> = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        let mut grads: Vec<Option<Tensor<S>>> = (0..count).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(&shapes[loss.0], S::one()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.apply_adjoint(idx, g, &mut grads, &shapes);
            // Intermediate gradients are not retained.
        }
        Ok(Gradients { grads, shapes })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn apply_adjoint(
        &self,
        idx: usize,
        g: Tensor<S>,
        grads: &mut [Option<Tensor<S>>],
        shapes: &[Vec<usize>],
    ) {
        let node = &self.nodes[idx];
        let gd = g.data();
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul { a, b } => {
                let (m, k) = (shapes[a.0][0], shapes[a.0][1]);
                let n = shapes[b.0][1];
                if self.wants(*a) {
                    let bv = self.value(*b).data();
                    accumulate(grads, &shapes[a.0], a.0, |da| {
                        S::gemm(m, n, k, S::one(), gd, (n, 1), bv, (1, n), S::one(), da, (k, 1))
                    });
                }
                if self.wants(*b) {
                    let av = self.value(*a).data();
                    accumulate(grads, &shapes[b.0], b.0, |db| {
                        S::gemm(k, m, n, S::one(), av, (1, k), gd, (n, 1), S::one(), db, (n, 1))
                    });
                }
            }
            Op::BatchMatMul { a, b, trans_b } => {
                let (batch, m, k) = (shapes[a.0][0], shapes[a.0][1], shapes[a.0][2]);
                let n = shapes[idx][2];
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                if self.wants(*a) {
                    // dA = G B_eff^T
                    let bt_strides = if *trans_b { (k, 1) } else { (1, n) };
                    accumulate(grads, &shapes[a.0], a.0, |da| {
                        for i in 0..batch {
                            S::gemm(
                                m,
                                n,
                                k,
                                S::one(),
                                &gd[i * m * n..(i + 1) * m * n],
                                (n, 1),
                                &bv[i * k * n..(i + 1) * k * n],
                                bt_strides,
                                S::one(),
                                &mut da[i * m * k..(i + 1) * m * k],
                                (k, 1),
                            );
                        }
                    });
                }
                if self.wants(*b) {
                    accumulate(grads, &shapes[b.0], b.0, |db| {
                        for i in 0..batch {
                            let ab = &av[i * m * k..(i + 1) * m * k];
                            let gb = &gd[i * m * n..(i + 1) * m * n];
                            let dbb = &mut db[i * k * n..(i + 1) * k * n];
                            if *trans_b {
                                // dB[N,K] = G^T A
                                S::gemm(n, m, k, S::one(), gb, (1, n), ab, (k, 1), S::one(), dbb, (k, 1));
                            } else {
                                // dB[K,N] = A^T G
                                S::gemm(k, m, n, S::one(), ab, (1, k), gb, (n, 1), S::one(), dbb, (n, 1));
                            }
                        }
                    });
                }
            }
            Op::Add { a, b } => {
                if self.wants(*b) {
                    accumulate_with(grads, &shapes[b.0], b.0, |i| gd[i]);
                }
                if self.wants(*a) {
                    accumulate_owned(grads, &shapes[a.0], a.0, g);
                }
            }
            Op::AddRow { a, row } => {
                if self.wants(*row) {
                    let width = shapes[row.0][0];
                    accumulate(grads, &shapes[row.0], row.0, |d| {
                        for chunk in gd.chunks(width) {
                            d.iter_mut().zip(chunk).for_each(|(x, &y)| *x += y);
                        }
                    });
                }
                if self.wants(*a) {
                    accumulate_owned(grads, &shapes[a.0], a.0, g);
                }
            }
            Op::Mul { a, b } => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                if self.wants(*a) {
                    accumulate_with(grads, &shapes[a.0], a.0, |i| gd[i] * bv[i]);
                }
                if self.wants(*b) {
                    accumulate_with(grads, &shapes[b.0], b.0, |i| gd[i] * av[i]);
                }
            }
            Op::Scale { a, factor } => {
                accumulate_with(grads, &shapes[a.0], a.0, |i| gd[i] * *factor);
            }
            Op::AddScalar { a } | Op::Reshape { a } => {
                accumulate_owned(grads, &shapes[a.0], a.0, g);
            }
            Op::Gelu { a } => {
                let av = self.value(*a).data();
                accumulate_with(grads, &shapes[a.0], a.0, |i| gd[i] * gelu_grad(av[i]));
            }
            Op::Exp { a } => {
                let y = node.value.data();
                accumulate_with(grads, &shapes[a.0], a.0, |i| gd[i] * y[i]);
            }
            Op::Softmax { a } => {
                let y = node.value.data();
                let cols = node.value.last_dim();
                accumulate(grads, &shapes[a.0], a.0, |d| {
                    for ((dr, yr), gr) in d.chunks_mut(cols).zip(y.chunks(cols)).zip(gd.chunks(cols)) {
                        let dot: S = yr.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                        for c in 0..cols {
                            dr[c] += yr[c] * (gr[c] - dot);
                        }
                    }
                });
            }
            Op::LogSoftmax { a } => {
                let y = node.value.data();
                let cols = node.value.last_dim();
                accumulate(grads, &shapes[a.0], a.0, |d| {
                    for ((dr, yr), gr) in d.chunks_mut(cols).zip(y.chunks(cols)).zip(gd.chunks(cols)) {
                        let total: S = gr.iter().copied().sum();
                        for c in 0..cols {
                            dr[c] += gr[c] - yr[c].exp() * total;
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let width = shapes[gamma.0][0];
                let gv = self.value(*gamma).data();
                if self.wants(*gamma) {
                    accumulate(grads, &shapes[gamma.0], gamma.0, |d| {
                        for (gr, hr) in gd.chunks(width).zip(xhat.chunks(width)) {
                            for c in 0..width {
                                d[c] += gr[c] * hr[c];
                            }
                        }
                    });
                }
                if self.wants(*beta) {
                    accumulate(grads, &shapes[beta.0], beta.0, |d| {
                        for gr in gd.chunks(width) {
                            d.iter_mut().zip(gr).for_each(|(x, &y)| *x += y);
                        }
                    });
                }
                if self.wants(*x) {
                    let w = S::lit(width as f64);
                    accumulate(grads, &shapes[x.0], x.0, |d| {
                        let mut dxhat = vec![S::zero(); width];
                        for (r, (dr, (gr, hr))) in d
                            .chunks_mut(width)
                            .zip(gd.chunks(width).zip(xhat.chunks(width)))
                            .enumerate()
                        {
                            let mut mean_d = S::zero();
                            let mut mean_dh = S::zero();
                            for c in 0..width {
                                dxhat[c] = gr[c] * gv[c];
                                mean_d += dxhat[c];
                                mean_dh += dxhat[c] * hr[c];
                            }
                            mean_d /= w;
                            mean_dh /= w;
                            for c in 0..width {
                                dr[c] += rstd[r] * (dxhat[c] - mean_d - hr[c] * mean_dh);
                            }
                        }
                    });
                }
            }
            Op::Embedding { table, indices } => {
                let width = shapes[table.0][1];
                accumulate(grads, &shapes[table.0], table.0, |d| {
                    for (r, &i) in indices.iter().enumerate() {
                        let src = &gd[r * width..(r + 1) * width];
                        d[i * width..(i + 1) * width]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(x, &y)| *x += y);
                    }
                });
            }
            Op::Sum { a } => {
                let g0 = gd[0];
                accumulate(grads, &shapes[a.0], a.0, |d| d.iter_mut().for_each(|x| *x += g0));
            }
            Op::Dot { a, weights } => {
                let g0 = gd[0];
                accumulate(grads, &shapes[a.0], a.0, |d| {
                    d.iter_mut().zip(weights).for_each(|(x, &w)| *x += g0 * w)
                });
            }
            Op::GatherLast { a, indices } => {
                let cols = shapes[a.0][1];
                accumulate(grads, &shapes[a.0], a.0, |d| {
                    for (r, &c) in indices.iter().enumerate() {
                        d[r * cols + c] += gd[r];
                    }
                });
            }
            Op::SegmentSum { a, segment } => {
                accumulate(grads, &shapes[a.0], a.0, |d| {
                    for (chunk, &gv) in d.chunks_mut(*segment).zip(gd) {
                        chunk.iter_mut().for_each(|x| *x += gv);
                    }
                });
            }
        }
    }
}

//! Reverse-mode automatic differentiation over a fixed operator set.
//!
//! Forward calls append nodes to a [`Graph`] in topological order; a single
//! [`Graph::backward`] walks them in reverse and returns [`Gradients`] for
//! every parameter the loss depends on. Values are flat vectors; matrices
//! only appear as parameters.

use crate::substrate::{Gradients, LstmWeights, ParamId, ParamStore, SubstrateError};
use crate::Scalar;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Input,
    Affine {
        w: ParamId,
        x: Var,
        b: Option<ParamId>,
    },
    Lstm {
        x: Var,
        h: Var,
        c: Var,
        weights: LstmWeights,
        // activated gates [i | f | g | o] and tanh(c_new)
        gates: Vec<T>,
        tanh_c: Vec<T>,
    },
    Softmax(Var),
    LogSoftmax(Var),
    Tanh(Var),
    Sigmoid(Var),
    Log(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Dot(Var, Var),
    Scale(Var, T),
    Sum(Vec<Var>),
    Concat(Vec<Var>),
    Slice {
        x: Var,
        start: usize,
    },
    WeightedSum {
        weights: Var,
        items: Vec<Var>,
    },
    Embedding {
        table: ParamId,
        id: usize,
    },
    Select {
        x: Var,
        index: usize,
    },
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Vec<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Recorded forward computation over a borrowed parameter store.
pub struct Graph<'p, T: Scalar> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    flops: u64,
    consumed: bool,
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn mismatch(op: &'static str, left: &[usize], right: &[usize]) -> SubstrateError {
    SubstrateError::DimensionMismatch {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    }
}

impl<'p, T: Scalar> Graph<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            flops: 0,
            consumed: false,
        }
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    /// Number of multiply-add style operations performed by forward calls.
    pub fn flops(&self) -> u64 {
        self.flops
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn len_of(&self, v: Var) -> usize {
        self.nodes[v.0].value.len()
    }

    /// Scalar value of a length-1 node.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value[0]
    }

    fn push(&mut self, value: Vec<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, values: Vec<T>) -> Var {
        self.push(values, Op::Input, false)
    }

    pub fn zeros(&mut self, len: usize) -> Var {
        self.input(vec![T::zero(); len])
    }

    /// `W x (+ b)` with `W: [m × n]`, `x: [n]`, `b: [m]`.
    pub fn affine(&mut self, w: ParamId, x: Var, b: Option<ParamId>) -> Result<Var, SubstrateError> {
        let wt = self.params.value(w);
        let (m, n) = (wt.rows(), wt.cols());
        let xv = &self.nodes[x.0].value;
        if xv.len() != n {
            return Err(mismatch("affine", wt.shape(), &[xv.len()]));
        }
        let mut out = match b {
            Some(b) => {
                let bt = self.params.value(b);
                if bt.len() != m {
                    return Err(mismatch("affine", wt.shape(), bt.shape()));
                }
                bt.data().to_vec()
            }
            None => vec![T::zero(); m],
        };
        let wd = wt.data();
        for (r, o) in out.iter_mut().enumerate() {
            let row = &wd[r * n..(r + 1) * n];
            let mut acc = T::zero();
            for (a, &bv) in row.iter().zip(xv) {
                acc += *a * bv;
            }
            *o += acc;
        }
        self.flops += (m * n) as u64;
        Ok(self.push(out, Op::Affine { w, x, b }, true))
    }

    /// Standard LSTM step. Returns `(h, c)`.
    pub fn lstm_cell(&mut self, weights: &LstmWeights, x: Var, h: Var, c: Var) -> Result<(Var, Var), SubstrateError> {
        let hs = weights.hidden_size;
        let (xl, hl, cl) = (self.len_of(x), self.len_of(h), self.len_of(c));
        if xl != weights.input_size {
            return Err(mismatch("lstm_cell input", &[weights.input_size], &[xl]));
        }
        if hl != hs || cl != hs {
            return Err(mismatch("lstm_cell state", &[hs, hs], &[hl, cl]));
        }
        let p = self.params;
        let (w_ih, w_hh, bias) = (p.value(weights.w_ih), p.value(weights.w_hh), p.value(weights.bias));
        if w_ih.rows() != 4 * hs || w_ih.cols() != xl || w_hh.rows() != 4 * hs || w_hh.cols() != hs || bias.len() != 4 * hs {
            return Err(mismatch("lstm_cell weights", w_ih.shape(), &[4 * hs, xl]));
        }
        let xv = &self.nodes[x.0].value;
        let hv = &self.nodes[h.0].value;
        let cv = &self.nodes[c.0].value;
        let mut z = bias.data().to_vec();
        let (wi, wh) = (w_ih.data(), w_hh.data());
        for (r, zr) in z.iter_mut().enumerate() {
            let mut acc = T::zero();
            for (a, &b) in wi[r * xl..(r + 1) * xl].iter().zip(xv) {
                acc += *a * b;
            }
            for (a, &b) in wh[r * hs..(r + 1) * hs].iter().zip(hv) {
                acc += *a * b;
            }
            *zr += acc;
        }
        let mut gates = z;
        for (k, g) in gates.iter_mut().enumerate() {
            *g = if (2 * hs..3 * hs).contains(&k) { g.tanh() } else { sigmoid(*g) };
        }
        let mut out = vec![T::zero(); 2 * hs];
        let mut tanh_c = vec![T::zero(); hs];
        for j in 0..hs {
            let (i, f, g, o) = (gates[j], gates[hs + j], gates[2 * hs + j], gates[3 * hs + j]);
            let c_new = f * cv[j] + i * g;
            tanh_c[j] = c_new.tanh();
            out[j] = o * tanh_c[j];
            out[hs + j] = c_new;
        }
        self.flops += (4 * hs * (xl + hs) + 10 * hs) as u64;
        let node = self.push(
            out,
            Op::Lstm {
                x,
                h,
                c,
                weights: *weights,
                gates,
                tanh_c,
            },
            true,
        );
        let h_out = self.slice(node, 0, hs)?;
        let c_out = self.slice(node, hs, hs)?;
        Ok((h_out, c_out))
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var, SubstrateError> {
        let xv = &self.nodes[x.0].value;
        if xv.is_empty() {
            return Err(SubstrateError::Empty("softmax"));
        }
        let max = xv.iter().copied().fold(T::neg_infinity(), T::max);
        let mut out: Vec<T> = xv.iter().map(|&v| (v - max).exp()).collect();
        let sum: T = out.iter().copied().sum();
        out.iter_mut().for_each(|v| *v /= sum);
        self.flops += 3 * out.len() as u64;
        let ng = self.needs(x);
        Ok(self.push(out, Op::Softmax(x), ng))
    }

    /// Numerically stable `log(softmax(x))`.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var, SubstrateError> {
        let xv = &self.nodes[x.0].value;
        if xv.is_empty() {
            return Err(SubstrateError::Empty("log_softmax"));
        }
        let max = xv.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + xv.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        let out: Vec<T> = xv.iter().map(|&v| v - lse).collect();
        self.flops += 3 * out.len() as u64;
        let ng = self.needs(x);
        Ok(self.push(out, Op::LogSoftmax(x), ng))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out: Vec<T> = self.nodes[x.0].value.iter().map(|v| v.tanh()).collect();
        self.flops += out.len() as u64;
        let ng = self.needs(x);
        self.push(out, Op::Tanh(x), ng)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out: Vec<T> = self.nodes[x.0].value.iter().map(|&v| sigmoid(v)).collect();
        self.flops += out.len() as u64;
        let ng = self.needs(x);
        self.push(out, Op::Sigmoid(x), ng)
    }

    /// Elementwise natural log; inputs must be strictly positive.
    pub fn log(&mut self, x: Var) -> Result<Var, SubstrateError> {
        let xv = &self.nodes[x.0].value;
        if xv.iter().any(|&v| v <= T::zero() || !v.is_finite()) {
            return Err(SubstrateError::NonFinite("log"));
        }
        let out: Vec<T> = xv.iter().map(|v| v.ln()).collect();
        self.flops += out.len() as u64;
        let ng = self.needs(x);
        Ok(self.push(out, Op::Log(x), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, SubstrateError> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.len() != bv.len() {
            return Err(mismatch("add", &[av.len()], &[bv.len()]));
        }
        let out: Vec<T> = av.iter().zip(bv).map(|(&x, &y)| x + y).collect();
        self.flops += out.len() as u64;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, SubstrateError> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.len() != bv.len() {
            return Err(mismatch("mul", &[av.len()], &[bv.len()]));
        }
        let out: Vec<T> = av.iter().zip(bv).map(|(&x, &y)| x * y).collect();
        self.flops += out.len() as u64;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    /// Inner product as a length-1 node.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, SubstrateError> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.len() != bv.len() {
            return Err(mismatch("dot", &[av.len()], &[bv.len()]));
        }
        let out: T = av.iter().zip(bv).map(|(&x, &y)| x * y).sum();
        self.flops += av.len() as u64;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(vec![out], Op::Dot(a, b), ng))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let out: Vec<T> = self.nodes[x.0].value.iter().map(|&v| v * s).collect();
        self.flops += out.len() as u64;
        let ng = self.needs(x);
        self.push(out, Op::Scale(x, s), ng)
    }

    /// Elementwise sum of equally sized nodes.
    pub fn sum(&mut self, xs: &[Var]) -> Result<Var, SubstrateError> {
        let first = xs.first().ok_or(SubstrateError::Empty("sum"))?;
        let len = self.len_of(*first);
        let mut out = vec![T::zero(); len];
        for x in xs {
            let v = &self.nodes[x.0].value;
            if v.len() != len {
                return Err(mismatch("sum", &[len], &[v.len()]));
            }
            for (o, &y) in out.iter_mut().zip(v) {
                *o += y;
            }
        }
        self.flops += (len * xs.len()) as u64;
        let ng = xs.iter().any(|&x| self.needs(x));
        Ok(self.push(out, Op::Sum(xs.to_vec()), ng))
    }

    pub fn concat(&mut self, xs: &[Var]) -> Var {
        let mut out = Vec::new();
        for x in xs {
            out.extend_from_slice(&self.nodes[x.0].value);
        }
        let ng = xs.iter().any(|&x| self.needs(x));
        self.push(out, Op::Concat(xs.to_vec()), ng)
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var, SubstrateError> {
        let xl = self.len_of(x);
        if start + len > xl {
            return Err(SubstrateError::IndexOutOfRange {
                op: "slice",
                index: start + len,
                len: xl,
            });
        }
        let out = self.nodes[x.0].value[start..start + len].to_vec();
        let ng = self.needs(x);
        Ok(self.push(out, Op::Slice { x, start }, ng))
    }

    /// `Σ_i weights[i] · items[i]`.
    pub fn weighted_sum(&mut self, weights: Var, items: &[Var]) -> Result<Var, SubstrateError> {
        let wl = self.len_of(weights);
        if items.is_empty() {
            return Err(SubstrateError::Empty("weighted_sum"));
        }
        if wl != items.len() {
            return Err(mismatch("weighted_sum", &[wl], &[items.len()]));
        }
        let dim = self.len_of(items[0]);
        let mut out = vec![T::zero(); dim];
        for (i, item) in items.iter().enumerate() {
            let v = &self.nodes[item.0].value;
            if v.len() != dim {
                return Err(mismatch("weighted_sum", &[dim], &[v.len()]));
            }
            let w = self.nodes[weights.0].value[i];
            for (o, &y) in out.iter_mut().zip(v) {
                *o += w * y;
            }
        }
        self.flops += (dim * items.len()) as u64;
        let ng = self.needs(weights) || items.iter().any(|&x| self.needs(x));
        Ok(self.push(
            out,
            Op::WeightedSum {
                weights,
                items: items.to_vec(),
            },
            ng,
        ))
    }

    /// Row `id` of an embedding table `[V × E]`.
    pub fn embedding(&mut self, table: ParamId, id: usize) -> Result<Var, SubstrateError> {
        let t = self.params.value(table);
        if id >= t.rows() {
            return Err(SubstrateError::IndexOutOfRange {
                op: "embedding",
                index: id,
                len: t.rows(),
            });
        }
        let out = t.row(id).to_vec();
        Ok(self.push(out, Op::Embedding { table, id }, true))
    }

    /// Picks one entry as a length-1 node.
    pub fn select(&mut self, x: Var, index: usize) -> Result<Var, SubstrateError> {
        let xl = self.len_of(x);
        if index >= xl {
            return Err(SubstrateError::IndexOutOfRange { op: "select", index, len: xl });
        }
        let out = vec![self.nodes[x.0].value[index]];
        let ng = self.needs(x);
        Ok(self.push(out, Op::Select { x, index }, ng))
    }

    /// Backpropagates from a scalar `loss`. May be called once per graph.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>, SubstrateError> {
        if self.consumed {
            return Err(SubstrateError::AlreadyBackpropagated);
        }
        self.consumed = true;
        let ll = self.len_of(loss);
        if ll != 1 {
            return Err(SubstrateError::NotScalar(ll));
        }
        if !self.scalar(loss).is_finite() {
            return Err(SubstrateError::NonFinite("loss"));
        }
        let mut grads = Gradients::empty(self.params.len());
        let mut adj: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            self.backprop_node(node, &g, &mut adj, &mut grads);
        }
        if !grads.is_finite() {
            return Err(SubstrateError::NonFinite("gradient"));
        }
        Ok(grads)
    }

    fn backprop_node(&self, node: &Node<T>, g: &[T], adj: &mut [Option<Vec<T>>], grads: &mut Gradients<T>) {
        let nodes = &self.nodes;
        let needs = |v: Var| nodes[v.0].needs_grad;
        // Accumulates `f(i)` into the adjoint of `v`.
        fn add_into<T: Scalar>(adj: &mut [Option<Vec<T>>], v: Var, len: usize, f: impl Fn(usize) -> T) {
            let a = adj[v.0].get_or_insert_with(|| vec![T::zero(); len]);
            for (i, x) in a.iter_mut().enumerate() {
                *x += f(i);
            }
        }

        match &node.op {
            Op::Input => {}
            Op::Affine { w, x, b } => {
                let wt = self.params.value(*w);
                let (m, n) = (wt.rows(), wt.cols());
                let xv = &nodes[x.0].value;
                let gw = grads.slot(*w, m * n);
                for r in 0..m {
                    let gr = g[r];
                    if gr.is_zero() {
                        continue;
                    }
                    for (a, &xc) in gw[r * n..(r + 1) * n].iter_mut().zip(xv) {
                        *a += gr * xc;
                    }
                }
                if let Some(b) = b {
                    let gb = grads.slot(*b, m);
                    for (a, &gr) in gb.iter_mut().zip(g) {
                        *a += gr;
                    }
                }
                if needs(*x) {
                    let wd = wt.data();
                    let a = adj[x.0].get_or_insert_with(|| vec![T::zero(); n]);
                    for r in 0..m {
                        let gr = g[r];
                        if gr.is_zero() {
                            continue;
                        }
                        for (ac, &wv) in a.iter_mut().zip(&wd[r * n..(r + 1) * n]) {
                            *ac += gr * wv;
                        }
                    }
                }
            }
            Op::Lstm {
                x,
                h,
                c,
                weights,
                gates,
                tanh_c,
            } => {
                let hs = weights.hidden_size;
                let xl = weights.input_size;
                let (dh, dc_out) = g.split_at(hs);
                let cv = &nodes[c.0].value;
                let mut dz = vec![T::zero(); 4 * hs];
                let mut dc_prev = vec![T::zero(); hs];
                for j in 0..hs {
                    let (i, f, gg, o) = (gates[j], gates[hs + j], gates[2 * hs + j], gates[3 * hs + j]);
                    let tc = tanh_c[j];
                    let d_o = dh[j] * tc;
                    let dc = dc_out[j] + dh[j] * o * (T::one() - tc * tc);
                    let d_i = dc * gg;
                    let d_g = dc * i;
                    let d_f = dc * cv[j];
                    dc_prev[j] = dc * f;
                    dz[j] = d_i * i * (T::one() - i);
                    dz[hs + j] = d_f * f * (T::one() - f);
                    dz[2 * hs + j] = d_g * (T::one() - gg * gg);
                    dz[3 * hs + j] = d_o * o * (T::one() - o);
                }
                let xv = &nodes[x.0].value;
                let hv = &nodes[h.0].value;
                {
                    let gw = grads.slot(weights.w_ih, 4 * hs * xl);
                    for (r, &d) in dz.iter().enumerate() {
                        if d.is_zero() {
                            continue;
                        }
                        for (a, &xc) in gw[r * xl..(r + 1) * xl].iter_mut().zip(xv) {
                            *a += d * xc;
                        }
                    }
                }
                {
                    let gw = grads.slot(weights.w_hh, 4 * hs * hs);
                    for (r, &d) in dz.iter().enumerate() {
                        if d.is_zero() {
                            continue;
                        }
                        for (a, &hc) in gw[r * hs..(r + 1) * hs].iter_mut().zip(hv) {
                            *a += d * hc;
                        }
                    }
                }
                {
                    let gb = grads.slot(weights.bias, 4 * hs);
                    for (a, &d) in gb.iter_mut().zip(&dz) {
                        *a += d;
                    }
                }
                if needs(*x) {
                    let wd = self.params.value(weights.w_ih).data();
                    let a = adj[x.0].get_or_insert_with(|| vec![T::zero(); xl]);
                    for (r, &d) in dz.iter().enumerate() {
                        if d.is_zero() {
                            continue;
                        }
                        for (ac, &wv) in a.iter_mut().zip(&wd[r * xl..(r + 1) * xl]) {
                            *ac += d * wv;
                        }
                    }
                }
                if needs(*h) {
                    let wd = self.params.value(weights.w_hh).data();
                    let a = adj[h.0].get_or_insert_with(|| vec![T::zero(); hs]);
                    for (r, &d) in dz.iter().enumerate() {
                        if d.is_zero() {
                            continue;
                        }
                        for (ac, &wv) in a.iter_mut().zip(&wd[r * hs..(r + 1) * hs]) {
                            *ac += d * wv;
                        }
                    }
                }
                if needs(*c) {
                    add_into(adj, *c, hs, |j| dc_prev[j]);
                }
            }
            Op::Softmax(x) => {
                let y = &node.value;
                let dot: T = y.iter().zip(g).map(|(&a, &b)| a * b).sum();
                add_into(adj, *x, y.len(), |i| y[i] * (g[i] - dot));
            }
            Op::LogSoftmax(x) => {
                let y = &node.value;
                let gs: T = g.iter().copied().sum();
                add_into(adj, *x, y.len(), |i| g[i] - y[i].exp() * gs);
            }
            Op::Tanh(x) => {
                let y = &node.value;
                add_into(adj, *x, y.len(), |i| g[i] * (T::one() - y[i] * y[i]));
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                add_into(adj, *x, y.len(), |i| g[i] * y[i] * (T::one() - y[i]));
            }
            Op::Log(x) => {
                let xv = &nodes[x.0].value;
                add_into(adj, *x, xv.len(), |i| g[i] / xv[i]);
            }
            Op::Add(a, b) => {
                if needs(*a) {
                    add_into(adj, *a, g.len(), |i| g[i]);
                }
                if needs(*b) {
                    add_into(adj, *b, g.len(), |i| g[i]);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                if needs(*a) {
                    add_into(adj, *a, g.len(), |i| g[i] * bv[i]);
                }
                if needs(*b) {
                    add_into(adj, *b, g.len(), |i| g[i] * av[i]);
                }
            }
            Op::Dot(a, b) => {
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                if needs(*a) {
                    add_into(adj, *a, av.len(), |i| g[0] * bv[i]);
                }
                if needs(*b) {
                    add_into(adj, *b, bv.len(), |i| g[0] * av[i]);
                }
            }
            Op::Scale(x, s) => {
                add_into(adj, *x, g.len(), |i| g[i] * *s);
            }
            Op::Sum(xs) => {
                for x in xs {
                    if needs(*x) {
                        add_into(adj, *x, g.len(), |i| g[i]);
                    }
                }
            }
            Op::Concat(xs) => {
                let mut off = 0;
                for x in xs {
                    let l = nodes[x.0].value.len();
                    if needs(*x) {
                        add_into(adj, *x, l, |i| g[off + i]);
                    }
                    off += l;
                }
            }
            Op::Slice { x, start } => {
                let xl = nodes[x.0].value.len();
                let a = adj[x.0].get_or_insert_with(|| vec![T::zero(); xl]);
                for (i, &gv) in g.iter().enumerate() {
                    a[start + i] += gv;
                }
            }
            Op::WeightedSum { weights, items } => {
                let wv = &nodes[weights.0].value;
                if needs(*weights) {
                    let dw: Vec<T> = items
                        .iter()
                        .map(|it| nodes[it.0].value.iter().zip(g).map(|(&a, &b)| a * b).sum())
                        .collect();
                    add_into(adj, *weights, wv.len(), |i| dw[i]);
                }
                for (i, it) in items.iter().enumerate() {
                    if needs(*it) {
                        let w = wv[i];
                        add_into(adj, *it, g.len(), |j| w * g[j]);
                    }
                }
            }
            Op::Embedding { table, id } => {
                let t = self.params.value(*table);
                let e = t.cols();
                let slot = grads.slot(*table, t.len());
                for (a, &gv) in slot[id * e..(id + 1) * e].iter_mut().zip(g) {
                    *a += gv;
                }
            }
            Op::Select { x, index } => {
                let xl = nodes[x.0].value.len();
                let a = adj[x.0].get_or_insert_with(|| vec![T::zero(); xl]);
                a[*index] += g[0];
            }
        }
    }
}

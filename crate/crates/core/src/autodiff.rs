//! Vector-granular differentiation tape.
//!
//! Every network in the crate is a composition of a handful of fused vector
//! operations (affine maps over concatenated blocks, a gated recurrent cell,
//! slicing, sums and a rectifier). The tape records them once and supports
//! both a reverse sweep (vector-Jacobian products into a flat parameter
//! gradient) and a forward sweep (Jacobian-vector products from a flat
//! parameter tangent). Parameters live in one contiguous slice addressed by
//! [`ParamId`].

use crate::scalar::{sigmoid, Scalar};

/// Location of a parameter tensor inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamId {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamEntry {
    pub name: String,
    pub id: ParamId,
}

/// Ordered, named allocation of the flat parameter vector.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParamLayout {
    entries: Vec<ParamEntry>,
    len: usize,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        let id = ParamId { offset: self.len, rows, cols };
        self.len += rows * cols;
        self.entries.push(ParamEntry { name: name.into(), id });
        id
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    /// `W[:, off..off+len(x)] x` summed over blocks, plus optional bias.
    Affine {
        w: ParamId,
        b: Option<ParamId>,
        blocks: Vec<(usize, Var)>,
    },
    /// Gated cell on pre-activations `z = [i, f, g, o]`; output is `[h; c]`.
    Lstm { z: Var, c: Option<Var> },
    Slice { x: Var, start: usize },
    Add(Var, Var),
    Sum(Vec<Var>),
    Relu(Var),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    off: usize,
    len: usize,
}

pub struct Tape<'p, T> {
    params: &'p [T],
    nodes: Vec<Node>,
    data: Vec<T>,
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new(params: &'p [T]) -> Self {
        Self { params, nodes: Vec::new(), data: Vec::new() }
    }

    pub fn params(&self) -> &'p [T] {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[T] {
        let n = &self.nodes[v.0];
        &self.data[n.off..n.off + n.len]
    }

    fn push(&mut self, op: Op, value: impl IntoIterator<Item = T>) -> Var {
        let off = self.data.len();
        self.data.extend(value);
        let len = self.data.len() - off;
        self.nodes.push(Node { op, off, len });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, v: &[T]) -> Var {
        self.push(Op::Input, v.iter().copied())
    }

    pub fn affine(&mut self, w: ParamId, b: Option<ParamId>, blocks: &[(usize, Var)]) -> Var {
        let mut y: Vec<T> = match b {
            Some(b) => {
                debug_assert_eq!(b.len(), w.rows);
                self.params[b.range()].to_vec()
            }
            None => vec![T::zero(); w.rows],
        };
        for &(col, x) in blocks {
            let xv = self.value(x);
            debug_assert!(col + xv.len() <= w.cols, "affine block out of range");
            for (r, yr) in y.iter_mut().enumerate() {
                let row = w.offset + r * w.cols + col;
                *yr += crate::scalar::dot(&self.params[row..row + xv.len()], xv);
            }
        }
        self.push(Op::Affine { w, b, blocks: blocks.to_vec() }, y)
    }

    pub fn lstm(&mut self, z: Var, c: Option<Var>) -> Var {
        let zv = self.value(z);
        let h = zv.len() / 4;
        let mut out = vec![T::zero(); 2 * h];
        for k in 0..h {
            let i = sigmoid(zv[k]);
            let f = sigmoid(zv[h + k]);
            let g = zv[2 * h + k].tanh();
            let o = sigmoid(zv[3 * h + k]);
            let cp = c.map_or(T::zero(), |c| self.value(c)[k]);
            let cn = f * cp + i * g;
            out[k] = o * cn.tanh();
            out[h + k] = cn;
        }
        self.push(Op::Lstm { z, c }, out)
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let v: Vec<T> = self.value(x)[start..start + len].to_vec();
        self.push(Op::Slice { x, start }, v)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v: Vec<T> = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x + y).collect();
        self.push(Op::Add(a, b), v)
    }

    pub fn sum(&mut self, xs: &[Var]) -> Var {
        assert!(!xs.is_empty(), "sum of no vectors");
        let mut v = self.value(xs[0]).to_vec();
        for &x in &xs[1..] {
            for (a, &b) in v.iter_mut().zip(self.value(x)) {
                *a += b;
            }
        }
        self.push(Op::Sum(xs.to_vec()), v)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v: Vec<T> = self.value(x).iter().map(|&a| a.max(T::zero())).collect();
        self.push(Op::Relu(x), v)
    }

    /// Reverse sweep. `seeds` are adjoints of output nodes; parameter
    /// gradients are accumulated into `grad` (same layout as the params).
    pub fn backward(&self, seeds: &[(Var, &[T])], grad: &mut [T]) {
        assert_eq!(grad.len(), self.params.len());
        let mut adj = vec![T::zero(); self.data.len()];
        let mut live = vec![false; self.nodes.len()];
        for &(v, s) in seeds {
            let n = &self.nodes[v.0];
            assert_eq!(s.len(), n.len, "seed length mismatch");
            for (a, &g) in adj[n.off..n.off + n.len].iter_mut().zip(s) {
                *a += g;
            }
            live[v.0] = true;
        }
        for idx in (0..self.nodes.len()).rev() {
            if !live[idx] {
                continue;
            }
            let node = &self.nodes[idx];
            let (lower, upper) = adj.split_at_mut(node.off);
            let gy = &upper[..node.len];
            match &node.op {
                Op::Input => {}
                Op::Affine { w, b, blocks } => {
                    if let Some(b) = b {
                        for (g, &d) in grad[b.range()].iter_mut().zip(gy) {
                            *g += d;
                        }
                    }
                    for &(col, x) in blocks {
                        let xn = &self.nodes[x.0];
                        let xv = &self.data[xn.off..xn.off + xn.len];
                        let gx = &mut lower[xn.off..xn.off + xn.len];
                        for (r, &d) in gy.iter().enumerate() {
                            if d == T::zero() {
                                continue;
                            }
                            let row = w.offset + r * w.cols + col;
                            crate::scalar::axpy(d, xv, &mut grad[row..row + xn.len]);
                            crate::scalar::axpy(d, &self.params[row..row + xn.len], gx);
                        }
                        live[x.0] = true;
                    }
                }
                Op::Lstm { z, c } => {
                    let zn = &self.nodes[z.0];
                    let zv = &self.data[zn.off..zn.off + zn.len];
                    let h = zn.len / 4;
                    let cprev = c.map(|c| {
                        let cn = &self.nodes[c.0];
                        (cn.off, &self.data[cn.off..cn.off + cn.len])
                    });
                    let mut gz = vec![T::zero(); 4 * h];
                    let mut gc = vec![T::zero(); h];
                    let one = T::one();
                    for k in 0..h {
                        let i = sigmoid(zv[k]);
                        let f = sigmoid(zv[h + k]);
                        let g = zv[2 * h + k].tanh();
                        let o = sigmoid(zv[3 * h + k]);
                        let cp = cprev.map_or(T::zero(), |(_, c)| c[k]);
                        let cn = f * cp + i * g;
                        let tc = cn.tanh();
                        let dh = gy[k];
                        let dc = gy[h + k] + dh * o * (one - tc * tc);
                        gz[k] = dc * g * i * (one - i);
                        gz[h + k] = dc * cp * f * (one - f);
                        gz[2 * h + k] = dc * i * (one - g * g);
                        gz[3 * h + k] = dh * tc * o * (one - o);
                        gc[k] = dc * f;
                    }
                    for (a, &d) in lower[zn.off..zn.off + zn.len].iter_mut().zip(&gz) {
                        *a += d;
                    }
                    live[z.0] = true;
                    if let (Some(c), Some((off, _))) = (c, cprev) {
                        for (a, &d) in lower[off..off + h].iter_mut().zip(&gc) {
                            *a += d;
                        }
                        live[c.0] = true;
                    }
                }
                Op::Slice { x, start } => {
                    let xn = &self.nodes[x.0];
                    let dst = &mut lower[xn.off + start..xn.off + start + node.len];
                    for (a, &d) in dst.iter_mut().zip(gy) {
                        *a += d;
                    }
                    live[x.0] = true;
                }
                Op::Add(a, b) => {
                    for v in [a, b] {
                        let n = &self.nodes[v.0];
                        for (t, &d) in lower[n.off..n.off + n.len].iter_mut().zip(gy) {
                            *t += d;
                        }
                        live[v.0] = true;
                    }
                }
                Op::Sum(xs) => {
                    for v in xs {
                        let n = &self.nodes[v.0];
                        for (t, &d) in lower[n.off..n.off + n.len].iter_mut().zip(gy) {
                            *t += d;
                        }
                        live[v.0] = true;
                    }
                }
                Op::Relu(x) => {
                    let n = &self.nodes[x.0];
                    let xv = &self.data[n.off..n.off + n.len];
                    for ((t, &d), &xi) in lower[n.off..n.off + n.len].iter_mut().zip(gy).zip(xv) {
                        if xi > T::zero() {
                            *t += d;
                        }
                    }
                    live[x.0] = true;
                }
            }
        }
    }

    /// Forward sweep of a parameter tangent; returns the tangent of every node.
    pub fn jvp(&self, tangent: &[T]) -> Tangents<T> {
        assert_eq!(tangent.len(), self.params.len());
        let mut tan = vec![T::zero(); self.data.len()];
        for node in &self.nodes {
            let (lower, upper) = tan.split_at_mut(node.off);
            let ty = &mut upper[..node.len];
            let tv = |v: &Var| {
                let n = &self.nodes[v.0];
                &lower[n.off..n.off + n.len]
            };
            match &node.op {
                Op::Input => {}
                Op::Affine { w, b, blocks } => {
                    if let Some(b) = b {
                        ty.copy_from_slice(&tangent[b.range()]);
                    }
                    for &(col, x) in blocks {
                        let xn = &self.nodes[x.0];
                        let xv = &self.data[xn.off..xn.off + xn.len];
                        let tx = tv(&x);
                        for (r, t) in ty.iter_mut().enumerate() {
                            let row = w.offset + r * w.cols + col;
                            *t += crate::scalar::dot(&self.params[row..row + xn.len], tx)
                                + crate::scalar::dot(&tangent[row..row + xn.len], xv);
                        }
                    }
                }
                Op::Lstm { z, c } => {
                    let zn = &self.nodes[z.0];
                    let zv = &self.data[zn.off..zn.off + zn.len];
                    let tz = tv(z);
                    let h = zn.len / 4;
                    let one = T::one();
                    for k in 0..h {
                        let i = sigmoid(zv[k]);
                        let f = sigmoid(zv[h + k]);
                        let g = zv[2 * h + k].tanh();
                        let o = sigmoid(zv[3 * h + k]);
                        let (cp, tcp) = match c {
                            Some(c) => {
                                let cn = &self.nodes[c.0];
                                (self.data[cn.off + k], tv(c)[k])
                            }
                            None => (T::zero(), T::zero()),
                        };
                        let cn = f * cp + i * g;
                        let tc = cn.tanh();
                        let ti = i * (one - i) * tz[k];
                        let tf = f * (one - f) * tz[h + k];
                        let tg = (one - g * g) * tz[2 * h + k];
                        let to = o * (one - o) * tz[3 * h + k];
                        let tcn = tf * cp + f * tcp + ti * g + i * tg;
                        ty[k] = to * tc + o * (one - tc * tc) * tcn;
                        ty[h + k] = tcn;
                    }
                }
                Op::Slice { x, start } => {
                    ty.copy_from_slice(&tv(x)[*start..*start + node.len]);
                }
                Op::Add(a, b) => {
                    for ((t, &x), &y) in ty.iter_mut().zip(tv(a)).zip(tv(b)) {
                        *t = x + y;
                    }
                }
                Op::Sum(xs) => {
                    for v in xs {
                        for (t, &x) in ty.iter_mut().zip(tv(v)) {
                            *t += x;
                        }
                    }
                }
                Op::Relu(x) => {
                    let n = &self.nodes[x.0];
                    let xv = &self.data[n.off..n.off + n.len];
                    for ((t, &d), &xi) in ty.iter_mut().zip(tv(x)).zip(xv) {
                        *t = if xi > T::zero() { d } else { T::zero() };
                    }
                }
            }
        }
        Tangents { nodes: self.nodes.iter().map(|n| (n.off, n.len)).collect(), data: tan }
    }
}

/// Node tangents produced by [`Tape::jvp`].
pub struct Tangents<T> {
    nodes: Vec<(usize, usize)>,
    data: Vec<T>,
}

impl<T> Tangents<T> {
    pub fn get(&self, v: Var) -> &[T] {
        let (off, len) = self.nodes[v.0];
        &self.data[off..off + len]
    }
}

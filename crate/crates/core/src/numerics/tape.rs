use std::collections::HashMap;

use super::{Gradients, NdArray, NumericsError, ParamId, ParameterStore, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Reduction axis of a rank-2 array: `Rows` collapses rows into one row,
/// `Cols` collapses columns into one column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    Transpose(Var),
    Concat(Vec<Var>, Axis),
    Select(Var, Axis, Vec<usize>),
    Extremum(Var, Axis, Vec<usize>),
    Sum(Var),
    Mean(Var, Axis),
    SumAll(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Abs(Var),
    Softmax(Var, Axis),
    LogSoftmax(Var, Axis),
    RowL2(Var),
    GatherRows(Var, Vec<usize>),
    Distances(Var, Var),
}

struct Node {
    value: Option<NdArray>,
    op: Op,
}

/// Records a computation over parameters of a [`ParameterStore`] for one
/// reverse pass. Parameters are read in place, never copied.
pub struct Tape<'s> {
    store: &'s ParameterStore,
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

fn broadcast_shape(op: &'static str, a: &NdArray, b: &NdArray) -> Result<(usize, usize)> {
    let (ar, ac) = a.dims2(op)?;
    let (br, bc) = b.dims2(op)?;
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else {
            None
        }
    };
    match (dim(ar, br), dim(ac, bc)) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(NumericsError::ShapeMismatch {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        }),
    }
}

#[inline]
fn at(a: &NdArray, i: usize, j: usize) -> f64 {
    let (r, c) = (a.rows(), a.cols());
    a.data()[(if r == 1 { 0 } else { i }) * c + if c == 1 { 0 } else { j }]
}

fn zip_broadcast(
    op: &'static str,
    a: &NdArray,
    b: &NdArray,
    f: impl Fn(f64, f64) -> f64,
) -> Result<NdArray> {
    let (r, c) = broadcast_shape(op, a, b)?;
    if a.shape() == b.shape() {
        let data = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        return NdArray::from_vec(vec![r, c], data);
    }
    let mut data = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            data.push(f(at(a, i, j), at(b, i, j)));
        }
    }
    NdArray::from_vec(vec![r, c], data)
}

/// Sums `g` down to `shape` along broadcast dimensions.
fn unbroadcast(g: &NdArray, shape: &[usize]) -> NdArray {
    if g.shape() == shape {
        return g.clone();
    }
    let (tr, tc) = (shape[0], shape[1]);
    let mut out = NdArray::zeros(shape);
    let c = g.cols();
    for i in 0..g.rows() {
        for j in 0..c {
            let oi = if tr == 1 { 0 } else { i };
            let oj = if tc == 1 { 0 } else { j };
            out.data_mut()[oi * tc + oj] += g.data()[i * c + j];
        }
    }
    out
}

/// Applies `f` to every row (`Axis::Cols`) or column (`Axis::Rows`) slice.
fn map_slices(a: &NdArray, axis: Axis, f: impl Fn(&[f64]) -> Vec<f64>) -> NdArray {
    match axis {
        Axis::Cols => {
            let mut out = NdArray::zeros(a.shape());
            for i in 0..a.rows() {
                let r = f(a.row_slice(i));
                out.row_slice_mut(i).copy_from_slice(&r);
            }
            out
        }
        Axis::Rows => map_slices(&a.transpose(), Axis::Cols, f).transpose(),
    }
}

fn softmax_slice(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_softmax_slice(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + x.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    x.iter().map(|&v| v - lse).collect()
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParameterStore) -> Self {
        Tape {
            store,
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn store(&self) -> &'s ParameterStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &NdArray {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(x), _) => x,
            (None, Op::Param(id)) => self.store.value(*id),
            _ => unreachable!("only parameter nodes are stored by reference"),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(NumericsError::Unrecorded(v.0))
        }
    }

    fn push(&mut self, op: &'static str, value: NdArray, node: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(NumericsError::NonFinite { op });
        }
        self.nodes.push(Node {
            value: Some(value),
            op: node,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A non-differentiable input.
    pub fn constant(&mut self, value: NdArray) -> Result<Var> {
        self.push("constant", value, Op::Leaf)
    }

    /// The parameter `id`, recorded once per tape.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id, v);
        v
    }

    fn binary(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        node: Op,
    ) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let out = zip_broadcast(op, self.value(a), self.value(b), f)?;
        self.push(op, out, node)
    }

    /// Elementwise sum with row/column broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise (Hadamard) product with broadcasting.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).map(|x| x * c);
        self.push("scale", out, Op::Scale(a, c))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (x, y) = (self.value(a), self.value(b));
        let (_, k) = x.dims2("matmul")?;
        let (k2, _) = y.dims2("matmul")?;
        if k != k2 {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul",
                left: x.shape().to_vec(),
                right: y.shape().to_vec(),
            });
        }
        let out = x.matmul_raw(y);
        self.push("matmul", out, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        self.value(a).dims2("transpose")?;
        let out = self.value(a).transpose();
        self.push("transpose", out, Op::Transpose(a))
    }

    /// Stacks rows (`Axis::Rows`) or joins columns (`Axis::Cols`).
    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(NumericsError::Empty { op: "concat" });
        };
        for &p in parts {
            self.check(p)?;
        }
        let (r0, c0) = self.value(first).dims2("concat")?;
        let mut rows = 0;
        let mut cols = 0;
        for &p in parts {
            let (r, c) = self.value(p).dims2("concat")?;
            let ok = match axis {
                Axis::Rows => c == c0,
                Axis::Cols => r == r0,
            };
            if !ok {
                return Err(NumericsError::ShapeMismatch {
                    op: "concat",
                    left: vec![r0, c0],
                    right: vec![r, c],
                });
            }
            rows += r;
            cols += c;
        }
        let out = match axis {
            Axis::Rows => {
                let mut data = Vec::with_capacity(rows * c0);
                for &p in parts {
                    data.extend_from_slice(self.value(p).data());
                }
                NdArray::from_vec(vec![rows, c0], data)?
            }
            Axis::Cols => {
                let mut data = Vec::with_capacity(r0 * cols);
                for i in 0..r0 {
                    for &p in parts {
                        data.extend_from_slice(self.value(p).row_slice(i));
                    }
                }
                NdArray::from_vec(vec![r0, cols], data)?
            }
        };
        self.push("concat", out, Op::Concat(parts.to_vec(), axis))
    }

    /// Picks rows (`Axis::Rows`) or columns (`Axis::Cols`) by index, in order.
    pub fn select(&mut self, a: Var, axis: Axis, indices: &[usize]) -> Result<Var> {
        self.check(a)?;
        let x = self.value(a);
        let (r, c) = x.dims2("select")?;
        let extent = if axis == Axis::Rows { r } else { c };
        if let Some(&bad) = indices.iter().find(|&&i| i >= extent) {
            return Err(NumericsError::Index {
                op: "select",
                index: bad,
                extent,
            });
        }
        let out = match axis {
            Axis::Rows => {
                let mut data = Vec::with_capacity(indices.len() * c);
                for &i in indices {
                    data.extend_from_slice(x.row_slice(i));
                }
                NdArray::from_vec(vec![indices.len(), c], data)?
            }
            Axis::Cols => {
                let mut data = Vec::with_capacity(r * indices.len());
                for i in 0..r {
                    data.extend(indices.iter().map(|&j| x.get(i, j)));
                }
                NdArray::from_vec(vec![r, indices.len()], data)?
            }
        };
        self.push("select", out, Op::Select(a, axis, indices.to_vec()))
    }

    /// Rows of a (typically parameter) table; repeated indices are allowed.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        self.check(table)?;
        let x = self.value(table);
        let (r, c) = x.dims2("gather_rows")?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= r) {
            return Err(NumericsError::Index {
                op: "gather_rows",
                index: bad,
                extent: r,
            });
        }
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            data.extend_from_slice(x.row_slice(i));
        }
        let out = NdArray::from_vec(vec![indices.len(), c], data)?;
        self.push("gather_rows", out, Op::GatherRows(table, indices.to_vec()))
    }

    fn extremum(&mut self, a: Var, axis: Axis, want_max: bool) -> Result<Var> {
        self.check(a)?;
        let x = self.value(a);
        let (r, c) = x.dims2("reduce")?;
        let better = |cand: f64, best: f64| if want_max { cand > best } else { cand < best };
        let (out, arg) = match axis {
            Axis::Rows => {
                let mut vals = x.row_slice(0).to_vec();
                let mut arg = vec![0; c];
                for i in 1..r {
                    for j in 0..c {
                        if better(x.get(i, j), vals[j]) {
                            vals[j] = x.get(i, j);
                            arg[j] = i;
                        }
                    }
                }
                (NdArray::row(vals), arg)
            }
            Axis::Cols => {
                let mut vals = Vec::with_capacity(r);
                let mut arg = Vec::with_capacity(r);
                for i in 0..r {
                    let row = x.row_slice(i);
                    let mut best = 0;
                    for j in 1..c {
                        if better(row[j], row[best]) {
                            best = j;
                        }
                    }
                    vals.push(row[best]);
                    arg.push(best);
                }
                (NdArray::from_vec(vec![r, 1], vals)?, arg)
            }
        };
        self.push("reduce_extremum", out, Op::Extremum(a, axis, arg))
    }

    /// Minimum along `axis`; ties resolve to the first index.
    pub fn reduce_min(&mut self, a: Var, axis: Axis) -> Result<Var> {
        self.extremum(a, axis, false)
    }

    /// Maximum along `axis`; ties resolve to the first index.
    pub fn reduce_max(&mut self, a: Var, axis: Axis) -> Result<Var> {
        self.extremum(a, axis, true)
    }

    pub fn reduce_sum(&mut self, a: Var, axis: Axis) -> Result<Var> {
        self.check(a)?;
        let x = self.value(a);
        let (r, c) = x.dims2("reduce_sum")?;
        let out = match axis {
            Axis::Rows => {
                let mut s = vec![0.0; c];
                for i in 0..r {
                    for (acc, v) in s.iter_mut().zip(x.row_slice(i)) {
                        *acc += v;
                    }
                }
                NdArray::row(s)
            }
            Axis::Cols => NdArray::from_vec(
                vec![r, 1],
                (0..r).map(|i| x.row_slice(i).iter().sum()).collect(),
            )?,
        };
        self.push("reduce_sum", out, Op::Sum(a))
    }

    pub fn reduce_mean(&mut self, a: Var, axis: Axis) -> Result<Var> {
        self.check(a)?;
        let x = self.value(a);
        let (r, c) = x.dims2("reduce_mean")?;
        let n = if axis == Axis::Rows { r } else { c } as f64;
        let out = match axis {
            Axis::Rows => {
                let mut s = vec![0.0; c];
                for i in 0..r {
                    for (acc, v) in s.iter_mut().zip(x.row_slice(i)) {
                        *acc += v;
                    }
                }
                NdArray::row(s.into_iter().map(|v| v / n).collect())
            }
            Axis::Cols => NdArray::from_vec(
                vec![r, 1],
                (0..r)
                    .map(|i| x.row_slice(i).iter().sum::<f64>() / n)
                    .collect(),
            )?,
        };
        self.push("reduce_mean", out, Op::Mean(a, axis))
    }

    /// Sum of every element as a `[1, 1]` scalar.
    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let s = self.value(a).data().iter().sum();
        self.push("sum_all", NdArray::scalar(s), Op::SumAll(a))
    }

    fn unary(&mut self, op: &'static str, a: Var, f: impl Fn(f64) -> f64, node: Op) -> Result<Var> {
        self.check(a)?;
        if !self.value(a).is_finite() {
            return Err(NumericsError::NonFinite { op });
        }
        let out = self.value(a).map(f);
        self.push(op, out, node)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(
            "sigmoid",
            a,
            |x| {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    x.exp() / (1.0 + x.exp())
                }
            },
            Op::Sigmoid(a),
        )
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary("tanh", a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary("relu", a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary("exp", a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary("log", a, f64::ln, Op::Log(a))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.unary("abs", a, f64::abs, Op::Abs(a))
    }

    /// Softmax along `axis`, computed after subtracting the slice maximum.
    pub fn softmax(&mut self, a: Var, axis: Axis) -> Result<Var> {
        self.check(a)?;
        self.value(a).dims2("softmax")?;
        if !self.value(a).is_finite() {
            return Err(NumericsError::NonFinite { op: "softmax" });
        }
        let out = map_slices(self.value(a), axis, softmax_slice);
        self.push("softmax", out, Op::Softmax(a, axis))
    }

    pub fn log_softmax(&mut self, a: Var, axis: Axis) -> Result<Var> {
        self.check(a)?;
        self.value(a).dims2("log_softmax")?;
        if !self.value(a).is_finite() {
            return Err(NumericsError::NonFinite { op: "log_softmax" });
        }
        let out = map_slices(self.value(a), axis, log_softmax_slice);
        self.push("log_softmax", out, Op::LogSoftmax(a, axis))
    }

    /// Euclidean norm of each row, as an `[rows, 1]` column.
    pub fn row_l2(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let x = self.value(a);
        let (r, _) = x.dims2("row_l2")?;
        let out = NdArray::from_vec(
            vec![r, 1],
            (0..r)
                .map(|i| x.row_slice(i).iter().map(|v| v * v).sum::<f64>().sqrt())
                .collect(),
        )?;
        self.push("row_l2", out, Op::RowL2(a))
    }

    /// Euclidean distance from the `[1, d]` point `q` to every row of
    /// `points`, as a `[1, n]` row. The subgradient at zero distance is 0.
    pub fn distances(&mut self, points: Var, q: Var) -> Result<Var> {
        self.check(points)?;
        self.check(q)?;
        let (p, qv) = (self.value(points), self.value(q));
        let (n, d) = p.dims2("distances")?;
        if qv.shape() != [1, d] {
            return Err(NumericsError::ShapeMismatch {
                op: "distances",
                left: p.shape().to_vec(),
                right: qv.shape().to_vec(),
            });
        }
        let out: Vec<f64> = (0..n)
            .map(|i| {
                p.row_slice(i)
                    .iter()
                    .zip(qv.data())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        self.push("distances", NdArray::row(out), Op::Distances(points, q))
    }

    /// L1 norm of each row, as an `[rows, 1]` column.
    pub fn row_l1(&mut self, a: Var) -> Result<Var> {
        let abs = self.abs(a)?;
        self.reduce_sum(abs, Axis::Cols)
    }

    /// `softmax(q kᵀ / sqrt(d)) v` with one query/key/value per row.
    pub fn attention(&mut self, q: Var, k: Var, v: Var) -> Result<Var> {
        let d = self.value(k).cols();
        let kt = self.transpose(k)?;
        let logits = self.matmul(q, kt)?;
        let scaled = self.scale(logits, 1.0 / (d as f64).sqrt())?;
        let weights = self.softmax(scaled, Axis::Cols)?;
        self.matmul(weights, v)
    }

    /// `x W + b` for a `[m, in]` input, `[in, out]` weight and `[1, out]` bias.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add(xw, b)
    }

    /// Reverse pass from a scalar `loss`; returns the gradient of every
    /// parameter that contributed to it.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        self.check(loss)?;
        let shape = self.value(loss).shape();
        if shape.iter().product::<usize>() != 1 {
            return Err(NumericsError::NotScalar(shape.to_vec()));
        }
        let mut grads: Vec<Option<NdArray>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(NdArray::full(shape, 1.0));
        let mut out = Gradients::default();

        fn acc(grads: &mut [Option<NdArray>], v: Var, g: NdArray) {
            match &mut grads[v.0] {
                Some(x) => x.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let y = node.value.as_ref();
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => out.accumulate_owned(*id, g),
                Op::Add(a, b) => {
                    acc(&mut grads, *a, unbroadcast(&g, self.shape(*a)));
                    acc(&mut grads, *b, unbroadcast(&g, self.shape(*b)));
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, unbroadcast(&g, self.shape(*a)));
                    acc(&mut grads, *b, unbroadcast(&g.map(|x| -x), self.shape(*b)));
                }
                Op::Mul(a, b) => {
                    let ga = zip_broadcast("mul", &g, self.value(*b), |x, y| x * y)?;
                    let gb = zip_broadcast("mul", &g, self.value(*a), |x, y| x * y)?;
                    acc(&mut grads, *a, unbroadcast(&ga, self.shape(*a)));
                    acc(&mut grads, *b, unbroadcast(&gb, self.shape(*b)));
                }
                Op::Scale(a, c) => acc(&mut grads, *a, g.map(|x| x * c)),
                Op::MatMul(a, b) => {
                    let ga = g.matmul_raw(&self.value(*b).transpose());
                    let gb = self.value(*a).transpose().matmul_raw(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.transpose()),
                Op::Concat(parts, axis) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (r, c) = (self.value(p).rows(), self.value(p).cols());
                        let piece = match axis {
                            Axis::Rows => NdArray::from_vec(
                                vec![r, c],
                                g.data()[offset * c..(offset + r) * c].to_vec(),
                            )?,
                            Axis::Cols => {
                                let mut d = Vec::with_capacity(r * c);
                                for i in 0..r {
                                    d.extend_from_slice(&g.row_slice(i)[offset..offset + c]);
                                }
                                NdArray::from_vec(vec![r, c], d)?
                            }
                        };
                        offset += if *axis == Axis::Rows { r } else { c };
                        acc(&mut grads, p, piece);
                    }
                }
                Op::Select(a, axis, indices) => {
                    let mut ga = NdArray::zeros(self.shape(*a));
                    match axis {
                        Axis::Rows => {
                            for (k, &i) in indices.iter().enumerate() {
                                for (dst, src) in ga.row_slice_mut(i).iter_mut().zip(g.row_slice(k))
                                {
                                    *dst += src;
                                }
                            }
                        }
                        Axis::Cols => {
                            for i in 0..ga.rows() {
                                for (k, &j) in indices.iter().enumerate() {
                                    let v = ga.get(i, j) + g.get(i, k);
                                    ga.set(i, j, v);
                                }
                            }
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::GatherRows(a, indices) => {
                    if let Op::Param(id) = self.nodes[a.0].op {
                        out.accumulate_rows(id, self.shape(*a), indices, &g);
                        continue;
                    }
                    let mut ga = NdArray::zeros(self.shape(*a));
                    for (k, &i) in indices.iter().enumerate() {
                        for (dst, src) in ga.row_slice_mut(i).iter_mut().zip(g.row_slice(k)) {
                            *dst += src;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Extremum(a, axis, arg) => {
                    let mut ga = NdArray::zeros(self.shape(*a));
                    match axis {
                        Axis::Rows => {
                            for (j, &i) in arg.iter().enumerate() {
                                ga.set(i, j, g.data()[j]);
                            }
                        }
                        Axis::Cols => {
                            for (i, &j) in arg.iter().enumerate() {
                                ga.set(i, j, g.data()[i]);
                            }
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let ga = zip_broadcast("sum", &NdArray::zeros(self.shape(*a)), &g, |_, y| y)?;
                    acc(&mut grads, *a, ga);
                }
                Op::Mean(a, axis) => {
                    let x = self.value(*a);
                    let n = if *axis == Axis::Rows {
                        x.rows()
                    } else {
                        x.cols()
                    } as f64;
                    let ga = zip_broadcast("mean", &NdArray::zeros(x.shape()), &g, |_, y| y / n)?;
                    acc(&mut grads, *a, ga);
                }
                Op::SumAll(a) => acc(&mut grads, *a, NdArray::full(self.shape(*a), g.item())),
                Op::Sigmoid(a) => {
                    let y = y.expect("owned");
                    acc(
                        &mut grads,
                        *a,
                        zip_broadcast("sigmoid", &g, y, |g, s| g * s * (1.0 - s))?,
                    );
                }
                Op::Tanh(a) => {
                    let y = y.expect("owned");
                    acc(
                        &mut grads,
                        *a,
                        zip_broadcast("tanh", &g, y, |g, t| g * (1.0 - t * t))?,
                    );
                }
                Op::Relu(a) => {
                    let ga =
                        zip_broadcast(
                            "relu",
                            &g,
                            self.value(*a),
                            |g, x| if x > 0.0 { g } else { 0.0 },
                        )?;
                    acc(&mut grads, *a, ga);
                }
                Op::Exp(a) => {
                    let y = y.expect("owned");
                    acc(&mut grads, *a, zip_broadcast("exp", &g, y, |g, e| g * e)?);
                }
                Op::Log(a) => {
                    acc(
                        &mut grads,
                        *a,
                        zip_broadcast("log", &g, self.value(*a), |g, x| g / x)?,
                    );
                }
                Op::Abs(a) => {
                    let ga = zip_broadcast("abs", &g, self.value(*a), |g, x| {
                        if x > 0.0 {
                            g
                        } else if x < 0.0 {
                            -g
                        } else {
                            0.0
                        }
                    })?;
                    acc(&mut grads, *a, ga);
                }
                Op::Softmax(a, axis) => {
                    let y = y.expect("owned");
                    let ga = softmax_backward(y, &g, *axis, false);
                    acc(&mut grads, *a, ga);
                }
                Op::LogSoftmax(a, axis) => {
                    let y = y.expect("owned");
                    let ga = softmax_backward(y, &g, *axis, true);
                    acc(&mut grads, *a, ga);
                }
                Op::Distances(p, q) => {
                    let (pts, qv) = (self.value(*p), self.value(*q));
                    let dist = y.expect("owned");
                    let mut gp = NdArray::zeros(pts.shape());
                    let mut gq = vec![0.0; qv.cols()];
                    for i in 0..pts.rows() {
                        let n = dist.data()[i];
                        if n == 0.0 {
                            continue;
                        }
                        let s = g.data()[i] / n;
                        for ((dst, &pv), (gqj, &qj)) in gp
                            .row_slice_mut(i)
                            .iter_mut()
                            .zip(pts.row_slice(i))
                            .zip(gq.iter_mut().zip(qv.data()))
                        {
                            let d = s * (pv - qj);
                            *dst = d;
                            *gqj -= d;
                        }
                    }
                    match self.nodes[p.0].op {
                        Op::Param(id) => out.accumulate_owned(id, gp),
                        _ => acc(&mut grads, *p, gp),
                    }
                    acc(&mut grads, *q, NdArray::row(gq));
                }
                Op::RowL2(a) => {
                    let x = self.value(*a);
                    let norms = y.expect("owned");
                    let mut ga = NdArray::zeros(x.shape());
                    for i in 0..x.rows() {
                        let n = norms.data()[i];
                        if n == 0.0 {
                            continue;
                        }
                        let s = g.data()[i] / n;
                        for (dst, src) in ga.row_slice_mut(i).iter_mut().zip(x.row_slice(i)) {
                            *dst = s * src;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
            }
        }
        Ok(out)
    }
}

/// Gradient through softmax (`log = false`) or log-softmax (`log = true`),
/// given the forward output `y` and upstream gradient `g`.
fn softmax_backward(y: &NdArray, g: &NdArray, axis: Axis, log: bool) -> NdArray {
    let (y, g) = match axis {
        Axis::Cols => (y.clone(), g.clone()),
        Axis::Rows => (y.transpose(), g.transpose()),
    };
    let mut out = NdArray::zeros(y.shape());
    for i in 0..y.rows() {
        let ys = y.row_slice(i);
        let gs = g.row_slice(i);
        let o = out.row_slice_mut(i);
        if log {
            let total: f64 = gs.iter().sum();
            for j in 0..ys.len() {
                o[j] = gs[j] - ys[j].exp() * total;
            }
        } else {
            let dot: f64 = ys.iter().zip(gs).map(|(a, b)| a * b).sum();
            for j in 0..ys.len() {
                o[j] = ys[j] * (gs[j] - dot);
            }
        }
    }
    match axis {
        Axis::Cols => out,
        Axis::Rows => out.transpose(),
    }
}

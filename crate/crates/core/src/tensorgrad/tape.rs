use crate::error::{Error, Result};

use super::{ParamId, ParamStore, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Concat { parts: Vec<Var>, axis: usize },
    Slice { src: Var, axis: usize, start: usize },
    Transpose(Var),
    Reshape(Var),
    Softmax(Var),
    MaxPool { src: Var, argmax: Vec<usize> },
    Conv1d { x: Var, w: Var, b: Var, left: usize },
    Embedding { table: ParamId, ids: Vec<usize> },
    CrossEntropy { probs: Var, gold: usize },
    Sum(Var),
    MeanRows(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records forward operations in topological order.
///
/// A tape is single-use: build the graph, call [`Tape::backward`] once on a
/// scalar, then drop it.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

/// Splits a shape around `axis` into (outer, extent, inner) counts.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Plain i-k-j matrix product of a (p×q) and b (q×r).
fn matmul_raw(a: &[f64], b: &[f64], p: usize, q: usize, r: usize) -> Vec<f64> {
    let mut out = vec![0.0; p * r];
    for i in 0..p {
        let row = &mut out[i * r..(i + 1) * r];
        for k in 0..q {
            let aik = a[i * q + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b[k * r..(k + 1) * r];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
    out
}

fn softmax_raw(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Left padding of a same-length convolution; the odd cell goes left.
pub(crate) fn conv_left_pad(window: usize) -> usize {
    window / 2
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last `backward` call w.r.t. `v`, if it was reached.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// A constant input; gradients reaching it are kept for inspection only.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if bv.rank() != 2 || av.rank() > 2 {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", av.shape(), bv.shape()),
            ));
        }
        let (p, q) = av.dims2();
        let (q2, r) = bv.dims2();
        if q != q2 {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", av.shape(), bv.shape()),
            ));
        }
        let data = matmul_raw(av.data(), bv.data(), p, q, r);
        let shape = if av.rank() == 1 { vec![r] } else { vec![p, r] };
        Ok(self.push(Tensor::from_parts(shape, data), Op::MatMul(a, b)))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(Tensor::from_parts(shape, data), Op::Add(a, b)))
    }

    /// Adds vector `bias` to every row of `m`.
    pub fn add_row(&mut self, m: Var, bias: Var) -> Result<Var> {
        let (_, cols) = self.value(m).dims2();
        if self.value(bias).len() != cols || self.value(m).rank() > 2 {
            return Err(Error::shape(
                "add_row",
                format!("{:?} + {:?}", self.shape(m), self.shape(bias)),
            ));
        }
        let b = self.value(bias).data();
        let data = self
            .value(m)
            .data()
            .chunks(cols.max(1))
            .flat_map(|row| row.iter().zip(b).map(|(x, y)| x + y))
            .collect();
        let shape = self.shape(m).to_vec();
        Ok(self.push(Tensor::from_parts(shape, data), Op::AddRow(m, bias)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(Tensor::from_parts(shape, data), Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let v = self.value(a);
        let data = v.data().iter().map(|x| x * factor).collect();
        let shape = v.shape().to_vec();
        self.push(Tensor::from_parts(shape, data), Op::Scale(a, factor))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let data = v.data().iter().map(|x| x.tanh()).collect();
        let shape = v.shape().to_vec();
        self.push(Tensor::from_parts(shape, data), Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let data = v.data().iter().map(|&x| sigmoid(x)).collect();
        let shape = v.shape().to_vec();
        self.push(Tensor::from_parts(shape, data), Op::Sigmoid(a))
    }

    /// Concatenates equal-rank tensors along `axis`.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no parts"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", format!("axis {axis} for {base:?}")));
        }
        let mut extent = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(Error::shape("concat", format!("{base:?} with {s:?}")));
            }
            extent += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = extent;
        let data = self.concat_data(parts, axis);
        Ok(self.push(
            Tensor::from_parts(shape, data),
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
        ))
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        let first = rows.first().ok_or_else(|| Error::shape("stack", "no rows"))?;
        let width = self.shape(*first).to_vec();
        if width.len() != 1 || rows.iter().any(|&r| self.shape(r) != width.as_slice()) {
            return Err(Error::shape("stack", "rows must be equal-length vectors"));
        }
        let data = self.concat_data(rows, 0);
        Ok(self.push(
            Tensor::from_parts(vec![rows.len(), width[0]], data),
            Op::Concat {
                parts: rows.to_vec(),
                axis: 0,
            },
        ))
    }

    fn concat_data(&self, parts: &[Var], axis: usize) -> Vec<f64> {
        let (outer, _, _) = axis_split(self.shape(parts[0]), axis);
        let total: usize = parts.iter().map(|&p| self.value(p).len()).sum();
        let mut data = Vec::with_capacity(total);
        for o in 0..outer {
            for &p in parts {
                let v = self.value(p);
                let block = v.len() / outer;
                data.extend_from_slice(&v.data()[o * block..(o + 1) * block]);
            }
        }
        data
    }

    /// Takes `start..end` along `axis`.
    pub fn slice(&mut self, src: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let shape = self.shape(src).to_vec();
        if axis >= shape.len() || start >= end || end > shape[axis] {
            return Err(Error::shape(
                "slice",
                format!("{start}..{end} on axis {axis} of {shape:?}"),
            ));
        }
        let (outer, ext, inner) = axis_split(&shape, axis);
        let v = self.value(src).data();
        let mut data = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            let base = o * ext * inner;
            data.extend_from_slice(&v[base + start * inner..base + end * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = end - start;
        Ok(self.push(
            Tensor::from_parts(out_shape, data),
            Op::Slice { src, axis, start },
        ))
    }

    /// Row `i` of a matrix as a vector.
    pub fn row(&mut self, m: Var, i: usize) -> Result<Var> {
        let shape = self.shape(m).to_vec();
        if shape.len() != 2 || i >= shape[0] {
            return Err(Error::shape("row", format!("row {i} of {shape:?}")));
        }
        let data = self.value(m).row(i).to_vec();
        Ok(self.push(
            Tensor::from_parts(vec![shape[1]], data),
            Op::Slice {
                src: m,
                axis: 0,
                start: i,
            },
        ))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        if v.rank() != 2 {
            return Err(Error::shape("transpose", format!("{:?}", v.shape())));
        }
        let (r, c) = v.dims2();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = v.data()[i * c + j];
            }
        }
        Ok(self.push(Tensor::from_parts(vec![c, r], data), Op::Transpose(a)))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a);
        if shape.iter().product::<usize>() != v.len() {
            return Err(Error::shape(
                "reshape",
                format!("{:?} into {shape:?}", v.shape()),
            ));
        }
        let data = v.data().to_vec();
        Ok(self.push(Tensor::from_parts(shape.to_vec(), data), Op::Reshape(a)))
    }

    /// Softmax of a vector, evaluated with max subtraction.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        if v.rank() != 1 || v.is_empty() {
            return Err(Error::shape("softmax", format!("{:?}", v.shape())));
        }
        let data = softmax_raw(v.data());
        let shape = v.shape().to_vec();
        Ok(self.push(Tensor::from_parts(shape, data), Op::Softmax(a)))
    }

    /// Column-wise maximum of an (n×f) matrix; ties resolve to the first row.
    pub fn max_pool(&mut self, m: Var) -> Result<Var> {
        let v = self.value(m);
        if v.rank() != 2 || v.shape()[0] == 0 {
            return Err(Error::shape("max_pool", format!("{:?}", v.shape())));
        }
        let (n, f) = v.dims2();
        let mut argmax = vec![0usize; f];
        let mut out = v.row(0).to_vec();
        for i in 1..n {
            for (k, &x) in v.row(i).iter().enumerate() {
                if x > out[k] {
                    out[k] = x;
                    argmax[k] = i;
                }
            }
        }
        Ok(self.push(
            Tensor::from_parts(vec![f], out),
            Op::MaxPool { src: m, argmax },
        ))
    }

    /// Same-length 1-D convolution of x (n×m) with w (win×m×f) plus bias b (f),
    /// zero-padded with `win / 2` cells on the left and the rest on the right.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let ws = wv.shape();
        if xv.rank() != 2 || ws.len() != 3 || xv.shape()[0] == 0 {
            return Err(Error::shape(
                "conv1d",
                format!("x {:?}, w {:?}", xv.shape(), ws),
            ));
        }
        let (n, m) = xv.dims2();
        let (win, wm, f) = (ws[0], ws[1], ws[2]);
        if wm != m || bv.len() != f || win == 0 {
            return Err(Error::shape(
                "conv1d",
                format!("x {:?}, w {:?}, b {:?}", xv.shape(), ws, bv.shape()),
            ));
        }
        let left = conv_left_pad(win);
        let (xd, wd, bd) = (xv.data(), wv.data(), bv.data());
        let mut out = Vec::with_capacity(n * f);
        for i in 0..n {
            let mut acc = bd.to_vec();
            for t in 0..win {
                let pos = i as isize - left as isize + t as isize;
                if pos < 0 || pos >= n as isize {
                    continue;
                }
                let xrow = &xd[pos as usize * m..(pos as usize + 1) * m];
                for (c, &xc) in xrow.iter().enumerate() {
                    let wrow = &wd[(t * m + c) * f..(t * m + c + 1) * f];
                    for (a, wk) in acc.iter_mut().zip(wrow) {
                        *a += xc * wk;
                    }
                }
            }
            out.extend(acc);
        }
        Ok(self.push(
            Tensor::from_parts(vec![n, f], out),
            Op::Conv1d { x, w, b, left },
        ))
    }

    /// Gathers rows of an embedding table parameter.
    pub fn embedding(&mut self, store: &ParamStore, table: ParamId, ids: &[usize]) -> Result<Var> {
        let t = store.value(table);
        let (v, m) = t.dims2();
        if t.rank() != 2 {
            return Err(Error::shape("embedding", format!("table {:?}", t.shape())));
        }
        let mut data = Vec::with_capacity(ids.len() * m);
        for &id in ids {
            if id >= v {
                return Err(Error::Index {
                    what: "embedding table",
                    index: id,
                    len: v,
                });
            }
            data.extend_from_slice(t.row(id));
        }
        Ok(self.push(
            Tensor::from_parts(vec![ids.len(), m], data),
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// −ln(probs[gold]) with probabilities clamped at 1e-12.
    pub fn cross_entropy(&mut self, probs: Var, gold: usize) -> Result<Var> {
        let p = self.value(probs);
        if gold >= p.len() {
            return Err(Error::Index {
                what: "class probabilities",
                index: gold,
                len: p.len(),
            });
        }
        let loss = -p.data()[gold].max(1e-12).ln();
        Ok(self.push(
            Tensor::from_parts(vec![1], vec![loss]),
            Op::CrossEntropy { probs, gold },
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::from_parts(vec![1], vec![s]), Op::Sum(a))
    }

    /// Mean over the rows of a matrix.
    pub fn mean_rows(&mut self, m: Var) -> Result<Var> {
        let v = self.value(m);
        if v.rank() != 2 || v.shape()[0] == 0 {
            return Err(Error::shape("mean_rows", format!("{:?}", v.shape())));
        }
        let (n, d) = v.dims2();
        let mut out = vec![0.0; d];
        for i in 0..n {
            add_into(&mut out, v.row(i));
        }
        for o in &mut out {
            *o /= n as f64;
        }
        Ok(self.push(Tensor::from_parts(vec![d], out), Op::MeanRows(m)))
    }

    /// Backpropagates from the scalar `loss`, adding parameter gradients
    /// into `store`.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", self.shape(loss)),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let y = node.value.data();
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => store.accumulate(*id, &g),
                Op::MatMul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let (p, q) = av.dims2();
                    let (_, r) = bv.dims2();
                    // dA = G·Bᵀ
                    let ga = slot(&mut grads, *a, p * q);
                    for ii in 0..p {
                        let grow = &g[ii * r..(ii + 1) * r];
                        for k in 0..q {
                            let brow = &bv.data()[k * r..(k + 1) * r];
                            ga[ii * q + k] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                    // dB = Aᵀ·G
                    let gb = slot(&mut grads, *b, q * r);
                    for ii in 0..p {
                        let grow = &g[ii * r..(ii + 1) * r];
                        for k in 0..q {
                            let aik = av.data()[ii * q + k];
                            if aik == 0.0 {
                                continue;
                            }
                            for (o, gv) in gb[k * r..(k + 1) * r].iter_mut().zip(grow) {
                                *o += aik * gv;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_into(slot(&mut grads, *a, g.len()), &g);
                    add_into(slot(&mut grads, *b, g.len()), &g);
                }
                Op::AddRow(m, bias) => {
                    add_into(slot(&mut grads, *m, g.len()), &g);
                    let cols = self.nodes[bias.0].value.len();
                    let gb = slot(&mut grads, *bias, cols);
                    for row in g.chunks(cols.max(1)) {
                        add_into(gb, row);
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
                    let ga = slot(&mut grads, *a, g.len());
                    for ((o, gv), bx) in ga.iter_mut().zip(&g).zip(bv) {
                        *o += gv * bx;
                    }
                    let gb = slot(&mut grads, *b, g.len());
                    for ((o, gv), ax) in gb.iter_mut().zip(&g).zip(av) {
                        *o += gv * ax;
                    }
                }
                Op::Scale(a, factor) => {
                    let ga = slot(&mut grads, *a, g.len());
                    for (o, gv) in ga.iter_mut().zip(&g) {
                        *o += gv * factor;
                    }
                }
                Op::Tanh(a) => {
                    let ga = slot(&mut grads, *a, g.len());
                    for ((o, gv), yv) in ga.iter_mut().zip(&g).zip(y) {
                        *o += gv * (1.0 - yv * yv);
                    }
                }
                Op::Sigmoid(a) => {
                    let ga = slot(&mut grads, *a, g.len());
                    for ((o, gv), yv) in ga.iter_mut().zip(&g).zip(y) {
                        *o += gv * yv * (1.0 - yv);
                    }
                }
                Op::Concat { parts, axis } => {
                    let (outer, _, _) = axis_split(self.nodes[parts[0].0].value.shape(), *axis);
                    let mut offset = 0;
                    for o in 0..outer {
                        for p in parts {
                            let len = self.nodes[p.0].value.len();
                            let block = len / outer;
                            let gp = slot(&mut grads, *p, len);
                            add_into(&mut gp[o * block..(o + 1) * block], &g[offset..offset + block]);
                            offset += block;
                        }
                    }
                }
                Op::Slice { src, axis, start } => {
                    let src_shape = self.nodes[src.0].value.shape();
                    let len = self.nodes[src.0].value.len();
                    let (outer, ext, inner) = axis_split(src_shape, *axis);
                    let width = g.len() / outer;
                    let gs = slot(&mut grads, *src, len);
                    for o in 0..outer {
                        let base = o * ext * inner + start * inner;
                        add_into(&mut gs[base..base + width], &g[o * width..(o + 1) * width]);
                    }
                }
                Op::Transpose(a) => {
                    let (r, c) = self.nodes[a.0].value.dims2();
                    let ga = slot(&mut grads, *a, r * c);
                    for ii in 0..r {
                        for j in 0..c {
                            ga[ii * c + j] += g[j * r + ii];
                        }
                    }
                }
                Op::Reshape(a) => add_into(slot(&mut grads, *a, g.len()), &g),
                Op::Softmax(a) => {
                    let dot: f64 = g.iter().zip(y).map(|(x, z)| x * z).sum();
                    let ga = slot(&mut grads, *a, g.len());
                    for ((o, gv), yv) in ga.iter_mut().zip(&g).zip(y) {
                        *o += yv * (gv - dot);
                    }
                }
                Op::MaxPool { src, argmax } => {
                    let (n, f) = self.nodes[src.0].value.dims2();
                    let gs = slot(&mut grads, *src, n * f);
                    for (k, &row) in argmax.iter().enumerate() {
                        gs[row * f + k] += g[k];
                    }
                }
                Op::Conv1d { x, w, b, left } => {
                    let (xv, wv) = (&self.nodes[x.0].value, &self.nodes[w.0].value);
                    let (n, m) = xv.dims2();
                    let ws = wv.shape();
                    let (win, f) = (ws[0], ws[2]);
                    let (xd, wd) = (xv.data(), wv.data());
                    let mut gx = vec![0.0; n * m];
                    let mut gw = vec![0.0; win * m * f];
                    let mut gbias = vec![0.0; f];
                    for i in 0..n {
                        let grow = &g[i * f..(i + 1) * f];
                        add_into(&mut gbias, grow);
                        for t in 0..win {
                            let pos = i as isize - *left as isize + t as isize;
                            if pos < 0 || pos >= n as isize {
                                continue;
                            }
                            let pos = pos as usize;
                            for c in 0..m {
                                let widx = (t * m + c) * f;
                                let wrow = &wd[widx..widx + f];
                                gx[pos * m + c] +=
                                    grow.iter().zip(wrow).map(|(a, b)| a * b).sum::<f64>();
                                let xc = xd[pos * m + c];
                                for (o, gv) in gw[widx..widx + f].iter_mut().zip(grow) {
                                    *o += xc * gv;
                                }
                            }
                        }
                    }
                    add_into(slot(&mut grads, *x, n * m), &gx);
                    add_into(slot(&mut grads, *w, win * m * f), &gw);
                    add_into(slot(&mut grads, *b, f), &gbias);
                }
                Op::Embedding { table, ids } => {
                    let width = g.len() / ids.len().max(1);
                    for (r, &id) in ids.iter().enumerate() {
                        store.accumulate_row(*table, id, &g[r * width..(r + 1) * width]);
                    }
                }
                Op::CrossEntropy { probs, gold } => {
                    let pv = &self.nodes[probs.0].value;
                    let p = pv.data()[*gold];
                    let gp = slot(&mut grads, *probs, pv.len());
                    if p >= 1e-12 {
                        gp[*gold] -= g[0] / p;
                    }
                }
                Op::Sum(a) => {
                    let ga = slot(&mut grads, *a, self.nodes[a.0].value.len());
                    for o in ga.iter_mut() {
                        *o += g[0];
                    }
                }
                Op::MeanRows(m) => {
                    let (n, d) = self.nodes[m.0].value.dims2();
                    let gm = slot(&mut grads, *m, n * d);
                    for r in 0..n {
                        for (o, gv) in gm[r * d..(r + 1) * d].iter_mut().zip(&g) {
                            *o += gv / n as f64;
                        }
                    }
                }
            }
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

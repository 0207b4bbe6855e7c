//! Reverse-mode differentiation over a recorded list of operations.

use std::rc::Rc;

use rand::Rng;

use super::{ModelError, ParamId, ParamStore, TensorF};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub k: usize,
    pub sy: usize,
    pub sx: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.pad - self.k) / self.sy + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.pad - self.k) / self.sx + 1
    }
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Mul(Var, Vec<f64>),
    Softmax(Var),
    Norm { x: Var, g: Var, b: Var, gain_per_row: bool, xhat: Vec<f64>, inv_std: Vec<f64> },
    Embedding { table: Var, ids: Vec<usize> },
    Cols { a: Var, start: usize },
    Concat(Vec<Var>),
    Conv { x: Var, w: Var, b: Var, geo: ConvGeom, cols: Vec<f64> },
    Transpose(Var),
    MaxOverHeight { x: Var, arg: Vec<usize> },
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<f64> },
    Loss { input: Var, grad: Vec<f64> },
}

struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

#[derive(Clone, Copy)]
struct Mat<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    rs: isize,
    cs: isize,
}

/// Logical view of a stored (r, c) row-major matrix, transposed if `t`.
fn mat(data: &[f64], r: usize, c: usize, t: bool) -> Mat<'_> {
    if t {
        Mat {
            data,
            rows: c,
            cols: r,
            rs: 1,
            cs: c as isize,
        }
    } else {
        Mat {
            data,
            rows: r,
            cols: c,
            rs: c as isize,
            cs: 1,
        }
    }
}

/// `c = alpha * a * b + beta * c` with `c` row-major (a.rows, b.cols).
fn gemm(alpha: f64, a: Mat<'_>, b: Mat<'_>, beta: f64, c: &mut [f64]) {
    assert_eq!(a.cols, b.rows);
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the views lie inside their slices by construction and `c`
    // holds exactly m*n values.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.rs,
            a.cs,
            b.data.as_ptr(),
            b.rs,
            b.cs,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Plain matrix product of row-major (m, k) and (k, n) slices.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    gemm(1.0, mat(a, m, k, false), mat(b, k, n, false), 0.0, &mut c);
    c
}

const NORM_EPS: f64 = 1e-5;

/// Normalises each of the `rows` groups of `width` values to zero mean and
/// unit variance.
fn normalise(x: &[f64], width: usize) -> (Vec<f64>, Vec<f64>) {
    let rows = x.len() / width.max(1);
    let mut xhat = vec![0.0; x.len()];
    let mut inv = vec![0.0; rows];
    for r in 0..rows {
        let s = &x[r * width..(r + 1) * width];
        let mean = s.iter().sum::<f64>() / width as f64;
        let var = s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / width as f64;
        let is = 1.0 / (var + NORM_EPS).sqrt();
        inv[r] = is;
        for (o, v) in xhat[r * width..(r + 1) * width].iter_mut().zip(s) {
            *o = (v - mean) * is;
        }
    }
    (xhat, inv)
}

/// Rows of a row-major (rows, n) slice, softmax in place. `None` in
/// `allowed` lets every position through.
pub fn softmax_rows(x: &mut [f64], n: usize, allowed: Option<&[bool]>) -> Result<(), ModelError> {
    for (r, row) in x.chunks_mut(n).enumerate() {
        let ok = |j: usize| allowed.is_none_or(|a| a[r * n + j]);
        let max = (0..n).filter(|&j| ok(j)).map(|j| row[j]).fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(ModelError::AllMasked { row: r });
        }
        let mut sum = 0.0;
        for (j, v) in row.iter_mut().enumerate() {
            *v = if ok(j) { (*v - max).exp() } else { 0.0 };
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(())
}

/// Gradients of one backward pass, indexed by [`Var`].
pub struct Gradients(Vec<Option<Vec<f64>>>);

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.0[v.0].as_deref()
    }
}

/// Records operations and their values for one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> TensorF {
        TensorF::new(self.shape(v).to_vec(), self.value(v).to_vec()).expect("consistent node")
    }

    fn dims2(&self, v: Var) -> (usize, usize) {
        let s = self.shape(v);
        assert_eq!(s.len(), 2, "expected a matrix, got {s:?}");
        (s[0], s[1])
    }

    /// Constant input; gradients flow to it only if `trainable`.
    pub fn leaf(&mut self, t: &TensorF, trainable: bool) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, trainable)
    }

    pub fn constant(&mut self, shape: Vec<usize>, value: Vec<f64>) -> Var {
        self.push(shape, value, Op::Leaf, false)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let t = store.get(id);
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Param(id), true)
    }

    /// `op(a) * op(b)` where `op` transposes when the flag is set.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Var {
        let (ar, ac) = self.dims2(a);
        let (br, bc) = self.dims2(b);
        let va = mat(self.value(a), ar, ac, ta);
        let vb = mat(self.value(b), br, bc, tb);
        assert_eq!(va.cols, vb.rows, "matmul {:?} x {:?}", (va.rows, va.cols), (vb.rows, vb.cols));
        let (m, n) = (va.rows, vb.cols);
        let mut out = vec![0.0; m * n];
        gemm(1.0, va, vb, 0.0, &mut out);
        let ng = self.ng(a) || self.ng(b);
        self.push(vec![m, n], out, Op::MatMul { a, b, ta, tb }, ng)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.matmul_t(a, b, false, false)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add");
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let ng = self.ng(a) || self.ng(b);
        self.push(self.shape(a).to_vec(), out, Op::Add(a, b), ng)
    }

    /// Adds a bias of length `n` to every row of an (m, n) matrix.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let n = *self.shape(a).last().unwrap();
        assert_eq!(self.value(bias).len(), n, "add_row");
        let bv = self.value(bias);
        let out = self.value(a).chunks(n).flat_map(|r| r.iter().zip(bv).map(|(x, y)| x + y)).collect();
        let ng = self.ng(a) || self.ng(bias);
        self.push(self.shape(a).to_vec(), out, Op::AddRow(a, bias), ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).iter().map(|x| x * s).collect();
        self.push(self.shape(a).to_vec(), out, Op::Scale(a, s), self.ng(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|x| x.max(0.0)).collect();
        self.push(self.shape(a).to_vec(), out, Op::Relu(a), self.ng(a))
    }

    /// Element-wise product with a constant array of the same size.
    pub fn mul_const(&mut self, a: Var, m: Vec<f64>) -> Var {
        assert_eq!(m.len(), self.value(a).len());
        let out = self.value(a).iter().zip(&m).map(|(x, y)| x * y).collect();
        self.push(self.shape(a).to_vec(), out, Op::Mul(a, m), self.ng(a))
    }

    /// Inverted dropout; identity when `rate` is 0.
    pub fn dropout(&mut self, a: Var, rate: f64, rng: &mut impl Rng) -> Var {
        if rate <= 0.0 {
            return a;
        }
        let n = self.value(a).len();
        let mask = if rate >= 1.0 {
            vec![0.0; n]
        } else {
            let keep = 1.0 / (1.0 - rate);
            (0..n).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect()
        };
        self.mul_const(a, mask)
    }

    /// Softmax over the last axis. Disallowed positions get weight 0.
    pub fn softmax(&mut self, a: Var, allowed: Option<Rc<Vec<bool>>>) -> Result<Var, ModelError> {
        let n = *self.shape(a).last().unwrap();
        let mut out = self.value(a).to_vec();
        softmax_rows(&mut out, n, allowed.as_deref().map(Vec::as_slice))?;
        Ok(self.push(self.shape(a).to_vec(), out, Op::Softmax(a), self.ng(a)))
    }

    fn norm(&mut self, x: Var, g: Var, b: Var, width: usize, gain_per_row: bool) -> Var {
        let (xhat, inv_std) = normalise(self.value(x), width);
        let (gv, bv) = (self.value(g), self.value(b));
        let out = xhat
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let k = if gain_per_row { i / width } else { i % width };
                v * gv[k] + bv[k]
            })
            .collect();
        let ng = self.ng(x) || self.ng(g) || self.ng(b);
        let op = Op::Norm {
            x,
            g,
            b,
            gain_per_row,
            xhat,
            inv_std,
        };
        self.push(self.shape(x).to_vec(), out, op, ng)
    }

    /// Normalises each row of an (m, n) matrix, then scales and shifts
    /// per column.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let n = *self.shape(x).last().unwrap();
        self.norm(x, gain, bias, n, false)
    }

    /// Normalises each channel of a (c, h, w) map over its pixels.
    pub fn instance_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let s = self.shape(x);
        let width = s[1] * s[2];
        self.norm(x, gain, bias, width, true)
    }

    /// Rows of `table` picked by `ids`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Var {
        let (_, d) = self.dims2(table);
        let tv = self.value(table);
        let out = ids.iter().flat_map(|&i| tv[i * d..(i + 1) * d].iter().copied()).collect();
        let op = Op::Embedding {
            table,
            ids: ids.to_vec(),
        };
        self.push(vec![ids.len(), d], out, op, self.ng(table))
    }

    /// Columns `start..start + len` of a matrix.
    pub fn cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (_, n) = self.dims2(a);
        let out = self.value(a).chunks(n).flat_map(|r| r[start..start + len].iter().copied()).collect();
        let rows = self.shape(a)[0];
        self.push(vec![rows, len], out, Op::Cols { a, start }, self.ng(a))
    }

    /// Joins matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.shape(parts[0])[0];
        let widths: Vec<usize> = parts.iter().map(|&p| self.dims2(p).1).collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p)[r * w..(r + 1) * w]);
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(vec![rows, total], out, Op::Concat(parts.to_vec()), ng)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (m, n) = self.dims2(a);
        let v = self.value(a);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = v[i * n + j];
            }
        }
        self.push(vec![n, m], out, Op::Transpose(a), self.ng(a))
    }

    /// Same values under a new shape.
    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Var {
        assert_eq!(shape.iter().product::<usize>(), self.value(a).len(), "reshape");
        let out = self.value(a).to_vec();
        // A product with ones keeps the gradient wiring trivial.
        let ones = vec![1.0; out.len()];
        self.push(shape, out, Op::Mul(a, ones), self.ng(a))
    }

    /// 2-D convolution of a (cin, h, w) map with a (cout, cin*k*k) kernel
    /// and a bias of length cout, square kernel, zero padding.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, k: usize, stride: (usize, usize), pad: usize) -> Var {
        let s = self.shape(x);
        let geo = ConvGeom {
            cin: s[0],
            h: s[1],
            w: s[2],
            cout: self.shape(w)[0],
            k,
            sy: stride.0,
            sx: stride.1,
            pad,
        };
        assert_eq!(self.shape(w)[1], geo.cin * k * k, "conv kernel");
        let (ho, wo) = (geo.out_h(), geo.out_w());
        let cols = im2col(self.value(x), &geo);
        let mut out = vec![0.0; geo.cout * ho * wo];
        let bv = self.value(b);
        for (c, row) in out.chunks_mut(ho * wo).enumerate() {
            row.iter_mut().for_each(|v| *v = bv[c]);
        }
        gemm(
            1.0,
            mat(self.value(w), geo.cout, geo.cin * k * k, false),
            mat(&cols, geo.cin * k * k, ho * wo, false),
            1.0,
            &mut out,
        );
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        self.push(vec![geo.cout, ho, wo], out, Op::Conv { x, w, b, geo, cols }, ng)
    }

    /// Collapses the height of a (c, h, w) map by a maximum, giving (w, c).
    pub fn max_over_height(&mut self, x: Var) -> Var {
        let s = self.shape(x).to_vec();
        let (c, h, w) = (s[0], s[1], s[2]);
        let v = self.value(x);
        let mut out = vec![0.0; w * c];
        let mut arg = vec![0; w * c];
        for ch in 0..c {
            for col in 0..w {
                let mut best = ch * h * w + col;
                for row in 1..h {
                    let i = (ch * h + row) * w + col;
                    if v[i] > v[best] {
                        best = i;
                    }
                }
                out[col * c + ch] = v[best];
                arg[col * c + ch] = best;
            }
        }
        self.push(vec![w, c], out, Op::MaxOverHeight { x, arg }, self.ng(x))
    }

    /// Sum over rows of the negative log softmax probability of each
    /// row's target.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, ModelError> {
        let (m, n) = self.dims2(logits);
        if targets.len() != m {
            return Err(ModelError::ShapeMismatch(format!("{m} logit rows for {} targets", targets.len())));
        }
        let mut probs = self.value(logits).to_vec();
        softmax_rows(&mut probs, n, None)?;
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = &self.value(logits)[r * n..(r + 1) * n];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[t];
        }
        let op = Op::CrossEntropy {
            logits,
            targets: targets.to_vec(),
            probs,
        };
        Ok(self.push(vec![1], vec![loss], op, self.ng(logits)))
    }

    /// Scalar computed outside the tape, with its gradient w.r.t. `input`.
    pub fn external_loss(&mut self, input: Var, value: f64, grad: Vec<f64>) -> Var {
        assert_eq!(grad.len(), self.value(input).len());
        self.push(vec![1], vec![value], Op::Loss { input, grad }, self.ng(input))
    }

    /// Gradients of the scalar `loss` with respect to every recorded value.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar");
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.needs_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        Gradients(grads)
    }

    /// Adds the gradients reaching parameter nodes to the store.
    pub fn accumulate(&self, grads: &Gradients, store: &mut ParamStore) {
        for (node, g) in self.nodes.iter().zip(&grads.0) {
            if let (Op::Param(id), Some(g)) = (&node.op, g) {
                let acc = store.get_mut(*id).grad_mut();
                acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
        }
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
        if !self.ng(v) {
            return None;
        }
        let n = self.value(v).len();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]))
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        macro_rules! with_grad {
            ($v:expr, |$d:ident| $body:block) => {
                if let Some($d) = self.slot(grads, $v) {
                    $body
                }
            };
        }
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul { a, b, ta, tb } => {
                let (ar, ac) = self.dims2(*a);
                let (br, bc) = self.dims2(*b);
                let (m, n) = (node.shape[0], node.shape[1]);
                let (av, bv) = (self.value(*a), self.value(*b));
                with_grad!(*a, |d| {
                    if *ta {
                        gemm(1.0, mat(bv, br, bc, *tb), mat(g, m, n, true), 1.0, d);
                    } else {
                        gemm(1.0, mat(g, m, n, false), mat(bv, br, bc, !*tb), 1.0, d);
                    }
                });
                with_grad!(*b, |d| {
                    if *tb {
                        gemm(1.0, mat(g, m, n, true), mat(av, ar, ac, *ta), 1.0, d);
                    } else {
                        gemm(1.0, mat(av, ar, ac, !*ta), mat(g, m, n, false), 1.0, d);
                    }
                });
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    with_grad!(v, |d| {
                        d.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                    });
                }
            }
            Op::AddRow(a, bias) => {
                with_grad!(*a, |d| {
                    d.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                });
                with_grad!(*bias, |d| {
                    let n = d.len();
                    for row in g.chunks(n) {
                        d.iter_mut().zip(row).for_each(|(x, y)| *x += y);
                    }
                });
            }
            Op::Scale(a, s) => with_grad!(*a, |d| {
                d.iter_mut().zip(g).for_each(|(x, y)| *x += s * y);
            }),
            Op::Relu(a) => with_grad!(*a, |d| {
                for ((x, y), o) in d.iter_mut().zip(g).zip(&node.value) {
                    if *o > 0.0 {
                        *x += y;
                    }
                }
            }),
            Op::Mul(a, m) => with_grad!(*a, |d| {
                for ((x, y), k) in d.iter_mut().zip(g).zip(m) {
                    *x += y * k;
                }
            }),
            Op::Softmax(a) => with_grad!(*a, |d| {
                let n = *node.shape.last().unwrap();
                for ((dr, gr), yr) in d.chunks_mut(n).zip(g.chunks(n)).zip(node.value.chunks(n)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        dr[j] += yr[j] * (gr[j] - dot);
                    }
                }
            }),
            Op::Norm {
                x,
                g: gain,
                b,
                gain_per_row,
                xhat,
                inv_std,
            } => {
                let gv = self.value(*gain);
                let width = xhat.len() / inv_std.len();
                let k = |i: usize| if *gain_per_row { i / width } else { i % width };
                with_grad!(*gain, |d| {
                    for i in 0..g.len() {
                        d[k(i)] += g[i] * xhat[i];
                    }
                });
                with_grad!(*b, |d| {
                    for i in 0..g.len() {
                        d[k(i)] += g[i];
                    }
                });
                with_grad!(*x, |d| {
                    for (r, is) in inv_std.iter().enumerate() {
                        let span = r * width..(r + 1) * width;
                        let dxh: Vec<f64> = span.clone().map(|i| g[i] * gv[k(i)]).collect();
                        let mean = dxh.iter().sum::<f64>() / width as f64;
                        let mean_x =
                            dxh.iter().zip(&xhat[span.clone()]).map(|(a, b)| a * b).sum::<f64>() / width as f64;
                        for (j, i) in span.enumerate() {
                            d[i] += is * (dxh[j] - mean - xhat[i] * mean_x);
                        }
                    }
                });
            }
            Op::Embedding { table, ids } => with_grad!(*table, |d| {
                let w = node.shape[1];
                for (r, &id) in ids.iter().enumerate() {
                    for j in 0..w {
                        d[id * w + j] += g[r * w + j];
                    }
                }
            }),
            Op::Cols { a, start } => with_grad!(*a, |d| {
                let n = self.shape(*a)[1];
                let len = node.shape[1];
                for (r, gr) in g.chunks(len).enumerate() {
                    for (j, y) in gr.iter().enumerate() {
                        d[r * n + start + j] += y;
                    }
                }
            }),
            Op::Concat(parts) => {
                let total = node.shape[1];
                let mut off = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    with_grad!(p, |d| {
                        for (r, gr) in g.chunks(total).enumerate() {
                            for j in 0..w {
                                d[r * w + j] += gr[off + j];
                            }
                        }
                    });
                    off += w;
                }
            }
            Op::Transpose(a) => with_grad!(*a, |d| {
                let (m, n) = (node.shape[1], node.shape[0]);
                for i in 0..m {
                    for j in 0..n {
                        d[i * n + j] += g[j * m + i];
                    }
                }
            }),
            Op::Conv { x, w, b, geo, cols } => {
                let kk = geo.cin * geo.k * geo.k;
                let hw = geo.out_h() * geo.out_w();
                with_grad!(*w, |d| {
                    gemm(1.0, mat(g, geo.cout, hw, false), mat(cols, kk, hw, true), 1.0, d);
                });
                with_grad!(*b, |d| {
                    for (c, row) in g.chunks(hw).enumerate() {
                        d[c] += row.iter().sum::<f64>();
                    }
                });
                with_grad!(*x, |d| {
                    let mut dcols = vec![0.0; kk * hw];
                    gemm(1.0, mat(self.value(*w), geo.cout, kk, true), mat(g, geo.cout, hw, false), 0.0, &mut dcols);
                    col2im(&dcols, geo, d);
                });
            }
            Op::MaxOverHeight { x, arg } => with_grad!(*x, |d| {
                for (y, &i) in g.iter().zip(arg) {
                    d[i] += y;
                }
            }),
            Op::CrossEntropy { logits, targets, probs } => with_grad!(*logits, |d| {
                let n = self.shape(*logits)[1];
                for (i, p) in probs.iter().enumerate() {
                    d[i] += g[0] * p;
                }
                for (r, &t) in targets.iter().enumerate() {
                    d[r * n + t] -= g[0];
                }
            }),
            Op::Loss { input, grad } => with_grad!(*input, |d| {
                d.iter_mut().zip(grad).for_each(|(x, y)| *x += g[0] * y);
            }),
        }
    }
}

fn im2col(x: &[f64], geo: &ConvGeom) -> Vec<f64> {
    let (ho, wo) = (geo.out_h(), geo.out_w());
    let mut cols = vec![0.0; geo.cin * geo.k * geo.k * ho * wo];
    for c in 0..geo.cin {
        for ky in 0..geo.k {
            for kx in 0..geo.k {
                let row = (c * geo.k + ky) * geo.k + kx;
                let dst = &mut cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let y = (oy * geo.sy + ky) as isize - geo.pad as isize;
                    if y < 0 || y >= geo.h as isize {
                        continue;
                    }
                    let src = &x[(c * geo.h + y as usize) * geo.w..][..geo.w];
                    for ox in 0..wo {
                        let xx = (ox * geo.sx + kx) as isize - geo.pad as isize;
                        if xx >= 0 && xx < geo.w as isize {
                            dst[oy * wo + ox] = src[xx as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], geo: &ConvGeom, dx: &mut [f64]) {
    let (ho, wo) = (geo.out_h(), geo.out_w());
    for c in 0..geo.cin {
        for ky in 0..geo.k {
            for kx in 0..geo.k {
                let row = (c * geo.k + ky) * geo.k + kx;
                let src = &cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let y = (oy * geo.sy + ky) as isize - geo.pad as isize;
                    if y < 0 || y >= geo.h as isize {
                        continue;
                    }
                    let base = (c * geo.h + y as usize) * geo.w;
                    for ox in 0..wo {
                        let xx = (ox * geo.sx + kx) as isize - geo.pad as isize;
                        if xx >= 0 && xx < geo.w as isize {
                            dx[base + xx as usize] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> TensorF {
        TensorF::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    /// Central differences of `f` at every input value versus the tape.
    fn check(inputs: &[TensorF], f: impl Fn(&mut Tape, &[Var]) -> Var) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t, true)).collect();
        let out = f(&mut tape, &vars);
        let grads = tape.backward(out);
        let h = 1e-6;
        for (k, t) in inputs.iter().enumerate() {
            let analytic = grads.get(vars[k]).map(<[f64]>::to_vec).unwrap_or(vec![0.0; t.len()]);
            for (i, &a) in analytic.iter().enumerate() {
                let eval = |delta: f64| {
                    let mut ins = inputs.to_vec();
                    ins[k].data_mut()[i] += delta;
                    let mut tp = Tape::new();
                    let vs: Vec<Var> = ins.iter().map(|t| tp.leaf(t, true)).collect();
                    let o = f(&mut tp, &vs);
                    tp.value(o)[0]
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                let err = (numeric - a).abs() / numeric.abs().max(a.abs()).max(1e-6);
                assert!(err < 1e-5, "input {k}[{i}]: numeric {numeric}, analytic {a}");
            }
        }
    }

    /// Weighted sum so every output element matters.
    fn reduce(tape: &mut Tape, v: Var) -> Var {
        let n = tape.value(v).len();
        let w: Vec<f64> = (0..n).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect();
        let flat = tape.reshape(v, vec![1, n]);
        let wv = tape.constant(vec![n, 1], w);
        tape.matmul(flat, wv)
    }

    #[test]
    fn matmul_gradients_all_transpositions() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
            let a = rand_tensor(if ta { vec![4, 3] } else { vec![3, 4] }, &mut rng);
            let b = rand_tensor(if tb { vec![5, 4] } else { vec![4, 5] }, &mut rng);
            check(&[a, b], |t, v| {
                let m = t.matmul_t(v[0], v[1], ta, tb);
                reduce(t, m)
            });
        }
    }

    #[test]
    fn elementwise_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = rand_tensor(vec![3, 4], &mut rng);
        let b = rand_tensor(vec![3, 4], &mut rng);
        let bias = rand_tensor(vec![4], &mut rng);
        check(&[a, b, bias], |t, v| {
            let s = t.add(v[0], v[1]);
            let s = t.add_row(s, v[2]);
            let s = t.scale(s, 0.7);
            let r = t.relu(s);
            let tr = t.transpose(r);
            let c = t.cols(tr, 1, 2);
            let cat = t.concat_cols(&[c, tr]);
            reduce(t, cat)
        });
    }

    #[test]
    fn softmax_and_norm_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = rand_tensor(vec![3, 5], &mut rng);
        let g = rand_tensor(vec![5], &mut rng);
        let b = rand_tensor(vec![5], &mut rng);
        let allowed = Rc::new((0..15).map(|i| i % 5 <= i / 5 + 1).collect::<Vec<_>>());
        check(&[x.clone(), g, b], |t, v| {
            let n = t.layer_norm(v[0], v[1], v[2]);
            let s = t.softmax(n, Some(allowed.clone())).unwrap();
            reduce(t, s)
        });
        let x = rand_tensor(vec![2, 3, 4], &mut rng);
        let g = rand_tensor(vec![2], &mut rng);
        let b = rand_tensor(vec![2], &mut rng);
        check(&[x, g, b], |t, v| {
            let n = t.instance_norm(v[0], v[1], v[2]);
            reduce(t, n)
        });
    }

    #[test]
    fn conv_and_pooling_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = rand_tensor(vec![2, 5, 7], &mut rng);
        let w = rand_tensor(vec![3, 2 * 9], &mut rng);
        let b = rand_tensor(vec![3], &mut rng);
        check(&[x, w, b], |t, v| {
            let c = t.conv2d(v[0], v[1], v[2], 3, (2, 1), 1);
            assert_eq!(t.shape(c), &[3, 3, 7]);
            let m = t.max_over_height(c);
            reduce(t, m)
        });
    }

    #[test]
    fn embedding_and_cross_entropy_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let table = rand_tensor(vec![6, 4], &mut rng);
        let w = rand_tensor(vec![4, 5], &mut rng);
        check(&[table, w], |t, v| {
            let e = t.embedding(v[0], &[1, 3, 1, 5]);
            let l = t.matmul(e, v[1]);
            t.cross_entropy(l, &[0, 4, 2, 2]).unwrap()
        });
    }

    #[test]
    fn conv_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = rand_tensor(vec![2, 6, 5], &mut rng);
        let w = rand_tensor(vec![3, 18], &mut rng);
        let b = rand_tensor(vec![3], &mut rng);
        let mut t = Tape::new();
        let (vx, vw, vb) = (t.leaf(&x, false), t.leaf(&w, false), t.leaf(&b, false));
        let o = t.conv2d(vx, vw, vb, 3, (2, 2), 1);
        let (ho, wo) = (3, 3);
        assert_eq!(t.shape(o), &[3, ho, wo]);
        for co in 0..3 {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut s = b.data()[co];
                    for ci in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let (y, xx) = ((oy * 2 + ky) as isize - 1, (ox * 2 + kx) as isize - 1);
                                if (0..6).contains(&y) && (0..5).contains(&xx) {
                                    s += w.at2(co, (ci * 3 + ky) * 3 + kx) * x.at3(ci, y as usize, xx as usize);
                                }
                            }
                        }
                    }
                    assert!((t.value(o)[(co * ho + oy) * wo + ox] - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn fully_masked_row() {
        let mut t = Tape::new();
        let a = t.constant(vec![2, 2], vec![0.0; 4]);
        let r = t.softmax(a, Some(Rc::new(vec![true, false, false, false])));
        assert_eq!(r.err(), Some(ModelError::AllMasked { row: 1 }));
    }

    #[test]
    fn parameter_gradients_reach_the_store() {
        let mut store = ParamStore::new();
        let id = store.add("w", TensorF::new(vec![1, 2], vec![2.0, -1.0]).unwrap());
        let mut t = Tape::new();
        let w = t.param(&store, id);
        let x = t.constant(vec![2, 1], vec![3.0, 4.0]);
        let y = t.matmul(w, x);
        let g = t.backward(y);
        t.accumulate(&g, &mut store);
        t.accumulate(&g, &mut store);
        assert_eq!(store.get(id).grad().unwrap(), &[6.0, 8.0]);
    }

    #[test]
    fn dropout_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut t = Tape::new();
        let a = t.constant(vec![1, 1000], vec![1.0; 1000]);
        assert_eq!(t.dropout(a, 0.0, &mut rng), a);
        let all = t.dropout(a, 1.0, &mut rng);
        assert!(t.value(all).iter().all(|v| *v == 0.0));
        let half = t.dropout(a, 0.5, &mut rng);
        let mean = t.value(half).iter().sum::<f64>() / 1000.0;
        assert!((mean - 1.0).abs() < 0.1);
    }
}

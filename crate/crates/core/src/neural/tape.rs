//! Reverse-mode automatic differentiation over [`Mat`] values.
//!
//! A [`Tape`] records every operation of one forward pass. `backward` walks it
//! in reverse and accumulates gradients for every node, so parameter
//! gradients are read back from the leaf nodes that hold parameters.

use std::sync::Arc;

use super::tensor::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Index list shared between forward and backward passes.
pub type Index = Arc<Vec<usize>>;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Prelu(Var, Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    Gather(Var, Index),
    ScatterAdd(Var, Index),
    RowSum(Var),
    EdgeConv {
        x: Var,
        w: Var,
        src: Index,
        widx: Index,
        dst: Index,
    },
    Bce {
        logits: Var,
        targets: Arc<Vec<f64>>,
        weights: Arc<Vec<f64>>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Mat,
    op: Op,
}

/// Probabilities are kept this far from 0 and 1 inside the loss.
pub const PROB_CLAMP: f64 = 1e-12;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients(Vec<Option<Mat>>);

impl Gradients {
    /// Gradient with respect to the leaf `v`; zeros when `v` does not reach
    /// the output.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Mat {
        match &self.0[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = tape.value(v).shape();
                Mat::zeros(r, c)
            }
        }
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        assert_eq!(v.shape(), self.value(b).shape(), "add shape mismatch");
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    /// Adds the `1 x c` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let b = self.value(bias);
        assert_eq!((1, self.value(a).cols), b.shape(), "bias shape mismatch");
        let mut v = self.value(a).clone();
        for r in 0..v.rows {
            for (x, y) in v.row_mut(r).iter_mut().zip(&b.data) {
                *x += y;
            }
        }
        self.push(v, Op::AddRow(a, bias))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "mul shape mismatch");
        let data = x.data.iter().zip(&y.data).map(|(p, q)| p * q).collect();
        let v = Mat::from_vec(x.rows, x.cols, data);
        self.push(v, Op::Mul(a, b))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    /// Parametric ReLU with one slope per column (`slope` is `1 x c`).
    pub fn prelu(&mut self, a: Var, slope: Var) -> Var {
        let s = self.value(slope);
        assert_eq!((1, self.value(a).cols), s.shape(), "prelu slope shape mismatch");
        let mut v = self.value(a).clone();
        for r in 0..v.rows {
            for (x, k) in v.row_mut(r).iter_mut().zip(&s.data) {
                if *x < 0.0 {
                    *x *= k;
                }
            }
        }
        self.push(v, Op::Prelu(a, slope))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut v = Mat::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.rows, rows, "concat_cols row mismatch");
            for r in 0..rows {
                v.data[r * cols + off..r * cols + off + m.cols].copy_from_slice(m.row(r));
            }
            off += m.cols;
        }
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.cols, cols, "concat_rows column mismatch");
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        self.push(Mat::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let m = self.value(a);
        assert!(start + len <= m.cols, "slice out of range");
        let mut v = Mat::zeros(m.rows, len);
        for r in 0..m.rows {
            v.row_mut(r).copy_from_slice(&m.row(r)[start..start + len]);
        }
        self.push(v, Op::SliceCols(a, start))
    }

    /// Row `i` of the result is row `index[i]` of `a`.
    pub fn gather(&mut self, a: Var, index: Index) -> Var {
        let m = self.value(a);
        let mut v = Mat::zeros(index.len(), m.cols);
        for (i, &src) in index.iter().enumerate() {
            v.row_mut(i).copy_from_slice(m.row(src));
        }
        self.push(v, Op::Gather(a, index))
    }

    /// Row `i` of `a` is added into row `index[i]` of an `rows x c` result.
    pub fn scatter_add(&mut self, a: Var, index: Index, rows: usize) -> Var {
        let m = self.value(a);
        assert_eq!(m.rows, index.len(), "scatter index length mismatch");
        let mut v = Mat::zeros(rows, m.cols);
        for (i, &dst) in index.iter().enumerate() {
            for (o, x) in v.row_mut(dst).iter_mut().zip(m.row(i)) {
                *o += x;
            }
        }
        self.push(v, Op::ScatterAdd(a, index))
    }

    pub fn row_sum(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let data = (0..m.rows).map(|r| m.row(r).iter().sum()).collect();
        let v = Mat::from_vec(m.rows, 1, data);
        self.push(v, Op::RowSum(a))
    }

    /// Edge-conditioned aggregation: for every edge `e`,
    /// `out[dst[e]] += x[src[e]] * W_e` where `W_e` is row `widx[e]` of `w`
    /// reshaped to `in x out` (row-major).
    pub fn edge_conv(&mut self, x: Var, w: Var, src: Index, widx: Index, dst: Index, rows: usize) -> Var {
        let xm = self.value(x);
        let wm = self.value(w);
        let din = xm.cols;
        assert_eq!(wm.cols % din.max(1), 0, "edge weight width is not a multiple of input width");
        let dout = if din == 0 { 0 } else { wm.cols / din };
        assert!(src.len() == widx.len() && src.len() == dst.len(), "edge index length mismatch");
        let mut v = Mat::zeros(rows, dout);
        for e in 0..src.len() {
            let xr = xm.row(src[e]);
            let we = wm.row(widx[e]);
            let orow = &mut v.data[dst[e] * dout..(dst[e] + 1) * dout];
            for (a, &xa) in xr.iter().enumerate() {
                if xa == 0.0 {
                    continue;
                }
                for (o, &wv) in orow.iter_mut().zip(&we[a * dout..(a + 1) * dout]) {
                    *o += xa * wv;
                }
            }
        }
        self.push(v, Op::EdgeConv { x, w, src, widx, dst })
    }

    /// Weighted mean binary cross-entropy of `sigmoid(logits)` against 0/1
    /// targets. `weights` scales each entry's loss; zero weights mask it out.
    /// The mean divides by the number of entries with positive weight.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Arc<Vec<f64>>, weights: Arc<Vec<f64>>) -> Var {
        let z = self.value(logits);
        assert_eq!(z.data.len(), targets.len(), "target length mismatch");
        assert_eq!(z.data.len(), weights.len(), "weight length mismatch");
        let count = weights.iter().filter(|w| **w > 0.0).count().max(1) as f64;
        let mut total = 0.0;
        for ((&zi, &y), &w) in z.data.iter().zip(targets.iter()).zip(weights.iter()) {
            if w == 0.0 {
                continue;
            }
            let p = sigmoid(zi).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            total -= w * (y * p.ln() + (1.0 - y) * (1.0 - p).ln());
        }
        self.push(Mat::filled(1, 1, total / count), Op::Bce { logits, targets, weights })
    }

    /// Gradients of the scalar node `out` with respect to every node.
    pub fn backward(&self, out: Var) -> Gradients {
        assert_eq!(self.value(out).shape(), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Mat>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(Mat::filled(1, 1, 1.0));
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            // only leaves are read back; intermediate gradients are dropped
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        Gradients(grads)
    }

    fn propagate(&self, i: usize, g: &Mat, grads: &mut [Option<Mat>]) {
        let acc = |grads: &mut [Option<Mat>], v: Var, d: Mat| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&d),
            slot => *slot = Some(d),
        };
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                acc(grads, *a, g.matmul_t(self.value(*b)));
                acc(grads, *b, self.value(*a).t_matmul(g));
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::AddRow(a, bias) => {
                acc(grads, *a, g.clone());
                let mut db = Mat::zeros(1, g.cols);
                for r in 0..g.rows {
                    for (d, x) in db.data.iter_mut().zip(g.row(r)) {
                        *d += x;
                    }
                }
                acc(grads, *bias, db);
            }
            Op::Mul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                let da = g.data.iter().zip(&y.data).map(|(p, q)| p * q).collect();
                let db = g.data.iter().zip(&x.data).map(|(p, q)| p * q).collect();
                acc(grads, *a, Mat::from_vec(g.rows, g.cols, da));
                acc(grads, *b, Mat::from_vec(g.rows, g.cols, db));
            }
            Op::Sigmoid(a) => {
                let d = g.data.iter().zip(&node.value.data).map(|(d, s)| d * s * (1.0 - s)).collect();
                acc(grads, *a, Mat::from_vec(g.rows, g.cols, d));
            }
            Op::Tanh(a) => {
                let d = g.data.iter().zip(&node.value.data).map(|(d, t)| d * (1.0 - t * t)).collect();
                acc(grads, *a, Mat::from_vec(g.rows, g.cols, d));
            }
            Op::Prelu(a, slope) => {
                let x = self.value(*a);
                let s = self.value(*slope);
                let mut da = g.clone();
                let mut ds = Mat::zeros(1, g.cols);
                for r in 0..g.rows {
                    for c in 0..g.cols {
                        let xv = x.get(r, c);
                        if xv < 0.0 {
                            da.set(r, c, g.get(r, c) * s.data[c]);
                            ds.data[c] += g.get(r, c) * xv;
                        }
                    }
                }
                acc(grads, *a, da);
                acc(grads, *slope, ds);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = self.value(p).cols;
                    let mut d = Mat::zeros(g.rows, w);
                    for r in 0..g.rows {
                        d.row_mut(r).copy_from_slice(&g.row(r)[off..off + w]);
                    }
                    acc(grads, p, d);
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let m = self.value(p);
                    let n = m.rows * m.cols;
                    acc(grads, p, Mat::from_vec(m.rows, m.cols, g.data[off..off + n].to_vec()));
                    off += n;
                }
            }
            Op::SliceCols(a, start) => {
                let src = self.value(*a);
                let mut d = Mat::zeros(src.rows, src.cols);
                for r in 0..g.rows {
                    d.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                }
                acc(grads, *a, d);
            }
            Op::Gather(a, index) => {
                let src = self.value(*a);
                let mut d = Mat::zeros(src.rows, src.cols);
                for (k, &row) in index.iter().enumerate() {
                    for (o, x) in d.row_mut(row).iter_mut().zip(g.row(k)) {
                        *o += x;
                    }
                }
                acc(grads, *a, d);
            }
            Op::ScatterAdd(a, index) => {
                let src = self.value(*a);
                let mut d = Mat::zeros(src.rows, src.cols);
                for (k, &row) in index.iter().enumerate() {
                    d.row_mut(k).copy_from_slice(g.row(row));
                }
                acc(grads, *a, d);
            }
            Op::RowSum(a) => {
                let src = self.value(*a);
                let mut d = Mat::zeros(src.rows, src.cols);
                for r in 0..src.rows {
                    d.row_mut(r).fill(g.data[r]);
                }
                acc(grads, *a, d);
            }
            Op::EdgeConv { x, w, src, widx, dst } => {
                let xm = self.value(*x);
                let wm = self.value(*w);
                let (din, dout) = (xm.cols, g.cols);
                let mut dx = Mat::zeros(xm.rows, din);
                let mut dw = Mat::zeros(wm.rows, wm.cols);
                for e in 0..src.len() {
                    let go = g.row(dst[e]);
                    let xr = xm.row(src[e]);
                    let we = wm.row(widx[e]);
                    let dxr = &mut dx.data[src[e] * din..(src[e] + 1) * din];
                    for a in 0..din {
                        let wrow = &we[a * dout..(a + 1) * dout];
                        dxr[a] += wrow.iter().zip(go).map(|(p, q)| p * q).sum::<f64>();
                    }
                    let dwr = &mut dw.data[widx[e] * wm.cols..(widx[e] + 1) * wm.cols];
                    for (a, &xa) in xr.iter().enumerate() {
                        if xa == 0.0 {
                            continue;
                        }
                        for (o, &q) in dwr[a * dout..(a + 1) * dout].iter_mut().zip(go) {
                            *o += xa * q;
                        }
                    }
                }
                acc(grads, *x, dx);
                acc(grads, *w, dw);
            }
            Op::Bce { logits, targets, weights } => {
                let z = self.value(*logits);
                let count = weights.iter().filter(|w| **w > 0.0).count().max(1) as f64;
                let scale = g.data[0] / count;
                let d = z
                    .data
                    .iter()
                    .zip(targets.iter())
                    .zip(weights.iter())
                    .map(|((&zi, &y), &w)| {
                        let p = sigmoid(zi);
                        if w == 0.0 || !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
                            return 0.0;
                        }
                        // d/dz of -w (y ln p + (1 - y) ln(1 - p))
                        scale * w * (p - y)
                    })
                    .collect();
                acc(grads, *logits, Mat::from_vec(z.rows, z.cols, d));
            }
        }
    }
}

//! ECC, XENET and LSTM layers.
//!
//! Each layer owns its parameters as a flat list of matrices. `bind` puts
//! them on a tape as leaves; the `*_on` functions then record the layer's
//! forward pass on that tape.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Index, Tape, Var};
use super::tensor::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn on(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Tanh => tape.tanh(x),
        }
    }
}

pub(crate) fn uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize, bound: f64) -> Mat {
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
    Mat::from_vec(rows, cols, data)
}

/// Uniform init with variance `1 / fan_in`.
fn fan_in<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    uniform(rng, rows, cols, (3.0 / rows.max(1) as f64).sqrt())
}

pub fn bind(tape: &mut Tape, params: &[Mat]) -> Vec<Var> {
    params.iter().map(|p| tape.leaf(p.clone())).collect()
}

/// Directed edge lists for `copies` disjoint replicas of one graph.
///
/// Line `k` of the base graph yields directed edges `2k` (from -> to) and
/// `2k + 1` (to -> from). Replica `c` offsets node ids by `c * nodes` and
/// edge ids by `c * 2E`.
#[derive(Debug, Clone)]
pub struct GraphIndex {
    pub nodes: usize,
    pub src: Index,
    pub dst: Index,
    /// reverse directed edge of each edge
    pub rev: Index,
    /// base directed edge (`0..2E`) of each edge
    pub base: Index,
}

impl GraphIndex {
    pub fn new(n_nodes: usize, edges: &[(usize, usize)], copies: usize) -> Self {
        let per = 2 * edges.len();
        let mut src = Vec::with_capacity(per * copies);
        let mut dst = Vec::with_capacity(per * copies);
        let mut rev = Vec::with_capacity(per * copies);
        let mut base = Vec::with_capacity(per * copies);
        for c in 0..copies {
            let (no, eo) = (c * n_nodes, c * per);
            for (k, &(a, b)) in edges.iter().enumerate() {
                src.extend([no + a, no + b]);
                dst.extend([no + b, no + a]);
                rev.extend([eo + 2 * k + 1, eo + 2 * k]);
                base.extend([2 * k, 2 * k + 1]);
            }
        }
        GraphIndex {
            nodes: n_nodes * copies,
            src: Arc::new(src),
            dst: Arc::new(dst),
            rev: Arc::new(rev),
            base: Arc::new(base),
        }
    }

    pub fn n_edges(&self) -> usize {
        self.src.len()
    }
}

/// Edge-conditioned convolution:
/// `x_i' = act(x_i W_root + sum_{j in N(i)} x_j MLP(e_ji) + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EccLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub mlp_hidden: usize,
    pub activation: Activation,
    /// `[W_root, M1, m1, M2, m2, b]`
    pub params: Vec<Mat>,
}

impl EccLayer {
    pub const EDGE_FEATURES: usize = 2;

    pub fn new<R: Rng>(rng: &mut R, in_dim: usize, out_dim: usize, mlp_hidden: usize, activation: Activation) -> Self {
        let io = in_dim * out_dim;
        // the generated block multiplies an in_dim vector, so its scale
        // follows that fan-in as well
        let m2_bound = 1.0 / ((mlp_hidden * in_dim).max(1) as f64).sqrt();
        EccLayer {
            in_dim,
            out_dim,
            mlp_hidden,
            activation,
            params: vec![
                fan_in(rng, in_dim, out_dim),
                fan_in(rng, Self::EDGE_FEATURES, mlp_hidden),
                Mat::zeros(1, mlp_hidden),
                uniform(rng, mlp_hidden, io, m2_bound),
                Mat::zeros(1, io),
                Mat::zeros(1, out_dim),
            ],
        }
    }

    /// `edge_feats` holds one row per base directed edge (`2E x 2`).
    pub fn on(&self, tape: &mut Tape, p: &[Var], x: Var, edge_feats: Var, g: &GraphIndex) -> Var {
        let root = tape.matmul(x, p[0]);
        let h = tape.matmul(edge_feats, p[1]);
        let h = tape.add_row(h, p[2]);
        let h = tape.tanh(h);
        let w = tape.matmul(h, p[3]);
        let w = tape.add_row(w, p[4]);
        let agg = tape.edge_conv(x, w, g.src.clone(), g.base.clone(), g.dst.clone(), g.nodes);
        let out = tape.add(root, agg);
        let out = tape.add_row(out, p[5]);
        self.activation.on(tape, out)
    }
}

/// XENET layer producing node and directed-edge embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XenetLayer {
    pub node_in: usize,
    pub edge_in: usize,
    pub stack_dim: usize,
    pub node_out: usize,
    pub edge_out: usize,
    /// `[W_s, b_s, prelu slope, W_n, b_n, W_c, b_c]`
    pub params: Vec<Mat>,
}

impl XenetLayer {
    pub const PRELU_INIT: f64 = 0.25;

    pub fn new<R: Rng>(
        rng: &mut R,
        node_in: usize,
        edge_in: usize,
        stack_dim: usize,
        node_out: usize,
        edge_out: usize,
    ) -> Self {
        let stack_in = 2 * node_in + 2 * edge_in;
        let node_cat = node_in + 2 * stack_dim;
        XenetLayer {
            node_in,
            edge_in,
            stack_dim,
            node_out,
            edge_out,
            params: vec![
                fan_in(rng, stack_in, stack_dim),
                Mat::zeros(1, stack_dim),
                Mat::filled(1, stack_dim, Self::PRELU_INIT),
                fan_in(rng, node_cat, node_out),
                Mat::zeros(1, node_out),
                fan_in(rng, stack_dim, edge_out),
                Mat::zeros(1, edge_out),
            ],
        }
    }

    /// `e` holds one row per directed edge of `g`. Returns `(x', e')`.
    pub fn on(&self, tape: &mut Tape, p: &[Var], x: Var, e: Var, g: &GraphIndex) -> (Var, Var) {
        let xi = tape.gather(x, g.src.clone());
        let xj = tape.gather(x, g.dst.clone());
        let eji = tape.gather(e, g.rev.clone());
        let stacked = tape.concat_cols(&[xi, xj, e, eji]);
        let s = tape.matmul(stacked, p[0]);
        let s = tape.add_row(s, p[1]);
        let s = tape.prelu(s, p[2]);
        let s_out = tape.scatter_add(s, g.src.clone(), g.nodes);
        let s_in = tape.scatter_add(s, g.dst.clone(), g.nodes);
        let cat = tape.concat_cols(&[x, s_out, s_in]);
        let xn = tape.matmul(cat, p[3]);
        let xn = tape.add_row(xn, p[4]);
        let xn = tape.sigmoid(xn);
        let en = tape.matmul(s, p[5]);
        let en = tape.add_row(en, p[6]);
        let en = tape.sigmoid(en);
        (xn, en)
    }
}

/// LSTM cell with gates stacked column-wise in the order forget, input,
/// output, candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer {
    pub input: usize,
    pub hidden: usize,
    /// Applied to the cell state when forming `h_t`.
    pub output_activation: Activation,
    /// `[W (input x 4h), U (h x 4h), b (1 x 4h)]`
    pub params: Vec<Mat>,
}

impl LstmLayer {
    pub fn new<R: Rng>(rng: &mut R, input: usize, hidden: usize, output_activation: Activation) -> Self {
        LstmLayer {
            input,
            hidden,
            output_activation,
            params: vec![
                fan_in(rng, input, 4 * hidden),
                fan_in(rng, hidden, 4 * hidden),
                Mat::zeros(1, 4 * hidden),
            ],
        }
    }

    /// Builds a layer from per-gate blocks `[f, i, o, c]`.
    pub fn from_gates(w: [Mat; 4], u: [Mat; 4], b: [Mat; 4], output_activation: Activation) -> Self {
        let input = w[0].rows;
        let hidden = w[0].cols;
        let stack = |parts: &[Mat; 4], rows: usize| {
            let mut m = Mat::zeros(rows, 4 * hidden);
            for (g, part) in parts.iter().enumerate() {
                assert_eq!(part.shape(), (rows, hidden), "gate block shape mismatch");
                for r in 0..rows {
                    m.row_mut(r)[g * hidden..(g + 1) * hidden].copy_from_slice(part.row(r));
                }
            }
            m
        };
        LstmLayer {
            input,
            hidden,
            output_activation,
            params: vec![stack(&w, input), stack(&u, hidden), stack(&b, 1)],
        }
    }

    /// One step; returns `(h_t, c_t)`.
    pub fn on(&self, tape: &mut Tape, p: &[Var], x: Var, h_prev: Var, c_prev: Var) -> (Var, Var) {
        let hd = self.hidden;
        let a = tape.matmul(x, p[0]);
        let b = tape.matmul(h_prev, p[1]);
        let z = tape.add(a, b);
        let z = tape.add_row(z, p[2]);
        let f = tape.slice_cols(z, 0, hd);
        let f = tape.sigmoid(f);
        let i = tape.slice_cols(z, hd, hd);
        let i = tape.sigmoid(i);
        let o = tape.slice_cols(z, 2 * hd, hd);
        let o = tape.sigmoid(o);
        let cand = tape.slice_cols(z, 3 * hd, hd);
        let cand = tape.tanh(cand);
        let keep = tape.mul(f, c_prev);
        let write = tape.mul(i, cand);
        let c = tape.add(keep, write);
        let squashed = self.output_activation.on(tape, c);
        let h = tape.mul(o, squashed);
        (h, c)
    }
}

/// Mirrors each undirected edge feature row into both directions (`2E x f`).
pub fn directed_edge_features(edge_feats: &Mat) -> Mat {
    let mut out = Mat::zeros(2 * edge_feats.rows, edge_feats.cols);
    for k in 0..edge_feats.rows {
        out.row_mut(2 * k).copy_from_slice(edge_feats.row(k));
        out.row_mut(2 * k + 1).copy_from_slice(edge_feats.row(k));
    }
    out
}

/// Evaluates one ECC layer on a single graph. `edge_feats` is `E x 2`, one
/// row per undirected edge in `edges` order.
pub fn ecc_forward(layer: &EccLayer, node_feats: &Mat, edge_feats: &Mat, edges: &[(usize, usize)]) -> Mat {
    assert_eq!(node_feats.cols, layer.in_dim, "node feature width mismatch");
    assert_eq!(edge_feats.shape(), (edges.len(), EccLayer::EDGE_FEATURES), "edge feature shape mismatch");
    let g = GraphIndex::new(node_feats.rows, edges, 1);
    let mut tape = Tape::new();
    let p = bind(&mut tape, &layer.params);
    let x = tape.leaf(node_feats.clone());
    let e = tape.leaf(directed_edge_features(edge_feats));
    let out = layer.on(&mut tape, &p, x, e, &g);
    tape.value(out).clone()
}

/// Evaluates one XENET layer on a single graph. `edge_feats` has one row per
/// directed edge (`2E` rows, see [`GraphIndex`]). Returns node and
/// directed-edge outputs.
pub fn xenet_forward(layer: &XenetLayer, node_feats: &Mat, edge_feats: &Mat, edges: &[(usize, usize)]) -> (Mat, Mat) {
    assert_eq!(node_feats.cols, layer.node_in, "node feature width mismatch");
    assert_eq!(edge_feats.shape(), (2 * edges.len(), layer.edge_in), "edge feature shape mismatch");
    let g = GraphIndex::new(node_feats.rows, edges, 1);
    let mut tape = Tape::new();
    let p = bind(&mut tape, &layer.params);
    let x = tape.leaf(node_feats.clone());
    let e = tape.leaf(edge_feats.clone());
    let (xn, en) = layer.on(&mut tape, &p, x, e, &g);
    (tape.value(xn).clone(), tape.value(en).clone())
}

/// One LSTM step on a batch of rows. Returns `(h_t, c_t)`.
pub fn lstm_step(layer: &LstmLayer, x: &Mat, h_prev: &Mat, c_prev: &Mat) -> (Mat, Mat) {
    assert_eq!(x.cols, layer.input, "input width mismatch");
    assert_eq!(h_prev.shape(), (x.rows, layer.hidden), "hidden state shape mismatch");
    assert_eq!(c_prev.shape(), (x.rows, layer.hidden), "cell state shape mismatch");
    let mut tape = Tape::new();
    let p = bind(&mut tape, &layer.params);
    let xv = tape.leaf(x.clone());
    let hv = tape.leaf(h_prev.clone());
    let cv = tape.leaf(c_prev.clone());
    let (h, c) = layer.on(&mut tape, &p, xv, hv, cv);
    (tape.value(h).clone(), tape.value(c).clone())
}

//! Straight-line reference evaluations of the layers, written directly from
//! the layer equations with plain loops and no shared code.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scuc_core::data::GraphSnapshot;
use scuc_core::neural::tape::{Tape, Var};
use scuc_core::neural::Mat;

pub type M = Vec<Vec<f64>>;

pub fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn mm(a: &M, b: &M) -> M {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        assert_eq!(a[i].len(), k);
        for j in 0..m {
            for q in 0..k {
                out[i][j] += a[i][q] * b[q][j];
            }
        }
    }
    out
}

pub fn vm(x: &[f64], b: &M) -> Vec<f64> {
    mm(&vec![x.to_vec()], b).remove(0)
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn rows(m: &Mat) -> M {
    m.to_rows()
}

pub fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Mat {
    Mat::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-scale..scale)).collect())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// ECC reference: `x_i W_root + sum_{j->i} x_j reshape(MLP(e_ji)) + b`,
/// MLP = tanh(e M1 + m1) M2 + m2, then `act`.
pub fn ecc(params: &[Mat], x: &M, ef: &M, edges: &[(usize, usize)], act: fn(f64) -> f64) -> M {
    let [w_root, m1, b1, m2, b2, b] = params else { panic!("six ECC parameters") };
    let (w_root, m1, b1, m2, b2, b) = (rows(w_root), rows(m1), rows(b1), rows(m2), rows(b2), rows(b));
    let din = w_root.len();
    let dout = w_root[0].len();
    let mut out: M = x.iter().map(|xi| add(&vm(xi, &w_root), &b[0])).collect();
    for (k, &(a, c)) in edges.iter().enumerate() {
        let hidden: Vec<f64> = add(&vm(&ef[k], &m1), &b1[0]).iter().map(|v| v.tanh()).collect();
        let flat = add(&vm(&hidden, &m2), &b2[0]);
        let w: M = (0..din).map(|r| flat[r * dout..(r + 1) * dout].to_vec()).collect();
        // undirected line: messages in both directions with the same features
        for (src, dst) in [(a, c), (c, a)] {
            let msg = vm(&x[src], &w);
            out[dst] = add(&out[dst], &msg);
        }
    }
    out.into_iter().map(|r| r.into_iter().map(act).collect()).collect()
}

/// XENET reference. `e` holds directed edge rows `2k` (from -> to) and
/// `2k + 1` (to -> from).
pub fn xenet(params: &[Mat], x: &M, e: &M, edges: &[(usize, usize)]) -> (M, M) {
    let [ws, bs, slope, wn, bn, wc, bc] = params else { panic!("seven XENET parameters") };
    let (ws, bs, slope, wn, bn, wc, bc) = (rows(ws), rows(bs), rows(slope), rows(wn), rows(bn), rows(wc), rows(bc));
    let n = x.len();
    let sdim = ws[0].len();
    let mut s_out = vec![vec![0.0; sdim]; n];
    let mut s_in = vec![vec![0.0; sdim]; n];
    let mut e_new = Vec::new();
    for (k, &(a, c)) in edges.iter().enumerate() {
        for (d, (i, j)) in [(a, c), (c, a)].into_iter().enumerate() {
            let eij = &e[2 * k + d];
            let eji = &e[2 * k + 1 - d];
            let stacked: Vec<f64> = x[i].iter().chain(&x[j]).chain(eij).chain(eji).copied().collect();
            let pre = add(&vm(&stacked, &ws), &bs[0]);
            let s: Vec<f64> = pre
                .iter()
                .zip(&slope[0])
                .map(|(&v, &a)| if v >= 0.0 { v } else { a * v })
                .collect();
            s_out[i] = add(&s_out[i], &s);
            s_in[j] = add(&s_in[j], &s);
            e_new.push(add(&vm(&s, &wc), &bc[0]).into_iter().map(sig).collect());
        }
    }
    let x_new = (0..n)
        .map(|i| {
            let cat: Vec<f64> = x[i].iter().chain(&s_out[i]).chain(&s_in[i]).copied().collect();
            add(&vm(&cat, &wn), &bn[0]).into_iter().map(sig).collect()
        })
        .collect();
    (x_new, e_new)
}

/// LSTM reference with gate blocks `[f, i, o, c]` stacked in the columns.
pub fn lstm(params: &[Mat], x: &[f64], h: &[f64], c: &[f64], out_act: fn(f64) -> f64) -> (Vec<f64>, Vec<f64>) {
    let (w, u, b) = (rows(&params[0]), rows(&params[1]), rows(&params[2]));
    let hd = h.len();
    let z = add(&add(&vm(x, &w), &vm(h, &u)), &b[0]);
    let mut h_new = vec![0.0; hd];
    let mut c_new = vec![0.0; hd];
    for k in 0..hd {
        let f = sig(z[k]);
        let i = sig(z[hd + k]);
        let o = sig(z[2 * hd + k]);
        let cand = z[3 * hd + k].tanh();
        c_new[k] = f * c[k] + i * cand;
        h_new[k] = o * out_act(c_new[k]);
    }
    (h_new, c_new)
}

/// Toy snapshot with random demand and labels.
pub fn toy_graph(seed: u64, n: usize, edges: &[(usize, usize)], horizon: usize, label_rows: usize) -> GraphSnapshot {
    let mut r = rng(seed);
    let mut adjacency = vec![vec![0u8; n]; n];
    for &(a, b) in edges {
        adjacency[a][b] = 1;
        adjacency[b][a] = 1;
    }
    GraphSnapshot {
        sample: seed as usize,
        nf: (0..n).map(|_| (0..horizon).map(|_| r.gen_range(0.0..100.0)).collect()).collect(),
        ef: edges.iter().map(|_| [r.gen_range(1.0..10.0), r.gen_range(20.0..100.0)]).collect(),
        edges: edges.to_vec(),
        adjacency,
        labels: (0..label_rows).map(|_| (0..horizon).map(|_| u8::from(r.gen_bool(0.4))).collect()).collect(),
    }
}

/// Scalar loss reaching every entry of `out` (`rows x cols`): a fixed random
/// projection to one logit per row, then BCE against alternating targets.
pub fn projected_bce(tape: &mut Tape, out: Var, rows: usize, cols: usize, seed: u64) -> Var {
    let proj = random_mat(&mut rng(seed), cols, 1, 1.0);
    let pv = tape.leaf(proj);
    let z = tape.matmul(out, pv);
    let targets = Arc::new((0..rows).map(|i| (i % 2) as f64).collect());
    tape.bce_with_logits(z, targets, Arc::new(vec![1.0; rows]))
}

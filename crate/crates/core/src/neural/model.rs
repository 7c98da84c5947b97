//! Node-classification (GNN + LSTM) and edge-classification (XENET) models.
//!
//! A batch of `B` snapshots with horizon `T` is evaluated as one disjoint
//! union of `B * T` graph copies; copy `b * T + t` carries period `t` of
//! snapshot `b`. Logits come out in the row-major order of the flattened
//! label matrices, snapshot after snapshot.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{directed_edge_features, uniform, Activation, EccLayer, GraphIndex, LstmLayer, XenetLayer};
use super::tape::{Tape, Var};
use super::tensor::Mat;
use super::NeuralError;
use crate::data::{GraphMode, GraphSnapshot};

/// Feature normalisation fitted on the training partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub nf_mean: f64,
    pub nf_std: f64,
    pub ef_scale: [f64; 2],
}

impl Default for Scaling {
    fn default() -> Self {
        Scaling {
            nf_mean: 0.0,
            nf_std: 1.0,
            ef_scale: [1.0, 1.0],
        }
    }
}

impl Scaling {
    /// Global mean/std of node features and per-column max of edge features.
    pub fn fit(graphs: &[&GraphSnapshot]) -> Self {
        let values: Vec<f64> = graphs.iter().flat_map(|g| g.nf.iter().flatten().copied()).collect();
        if values.is_empty() {
            return Scaling::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let mut ef_scale = [0.0f64; 2];
        for g in graphs {
            for e in &g.ef {
                for c in 0..2 {
                    ef_scale[c] = ef_scale[c].max(e[c].abs());
                }
            }
        }
        Scaling {
            nf_mean: mean,
            nf_std: if var > 1e-24 { var.sqrt() } else { 1.0 },
            ef_scale: ef_scale.map(|s| if s > 0.0 { s } else { 1.0 }),
        }
    }
}

/// Shape of the graphs a model was built for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub n_nodes: usize,
    pub horizon: usize,
    pub edges: Vec<(usize, usize)>,
}

impl Topology {
    pub fn of(graph: &GraphSnapshot) -> Self {
        Topology {
            n_nodes: graph.n_nodes(),
            horizon: graph.horizon(),
            edges: graph.edges.clone(),
        }
    }

    fn check(&self, graph: &GraphSnapshot, label_rows: usize) -> Result<(), NeuralError> {
        let shape_ok = graph.n_nodes() == self.n_nodes
            && graph.nf.iter().all(|r| r.len() == self.horizon)
            && graph.edges == self.edges
            && graph.ef.len() == self.edges.len();
        let labels_ok = graph.labels.is_empty()
            || (graph.labels.len() == label_rows && graph.labels.iter().all(|r| r.len() == self.horizon));
        if shape_ok && labels_ok {
            Ok(())
        } else {
            Err(NeuralError::Dimension(format!(
                "graph from sample {} does not match the model ({} nodes, {} edges, T={})",
                graph.sample,
                self.n_nodes,
                self.edges.len(),
                self.horizon
            )))
        }
    }
}

/// Common interface used by training, prediction and gradient checks.
pub trait GraphModel {
    fn mode(&self) -> GraphMode;
    fn params(&self) -> Vec<&Mat>;
    fn params_mut(&mut self) -> Vec<&mut Mat>;
    fn scaling_mut(&mut self) -> &mut Scaling;
    /// Rows of the label matrix (generators for NC, lines for EC).
    fn label_rows(&self) -> usize;
    fn topology(&self) -> &Topology;
    /// Records the forward pass and returns a `(B * rows * T) x 1` logit node.
    fn forward(&self, tape: &mut Tape, params: &[Var], batch: &[&GraphSnapshot]) -> Var;

    fn check(&self, graph: &GraphSnapshot) -> Result<(), NeuralError> {
        self.topology().check(graph, self.label_rows())
    }
}

/// One weight row per label row; each row sees `cols` inputs.
fn head_weights(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    uniform(rng, rows, cols, (3.0 / cols.max(1) as f64).sqrt())
}

fn node_input(tape: &mut Tape, scaling: &Scaling, batch: &[&GraphSnapshot], horizon: usize) -> Var {
    let n = batch[0].n_nodes();
    let mut data = Vec::with_capacity(batch.len() * horizon * n);
    for g in batch {
        for t in 0..horizon {
            for row in &g.nf {
                data.push((row[t] - scaling.nf_mean) / scaling.nf_std);
            }
        }
    }
    tape.leaf(Mat::from_vec(data.len(), 1, data))
}

fn base_edge_input(tape: &mut Tape, scaling: &Scaling, graph: &GraphSnapshot) -> Var {
    let rows: Vec<Vec<f64>> = graph
        .ef
        .iter()
        .map(|e| vec![e[0] / scaling.ef_scale[0], e[1] / scaling.ef_scale[1]])
        .collect();
    let ef = if rows.is_empty() {
        Mat::zeros(0, 2)
    } else {
        Mat::from_rows(&rows)
    };
    tape.leaf(directed_edge_features(&ef))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GnnKind {
    Ecc,
    Xenet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum GnnLayer {
    Ecc(EccLayer),
    Xenet(XenetLayer),
}

impl GnnLayer {
    fn params(&self) -> &[Mat] {
        match self {
            GnnLayer::Ecc(l) => &l.params,
            GnnLayer::Xenet(l) => &l.params,
        }
    }

    fn params_mut(&mut self) -> &mut [Mat] {
        match self {
            GnnLayer::Ecc(l) => &mut l.params,
            GnnLayer::Xenet(l) => &mut l.params,
        }
    }
}

/// Runs a GNN stack over `g`, returning node and (for XENET) edge outputs.
fn run_gnn(
    tape: &mut Tape,
    layers: &[GnnLayer],
    params: &[Var],
    x: Var,
    base_edges: Var,
    g: &GraphIndex,
) -> (Var, Option<Var>) {
    let mut x = x;
    let mut e: Option<Var> = None;
    let mut off = 0;
    for layer in layers {
        let n = layer.params().len();
        let p = &params[off..off + n];
        off += n;
        match layer {
            GnnLayer::Ecc(l) => x = l.on(tape, p, x, base_edges, g),
            GnnLayer::Xenet(l) => {
                let ein = match e {
                    Some(e) => e,
                    None => tape.gather(base_edges, g.base.clone()),
                };
                let (xn, en) = l.on(tape, p, x, ein, g);
                x = xn;
                e = Some(en);
            }
        }
    }
    (x, e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NcConfig {
    pub gnn: GnnKind,
    pub depth: usize,
    pub width: usize,
    pub lstm_hidden: usize,
    pub ecc_mlp_hidden: usize,
    pub lstm_output_activation: Activation,
    pub seed: u64,
}

impl Default for NcConfig {
    fn default() -> Self {
        NcConfig {
            gnn: GnnKind::Ecc,
            depth: 3,
            width: 32,
            lstm_hidden: 32,
            ecc_mlp_hidden: 16,
            lstm_output_activation: Activation::Tanh,
            seed: 0,
        }
    }
}

/// Spatio-temporal node classifier: GNN per period, LSTM per bus across
/// periods, and one logistic head per generator reading its bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcModel {
    pub config: NcConfig,
    pub scaling: Scaling,
    pub topology: Topology,
    pub generator_bus: Vec<usize>,
    pub gnn: Vec<GnnLayer>,
    pub lstm: LstmLayer,
    /// `[W (G x h), b (G x 1)]`
    pub head: Vec<Mat>,
}

impl NcModel {
    pub fn new(config: NcConfig, topology: Topology, generator_bus: Vec<usize>) -> Result<Self, NeuralError> {
        if config.depth < 1 || config.width == 0 || config.lstm_hidden == 0 {
            return Err(NeuralError::Config("depth, width and lstm_hidden must be positive".into()));
        }
        if let Some(&b) = generator_bus.iter().find(|&&b| b >= topology.n_nodes) {
            return Err(NeuralError::Dimension(format!("generator bus {b} outside the graph")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let w = config.width;
        let gnn = (0..config.depth)
            .map(|i| {
                let input = if i == 0 { 1 } else { w };
                match config.gnn {
                    GnnKind::Ecc => GnnLayer::Ecc(EccLayer::new(&mut rng, input, w, config.ecc_mlp_hidden, Activation::Tanh)),
                    GnnKind::Xenet => {
                        let edge_in = if i == 0 { EccLayer::EDGE_FEATURES } else { w };
                        GnnLayer::Xenet(XenetLayer::new(&mut rng, input, edge_in, w, w, w))
                    }
                }
            })
            .collect();
        let lstm = LstmLayer::new(&mut rng, w, config.lstm_hidden, config.lstm_output_activation);
        let g = generator_bus.len();
        Ok(NcModel {
            head: vec![head_weights(&mut rng, g, config.lstm_hidden), Mat::zeros(g, 1)],
            config,
            scaling: Scaling::default(),
            topology,
            generator_bus,
            gnn,
            lstm,
        })
    }
}

impl GraphModel for NcModel {
    fn mode(&self) -> GraphMode {
        GraphMode::Nc
    }

    fn params(&self) -> Vec<&Mat> {
        let mut out: Vec<&Mat> = self.gnn.iter().flat_map(|l| l.params().iter()).collect();
        out.extend(&self.lstm.params);
        out.extend(&self.head);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Mat> {
        let mut out: Vec<&mut Mat> = self.gnn.iter_mut().flat_map(|l| l.params_mut().iter_mut()).collect();
        out.extend(&mut self.lstm.params);
        out.extend(&mut self.head);
        out
    }

    fn scaling_mut(&mut self) -> &mut Scaling {
        &mut self.scaling
    }

    fn label_rows(&self) -> usize {
        self.generator_bus.len()
    }

    fn topology(&self) -> &Topology {
        &self.topology
    }

    fn forward(&self, tape: &mut Tape, params: &[Var], batch: &[&GraphSnapshot]) -> Var {
        let (n, t_len, b_len) = (self.topology.n_nodes, self.topology.horizon, batch.len());
        let g = GraphIndex::new(n, &self.topology.edges, b_len * t_len);
        let x = node_input(tape, &self.scaling, batch, t_len);
        let ef = base_edge_input(tape, &self.scaling, batch[0]);
        let n_gnn: usize = self.gnn.iter().map(|l| l.params().len()).sum();
        let (emb, _) = run_gnn(tape, &self.gnn, &params[..n_gnn], x, ef, &g);

        let lp = &params[n_gnn..n_gnn + 3];
        let hd = self.lstm.hidden;
        let mut h = tape.leaf(Mat::zeros(b_len * n, hd));
        let mut c = tape.leaf(Mat::zeros(b_len * n, hd));
        let mut hs = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let idx: Vec<usize> = (0..b_len)
                .flat_map(|b| (0..n).map(move |i| (b * t_len + t) * n + i))
                .collect();
            let xt = tape.gather(emb, Arc::new(idx));
            (h, c) = self.lstm.on(tape, lp, xt, h, c);
            hs.push(h);
        }
        let hs = tape.concat_rows(&hs);

        let (hw, hb) = (params[n_gnn + 3], params[n_gnn + 4]);
        let mut rows = Vec::new();
        let mut gens = Vec::new();
        for b in 0..b_len {
            for (gi, &bus) in self.generator_bus.iter().enumerate() {
                for t in 0..t_len {
                    rows.push(t * b_len * n + b * n + bus);
                    gens.push(gi);
                }
            }
        }
        let gens = Arc::new(gens);
        let feat = tape.gather(hs, Arc::new(rows));
        let w = tape.gather(hw, gens.clone());
        let prod = tape.mul(feat, w);
        let logit = tape.row_sum(prod);
        let bias = tape.gather(hb, gens);
        tape.add(logit, bias)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EcConfig {
    pub depth: usize,
    pub width: usize,
    pub seed: u64,
}

impl Default for EcConfig {
    fn default() -> Self {
        EcConfig {
            depth: 2,
            width: 32,
            seed: 0,
        }
    }
}

/// Spatial edge classifier: XENET stack per period and one logistic head per
/// line reading both directed embeddings of that line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcModel {
    pub config: EcConfig,
    pub scaling: Scaling,
    pub topology: Topology,
    pub gnn: Vec<GnnLayer>,
    /// `[W (E x 2w), b (E x 1)]`
    pub head: Vec<Mat>,
}

impl EcModel {
    pub fn new(config: EcConfig, topology: Topology) -> Result<Self, NeuralError> {
        if config.depth < 1 || config.width == 0 {
            return Err(NeuralError::Config("depth and width must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let w = config.width;
        let gnn = (0..config.depth)
            .map(|i| {
                let (node_in, edge_in) = if i == 0 { (1, EccLayer::EDGE_FEATURES) } else { (w, w) };
                GnnLayer::Xenet(XenetLayer::new(&mut rng, node_in, edge_in, w, w, w))
            })
            .collect();
        let e = topology.edges.len();
        Ok(EcModel {
            head: vec![head_weights(&mut rng, e, 2 * w), Mat::zeros(e, 1)],
            config,
            scaling: Scaling::default(),
            topology,
            gnn,
        })
    }
}

impl GraphModel for EcModel {
    fn mode(&self) -> GraphMode {
        GraphMode::Ec
    }

    fn params(&self) -> Vec<&Mat> {
        let mut out: Vec<&Mat> = self.gnn.iter().flat_map(|l| l.params().iter()).collect();
        out.extend(&self.head);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Mat> {
        let mut out: Vec<&mut Mat> = self.gnn.iter_mut().flat_map(|l| l.params_mut().iter_mut()).collect();
        out.extend(&mut self.head);
        out
    }

    fn scaling_mut(&mut self) -> &mut Scaling {
        &mut self.scaling
    }

    fn label_rows(&self) -> usize {
        self.topology.edges.len()
    }

    fn topology(&self) -> &Topology {
        &self.topology
    }

    fn forward(&self, tape: &mut Tape, params: &[Var], batch: &[&GraphSnapshot]) -> Var {
        let (n, t_len, b_len) = (self.topology.n_nodes, self.topology.horizon, batch.len());
        let e_len = self.topology.edges.len();
        let g = GraphIndex::new(n, &self.topology.edges, b_len * t_len);
        let x = node_input(tape, &self.scaling, batch, t_len);
        let ef = base_edge_input(tape, &self.scaling, batch[0]);
        let n_gnn: usize = self.gnn.iter().map(|l| l.params().len()).sum();
        let (_, e) = run_gnn(tape, &self.gnn, &params[..n_gnn], x, ef, &g);
        let e = e.expect("edge classifier has at least one XENET layer");

        let mut fwd = Vec::new();
        let mut lines = Vec::new();
        for b in 0..b_len {
            for k in 0..e_len {
                for t in 0..t_len {
                    fwd.push((b * t_len + t) * 2 * e_len + 2 * k);
                    lines.push(k);
                }
            }
        }
        let rev: Vec<usize> = fwd.iter().map(|i| i + 1).collect();
        let lines = Arc::new(lines);
        let f = tape.gather(e, Arc::new(fwd));
        let r = tape.gather(e, Arc::new(rev));
        let feat = tape.concat_cols(&[f, r]);
        let w = tape.gather(params[n_gnn], lines.clone());
        let prod = tape.mul(feat, w);
        let logit = tape.row_sum(prod);
        let bias = tape.gather(params[n_gnn + 1], lines);
        tape.add(logit, bias)
    }
}

mod common;

use common::nn::{self, random_mat, rng, toy_graph};
use proptest::prelude::*;
use scuc_core::data::{DatasetSplit, GraphMode, GraphSet};
use scuc_core::neural::{
    ecc_forward, gradient_check, gradient_check_params, lstm_step, predict, train, xenet_forward, Activation,
    EcConfig, EcModel, EccLayer, GnnKind, GraphIndex, GraphModel, LstmLayer, Mat, NcConfig, NcModel, Topology,
    TrainConfig, XenetLayer,
};

const EPS: f64 = 1e-5;

fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            assert_eq!(x.len(), y.len());
            x.iter().zip(y).map(|(p, q)| (p - q).abs())
        })
        .fold(0.0, f64::max)
}

fn randomise(params: &mut [Mat], seed: u64, scale: f64) {
    let mut r = rng(seed);
    for p in params {
        *p = random_mat(&mut r, p.rows, p.cols, scale);
    }
}

#[test]
fn lstm_scalar_case() {
    let one = || Mat::filled(1, 1, 1.0);
    let zero = || Mat::zeros(1, 1);
    let layer = LstmLayer::from_gates([one(), one(), one(), one()], [zero(), zero(), zero(), zero()], [zero(), zero(), zero(), zero()], Activation::Tanh);
    let (h, c) = lstm_step(&layer, &one(), &zero(), &zero());
    let s = 1.0 / (1.0 + (-1.0f64).exp());
    let c_ref = s * 1.0f64.tanh();
    let h_ref = s * c_ref.tanh();
    assert!((c.get(0, 0) - c_ref).abs() < 1e-12);
    assert!((h.get(0, 0) - h_ref).abs() < 1e-12);
    assert!((c.get(0, 0) - 0.5568).abs() < 5e-5);
    assert!((h.get(0, 0) - 0.369606).abs() < 1e-6);
}

#[test]
fn lstm_matches_reference_on_random_batches() {
    for seed in 0..5 {
        let mut r = rng(seed);
        let mut layer = LstmLayer::new(&mut r, 3, 4, Activation::Tanh);
        randomise(&mut layer.params, seed + 100, 1.0);
        let x = random_mat(&mut r, 5, 3, 2.0);
        let h = random_mat(&mut r, 5, 4, 1.0);
        let c = random_mat(&mut r, 5, 4, 1.0);
        let (hn, cn) = lstm_step(&layer, &x, &h, &c);
        for row in 0..5 {
            let (hr, cr) = nn::lstm(&layer.params, x.row(row), h.row(row), c.row(row), f64::tanh);
            assert!(max_diff(&[hn.row(row).to_vec()], &[hr]) < 1e-9);
            assert!(max_diff(&[cn.row(row).to_vec()], &[cr]) < 1e-9);
        }
    }
}

#[test]
fn lstm_printed_output_activation_variant() {
    let mut r = rng(4);
    let mut layer = LstmLayer::new(&mut r, 2, 3, Activation::Sigmoid);
    randomise(&mut layer.params, 5, 1.0);
    let x = random_mat(&mut r, 1, 2, 1.0);
    let (h, _) = lstm_step(&layer, &x, &Mat::zeros(1, 3), &Mat::zeros(1, 3));
    let (hr, _) = nn::lstm(&layer.params, x.row(0), &[0.0; 3], &[0.0; 3], nn::sig);
    assert!(max_diff(&[h.row(0).to_vec()], &[hr]) < 1e-9);
}

#[test]
fn ecc_matches_reference_on_random_graphs() {
    let edges = [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)];
    for seed in 0..5 {
        let mut r = rng(seed);
        let mut layer = EccLayer::new(&mut r, 3, 2, 4, Activation::Tanh);
        randomise(&mut layer.params, seed + 7, 1.0);
        let x = random_mat(&mut r, 4, 3, 1.0);
        let ef = random_mat(&mut r, edges.len(), 2, 1.0);
        let out = ecc_forward(&layer, &x, &ef, &edges);
        let reference = nn::ecc(&layer.params, &x.to_rows(), &ef.to_rows(), &edges, f64::tanh);
        assert!(max_diff(&out.to_rows(), &reference) < 1e-9, "seed {seed}");
    }
}

#[test]
fn xenet_matches_reference_on_random_graphs() {
    let edges = [(0, 1), (1, 2), (0, 2)];
    for seed in 0..5 {
        let mut r = rng(seed);
        let mut layer = XenetLayer::new(&mut r, 2, 3, 4, 3, 2);
        randomise(&mut layer.params, seed + 11, 1.0);
        let x = random_mat(&mut r, 3, 2, 1.0);
        let e = random_mat(&mut r, 2 * edges.len(), 3, 1.0);
        let (xn, en) = xenet_forward(&layer, &x, &e, &edges);
        let (xr, er) = nn::xenet(&layer.params, &x.to_rows(), &e.to_rows(), &edges);
        assert!(max_diff(&xn.to_rows(), &xr) < 1e-9, "seed {seed}");
        assert!(max_diff(&en.to_rows(), &er) < 1e-9, "seed {seed}");
    }
}

#[test]
fn xenet_isolated_node_sees_only_itself() {
    let mut r = rng(3);
    let mut layer = XenetLayer::new(&mut r, 2, 2, 3, 2, 2);
    randomise(&mut layer.params, 9, 1.0);
    let x = random_mat(&mut r, 3, 2, 1.0);
    let e = random_mat(&mut r, 2, 2, 1.0);
    let (xn, _) = xenet_forward(&layer, &x, &e, &[(0, 1)]);
    let wn = layer.params[3].to_rows();
    let bn = layer.params[4].row(0);
    for c in 0..2 {
        let z = x.get(2, 0) * wn[0][c] + x.get(2, 1) * wn[1][c] + bn[c];
        assert!((xn.get(2, c) - nn::sig(z)).abs() < 1e-12);
    }
}

#[test]
fn layers_act_independently_on_disconnected_parts() {
    let left = [(0, 1), (1, 2)];
    let right = [(0, 1)];
    let joint = [(0, 1), (1, 2), (3, 4)];
    let mut r = rng(21);
    let mut ecc = EccLayer::new(&mut r, 2, 3, 4, Activation::Tanh);
    randomise(&mut ecc.params, 22, 1.0);
    let x = random_mat(&mut r, 5, 2, 1.0);
    let ef = random_mat(&mut r, 3, 2, 1.0);
    let whole = ecc_forward(&ecc, &x, &ef, &joint).to_rows();
    let xl = Mat::from_rows(&x.to_rows()[..3]);
    let xr = Mat::from_rows(&x.to_rows()[3..]);
    let a = ecc_forward(&ecc, &xl, &Mat::from_rows(&ef.to_rows()[..2]), &left).to_rows();
    let b = ecc_forward(&ecc, &xr, &Mat::from_rows(&ef.to_rows()[2..]), &right).to_rows();
    assert!(max_diff(&whole, &[a, b].concat()) < 1e-12);

    let mut xen = XenetLayer::new(&mut r, 2, 2, 3, 3, 2);
    randomise(&mut xen.params, 23, 1.0);
    let e = random_mat(&mut r, 6, 2, 1.0);
    let (wx, we) = xenet_forward(&xen, &x, &e, &joint);
    let (ax, ae) = xenet_forward(&xen, &xl, &Mat::from_rows(&e.to_rows()[..4]), &left);
    let (bx, be) = xenet_forward(&xen, &xr, &Mat::from_rows(&e.to_rows()[4..]), &right);
    assert!(max_diff(&wx.to_rows(), &[ax.to_rows(), bx.to_rows()].concat()) < 1e-12);
    assert!(max_diff(&we.to_rows(), &[ae.to_rows(), be.to_rows()].concat()) < 1e-12);
}

#[test]
fn linear_map_gradient_is_exact() {
    let mut r = rng(1);
    let x = random_mat(&mut r, 4, 3, 1.0);
    let mut params = vec![random_mat(&mut r, 3, 2, 1.0), random_mat(&mut r, 1, 2, 1.0)];
    let err = gradient_check_params(
        &mut params,
        |tape, p| {
            let xv = tape.leaf(x.clone());
            let y = tape.matmul(xv, p[0]);
            let y = tape.add_row(y, p[1]);
            nn::projected_bce(tape, y, 4, 2, 2)
        },
        EPS,
    );
    assert!(err < 1e-7, "{err}");
}

#[test]
fn ecc_gradients() {
    let edges = [(0, 1), (1, 2), (2, 3), (0, 2)];
    let g = GraphIndex::new(4, &edges, 1);
    let mut r = rng(2);
    let layer = EccLayer::new(&mut r, 3, 2, 4, Activation::Tanh);
    let x = random_mat(&mut r, 4, 3, 1.0);
    let ef = scuc_core::neural::layers::directed_edge_features(&random_mat(&mut r, 4, 2, 1.0));
    let mut params = layer.params.clone();
    let err = gradient_check_params(
        &mut params,
        |tape, p| {
            let xv = tape.leaf(x.clone());
            let ev = tape.leaf(ef.clone());
            let out = layer.on(tape, p, xv, ev, &g);
            nn::projected_bce(tape, out, 4, 2, 3)
        },
        EPS,
    );
    assert!(err < 1e-4, "{err}");
}

#[test]
fn xenet_gradients() {
    let edges = [(0, 1), (1, 2), (0, 2)];
    let g = GraphIndex::new(3, &edges, 1);
    let mut r = rng(5);
    let layer = XenetLayer::new(&mut r, 2, 2, 3, 3, 2);
    let x = random_mat(&mut r, 3, 2, 1.0);
    let e = random_mat(&mut r, 6, 2, 1.0);
    let mut params = layer.params.clone();
    let err = gradient_check_params(
        &mut params,
        |tape, p| {
            let xv = tape.leaf(x.clone());
            let ev = tape.leaf(e.clone());
            let (xn, en) = layer.on(tape, p, xv, ev, &g);
            let a = nn::projected_bce(tape, xn, 3, 3, 6);
            let b = nn::projected_bce(tape, en, 6, 2, 7);
            tape.add(a, b)
        },
        EPS,
    );
    assert!(err < 1e-4, "{err}");
}

#[test]
fn lstm_gradients_through_three_steps() {
    let mut r = rng(8);
    let layer = LstmLayer::new(&mut r, 2, 3, Activation::Tanh);
    let xs: Vec<Mat> = (0..3).map(|_| random_mat(&mut r, 2, 2, 1.0)).collect();
    let mut params = layer.params.clone();
    let err = gradient_check_params(
        &mut params,
        |tape, p| {
            let mut h = tape.leaf(Mat::zeros(2, 3));
            let mut c = tape.leaf(Mat::zeros(2, 3));
            for x in &xs {
                let xv = tape.leaf(x.clone());
                (h, c) = layer.on(tape, p, xv, h, c);
            }
            nn::projected_bce(tape, h, 2, 3, 9)
        },
        EPS,
    );
    assert!(err < 1e-4, "{err}");
}

const TOY_EDGES: [(usize, usize); 4] = [(0, 1), (1, 2), (2, 3), (3, 0)];

fn nc_model(kind: GnnKind, seed: u64) -> (NcModel, Vec<scuc_core::data::GraphSnapshot>) {
    let graphs: Vec<_> = (0..3).map(|s| toy_graph(seed + s, 4, &TOY_EDGES, 3, 2)).collect();
    let config = NcConfig {
        gnn: kind,
        depth: 2,
        width: 3,
        lstm_hidden: 3,
        ecc_mlp_hidden: 3,
        seed,
        ..NcConfig::default()
    };
    let model = NcModel::new(config, Topology::of(&graphs[0]), vec![0, 2]).unwrap();
    (model, graphs)
}

#[test]
fn full_model_gradients() {
    for kind in [GnnKind::Ecc, GnnKind::Xenet] {
        let (mut model, graphs) = nc_model(kind, 1);
        let refs: Vec<_> = graphs.iter().collect();
        *model.scaling_mut() = scuc_core::neural::Scaling::fit(&refs);
        let err = gradient_check(&model, &refs, EPS);
        assert!(err < 1e-4, "NC {kind:?}: {err}");
    }
    let edges = [(0, 1), (1, 2), (0, 2)];
    let graphs: Vec<_> = (0..3).map(|s| toy_graph(s, 3, &edges, 2, 3)).collect();
    let refs: Vec<_> = graphs.iter().collect();
    let mut model = EcModel::new(EcConfig { depth: 2, width: 3, seed: 4 }, Topology::of(&graphs[0])).unwrap();
    *model.scaling_mut() = scuc_core::neural::Scaling::fit(&refs);
    let err = gradient_check(&model, &refs, EPS);
    assert!(err < 1e-4, "EC: {err}");
}

fn permute_graph(g: &scuc_core::data::GraphSnapshot, perm: &[usize]) -> scuc_core::data::GraphSnapshot {
    // node i moves to perm[i]
    let n = perm.len();
    let mut out = g.clone();
    for i in 0..n {
        out.nf[perm[i]] = g.nf[i].clone();
        for j in 0..n {
            out.adjacency[perm[i]][perm[j]] = g.adjacency[i][j];
        }
    }
    out.edges = g.edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
    out
}

#[test]
fn node_relabelling_leaves_generator_probabilities_unchanged() {
    let perm = [2, 0, 3, 1];
    for kind in [GnnKind::Ecc, GnnKind::Xenet] {
        let (model, graphs) = nc_model(kind, 6);
        let g = &graphs[0];
        let pg = permute_graph(g, &perm);
        let mut moved = model.clone();
        moved.topology = Topology::of(&pg);
        moved.generator_bus = model.generator_bus.iter().map(|&b| perm[b]).collect();
        let a = predict(&model, g).unwrap();
        let b = predict(&moved, &pg).unwrap();
        assert!(max_diff(&a, &b) < 1e-12, "{kind:?}");
    }
}

#[test]
fn prediction_shape_determinism_and_range() {
    let (mut model, graphs) = nc_model(GnnKind::Ecc, 2);
    let a = predict(&model, &graphs[0]).unwrap();
    assert_eq!((a.len(), a[0].len()), (2, 3));
    assert!(a.iter().flatten().all(|&p| p > 0.0 && p < 1.0));
    assert_eq!(a, predict(&model, &graphs[0]).unwrap());
    // a zeroed head gives exactly one half everywhere
    let n = model.params().len();
    for p in model.params_mut().into_iter().skip(n - 2) {
        *p = Mat::zeros(p.rows, p.cols);
    }
    assert!(predict(&model, &graphs[1]).unwrap().iter().flatten().all(|&p| p == 0.5));

    let wrong = toy_graph(0, 5, &[(0, 1)], 3, 2);
    assert!(predict(&model, &wrong).is_err());
}

fn set_of(graphs: Vec<scuc_core::data::GraphSnapshot>, mode: GraphMode) -> GraphSet {
    GraphSet {
        mode,
        generator_bus: vec![0, 2],
        graphs,
    }
}

#[test]
fn training_is_reproducible_and_keeps_best_snapshot() {
    let graphs: Vec<_> = (0..12).map(|s| toy_graph(s, 4, &TOY_EDGES, 3, 2)).collect();
    let set = set_of(graphs, GraphMode::Nc);
    let split = DatasetSplit {
        train: (0..8).collect(),
        val: vec![8, 9],
        test: vec![10, 11],
    };
    let cfg = TrainConfig {
        epochs: 6,
        batch_size: 3,
        lr: 0.01,
        seed: 5,
        pos_weight: 1.0,
    };
    let run = || {
        let (mut m, _) = nc_model(GnnKind::Ecc, 1);
        let report = train(&mut m, &set, &split, &cfg).unwrap();
        (m, report)
    };
    let (m1, r1) = run();
    let (m2, r2) = run();
    assert_eq!(r1, r2);
    assert_eq!(m1, m2);
    assert_eq!(r1.history.len(), 7);
    assert!(r1.best_val_loss <= r1.history[0].val_loss);
    assert_eq!(r1.history[r1.best_epoch].val_loss, r1.best_val_loss);
}

#[test]
fn repeated_graph_is_memorised() {
    let g = toy_graph(3, 4, &TOY_EDGES, 3, 2);
    let set = set_of(vec![g; 4], GraphMode::Nc);
    let split = DatasetSplit {
        train: vec![0, 1],
        val: vec![2],
        test: vec![3],
    };
    let cfg = TrainConfig {
        epochs: 300,
        batch_size: 2,
        lr: 0.01,
        seed: 0,
        pos_weight: 1.0,
    };
    let (mut m, _) = nc_model(GnnKind::Xenet, 2);
    let report = train(&mut m, &set, &split, &cfg).unwrap();
    assert_eq!(report.history.last().unwrap().train_accuracy, 1.0);
}

#[test]
fn untrained_all_zero_labels_give_ln2() {
    let mut graphs: Vec<_> = (0..3).map(|s| toy_graph(s, 4, &TOY_EDGES, 3, 2)).collect();
    for g in &mut graphs {
        for row in &mut g.labels {
            row.iter_mut().for_each(|v| *v = 0);
        }
    }
    let (mut model, _) = nc_model(GnnKind::Ecc, 0);
    let n = model.params().len();
    for p in model.params_mut().into_iter().skip(n - 2) {
        *p = Mat::zeros(p.rows, p.cols);
    }
    let refs: Vec<_> = graphs.iter().collect();
    let (loss, _) = scuc_core::neural::evaluate(&model, &refs, 64, 1.0);
    assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn mode_and_split_errors() {
    let graphs: Vec<_> = (0..4).map(|s| toy_graph(s, 4, &TOY_EDGES, 3, 2)).collect();
    let (mut m, _) = nc_model(GnnKind::Ecc, 0);
    let split = DatasetSplit {
        train: vec![0],
        val: vec![],
        test: vec![1],
    };
    assert!(train(&mut m, &set_of(graphs.clone(), GraphMode::Nc), &split, &TrainConfig::default()).is_err());
    let split = DatasetSplit {
        train: vec![0, 1],
        val: vec![2],
        test: vec![3],
    };
    assert!(train(&mut m, &set_of(graphs, GraphMode::Ec), &split, &TrainConfig::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lstm_hidden_state_is_bounded(
        w in proptest::collection::vec(-4.0f64..4.0, 40),
        x in proptest::collection::vec(-2.0f64..2.0, 2),
        h in proptest::collection::vec(-0.999f64..0.999, 2),
        c in proptest::collection::vec(-10.0f64..10.0, 2),
    ) {
        let layer = LstmLayer {
            input: 2,
            hidden: 2,
            output_activation: Activation::Tanh,
            params: vec![
                Mat::from_vec(2, 8, w[..16].to_vec()),
                Mat::from_vec(2, 8, w[16..32].to_vec()),
                Mat::from_vec(1, 8, w[32..].to_vec()),
            ],
        };
        let (hn, _) = lstm_step(&layer, &Mat::from_vec(1, 2, x), &Mat::from_vec(1, 2, h), &Mat::from_vec(1, 2, c));
        prop_assert!(hn.data.iter().all(|v| v.abs() < 1.0));
    }
}

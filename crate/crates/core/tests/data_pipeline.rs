mod common;

use scuc_core::data::{build_graphs, generate_samples, split_dataset, DataError, GenerateOptions, GraphMode, Perturbation, SplitRatios};
use scuc_core::power_model::Network;

fn options(perturbation: Perturbation) -> GenerateOptions {
    GenerateOptions {
        perturbation,
        mip_gap: 0.0,
        ..GenerateOptions::default()
    }
}

fn feasible_network() -> Network {
    (0..)
        .map(|seed| common::random_network(seed, 4, 3, 6))
        .find(|net| {
            generate_samples(net, 1, &options(Perturbation::none()), 0).is_ok()
        })
        .unwrap()
}

#[test]
fn graphs_transcribe_samples_faithfully() {
    let net = feasible_network();
    let samples = generate_samples(&net, 8, &options(Perturbation::default()), 3).unwrap();
    assert_eq!(samples.len(), 8);
    for mode in [GraphMode::Nc, GraphMode::Ec] {
        let set = build_graphs(&samples, &net, mode).unwrap();
        assert_eq!(set.graphs.len(), samples.len());
        for (g, s) in set.graphs.iter().zip(&samples.samples) {
            assert_eq!((g.nf.len(), g.nf[0].len()), (net.n_buses(), 6));
            assert_eq!(g.ef.len(), net.n_lines());
            for t in 0..6 {
                let a: f64 = g.nf.iter().map(|r| r[t]).sum();
                let b: f64 = s.demand.iter().map(|r| r[t]).sum();
                assert_eq!(a, b);
            }
            let n = net.n_buses();
            for i in 0..n {
                assert_eq!(g.adjacency[i][i], 0);
                let degree = net.lines.iter().filter(|l| l.from_bus == i || l.to_bus == i).count();
                assert_eq!(g.adjacency[i].iter().map(|&v| v as usize).sum::<usize>(), degree);
                for j in 0..n {
                    assert_eq!(g.adjacency[i][j], g.adjacency[j][i]);
                }
            }
            let rows = match mode {
                GraphMode::Nc => net.n_generators(),
                GraphMode::Ec => net.n_lines(),
            };
            assert_eq!(g.labels.len(), rows);
            assert!(g.labels.iter().flatten().all(|&v| v <= 1));
        }
    }
}

#[test]
fn edge_labels_ignore_line_orientation() {
    let net = feasible_network();
    let samples = generate_samples(&net, 4, &options(Perturbation::default()), 1).unwrap();
    let mut flipped_net = net.clone();
    let mut flipped = samples.clone();
    for (k, line) in flipped_net.lines.iter_mut().enumerate() {
        if k % 2 == 0 {
            std::mem::swap(&mut line.from_bus, &mut line.to_bus);
            for s in &mut flipped.samples {
                s.flows[k].iter_mut().for_each(|f| *f = -*f);
            }
        }
    }
    let a = build_graphs(&samples, &net, GraphMode::Ec).unwrap();
    let b = build_graphs(&flipped, &flipped_net, GraphMode::Ec).unwrap();
    for (x, y) in a.graphs.iter().zip(&b.graphs) {
        assert_eq!(x.labels, y.labels);
        assert_eq!(x.adjacency, y.adjacency);
    }
}

#[test]
fn zero_amplitude_repeats_the_base_solution() {
    let net = feasible_network();
    let samples = generate_samples(&net, 3, &options(Perturbation::none()), 5).unwrap();
    for s in &samples.samples {
        assert_eq!(s.demand, net.base_demand);
        assert_eq!(s.commitment, samples.samples[0].commitment);
        assert_eq!(s.objective, samples.samples[0].objective);
    }
}

#[test]
fn overloaded_system_trips_the_retry_cap() {
    let mut net = feasible_network();
    let cap = net.total_capacity();
    net.base_demand[0].iter_mut().for_each(|d| *d += 2.0 * cap);
    match generate_samples(&net, 2, &options(Perturbation::default()), 0) {
        Err(DataError::RetryCap { feasible, draws }) => assert_eq!((feasible, draws), (0, 20)),
        other => panic!("expected retry cap, got {other:?}"),
    }
    assert!(matches!(generate_samples(&net, 0, &options(Perturbation::none()), 0), Err(DataError::NoSamples)));
}

#[test]
fn sample_set_does_not_depend_on_thread_count() {
    let net = feasible_network();
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let mut set = pool.install(|| generate_samples(&net, 6, &options(Perturbation::default()), 11)).unwrap();
        set.samples.iter_mut().for_each(|s| s.solve_time = 0.0);
        set
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn split_sizes_and_determinism() {
    let r = SplitRatios::default();
    let sizes = |n| split_dataset(n, r, 0).unwrap().sizes();
    assert_eq!(sizes(1800), (1260, 270, 270));
    assert_eq!(sizes(200), (140, 30, 30));
    assert_eq!(sizes(10), (7, 1, 2));
    assert_eq!(split_dataset(50, r, 4).unwrap(), split_dataset(50, r, 4).unwrap());
    let s = split_dataset(50, r, 4).unwrap();
    let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..50).collect::<Vec<_>>());
    assert!(split_dataset(2, r, 0).is_err());
}

mod common;

use gossip_sa::gossip::{
    contraction_coefficient, expected_matrix, validate_scheme, GossipScheme, NetworkGraph, STOCHASTIC_TOL,
};
use gossip_sa::linalg;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn centering(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64)
}

fn pairwise_dense(n: usize, i: usize, j: usize) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(n, 1);
    e[(i, 0)] = 1.0;
    e[(j, 0)] = -1.0;
    DMatrix::identity(n, n) - &e * e.transpose() * 0.5
}

/// `E(Wᵀ K W)` for uniform pairwise gossip, from dense matrices.
fn pairwise_gram_oracle(graph: &NetworkGraph) -> DMatrix<f64> {
    let n = graph.node_count();
    let k = centering(n);
    let m = graph.edges().len() as f64;
    graph.edges().iter().fold(DMatrix::zeros(n, n), |acc, &(i, j)| {
        let w = pairwise_dense(n, i, j);
        acc + w.transpose() * &k * &w / m
    })
}

fn scheme_from(kind: u8, graph: NetworkGraph, beta: f64, p: f64) -> GossipScheme {
    match kind % 4 {
        0 => GossipScheme::pairwise(graph).unwrap(),
        1 => GossipScheme::broadcast(graph, beta).unwrap(),
        2 => GossipScheme::pairwise(graph).unwrap().with_dropout(p).unwrap(),
        _ => GossipScheme::broadcast(graph, beta)
            .unwrap()
            .with_vanishing_rate(p * 3.0, 0.3)
            .unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_matrices_are_row_stochastic(
        seed in any::<u64>(), n in 2usize..12, kind in 0u8..4, beta in 0.05f64..0.95, p in 0.05f64..1.0, step in 1u64..1000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graph = common::random_connected_graph(n, 0.3, &mut rng);
        let scheme = scheme_from(kind, graph, beta, p);
        for _ in 0..20 {
            let w = scheme.sample(step, &mut rng).unwrap();
            let m = w.as_matrix();
            prop_assert!(m.iter().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert!(w.row_sum_error() <= STOCHASTIC_TOL);
        }
    }

    #[test]
    fn expected_matrix_has_unit_column_sums(
        seed in any::<u64>(), n in 2usize..12, kind in 0u8..4, beta in 0.05f64..0.95, p in 0.05f64..1.0, step in 1u64..1000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graph = common::random_connected_graph(n, 0.3, &mut rng);
        let scheme = scheme_from(kind, graph, beta, p);
        let e = expected_matrix(&scheme, step).unwrap();
        let worst = e.column_sum().iter().map(|c| (c - 1.0).abs()).fold(0.0, f64::max);
        prop_assert!(worst <= STOCHASTIC_TOL, "column sum error {worst}");
    }

    #[test]
    fn pairwise_rho_below_one_iff_connected(seed in any::<u64>(), n in 2usize..10, connected in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graph = if connected {
            common::random_connected_graph(n, 0.2, &mut rng)
        } else {
            common::random_disconnected_graph(n, 0.5, &mut rng)
        };
        prop_assume!(!graph.edges().is_empty());
        let rho = contraction_coefficient(&GossipScheme::pairwise(graph.clone()).unwrap(), 1).unwrap();
        if connected {
            prop_assert!(rho < 1.0 - 1e-12);
        } else {
            prop_assert!((rho - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pairwise_rho_matches_dense_oracle(seed in any::<u64>(), n in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graph = common::random_connected_graph(n, 0.4, &mut rng);
        let expected = linalg::max_symmetric_eigenvalue(&pairwise_gram_oracle(&graph));
        let rho = contraction_coefficient(&GossipScheme::pairwise(graph).unwrap(), 1).unwrap();
        prop_assert!((rho - expected).abs() < 1e-12);
    }

    #[test]
    fn dropout_rho_matches_brute_force(seed in any::<u64>(), n in 2usize..6, p in 0.05f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graph = common::random_connected_graph(n, 0.5, &mut rng);
        let gram = pairwise_gram_oracle(&graph) * p + centering(n) * (1.0 - p);
        let expected = linalg::max_symmetric_eigenvalue(&gram);
        let scheme = GossipScheme::pairwise(graph).unwrap().with_dropout(p).unwrap();
        let rho = contraction_coefficient(&scheme, 1).unwrap();
        prop_assert!((rho - expected).abs() < 1e-12);
    }
}

#[test]
fn monte_carlo_mean_matches_expected_matrix() {
    const M: usize = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let schemes = [
        GossipScheme::pairwise(NetworkGraph::path(4).unwrap()).unwrap(),
        GossipScheme::broadcast(NetworkGraph::grid(2, 3).unwrap(), 0.3).unwrap(),
        GossipScheme::pairwise(NetworkGraph::complete(5).unwrap())
            .unwrap()
            .with_dropout(0.4)
            .unwrap(),
    ];
    for scheme in &schemes {
        let n = scheme.node_count();
        let mut sum = DMatrix::zeros(n, n);
        for _ in 0..M {
            sum += scheme.sample(1, &mut rng).unwrap().as_matrix();
        }
        let mean = sum / M as f64;
        let exact = expected_matrix(scheme, 1).unwrap();
        let err = (mean - exact).amax();
        assert!(err < 5.0 / (M as f64).sqrt(), "max entry error {err}");
    }
}

#[test]
fn complete_three_node_rho_against_power_iteration() {
    // E(WᵀKW) estimated from samples, then its top eigenvalue by power
    // iteration on the centered subspace.
    let scheme = GossipScheme::pairwise(NetworkGraph::complete(3).unwrap()).unwrap();
    let rho = contraction_coefficient(&scheme, 1).unwrap();
    assert!(rho > 0.0 && rho < 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let k = centering(3);
    let mut gram = DMatrix::zeros(3, 3);
    let m = 30_000;
    for _ in 0..m {
        let w = scheme.sample(1, &mut rng).unwrap().into_matrix();
        gram += w.transpose() * &k * &w;
    }
    gram /= m as f64;
    let mut v = DMatrix::from_column_slice(3, 1, &[1.0, -0.3, -0.7]);
    for _ in 0..200 {
        v = &gram * &v;
        v /= v.norm();
    }
    let estimate = (v.transpose() * &gram * &v)[(0, 0)];
    assert!(
        (estimate - rho).abs() < 0.02,
        "power iteration {estimate} vs exact {rho}"
    );
}

#[test]
fn scheme_validation_flags() {
    let graph = NetworkGraph::path(4).unwrap();
    let p = validate_scheme(&GossipScheme::pairwise(graph.clone()).unwrap(), STOCHASTIC_TOL).unwrap();
    assert!(p.doubly_stochastic && p.column_stochastic_in_mean && p.mixing);
    let b = validate_scheme(&GossipScheme::broadcast(graph, 0.5).unwrap(), STOCHASTIC_TOL).unwrap();
    assert!(!b.doubly_stochastic && b.column_stochastic_in_mean && b.mixing);
    let i = validate_scheme(&GossipScheme::identity(4).unwrap(), STOCHASTIC_TOL).unwrap();
    assert!(i.doubly_stochastic && !i.mixing);
    assert_eq!(i.rho, 1.0);
}

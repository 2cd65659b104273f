#![allow(dead_code)]

use gossip_sa::gossip::NetworkGraph;
use gossip_sa::linalg;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

// 10-point Gauss-Legendre rule on [-1, 1].
const GL_NODES: [f64; 10] = [
    -0.9739065285171717,
    -0.8650633666889845,
    -0.6794095682990244,
    -0.4333953941292472,
    -0.1488743389816312,
    0.1488743389816312,
    0.4333953941292472,
    0.6794095682990244,
    0.8650633666889845,
    0.9739065285171717,
];
const GL_WEIGHTS: [f64; 10] = [
    0.0666713443086881,
    0.1494513491505806,
    0.219086362515982,
    0.2692667193099963,
    0.2955242247147529,
    0.2955242247147529,
    0.2692667193099963,
    0.219086362515982,
    0.1494513491505806,
    0.0666713443086881,
];

/// `∫_0^∞ e^{Ht} Υ e^{Hᵀt} dt` by Gauss-Legendre on panels of width `h`.
///
/// With `E = e^{Hh}` and `P = ∫_0^h e^{Hτ} Υ e^{Hᵀτ} dτ`, panel `j`
/// contributes `E^j P E^{jᵀ}`; the sum stops once `E^j` is negligible.
pub fn lyapunov_quadrature(h: &DMatrix<f64>, upsilon: &DMatrix<f64>) -> DMatrix<f64> {
    let d = h.nrows();
    let width = 0.25 / h.norm().max(1e-3);
    let mut panel = DMatrix::zeros(d, d);
    for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
        let tau = 0.5 * width * (x + 1.0);
        let e = (h * tau).exp();
        panel += &e * upsilon * e.transpose() * (0.5 * width * w);
    }
    let step = (h * width).exp();
    let mut power = DMatrix::<f64>::identity(d, d);
    let mut total = DMatrix::zeros(d, d);
    for _ in 0..10_000_000 {
        total += &power * &panel * power.transpose();
        power = &step * power;
        if power.amax() < 1e-18 {
            break;
        }
    }
    total
}

/// Random `d×d` matrix with spectral abscissa in `[-2, -0.2]`.
pub fn random_hurwitz<R: Rng>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let target = rng.random_range(0.2..2.0);
    let shift = linalg::spectral_abscissa(&m) + target;
    m - DMatrix::identity(d, d) * shift
}

/// Random symmetric positive semidefinite matrix `B Bᵀ`, rank `rank`.
pub fn random_psd<R: Rng>(d: usize, rank: usize, rng: &mut R) -> DMatrix<f64> {
    let b = DMatrix::from_fn(d, rank, |_, _| rng.random_range(-1.0..1.0));
    linalg::symmetrize(&(&b * b.transpose()))
}

/// Random spanning tree plus each remaining pair with probability `p`.
pub fn random_connected_graph<R: Rng>(n: usize, p: f64, rng: &mut R) -> NetworkGraph {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for k in 1..n {
        let parent = order[rng.random_range(0..k)];
        edges.push((parent, order[k]));
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    NetworkGraph::new(n, edges).unwrap()
}

/// Two random connected blocks with no edge between them.
pub fn random_disconnected_graph<R: Rng>(n: usize, p: f64, rng: &mut R) -> NetworkGraph {
    assert!(n >= 2);
    let split = rng.random_range(1..n);
    let a = random_connected_graph(split, p, rng);
    let b = random_connected_graph(n - split, p, rng);
    let mut edges: Vec<(usize, usize)> = a.edges().to_vec();
    edges.extend(b.edges().iter().map(|&(i, j)| (i + split, j + split)));
    NetworkGraph::new(n, edges).unwrap()
}

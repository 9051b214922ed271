#![allow(dead_code)]

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use schwarz_net::graph::Graph;
use schwarz_net::problems::{generate_network, NetworkKind};
use schwarz_net::spectral::symmetric_extremes;
use schwarz_net::StructuredMatrix;

pub fn path(n: usize) -> Graph {
    let e: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
    Graph::from_edges(n, &e).unwrap()
}

/// Random connected graph with `n` vertices.
pub fn random_graph(n: usize, seed: u64) -> Graph {
    let kind = NetworkKind::RandomTreePlusChords { n, chords: n / 4 };
    generate_network(&kind, (1.0, 1.0), seed).unwrap().0
}

/// Random symmetric positive definite matrix with nonzeros only between
/// vertices at graph distance at most `bandwidth`. The diagonal shift is
/// drawn so that conditioning ranges from poor to strongly dominant.
pub fn random_pd(g: &Graph, bandwidth: usize, seed: u64) -> StructuredMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let n = g.n_vertices();
    let mut trip = Vec::new();
    for i in 0..n {
        let dist = g.bfs_distance(&[i], Some(bandwidth)).unwrap();
        for (j, d) in dist.iter().enumerate() {
            if j <= i {
                continue;
            }
            if let Some(d) = *d {
                if d >= 1 && rng.random_bool(if d == 1 { 0.9 } else { 0.4 }) {
                    let v = rng.random_range(-1.0..1.0) / d as f64;
                    trip.push((i, j, v));
                    trip.push((j, i, v));
                }
            }
        }
    }
    for i in 0..n {
        trip.push((i, i, 0.0));
    }
    let a = StructuredMatrix::from_triplets(n, &trip).unwrap();
    let (lo, hi) = symmetric_extremes(&a);
    let margin = (hi - lo).max(1.0) * rng.random_range(0.02..1.5);
    let shift = margin - lo;
    a.add(&StructuredMatrix::identity(n).scale(shift)).unwrap()
}

/// Least-squares slope and coefficient of determination of `y` against
/// `0..y.len()`.
pub fn linear_fit(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (i, &v) in y.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (v - my);
        sxx += dx * dx;
        syy += (v - my) * (v - my);
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    (slope, r2)
}

/// Writes to the stderr handle directly so the line survives test output capture.
pub fn report(id: usize, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "criterion {id:>2} [{verdict}] {name}: {detail}"
    );
}

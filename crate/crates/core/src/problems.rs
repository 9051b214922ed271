//! Problem families: graph QPs reduced to `Hx = f`, and DC power-network
//! state estimation on synthetic networks.
//!
//! Per-edge arrays are indexed by position in [`Graph::edges`] (canonical
//! `(low, high)` orientation, lexicographic order).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::CholeskyFactor;
use crate::graph::Graph;
use crate::matrix::StructuredMatrix;
use crate::spectral::{lanczos_extremes, symmetric_extremes, EXACT_DENSE_LIMIT};

/// Graph QP
///
/// ```text
/// min  sum_i (q_i x_i^2 / 2 - f_i x_i + r_i u_i^2 / 2) + sum_e s_e v_e^2 / 2
/// s.t. u_i = a_ii x_i - sum_{j ~ i} a_ij x_j,   v_e = b_e (x_i - x_j)
/// ```
///
/// with edges oriented low id to high id.
#[derive(Debug, Clone)]
pub struct GraphQPSpec {
    pub g: Graph,
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub f_lin: Vec<f64>,
    pub s: Vec<f64>,
    pub a_diag: Vec<f64>,
    pub a_off: Vec<f64>,
    pub b: Vec<f64>,
}

impl GraphQPSpec {
    fn validate(&self) -> Result<()> {
        let n = self.g.n_vertices();
        let m = self.g.n_edges();
        let checks = [
            ("q", self.q.len(), n),
            ("r", self.r.len(), n),
            ("f", self.f_lin.len(), n),
            ("a_diag", self.a_diag.len(), n),
            ("s", self.s.len(), m),
            ("a_off", self.a_off.len(), m),
            ("b", self.b.len(), m),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::DimensionMismatch(format!(
                    "{name} has length {got}, expected {want}"
                )));
            }
        }
        if self
            .q
            .iter()
            .chain(&self.r)
            .chain(&self.s)
            .any(|&v| !(v >= 0.0))
        {
            return Err(Error::InvalidInput("q, r and s must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Smallest-eigenvalue estimate used in PD failure messages.
fn min_eig_estimate(h: &StructuredMatrix) -> f64 {
    if h.n() <= EXACT_DENSE_LIMIT {
        symmetric_extremes(h).0
    } else {
        lanczos_extremes(h, 1e-6, 300).0
    }
}

/// Checks positive definiteness by attempting a factorization.
pub fn ensure_pd(h: &StructuredMatrix, context: &str) -> Result<()> {
    match CholeskyFactor::new(h, crate::factor::DENSE_THRESHOLD) {
        Ok(_) => Ok(()),
        Err(_) => Err(Error::NotPositiveDefinite {
            context: format!("H not positive definite: {context}"),
            min_eig_estimate: Some(min_eig_estimate(h)),
        }),
    }
}

/// `H = Q + A^T R A + B^T S B`, `f = f_lin`.
pub fn reduce_graph_qp(spec: &GraphQPSpec) -> Result<(StructuredMatrix, Vec<f64>)> {
    spec.validate()?;
    let g = &spec.g;
    let n = g.n_vertices();
    let edges = g.edges();
    let mut trip = Vec::new();
    for i in 0..n {
        trip.push((i, i, spec.q[i]));
    }
    // A has row i: a_ii at i and -a_ij at each neighbour j
    let mut a_rows: Vec<Vec<(usize, f64)>> = (0..n).map(|i| vec![(i, spec.a_diag[i])]).collect();
    for (e, &(i, j)) in edges.iter().enumerate() {
        a_rows[i].push((j, -spec.a_off[e]));
        a_rows[j].push((i, -spec.a_off[e]));
    }
    for (i, row) in a_rows.iter().enumerate() {
        let r = spec.r[i];
        if r == 0.0 {
            continue;
        }
        for &(p, ap) in row {
            for &(q, aq) in row {
                trip.push((p, q, r * ap * aq));
            }
        }
    }
    for (e, &(i, j)) in edges.iter().enumerate() {
        let w = spec.s[e] * spec.b[e] * spec.b[e];
        trip.extend([(i, i, w), (j, j, w), (i, j, -w), (j, i, -w)]);
    }
    let h = StructuredMatrix::from_triplets(n, &trip)?;
    ensure_pd(&h, "Q + A^T R A + B^T S B is singular or indefinite")?;
    Ok((h, spec.f_lin.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NetworkKind {
    Lattice2d { rows: usize, cols: usize },
    RandomTreePlusChords { n: usize, chords: usize },
}

/// Synthetic connected network with susceptances uniform in `y_range`.
pub fn generate_network(
    kind: &NetworkKind,
    y_range: (f64, f64),
    seed: u64,
) -> Result<(Graph, Vec<f64>)> {
    let (lo, hi) = y_range;
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::InvalidInput(format!(
            "susceptance range ({lo}, {hi}) must be positive"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = match *kind {
        NetworkKind::Lattice2d { rows, cols } => {
            if rows == 0 || cols == 0 {
                return Err(Error::InvalidInput("lattice needs rows, cols >= 1".into()));
            }
            let mut e = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    let v = r * cols + c;
                    if c + 1 < cols {
                        e.push((v, v + 1));
                    }
                    if r + 1 < rows {
                        e.push((v, v + cols));
                    }
                }
            }
            Graph::from_edges(rows * cols, &e)?
        }
        NetworkKind::RandomTreePlusChords { n, chords } => {
            if n == 0 {
                return Err(Error::InvalidInput(
                    "network needs at least one vertex".into(),
                ));
            }
            let room = n * (n - 1) / 2 - (n - 1);
            if chords > room {
                return Err(Error::InvalidInput(format!(
                    "{chords} chords do not fit a tree on {n} vertices"
                )));
            }
            let mut set = std::collections::BTreeSet::new();
            for i in 1..n {
                let j = rng.random_range(0..i);
                set.insert((j, i));
            }
            let mut added = 0;
            while added < chords {
                let a = rng.random_range(0..n);
                let b = rng.random_range(0..n);
                if a != b && set.insert((a.min(b), a.max(b))) {
                    added += 1;
                }
            }
            Graph::from_edges(n, &set.into_iter().collect::<Vec<_>>())?
        }
    };
    let y = (0..g.n_edges())
        .map(|_| {
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        })
        .collect();
    Ok((g, y))
}

/// DC state-estimation instance.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationProblem {
    pub g: Graph,
    pub y: Vec<f64>,
    pub measured: Vec<bool>,
    pub p_m: Vec<f64>,
    pub delta_m: Vec<f64>,
    pub c: f64,
    pub truth: Option<Vec<f64>>,
}

/// Ratio of unmeasured to measured flow standard deviation.
pub const UNMEASURED_STD_FACTOR: f64 = 3.162_277_660_168_379_5; // sqrt(10)

impl EstimationProblem {
    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.g.n_vertices(), self.g.n_edges());
        if self.y.len() != m
            || self.measured.len() != m
            || self.p_m.len() != m
            || self.delta_m.len() != n
        {
            return Err(Error::DimensionMismatch(
                "estimation data does not match the graph".into(),
            ));
        }
        if !(self.c > 0.0) || self.y.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidInput(
                "c and all susceptances must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Flow standard deviations: `y` on measured edges, `sqrt(10) y` elsewhere.
    pub fn sigma_p(&self) -> Vec<f64> {
        self.y
            .iter()
            .zip(&self.measured)
            .map(|(&y, &m)| if m { y } else { UNMEASURED_STD_FACTOR * y })
            .collect()
    }

    pub fn sigma_delta(&self) -> f64 {
        1.0 / self.c
    }

    /// Flows `y_e (delta_i - delta_j)`.
    pub fn flows(&self, delta: &[f64]) -> Vec<f64> {
        self.g
            .edges()
            .iter()
            .zip(&self.y)
            .map(|(&(i, j), &y)| y * (delta[i] - delta[j]))
            .collect()
    }

    /// Weighted least-squares objective at `delta`.
    pub fn objective(&self, delta: &[f64]) -> f64 {
        let c2 = self.c * self.c;
        let prior: f64 = delta
            .iter()
            .zip(&self.delta_m)
            .map(|(d, m)| c2 * (d - m).powi(2))
            .sum();
        let fit: f64 = self
            .flows(delta)
            .iter()
            .zip(&self.p_m)
            .zip(self.sigma_p())
            .map(|((p, pm), s)| ((p - pm) / s).powi(2))
            .sum();
        prior + fit
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TruthMode {
    /// White noise smoothed by repeated neighbour averaging, scaled to
    /// `scale` in the inf-norm.
    RandomSmooth {
        scale: f64,
    },
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementConfig {
    pub c: f64,
    pub measured_fraction: f64,
    pub seed: u64,
    pub truth: TruthMode,
    /// Add Gaussian measurement and prior noise.
    pub noise: bool,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self {
            c: 0.1,
            measured_fraction: 0.5,
            seed: 0,
            truth: TruthMode::RandomSmooth { scale: 0.5 },
            noise: true,
        }
    }
}

fn smooth_field(g: &Graph, rng: &mut ChaCha8Rng, scale: f64) -> Vec<f64> {
    let n = g.n_vertices();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut x: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
    for _ in 0..20 {
        x = (0..n)
            .map(|i| {
                let nb = g.neighbors(i);
                if nb.is_empty() {
                    x[i]
                } else {
                    0.5 * x[i] + 0.5 * nb.iter().map(|&j| x[j]).sum::<f64>() / nb.len() as f64
                }
            })
            .collect();
    }
    let mean = x.iter().sum::<f64>() / n.max(1) as f64;
    x.iter_mut().for_each(|v| *v -= mean);
    let peak = crate::norm_inf(&x);
    if peak > 0.0 {
        x.iter_mut().for_each(|v| *v *= scale / peak);
    }
    x
}

/// Draws a truth, selects the measured edges and simulates `P^m`, `delta^m`.
pub fn simulate_measurements(
    g: &Graph,
    y: &[f64],
    cfg: &MeasurementConfig,
) -> Result<EstimationProblem> {
    if !(cfg.measured_fraction > 0.0 && cfg.measured_fraction <= 1.0) {
        return Err(Error::InvalidInput(
            "measured_fraction must lie in (0, 1]".into(),
        ));
    }
    if !(cfg.c > 0.0) {
        return Err(Error::InvalidInput(
            "prior weight c must be positive".into(),
        ));
    }
    if y.len() != g.n_edges() {
        return Err(Error::DimensionMismatch(
            "one susceptance per edge required".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = g.n_vertices();
    let m = g.n_edges();
    let truth = match cfg.truth {
        TruthMode::RandomSmooth { scale } => smooth_field(g, &mut rng, scale),
        TruthMode::Zero => vec![0.0; n],
    };
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng);
    let n_meas = (cfg.measured_fraction * m as f64).round() as usize;
    let mut measured = vec![false; m];
    for &e in &order[..n_meas.min(m)] {
        measured[e] = true;
    }
    let mut p = EstimationProblem {
        g: g.clone(),
        y: y.to_vec(),
        measured,
        p_m: vec![0.0; m],
        delta_m: truth.clone(),
        c: cfg.c,
        truth: Some(truth.clone()),
    };
    p.p_m = p.flows(&truth);
    if cfg.noise {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let sigma = p.sigma_p();
        for (pm, s) in p.p_m.iter_mut().zip(sigma) {
            *pm += s * normal.sample(&mut rng);
        }
        let sd = p.sigma_delta();
        for d in &mut p.delta_m {
            *d += sd * normal.sample(&mut rng);
        }
    }
    Ok(p)
}

/// `H = c^2 I + Y^T Sigma_P Y`, `f = Y^T Sigma_P P^m + c^2 delta^m` with
/// `Sigma = diag(1/sigma^2)` and `Y[e, i] = y_e`, `Y[e, j] = -y_e`.
pub fn build_estimation_system(p: &EstimationProblem) -> Result<(StructuredMatrix, Vec<f64>)> {
    p.validate()?;
    let n = p.g.n_vertices();
    let c2 = p.c * p.c;
    let mut trip: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, c2)).collect();
    let mut f: Vec<f64> = p.delta_m.iter().map(|d| c2 * d).collect();
    for ((&(i, j), &y), (&pm, s)) in
        p.g.edges()
            .iter()
            .zip(&p.y)
            .zip(p.p_m.iter().zip(p.sigma_p()))
    {
        let w = y * y / (s * s);
        trip.extend([(i, i, w), (j, j, w), (i, j, -w), (j, i, -w)]);
        let g = y * pm / (s * s);
        f[i] += g;
        f[j] -= g;
    }
    Ok((StructuredMatrix::from_triplets(n, &trip)?, f))
}

/// Full pipeline: network, measurements and linear system.
pub fn lattice_estimation(
    rows: usize,
    cols: usize,
    cfg: &MeasurementConfig,
) -> Result<(EstimationProblem, StructuredMatrix, Vec<f64>)> {
    let (g, y) = generate_network(
        &NetworkKind::Lattice2d { rows, cols },
        (1.0, 10.0),
        cfg.seed,
    )?;
    let p = simulate_measurements(&g, &y, cfg)?;
    let (h, f) = build_estimation_system(&p)?;
    Ok((p, h, f))
}

//! Eigenvalue intervals, exponential decay bounds for inverses of
//! graph-structured matrices, and contraction bounds for the overlapping
//! block iteration.
//!
//! For a PD matrix with spectrum in `[lmin, lmax]` and graph bandwidth `B`,
//!
//! ```text
//! |(H^-1)_ij| <= (1/lmin) * ((lmax - lmin)/(lmax + lmin))^(d(i,j)/B)
//! ```
//!
//! and the iteration matrix of the overlapping scheme satisfies
//!
//! ```text
//! ||S||_inf <= max_k (R_k / lmin_k) * ratio_k^((omega + 1)/B_k - 1)
//! ```
//!
//! where `R_k` is the absolute coupling between expanded block `k` and the
//! rest of the graph. Diagonal blocks (`B = 0`) use the exact diagonal
//! algebra: the inverse has no off-diagonal entries.

use nalgebra::{Complex, DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::factor::CholeskyFactor;
use crate::graph::{Graph, OverlapBlocks};
use crate::matrix::{project_subdomain, StructuredMatrix, SubdomainSystem};

/// Largest dimension handled by the dense symmetric eigensolver.
pub const EXACT_DENSE_LIMIT: usize = 1024;
/// Largest dimension for which explicit iteration matrices are formed.
pub const ITERATION_MATRIX_LIMIT: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    /// Dense eigensolve up to [`EXACT_DENSE_LIMIT`], Lanczos above.
    Auto,
    ExactDense,
    LanczosEstimated,
    Gershgorin,
}

/// Interval containing the spectrum of a symmetric PD matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenInterval {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub method: EigenMethod,
    /// False for Lanczos estimates, which may lie inside the true spectrum.
    pub certified: bool,
}

impl EigenInterval {
    pub fn new(
        lambda_min: f64,
        lambda_max: f64,
        method: EigenMethod,
        certified: bool,
    ) -> Result<Self> {
        if !(lambda_min > 0.0) || lambda_max < lambda_min {
            return Err(Error::NotPositiveDefinite {
                context: format!("eigenvalue interval [{lambda_min:.3e}, {lambda_max:.3e}]"),
                min_eig_estimate: Some(lambda_min),
            });
        }
        Ok(Self {
            lambda_min,
            lambda_max,
            method,
            certified,
        })
    }

    /// `(lmax - lmin) / (lmax + lmin)`.
    pub fn ratio(&self) -> f64 {
        (self.lambda_max - self.lambda_min) / (self.lambda_max + self.lambda_min)
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lambda_min + self.lambda_max)
    }
}

/// Extreme eigenvalues of a symmetric matrix (dense), no positivity check.
pub fn symmetric_extremes(h: &StructuredMatrix) -> (f64, f64) {
    if h.n() == 0 {
        return (0.0, 0.0);
    }
    let ev = SymmetricEigen::new(h.to_dense()).eigenvalues;
    let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Spectral interval of symmetric PD `h`.
pub fn eigen_interval(h: &StructuredMatrix, method: EigenMethod) -> Result<EigenInterval> {
    if !h.is_symmetric() {
        return Err(Error::InvalidInput(
            "eigen_interval needs a symmetric matrix".into(),
        ));
    }
    if h.n() == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    let method = match method {
        EigenMethod::Auto if h.n() <= EXACT_DENSE_LIMIT => EigenMethod::ExactDense,
        EigenMethod::Auto => EigenMethod::LanczosEstimated,
        m => m,
    };
    match method {
        EigenMethod::ExactDense => {
            if h.n() > EXACT_DENSE_LIMIT {
                return Err(Error::InvalidInput(format!(
                    "exact dense eigensolve limited to n <= {EXACT_DENSE_LIMIT}, got {}",
                    h.n()
                )));
            }
            let (lo, hi) = symmetric_extremes(h);
            EigenInterval::new(lo, hi, method, true)
        }
        EigenMethod::Gershgorin => {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for i in 0..h.n() {
                let (c, v) = h.row(i);
                let mut diag = 0.0;
                let mut off = 0.0;
                for (&j, &x) in c.iter().zip(v) {
                    if j == i {
                        diag = x;
                    } else {
                        off += x.abs();
                    }
                }
                lo = lo.min(diag - off);
                hi = hi.max(diag + off);
            }
            if lo <= 0.0 {
                return Err(Error::NotCertifiable { bound: lo });
            }
            EigenInterval::new(lo, hi, method, true)
        }
        EigenMethod::LanczosEstimated => {
            let (lo, hi) = lanczos_extremes(h, 1e-8, 400);
            EigenInterval::new(lo, hi, method, false)
        }
        EigenMethod::Auto => unreachable!("resolved above"),
    }
}

/// Lanczos with full reorthogonalization; returns Ritz estimates of the
/// extreme eigenvalues once their residual estimates drop below `tol`
/// (relative) or after `max_steps` steps.
pub fn lanczos_extremes(h: &StructuredMatrix, tol: f64, max_steps: usize) -> (f64, f64) {
    let n = h.n();
    let steps = max_steps.min(n).max(1);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut est = (
        h.diag().iter().copied().fold(f64::INFINITY, f64::min),
        f64::NEG_INFINITY,
    );
    for step in 0..steps {
        h.matvec_into(&v, &mut w);
        let a: f64 = w.iter().zip(&v).map(|(p, q)| p * q).sum();
        alphas.push(a);
        basis.push(v.clone());
        // two Gram-Schmidt passes keep the basis orthonormal near breakdown
        for _ in 0..2 {
            for b in &basis {
                let c: f64 = w.iter().zip(b).map(|(p, q)| p * q).sum();
                w.iter_mut().zip(b).for_each(|(p, q)| *p -= c * q);
            }
        }
        let beta = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let breakdown = beta <= 1e-12 * a.abs().max(1.0);
        let m = alphas.len();
        let check = step + 1 == steps || breakdown || m % 5 == 0;
        if check {
            let mut t = DMatrix::zeros(m, m);
            for i in 0..m {
                t[(i, i)] = alphas[i];
                if i + 1 < m {
                    t[(i, i + 1)] = betas[i];
                    t[(i + 1, i)] = betas[i];
                }
            }
            let eig = SymmetricEigen::new(t);
            let (mut imin, mut imax) = (0, 0);
            for i in 0..m {
                if eig.eigenvalues[i] < eig.eigenvalues[imin] {
                    imin = i;
                }
                if eig.eigenvalues[i] > eig.eigenvalues[imax] {
                    imax = i;
                }
            }
            let lo = eig.eigenvalues[imin];
            let hi = eig.eigenvalues[imax];
            est = (lo, hi);
            let res_lo = (beta * eig.eigenvectors[(m - 1, imin)]).abs();
            let res_hi = (beta * eig.eigenvectors[(m - 1, imax)]).abs();
            let scale = hi.abs().max(1e-300);
            if breakdown || (res_lo <= tol * scale && res_hi <= tol * scale) {
                break;
            }
        }
        if breakdown {
            break;
        }
        betas.push(beta);
        v = w.iter().map(|x| x / beta).collect();
    }
    est
}

/// Decay bound for inverse entries at a given graph distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InverseDecay {
    pub lambda_min: f64,
    pub ratio: f64,
    pub bandwidth: usize,
}

impl InverseDecay {
    pub fn new(eig: &EigenInterval, bandwidth: usize) -> Self {
        Self {
            lambda_min: eig.lambda_min,
            ratio: eig.ratio(),
            bandwidth,
        }
    }

    /// Bound on `|(H^-1)_ij|` for `d(i, j) = distance` (`None` = different
    /// components, where the inverse entry is exactly zero).
    pub fn bound(&self, distance: Option<usize>) -> f64 {
        let Some(d) = distance else {
            return 0.0;
        };
        if self.bandwidth == 0 {
            return if d == 0 { 1.0 / self.lambda_min } else { 0.0 };
        }
        self.ratio.powf(d as f64 / self.bandwidth as f64) / self.lambda_min
    }
}

/// Bound on `|(H^-1)_ij|` from the spectral interval and graph bandwidth.
pub fn inverse_decay_bound(
    h: &StructuredMatrix,
    g: &Graph,
    eig: &EigenInterval,
    i: usize,
    j: usize,
) -> Result<f64> {
    if eig.lambda_min <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            context: "inverse decay bound needs lambda_min > 0; use the disk-spectrum check".into(),
            min_eig_estimate: Some(eig.lambda_min),
        });
    }
    if i >= h.n() || j >= h.n() {
        return Err(Error::InvalidInput(format!(
            "index ({i}, {j}) outside {}x{}",
            h.n(),
            h.n()
        )));
    }
    let bw = h.bandwidth(g)?;
    let d = g.distance(i, j)?;
    Ok(InverseDecay::new(eig, bw).bound(d))
}

/// Per-block ingredients of the contraction bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockRate {
    pub k: usize,
    /// `R_k`, total absolute coupling to the complement.
    pub coupling: f64,
    pub eig: EigenInterval,
    /// Bandwidth of the expanded-block matrix (global distances).
    pub bandwidth: usize,
    /// Largest distance spanned by a coupling entry.
    pub cross_reach: usize,
    pub exponent: f64,
    pub block_bound: f64,
}

/// Certified bound on `||S^omega||_inf` and hence on the linear rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateBound {
    pub omega: usize,
    pub per_block: Vec<BlockRate>,
    pub alpha: f64,
    /// Global form using the spectrum and bandwidth of the whole matrix.
    pub simplified_alpha: f64,
    pub global_eig: EigenInterval,
    pub global_bandwidth: usize,
    pub max_coupling: f64,
    /// All eigen data came from certified methods.
    pub certified: bool,
    /// `alpha < 1`.
    pub valid: bool,
}

fn contraction(
    coupling: f64,
    eig: &EigenInterval,
    omega: usize,
    bandwidth: usize,
    reach: usize,
) -> (f64, f64) {
    if coupling == 0.0 {
        return (f64::INFINITY, 0.0);
    }
    if bandwidth == 0 {
        return (f64::INFINITY, coupling / eig.lambda_min);
    }
    let b = bandwidth as f64;
    let exponent = (omega as f64 + 1.0 - bandwidth.max(reach) as f64) / b;
    (
        exponent,
        coupling / eig.lambda_min * eig.ratio().powf(exponent),
    )
}

/// Contraction bound for block `k` given its projected system.
pub fn block_rate(
    sys: &SubdomainSystem,
    g: &Graph,
    omega: usize,
    method: EigenMethod,
) -> Result<BlockRate> {
    let eig = eigen_interval(&sys.h_block, method)?;
    let bandwidth = sys.block_bandwidth(g)?;
    let cross_reach = sys.cross_reach(g)?;
    let coupling = sys.coupling_sum();
    let (exponent, block_bound) = contraction(coupling, &eig, omega, bandwidth, cross_reach);
    Ok(BlockRate {
        k: sys.k,
        coupling,
        eig,
        bandwidth,
        cross_reach,
        exponent,
        block_bound,
    })
}

/// Contraction bound `alpha` for the overlapping scheme on `blocks`.
pub fn rate_bound(
    h: &StructuredMatrix,
    g: &Graph,
    blocks: &OverlapBlocks,
    method: EigenMethod,
) -> Result<RateBound> {
    let zero = vec![0.0; h.n()];
    let per_block = (0..blocks.k())
        .map(|k| {
            let sys = project_subdomain(h, &zero, blocks, k)?;
            block_rate(&sys, g, blocks.omega, method)
        })
        .collect::<Result<Vec<_>>>()?;
    let alpha = per_block.iter().map(|b| b.block_bound).fold(0.0, f64::max);
    let global_eig = eigen_interval(h, method)?;
    let global_bandwidth = h.bandwidth(g)?;
    let max_coupling = per_block.iter().map(|b| b.coupling).fold(0.0, f64::max);
    let simplified_alpha = if max_coupling == 0.0 {
        0.0
    } else if global_bandwidth == 0 {
        max_coupling / global_eig.lambda_min
    } else {
        let e = (blocks.omega as f64 + 1.0) / global_bandwidth as f64 - 1.0;
        max_coupling / global_eig.lambda_min * global_eig.ratio().powf(e)
    };
    let certified = global_eig.certified && per_block.iter().all(|b| b.eig.certified);
    Ok(RateBound {
        omega: blocks.omega,
        per_block,
        alpha,
        simplified_alpha,
        global_eig,
        global_bandwidth,
        max_coupling,
        certified,
        valid: alpha < 1.0,
    })
}

/// Explicit affine iteration `x <- S x + U f` on a small problem.
#[derive(Debug, Clone)]
pub struct IterationMatrices {
    pub s: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub spectral_radius: f64,
    pub inf_norm: f64,
}

/// Row sums of absolute values, maximized.
pub fn dense_inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest eigenvalue modulus of a general real matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Forms `S^omega` and `U^omega` densely, row block by row block.
pub fn build_iteration_matrices(
    h: &StructuredMatrix,
    blocks: &OverlapBlocks,
) -> Result<IterationMatrices> {
    let n = h.n();
    if n > ITERATION_MATRIX_LIMIT {
        return Err(Error::InvalidInput(format!(
            "explicit iteration matrices limited to n <= {ITERATION_MATRIX_LIMIT}"
        )));
    }
    let zero = vec![0.0; n];
    let mut s = DMatrix::zeros(n, n);
    let mut u = DMatrix::zeros(n, n);
    for k in 0..blocks.k() {
        let sys = project_subdomain(h, &zero, blocks, k)?;
        let inv = CholeskyFactor::new(&sys.h_block, usize::MAX)
            .map_err(|_| Error::BlockNotPositiveDefinite { k })?
            .inverse();
        for (&i, &p) in sys.interior.iter().zip(&sys.restrict_rows) {
            for (q, &j) in sys.block.iter().enumerate() {
                u[(i, j)] = inv[(p, q)];
            }
            for e in &sys.h_cross {
                s[(i, e.global_col)] -= inv[(p, e.local_row)] * e.value;
            }
        }
    }
    let spectral_radius = spectral_radius(&s);
    let inf_norm = dense_inf_norm(&s);
    Ok(IterationMatrices {
        s,
        u,
        spectral_radius,
        inf_norm,
    })
}

/// Disk `|lambda - center| <= radius` containing a spectrum, with the slack
/// `epsilon` used in the decay rate `radius/|center| + epsilon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralDisk {
    pub center: Complex<f64>,
    pub radius: f64,
    pub epsilon: f64,
}

impl SpectralDisk {
    pub fn new(center: Complex<f64>, radius: f64, epsilon: f64) -> Result<Self> {
        let z = center.norm();
        if !(radius > 0.0) || radius >= z {
            return Err(Error::InvalidInput(format!(
                "need 0 < R < |z|, got R = {radius}, |z| = {z}"
            )));
        }
        if !(epsilon > 0.0 && epsilon < 1.0 - radius / z) {
            return Err(Error::InvalidInput(format!(
                "epsilon must lie in (0, {}), got {epsilon}",
                1.0 - radius / z
            )));
        }
        Ok(Self {
            center,
            radius,
            epsilon,
        })
    }

    /// `R/|z| + epsilon`, the decay base.
    pub fn rate(&self) -> f64 {
        self.radius / self.center.norm() + self.epsilon
    }

    /// Prefactor denominator `(1 - epsilon)|z| - R`.
    pub fn denominator(&self) -> f64 {
        (1.0 - self.epsilon) * self.center.norm() - self.radius
    }
}

/// Outcome of the disk-spectrum decay check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayCheck {
    /// Smallest `C` with `|((I - m/z)^p)_ij| <= C q^p` for all sampled `p`.
    pub fitted_c: f64,
    pub bandwidth: usize,
    /// Largest `|(m^-1)_ij| / bound_ij` over all entries with a positive bound.
    pub worst_ratio: f64,
    pub decay_ok: bool,
}

/// Fits the power-decay constant of `I - m/z` over `p = 0..=max_power` and
/// checks the resulting entrywise bound on `m^-1`. `m` need not be
/// symmetric; its spectrum must lie in the disk.
pub fn disk_decay_check(
    m: &StructuredMatrix,
    g: &Graph,
    disk: &SpectralDisk,
    max_power: usize,
) -> Result<DecayCheck> {
    let n = m.n();
    if n > 512 {
        return Err(Error::InvalidInput(
            "disk decay check limited to n <= 512".into(),
        ));
    }
    let dense = m.to_dense();
    let tol = 1e-10 * disk.radius.max(1.0);
    for lam in dense.complex_eigenvalues().iter() {
        if (lam - disk.center).norm() > disk.radius + tol {
            return Err(Error::SpectrumOutsideDisk {
                re: lam.re,
                im: lam.im,
            });
        }
    }
    let zinv = Complex::new(1.0, 0.0) / disk.center;
    let x: DMatrix<Complex<f64>> = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j {
            Complex::new(1.0, 0.0)
        } else {
            Complex::new(0.0, 0.0)
        };
        id - zinv * dense[(i, j)]
    });
    let q = disk.rate();
    // p = 0 contributes the identity, so C >= 1.
    let mut fitted_c: f64 = 1.0;
    let mut power = x.clone();
    for p in 1..=max_power {
        let peak = power.iter().map(|c| c.norm()).fold(0.0, f64::max);
        fitted_c = fitted_c.max(peak / q.powi(p as i32));
        if p < max_power {
            power = &power * &x;
        }
    }
    let inv = dense
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("matrix is singular".into()))?;
    let bandwidth = m.bandwidth(g)?;
    let pre = fitted_c / disk.denominator();
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for i in 0..n {
        let dist = g.bfs_distance(&[i], None)?;
        for j in 0..n {
            let bound = match dist[j] {
                None => 0.0,
                Some(d) if bandwidth == 0 => {
                    if d == 0 {
                        pre
                    } else {
                        0.0
                    }
                }
                Some(d) => pre * q.powf(d as f64 / bandwidth as f64),
            };
            let actual = inv[(i, j)].abs();
            if bound > 0.0 {
                worst = worst.max(actual / bound);
            }
            if actual > bound * (1.0 + 1e-9) + 1e-13 {
                ok = false;
            }
        }
    }
    Ok(DecayCheck {
        fitted_c,
        bandwidth,
        worst_ratio: worst,
        decay_ok: ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{expand_overlap, Partition};

    fn path(n: usize) -> Graph {
        let e: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        Graph::from_edges(n, &e).unwrap()
    }

    fn two_by_two() -> StructuredMatrix {
        StructuredMatrix::from_triplets(2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 2.0)])
            .unwrap()
    }

    #[test]
    fn intervals() {
        let i = eigen_interval(&StructuredMatrix::identity(4), EigenMethod::ExactDense).unwrap();
        assert_eq!((i.lambda_min, i.lambda_max), (1.0, 1.0));
        let t = eigen_interval(
            &StructuredMatrix::tridiagonal(5, 2.0, -1.0),
            EigenMethod::ExactDense,
        )
        .unwrap();
        // closed form 2 - 2cos(k pi / 6)
        assert!((t.lambda_min - (2.0 - 3f64.sqrt())).abs() < 1e-12);
        assert!((t.lambda_max - (2.0 + 3f64.sqrt())).abs() < 1e-12);
        let d =
            eigen_interval(&StructuredMatrix::diagonal(&[1.0, 10.0]), EigenMethod::Auto).unwrap();
        assert_eq!((d.lambda_min, d.lambda_max), (1.0, 10.0));
    }

    #[test]
    fn gershgorin_certifies_or_refuses() {
        let h = StructuredMatrix::tridiagonal(6, 3.0, -1.0);
        let g = eigen_interval(&h, EigenMethod::Gershgorin).unwrap();
        let e = eigen_interval(&h, EigenMethod::ExactDense).unwrap();
        assert!(g.lambda_min <= e.lambda_min && g.lambda_max >= e.lambda_max);
        let weak = StructuredMatrix::tridiagonal(6, 2.0, -1.0);
        assert!(matches!(
            eigen_interval(&weak, EigenMethod::Gershgorin),
            Err(Error::NotCertifiable { .. })
        ));
    }

    #[test]
    fn lanczos_estimates_are_close() {
        let h = StructuredMatrix::tridiagonal(200, 2.5, -1.0);
        let l = eigen_interval(&h, EigenMethod::LanczosEstimated).unwrap();
        let e = eigen_interval(&h, EigenMethod::ExactDense).unwrap();
        assert!(!l.certified);
        assert!((l.lambda_max - e.lambda_max).abs() < 1e-6, "{l:?} {e:?}");
        assert!((l.lambda_min - e.lambda_min).abs() < 1e-6);
    }

    #[test]
    fn indefinite_interval_rejected() {
        let h = StructuredMatrix::from_triplets(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        assert!(eigen_interval(&h, EigenMethod::ExactDense).is_err());
    }

    #[test]
    fn decay_bound_tridiagonal() {
        let g = path(5);
        let h = StructuredMatrix::tridiagonal(5, 2.0, -1.0);
        let eig = eigen_interval(&h, EigenMethod::ExactDense).unwrap();
        let b = inverse_decay_bound(&h, &g, &eig, 0, 4).unwrap();
        let expect = (1.0 / (2.0 - 3f64.sqrt())) * (3f64.sqrt() / 2.0).powi(4);
        assert!((b - expect).abs() < 1e-12);
        assert!((b - 2.09928).abs() < 1e-5);
        // closed-form inverse entry min(i,j)(n+1-max(i,j))/(n+1), 1-based
        let actual = 1.0 * 1.0 / 6.0;
        assert!(actual <= b);
        let inv = h.to_dense().try_inverse().unwrap();
        assert!((inv[(0, 4)] - actual).abs() < 1e-12);
    }

    #[test]
    fn decay_bound_diagonal_conventions() {
        let g = path(3);
        let i = StructuredMatrix::identity(3);
        let eig = eigen_interval(&i, EigenMethod::ExactDense).unwrap();
        assert_eq!(inverse_decay_bound(&i, &g, &eig, 1, 1).unwrap(), 1.0);
        assert_eq!(inverse_decay_bound(&i, &g, &eig, 0, 2).unwrap(), 0.0);
        let c = StructuredMatrix::identity(3).scale(4.0);
        let eig = eigen_interval(&c, EigenMethod::ExactDense).unwrap();
        assert_eq!(inverse_decay_bound(&c, &g, &eig, 0, 1).unwrap(), 0.0);
        let bad = EigenInterval {
            lambda_min: -1.0,
            lambda_max: 1.0,
            method: EigenMethod::ExactDense,
            certified: true,
        };
        assert!(inverse_decay_bound(&c, &g, &bad, 0, 1).is_err());
    }

    #[test]
    fn rate_bound_two_by_two_is_tight() {
        let g = path(2);
        let h = two_by_two();
        let ob = expand_overlap(&g, &Partition::new(2, vec![0, 1]).unwrap(), 0).unwrap();
        let rb = rate_bound(&h, &g, &ob, EigenMethod::ExactDense).unwrap();
        assert_eq!(rb.per_block[0].coupling, 1.0);
        assert!((rb.alpha - 0.5).abs() < 1e-15);
        let it = build_iteration_matrices(&h, &ob).unwrap();
        assert!(
            (it.s - DMatrix::from_row_slice(2, 2, &[0.0, -0.5, -0.5, 0.0]))
                .abs()
                .max()
                < 1e-15
        );
        assert!(
            (it.u - DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]))
                .abs()
                .max()
                < 1e-15
        );
        assert!((it.spectral_radius - 0.5).abs() < 1e-12);
        assert!((it.inf_norm - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_block_is_direct() {
        let g = path(4);
        let h = StructuredMatrix::tridiagonal(4, 2.0, -1.0);
        let ob = expand_overlap(&g, &Partition::single(4), 0).unwrap();
        let rb = rate_bound(&h, &g, &ob, EigenMethod::ExactDense).unwrap();
        assert_eq!(rb.alpha, 0.0);
        let it = build_iteration_matrices(&h, &ob).unwrap();
        assert_eq!(dense_inf_norm(&it.s), 0.0);
        let inv = h.to_dense().try_inverse().unwrap();
        assert!((it.u - inv).abs().max() < 1e-12);
    }

    #[test]
    fn fixed_point_is_the_solution() {
        let g = path(8);
        let h = StructuredMatrix::tridiagonal(8, 3.0, -1.0);
        let f = nalgebra::DVector::from_fn(8, |i, _| i as f64 - 2.5);
        let ob = expand_overlap(
            &g,
            &Partition::new(3, vec![0, 0, 0, 1, 1, 2, 2, 2]).unwrap(),
            1,
        )
        .unwrap();
        let it = build_iteration_matrices(&h, &ob).unwrap();
        let xs = h.to_dense().try_inverse().unwrap() * &f;
        let mapped = &it.s * &xs + &it.u * &f;
        assert!((mapped - xs).abs().max() < 1e-12);
    }

    // Path of 6, tridiag(2,-1), halves. Independent computation of the
    // bound from closed-form eigenvalues 2 - 2cos(j pi/(m+1)) of the m x m
    // block: every block has R_k = 1 and bandwidth 1, exponent omega.
    #[test]
    fn rate_bound_path_values() {
        let g = path(6);
        let h = StructuredMatrix::tridiagonal(6, 2.0, -1.0);
        let p = Partition::new(2, vec![0, 0, 0, 1, 1, 1]).unwrap();
        let pi = std::f64::consts::PI;
        let mut alphas = Vec::new();
        for omega in 0..=2usize {
            let m = 3 + omega;
            let lmin = 2.0 - 2.0 * (pi / (m as f64 + 1.0)).cos();
            let lmax = 2.0 + 2.0 * (pi / (m as f64 + 1.0)).cos();
            let expect = (1.0 / lmin) * ((lmax - lmin) / (lmax + lmin)).powi(omega as i32);
            let ob = expand_overlap(&g, &p, omega).unwrap();
            let rb = rate_bound(&h, &g, &ob, EigenMethod::ExactDense).unwrap();
            assert!(
                (rb.alpha - expect).abs() < 1e-10,
                "omega {omega}: {} vs {expect}",
                rb.alpha
            );
            let it = build_iteration_matrices(&h, &ob).unwrap();
            assert!(it.inf_norm <= rb.alpha + 1e-12);
            assert!(it.spectral_radius <= it.inf_norm + 1e-12);
            alphas.push(rb.alpha);
        }
        // on this ill-conditioned path the bound grows with omega even though
        // the true contraction improves
        assert!(alphas[0] < alphas[1] && alphas[1] < alphas[2]);
    }

    #[test]
    fn rate_bound_decreases_for_well_conditioned_path() {
        let g = path(40);
        let h = StructuredMatrix::tridiagonal(40, 4.0, -1.0);
        let p = Partition::new(4, (0..40).map(|i| i / 10).collect()).unwrap();
        let mut prev = f64::INFINITY;
        for omega in 0..5 {
            let ob = expand_overlap(&g, &p, omega).unwrap();
            let rb = rate_bound(&h, &g, &ob, EigenMethod::ExactDense).unwrap();
            assert!(rb.alpha <= prev);
            prev = rb.alpha;
        }
    }

    #[test]
    fn disk_check_identity_scaled() {
        let g = path(4);
        let m = StructuredMatrix::identity(4).scale(3.0);
        let disk = SpectralDisk::new(Complex::new(3.0, 0.0), 0.5, 0.1).unwrap();
        let r = disk_decay_check(&m, &g, &disk, 16).unwrap();
        assert_eq!(r.fitted_c, 1.0);
        assert!(r.decay_ok);
    }

    #[test]
    fn disk_check_symmetric_reduces_to_c_one() {
        let g = path(10);
        let h = StructuredMatrix::tridiagonal(10, 3.0, -1.0);
        let eig = eigen_interval(&h, EigenMethod::ExactDense).unwrap();
        let r = 0.5 * (eig.lambda_max - eig.lambda_min);
        let disk =
            SpectralDisk::new(Complex::new(eig.mid(), 0.0), r * (1.0 + 1e-12), 1e-9).unwrap();
        let out = disk_decay_check(&h, &g, &disk, 64).unwrap();
        assert!(out.fitted_c <= 1.0 + 1e-9, "C = {}", out.fitted_c);
        assert!(out.decay_ok);
    }

    #[test]
    fn disk_check_rejects_outside_spectrum() {
        let g = path(2);
        let disk = SpectralDisk::new(Complex::new(10.0, 0.0), 1.0, 0.1).unwrap();
        assert!(matches!(
            disk_decay_check(&two_by_two(), &g, &disk, 8),
            Err(Error::SpectrumOutsideDisk { .. })
        ));
        assert!(SpectralDisk::new(Complex::new(1.0, 0.0), 2.0, 0.1).is_err());
        assert!(SpectralDisk::new(Complex::new(4.0, 0.0), 2.0, 0.6).is_err());
    }
}

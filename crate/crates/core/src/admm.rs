//! Consensus ADMM over overlapping blocks.
//!
//! Vertices contained in two or more expanded blocks are duplicated: block
//! `k` keeps a private copy `x_k[i]` and the copies are tied to a consensus
//! value by `x_k[i] - z[i] = 0`. The objective `x^T H x / 2 - f^T x` is split
//! into per-block quadratics that sum to the original at consensus.
//!
//! The split assigns each off-diagonal pair `(i, j)` the PSD term
//! `|h_ij| [[1, s], [s, 1]]` (`s = sign h_ij`), shared evenly among the
//! blocks containing both endpoints, and the diagonal remainder
//! `h_ii - sum_j |h_ij|` evenly among the blocks containing `i`. For
//! diagonally dominant `H` every block quadratic is then convex. Otherwise
//! the entries themselves are split evenly.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::factor::{CholeskyFactor, DENSE_THRESHOLD};
use crate::graph::OverlapBlocks;
use crate::matrix::StructuredMatrix;
use crate::schwarz::Status;

/// One block of the lifted problem.
#[derive(Debug, Clone)]
pub struct LiftedBlock {
    /// Expanded vertex set (global ids, sorted).
    pub vertices: Vec<usize>,
    pub h: StructuredMatrix,
    pub f: Vec<f64>,
    /// `(local position, consensus index)` per coupling row.
    pub coupling: Vec<(usize, usize)>,
    /// Positions of the owned vertices.
    pub interior: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct LiftedProblem {
    pub n: usize,
    pub omega: usize,
    pub blocks: Vec<LiftedBlock>,
    /// Global vertex of each consensus entry.
    pub shared: Vec<usize>,
    /// Number of blocks sharing each consensus entry.
    pub multiplicity: Vec<usize>,
    /// Entries were split with the convex edge-term rule.
    pub convex_split: bool,
    pub warnings: Vec<String>,
}

impl LiftedProblem {
    pub fn coupling_rows(&self) -> usize {
        self.blocks.iter().map(|b| b.coupling.len()).sum()
    }
}

/// Builds the lifted consensus form of `Hx = f` on `blocks`.
pub fn build_lifted(
    h: &StructuredMatrix,
    f: &[f64],
    blocks: &OverlapBlocks,
) -> Result<LiftedProblem> {
    let n = h.n();
    if blocks.n_vertices() != n || f.len() != n {
        return Err(Error::DimensionMismatch(
            "matrix, rhs and blocks disagree".into(),
        ));
    }
    if !h.is_symmetric() {
        return Err(Error::InvalidInput(
            "lifting needs a symmetric matrix".into(),
        ));
    }
    let kk = blocks.k();
    let mut member: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut local: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, b) in blocks.blocks.iter().enumerate() {
        for (p, &v) in b.iter().enumerate() {
            member[v].push(k);
            local[v].push(p);
        }
    }
    let pos = |v: usize, k: usize| -> usize {
        let idx = member[v].iter().position(|&b| b == k).expect("member");
        local[v][idx]
    };

    let mut remainder = h.diag();
    for (i, j, v) in h.iter() {
        if i != j {
            remainder[i] -= v.abs();
        }
    }
    let convex_split = remainder
        .iter()
        .all(|&r| r >= -1e-12 * h.get(0, 0).abs().max(1.0));

    let mut trip: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); kk];
    for i in 0..n {
        let share = member[i].len() as f64;
        let d = if convex_split {
            remainder[i].max(0.0)
        } else {
            h.get(i, i)
        };
        for &k in &member[i] {
            let p = pos(i, k);
            trip[k].push((p, p, d / share));
        }
    }
    for (i, j, v) in h.iter() {
        if i >= j {
            continue;
        }
        let common: Vec<usize> = member[i]
            .iter()
            .copied()
            .filter(|k| member[j].contains(k))
            .collect();
        if common.is_empty() {
            return Err(Error::OrphanEntry { row: i, col: j });
        }
        let w = v / common.len() as f64;
        for k in common {
            let (p, q) = (pos(i, k), pos(j, k));
            trip[k].push((p, q, w));
            trip[k].push((q, p, w));
            if convex_split {
                trip[k].push((p, p, w.abs()));
                trip[k].push((q, q, w.abs()));
            }
        }
    }

    let mut shared = Vec::new();
    let mut z_index = vec![usize::MAX; n];
    for v in 0..n {
        if member[v].len() >= 2 {
            z_index[v] = shared.len();
            shared.push(v);
        }
    }
    let multiplicity = shared.iter().map(|&v| member[v].len()).collect();
    let mut out = Vec::with_capacity(kk);
    for (k, verts) in blocks.blocks.iter().enumerate() {
        let coupling = verts
            .iter()
            .enumerate()
            .filter(|(_, &v)| z_index[v] != usize::MAX)
            .map(|(p, &v)| (p, z_index[v]))
            .collect();
        let interior = blocks.interior[k].iter().map(|&v| (pos(v, k), v)).collect();
        out.push(LiftedBlock {
            vertices: verts.clone(),
            h: StructuredMatrix::from_triplets(verts.len(), &trip[k])?,
            f: verts
                .iter()
                .map(|&v| f[v] / member[v].len() as f64)
                .collect(),
            coupling,
            interior,
        });
    }
    let mut warnings = Vec::new();
    if kk > 1 && shared.len() == n {
        warnings.push("every vertex is shared: the consensus vector is dense".into());
    }
    Ok(LiftedProblem {
        n,
        omega: blocks.omega,
        blocks: out,
        shared,
        multiplicity,
        convex_split,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdmmTracePoint {
    pub iter: usize,
    pub time_s: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub error_to_xstar: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AdmmState {
    pub x_blocks: Vec<Vec<f64>>,
    pub z: Vec<f64>,
    pub y_blocks: Vec<Vec<f64>>,
    pub rho: f64,
    /// Owner values assembled into a full vector.
    pub x: Vec<f64>,
    pub iterations: usize,
    pub status: Status,
    pub trace: Vec<AdmmTracePoint>,
}

impl AdmmState {
    /// First iteration whose error to `x*` is at most `tol`.
    pub fn iterations_to_error(&self, tol: f64) -> Option<usize> {
        self.trace
            .iter()
            .find(|p| p.error_to_xstar.is_some_and(|e| e <= tol))
            .map(|p| p.iter)
    }

    /// `max |x_k[i] - z[i]|` over all coupling rows.
    pub fn consensus_gap(&self, lifted: &LiftedProblem) -> f64 {
        let mut gap: f64 = 0.0;
        for (b, x) in lifted.blocks.iter().zip(&self.x_blocks) {
            for &(p, zi) in &b.coupling {
                gap = gap.max((x[p] - self.z[zi]).abs());
            }
        }
        gap
    }
}

/// Scaled-free consensus ADMM:
///
/// ```text
/// x_k <- argmin  x^T H_k x / 2 - f_k^T x + y_k^T (A_k x - z) + rho/2 ||A_k x - z||^2
/// z   <- mean_k (A_k x_k + y_k / rho)
/// y_k <- y_k + rho (A_k x_k - z)
/// ```
///
/// Stops when the primal (`max |A_k x_k - z|`) and dual
/// (`rho max |z - z_prev|`) residuals are both at most `tol`.
pub fn admm_solve(
    lifted: &LiftedProblem,
    rho: f64,
    tol: f64,
    max_iter: usize,
    x_star: Option<&[f64]>,
) -> Result<AdmmState> {
    if !(rho > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidInput("rho and tol must be positive".into()));
    }
    if let Some(xs) = x_star {
        if xs.len() != lifted.n {
            return Err(Error::DimensionMismatch("x_star length".into()));
        }
    }
    let factors = lifted
        .blocks
        .par_iter()
        .enumerate()
        .map(|(k, b)| {
            let extra: Vec<(usize, usize, f64)> =
                b.coupling.iter().map(|&(p, _)| (p, p, rho)).collect();
            let m =
                b.h.add(&StructuredMatrix::from_triplets(b.h.n(), &extra)?)?;
            CholeskyFactor::new(&m, DENSE_THRESHOLD)
                .map_err(|_| Error::BlockNotPositiveDefinite { k })
        })
        .collect::<Result<Vec<_>>>()?;
    let start = std::time::Instant::now();
    let nz = lifted.shared.len();
    let mut z = vec![0.0; nz];
    let mut y: Vec<Vec<f64>> = lifted
        .blocks
        .iter()
        .map(|b| vec![0.0; b.coupling.len()])
        .collect();
    let mut xb: Vec<Vec<f64>> = lifted
        .blocks
        .iter()
        .map(|b| vec![0.0; b.vertices.len()])
        .collect();
    let mut x = vec![0.0; lifted.n];
    let mut trace = Vec::new();
    let mut status = Status::MaxIter;
    let mut iterations = 0;
    for it in 1..=max_iter {
        xb = lifted
            .blocks
            .par_iter()
            .zip(&factors)
            .zip(&y)
            .map(|((b, fac), yk)| {
                let mut rhs = b.f.clone();
                for (&(p, zi), &yv) in b.coupling.iter().zip(yk) {
                    rhs[p] += rho * z[zi] - yv;
                }
                fac.solve(&rhs)
            })
            .collect();
        let z_prev = std::mem::replace(&mut z, vec![0.0; nz]);
        for ((b, xk), yk) in lifted.blocks.iter().zip(&xb).zip(&y) {
            for (&(p, zi), &yv) in b.coupling.iter().zip(yk) {
                z[zi] += xk[p] + yv / rho;
            }
        }
        for (zi, &m) in z.iter_mut().zip(&lifted.multiplicity) {
            *zi /= m as f64;
        }
        let mut primal: f64 = 0.0;
        for ((b, xk), yk) in lifted.blocks.iter().zip(&xb).zip(y.iter_mut()) {
            for (&(p, zi), yv) in b.coupling.iter().zip(yk.iter_mut()) {
                let r = xk[p] - z[zi];
                *yv += rho * r;
                primal = primal.max(r.abs());
            }
        }
        let dual = rho * crate::diff_norm_inf(&z, &z_prev);
        for (b, xk) in lifted.blocks.iter().zip(&xb) {
            for &(p, v) in &b.interior {
                x[v] = xk[p];
            }
        }
        trace.push(AdmmTracePoint {
            iter: it,
            time_s: start.elapsed().as_secs_f64(),
            primal_residual: primal,
            dual_residual: dual,
            error_to_xstar: x_star.map(|xs| crate::diff_norm_inf(&x, xs)),
        });
        iterations = it;
        if !primal.is_finite() || !dual.is_finite() {
            return Err(Error::Diverging {
                iteration: it,
                residual: primal,
                min_residual: 0.0,
            });
        }
        if primal <= tol && dual <= tol {
            status = Status::Converged;
            break;
        }
    }
    Ok(AdmmState {
        x_blocks: xb,
        z,
        y_blocks: y,
        rho,
        x,
        iterations,
        status,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::direct_solve;
    use crate::graph::{expand_overlap, Graph, Partition};

    fn path(n: usize) -> Graph {
        let e: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        Graph::from_edges(n, &e).unwrap()
    }

    fn halves(n: usize) -> Partition {
        Partition::new(2, (0..n).map(|i| 2 * i / n).collect()).unwrap()
    }

    #[test]
    fn path_six_shared_set() {
        let g = path(6);
        let h = StructuredMatrix::tridiagonal(6, 2.0, -1.0);
        let ob = expand_overlap(&g, &halves(6), 1).unwrap();
        let l = build_lifted(&h, &[1.0; 6], &ob).unwrap();
        assert_eq!(l.shared, vec![2, 3]);
        assert_eq!(l.coupling_rows(), 4);
        assert!(l.blocks.iter().all(|b| b.coupling.len() == 2));
        assert!(l.convex_split);
    }

    #[test]
    fn lifted_objective_sums_to_original() {
        let g = path(8);
        let h = StructuredMatrix::tridiagonal(8, 2.0, -1.0);
        let f: Vec<f64> = (0..8).map(|i| i as f64 - 3.0).collect();
        let ob = expand_overlap(
            &g,
            &Partition::new(3, vec![0, 0, 0, 1, 1, 2, 2, 2]).unwrap(),
            1,
        )
        .unwrap();
        let l = build_lifted(&h, &f, &ob).unwrap();
        let x: Vec<f64> = (0..8).map(|i| (i as f64 * 0.9).sin()).collect();
        let full = 0.5 * x.iter().zip(h.matvec(&x)).map(|(a, b)| a * b).sum::<f64>()
            - x.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>();
        let mut split = 0.0;
        for b in &l.blocks {
            let xl: Vec<f64> = b.vertices.iter().map(|&v| x[v]).collect();
            split += 0.5
                * xl.iter()
                    .zip(b.h.matvec(&xl))
                    .map(|(a, c)| a * c)
                    .sum::<f64>();
            split -= xl.iter().zip(&b.f).map(|(a, c)| a * c).sum::<f64>();
        }
        assert!((full - split).abs() < 1e-12);
    }

    #[test]
    fn single_block_exact_in_one_iteration() {
        let g = path(5);
        let h = StructuredMatrix::tridiagonal(5, 2.0, -1.0);
        let f = vec![1.0; 5];
        let ob = expand_overlap(&g, &Partition::single(5), 0).unwrap();
        let l = build_lifted(&h, &f, &ob).unwrap();
        assert!(l.shared.is_empty());
        let st = admm_solve(&l, 1.0, 1e-10, 10, None).unwrap();
        assert_eq!(st.iterations, 1);
        assert!(crate::diff_norm_inf(&st.x, &direct_solve(&h, &f).unwrap()) < 1e-12);
    }

    #[test]
    fn zero_overlap_orphans_cross_entries() {
        let g = path(6);
        let h = StructuredMatrix::tridiagonal(6, 2.0, -1.0);
        let ob = expand_overlap(&g, &halves(6), 0).unwrap();
        assert!(matches!(
            build_lifted(&h, &[0.0; 6], &ob),
            Err(Error::OrphanEntry { row: 2, col: 3 })
        ));
    }

    #[test]
    fn rho_grid_converges_to_solution() {
        let n = 20;
        let g = path(n);
        let h = StructuredMatrix::tridiagonal(n, 2.0, -1.0);
        let f: Vec<f64> = (0..n).map(|i| (i as f64 * 0.4).cos()).collect();
        let xs = direct_solve(&h, &f).unwrap();
        let ob = expand_overlap(&g, &halves(n), 1).unwrap();
        let l = build_lifted(&h, &f, &ob).unwrap();
        let mut finals = Vec::new();
        for rho in [1.0, 4.0, 16.0] {
            let st = admm_solve(&l, rho, 1e-9, 20_000, Some(&xs)).unwrap();
            assert_eq!(st.status, Status::Converged, "rho {rho}");
            assert!(crate::diff_norm_inf(&st.x, &xs) < 1e-6);
            assert!(st.consensus_gap(&l) <= 1e-8);
            finals.push(st.x);
        }
        assert!(crate::diff_norm_inf(&finals[0], &finals[2]) < 1e-5);
    }

    #[test]
    fn non_dominant_matrix_uses_entry_split() {
        let g = path(4);
        let h = StructuredMatrix::tridiagonal(4, 1.9, -1.0);
        let ob = expand_overlap(&g, &halves(4), 1).unwrap();
        let l = build_lifted(&h, &[1.0; 4], &ob).unwrap();
        assert!(!l.convex_split);
    }

    #[test]
    fn dense_consensus_warns() {
        let g = path(4);
        let h = StructuredMatrix::tridiagonal(4, 3.0, -1.0);
        let ob = expand_overlap(&g, &halves(4), 3).unwrap();
        let l = build_lifted(&h, &[1.0; 4], &ob).unwrap();
        assert_eq!(l.warnings.len(), 1);
    }
}

//! Solvers for symmetric positive-definite blocks.
//!
//! Small blocks use a dense Cholesky factorization. Larger blocks use an
//! envelope (skyline) Cholesky factorization after reverse Cuthill-McKee
//! reordering, which keeps the fill inside the profile of graph-structured
//! matrices. Conjugate gradient is available for the iterative backend.

use std::collections::VecDeque;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::matrix::StructuredMatrix;

/// Default size at or below which blocks are factorized densely.
pub const DENSE_THRESHOLD: usize = 512;

/// Cholesky factorization of an SPD matrix, dense or envelope-based.
#[derive(Debug, Clone)]
pub enum CholeskyFactor {
    Dense(Cholesky<f64, Dyn>),
    Envelope(EnvelopeCholesky),
}

impl CholeskyFactor {
    /// Factorizes `a`; dense when `a.n() <= dense_threshold`.
    pub fn new(a: &StructuredMatrix, dense_threshold: usize) -> Result<Self> {
        if a.n() <= dense_threshold {
            let dense = a.to_dense();
            Cholesky::new(dense)
                .map(Self::Dense)
                .ok_or_else(|| Error::NotPositiveDefinite {
                    context: format!("dense Cholesky of a {}x{} matrix failed", a.n(), a.n()),
                    min_eig_estimate: None,
                })
        } else {
            EnvelopeCholesky::new(a).map(Self::Envelope)
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Self::Dense(c) => c.l_dirty().nrows(),
            Self::Envelope(e) => e.n,
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            Self::Dense(c) => {
                let mut v = DVector::from_column_slice(b);
                c.solve_mut(&mut v);
                v.as_slice().to_vec()
            }
            Self::Envelope(e) => e.solve(b),
        }
    }

    /// Dense inverse (for diagnostics on small matrices).
    pub fn inverse(&self) -> DMatrix<f64> {
        match self {
            Self::Dense(c) => c.inverse(),
            Self::Envelope(e) => {
                let n = e.n;
                let mut inv = DMatrix::zeros(n, n);
                let mut unit = vec![0.0; n];
                for j in 0..n {
                    unit[j] = 1.0;
                    let col = e.solve(&unit);
                    unit[j] = 0.0;
                    for i in 0..n {
                        inv[(i, j)] = col[i];
                    }
                }
                inv
            }
        }
    }
}

/// Reverse Cuthill-McKee ordering of the symmetric pattern of `a`.
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &StructuredMatrix) -> Vec<usize> {
    let n = a.n();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    let mut nbrs = Vec::new();
    while order.len() < n {
        // start from a minimum-degree unvisited vertex, then hop to a
        // pseudo-peripheral vertex of its component
        let start = (0..n)
            .filter(|&v| !visited[v])
            .min_by_key(|&v| (degree[v], v))
            .expect("unvisited vertex exists");
        let root = farthest_in_pattern(a, start, &visited);
        visited[root] = true;
        queue.push_back(root);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            nbrs.clear();
            nbrs.extend(a.row(u).0.iter().copied().filter(|&v| !visited[v]));
            nbrs.sort_by_key(|&v| (degree[v], v));
            for &v in &nbrs {
                visited[v] = true;
                queue.push_back(v);
            }
        }
    }
    order.reverse();
    order
}

fn farthest_in_pattern(a: &StructuredMatrix, start: usize, blocked: &[bool]) -> usize {
    let n = a.n();
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::from([start]);
    dist[start] = 0;
    let mut best = (0, start);
    while let Some(u) = queue.pop_front() {
        if dist[u] > best.0 {
            best = (dist[u], u);
        }
        for &v in a.row(u).0 {
            if !blocked[v] && dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    best.1
}

/// Envelope Cholesky factor `P A P^T = L L^T`, row `i` of `L` stored from
/// its first nonzero column to the diagonal.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    vals: Vec<f64>,
}

impl EnvelopeCholesky {
    pub fn new(a: &StructuredMatrix) -> Result<Self> {
        let n = a.n();
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (new, &old) in perm.iter().enumerate() {
            for &c in a.row(old).0 {
                first[new] = first[new].min(inv[c]);
            }
        }
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for i in 0..n {
            offset.push(offset[i] + (i - first[i] + 1));
        }
        let mut vals = vec![0.0; offset[n]];
        for (new, &old) in perm.iter().enumerate() {
            let (c, v) = a.row(old);
            for (&col, &x) in c.iter().zip(v) {
                let j = inv[col];
                if j <= new {
                    vals[offset[new] + j - first[new]] = x;
                }
            }
        }
        let mut f = Self {
            n,
            perm,
            first,
            offset,
            vals,
        };
        f.factorize()?;
        Ok(f)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.vals[self.offset[i] + j - self.first[i]]
    }

    fn factorize(&mut self) -> Result<()> {
        for i in 0..self.n {
            let fi = self.first[i];
            for j in fi..i {
                let fj = self.first[j];
                let lo = fi.max(fj);
                let mut s = self.at(i, j);
                let ri = self.offset[i] - fi;
                let rj = self.offset[j] - fj;
                for k in lo..j {
                    s -= self.vals[ri + k] * self.vals[rj + k];
                }
                let d = self.at(j, j);
                self.vals[ri + j] = s / d;
            }
            let ri = self.offset[i] - fi;
            let mut d = self.vals[ri + i];
            for k in fi..i {
                d -= self.vals[ri + k] * self.vals[ri + k];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    context: format!("envelope Cholesky pivot {i} is {d:.3e}"),
                    min_eig_estimate: None,
                });
            }
            self.vals[ri + i] = d.sqrt();
        }
        Ok(())
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let ri = self.offset[i] - fi;
            let row = &self.vals[ri + fi..ri + i];
            let s = y[i] - row.iter().zip(&y[fi..i]).map(|(a, b)| a * b).sum::<f64>();
            y[i] = s / self.vals[ri + i];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let ri = self.offset[i] - fi;
            y[i] /= self.vals[ri + i];
            let xi = y[i];
            for (yk, a) in y[fi..i].iter_mut().zip(&self.vals[ri + fi..ri + i]) {
                *yk -= a * xi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    /// Number of stored factor entries.
    pub fn profile(&self) -> usize {
        self.vals.len()
    }
}

/// Result of a conjugate-gradient solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    /// `||b - A x||_2 / ||b||_2` at exit.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Conjugate gradient on SPD `a`, starting from the contents of `x`.
pub fn conjugate_gradient(
    a: &StructuredMatrix,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> CgOutcome {
    let n = a.n();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| p * q).sum::<f64>();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let mut ap = vec![0.0; n];
    a.matvec_into(x, &mut ap);
    let mut r: Vec<f64> = b.iter().zip(&ap).map(|(bi, ai)| bi - ai).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut it = 0;
    while rr.sqrt() > tol * bnorm && it < max_iter {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        it += 1;
    }
    let rel = rr.sqrt() / bnorm;
    CgOutcome {
        iterations: it,
        relative_residual: rel,
        converged: rel <= tol,
    }
}

/// Direct solve of `a x = b` (dense or envelope Cholesky by size).
pub fn direct_solve(a: &StructuredMatrix, b: &[f64]) -> Result<Vec<f64>> {
    Ok(CholeskyFactor::new(a, DENSE_THRESHOLD)?.solve(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn lattice(r: usize, c: usize) -> Graph {
        let mut e = Vec::new();
        for i in 0..r {
            for j in 0..c {
                let v = i * c + j;
                if j + 1 < c {
                    e.push((v, v + 1));
                }
                if i + 1 < r {
                    e.push((v, v + c));
                }
            }
        }
        Graph::from_edges(r * c, &e).unwrap()
    }

    #[test]
    fn envelope_matches_dense() {
        let g = lattice(7, 9);
        let h = StructuredMatrix::laplacian(&g, 1.0)
            .add(&StructuredMatrix::identity(63).scale(0.3))
            .unwrap();
        let b: Vec<f64> = (0..63).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let env = CholeskyFactor::new(&h, 0).unwrap();
        assert!(matches!(env, CholeskyFactor::Envelope(_)));
        let dense = CholeskyFactor::new(&h, 1000).unwrap();
        let xe = env.solve(&b);
        let xd = dense.solve(&b);
        assert!(crate::diff_norm_inf(&xe, &xd) < 1e-11);
        let r = crate::matrix::residual_inf(&h, &xe, &b, None).unwrap();
        assert!(r < 1e-11);
    }

    #[test]
    fn rcm_is_a_permutation() {
        let g = lattice(5, 5);
        let h = StructuredMatrix::laplacian(&g, 1.0);
        let mut p = reverse_cuthill_mckee(&h);
        p.sort();
        assert_eq!(p, (0..25).collect::<Vec<_>>());
    }

    #[test]
    fn indefinite_is_rejected() {
        let h = StructuredMatrix::from_triplets(
            2,
            &[(0, 0, 1.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 1.0)],
        )
        .unwrap();
        assert!(CholeskyFactor::new(&h, 10).is_err());
        assert!(CholeskyFactor::new(&h, 0).is_err());
    }

    #[test]
    fn cg_converges() {
        let h = StructuredMatrix::tridiagonal(50, 2.5, -1.0);
        let b = vec![1.0; 50];
        let mut x = vec![0.0; 50];
        let out = conjugate_gradient(&h, &b, &mut x, 1e-12, 200);
        assert!(out.converged);
        let xd = direct_solve(&h, &b).unwrap();
        assert!(crate::diff_norm_inf(&x, &xd) < 1e-9);
        let mut z = vec![3.0; 50];
        let out = conjugate_gradient(&h, &vec![0.0; 50], &mut z, 1e-12, 10);
        assert!(out.converged && z.iter().all(|&v| v == 0.0));
    }
}

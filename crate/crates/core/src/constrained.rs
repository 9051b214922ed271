//! Overlapping scheme in the optimization space with soft bounds on
//! differences `x_i - x_j`.
//!
//! Each bound row is relaxed with a slack penalized quadratically, so the
//! objective is
//!
//! ```text
//! phi(x) = x^T H x / 2 - f^T x + mu/2 sum_r (max(0, d_r - hi_r)^2 + max(0, lo_r - d_r)^2),
//! d_r = x_i - x_j,
//! ```
//!
//! a convex, continuously differentiable, piecewise-quadratic function.
//! Block subproblems minimize `phi` over `V_k^omega` with the exterior
//! frozen; they are solved by a damped Newton iteration on the active
//! pieces, which terminates once the active set repeats.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::{CholeskyFactor, DENSE_THRESHOLD};
use crate::graph::OverlapBlocks;
use crate::matrix::{project_subdomain, StructuredMatrix, SubdomainSystem};
use crate::schwarz::{IterationState, Status, TracePoint};

/// Bound `lo <= x_i - x_j <= hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxRow {
    pub i: usize,
    pub j: usize,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone)]
pub struct ConstrainedProblem {
    pub h: StructuredMatrix,
    pub f: Vec<f64>,
    pub rows: Vec<BoxRow>,
    /// Slack penalty `mu`.
    pub penalty_weight: f64,
}

/// Violation within this distance of a bound counts as active in
/// active-set bookkeeping.
pub const ACTIVE_TOL: f64 = 1e-6;

impl ConstrainedProblem {
    /// Uses the default penalty `1e3 * max_i h_ii`.
    pub fn new(h: StructuredMatrix, f: Vec<f64>, rows: Vec<BoxRow>) -> Result<Self> {
        let mu = 1e3 * h.diag().iter().copied().fold(0.0, f64::max);
        Self::with_penalty(h, f, rows, mu)
    }

    pub fn with_penalty(
        h: StructuredMatrix,
        f: Vec<f64>,
        rows: Vec<BoxRow>,
        penalty_weight: f64,
    ) -> Result<Self> {
        if f.len() != h.n() {
            return Err(Error::DimensionMismatch("rhs length".into()));
        }
        if !(penalty_weight > 0.0) {
            return Err(Error::InvalidInput(
                "penalty weight must be positive".into(),
            ));
        }
        for r in &rows {
            if r.i >= h.n() || r.j >= h.n() || r.i == r.j {
                return Err(Error::InvalidInput(format!(
                    "bound row ({}, {}) is invalid",
                    r.i, r.j
                )));
            }
            if !(r.lo < r.hi) {
                return Err(Error::InvalidInput(format!(
                    "bound row ({}, {}) needs lo < hi",
                    r.i, r.j
                )));
            }
        }
        Ok(Self {
            h,
            f,
            rows,
            penalty_weight,
        })
    }

    pub fn with_penalty_weight(self, penalty_weight: f64) -> Result<Self> {
        Self::with_penalty(self.h, self.f, self.rows, penalty_weight)
    }

    /// Angle-difference bounds `[-limit, limit]` on every edge of `h`.
    pub fn edge_bounds(
        h: StructuredMatrix,
        f: Vec<f64>,
        g: &crate::Graph,
        limit: f64,
    ) -> Result<Self> {
        let rows = g
            .edges()
            .into_iter()
            .map(|(i, j)| BoxRow {
                i,
                j,
                lo: -limit,
                hi: limit,
            })
            .collect();
        Self::new(h, f, rows)
    }

    /// Signed violation: positive above `hi`, negative below `lo`, zero inside.
    pub fn violation(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| row_violation(r, x[r.i] - x[r.j]))
            .collect()
    }

    /// Optimal slacks of the soft problem (the absolute violations).
    pub fn slacks(&self, x: &[f64]) -> Vec<f64> {
        self.violation(x).into_iter().map(f64::abs).collect()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let hx = self.h.matvec(x);
        let quad: f64 = x.iter().zip(&hx).map(|(a, b)| 0.5 * a * b).sum::<f64>()
            - x.iter().zip(&self.f).map(|(a, b)| a * b).sum::<f64>();
        quad + 0.5 * self.penalty_weight * self.violation(x).iter().map(|v| v * v).sum::<f64>()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.h.matvec(x);
        g.iter_mut().zip(&self.f).for_each(|(a, b)| *a -= b);
        for (r, v) in self.rows.iter().zip(self.violation(x)) {
            g[r.i] += self.penalty_weight * v;
            g[r.j] -= self.penalty_weight * v;
        }
        g
    }

    /// Stationarity residual `||grad phi(x)||_inf`.
    pub fn kkt_residual(&self, x: &[f64]) -> f64 {
        crate::norm_inf(&self.gradient(x))
    }

    /// Rows within [`ACTIVE_TOL`] of (or beyond) a bound.
    pub fn active_set(&self, x: &[f64]) -> Vec<bool> {
        self.rows
            .iter()
            .map(|r| {
                let d = x[r.i] - x[r.j];
                d >= r.hi - ACTIVE_TOL || d <= r.lo + ACTIVE_TOL
            })
            .collect()
    }

    /// Quadratic that `phi` reduces to on the pieces selected by `x`:
    /// `H + mu sum_{r violated} a_r a_r^T` and the matching linear term.
    pub fn reduced_quadratic(&self, x: &[f64]) -> Result<(StructuredMatrix, Vec<f64>)> {
        let mu = self.penalty_weight;
        let mut trip: Vec<(usize, usize, f64)> = self.h.iter().collect();
        let mut f = self.f.clone();
        for r in &self.rows {
            let d = x[r.i] - x[r.j];
            let bound = if d > r.hi {
                r.hi
            } else if d < r.lo {
                r.lo
            } else {
                continue;
            };
            trip.extend([
                (r.i, r.i, mu),
                (r.j, r.j, mu),
                (r.i, r.j, -mu),
                (r.j, r.i, -mu),
            ]);
            f[r.i] += mu * bound;
            f[r.j] -= mu * bound;
        }
        Ok((StructuredMatrix::from_triplets(self.h.n(), &trip)?, f))
    }
}

fn row_violation(r: &BoxRow, d: f64) -> f64 {
    if d > r.hi {
        d - r.hi
    } else if d < r.lo {
        d - r.lo
    } else {
        0.0
    }
}

/// Bound row seen from one block: local endpoints or frozen exterior values.
#[derive(Debug, Clone, Copy)]
enum End {
    Local(usize),
    Fixed(usize),
}

#[derive(Debug, Clone, Copy)]
struct LocalRow {
    a: End,
    b: End,
    lo: f64,
    hi: f64,
}

/// Block `k` of the constrained scheme with a cached factorization.
pub struct ConstrainedBlock {
    pub sys: SubdomainSystem,
    rows: Vec<LocalRow>,
    mu: f64,
    cache: Option<(Vec<i8>, CholeskyFactor)>,
}

/// Outcome of one block subproblem.
#[derive(Debug, Clone)]
pub struct SubsolveResult {
    /// Minimizer over the expanded block (local order).
    pub y: Vec<f64>,
    pub newton_steps: usize,
    /// Gradient norm at exit; above the inner tolerance means inexact.
    pub gradient_inf: f64,
    pub inexact: bool,
}

/// Inner tolerance of block subproblems (relative to the gradient scale).
pub const INNER_TOL: f64 = 1e-8;
const MAX_NEWTON: usize = 100;

impl ConstrainedBlock {
    pub fn new(p: &ConstrainedProblem, blocks: &OverlapBlocks, k: usize) -> Result<Self> {
        let sys = project_subdomain(&p.h, &p.f, blocks, k)?;
        let mut local = vec![usize::MAX; p.h.n()];
        for (q, &v) in sys.block.iter().enumerate() {
            local[v] = q;
        }
        let end = |v: usize| {
            if local[v] != usize::MAX {
                End::Local(local[v])
            } else {
                End::Fixed(v)
            }
        };
        let rows = p
            .rows
            .iter()
            .filter(|r| local[r.i] != usize::MAX || local[r.j] != usize::MAX)
            .map(|r| LocalRow {
                a: end(r.i),
                b: end(r.j),
                lo: r.lo,
                hi: r.hi,
            })
            .collect();
        Ok(Self {
            sys,
            rows,
            mu: p.penalty_weight,
            cache: None,
        })
    }

    fn diff(row: &LocalRow, y: &[f64], x: &[f64]) -> f64 {
        let v = |e: End| match e {
            End::Local(q) => y[q],
            End::Fixed(g) => x[g],
        };
        v(row.a) - v(row.b)
    }

    fn objective(&self, y: &[f64], rhs: &[f64], x: &[f64]) -> f64 {
        let hy = self.sys.h_block.matvec(y);
        let mut val: f64 = y.iter().zip(&hy).map(|(a, b)| 0.5 * a * b).sum::<f64>()
            - y.iter().zip(rhs).map(|(a, b)| a * b).sum::<f64>();
        for r in &self.rows {
            let v = row_violation(
                &BoxRow {
                    i: 0,
                    j: 0,
                    lo: r.lo,
                    hi: r.hi,
                },
                Self::diff(r, y, x),
            );
            val += 0.5 * self.mu * v * v;
        }
        val
    }

    fn gradient(&self, y: &[f64], rhs: &[f64], x: &[f64]) -> Vec<f64> {
        let mut g = self.sys.h_block.matvec(y);
        g.iter_mut().zip(rhs).for_each(|(a, b)| *a -= b);
        for r in &self.rows {
            let v = row_violation(
                &BoxRow {
                    i: 0,
                    j: 0,
                    lo: r.lo,
                    hi: r.hi,
                },
                Self::diff(r, y, x),
            );
            if v != 0.0 {
                if let End::Local(q) = r.a {
                    g[q] += self.mu * v;
                }
                if let End::Local(q) = r.b {
                    g[q] -= self.mu * v;
                }
            }
        }
        g
    }

    /// Piece index per row: `1` above, `-1` below, `0` inside.
    fn pieces(&self, y: &[f64], x: &[f64]) -> Vec<i8> {
        self.rows
            .iter()
            .map(|r| {
                let d = Self::diff(r, y, x);
                if d > r.hi {
                    1
                } else if d < r.lo {
                    -1
                } else {
                    0
                }
            })
            .collect()
    }

    fn factor_for(&mut self, pieces: &[i8]) -> Result<&CholeskyFactor> {
        let hit = matches!(&self.cache, Some((p, _)) if p.as_slice() == pieces);
        if !hit {
            let mut trip: Vec<(usize, usize, f64)> = self.sys.h_block.iter().collect();
            for (r, &s) in self.rows.iter().zip(pieces) {
                if s == 0 {
                    continue;
                }
                match (r.a, r.b) {
                    (End::Local(p), End::Local(q)) => {
                        trip.extend([
                            (p, p, self.mu),
                            (q, q, self.mu),
                            (p, q, -self.mu),
                            (q, p, -self.mu),
                        ]);
                    }
                    (End::Local(p), End::Fixed(_)) | (End::Fixed(_), End::Local(p)) => {
                        trip.push((p, p, self.mu))
                    }
                    (End::Fixed(_), End::Fixed(_)) => {}
                }
            }
            let m = StructuredMatrix::from_triplets(self.sys.size(), &trip)?;
            let fac = CholeskyFactor::new(&m, DENSE_THRESHOLD)
                .map_err(|_| Error::BlockNotPositiveDefinite { k: self.sys.k })?;
            self.cache = Some((pieces.to_vec(), fac));
        }
        Ok(&self.cache.as_ref().expect("cached").1)
    }

    /// Newton point of the quadratic piece selected by `pieces`.
    fn piece_minimizer(&mut self, pieces: &[i8], rhs: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let mut b = rhs.to_vec();
        let mu = self.mu;
        for (r, &s) in self.rows.iter().zip(pieces) {
            if s == 0 {
                continue;
            }
            let bound = if s > 0 { r.hi } else { r.lo };
            // mu (a^T y + const - bound) a moves the constant part to the rhs
            let fixed = |e: End| match e {
                End::Fixed(g) => x[g],
                End::Local(_) => 0.0,
            };
            let shift = bound - fixed(r.a) + fixed(r.b);
            if let End::Local(p) = r.a {
                b[p] += mu * shift;
            }
            if let End::Local(q) = r.b {
                b[q] -= mu * shift;
            }
        }
        let rows_snapshot = pieces.to_vec();
        Ok(self.factor_for(&rows_snapshot)?.solve(&b))
    }

    /// Minimizes `phi` over the expanded block with the exterior taken from
    /// `x`, starting from the block part of `x`.
    pub fn subsolve(&mut self, x: &[f64]) -> Result<SubsolveResult> {
        let rhs = self.sys.boundary_rhs(x);
        let mut y = self.sys.gather(x);
        let scale = crate::norm_inf(&rhs).max(1.0);
        let mut g = self.gradient(&y, &rhs, x);
        let mut steps = 0;
        let mut exact = false;
        // always take one Newton step: on a fixed piece it is exact
        while steps == 0 || (crate::norm_inf(&g) > INNER_TOL * scale && steps < MAX_NEWTON) {
            let pieces = self.pieces(&y, x);
            let target = self.piece_minimizer(&pieces, &rhs, x)?;
            steps += 1;
            // the piece minimizer is stationary for phi if it stays on its
            // piece, and phi is convex, so it is the exact minimizer
            if self.pieces(&target, x) == pieces {
                y = target;
                g = self.gradient(&y, &rhs, x);
                exact = true;
                break;
            }
            let dir: Vec<f64> = target.iter().zip(&y).map(|(t, c)| t - c).collect();
            let slope: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
            let f0 = self.objective(&y, &rhs, x);
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let cand: Vec<f64> = y.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
                if self.objective(&cand, &rhs, x) <= f0 + 1e-4 * step * slope {
                    y = cand;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            g = self.gradient(&y, &rhs, x);
            if !accepted {
                break;
            }
        }
        let gradient_inf = crate::norm_inf(&g);
        Ok(SubsolveResult {
            inexact: !exact && gradient_inf > INNER_TOL * scale,
            y,
            newton_steps: steps,
            gradient_inf,
        })
    }
}

/// Solves block `k`'s subproblem at `x` and returns its owned values in
/// `interior` order.
pub fn constrained_subsolve(
    p: &ConstrainedProblem,
    blocks: &OverlapBlocks,
    k: usize,
    x: &[f64],
) -> Result<Vec<f64>> {
    let mut b = ConstrainedBlock::new(p, blocks, k)?;
    let r = b.subsolve(x)?;
    Ok(b.sys.restrict_rows.iter().map(|&q| r.y[q]).collect())
}

/// Outer-loop record of the constrained scheme.
#[derive(Debug, Clone, Serialize)]
pub struct ConstrainedState {
    /// `residual` fields hold the KKT residual `||grad phi||_inf`.
    pub state: IterationState,
    /// `||x^(t) - x^(t-1)||_inf`, entry 0 unused.
    pub steps: Vec<f64>,
    /// Number of active rows after each iteration.
    pub active_counts: Vec<usize>,
    /// Iteration after which the active set never changed again.
    pub active_settled_at: Option<usize>,
    pub inexact_solves: usize,
    pub slacks: Vec<f64>,
}

/// Synchronous outer iteration with constrained block subproblems.
/// Converged when both the step and the KKT residual are at most `tol`.
pub fn constrained_sync_solve(
    p: &ConstrainedProblem,
    blocks: &OverlapBlocks,
    tol: f64,
    max_iter: usize,
    x0: Option<&[f64]>,
    record_iterates: bool,
) -> Result<ConstrainedState> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tol must be positive".into()));
    }
    let n = p.h.n();
    let mut solvers = (0..blocks.k())
        .map(|k| ConstrainedBlock::new(p, blocks, k))
        .collect::<Result<Vec<_>>>()?;
    let start = std::time::Instant::now();
    let mut x = x0.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
    if x.len() != n {
        return Err(Error::DimensionMismatch("x0 length".into()));
    }
    let r0 = p.kkt_residual(&x);
    let mut history = vec![r0];
    let mut steps = vec![0.0];
    let mut iterates = record_iterates.then(|| vec![x.clone()]);
    let mut active = p.active_set(&x);
    let mut active_counts = vec![active.iter().filter(|&&a| a).count()];
    let mut settled = Some(0);
    let mut trace = Vec::new();
    let mut min_res = r0;
    let mut inexact = 0;
    let mut residual = r0;
    let mut status = if r0 <= tol {
        Status::Converged
    } else {
        Status::MaxIter
    };
    let mut t = 0;
    while status != Status::Converged && t < max_iter {
        let results = solvers
            .par_iter_mut()
            .map(|s| s.subsolve(&x))
            .collect::<Result<Vec<_>>>()?;
        let mut next = x.clone();
        for (s, r) in solvers.iter().zip(&results) {
            s.sys.restrict_into(&r.y, &mut next);
            inexact += r.inexact as usize;
        }
        let step = crate::diff_norm_inf(&next, &x);
        x = next;
        t += 1;
        residual = p.kkt_residual(&x);
        history.push(residual);
        steps.push(step);
        if let Some(it) = iterates.as_mut() {
            it.push(x.clone());
        }
        let now = p.active_set(&x);
        if now != active {
            settled = Some(t);
            active = now;
        }
        active_counts.push(active.iter().filter(|&&a| a).count());
        trace.push(TracePoint {
            t,
            time_s: start.elapsed().as_secs_f64(),
            residual,
            worker_id: None,
            local_iter: None,
        });
        if !residual.is_finite() || residual > 1e6 * min_res.max(f64::MIN_POSITIVE) {
            return Err(Error::Diverging {
                iteration: t,
                residual,
                min_residual: min_res,
            });
        }
        min_res = min_res.min(residual);
        if residual <= tol && step <= tol {
            status = Status::Converged;
        }
    }
    let slacks = p.slacks(&x);
    Ok(ConstrainedState {
        state: IterationState {
            x,
            t,
            residual,
            initial_residual: r0,
            residual_history: history,
            trace,
            status,
            iterates,
            epochs: (0..=t).collect(),
            max_staleness: 0,
            rounds: 1,
        },
        steps,
        active_counts,
        active_settled_at: settled,
        inexact_solves: inexact,
        slacks,
    })
}

/// Tail rate once the active set has settled, against the rate bound of
/// the quadratic the soft problem reduces to on the settled pieces.
#[derive(Debug, Clone, Serialize)]
pub struct SettledTailRate {
    /// First iteration of the measured tail (settling point plus `hold`).
    pub from: usize,
    pub rate: f64,
    pub ratios: usize,
    pub alpha: f64,
    /// Explicit `||S^omega||_inf` of the reduced quadratic.
    pub s_norm: f64,
    /// `||x_final - x*_reduced||_inf`.
    pub reduced_gap: f64,
}

/// Needs a run with recorded iterates whose active set stayed constant for
/// at least `hold` iterations. Ratios below `1e-9 ||x*||_inf` are skipped;
/// block solves are exact factorizations, so rounding stays well below.
pub fn settled_tail_rate(
    p: &ConstrainedProblem,
    g: &crate::Graph,
    blocks: &OverlapBlocks,
    run: &ConstrainedState,
    hold: usize,
) -> Result<SettledTailRate> {
    let iterates = run
        .state
        .iterates
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("tail rate needs recorded iterates".into()))?;
    let settled = run.active_settled_at.unwrap_or(0);
    let from = settled + hold;
    if from >= run.state.t {
        return Err(Error::InvalidInput(format!(
            "active set settled at {settled}, too late for a {hold}-iteration hold"
        )));
    }
    let (ha, fa) = p.reduced_quadratic(&run.state.x)?;
    let x_star = crate::factor::direct_solve(&ha, &fa)?;
    let alpha = crate::spectral::rate_bound(&ha, g, blocks, crate::EigenMethod::ExactDense)?.alpha;
    let s_norm = crate::spectral::build_iteration_matrices(&ha, blocks)?.inf_norm;
    let floor = 1e-9 * crate::norm_inf(&x_star);
    let errors: Vec<f64> = iterates
        .iter()
        .map(|x| crate::diff_norm_inf(x, &x_star))
        .collect();
    let mut rate: f64 = 0.0;
    let mut ratios = 0;
    for t in from..errors.len() - 1 {
        if errors[t] < floor {
            continue;
        }
        rate = rate.max(errors[t + 1] / errors[t]);
        ratios += 1;
    }
    Ok(SettledTailRate {
        from,
        rate,
        ratios,
        alpha,
        s_norm,
        reduced_gap: crate::diff_norm_inf(&run.state.x, &x_star),
    })
}

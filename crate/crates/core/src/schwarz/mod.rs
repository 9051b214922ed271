//! Overlapping Schwarz iteration for `Hx = f`.
//!
//! Every block `k` solves its expanded subproblem with the exterior frozen,
//!
//! ```text
//! H_k y = f_k - H_{-k} x_ext,
//! ```
//!
//! and writes `y` back on its owned vertices only. Three drivers share the
//! block solvers defined here: [`sync_solve`] (barrier per iteration),
//! [`async_solve_sim`] (deterministic delayed-data simulation) and
//! [`async_solve_threaded`] (one thread per block over a locked board).

mod async_sim;
mod sync;
mod threaded;

use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use async_sim::{async_solve_sim, DelayKind, DelaySchedule, ScheduleStep, UpdateSets};
pub use sync::{sync_solve, verify_linear_rate, RateMeasurement};
pub use threaded::{async_solve_threaded, BoardEntry, PublicBoard};

use crate::error::{Error, Result};
use crate::factor::{conjugate_gradient, CholeskyFactor, DENSE_THRESHOLD};
use crate::graph::OverlapBlocks;
use crate::matrix::{project_subdomain, StructuredMatrix, SubdomainSystem};

/// How each block subproblem is solved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
#[derive(Default)]
pub enum SubproblemBackend {
    /// Cholesky factorization computed once and reused.
    #[default]
    Factor,
    /// Conjugate gradient warm-started from the block's previous solution.
    Cg { tol: f64, max_iter: usize },
}

impl SubproblemBackend {
    pub fn cg() -> Self {
        Self::Cg {
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

/// Outer-loop options shared by the drivers.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub x0: Option<Vec<f64>>,
    /// Keep every iterate (needed by [`verify_linear_rate`]).
    pub record_iterates: bool,
    /// Trace row every `log_every` iterations (the last one is always kept).
    pub log_every: usize,
    /// Growth of the residual over its running minimum that counts as
    /// divergence.
    pub divergence_factor: f64,
    pub wall_limit_s: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10_000,
            x0: None,
            record_iterates: false,
            log_every: 1,
            divergence_factor: 1e6,
            wall_limit_s: None,
        }
    }
}

impl SolveOptions {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        Self {
            tol,
            max_iter,
            ..Self::default()
        }
    }

    pub fn with_iterates(mut self) -> Self {
        self.record_iterates = true;
        self
    }

    pub(crate) fn validate(&self, n: usize) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.log_every == 0 {
            return Err(Error::InvalidInput("log_every must be at least 1".into()));
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "x0 has length {}, expected {n}",
                    x0.len()
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn start(&self, n: usize) -> Vec<f64> {
        self.x0.clone().unwrap_or_else(|| vec![0.0; n])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIter,
    Timeout,
}

/// One trace row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub t: usize,
    pub time_s: f64,
    pub residual: f64,
    pub worker_id: Option<usize>,
    pub local_iter: Option<usize>,
}

/// Result of an outer iteration.
#[derive(Debug, Clone, Serialize)]
pub struct IterationState {
    pub x: Vec<f64>,
    /// Completed outer iterations (block updates in threaded mode).
    pub t: usize,
    /// `||Hx - f||_inf` at the returned `x`.
    pub residual: f64,
    pub initial_residual: f64,
    /// Global residual after every iteration; entry 0 is the start.
    pub residual_history: Vec<f64>,
    /// Logged rows, `t >= 1`.
    pub trace: Vec<TracePoint>,
    pub status: Status,
    #[serde(skip)]
    pub iterates: Option<Vec<Vec<f64>>>,
    /// Epoch boundaries `t_0 = 0 < t_1 < ...` of asynchronous runs.
    pub epochs: Vec<usize>,
    /// Oldest data served, as `t - tau`.
    pub max_staleness: usize,
    /// Outer restarts of the threaded runtime.
    pub rounds: usize,
}

impl IterationState {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }

    /// Number of completed epochs at step `t`.
    pub fn epochs_completed(&self, t: usize) -> usize {
        self.epochs.iter().skip(1).take_while(|&&e| e <= t).count()
    }

    /// Iterations recorded until the residual first dropped to `tol`.
    pub fn iterations_to(&self, tol: f64) -> Option<usize> {
        self.residual_history.iter().position(|&r| r <= tol)
    }

    /// Per-iteration contraction of the residual, `exp` of the least-squares
    /// slope of `ln r_t` over the tail that starts once the residual is
    /// below `1e-2` times its initial value. `None` with fewer than three
    /// tail points.
    pub fn residual_tail_rate(&self) -> Option<f64> {
        let r0 = self.initial_residual;
        let entry = self.residual_history.iter().position(|&r| r < 1e-2 * r0)?;
        let tail: Vec<f64> = self.residual_history[entry..]
            .iter()
            .take_while(|&&r| r > 0.0)
            .map(|r| r.ln())
            .collect();
        if tail.len() < 3 {
            return None;
        }
        let n = tail.len() as f64;
        let mx = (n - 1.0) / 2.0;
        let my = tail.iter().sum::<f64>() / n;
        let (sxy, sxx) = tail.iter().enumerate().fold((0.0, 0.0), |(a, b), (i, &v)| {
            let dx = i as f64 - mx;
            (a + dx * (v - my), b + dx * dx)
        });
        Some((sxy / sxx).exp())
    }
}

/// Block `k` with its solver and warm-start storage.
pub(crate) struct BlockSolver {
    pub sys: SubdomainSystem,
    kind: SolverKind,
}

enum SolverKind {
    Factor(CholeskyFactor),
    Cg {
        tol: f64,
        max_iter: usize,
        warm: Vec<f64>,
    },
}

impl BlockSolver {
    pub fn new(sys: SubdomainSystem, backend: SubproblemBackend) -> Result<Self> {
        let kind = match backend {
            SubproblemBackend::Factor => SolverKind::Factor(
                CholeskyFactor::new(&sys.h_block, DENSE_THRESHOLD)
                    .map_err(|_| Error::BlockNotPositiveDefinite { k: sys.k })?,
            ),
            SubproblemBackend::Cg { tol, max_iter } => {
                if !(tol > 0.0) || max_iter == 0 {
                    return Err(Error::InvalidInput(
                        "cg backend needs tol > 0 and max_iter > 0".into(),
                    ));
                }
                let d = sys.h_block.diag();
                if d.iter().find(|&&v| !(v > 0.0)).is_some() {
                    return Err(Error::BlockNotPositiveDefinite { k: sys.k });
                }
                SolverKind::Cg {
                    tol,
                    max_iter,
                    warm: vec![0.0; sys.size()],
                }
            }
        };
        Ok(Self { sys, kind })
    }

    /// Solves the block system with right-hand side `rhs`.
    pub fn solve(&mut self, rhs: &[f64]) -> Result<Vec<f64>> {
        match &mut self.kind {
            SolverKind::Factor(c) => Ok(c.solve(rhs)),
            SolverKind::Cg {
                tol,
                max_iter,
                warm,
            } => {
                let out = conjugate_gradient(&self.sys.h_block, rhs, warm, *tol, *max_iter);
                if !out.relative_residual.is_finite() {
                    return Err(Error::BlockNotPositiveDefinite { k: self.sys.k });
                }
                Ok(warm.clone())
            }
        }
    }

    /// Block update with exterior values taken from `x`.
    pub fn update(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        let rhs = self.sys.boundary_rhs(x);
        self.solve(&rhs)
    }
}

pub(crate) fn build_solvers(
    h: &StructuredMatrix,
    f: &[f64],
    blocks: &OverlapBlocks,
    backend: SubproblemBackend,
) -> Result<Vec<BlockSolver>> {
    if !h.is_symmetric() {
        return Err(Error::InvalidInput(
            "the scheme needs a symmetric matrix".into(),
        ));
    }
    (0..blocks.k())
        .map(|k| BlockSolver::new(project_subdomain(h, f, blocks, k)?, backend))
        .collect()
}

/// Tracks the running minimum of the residual and flags blow-up.
///
/// With stale reads the residual may legitimately climb back towards the
/// level of the iterates being read, so residuals enter the minimum only
/// after `lag` further steps (the delay bound plus one).
pub(crate) struct DivergenceGuard {
    factor: f64,
    min: f64,
    pending: VecDeque<f64>,
    lag: usize,
}

impl DivergenceGuard {
    pub fn new(factor: f64, initial: f64) -> Self {
        Self::with_lag(factor, initial, 0)
    }

    pub fn with_lag(factor: f64, initial: f64, lag: usize) -> Self {
        Self {
            factor,
            min: initial,
            pending: VecDeque::with_capacity(lag + 1),
            lag,
        }
    }

    pub fn check(&mut self, iteration: usize, residual: f64) -> Result<()> {
        if !residual.is_finite() || residual > self.factor * self.min.max(f64::MIN_POSITIVE) {
            return Err(Error::Diverging {
                iteration,
                residual,
                min_residual: self.min,
            });
        }
        self.pending.push_back(residual);
        while self.pending.len() > self.lag {
            let r = self.pending.pop_front().expect("non-empty");
            self.min = self.min.min(r);
        }
        Ok(())
    }
}

/// Wall clock since solver start.
pub(crate) struct Clock(Instant);

impl Clock {
    pub fn start() -> Self {
        Self(Instant::now())
    }

    pub fn secs(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }

    pub fn exceeded(&self, limit: Option<f64>) -> bool {
        limit.is_some_and(|l| self.secs() > l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_rate_of_geometric_history() {
        let hist: Vec<f64> = (0..30).map(|t| 0.5f64.powi(t)).collect();
        let st = IterationState {
            x: vec![],
            t: 29,
            residual: hist[29],
            initial_residual: 1.0,
            residual_history: hist,
            trace: vec![],
            status: Status::Converged,
            iterates: None,
            epochs: vec![],
            max_staleness: 0,
            rounds: 1,
        };
        assert!((st.residual_tail_rate().unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn guard_fires_on_growth() {
        let mut g = DivergenceGuard::new(10.0, 1.0);
        g.check(1, 0.5).unwrap();
        g.check(2, 4.0).unwrap();
        assert!(matches!(
            g.check(3, 5.1),
            Err(Error::Diverging { iteration: 3, .. })
        ));
        assert!(DivergenceGuard::new(10.0, 1.0).check(1, f64::NAN).is_err());
    }

    #[test]
    fn lagged_guard_ignores_recent_minimum() {
        let mut g = DivergenceGuard::with_lag(10.0, 1.0, 2);
        g.check(1, 1e-3).unwrap();
        // the 1e-3 stays out of the minimum for two more steps
        g.check(2, 5.0).unwrap();
        g.check(3, 5.0).unwrap();
        assert!(g.check(4, 5.0).is_err());
    }
}

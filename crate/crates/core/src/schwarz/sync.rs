use rayon::prelude::*;
use serde::Serialize;

use super::{
    build_solvers, Clock, DivergenceGuard, IterationState, SolveOptions, Status, SubproblemBackend,
    TracePoint,
};
use crate::error::{Error, Result};
use crate::graph::OverlapBlocks;
use crate::matrix::{residual_inf, StructuredMatrix};

/// Synchronous overlapping iteration.
///
/// All block updates of one iteration read the same `x^(t)` and run in
/// parallel; the new iterate is assembled after the barrier, each vertex
/// written by its owner only. The result is independent of the number of
/// worker threads. Stops once `max_k ||(Hx - f)|_{V_k^omega}||_inf`, which
/// equals the global residual because the expanded blocks cover every row,
/// reaches `tol`.
pub fn sync_solve(
    h: &StructuredMatrix,
    f: &[f64],
    blocks: &OverlapBlocks,
    backend: SubproblemBackend,
    opts: &SolveOptions,
) -> Result<IterationState> {
    opts.validate(h.n())?;
    let mut solvers = build_solvers(h, f, blocks, backend)?;
    let clock = Clock::start();
    let mut x = opts.start(h.n());
    let r0 = residual_inf(h, &x, f, None)?;
    let mut history = vec![r0];
    let mut iterates = opts.record_iterates.then(|| vec![x.clone()]);
    let mut trace = Vec::new();
    let mut guard = DivergenceGuard::new(opts.divergence_factor, r0);
    let mut residual = r0;
    let mut t = 0;
    let mut status = if r0 <= opts.tol {
        Status::Converged
    } else {
        Status::MaxIter
    };
    while status != Status::Converged && t < opts.max_iter {
        if clock.exceeded(opts.wall_limit_s) {
            status = Status::Timeout;
            break;
        }
        let ys = solvers
            .par_iter_mut()
            .map(|s| s.update(&x))
            .collect::<Result<Vec<_>>>()?;
        for (s, y) in solvers.iter().zip(&ys) {
            s.sys.restrict_into(y, &mut x);
        }
        t += 1;
        residual = residual_inf(h, &x, f, None)?;
        history.push(residual);
        if let Some(it) = iterates.as_mut() {
            it.push(x.clone());
        }
        let done = residual <= opts.tol;
        if t % opts.log_every == 0 || done || t == opts.max_iter {
            trace.push(TracePoint {
                t,
                time_s: clock.secs(),
                residual,
                worker_id: None,
                local_iter: None,
            });
        }
        guard.check(t, residual)?;
        if done {
            status = Status::Converged;
        }
    }
    Ok(IterationState {
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
    })
}

/// Empirical contraction factor of a recorded run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateMeasurement {
    /// Largest one-step error ratio over the tail.
    pub rate: f64,
    pub tail_ratios: usize,
    /// Fewer than five ratios were available.
    pub inconclusive: bool,
}

/// Measures `sup_t ||x^(t+1) - x*||_inf / ||x^(t) - x*||_inf` over the tail,
/// which starts with the step that first brings the residual below
/// `1e-2` times its initial value. Ratios are taken while the error is at
/// least `1e-4 ||x*||_inf`, below which rounding in the block solves
/// dominates the measured ratio.
pub fn verify_linear_rate(state: &IterationState, x_star: &[f64]) -> Result<RateMeasurement> {
    let iterates = state
        .iterates
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("rate verification needs recorded iterates".into()))?;
    let errors: Vec<f64> = iterates
        .iter()
        .map(|x| crate::diff_norm_inf(x, x_star))
        .collect();
    let r0 = state.initial_residual;
    let entry = state
        .residual_history
        .iter()
        .position(|&r| r < 1e-2 * r0)
        .unwrap_or(state.residual_history.len());
    let floor = 1e-4 * crate::norm_inf(x_star);
    let mut rate: f64 = 0.0;
    let mut count = 0;
    for t in entry.saturating_sub(1)..errors.len().saturating_sub(1) {
        if errors[t] < floor || errors[t] == 0.0 {
            continue;
        }
        rate = rate.max(errors[t + 1] / errors[t]);
        count += 1;
    }
    Ok(RateMeasurement {
        rate,
        tail_ratios: count,
        inconclusive: count < 5,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::direct_solve;
    use crate::graph::{expand_overlap, Graph, Partition};
    use crate::spectral::{build_iteration_matrices, rate_bound, EigenMethod};

    fn path(n: usize) -> Graph {
        let e: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        Graph::from_edges(n, &e).unwrap()
    }

    fn chunks(n: usize, k: usize) -> Partition {
        Partition::new(k, (0..n).map(|i| i * k / n).collect()).unwrap()
    }

    #[test]
    fn two_by_two_halves_the_error() {
        let g = path(2);
        let h = StructuredMatrix::from_triplets(
            2,
            &[(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 2.0)],
        )
        .unwrap();
        let ob = expand_overlap(&g, &chunks(2, 2), 0).unwrap();
        let opts = SolveOptions::new(1e-12, 200).with_iterates();
        let st = sync_solve(&h, &[3.0, 3.0], &ob, SubproblemBackend::Factor, &opts).unwrap();
        assert!(st.converged());
        assert!(crate::diff_norm_inf(&st.x, &[1.0, 1.0]) < 1e-12);
        // x1 = 1.5, then errors 0.5, 0.25, ...
        let its = st.iterates.as_ref().unwrap();
        assert!(crate::diff_norm_inf(&its[1], &[1.5, 1.5]) < 1e-15);
        assert!(crate::diff_norm_inf(&its[2], &[0.75, 0.75]) < 1e-15);
        let m = verify_linear_rate(&st, &[1.0, 1.0]).unwrap();
        assert!((m.rate - 0.5).abs() < 1e-12);
        assert!(!m.inconclusive);
    }

    #[test]
    fn single_block_is_one_step() {
        let g = path(10);
        let h = StructuredMatrix::tridiagonal(10, 2.0, -1.0);
        let f: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
        let ob = expand_overlap(&g, &Partition::single(10), 0).unwrap();
        let st = sync_solve(
            &h,
            &f,
            &ob,
            SubproblemBackend::Factor,
            &SolveOptions::new(1e-10, 50).with_iterates(),
        )
        .unwrap();
        assert_eq!(st.t, 1);
        assert_eq!(st.trace.len(), 1);
        let xs = direct_solve(&h, &f).unwrap();
        assert!(crate::diff_norm_inf(&st.x, &xs) < 1e-12);
        let m = verify_linear_rate(&st, &xs).unwrap();
        assert!(m.rate < 1e-10);
        assert!(m.inconclusive);
    }

    #[test]
    fn overlap_reduces_iterations_on_path() {
        let n = 100;
        let g = path(n);
        let h = StructuredMatrix::tridiagonal(n, 2.0, -1.0);
        let f = vec![1.0; n];
        let mut counts = Vec::new();
        for omega in 0..=3 {
            let ob = expand_overlap(&g, &chunks(n, 4), omega).unwrap();
            let st = sync_solve(
                &h,
                &f,
                &ob,
                SubproblemBackend::Factor,
                &SolveOptions::new(1e-8, 200_000),
            )
            .unwrap();
            assert!(st.converged());
            counts.push(st.t);
        }
        assert!(counts.windows(2).all(|w| w[1] < w[0]), "{counts:?}");
    }

    #[test]
    fn measured_rate_within_bound() {
        let n = 100;
        let g = path(n);
        let h = StructuredMatrix::tridiagonal(n, 4.0, -1.0);
        let f: Vec<f64> = (0..n).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let ob = expand_overlap(&g, &chunks(n, 4), 2).unwrap();
        let rb = rate_bound(&h, &g, &ob, EigenMethod::ExactDense).unwrap();
        assert!(rb.valid);
        let st = sync_solve(
            &h,
            &f,
            &ob,
            SubproblemBackend::Factor,
            &SolveOptions::new(1e-13, 1000).with_iterates(),
        )
        .unwrap();
        let xs = direct_solve(&h, &f).unwrap();
        let m = verify_linear_rate(&st, &xs).unwrap();
        assert!(m.rate <= rb.alpha + 1e-9, "{} > {}", m.rate, rb.alpha);
    }

    #[test]
    fn backends_agree() {
        let n = 40;
        let g = path(n);
        let h = StructuredMatrix::tridiagonal(n, 3.0, -1.0);
        let f: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
        let ob = expand_overlap(&g, &chunks(n, 3), 1).unwrap();
        let opts = SolveOptions::new(1e-10, 500).with_iterates();
        let a = sync_solve(&h, &f, &ob, SubproblemBackend::Factor, &opts).unwrap();
        let b = sync_solve(
            &h,
            &f,
            &ob,
            SubproblemBackend::Cg {
                tol: 1e-12,
                max_iter: 1000,
            },
            &opts,
        )
        .unwrap();
        for (u, v) in a.iterates.unwrap().iter().zip(b.iterates.unwrap().iter()) {
            assert!(crate::diff_norm_inf(u, v) < 1e-6);
        }
    }

    #[test]
    fn thread_count_does_not_change_trace() {
        let n = 60;
        let g = path(n);
        let h = StructuredMatrix::tridiagonal(n, 2.2, -1.0);
        let f: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).cos()).collect();
        let ob = expand_overlap(&g, &chunks(n, 5), 1).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    sync_solve(
                        &h,
                        &f,
                        &ob,
                        SubproblemBackend::Factor,
                        &SolveOptions::new(1e-10, 1000),
                    )
                    .unwrap()
                })
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.residual_history, b.residual_history);
        assert_eq!(a.x, b.x);
    }

    #[test]
    fn divergence_detected() {
        // indefinite-coupled instance with PD diagonal blocks: block Jacobi
        // with spectral radius 2
        let g = path(2);
        let h = StructuredMatrix::from_triplets(
            2,
            &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)],
        )
        .unwrap();
        let ob = expand_overlap(&g, &chunks(2, 2), 0).unwrap();
        let it = build_iteration_matrices(&h, &ob).unwrap();
        assert!(it.spectral_radius >= 1.0);
        let err = sync_solve(
            &h,
            &[1.0, 0.0],
            &ob,
            SubproblemBackend::Factor,
            &SolveOptions::new(1e-8, 1000),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Diverging { .. }));
    }

    #[test]
    fn block_failure_names_block() {
        let g = path(3);
        let h = StructuredMatrix::from_triplets(
            3,
            &[
                (0, 0, 1.0),
                (1, 1, -1.0),
                (2, 2, 1.0),
                (0, 1, 0.1),
                (1, 0, 0.1),
            ],
        )
        .unwrap();
        let ob = expand_overlap(&g, &Partition::new(2, vec![0, 1, 1]).unwrap(), 0).unwrap();
        let err = sync_solve(
            &h,
            &[1.0; 3],
            &ob,
            SubproblemBackend::Factor,
            &SolveOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::BlockNotPositiveDefinite { k: 1 }));
    }

    #[test]
    fn rejects_bad_options() {
        let g = path(2);
        let h = StructuredMatrix::identity(2);
        let ob = expand_overlap(&g, &Partition::single(2), 0).unwrap();
        let mut o = SolveOptions::new(0.0, 10);
        assert!(sync_solve(&h, &[1.0, 1.0], &ob, SubproblemBackend::Factor, &o).is_err());
        o.tol = 1e-8;
        o.x0 = Some(vec![0.0]);
        assert!(sync_solve(&h, &[1.0, 1.0], &ob, SubproblemBackend::Factor, &o).is_err());
    }
}

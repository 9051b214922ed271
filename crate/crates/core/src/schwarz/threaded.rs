use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use parking_lot::RwLock;

use super::{
    build_solvers, BlockSolver, Clock, IterationState, SolveOptions, Status, SubproblemBackend,
    TracePoint,
};
use crate::error::Result;
use crate::graph::OverlapBlocks;
use crate::matrix::{residual_inf, StructuredMatrix};

/// Published state of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BoardEntry {
    /// Values on the block's owned vertices, in `interior` order.
    pub values: Vec<f64>,
    /// Local error `||(Hx - f)|_{V_k^omega}||_inf` seen by the publisher.
    pub eps: f64,
    pub version: u64,
}

/// Shared memory region of the threaded runtime: one entry per block,
/// written under an exclusive lock by its owner and read under shared
/// locks by everybody else, so a reader always sees a matching
/// `(values, eps, version)` triple.
#[derive(Debug)]
pub struct PublicBoard {
    entries: Vec<RwLock<BoardEntry>>,
}

impl PublicBoard {
    pub fn new(blocks: &OverlapBlocks, x: &[f64]) -> Self {
        let entries = blocks
            .interior
            .iter()
            .map(|own| {
                RwLock::new(BoardEntry {
                    values: own.iter().map(|&v| x[v]).collect(),
                    eps: f64::INFINITY,
                    version: 0,
                })
            })
            .collect();
        Self { entries }
    }

    pub fn k(&self) -> usize {
        self.entries.len()
    }

    pub fn publish(&self, k: usize, values: &[f64], eps: f64) {
        let mut e = self.entries[k].write();
        e.values.copy_from_slice(values);
        e.eps = eps;
        e.version += 1;
    }

    pub fn read(&self, k: usize) -> BoardEntry {
        self.entries[k].read().clone()
    }

    /// Copies block `k`'s values into `x` and returns its `(eps, version)`.
    pub fn read_into(&self, k: usize, interior: &[usize], x: &mut [f64]) -> (f64, u64) {
        let e = self.entries[k].read();
        for (&v, &val) in interior.iter().zip(&e.values) {
            x[v] = val;
        }
        (e.eps, e.version)
    }

    pub fn assemble(&self, blocks: &OverlapBlocks) -> Vec<f64> {
        let mut x = vec![0.0; blocks.n_vertices()];
        for (k, own) in blocks.interior.iter().enumerate() {
            self.read_into(k, own, &mut x);
        }
        x
    }

    pub fn max_eps(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.read().eps)
            .fold(0.0, f64::max)
    }
}

struct Shared<'a> {
    board: &'a PublicBoard,
    blocks: &'a OverlapBlocks,
    clock: &'a Clock,
    stop: AtomicBool,
    timed_out: AtomicBool,
    observed: Vec<AtomicBool>,
    counter: AtomicUsize,
    tol: f64,
    wall_limit_s: Option<f64>,
    max_local: usize,
    log_every: usize,
}

/// Runs one worker until the global stop flag is raised.
fn worker(
    shared: &Shared<'_>,
    k: usize,
    solver: &mut BlockSolver,
    mut x: Vec<f64>,
    h: &StructuredMatrix,
    f: &[f64],
) -> Result<(Vec<TracePoint>, usize)> {
    let own = &shared.blocks.interior[k];
    let mut values: Vec<f64> = own.iter().map(|&v| x[v]).collect();
    let mut eps = f64::INFINITY;
    let mut local_iter = 0;
    let mut trace = Vec::new();
    let block_rows = solver.sys.block.clone();
    while !shared.stop.load(Ordering::Acquire) {
        if shared.clock.exceeded(shared.wall_limit_s) {
            shared.timed_out.store(true, Ordering::Release);
            shared.stop.store(true, Ordering::Release);
            break;
        }
        if local_iter >= shared.max_local {
            shared.stop.store(true, Ordering::Release);
            break;
        }
        shared.board.publish(k, &values, eps);
        let mut global: f64 = 0.0;
        for (p, interior) in shared.blocks.interior.iter().enumerate() {
            if p != k {
                let (e, _) = shared.board.read_into(p, interior, &mut x);
                global = global.max(e);
            }
        }
        eps = residual_inf(h, &x, f, Some(&block_rows))?;
        let y = solver.update(&x)?;
        solver.sys.restrict_into(&y, &mut x);
        for (slot, &v) in values.iter_mut().zip(own) {
            *slot = x[v];
        }
        local_iter += 1;
        let t = shared.counter.fetch_add(1, Ordering::AcqRel) + 1;
        if local_iter % shared.log_every == 0 {
            trace.push(TracePoint {
                t,
                time_s: shared.clock.secs(),
                residual: eps,
                worker_id: Some(k),
                local_iter: Some(local_iter),
            });
        }
        global = global.max(eps);
        shared.observed[k].store(global <= shared.tol, Ordering::Release);
        if shared.observed.iter().all(|o| o.load(Ordering::Acquire)) {
            shared.stop.store(true, Ordering::Release);
        }
        // Without this a worker can spin on stale peers when threads outnumber cores.
        std::thread::yield_now();
    }
    shared.board.publish(k, &values, eps);
    Ok((trace, local_iter))
}

/// Threaded asynchronous scheme, one OS thread per block.
///
/// Each worker repeats: publish its owned values and last local error,
/// read every peer, compute its local error on the stale view (before the
/// update), solve its block, and test `max_k eps_k <= tol`. Workers stop
/// once all of them have observed the test passing. Because the errors are
/// stale, the exact residual of the assembled board is recomputed; if it
/// still exceeds `tol` another round is started from the board contents.
///
/// Trace rows carry the worker's local error; the final row holds the
/// exact global residual.
pub fn async_solve_threaded(
    h: &StructuredMatrix,
    f: &[f64],
    blocks: &OverlapBlocks,
    backend: SubproblemBackend,
    opts: &SolveOptions,
) -> Result<IterationState> {
    opts.validate(h.n())?;
    let mut solvers = build_solvers(h, f, blocks, backend)?;
    let clock = Clock::start();
    let x0 = opts.start(h.n());
    let r0 = residual_inf(h, &x0, f, None)?;
    let board = PublicBoard::new(blocks, &x0);
    let mut trace = Vec::new();
    let mut history = vec![r0];
    let mut residual = r0;
    let mut rounds = 0;
    let mut total_local = vec![0usize; blocks.k()];
    let mut status = if r0 <= opts.tol {
        Status::Converged
    } else {
        Status::MaxIter
    };
    let counter = AtomicUsize::new(0);
    while status != Status::Converged {
        let remaining = opts
            .max_iter
            .saturating_sub(total_local.iter().copied().max().unwrap_or(0));
        if remaining == 0 {
            break;
        }
        if clock.exceeded(opts.wall_limit_s) {
            status = Status::Timeout;
            break;
        }
        rounds += 1;
        let shared = Shared {
            board: &board,
            blocks,
            clock: &clock,
            stop: AtomicBool::new(false),
            timed_out: AtomicBool::new(false),
            observed: (0..blocks.k()).map(|_| AtomicBool::new(false)).collect(),
            counter: AtomicUsize::new(counter.load(Ordering::Acquire)),
            tol: opts.tol,
            wall_limit_s: opts.wall_limit_s,
            max_local: remaining,
            log_every: opts.log_every,
        };
        let start = board.assemble(blocks);
        let results: Vec<Result<(Vec<TracePoint>, usize)>> = std::thread::scope(|s| {
            let handles: Vec<_> = solvers
                .iter_mut()
                .enumerate()
                .map(|(k, solver)| {
                    let shared = &shared;
                    let x = start.clone();
                    s.spawn(move || {
                        let out = worker(shared, k, solver, x, h, f);
                        if out.is_err() {
                            shared.stop.store(true, Ordering::Release);
                        }
                        out
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|hd| hd.join().expect("worker panicked"))
                .collect()
        });
        for (k, r) in results.into_iter().enumerate() {
            let (rows, n_local) = r?;
            trace.extend(rows);
            total_local[k] += n_local;
        }
        counter.store(shared.counter.load(Ordering::Acquire), Ordering::Release);
        let x = board.assemble(blocks);
        residual = residual_inf(h, &x, f, None)?;
        history.push(residual);
        if residual <= opts.tol {
            status = Status::Converged;
        } else if shared.timed_out.load(Ordering::Acquire) {
            status = Status::Timeout;
        }
    }
    trace.sort_by_key(|p| p.t);
    let t = counter.load(Ordering::Acquire);
    trace.push(TracePoint {
        t: t.max(1),
        time_s: clock.secs(),
        residual,
        worker_id: None,
        local_iter: None,
    });
    Ok(IterationState {
        x: board.assemble(blocks),
        t,
        residual,
        initial_residual: r0,
        residual_history: history,
        trace,
        status,
        iterates: None,
        epochs: vec![0],
        max_staleness: 0,
        rounds,
    })
}

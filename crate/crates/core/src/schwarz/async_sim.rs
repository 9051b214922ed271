use std::collections::VecDeque;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    build_solvers, Clock, DivergenceGuard, IterationState, SolveOptions, Status, SubproblemBackend,
    TracePoint,
};
use crate::error::{Error, Result};
use crate::graph::OverlapBlocks;
use crate::matrix::{residual_inf, StructuredMatrix};

/// One replayed step: which blocks update and the delays `t - tau` they see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleStep {
    pub update: Vec<usize>,
    /// `delays[i][k']` for block `update[i]` reading block `k'`.
    pub delays: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DelayKind {
    Zero,
    BoundedRandom {
        max_delay: usize,
        seed: u64,
    },
    /// Finite replay; overrides the update sets.
    Trace {
        steps: Vec<ScheduleStep>,
    },
}

/// Which blocks update at each global step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum UpdateSets {
    All,
    /// Block `k` updates when `t % period[k] == 0`.
    Periodic {
        period: Vec<usize>,
    },
    /// Each block skips with probability 1/2 but never more than `max_gap`
    /// steps in a row.
    RandomSkip {
        max_gap: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelaySchedule {
    pub kind: DelayKind,
    pub update_sets: UpdateSets,
}

impl DelaySchedule {
    pub fn zero() -> Self {
        Self {
            kind: DelayKind::Zero,
            update_sets: UpdateSets::All,
        }
    }

    pub fn bounded_random(max_delay: usize, seed: u64) -> Self {
        Self {
            kind: DelayKind::BoundedRandom { max_delay, seed },
            update_sets: UpdateSets::All,
        }
    }

    pub fn with_update_sets(mut self, sets: UpdateSets) -> Self {
        self.update_sets = sets;
        self
    }

    /// Reads a replay schedule: a JSON array of [`ScheduleStep`].
    pub fn from_trace_file(path: &Path) -> Result<Self> {
        let steps: Vec<ScheduleStep> =
            serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        Ok(Self {
            kind: DelayKind::Trace { steps },
            update_sets: UpdateSets::All,
        })
    }

    /// Largest delay that can be served.
    pub fn max_delay(&self) -> usize {
        match &self.kind {
            DelayKind::Zero => 0,
            DelayKind::BoundedRandom { max_delay, .. } => *max_delay,
            DelayKind::Trace { steps } => steps
                .iter()
                .flat_map(|s| s.delays.iter().flatten())
                .copied()
                .max()
                .unwrap_or(0),
        }
    }

    fn validate(&self, k: usize) -> Result<()> {
        match &self.update_sets {
            UpdateSets::Periodic { period } if period.len() != k || period.contains(&0) => {
                return Err(Error::InvalidInput(
                    "periodic update sets need one positive period per block".into(),
                ));
            }
            UpdateSets::RandomSkip { max_gap: 0, .. } => {
                return Err(Error::InvalidInput("max_gap must be at least 1".into()));
            }
            _ => {}
        }
        if let DelayKind::Trace { steps } = &self.kind {
            for (t, s) in steps.iter().enumerate() {
                if s.delays.len() != s.update.len()
                    || s.delays.iter().any(|d| d.len() != k)
                    || s.update.iter().any(|&b| b >= k)
                {
                    return Err(Error::Parse(format!(
                        "schedule step {t} is malformed for {k} blocks"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Stateful generator of (update set, delays) per step.
struct Scheduler<'a> {
    schedule: &'a DelaySchedule,
    k: usize,
    delay_rng: Option<ChaCha8Rng>,
    skip_rng: Option<ChaCha8Rng>,
    gap: Vec<usize>,
}

impl<'a> Scheduler<'a> {
    fn new(schedule: &'a DelaySchedule, k: usize) -> Self {
        let delay_rng = match schedule.kind {
            DelayKind::BoundedRandom { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        let skip_rng = match schedule.update_sets {
            UpdateSets::RandomSkip { seed, .. } => {
                Some(ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15))
            }
            _ => None,
        };
        Self {
            schedule,
            k,
            delay_rng,
            skip_rng,
            gap: vec![0; k],
        }
    }

    /// Blocks updating at step `t` and, for each, the delay per source block.
    fn step(&mut self, t: usize) -> Result<Vec<(usize, Vec<usize>)>> {
        if let DelayKind::Trace { steps } = &self.schedule.kind {
            let s = steps.get(t).ok_or(Error::ScheduleExhausted { step: t })?;
            return Ok(s
                .update
                .iter()
                .zip(&s.delays)
                .map(|(&b, d)| (b, d.iter().map(|&x| x.min(t)).collect()))
                .collect());
        }
        let active: Vec<usize> = match &self.schedule.update_sets {
            UpdateSets::All => (0..self.k).collect(),
            UpdateSets::Periodic { period } => (0..self.k)
                .filter(|&b| t.is_multiple_of(period[b]))
                .collect(),
            UpdateSets::RandomSkip { max_gap, .. } => {
                let rng = self.skip_rng.as_mut().expect("seeded");
                let mut out = Vec::new();
                for b in 0..self.k {
                    if self.gap[b] >= *max_gap || rng.random_bool(0.5) {
                        self.gap[b] = 0;
                        out.push(b);
                    } else {
                        self.gap[b] += 1;
                    }
                }
                out
            }
        };
        Ok(active
            .into_iter()
            .map(|b| {
                let delays = match (&self.schedule.kind, self.delay_rng.as_mut()) {
                    (DelayKind::BoundedRandom { max_delay, .. }, Some(rng)) => {
                        let cap = (*max_delay).min(t);
                        (0..self.k).map(|_| rng.random_range(0..=cap)).collect()
                    }
                    _ => vec![0; self.k],
                };
                (b, delays)
            })
            .collect())
    }
}

/// Operational epoch boundaries: with delays bounded by `d`, every update
/// at a step `s >= t_l + d` reads data no older than `t_l`, so once each
/// block has updated in `[t_l + d, u]` the iterate from `u + 1` on is one
/// contraction closer to the fixed point. `t_{l+1} = u + 1`.
struct EpochTracker {
    d: usize,
    boundaries: Vec<usize>,
    seen: Vec<bool>,
    remaining: usize,
}

impl EpochTracker {
    fn new(k: usize, d: usize) -> Self {
        Self {
            d,
            boundaries: vec![0],
            seen: vec![false; k],
            remaining: k,
        }
    }

    fn record(&mut self, t: usize, updated: &[usize]) {
        let start = *self.boundaries.last().expect("nonempty") + self.d;
        if t < start {
            return;
        }
        for &b in updated {
            if !self.seen[b] {
                self.seen[b] = true;
                self.remaining -= 1;
            }
        }
        if self.remaining == 0 {
            self.boundaries.push(t + 1);
            self.seen.iter_mut().for_each(|s| *s = false);
            self.remaining = self.seen.len();
        }
    }
}

/// Deterministic simulation of the asynchronous scheme.
///
/// At global step `t` each block in the step's update set recomputes its
/// owned values from the stale vector whose part owned by block `k'` is
/// taken from `x^(tau_{k,k'}(t))`, `tau = t - delay`. Other blocks carry
/// over. With zero delays and all blocks active every step the iterates are
/// bitwise identical to [`super::sync_solve`].
pub fn async_solve_sim(
    h: &StructuredMatrix,
    f: &[f64],
    blocks: &OverlapBlocks,
    backend: SubproblemBackend,
    schedule: &DelaySchedule,
    opts: &SolveOptions,
) -> Result<IterationState> {
    opts.validate(h.n())?;
    let k = blocks.k();
    schedule.validate(k)?;
    let mut solvers = build_solvers(h, f, blocks, backend)?;
    let clock = Clock::start();
    let n = h.n();
    let mut x = opts.start(n);
    let r0 = residual_inf(h, &x, f, None)?;
    let depth = schedule.max_delay();
    // history[i] = x^(t - i)
    let mut history: VecDeque<Vec<f64>> = VecDeque::with_capacity(depth + 1);
    history.push_front(x.clone());
    let mut residual_history = vec![r0];
    let mut iterates = opts.record_iterates.then(|| vec![x.clone()]);
    let mut trace = Vec::new();
    let mut guard = DivergenceGuard::with_lag(opts.divergence_factor, r0, depth + 1);
    let mut epochs = EpochTracker::new(k, depth);
    let mut scheduler = Scheduler::new(schedule, k);
    let mut residual = r0;
    let mut max_staleness = 0;
    let mut stale = vec![0.0; n];
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
        let plan = scheduler.step(t)?;
        let mut next = x.clone();
        let mut updated = Vec::with_capacity(plan.len());
        for (b, delays) in plan {
            let y = if delays.iter().all(|&d| d == 0) {
                solvers[b].update(&x)?
            } else {
                for e in &solvers[b].sys.h_cross {
                    let src = blocks.owner[e.global_col];
                    let d = delays[src];
                    max_staleness = max_staleness.max(d);
                    stale[e.global_col] = history[d][e.global_col];
                }
                solvers[b].update(&stale)?
            };
            solvers[b].sys.restrict_into(&y, &mut next);
            updated.push(b);
        }
        epochs.record(t, &updated);
        x = next;
        t += 1;
        if history.len() == depth + 1 {
            history.pop_back();
        }
        history.push_front(x.clone());
        residual = residual_inf(h, &x, f, None)?;
        residual_history.push(residual);
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
        residual_history,
        trace,
        status,
        iterates,
        epochs: epochs.boundaries,
        max_staleness,
        rounds: 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{expand_overlap, Graph, Partition};
    use crate::schwarz::sync_solve;
    use crate::spectral::build_iteration_matrices;

    fn path(n: usize) -> Graph {
        let e: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        Graph::from_edges(n, &e).unwrap()
    }

    fn chunks(n: usize, k: usize) -> Partition {
        Partition::new(k, (0..n).map(|i| i * k / n).collect()).unwrap()
    }

    fn two_by_two() -> StructuredMatrix {
        StructuredMatrix::from_triplets(2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 2.0)])
            .unwrap()
    }

    #[test]
    fn zero_delay_matches_sync_bitwise() {
        let n = 50;
        let g = path(n);
        let h = StructuredMatrix::tridiagonal(n, 2.1, -1.0);
        let f: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let ob = expand_overlap(&g, &chunks(n, 4), 1).unwrap();
        for backend in [SubproblemBackend::Factor, SubproblemBackend::cg()] {
            let opts = SolveOptions::new(1e-10, 5000);
            let a = sync_solve(&h, &f, &ob, backend, &opts).unwrap();
            let b = async_solve_sim(&h, &f, &ob, backend, &DelaySchedule::zero(), &opts).unwrap();
            assert_eq!(a.residual_history, b.residual_history);
            assert_eq!(a.x, b.x);
        }
    }

    #[test]
    fn two_by_two_with_delay_converges() {
        let g = path(2);
        let ob = expand_overlap(&g, &chunks(2, 2), 0).unwrap();
        let st = async_solve_sim(
            &two_by_two(),
            &[3.0, 3.0],
            &ob,
            SubproblemBackend::Factor,
            &DelaySchedule::bounded_random(1, 7),
            &SolveOptions::new(1e-12, 1000),
        )
        .unwrap();
        assert!(st.converged());
        assert!(crate::diff_norm_inf(&st.x, &[1.0, 1.0]) < 1e-11);
        assert!(st.max_staleness <= 1);
    }

    #[test]
    fn delays_slow_down_path() {
        let n = 100;
        let g = path(n);
        let h = StructuredMatrix::tridiagonal(n, 2.0, -1.0);
        let f = vec![1.0; n];
        let ob = expand_overlap(&g, &chunks(n, 4), 1).unwrap();
        let opts = SolveOptions::new(1e-8, 200_000);
        let s = sync_solve(&h, &f, &ob, SubproblemBackend::Factor, &opts).unwrap();
        let a = async_solve_sim(
            &h,
            &f,
            &ob,
            SubproblemBackend::Factor,
            &DelaySchedule::bounded_random(5, 3),
            &opts,
        )
        .unwrap();
        assert!(a.converged());
        assert!(a.t >= s.t);
        assert!(a.max_staleness <= 5);
    }

    #[test]
    fn epoch_envelope_holds() {
        let n = 30;
        let g = path(n);
        let h = StructuredMatrix::tridiagonal(n, 3.0, -1.0);
        let f: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let ob = expand_overlap(&g, &chunks(n, 3), 1).unwrap();
        let norm = build_iteration_matrices(&h, &ob).unwrap().inf_norm;
        assert!(norm < 1.0);
        let xs = crate::factor::direct_solve(&h, &f).unwrap();
        let sched = DelaySchedule::bounded_random(4, 11).with_update_sets(UpdateSets::RandomSkip {
            max_gap: 3,
            seed: 5,
        });
        let st = async_solve_sim(
            &h,
            &f,
            &ob,
            SubproblemBackend::Factor,
            &sched,
            &SolveOptions::new(1e-12, 5000).with_iterates(),
        )
        .unwrap();
        let its = st.iterates.as_ref().unwrap();
        let e0 = crate::diff_norm_inf(&its[0], &xs);
        assert!(st.epochs.len() > 3);
        for (t, x) in its.iter().enumerate() {
            let l = st.epochs_completed(t) as i32;
            assert!(crate::diff_norm_inf(x, &xs) <= norm.powi(l) * e0 * (1.0 + 1e-9) + 1e-12);
        }
    }

    #[test]
    fn periodic_sets_and_trace_replay() {
        let g = path(2);
        let ob = expand_overlap(&g, &chunks(2, 2), 0).unwrap();
        let sched =
            DelaySchedule::zero().with_update_sets(UpdateSets::Periodic { period: vec![1, 3] });
        let st = async_solve_sim(
            &two_by_two(),
            &[3.0, 3.0],
            &ob,
            SubproblemBackend::Factor,
            &sched,
            &SolveOptions::new(1e-10, 1000),
        )
        .unwrap();
        assert!(st.converged());

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sched.json");
        let steps = vec![
            ScheduleStep {
                update: vec![0, 1],
                delays: vec![vec![0, 0], vec![0, 0]],
            },
            ScheduleStep {
                update: vec![1],
                delays: vec![vec![1, 1]],
            },
        ];
        std::fs::write(&p, serde_json::to_string(&steps).unwrap()).unwrap();
        let sched = DelaySchedule::from_trace_file(&p).unwrap();
        let err = async_solve_sim(
            &two_by_two(),
            &[3.0, 3.0],
            &ob,
            SubproblemBackend::Factor,
            &sched,
            &SolveOptions::new(1e-10, 100),
        )
        .unwrap_err();
        assert!(matches!(err, Error::ScheduleExhausted { step: 2 }));
    }
}

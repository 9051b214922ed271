//! Command-line driver: problem generation, partitioning, bounds, solves
//! and solver comparisons, writing CSV traces and JSON reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod config;

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use schwarz_net::admm::{admm_solve, build_lifted};
use schwarz_net::constrained::{constrained_sync_solve, ConstrainedProblem};
use schwarz_net::factor::direct_solve;
use schwarz_net::graph::{
    expand_overlap, greedy_partition, partition_stats, BalanceMode, OverlapBlocks,
};
use schwarz_net::io::{
    read_bounds, read_bundle, read_network_csv, read_partition, write_admm_trace_csv,
    write_estimation_bundle, write_json, write_matrix_bundle, write_partition, write_trace_csv,
    Bundle, BundleConfig,
};
use schwarz_net::problems::{
    generate_network, simulate_measurements, MeasurementConfig, NetworkKind, TruthMode,
};
use schwarz_net::schwarz::{async_solve_sim, async_solve_threaded, sync_solve, DelaySchedule};
use schwarz_net::spectral::{build_iteration_matrices, rate_bound, ITERATION_MATRIX_LIMIT};
use schwarz_net::{
    diff_norm_inf, Error, Graph, IterationState, Partition, SolveOptions, Status, StructuredMatrix,
    SubproblemBackend,
};

pub use config::{Backend, Command, EigMethod, GenerateConfig, Mode, Network, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_TIMEOUT: i32 = 4;

/// Largest system for which reports include the direct-solve error.
const DIRECT_CHECK_LIMIT: usize = 20_000;

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Diverging { .. } => EXIT_DIVERGED,
        _ => EXIT_INPUT,
    }
}

/// Machine-readable error body.
pub fn error_json(e: &Error) -> Value {
    let kind = match e {
        Error::InvalidInput(_) => "invalid_input",
        Error::DimensionMismatch(_) => "dimension_mismatch",
        Error::InfiniteBandwidth { .. } => "infinite_bandwidth",
        Error::NotPositiveDefinite { .. } => "not_positive_definite",
        Error::BlockNotPositiveDefinite { .. } => "block_not_positive_definite",
        Error::NotCertifiable { .. } => "not_certifiable",
        Error::Diverging { .. } => "diverging",
        Error::SpectrumOutsideDisk { .. } => "spectrum_outside_disk",
        Error::ScheduleExhausted { .. } => "schedule_exhausted",
        Error::OrphanEntry { .. } => "orphan_entry",
        Error::Parse(_) => "parse",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
        Error::Csv(_) => "csv",
    };
    json!({ "error": { "kind": kind, "message": e.to_string() }, "exit_code": exit_code(e) })
}

/// Runs one command and returns the process exit code. Artifacts go to
/// `cfg.output_dir`; failures also leave `error.json` there.
pub fn run(cfg: &RunConfig) -> Result<i32, Error> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    match cfg.command {
        Command::Generate => generate(cfg),
        Command::Partition => partition(cfg),
        Command::Bound => bound(cfg),
        Command::Solve => solve(cfg),
        Command::Admm => admm(cfg),
        Command::Compare => compare(cfg),
    }
}

/// [`run`] with errors reported as JSON on stderr and in `error.json`.
pub fn run_and_report(cfg: &RunConfig) -> i32 {
    match run(cfg) {
        Ok(code) => code,
        Err(e) => {
            let body = error_json(&e);
            eprintln!("{body}");
            if cfg.output_dir.is_dir() {
                let _ = write_json(&cfg.output_dir.join("error.json"), &body);
            }
            exit_code(&e)
        }
    }
}

fn problem(cfg: &RunConfig) -> Result<Bundle, Error> {
    read_bundle(cfg.problem_path.as_deref().expect("validated"))
}

fn make_partition(cfg: &RunConfig, g: &Graph) -> Result<Partition, Error> {
    if let Some(path) = &cfg.partition_path {
        let p = read_partition(path)?;
        if p.n_vertices() != g.n_vertices() {
            return Err(Error::DimensionMismatch(
                "partition does not match the graph".into(),
            ));
        }
        return Ok(p);
    }
    let mode = match &cfg.balance_weights {
        Some(w) => BalanceMode::Skewed(w.clone()),
        None => BalanceMode::Uniform,
    };
    greedy_partition(g, cfg.k, &mode, cfg.seed)
}

fn backend(cfg: &RunConfig) -> SubproblemBackend {
    match cfg.backend {
        Backend::Factor => SubproblemBackend::Factor,
        Backend::Cg => SubproblemBackend::Cg {
            tol: cfg.cg_tol,
            max_iter: 10_000,
        },
    }
}

fn solve_options(cfg: &RunConfig) -> SolveOptions {
    let mut o = SolveOptions::new(cfg.tol, cfg.max_iter);
    o.log_every = cfg.log_every;
    o.wall_limit_s = cfg.wall_limit_s;
    o
}

fn status_str(s: Status) -> &'static str {
    match s {
        Status::Converged => "converged",
        Status::MaxIter => "max_iter",
        Status::Timeout => "timeout",
    }
}

fn status_exit(s: Status) -> i32 {
    if s == Status::Timeout {
        EXIT_TIMEOUT
    } else {
        EXIT_OK
    }
}

fn generate(cfg: &RunConfig) -> Result<i32, Error> {
    let gc = &cfg.generate;
    let out = &cfg.output_dir;
    let (g, y, kind) = match &gc.network {
        Network::Demo2x2 => {
            let g = Graph::from_edges(2, &[(0, 1)])?;
            let h = StructuredMatrix::from_triplets(
                2,
                &[(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 2.0)],
            )?;
            write_matrix_bundle(out, &g, &h, &[3.0, 3.0])?;
            write_json(
                &out.join("report.json"),
                &json!({ "kind": "matrix", "n": 2, "edges": 1 }),
            )?;
            return Ok(EXIT_OK);
        }
        Network::Lattice { rows, cols } => {
            let kind = NetworkKind::Lattice2d {
                rows: *rows,
                cols: *cols,
            };
            let (g, y) = generate_network(&kind, (gc.y_min, gc.y_max), cfg.seed)?;
            (g, y, Some(kind))
        }
        Network::Tree { n, chords } => {
            let kind = NetworkKind::RandomTreePlusChords {
                n: *n,
                chords: *chords,
            };
            let (g, y) = generate_network(&kind, (gc.y_min, gc.y_max), cfg.seed)?;
            (g, y, Some(kind))
        }
        Network::Csv { path } => {
            let (g, y) = read_network_csv(path)?;
            (g, y, None)
        }
    };
    let mc = MeasurementConfig {
        c: gc.c,
        measured_fraction: gc.measured_fraction,
        seed: cfg.seed,
        truth: if gc.truth_scale > 0.0 {
            TruthMode::RandomSmooth {
                scale: gc.truth_scale,
            }
        } else {
            TruthMode::Zero
        },
        noise: gc.noise,
    };
    let p = simulate_measurements(&g, &y, &mc)?;
    let bc = BundleConfig {
        c: gc.c,
        network_seed: cfg.seed,
        measurement_seed: cfg.seed,
        network: kind,
        measurement: Some(mc),
    };
    write_estimation_bundle(out, &p, &bc)?;
    let measured = p.measured.iter().filter(|&&m| m).count();
    write_json(
        &out.join("report.json"),
        &json!({
            "kind": "estimation",
            "n": g.n_vertices(),
            "edges": g.n_edges(),
            "measured_edges": measured,
            "diameter": g.diameter(),
            "config": bc,
        }),
    )?;
    Ok(EXIT_OK)
}

fn stats_json(g: &Graph, p: &Partition, max_omega: usize) -> Result<Value, Error> {
    let stats = partition_stats(g, p, max_omega)?;
    Ok(json!({
        "k": p.k(),
        "sizes": p.sizes(),
        "expanded_sizes": stats.expanded_sizes,
        "ring_sizes": stats.ring_sizes,
        "table": stats.to_table(),
    }))
}

fn partition(cfg: &RunConfig) -> Result<i32, Error> {
    let b = problem(cfg)?;
    let p = make_partition(cfg, &b.g)?;
    write_partition(&cfg.output_dir.join("partition.json"), &p)?;
    write_json(
        &cfg.output_dir.join("report.json"),
        &stats_json(&b.g, &p, cfg.max_omega)?,
    )?;
    Ok(EXIT_OK)
}

fn bound_json(cfg: &RunConfig, b: &Bundle, blocks: &OverlapBlocks) -> Result<Value, Error> {
    let rb = rate_bound(&b.h, &b.g, blocks, cfg.eig_method.into())?;
    let per_block: Vec<Value> = rb
        .per_block
        .iter()
        .map(|x| {
            json!({
                "k": x.k,
                "coupling": x.coupling,
                "lambda_min": x.eig.lambda_min,
                "lambda_max": x.eig.lambda_max,
                "bandwidth": x.bandwidth,
                "cross_reach": x.cross_reach,
                "exponent": finite_or_null(x.exponent),
                "block_bound": x.block_bound,
            })
        })
        .collect();
    let mut v = json!({
        "omega": rb.omega,
        "k": blocks.k(),
        "alpha": rb.alpha,
        "simplified_alpha": rb.simplified_alpha,
        "certified": rb.certified,
        "valid": rb.valid,
        "global_lambda_min": rb.global_eig.lambda_min,
        "global_lambda_max": rb.global_eig.lambda_max,
        "global_bandwidth": rb.global_bandwidth,
        "max_coupling": rb.max_coupling,
        "per_block": per_block,
    });
    if b.h.n() <= ITERATION_MATRIX_LIMIT {
        let it = build_iteration_matrices(&b.h, blocks)?;
        v["s_inf_norm"] = json!(it.inf_norm);
        v["spectral_radius"] = json!(it.spectral_radius);
    }
    Ok(v)
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn bound(cfg: &RunConfig) -> Result<i32, Error> {
    let b = problem(cfg)?;
    let p = make_partition(cfg, &b.g)?;
    let blocks = expand_overlap(&b.g, &p, cfg.omega)?;
    write_json(
        &cfg.output_dir.join("report.json"),
        &bound_json(cfg, &b, &blocks)?,
    )?;
    Ok(EXIT_OK)
}

fn run_mode(
    cfg: &RunConfig,
    b: &Bundle,
    blocks: &OverlapBlocks,
    opts: &SolveOptions,
) -> Result<IterationState, Error> {
    match cfg.mode {
        Mode::Sync => sync_solve(&b.h, &b.f, blocks, backend(cfg), opts),
        Mode::AsyncSim => {
            let sched = if cfg.delay_max == 0 {
                DelaySchedule::zero()
            } else {
                DelaySchedule::bounded_random(cfg.delay_max, cfg.seed)
            };
            async_solve_sim(&b.h, &b.f, blocks, backend(cfg), &sched, opts)
        }
        Mode::AsyncThreaded => async_solve_threaded(&b.h, &b.f, blocks, backend(cfg), opts),
    }
}

#[derive(Serialize)]
struct SweepRow {
    omega: usize,
    iterations: usize,
    status: &'static str,
    sec_per_iter: f64,
    expanded_total: usize,
}

fn solve(cfg: &RunConfig) -> Result<i32, Error> {
    let b = problem(cfg)?;
    let p = make_partition(cfg, &b.g)?;
    let blocks = expand_overlap(&b.g, &p, cfg.omega)?;
    if cfg.constraints_path.is_some() {
        return solve_constrained(cfg, &b, &blocks);
    }
    let mut warnings = Vec::new();
    if cfg.mode == Mode::AsyncThreaded {
        if let Some(cap) = thread_cap() {
            if cap < blocks.k() {
                warnings.push(format!(
                    "threaded mode runs one thread per block: {} threads exceed SCHWARZ_NET_THREADS={cap}",
                    blocks.k()
                ));
            }
        }
    }
    let opts = solve_options(cfg);
    let start = Instant::now();
    let st = run_mode(cfg, &b, &blocks, &opts)?;
    let secs = start.elapsed().as_secs_f64();
    write_trace_csv(
        &cfg.output_dir.join("trace.csv"),
        &st.trace,
        cfg.mode == Mode::AsyncThreaded,
    )?;
    let mut report = json!({
        "mode": cfg.mode,
        "backend": cfg.backend,
        "k": blocks.k(),
        "omega": cfg.omega,
        "status": status_str(st.status),
        "iterations": st.t,
        "residual_inf": st.residual,
        "initial_residual_inf": st.initial_residual,
        "measured_rate": st.residual_tail_rate(),
        "wall_s": secs,
        "sec_per_iter": if st.t > 0 { secs / st.t as f64 } else { 0.0 },
        "partition": stats_json(&b.g, &p, cfg.max_omega)?,
    });
    if cfg.mode == Mode::AsyncSim {
        report["epochs"] = json!(st.epochs.len().saturating_sub(1));
        report["max_staleness"] = json!(st.max_staleness);
    }
    if cfg.mode == Mode::AsyncThreaded {
        report["rounds"] = json!(st.rounds);
    }
    match bound_json(cfg, &b, &blocks) {
        Ok(v) => report["rate_bound"] = v,
        Err(e) => warnings.push(format!("rate bound unavailable: {e}")),
    }
    if b.h.n() <= DIRECT_CHECK_LIMIT {
        let xs = direct_solve(&b.h, &b.f)?;
        report["error_to_direct_inf"] = json!(diff_norm_inf(&st.x, &xs));
    }
    if !cfg.omega_sweep.is_empty() {
        let mut rows = Vec::new();
        for &w in &cfg.omega_sweep {
            let bw = expand_overlap(&b.g, &p, w)?;
            let t0 = Instant::now();
            let s = sync_solve(&b.h, &b.f, &bw, backend(cfg), &opts)?;
            let dt = t0.elapsed().as_secs_f64();
            rows.push(SweepRow {
                omega: w,
                iterations: s.t,
                status: status_str(s.status),
                sec_per_iter: if s.t > 0 { dt / s.t as f64 } else { 0.0 },
                expanded_total: bw.blocks.iter().map(Vec::len).sum(),
            });
        }
        report["omega_sweep"] = json!(rows);
    }
    report["warnings"] = json!(warnings);
    write_json(&cfg.output_dir.join("solution.json"), &st.x)?;
    write_json(&cfg.output_dir.join("report.json"), &report)?;
    Ok(status_exit(st.status))
}

fn solve_constrained(cfg: &RunConfig, b: &Bundle, blocks: &OverlapBlocks) -> Result<i32, Error> {
    let (rows, mu) = read_bounds(cfg.constraints_path.as_deref().expect("checked"), &b.g)?;
    let mut p = ConstrainedProblem::new(b.h.clone(), b.f.clone(), rows)?;
    if let Some(m) = cfg.penalty_weight.or(mu) {
        p = p.with_penalty_weight(m)?;
    }
    let start = Instant::now();
    let run = constrained_sync_solve(&p, blocks, cfg.tol, cfg.max_iter, None, false)?;
    let secs = start.elapsed().as_secs_f64();
    write_trace_csv(&cfg.output_dir.join("trace.csv"), &run.state.trace, false)?;
    let max_slack = run.slacks.iter().copied().fold(0.0, f64::max);
    let report = json!({
        "mode": "sync-constrained",
        "k": blocks.k(),
        "omega": cfg.omega,
        "penalty_weight": p.penalty_weight,
        "status": status_str(run.state.status),
        "iterations": run.state.t,
        "kkt_residual_inf": run.state.residual,
        "last_step_inf": run.steps.last(),
        "active_rows": run.active_counts.last(),
        "active_set_settled_at": run.active_settled_at,
        "inexact_block_solves": run.inexact_solves,
        "max_slack": max_slack,
        "wall_s": secs,
        "sec_per_iter": if run.state.t > 0 { secs / run.state.t as f64 } else { 0.0 },
    });
    write_json(&cfg.output_dir.join("solution.json"), &run.state.x)?;
    write_json(&cfg.output_dir.join("report.json"), &report)?;
    Ok(status_exit(run.state.status))
}

fn reference_solution(b: &Bundle) -> Result<Vec<f64>, Error> {
    direct_solve(&b.h, &b.f)
}

fn admm(cfg: &RunConfig) -> Result<i32, Error> {
    let b = problem(cfg)?;
    let p = make_partition(cfg, &b.g)?;
    let blocks = expand_overlap(&b.g, &p, cfg.omega)?;
    let lifted = build_lifted(&b.h, &b.f, &blocks)?;
    let xs = (b.h.n() <= DIRECT_CHECK_LIMIT)
        .then(|| reference_solution(&b))
        .transpose()?;
    let st = admm_solve(&lifted, cfg.rho, cfg.tol, cfg.max_iter, xs.as_deref())?;
    write_admm_trace_csv(&cfg.output_dir.join("trace.csv"), &st.trace)?;
    let report = json!({
        "rho": cfg.rho,
        "k": blocks.k(),
        "omega": cfg.omega,
        "status": status_str(st.status),
        "iterations": st.iterations,
        "consensus_gap": st.consensus_gap(&lifted),
        "coupling_rows": lifted.coupling_rows(),
        "convex_split": lifted.convex_split,
        "error_to_direct_inf": xs.as_ref().map(|x| diff_norm_inf(&st.x, x)),
        "iterations_to_error_target": st.iterations_to_error(cfg.error_target),
        "warnings": lifted.warnings,
    });
    write_json(&cfg.output_dir.join("solution.json"), &st.x)?;
    write_json(&cfg.output_dir.join("report.json"), &report)?;
    Ok(status_exit(st.status))
}

/// Schwarz (sync, `omega`) against ADMM (`admm_omega`) over `rho_grid`,
/// measured by the error to the direct solution.
fn compare(cfg: &RunConfig) -> Result<i32, Error> {
    let b = problem(cfg)?;
    let p = make_partition(cfg, &b.g)?;
    let xs = reference_solution(&b)?;
    let blocks = expand_overlap(&b.g, &p, cfg.omega)?;
    let opts = solve_options(cfg).with_iterates();
    let st = sync_solve(&b.h, &b.f, &blocks, backend(cfg), &opts)?;
    let mut out = String::from("method,rho,iter,time_s,residual_inf,error_to_xstar\n");
    let iterates = st.iterates.as_ref().expect("recorded");
    let mut schwarz_to = None;
    for (t, x) in iterates.iter().enumerate() {
        let err = diff_norm_inf(x, &xs);
        if schwarz_to.is_none() && err <= cfg.error_target {
            schwarz_to = Some(t);
        }
        let time = if t == 0 {
            0.0
        } else {
            st.trace
                .iter()
                .find(|r| r.t == t)
                .map_or(f64::NAN, |r| r.time_s)
        };
        out.push_str(&format!(
            "schwarz,,{t},{time:?},{:?},{err:?}\n",
            st.residual_history[t]
        ));
    }
    let lifted = build_lifted(&b.h, &b.f, &expand_overlap(&b.g, &p, cfg.admm_omega)?)?;
    let mut admm_rows = Vec::new();
    for &rho in &cfg.rho_grid {
        let a = admm_solve(&lifted, rho, cfg.tol, cfg.max_iter, Some(&xs))?;
        for r in &a.trace {
            let err = r.error_to_xstar.unwrap_or(f64::NAN);
            out.push_str(&format!(
                "admm,{rho:?},{},{:?},{:?},{err:?}\n",
                r.iter, r.time_s, r.primal_residual
            ));
        }
        admm_rows.push(json!({
            "rho": rho,
            "status": status_str(a.status),
            "iterations": a.iterations,
            "iterations_to_error_target": a.iterations_to_error(cfg.error_target),
            "final_error": diff_norm_inf(&a.x, &xs),
        }));
    }
    fs::write(cfg.output_dir.join("compare.csv"), out)?;
    write_trace_csv(&cfg.output_dir.join("trace.csv"), &st.trace, false)?;
    let schwarz_wins =
        admm_rows.iter().all(
            |r| match (schwarz_to, r["iterations_to_error_target"].as_u64()) {
                (Some(s), Some(a)) => (s as u64) < a,
                (Some(_), None) => true,
                _ => false,
            },
        );
    let report = json!({
        "error_target": cfg.error_target,
        "schwarz": {
            "omega": cfg.omega,
            "status": status_str(st.status),
            "iterations": st.t,
            "iterations_to_error_target": schwarz_to,
        },
        "admm_omega": cfg.admm_omega,
        "admm": admm_rows,
        "schwarz_fewer_iterations_than_every_rho": schwarz_wins,
        "warnings": lifted.warnings,
    });
    write_json(&cfg.output_dir.join("report.json"), &report)?;
    Ok(status_exit(st.status))
}

/// Worker cap from `SCHWARZ_NET_THREADS`.
pub fn thread_cap() -> Option<usize> {
    std::env::var("SCHWARZ_NET_THREADS")
        .ok()?
        .parse()
        .ok()
        .filter(|&n: &usize| n > 0)
}

/// Sizes the global rayon pool from `SCHWARZ_NET_THREADS` when set.
pub fn init_thread_pool() {
    if let Some(n) = thread_cap() {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

/// Loads a run configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig, Error> {
    RunConfig::from_json(&fs::read_to_string(path)?)
}

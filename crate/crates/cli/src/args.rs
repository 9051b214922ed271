use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{Backend, Command, EigMethod, Mode, Network, RunConfig};
use schwarz_net::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "schwarz-net",
    version,
    about = "Overlapping-subdomain solvers for graph-structured systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Write a problem bundle (graph, measurements, config).
    Generate(GenerateArgs),
    /// Partition the bundle's graph and report overlap statistics.
    Partition(Opts),
    /// Per-block rate bound for the given partition and overlap.
    Bound(Opts),
    /// Run the Schwarz scheme.
    Solve(Opts),
    /// Run the consensus ADMM baseline.
    Admm(Opts),
    /// Schwarz against ADMM over a penalty grid.
    Compare(Opts),
    /// Run a JSON configuration file; flags override its fields.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
}

/// Flags shared by every command. Unset flags keep the configured value.
#[derive(Debug, Default, Args)]
pub struct Opts {
    /// Problem bundle directory.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    #[arg(long, short = 'o')]
    pub output_dir: Option<PathBuf>,
    #[arg(long, short = 'k')]
    pub k: Option<usize>,
    #[arg(long)]
    pub omega: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long, value_enum)]
    pub backend: Option<Backend>,
    #[arg(long)]
    pub cg_tol: Option<f64>,
    #[arg(long)]
    pub delay_max: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub rho_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub admm_omega: Option<usize>,
    #[arg(long)]
    pub error_target: Option<f64>,
    /// Partition file instead of the greedy partitioner.
    #[arg(long)]
    pub partition: Option<PathBuf>,
    /// Relative block sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub balance_weights: Option<Vec<f64>>,
    /// JSON list of `{edge, lo, hi}` bounds on angle differences.
    #[arg(long)]
    pub constraints: Option<PathBuf>,
    #[arg(long)]
    pub penalty_weight: Option<f64>,
    #[arg(long)]
    pub log_every: Option<usize>,
    #[arg(long)]
    pub wall_limit_s: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub omega_sweep: Option<Vec<usize>>,
    #[arg(long)]
    pub max_omega: Option<usize>,
    #[arg(long, value_enum)]
    pub eig_method: Option<EigMethod>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// lattice, tree, csv or demo2x2.
    #[arg(long, default_value = "lattice")]
    pub network: String,
    #[arg(long, default_value_t = 30)]
    pub rows: usize,
    #[arg(long, default_value_t = 30)]
    pub cols: usize,
    /// Vertex count for `tree`.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 250)]
    pub chords: usize,
    /// Edge list for `csv`.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub measured_fraction: Option<f64>,
    #[arg(long)]
    pub truth_scale: Option<f64>,
    #[arg(long)]
    pub no_noise: bool,
    #[arg(long)]
    pub y_min: Option<f64>,
    #[arg(long)]
    pub y_max: Option<f64>,
    #[arg(long, short = 'o')]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

macro_rules! set {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src {
            $dst = v;
        }
    };
}

impl Opts {
    pub fn apply(self, cfg: &mut RunConfig) {
        if self.problem.is_some() {
            cfg.problem_path = self.problem;
        }
        set!(cfg.output_dir, self.output_dir);
        set!(cfg.k, self.k);
        set!(cfg.omega, self.omega);
        set!(cfg.tol, self.tol);
        set!(cfg.max_iter, self.max_iter);
        set!(cfg.mode, self.mode);
        set!(cfg.backend, self.backend);
        set!(cfg.cg_tol, self.cg_tol);
        set!(cfg.delay_max, self.delay_max);
        set!(cfg.seed, self.seed);
        set!(cfg.rho, self.rho);
        set!(cfg.rho_grid, self.rho_grid);
        set!(cfg.admm_omega, self.admm_omega);
        set!(cfg.error_target, self.error_target);
        set!(cfg.log_every, self.log_every);
        set!(cfg.omega_sweep, self.omega_sweep);
        set!(cfg.max_omega, self.max_omega);
        set!(cfg.eig_method, self.eig_method);
        if self.partition.is_some() {
            cfg.partition_path = self.partition;
        }
        if self.balance_weights.is_some() {
            cfg.balance_weights = self.balance_weights;
        }
        if self.constraints.is_some() {
            cfg.constraints_path = self.constraints;
        }
        if self.penalty_weight.is_some() {
            cfg.penalty_weight = self.penalty_weight;
        }
        if self.wall_limit_s.is_some() {
            cfg.wall_limit_s = self.wall_limit_s;
        }
    }
}

impl GenerateArgs {
    fn apply(self, cfg: &mut RunConfig) -> Result<()> {
        let g = &mut cfg.generate;
        g.network = match self.network.as_str() {
            "lattice" => Network::Lattice {
                rows: self.rows,
                cols: self.cols,
            },
            "tree" => Network::Tree {
                n: self.n,
                chords: self.chords,
            },
            "csv" => Network::Csv {
                path: self.csv.ok_or_else(|| {
                    Error::InvalidInput("--network csv needs --csv <file>".into())
                })?,
            },
            "demo2x2" => Network::Demo2x2,
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown network kind `{other}`"
                )))
            }
        };
        set!(g.c, self.c);
        set!(g.measured_fraction, self.measured_fraction);
        set!(g.truth_scale, self.truth_scale);
        set!(g.y_min, self.y_min);
        set!(g.y_max, self.y_max);
        if self.no_noise {
            g.noise = false;
        }
        set!(cfg.output_dir, self.output_dir);
        set!(cfg.seed, self.seed);
        Ok(())
    }
}

impl Cli {
    /// Resolves the arguments into a validated configuration.
    pub fn into_config(self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let (command, opts) = match self.command {
            CliCommand::Generate(a) => {
                cfg.command = Command::Generate;
                a.apply(&mut cfg)?;
                cfg.validate()?;
                return Ok(cfg);
            }
            CliCommand::Partition(o) => (Command::Partition, o),
            CliCommand::Bound(o) => (Command::Bound, o),
            CliCommand::Solve(o) => (Command::Solve, o),
            CliCommand::Admm(o) => (Command::Admm, o),
            CliCommand::Compare(o) => (Command::Compare, o),
            CliCommand::Run { config, opts } => {
                let mut cfg: RunConfig = serde_json::from_str(&std::fs::read_to_string(&config)?)?;
                opts.apply(&mut cfg);
                cfg.validate()?;
                return Ok(cfg);
            }
        };
        cfg.command = command;
        opts.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<RunConfig> {
        Cli::try_parse_from(args).unwrap().into_config()
    }

    #[test]
    fn flags_override_defaults() {
        let cfg = parse(&[
            "schwarz-net",
            "solve",
            "--problem",
            "b",
            "-k",
            "3",
            "--omega",
            "1",
            "--mode",
            "async-sim",
        ])
        .unwrap();
        assert_eq!(
            (cfg.command, cfg.k, cfg.omega, cfg.mode),
            (Command::Solve, 3, 1, Mode::AsyncSim)
        );
        assert_eq!(cfg.tol, 1e-8);
        let cfg = parse(&[
            "schwarz-net",
            "compare",
            "--problem",
            "b",
            "--rho-grid",
            "0.5,2",
        ])
        .unwrap();
        assert_eq!(cfg.rho_grid, vec![0.5, 2.0]);
    }

    #[test]
    fn generate_network_kinds() {
        let cfg = parse(&["schwarz-net", "generate", "--network", "demo2x2"]).unwrap();
        assert_eq!(cfg.generate.network, Network::Demo2x2);
        assert!(parse(&["schwarz-net", "generate", "--network", "csv"]).is_err());
        assert!(parse(&["schwarz-net", "generate", "--network", "ring"]).is_err());
        assert!(parse(&["schwarz-net", "bound"]).is_err());
    }
}

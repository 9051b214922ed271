use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use schwarz_net::{EigenMethod, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Generate,
    Partition,
    Bound,
    Solve,
    Admm,
    Compare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Sync,
    AsyncSim,
    AsyncThreaded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    #[default]
    Factor,
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EigMethod {
    #[default]
    Auto,
    ExactDense,
    Lanczos,
    Gershgorin,
}

impl From<EigMethod> for EigenMethod {
    fn from(m: EigMethod) -> Self {
        match m {
            EigMethod::Auto => EigenMethod::Auto,
            EigMethod::ExactDense => EigenMethod::ExactDense,
            EigMethod::Lanczos => EigenMethod::LanczosEstimated,
            EigMethod::Gershgorin => EigenMethod::Gershgorin,
        }
    }
}

/// Network source for `generate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum Network {
    Lattice {
        rows: usize,
        cols: usize,
    },
    Tree {
        n: usize,
        chords: usize,
    },
    /// Edge list `i,j,y` with arbitrary bus labels.
    Csv {
        path: PathBuf,
    },
    /// `H = [[2, 1], [1, 2]]`, `f = [3, 3]` as a matrix bundle.
    Demo2x2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub network: Network,
    pub c: f64,
    pub measured_fraction: f64,
    /// Inf-norm of the smooth true angle field; 0 gives a zero truth.
    pub truth_scale: f64,
    pub noise: bool,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            network: Network::Lattice { rows: 30, cols: 30 },
            c: 0.1,
            measured_fraction: 0.5,
            truth_scale: 0.5,
            noise: true,
            y_min: 1.0,
            y_max: 10.0,
        }
    }
}

/// Full description of one CLI invocation; also accepted as a JSON file
/// by `schwarz-net run --config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub problem_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub k: usize,
    pub omega: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub mode: Mode,
    pub backend: Backend,
    pub cg_tol: f64,
    pub delay_max: usize,
    pub seed: u64,
    pub rho: f64,
    pub rho_grid: Vec<f64>,
    pub admm_omega: usize,
    /// Error-to-solution level used by `compare`.
    pub error_target: f64,
    pub partition_path: Option<PathBuf>,
    /// Relative block sizes for a skewed partition.
    pub balance_weights: Option<Vec<f64>>,
    pub constraints_path: Option<PathBuf>,
    pub penalty_weight: Option<f64>,
    pub log_every: usize,
    pub wall_limit_s: Option<f64>,
    /// Extra overlaps timed by `solve` for the sec/iter table.
    pub omega_sweep: Vec<usize>,
    /// Largest overlap in the partition statistics table.
    pub max_omega: usize,
    pub eig_method: EigMethod,
    pub generate: GenerateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: Command::Solve,
            problem_path: None,
            output_dir: PathBuf::from("out"),
            k: 4,
            omega: 2,
            tol: 1e-8,
            max_iter: 10_000,
            mode: Mode::Sync,
            backend: Backend::Factor,
            cg_tol: 1e-10,
            delay_max: 0,
            seed: 0,
            rho: 1.0,
            rho_grid: vec![1.0, 4.0, 16.0],
            admm_omega: 1,
            error_target: 1e-6,
            partition_path: None,
            balance_weights: None,
            constraints_path: None,
            penalty_weight: None,
            log_every: 1,
            wall_limit_s: None,
            omega_sweep: Vec::new(),
            max_omega: 3,
            eig_method: EigMethod::Auto,
            generate: GenerateConfig::default(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        positive("tol", self.tol)?;
        positive("cg_tol", self.cg_tol)?;
        positive("rho", self.rho)?;
        positive("error_target", self.error_target)?;
        if self.rho_grid.is_empty() {
            return Err(Error::InvalidInput("rho_grid must not be empty".into()));
        }
        for &r in &self.rho_grid {
            positive("rho_grid entry", r)?;
        }
        if self.k == 0 || self.max_iter == 0 || self.log_every == 0 {
            return Err(Error::InvalidInput(
                "k, max_iter and log_every must be at least 1".into(),
            ));
        }
        if let Some(w) = self.wall_limit_s {
            positive("wall_limit_s", w)?;
        }
        if let Some(m) = self.penalty_weight {
            positive("penalty_weight", m)?;
        }
        if let Some(w) = &self.balance_weights {
            if w.len() != self.k {
                return Err(Error::InvalidInput(format!(
                    "balance_weights needs {} entries",
                    self.k
                )));
            }
            for &x in w {
                positive("balance weight", x)?;
            }
        }
        if self.command != Command::Generate && self.problem_path.is_none() {
            return Err(Error::InvalidInput(
                "a problem bundle (--problem) is required".into(),
            ));
        }
        if self.constraints_path.is_some()
            && (self.command != Command::Solve || self.mode != Mode::Sync)
        {
            return Err(Error::InvalidInput(
                "constraints are supported by `solve --mode sync` only".into(),
            ));
        }
        let g = &self.generate;
        positive("c", g.c)?;
        positive("y_min", g.y_min)?;
        if !(g.y_max >= g.y_min) {
            return Err(Error::InvalidInput("y_max must be at least y_min".into()));
        }
        if !(0.0..=1.0).contains(&g.measured_fraction) {
            return Err(Error::InvalidInput(
                "measured_fraction must lie in [0, 1]".into(),
            ));
        }
        if !(g.truth_scale >= 0.0) {
            return Err(Error::InvalidInput(
                "truth_scale must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_roundtrip_and_unknown_keys() {
        let cfg = RunConfig {
            problem_path: Some("bundle".into()),
            ..Default::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
        assert!(
            RunConfig::from_json(r#"{"command": "solve", "problem_path": "p", "omgea": 2}"#)
                .is_err()
        );
        let short =
            RunConfig::from_json(r#"{"command": "bound", "problem_path": "p", "omega": 0}"#)
                .unwrap();
        assert_eq!(
            (short.command, short.omega, short.k),
            (Command::Bound, 0, 4)
        );
    }

    #[test]
    fn rejects_bad_numbers() {
        let base = RunConfig {
            problem_path: Some("p".into()),
            ..Default::default()
        };
        for bad in [
            RunConfig {
                tol: 0.0,
                ..base.clone()
            },
            RunConfig {
                k: 0,
                ..base.clone()
            },
            RunConfig {
                rho_grid: vec![1.0, -4.0],
                ..base.clone()
            },
            RunConfig {
                problem_path: None,
                ..base.clone()
            },
            RunConfig {
                constraints_path: Some("b.json".into()),
                mode: Mode::AsyncSim,
                ..base.clone()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
        assert!(base.validate().is_ok());
    }
}

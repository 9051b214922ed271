use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(
        "nonzero at ({row}, {col}) joins vertices in different components: bandwidth is infinite"
    )]
    InfiniteBandwidth { row: usize, col: usize },

    #[error("matrix is not positive definite ({context}){}", min_eig_suffix(*.min_eig_estimate))]
    NotPositiveDefinite {
        context: String,
        min_eig_estimate: Option<f64>,
    },

    #[error(
        "subdomain block {k} is not positive definite; the global matrix violates the PD premise"
    )]
    BlockNotPositiveDefinite { k: usize },

    #[error("lower eigenvalue bound not certifiable via Gershgorin (bound {bound:.3e} <= 0); use exact_dense")]
    NotCertifiable { bound: f64 },

    #[error(
        "scheme diverging at iteration {iteration} (residual {residual:.3e} vs minimum {min_residual:.3e}); \
         rho(S^omega) >= 1 likely, so the fixed-point iteration has no attracting solution"
    )]
    Diverging {
        iteration: usize,
        residual: f64,
        min_residual: f64,
    },

    #[error("eigenvalue {re:.6e}{im:+.6e}i lies outside the disk |lambda - z| <= R")]
    SpectrumOutsideDisk { re: f64, im: f64 },

    #[error("delay schedule exhausted at step {step}")]
    ScheduleExhausted { step: usize },

    #[error("lifted consensus form is inconsistent: entry ({row}, {col}) is not covered by any expanded block; increase omega")]
    OrphanEntry { row: usize, col: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn min_eig_suffix(e: Option<f64>) -> String {
    match e {
        Some(v) => format!("; smallest eigenvalue estimate {v:.3e}"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;

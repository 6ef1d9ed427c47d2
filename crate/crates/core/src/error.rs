use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input tables are inconsistent or incomplete.
    #[error("data error: {0}")]
    Data(String),

    /// Two pieces of data disagree on a shared schema.
    #[error("contract error: {0}")]
    Contract(String),

    #[error("degenerate scaling factor {value:e} for {category} at cell index {cell}: accessibility is insensitive to travel time")]
    DegenerateScaling {
        category: String,
        cell: usize,
        value: f64,
    },

    #[error("singular design matrix: collinear column(s) {}", columns.join(", "))]
    SingularDesign { columns: Vec<String> },

    #[error("coefficient(s) not identified (no variation across alternatives): {}", names.join(", "))]
    Identification { names: Vec<String> },

    #[error("no convergence after {iterations} iterations (gradient max-norm {gradient_norm:e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
        last_iterate: Vec<f64>,
    },

    #[error("infeasible policy: {0}")]
    InfeasiblePolicy(String),

    #[error("empty summary: {0}")]
    EmptySummary(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short category label used by the command line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Data(_) => "data",
            Error::Contract(_) => "contract",
            Error::DegenerateScaling { .. } => "degenerate-scaling",
            Error::SingularDesign { .. } => "singular-design",
            Error::Identification { .. } => "identification",
            Error::NonConvergence { .. } => "non-convergence",
            Error::InfeasiblePolicy(_) => "infeasible-policy",
            Error::EmptySummary(_) => "empty-summary",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

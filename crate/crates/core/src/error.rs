use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("expression error at byte {pos}: {msg}")]
    Expr { pos: usize, msg: String },
    #[error("quadrature did not converge at {point:?} (estimated error {err:e})")]
    Quadrature { point: Vec<f64>, err: f64 },
    #[error("aliasing: boundary mass {mass:e} on axis {axis} exceeds {tol:e}")]
    Aliasing { axis: usize, mass: f64, tol: f64 },
    #[error("invalid weight: {0}")]
    InvalidWeight(String),
    #[error("index out of box: {0}")]
    IndexOutOfBox(String),
    #[error("truncation residual {residual:e} above {tol:e} (limiting radius {radius})")]
    Truncation { residual: f64, tol: f64, radius: usize },
    #[error("decay screen failed: fitted order {n_star:.2} < required {required}")]
    DecayScreen { n_star: f64, required: f64 },
    #[error("capability: {0}")]
    Capability(String),
    #[error("dimension cap exceeded: {dim} > {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("term count {count} exceeds cap {cap}; prune the inputs first")]
    TermCap { count: usize, cap: usize },
    #[error("empty matrix")]
    EmptyMatrix,
    #[error("config error at {path}: {msg}")]
    Config { path: String, msg: String },
    #[error("format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid_grid",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::Expr { .. } => "expression",
            Error::Quadrature { .. } => "quadrature",
            Error::Aliasing { .. } => "aliasing",
            Error::InvalidWeight(_) => "invalid_weight",
            Error::IndexOutOfBox(_) => "index_out_of_box",
            Error::Truncation { .. } => "truncation",
            Error::DecayScreen { .. } => "decay_screen",
            Error::Capability(_) => "capability",
            Error::DimensionCap { .. } => "dimension_cap",
            Error::TermCap { .. } => "term_cap",
            Error::EmptyMatrix => "empty_matrix",
            Error::Config { .. } => "config",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }
}

use thiserror::Error;

use crate::io::mech::ParseError;
use crate::io::log::LogError;
use crate::qp::QpError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("unknown frame `{0}`")]
    UnknownFrame(String),
    #[error("singular linkage at loop `{loop_name}` (sigma_min = {sigma_min:e})")]
    SingularLinkage { sigma_min: f64, loop_name: String },
    #[error("singular task map (sigma_min = {sigma_min:e})")]
    SingularTaskMap { sigma_min: f64 },
    #[error("accelerations violate closure (residual {residual:e})")]
    ClosureInconsistent { residual: f64 },
    #[error("operation requires a {0} base")]
    BaseKind(&'static str),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("augmented calibration system is singular (sigma_min = {sigma_min:e})")]
    SingularAugmentedSystem { sigma_min: f64 },
    #[error("no convergence after {iterations} iterations (error norm {error:e})")]
    MaxIterations { iterations: usize, error: f64 },
    #[error("contact map has rank {rank} for {columns} force components")]
    RankDeficientContactMap { rank: usize, columns: usize },
    #[error("total normal force {total:e} N below support threshold")]
    NoSupport { total: f64 },
    #[error("invalid filter cutoff {cutoff} Hz at rate {rate} Hz")]
    InvalidCutoff { cutoff: f64, rate: f64 },
    #[error("actuated values out of solvable range: {0}")]
    OutOfRange(String),
    #[error("singular inertia matrix")]
    SingularInertia,
    #[error("zero-norm column {0} in test matrix")]
    ZeroNormColumn(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Log(#[from] LogError),
}

impl Error {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension_mismatch",
            Error::UnknownFrame(_) => "unknown_frame",
            Error::SingularLinkage { .. } => "singular_linkage",
            Error::SingularTaskMap { .. } => "singular_task_map",
            Error::ClosureInconsistent { .. } => "closure_inconsistent",
            Error::BaseKind(_) => "base_kind",
            Error::Qp(e) => e.code(),
            Error::SingularAugmentedSystem { .. } => "singular_augmented_system",
            Error::MaxIterations { .. } => "max_iterations",
            Error::RankDeficientContactMap { .. } => "rank_deficient_contact_map",
            Error::NoSupport { .. } => "no_support",
            Error::InvalidCutoff { .. } => "invalid_cutoff",
            Error::OutOfRange(_) => "out_of_range",
            Error::SingularInertia => "singular_inertia",
            Error::ZeroNormColumn(_) => "zero_norm_column",
            Error::Config(_) => "invalid_config",
            Error::Parse(e) => e.code(),
            Error::Log(e) => e.code(),
        }
    }
}

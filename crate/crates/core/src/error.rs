use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid perforation model: {0}")]
    InvalidModel(String),
    #[error("resolution too coarse: period {period} needs at least 4 cells of width {h}")]
    ResolutionTooCoarse { period: f64, h: f64 },
    #[error("fluid set still disconnected after {attempts} repair attempts ({components} components)")]
    DisconnectedFluid { attempts: usize, components: usize },
    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("solver did not converge in {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("singular system: pure Neumann problem with nonzero-mean right-hand side ({mean:.3e})")]
    SingularSystem { mean: f64 },
    #[error("obstacle problem unbounded below: positive total load ({total:.3e}) with no Dirichlet boundary")]
    UnboundedBelow { total: f64 },
    #[error("cell ({0}, {1}) is not a fluid cell")]
    NotFluid(usize, usize),
    #[error("ball around ({0}, {1}) of radius {2} contains no fluid cell")]
    EmptyBall(usize, usize, f64),
    #[error("anisotropic operator with off-diagonal coupling requires a mask without solid cells")]
    UnsupportedAnisotropy,
    #[error("initial set is empty after intersecting with the fluid region")]
    EmptyInitialSet,
    #[error("inner fixed-point iteration did not settle: {0}")]
    InnerIterationDivergence(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("fluid cell set is disconnected across periods")]
    DisconnectedAcrossPeriods,
    #[error("capacity sets overlap in {0} cells")]
    OverlappingSets(usize),
    #[error("level set {{G >= {0}}} is empty away from the source")]
    LevelSetEmpty(f64),
    #[error("level set {{G >= {0}}} touches the outer boundary")]
    LevelSetTouchesBoundary(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// True for failures raised by an iterative solver rather than by bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::SingularSystem { .. }
                | Error::UnboundedBelow { .. }
                | Error::InnerIterationDivergence(_)
                | Error::DisconnectedFluid { .. }
                | Error::DisconnectedAcrossPeriods
        )
    }
}

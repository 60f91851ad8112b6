use thiserror::Error;

/// Every failure the library reports.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("undefined evaluation of `{0}`")]
    Undefined(String),
    #[error("no value bound for `{0}`")]
    Unbound(String),
    #[error("100 consecutive samples were undefined while testing `{0}`")]
    SampleDomain(String),
    #[error("index {index} out of range for {len} items")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("trajectory has no closed form for `{0}`")]
    MissingClosedForm(String),
    #[error("system is not square: {equations} equations, {unknowns} unknowns")]
    NonSquare { equations: usize, unknowns: usize },
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("invalid dual: {0}")]
    InvalidDual(String),
    #[error("invalid pivot: {0}")]
    InvalidPivot(String),
    #[error("zero tests contradict each other: {0}")]
    DegenerateElimination(String),
    #[error("reduced system is not affine in the targets: {0}")]
    NonlinearTargets(String),
    #[error("coefficient matrix is singular: {0}")]
    SingularAtConstruction(String),
    #[error("postcondition violated: {0}")]
    PostconditionViolation(String),
    #[error("LC validity condition fails: {0}")]
    LcCondition(String),
    #[error("no value for frozen coordinate `{0}`")]
    MissingXiValue(String),
    #[error("pivot block is singular at the chosen constants: {0}")]
    XiSingular(String),
    #[error("iteration budget of {0} exhausted")]
    IterationBudgetExceeded(usize),
    #[error("{0}")]
    Syntax(#[from] crate::format::ParseError),
}

impl Error {
    /// Stable machine-readable name.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Undefined(_) => "Undefined",
            Error::Unbound(_) => "Unbound",
            Error::SampleDomain(_) => "SampleDomainError",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::MissingClosedForm(_) => "MissingClosedForm",
            Error::NonSquare { .. } => "NonSquareSystem",
            Error::UnknownSymbol(_) => "UnknownSymbol",
            Error::InvalidDual(_) => "InvalidDual",
            Error::InvalidPivot(_) => "InvalidPivot",
            Error::DegenerateElimination(_) => "DegenerateEliminationError",
            Error::NonlinearTargets(_) => "NonlinearTargetsError",
            Error::SingularAtConstruction(_) => "SingularAtConstructionError",
            Error::PostconditionViolation(_) => "PostconditionViolation",
            Error::LcCondition(_) => "LCConditionError",
            Error::MissingXiValue(_) => "MissingXiValue",
            Error::XiSingular(_) => "XiSingularError",
            Error::IterationBudgetExceeded(_) => "IterationBudgetExceeded",
            Error::Syntax(_) => "SyntaxError",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

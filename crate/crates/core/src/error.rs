use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid filtered group: {0}")]
    InvalidGroup(String),

    #[error("{what} = {value} is out of range {range}")]
    OutOfRange {
        what: &'static str,
        value: i64,
        range: String,
    },

    #[error("enumeration needs {needed} iterations but the budget is {budget}")]
    BudgetExceeded { needed: String, budget: u64 },

    #[error("the filtration is not 2-homogeneous")]
    NotTwoHomogeneous,

    #[error("invalid corner: {0}")]
    InvalidCorner(String),

    #[error("corner completion is not unique at dimension {dimension} (degree {degree}); {completions} completions exist")]
    NonUniqueCompletion {
        dimension: usize,
        degree: usize,
        completions: usize,
    },

    #[error("malformed discrete-cube morphism: {0}")]
    MalformedMorphism(String),

    #[error("outcome spaces differ: {0}")]
    MismatchedSpace(String),

    #[error("the linear form system is empty")]
    EmptyFormSystem,

    #[error("affine map is not invertible")]
    NotInvertible,

    #[error("incompatible denominators: target order 2^{target} does not embed in 2^{table}")]
    IncompatibleDenominators { target: u32, table: u32 },

    #[error("no consistent depth convention: {0}")]
    NoConsistentConvention(String),

    #[error("({k}, {r}) is outside the calibrated depth table")]
    Uncalibrated { k: u32, r: u32 },

    #[error("form {0} is not affine (its first coordinate is 0)")]
    NotAffine(usize),

    #[error("the map is not a morphism of group nilspaces")]
    NotAMorphism,

    #[error("invalid input: {0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch for {what}: expected {expected}, found {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {what} at row {row}")]
    NonFinite { what: String, row: usize },

    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("all regressors were absorbed by the fixed effects")]
    AllRegressorsAbsorbed,

    #[error("not enough observations: N = {n} but {params} parameters (including absorbed fixed effects)")]
    TooFewObservations { n: usize, params: usize },

    #[error("X'X is rank deficient (reciprocal condition {rcond:.3e}); offending columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String>, rcond: f64 },

    #[error("at least {required} clusters are required, found {found}")]
    TooFewClusters { found: usize, required: usize },

    #[error(
        "M_gg for cluster `{cluster}` is singular (min eigenvalue {min_eigenvalue:.3e}); \
         a regressor is probably a fixed effect for this cluster; absorb the fixed effects instead"
    )]
    SingularClusterBlock { cluster: String, min_eigenvalue: f64 },

    #[error("deleting cluster `{cluster}` leaves a singular X'X; the estimates should probably not be believed")]
    DeletionSingular { cluster: String },

    #[error("the variance of the tested combination is zero")]
    ZeroVariance,

    #[error("invalid restriction: {0}")]
    InvalidRestriction(String),

    #[error("{r} restrictions cannot be tested with a CRVE of rank at most {max}")]
    TooManyRestrictions { r: usize, max: usize },

    #[error("the fine partition is not nested in the coarse partition")]
    NotNested,

    #[error("{discarded} of {total} bootstrap replicates were singular; the bootstrap distribution is unreliable")]
    BootstrapUnreliable { discarded: usize, total: usize },

    #[error("interval endpoint not found: {0}")]
    EndpointNotFound(String),

    #[error("the fit has no restricted part; fit with a restriction first")]
    MissingRestriction,

    #[error("no re-randomizations are possible (G = {g}, G1 = {g1})")]
    NoRerandomizations { g: usize, g1: usize },

    #[error("binomial coefficient C({n}, {k}) overflows 64 bits")]
    CountOverflow { n: usize, k: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("csv error: {0}")]
    Csv(String),
}

impl Error {
    /// True for failures that come from the numbers rather than from the
    /// shape of the request.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::SingularClusterBlock { .. }
                | Error::DeletionSingular { .. }
                | Error::ZeroVariance
                | Error::BootstrapUnreliable { .. }
                | Error::EndpointNotFound(_)
                | Error::AllRegressorsAbsorbed
        )
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

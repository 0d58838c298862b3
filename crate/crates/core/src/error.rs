use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AwlmError {
    #[error("invalid universe: {0}")]
    InvalidUniverse(String),

    #[error("unknown alternative `{0}`")]
    UnknownAlternative(String),

    #[error("invalid menu: {0}")]
    InvalidMenu(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("universe mismatch: {0}")]
    UniverseMismatch(String),

    #[error("no feasible exposure: q_S = 0")]
    NoFeasibleExposure,

    #[error("undefined pure-imitation: alpha = 1 with q_S = 0")]
    UndefinedPureImitation,

    #[error("not a pure feasible-share shift: compositions differ by {0:e}")]
    NotPureShareShift(f64),

    #[error("non-termination guard tripped after {attempts} attempts (probability of this event <= {bound:e})")]
    NonTermination { attempts: u64, bound: f64 },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate slice: all exposures share the same feasible restriction")]
    DegenerateSlice,

    #[error("kappa nonpositive: outside the model class ({0})")]
    KappaNonpositive(String),

    #[error("binary menus provide consistency checks only; recovery needs |S| >= 3 (got {0})")]
    SmallMenu(usize),

    #[error("zero probability in a denominator: {0}")]
    ZeroProbability(String),

    #[error("inconsistent intrinsic family: {0}")]
    InconsistentFamily(String),

    #[error("u identified only per component: overlap graph has {0} components")]
    DisconnectedMenus(usize),

    #[error(
        "ratio inconsistency: coordinate ratios {first} and {second} disagree beyond tolerance"
    )]
    RatioInconsistency { first: f64, second: f64 },

    #[error("degenerate design: {0}")]
    Degenerate(String),

    #[error("not rationalizable at alpha = {alpha}: coordinate {coordinate} = {value:e}")]
    NotRationalizable {
        alpha: f64,
        coordinate: usize,
        value: f64,
    },

    #[error("under-identified: {moments} moments for {params} parameters")]
    UnderIdentified { moments: usize, params: usize },

    #[error("singular matrix: {0}")]
    Singular(String),
}

pub type Result<T, E = AwlmError> = std::result::Result<T, E>;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension n = {0} must be odd")]
    EvenDimension(i64),
    #[error("dimension n = {n} outside 1 <= n < 4m = {}", 4 * .m)]
    DimensionOutOfRange { m: i64, n: i64 },
    #[error("order m = {0} must be positive")]
    NonPositiveOrder(i64),
    #[error("kind k = {k} outside 0..={max}")]
    KindOutOfRange { k: i64, max: i64 },
    #[error("time t must be nonzero")]
    ZeroTime,
    #[error("kernel evaluated at r = 0 in dimension {0}")]
    CoincidenceSingularity(i64),
    #[error("truncation order theta = {theta} exceeds {max}")]
    OrderTooLarge { theta: i64, max: i64 },
    #[error("ill-conditioned fit: {0}")]
    FitIllConditioned(String),
    #[error("mixed regime indices |alpha| = {alpha}, |beta| = {beta} around k_c = {kc}")]
    MixedRegime { alpha: usize, beta: usize, kc: i64 },
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("phase under-resolved: {0}")]
    PhaseUnderResolved(String),
    #[error("unsupported index j = {0}")]
    UnsupportedIndex(i64),
    #[error("backend unsupported: {0}")]
    BackendUnsupported(String),
    #[error("threshold ambiguous: singular value {sigma:e} near threshold {threshold:e} ({context})")]
    ThresholdAmbiguous {
        sigma: f64,
        threshold: f64,
        context: String,
    },
    #[error("shooting match ill-conditioned: {0}")]
    MatchingIllConditioned(String),
    #[error("projection family incomplete: {0}")]
    FamilyIncomplete(String),
    #[error("empty index range: {0}")]
    EmptyIndexRange(String),
    #[error("pivot block singular (smallest singular value {0:e})")]
    PivotSingular(f64),
    #[error("Schur complement singular (smallest singular value {0:e})")]
    ComplementSingular(f64),
    #[error("Neumann series diverges at lambda = {lambda}: spectral radius {radius}")]
    NeumannDiverges { lambda: f64, radius: f64 },
    #[error("resolvent solve failed at lambda = {0}")]
    ResolventSolveFailed(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

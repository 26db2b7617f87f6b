use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid node count must be odd so a node sits at the center, got n = {0}")]
    EvenNodeCount(usize),
    #[error("grid node count must be at least 9, got n = {0}")]
    TooFewNodes(usize),
    #[error("domain side must be positive and finite, got {0}")]
    NonPositiveSide(f64),
    #[error("ball radius must be positive and finite, got {0}")]
    NonPositiveRadius(f64),
    #[error("ball of radius {radius} leaves the grid margin (radius + 2h must be < {half_side}, h = {h})")]
    BallOutsideGrid { radius: f64, half_side: f64, h: f64 },
    #[error("boundary ring of radius {radius} is empty at spacing h = {h}")]
    EmptyRing { radius: f64, h: f64 },
    #[error("region of outer radius {0} contains no grid points")]
    EmptyRegion(f64),
    #[error("cutoff radii must satisfy 2h < inner < outer <= side/2 (inner {inner}, outer {outer}, h {h})")]
    InvalidCutoff { inner: f64, outer: f64, h: f64 },
    #[error("exponent p must lie strictly in (1, 2), got {0}")]
    ExponentOutOfRange(f64),
    #[error("regularization eps must be nonnegative and finite, got {0}")]
    InvalidEps(f64),
    #[error("{0} requires eps > 0")]
    EpsRequired(&'static str),
    #[error("singular flux: eps = 0 and gradient component {axis} vanishes on cell {cell}")]
    SingularFlux { cell: usize, axis: usize },
    #[error("field size mismatch: expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("non-finite field value at node {0}")]
    NonFinite(usize),
    #[error("invalid solver configuration: {0}")]
    InvalidSolveConfig(String),
    #[error("epsilon ladder needs at least 2 levels, got {0}")]
    LadderTooShort(usize),
    #[error("ladder level {level} (eps = {eps}) failed: {reason}")]
    LevelFailed { level: usize, eps: f64, reason: String },
    #[error("competitor {0} does not share the solution's boundary values")]
    BoundaryMismatch(usize),
    #[error("test function must vanish on the grid boundary")]
    TestFunctionBoundary,
    #[error("invalid radii: {0}")]
    InvalidRadii(String),
    #[error("monotonicity inequality: nonpositive right-hand side {rhs} at a = {a}, b = {b} (p = {p}, eps = {eps})")]
    NonMonotone { a: f64, b: f64, p: f64, eps: f64, rhs: f64 },
    #[error("not enough inputs for {check}: {detail}")]
    InsufficientInput { check: &'static str, detail: String },
    #[error("snapshot format: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

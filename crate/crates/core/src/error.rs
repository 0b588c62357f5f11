use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid coordinate: {0}")]
    InvalidCoordinate(String),

    #[error("invalid polygon `{id}`: {reason}")]
    InvalidPolygon { id: String, reason: String },

    #[error("segment intersects polygon; clearance is undefined")]
    SegmentIntersects,

    #[error("airspace document: {0}")]
    Schema(String),

    #[error("vertiport `{id}` {reason}")]
    Vertiport { id: String, reason: String },

    #[error("unknown vertiport `{0}`")]
    UnknownVertiport(String),

    #[error("duplicate contract id `{0}`")]
    DuplicateContract(String),

    #[error("unknown contract `{0}`")]
    UnknownContract(String),

    #[error("no route found after expanding {expanded} nodes")]
    NoRoute { expanded: usize },

    #[error("too few states: {got} (need at least {need})")]
    TooFewStates { got: usize, need: usize },

    #[error("ellipse validation exhausted after {iterations} bloat steps (inclusion {fraction:.3})")]
    ValidationExhausted { iterations: usize, fraction: f64 },

    #[error("segment {segment}, interval {interval}: {source}")]
    Region {
        segment: usize,
        interval: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("simulation did not finish within {limit_s:.0} s of simulated time")]
    NonTermination { limit_s: f64 },

    #[error("scenario infeasible: placed {placed} of {target} contracts in {attempts} attempts")]
    ScenarioInfeasible {
        placed: usize,
        target: usize,
        attempts: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown {kind} `{name}` (registered: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("malformed contract document: {0}")]
    Contract(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

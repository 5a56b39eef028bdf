use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("missing `{0}` in case file")]
    MissingField(String),

    #[error("branch row {row} (line {line}) references unknown bus {bus}")]
    UnknownBus { row: usize, line: usize, bus: i64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty sample")]
    EmptySample,

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("voltage classes {a} kV and {b} kV overlap under tolerance")]
    OverlappingClasses { a: f64, b: f64 },

    #[error("band mass {target} is not achievable (supremum {supremum})")]
    Unachievable { target: f64, supremum: f64 },

    #[error("profile has no usable entry for {kind} at {class_kv} kV: {reason}")]
    Profile {
        kind: String,
        class_kv: f64,
        reason: String,
    },

    #[error("truncated sampling from {0} exceeded the retry limit")]
    TruncationExhausted(String),
}

use std::path::PathBuf;

/// Errors produced by the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{what} = {value} is outside {domain}")]
    Domain { what: &'static str, value: f64, domain: &'static str },

    #[error("symbol index ({k}, {l}) outside the {n} x {m} delay-Doppler grid")]
    IndexOutOfRange { k: usize, l: usize, n: usize, m: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("block of {len} samples does not fit in a PRI of {pri} samples")]
    FrameOverflow { len: usize, pri: usize },

    #[error("path {index}: {reason}")]
    Gating { index: usize, reason: String },

    #[error("index {index} is outside the observation window [{start}, {end}]")]
    OutsideObservation { index: i64, start: i64, end: i64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("could not draw a feasible scene after {attempts} attempts ({detail})")]
    InfeasibleScene { attempts: usize, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

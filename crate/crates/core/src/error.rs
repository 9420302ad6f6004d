use thiserror::Error;

/// Errors surfaced by model construction, data loading, sampling and diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("heterogeneity parameter phi must lie in ({lo}, {hi}), got {value}")]
    PhiOutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sample count must be at least 1")]
    EmptySample,

    #[error("data error{}: {msg}", row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    Data { row: Option<usize>, msg: String },

    #[error("youth id {0:?} does not map to any cluster in the panel")]
    UnknownYouth(String),

    #[error(
        "slice sampler for {target} exceeded {max_step_outs} step-outs \
         (chain {chain}, iteration {iteration}); state: {state_dump}"
    )]
    SliceStepOut {
        target: String,
        max_step_outs: u32,
        chain: usize,
        iteration: usize,
        state_dump: String,
    },

    #[error("diagnostic requires at least two chains, got {0}")]
    SingleChain(usize),

    #[error("no retained draws")]
    NoDraws,

    #[error("panel hash mismatch: {left} vs {right}")]
    PanelMismatch { left: String, right: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn data(row: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Data {
            row,
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what} = {value} lies outside the binning grid")]
    OutOfGrid { what: &'static str, value: f64 },

    #[error("inflow profile spans {lo:.1}..{hi:.1} m but the rotor needs {need_lo:.1}..{need_hi:.1} m")]
    ProfileCoverage {
        lo: f64,
        hi: f64,
        need_lo: f64,
        need_hi: f64,
    },

    #[error("angle of attack {aoa_deg:.2} deg outside polar table {polar} ({lo:.1}..{hi:.1} deg)")]
    PolarExtrapolation {
        polar: usize,
        aoa_deg: f64,
        lo: f64,
        hi: f64,
    },

    #[error("aligned power is zero; cannot normalize the yaw power curve")]
    DegenerateNormalization,

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("insufficient data: need at least {needed} waked-turbine observations, found {found}")]
    InsufficientData { needed: usize, found: usize },

    #[error("observations are insensitive to the wake parameters (no waked turbines in the data)")]
    Unidentifiable,

    #[error("ensemble collapsed (spread {spread:e}); re-inflate the ensemble before updating")]
    EnsembleCollapse { spread: f64 },

    #[error("energy ratio undefined: every wind speed bin was excluded")]
    UndefinedRatio,

    #[error("baseline energy ratio is zero")]
    ZeroBaseline,

    #[error("sector is empty after sample thresholds; dropped direction bins: {dropped:?}")]
    EmptySector { dropped: Vec<f64> },

    #[error("bootstrap needs at least 2 samples, got {0}")]
    TooFewSamples(usize),

    #[error("line {line}: {message}")]
    Ingest { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

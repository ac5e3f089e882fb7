use thiserror::Error;

/// Errors raised by chart, tensor, field and integration operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the domain of chart `{chart}`")]
    Domain { chart: &'static str, point: [f64; 4] },

    #[error("jacobian of chart `{chart}` is singular at {point:?} (|det J| = {det:e})")]
    SingularJacobian {
        chart: &'static str,
        point: [f64; 4],
        det: f64,
    },

    #[error("metric inversion residual {residual:e} exceeds tolerance")]
    NonInvertible { residual: f64 },

    #[error("tensor rank {rank} is not supported here (max {max})")]
    Rank { rank: usize, max: usize },

    #[error("slot {slot} has the wrong variance for this operation")]
    Variance { slot: usize },

    #[error("vector is not timelike (g(v, v) = {norm2:e})")]
    NotTimelike { norm2: f64 },

    #[error("negative mass density {rho:e}")]
    NegativeDensity { rho: f64 },

    #[error("engine `{engine}` supplies derivatives up to order {available}, operation needs {required}")]
    EngineOrder {
        engine: String,
        available: usize,
        required: usize,
    },

    #[error("sources inconsistent with the field: |sigma v - j| = {deviation:e} at {point:?}")]
    InconsistentSources { point: [f64; 4], deviation: f64 },

    #[error("trajectory left the domain of chart `{chart}` at s = {s}")]
    DomainExit {
        chart: &'static str,
        s: f64,
        last: Box<crate::worldline::WorldlineState>,
    },

    #[error("zero mass density with nonzero charge: charge-to-mass ratio is unbounded")]
    UnboundedChargeToMass,

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown product operator label `{0}`")]
    UnknownOperator(String),

    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("propagator is not unitary (|U^dag U - 1|_F = {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dwell {dwell:.3e} s is too coarse: per-step phase increment {increment:.3} rad exceeds 0.1 rad; use dwell <= {required:.3e} s")]
    DwellTooCoarse {
        dwell: f64,
        increment: f64,
        required: f64,
    },

    #[error("time {t:.6e} s outside sweep window [0, {duration:.6e}] s")]
    TimeOutOfRange { t: f64, duration: f64 },

    #[error("no coupling accumulates over one period")]
    NoCoupling,

    #[error("inversion deficit {epsilon:.3} rad exceeds pi/2; sweep is not adiabatic")]
    NonAdiabatic { epsilon: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("sequence duration {sequence:.6e} s exceeds time budget {budget:.6e} s")]
    SequenceExceedsBudget { sequence: f64, budget: f64 },

    #[error("transfer map is empty")]
    EmptyMap,

    #[error("composite table: {0}")]
    CompositeTable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

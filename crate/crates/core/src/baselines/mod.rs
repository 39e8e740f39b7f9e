//! Reference models: Markov chains for locations and AR for intervals.

mod ar;
mod markov;

pub use ar::{
    aic_table, select_order_aic, simulate_series, ArModel, NoiseModel, AR_HORIZON_MINUTES, AR_LOWER_BOUND_MINUTES,
    MAX_ORDER,
};
pub use markov::{resample_fixed, MarkovModel, MarkovRun, FEASIBILITY_THRESHOLD, MARKOV_STEPS, MARKOV_STEP_MINUTES};

use thiserror::Error;

use crate::codec::CodecError;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("unsupported order {0}")]
    InvalidOrder(usize),
    #[error("expected {expected} initial values, got {got}")]
    InitLength { expected: usize, got: usize },
    #[error("{rows} regression rows, need at least {needed}")]
    InsufficientData { rows: usize, needed: usize },
    #[error("interval {0} is not positive")]
    NonPositiveInterval(f64),
    #[error("model dump: {0}")]
    Format(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

//! Explicit exogenous generators `ω(t) = Λ(t, t0)ω0` and the scalar signal
//! families used to build them.

mod exosystem;
mod signal;
mod tvm;

pub use exosystem::{
    fd_derivative, inflate_to_invertible, q_lambda, q_lambda_report, validate_exosystem,
    Embedding, ExoValidationReport, ExplicitExosystem, Inflation, QLambdaReport,
    NONSINGULAR_THRESHOLD,
};
pub(crate) use signal::matrix_from_rows;
pub use signal::{build_signal, square_wave, triangle_wave, SignalKind, SignalParams};
pub use tvm::{MatrixFunction, TimeVaryingMatrix};

//! Output regulation for SISO LTI plants whose exogenous signals come from
//! explicit, possibly non-smooth and non-periodic generators
//! `ω(t) = Λ(t, t0)ω0`.

pub mod cli;
pub mod error;
pub mod exo;
pub mod imu;
pub mod numkit;
pub mod plant;
pub mod regeq;
pub mod rlc;
pub mod sim;

pub use error::{Error, Result};

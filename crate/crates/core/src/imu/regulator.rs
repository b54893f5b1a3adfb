use nalgebra::DMatrix;

use super::realize::CanonicalRealization;
use crate::error::{Error, Result};
use crate::exo::TimeVaryingMatrix;

/// `ξ̇ = (F + GH(t))ξ − kGe`, `u = H(t)ξ − ke`.
#[derive(Clone)]
pub struct ErrorFeedbackRegulator {
    pub f_im: DMatrix<f64>,
    pub g_im: DMatrix<f64>,
    pub h_im: TimeVaryingMatrix,
    pub k: f64,
    pub q: usize,
}

impl std::fmt::Debug for ErrorFeedbackRegulator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ErrorFeedbackRegulator")
            .field("q", &self.q)
            .field("k", &self.k)
            .finish_non_exhaustive()
    }
}

impl ErrorFeedbackRegulator {
    pub fn new(f_im: DMatrix<f64>, g_im: DMatrix<f64>, h_im: TimeVaryingMatrix, k: f64) -> Result<Self> {
        let q = f_im.nrows();
        if f_im.shape() != (q, q) || g_im.shape() != (q, 1) || h_im.shape() != (1, q) {
            return Err(Error::invalid("regulator matrices have inconsistent shapes"));
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::invalid(format!("high gain k = {k} must be positive")));
        }
        Ok(ErrorFeedbackRegulator { f_im, g_im, h_im, k, q })
    }

    pub fn with_gain(&self, k: f64) -> Result<Self> {
        Self::new(self.f_im.clone(), self.g_im.clone(), self.h_im.clone(), k)
    }
}

pub fn assemble_error_feedback(real: &CanonicalRealization, k: f64) -> Result<ErrorFeedbackRegulator> {
    ErrorFeedbackRegulator::new(real.f_im.clone(), real.g_im.clone(), real.h_fn(), k)
}

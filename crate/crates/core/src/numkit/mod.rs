//! Dense matrix numerics: pseudoinverse, breakpoint-aware grids and
//! trajectories, and RK4 integration of matrix-valued ODEs.

mod grid;
mod ode;
mod pinv;
mod traj;

pub use grid::{Grid, Side};
pub use ode::{integrate_matrix_ode, repeated_integrals, OdeOptions, OdeSolver};
pub use pinv::{numerical_rank, pinv, singular_values, svd, DEFAULT_PINV_TOL};
pub use traj::MatrixTrajectory;

use nalgebra::{DMatrix, DVector};

/// Column-stacking vectorization.
pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_of`].
pub fn unvec(v: &[f64], rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(rows, cols, v)
}

/// Least-squares slope and intercept of `ys` against `xs`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return (0.0, ys.first().copied().unwrap_or(0.0));
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for i in 0..n {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    if sxx == 0.0 {
        return (0.0, my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

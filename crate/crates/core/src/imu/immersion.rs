use nalgebra::DMatrix;
use serde::Serialize;

use super::realize::InternalModelPair;
use crate::error::{Error, Result};
use crate::exo::TimeVaryingMatrix;
use crate::numkit::{numerical_rank, pinv, repeated_integrals, Grid, MatrixTrajectory, Side};

#[derive(Debug, Clone, Copy)]
pub struct ImmersionOptions {
    pub rank_tol: f64,
    pub residual_tol: f64,
    /// Coefficients above this are treated as unbounded.
    pub coefficient_cap: f64,
}

impl Default for ImmersionOptions {
    fn default() -> Self {
        ImmersionOptions {
            rank_tol: 1e-9,
            residual_tol: 1e-6,
            coefficient_cap: 1e4,
        }
    }
}

/// Bounded `a_1 … a_d` with `F + Σ a_i I^[i][F] = 0` for `t ≥ t_hat`, the
/// integrals running from the start of the grid.
#[derive(Debug, Clone)]
pub struct ImmersionIM {
    pub d: usize,
    pub t_hat: f64,
    /// Row `(a_1, …, a_d)` per sample, from `t_hat` on.
    pub coefficients: MatrixTrajectory,
    /// `‖F + Σ a_i I^[i][F]‖ / (1 + ‖F‖)` per sample.
    pub residual: Vec<f64>,
    pub sup_coefficient: f64,
}

impl ImmersionIM {
    /// Companion pair with last row `(−a_d … −a_1)` and `Ξ̃` equal to it.
    pub fn implicit_pair(&self) -> Result<InternalModelPair> {
        let d = self.d;
        let coeffs = self.coefficients.clone();
        let t_hat = self.t_hat;
        let row = move |t: f64, side: Side| -> DMatrix<f64> {
            let a = if t < t_hat { DMatrix::zeros(1, d) } else { coeffs.eval(t, side) };
            DMatrix::from_fn(1, d, |_, j| -a[(0, d - 1 - j)])
        };
        let bps = self.coefficients.grid().breakpoints.clone();
        let row2 = row.clone();
        let phi = TimeVaryingMatrix::from_fn(d, d, bps.clone(), move |t, side| {
            let mut m = DMatrix::zeros(d, d);
            for i in 0..d - 1 {
                m[(i, i + 1)] = 1.0;
            }
            m.row_mut(d - 1).copy_from(&row2(t, side).row(0));
            m
        });
        let xi = TimeVaryingMatrix::from_fn(1, d, bps, row);
        InternalModelPair::implicit(phi, xi)
    }

    pub fn sup_residual(&self) -> f64 {
        self.residual.iter().copied().fold(0.0, f64::max)
    }
}

/// Outcome of one `(d, t_hat)` attempt.
#[derive(Debug, Clone, Serialize)]
pub struct CandidateDiagnostic {
    pub d: usize,
    pub t_hat: f64,
    /// Samples where `rank Ψ̂ᵀ < rank [Ψ̂ᵀ Fᵀ]`.
    pub rank_gaps: usize,
    pub sup_coefficient: f64,
    pub sup_residual: f64,
    pub accepted: bool,
}

struct Attempt {
    diag: CandidateDiagnostic,
    result: Option<ImmersionIM>,
}

fn attempt(
    f_basis: &TimeVaryingMatrix,
    ints: &[MatrixTrajectory],
    d: usize,
    t_hat: f64,
    grid: &Grid,
    opts: ImmersionOptions,
) -> Result<Attempt> {
    let w = f_basis.shape().1;
    let sub = grid.restrict(t_hat, grid.t_end)?;
    let mut rank_gaps = 0;
    let mut sup_a = 0.0f64;
    let mut sup_res = 0.0f64;
    let mut residual = Vec::new();
    let coefficients = MatrixTrajectory::sample(&sub, 1, d, |t, side| {
        let f = f_basis.eval_side(t, side);
        // Rows I^[d], …, I^[1].
        let mut psi = DMatrix::zeros(d, w);
        for k in 0..d {
            psi.row_mut(k).copy_from(&ints[d - 1 - k].eval(t, side).row(0));
        }
        let pt = psi.transpose();
        let mut aug = DMatrix::zeros(w, d + 1);
        aug.view_mut((0, 0), (w, d)).copy_from(&pt);
        aug.set_column(d, &f.transpose().column(0));
        if numerical_rank(&pt, opts.rank_tol) != numerical_rank(&aug, opts.rank_tol) {
            rank_gaps += 1;
        }
        let (pinv_pt, _) = pinv(&pt, opts.rank_tol)?;
        let v = -(pinv_pt * f.transpose());
        let mut a = DMatrix::zeros(1, d);
        for i in 0..d {
            a[(0, i)] = v[(d - 1 - i, 0)];
        }
        let res = (&f + (&psi.transpose() * &v).transpose()).norm() / (1.0 + f.norm());
        residual.push(res);
        sup_res = sup_res.max(res);
        sup_a = sup_a.max(a.amax());
        Ok(a)
    })?;
    let accepted = rank_gaps == 0
        && sup_res <= opts.residual_tol
        && sup_a <= opts.coefficient_cap
        && sup_a.is_finite();
    let diag = CandidateDiagnostic {
        d,
        t_hat,
        rank_gaps,
        sup_coefficient: sup_a,
        sup_residual: sup_res,
        accepted,
    };
    let result = accepted.then(|| ImmersionIM {
        d,
        t_hat,
        coefficients,
        residual,
        sup_coefficient: sup_a,
    });
    Ok(Attempt { diag, result })
}

fn integrals(f_basis: &TimeVaryingMatrix, d: usize, grid: &Grid) -> Result<Vec<MatrixTrajectory>> {
    if f_basis.shape().0 != 1 {
        return Err(Error::invalid("F must be a single row"));
    }
    repeated_integrals(f_basis, d, grid.t_start, grid)
}

/// `Ψ̂_Υ = [I^[d][F]; …; I^[1][F]]` on the grid, integrals from its start.
/// `Φ̃Ψ̂_Υ = Ψ̂_Υ'` and `Ξ̃Ψ̂_Υ = F` hold wherever the immersion does.
pub fn immersion_states(f_basis: &TimeVaryingMatrix, d: usize, grid: &Grid) -> Result<MatrixTrajectory> {
    if d == 0 {
        return Err(Error::invalid("immersion order must be positive"));
    }
    let ints = integrals(f_basis, d, grid)?;
    let w = f_basis.shape().1;
    MatrixTrajectory::sample(grid, d, w, |t, side| {
        let mut psi = DMatrix::zeros(d, w);
        for k in 0..d {
            psi.row_mut(k).copy_from(&ints[d - 1 - k].eval(t, side).row(0));
        }
        Ok(psi)
    })
}

/// Coefficients for a fixed order and start time.
pub fn solve_immersion(
    f_basis: &TimeVaryingMatrix,
    d: usize,
    t_hat: f64,
    grid: &Grid,
    opts: ImmersionOptions,
) -> Result<ImmersionIM> {
    if d == 0 || t_hat <= grid.t_start || t_hat >= grid.t_end {
        return Err(Error::invalid(format!("need d ≥ 1 and t_hat inside ({}, {})", grid.t_start, grid.t_end)));
    }
    let ints = integrals(f_basis, d, grid)?;
    let a = attempt(f_basis, &ints, d, t_hat, grid, opts)?;
    a.result.ok_or_else(|| {
        Error::NoImmersionFound(serde_json::to_string(&a.diag).unwrap_or_default())
    })
}

/// Searches `d = 1..=d_max` ascending and, for each, the candidate start
/// times in ascending order; returns the first accepted pair.
pub fn find_immersion(
    f_basis: &TimeVaryingMatrix,
    d_max: usize,
    t_hat_grid: &[f64],
    grid: &Grid,
    opts: ImmersionOptions,
) -> Result<(ImmersionIM, Vec<CandidateDiagnostic>)> {
    if d_max == 0 || t_hat_grid.is_empty() {
        return Err(Error::invalid("empty immersion search space"));
    }
    let mut t_hats: Vec<f64> = t_hat_grid
        .iter()
        .copied()
        .filter(|t| *t > grid.t_start && *t < grid.t_end)
        .collect();
    t_hats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ints_all = integrals(f_basis, d_max, grid)?;
    let mut diags = Vec::new();
    for d in 1..=d_max {
        for &t_hat in &t_hats {
            let a = attempt(f_basis, &ints_all[..d], d, t_hat, grid, opts)?;
            diags.push(a.diag);
            if let Some(r) = a.result {
                return Ok((r, diags));
            }
        }
    }
    Err(Error::NoImmersionFound(
        serde_json::to_string(&diags).unwrap_or_default(),
    ))
}

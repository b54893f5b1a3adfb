use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exo::{MatrixFunction, TimeVaryingMatrix};
use crate::numkit::{numerical_rank, Grid, MatrixTrajectory, OdeSolver, Side, DEFAULT_PINV_TOL};
use crate::regeq::right_divide;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairForm {
    /// `ẇ`-free form: outputs `Ξ̂(t)Φ̂(t, t0)w0` with `Φ̂` an invertible generator.
    Explicit,
    /// `ẇ = Φ̃(t)w`, `y = Ξ̃(t)w`.
    Implicit,
}

/// The internal model to be realized, `s` states.
#[derive(Clone)]
pub struct InternalModelPair {
    pub form: PairForm,
    pub phi: TimeVaryingMatrix,
    pub xi: TimeVaryingMatrix,
    pub s: usize,
}

impl InternalModelPair {
    fn checked(form: PairForm, phi: TimeVaryingMatrix, xi: TimeVaryingMatrix) -> Result<Self> {
        let (r, c) = phi.shape();
        if r != c || xi.shape() != (1, r) {
            return Err(Error::invalid(format!(
                "pair shapes Φ {:?}, Ξ {:?}",
                phi.shape(),
                xi.shape()
            )));
        }
        Ok(InternalModelPair { form, phi, xi, s: r })
    }

    pub fn explicit(phi: TimeVaryingMatrix, xi: TimeVaryingMatrix) -> Result<Self> {
        Self::checked(PairForm::Explicit, phi, xi)
    }

    pub fn implicit(phi: TimeVaryingMatrix, xi: TimeVaryingMatrix) -> Result<Self> {
        Self::checked(PairForm::Implicit, phi, xi)
    }

    pub fn breakpoints(&self, ta: f64, tb: f64) -> Vec<f64> {
        let mut b = self.phi.breakpoints(ta, tb);
        b.extend(self.xi.breakpoints(ta, tb));
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.dedup();
        b
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RealizeOptions {
    pub pinv_tol: f64,
    pub defect_tol: f64,
    /// Fraction of window samples that must share the modal rank.
    pub rank_agreement: f64,
}

impl Default for RealizeOptions {
    fn default() -> Self {
        RealizeOptions {
            pinv_tol: DEFAULT_PINV_TOL,
            defect_tol: 1e-6,
            rank_agreement: 0.99,
        }
    }
}

/// `(F_im, G_im, H_im(t))` with `m` states realizing an internal model pair.
#[derive(Clone)]
pub struct CanonicalRealization {
    pub form: PairForm,
    pub f_im: DMatrix<f64>,
    pub g_im: DMatrix<f64>,
    pub m: usize,
    /// `Π_M` (explicit) or `M` (implicit), `m × s`.
    pub moment: MatrixTrajectory,
    /// `H_im` per sample, zero-order held where the rank dips.
    pub h_im: MatrixTrajectory,
    pub rank_profile: Vec<usize>,
    /// `‖Ξ − H_im Π_M‖` per sample.
    pub defect: Vec<f64>,
    pub t_hat: f64,
    pub certified_from: f64,
    pub certified_rank: usize,
    pub window_defect: f64,
    /// `H_im` is applied from here on and taken as zero before: the first
    /// time after which `‖H_im‖` stays within `H_TRANSIENT_FACTOR` times its
    /// sup over the certification window.
    pub h_active_from: f64,
    h_fn: TimeVaryingMatrix,
}

/// While `Π_M` grows out of zero its pseudoinverse is huge; this bounds
/// how far above its certified level `‖H_im‖` may be once applied.
pub const H_TRANSIENT_FACTOR: f64 = 10.0;

impl std::fmt::Debug for CanonicalRealization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CanonicalRealization")
            .field("form", &self.form)
            .field("m", &self.m)
            .field("t_hat", &self.t_hat)
            .field("certified_from", &self.certified_from)
            .field("certified_rank", &self.certified_rank)
            .field("window_defect", &self.window_defect)
            .field("h_active_from", &self.h_active_from)
            .finish_non_exhaustive()
    }
}

impl CanonicalRealization {
    /// `H_im(t)` evaluated from the interpolated moment with the pseudoinverse
    /// truncated at the certified rank; zero before `h_active_from`.
    pub fn h_fn(&self) -> TimeVaryingMatrix {
        self.h_fn.clone()
    }

    pub fn sup_h(&self) -> f64 {
        self.h_im.norms().into_iter().fold(0.0, f64::max)
    }
}

/// Pseudoinverse keeping exactly `rank` singular values.
fn truncated_pinv(m: &DMatrix<f64>, rank: usize) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if rank == 0 {
        return DMatrix::zeros(c, r);
    }
    let svd = crate::numkit::svd(m, true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|a, b| svd.singular_values[*b].partial_cmp(&svd.singular_values[*a]).unwrap());
    let mut out = DMatrix::zeros(c, r);
    for &k in idx.iter().take(rank) {
        let s = svd.singular_values[k];
        if s <= 0.0 {
            break;
        }
        out += vt.row(k).transpose() * u.column(k).transpose() / s;
    }
    out
}

struct HFunction {
    moment: MatrixTrajectory,
    phi: Option<TimeVaryingMatrix>,
    xi: TimeVaryingMatrix,
    rank: usize,
    t_hat: f64,
}

impl HFunction {
    fn pi_at(&self, t: f64, side: Side) -> DMatrix<f64> {
        let x = self.moment.eval(t, side);
        match &self.phi {
            Some(phi) => right_divide(&x, &phi.eval_side(t, side)).unwrap_or(x),
            None => x,
        }
    }
}

impl MatrixFunction for HFunction {
    fn shape(&self) -> (usize, usize) {
        (1, self.moment.shape().0)
    }
    fn eval_side(&self, t: f64, side: Side) -> DMatrix<f64> {
        let m = self.moment.shape().0;
        if t < self.t_hat {
            return DMatrix::zeros(1, m);
        }
        let pi = self.pi_at(t, side);
        let rank = self.rank.min(numerical_rank(&pi, 1e-13));
        self.xi.eval_side(t, side) * truncated_pinv(&pi, rank)
    }
    fn breakpoints(&self, ta: f64, tb: f64) -> Vec<f64> {
        let mut b = self.moment.grid().breakpoints.clone();
        b.push(self.t_hat);
        b.extend(self.xi.breakpoints(ta, tb));
        if let Some(p) = &self.phi {
            b.extend(p.breakpoints(ta, tb));
        }
        b.retain(|x| *x >= ta && *x <= tb);
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.dedup();
        b
    }
}

fn hurwitz_check(f: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<f64> {
    let m = f.nrows();
    if f.shape() != (m, m) || g.shape() != (m, 1) || m == 0 {
        return Err(Error::invalid(format!("F {:?} and G {:?} do not form a pair", f.shape(), g.shape())));
    }
    let margin = f.complex_eigenvalues().iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    if !(margin < 0.0) {
        return Err(Error::NotHurwitz(format!("F_im has spectral abscissa {margin:.3e}")));
    }
    // PBH: rank [F − λI, G] = m at every eigenvalue; a Krylov matrix is too
    // badly scaled for companion pairs of moderate size.
    let fc = f.map(|v| nalgebra::Complex::new(v, 0.0));
    let gc = g.map(|v| nalgebra::Complex::new(v, 0.0));
    for l in f.complex_eigenvalues().iter() {
        let mut pbh = DMatrix::zeros(m, m + 1);
        pbh.view_mut((0, 0), (m, m))
            .copy_from(&(&fc - DMatrix::identity(m, m) * *l));
        pbh.view_mut((0, m), (m, 1)).copy_from(&gc);
        let sv = pbh.singular_values();
        let smax = sv.max();
        if sv.min() <= 1e-12 * smax.max(1.0) {
            return Err(Error::invalid(format!("(F_im, G_im) is not controllable at λ = {l}")));
        }
    }
    Ok(margin)
}

/// Realization of an explicit pair: integrates `Ψ̇_M = FΨ_M + GΞ̂Φ̂` from
/// `Ψ_M(t_hat) = 0`, sets `Π_M = Ψ_MΦ̂⁻¹` and `H_im = Ξ̂Π_M†`.
pub fn realize_explicit(
    pair: &InternalModelPair,
    f_im: &DMatrix<f64>,
    g_im: &DMatrix<f64>,
    grid: &Grid,
    t_hat: f64,
    opts: RealizeOptions,
) -> Result<CanonicalRealization> {
    if pair.form != PairForm::Explicit {
        return Err(Error::invalid("realize_explicit needs an explicit pair"));
    }
    realize(pair, f_im, g_im, grid, t_hat, opts)
}

/// Realization of an implicit pair: integrates `Ṁ = FM − MΦ̃ + GΞ̃` from
/// `M(t_hat) = 0` and sets `H_im = Ξ̃M†`.
pub fn realize_implicit(
    pair: &InternalModelPair,
    f_im: &DMatrix<f64>,
    g_im: &DMatrix<f64>,
    grid: &Grid,
    t_hat: f64,
    opts: RealizeOptions,
) -> Result<CanonicalRealization> {
    if pair.form != PairForm::Implicit {
        return Err(Error::invalid("realize_implicit needs an implicit pair"));
    }
    realize(pair, f_im, g_im, grid, t_hat, opts)
}

fn realize(
    pair: &InternalModelPair,
    f_im: &DMatrix<f64>,
    g_im: &DMatrix<f64>,
    grid: &Grid,
    t_hat: f64,
    opts: RealizeOptions,
) -> Result<CanonicalRealization> {
    let margin = hurwitz_check(f_im, g_im)?;
    let m = f_im.nrows();
    let s = pair.s;
    if m < s {
        return Err(Error::invalid(format!("realization dimension m = {m} below pair dimension s = {s}")));
    }
    if t_hat < grid.t_start || t_hat >= grid.t_end {
        return Err(Error::invalid(format!("t_hat = {t_hat} outside the grid")));
    }
    let grid = grid
        .restrict(t_hat, grid.t_end)?
        .with_breakpoints(pair.breakpoints(t_hat, grid.t_end))?;
    let explicit = pair.form == PairForm::Explicit;
    let x0 = DMatrix::zeros(m, s);
    let raw = if explicit {
        OdeSolver::new(&grid).solve(
            |t, x, side| f_im * x + g_im * (pair.xi.eval_side(t, side) * pair.phi.eval_side(t, side)),
            &x0,
        )?
    } else {
        OdeSolver::new(&grid).solve(
            |t, x, side| f_im * x - x * pair.phi.eval_side(t, side) + g_im * pair.xi.eval_side(t, side),
            &x0,
        )?
    };
    let moment = if explicit {
        raw.map(m, s, |_, t, side, x| right_divide(x, &pair.phi.eval_side(t, side)))?
    } else {
        raw.clone()
    };

    let certified_from = (t_hat + 5.0 / margin.abs()).min(grid.t_end);
    let n = moment.len();
    let rank_profile: Vec<usize> = (0..n).map(|i| numerical_rank(&moment.value(i), opts.pinv_tol)).collect();
    let window: Vec<usize> = (0..n).filter(|&i| moment.time(i) >= certified_from).collect();
    if window.is_empty() {
        return Err(Error::RankDrift("certification window is empty; extend the horizon".into()));
    }
    let mut counts = vec![0usize; m.min(s) + 1];
    for &i in &window {
        counts[rank_profile[i]] += 1;
    }
    let (rank, hits) = counts
        .iter()
        .enumerate()
        .max_by_key(|(r, c)| (**c, *r))
        .map(|(r, c)| (r, *c))
        .unwrap();
    let agreement = hits as f64 / window.len() as f64;
    if agreement < opts.rank_agreement {
        return Err(Error::RankDrift(format!(
            "modal rank {rank} holds on {:.2}% of the window",
            100.0 * agreement
        )));
    }
    let bps = &grid.breakpoints;
    for &i in &window {
        let t = moment.time(i);
        let adjacent = bps.iter().any(|b| (t - b).abs() <= 1.5 * grid.base_step);
        if adjacent && rank_profile[i] != rank {
            return Err(Error::RankDrift(format!(
                "rank {} at t = {t:.6} next to a breakpoint, modal rank {rank}",
                rank_profile[i]
            )));
        }
    }

    let mut h_prev = DMatrix::zeros(1, m);
    let mut defect = Vec::with_capacity(n);
    let mut h_data = Vec::with_capacity(n * m);
    for i in 0..n {
        let (t, side) = (moment.time(i), moment.side(i));
        let pi = moment.value(i);
        let xi = pair.xi.eval_side(t, side);
        let h = if rank_profile[i] == rank {
            let h = &xi * truncated_pinv(&pi, rank);
            h_prev = h.clone();
            h
        } else {
            h_prev.clone()
        };
        defect.push((&xi - &h * &pi).norm());
        h_data.extend_from_slice(h.as_slice());
    }
    let window_defect = window.iter().map(|&i| defect[i]).fold(0.0, f64::max);
    if !(window_defect <= opts.defect_tol) {
        return Err(Error::RankDrift(format!(
            "Ξ − H_im·Π_M defect {window_defect:.3e} exceeds {:.1e} on the certification window",
            opts.defect_tol
        )));
    }
    let h_im = moment.map(1, m, |i, _, _, _| Ok(DMatrix::from_column_slice(1, m, &h_data[i * m..(i + 1) * m])))?;
    let h_norms = h_im.norms();
    let window_sup = window.iter().map(|&i| h_norms[i]).fold(0.0, f64::max);
    let h_active_from = match (0..n).rev().find(|&i| h_norms[i] > H_TRANSIENT_FACTOR * window_sup) {
        Some(i) if i + 1 < n => moment.time(i + 1).min(certified_from),
        Some(_) => certified_from,
        None => t_hat,
    };
    let h_fn = TimeVaryingMatrix::new(HFunction {
        moment: raw,
        phi: explicit.then(|| pair.phi.clone()),
        xi: pair.xi.clone(),
        rank,
        t_hat: h_active_from,
    });
    Ok(CanonicalRealization {
        form: pair.form,
        f_im: f_im.clone(),
        g_im: g_im.clone(),
        m,
        moment,
        h_im,
        rank_profile,
        defect,
        t_hat,
        certified_from,
        certified_rank: rank,
        window_defect,
        h_active_from,
        h_fn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_explicit_fixed_point() {
        let pair = InternalModelPair::explicit(
            TimeVaryingMatrix::scalar_constant(1.0),
            TimeVaryingMatrix::scalar_constant(1.0),
        )
        .unwrap();
        let grid = Grid::uniform(0.0, 20.0, 1e-3).unwrap();
        let r = realize_explicit(&pair, &s(-1.0), &s(1.0), &grid, 0.0, RealizeOptions::default()).unwrap();
        assert!((r.moment.last()[(0, 0)] - 1.0).abs() < 1e-6);
        assert!((r.h_im.last()[(0, 0)] - 1.0).abs() < 1e-6);
        assert!(r.window_defect < 1e-12);
        assert_eq!(r.certified_rank, 1);
        assert!((r.h_fn().eval(17.3)[(0, 0)] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn scalar_implicit_steady_state() {
        let pair = InternalModelPair::implicit(
            TimeVaryingMatrix::scalar_constant(0.0),
            TimeVaryingMatrix::scalar_constant(1.0),
        )
        .unwrap();
        let grid = Grid::uniform(0.0, 20.0, 1e-3).unwrap();
        let r = realize_implicit(&pair, &s(-1.0), &s(1.0), &grid, 0.0, RealizeOptions::default()).unwrap();
        assert!((r.moment.last()[(0, 0)] - 1.0).abs() < 1e-6);
        assert!((r.h_im.last()[(0, 0)] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_output_map_gives_zero_h() {
        let pair = InternalModelPair::implicit(
            TimeVaryingMatrix::scalar_constant(0.0),
            TimeVaryingMatrix::scalar_constant(0.0),
        )
        .unwrap();
        let grid = Grid::uniform(0.0, 10.0, 1e-2).unwrap();
        let r = realize_implicit(&pair, &s(-1.0), &s(1.0), &grid, 0.0, RealizeOptions::default()).unwrap();
        assert_eq!(r.certified_rank, 0);
        assert_eq!(r.sup_h(), 0.0);
        assert_eq!(r.window_defect, 0.0);
    }

    #[test]
    fn unstable_f_rejected() {
        let pair = InternalModelPair::implicit(
            TimeVaryingMatrix::scalar_constant(0.0),
            TimeVaryingMatrix::scalar_constant(1.0),
        )
        .unwrap();
        let grid = Grid::uniform(0.0, 1.0, 1e-2).unwrap();
        let r = realize_implicit(&pair, &s(1.0), &s(1.0), &grid, 0.0, RealizeOptions::default());
        assert!(matches!(r, Err(Error::NotHurwitz(_))));
    }
}

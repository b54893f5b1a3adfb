use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::tvm::{MatrixFunction, TimeVaryingMatrix};
use crate::error::{Error, Result};
use crate::numkit::{linear_fit, Grid, Side};

/// `ω(t) = Λ(t, t0)ω0` with `Λ(t0, t0) = I`.
///
/// A generator whose raw value at `t0` is not the identity is rebased as
/// `Λ(t) = Λ_raw(t)Λ_raw(t0)⁻¹`; initial conditions given for the raw
/// generator map through [`ExplicitExosystem::map_initial`].
#[derive(Debug, Clone)]
pub struct ExplicitExosystem {
    lambda: TimeVaryingMatrix,
    raw_at_t0: DMatrix<f64>,
    pub t0: f64,
    pub nu: usize,
    pub inverse_bound: Option<f64>,
}

struct Rebased {
    raw: TimeVaryingMatrix,
    inv0: DMatrix<f64>,
    t0: f64,
}

impl MatrixFunction for Rebased {
    fn shape(&self) -> (usize, usize) {
        self.raw.shape()
    }
    fn eval_side(&self, t: f64, side: Side) -> DMatrix<f64> {
        if t == self.t0 && side == Side::Right {
            return DMatrix::identity(self.inv0.nrows(), self.inv0.ncols());
        }
        self.raw.eval_side(t, side) * &self.inv0
    }
    fn breakpoints(&self, ta: f64, tb: f64) -> Vec<f64> {
        self.raw.breakpoints(ta, tb)
    }
    fn derivative(&self, t: f64, side: Side) -> Option<DMatrix<f64>> {
        self.raw.derivative(t, side).map(|d| d * &self.inv0)
    }
}

impl ExplicitExosystem {
    pub fn new(raw: TimeVaryingMatrix, t0: f64) -> Result<Self> {
        let (r, c) = raw.shape();
        if r != c || r == 0 {
            return Err(Error::invalid(format!("Λ must be square, got {r}×{c}")));
        }
        let raw0 = raw.eval_side(t0, Side::Right);
        let inv0 = raw0
            .clone()
            .try_inverse()
            .filter(|m| m.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::NotInvertible(format!("Λ({t0}) is singular")))?;
        let lambda = if raw0 == DMatrix::identity(r, r) {
            raw
        } else {
            TimeVaryingMatrix::new(Rebased { raw, inv0, t0 })
        };
        Ok(ExplicitExosystem {
            lambda,
            raw_at_t0: raw0,
            t0,
            nu: r,
            inverse_bound: None,
        })
    }

    pub fn lambda(&self) -> &TimeVaryingMatrix {
        &self.lambda
    }

    pub fn eval(&self, t: f64, side: Side) -> DMatrix<f64> {
        self.lambda.eval_side(t, side)
    }

    pub fn breakpoints(&self, ta: f64, tb: f64) -> Vec<f64> {
        self.lambda.breakpoints(ta, tb)
    }

    /// Maps an initial condition for the raw generator to one for `Λ`.
    pub fn map_initial(&self, raw_omega0: &DVector<f64>) -> DVector<f64> {
        &self.raw_at_t0 * raw_omega0
    }

    pub fn raw_at_t0(&self) -> &DMatrix<f64> {
        &self.raw_at_t0
    }

    pub fn omega(&self, t: f64, side: Side, omega0: &DVector<f64>) -> DVector<f64> {
        self.eval(t, side) * omega0
    }

    /// Grid on `[t0, t0 + horizon]` carrying the breakpoints of `Λ`.
    pub fn grid(&self, horizon: f64, step: f64) -> Result<Grid> {
        let t1 = self.t0 + horizon;
        Grid::new(self.t0, t1, step, self.breakpoints(self.t0, t1))
    }
}

/// Sample times for validations: every piece gets at least
/// `per_piece` points and spacing no coarser than `max_gap`.
pub(crate) fn validation_samples(
    f: &TimeVaryingMatrix,
    t0: f64,
    horizon: f64,
    per_piece: usize,
    max_gap: f64,
) -> Vec<(f64, Side)> {
    let t1 = t0 + horizon;
    let mut edges = vec![t0];
    edges.extend(f.breakpoints(t0, t1).into_iter().filter(|b| *b > t0 && *b < t1));
    edges.push(t1);
    let mut out = Vec::new();
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let n = per_piece.max(2).max(((b - a) / max_gap).ceil() as usize + 1);
        for i in 0..n {
            let t = a + (b - a) * i as f64 / (n - 1) as f64;
            let side = if i + 1 == n { Side::Left } else { Side::Right };
            out.push((t, side));
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct ExoValidationReport {
    pub horizon: f64,
    pub samples: usize,
    pub min_singular_value: f64,
    pub sup_norm: f64,
    pub sup_inverse_norm: f64,
    pub breakpoint_count: usize,
    pub nonsingular: bool,
    pub finite_bound: bool,
    pub bounded_inverse: bool,
    pub pass: bool,
    /// Samples `(t, ‖Λ(t)‖, ‖Λ(t)⁻¹‖)` in time order.
    #[serde(skip)]
    pub profile: Vec<(f64, f64, f64)>,
}

pub const NONSINGULAR_THRESHOLD: f64 = 1e-9;

/// Dense-sampling check of non-singularity, finite-time boundedness and
/// bounded inverse. The inverse bound is a finite-horizon heuristic: it is
/// flagged when `‖Λ⁻¹‖` still grows by more than half its level over the
/// last half of the horizon.
pub fn validate_exosystem(
    exo: &ExplicitExosystem,
    horizon: f64,
    samples_per_piece: usize,
) -> Result<ExoValidationReport> {
    if !(horizon > 0.0) {
        return Err(Error::invalid("validation horizon must be positive"));
    }
    let pts = validation_samples(exo.lambda(), exo.t0, horizon, samples_per_piece, 1e-3);
    let mut min_sv = f64::INFINITY;
    let mut sup = 0.0f64;
    let mut sup_inv = 0.0f64;
    let mut profile = Vec::with_capacity(pts.len());
    let mut finite = true;
    for &(t, side) in &pts {
        let l = exo.eval(t, side);
        if !l.iter().all(|v| v.is_finite()) {
            finite = false;
            continue;
        }
        let sv = crate::numkit::singular_values(&l);
        let smax = sv.max();
        let smin = sv.min();
        min_sv = min_sv.min(smin);
        sup = sup.max(smax);
        let inv = if smin > 0.0 { 1.0 / smin } else { f64::INFINITY };
        sup_inv = sup_inv.max(inv);
        profile.push((t, smax, inv));
    }
    let t_half = exo.t0 + 0.5 * horizon;
    let (xs, ys): (Vec<f64>, Vec<f64>) = profile
        .iter()
        .filter(|p| p.0 >= t_half && p.2.is_finite())
        .map(|p| (p.0, p.2))
        .unzip();
    let (slope, _) = linear_fit(&xs, &ys);
    let mean = if ys.is_empty() {
        0.0
    } else {
        ys.iter().sum::<f64>() / ys.len() as f64
    };
    let growing = slope * 0.5 * horizon > 0.5 * mean;
    let nonsingular = min_sv > NONSINGULAR_THRESHOLD;
    let bounded_inverse = nonsingular && sup_inv.is_finite() && !growing;
    let breakpoint_count = exo.breakpoints(exo.t0, exo.t0 + horizon).len();
    Ok(ExoValidationReport {
        horizon,
        samples: pts.len(),
        min_singular_value: min_sv,
        sup_norm: sup,
        sup_inverse_norm: sup_inv,
        breakpoint_count,
        nonsingular,
        finite_bound: finite && sup.is_finite(),
        bounded_inverse,
        pass: nonsingular && finite && bounded_inverse,
        profile,
    })
}

/// Where each original component sits inside the inflated state, plus the
/// map from component initial conditions to `ω0`.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub slots: Vec<usize>,
    pub nu: usize,
    initial_map: DMatrix<f64>,
}

impl Embedding {
    /// `ω0` for the inflated exosystem from one initial value per component.
    pub fn apply(&self, omega_tilde0: &DVector<f64>) -> DVector<f64> {
        let mut raw = DVector::zeros(self.nu);
        for (i, &s) in self.slots.iter().enumerate() {
            raw[s] = omega_tilde0[i];
        }
        &self.initial_map * raw
    }
}

#[derive(Debug, Clone)]
pub struct Inflation {
    pub exo: ExplicitExosystem,
    pub p_hat: DMatrix<f64>,
    pub embedding: Embedding,
}

/// Makes a diagonal generator of scalar components invertible. Components
/// that vanish somewhere on `[t0, t0 + horizon]` are paired with their
/// companion into the block `[[φ, −φ̂], [φ̂, φ]]`; the others stay scalar.
pub fn inflate_to_invertible(
    components: &[TimeVaryingMatrix],
    companions: &[Option<TimeVaryingMatrix>],
    p_row: &DMatrix<f64>,
    t0: f64,
    horizon: f64,
) -> Result<Inflation> {
    if components.is_empty() {
        return Err(Error::invalid("no exosystem components"));
    }
    if companions.len() != components.len() {
        return Err(Error::invalid("one companion slot per component is required"));
    }
    if p_row.shape() != (1, components.len()) {
        return Err(Error::invalid("P row must be 1×(number of components)"));
    }
    let mut blocks = Vec::new();
    let mut slots = Vec::new();
    let mut nu = 0;
    for (i, c) in components.iter().enumerate() {
        if c.shape() != (1, 1) {
            return Err(Error::invalid(format!("component {i} is not scalar")));
        }
        let pts = validation_samples(c, t0, horizon, 8, 1e-3);
        let vals: Vec<f64> = pts.iter().map(|&(t, s)| c.eval_side(t, s)[(0, 0)]).collect();
        let vanishes = vals.iter().any(|v| v.abs() <= NONSINGULAR_THRESHOLD)
            || vals.windows(2).any(|w| w[0].signum() != w[1].signum());
        slots.push(nu);
        if !vanishes {
            blocks.push(c.clone());
            nu += 1;
            continue;
        }
        let comp = companions[i].as_ref().ok_or_else(|| {
            Error::NotInvertible(format!("component {i} vanishes and has no companion"))
        })?;
        if comp.shape() != (1, 1) {
            return Err(Error::invalid(format!("companion {i} is not scalar")));
        }
        for (&(t, s), &v) in pts.iter().zip(&vals) {
            let w = comp.eval_side(t, s)[(0, 0)];
            if (v * v + w * w).sqrt() <= NONSINGULAR_THRESHOLD {
                return Err(Error::NotInvertible(format!(
                    "component {i} and its companion vanish together at t = {t}"
                )));
            }
        }
        blocks.push(TimeVaryingMatrix::rotation_block(c.clone(), comp.clone()));
        nu += 2;
    }
    let raw = TimeVaryingMatrix::block_diag(blocks);
    let exo = ExplicitExosystem::new(raw, t0)?;
    let mut p_hat = DMatrix::zeros(1, nu);
    for (i, &s) in slots.iter().enumerate() {
        p_hat[(0, s)] = p_row[(0, i)];
    }
    let embedding = Embedding {
        slots,
        nu,
        initial_map: exo.raw_at_t0().clone(),
    };
    Ok(Inflation {
        exo,
        p_hat,
        embedding,
    })
}

/// `Q_Λ(t) = QΛ̇(t)Λ(t)⁻¹`.
///
/// Uses the closed-form derivative of `Λ` when available; otherwise finite
/// differences with step `1e-5` kept inside the current smooth piece.
pub fn q_lambda(exo: &ExplicitExosystem, q: &DMatrix<f64>) -> Result<TimeVaryingMatrix> {
    if q.shape() != (1, exo.nu) {
        return Err(Error::invalid(format!("Q must be 1×{}", exo.nu)));
    }
    Ok(TimeVaryingMatrix::new(QLambda {
        lambda: exo.lambda().clone(),
        q: q.clone(),
    }))
}

struct QLambda {
    lambda: TimeVaryingMatrix,
    q: DMatrix<f64>,
}

impl MatrixFunction for QLambda {
    fn shape(&self) -> (usize, usize) {
        (1, self.q.ncols())
    }
    fn eval_side(&self, t: f64, side: Side) -> DMatrix<f64> {
        let l = self.lambda.eval_side(t, side);
        let dl = self
            .lambda
            .derivative(t, side)
            .unwrap_or_else(|| fd_derivative(&self.lambda, t, side, 1e-5));
        let rhs = (&self.q * dl).transpose();
        match l.transpose().lu().solve(&rhs) {
            Some(x) => x.transpose(),
            None => DMatrix::from_element(1, self.q.ncols(), f64::NAN),
        }
    }
    fn breakpoints(&self, ta: f64, tb: f64) -> Vec<f64> {
        self.lambda.breakpoints(ta, tb)
    }
}

/// Derivative by finite differences that never cross a breakpoint: central
/// inside a piece, three-point one-sided near its edges.
pub fn fd_derivative(f: &TimeVaryingMatrix, t: f64, side: Side, h: f64) -> DMatrix<f64> {
    let near = f.breakpoints(t - 4.0 * h, t + 4.0 * h);
    let lo = near
        .iter()
        .copied()
        .filter(|b| *b < t || (*b == t && side == Side::Right))
        .fold(f64::NEG_INFINITY, f64::max);
    let hi = near
        .iter()
        .copied()
        .filter(|b| *b > t || (*b == t && side == Side::Left))
        .fold(f64::INFINITY, f64::min);
    let ev = |s: f64| {
        let sd = if s <= lo { Side::Right } else if s >= hi { Side::Left } else { Side::Right };
        f.eval_side(s, sd)
    };
    if t - h >= lo && t + h <= hi {
        (ev(t + h) - ev(t - h)) / (2.0 * h)
    } else if t + 2.0 * h <= hi {
        (ev(t) * -3.0 + ev(t + h) * 4.0 - ev(t + 2.0 * h)) / (2.0 * h)
    } else {
        (ev(t) * 3.0 - ev(t - h) * 4.0 + ev(t - 2.0 * h)) / (2.0 * h)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QLambdaReport {
    pub sup_norm: f64,
    pub cap: f64,
    pub pass: bool,
}

/// Sup of `‖Q_Λ‖` over the horizon; exceeding `cap` inside a smooth piece
/// means the bounded-Q_Λ requirement fails.
pub fn q_lambda_report(
    exo: &ExplicitExosystem,
    q: &DMatrix<f64>,
    horizon: f64,
    cap: f64,
) -> Result<QLambdaReport> {
    let ql = q_lambda(exo, q)?;
    let pts = validation_samples(exo.lambda(), exo.t0, horizon, 8, 1e-2);
    let mut sup = 0.0f64;
    for (t, side) in pts {
        let v = ql.eval_side(t, side).norm();
        if !v.is_finite() || v > cap {
            return Err(Error::AssumptionViolated {
                assumption: "bounded QΛ̇Λ⁻¹".into(),
                detail: format!("‖QΛ̇Λ⁻¹‖ = {v:.3e} exceeds {cap:.1e} at t = {t}"),
            });
        }
        sup = sup.max(v);
    }
    Ok(QLambdaReport {
        sup_norm: sup,
        cap,
        pass: true,
    })
}

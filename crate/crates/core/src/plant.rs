//! SISO LTI plants: relative degree, normal form, zero dynamics and the
//! non-smooth non-resonance diagnostic.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exo::ExplicitExosystem;
use crate::numkit::{linear_fit, OdeOptions, OdeSolver};

/// `ẋ = Ax + Bu + Pω`, `e = Cx + Du + Qω`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiPlant {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: f64,
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

pub const PBH_THRESHOLD: f64 = 1e-8;

impl LtiPlant {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: f64,
        p: DMatrix<f64>,
        q: DMatrix<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::invalid("A must be square and nonempty"));
        }
        if b.shape() != (n, 1) {
            return Err(Error::invalid(format!("B must be {n}×1")));
        }
        if c.shape() != (1, n) {
            return Err(Error::invalid(format!("C must be 1×{n}")));
        }
        let nu = q.ncols();
        if q.nrows() != 1 || p.shape() != (n, nu) {
            return Err(Error::invalid(format!(
                "P must be {n}×ν and Q 1×ν, got {:?} and {:?}",
                p.shape(),
                q.shape()
            )));
        }
        let finite = [&a, &b, &c, &p, &q]
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()))
            && d.is_finite();
        if !finite {
            return Err(Error::invalid("plant matrices must be finite"));
        }
        let plant = LtiPlant { a, b, c, d, p, q };
        if !plant.is_stabilizable() {
            return Err(Error::StabilityViolation("(A, B) is not stabilizable".into()));
        }
        Ok(plant)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn nu(&self) -> usize {
        self.q.ncols()
    }

    /// PBH test on every eigenvalue with nonnegative real part.
    pub fn is_stabilizable(&self) -> bool {
        let n = self.n();
        let eig = self.a.complex_eigenvalues();
        for lam in eig.iter() {
            if lam.re < 0.0 {
                continue;
            }
            let mut m = DMatrix::<Complex64>::zeros(n, n + 1);
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] = Complex64::new(self.a[(i, j)], 0.0);
                }
                m[(i, i)] -= lam;
                m[(i, n)] = Complex64::new(self.b[(i, 0)], 0.0);
            }
            let smin = m.singular_values().min();
            if smin <= PBH_THRESHOLD {
                return false;
            }
        }
        true
    }

    /// Same plant with different exogenous coupling.
    pub fn with_coupling(&self, p: DMatrix<f64>, q: DMatrix<f64>) -> Result<Self> {
        LtiPlant::new(self.a.clone(), self.b.clone(), self.c.clone(), self.d, p, q)
    }

    /// `A_π = A − BD⁻¹C` (requires `D ≠ 0`).
    pub fn a_pi(&self) -> DMatrix<f64> {
        &self.a - &self.b * &self.c / self.d
    }

    /// Dynamics matrix of the zero dynamics: `A − BD⁻¹C` when `D ≠ 0`,
    /// the `A11` block of the normal form when the relative degree is 1.
    pub fn zero_dynamics(&self) -> Result<DMatrix<f64>> {
        match relative_degree(self)? {
            0 => Ok(self.a_pi()),
            1 => Ok(normal_form(self)?.a11),
            r => Err(Error::Unsupported(format!("relative degree {r}"))),
        }
    }
}

/// 0 when `D ≠ 0`; otherwise the least `r` with
/// `|CA^{r−1}B| > 1e-10·‖C‖‖B‖`.
pub fn relative_degree(plant: &LtiPlant) -> Result<usize> {
    if plant.d != 0.0 {
        return Ok(0);
    }
    let tol = 1e-10 * plant.c.norm() * plant.b.norm();
    let mut v = plant.b.clone();
    for r in 1..=plant.n() {
        let m = (&plant.c * &v)[(0, 0)];
        if m.abs() > tol {
            return Ok(r);
        }
        v = &plant.a * v;
    }
    Err(Error::DegenerateRelativeDegree)
}

#[derive(Debug, Clone)]
pub struct NormalForm {
    pub t: DMatrix<f64>,
    pub t_inv: DMatrix<f64>,
    pub a11: DMatrix<f64>,
    pub a12: DMatrix<f64>,
    pub a21: DMatrix<f64>,
    pub a22: f64,
    pub b: f64,
    pub p1: DMatrix<f64>,
    pub p2: DMatrix<f64>,
    pub g1: DMatrix<f64>,
    pub g2: DMatrix<f64>,
    pub zero_spectrum: Vec<Complex64>,
    pub minimum_phase: bool,
}

/// Rows spanning the orthogonal complement of `v`, from the Householder
/// reflector that maps `v` to a multiple of `e1`.
fn complement_rows(v: &DVector<f64>) -> DMatrix<f64> {
    let n = v.len();
    let nv = v.norm();
    let mut w = v.clone();
    let s = if v[0] >= 0.0 { 1.0 } else { -1.0 };
    w[0] += s * nv;
    let ww = w.dot(&w);
    let h = DMatrix::<f64>::identity(n, n) - (&w * w.transpose()) * (2.0 / ww);
    h.columns(1, n - 1).transpose()
}

/// Normal form of a relative-degree-one plant under `z = T1 x, y = Cx`.
///
/// `T1` spans the orthogonal complement of `B`, so that `T1 B = 0` and the
/// input enters only the output channel.
pub fn normal_form(plant: &LtiPlant) -> Result<NormalForm> {
    let r = relative_degree(plant)?;
    if r != 1 {
        return Err(Error::WrongRelativeDegree(r));
    }
    let n = plant.n();
    let bv = plant.b.column(0).into_owned();
    let mut t = DMatrix::zeros(n, n);
    if n > 1 {
        t.view_mut((0, 0), (n - 1, n)).copy_from(&complement_rows(&bv));
    }
    t.row_mut(n - 1).copy_from(&plant.c.row(0));
    let t_inv = t
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NotInvertible("normal-form transformation".into()))?;
    let at = &t * &plant.a * &t_inv;
    let z = n - 1;
    let a11 = at.view((0, 0), (z, z)).into_owned();
    let a12 = at.view((0, z), (z, 1)).into_owned();
    let a21 = at.view((z, 0), (1, z)).into_owned();
    let a22 = at[(z, z)];
    let tp = &t * &plant.p;
    let p1 = tp.view((0, 0), (z, plant.nu())).into_owned();
    let p2 = tp.view((z, 0), (1, plant.nu())).into_owned();
    let g1 = &p1 - &a12 * &plant.q;
    let g2 = &p2 - &plant.q * a22;
    let zero_spectrum: Vec<Complex64> = if z == 0 {
        Vec::new()
    } else {
        a11.complex_eigenvalues().iter().copied().collect()
    };
    let minimum_phase = zero_spectrum.iter().all(|l| l.re < -1e-9);
    Ok(NormalForm {
        b: (&plant.c * &plant.b)[(0, 0)],
        t,
        t_inv,
        a11,
        a12,
        a21,
        a22,
        p1,
        p2,
        g1,
        g2,
        zero_spectrum,
        minimum_phase,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct NonResonanceReport {
    pub horizon: f64,
    pub sup_norm: f64,
    pub final_norm: f64,
    /// Least-squares slope of `‖Ω‖` over the last half of the horizon.
    pub tail_slope: f64,
    pub bounded_trend: bool,
    pub pass: bool,
    pub note: String,
}

pub const TREND_SLOPE_LIMIT: f64 = 1e-3;

/// `‖Ω(t)‖` for `Ω(t) = ∫ (Λ(τ)Λ(t)⁻¹)ᵀ ⊗ e^{A_z(t−τ)} dτ`, computed as
/// `(Λ(t)⁻ᵀ ⊗ I)W(t)` with `Ẇ = Λᵀ ⊗ I + (I ⊗ A_z)W`, `W(t0) = 0`.
///
/// Finite-horizon heuristic: PASS when the sup is finite and the tail slope
/// stays under `1e-3` per second.
pub fn nonresonance_check_az(
    a_z: &DMatrix<f64>,
    exo: &ExplicitExosystem,
    horizon: f64,
    step: f64,
) -> Result<NonResonanceReport> {
    let z = a_z.nrows();
    let nu = exo.nu;
    let note = "finite-horizon diagnostic; boundedness for all t cannot be certified".to_string();
    if z == 0 {
        return Ok(NonResonanceReport {
            horizon,
            sup_norm: 0.0,
            final_norm: 0.0,
            tail_slope: 0.0,
            bounded_trend: true,
            pass: true,
            note,
        });
    }
    let grid = exo.grid(horizon, step)?;
    let iz = DMatrix::<f64>::identity(z, z);
    let big_a = DMatrix::<f64>::identity(nu, nu).kronecker(a_z);
    let w = OdeSolver::new(&grid)
        .options(OdeOptions {
            store_derivatives: false,
            norm_cap: Some(1e12),
            ..Default::default()
        })
        .solve(
            |t, w, side| exo.eval(t, side).transpose().kronecker(&iz) + &big_a * w,
            &DMatrix::zeros(nu * z, nu * z),
        )?;
    let mut norms = Vec::with_capacity(w.len());
    for i in 0..w.len() {
        let lt = exo.eval(w.time(i), w.side(i)).transpose().kronecker(&iz);
        let omega = lt
            .lu()
            .solve(&w.value(i))
            .ok_or_else(|| Error::NotInvertible(format!("Λ({})", w.time(i))))?;
        norms.push(omega.norm());
    }
    let t_half = exo.t0 + 0.5 * horizon;
    let (xs, ys): (Vec<f64>, Vec<f64>) = w
        .times()
        .iter()
        .zip(&norms)
        .filter(|(t, _)| **t >= t_half)
        .map(|(t, n)| (*t, *n))
        .unzip();
    let (slope, _) = linear_fit(&xs, &ys);
    let sup = norms.iter().copied().fold(0.0, f64::max);
    let bounded_trend = slope < TREND_SLOPE_LIMIT;
    Ok(NonResonanceReport {
        horizon,
        sup_norm: sup,
        final_norm: *norms.last().unwrap_or(&0.0),
        tail_slope: slope,
        bounded_trend,
        pass: sup.is_finite() && bounded_trend,
        note,
    })
}

pub fn nonresonance_check(
    plant: &LtiPlant,
    exo: &ExplicitExosystem,
    horizon: f64,
) -> Result<NonResonanceReport> {
    let a_z = plant.zero_dynamics()?;
    nonresonance_check_az(&a_z, exo, horizon, 1e-3)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    #[test]
    fn relative_degrees() {
        let z = DMatrix::zeros(2, 1);
        let q = DMatrix::zeros(1, 1);
        let a = m(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = m(2, 1, &[0.0, 1.0]);
        let c = m(1, 2, &[1.0, 0.0]);
        let p = LtiPlant::new(a.clone(), b.clone(), c.clone(), 0.0, z.clone(), q.clone()).unwrap();
        assert_eq!(relative_degree(&p).unwrap(), 2);
        let p = LtiPlant::new(a, b, c, 1.0, z, q).unwrap();
        assert_eq!(relative_degree(&p).unwrap(), 0);
    }

    #[test]
    fn degenerate_relative_degree() {
        let a = m(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let b = m(2, 1, &[1.0, 0.0]);
        let c = m(1, 2, &[0.0, 1.0]);
        let p = LtiPlant::new(a, b, c, 0.0, DMatrix::zeros(2, 1), DMatrix::zeros(1, 1)).unwrap();
        assert_eq!(relative_degree(&p), Err(Error::DegenerateRelativeDegree));
    }

    #[test]
    fn non_minimum_phase_instance() {
        let a = m(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        let b = m(2, 1, &[1.0, 1.0]);
        let c = m(1, 2, &[1.0, 0.0]);
        let p = LtiPlant::new(a, b, c, 0.0, DMatrix::zeros(2, 1), DMatrix::zeros(1, 1)).unwrap();
        let nf = normal_form(&p).unwrap();
        // transmission zero of 1/(s+1) + ... : (s-1)(s+1)·C(sI-A)^{-1}B = s-1
        assert_eq!(nf.zero_spectrum.len(), 1);
        assert!((nf.zero_spectrum[0].re - 1.0).abs() < 1e-12);
        assert!(!nf.minimum_phase);
    }

    #[test]
    fn unstabilizable_rejected() {
        let a = m(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let b = m(2, 1, &[0.0, 1.0]);
        let c = m(1, 2, &[1.0, 1.0]);
        let r = LtiPlant::new(a, b, c, 0.0, DMatrix::zeros(2, 1), DMatrix::zeros(1, 1));
        assert!(matches!(r, Err(Error::StabilityViolation(_))));
    }
}

//! The RLC load-regulation benchmark: an inductor in series with a load
//! capacitor and resistor, fed through an input resistor, disturbed by a
//! Thévenin source and asked to track a diverging triangular reference.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exo::{build_signal, inflate_to_invertible, ExplicitExosystem, Inflation, SignalKind, SignalParams, TimeVaryingMatrix};
use crate::plant::LtiPlant;
use crate::regeq::RegulatorSolution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RlcParams {
    pub r_in: f64,
    pub r_th: f64,
    pub l_r: f64,
    pub c_l: f64,
    pub r_l: f64,
}

impl RlcParams {
    pub const NOMINAL: RlcParams = RlcParams {
        r_in: 0.5,
        r_th: 5.0,
        l_r: 0.1,
        c_l: 0.3,
        r_l: 10.0,
    };

    /// The off-nominal load used for the robust designs.
    pub const PERTURBED: RlcParams = RlcParams {
        c_l: 0.156,
        r_l: 7.891,
        ..RlcParams::NOMINAL
    };

    pub fn with_load(self, c_l: f64, r_l: f64) -> Self {
        RlcParams { c_l, r_l, ..self }
    }

    /// State `(i_L, v_C)`, exogenous `ω = (d_th, r_f, companion)`,
    /// error `e = y − r_f`.
    pub fn plant(&self) -> Result<LtiPlant> {
        let e1 = 1.0 / ((self.r_in + self.r_th) * self.l_r);
        let e2 = -self.r_l / self.l_r - self.r_in * self.r_th * e1;
        let a = DMatrix::from_row_slice(2, 2, &[e2, -1.0 / self.l_r, 1.0 / self.c_l, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[self.r_th * e1, 0.0]);
        let c = DMatrix::from_row_slice(1, 2, &[self.r_l, 1.0]);
        let p = DMatrix::from_row_slice(2, 3, &[self.r_in * e1, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let q = DMatrix::from_row_slice(1, 3, &[0.0, -1.0, 0.0]);
        LtiPlant::new(a, b, c, 0.0, p, q)
    }
}

pub const X0: [f64; 2] = [1.0562, -0.2586];
pub const D0: f64 = 0.8481;
pub const R0: f64 = -0.5202;
pub const HIGH_GAIN: f64 = 100.0;

pub const AUGMENTATION_EIGENVALUES: [&str; 16] = [
    "-0.5+0.5i", "-0.5-0.5i", "-1.2+1i", "-1.2-1i", "-1.5+1.2i", "-1.5-1.2i", "-2.0+1.8i", "-2.0-1.8i",
    "-2.5+2.0i", "-2.5-2.0i", "-0.3+1.5i", "-0.3-1.5i", "-0.8+0.4i", "-0.8-0.4i", "-1.0+1.2i", "-1.0-1.2i",
];

pub const IMMERSION_EIGENVALUES: [&str; 5] = ["-5+4i", "-5-4i", "-3+2i", "-3-2i", "-6"];

pub fn disturbance_params() -> SignalParams {
    SignalParams {
        period: 3.0,
        phase: PI / 2.0,
        warp: Some(1.5),
        offset: 2.0,
        ..SignalParams::default()
    }
}

pub fn reference_params() -> SignalParams {
    SignalParams {
        period: 3.0,
        phase: PI / 2.0,
        envelope_slope: Some(1.0),
        ..SignalParams::default()
    }
}

/// `Λ = blkdiag(Λ_d, [[Λ_r, −Λ̃_r], [Λ̃_r, Λ_r]])`, rebased at `t0 = 0`.
pub fn exosystem(horizon: f64) -> Result<Inflation> {
    let d = build_signal(SignalKind::WarpedSquare, &disturbance_params())?;
    let r_params = reference_params();
    let r = build_signal(SignalKind::DivergingTriangle, &r_params)?;
    let r_comp = build_signal(SignalKind::DivergingTriangle, &r_params.quarter_shifted())?;
    inflate_to_invertible(
        &[d, r],
        &[None::<TimeVaryingMatrix>, Some(r_comp)],
        &DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        0.0,
        horizon,
    )
}

/// `ω0` of the rebased exosystem for amplitudes `(d̂0, r̂0)`.
pub fn omega0(inflation: &Inflation, d0: f64, r0: f64) -> DVector<f64> {
    inflation.embedding.apply(&DVector::from_vec(vec![d0, r0]))
}

pub fn nominal_exosystem(horizon: f64) -> Result<(ExplicitExosystem, DVector<f64>)> {
    let inf = exosystem(horizon)?;
    let w0 = omega0(&inf, D0, R0);
    Ok((inf.exo, w0))
}

/// Admissible load deviations `(μ_C, μ_R)` around the nominal load.
pub const LOAD_DEVIATION_RANGE: ([f64; 2], [f64; 2]) = ([-0.2, 0.2], [-5.0, 5.0]);

/// `U′(μ)` with `Δ* = ΔU′ = [δ1, μ1δ2 + μ3, μ2δ3 + μ4]`.
pub fn u_prime(mu: [f64; 4], delta1: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        3,
        3,
        &[1.0, mu[2] / delta1, mu[3] / delta1, 0.0, mu[0], 0.0, 0.0, 0.0, mu[1]],
    )
}

/// Basis of the span of all `U′(μ)`: the unit matrices at (1,1), (1,2),
/// (1,3), (2,2) and (3,3), vectorized column-major.
pub fn structure_basis() -> DMatrix<f64> {
    let mut l = DMatrix::zeros(9, 5);
    for (k, (i, j)) in [(0, 0), (0, 1), (0, 2), (1, 1), (2, 2)].into_iter().enumerate() {
        l[(j * 3 + i, k)] = 1.0;
    }
    l
}

#[derive(Debug, Clone, Serialize)]
pub struct StructureFit {
    pub mu: [f64; 4],
    #[serde(skip)]
    pub u_prime: DMatrix<f64>,
    /// `sup ‖Δ* − ΔU′‖ / sup ‖Δ*‖` over the fitted samples.
    pub relative_residual: f64,
}

/// Least-squares `μ` with `Δ*(t) ≈ Δ(t)U′(μ)` over the samples `t ≥ from`
/// that both solutions share.
pub fn fit_structure(nominal: &RegulatorSolution, perturbed: &RegulatorSolution, from: f64) -> Result<StructureFit> {
    let idx: Vec<usize> = (0..nominal.delta.len()).filter(|&i| nominal.delta.time(i) >= from).collect();
    if idx.len() < 4 {
        return Err(Error::invalid("too few samples to fit the uncertainty structure"));
    }
    let delta1 = nominal.delta.value(idx[0])[(0, 0)];
    let pairs: Vec<(DMatrix<f64>, DMatrix<f64>)> = idx
        .iter()
        .map(|&i| {
            let (t, side) = (nominal.delta.time(i), nominal.delta.side(i));
            (nominal.delta.value(i), perturbed.delta.eval(t, side))
        })
        .collect();
    let mut mu = [0.0; 4];
    for col in 1..3 {
        let a = DMatrix::from_fn(pairs.len(), 2, |r, c| if c == 0 { pairs[r].0[(0, col)] } else { 1.0 });
        let b = DVector::from_fn(pairs.len(), |r, _| pairs[r].1[(0, col)]);
        let x = crate::numkit::svd(&a, true, true)
            .solve(&b, 1e-12)
            .map_err(|e| Error::invalid(e.to_string()))?;
        mu[col - 1] = x[0];
        mu[col + 1] = x[1];
    }
    let u = u_prime(mu, delta1);
    let (mut err, mut sup) = (0.0f64, 0.0f64);
    for (d, ds) in &pairs {
        err = err.max((ds - d * &u).norm());
        sup = sup.max(ds.norm());
    }
    Ok(StructureFit {
        mu,
        u_prime: u,
        relative_residual: err / sup.max(f64::MIN_POSITIVE),
    })
}

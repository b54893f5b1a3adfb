use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::tvm::{MatrixFunction, TimeVaryingMatrix};
use crate::error::{Error, Result};
use crate::numkit::Side;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    Square,
    Triangle,
    WarpedSquare,
    DivergingTriangle,
    SinusoidWarped,
    Constant,
    MatrixExponential,
}

/// Parameters shared by the scalar signal families. The phase argument is
/// `θ(t) = (2π/period)·t^warp + phase`, and the value is
/// `(1 + envelope_slope·t)·(offset + amplitude·shape(θ))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalParams {
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub warp: Option<f64>,
    #[serde(default)]
    pub envelope_slope: Option<f64>,
    #[serde(default)]
    pub offset: f64,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Generator matrix for `matrix_exponential`, row-major.
    #[serde(default)]
    pub s: Option<Vec<Vec<f64>>>,
}

fn default_period() -> f64 {
    2.0 * PI
}

fn default_amplitude() -> f64 {
    1.0
}

impl Default for SignalParams {
    fn default() -> Self {
        SignalParams {
            period: default_period(),
            phase: 0.0,
            warp: None,
            envelope_slope: None,
            offset: 0.0,
            amplitude: 1.0,
            s: None,
        }
    }
}

impl SignalParams {
    /// The same signal a quarter period earlier in phase: the default
    /// companion for triangle-type components.
    pub fn quarter_shifted(&self) -> SignalParams {
        SignalParams {
            phase: self.phase - PI / 2.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    Square,
    Triangle,
    Sine,
    Flat,
}

#[derive(Debug, Clone)]
struct Scalar {
    shape: Shape,
    rate: f64,
    phase: f64,
    warp: f64,
    env: f64,
    offset: f64,
    amp: f64,
}

const AT_BREAK: f64 = 1e-9;

fn warp_pow(t: f64, w: f64) -> f64 {
    if w == 1.0 {
        t
    } else {
        t.signum() * t.abs().powf(w)
    }
}

/// Piece index of `θ` between multiples of π, honoring `side` exactly at a
/// multiple.
pub(crate) fn piece_index(theta: f64, side: Side) -> i64 {
    let x = theta / PI;
    let kr = x.round();
    if (x - kr).abs() <= AT_BREAK * x.abs().max(1.0) {
        match side {
            Side::Right => kr as i64,
            Side::Left => kr as i64 - 1,
        }
    } else {
        x.floor() as i64
    }
}

/// `sign(sin θ)` with one-sided values at the jumps.
pub fn square_wave(theta: f64, side: Side) -> f64 {
    if piece_index(theta, side).rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `(2/π)∫₀^θ sign(sin τ)dτ − 1`, a unit triangle wave with kinks at kπ.
pub fn triangle_wave(theta: f64) -> f64 {
    let k = piece_index(theta, Side::Right);
    let u = theta - k as f64 * PI;
    if k.rem_euclid(2) == 0 {
        -1.0 + 2.0 * u / PI
    } else {
        1.0 - 2.0 * u / PI
    }
}

fn triangle_slope(theta: f64, side: Side) -> f64 {
    if piece_index(theta, side).rem_euclid(2) == 0 {
        2.0 / PI
    } else {
        -2.0 / PI
    }
}

impl Scalar {
    fn theta(&self, t: f64) -> f64 {
        self.rate * warp_pow(t, self.warp) + self.phase
    }

    fn theta_dot(&self, t: f64) -> f64 {
        if self.warp == 1.0 {
            self.rate
        } else if t == 0.0 {
            if self.warp > 1.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.rate * self.warp * t.abs().powf(self.warp - 1.0)
        }
    }

    fn shape_value(&self, th: f64, side: Side) -> f64 {
        match self.shape {
            Shape::Square => square_wave(th, side),
            Shape::Triangle => triangle_wave(th),
            Shape::Sine => th.sin(),
            Shape::Flat => 0.0,
        }
    }

    fn shape_slope(&self, th: f64, side: Side) -> f64 {
        match self.shape {
            Shape::Square | Shape::Flat => 0.0,
            Shape::Triangle => triangle_slope(th, side),
            Shape::Sine => th.cos(),
        }
    }

    fn value(&self, t: f64, side: Side) -> f64 {
        let th = self.theta(t);
        (1.0 + self.env * t) * (self.offset + self.amp * self.shape_value(th, side))
    }

    fn slope(&self, t: f64, side: Side) -> f64 {
        let th = self.theta(t);
        let inner = self.offset + self.amp * self.shape_value(th, side);
        let dinner = if matches!(self.shape, Shape::Square | Shape::Flat) {
            0.0
        } else {
            self.amp * self.shape_slope(th, side) * self.theta_dot(t)
        };
        self.env * inner + (1.0 + self.env * t) * dinner
    }

    fn breaks(&self, ta: f64, tb: f64) -> Vec<f64> {
        if !matches!(self.shape, Shape::Square | Shape::Triangle) {
            return Vec::new();
        }
        let ta = if self.warp == 1.0 { ta } else { ta.max(0.0) };
        if tb < ta {
            return Vec::new();
        }
        let (tha, thb) = (self.theta(ta), self.theta(tb));
        let k0 = (tha / PI).ceil() as i64;
        let k1 = (thb / PI).floor() as i64;
        let mut out = Vec::new();
        for k in k0..=k1 {
            let arg = (k as f64 * PI - self.phase) / self.rate;
            let t = if self.warp == 1.0 {
                arg
            } else if arg < 0.0 {
                continue;
            } else {
                arg.powf(1.0 / self.warp)
            };
            if t >= ta && t <= tb {
                out.push(t);
            }
        }
        out
    }
}

impl MatrixFunction for Scalar {
    fn shape(&self) -> (usize, usize) {
        (1, 1)
    }
    fn eval_side(&self, t: f64, side: Side) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.value(t, side))
    }
    fn breakpoints(&self, ta: f64, tb: f64) -> Vec<f64> {
        self.breaks(ta, tb)
    }
    fn derivative(&self, t: f64, side: Side) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, self.slope(t, side)))
    }
}

struct MatrixExp {
    s: DMatrix<f64>,
}

impl MatrixFunction for MatrixExp {
    fn shape(&self) -> (usize, usize) {
        self.s.shape()
    }
    fn eval_side(&self, t: f64, _side: Side) -> DMatrix<f64> {
        (&self.s * t).exp()
    }
    fn breakpoints(&self, _ta: f64, _tb: f64) -> Vec<f64> {
        Vec::new()
    }
    fn derivative(&self, t: f64, _side: Side) -> Option<DMatrix<f64>> {
        Some(&self.s * (&self.s * t).exp())
    }
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map(|x| x.len()).unwrap_or(0);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::invalid("ragged matrix rows"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    Ok(DMatrix::from_row_slice(r, c, &flat))
}

/// Builds one of the signal families as a [`TimeVaryingMatrix`]; scalar
/// unless `kind` is `MatrixExponential`, which yields `e^{S t}`.
pub fn build_signal(kind: SignalKind, p: &SignalParams) -> Result<TimeVaryingMatrix> {
    let finite = [p.period, p.phase, p.offset, p.amplitude]
        .iter()
        .all(|v| v.is_finite());
    if !finite {
        return Err(Error::invalid("signal parameters must be finite"));
    }
    if kind == SignalKind::MatrixExponential {
        let rows = p
            .s
            .as_ref()
            .ok_or_else(|| Error::invalid("matrix_exponential needs the generator `s`"))?;
        let s = matrix_from_rows(rows)?;
        if s.nrows() != s.ncols() || s.nrows() == 0 {
            return Err(Error::invalid("generator `s` must be square and nonempty"));
        }
        return Ok(TimeVaryingMatrix::new(MatrixExp { s }));
    }
    if !(p.period > 0.0) {
        return Err(Error::invalid(format!("period {} must be positive", p.period)));
    }
    let warp = match (kind, p.warp) {
        (SignalKind::WarpedSquare, None) => {
            return Err(Error::invalid("warped_square needs `warp`"));
        }
        (_, Some(w)) if !(w > 0.0 && w.is_finite()) => {
            return Err(Error::invalid(format!("warp {w} must be positive")));
        }
        (_, w) => w.unwrap_or(1.0),
    };
    let env = match (kind, p.envelope_slope) {
        (SignalKind::DivergingTriangle, None) => {
            return Err(Error::invalid("diverging_triangle needs `envelope_slope`"));
        }
        (_, Some(e)) if !e.is_finite() => {
            return Err(Error::invalid("envelope_slope must be finite"));
        }
        (_, e) => e.unwrap_or(0.0),
    };
    let shape = match kind {
        SignalKind::Square | SignalKind::WarpedSquare => Shape::Square,
        SignalKind::Triangle | SignalKind::DivergingTriangle => Shape::Triangle,
        SignalKind::SinusoidWarped => Shape::Sine,
        SignalKind::Constant => Shape::Flat,
        SignalKind::MatrixExponential => unreachable!(),
    };
    Ok(TimeVaryingMatrix::new(Scalar {
        shape,
        rate: 2.0 * PI / p.period,
        phase: p.phase,
        warp,
        env,
        offset: p.offset,
        amp: p.amplitude,
    }))
}

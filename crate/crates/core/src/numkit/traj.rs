use nalgebra::DMatrix;

use super::grid::{Grid, Side};
use crate::error::{Error, Result};

/// Matrix samples on a [`Grid`]. Between samples the value is interpolated
/// linearly, or by cubic Hermite when derivative samples are stored. At a
/// breakpoint the left limit and the right value are both kept.
#[derive(Debug, Clone)]
pub struct MatrixTrajectory {
    grid: Grid,
    rows: usize,
    cols: usize,
    times: Vec<f64>,
    sides: Vec<Side>,
    data: Vec<f64>,
    derivs: Option<Vec<f64>>,
}

impl MatrixTrajectory {
    pub(crate) fn from_raw(
        grid: Grid,
        rows: usize,
        cols: usize,
        times: Vec<f64>,
        sides: Vec<Side>,
        data: Vec<f64>,
        derivs: Option<Vec<f64>>,
    ) -> Self {
        debug_assert_eq!(times.len() * rows * cols, data.len());
        MatrixTrajectory {
            grid,
            rows,
            cols,
            times,
            sides,
            data,
            derivs,
        }
    }

    /// Evaluates `f` at every sample of `grid`.
    pub fn sample<F>(grid: &Grid, rows: usize, cols: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(f64, Side) -> Result<DMatrix<f64>>,
    {
        let samples = grid.samples();
        let mut times = Vec::with_capacity(samples.len());
        let mut sides = Vec::with_capacity(samples.len());
        let mut data = Vec::with_capacity(samples.len() * rows * cols);
        for (t, side) in samples {
            let m = f(t, side)?;
            if m.shape() != (rows, cols) {
                return Err(Error::invalid(format!(
                    "sample at t = {t} has shape {:?}, expected ({rows}, {cols})",
                    m.shape()
                )));
            }
            times.push(t);
            sides.push(side);
            data.extend_from_slice(m.as_slice());
        }
        Ok(Self::from_raw(grid.clone(), rows, cols, times, sides, data, None))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn side(&self, i: usize) -> Side {
        self.sides[i]
    }

    pub fn has_derivatives(&self) -> bool {
        self.derivs.is_some()
    }

    pub fn slice(&self, i: usize) -> &[f64] {
        let k = self.rows * self.cols;
        &self.data[i * k..(i + 1) * k]
    }

    pub fn value(&self, i: usize) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.rows, self.cols, self.slice(i))
    }

    pub fn derivative_sample(&self, i: usize) -> Option<DMatrix<f64>> {
        let k = self.rows * self.cols;
        self.derivs
            .as_ref()
            .map(|d| DMatrix::from_column_slice(self.rows, self.cols, &d[i * k..(i + 1) * k]))
    }

    pub fn last(&self) -> DMatrix<f64> {
        self.value(self.len() - 1)
    }

    /// Index pair `(i, i + 1)` of the segment holding `t` from `side`.
    fn segment(&self, t: f64, side: Side) -> Option<(usize, usize)> {
        let n = self.times.len();
        if n < 2 {
            return None;
        }
        let j = match side {
            Side::Right => self.times.partition_point(|s| *s <= t),
            Side::Left => self.times.partition_point(|s| *s < t),
        };
        if j == 0 || j >= n {
            return None;
        }
        Some((j - 1, j))
    }

    /// Value at `t`; outside the sampled range the nearest end is held.
    pub fn eval(&self, t: f64, side: Side) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        self.eval_into(t, side, out.as_mut_slice());
        out
    }

    pub fn eval_into(&self, t: f64, side: Side, out: &mut [f64]) {
        let k = self.rows * self.cols;
        let n = self.times.len();
        let Some((i0, i1)) = self.segment(t, side) else {
            let i = if n == 0 || t <= self.times[0] { 0 } else { n - 1 };
            out.copy_from_slice(self.slice(i));
            return;
        };
        let (t0, t1) = (self.times[i0], self.times[i1]);
        let h = t1 - t0;
        if h <= 0.0 {
            let i = if side == Side::Left { i0 } else { i1 };
            out.copy_from_slice(self.slice(i));
            return;
        }
        let s = ((t - t0) / h).clamp(0.0, 1.0);
        let x0 = &self.data[i0 * k..(i0 + 1) * k];
        let x1 = &self.data[i1 * k..(i1 + 1) * k];
        match &self.derivs {
            Some(d) => {
                let d0 = &d[i0 * k..(i0 + 1) * k];
                let d1 = &d[i1 * k..(i1 + 1) * k];
                let s2 = s * s;
                let s3 = s2 * s;
                let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
                let h10 = (s3 - 2.0 * s2 + s) * h;
                let h01 = -2.0 * s3 + 3.0 * s2;
                let h11 = (s3 - s2) * h;
                for q in 0..k {
                    out[q] = h00 * x0[q] + h10 * d0[q] + h01 * x1[q] + h11 * d1[q];
                }
            }
            None => {
                for q in 0..k {
                    out[q] = x0[q] + s * (x1[q] - x0[q]);
                }
            }
        }
    }

    /// Time derivative of the interpolant within the piece holding `t`.
    pub fn eval_derivative(&self, t: f64, side: Side) -> DMatrix<f64> {
        let k = self.rows * self.cols;
        let mut out = DMatrix::zeros(self.rows, self.cols);
        let Some((i0, i1)) = self.segment(t, side) else {
            return out;
        };
        let (t0, t1) = (self.times[i0], self.times[i1]);
        let h = t1 - t0;
        if h <= 0.0 {
            return out;
        }
        let s = ((t - t0) / h).clamp(0.0, 1.0);
        let x0 = &self.data[i0 * k..(i0 + 1) * k];
        let x1 = &self.data[i1 * k..(i1 + 1) * k];
        let o = out.as_mut_slice();
        match &self.derivs {
            Some(d) => {
                let d0 = &d[i0 * k..(i0 + 1) * k];
                let d1 = &d[i1 * k..(i1 + 1) * k];
                let s2 = s * s;
                let a = (6.0 * s2 - 6.0 * s) / h;
                let b = 3.0 * s2 - 4.0 * s + 1.0;
                let c = 3.0 * s2 - 2.0 * s;
                for q in 0..k {
                    o[q] = a * (x0[q] - x1[q]) + b * d0[q] + c * d1[q];
                }
            }
            None => {
                for q in 0..k {
                    o[q] = (x1[q] - x0[q]) / h;
                }
            }
        }
        out
    }

    /// Pointwise map over samples (derivatives are dropped).
    pub fn map<F>(&self, rows: usize, cols: usize, mut f: F) -> Result<MatrixTrajectory>
    where
        F: FnMut(usize, f64, Side, &DMatrix<f64>) -> Result<DMatrix<f64>>,
    {
        let mut data = Vec::with_capacity(self.len() * rows * cols);
        for i in 0..self.len() {
            let m = f(i, self.times[i], self.sides[i], &self.value(i))?;
            if m.shape() != (rows, cols) {
                return Err(Error::invalid("map produced a sample of the wrong shape"));
            }
            data.extend_from_slice(m.as_slice());
        }
        Ok(MatrixTrajectory::from_raw(
            self.grid.clone(),
            rows,
            cols,
            self.times.clone(),
            self.sides.clone(),
            data,
            None,
        ))
    }

    /// Attaches derivative samples (same layout as values).
    pub fn with_derivatives(mut self, derivs: Vec<f64>) -> Result<Self> {
        if derivs.len() != self.data.len() {
            return Err(Error::invalid("derivative samples do not match values"));
        }
        self.derivs = Some(derivs);
        Ok(self)
    }

    /// Frobenius norm of every sample.
    pub fn norms(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.slice(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    /// Largest sample norm over `t >= from`.
    pub fn sup_norm_from(&self, from: f64) -> f64 {
        self.norms()
            .into_iter()
            .zip(&self.times)
            .filter(|(_, t)| **t >= from)
            .map(|(n, _)| n)
            .fold(0.0, f64::max)
    }

    /// Copy restricted to samples with `t >= from`; a leading left-limit
    /// sample is dropped.
    pub fn tail_from(&self, from: f64) -> MatrixTrajectory {
        let k = self.rows * self.cols;
        let mut start = self.times.partition_point(|t| *t < from);
        if start < self.len() && self.sides[start] == Side::Left && start + 1 < self.len() {
            if self.times[start + 1] == self.times[start] {
                start += 1;
            }
        }
        let grid = self
            .grid
            .restrict(self.times[start].min(self.grid.t_end - self.grid.base_step), self.grid.t_end)
            .unwrap_or_else(|_| self.grid.clone());
        MatrixTrajectory {
            grid,
            rows: self.rows,
            cols: self.cols,
            times: self.times[start..].to_vec(),
            sides: self.sides[start..].to_vec(),
            data: self.data[start * k..].to_vec(),
            derivs: self.derivs.as_ref().map(|d| d[start * k..].to_vec()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> MatrixTrajectory {
        let g = Grid::new(0.0, 2.0, 0.5, vec![1.0]).unwrap();
        MatrixTrajectory::sample(&g, 1, 1, |t, side| {
            let jump = if t > 1.0 || (t == 1.0 && side == Side::Right) {
                10.0
            } else {
                0.0
            };
            Ok(DMatrix::from_element(1, 1, t + jump))
        })
        .unwrap()
    }

    #[test]
    fn linear_interpolation_and_sides() {
        let tr = ramp();
        assert_eq!(tr.eval(0.25, Side::Right)[(0, 0)], 0.25);
        assert_eq!(tr.eval(1.0, Side::Left)[(0, 0)], 1.0);
        assert_eq!(tr.eval(1.0, Side::Right)[(0, 0)], 11.0);
        assert_eq!(tr.eval(1.25, Side::Left)[(0, 0)], 11.25);
        assert_eq!(tr.eval(5.0, Side::Right)[(0, 0)], 12.0);
        assert_eq!(tr.eval(-1.0, Side::Right)[(0, 0)], 0.0);
    }

    #[test]
    fn hermite_is_exact_for_cubics() {
        let g = Grid::uniform(0.0, 1.0, 0.25).unwrap();
        let tr = MatrixTrajectory::sample(&g, 1, 1, |t, _| Ok(DMatrix::from_element(1, 1, t.powi(3))))
            .unwrap();
        let d: Vec<f64> = tr.times().iter().map(|t| 3.0 * t * t).collect();
        let tr = tr.with_derivatives(d).unwrap();
        let v = tr.eval(0.4, Side::Right)[(0, 0)];
        assert!((v - 0.064).abs() < 1e-14);
        let dv = tr.eval_derivative(0.4, Side::Right)[(0, 0)];
        assert!((dv - 0.48).abs() < 1e-13);
    }
}

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::numkit::{MatrixTrajectory, Side};

/// Piecewise-continuous matrix function of time.
pub trait MatrixFunction: Send + Sync {
    fn shape(&self) -> (usize, usize);
    /// Value at `t`; at a breakpoint `side` picks the one-sided limit.
    fn eval_side(&self, t: f64, side: Side) -> DMatrix<f64>;
    /// Discontinuity or kink times in `[ta, tb]`, sorted.
    fn breakpoints(&self, ta: f64, tb: f64) -> Vec<f64>;
    /// Time derivative within smooth pieces, when known in closed form.
    fn derivative(&self, _t: f64, _side: Side) -> Option<DMatrix<f64>> {
        None
    }
}

/// Shared handle to a [`MatrixFunction`]; cheap to clone.
#[derive(Clone)]
pub struct TimeVaryingMatrix(Arc<dyn MatrixFunction>);

impl fmt::Debug for TimeVaryingMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TimeVaryingMatrix{:?}", self.shape())
    }
}

impl TimeVaryingMatrix {
    pub fn new(f: impl MatrixFunction + 'static) -> Self {
        TimeVaryingMatrix(Arc::new(f))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    /// Right value at `t`.
    pub fn eval(&self, t: f64) -> DMatrix<f64> {
        self.0.eval_side(t, Side::Right)
    }

    pub fn eval_side(&self, t: f64, side: Side) -> DMatrix<f64> {
        self.0.eval_side(t, side)
    }

    pub fn breakpoints(&self, ta: f64, tb: f64) -> Vec<f64> {
        self.0.breakpoints(ta, tb)
    }

    pub fn derivative(&self, t: f64, side: Side) -> Option<DMatrix<f64>> {
        self.0.derivative(t, side)
    }

    pub fn has_derivative(&self) -> bool {
        self.0.derivative(0.0, Side::Right).is_some()
    }

    pub fn constant(m: DMatrix<f64>) -> Self {
        Self::new(Constant(m))
    }

    pub fn scalar_constant(v: f64) -> Self {
        Self::constant(DMatrix::from_element(1, 1, v))
    }

    /// Closure-backed function with a fixed breakpoint list.
    pub fn from_fn<F>(rows: usize, cols: usize, breakpoints: Vec<f64>, f: F) -> Self
    where
        F: Fn(f64, Side) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self::new(FromFn {
            shape: (rows, cols),
            bps: breakpoints,
            f: Box::new(f),
            df: None,
        })
    }

    pub fn from_fn_with_derivative<F, D>(
        rows: usize,
        cols: usize,
        breakpoints: Vec<f64>,
        f: F,
        df: D,
    ) -> Self
    where
        F: Fn(f64, Side) -> DMatrix<f64> + Send + Sync + 'static,
        D: Fn(f64, Side) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self::new(FromFn {
            shape: (rows, cols),
            bps: breakpoints,
            f: Box::new(f),
            df: Some(Box::new(df)),
        })
    }

    pub fn from_trajectory(tr: MatrixTrajectory) -> Self {
        Self::new(FromTrajectory(tr))
    }

    pub fn block_diag(blocks: Vec<TimeVaryingMatrix>) -> Self {
        Self::new(BlockDiag(blocks))
    }

    /// `a(t) * b(t)`.
    pub fn product(a: TimeVaryingMatrix, b: TimeVaryingMatrix) -> Self {
        assert_eq!(a.shape().1, b.shape().0, "product shape mismatch");
        Self::new(Product(a, b))
    }

    /// `I_k ⊗ m(t)`.
    pub fn kron_identity(k: usize, m: TimeVaryingMatrix) -> Self {
        Self::new(KronIdentity(k, m))
    }

    /// `[[phi, -phi_hat], [phi_hat, phi]]` from two scalar functions.
    pub fn rotation_block(phi: TimeVaryingMatrix, phi_hat: TimeVaryingMatrix) -> Self {
        Self::new(RotationBlock(phi, phi_hat))
    }

    /// `m(t)ᵀ`.
    pub fn transpose(m: TimeVaryingMatrix) -> Self {
        Self::new(Transpose(m))
    }
}

fn merge_sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + a.abs()));
    v
}

struct Constant(DMatrix<f64>);

impl MatrixFunction for Constant {
    fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }
    fn eval_side(&self, _t: f64, _side: Side) -> DMatrix<f64> {
        self.0.clone()
    }
    fn breakpoints(&self, _ta: f64, _tb: f64) -> Vec<f64> {
        Vec::new()
    }
    fn derivative(&self, _t: f64, _side: Side) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(self.0.nrows(), self.0.ncols()))
    }
}

type SideFn = Box<dyn Fn(f64, Side) -> DMatrix<f64> + Send + Sync>;

struct FromFn {
    shape: (usize, usize),
    bps: Vec<f64>,
    f: SideFn,
    df: Option<SideFn>,
}

impl MatrixFunction for FromFn {
    fn shape(&self) -> (usize, usize) {
        self.shape
    }
    fn eval_side(&self, t: f64, side: Side) -> DMatrix<f64> {
        (self.f)(t, side)
    }
    fn breakpoints(&self, ta: f64, tb: f64) -> Vec<f64> {
        self.bps.iter().copied().filter(|b| *b >= ta && *b <= tb).collect()
    }
    fn derivative(&self, t: f64, side: Side) -> Option<DMatrix<f64>> {
        self.df.as_ref().map(|d| d(t, side))
    }
}

struct FromTrajectory(MatrixTrajectory);

impl MatrixFunction for FromTrajectory {
    fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }
    fn eval_side(&self, t: f64, side: Side) -> DMatrix<f64> {
        self.0.eval(t, side)
    }
    fn breakpoints(&self, ta: f64, tb: f64) -> Vec<f64> {
        self.0
            .grid()
            .breakpoints
            .iter()
            .copied()
            .filter(|b| *b >= ta && *b <= tb)
            .collect()
    }
    fn derivative(&self, t: f64, side: Side) -> Option<DMatrix<f64>> {
        if self.0.has_derivatives() {
            Some(self.0.eval_derivative(t, side))
        } else {
            None
        }
    }
}

struct BlockDiag(Vec<TimeVaryingMatrix>);

impl BlockDiag {
    fn assemble(&self, parts: &[DMatrix<f64>]) -> DMatrix<f64> {
        let (r, c) = self.shape();
        let mut out = DMatrix::zeros(r, c);
        let (mut i, mut j) = (0, 0);
        for p in parts {
            out.view_mut((i, j), p.shape()).copy_from(p);
            i += p.nrows();
            j += p.ncols();
        }
        out
    }
}

impl MatrixFunction for BlockDiag {
    fn shape(&self) -> (usize, usize) {
        self.0.iter().fold((0, 0), |(r, c), b| {
            let (br, bc) = b.shape();
            (r + br, c + bc)
        })
    }
    fn eval_side(&self, t: f64, side: Side) -> DMatrix<f64> {
        let parts: Vec<_> = self.0.iter().map(|b| b.eval_side(t, side)).collect();
        self.assemble(&parts)
    }
    fn breakpoints(&self, ta: f64, tb: f64) -> Vec<f64> {
        merge_sorted(self.0.iter().flat_map(|b| b.breakpoints(ta, tb)).collect())
    }
    fn derivative(&self, t: f64, side: Side) -> Option<DMatrix<f64>> {
        let parts: Option<Vec<_>> = self.0.iter().map(|b| b.derivative(t, side)).collect();
        parts.map(|p| self.assemble(&p))
    }
}

struct Product(TimeVaryingMatrix, TimeVaryingMatrix);

impl MatrixFunction for Product {
    fn shape(&self) -> (usize, usize) {
        (self.0.shape().0, self.1.shape().1)
    }
    fn eval_side(&self, t: f64, side: Side) -> DMatrix<f64> {
        self.0.eval_side(t, side) * self.1.eval_side(t, side)
    }
    fn breakpoints(&self, ta: f64, tb: f64) -> Vec<f64> {
        let mut v = self.0.breakpoints(ta, tb);
        v.extend(self.1.breakpoints(ta, tb));
        merge_sorted(v)
    }
    fn derivative(&self, t: f64, side: Side) -> Option<DMatrix<f64>> {
        let da = self.0.derivative(t, side)?;
        let db = self.1.derivative(t, side)?;
        Some(da * self.1.eval_side(t, side) + self.0.eval_side(t, side) * db)
    }
}

struct KronIdentity(usize, TimeVaryingMatrix);

impl MatrixFunction for KronIdentity {
    fn shape(&self) -> (usize, usize) {
        let (r, c) = self.1.shape();
        (self.0 * r, self.0 * c)
    }
    fn eval_side(&self, t: f64, side: Side) -> DMatrix<f64> {
        DMatrix::<f64>::identity(self.0, self.0).kronecker(&self.1.eval_side(t, side))
    }
    fn breakpoints(&self, ta: f64, tb: f64) -> Vec<f64> {
        self.1.breakpoints(ta, tb)
    }
    fn derivative(&self, t: f64, side: Side) -> Option<DMatrix<f64>> {
        let d = self.1.derivative(t, side)?;
        Some(DMatrix::<f64>::identity(self.0, self.0).kronecker(&d))
    }
}

struct RotationBlock(TimeVaryingMatrix, TimeVaryingMatrix);

fn rot(a: f64, b: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[a, -b, b, a])
}

impl MatrixFunction for RotationBlock {
    fn shape(&self) -> (usize, usize) {
        (2, 2)
    }
    fn eval_side(&self, t: f64, side: Side) -> DMatrix<f64> {
        rot(self.0.eval_side(t, side)[(0, 0)], self.1.eval_side(t, side)[(0, 0)])
    }
    fn breakpoints(&self, ta: f64, tb: f64) -> Vec<f64> {
        let mut v = self.0.breakpoints(ta, tb);
        v.extend(self.1.breakpoints(ta, tb));
        merge_sorted(v)
    }
    fn derivative(&self, t: f64, side: Side) -> Option<DMatrix<f64>> {
        let a = self.0.derivative(t, side)?;
        let b = self.1.derivative(t, side)?;
        Some(rot(a[(0, 0)], b[(0, 0)]))
    }
}

struct Transpose(TimeVaryingMatrix);

impl MatrixFunction for Transpose {
    fn shape(&self) -> (usize, usize) {
        let (r, c) = self.0.shape();
        (c, r)
    }
    fn eval_side(&self, t: f64, side: Side) -> DMatrix<f64> {
        self.0.eval_side(t, side).transpose()
    }
    fn breakpoints(&self, ta: f64, tb: f64) -> Vec<f64> {
        self.0.breakpoints(ta, tb)
    }
    fn derivative(&self, t: f64, side: Side) -> Option<DMatrix<f64>> {
        self.0.derivative(t, side).map(|d| d.transpose())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_diag_and_product() {
        let a = TimeVaryingMatrix::from_fn_with_derivative(
            1,
            1,
            vec![1.0],
            |t, _| DMatrix::from_element(1, 1, t),
            |_, _| DMatrix::from_element(1, 1, 1.0),
        );
        let b = TimeVaryingMatrix::scalar_constant(2.0);
        let d = TimeVaryingMatrix::block_diag(vec![a.clone(), b.clone()]);
        assert_eq!(d.shape(), (2, 2));
        let v = d.eval(3.0);
        assert_eq!(v[(0, 0)], 3.0);
        assert_eq!(v[(1, 1)], 2.0);
        assert_eq!(v[(0, 1)], 0.0);
        let p = TimeVaryingMatrix::product(a.clone(), b);
        assert_eq!(p.eval(3.0)[(0, 0)], 6.0);
        assert_eq!(p.derivative(3.0, Side::Right).unwrap()[(0, 0)], 2.0);
        assert_eq!(p.breakpoints(0.0, 5.0), vec![1.0]);
        let k = TimeVaryingMatrix::kron_identity(3, a);
        assert_eq!(k.eval(2.0), DMatrix::<f64>::identity(3, 3) * 2.0);
    }
}

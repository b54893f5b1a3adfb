use nalgebra::DMatrix;

use super::grid::{Grid, Side};
use super::traj::MatrixTrajectory;
use crate::error::{Error, Result};
use crate::exo::TimeVaryingMatrix;

#[derive(Debug, Clone)]
pub struct OdeOptions {
    /// RK4 substeps per grid segment.
    pub substeps: usize,
    /// Keep `dX/dt` at every sample so the trajectory interpolates by
    /// cubic Hermite.
    pub store_derivatives: bool,
    /// Abort once the Frobenius norm of the state exceeds this.
    pub norm_cap: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            substeps: 1,
            store_derivatives: true,
            norm_cap: None,
        }
    }
}

/// Fixed-step RK4 over a [`Grid`]. Steps never straddle a breakpoint: the
/// first stage of a step sees the right value of the right-hand side, the
/// last stage the left limit.
pub struct OdeSolver<'a> {
    grid: &'a Grid,
    opts: OdeOptions,
    substep_rule: Option<Box<dyn FnMut(f64, f64, &DMatrix<f64>) -> usize + 'a>>,
}

impl<'a> OdeSolver<'a> {
    pub fn new(grid: &'a Grid) -> Self {
        OdeSolver {
            grid,
            opts: OdeOptions::default(),
            substep_rule: None,
        }
    }

    pub fn options(mut self, opts: OdeOptions) -> Self {
        self.opts = opts;
        self
    }

    /// Substep count chosen per segment `(a, b, X(a))`; overrides the fixed
    /// count.
    pub fn substep_rule(mut self, rule: impl FnMut(f64, f64, &DMatrix<f64>) -> usize + 'a) -> Self {
        self.substep_rule = Some(Box::new(rule));
        self
    }

    pub fn solve<F>(mut self, mut rhs: F, x0: &DMatrix<f64>) -> Result<MatrixTrajectory>
    where
        F: FnMut(f64, &DMatrix<f64>, Side) -> DMatrix<f64>,
    {
        let (rows, cols) = x0.shape();
        let k = rows * cols;
        if !x0.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("initial condition has non-finite entries"));
        }
        let samples = self.grid.samples();
        if samples.len() < 2 {
            return Err(Error::invalid("grid has fewer than two samples"));
        }
        let n = samples.len();
        let mut times = Vec::with_capacity(n);
        let mut sides = Vec::with_capacity(n);
        let mut data = Vec::with_capacity(n * k);
        let mut derivs = if self.opts.store_derivatives {
            Some(vec![0.0; n * k])
        } else {
            None
        };
        let mut x = x0.clone();
        times.push(samples[0].0);
        sides.push(samples[0].1);
        data.extend_from_slice(x.as_slice());

        for i in 0..n - 1 {
            let (a, _) = samples[i];
            let (b, side_b) = samples[i + 1];
            if b > a {
                let m = match self.substep_rule.as_mut() {
                    Some(rule) => rule(a, b, &x).max(1),
                    None => self.opts.substeps.max(1),
                };
                let h = (b - a) / m as f64;
                for j in 0..m {
                    let ta = a + j as f64 * h;
                    let tb = if j + 1 == m { b } else { a + (j + 1) as f64 * h };
                    let hm = tb - ta;
                    let tm = 0.5 * (ta + tb);
                    let k1 = rhs(ta, &x, Side::Right);
                    if j == 0 {
                        if let Some(d) = derivs.as_mut() {
                            d[i * k..(i + 1) * k].copy_from_slice(k1.as_slice());
                        }
                    }
                    let k2 = rhs(tm, &(&x + &k1 * (0.5 * hm)), Side::Right);
                    let k3 = rhs(tm, &(&x + &k2 * (0.5 * hm)), Side::Right);
                    let k4 = rhs(tb, &(&x + &k3 * hm), Side::Left);
                    x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (hm / 6.0);
                }
                if !x.iter().all(|v| v.is_finite()) {
                    return Err(Error::IntegrationBlowup {
                        t: b,
                        detail: "state became non-finite".into(),
                    });
                }
                if let Some(cap) = self.opts.norm_cap {
                    let nx = x.norm();
                    if nx > cap {
                        return Err(Error::IntegrationBlowup {
                            t: b,
                            detail: format!("state norm {nx:.3e} exceeded cap {cap:.1e}"),
                        });
                    }
                }
            } else if let Some(d) = derivs.as_mut() {
                // Zero-length segment at a breakpoint: the left sample closes
                // a piece, so its derivative is the left limit.
                let dl = rhs(a, &x, Side::Left);
                d[i * k..(i + 1) * k].copy_from_slice(dl.as_slice());
            }
            times.push(b);
            sides.push(side_b);
            data.extend_from_slice(x.as_slice());
        }
        if let Some(d) = derivs.as_mut() {
            let (t_last, _) = samples[n - 1];
            let dl = rhs(t_last, &x, Side::Left);
            d[(n - 1) * k..n * k].copy_from_slice(dl.as_slice());
        }
        let tr = MatrixTrajectory::from_raw(self.grid.clone(), rows, cols, times, sides, data, None);
        match derivs {
            Some(d) => tr.with_derivatives(d),
            None => Ok(tr),
        }
    }
}

/// Integrates `dX/dt = rhs(t, X)` from `x0` at `grid.t_start` with default
/// options.
pub fn integrate_matrix_ode<F>(rhs: F, x0: &DMatrix<f64>, grid: &Grid) -> Result<MatrixTrajectory>
where
    F: FnMut(f64, &DMatrix<f64>, Side) -> DMatrix<f64>,
{
    OdeSolver::new(grid).solve(rhs, x0)
}

/// `I^[1][f], …, I^[k][f]` from `grid.t_start`, integrated as one chain.
pub fn repeated_integrals(
    f: &TimeVaryingMatrix,
    k: usize,
    t0: f64,
    grid: &Grid,
) -> Result<Vec<MatrixTrajectory>> {
    if k == 0 {
        return Err(Error::invalid("repeated integral order must be positive"));
    }
    if (grid.t_start - t0).abs() > 1e-12 * (1.0 + t0.abs()) {
        return Err(Error::invalid(format!(
            "grid starts at {} but the integrals start at {t0}",
            grid.t_start
        )));
    }
    let (r, c) = f.shape();
    let grid = grid.with_breakpoints(f.breakpoints(grid.t_start, grid.t_end))?;
    let rhs = |t: f64, x: &DMatrix<f64>, side: Side| {
        let mut dx = DMatrix::zeros(k * r, c);
        dx.view_mut((0, 0), (r, c)).copy_from(&f.eval_side(t, side));
        for j in 1..k {
            dx.view_mut((j * r, 0), (r, c))
                .copy_from(&x.view(((j - 1) * r, 0), (r, c)));
        }
        dx
    };
    let chain = OdeSolver::new(&grid).solve(rhs, &DMatrix::zeros(k * r, c))?;
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let level = chain.map(r, c, |_, _, _, x| Ok(x.view((j * r, 0), (r, c)).into_owned()))?;
        let mut d = Vec::with_capacity(chain.len() * r * c);
        for i in 0..chain.len() {
            let dx = chain.derivative_sample(i).expect("chain stores derivatives");
            d.extend_from_slice(dx.view((j * r, 0), (r, c)).into_owned().as_slice());
        }
        out.push(level.with_derivatives(d)?);
    }
    Ok(out)
}

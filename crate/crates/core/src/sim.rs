//! Closed-loop simulation of plant, exosystem and regulator, stability
//! probing and regulation metrics.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exo::ExplicitExosystem;
use crate::imu::ErrorFeedbackRegulator;
use crate::numkit::{linear_fit, Grid, MatrixTrajectory, OdeOptions, OdeSolver, Side};
use crate::plant::LtiPlant;
use crate::regeq::RegulatorSolution;

pub const BLOWUP_CAP: f64 = 1e9;
/// RK4 stays inside its stability region when `h·ρ(A_cl)` is below this.
const STIFFNESS_BUDGET: f64 = 2.5;

#[derive(Debug, Clone)]
pub struct ClosedLoopTrajectory {
    pub t: Vec<f64>,
    pub sides: Vec<Side>,
    pub x: Vec<DVector<f64>>,
    pub xi: Option<Vec<DVector<f64>>>,
    pub u: Vec<f64>,
    pub e: Vec<f64>,
    pub omega: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegulationMetrics {
    pub tail_relative_error: f64,
    pub tail_from: f64,
    pub sup_state: f64,
    pub sup_input: f64,
    pub settle_threshold: f64,
    pub settled_at: Option<f64>,
    pub decay_rate: Option<f64>,
}

impl ClosedLoopTrajectory {
    pub fn relative_error(&self) -> Vec<f64> {
        self.e
            .iter()
            .zip(&self.omega)
            .map(|(e, w)| e.abs() / (1.0 + w.norm()))
            .collect()
    }

    /// Metrics with the tail taken as the last 20% of the run.
    pub fn metrics(&self, settle_threshold: f64) -> RegulationMetrics {
        let t0 = self.t[0];
        let t1 = *self.t.last().unwrap();
        let tail_from = t1 - 0.2 * (t1 - t0);
        let rel = self.relative_error();
        let tail = self
            .t
            .iter()
            .zip(&rel)
            .filter(|(t, _)| **t >= tail_from)
            .map(|(_, r)| *r)
            .fold(0.0, f64::max);
        let last_bad = rel.iter().rposition(|r| !(*r < settle_threshold));
        let settled_at = match last_bad {
            None => Some(t0),
            Some(i) if i + 1 < self.t.len() => Some(self.t[i + 1]),
            Some(_) => None,
        };
        RegulationMetrics {
            tail_relative_error: tail,
            tail_from,
            sup_state: self.x.iter().map(|x| x.norm()).fold(0.0, f64::max),
            sup_input: self.u.iter().map(|u| u.abs()).fold(0.0, f64::max),
            settle_threshold,
            settled_at,
            decay_rate: None,
        }
    }
}

fn hurwitz_abscissa(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max)
}

fn inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Spectral radius, or `‖a‖∞` when the Schur iteration does not converge.
/// The internal-model blocks are strongly non-normal, so the norm can exceed
/// the radius by orders of magnitude.
fn stiffness(a: &DMatrix<f64>) -> f64 {
    match nalgebra::Schur::try_new(a.clone(), 1e-12, 500) {
        Some(s) => s.complex_eigenvalues().iter().map(|l| l.norm()).fold(0.0, f64::max),
        None => inf_norm(a),
    }
}

fn check_vec(name: &str, v: &DVector<f64>, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::invalid(format!("{name} has length {}, expected {n}", v.len())));
    }
    Ok(())
}

/// `u = Kx + (Δ − KΠ_x)ω`.
pub fn simulate_full_information(
    plant: &LtiPlant,
    exo: &ExplicitExosystem,
    sol: &RegulatorSolution,
    k_gain: &DMatrix<f64>,
    x0: &DVector<f64>,
    omega0: &DVector<f64>,
    grid: &Grid,
) -> Result<ClosedLoopTrajectory> {
    let n = plant.n();
    if k_gain.shape() != (1, n) {
        return Err(Error::invalid(format!("K must be 1×{n}")));
    }
    check_vec("x0", x0, n)?;
    check_vec("ω0", omega0, exo.nu)?;
    let a_cl = &plant.a + &plant.b * k_gain;
    let abscissa = hurwitz_abscissa(&a_cl);
    if !(abscissa < 0.0) {
        return Err(Error::StabilityViolation(format!(
            "A + BK has spectral abscissa {abscissa:.3e}"
        )));
    }
    let grid = grid.with_breakpoints(exo.breakpoints(grid.t_start, grid.t_end))?;
    let ff = |t: f64, side: Side| -> DMatrix<f64> {
        sol.delta.eval(t, side) - k_gain * sol.pi_x.eval(t, side)
    };
    let substeps = ((grid.base_step * stiffness(&a_cl)) / STIFFNESS_BUDGET).ceil().max(1.0) as usize;
    let traj = OdeSolver::new(&grid)
        .options(OdeOptions {
            substeps,
            store_derivatives: false,
            norm_cap: Some(BLOWUP_CAP),
        })
        .solve(
            |t, x, side| {
                let w = exo.omega(t, side, omega0);
                &a_cl * x + (&plant.b * ff(t, side) + &plant.p) * DMatrix::from_column_slice(w.len(), 1, w.as_slice())
            },
            &DMatrix::from_column_slice(n, 1, x0.as_slice()),
        )?;
    let mut out = ClosedLoopTrajectory {
        t: traj.times().to_vec(),
        sides: (0..traj.len()).map(|i| traj.side(i)).collect(),
        x: Vec::with_capacity(traj.len()),
        xi: None,
        u: Vec::with_capacity(traj.len()),
        e: Vec::with_capacity(traj.len()),
        omega: Vec::with_capacity(traj.len()),
    };
    for i in 0..traj.len() {
        let (t, side) = (traj.time(i), traj.side(i));
        let x = DVector::from_column_slice(traj.slice(i));
        let w = exo.omega(t, side, omega0);
        let u = (k_gain * &x + ff(t, side) * &w)[(0, 0)];
        let e = (&plant.c * &x)[(0, 0)] + plant.d * u + (&plant.q * &w)[(0, 0)];
        out.x.push(x);
        out.u.push(u);
        out.e.push(e);
        out.omega.push(w);
    }
    Ok(out)
}

/// Closed loop of the plant with `ξ̇ = Fξ + Gu`, `u = Hξ − ke`, written as
/// `ż = M(t)z + N(t)ω`. Before `active_from` the input is zero and `ξ` is
/// frozen. `H` is sampled once on the loop grid and interpolated linearly
/// between nodes; evaluating it directly inside every RK4 stage costs a
/// pseudoinverse per stage.
struct ErrorFeedbackLoop<'a> {
    plant: &'a LtiPlant,
    reg: &'a ErrorFeedbackRegulator,
    active_from: f64,
    h: MatrixTrajectory,
}

impl<'a> ErrorFeedbackLoop<'a> {
    fn new(plant: &'a LtiPlant, reg: &'a ErrorFeedbackRegulator, active_from: f64, grid: &Grid) -> Result<Self> {
        let h = MatrixTrajectory::sample(grid, 1, reg.q, |t, side| Ok(reg.h_im.eval_side(t, side)))?;
        Ok(ErrorFeedbackLoop { plant, reg, active_from, h })
    }

    fn dims(&self) -> (usize, usize) {
        (self.plant.n(), self.reg.q)
    }

    /// `(u_z, u_ω)` with `u = u_z z + u_ω ω`.
    fn input_maps(&self, t: f64, side: Side) -> (DMatrix<f64>, DMatrix<f64>) {
        let (n, q) = self.dims();
        let nu = self.plant.nu();
        if t < self.active_from {
            return (DMatrix::zeros(1, n + q), DMatrix::zeros(1, nu));
        }
        let k = self.reg.k;
        let denom = 1.0 + k * self.plant.d;
        let h = self.h.eval(t, side);
        let mut uz = DMatrix::zeros(1, n + q);
        uz.view_mut((0, 0), (1, n)).copy_from(&(&self.plant.c * (-k / denom)));
        uz.view_mut((0, n), (1, q)).copy_from(&(h / denom));
        (uz, &self.plant.q * (-k / denom))
    }

    fn matrices(&self, t: f64, side: Side) -> (DMatrix<f64>, DMatrix<f64>) {
        let (n, q) = self.dims();
        let (uz, uw) = self.input_maps(t, side);
        let mut m = DMatrix::zeros(n + q, n + q);
        m.view_mut((0, 0), (n, n)).copy_from(&self.plant.a);
        m.view_mut((0, 0), (n, n + q)).add_assign_from(&(&self.plant.b * &uz));
        let nu = self.plant.nu();
        let mut nmat = DMatrix::zeros(n + q, nu);
        nmat.view_mut((0, 0), (n, nu)).copy_from(&(&self.plant.p + &self.plant.b * &uw));
        if t >= self.active_from {
            m.view_mut((n, n), (q, q)).copy_from(&self.reg.f_im);
            m.view_mut((n, 0), (q, n + q)).add_assign_from(&(&self.reg.g_im * &uz));
            nmat.view_mut((n, 0), (q, nu)).copy_from(&(&self.reg.g_im * &uw));
        }
        (m, nmat)
    }
}

trait AddAssignFrom {
    fn add_assign_from(&mut self, other: &DMatrix<f64>);
}

impl AddAssignFrom for nalgebra::DMatrixViewMut<'_, f64> {
    fn add_assign_from(&mut self, other: &DMatrix<f64>) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += *b;
        }
    }
}

fn loop_grid(grid: &Grid, exo: Option<&ExplicitExosystem>, reg: &ErrorFeedbackRegulator, active_from: f64) -> Result<Grid> {
    let mut bps = reg.h_im.breakpoints(grid.t_start, grid.t_end);
    if let Some(exo) = exo {
        bps.extend(exo.breakpoints(grid.t_start, grid.t_end));
    }
    if active_from > grid.t_start && active_from < grid.t_end {
        bps.push(active_from);
    }
    grid.with_breakpoints(bps)
}

/// Integrates `Ż = M(t)Z + N(t)ω(t)·1ᵀ` for a block of initial states,
/// retrying once with doubled substeps on blowup.
fn integrate_loop(
    lp: &ErrorFeedbackLoop<'_>,
    grid: &Grid,
    z0: &DMatrix<f64>,
    forcing: Option<(&ExplicitExosystem, &DVector<f64>)>,
    store_derivatives: bool,
) -> Result<MatrixTrajectory> {
    let run = |factor: usize| {
        OdeSolver::new(grid)
            .options(OdeOptions {
                substeps: 1,
                store_derivatives,
                norm_cap: Some(BLOWUP_CAP * (1.0 + z0.norm())),
            })
            .substep_rule(|a, b, _| {
                let (m, _) = lp.matrices(a, Side::Right);
                factor * (((b - a) * stiffness(&m)) / STIFFNESS_BUDGET).ceil().max(1.0) as usize
            })
            .solve(
                |t, z, side| {
                    let (m, nmat) = lp.matrices(t, side);
                    let mut dz = &m * z;
                    if let Some((exo, w0)) = forcing {
                        let f = nmat * exo.omega(t, side, w0);
                        for mut col in dz.column_iter_mut() {
                            col += &f;
                        }
                    }
                    dz
                },
                z0,
            )
    };
    match run(1) {
        Err(Error::IntegrationBlowup { .. }) => run(2).map_err(|e| match e {
            Error::IntegrationBlowup { t, detail } => Error::IntegrationBlowup {
                t,
                detail: format!(
                    "{detail}; persists with halved steps, so the loop itself is unstable (k too small or realization invalid)"
                ),
            },
            other => other,
        }),
        other => other,
    }
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_error_feedback(
    plant: &LtiPlant,
    exo: &ExplicitExosystem,
    reg: &ErrorFeedbackRegulator,
    x0: &DVector<f64>,
    xi0: &DVector<f64>,
    omega0: &DVector<f64>,
    grid: &Grid,
    u_zero_before: Option<f64>,
) -> Result<ClosedLoopTrajectory> {
    let (n, q) = (plant.n(), reg.q);
    check_vec("x0", x0, n)?;
    check_vec("ξ0", xi0, q)?;
    check_vec("ω0", omega0, exo.nu)?;
    if plant.d != 0.0 && (1.0 + reg.k * plant.d).abs() < 1e-12 {
        return Err(Error::invalid("1 + kD vanishes: the input loop is algebraically singular"));
    }
    let active_from = u_zero_before.unwrap_or(f64::NEG_INFINITY);
    let grid = loop_grid(grid, Some(exo), reg, active_from)?;
    let lp = ErrorFeedbackLoop::new(plant, reg, active_from, &grid)?;
    let z0 = DMatrix::from_iterator(n + q, 1, x0.iter().chain(xi0.iter()).copied());
    let traj = integrate_loop(&lp, &grid, &z0, Some((exo, omega0)), false)?;
    let mut out = ClosedLoopTrajectory {
        t: traj.times().to_vec(),
        sides: (0..traj.len()).map(|i| traj.side(i)).collect(),
        x: Vec::with_capacity(traj.len()),
        xi: Some(Vec::with_capacity(traj.len())),
        u: Vec::with_capacity(traj.len()),
        e: Vec::with_capacity(traj.len()),
        omega: Vec::with_capacity(traj.len()),
    };
    for i in 0..traj.len() {
        let (t, side) = (traj.time(i), traj.side(i));
        let z = DVector::from_column_slice(traj.slice(i));
        let w = exo.omega(t, side, omega0);
        let (uz, uw) = lp.input_maps(t, side);
        let u = (uz * &z + uw * &w)[(0, 0)];
        let x = z.rows(0, n).into_owned();
        let e = (&plant.c * &x)[(0, 0)] + plant.d * u + (&plant.q * &w)[(0, 0)];
        out.x.push(x);
        out.xi.as_mut().unwrap().push(z.rows(n, q).into_owned());
        out.u.push(u);
        out.e.push(e);
        out.omega.push(w);
    }
    Ok(out)
}

pub enum ProbeTarget<'a> {
    FullInformation(&'a DMatrix<f64>),
    ErrorFeedback {
        reg: &'a ErrorFeedbackRegulator,
        u_zero_before: Option<f64>,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub trials: usize,
    pub seed: u64,
    pub rates: Vec<f64>,
    pub worst_rate: f64,
    /// Window maxima of the norm over the last half, one series per trial.
    pub window_peaks_decrease: bool,
    pub blew_up: bool,
    pub pass: bool,
    pub note: Option<String>,
}

pub const PROBE_TRIALS: usize = 10;
pub const PROBE_RATE_LIMIT: f64 = -1e-3;
const PROBE_WINDOWS: usize = 5;
const PROBE_NORM_FLOOR: f64 = 1e-200;

/// Log-norm slope over the last half and windowed-peak monotonicity of a
/// norm series.
fn decay_fit(times: &[f64], norms: &[f64]) -> (f64, bool) {
    let t0 = times[0];
    let t1 = *times.last().unwrap();
    let mid = 0.5 * (t0 + t1);
    let (xs, ys): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(norms)
        .filter(|(t, v)| **t >= mid && **v > PROBE_NORM_FLOOR)
        .map(|(t, v)| (*t, v.ln()))
        .unzip();
    let rate = if xs.len() >= 2 {
        linear_fit(&xs, &ys).0
    } else {
        f64::NEG_INFINITY
    };
    let width = (t1 - mid) / PROBE_WINDOWS as f64;
    let mut peaks = vec![0.0f64; PROBE_WINDOWS];
    for (t, v) in times.iter().zip(norms) {
        if *t >= mid {
            let k = (((t - mid) / width) as usize).min(PROBE_WINDOWS - 1);
            peaks[k] = peaks[k].max(*v);
        }
    }
    let decreasing = peaks.windows(2).all(|w| w[1] <= w[0] || w[0] <= PROBE_NORM_FLOOR);
    (rate, decreasing)
}

/// Unforced closed loop from `PROBE_TRIALS` random unit initial states.
/// Passes when every fitted decay rate is at most `−1e-3` per second and
/// window peaks of the norm keep decreasing over the last half.
pub fn stability_probe(plant: &LtiPlant, target: ProbeTarget<'_>, grid: &Grid, seed: u64) -> Result<ProbeReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = match &target {
        ProbeTarget::FullInformation(_) => plant.n(),
        ProbeTarget::ErrorFeedback { reg, .. } => plant.n() + reg.q,
    };
    let mut z0 = DMatrix::zeros(dim, PROBE_TRIALS);
    for j in 0..PROBE_TRIALS {
        let mut v = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        if v.norm() == 0.0 {
            v[0] = 1.0;
        }
        z0.set_column(j, &v.normalize());
    }
    let traj = match target {
        ProbeTarget::FullInformation(k) => {
            if k.shape() != (1, plant.n()) {
                return Err(Error::invalid(format!("K must be 1×{}", plant.n())));
            }
            let a_cl = &plant.a + &plant.b * k;
            let substeps = ((grid.base_step * stiffness(&a_cl)) / STIFFNESS_BUDGET).ceil().max(1.0) as usize;
            OdeSolver::new(grid)
                .options(OdeOptions {
                    substeps,
                    store_derivatives: false,
                    norm_cap: Some(BLOWUP_CAP),
                })
                .solve(|_, z, _| &a_cl * z, &z0)
        }
        ProbeTarget::ErrorFeedback { reg, u_zero_before } => {
            let active_from = u_zero_before.unwrap_or(f64::NEG_INFINITY);
            let g = loop_grid(grid, None, reg, active_from)?;
            let lp = ErrorFeedbackLoop::new(plant, reg, active_from, &g)?;
            integrate_loop(&lp, &g, &z0, None, false)
        }
    };
    let traj = match traj {
        Ok(t) => t,
        Err(Error::IntegrationBlowup { t, .. }) => {
            return Ok(ProbeReport {
                trials: PROBE_TRIALS,
                seed,
                rates: vec![f64::INFINITY; PROBE_TRIALS],
                worst_rate: f64::INFINITY,
                window_peaks_decrease: false,
                blew_up: true,
                pass: false,
                note: Some(format!("state norm exceeded {BLOWUP_CAP:.0e} at t = {t:.3}")),
            })
        }
        Err(e) => return Err(e),
    };
    let mut rates = Vec::with_capacity(PROBE_TRIALS);
    let mut decreasing = true;
    for j in 0..PROBE_TRIALS {
        let norms: Vec<f64> = (0..traj.len())
            .map(|i| {
                let s = traj.slice(i);
                s[j * dim..(j + 1) * dim].iter().map(|v| v * v).sum::<f64>().sqrt()
            })
            .collect();
        let (rate, dec) = decay_fit(traj.times(), &norms);
        rates.push(rate);
        decreasing &= dec;
    }
    let worst = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pass = worst <= PROBE_RATE_LIMIT && decreasing;
    Ok(ProbeReport {
        trials: PROBE_TRIALS,
        seed,
        rates,
        worst_rate: worst,
        window_peaks_decrease: decreasing,
        blew_up: false,
        pass,
        note: None,
    })
}

/// Exponential rate of the envelope of `|a − b|`: log-linear fit of
/// one-second window peaks while they stay above `floor`.
pub fn difference_decay_rate(times: &[f64], a: &[f64], b: &[f64], floor: f64) -> Option<f64> {
    if times.len() < 2 || a.len() != times.len() || b.len() != times.len() {
        return None;
    }
    let t0 = times[0];
    let mut peaks: Vec<(f64, f64)> = Vec::new();
    for ((t, x), y) in times.iter().zip(a).zip(b) {
        let k = (t - t0).floor();
        let d = (x - y).abs();
        match peaks.last_mut() {
            Some(p) if p.0 == k => p.1 = p.1.max(d),
            _ => peaks.push((k, d)),
        }
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = peaks
        .into_iter()
        .take_while(|p| p.1 > floor)
        .map(|(k, d)| (t0 + k + 0.5, d.ln()))
        .unzip();
    (xs.len() >= 3).then(|| linear_fit(&xs, &ys).0)
}

/// Ackermann pole placement for single-input `(A, B)`: `K` with
/// `σ(A + BK)` equal to the roots of the monic polynomial with the given
/// real coefficients (lowest degree first, leading 1 omitted).
pub fn place_poles(a: &DMatrix<f64>, b: &DMatrix<f64>, poles: &[num_complex::Complex64]) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if poles.len() != n || b.shape() != (n, 1) {
        return Err(Error::invalid(format!("need {n} poles and an n×1 input matrix")));
    }
    let (f, _) = crate::imu::build_companion(poles)?;
    let coeffs: Vec<f64> = (0..n).map(|k| -f[(n - 1, k)]).collect();
    let mut ctrb = DMatrix::zeros(n, n);
    let mut col = b.clone();
    for k in 0..n {
        ctrb.set_column(k, &col.column(0));
        col = a * col;
    }
    let inv = ctrb
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::invalid("(A, B) is not controllable"))?;
    // φ(A) = A^n + Σ c_k A^k
    let mut phi = DMatrix::zeros(n, n);
    let mut ak = DMatrix::identity(n, n);
    for c in &coeffs {
        phi += &ak * *c;
        ak = a * ak;
    }
    phi += ak;
    let mut en = DMatrix::zeros(1, n);
    en[(0, n - 1)] = 1.0;
    Ok(-(en * inv * phi))
}

/// A random vector with entries uniform in `[-1, 1]`, from a seeded stream.
pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

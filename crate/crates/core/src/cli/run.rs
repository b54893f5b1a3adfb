//! Scenario pipeline: validate, solve the regulator equations, build the
//! regulator, simulate, probe, and write the artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use super::scenario::{matrix, RegulatorKind, Scenario};
use super::svg::{render, Panel};
use crate::error::{Error, Result};
use crate::exo::{validate_exosystem, ExplicitExosystem, TimeVaryingMatrix};
use crate::imu::{
    assemble_error_feedback, build_augmented_im, build_companion, find_immersion, parse_eigenvalues,
    realize_explicit, realize_implicit, BasisSource, CanonicalRealization, CandidateDiagnostic, ImmersionIM,
    ImmersionOptions, InternalModelPair, PairForm, RealizeOptions,
};
use crate::numkit::{Grid, MatrixTrajectory};
use crate::plant::{nonresonance_check, LtiPlant};
use crate::regeq::{dae_residual, feasibility_report, solve_regulator_equations, RegulatorSolution};
use crate::sim::{
    place_poles, simulate_error_feedback, simulate_full_information, stability_probe, ClosedLoopTrajectory,
    ProbeReport, ProbeTarget, RegulationMetrics,
};

/// Residuals of the regulator equations are checked from this long after
/// `t0` (or half the horizon, if shorter).
const RESIDUAL_FROM: f64 = 5.0;
/// Extra dimensions tried above the pair dimension when no spectrum is given.
const M_SEARCH: usize = 6;
const DEFAULT_SPECTRUM_RADIUS: f64 = 1.5;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub step: Option<f64>,
    pub horizon: Option<f64>,
    /// Skip CSV and SVG output (metrics.json and validation.json are
    /// still written).
    pub summary_only: bool,
}

#[derive(Debug)]
pub enum RunError {
    Numerical { stage: &'static str, error: Error },
    Io(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Numerical { stage, error } => write!(f, "{stage}: {error}"),
            RunError::Io(m) => write!(f, "I/O: {m}"),
        }
    }
}

fn at(stage: &'static str) -> impl Fn(Error) -> RunError {
    move |error| RunError::Numerical { stage, error }
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> RunError + '_ {
    move |e| RunError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Serialize)]
pub struct GateResult {
    pub name: String,
    pub threshold: Option<f64>,
    pub value: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegeqSummary {
    pub relative_degree: usize,
    pub settle: f64,
    pub sup_pi_x: f64,
    pub sup_delta: f64,
    pub residual_from: f64,
    pub dynamic_residual: f64,
    pub algebraic_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RealizationSummary {
    pub form: PairForm,
    pub pair_dimension: usize,
    pub m: usize,
    pub eigenvalues: Vec<String>,
    pub t_hat: f64,
    pub certified_from: f64,
    pub certified_rank: usize,
    pub window_defect: f64,
    pub h_active_from: f64,
    pub sup_h_window: f64,
    pub k: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ImmersionSummary {
    pub d: usize,
    pub t_hat: f64,
    pub sup_coefficient: f64,
    pub sup_residual: f64,
    pub candidates: Vec<CandidateDiagnostic>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AugmentationSummary {
    pub l: usize,
    pub l_prime: usize,
    pub q_min: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub scenario: String,
    pub scenario_hash: String,
    pub regulator: &'static str,
    pub horizon: f64,
    pub step: f64,
    pub regulation: RegulationMetrics,
    pub regeq: RegeqSummary,
    pub full_information_gain: Option<Vec<f64>>,
    pub realization: Option<RealizationSummary>,
    pub augmentation: Option<AugmentationSummary>,
    pub immersion: Option<ImmersionSummary>,
    pub probe: Option<ProbeReport>,
    pub gates: Vec<GateResult>,
    pub pass: bool,
}

#[derive(Debug)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub metrics: Metrics,
    pub timings: Vec<(&'static str, f64)>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.metrics.pass
    }
}

/// Everything the pipeline builds, kept for artifact writing.
struct Built {
    sol: RegulatorSolution,
    traj: ClosedLoopTrajectory,
    realization: Option<CanonicalRealization>,
    immersion: Option<ImmersionIM>,
}

fn json_or_error<T: Serialize>(r: Result<T>) -> serde_json::Value {
    match r {
        Ok(v) => serde_json::to_value(v).unwrap_or(serde_json::Value::Null),
        Err(e) => serde_json::json!({ "error": e.to_string() }),
    }
}

/// `validation.json` contents: exosystem checks, feasibility screen and the
/// non-resonance diagnostic for the design plant.
pub fn validation_report(s: &Scenario, horizon: f64) -> Result<serde_json::Value> {
    let plant = s.design_plant()?;
    let (exo, _) = s.exosystem.build(horizon)?;
    Ok(serde_json::json!({
        "scenario": s.name,
        "horizon": horizon,
        "exosystem": json_or_error(validate_exosystem(&exo, horizon, 16)),
        "feasibility": json_or_error(feasibility_report(&plant, &exo, horizon)),
        "nonresonance": json_or_error(nonresonance_check(&plant, &exo, horizon)),
        "stabilizable": plant.is_stabilizable(),
    }))
}

/// Evenly spread stable spectrum of size `m`, conjugate pairs built
/// explicitly so that the set is exactly closed under conjugation.
pub fn default_spectrum(m: usize, radius: f64) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(m);
    for k in 0..m / 2 {
        let theta = std::f64::consts::PI * (0.5 + (2 * k + 1) as f64 / (2 * m) as f64);
        let z = Complex64::from_polar(radius, theta);
        out.push(z);
        out.push(z.conj());
    }
    if m % 2 == 1 {
        out.push(Complex64::new(-radius, 0.0));
    }
    out
}

fn format_eigenvalues(e: &[Complex64]) -> Vec<String> {
    e.iter()
        .map(|z| {
            if z.im == 0.0 {
                format!("{}", z.re)
            } else {
                format!("{}{:+}i", z.re, z.im)
            }
        })
        .collect()
}

fn realize_with(
    pair: &InternalModelPair,
    eig: &[Complex64],
    grid: &Grid,
    t_hat: f64,
) -> Result<CanonicalRealization> {
    let (f, g) = build_companion(eig)?;
    match pair.form {
        PairForm::Explicit => realize_explicit(pair, &f, &g, grid, t_hat, RealizeOptions::default()),
        PairForm::Implicit => realize_implicit(pair, &f, &g, grid, t_hat, RealizeOptions::default()),
    }
}

/// Realizes with the given spectrum, or searches `m` upward from the pair
/// dimension with [`default_spectrum`] until the rank certifies.
fn realize_pair(
    pair: &InternalModelPair,
    eigenvalues: Option<&[String]>,
    grid: &Grid,
    t_hat: f64,
) -> Result<(CanonicalRealization, Vec<Complex64>)> {
    if let Some(e) = eigenvalues {
        let eig = parse_eigenvalues(e)?;
        return Ok((realize_with(pair, &eig, grid, t_hat)?, eig));
    }
    let mut last = None;
    for m in pair.s + 1..=pair.s + M_SEARCH {
        let eig = default_spectrum(m, DEFAULT_SPECTRUM_RADIUS);
        match realize_with(pair, &eig, grid, t_hat) {
            Ok(r) => return Ok((r, eig)),
            Err(e @ Error::RankDrift(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::invalid("empty dimension search")))
}

fn default_poles(plant: &LtiPlant) -> Vec<Complex64> {
    let rho = plant
        .a
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(1.0, f64::max);
    (0..plant.n()).map(|j| Complex64::new(-rho * (1.0 + 0.25 * j as f64), 0.0)).collect()
}

pub fn run_scenario(s: &Scenario, opts: &RunOptions) -> std::result::Result<RunReport, RunError> {
    let mut s = s.clone();
    if let Some(h) = opts.horizon {
        s.grid.horizon = h;
    }
    if let Some(st) = opts.step {
        s.grid.step = st;
    }
    s.check().map_err(at("scenario"))?;
    let horizon = s.grid.horizon;
    let mut timings = Vec::new();
    let clock = Instant::now();

    std::fs::create_dir_all(&opts.out_dir).map_err(io(&opts.out_dir))?;
    let validation = validation_report(&s, horizon).map_err(at("validation"))?;
    write_json(&opts.out_dir.join("validation.json"), &validation)?;
    timings.push(("validation", clock.elapsed().as_secs_f64()));

    let design = s.design_plant().map_err(at("plant"))?;
    let actual = s.simulated_plant().map_err(at("plant"))?;
    let (exo, w0) = s.exosystem.build(horizon).map_err(at("exosystem"))?;
    let grid = exo.grid(horizon, s.grid.step).map_err(at("grid"))?;
    let t0 = exo.t0;

    let clock = Instant::now();
    let sol = solve_regulator_equations(&design, &exo, &grid, t0).map_err(at("regulator equations"))?;
    let res_from = t0 + RESIDUAL_FROM.min(0.5 * horizon);
    let (dyn_res, alg_res) = dae_residual(&sol, &design, &exo).sup_from(res_from);
    let regeq = RegeqSummary {
        relative_degree: sol.relative_degree,
        settle: sol.settle,
        sup_pi_x: sol.sup_pi_x,
        sup_delta: sol.sup_delta,
        residual_from: res_from,
        dynamic_residual: dyn_res,
        algebraic_residual: alg_res,
    };
    timings.push(("regulator equations", clock.elapsed().as_secs_f64()));

    let x0 = match &s.initial.x0 {
        Some(v) => DVector::from_column_slice(v),
        None => DVector::zeros(design.n()),
    };
    let r = &s.regulator;
    let mut fi_gain = None;
    let mut realization_summary = None;
    let mut augmentation = None;
    let mut immersion_summary = None;
    let mut realization = None;
    let mut immersion = None;
    let clock = Instant::now();
    let (traj, probe) = match r.kind {
        RegulatorKind::FullInformation => {
            let poles = match &r.poles {
                Some(p) => parse_eigenvalues(p).map_err(at("poles"))?,
                None => default_poles(&design),
            };
            let k = place_poles(&design.a, &design.b, &poles).map_err(at("pole placement"))?;
            fi_gain = Some(k.iter().copied().collect());
            let traj = simulate_full_information(&actual, &exo, &sol, &k, &x0, &w0, &grid)
                .map_err(at("simulation"))?;
            let probe = stability_probe(&actual, ProbeTarget::FullInformation(&k), &grid, r.probe_seed)
                .map_err(at("stability probe"))?;
            (traj, probe)
        }
        kind => {
            let mut t_hat = r.t_hat.unwrap_or(t0);
            let mut u_zero_before = r.u_zero_before;
            let pair = match kind {
                RegulatorKind::ErrorFeedbackNominal => {
                    InternalModelPair::explicit(exo.lambda().clone(), sol.delta_fn()).map_err(at("internal model"))?
                }
                RegulatorKind::RobustAugmentation => {
                    let source = match (&r.basis, &r.u_samples) {
                        (Some(b), _) => BasisSource::Explicit(matrix("regulator.basis", b).map_err(at("augmentation"))?),
                        (None, Some(us)) => BasisSource::Samples(
                            us.iter()
                                .map(|u| matrix("regulator.u_samples", u))
                                .collect::<Result<Vec<_>>>()
                                .map_err(at("augmentation"))?,
                        ),
                        (None, None) => unreachable!("checked"),
                    };
                    let (aug, pair) =
                        build_augmented_im(&sol.delta_fn(), &exo, source).map_err(at("augmentation"))?;
                    augmentation = Some(AugmentationSummary {
                        l: aug.l,
                        l_prime: aug.l_prime,
                        q_min: aug.q_min(),
                    });
                    pair
                }
                RegulatorKind::RobustImmersion => {
                    let fb = TimeVaryingMatrix::product(sol.delta_fn(), exo.lambda().clone());
                    let candidates = r.t_hat_grid.clone().unwrap_or_else(|| vec![t0 + 2.0]);
                    let (im, diags) = find_immersion(
                        &fb,
                        r.d_max.unwrap_or(4),
                        &candidates,
                        &grid,
                        ImmersionOptions::default(),
                    )
                    .map_err(at("immersion"))?;
                    t_hat = r.t_hat.unwrap_or(im.t_hat);
                    u_zero_before = Some(r.u_zero_before.unwrap_or(im.t_hat));
                    immersion_summary = Some(ImmersionSummary {
                        d: im.d,
                        t_hat: im.t_hat,
                        sup_coefficient: im.sup_coefficient,
                        sup_residual: im.sup_residual(),
                        candidates: diags,
                    });
                    let pair = im.implicit_pair().map_err(at("immersion"))?;
                    immersion = Some(im);
                    pair
                }
                RegulatorKind::FullInformation => unreachable!(),
            };
            let (real, eig) =
                realize_pair(&pair, r.eigenvalues.as_deref(), &grid, t_hat).map_err(at("realization"))?;
            let window_sup = real
                .h_im
                .times()
                .iter()
                .zip(real.h_im.norms())
                .filter(|(t, _)| **t >= real.certified_from)
                .map(|(_, v)| v)
                .fold(0.0, f64::max);
            realization_summary = Some(RealizationSummary {
                form: real.form,
                pair_dimension: pair.s,
                m: real.m,
                eigenvalues: format_eigenvalues(&eig),
                t_hat: real.t_hat,
                certified_from: real.certified_from,
                certified_rank: real.certified_rank,
                window_defect: real.window_defect,
                h_active_from: real.h_active_from,
                sup_h_window: window_sup,
                k: r.k,
            });
            let reg = assemble_error_feedback(&real, r.k).map_err(at("regulator"))?;
            let xi0 = match &s.initial.xi0 {
                Some(v) if v.len() == reg.q => DVector::from_column_slice(v),
                Some(v) => {
                    return Err(RunError::Numerical {
                        stage: "initial conditions",
                        error: Error::invalid(format!("initial.xi0 has {} entries, regulator has {}", v.len(), reg.q)),
                    })
                }
                None => DVector::zeros(reg.q),
            };
            let traj = simulate_error_feedback(&actual, &exo, &reg, &x0, &xi0, &w0, &grid, u_zero_before)
                .map_err(at("simulation"))?;
            let probe = stability_probe(
                &actual,
                ProbeTarget::ErrorFeedback {
                    reg: &reg,
                    u_zero_before,
                },
                &grid,
                r.probe_seed,
            )
            .map_err(at("stability probe"))?;
            realization = Some(real);
            (traj, probe)
        }
    };
    timings.push(("regulator and simulation", clock.elapsed().as_secs_f64()));

    let regulation = traj.metrics(s.output.settle_threshold);
    let mut gates = Vec::new();
    let g = &s.gates;
    if let Some(th) = g.tail_relative_error {
        let v = regulation.tail_relative_error;
        gates.push(GateResult {
            name: "tail_relative_error".into(),
            threshold: Some(th),
            value: Some(v),
            pass: v <= th,
        });
    }
    if g.stability_probe {
        gates.push(GateResult {
            name: "stability_probe".into(),
            threshold: None,
            value: Some(probe.worst_rate),
            pass: probe.pass,
        });
    }
    if let Some(th) = g.regeq_residual {
        let v = dyn_res.max(alg_res);
        gates.push(GateResult {
            name: "regeq_residual".into(),
            threshold: Some(th),
            value: Some(v),
            pass: v <= th,
        });
    }
    if let (Some(th), Some(rs)) = (g.realization_defect, &realization_summary) {
        gates.push(GateResult {
            name: "realization_defect".into(),
            threshold: Some(th),
            value: Some(rs.window_defect),
            pass: rs.window_defect <= th,
        });
    }
    let pass = gates.iter().all(|g| g.pass);
    let metrics = Metrics {
        scenario: s.name.clone(),
        scenario_hash: s.hash(),
        regulator: r.kind.name(),
        horizon,
        step: s.grid.step,
        regulation,
        regeq,
        full_information_gain: fi_gain,
        realization: realization_summary,
        augmentation,
        immersion: immersion_summary,
        probe: Some(probe),
        gates,
        pass,
    };
    write_json(&opts.out_dir.join("metrics.json"), &metrics)?;
    if !opts.summary_only {
        let clock = Instant::now();
        let built = Built {
            sol,
            traj,
            realization,
            immersion,
        };
        write_artifacts(&s, &opts.out_dir, &built, &exo)?;
        timings.push(("artifacts", clock.elapsed().as_secs_f64()));
    }
    Ok(RunReport {
        out_dir: opts.out_dir.clone(),
        metrics,
        timings,
    })
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> std::result::Result<(), RunError> {
    let text = serde_json::to_string_pretty(v).map_err(|e| RunError::Io(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(io(path))
}

/// Nine significant digits.
fn num(v: f64) -> String {
    format!("{v:.8e}")
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn write(&self, path: &Path) -> std::result::Result<(), RunError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
        let err = |e: csv::Error| RunError::Io(format!("{}: {e}", path.display()));
        w.write_record(&self.header).map_err(err)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| num(*v))).map_err(err)?;
        }
        w.flush().map_err(io(path))
    }

    fn column(&self, name: &str) -> Vec<f64> {
        match self.header.iter().position(|h| h == name) {
            Some(j) => self.rows.iter().map(|r| r[j]).collect(),
            None => Vec::new(),
        }
    }
}

fn trajectory_table(tr: &MatrixTrajectory, prefix: &str, stride: usize) -> Table {
    let (r, c) = tr.shape();
    let mut header = vec!["t".to_string()];
    for i in 0..r {
        for j in 0..c {
            header.push(if r == 1 {
                format!("{prefix}_{}", j + 1)
            } else {
                format!("{prefix}_{}_{}", i + 1, j + 1)
            });
        }
    }
    let rows = (0..tr.len())
        .filter(|i| i % stride == 0 || i + 1 == tr.len())
        .map(|i| {
            let v = tr.value(i);
            let mut row = vec![tr.time(i)];
            for ii in 0..r {
                for jj in 0..c {
                    row.push(v[(ii, jj)]);
                }
            }
            row
        })
        .collect();
    Table { header, rows }
}

fn write_artifacts(
    s: &Scenario,
    dir: &Path,
    b: &Built,
    exo: &ExplicitExosystem,
) -> std::result::Result<(), RunError> {
    let stride = s.output.stride;
    let plots = dir.join("plots");
    if s.output.plots {
        std::fs::create_dir_all(&plots).map_err(io(&plots))?;
    }

    // regeq.csv: t, Π_x entries, Δ entries, residual.
    let pi = trajectory_table(&b.sol.pi_x, "pi_x", stride);
    let delta = trajectory_table(&b.sol.delta, "delta", stride);
    let keep: Vec<usize> = (0..b.sol.pi_x.len())
        .filter(|i| i % stride == 0 || i + 1 == b.sol.pi_x.len())
        .collect();
    let mut header = pi.header.clone();
    header.extend(delta.header[1..].iter().cloned());
    header.push("residual".into());
    let rows = pi
        .rows
        .iter()
        .zip(&delta.rows)
        .zip(&keep)
        .map(|((p, d), &i)| {
            let mut row = p.clone();
            row.extend_from_slice(&d[1..]);
            row.push(b.sol.residual.get(i).copied().unwrap_or(f64::NAN));
            row
        })
        .collect();
    let regeq = Table { header, rows };
    regeq.write(&dir.join("regeq.csv"))?;
    if s.output.plots {
        let t = regeq.column("t");
        let mut p1 = Panel::new("Π_x(t)");
        let mut p2 = Panel::new("Δ(t)");
        for h in &regeq.header[1..] {
            if h.starts_with("pi_x") {
                p1 = p1.with(h.clone(), regeq.column(h));
            } else if h.starts_with("delta") {
                p2 = p2.with(h.clone(), regeq.column(h));
            }
        }
        save_svg(&plots.join("regulator_equations.svg"), &render("Regulator equations", &t, &[p1, p2]))?;
    }

    // realization.csv: t, H_im entries, rank.
    if let Some(real) = &b.realization {
        let mut tab = trajectory_table(&real.h_im, "h", stride);
        tab.header.push("rank".into());
        let idx: Vec<usize> = (0..real.h_im.len())
            .filter(|i| i % stride == 0 || i + 1 == real.h_im.len())
            .collect();
        for (row, &i) in tab.rows.iter_mut().zip(&idx) {
            row.push(real.rank_profile[i] as f64);
        }
        tab.write(&dir.join("realization.csv"))?;
        if s.output.plots {
            let t = tab.column("t");
            let mut p = Panel::new("H_im(t)");
            for h in tab.header[1..].iter().filter(|h| h.starts_with('h')) {
                p = p.with(h.clone(), tab.column(h));
            }
            save_svg(&plots.join("h_im.svg"), &render("Canonical realization", &t, &[p]))?;
        }
    }

    // immersion.csv: t, a_1..a_d, residual.
    if let Some(im) = &b.immersion {
        let mut tab = trajectory_table(&im.coefficients, "a", stride);
        tab.header.push("residual".into());
        let idx: Vec<usize> = (0..im.coefficients.len())
            .filter(|i| i % stride == 0 || i + 1 == im.coefficients.len())
            .collect();
        for (row, &i) in tab.rows.iter_mut().zip(&idx) {
            row.push(im.residual.get(i).copied().unwrap_or(f64::NAN));
        }
        tab.write(&dir.join("immersion.csv"))?;
        if s.output.plots {
            let t = tab.column("t");
            let mut p = Panel::new("a_i(t)");
            for h in tab.header[1..].iter().filter(|h| h.starts_with("a_")) {
                p = p.with(h.clone(), tab.column(h));
            }
            save_svg(&plots.join("immersion.svg"), &render("Immersion coefficients", &t, &[p]))?;
        }
    }

    // closedloop.csv: t, x, ξ, u, e, ω.
    let tr = &b.traj;
    let n = tr.x.first().map_or(0, |x| x.len());
    let q = tr.xi.as_ref().and_then(|v| v.first()).map_or(0, |x| x.len());
    let nu = exo.nu;
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend((1..=q).map(|i| format!("xi_{i}")));
    header.push("u".into());
    header.push("e".into());
    header.extend((1..=nu).map(|i| format!("omega_{i}")));
    let rows = (0..tr.t.len())
        .filter(|i| i % stride == 0 || i + 1 == tr.t.len())
        .map(|i| {
            let mut row = vec![tr.t[i]];
            row.extend(tr.x[i].iter());
            if let Some(xi) = &tr.xi {
                row.extend(xi[i].iter());
            }
            row.push(tr.u[i]);
            row.push(tr.e[i]);
            row.extend(tr.omega[i].iter());
            row
        })
        .collect();
    let cl = Table { header, rows };
    cl.write(&dir.join("closedloop.csv"))?;
    if s.output.plots {
        let t = cl.column("t");
        let mut px = Panel::new("x(t)");
        for i in 1..=n {
            px = px.with(format!("x_{i}"), cl.column(&format!("x_{i}")));
        }
        let pu = Panel::new("u(t)").with("u", cl.column("u"));
        let pe = Panel::new("e(t)").with("e", cl.column("e"));
        save_svg(&plots.join("closed_loop.svg"), &render(&s.name, &t, &[px, pu, pe]))?;
        let mut pw = Panel::new("ω(t)");
        for i in 1..=nu {
            pw = pw.with(format!("omega_{i}"), cl.column(&format!("omega_{i}")));
        }
        save_svg(&plots.join("exosystem.svg"), &render("Exogenous signals", &t, &[pw]))?;
    }
    Ok(())
}

fn save_svg(path: &Path, text: &str) -> std::result::Result<(), RunError> {
    std::fs::write(path, text).map_err(io(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_spectrum_is_stable_and_closed() {
        for m in 1..10 {
            let e = default_spectrum(m, 1.5);
            assert_eq!(e.len(), m);
            assert!(e.iter().all(|z| z.re < 0.0));
            assert!(build_companion(&e).is_ok());
        }
    }
}

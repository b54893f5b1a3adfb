//! Scenario files: TOML with nested sections and row-major matrix literals.
//! Unknown keys are rejected everywhere.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exo::{
    build_signal, inflate_to_invertible, ExplicitExosystem, SignalKind, SignalParams, TimeVaryingMatrix,
};
use crate::plant::LtiPlant;
use crate::rlc::RlcParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: Option<String>,
    /// Model used for design (regulator equations, internal model).
    pub plant: PlantSpec,
    /// Model the loop is simulated with; the design plant when absent.
    #[serde(default)]
    pub actual_plant: Option<PlantSpec>,
    pub exosystem: ExoSpec,
    pub regulator: RegulatorSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub gates: GateSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Either `rlc = { … }` or the matrices `a, b, c, d, p, q`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    #[serde(default)]
    pub rlc: Option<RlcParams>,
    #[serde(default)]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub c: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub d: Option<f64>,
    #[serde(default)]
    pub p: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub q: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub kind: SignalKind,
    #[serde(default)]
    pub period: Option<f64>,
    #[serde(default)]
    pub phase: Option<f64>,
    #[serde(default)]
    pub warp: Option<f64>,
    #[serde(default)]
    pub envelope_slope: Option<f64>,
    #[serde(default)]
    pub offset: Option<f64>,
    #[serde(default)]
    pub amplitude: Option<f64>,
    #[serde(default)]
    pub s: Option<Vec<Vec<f64>>>,
    /// Companion used if the component vanishes: the same signal with its
    /// phase moved by this much.
    #[serde(default)]
    pub companion_phase_shift: Option<f64>,
}

impl ComponentSpec {
    fn params(&self) -> SignalParams {
        let d = SignalParams::default();
        SignalParams {
            period: self.period.unwrap_or(d.period),
            phase: self.phase.unwrap_or(d.phase),
            warp: self.warp,
            envelope_slope: self.envelope_slope,
            offset: self.offset.unwrap_or(d.offset),
            amplitude: self.amplitude.unwrap_or(d.amplitude),
            s: self.s.clone(),
        }
    }
}

/// Scalar components are stacked diagonally and inflated where they
/// vanish; a single `matrix_exponential` component is used as `Λ` directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExoSpec {
    #[serde(default)]
    pub t0: f64,
    pub components: Vec<ComponentSpec>,
    /// One initial value per component, mapped through the inflation.
    #[serde(default)]
    pub amplitudes: Option<Vec<f64>>,
    /// `ω0` of the final exosystem; overrides `amplitudes`.
    #[serde(default)]
    pub omega0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegulatorKind {
    FullInformation,
    ErrorFeedbackNominal,
    RobustAugmentation,
    RobustImmersion,
}

impl RegulatorKind {
    pub fn name(self) -> &'static str {
        match self {
            RegulatorKind::FullInformation => "full_information",
            RegulatorKind::ErrorFeedbackNominal => "error_feedback_nominal",
            RegulatorKind::RobustAugmentation => "robust_augmentation",
            RegulatorKind::RobustImmersion => "robust_immersion",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegulatorSpec {
    pub kind: RegulatorKind,
    /// Closed-loop poles of `A + BK` (full information).
    #[serde(default)]
    pub poles: Option<Vec<String>>,
    /// Spectrum of `F_im`; its length is `m`. When absent, `m` is searched
    /// upward from the pair dimension with a default spectrum.
    #[serde(default)]
    pub eigenvalues: Option<Vec<String>>,
    #[serde(default = "default_gain")]
    pub k: f64,
    /// Start of the realization (and of `Ψ_M`/`M` integration).
    #[serde(default)]
    pub t_hat: Option<f64>,
    #[serde(default)]
    pub u_zero_before: Option<f64>,
    /// Augmentation basis `L` (`νl × l′`, row-major).
    #[serde(default)]
    pub basis: Option<Vec<Vec<f64>>>,
    /// Alternatively, samples of `U′(μ)` whose span gives `L`.
    #[serde(default)]
    pub u_samples: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default)]
    pub d_max: Option<usize>,
    #[serde(default)]
    pub t_hat_grid: Option<Vec<f64>>,
    #[serde(default = "default_seed")]
    pub probe_seed: u64,
}

fn default_gain() -> f64 {
    100.0
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub xi0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_step")]
    pub step: f64,
}

fn default_horizon() -> f64 {
    30.0
}

fn default_step() -> f64 {
    1e-3
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            horizon: default_horizon(),
            step: default_step(),
        }
    }
}

/// Acceptance gates; a run exits 0 only if every declared gate passes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSpec {
    #[serde(default)]
    pub tail_relative_error: Option<f64>,
    #[serde(default)]
    pub stability_probe: bool,
    #[serde(default)]
    pub regeq_residual: Option<f64>,
    #[serde(default)]
    pub realization_defect: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_true")]
    pub plots: bool,
    /// Write every `stride`-th sample to the CSV files.
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_settle")]
    pub settle_threshold: f64,
}

fn default_true() -> bool {
    true
}

fn default_stride() -> usize {
    1
}

fn default_settle() -> f64 {
    1e-2
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            plots: true,
            stride: 1,
            settle_threshold: default_settle(),
        }
    }
}

pub const BUILTINS: [(&str, &str); 3] = [
    ("rlc-nominal", include_str!("../../scenarios/rlc-nominal.toml")),
    ("rlc-robust-augmentation", include_str!("../../scenarios/rlc-robust-augmentation.toml")),
    ("rlc-robust-immersion", include_str!("../../scenarios/rlc-robust-immersion.toml")),
];

pub fn builtin_source(name: &str) -> Option<&'static str> {
    BUILTINS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, col)
}

fn toml_error(src: Option<&str>, e: &toml::de::Error) -> Error {
    let (line, column) = match (src, e.span()) {
        (Some(s), Some(span)) => line_col(s, span.start),
        _ => (0, 0),
    };
    Error::Parse {
        line,
        column,
        message: e.message().to_string(),
    }
}

/// Parses `src` and applies `key=value` overrides. Values are TOML
/// literals; anything that does not parse as one is taken as a string.
/// Assigning a bare word to a table (`regulator=full_information`) sets
/// its `kind`.
pub fn parse_scenario(src: &str, overrides: &[String]) -> Result<Scenario> {
    let first: Scenario = toml::from_str(src).map_err(|e| toml_error(Some(src), &e))?;
    if overrides.is_empty() {
        first.check()?;
        return Ok(first);
    }
    let mut table: toml::Table = toml::from_str(src).map_err(|e| toml_error(Some(src), &e))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let s: Scenario = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Parse {
            line: 0,
            column: 0,
            message: format!("after overrides: {}", e.message()),
        })?;
    s.check()?;
    Ok(s)
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let bad = |m: String| Error::Parse {
        line: 0,
        column: 0,
        message: m,
    };
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| bad(format!("override `{spec}` is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(bad(format!("override key `{key}` is malformed")));
    }
    let value = parse_value(raw.trim());
    let mut cur = table;
    for part in &path[..path.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| bad(format!("`{part}` in `{key}` is not a table")))?;
    }
    let last = path[path.len() - 1];
    match (cur.get_mut(last), &value) {
        (Some(toml::Value::Table(t)), toml::Value::String(_)) => {
            t.insert("kind".into(), value);
        }
        _ => {
            cur.insert(last.to_string(), value);
        }
    }
    Ok(())
}

/// Loads `builtin:<name>` or a file path.
pub fn load_scenario(reference: &str, overrides: &[String]) -> std::result::Result<Scenario, LoadError> {
    let src = match reference.strip_prefix("builtin:") {
        Some(name) => builtin_source(name)
            .ok_or_else(|| LoadError::Scenario(Error::invalid(format!("no builtin scenario `{name}`"))))?
            .to_string(),
        None => std::fs::read_to_string(reference).map_err(|e| LoadError::Io(format!("{reference}: {e}")))?,
    };
    parse_scenario(&src, overrides).map_err(LoadError::Scenario)
}

#[derive(Debug)]
pub enum LoadError {
    Io(String),
    Scenario(Error),
}

impl std::fmt::Display for LoadError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LoadError::Io(m) => write!(f, "{m}"),
            LoadError::Scenario(e) => write!(f, "{e}"),
        }
    }
}

pub(crate) fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    crate::exo::matrix_from_rows(rows).map_err(|e| Error::invalid(format!("{name}: {e}")))
}

impl PlantSpec {
    pub fn build(&self) -> Result<LtiPlant> {
        let any_matrix = self.a.is_some()
            || self.b.is_some()
            || self.c.is_some()
            || self.d.is_some()
            || self.p.is_some()
            || self.q.is_some();
        match (&self.rlc, any_matrix) {
            (Some(r), false) => r.plant(),
            (Some(_), true) => Err(Error::invalid("plant: give either `rlc` or matrices, not both")),
            (None, _) => {
                let need = |n: &str, m: &Option<Vec<Vec<f64>>>| -> Result<DMatrix<f64>> {
                    matrix(n, m.as_ref().ok_or_else(|| Error::invalid(format!("plant: missing `{n}`")))?)
                };
                LtiPlant::new(
                    need("a", &self.a)?,
                    need("b", &self.b)?,
                    need("c", &self.c)?,
                    self.d.unwrap_or(0.0),
                    need("p", &self.p)?,
                    need("q", &self.q)?,
                )
            }
        }
    }
}

impl ExoSpec {
    /// The exosystem and its `ω0` for a run of length `horizon`.
    pub fn build(&self, horizon: f64) -> Result<(ExplicitExosystem, DVector<f64>)> {
        if self.components.is_empty() {
            return Err(Error::invalid("exosystem: no components"));
        }
        if self.components.len() == 1 && self.components[0].kind == SignalKind::MatrixExponential {
            let lambda = build_signal(SignalKind::MatrixExponential, &self.components[0].params())?;
            let exo = ExplicitExosystem::new(lambda, self.t0)?;
            let w0 = self
                .omega0
                .as_ref()
                .ok_or_else(|| Error::invalid("exosystem: a matrix_exponential generator needs `omega0`"))?;
            if w0.len() != exo.nu {
                return Err(Error::invalid(format!("exosystem: omega0 needs {} entries", exo.nu)));
            }
            let w = exo.map_initial(&DVector::from_column_slice(w0));
            return Ok((exo, w));
        }
        let mut comps = Vec::new();
        let mut companions = Vec::new();
        for (i, c) in self.components.iter().enumerate() {
            if c.kind == SignalKind::MatrixExponential {
                return Err(Error::invalid(format!(
                    "exosystem: component {i} is matrix_exponential; it must be the only component"
                )));
            }
            let p = c.params();
            comps.push(build_signal(c.kind, &p)?);
            companions.push(match c.companion_phase_shift {
                Some(shift) => Some(build_signal(
                    c.kind,
                    &SignalParams {
                        phase: p.phase + shift,
                        ..p.clone()
                    },
                )?),
                None => None::<TimeVaryingMatrix>,
            });
        }
        let inf = inflate_to_invertible(
            &comps,
            &companions,
            &DMatrix::zeros(1, comps.len()),
            self.t0,
            horizon,
        )?;
        let w0 = match (&self.omega0, &self.amplitudes) {
            (Some(w), _) => {
                if w.len() != inf.exo.nu {
                    return Err(Error::invalid(format!("exosystem: omega0 needs {} entries", inf.exo.nu)));
                }
                DVector::from_column_slice(w)
            }
            (None, Some(a)) => {
                if a.len() != comps.len() {
                    return Err(Error::invalid(format!(
                        "exosystem: amplitudes needs {} entries",
                        comps.len()
                    )));
                }
                inf.embedding.apply(&DVector::from_column_slice(a))
            }
            (None, None) => return Err(Error::invalid("exosystem: give `amplitudes` or `omega0`")),
        };
        Ok((inf.exo, w0))
    }
}

impl Scenario {
    /// Structural checks that need no numerics beyond building the models.
    pub fn check(&self) -> Result<()> {
        if !(self.grid.horizon > 0.0 && self.grid.horizon.is_finite()) {
            return Err(Error::invalid("grid.horizon must be positive"));
        }
        if !(self.grid.step > 0.0 && self.grid.step < self.grid.horizon) {
            return Err(Error::invalid("grid.step must be positive and below the horizon"));
        }
        if self.output.stride == 0 {
            return Err(Error::invalid("output.stride must be at least 1"));
        }
        let plant = self.plant.build()?;
        if let Some(a) = &self.actual_plant {
            let ap = a.build()?;
            if ap.n() != plant.n() || ap.nu() != plant.nu() {
                return Err(Error::invalid("actual_plant dimensions differ from plant"));
            }
        }
        let (exo, _) = self.exosystem.build(self.grid.horizon)?;
        if exo.nu != plant.nu() {
            return Err(Error::invalid(format!(
                "plant couples to {} exogenous states but the exosystem has {}",
                plant.nu(),
                exo.nu
            )));
        }
        if let Some(x0) = &self.initial.x0 {
            if x0.len() != plant.n() {
                return Err(Error::invalid(format!("initial.x0 needs {} entries", plant.n())));
            }
        }
        let r = &self.regulator;
        if !(r.k > 0.0 && r.k.is_finite()) {
            return Err(Error::invalid("regulator.k must be positive"));
        }
        match r.kind {
            RegulatorKind::FullInformation => {
                if let Some(p) = &r.poles {
                    if p.len() != plant.n() {
                        return Err(Error::invalid(format!("regulator.poles needs {} entries", plant.n())));
                    }
                }
            }
            RegulatorKind::RobustAugmentation => {
                if r.basis.is_none() && r.u_samples.is_none() {
                    return Err(Error::invalid("robust_augmentation needs `basis` or `u_samples`"));
                }
            }
            RegulatorKind::RobustImmersion => {
                if r.d_max == Some(0) {
                    return Err(Error::invalid("regulator.d_max must be positive"));
                }
            }
            RegulatorKind::ErrorFeedbackNominal => {}
        }
        if let (Some(xi0), Some(eig)) = (&self.initial.xi0, &r.eigenvalues) {
            if xi0.len() != eig.len() {
                return Err(Error::invalid(format!("initial.xi0 needs {} entries", eig.len())));
            }
        }
        Ok(())
    }

    pub fn design_plant(&self) -> Result<LtiPlant> {
        self.plant.build()
    }

    pub fn simulated_plant(&self) -> Result<LtiPlant> {
        self.actual_plant.as_ref().unwrap_or(&self.plant).build()
    }

    /// FNV-1a of the canonical TOML serialization.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).unwrap_or_default();
        let mut h: u64 = 0xcbf29ce484222325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse() {
        for (name, src) in BUILTINS {
            let s = parse_scenario(src, &[]).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(s.name, name);
        }
    }

    #[test]
    fn unknown_key_reports_position() {
        let src = builtin_source("rlc-nominal").unwrap().replace("[grid]", "[grid]\nbogus = 1");
        match parse_scenario(&src, &[]) {
            Err(Error::Parse { line, column, message }) => {
                assert!(line > 1 && column >= 1, "{line}:{column}");
                assert!(message.contains("bogus"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overrides() {
        let src = builtin_source("rlc-nominal").unwrap();
        let s = parse_scenario(
            src,
            &["regulator=full_information".into(), "grid.horizon=12.5".into(), "regulator.k=7".into()],
        )
        .unwrap();
        assert_eq!(s.regulator.kind, RegulatorKind::FullInformation);
        assert_eq!(s.grid.horizon, 12.5);
        assert_eq!(s.regulator.k, 7.0);
        assert!(matches!(
            parse_scenario(src, &["regulator.kind=nonsense".into()]),
            Err(Error::Parse { .. })
        ));
        assert!(parse_scenario(src, &["grid".into()]).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let src = builtin_source("rlc-nominal").unwrap();
        let a = parse_scenario(src, &[]).unwrap();
        let b = parse_scenario(src, &[]).unwrap();
        let c = parse_scenario(src, &["regulator.k=50".into()]).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn line_col_counts_from_one() {
        assert_eq!(line_col("ab\ncd", 0), (1, 1));
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
    }
}

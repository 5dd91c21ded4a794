//! Scenario documents: parsing, validation and conversion into core types.
//!
//! Validation never runs an evolution; every problem found is collected into
//! a list of [`Diag`]s so a user sees all of them at once.

use std::path::PathBuf;

use gpe_core::flow::TimeGrid;
use gpe_core::grid::Grid;
use gpe_core::phase_space::{validate_model, CoefficientProvider, PhasePoint, Profile, QuadraticModel};
use gpe_core::poly::Polynomial;
use gpe_core::propagator::{
    normalization_constant, HermiteGaussianState, PhaseSpaceOperator, SymmetrySymbol, WeylPolySymbol,
    DEFAULT_MAX_DEGREE,
};
use gpe_core::solver::{check_grid_support, DIRECT_QUADRATURE_MAX};
use gpe_core::{Error, Model, State, Times};
use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    pub model: ModelSpec,
    pub initial_state: InitialStateSpec,
    pub time: TimeSpec,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub symmetry: Option<SymmetrySpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub outputs: OutputsSpec,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default = "one_usize")]
    pub n: usize,
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default)]
    pub kappa: f64,
    pub hzz: MatrixSpec,
    #[serde(default)]
    pub hz: Option<Vec<f64>>,
    #[serde(default)]
    pub wzz: Option<MatrixSpec>,
    #[serde(default)]
    pub wzw: Option<MatrixSpec>,
    #[serde(default)]
    pub www: Option<MatrixSpec>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Free,
    Harmonic,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatorSpec {
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub nu: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Preset(Preset),
    Rows(Vec<Vec<f64>>),
    Oscillator { oscillator: OscillatorSpec },
    Sampled { knots: Vec<f64>, values: Vec<Vec<Vec<f64>>> },
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum StateKind {
    Gaussian,
    HermiteGaussian,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexMatrixSpec {
    #[serde(default)]
    pub re: Option<Vec<Vec<f64>>>,
    pub im: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub exponents: Vec<u32>,
    #[serde(default)]
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialStateSpec {
    pub kind: StateKind,
    pub center: Vec<f64>,
    pub q: ComplexMatrixSpec,
    #[serde(default)]
    pub poly: Option<Vec<TermSpec>>,
    #[serde(default = "yes")]
    pub normalize: bool,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    #[serde(default)]
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq)]
#[serde(try_from = "Value")]
pub enum Route {
    One,
    Two,
    #[default]
    Both,
}

impl TryFrom<Value> for Route {
    type Error = String;

    fn try_from(v: Value) -> Result<Self, String> {
        match &v {
            Value::Number(n) if n.as_u64() == Some(1) => Ok(Route::One),
            Value::Number(n) if n.as_u64() == Some(2) => Ok(Route::Two),
            Value::String(s) if s == "1" => Ok(Route::One),
            Value::String(s) if s == "2" => Ok(Route::Two),
            Value::String(s) if s == "both" => Ok(Route::Both),
            _ => Err(format!("route must be 1, 2 or \"both\", got {v}")),
        }
    }
}

impl Route {
    pub fn first(self) -> bool {
        matches!(self, Route::One | Route::Both)
    }

    pub fn second(self) -> bool {
        matches!(self, Route::Two | Route::Both)
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Polynomial,
    Displacement,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    pub kind: OperatorKind,
    pub payload: Value,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymmetrySpec {
    #[serde(default)]
    pub route: Route,
    pub operator: OperatorSpec,
    #[serde(default = "default_degree")]
    pub max_degree: usize,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub l2: f64,
    pub first_moment: f64,
    pub second_moment: f64,
    pub residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            first_moment: 1e-4,
            second_moment: 1e-3,
            residual: 1e-4,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Snapshots,
    Residual,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsSpec {
    #[serde(default)]
    pub directory: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputsSpec {
    fn default() -> Self {
        Self {
            directory: None,
            formats: default_formats(),
        }
    }
}

fn one_usize() -> usize {
    1
}
fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_stride() -> usize {
    100
}
fn default_degree() -> usize {
    DEFAULT_MAX_DEGREE
}
fn default_formats() -> Vec<Format> {
    vec![Format::Csv]
}

/// One validation problem, located by a dotted path into the document.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diag {
    pub path: String,
    pub message: String,
}

impl Diag {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Command {
    Evolve,
    Symmetry,
    Validate,
    Sweep,
}

#[derive(Clone, Debug)]
pub struct PreparedSymmetry {
    pub route: Route,
    pub operator: PhaseSpaceOperator<f64>,
}

/// A validated scenario in core types.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub name: String,
    pub model: Model,
    pub gamma: State,
    pub times: Times,
    pub grid: Option<Grid<f64>>,
    pub symmetry: Option<PreparedSymmetry>,
    pub stride: usize,
    pub tolerances: Tolerances,
    pub formats: Vec<Format>,
    pub directory: Option<PathBuf>,
}

impl Prepared {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    /// Knots written as snapshots and checked by residual/validation passes.
    pub fn snapshot_knots(&self) -> Vec<usize> {
        let len = self.times.len();
        let mut ks: Vec<usize> = (0..len).step_by(self.stride.max(1)).collect();
        if ks.last() != Some(&(len - 1)) {
            ks.push(len - 1);
        }
        ks
    }
}

pub fn parse(text: &str) -> Result<Value, Vec<Diag>> {
    serde_json::from_str(text).map_err(|e| vec![Diag::new("$", format!("malformed document: {e}"))])
}

pub fn from_value(v: Value) -> Result<Scenario, Vec<Diag>> {
    serde_json::from_value(v).map_err(|e| vec![Diag::new("$", format!("schema violation: {e}"))])
}

fn rows_to_matrix(rows: &[Vec<f64>], r: usize, c: usize, path: &str, out: &mut Vec<Diag>) -> Option<DMatrix<f64>> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        out.push(Diag::new(path, format!("expected a {r}x{c} matrix")));
        return None;
    }
    Some(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn provider(spec: &MatrixSpec, n: usize, path: &str, out: &mut Vec<Diag>) -> Option<CoefficientProvider<f64>> {
    let d = 2 * n;
    match spec {
        MatrixSpec::Preset(p) => {
            let m = match p {
                Preset::Free => QuadraticModel::<f64>::free_particle(n, 1.0).hzz,
                Preset::Harmonic => QuadraticModel::<f64>::harmonic(n, 1.0).hzz,
            };
            Some(m)
        }
        MatrixSpec::Rows(rows) => rows_to_matrix(rows, d, d, path, out).map(CoefficientProvider::Constant),
        MatrixSpec::Oscillator { oscillator: o } => Some(CoefficientProvider::Profile(Profile::Oscillator {
            n,
            a: o.a,
            b: o.b,
            nu: o.nu,
        })),
        MatrixSpec::Sampled { knots, values } => {
            let mats: Option<Vec<_>> = values
                .iter()
                .enumerate()
                .map(|(k, v)| rows_to_matrix(v, d, d, &format!("{path}.values[{k}]"), out))
                .collect();
            mats.map(|values| CoefficientProvider::Sampled {
                knots: knots.clone(),
                values,
            })
        }
    }
}

fn build_model(s: &ModelSpec, time: &TimeSpec, out: &mut Vec<Diag>) -> Option<Model> {
    if s.n == 0 {
        out.push(Diag::new("model.n", "dimension must be at least 1"));
        return None;
    }
    if !(s.hbar > 0.0) {
        out.push(Diag::new("model.hbar", "hbar must be positive"));
    }
    if !s.kappa.is_finite() {
        out.push(Diag::new("model.kappa", "kappa must be finite"));
    }
    let n = s.n;
    let hzz = provider(&s.hzz, n, "model.hzz", out);
    let mut m = QuadraticModel::new(n, s.hbar, hzz?).with_kappa(s.kappa);
    if let Some(hz) = &s.hz {
        if hz.len() != 2 * n {
            out.push(Diag::new("model.hz", format!("expected {} entries", 2 * n)));
        } else {
            m = m.with_hz(CoefficientProvider::vector(nalgebra::DVector::from_column_slice(hz)));
        }
    }
    for (name, spec) in [("wzz", &s.wzz), ("wzw", &s.wzw), ("www", &s.www)] {
        let Some(spec) = spec else { continue };
        let p = provider(spec, n, &format!("model.{name}"), out)?;
        m = match name {
            "wzz" => m.with_wzz(p),
            "wzw" => m.with_wzw(p),
            _ => m.with_www(p),
        };
    }
    if time.t1 > time.t0 {
        m = m.with_window(time.t0, time.t1);
    }
    let before = out.len();
    for d in validate_model(&m) {
        out.push(Diag::new(format!("model.{}", d.block.to_lowercase()), d.to_string()));
    }
    (out.len() == before).then_some(m)
}

fn build_state(s: &InitialStateSpec, n: usize, hbar: f64, out: &mut Vec<Diag>) -> Option<State> {
    let before = out.len();
    if s.center.len() != 2 * n {
        out.push(Diag::new("initial_state.center", format!("expected {} entries (p then x)", 2 * n)));
    }
    let im = rows_to_matrix(&s.q.im, n, n, "initial_state.q.im", out);
    let re = match &s.q.re {
        Some(rows) => rows_to_matrix(rows, n, n, "initial_state.q.re", out),
        None => Some(DMatrix::zeros(n, n)),
    };
    let poly = match (s.kind, &s.poly) {
        (StateKind::Gaussian, Some(_)) => {
            out.push(Diag::new("initial_state.poly", "a gaussian state takes no polynomial prefactor"));
            None
        }
        (StateKind::HermiteGaussian, None) => {
            out.push(Diag::new("initial_state.poly", "a hermite-gaussian state needs a polynomial prefactor"));
            None
        }
        (_, Some(terms)) => terms_to_poly(terms, n, "initial_state.poly", out),
        (_, None) => None,
    };
    if out.len() > before {
        return None;
    }
    let (re, im) = (re?, im?);
    let q = DMatrix::from_fn(n, n, |i, j| Complex::new(re[(i, j)], im[(i, j)]));
    if (&q - q.transpose()).iter().any(|z| z.norm() > 1e-12) {
        out.push(Diag::new("initial_state.q", "Q must be symmetric"));
        return None;
    }
    let center = PhasePoint::from_slice(&s.center).ok()?;
    let mut st = match HermiteGaussianState::gaussian(center, q, hbar) {
        Ok(st) => st,
        Err(e) => {
            out.push(Diag::new("initial_state.q", e.to_string()));
            return None;
        }
    };
    if let Some(p) = poly {
        st = match st.with_poly(p) {
            Ok(st) => st,
            Err(e) => {
                out.push(Diag::new("initial_state.poly", e.to_string()));
                return None;
            }
        };
    }
    if s.normalize {
        match st.normalized() {
            Ok(st) => Some(st),
            Err(e) => {
                out.push(Diag::new("initial_state", e.to_string()));
                None
            }
        }
    } else {
        Some(st)
    }
}

fn terms_to_poly(terms: &[TermSpec], nvars: usize, path: &str, out: &mut Vec<Diag>) -> Option<Polynomial<f64>> {
    let mut ok = true;
    for (k, t) in terms.iter().enumerate() {
        if t.exponents.len() != nvars {
            out.push(Diag::new(
                format!("{path}[{k}].exponents"),
                format!("expected {nvars} exponents"),
            ));
            ok = false;
        }
    }
    ok.then(|| {
        Polynomial::from_terms(
            nvars,
            terms.iter().map(|t| (Complex::new(t.re, t.im), t.exponents.clone())),
        )
    })
}

fn build_operator(s: &SymmetrySpec, n: usize, out: &mut Vec<Diag>) -> Option<PhaseSpaceOperator<f64>> {
    let path = "symmetry.operator.payload";
    match s.operator.kind {
        OperatorKind::Displacement => {
            let c: Vec<f64> = match serde_json::from_value(s.operator.payload.clone()) {
                Ok(c) => c,
                Err(_) => {
                    out.push(Diag::new(path, "displacement payload must be an array of numbers"));
                    return None;
                }
            };
            match PhasePoint::from_slice(&c) {
                Ok(c) if c.dim() == n => Some(SymmetrySymbol::Displacement(c).to_operator()),
                _ => {
                    out.push(Diag::new(path, format!("expected {} entries (p then x)", 2 * n)));
                    None
                }
            }
        }
        OperatorKind::Polynomial => {
            let terms: Vec<TermSpec> = match serde_json::from_value(s.operator.payload.clone()) {
                Ok(t) => t,
                Err(_) => {
                    out.push(Diag::new(path, "polynomial payload must be a list of {exponents, re, im} terms"));
                    return None;
                }
            };
            let poly = terms_to_poly(&terms, 2 * n, path, out)?;
            match WeylPolySymbol::new(poly, s.max_degree) {
                Ok(a) => Some(SymmetrySymbol::Polynomial(a).to_operator()),
                Err(e) => {
                    out.push(Diag::new(path, e.to_string()));
                    None
                }
            }
        }
    }
}

/// Checks everything the given command will need and converts to core types.
pub fn prepare(s: &Scenario, cmd: Command, oracle: bool) -> Result<Prepared, Vec<Diag>> {
    let mut out = Vec::new();
    let t = &s.time;
    if !(t.dt > 0.0) {
        out.push(Diag::new("time.dt", "dt must be positive"));
    }
    if !(t.t1 > t.t0) {
        out.push(Diag::new("time.t1", "t1 must exceed t0"));
    }
    if t.snapshot_stride == 0 {
        out.push(Diag::new("time.snapshot_stride", "stride must be at least 1"));
    }
    let times = TimeGrid::uniform(t.t0, t.t1, t.dt).ok();

    let model = build_model(&s.model, t, &mut out);
    let n = s.model.n.max(1);
    let gamma = build_state(&s.initial_state, n, s.model.hbar, &mut out);

    let grid = s.grid.as_ref().and_then(|g| {
        if n > 2 {
            out.push(Diag::new("grid", "grids support at most 2 dimensions"));
            return None;
        }
        match Grid::uniform(n, g.x_min, g.x_max, g.n) {
            Ok(grid) => Some(grid),
            Err(e) => {
                out.push(Diag::new("grid", e.to_string()));
                None
            }
        }
    });

    let formats = &s.outputs.formats;
    if s.grid.is_none() {
        if formats.contains(&Format::Residual) {
            out.push(Diag::new("outputs.formats", "grid required for validate outputs"));
        }
        if formats.contains(&Format::Snapshots) {
            out.push(Diag::new("outputs.formats", "grid required for snapshot outputs"));
        }
        if cmd == Command::Validate {
            out.push(Diag::new("grid", "grid required for validate outputs"));
        }
    }

    if cmd == Command::Symmetry && s.symmetry.is_none() {
        out.push(Diag::new("symmetry", "the symmetry command needs a symmetry block"));
    }
    let symmetry = s.symmetry.as_ref().and_then(|sym| {
        let op = build_operator(sym, n, &mut out)?;
        if let Some(g) = &gamma {
            if let Err(e) = normalization_constant(&op, g) {
                out.push(Diag::new("symmetry.operator", e.to_string()));
                return None;
            }
        }
        Some(PreparedSymmetry {
            route: sym.route,
            operator: op,
        })
    });

    if let (Some(m), Some(g)) = (&model, &gamma) {
        if (cmd == Command::Validate || oracle) && s.grid.is_some() {
            if let Some(times) = &times {
                if let Err(e) = check_grid_support(m, times) {
                    out.push(Diag::new("model", e.to_string()));
                }
            }
        }
        if let Some(grid) = &grid {
            if let Ok(psi) = g.sample(grid, t.t0) {
                if let Err(e) = psi.check_leakage() {
                    out.push(Diag::new("grid", format!("initial state does not fit: {e}")));
                }
            }
        }
        if oracle {
            if let Some(grid) = &grid {
                if let Some(ax) = grid.axes().iter().find(|a| a.n > DIRECT_QUADRATURE_MAX) {
                    out.push(Diag::new(
                        "grid.N",
                        Error::QuadratureTooLarge {
                            max: DIRECT_QUADRATURE_MAX,
                            found: ax.n,
                        }
                        .to_string(),
                    ));
                }
            }
            if let Ok(c) = m.coefficients(t.t0) {
                for (name, mat) in [("wzz", &c.wzz), ("wzw", &c.wzw), ("www", &c.www)] {
                    let mut off = mat.clone();
                    off.view_mut((n, n), (n, n)).fill(0.0);
                    if off.amax() != 0.0 {
                        out.push(Diag::new(
                            format!("model.{name}"),
                            "oracle mode needs a position-only kernel",
                        ));
                    }
                }
            }
        }
    }

    if !out.is_empty() {
        return Err(out);
    }
    let (Some(model), Some(gamma), Some(times)) = (model, gamma, times) else {
        return Err(vec![Diag::new("$", "scenario is incomplete")]);
    };
    let model = model.rescaled_for_norm(gamma.norm_sqr());
    Ok(Prepared {
        name: s.name.clone().unwrap_or_else(|| "scenario".into()),
        model,
        gamma,
        times,
        grid,
        symmetry,
        stride: t.snapshot_stride,
        tolerances: s.tolerances,
        formats: formats.clone(),
        directory: s.outputs.directory.clone(),
    })
}

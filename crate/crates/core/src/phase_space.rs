//! Phase-space data model: points `z = (p, x)`, the symplectic form, and
//! time-dependent quadratic coefficient blocks of the Hamiltonian and of the
//! nonlocal kernel.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::real::{lit, to_f64, Real};

/// A point of `R^{2n}`: first `n` entries are momenta, last `n` positions.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePoint<T: Real> {
    values: DVector<T>,
}

impl<T: Real> PhasePoint<T> {
    pub fn new(momentum: &[T], position: &[T]) -> Result<Self> {
        if momentum.len() != position.len() {
            return Err(Error::DimensionMismatch {
                what: "phase point position block",
                expected: momentum.len(),
                found: position.len(),
            });
        }
        if momentum.is_empty() {
            return Err(Error::ZeroDimension);
        }
        let values = DVector::from_iterator(
            2 * momentum.len(),
            momentum.iter().chain(position.iter()).copied(),
        );
        Ok(Self { values })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            values: DVector::zeros(2 * n),
        }
    }

    pub fn from_vector(values: DVector<T>) -> Result<Self> {
        if values.is_empty() || !values.len().is_multiple_of(2) {
            return Err(Error::DimensionMismatch {
                what: "phase point length (must be even)",
                expected: 2 * (values.len() / 2).max(1),
                found: values.len(),
            });
        }
        Ok(Self { values })
    }

    pub fn from_slice(values: &[T]) -> Result<Self> {
        Self::from_vector(DVector::from_column_slice(values))
    }

    /// Spatial dimension `n`.
    pub fn dim(&self) -> usize {
        self.values.len() / 2
    }

    pub fn momentum(&self) -> &[T] {
        &self.values.as_slice()[..self.dim()]
    }

    pub fn position(&self) -> &[T] {
        &self.values.as_slice()[self.dim()..]
    }

    pub fn as_vector(&self) -> &DVector<T> {
        &self.values
    }

    pub fn into_vector(self) -> DVector<T> {
        self.values
    }

    pub fn as_slice(&self) -> &[T] {
        self.values.as_slice()
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            values: &self.values + &other.values,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            values: &self.values - &other.values,
        }
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            values: &self.values * s,
        }
    }

    /// `<p, x>` pairing of the momentum block of `self` with the position block of `other`.
    pub fn momentum_dot_position(&self, other: &Self) -> T {
        self.momentum()
            .iter()
            .zip(other.position())
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
    }

    pub fn max_abs(&self) -> T {
        self.values.amax()
    }
}

/// The canonical form `J = [[0, -I], [I, 0]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymplecticMatrix<T: Real> {
    j: DMatrix<T>,
}

/// Builds `J` for dimension `n`.
pub fn symplectic_form<T: Real>(n: usize) -> Result<SymplecticMatrix<T>> {
    if n == 0 {
        return Err(Error::ZeroDimension);
    }
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        j[(k, n + k)] = -T::one();
        j[(n + k, k)] = T::one();
    }
    Ok(SymplecticMatrix { j })
}

impl<T: Real> SymplecticMatrix<T> {
    pub fn n(&self) -> usize {
        self.j.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.j
    }

    /// `a^T J b`.
    pub fn omega(&self, a: &DVector<T>, b: &DVector<T>) -> T {
        a.dot(&(&self.j * b))
    }

    /// Inverse of a symplectic matrix, `-J L^T J`.
    pub fn symplectic_inverse(&self, lambda: &DMatrix<T>) -> DMatrix<T> {
        -(&self.j * lambda.transpose() * &self.j)
    }

    /// `max |L^T J L - J|`.
    pub fn defect(&self, lambda: &DMatrix<T>) -> T {
        (lambda.transpose() * &self.j * lambda - &self.j).amax()
    }
}

/// Builtin closed-form coefficient profiles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Profile<T: Real> {
    /// Unit-mass oscillator with modulated frequency: momentum block `I`,
    /// position block `w(t)^2 I` with `w(t) = a + b cos(nu t)`.
    Oscillator { n: usize, a: T, b: T, nu: T },
}

impl<T: Real> Profile<T> {
    pub fn frequency(&self, t: T) -> T {
        match *self {
            Profile::Oscillator { a, b, nu, .. } => a + b * (nu * t).cos(),
        }
    }

    fn evaluate(&self, t: T) -> DMatrix<T> {
        match *self {
            Profile::Oscillator { n, .. } => {
                let w = self.frequency(t);
                let mut m = DMatrix::zeros(2 * n, 2 * n);
                for k in 0..n {
                    m[(k, k)] = T::one();
                    m[(n + k, n + k)] = w * w;
                }
                m
            }
        }
    }

    fn shape(&self) -> (usize, usize) {
        match *self {
            Profile::Oscillator { n, .. } => (2 * n, 2 * n),
        }
    }
}

/// A time-dependent matrix (vectors are `2n x 1` matrices).
#[derive(Clone, Debug, PartialEq)]
pub enum CoefficientProvider<T: Real> {
    Constant(DMatrix<T>),
    /// Piecewise-linear interpolation between strictly increasing knots.
    Sampled {
        knots: Vec<T>,
        values: Vec<DMatrix<T>>,
    },
    Profile(Profile<T>),
}

impl<T: Real> CoefficientProvider<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::Constant(DMatrix::zeros(rows, cols))
    }

    pub fn vector(v: DVector<T>) -> Self {
        let n = v.len();
        Self::Constant(DMatrix::from_column_slice(n, 1, v.as_slice()))
    }

    pub fn evaluate(&self, t: T) -> Result<DMatrix<T>> {
        match self {
            Self::Constant(m) => Ok(m.clone()),
            Self::Profile(p) => Ok(p.evaluate(t)),
            Self::Sampled { knots, values } => {
                let (first, last) = match (knots.first(), knots.last()) {
                    (Some(&a), Some(&b)) => (a, b),
                    _ => {
                        return Err(Error::InvalidModel(vec![
                            "sampled provider has no knots".into(),
                        ]))
                    }
                };
                if t < first || t > last {
                    return Err(Error::TimeOutOfWindow {
                        t: to_f64(t),
                        t0: to_f64(first),
                        t1: to_f64(last),
                    });
                }
                if t == last {
                    return Ok(values[values.len() - 1].clone());
                }
                // knots[i] <= t < knots[i + 1]
                let i = knots.partition_point(|&k| k <= t) - 1;
                let s = (t - knots[i]) / (knots[i + 1] - knots[i]);
                Ok(&values[i] + (&values[i + 1] - &values[i]) * s)
            }
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            Self::Constant(m) => m.shape(),
            Self::Profile(p) => p.shape(),
            Self::Sampled { values, .. } => values.first().map(|m| m.shape()).unwrap_or((0, 0)),
        }
    }

    /// Times at which the provider is worth inspecting (knots for samples).
    fn probe_times(&self, window: Option<(T, T)>) -> Vec<T> {
        match self {
            Self::Constant(_) => vec![window.map(|w| w.0).unwrap_or_else(T::zero)],
            Self::Sampled { knots, .. } => knots.clone(),
            Self::Profile(_) => match window {
                Some((a, b)) => (0..=16)
                    .map(|k| a + (b - a) * lit::<T>(k as f64 / 16.0))
                    .collect(),
                None => vec![T::zero()],
            },
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Constant(m) => m.iter().all(|v| *v == T::zero()),
            Self::Sampled { values, .. } => values.iter().all(|m| m.iter().all(|v| *v == T::zero())),
            Self::Profile(_) => false,
        }
    }
}

/// Coefficient blocks frozen at one instant.
#[derive(Clone, Debug)]
pub struct Coefficients<T: Real> {
    pub hzz: DMatrix<T>,
    pub hz: DVector<T>,
    pub wzz: DMatrix<T>,
    pub wzw: DMatrix<T>,
    pub www: DMatrix<T>,
    pub kappa_tilde: T,
}

fn symmetric_part<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * lit::<T>(0.5)
}

impl<T: Real> Coefficients<T> {
    /// `Hzz + kt * Wzz`, the generator of the associated linear equation.
    pub fn linear_matrix(&self) -> DMatrix<T> {
        symmetric_part(&(&self.hzz + &self.wzz * self.kappa_tilde))
    }

    /// `Hzz + kt * (Wzz + Wzw)`, the matrix driving the center trajectory.
    pub fn center_matrix(&self) -> DMatrix<T> {
        self.linear_matrix() + &self.wzw * self.kappa_tilde
    }

    /// Symmetric part of `Hzz + kt * (Wzz + 2 Wzw + Www)`.
    pub fn energy_matrix(&self) -> DMatrix<T> {
        let two = lit::<T>(2.0);
        symmetric_part(
            &(&self.hzz + (&self.wzz + &self.wzw * two + &self.www) * self.kappa_tilde),
        )
    }
}

/// Quadratic Weyl Hamiltonian plus quadratic nonlocal kernel.
#[derive(Clone, Debug)]
pub struct QuadraticModel<T: Real> {
    pub n: usize,
    pub hbar: T,
    pub kappa: T,
    /// `kappa * ||gamma||^2`; equals `kappa` for unit-norm Cauchy data.
    pub kappa_tilde: T,
    pub hzz: CoefficientProvider<T>,
    pub hz: CoefficientProvider<T>,
    pub wzz: CoefficientProvider<T>,
    pub wzw: CoefficientProvider<T>,
    pub www: CoefficientProvider<T>,
    /// Scenario time window; `None` leaves constant/profile models unbounded.
    pub window: Option<(T, T)>,
}

impl<T: Real> QuadraticModel<T> {
    /// Model with the given `Hzz`, no linear term, no nonlocal coupling.
    pub fn new(n: usize, hbar: T, hzz: CoefficientProvider<T>) -> Self {
        let d = 2 * n;
        Self {
            n,
            hbar,
            kappa: T::zero(),
            kappa_tilde: T::zero(),
            hzz,
            hz: CoefficientProvider::zeros(d, 1),
            wzz: CoefficientProvider::zeros(d, d),
            wzw: CoefficientProvider::zeros(d, d),
            www: CoefficientProvider::zeros(d, d),
            window: None,
        }
    }

    /// `H = |p|^2 / 2`.
    pub fn free_particle(n: usize, hbar: T) -> Self {
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        for k in 0..n {
            m[(k, k)] = T::one();
        }
        Self::new(n, hbar, CoefficientProvider::Constant(m))
    }

    /// `H = (|p|^2 + |x|^2) / 2`.
    pub fn harmonic(n: usize, hbar: T) -> Self {
        Self::new(
            n,
            hbar,
            CoefficientProvider::Constant(DMatrix::identity(2 * n, 2 * n)),
        )
    }

    /// Sets `kappa` and, for unit-norm data, `kappa_tilde = kappa`.
    pub fn with_kappa(mut self, kappa: T) -> Self {
        self.kappa = kappa;
        self.kappa_tilde = kappa;
        self
    }

    pub fn with_kappa_tilde(mut self, kappa_tilde: T) -> Self {
        self.kappa_tilde = kappa_tilde;
        self
    }

    pub fn with_hz(mut self, hz: CoefficientProvider<T>) -> Self {
        self.hz = hz;
        self
    }

    pub fn with_wzz(mut self, w: CoefficientProvider<T>) -> Self {
        self.wzz = w;
        self
    }

    pub fn with_wzw(mut self, w: CoefficientProvider<T>) -> Self {
        self.wzw = w;
        self
    }

    pub fn with_www(mut self, w: CoefficientProvider<T>) -> Self {
        self.www = w;
        self
    }

    pub fn with_window(mut self, t0: T, t1: T) -> Self {
        self.window = Some((t0, t1));
        self
    }

    /// Rescales `kappa_tilde` for Cauchy data of squared norm `norm_sqr`.
    pub fn rescaled_for_norm(mut self, norm_sqr: T) -> Self {
        self.kappa_tilde = self.kappa * norm_sqr;
        self
    }

    pub fn coefficients(&self, t: T) -> Result<Coefficients<T>> {
        if let Some((t0, t1)) = self.window {
            let slack = lit::<T>(1e-12) * (T::one() + t0.abs().max(t1.abs()));
            if t < t0 - slack || t > t1 + slack {
                return Err(Error::TimeOutOfWindow {
                    t: to_f64(t),
                    t0: to_f64(t0),
                    t1: to_f64(t1),
                });
            }
        }
        let hz = self.hz.evaluate(t)?;
        Ok(Coefficients {
            hzz: self.hzz.evaluate(t)?,
            hz: DVector::from_column_slice(hz.as_slice()),
            wzz: self.wzz.evaluate(t)?,
            wzw: self.wzw.evaluate(t)?,
            www: self.www.evaluate(t)?,
            kappa_tilde: self.kappa_tilde,
        })
    }

    pub(crate) fn providers(&self) -> [(&'static str, &CoefficientProvider<T>); 5] {
        [
            ("Hzz", &self.hzz),
            ("Hz", &self.hz),
            ("Wzz", &self.wzz),
            ("Wzw", &self.wzw),
            ("Www", &self.www),
        ]
    }

    /// Fails with [`Error::InvalidModel`] when [`validate_model`] reports anything.
    pub fn ensure_valid(&self) -> Result<()> {
        let diags = validate_model(self);
        if diags.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(
                diags.iter().map(|d| d.to_string()).collect(),
            ))
        }
    }
}

/// One violated model invariant.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub block: &'static str,
    pub invariant: &'static str,
    pub time: Option<f64>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.time {
            Some(t) => write!(f, "{} (t = {})", self.message, t),
            None => f.write_str(&self.message),
        }
    }
}

/// Checks shapes, symmetry, `hbar > 0` and time coverage. Never fails; an
/// empty list means the model is valid.
pub fn validate_model<T: Real>(m: &QuadraticModel<T>) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if m.n == 0 {
        out.push(Diagnostic {
            block: "model",
            invariant: "dimension",
            time: None,
            message: "dimension n must be at least 1".into(),
        });
        return out;
    }
    if !(m.hbar > T::zero()) {
        out.push(Diagnostic {
            block: "hbar",
            invariant: "positivity",
            time: None,
            message: "hbar must be positive".into(),
        });
    }
    let d = 2 * m.n;
    for (name, provider) in m.providers() {
        let expected = if name == "Hz" { (d, 1) } else { (d, d) };
        let shape = provider.shape();
        if shape != expected {
            out.push(Diagnostic {
                block: name,
                invariant: "shape",
                time: None,
                message: format!(
                    "{name} has shape {}x{}, expected {}x{}",
                    shape.0, shape.1, expected.0, expected.1
                ),
            });
            continue;
        }
        if let CoefficientProvider::Sampled { knots, values } = provider {
            if knots.is_empty() || knots.len() != values.len() {
                out.push(Diagnostic {
                    block: name,
                    invariant: "samples",
                    time: None,
                    message: format!("{name} needs one matrix per knot and at least one knot"),
                });
                continue;
            }
            if knots.windows(2).any(|w| !(w[1] > w[0])) {
                out.push(Diagnostic {
                    block: name,
                    invariant: "knot order",
                    time: None,
                    message: format!("{name} knots are not strictly increasing"),
                });
            }
            if values.iter().any(|v| v.shape() != expected) {
                out.push(Diagnostic {
                    block: name,
                    invariant: "shape",
                    time: None,
                    message: format!("{name} samples have inconsistent shapes"),
                });
                continue;
            }
            if let Some((t0, t1)) = m.window {
                let first = knots[0];
                let last = knots[knots.len() - 1];
                for t in [t0, t1] {
                    if t < first || t > last {
                        out.push(Diagnostic {
                            block: name,
                            invariant: "coverage",
                            time: Some(to_f64(t)),
                            message: format!("{name}: time window not covered"),
                        });
                    }
                }
            }
        }
        if name == "Hz" || name == "Wzw" {
            continue;
        }
        for t in provider.probe_times(m.window) {
            let Ok(mat) = provider.evaluate(t) else {
                continue;
            };
            let scale = T::one().max(mat.amax());
            if (&mat - mat.transpose()).amax() > lit::<T>(1e-12) * scale {
                out.push(Diagnostic {
                    block: name,
                    invariant: "symmetry",
                    time: Some(to_f64(t)),
                    message: format!("{name} not symmetric"),
                });
                break;
            }
        }
    }
    out
}

/// `Hzz(t) + kappa_tilde * Wzz(t)`, the generator of the associated linear equation.
pub fn effective_linear_matrix<T: Real>(m: &QuadraticModel<T>, t: T) -> Result<DMatrix<T>> {
    Ok(m.coefficients(t)?.linear_matrix())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symplectic_form_blocks() {
        let j = symplectic_form::<f64>(1).unwrap();
        assert_eq!(j.matrix(), &DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
        let j2 = j.matrix() * j.matrix();
        assert_eq!(j2, -DMatrix::<f64>::identity(2, 2));
        let j3 = symplectic_form::<f64>(3).unwrap();
        assert_eq!(j3.matrix().transpose(), -j3.matrix().clone());
        assert!(matches!(symplectic_form::<f64>(0), Err(Error::ZeroDimension)));
    }

    #[test]
    fn harmonic_model_is_valid() {
        let m = QuadraticModel::<f64>::harmonic(1, 1.0);
        assert!(validate_model(&m).is_empty());
    }

    #[test]
    fn asymmetric_wzz_is_reported() {
        let m = QuadraticModel::<f64>::harmonic(1, 1.0).with_wzz(CoefficientProvider::Constant(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        ));
        let d = validate_model(&m);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].message, "Wzz not symmetric");
    }

    #[test]
    fn uncovered_window_is_reported() {
        let sampled = CoefficientProvider::Sampled {
            knots: vec![0.0, 1.0],
            values: vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2) * 2.0],
        };
        let m = QuadraticModel::<f64>::new(1, 1.0, sampled).with_window(0.0, 2.0);
        let d = validate_model(&m);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].message, "Hzz: time window not covered");
        assert_eq!(d[0].time, Some(2.0));
    }

    #[test]
    fn sampled_provider_hits_knots_exactly() {
        let a = DMatrix::from_row_slice(2, 2, &[0.1, 0.3, 0.3, 0.7]);
        let b = DMatrix::from_row_slice(2, 2, &[1.9, -0.2, -0.2, 0.4]);
        let c = DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.0, 1.0 / 3.0]);
        let p = CoefficientProvider::Sampled {
            knots: vec![0.0, 0.7, 1.3],
            values: vec![a.clone(), b.clone(), c.clone()],
        };
        assert_eq!(p.evaluate(0.0).unwrap(), a);
        assert_eq!(p.evaluate(0.7).unwrap(), b);
        assert_eq!(p.evaluate(1.3).unwrap(), c);
        let mid = p.evaluate(0.35).unwrap();
        assert!((mid - (a + b) * 0.5).amax() < 1e-15);
        assert!(p.evaluate(1.31).is_err());
    }

    #[test]
    fn effective_matrix_examples() {
        let base = QuadraticModel::<f64>::harmonic(1, 1.0);
        assert_eq!(
            effective_linear_matrix(&base, 0.0).unwrap(),
            DMatrix::identity(2, 2)
        );
        let m = QuadraticModel::<f64>::new(
            1,
            1.0,
            CoefficientProvider::Constant(DMatrix::from_diagonal_element(2, 2, 0.0)),
        );
        let mut hzz = DMatrix::zeros(2, 2);
        hzz[(0, 0)] = 1.0;
        let mut wzz = DMatrix::zeros(2, 2);
        wzz[(1, 1)] = 1.0;
        let m = QuadraticModel {
            hzz: CoefficientProvider::Constant(hzz),
            ..m
        }
        .with_wzz(CoefficientProvider::Constant(wzz))
        .with_kappa(1.0);
        assert_eq!(
            effective_linear_matrix(&m, 0.0).unwrap(),
            DMatrix::identity(2, 2)
        );
        let m = QuadraticModel::<f64>::harmonic(1, 1.0)
            .with_wzz(CoefficientProvider::Constant(DMatrix::identity(2, 2)))
            .with_kappa(0.5);
        assert_eq!(
            effective_linear_matrix(&m, 0.0).unwrap(),
            DMatrix::identity(2, 2) * 1.5
        );
    }

    #[test]
    fn out_of_window_is_an_error() {
        let m = QuadraticModel::<f64>::harmonic(1, 1.0).with_window(0.0, 1.0);
        assert!(matches!(
            effective_linear_matrix(&m, 2.0),
            Err(Error::TimeOutOfWindow { .. })
        ));
    }

    #[test]
    fn trace_of_j_times_symmetric_vanishes() {
        let m = QuadraticModel::<f64>::new(
            2,
            1.0,
            CoefficientProvider::Profile(Profile::Oscillator {
                n: 2,
                a: 1.0,
                b: 0.1,
                nu: 2.0,
            }),
        )
        .with_wzz(CoefficientProvider::Constant(DMatrix::from_fn(4, 4, |i, j| {
            1.0 / (1.0 + i as f64 + j as f64)
        })))
        .with_kappa(0.3);
        let j = symplectic_form::<f64>(2).unwrap();
        for k in 0..20 {
            let mt = effective_linear_matrix(&m, 0.37 * k as f64).unwrap();
            assert!((&mt - mt.transpose()).amax() <= 1e-14 * mt.amax());
            assert!((j.matrix() * &mt).trace().abs() <= 1e-12);
        }
    }
}

//! Hamilton–Ehrenfest moment flow: center trajectory, covariance, linearized
//! flow and the accompanying action integrals.
//!
//! Every system here is linear with smooth bounded coefficients, so a fixed
//! step classical RK4 on the knots of a [`TimeGrid`] is used throughout. The
//! action is integrated as an extra ODE component so it shares the stage
//! values of `Z` and `Delta2`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::phase_space::{symplectic_form, Coefficients, PhasePoint, QuadraticModel, SymplecticMatrix};
use crate::real::{lit, Real};

/// Drift of `L^T J L` above which the flow matrix is pulled back onto the group.
pub const SYMPLECTIC_PROJECTION_THRESHOLD: f64 = 1e-10;

/// Strictly increasing time knots.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid<T: Real> {
    knots: Vec<T>,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(knots: Vec<T>) -> Result<Self> {
        if knots.is_empty() || knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::BadTimeGrid { min: 1 });
        }
        Ok(Self { knots })
    }

    /// `t0, t0 + h, ..., t1` with `h` the largest step `<= dt` dividing the span evenly.
    pub fn uniform(t0: T, t1: T, dt: T) -> Result<Self> {
        if !(dt > T::zero()) || !(t1 > t0) {
            return Err(Error::BadTimeGrid { min: 2 });
        }
        let steps = ((t1 - t0) / dt - lit(1e-9)).ceil();
        let steps = steps.to_usize().unwrap_or(0).max(1);
        Self::with_steps(t0, t1, steps)
    }

    pub fn with_steps(t0: T, t1: T, steps: usize) -> Result<Self> {
        if steps == 0 || !(t1 > t0) {
            return Err(Error::BadTimeGrid { min: 2 });
        }
        let h = (t1 - t0) / T::from_usize(steps).unwrap();
        let knots = (0..=steps)
            .map(|k| {
                if k == steps {
                    t1
                } else {
                    t0 + h * T::from_usize(k).unwrap()
                }
            })
            .collect();
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn start(&self) -> T {
        self.knots[0]
    }

    pub fn end(&self) -> T {
        self.knots[self.knots.len() - 1]
    }

    /// Every knot plus the midpoint of every interval.
    pub fn refined(&self) -> Self {
        let mut knots = Vec::with_capacity(2 * self.knots.len());
        for w in self.knots.windows(2) {
            knots.push(w[0]);
            knots.push((w[0] + w[1]) * lit(0.5));
        }
        knots.push(self.end());
        Self { knots }
    }

    /// Index of the knot closest to `t`.
    pub fn nearest(&self, t: T) -> usize {
        let mut best = 0;
        for (i, &k) in self.knots.iter().enumerate() {
            if (k - t).abs() < (self.knots[best] - t).abs() {
                best = i;
            }
        }
        best
    }
}

/// Moments of one branch sampled on a time grid.
#[derive(Clone, Debug)]
pub struct TrajectoryBundle<T: Real> {
    pub times: Vec<T>,
    pub z: Vec<PhasePoint<T>>,
    pub delta2: Vec<DMatrix<T>>,
    /// Fundamental solution of `L' = J M L`, `L(t0) = I`.
    pub lambda: Vec<DMatrix<T>>,
    /// Action `S(t)`.
    pub action: Vec<T>,
    /// Nonlocal trace contribution `-1/2 kt int Sp(Www Delta2) dt` contained in `action`.
    pub trace_phase: Vec<T>,
}

impl<T: Real> TrajectoryBundle<T> {
    pub fn n(&self) -> usize {
        self.z[0].dim()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Adds a constant to the action (an initial value `S(t0) != 0`).
    pub fn with_action_offset(mut self, s0: T) -> Self {
        self.action.iter_mut().for_each(|s| *s += s0);
        self
    }

    /// `max_t |L^T J L - J|`.
    pub fn symplectic_defect(&self) -> T {
        let j = symplectic_form::<T>(self.n()).expect("n >= 1");
        self.lambda
            .iter()
            .map(|l| j.defect(l))
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// `max_t |Delta2(t) - L Delta2(0) L^T|`.
    pub fn factorization_defect(&self) -> T {
        let d0 = &self.delta2[0];
        self.lambda
            .iter()
            .zip(&self.delta2)
            .map(|(l, d)| (d - l * d0 * l.transpose()).amax())
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// `max_t |det Delta2(t) - det Delta2(0)| / |det Delta2(0)|`.
    pub fn determinant_drift(&self) -> T {
        let d0 = self.delta2[0].determinant();
        self.delta2
            .iter()
            .map(|d| (d.determinant() - d0).abs() / d0.abs())
            .fold(T::zero(), |a, b| a.max(b))
    }
}

/// Shift vector `lambda(t)` and its phases.
#[derive(Clone, Debug)]
pub struct LambdaTrajectory<T: Real> {
    pub times: Vec<T>,
    pub lambda: Vec<PhasePoint<T>>,
    /// `int <lp, d lu/dt> - h_lambda dt` with `h_lambda` including the nonlocal
    /// quadratic and trace terms.
    pub s_lambda: Vec<T>,
    /// `int <lp, d lu/dt> - 1/2 <lambda, M lambda> dt`: the phase that makes the
    /// re-centred function solve the associated linear equation.
    pub s_shift: Vec<T>,
}

struct Layout {
    d: usize,
}

impl Layout {
    fn delta(&self) -> std::ops::Range<usize> {
        self.d..self.d + self.d * self.d
    }
    fn lambda(&self) -> std::ops::Range<usize> {
        let s = self.d + self.d * self.d;
        s..s + self.d * self.d
    }
    fn action(&self) -> usize {
        self.d + 2 * self.d * self.d
    }
    fn trace(&self) -> usize {
        self.action() + 1
    }
    fn len(&self) -> usize {
        self.trace() + 1
    }
}

fn mat_of<T: Real>(y: &DVector<T>, r: std::ops::Range<usize>, d: usize) -> DMatrix<T> {
    DMatrix::from_column_slice(d, d, &y.as_slice()[r])
}

fn rk4_step<T: Real, F>(f: &F, t: T, h: T, y: &DVector<T>) -> Result<DVector<T>>
where
    F: Fn(T, &DVector<T>) -> Result<DVector<T>>,
{
    let half = lit::<T>(0.5);
    let k1 = f(t, y)?;
    let k2 = f(t + h * half, &(y + &k1 * (h * half)))?;
    let k3 = f(t + h * half, &(y + &k2 * (h * half)))?;
    let k4 = f(t + h, &(y + &k3 * h))?;
    Ok(y + (k1 + k2 * lit::<T>(2.0) + k3 * lit::<T>(2.0) + k4) * (h / lit(6.0)))
}

/// Integrand of the action: `<P, dX/dt> - h(t)`; returns `(integrand, trace term)`.
fn action_integrand<T: Real>(
    c: &Coefficients<T>,
    z: &DVector<T>,
    zdot: &DVector<T>,
    delta: &DMatrix<T>,
    n: usize,
) -> (T, T) {
    let pxdot = z.rows(0, n).dot(&zdot.rows(n, n));
    let quad = z.dot(&(c.energy_matrix() * z)) * lit(0.5);
    let trace = (&c.www * delta).trace() * c.kappa_tilde * lit(0.5);
    (pxdot - quad - c.hz.dot(z) - trace, -trace)
}

fn symplectic_projection<T: Real>(j: &SymplecticMatrix<T>, lambda: &mut DMatrix<T>) {
    let e = lambda.transpose() * j.matrix() * &*lambda - j.matrix();
    if e.amax() > lit(SYMPLECTIC_PROJECTION_THRESHOLD) {
        let d = lambda.nrows();
        *lambda = &*lambda * (DMatrix::identity(d, d) + j.matrix() * e * lit::<T>(0.5));
    }
}

fn check_inputs<T: Real>(m: &QuadraticModel<T>, times: &TimeGrid<T>, z0_dim: usize) -> Result<()> {
    m.ensure_valid()?;
    if z0_dim != m.n {
        return Err(Error::DimensionMismatch {
            what: "initial phase point dimension",
            expected: m.n,
            found: z0_dim,
        });
    }
    m.coefficients(times.start())?;
    m.coefficients(times.end())?;
    Ok(())
}

/// Integrates `Z`, `Delta2`, `Lambda` and `S` together from the given Cauchy data.
pub fn evolve_bundle<T: Real>(
    z0: &PhasePoint<T>,
    delta2_0: &DMatrix<T>,
    m: &QuadraticModel<T>,
    times: &TimeGrid<T>,
) -> Result<TrajectoryBundle<T>> {
    check_inputs(m, times, z0.dim())?;
    let n = m.n;
    let d = 2 * n;
    if delta2_0.shape() != (d, d) {
        return Err(Error::DimensionMismatch {
            what: "Delta2 rows",
            expected: d,
            found: delta2_0.nrows(),
        });
    }
    if (delta2_0 - delta2_0.transpose()).amax() > lit::<T>(1e-12) * T::one().max(delta2_0.amax()) {
        return Err(Error::Asymmetric("Delta2(0)"));
    }
    let j = symplectic_form::<T>(n)?;
    let lay = Layout { d };

    let rhs = |t: T, y: &DVector<T>| -> Result<DVector<T>> {
        let c = m.coefficients(t)?;
        let mt = c.linear_matrix();
        let jm = j.matrix() * &mt;
        let z = y.rows(0, d).into_owned();
        let zdot = j.matrix() * (&c.hz + c.center_matrix() * &z);
        let delta = mat_of(y, lay.delta(), d);
        let ddot = &jm * &delta - &delta * &mt * j.matrix();
        let lam = mat_of(y, lay.lambda(), d);
        let ldot = &jm * lam;
        let (sdot, trdot) = action_integrand(&c, &z, &zdot, &delta, n);
        let mut out = DVector::zeros(lay.len());
        out.rows_mut(0, d).copy_from(&zdot);
        out.as_mut_slice()[lay.delta()].copy_from_slice(ddot.as_slice());
        out.as_mut_slice()[lay.lambda()].copy_from_slice(ldot.as_slice());
        out[lay.action()] = sdot;
        out[lay.trace()] = trdot;
        Ok(out)
    };

    let mut y = DVector::zeros(lay.len());
    y.rows_mut(0, d).copy_from(z0.as_vector());
    y.as_mut_slice()[lay.delta()].copy_from_slice(delta2_0.as_slice());
    y.as_mut_slice()[lay.lambda()].copy_from_slice(DMatrix::<T>::identity(d, d).as_slice());

    let k = times.len();
    let mut out = TrajectoryBundle {
        times: times.knots().to_vec(),
        z: Vec::with_capacity(k),
        delta2: Vec::with_capacity(k),
        lambda: Vec::with_capacity(k),
        action: Vec::with_capacity(k),
        trace_phase: Vec::with_capacity(k),
    };
    let record = |y: &DVector<T>, out: &mut TrajectoryBundle<T>| {
        out.z.push(PhasePoint::from_vector(y.rows(0, d).into_owned()).expect("even length"));
        out.delta2.push(mat_of(y, lay.delta(), d));
        out.lambda.push(mat_of(y, lay.lambda(), d));
        out.action.push(y[lay.action()]);
        out.trace_phase.push(y[lay.trace()]);
    };
    record(&y, &mut out);
    for w in times.knots().windows(2) {
        y = rk4_step(&rhs, w[0], w[1] - w[0], &y)?;
        let delta = mat_of(&y, lay.delta(), d);
        let sym = (&delta + delta.transpose()) * lit::<T>(0.5);
        y.as_mut_slice()[lay.delta()].copy_from_slice(sym.as_slice());
        let mut lam = mat_of(&y, lay.lambda(), d);
        symplectic_projection(&j, &mut lam);
        y.as_mut_slice()[lay.lambda()].copy_from_slice(lam.as_slice());
        record(&y, &mut out);
    }
    Ok(out)
}

/// Center trajectory `Z(t)` of the Hamilton–Ehrenfest system.
pub fn evolve_center<T: Real>(
    z0: &PhasePoint<T>,
    m: &QuadraticModel<T>,
    times: &TimeGrid<T>,
) -> Result<Vec<PhasePoint<T>>> {
    let d0 = DMatrix::zeros(2 * m.n, 2 * m.n);
    Ok(evolve_bundle(z0, &d0, m, times)?.z)
}

/// Covariance `Delta2(t)`; symmetrized after every step.
pub fn evolve_delta2<T: Real>(
    delta2_0: &DMatrix<T>,
    m: &QuadraticModel<T>,
    times: &TimeGrid<T>,
) -> Result<Vec<DMatrix<T>>> {
    Ok(evolve_bundle(&PhasePoint::zeros(m.n), delta2_0, m, times)?.delta2)
}

/// Fundamental solution `Lambda(t)` of `L' = J (Hzz + kt Wzz) L`.
pub fn linearized_flow<T: Real>(m: &QuadraticModel<T>, times: &TimeGrid<T>) -> Result<Vec<DMatrix<T>>> {
    let d0 = DMatrix::zeros(2 * m.n, 2 * m.n);
    Ok(evolve_bundle(&PhasePoint::zeros(m.n), &d0, m, times)?.lambda)
}

/// A-branch Cauchy problem: same flow, initial data taken from the transformed state.
pub fn evolve_auxiliary_cauchy<T: Real>(
    za0: &PhasePoint<T>,
    delta2a_0: &DMatrix<T>,
    m: &QuadraticModel<T>,
    times: &TimeGrid<T>,
) -> Result<TrajectoryBundle<T>> {
    evolve_bundle(za0, delta2a_0, m, times)
}

/// Action `S(t)` by quadrature over given `Z(t)`, `Delta2(t)` sequences.
///
/// Each interval uses cubic Hermite interpolation of `Z` and `Delta2` (slopes
/// from the moment equations) and three-point Gauss–Legendre quadrature, which
/// keeps the quadrature fourth order like the integrator that produced the
/// samples.
pub fn action_integral<T: Real>(
    z: &[PhasePoint<T>],
    delta2: &[DMatrix<T>],
    m: &QuadraticModel<T>,
    times: &TimeGrid<T>,
) -> Result<Vec<T>> {
    if z.len() != times.len() || delta2.len() != times.len() {
        return Err(Error::GridMismatch(format!(
            "{} knots but {} centers and {} covariances",
            times.len(),
            z.len(),
            delta2.len()
        )));
    }
    let n = m.n;
    let j = symplectic_form::<T>(n)?;
    let slopes = |t: T, z: &DVector<T>, dl: &DMatrix<T>| -> Result<(DVector<T>, DMatrix<T>)> {
        let c = m.coefficients(t)?;
        let mt = c.linear_matrix();
        let zdot = j.matrix() * (&c.hz + c.center_matrix() * z);
        let ddot = j.matrix() * &mt * dl - dl * &mt * j.matrix();
        Ok((zdot, ddot))
    };
    let half = lit::<T>(0.5);
    let r = (lit::<T>(0.6)).sqrt() * half;
    let nodes = [half - r, half, half + r];
    let weights = [lit::<T>(5.0 / 18.0), lit::<T>(8.0 / 18.0), lit::<T>(5.0 / 18.0)];

    let mut out = Vec::with_capacity(times.len());
    let mut s = T::zero();
    out.push(s);
    for (k, w) in times.knots().windows(2).enumerate() {
        let (t0, t1) = (w[0], w[1]);
        let h = t1 - t0;
        let (za, zb) = (z[k].as_vector(), z[k + 1].as_vector());
        let (da, db) = (&delta2[k], &delta2[k + 1]);
        let (sza, sda) = slopes(t0, za, da)?;
        let (szb, sdb) = slopes(t1, zb, db)?;
        let mut acc = T::zero();
        for (&x, &wt) in nodes.iter().zip(&weights) {
            let x2 = x * x;
            let x3 = x2 * x;
            let h00 = lit::<T>(2.0) * x3 - lit::<T>(3.0) * x2 + T::one();
            let h10 = x3 - lit::<T>(2.0) * x2 + x;
            let h01 = lit::<T>(-2.0) * x3 + lit::<T>(3.0) * x2;
            let h11 = x3 - x2;
            let zi = za * h00 + &sza * (h10 * h) + zb * h01 + &szb * (h11 * h);
            let di = da * h00 + &sda * (h10 * h) + db * h01 + &sdb * (h11 * h);
            let ti = t0 + x * h;
            let c = m.coefficients(ti)?;
            let zdot = j.matrix() * (&c.hz + c.center_matrix() * &zi);
            acc += wt * action_integrand(&c, &zi, &zdot, &di, n).0;
        }
        s += acc * h;
        out.push(s);
    }
    Ok(out)
}

/// Shift flow `lambda' = J (Hzz + kt Wzz) lambda` with its two phases.
///
/// `delta2` supplies the covariance of the branch the shift is applied to;
/// only its initial value is used, the covariance being re-integrated
/// alongside so that the trace term sees the same stage values as `lambda`.
pub fn lambda_flow<T: Real>(
    lambda0: &PhasePoint<T>,
    m: &QuadraticModel<T>,
    times: &TimeGrid<T>,
    delta2: &[DMatrix<T>],
) -> Result<LambdaTrajectory<T>> {
    check_inputs(m, times, lambda0.dim())?;
    let Some(delta0) = delta2.first() else {
        return Err(Error::GridMismatch("empty covariance sequence".into()));
    };
    let n = m.n;
    let d = 2 * n;
    let j = symplectic_form::<T>(n)?;
    // layout: lambda (d) | delta (d*d) | s_lambda | s_shift
    let len = d + d * d + 2;
    let rhs = |t: T, y: &DVector<T>| -> Result<DVector<T>> {
        let c = m.coefficients(t)?;
        let mt = c.linear_matrix();
        let lam = y.rows(0, d).into_owned();
        let ldot = j.matrix() * &mt * &lam;
        let delta = DMatrix::from_column_slice(d, d, &y.as_slice()[d..d + d * d]);
        let ddot = j.matrix() * &mt * &delta - &delta * &mt * j.matrix();
        let kinetic = lam.rows(0, n).dot(&ldot.rows(n, n));
        let half = lit::<T>(0.5);
        let h_lambda = lam.dot(&(c.energy_matrix() * &lam)) * half
            + (&c.www * &delta).trace() * c.kappa_tilde * half;
        let mut out = DVector::zeros(len);
        out.rows_mut(0, d).copy_from(&ldot);
        out.as_mut_slice()[d..d + d * d].copy_from_slice(ddot.as_slice());
        out[d + d * d] = kinetic - h_lambda;
        out[d + d * d + 1] = kinetic - lam.dot(&(&mt * &lam)) * half;
        Ok(out)
    };
    let mut y = DVector::zeros(len);
    y.rows_mut(0, d).copy_from(lambda0.as_vector());
    y.as_mut_slice()[d..d + d * d].copy_from_slice(delta0.as_slice());
    let mut out = LambdaTrajectory {
        times: times.knots().to_vec(),
        lambda: vec![lambda0.clone()],
        s_lambda: vec![T::zero()],
        s_shift: vec![T::zero()],
    };
    for w in times.knots().windows(2) {
        y = rk4_step(&rhs, w[0], w[1] - w[0], &y)?;
        out.lambda
            .push(PhasePoint::from_vector(y.rows(0, d).into_owned())?);
        out.s_lambda.push(y[d + d * d]);
        out.s_shift.push(y[d + d * d + 1]);
    }
    Ok(out)
}

/// Step-halving error estimate of the center trajectory: the largest
/// difference at common knots between the given grid and its refinement,
/// divided by `2^4 - 1`.
pub fn richardson_estimate<T: Real>(
    z0: &PhasePoint<T>,
    delta2_0: &DMatrix<T>,
    m: &QuadraticModel<T>,
    times: &TimeGrid<T>,
) -> Result<T> {
    let coarse = evolve_bundle(z0, delta2_0, m, times)?;
    let fine = evolve_bundle(z0, delta2_0, m, &times.refined())?;
    let mut worst = T::zero();
    for (k, zc) in coarse.z.iter().enumerate() {
        let zf = &fine.z[2 * k];
        worst = worst.max(zc.sub(zf).max_abs());
        worst = worst.max((coarse.action[k] - fine.action[2 * k]).abs());
    }
    Ok(worst / lit(15.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::CoefficientProvider;
    use std::f64::consts::PI;

    fn pp(p: f64, x: f64) -> PhasePoint<f64> {
        PhasePoint::new(&[p], &[x]).unwrap()
    }

    #[test]
    fn time_grid_validation() {
        assert!(TimeGrid::new(vec![0.0, 1.0, 1.0]).is_err());
        assert!(TimeGrid::<f64>::uniform(0.0, 1.0, 0.0).is_err());
        let g = TimeGrid::uniform(0.0, 1.0, 0.3).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g.end(), 1.0);
        let g = TimeGrid::uniform(0.0, 1.0, 1e-3).unwrap();
        assert_eq!(g.len(), 1001);
    }

    #[test]
    fn free_particle_center_and_flow() {
        let m = QuadraticModel::free_particle(1, 1.0);
        let times = TimeGrid::uniform(0.0, 1.0, 0.01).unwrap();
        let z = evolve_center(&pp(1.0, 0.0), &m, &times).unwrap();
        assert!(z.last().unwrap().sub(&pp(1.0, 1.0)).max_abs() < 1e-13);
        let l = linearized_flow(&m, &times).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        assert!((l.last().unwrap() - want).amax() < 1e-13);
    }

    #[test]
    fn harmonic_rotation() {
        let m = QuadraticModel::harmonic(1, 1.0);
        let times = TimeGrid::uniform(0.0, PI / 2.0, 1e-3).unwrap();
        let z = evolve_center(&pp(0.0, 1.0), &m, &times).unwrap();
        assert!(z.last().unwrap().sub(&pp(-1.0, 0.0)).max_abs() < 1e-12);
    }

    #[test]
    fn free_particle_spreading_and_action() {
        let m = QuadraticModel::free_particle(1, 1.0);
        let times = TimeGrid::uniform(0.0, 2.0, 1e-2).unwrap();
        let b = evolve_bundle(&pp(1.0, 0.0), &DMatrix::from_diagonal_element(2, 2, 0.5), &m, &times)
            .unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 1.0, 2.5]);
        assert!((b.delta2.last().unwrap() - want).amax() < 1e-12);
        assert!((b.action.last().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn squeezed_covariance_rotates() {
        // oracle: Delta2(t) = L Delta2(0) L^T with L the rotation by t
        let m = QuadraticModel::harmonic(1, 1.0);
        let times = TimeGrid::uniform(0.0, PI / 2.0, 1e-3).unwrap();
        let d0 = DMatrix::from_diagonal(&DVector::from_vec(vec![1.25, 0.25]));
        let d = evolve_delta2(&d0, &m, &times).unwrap();
        let want = DMatrix::from_diagonal(&DVector::from_vec(vec![0.25, 1.25]));
        assert!((d.last().unwrap() - want).amax() < 1e-12);
    }

    #[test]
    fn asymmetric_covariance_rejected() {
        let m = QuadraticModel::harmonic(1, 1.0);
        let times = TimeGrid::uniform(0.0, 1.0, 0.1).unwrap();
        let d0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 1.0]);
        assert!(matches!(evolve_delta2(&d0, &m, &times), Err(Error::Asymmetric(_))));
    }

    #[test]
    fn nonlocal_frequency_shift() {
        // Wzz = diag(0, 1), kt = 0.5: center rotates at sqrt(1.5)
        let mut w = DMatrix::zeros(2, 2);
        w[(1, 1)] = 1.0;
        let m = QuadraticModel::harmonic(1, 1.0)
            .with_wzz(CoefficientProvider::Constant(w))
            .with_kappa(0.5);
        let tq = PI / 1.5f64.sqrt();
        let times = TimeGrid::uniform(0.0, tq, 1e-3).unwrap();
        let z = evolve_center(&pp(0.0, 1.0), &m, &times).unwrap();
        assert!(z.last().unwrap().sub(&pp(0.0, -1.0)).max_abs() < 1e-11);
    }

    #[test]
    fn trace_term_enters_action() {
        let mut www = DMatrix::zeros(2, 2);
        www[(1, 1)] = 1.0;
        let m = QuadraticModel::harmonic(1, 1.0)
            .with_www(CoefficientProvider::Constant(www))
            .with_kappa(1.0);
        let times = TimeGrid::uniform(0.0, 3.0, 1e-2).unwrap();
        let d0 = DMatrix::from_diagonal_element(2, 2, 0.5);
        let b = evolve_bundle(&PhasePoint::zeros(1), &d0, &m, &times).unwrap();
        assert!((*b.action.last().unwrap() + 0.25 * 3.0f64).abs() < 1e-12);
        assert!((*b.trace_phase.last().unwrap() + 0.75f64).abs() < 1e-12);
    }

    #[test]
    fn action_quadrature_matches_joint_integration() {
        let m = QuadraticModel::new(
            1,
            1.0,
            CoefficientProvider::Profile(crate::phase_space::Profile::Oscillator {
                n: 1,
                a: 1.0,
                b: 0.1,
                nu: 2.0,
            }),
        )
        .with_hz(CoefficientProvider::vector(DVector::from_vec(vec![0.1, -0.2])))
        .with_wzz(CoefficientProvider::Constant(DMatrix::from_diagonal_element(2, 2, 1.0)))
        .with_wzw(CoefficientProvider::Constant(DMatrix::from_diagonal_element(2, 2, 0.5)))
        .with_www(CoefficientProvider::Constant(DMatrix::from_diagonal_element(2, 2, 1.0)))
        .with_kappa(0.3);
        let times = TimeGrid::uniform(0.0, 4.0, 1e-2).unwrap();
        let d0 = DMatrix::from_row_slice(2, 2, &[1.25, 0.25, 0.25, 0.25]);
        let b = evolve_bundle(&pp(0.4, 1.0), &d0, &m, &times).unwrap();
        let s = action_integral(&b.z, &b.delta2, &m, &times).unwrap();
        for (a, q) in b.action.iter().zip(&s) {
            assert!((a - q).abs() < 1e-9, "{a} vs {q}");
        }
        assert!(richardson_estimate(&pp(0.4, 1.0), &d0, &m, &times).unwrap() < 1e-9);
    }

    #[test]
    fn lambda_flow_examples() {
        let m = QuadraticModel::harmonic(1, 1.0);
        let d0 = DMatrix::from_diagonal_element(2, 2, 0.5);
        let times = TimeGrid::uniform(0.0, PI / 2.0, 1e-3).unwrap();
        let lt = lambda_flow(&pp(0.0, 1.0), &m, &times, std::slice::from_ref(&d0)).unwrap();
        assert!(lt.lambda.last().unwrap().sub(&pp(-1.0, 0.0)).max_abs() < 1e-12);
        let times = TimeGrid::uniform(0.0, PI / 4.0, 1e-3).unwrap();
        let lt = lambda_flow(&pp(0.0, 1.0), &m, &times, std::slice::from_ref(&d0)).unwrap();
        assert!((*lt.s_lambda.last().unwrap() + 0.25f64).abs() < 1e-12);
        assert!((*lt.s_shift.last().unwrap() + 0.25f64).abs() < 1e-12);

        let free = QuadraticModel::free_particle(1, 1.0);
        let times = TimeGrid::uniform(0.0, 2.0, 1e-2).unwrap();
        let lt = lambda_flow(&pp(0.0, 1.0), &free, &times, std::slice::from_ref(&d0)).unwrap();
        assert!(lt.lambda.iter().all(|l| l.sub(&pp(0.0, 1.0)).max_abs() < 1e-14));
        assert!(lt.s_lambda.iter().all(|s| s.abs() < 1e-14));
    }

    #[test]
    fn zero_shift_picks_up_only_the_trace() {
        let mut www = DMatrix::zeros(2, 2);
        www[(1, 1)] = 1.0;
        let m = QuadraticModel::harmonic(1, 1.0)
            .with_www(CoefficientProvider::Constant(www))
            .with_kappa(0.3);
        let d0 = DMatrix::from_diagonal_element(2, 2, 0.5);
        let times = TimeGrid::uniform(0.0, 2.0, 1e-2).unwrap();
        let lt = lambda_flow(&PhasePoint::zeros(1), &m, &times, &[d0]).unwrap();
        assert!(lt.lambda.iter().all(|l| l.max_abs() == 0.0));
        assert!((*lt.s_lambda.last().unwrap() + 0.5 * 0.3 * 0.5 * 2.0f64).abs() < 1e-12);
        assert!(lt.s_shift.iter().all(|s| *s == 0.0));
    }
}

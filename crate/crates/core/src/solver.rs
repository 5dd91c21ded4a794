//! Split-step Fourier solver for the nonlocal equation and the residual
//! checker. Because the kernel is quadratic, the nonlocal term collapses to
//! a quadratic-plus-linear potential and a scalar, built from the
//! instantaneous mass, first and second moments of the field.
//!
//! The solver handles models whose `Hzz` and `Wzz` have no momentum–position
//! cross block, so that the generator splits into a kinetic part diagonal in
//! Fourier space and a potential diagonal in position space.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::flow::TimeGrid;
use crate::grid::{Grid, GridReal, GridState, Spectral};
use crate::moments::grid_moments_with;
use crate::phase_space::{Coefficients, QuadraticModel};
use crate::real::{cis, lit, to_f64, Real};

/// Largest axis length accepted by the direct double-integral mode.
pub const DIRECT_QUADRATURE_MAX: usize = 256;

/// Mass `N`, first moments `N Z`, and second moments `N (Delta2 + Z Z^T)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawMoments<T: Real> {
    pub mass: T,
    pub first: DVector<T>,
    pub second: DMatrix<T>,
}

impl<T: Real> RawMoments<T> {
    fn zero(n: usize) -> Self {
        Self {
            mass: T::zero(),
            first: DVector::zeros(2 * n),
            second: DMatrix::zeros(2 * n, 2 * n),
        }
    }

    fn mean(&self, other: &Self) -> Self {
        let h = lit::<T>(0.5);
        Self {
            mass: (self.mass + other.mass) * h,
            first: (&self.first + &other.first) * h,
            second: (&self.second + &other.second) * h,
        }
    }
}

fn raw_moments<T: GridReal>(psi: &GridState<T>, spectral: &Spectral<T>) -> Result<RawMoments<T>> {
    let n = psi.n_dim();
    if psi.norm_sqr() == T::zero() {
        return Ok(RawMoments::zero(n));
    }
    let gm = grid_moments_with(psi, spectral)?;
    let z = gm.moments.z.as_vector();
    Ok(RawMoments {
        mass: gm.norm_sqr,
        first: z * gm.norm_sqr,
        second: (&gm.moments.delta2 + z * z.transpose()) * gm.norm_sqr,
    })
}

/// The mean-field generator frozen at one instant:
/// `H_eff = p.Kp p + kp.p + x.Kx x + kx.x + scalar`.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectivePotentialSnapshot<T: Real> {
    /// `Kx = (Hxx + kappa N Wzz_xx) / 2`.
    pub quadratic: DMatrix<T>,
    /// `kx = Hz_x + kappa (Wzw m)_x`.
    pub linear: DVector<T>,
    /// `kappa Sp(Www C) / 2` with `C` the raw second moments.
    pub scalar: T,
    pub kinetic_quadratic: DMatrix<T>,
    pub kinetic_linear: DVector<T>,
}

impl<T: Real> EffectivePotentialSnapshot<T> {
    pub fn potential(&self, x: &[T]) -> T {
        let n = self.linear.len();
        let mut v = T::zero();
        for i in 0..n {
            v += self.linear[i] * x[i];
            for j in 0..n {
                v += x[i] * self.quadratic[(i, j)] * x[j];
            }
        }
        v
    }

    pub fn kinetic(&self, p: &[T]) -> T {
        let n = self.kinetic_linear.len();
        let mut v = T::zero();
        for i in 0..n {
            v += self.kinetic_linear[i] * p[i];
            for j in 0..n {
                v += p[i] * self.kinetic_quadratic[(i, j)] * p[j];
            }
        }
        v
    }
}

fn block<T: Real>(m: &DMatrix<T>, r: usize, c: usize, n: usize) -> DMatrix<T> {
    m.view((r, c), (n, n)).into_owned()
}

fn snapshot<T: Real>(c: &Coefficients<T>, kappa: T, raw: &RawMoments<T>, n: usize) -> EffectivePotentialSnapshot<T> {
    let h = lit::<T>(0.5);
    let quad = &c.hzz + &c.wzz * (kappa * raw.mass);
    let quad = (&quad + quad.transpose()) * h;
    let lin = &c.hz + &c.wzw * &raw.first * kappa;
    EffectivePotentialSnapshot {
        quadratic: block(&quad, n, n, n) * h,
        linear: lin.rows(n, n).into_owned(),
        scalar: (&c.www * &raw.second).trace() * kappa * h,
        kinetic_quadratic: block(&quad, 0, 0, n) * h,
        kinetic_linear: lin.rows(0, n).into_owned(),
    }
}

/// Effective generator from the field's own moments at time `t`.
pub fn effective_potential<T: GridReal>(
    psi: &GridState<T>,
    m: &QuadraticModel<T>,
    t: T,
) -> Result<EffectivePotentialSnapshot<T>> {
    check_dimension(psi, m)?;
    let c = m.coefficients(t)?;
    check_blocks(&c, m.n)?;
    let raw = raw_moments(psi, &Spectral::new(&psi.grid))?;
    Ok(snapshot(&c, m.kappa, &raw, m.n))
}

fn check_dimension<T: Real>(psi: &GridState<T>, m: &QuadraticModel<T>) -> Result<()> {
    if psi.n_dim() != m.n {
        return Err(Error::DimensionMismatch {
            what: "grid dimension",
            expected: m.n,
            found: psi.n_dim(),
        });
    }
    Ok(())
}

fn check_blocks<T: Real>(c: &Coefficients<T>, n: usize) -> Result<()> {
    for (name, mat) in [("Hzz", &c.hzz), ("Wzz", &c.wzz)] {
        if block(mat, 0, n, n).amax() != T::zero() || block(mat, n, 0, n).amax() != T::zero() {
            return Err(Error::UnsupportedBlock(format!("{name} (momentum-position cross block)")));
        }
    }
    Ok(())
}

/// Fails unless the model lies in the subclass the grid solver supports at every knot.
pub fn check_grid_support<T: Real>(m: &QuadraticModel<T>, times: &TimeGrid<T>) -> Result<()> {
    for &t in times.knots() {
        check_blocks(&m.coefficients(t)?, m.n)?;
    }
    Ok(())
}

/// Direct mode needs a position-only kernel.
fn check_direct<T: Real>(c: &Coefficients<T>, n: usize) -> Result<()> {
    for (name, mat) in [("Wzz", &c.wzz), ("Wzw", &c.wzw), ("Www", &c.www)] {
        let mut off = mat.clone();
        off.view_mut((n, n), (n, n)).fill(T::zero());
        if off.amax() != T::zero() {
            return Err(Error::UnsupportedBlock(format!(
                "{name} (direct quadrature needs a position-only kernel)"
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitStepOptions {
    /// Knot indices to keep; `None` keeps every knot.
    pub record: Option<Vec<usize>>,
    /// Evaluate the nonlocal potential by the `O(N^2)` double integral.
    pub direct_quadrature: bool,
    /// Reject steps with `dt max|V| / hbar > pi/4` on the occupied region.
    pub check_stability: bool,
}

impl Default for SplitStepOptions {
    fn default() -> Self {
        Self {
            record: None,
            direct_quadrature: false,
            check_stability: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SplitStepRun<T: Real> {
    pub indices: Vec<usize>,
    pub states: Vec<GridState<T>>,
    /// Largest boundary-layer mass fraction seen during the run.
    pub max_leakage: T,
    /// Largest `| ||psi(t)|| - ||psi(0)|| |`.
    pub norm_drift: T,
}

struct Stepper<'a, T: GridReal> {
    m: &'a QuadraticModel<T>,
    spectral: Spectral<T>,
    xs: Vec<[T; 2]>,
    ps: Vec<[T; 2]>,
    direct: bool,
    check_stability: bool,
    dt: T,
    cross: bool,
}

impl<'a, T: GridReal> Stepper<'a, T> {
    fn new(grid: &Grid<T>, m: &'a QuadraticModel<T>, opts: &SplitStepOptions, dt: T) -> Self {
        let spectral = Spectral::new(grid);
        let xs = (0..grid.len()).map(|i| grid.coords(i)).collect();
        let ps = (0..grid.len())
            .map(|i| {
                let k = spectral.k_of(i);
                [k[0] * m.hbar, k[1] * m.hbar]
            })
            .collect();
        Self {
            m,
            spectral,
            xs,
            ps,
            direct: opts.direct_quadrature,
            check_stability: opts.check_stability,
            dt,
            cross: false,
        }
    }

    fn moments(&self, psi: &GridState<T>) -> Result<RawMoments<T>> {
        raw_moments(psi, &self.spectral)
    }

    /// Nonlocal potential `kappa int |psi(y)|^2 V(x, y) dy` by direct summation.
    fn direct_potential(&self, psi: &GridState<T>, c: &Coefficients<T>) -> Vec<T> {
        let n = self.m.n;
        let h = lit::<T>(0.5);
        let dv = psi.grid.cell_volume();
        let wzz = block(&c.wzz, n, n, n);
        let wzw = block(&c.wzw, n, n, n);
        let www = block(&c.www, n, n, n);
        let rho: Vec<T> = psi.values.iter().map(|v| v.norm_sqr() * dv).collect();
        self.xs
            .iter()
            .map(|x| {
                let x = DVector::from_column_slice(&x[..n]);
                let xx = x.dot(&(&wzz * &x)) * h;
                let acc = self.xs.iter().zip(&rho).fold(T::zero(), |acc, (y, r)| {
                    let y = DVector::from_column_slice(&y[..n]);
                    acc + *r * (xx + x.dot(&(&wzw * &y)) + y.dot(&(&www * &y)) * h)
                });
                acc * self.m.kappa
            })
            .collect()
    }

    fn potential_values(&self, psi: &GridState<T>, t: T, raw: &RawMoments<T>) -> Result<Vec<T>> {
        let n = self.m.n;
        let c = self.m.coefficients(t)?;
        check_blocks(&c, n)?;
        if self.direct {
            let bare = snapshot(&c, T::zero(), raw, n);
            let nonlocal = self.direct_potential(psi, &c);
            Ok(self
                .xs
                .iter()
                .zip(nonlocal)
                .map(|(x, v)| bare.potential(&x[..n]) + v)
                .collect())
        } else {
            let s = snapshot(&c, self.m.kappa, raw, n);
            Ok(self.xs.iter().map(|x| s.potential(&x[..n])).collect())
        }
    }

    fn scalar(&self, t: T, raw: &RawMoments<T>) -> Result<T> {
        if self.direct {
            return Ok(T::zero());
        }
        let c = self.m.coefficients(t)?;
        Ok(snapshot(&c, self.m.kappa, raw, self.m.n).scalar)
    }

    fn check_phase(&self, psi: &GridState<T>, v: &[T]) -> Result<()> {
        if !self.check_stability {
            return Ok(());
        }
        let peak = psi.values.iter().fold(T::zero(), |a, z| a.max(z.norm_sqr()));
        let floor = peak * lit(1e-12);
        let vmax = psi
            .values
            .iter()
            .zip(v)
            .filter(|(z, _)| z.norm_sqr() > floor)
            .fold(T::zero(), |a, (_, v)| a.max(v.abs()));
        let phase = self.dt * vmax / self.m.hbar;
        if phase > T::frac_pi_4() {
            return Err(Error::TimeStepTooLarge { phase: to_f64(phase) });
        }
        Ok(())
    }

    fn potential_substep(&self, psi: &GridState<T>, t: T, h: T, raw: &RawMoments<T>) -> Result<GridState<T>> {
        let v = self.potential_values(psi, t, raw)?;
        self.check_phase(psi, &v)?;
        let mut out = psi.clone();
        for (z, v) in out.values.iter_mut().zip(&v) {
            *z *= cis(-h * *v / self.m.hbar);
        }
        Ok(out)
    }

    fn kinetic_substep(&self, psi: &GridState<T>, t: T, h: T, raw: &RawMoments<T>) -> Result<GridState<T>> {
        let n = self.m.n;
        let c = self.m.coefficients(t)?;
        let kappa = if self.direct { T::zero() } else { self.m.kappa };
        let s = snapshot(&c, kappa, raw, n);
        let mut out = psi.clone();
        self.spectral.forward(&mut out.values);
        for (z, p) in out.values.iter_mut().zip(&self.ps) {
            *z *= cis(-h * s.kinetic(&p[..n]) / self.m.hbar);
        }
        self.spectral.inverse(&mut out.values);
        Ok(out)
    }

    /// One self-consistent sub-step: moments from the start of the sub-step,
    /// plus a trapezoidal corrector when the frozen moments are not invariant
    /// under it.
    fn substep<F>(&self, psi: &GridState<T>, f: F) -> Result<GridState<T>>
    where
        F: Fn(&GridState<T>, &RawMoments<T>) -> Result<GridState<T>>,
    {
        let m0 = self.moments(psi)?;
        let out = f(psi, &m0)?;
        if !self.cross {
            return Ok(out);
        }
        let m1 = self.moments(&out)?;
        f(psi, &m0.mean(&m1))
    }

    fn step(&self, psi: &GridState<T>, t0: T, t1: T) -> Result<GridState<T>> {
        let h = t1 - t0;
        let half = h * lit(0.5);
        let a = self.substep(psi, |s, r| self.potential_substep(s, t0, half, r))?;
        let b = self.substep(&a, |s, r| self.kinetic_substep(s, t0 + half, h, r))?;
        let mut c = self.substep(&b, |s, r| self.potential_substep(s, t1, half, r))?;
        let s0 = self.scalar(t0, &self.moments(psi)?)?;
        let s1 = self.scalar(t1, &self.moments(&c)?)?;
        let phase = cis(-(s0 + s1) * half / self.m.hbar);
        c.values.iter_mut().for_each(|z| *z *= phase);
        c.t = t1;
        Ok(c)
    }
}

/// Moments change under a sub-step only through `Wzw` cross couplings.
fn has_cross_coupling<T: Real>(m: &QuadraticModel<T>, times: &TimeGrid<T>) -> Result<bool> {
    let n = m.n;
    if m.kappa == T::zero() {
        return Ok(false);
    }
    for &t in times.knots() {
        let c = m.coefficients(t)?;
        if block(&c.wzw, 0, n, n).amax() != T::zero() || block(&c.wzw, n, 0, n).amax() != T::zero() {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Strang-split evolution of `gamma` over the knots of `times`, keeping every knot.
pub fn split_step_evolve<T: GridReal>(
    gamma: &GridState<T>,
    m: &QuadraticModel<T>,
    times: &TimeGrid<T>,
) -> Result<Vec<GridState<T>>> {
    Ok(split_step_evolve_with(gamma, m, times, &SplitStepOptions::default())?.states)
}

pub fn split_step_evolve_with<T: GridReal>(
    gamma: &GridState<T>,
    m: &QuadraticModel<T>,
    times: &TimeGrid<T>,
    opts: &SplitStepOptions,
) -> Result<SplitStepRun<T>> {
    m.ensure_valid()?;
    check_dimension(gamma, m)?;
    check_grid_support(m, times)?;
    if opts.direct_quadrature {
        let worst = gamma.grid.axes().iter().map(|a| a.n).max().unwrap_or(0);
        if worst > DIRECT_QUADRATURE_MAX {
            return Err(Error::QuadratureTooLarge {
                max: DIRECT_QUADRATURE_MAX,
                found: worst,
            });
        }
        for &t in times.knots() {
            check_direct(&m.coefficients(t)?, m.n)?;
        }
    }
    gamma.check_leakage()?;
    let knots = times.knots();
    let dt = knots
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(T::zero(), |a, b| a.max(b));
    let mut stepper = Stepper::new(&gamma.grid, m, opts, dt);
    stepper.cross = has_cross_coupling(m, times)?;

    let keep = |k: usize| match &opts.record {
        None => true,
        Some(r) => r.binary_search(&k).is_ok(),
    };
    let norm0 = gamma.norm();
    let mut psi = gamma.clone();
    psi.t = knots[0];
    let mut run = SplitStepRun {
        indices: Vec::new(),
        states: Vec::new(),
        max_leakage: psi.leakage_fraction(),
        norm_drift: T::zero(),
    };
    if keep(0) {
        run.indices.push(0);
        run.states.push(psi.clone());
    }
    for (k, w) in knots.windows(2).enumerate() {
        psi = stepper.step(&psi, w[0], w[1])?;
        run.max_leakage = run.max_leakage.max(psi.leakage_fraction());
        run.norm_drift = run.norm_drift.max((psi.norm() - norm0).abs());
        if keep(k + 1) {
            run.indices.push(k + 1);
            run.states.push(psi.clone());
        }
    }
    Ok(run)
}

/// `H_eff[psi] psi` with the generator built from `psi`'s own moments.
fn apply_generator<T: GridReal>(
    psi: &GridState<T>,
    m: &QuadraticModel<T>,
    spectral: &Spectral<T>,
) -> Result<Vec<Complex<T>>> {
    let n = m.n;
    let raw = raw_moments(psi, spectral)?;
    let c = m.coefficients(psi.t)?;
    check_blocks(&c, n)?;
    let s = snapshot(&c, m.kappa, &raw, n);
    let mut kin = psi.values.clone();
    spectral.forward(&mut kin);
    for (i, z) in kin.iter_mut().enumerate() {
        let k = spectral.k_of(i);
        let p = [k[0] * m.hbar, k[1] * m.hbar];
        *z *= s.kinetic(&p[..n]);
    }
    spectral.inverse(&mut kin);
    Ok(kin
        .iter()
        .zip(&psi.values)
        .enumerate()
        .map(|(i, (k, v))| {
            let x = psi.grid.coords(i);
            *k + *v * (s.potential(&x[..n]) + s.scalar)
        })
        .collect())
}

/// `|| -i hbar (psi_+ - psi_-)/(t_+ - t_-) + H_eff[psi] psi ||` at the middle snapshot.
pub fn residual_at<T: GridReal>(
    prev: &GridState<T>,
    cur: &GridState<T>,
    next: &GridState<T>,
    m: &QuadraticModel<T>,
) -> Result<T> {
    check_dimension(cur, m)?;
    prev.check_same_grid(cur)?;
    next.check_same_grid(cur)?;
    let spectral = Spectral::new(&cur.grid);
    let h = apply_generator(cur, m, &spectral)?;
    let dt = next.t - prev.t;
    if !(dt > T::zero()) {
        return Err(Error::BadTimeGrid { min: 3 });
    }
    let coef = Complex::new(T::zero(), -m.hbar / dt);
    let dv = cur.grid.cell_volume();
    let sum = next
        .values
        .iter()
        .zip(&prev.values)
        .zip(&h)
        .fold(T::zero(), |acc, ((a, b), hv)| acc + ((*a - *b) * coef + *hv).norm_sqr());
    Ok((sum * dv).sqrt())
}

/// Residual at every interior snapshot of a consecutive sequence.
pub fn residual_norm<T: GridReal>(candidate: &[GridState<T>], m: &QuadraticModel<T>) -> Result<Vec<T>> {
    if candidate.len() < 3 {
        return Err(Error::TooFewSnapshots(candidate.len()));
    }
    candidate
        .windows(3)
        .map(|w| residual_at(&w[0], &w[1], &w[2], m))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct L2Comparison<T: Real> {
    pub raw: T,
    pub phase_aligned: T,
    pub best_phase: T,
}

/// Raw and phase-aligned L2 distances; `best_phase = arg <a|b>`.
pub fn compare_l2<T: Real>(a: &GridState<T>, b: &GridState<T>) -> Result<L2Comparison<T>> {
    let ip = a.inner(b)?;
    let best_phase = if ip.norm_sqr() > T::zero() { ip.im.atan2(ip.re) } else { T::zero() };
    let rot = cis(best_phase);
    let dv = a.grid.cell_volume();
    let (mut raw, mut aligned) = (T::zero(), T::zero());
    for (x, y) in a.values.iter().zip(&b.values) {
        raw += (*x - *y).norm_sqr();
        aligned += (*x * rot - *y).norm_sqr();
    }
    Ok(L2Comparison {
        raw: (raw * dv).sqrt(),
        phase_aligned: (aligned * dv).sqrt(),
        best_phase,
    })
}

/// `||a||`-relative version of the raw distance, for reporting.
pub fn relative_l2<T: Real>(a: &GridState<T>, b: &GridState<T>) -> Result<T> {
    let raw = compare_l2(a, b)?.raw;
    let na = a.norm();
    Ok(if na > T::zero() { raw / na } else { raw })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::grid_moments;
    use crate::phase_space::CoefficientProvider;
    use crate::propagator::HermiteGaussianState;
    use crate::phase_space::PhasePoint;
    use crate::real::{cplx, creal};
    use std::f64::consts::PI;

    fn ground_on(grid: &Grid<f64>, x0: f64) -> GridState<f64> {
        GridState::from_fn(grid.clone(), 1.0, 0.0, |u| {
            creal(PI.powf(-0.25) * (-(u[0] - x0).powi(2) / 2.0).exp())
        })
    }

    fn xx(v: f64) -> CoefficientProvider<f64> {
        let mut m = DMatrix::zeros(2, 2);
        m[(1, 1)] = v;
        CoefficientProvider::Constant(m)
    }

    #[test]
    fn free_spreading_variance() {
        let grid = Grid::uniform(1, -20.0, 20.0, 1024).unwrap();
        let m = QuadraticModel::free_particle(1, 1.0);
        let times = TimeGrid::uniform(0.0, 1.0, 1e-3).unwrap();
        let run = split_step_evolve_with(
            &ground_on(&grid, 0.0),
            &m,
            &times,
            &SplitStepOptions {
                record: Some(vec![1000]),
                ..Default::default()
            },
        )
        .unwrap();
        let d = grid_moments(&run.states[0]).unwrap().moments.delta2;
        assert!((d[(1, 1)] - 1.0).abs() < 1e-6);
        assert!(run.norm_drift < 1e-12);
    }

    #[test]
    fn coherent_state_modulus_is_periodic() {
        let grid = Grid::uniform(1, -12.0, 12.0, 256).unwrap();
        let m = QuadraticModel::harmonic(1, 1.0);
        let times = TimeGrid::uniform(0.0, 2.0 * PI, 1e-3).unwrap();
        let psi0 = ground_on(&grid, 1.0);
        let run = split_step_evolve_with(
            &psi0,
            &m,
            &times,
            &SplitStepOptions {
                record: Some(vec![times.len() - 1]),
                ..Default::default()
            },
        )
        .unwrap();
        let mut a = psi0.clone();
        let mut b = run.states[0].clone();
        a.values.iter_mut().for_each(|v| *v = creal(v.norm()));
        b.values.iter_mut().for_each(|v| *v = creal(v.norm()));
        assert!(compare_l2(&a, &b).unwrap().raw < 1e-5);
    }

    #[test]
    fn trace_term_is_a_global_phase() {
        // Www only: relative phase to the kappa = 0 run is -kappa/2 * Sp(Www Delta2) * t
        let grid = Grid::uniform(1, -12.0, 12.0, 256).unwrap();
        let psi0 = ground_on(&grid, 0.0);
        let t1 = 2.0;
        let times = TimeGrid::uniform(0.0, t1, 1e-3).unwrap();
        let rec = SplitStepOptions {
            record: Some(vec![times.len() - 1]),
            ..Default::default()
        };
        let lin = QuadraticModel::harmonic(1, 1.0);
        let nl = lin.clone().with_www(xx(1.0)).with_kappa(0.3);
        let a = split_step_evolve_with(&psi0, &lin, &times, &rec).unwrap();
        let b = split_step_evolve_with(&psi0, &nl, &times, &rec).unwrap();
        let cmp = compare_l2(&a.states[0], &b.states[0]).unwrap();
        assert!(cmp.phase_aligned < 1e-10);
        assert!((cmp.best_phase + 0.5 * 0.3 * 0.5 * t1).abs() < 1e-4);
    }

    #[test]
    fn effective_potential_examples() {
        let grid = Grid::uniform(1, -12.0, 12.0, 256).unwrap();
        let psi = ground_on(&grid, 0.0);
        let m = QuadraticModel::harmonic(1, 1.0);
        let s = effective_potential(&psi, &m, 0.0).unwrap();
        assert!((s.quadratic[(0, 0)] - 0.5).abs() < 1e-15);
        assert_eq!(s.linear[0], 0.0);
        assert_eq!(s.scalar, 0.0);
        let s = effective_potential(&psi, &m.clone().with_wzw(xx(1.0)).with_kappa(0.7), 0.0).unwrap();
        assert!(s.linear[0].abs() < 1e-14);
        let s = effective_potential(&psi, &m.with_www(xx(1.0)).with_kappa(0.7), 0.0).unwrap();
        assert!((s.scalar - 0.5 * 0.7 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn cross_block_rejected() {
        let grid = Grid::uniform(1, -12.0, 12.0, 256).unwrap();
        let hzz = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0]);
        let m = QuadraticModel::new(1, 1.0, CoefficientProvider::Constant(hzz));
        let times = TimeGrid::uniform(0.0, 1.0, 1e-2).unwrap();
        let err = split_step_evolve(&ground_on(&grid, 0.0), &m, &times).unwrap_err();
        assert!(err.to_string().starts_with("grid solver restriction"));
    }

    #[test]
    fn coarse_step_rejected() {
        let grid = Grid::uniform(1, -12.0, 12.0, 256).unwrap();
        let m = QuadraticModel::harmonic(1, 1.0);
        let times = TimeGrid::uniform(0.0, 1.0, 0.5).unwrap();
        assert!(matches!(
            split_step_evolve(&ground_on(&grid, 0.0), &m, &times),
            Err(Error::TimeStepTooLarge { .. })
        ));
    }

    #[test]
    fn direct_quadrature_matches_moment_reduction() {
        let grid = Grid::uniform(1, -12.0, 12.0, 256).unwrap();
        let m = QuadraticModel::harmonic(1, 1.0)
            .with_wzz(xx(1.0))
            .with_wzw(xx(0.5))
            .with_www(xx(1.0))
            .with_kappa(0.3);
        let times = TimeGrid::uniform(0.0, 0.5, 1e-3).unwrap();
        let psi0 = ground_on(&grid, 1.0);
        let rec = |direct| SplitStepOptions {
            record: Some(vec![times.len() - 1]),
            direct_quadrature: direct,
            check_stability: true,
        };
        let a = split_step_evolve_with(&psi0, &m, &times, &rec(false)).unwrap();
        let b = split_step_evolve_with(&psi0, &m, &times, &rec(true)).unwrap();
        assert!(compare_l2(&a.states[0], &b.states[0]).unwrap().raw < 1e-9);
        let big = Grid::uniform(1, -12.0, 12.0, 512).unwrap();
        assert!(matches!(
            split_step_evolve_with(&ground_on(&big, 1.0), &m, &times, &rec(true)),
            Err(Error::QuadratureTooLarge { .. })
        ));
    }

    #[test]
    fn residual_examples() {
        let grid = Grid::uniform(1, -12.0, 12.0, 256).unwrap();
        let m = QuadraticModel::harmonic(1, 1.0);
        let frozen: Vec<_> = (0..3)
            .map(|k| {
                let mut s = ground_on(&grid, 1.0);
                s.t = k as f64 * 1e-3;
                s
            })
            .collect();
        assert!(residual_norm(&frozen, &m).unwrap()[0] > 0.1);
        let zero: Vec<_> = (0..3)
            .map(|k| GridState::zeros(grid.clone(), 1.0, k as f64 * 1e-3))
            .collect();
        assert_eq!(residual_norm(&zero, &m).unwrap()[0], 0.0);
        assert!(matches!(residual_norm(&zero[..2], &m), Err(Error::TooFewSnapshots(2))));

        // an exact solution: the coherent state
        let g = HermiteGaussianState::gaussian(
            PhasePoint::new(&[0.0], &[1.0]).unwrap(),
            DMatrix::from_element(1, 1, cplx(0.0, 1.0)),
            1.0,
        )
        .unwrap();
        let times = TimeGrid::uniform(0.0, 0.002, 1e-3).unwrap();
        let states = crate::propagator::propagate_gaussian(&g, &m, &times).unwrap();
        let sampled: Vec<_> = states
            .iter()
            .zip(times.knots())
            .map(|(s, &t)| s.sample(&grid, t).unwrap())
            .collect();
        assert!(residual_norm(&sampled, &m).unwrap()[0] < 1e-5);
    }

    #[test]
    fn compare_examples() {
        let grid = Grid::uniform(1, -12.0, 12.0, 256).unwrap();
        let a = ground_on(&grid, 0.3);
        let c = compare_l2(&a, &a).unwrap();
        assert_eq!((c.raw, c.phase_aligned, c.best_phase), (0.0, 0.0, 0.0));
        let b = a.scaled(cis(PI / 3.0));
        let c = compare_l2(&a, &b).unwrap();
        assert!((c.raw - 2.0 * (PI / 6.0).sin()).abs() < 1e-12);
        assert!(c.phase_aligned < 1e-12);
        assert!((c.best_phase - PI / 3.0).abs() < 1e-12);
    }
}

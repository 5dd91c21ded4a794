//! Solutions of the nonlinear equation assembled from the associated linear
//! equation, and the two constructions of nonlinear symmetry operators.
//!
//! A solution is stored as a trajectory bundle (its frame `Z(t)`, `S(t)`)
//! plus the u-frame states `Phi(u, t)`; the x-frame wavefunction is
//!
//! `Psi(x, t) = exp{(i/hbar)[S + <P, x - X>]} Phi(x - X, t)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::flow::{evolve_auxiliary_cauchy, evolve_bundle, lambda_flow, LambdaTrajectory, TimeGrid, TrajectoryBundle};
use crate::grid::{Grid, GridState};
use crate::moments::gaussian_moments;
use crate::phase_space::{PhasePoint, QuadraticModel};
use crate::propagator::{normalization_constant, propagate_with_flow, HermiteGaussianState, PhaseSpaceOperator};
use crate::real::{cis, creal, lit, Real};

#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    Base,
    Route1,
    Route2,
}

#[derive(Clone, Debug)]
pub struct SolutionAssembly<T: Real> {
    pub bundle: TrajectoryBundle<T>,
    pub phi: Vec<HermiteGaussianState<T>>,
    pub provenance: Provenance,
    /// `||a gamma||` for symmetry branches, 1 for the base.
    pub alpha: T,
    /// Re-centering shift (route 1 only).
    pub lambda: Option<LambdaTrajectory<T>>,
}

/// `T_Z f = exp{-(i/hbar) P.X / 2} D(Z) f`, optionally with the action phase.
fn to_x_frame<T: Real>(phi: &HermiteGaussianState<T>, z: &PhasePoint<T>, s: T) -> HermiteGaussianState<T> {
    let phase = s - z.momentum_dot_position(z) * lit(0.5);
    phi.displaced(z).scaled(cis(phase / phi.hbar))
}

fn to_u_frame<T: Real>(psi: &HermiteGaussianState<T>, z: &PhasePoint<T>, s: T) -> HermiteGaussianState<T> {
    let phase = z.momentum_dot_position(z) * lit(0.5) - s;
    psi.displaced(&z.scale(-T::one())).scaled(cis(phase / psi.hbar))
}

impl<T: Real> SolutionAssembly<T> {
    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    pub fn times(&self) -> &[T] {
        &self.bundle.times
    }

    /// `Psi(., t_k)` as a Gaussian-class state in the x-frame.
    pub fn psi(&self, k: usize) -> HermiteGaussianState<T> {
        to_x_frame(&self.phi[k], &self.bundle.z[k], self.bundle.action[k])
    }

    pub fn value(&self, x: &[T], k: usize) -> nalgebra::Complex<T> {
        self.psi(k).value(x)
    }

    pub fn sample(&self, grid: &Grid<T>, k: usize) -> Result<GridState<T>> {
        self.psi(k).sample(grid, self.bundle.times[k])
    }
}

/// Pairs u-frame states with the frame trajectory they belong to.
pub fn assemble_solution<T: Real>(
    phi: Vec<HermiteGaussianState<T>>,
    bundle: TrajectoryBundle<T>,
) -> Result<SolutionAssembly<T>> {
    if phi.len() != bundle.len() {
        return Err(Error::GridMismatch(format!(
            "{} states for {} trajectory knots",
            phi.len(),
            bundle.len()
        )));
    }
    Ok(SolutionAssembly {
        bundle,
        phi,
        provenance: Provenance::Base,
        alpha: T::one(),
        lambda: None,
    })
}

/// `max_t |<phi(t)| z_u |phi(t)>|`.
pub fn centering_check<T: Real>(phi: &[HermiteGaussianState<T>]) -> Result<T> {
    phi.iter().try_fold(T::zero(), |acc, s| {
        Ok(acc.max(gaussian_moments(s)?.z.max_abs()))
    })
}

/// Solution of the nonlinear equation with Cauchy data `gamma`.
pub fn base_assembly<T: Real>(
    gamma: &HermiteGaussianState<T>,
    m: &QuadraticModel<T>,
    times: &TimeGrid<T>,
) -> Result<SolutionAssembly<T>> {
    let mom = gaussian_moments(gamma)?;
    let bundle = evolve_bundle(&mom.z, &mom.delta2, m, times)?;
    let phi0 = to_u_frame(gamma, &mom.z, T::zero());
    let phi = propagate_with_flow(&phi0, &bundle.lambda, times.knots())?;
    assemble_solution(phi, bundle)
}

fn knots_of<T: Real>(bundle: &TrajectoryBundle<T>) -> Result<TimeGrid<T>> {
    TimeGrid::new(bundle.times.clone())
}

/// First construction: apply the transported operator to the base u-frame
/// solution, then re-center with the shift flow.
pub fn symmetry_route1<T: Real>(
    base: &SolutionAssembly<T>,
    op: &PhaseSpaceOperator<T>,
    m: &QuadraticModel<T>,
) -> Result<SolutionAssembly<T>> {
    check_operator(op, m)?;
    let hbar = m.hbar;
    let z0 = &base.bundle.z[0];
    let a_u = op.conjugated(z0, z0, hbar)?;
    let alpha = normalization_constant(&a_u, &base.phi[0])?;
    let a_u = a_u.scaled(creal(T::one() / alpha));
    let bar: Vec<HermiteGaussianState<T>> = base
        .phi
        .iter()
        .zip(&base.bundle.lambda)
        .map(|(phi, l)| a_u.transported(l)?.apply(phi))
        .collect::<Result<_>>()?;
    let mom = gaussian_moments(&bar[0])?;
    let lambda0 = mom.z.clone();
    let times = knots_of(&base.bundle)?;
    let shift = lambda_flow(&lambda0, m, &times, std::slice::from_ref(&mom.delta2))?;
    let phi: Vec<HermiteGaussianState<T>> = bar
        .iter()
        .zip(shift.lambda.iter().zip(&shift.s_shift))
        .map(|(b, (l, sigma))| {
            let phase = l.momentum_dot_position(l) * lit(0.5) - *sigma;
            b.displaced(&l.scale(-T::one())).scaled(cis(phase / hbar))
        })
        .collect();
    let za0 = z0.add(&lambda0);
    let s0 = base.bundle.action[0] + z0.momentum_dot_position(&lambda0);
    let bundle = evolve_auxiliary_cauchy(&za0, &mom.delta2, m, &times)?.with_action_offset(s0);
    Ok(SolutionAssembly {
        bundle,
        phi,
        provenance: Provenance::Route1,
        alpha,
        lambda: Some(shift),
    })
}

/// Second construction: start the A-branch from `a gamma / alpha` and carry
/// the u-frame operator linking the two branches along the linear flow.
pub fn symmetry_route2<T: Real>(
    gamma: &HermiteGaussianState<T>,
    op: &PhaseSpaceOperator<T>,
    m: &QuadraticModel<T>,
    times: &TimeGrid<T>,
) -> Result<SolutionAssembly<T>> {
    check_operator(op, m)?;
    let base = base_assembly(gamma, m, times)?;
    symmetry_route2_from(&base, gamma, op, m)
}

/// [`symmetry_route2`] reusing an already assembled base solution for `gamma`.
pub fn symmetry_route2_from<T: Real>(
    base: &SolutionAssembly<T>,
    gamma: &HermiteGaussianState<T>,
    op: &PhaseSpaceOperator<T>,
    m: &QuadraticModel<T>,
) -> Result<SolutionAssembly<T>> {
    check_operator(op, m)?;
    let alpha = normalization_constant(op, gamma)?;
    let op = op.scaled(creal(T::one() / alpha));
    let gamma_a = op.apply(gamma)?;
    let mom = gaussian_moments(&gamma_a)?;
    let z0 = &base.bundle.z[0];
    let bar = op.conjugated(&mom.z, z0, m.hbar)?;
    let phi: Vec<HermiteGaussianState<T>> = base
        .phi
        .iter()
        .zip(&base.bundle.lambda)
        .map(|(phi, l)| bar.transported(l)?.apply(phi))
        .collect::<Result<_>>()?;
    let times = knots_of(&base.bundle)?;
    let bundle = evolve_auxiliary_cauchy(&mom.z, &mom.delta2, m, &times)?;
    Ok(SolutionAssembly {
        bundle,
        phi,
        provenance: Provenance::Route2,
        alpha,
        lambda: None,
    })
}

fn check_operator<T: Real>(op: &PhaseSpaceOperator<T>, m: &QuadraticModel<T>) -> Result<()> {
    if op.n() != m.n || op.symbol.n() != m.n {
        return Err(Error::InadmissibleSymbol(format!(
            "operator acts in dimension {} but the model has n = {}",
            op.n(),
            m.n
        )));
    }
    Ok(())
}

/// Per-knot diagnostics of an assembled solution.
#[derive(Clone, Debug)]
pub struct ReportRow<T: Real> {
    pub t: T,
    pub norm: T,
    /// First moments of `Psi`.
    pub z_psi: PhasePoint<T>,
    /// `max |z_psi - Z_branch|`.
    pub moment_deviation: T,
    /// `max |Delta2(Psi) - Delta2_branch|`.
    pub covariance_deviation: T,
    /// `max |first u-moment of Phi|`.
    pub centering: T,
}

pub fn norm_and_moment_report<T: Real>(assembly: &SolutionAssembly<T>) -> Result<Vec<ReportRow<T>>> {
    (0..assembly.len())
        .map(|k| {
            let psi = assembly.psi(k);
            let mom = gaussian_moments(&psi)?;
            let centering = gaussian_moments(&assembly.phi[k])?.z.max_abs();
            Ok(ReportRow {
                t: assembly.bundle.times[k],
                norm: psi.norm(),
                moment_deviation: mom.z.sub(&assembly.bundle.z[k]).max_abs(),
                covariance_deviation: (&mom.delta2 - &assembly.bundle.delta2[k]).amax(),
                z_psi: mom.z,
                centering,
            })
        })
        .collect()
}

/// Largest pointwise difference between two assemblies sampled on a grid at knot `k`.
pub fn max_pointwise_difference<T: Real>(
    a: &SolutionAssembly<T>,
    b: &SolutionAssembly<T>,
    grid: &Grid<T>,
    k: usize,
) -> Result<T> {
    let (pa, pb) = (a.psi(k), b.psi(k));
    let d = grid.n_dim();
    Ok((0..grid.len()).fold(T::zero(), |acc, i| {
        let x = grid.coords(i);
        acc.max((pa.value(&x[..d]) - pb.value(&x[..d])).norm_sqr().sqrt())
    }))
}

/// Largest entry-wise difference of two covariance sequences.
pub fn covariance_gap<T: Real>(a: &[DMatrix<T>], b: &[DMatrix<T>]) -> T {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).amax())
        .fold(T::zero(), |p, q| p.max(q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::CoefficientProvider;
    use crate::propagator::{SymmetrySymbol, WeylPolySymbol};
    use crate::real::cplx;
    use nalgebra::Complex;

    fn gamma(q: f64, p: f64, x: f64) -> HermiteGaussianState<f64> {
        HermiteGaussianState::gaussian(
            PhasePoint::new(&[p], &[x]).unwrap(),
            DMatrix::from_element(1, 1, cplx(0.0, q)),
            1.0,
        )
        .unwrap()
    }

    fn nonlocal() -> QuadraticModel<f64> {
        let w = |v: f64| {
            let mut m = DMatrix::zeros(2, 2);
            m[(1, 1)] = v;
            CoefficientProvider::Constant(m)
        };
        QuadraticModel::harmonic(1, 1.0)
            .with_wzz(w(1.0))
            .with_wzw(w(1.0))
            .with_www(w(1.0))
            .with_kappa(0.3)
    }

    fn grid() -> Grid<f64> {
        Grid::uniform(1, -12.0, 12.0, 256).unwrap()
    }

    #[test]
    fn identity_frame_at_start() {
        let g = gamma(1.0, 0.0, 0.0);
        let times = TimeGrid::uniform(0.0, 1.0, 1e-2).unwrap();
        let base = base_assembly(&g, &QuadraticModel::harmonic(1, 1.0), &times).unwrap();
        for x in [-1.0, 0.0, 0.7] {
            assert!((base.value(&[x], 0) - g.value(&[x])).norm() < 1e-14);
        }
    }

    #[test]
    fn free_particle_matches_textbook_packet() {
        // psi(x,t) = (pi)^{-1/4} (1+it)^{-1/2} exp{-(x - p t)^2/(2(1+it)) + i p x - i p^2 t / 2}
        let p = 0.8;
        let g = gamma(1.0, p, 0.0);
        let times = TimeGrid::uniform(0.0, 2.0, 1e-2).unwrap();
        let base = base_assembly(&g, &QuadraticModel::free_particle(1, 1.0), &times).unwrap();
        let t: f64 = 2.0;
        let k = times.len() - 1;
        for x in [-2.0, 0.0, 1.6, 3.0] {
            let s = Complex::new(1.0, t);
            let want = std::f64::consts::PI.powf(-0.25) / s.sqrt()
                * (-(x - p * t) * (x - p * t) / (s * 2.0) + Complex::new(0.0, p * x - p * p * t / 2.0)).exp();
            assert!((base.value(&[x], k) - want).norm() < 1e-10);
        }
    }

    #[test]
    fn base_is_centered_and_consistent() {
        let g = gamma(2.0, 0.5, 1.0);
        let m = nonlocal();
        let times = TimeGrid::uniform(0.0, 3.0, 1e-2).unwrap();
        let base = base_assembly(&g, &m, &times).unwrap();
        assert!(centering_check(&base.phi).unwrap() < 1e-10);
        for row in norm_and_moment_report(&base).unwrap() {
            assert!((row.norm - 1.0).abs() < 1e-10);
            assert!(row.moment_deviation < 1e-9);
            assert!(row.covariance_deviation < 1e-8);
        }
    }

    #[test]
    fn identity_operator_reproduces_base() {
        let g = gamma(2.0, 0.5, 1.0);
        let m = nonlocal();
        let times = TimeGrid::uniform(0.0, 2.0, 1e-2).unwrap();
        let base = base_assembly(&g, &m, &times).unwrap();
        let id = PhaseSpaceOperator::identity(1);
        let r1 = symmetry_route1(&base, &id, &m).unwrap();
        let r2 = symmetry_route2(&g, &id, &m, &times).unwrap();
        let k = times.len() - 1;
        assert!(max_pointwise_difference(&base, &r1, &grid(), k).unwrap() < 1e-12);
        assert!(max_pointwise_difference(&base, &r2, &grid(), k).unwrap() < 1e-12);
    }

    #[test]
    fn routes_agree_and_start_from_transformed_data() {
        let g = gamma(2.0, 0.5, 1.0);
        let m = nonlocal();
        let times = TimeGrid::uniform(0.0, 2.0, 1e-2).unwrap();
        let base = base_assembly(&g, &m, &times).unwrap();
        let s = 0.5f64.sqrt();
        let ops = [
            SymmetrySymbol::Displacement(PhasePoint::new(&[0.0], &[0.5]).unwrap()).to_operator(),
            SymmetrySymbol::Polynomial(WeylPolySymbol::position(1, 0)).to_operator(),
            SymmetrySymbol::Polynomial(
                WeylPolySymbol::position(1, 0)
                    .scale(cplx(s, 0.0))
                    .sub(&WeylPolySymbol::momentum(1, 0).scale(cplx(0.0, s))),
            )
            .to_operator(),
        ];
        for op in &ops {
            let r1 = symmetry_route1(&base, op, &m).unwrap();
            let r2 = symmetry_route2_from(&base, &g, op, &m).unwrap();
            assert!(centering_check(&r1.phi).unwrap() < 1e-8);
            assert!(centering_check(&r2.phi).unwrap() < 1e-8);
            let start = op.apply(&g).unwrap().scaled(creal(1.0 / r1.alpha));
            for x in [-1.0, 0.3, 2.0] {
                assert!((r1.value(&[x], 0) - start.value(&[x])).norm() < 1e-12);
            }
            for k in [0, times.len() / 2, times.len() - 1] {
                assert!(max_pointwise_difference(&r1, &r2, &grid(), k).unwrap() < 1e-9);
            }
            for row in norm_and_moment_report(&r1).unwrap() {
                assert!((row.norm - 1.0).abs() < 1e-9);
                assert!(row.moment_deviation < 1e-8);
            }
        }
    }

    #[test]
    fn annihilating_operator_rejected() {
        let g = gamma(1.0, 0.0, 0.0);
        let m = QuadraticModel::harmonic(1, 1.0);
        let times = TimeGrid::uniform(0.0, 1.0, 1e-2).unwrap();
        let lower = WeylPolySymbol::position(1, 0).add(&WeylPolySymbol::momentum(1, 0).scale(cplx(0.0, 1.0)));
        let op = SymmetrySymbol::Polynomial(lower).to_operator();
        assert!(matches!(symmetry_route2(&g, &op, &m, &times), Err(Error::Annihilated)));
    }

    #[test]
    fn uncentered_transformed_state_reports_shift() {
        let g = gamma(1.0, 0.0, 0.0);
        let d = SymmetrySymbol::Displacement(PhasePoint::new(&[0.0], &[1.0]).unwrap()).to_operator();
        let shifted = d.apply(&g).unwrap();
        let dev = gaussian_moments(&shifted).unwrap().z;
        assert!((dev.position()[0] - 1.0).abs() < 1e-14);
        assert!((centering_check(&[shifted]).unwrap() - 1.0).abs() < 1e-14);
    }
}

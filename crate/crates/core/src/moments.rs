//! First and centered second phase-space moments, in closed form for the
//! Gaussian class and by spectral quadrature for grid states.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::grid::{GridReal, GridState, Spectral, LEAKAGE_TOLERANCE};
use crate::phase_space::PhasePoint;
use crate::poly::Polynomial;
use crate::propagator::HermiteGaussianState;
use crate::real::{creal, lit, to_f64, Real};

/// `Z = <z>` and `Delta2 = <{dz_j, dz_k}> / 2`, both per unit norm.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSet<T: Real> {
    pub z: PhasePoint<T>,
    pub delta2: DMatrix<T>,
}

impl<T: Real> MomentSet<T> {
    /// `det Delta2 - hbar^2 / 4` for `n = 1`.
    pub fn uncertainty_excess(&self, hbar: T) -> T {
        self.delta2.determinant() - hbar * hbar * lit(0.25)
    }
}

/// Grid moments together with the raw mass and the boundary diagnostic.
#[derive(Clone, Debug)]
pub struct GridMoments<T: Real> {
    pub moments: MomentSet<T>,
    pub norm_sqr: T,
    pub leakage: T,
}

impl<T: Real> GridMoments<T> {
    pub fn warnings(&self) -> Vec<String> {
        if self.leakage > lit(LEAKAGE_TOLERANCE) {
            vec![format!(
                "boundary leakage: {:e} of the mass in the outer layer",
                to_f64(self.leakage)
            )]
        } else {
            Vec::new()
        }
    }
}

/// `dz_k psi` for every phase-space coordinate, momenta first.
fn displaced_components<T: GridReal>(
    psi: &GridState<T>,
    spectral: &Spectral<T>,
    z: Option<&PhasePoint<T>>,
) -> Vec<Vec<Complex<T>>> {
    let n = psi.n_dim();
    let mut out = Vec::with_capacity(2 * n);
    for a in 0..n {
        let mut p = spectral.momentum(&psi.values, psi.hbar, a);
        if let Some(z) = z {
            let c = z.momentum()[a];
            p.iter_mut().zip(&psi.values).for_each(|(v, f)| *v -= *f * c);
        }
        out.push(p);
    }
    for a in 0..n {
        let c = z.map_or(T::zero(), |z| z.position()[a]);
        out.push(
            psi.values
                .iter()
                .enumerate()
                .map(|(i, f)| *f * (psi.grid.coords(i)[a] - c))
                .collect(),
        );
    }
    out
}

fn re_inner<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (x, y)| acc + (x.conj() * *y).re)
}

/// First and centered second moments of a grid state by spectral quadrature.
pub fn grid_moments<T: GridReal>(psi: &GridState<T>) -> Result<GridMoments<T>> {
    grid_moments_with(psi, &Spectral::new(&psi.grid))
}

/// [`grid_moments`] with a caller-owned transform plan.
pub fn grid_moments_with<T: GridReal>(psi: &GridState<T>, spectral: &Spectral<T>) -> Result<GridMoments<T>> {
    let norm_sqr = psi.norm_sqr();
    if !(norm_sqr > T::zero()) {
        return Err(Error::ZeroNorm);
    }
    let n = psi.n_dim();
    let dv = psi.grid.cell_volume();
    let raw = displaced_components(psi, spectral, None);
    let z = PhasePoint::from_vector(nalgebra::DVector::from_iterator(
        2 * n,
        raw.iter().map(|c| re_inner(&psi.values, c) * dv / norm_sqr),
    ))?;
    let centered = displaced_components(psi, spectral, Some(&z));
    let mut delta2 = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..2 * n {
        for k in j..2 * n {
            let v = re_inner(&centered[j], &centered[k]) * dv / norm_sqr;
            delta2[(j, k)] = v;
            delta2[(k, j)] = v;
        }
    }
    Ok(GridMoments {
        moments: MomentSet { z, delta2 },
        norm_sqr,
        leakage: psi.leakage_fraction(),
    })
}

/// `<psi|z|psi> / ||psi||^2`; momenta by spectral differentiation.
pub fn first_moment<T: GridReal>(psi: &GridState<T>) -> Result<PhasePoint<T>> {
    Ok(grid_moments(psi)?.moments.z)
}

/// Symmetrized covariance about a given center `z`.
pub fn centered_second_moments<T: GridReal>(
    psi: &GridState<T>,
    z: &PhasePoint<T>,
) -> Result<DMatrix<T>> {
    let norm_sqr = psi.norm_sqr();
    if !(norm_sqr > T::zero()) {
        return Err(Error::ZeroNorm);
    }
    let n = psi.n_dim();
    if z.dim() != n {
        return Err(Error::DimensionMismatch {
            what: "center dimension",
            expected: n,
            found: z.dim(),
        });
    }
    let dv = psi.grid.cell_volume();
    let spectral = Spectral::new(&psi.grid);
    let centered = displaced_components(psi, &spectral, Some(z));
    let mut delta2 = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..2 * n {
        for k in j..2 * n {
            let v = re_inner(&centered[j], &centered[k]) * dv / norm_sqr;
            delta2[(j, k)] = v;
            delta2[(k, j)] = v;
        }
    }
    Ok(delta2)
}

/// Exact moments of a Gaussian-class state.
pub fn gaussian_moments<T: Real>(state: &HermiteGaussianState<T>) -> Result<MomentSet<T>> {
    let n = state.n;
    let p = &state.poly;
    let mass = state.weighted_mean(&p.conj().mul(p)).re;
    if !(mass > T::zero()) {
        return Err(Error::ZeroNorm);
    }
    let apply = |f: &Polynomial<T>, k: usize| {
        if k < n {
            state.momentum_on(f, k)
        } else {
            state.position_on(f, k - n)
        }
    };
    let zs: Vec<T> = (0..2 * n)
        .map(|k| state.weighted_mean(&p.conj().mul(&apply(p, k))).re / mass)
        .collect();
    let dz: Vec<Polynomial<T>> = (0..2 * n)
        .map(|k| apply(p, k).sub(&p.scale(creal(zs[k]))))
        .collect();
    let mut delta2 = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..2 * n {
        for k in j..2 * n {
            let v = state.weighted_mean(&dz[j].conj().mul(&dz[k])).re / mass;
            delta2[(j, k)] = v;
            delta2[(k, j)] = v;
        }
    }
    Ok(MomentSet {
        z: PhasePoint::from_slice(&zs)?,
        delta2,
    })
}

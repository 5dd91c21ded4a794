//! Exact propagation of Gaussian-class states under the associated linear
//! equation, Weyl quantization of polynomial symbols on that class, and the
//! transport of symbols along the linearized flow.
//!
//! States carry their own center `(p_c, x_c)`; the polynomial prefactor is a
//! function of `v = u - x_c`:
//!
//! `phi(u) = N * poly(v) * exp{(i/hbar) (v.Q v / 2 + p_c.v)}`.
//!
//! The displacement `D(c)` moves a state by `+c` in phase space:
//! `(D(c) f)(x) = exp{(i/hbar)(c_p.x - c_p.c_x / 2)} f(x - c_x)`.

use nalgebra::{Cholesky, Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::flow::{linearized_flow, TimeGrid};
use crate::grid::{Grid, GridState};
use crate::phase_space::{symplectic_form, PhasePoint, QuadraticModel};
use crate::poly::Polynomial;
use crate::real::{cexp, cis, cplx, creal, from_usize, lit, to_f64, Real};

pub const DEFAULT_MAX_DEGREE: usize = 4;

fn binomial(n: u32, k: u32) -> u64 {
    (0..k).fold(1u64, |acc, i| acc * u64::from(n - i) / u64::from(i + 1))
}

/// Gaussian times polynomial, the class closed under the linear flow and
/// under Weyl operators with polynomial symbols.
#[derive(Clone, Debug, PartialEq)]
pub struct HermiteGaussianState<T: Real> {
    pub n: usize,
    pub hbar: T,
    pub amplitude: Complex<T>,
    pub center: PhasePoint<T>,
    pub q: DMatrix<Complex<T>>,
    pub poly: Polynomial<T>,
}

impl<T: Real> HermiteGaussianState<T> {
    pub fn new(
        hbar: T,
        amplitude: Complex<T>,
        center: PhasePoint<T>,
        q: DMatrix<Complex<T>>,
        poly: Polynomial<T>,
    ) -> Result<Self> {
        let n = center.dim();
        if q.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                what: "Q rows",
                expected: n,
                found: q.nrows(),
            });
        }
        if poly.nvars() != n {
            return Err(Error::DimensionMismatch {
                what: "prefactor variables",
                expected: n,
                found: poly.nvars(),
            });
        }
        let scale = T::one().max(q.iter().map(|c| c.norm_sqr().sqrt()).fold(T::zero(), T::max));
        if q.iter()
            .zip(q.transpose().iter())
            .any(|(a, b)| (*a - *b).norm_sqr().sqrt() > lit::<T>(1e-12) * scale)
        {
            return Err(Error::Asymmetric("Q"));
        }
        if !(hbar > T::zero()) || Cholesky::new(q.map(|c| c.im)).is_none() {
            return Err(Error::NotNormalizable);
        }
        Ok(Self {
            n,
            hbar,
            amplitude,
            center,
            q,
            poly,
        })
    }

    /// Unit-norm Gaussian with the given center and width matrix.
    pub fn gaussian(center: PhasePoint<T>, q: DMatrix<Complex<T>>, hbar: T) -> Result<Self> {
        let n = center.dim();
        let mut s = Self::new(hbar, creal(T::one()), center, q, Polynomial::one(n))?;
        let det = s.q.map(|c| c.im).determinant();
        let pi: T = T::pi();
        s.amplitude = creal(det.powf(lit(0.25)) * (pi * hbar).powf(-lit::<T>(0.25) * from_usize(n)));
        Ok(s)
    }

    /// Unit-norm ground state `Q = i I` centered at the origin.
    pub fn ground(n: usize, hbar: T) -> Result<Self> {
        let q = DMatrix::from_diagonal_element(n, n, cplx(T::zero(), T::one()));
        Self::gaussian(PhasePoint::zeros(n), q, hbar)
    }

    pub fn with_poly(mut self, poly: Polynomial<T>) -> Result<Self> {
        if poly.nvars() != self.n {
            return Err(Error::DimensionMismatch {
                what: "prefactor variables",
                expected: self.n,
                found: poly.nvars(),
            });
        }
        self.poly = poly;
        Ok(self)
    }

    pub fn value(&self, u: &[T]) -> Complex<T> {
        let n = self.n;
        let v: Vec<T> = (0..n).map(|j| u[j] - self.center.position()[j]).collect();
        let vc = DVector::from_iterator(n, v.iter().map(|&x| creal(x)));
        let quad = (vc.transpose() * &self.q * &vc)[(0, 0)] * creal(lit(0.5));
        let lin = (0..n).fold(T::zero(), |acc, j| acc + self.center.momentum()[j] * v[j]);
        let arg = (quad + creal(lin)) * cplx(T::zero(), T::one() / self.hbar);
        self.amplitude * self.poly.eval_real(&v) * cexp(arg)
    }

    pub fn sample(&self, grid: &Grid<T>, t: T) -> Result<GridState<T>> {
        if grid.n_dim() != self.n {
            return Err(Error::DimensionMismatch {
                what: "grid dimension",
                expected: self.n,
                found: grid.n_dim(),
            });
        }
        Ok(GridState::from_fn(grid.clone(), self.hbar, t, |u| self.value(u)))
    }

    /// Covariance `(hbar/2) (Im Q)^{-1}` of the Gaussian weight `|exp(...)|^2`.
    pub fn covariance(&self) -> DMatrix<T> {
        let im = self.q.map(|c| c.im);
        im.try_inverse().expect("Im Q positive definite") * (self.hbar * lit(0.5))
    }

    /// `E[p(v)]` under the normalized weight `|exp(...)|^2`.
    pub fn weighted_mean(&self, p: &Polynomial<T>) -> Complex<T> {
        p.gaussian_expectation(&self.covariance())
    }

    /// Integral of the unnormalized Gaussian weight.
    fn weight_mass(&self) -> T {
        let det = self.q.map(|c| c.im).determinant();
        (T::pi() * self.hbar).powf(lit::<T>(0.5) * from_usize(self.n)) / det.sqrt()
    }

    pub fn norm_sqr(&self) -> T {
        let p2 = self.poly.conj().mul(&self.poly);
        self.amplitude.norm_sqr() * self.weight_mass() * self.weighted_mean(&p2).re
    }

    pub fn norm(&self) -> T {
        self.norm_sqr().sqrt()
    }

    pub fn scaled(&self, c: Complex<T>) -> Self {
        let mut s = self.clone();
        s.amplitude *= c;
        s
    }

    pub fn normalized(&self) -> Result<Self> {
        let nrm = self.norm();
        if !(nrm > T::zero()) {
            return Err(Error::ZeroNorm);
        }
        Ok(self.scaled(creal(T::one() / nrm)))
    }

    /// Same amplitude, center and width, so polynomials can be combined directly.
    pub fn same_frame(&self, other: &Self) -> bool {
        self.hbar == other.hbar && self.center == other.center && self.q == other.q
    }

    /// Prefactor with the amplitude folded in.
    pub fn absorbed_poly(&self) -> Polynomial<T> {
        self.poly.scale(self.amplitude)
    }

    /// `||self - other||` for two states sharing a frame.
    pub fn distance_same_frame(&self, other: &Self) -> Result<T> {
        if !self.same_frame(other) {
            return Err(Error::GridMismatch("states do not share a Gaussian frame".into()));
        }
        let mut d = self.clone();
        d.amplitude = creal(T::one());
        d.poly = self.absorbed_poly().sub(&other.absorbed_poly());
        Ok(d.norm())
    }

    /// `x_j` acting on a prefactor.
    pub(crate) fn position_on(&self, p: &Polynomial<T>, j: usize) -> Polynomial<T> {
        p.mul_var(j).add(&p.scale(creal(self.center.position()[j])))
    }

    /// `-i hbar d/du_j` acting on a prefactor (the Gaussian factor differentiated too).
    pub(crate) fn momentum_on(&self, p: &Polynomial<T>, j: usize) -> Polynomial<T> {
        let mut out = p.derivative(j).scale(cplx(T::zero(), -self.hbar));
        for k in 0..self.n {
            let qjk = self.q[(j, k)];
            if qjk != Complex::default() {
                out = out.add(&p.mul_var(k).scale(qjk));
            }
        }
        out.add(&p.scale(creal(self.center.momentum()[j])))
    }

    /// `p_j^a x_j^b` Weyl-ordered: `2^{-b} sum_k C(b,k) x^k p^a x^{b-k}`.
    fn weyl_monomial_on(&self, p: &Polynomial<T>, j: usize, a: u32, b: u32) -> Polynomial<T> {
        if a == 0 || b == 0 {
            let mut out = p.clone();
            for _ in 0..b {
                out = self.position_on(&out, j);
            }
            for _ in 0..a {
                out = self.momentum_on(&out, j);
            }
            return out;
        }
        let mut acc = Polynomial::zero(self.n);
        for k in 0..=b {
            let mut f = p.clone();
            for _ in 0..(b - k) {
                f = self.position_on(&f, j);
            }
            for _ in 0..a {
                f = self.momentum_on(&f, j);
            }
            for _ in 0..k {
                f = self.position_on(&f, j);
            }
            acc = acc.add(&f.scale(creal(lit(binomial(b, k) as f64))));
        }
        acc.scale(creal(lit::<T>(0.5).powi(b as i32)))
    }

    /// Weyl operator of a polynomial symbol applied to the state.
    pub fn apply_weyl(&self, symbol: &WeylPolySymbol<T>) -> Result<Self> {
        if symbol.n() != self.n {
            return Err(Error::DimensionMismatch {
                what: "symbol dimension",
                expected: self.n,
                found: symbol.n(),
            });
        }
        let n = self.n;
        let mut out = Polynomial::zero(n);
        for (e, c) in symbol.poly().terms() {
            let mut f = self.poly.clone();
            for j in 0..n {
                f = self.weyl_monomial_on(&f, j, e[j], e[n + j]);
            }
            out = out.add(&f.scale(*c));
        }
        let mut s = self.clone();
        s.poly = out;
        Ok(s)
    }

    /// `D(c)` applied to the state.
    pub fn displaced(&self, c: &PhasePoint<T>) -> Self {
        let n = self.n;
        let mut s = self.clone();
        let mut phase = T::zero();
        for j in 0..n {
            let cp = c.momentum()[j];
            let cx = c.position()[j];
            phase += cp * (self.center.position()[j] + cx * lit(0.5));
        }
        s.center = self.center.add(c);
        s.amplitude *= cis(phase / self.hbar);
        s
    }
}

/// Polynomial phase-space symbol `a(z)`, `z = (p, x)`, with a degree bound.
#[derive(Clone, Debug, PartialEq)]
pub struct WeylPolySymbol<T: Real> {
    poly: Polynomial<T>,
    max_degree: usize,
}

impl<T: Real> WeylPolySymbol<T> {
    pub fn new(poly: Polynomial<T>, max_degree: usize) -> Result<Self> {
        if poly.nvars() == 0 || !poly.nvars().is_multiple_of(2) {
            return Err(Error::InadmissibleSymbol(format!(
                "symbol needs an even, positive number of variables, got {}",
                poly.nvars()
            )));
        }
        if poly.degree() > max_degree {
            return Err(Error::DegreeOverflow {
                degree: poly.degree(),
                max: max_degree,
            });
        }
        Ok(Self { poly, max_degree })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            poly: Polynomial::one(2 * n),
            max_degree: DEFAULT_MAX_DEGREE,
        }
    }

    /// Symbol `z_k` (momenta first).
    pub fn coordinate(n: usize, k: usize) -> Self {
        Self {
            poly: Polynomial::var(2 * n, k),
            max_degree: DEFAULT_MAX_DEGREE,
        }
    }

    pub fn position(n: usize, j: usize) -> Self {
        Self::coordinate(n, n + j)
    }

    pub fn momentum(n: usize, j: usize) -> Self {
        Self::coordinate(n, j)
    }

    /// `<c, z>`.
    pub fn linear(c: &DVector<Complex<T>>) -> Self {
        let d = c.len();
        let poly = Polynomial::from_terms(
            d,
            (0..d).map(|k| {
                let mut e = vec![0; d];
                e[k] = 1;
                (c[k], e)
            }),
        );
        Self {
            poly,
            max_degree: DEFAULT_MAX_DEGREE,
        }
    }

    /// `z.M z / 2` (only the symmetric part of `M` contributes).
    pub fn quadratic(m: &DMatrix<T>) -> Self {
        let d = m.nrows();
        let mut poly = Polynomial::zero(d);
        for i in 0..d {
            for j in i..d {
                let mut e = vec![0; d];
                e[i] += 1;
                e[j] += 1;
                let c = if i == j {
                    m[(i, i)] * lit(0.5)
                } else {
                    (m[(i, j)] + m[(j, i)]) * lit(0.5)
                };
                poly.add_term(e, creal(c));
            }
        }
        Self {
            poly,
            max_degree: DEFAULT_MAX_DEGREE.max(2),
        }
    }

    pub fn with_max_degree(self, max_degree: usize) -> Result<Self> {
        Self::new(self.poly, max_degree)
    }

    pub fn n(&self) -> usize {
        self.poly.nvars() / 2
    }

    pub fn poly(&self) -> &Polynomial<T> {
        &self.poly
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn degree(&self) -> usize {
        self.poly.degree()
    }

    pub fn eval(&self, z: &[T]) -> Complex<T> {
        self.poly.eval_real(z)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            poly: self.poly.add(&other.poly),
            max_degree: self.max_degree.max(other.max_degree),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            poly: self.poly.sub(&other.poly),
            max_degree: self.max_degree.max(other.max_degree),
        }
    }

    pub fn scale(&self, c: Complex<T>) -> Self {
        Self {
            poly: self.poly.scale(c),
            max_degree: self.max_degree,
        }
    }

    /// `z -> a(L z + s)`.
    pub fn composed(&self, l: &DMatrix<T>, s: &[T]) -> Result<Self> {
        Self::new(self.poly.substitute_real(l, s), self.max_degree)
    }

    /// `A(z) = a(Lambda^{-1} z)` for a symplectic `Lambda`.
    pub fn transported(&self, lambda: &DMatrix<T>) -> Result<Self> {
        let j = symplectic_form::<T>(self.n())?;
        let d = 2 * self.n();
        self.composed(&j.symplectic_inverse(lambda), &vec![T::zero(); d])
    }
}

/// Transports `a` along a flow sequence: `A(z, t_k) = a(Lambda(t_k)^{-1} z)`.
pub fn transport_symbol<T: Real>(
    a: &WeylPolySymbol<T>,
    lambdas: &[DMatrix<T>],
) -> Result<Vec<WeylPolySymbol<T>>> {
    lambdas.iter().map(|l| a.transported(l)).collect()
}

/// Weyl operator of a polynomial symbol applied to a state.
pub fn apply_symbol<T: Real>(
    a: &WeylPolySymbol<T>,
    state: &HermiteGaussianState<T>,
) -> Result<HermiteGaussianState<T>> {
    state.apply_weyl(a)
}

/// Operators of the form `phase * D(shift) * Op(poly)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSpaceOperator<T: Real> {
    pub phase: Complex<T>,
    pub shift: PhasePoint<T>,
    pub symbol: WeylPolySymbol<T>,
}

/// User-facing symmetry operator kinds.
#[derive(Clone, Debug, PartialEq)]
pub enum SymmetrySymbol<T: Real> {
    Polynomial(WeylPolySymbol<T>),
    /// `D(c)`, the exact phase-space shift by `c`.
    Displacement(PhasePoint<T>),
}

impl<T: Real> SymmetrySymbol<T> {
    pub fn n(&self) -> usize {
        match self {
            Self::Polynomial(a) => a.n(),
            Self::Displacement(c) => c.dim(),
        }
    }

    pub fn to_operator(&self) -> PhaseSpaceOperator<T> {
        match self {
            Self::Polynomial(a) => PhaseSpaceOperator {
                phase: creal(T::one()),
                shift: PhasePoint::zeros(a.n()),
                symbol: a.clone(),
            },
            Self::Displacement(c) => PhaseSpaceOperator {
                phase: creal(T::one()),
                shift: c.clone(),
                symbol: WeylPolySymbol::identity(c.dim()),
            },
        }
    }
}

impl<T: Real> PhaseSpaceOperator<T> {
    pub fn identity(n: usize) -> Self {
        SymmetrySymbol::Polynomial(WeylPolySymbol::identity(n)).to_operator()
    }

    pub fn n(&self) -> usize {
        self.shift.dim()
    }

    pub fn scaled(&self, c: Complex<T>) -> Self {
        let mut o = self.clone();
        o.phase *= c;
        o
    }

    pub fn apply(&self, state: &HermiteGaussianState<T>) -> Result<HermiteGaussianState<T>> {
        Ok(state
            .apply_weyl(&self.symbol)?
            .displaced(&self.shift)
            .scaled(self.phase))
    }

    /// `U(t) O U(t)^{-1}` for the flow matrix `Lambda(t)`.
    pub fn transported(&self, lambda: &DMatrix<T>) -> Result<Self> {
        let shift = PhasePoint::from_vector(lambda * self.shift.as_vector())?;
        Ok(Self {
            phase: self.phase,
            shift,
            symbol: self.symbol.transported(lambda)?,
        })
    }

    /// `T_{zl}^{-1} O T_{zr}` with the frame map
    /// `T_Z f = exp{(i/hbar) <P, x - X>} f(x - X) = exp{-(i/hbar) P.X / 2} D(Z) f`.
    pub fn conjugated(&self, zl: &PhasePoint<T>, zr: &PhasePoint<T>, hbar: T) -> Result<Self> {
        let n = self.n();
        let j = symplectic_form::<T>(n)?;
        let c = self.shift.as_vector();
        let (zlv, zrv) = (zl.as_vector(), zr.as_vector());
        let half = lit::<T>(0.5);
        let frame = (zl.momentum_dot_position(zl) - zr.momentum_dot_position(zr)) * half;
        let left = -(j.omega(c, zrv)) * half;
        let right = j.omega(zlv, &(c + zrv)) * half;
        let phase = self.phase * cis((frame + left + right) / hbar);
        let shift = PhasePoint::from_vector(c + zrv - zlv)?;
        let d = 2 * n;
        let symbol = self
            .symbol
            .composed(&DMatrix::identity(d, d), zr.as_slice())
            .map_err(|e| Error::FrameConjugation(e.to_string()))?;
        Ok(Self {
            phase,
            shift,
            symbol,
        })
    }
}

/// `alpha = ||O state||`.
pub fn normalization_constant<T: Real>(
    op: &PhaseSpaceOperator<T>,
    state0: &HermiteGaussianState<T>,
) -> Result<T> {
    let out = op.apply(state0)?;
    let alpha = out.norm();
    if out.poly.is_zero() || !(alpha > lit::<T>(1e-12) * state0.norm()) {
        return Err(Error::Annihilated);
    }
    Ok(alpha)
}

/// `det(L3 Q0 + L4)^{-1/2}` along a flow, continued in time, with the
/// number of branch crossings of the principal square root.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaplecticFactor<T: Real> {
    pub root: Complex<T>,
    pub maslov_index: i64,
}

/// Blocks `(L1 Q0 + L2, L3 Q0 + L4)`.
fn mobius_parts<T: Real>(
    lambda: &DMatrix<T>,
    q0: &DMatrix<Complex<T>>,
) -> (DMatrix<Complex<T>>, DMatrix<Complex<T>>) {
    let n = q0.nrows();
    let l = lambda.map(creal);
    let l1 = l.view((0, 0), (n, n));
    let l2 = l.view((0, n), (n, n));
    let l3 = l.view((n, 0), (n, n));
    let l4 = l.view((n, n), (n, n));
    (l1 * q0 + l2, l3 * q0 + l4)
}

pub fn metaplectic_factors<T: Real>(
    lambdas: &[DMatrix<T>],
    times: &[T],
    q0: &DMatrix<Complex<T>>,
) -> Result<Vec<MetaplecticFactor<T>>> {
    let pi = T::pi();
    let two_pi = pi + pi;
    let mut theta: Option<T> = None;
    let mut out = Vec::with_capacity(lambdas.len());
    for (l, &t) in lambdas.iter().zip(times) {
        let (_, den) = mobius_parts(l, q0);
        let det = den.determinant();
        let modulus = det.norm_sqr().sqrt();
        if !(modulus > lit(1e-14)) {
            return Err(Error::Caustic { t: to_f64(t) });
        }
        let arg = det.im.atan2(det.re);
        let th = match theta {
            None => arg,
            Some(prev) => {
                let mut step = arg - prev;
                step -= two_pi * (step / two_pi).round();
                if step.abs() >= pi * lit(0.5) {
                    return Err(Error::BranchStep {
                        t: to_f64(t),
                        advance: to_f64(step),
                    });
                }
                prev + step
            }
        };
        theta = Some(th);
        let maslov = to_f64((th - arg) / two_pi).round() as i64;
        out.push(MetaplecticFactor {
            root: cis(-th * lit(0.5)) / modulus.sqrt(),
            maslov_index: maslov,
        });
    }
    Ok(out)
}

/// Propagates a state along a precomputed flow `Lambda(t_k)`, `Lambda(t_0) = I`.
pub fn propagate_with_flow<T: Real>(
    state0: &HermiteGaussianState<T>,
    lambdas: &[DMatrix<T>],
    times: &[T],
) -> Result<Vec<HermiteGaussianState<T>>> {
    let n = state0.n;
    let d = 2 * n;
    let factors = metaplectic_factors(lambdas, times, &state0.q)?;
    let core_symbol = WeylPolySymbol::new(
        state0.poly.embed(d, &(n..d).collect::<Vec<_>>()),
        state0.poly.degree().max(DEFAULT_MAX_DEGREE),
    )?;
    let c = &state0.center;
    let lead = state0.amplitude
        * cis(-c.momentum_dot_position(c) * lit(0.5) / state0.hbar);
    lambdas
        .iter()
        .zip(factors)
        .map(|(l, f)| {
            let (num, den) = mobius_parts(l, &state0.q);
            let inv = den.try_inverse().ok_or(Error::Caustic { t: f64::NAN })?;
            let q = num * inv;
            let q = (&q + q.transpose()) * creal(lit::<T>(0.5));
            let core = HermiteGaussianState::new(
                state0.hbar,
                lead * f.root,
                PhasePoint::zeros(n),
                q,
                Polynomial::one(n),
            )?;
            let moved = PhasePoint::from_vector(l * c.as_vector())?;
            Ok(core.apply_weyl(&core_symbol.transported(l)?)?.displaced(&moved))
        })
        .collect()
}

/// Exact solution of the associated linear equation from Gaussian-class data.
pub fn propagate_gaussian<T: Real>(
    state0: &HermiteGaussianState<T>,
    m: &QuadraticModel<T>,
    times: &TimeGrid<T>,
) -> Result<Vec<HermiteGaussianState<T>>> {
    if state0.n != m.n {
        return Err(Error::DimensionMismatch {
            what: "state dimension",
            expected: m.n,
            found: state0.n,
        });
    }
    let lambdas = linearized_flow(m, times)?;
    propagate_with_flow(state0, &lambdas, times.knots())
}

/// `max ||(L A - A L) phi||` over probes and sampled interior knots, with
/// `L = -i hbar d/dt + Op(z.M z / 2)` and the time derivative of the symbol
/// taken by central differences. Evaluated in closed form on the Gaussian class.
pub fn kommut_residual<T: Real>(
    symbols: &[WeylPolySymbol<T>],
    times: &TimeGrid<T>,
    m: &QuadraticModel<T>,
    probes: &[HermiteGaussianState<T>],
) -> Result<T> {
    if symbols.len() != times.len() {
        return Err(Error::GridMismatch(format!(
            "{} symbols for {} knots",
            symbols.len(),
            times.len()
        )));
    }
    if times.len() < 3 {
        return Err(Error::TooFewSnapshots(times.len()));
    }
    let knots = times.knots();
    let interior = knots.len() - 2;
    let stride = (interior / 64).max(1);
    let mut worst = T::zero();
    for k in (1..=interior).step_by(stride) {
        let h = WeylPolySymbol::quadratic(&m.coefficients(knots[k])?.linear_matrix());
        let dt = knots[k + 1] - knots[k - 1];
        let da = symbols[k + 1]
            .sub(&symbols[k - 1])
            .scale(cplx(T::zero(), -m.hbar / dt));
        for phi in probes {
            let a_phi = phi.apply_weyl(&symbols[k])?;
            let lhs = a_phi.apply_weyl(&h)?;
            let rhs = phi.apply_weyl(&h)?.apply_weyl(&symbols[k])?;
            let dphi = phi.apply_weyl(&da)?;
            let mut r = phi.clone();
            r.amplitude = creal(T::one());
            r.poly = dphi
                .absorbed_poly()
                .add(&lhs.absorbed_poly())
                .sub(&rhs.absorbed_poly());
            worst = worst.max(r.norm());
        }
    }
    Ok(worst)
}

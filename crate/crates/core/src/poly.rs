//! Multivariate polynomials with complex coefficients, plus Gaussian
//! expectations of them. Used both for wavefunction prefactors (`n`
//! variables) and for phase-space symbols (`2n` variables).

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashMap};

use nalgebra::{Complex, DMatrix};

use crate::real::{creal, Real};

pub type Exponents = Vec<u32>;

#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial<T: Real> {
    nvars: usize,
    terms: BTreeMap<Exponents, Complex<T>>,
}

impl<T: Real> Polynomial<T> {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: Complex<T>) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(nvars, creal(T::one()))
    }

    /// The coordinate function `y_i`.
    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        let mut p = Self::zero(nvars);
        p.add_term(e, creal(T::one()));
        p
    }

    /// Builds from `(coefficient, exponents)` pairs; repeated exponents are summed.
    pub fn from_terms<I>(nvars: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (Complex<T>, Exponents)>,
    {
        let mut p = Self::zero(nvars);
        for (c, e) in terms {
            assert_eq!(e.len(), nvars, "exponent length must match variable count");
            p.add_term(e, c);
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, &Complex<T>)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.terms
            .keys()
            .map(|e| e.iter().map(|&k| k as usize).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn coefficient(&self, e: &[u32]) -> Complex<T> {
        self.terms.get(e).copied().unwrap_or_else(Complex::default)
    }

    pub fn add_term(&mut self, e: Exponents, c: Complex<T>) {
        if c == Complex::default() {
            return;
        }
        match self.terms.entry(e) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == Complex::default() {
                    o.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), *c);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), -*c);
        }
        out
    }

    pub fn scale(&self, s: Complex<T>) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            out.add_term(e.clone(), *c * s);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, *ca * *cb);
            }
        }
        out
    }

    /// Multiplies by the coordinate `y_i`.
    pub fn mul_var(&self, i: usize) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            let mut e = e.clone();
            e[i] += 1;
            out.add_term(e, *c);
        }
        out
    }

    pub fn derivative(&self, i: usize) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[i] == 0 {
                continue;
            }
            let k = e[i];
            let mut e = e.clone();
            e[i] -= 1;
            out.add_term(e, *c * creal(T::from_u32(k).unwrap()));
        }
        out
    }

    pub fn conj(&self) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            out.add_term(e.clone(), c.conj());
        }
        out
    }

    pub fn eval(&self, y: &[Complex<T>]) -> Complex<T> {
        debug_assert_eq!(y.len(), self.nvars);
        let mut acc = Complex::default();
        for (e, c) in &self.terms {
            let mut m = *c;
            for (yi, &k) in y.iter().zip(e) {
                for _ in 0..k {
                    m *= *yi;
                }
            }
            acc += m;
        }
        acc
    }

    pub fn eval_real(&self, y: &[T]) -> Complex<T> {
        let yc: Vec<_> = y.iter().map(|&v| creal(v)).collect();
        self.eval(&yc)
    }

    /// `q(w) = p(L w + s)` where `L` is `nvars x m` and `q` has `m` variables.
    pub fn substitute(&self, l: &DMatrix<Complex<T>>, shift: &[Complex<T>]) -> Self {
        assert_eq!(l.nrows(), self.nvars);
        assert_eq!(shift.len(), self.nvars);
        let m = l.ncols();
        let images: Vec<Polynomial<T>> = (0..self.nvars)
            .map(|i| {
                let mut p = Polynomial::constant(m, shift[i]);
                for j in 0..m {
                    let mut e = vec![0; m];
                    e[j] = 1;
                    p.add_term(e, l[(i, j)]);
                }
                p
            })
            .collect();
        let mut powers: HashMap<(usize, u32), Polynomial<T>> = HashMap::new();
        let mut out = Polynomial::zero(m);
        for (e, c) in &self.terms {
            let mut term = Polynomial::constant(m, *c);
            for (i, &k) in e.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                let pw = powers
                    .entry((i, k))
                    .or_insert_with(|| {
                        let mut acc = Polynomial::one(m);
                        for _ in 0..k {
                            acc = acc.mul(&images[i]);
                        }
                        acc
                    })
                    .clone();
                term = term.mul(&pw);
            }
            out = out.add(&term);
        }
        out
    }

    /// Real-matrix convenience wrapper of [`Polynomial::substitute`].
    pub fn substitute_real(&self, l: &DMatrix<T>, shift: &[T]) -> Self {
        let lc = l.map(creal);
        let sc: Vec<_> = shift.iter().map(|&v| creal(v)).collect();
        self.substitute(&lc, &sc)
    }

    /// Re-embeds into `nvars_new` variables, variable `i` going to slot `map[i]`.
    pub fn embed(&self, nvars_new: usize, map: &[usize]) -> Self {
        let mut out = Polynomial::zero(nvars_new);
        for (e, c) in &self.terms {
            let mut ne = vec![0; nvars_new];
            for (i, &k) in e.iter().enumerate() {
                ne[map[i]] += k;
            }
            out.add_term(ne, *c);
        }
        out
    }

    pub fn max_abs_coefficient(&self) -> T {
        self.terms
            .values()
            .map(|c| c.norm_sqr().sqrt())
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// `E[p(v)]` for `v ~ N(0, cov)`.
    pub fn gaussian_expectation(&self, cov: &DMatrix<T>) -> Complex<T> {
        let mut memo = HashMap::new();
        let mut acc = Complex::default();
        for (e, c) in &self.terms {
            acc += *c * creal(gaussian_monomial(e, cov, &mut memo));
        }
        acc
    }
}

/// `E[v^e]` for a centred Gaussian via `E[v_i m(v)] = sum_j cov_ij E[d_j m(v)]`.
fn gaussian_monomial<T: Real>(
    e: &[u32],
    cov: &DMatrix<T>,
    memo: &mut HashMap<Vec<u32>, T>,
) -> T {
    let total: u32 = e.iter().sum();
    if total == 0 {
        return T::one();
    }
    if total % 2 == 1 {
        return T::zero();
    }
    if let Some(v) = memo.get(e) {
        return *v;
    }
    let i = e.iter().position(|&k| k > 0).unwrap();
    let mut rest = e.to_vec();
    rest[i] -= 1;
    let mut acc = T::zero();
    for j in 0..e.len() {
        if rest[j] == 0 || cov[(i, j)] == T::zero() {
            continue;
        }
        let k = T::from_u32(rest[j]).unwrap();
        let mut d = rest.clone();
        d[j] -= 1;
        acc += cov[(i, j)] * k * gaussian_monomial(&d, cov, memo);
    }
    memo.insert(e.to_vec(), acc);
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::cplx;

    fn c(re: f64, im: f64) -> Complex<f64> {
        cplx(re, im)
    }

    #[test]
    fn gaussian_moments_match_isserlis() {
        // E[v^4] = 3 s^2, E[v^6] = 15 s^3
        let cov = DMatrix::from_element(1, 1, 0.7);
        let p4 = Polynomial::from_terms(1, [(c(1.0, 0.0), vec![4])]);
        let p6 = Polynomial::from_terms(1, [(c(1.0, 0.0), vec![6])]);
        assert!((p4.gaussian_expectation(&cov).re - 3.0 * 0.49).abs() < 1e-14);
        assert!((p6.gaussian_expectation(&cov).re - 15.0 * 0.343).abs() < 1e-13);
        // E[v1^2 v2^2] = s11 s22 + 2 s12^2
        let cov = DMatrix::from_row_slice(2, 2, &[1.3, 0.4, 0.4, 0.9]);
        let p = Polynomial::from_terms(2, [(c(1.0, 0.0), vec![2, 2])]);
        let want = 1.3 * 0.9 + 2.0 * 0.16;
        assert!((p.gaussian_expectation(&cov).re - want).abs() < 1e-14);
    }

    #[test]
    fn substitution_of_linear_map() {
        // p(y) = y0^2 y1, substitute y = L w + s
        let p = Polynomial::from_terms(2, [(c(2.0, 1.0), vec![2, 1])]);
        let l = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, 0.5]);
        let s = [0.3, -0.2];
        let q = p.substitute_real(&l, &s);
        for w in [[0.1, 0.2], [-1.0, 3.0], [2.5, -0.7]] {
            let y0 = l[(0, 0)] * w[0] + l[(0, 1)] * w[1] + s[0];
            let y1 = l[(1, 0)] * w[0] + l[(1, 1)] * w[1] + s[1];
            let want = p.eval_real(&[y0, y1]);
            let got = q.eval_real(&w);
            assert!((want - got).norm() < 1e-12);
        }
    }

    #[test]
    fn cancelling_terms_are_dropped() {
        let a = Polynomial::from_terms(1, [(c(1.0, 0.0), vec![1]), (c(2.0, 0.0), vec![0])]);
        let b = Polynomial::from_terms(1, [(c(1.0, 0.0), vec![1])]);
        let d = a.sub(&b);
        assert_eq!(d.terms().count(), 1);
        assert_eq!(d.degree(), 0);
    }

    #[test]
    fn derivative_and_mul_var() {
        let p = Polynomial::from_terms(2, [(c(3.0, 0.0), vec![2, 1])]);
        let d = p.derivative(0);
        assert_eq!(d.coefficient(&[1, 1]), c(6.0, 0.0));
        let m = p.mul_var(1);
        assert_eq!(m.coefficient(&[2, 2]), c(3.0, 0.0));
    }
}

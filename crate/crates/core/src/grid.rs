//! Uniform spatial grids, sampled wavefunctions, spectral transforms and the
//! binary snapshot format.
//!
//! Snapshot layout: `<name>.bin` holds `N_0 * ... * N_{d-1}` complex samples
//! as interleaved little-endian `f64` pairs `(re, im)`, row-major (the last
//! axis varies fastest). The sidecar `<name>.json` records
//! `{n_dim, n, x_min, x_max, t, hbar}`; sample `k` along axis `a` sits at
//! `x_min[a] + k * (x_max[a] - x_min[a]) / n[a]`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::Complex;
use rustfft::{Fft, FftNum, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{from_usize, lit, to_f64, Real};

/// Scalars usable by the FFT-based code.
pub trait GridReal: Real + FftNum {}
impl<T: Real + FftNum> GridReal for T {}

pub const MIN_POINTS: usize = 64;
/// Fraction of each axis treated as the boundary layer by the leakage check.
pub const BOUNDARY_LAYER: f64 = 0.05;
pub const LEAKAGE_TOLERANCE: f64 = 1e-8;

/// Half-open interval `[min, max)` sampled at `n` points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Axis<T: Real> {
    pub min: T,
    pub max: T,
    pub n: usize,
}

impl<T: Real> Axis<T> {
    pub fn new(min: T, max: T, n: usize) -> Result<Self> {
        if !(max > min) {
            return Err(Error::InvalidGrid("x_max must exceed x_min".into()));
        }
        if n < MIN_POINTS || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "N = {n} must be a power of two and at least {MIN_POINTS}"
            )));
        }
        Ok(Self { min, max, n })
    }

    pub fn length(&self) -> T {
        self.max - self.min
    }

    pub fn dx(&self) -> T {
        self.length() / from_usize(self.n)
    }

    pub fn point(&self, k: usize) -> T {
        self.min + self.dx() * from_usize(k)
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<T> {
        let n = self.n;
        let dk = T::two_pi() / self.length();
        (0..n)
            .map(|k| {
                let m = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
                dk * lit(m)
            })
            .collect()
    }

    fn in_boundary_layer(&self, k: usize) -> bool {
        let layer = ((self.n as f64) * BOUNDARY_LAYER).ceil() as usize;
        k < layer || k >= self.n - layer
    }
}

/// Tensor-product grid in one or two dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T: Real> {
    axes: Vec<Axis<T>>,
}

impl<T: Real> Grid<T> {
    pub fn new(axes: Vec<Axis<T>>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::InvalidGrid(format!(
                "n_dim must be 1 or 2, got {}",
                axes.len()
            )));
        }
        Ok(Self { axes })
    }

    pub fn uniform(n_dim: usize, min: T, max: T, n: usize) -> Result<Self> {
        let axis = Axis::new(min, max, n)?;
        Self::new(vec![axis; n_dim])
    }

    pub fn n_dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis<T>] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> T {
        self.axes.iter().fold(T::one(), |acc, a| acc * a.dx())
    }

    /// Multi-index of flat index `idx` (row-major).
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        match self.axes.len() {
            1 => [idx, 0],
            _ => [idx / self.axes[1].n, idx % self.axes[1].n],
        }
    }

    /// Coordinates of flat index `idx`; only the first `n_dim` entries are meaningful.
    pub fn coords(&self, idx: usize) -> [T; 2] {
        let mi = self.multi_index(idx);
        let mut out = [T::zero(); 2];
        for (a, axis) in self.axes.iter().enumerate() {
            out[a] = axis.point(mi[a]);
        }
        out
    }

    pub fn same_as(&self, other: &Self) -> bool {
        self.axes.len() == other.axes.len()
            && self.axes.iter().zip(&other.axes).all(|(a, b)| {
                a.n == b.n
                    && (a.min - b.min).abs() <= lit::<T>(1e-12) * a.length()
                    && (a.max - b.max).abs() <= lit::<T>(1e-12) * a.length()
            })
    }

    fn in_boundary_layer(&self, idx: usize) -> bool {
        let mi = self.multi_index(idx);
        self.axes
            .iter()
            .enumerate()
            .any(|(a, axis)| axis.in_boundary_layer(mi[a]))
    }
}

/// A sampled complex wavefunction at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridState<T: Real> {
    pub grid: Grid<T>,
    pub values: Vec<Complex<T>>,
    pub hbar: T,
    pub t: T,
}

impl<T: Real> GridState<T> {
    pub fn zeros(grid: Grid<T>, hbar: T, t: T) -> Self {
        let values = vec![Complex::default(); grid.len()];
        Self {
            grid,
            values,
            hbar,
            t,
        }
    }

    /// Samples `f` at every grid point; `f` receives `n_dim` coordinates.
    pub fn from_fn<F>(grid: Grid<T>, hbar: T, t: T, f: F) -> Self
    where
        F: Fn(&[T]) -> Complex<T>,
    {
        let d = grid.n_dim();
        let values = (0..grid.len())
            .map(|i| f(&grid.coords(i)[..d]))
            .collect();
        Self {
            grid,
            values,
            hbar,
            t,
        }
    }

    pub fn n_dim(&self) -> usize {
        self.grid.n_dim()
    }

    pub fn norm_sqr(&self) -> T {
        self.values.iter().fold(T::zero(), |acc, v| acc + v.norm_sqr()) * self.grid.cell_volume()
    }

    pub fn norm(&self) -> T {
        self.norm_sqr().sqrt()
    }

    pub fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch("states live on different grids".into()))
        }
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> Result<Complex<T>> {
        self.check_same_grid(other)?;
        let dv = self.grid.cell_volume();
        let s = self
            .values
            .iter()
            .zip(&other.values)
            .fold(Complex::<T>::default(), |acc, (a, b)| acc + a.conj() * *b);
        Ok(s * Complex::new(dv, T::zero()))
    }

    /// Fraction of the mass in the outer boundary layer of the domain.
    pub fn leakage_fraction(&self) -> T {
        let total = self.values.iter().fold(T::zero(), |acc, v| acc + v.norm_sqr());
        if total == T::zero() {
            return T::zero();
        }
        let edge = self
            .values
            .iter()
            .enumerate()
            .filter(|(i, _)| self.grid.in_boundary_layer(*i))
            .fold(T::zero(), |acc, (_, v)| acc + v.norm_sqr());
        edge / total
    }

    pub fn check_leakage(&self) -> Result<()> {
        let f = self.leakage_fraction();
        if f > lit(LEAKAGE_TOLERANCE) {
            Err(Error::Leakage { fraction: to_f64(f) })
        } else {
            Ok(())
        }
    }

    pub fn scaled(&self, s: Complex<T>) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }
}

/// Forward/inverse FFT over every axis of a grid, plus the wavenumber tables.
pub struct Spectral<T: GridReal> {
    shape: Vec<usize>,
    forward: Vec<Arc<dyn Fft<T>>>,
    inverse: Vec<Arc<dyn Fft<T>>>,
    wavenumbers: Vec<Vec<T>>,
}

impl<T: GridReal> Spectral<T> {
    pub fn new(grid: &Grid<T>) -> Self {
        let mut planner = FftPlanner::new();
        let shape: Vec<usize> = grid.axes().iter().map(|a| a.n).collect();
        Self {
            forward: shape.iter().map(|&n| planner.plan_fft_forward(n)).collect(),
            inverse: shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect(),
            wavenumbers: grid.axes().iter().map(|a| a.wavenumbers()).collect(),
            shape,
        }
    }

    pub fn wavenumbers(&self, axis: usize) -> &[T] {
        &self.wavenumbers[axis]
    }

    /// Wavenumbers of flat index `idx` (first `n_dim` entries meaningful).
    pub fn k_of(&self, idx: usize) -> [T; 2] {
        match self.shape.len() {
            1 => [self.wavenumbers[0][idx], T::zero()],
            _ => {
                let n1 = self.shape[1];
                [self.wavenumbers[0][idx / n1], self.wavenumbers[1][idx % n1]]
            }
        }
    }

    fn transform(&self, data: &mut [Complex<T>], plans: &[Arc<dyn Fft<T>>]) {
        match self.shape.len() {
            1 => plans[0].process(data),
            _ => {
                let (n0, n1) = (self.shape[0], self.shape[1]);
                plans[1].process(data);
                let mut column = vec![Complex::default(); n0];
                for j in 0..n1 {
                    for i in 0..n0 {
                        column[i] = data[i * n1 + j];
                    }
                    plans[0].process(&mut column);
                    for i in 0..n0 {
                        data[i * n1 + j] = column[i];
                    }
                }
            }
        }
    }

    pub fn forward(&self, data: &mut [Complex<T>]) {
        self.transform(data, &self.forward);
    }

    /// Inverse transform, normalized so that `inverse(forward(f)) = f`.
    pub fn inverse(&self, data: &mut [Complex<T>]) {
        self.transform(data, &self.inverse);
        let scale = T::one() / from_usize(data.len());
        data.iter_mut().for_each(|v| *v *= scale);
    }

    /// `-i hbar d/dx_axis` applied spectrally.
    pub fn momentum(&self, values: &[Complex<T>], hbar: T, axis: usize) -> Vec<Complex<T>> {
        let mut buf = values.to_vec();
        self.forward(&mut buf);
        for (i, v) in buf.iter_mut().enumerate() {
            *v *= hbar * self.k_of(i)[axis];
        }
        self.inverse(&mut buf);
        buf
    }
}

/// Sidecar metadata of a snapshot file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub n_dim: usize,
    pub n: Vec<usize>,
    pub x_min: Vec<f64>,
    pub x_max: Vec<f64>,
    pub t: f64,
    pub hbar: f64,
}

fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

/// Writes `<path>` (binary samples) and its `.json` sidecar.
pub fn write_snapshot<T: Real>(state: &GridState<T>, path: &Path) -> Result<()> {
    let meta = SnapshotMeta {
        n_dim: state.n_dim(),
        n: state.grid.axes().iter().map(|a| a.n).collect(),
        x_min: state.grid.axes().iter().map(|a| to_f64(a.min)).collect(),
        x_max: state.grid.axes().iter().map(|a| to_f64(a.max)).collect(),
        t: to_f64(state.t),
        hbar: to_f64(state.hbar),
    };
    let mut w = BufWriter::new(fs::File::create(path)?);
    for v in &state.values {
        w.write_all(&to_f64(v.re).to_le_bytes())?;
        w.write_all(&to_f64(v.im).to_le_bytes())?;
    }
    w.flush()?;
    let json = serde_json::to_string_pretty(&meta)?;
    fs::write(sidecar_path(path), json + "\n")?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<GridState<f64>> {
    let meta: SnapshotMeta = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    if meta.n.len() != meta.n_dim || meta.x_min.len() != meta.n_dim || meta.x_max.len() != meta.n_dim
    {
        return Err(Error::InvalidGrid("snapshot metadata is inconsistent".into()));
    }
    let axes = (0..meta.n_dim)
        .map(|a| Axis::new(meta.x_min[a], meta.x_max[a], meta.n[a]))
        .collect::<Result<Vec<_>>>()?;
    let grid = Grid::new(axes)?;
    let bytes = fs::read(path)?;
    if bytes.len() != grid.len() * 16 {
        return Err(Error::InvalidGrid(format!(
            "expected {} bytes, found {}",
            grid.len() * 16,
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex::new(re, im)
        })
        .collect();
    Ok(GridState {
        grid,
        values,
        hbar: meta.hbar,
        t: meta.t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(Axis::<f64>::new(-1.0, 1.0, 100).is_err());
        assert!(Axis::<f64>::new(-1.0, 1.0, 32).is_err());
        assert!(Axis::<f64>::new(1.0, -1.0, 64).is_err());
        assert!(Grid::<f64>::uniform(3, -1.0, 1.0, 64).is_err());
        let g = Grid::<f64>::uniform(2, -1.0, 1.0, 64).unwrap();
        assert_eq!(g.len(), 4096);
        assert_eq!(g.coords(65), [-1.0 + 2.0 / 64.0, -1.0 + 2.0 / 64.0]);
    }

    #[test]
    fn spectral_derivative_of_plane_wave_2d() {
        let g = Grid::<f64>::uniform(2, 0.0, 2.0 * std::f64::consts::PI, 64).unwrap();
        let psi = GridState::from_fn(g.clone(), 1.0, 0.0, |x| {
            Complex::new(0.0, 3.0 * x[0] - 2.0 * x[1]).exp()
        });
        let sp = Spectral::new(&g);
        let p0 = sp.momentum(&psi.values, 0.5, 0);
        let p1 = sp.momentum(&psi.values, 0.5, 1);
        for i in 0..g.len() {
            assert!((p0[i] - psi.values[i] * 1.5).norm() < 1e-11);
            assert!((p1[i] + psi.values[i] * 1.0).norm() < 1e-11);
        }
    }

    #[test]
    fn leakage_is_flagged() {
        let g = Grid::<f64>::uniform(1, -5.0, 5.0, 64).unwrap();
        let wide = GridState::from_fn(g.clone(), 1.0, 0.0, |x| Complex::new((-x[0] * x[0] / 20.0).exp(), 0.0));
        assert!(wide.check_leakage().is_err());
        let narrow = GridState::from_fn(g, 1.0, 0.0, |x| Complex::new((-x[0] * x[0] * 2.0).exp(), 0.0));
        assert!(narrow.check_leakage().is_ok());
    }
}
